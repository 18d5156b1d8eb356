"""Hull geometry, Bonjean tables and volume-based hydrostatic/Froude-Krylov forces.

Ship frame: x forward, y to port, z up.  Stations are given by their
distance from the forward perpendicular (FP), so the lever of a station
about the centre of gravity is ``xi = LCG - station_x`` (positive forward).
Roll is positive port-up (right-hand rotation about x); pitch is positive
bow-up.

Sectional forces are computed from the immersed area under the local
incident-wave waterline.  Each spectral system's elevation is reduced by a
Froude-Krylov factor built from ``exp(k * zc)``, where ``zc`` is the depth of
the section centroid below the calm local waterline and ``k`` the system's
energy-weighted mean wavenumber:

* vertical force:  ``f = 1 - k * A * exp(-k d) / B_wl``
  (the waterplane term minus the centroid-evaluated vertical pressure gradient)
* lateral/longitudinal pressure gradient: ``e = exp(-k d)``
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.optimize import brentq

from .errors import FormatError, ModelRangeError
from .seaway import WaveField, evaluate_by_system

RHO = 1025.0
G = 9.81
MAX_ANGLE = math.radians(45.0)


@dataclass(frozen=True)
class Particulars:
    lwl: float
    beam: float
    draft: float
    disp: float  # tonnes
    kg: float
    lcg: float  # from FP
    depth: float | None = None
    kxx_factor: float = 0.37
    kyy_factor: float = 0.25

    @property
    def mass(self) -> float:
        return self.disp * 1000.0

    @property
    def kxx(self) -> float:
        return self.kxx_factor * self.beam

    @property
    def kyy(self) -> float:
        return self.kyy_factor * self.lwl

    @property
    def ixx(self) -> float:
        return self.mass * self.kxx**2

    @property
    def iyy(self) -> float:
        return self.mass * self.kyy**2

    def to_json(self) -> dict:
        return {"lwl_m": self.lwl, "beam_m": self.beam, "draft_m": self.draft,
                "disp_t": self.disp, "kg_m": self.kg, "lcg_m": self.lcg}

    @classmethod
    def from_json(cls, d: dict, **extra) -> "Particulars":
        missing = [k for k in ("lwl_m", "beam_m", "draft_m", "disp_t", "kg_m", "lcg_m") if k not in d]
        if missing:
            raise FormatError(f"particulars missing keys: {', '.join(missing)}")
        return cls(d["lwl_m"], d["beam_m"], d["draft_m"], d["disp_t"], d["kg_m"], d["lcg_m"], **extra)


# Table I of the full-scale frigate used throughout.
FRIGATE_5415 = Particulars(lwl=142.0, beam=19.06, draft=6.51, disp=9156.38, kg=7.71, lcg=72.1)


@dataclass(frozen=True, eq=False)
class HullOffsets:
    station_x: np.ndarray
    z: tuple  # per-station arrays, z above baseline
    half_breadth: tuple  # per-station arrays
    particulars: Particulars
    hull_id: str = "custom"

    def __post_init__(self):
        x = np.asarray(self.station_x, dtype=float)
        if x.ndim != 1 or len(x) < 2 or np.any(np.diff(x) <= 0):
            raise ValueError("station x must be strictly increasing with at least two stations")
        if len(self.z) != len(x) or len(self.half_breadth) != len(x):
            raise ValueError("one offset table per station required")
        zs, ys = [], []
        for zi, yi in zip(self.z, self.half_breadth):
            zi, yi = np.asarray(zi, dtype=float), np.asarray(yi, dtype=float)
            if zi.shape != yi.shape or len(zi) < 2:
                raise ValueError("each station needs >= 2 (z, half-breadth) pairs")
            if np.any(np.diff(zi) <= 0):
                raise ValueError("per-station z must be strictly increasing")
            if np.any(yi < 0):
                raise ValueError("half-breadths must be >= 0")
            zs.append(zi)
            ys.append(yi)
        object.__setattr__(self, "station_x", x)
        object.__setattr__(self, "z", tuple(zs))
        object.__setattr__(self, "half_breadth", tuple(ys))

    @property
    def depth(self) -> float:
        return max(float(z[-1]) for z in self.z)

    def section_area(self, i: int, waterline: float) -> float:
        """Immersed area of station ``i`` straight from the offsets."""
        z, y = self.z[i], self.half_breadth[i]
        waterline = min(waterline, float(z[-1]))
        zz = np.union1d(z[z < waterline], [waterline]) if waterline > z[0] else np.array([z[0]])
        zz = zz[zz >= z[0]]
        yy = np.interp(zz, z, y)
        return float(2.0 * np.trapezoid(yy, zz)) if len(zz) > 1 else 0.0

    def displacement_volume(self, draft: float | None = None) -> float:
        d = self.particulars.draft if draft is None else draft
        areas = [self.section_area(i, d) for i in range(len(self.station_x))]
        return float(np.trapezoid(areas, self.station_x))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["station_x", "z", "half_breadth"])
            for x, z, y in zip(self.station_x, self.z, self.half_breadth):
                for zi, yi in zip(z, y):
                    w.writerow([repr(float(x)), repr(float(zi)), repr(float(yi))])

    @classmethod
    def read_csv(cls, path, particulars: Particulars, hull_id: str = "custom") -> "HullOffsets":
        rows: dict[float, list] = {}
        with open(path, newline="") as fh:
            reader = csv.DictReader(line for line in fh if not line.startswith("#"))
            need = {"station_x", "z", "half_breadth"}
            if reader.fieldnames is None or not need <= set(reader.fieldnames):
                have = set(reader.fieldnames or [])
                raise FormatError(f"offsets file missing columns: {', '.join(sorted(need - have))}")
            for lineno, r in enumerate(reader, start=2):
                try:
                    rows.setdefault(float(r["station_x"]), []).append((float(r["z"]), float(r["half_breadth"])))
                except (TypeError, ValueError) as exc:
                    raise FormatError(f"line {lineno}: {exc}") from None
        xs = sorted(rows)
        zs = [np.array([p[0] for p in sorted(rows[x])]) for x in xs]
        ys = [np.array([p[1] for p in sorted(rows[x])]) for x in xs]
        return cls(np.array(xs), tuple(zs), tuple(ys), particulars, hull_id)


def _box_offsets(p: Particulars, n_stations: int, depth: float) -> HullOffsets:
    x = np.linspace(0.0, p.lwl, n_stations)
    z = tuple(np.array([0.0, depth]) for _ in x)
    y = tuple(np.full(2, p.beam / 2.0) for _ in x)
    return HullOffsets(x, z, y, p, "box")


def _frigate_waterline(u: np.ndarray, beam: float) -> np.ndarray:
    um = 0.5
    fwd = np.clip((um - u) / um, 0.0, 1.0)
    aft = np.clip((u - um) / (1.0 - um), 0.0, 1.0)
    b = np.where(u < um, 1.0 - fwd**2.2, 1.0 - 0.3 * aft**2)
    return 0.5 * beam * np.clip(b, 0.0, 1.0)


def _frigate_keel(u: np.ndarray, draft: float) -> np.ndarray:
    aft = np.where(u > 0.75, 0.85 * draft * ((u - 0.75) / 0.25) ** 2, 0.0)
    fwd = np.where(u < 0.08, 0.35 * draft * ((0.08 - u) / 0.08) ** 2, 0.0)
    return aft + fwd


def _frigate_offsets(p: Particulars, n_stations: int, depth: float, q: float) -> HullOffsets:
    x = np.linspace(0.0, p.lwl, n_stations)
    u = x / p.lwl
    bwl = _frigate_waterline(u, p.beam)
    keel = _frigate_keel(u, p.draft)
    s = np.linspace(0.0, 1.0, 41) ** 2
    zs, ys = [], []
    for b, zk in zip(bwl, keel):
        zb = zk + (p.draft - zk) * s
        yb = b * s**q  # s = (z - zk) / (T - zk), clustered near the keel
        z = np.concatenate([zb, [depth]])
        y = np.concatenate([yb, [b]])
        if zk > 0:
            z = np.concatenate([[0.0], z])
            y = np.concatenate([[0.0], y])
        zs.append(z)
        ys.append(y)
    return HullOffsets(x, tuple(zs), tuple(ys), p, "frigate-parametric")


def generate_hull(kind: str, particulars: Particulars, n_stations: int = 21,
                  rho: float = RHO) -> HullOffsets:
    """Build station offsets for a box or a parametric frigate-like hull.

    The frigate's section fullness exponent is solved so the displacement at
    the design draft matches ``particulars.disp``.
    """
    p = particulars
    if min(p.lwl, p.beam, p.draft) <= 0 or p.disp <= 0:
        raise ValueError("hull dimensions and displacement must be positive")
    depth = p.depth if p.depth is not None else max(1.92 * p.draft, p.draft + 3.0)
    if depth <= p.draft:
        raise ValueError("depth must exceed draft")
    box_mass = rho * p.lwl * p.beam * p.draft / 1000.0
    if p.disp > box_mass * (1 + 1e-12):
        raise ValueError(f"displacement {p.disp} t exceeds rho*L*B*T = {box_mass:.2f} t")
    if kind == "box":
        return _box_offsets(p, n_stations, depth)
    if kind != "frigate-parametric":
        raise ValueError(f"unknown hull kind {kind!r}")
    target = p.disp * 1000.0 / rho

    def resid(logq):
        return _frigate_offsets(p, n_stations, depth, math.exp(logq)).displacement_volume() - target

    lo, hi = math.log(0.02), math.log(20.0)
    if resid(lo) < 0 or resid(hi) > 0:
        raise ValueError("requested displacement outside the parametric family's range")
    q = math.exp(brentq(resid, lo, hi, xtol=1e-12))
    return _frigate_offsets(p, n_stations, depth, q)


@dataclass(frozen=True, eq=False)
class BonjeanTable:
    """Sectional area, centroid height and half-breadth versus waterline height.

    All stations share the uniform grid ``z``; values between samples are
    interpolated linearly.
    """

    z: np.ndarray
    area: np.ndarray  # (stations, nz)
    zbar: np.ndarray
    half_breadth: np.ndarray
    station_x: np.ndarray
    keel: np.ndarray
    weights: np.ndarray  # trapezoidal weights over station_x
    particulars: Particulars
    hull_id: str = "custom"
    rho: float = RHO
    g: float = G

    @property
    def xi(self) -> np.ndarray:
        return self.particulars.lcg - self.station_x

    @property
    def n_stations(self) -> int:
        return len(self.station_x)

    def interp(self, station: int, waterline: float):
        """(area, centroid, half-breadth) at ``waterline`` for one station."""
        if not (0 <= station < self.n_stations) or int(station) != station:
            raise LookupError(f"unknown station {station!r}")
        A, zb, b = _interp_section(self.z[0], self.z[1] - self.z[0], self.area[station],
                                   self.zbar[station], self.half_breadth[station], waterline)
        if A <= 0.0:
            zb = float(self.keel[station])
        return float(A), float(zb), float(b)

    def volume(self, draft: float, trim: float = 0.0) -> float:
        a = [self.interp(i, draft - xi * math.tan(trim))[0] for i, xi in enumerate(self.xi)]
        return float(np.dot(self.weights, a))

    def waterplane_area(self, draft: float) -> float:
        b = [self.interp(i, draft)[2] for i in range(self.n_stations)]
        return float(2.0 * np.dot(self.weights, b))


def _trap_weights(x: np.ndarray) -> np.ndarray:
    w = np.zeros_like(x)
    dx = np.diff(x)
    w[:-1] += dx / 2
    w[1:] += dx / 2
    return w


def build_bonjean(h: HullOffsets, n_z: int = 101, rho: float = RHO, g: float = G) -> BonjeanTable:
    """Integrate the offsets (trapezoidal rule) into per-station Bonjean curves."""
    if n_z < 2:
        raise ValueError("n_z must be >= 2")
    zmin = min(float(z[0]) for z in h.z)
    zgrid = np.linspace(zmin, h.depth, n_z)
    ns = len(h.station_x)
    area = np.zeros((ns, n_z))
    zbar = np.zeros((ns, n_z))
    hb = np.zeros((ns, n_z))
    keel = np.zeros(ns)
    for i, (zo, yo) in enumerate(zip(h.z, h.half_breadth)):
        keel[i] = zo[0]
        # Merge grid into offset breakpoints so piecewise-linear breadth integrates exactly.
        zz = np.union1d(zo, zgrid[(zgrid > zo[0]) & (zgrid < zo[-1])])
        yy = np.interp(zz, zo, yo)
        dz = np.diff(zz)
        a_inc = dz * (yy[1:] + yy[:-1])  # 2 * trapezoid of half-breadth
        # first moment of a linear breadth segment, exact
        m_inc = 2.0 * dz * (yy[:-1] * (2 * zz[:-1] + zz[1:]) + yy[1:] * (zz[:-1] + 2 * zz[1:])) / 6.0
        a_cum = np.concatenate([[0.0], np.cumsum(a_inc)])
        m_cum = np.concatenate([[0.0], np.cumsum(m_inc)])
        zc = np.clip(zgrid, zo[0], zo[-1])
        idx = np.searchsorted(zz, zc)
        idx = np.clip(idx, 0, len(zz) - 1)
        assert np.allclose(zz[idx], zc, rtol=0, atol=1e-9)
        area[i] = a_cum[idx]
        with np.errstate(invalid="ignore", divide="ignore"):
            zbar[i] = np.where(area[i] > 0, m_cum[idx] / area[i], zo[0])
        hb[i] = np.where(zgrid < zo[0], 0.0, np.interp(zc, zo, yo))
    area = np.maximum.accumulate(area, axis=1)
    return BonjeanTable(zgrid, area, zbar, hb, h.station_x.copy(), keel,
                        _trap_weights(h.station_x), h.particulars, h.hull_id, rho, g)


def section_properties(t: BonjeanTable, station: int, waterline_z: float):
    """(immersed area, centroid height) of one station at a level waterline."""
    A, zb, _ = t.interp(station, waterline_z)
    return A, zb


@njit(cache=True)
def _interp_section(z0, dz, area, zbar, hb, h):
    n = area.shape[0]
    u = (h - z0) / dz
    if u <= 0.0:
        return area[0], zbar[0], hb[0]
    if u >= n - 1:
        return area[n - 1], zbar[n - 1], hb[n - 1]
    i = int(u)
    w = u - i
    return (area[i] * (1 - w) + area[i + 1] * w,
            zbar[i] * (1 - w) + zbar[i + 1] * w,
            hb[i] * (1 - w) + hb[i + 1] * w)


@njit(cache=True)
def section_forces_kernel(z, phi, theta, draft_ref, xi, weights, z0, dz, area, zbar, hb,
                          kg, rho_g, weight, zeta, sx, sy, kbar, roll_scale, vert_scale):
    """Net heave force, roll moment and bow-up pitch moment about the CG.

    ``zeta``, ``sx``, ``sy`` are ``(n_systems, n_stations)`` incident elevation
    and ship-frame slopes at the station positions.  ``z`` is the upward CG
    displacement from the reference draft ``draft_ref``; ``theta`` is the
    absolute trim angle.
    """
    ns = xi.shape[0]
    nsys = zeta.shape[0]
    tphi = math.tan(phi)
    tth = math.tan(theta)
    fz = 0.0
    mx = 0.0
    my = 0.0
    for s in range(ns):
        h0 = draft_ref - z - xi[s] * tth
        a0, zb0, b0 = _interp_section(z0, dz, area[s], zbar[s], hb[s], h0)
        d0 = h0 - zb0
        if d0 < 0.0:
            d0 = 0.0
        zeff = 0.0
        sy_i = 0.0
        sy_e = 0.0
        sx_e = 0.0
        for j in range(nsys):
            k = kbar[j]
            e = math.exp(-k * d0)
            if a0 > 0.0 and b0 > 0.0:
                f = 1.0 - k * a0 * e / (2.0 * b0)
                if f < 0.0:
                    f = 0.0
                elif f > 1.0:
                    f = 1.0
            elif a0 > 0.0:
                f = e
            else:
                f = 1.0
            zeff += f * zeta[j, s]
            sy_i += f * sy[j, s]
            sy_e += e * sy[j, s]
            sx_e += e * sx[j, s]
        h = h0 + vert_scale * zeff
        a, zb, b = _interp_section(z0, dz, area[s], zbar[s], hb[s], h)
        inertia = 2.0 / 3.0 * b * b * b
        lever = zb - kg
        w = weights[s] * rho_g
        fz += w * a
        mx += w * (inertia * (roll_scale * sy_i - tphi) + a * lever * (roll_scale * sy_e - tphi))
        my += w * a * (xi[s] + lever * (vert_scale * sx_e - tth))
    return fz - weight, mx, my


@dataclass(frozen=True)
class Pose:
    """Rigid-body pose.  ``z`` is the upward CG offset from the design draft."""

    z: float = 0.0
    roll: float = 0.0
    pitch: float = 0.0
    x: float = 0.0
    y: float = 0.0
    course: float = 0.0  # deg, counter-clockwise from the field X axis


def station_positions(t: BonjeanTable, pose: Pose):
    chi = math.radians(pose.course)
    xi = t.xi
    return pose.x + xi * math.cos(chi), pose.y + xi * math.sin(chi)


def ship_frame_waves(field: WaveField, X, Y, time, chi: float):
    """Per-system elevation and ship-frame slopes at field-frame points."""
    v = evaluate_by_system(field, X, Y, time)
    c, s = math.cos(chi), math.sin(chi)
    zeta = v[:, 0]
    sx = v[:, 1] * c + v[:, 2] * s
    sy = -v[:, 1] * s + v[:, 2] * c
    return zeta, sx, sy


def check_pose(roll: float, pitch_dev: float, time: float | None = None):
    if not (abs(roll) <= MAX_ANGLE and abs(pitch_dev) <= MAX_ANGLE):
        where = "" if time is None else f" at t={time:.6g} s"
        raise ModelRangeError(
            f"pose outside +/-45 deg validity range{where}: roll={math.degrees(roll):.3g} deg, "
            f"pitch={math.degrees(pitch_dev):.3g} deg")


def fk_hydrostatic_forces(t: BonjeanTable, field: WaveField | None, pose: Pose, time: float = 0.0,
                          roll_scale: float = 1.0, vert_scale: float = 1.0) -> np.ndarray:
    """Hydrostatic + Froude-Krylov generalized force (heave N, roll N m, pitch N m).

    Weight acts at the CG, so the result is the net restoring/exciting load.
    """
    check_pose(pose.roll, pose.pitch, time)
    p = t.particulars
    n_sys = field.n_systems if field is not None else 1
    if field is None or len(field) == 0:
        zeta = np.zeros((n_sys, t.n_stations))
        sx = sy = zeta
        kbar = np.zeros(n_sys)
    else:
        X, Y = station_positions(t, pose)
        zeta, sx, sy = ship_frame_waves(field, X, Y, np.full_like(X, time), math.radians(pose.course))
        kbar = field.mean_wavenumbers()
    out = section_forces_kernel(
        pose.z, pose.roll, pose.pitch, p.draft, t.xi, t.weights, t.z[0], t.z[1] - t.z[0],
        t.area, t.zbar, t.half_breadth, p.kg, t.rho * t.g, p.mass * t.g,
        np.ascontiguousarray(zeta), np.ascontiguousarray(sx), np.ascontiguousarray(sy),
        kbar, roll_scale, vert_scale)
    return np.array(out)


def metacentric_height(t: BonjeanTable, draft: float, trim: float = 0.0) -> dict:
    """KB, BM, KM and GM from the Bonjean table at a given draft and trim."""
    vol = 0.0
    mom = 0.0
    inertia = 0.0
    for i, xi in enumerate(t.xi):
        A, zb, b = t.interp(i, draft - xi * math.tan(trim))
        vol += t.weights[i] * A
        mom += t.weights[i] * A * zb
        inertia += t.weights[i] * 2.0 / 3.0 * b**3
    kb = mom / vol
    bm = inertia / vol
    return {"volume": vol, "kb": kb, "bm": bm, "km": kb + bm, "gm": kb + bm - t.particulars.kg}
