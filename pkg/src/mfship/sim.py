"""Time-domain heave/roll/pitch simulation.

Two fidelities share one core:

``simulate_lofi``
    Volume-based hydrostatic/Froude-Krylov forcing, constant added masses and
    linear damping, fixed ordered course.

``simulate_hifi_ref``
    A stand-in for a higher-fidelity 6-DOF solver.  Its extra physics are
    invented and deliberately simple: quadratic roll damping, a roll-moment
    leakage factor (wave roll moment lost to the missing sway/yaw modes), a
    vertical-excitation reduction (diffraction the volume method lacks) and a
    slow sinusoidal heading wander about the ordered course (an autopilot that
    holds heading only on average).  With all four switched off it reproduces
    ``simulate_lofi`` exactly.

Genuine high-fidelity output can be brought in with :func:`import_motion_record`.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path
from typing import Callable

import numpy as np
from numba import njit

from .errors import EquilibriumError, FormatError, IntegrationError, ModelRangeError
from .hull import MAX_ANGLE, BonjeanTable, Pose, check_pose, fk_hydrostatic_forces, section_forces_kernel
from .seaway import WaveField, sample_count

KNOT = 1852.0 / 3600.0

LOFI = "lofi"
REFERENCE = "ref"
CORRECTED = "lstm-corrected"

RECORD_COLUMNS = ["t", "heave_m", "roll_deg", "pitch_deg", "zeta_m", "dzdx", "dzdy"]


@dataclass(frozen=True)
class SimConfig:
    dt_integrate: float = 0.05
    dt_record: float = 0.1
    duration: float = 1920.0
    ramp: float = 120.0
    speed_kts: float = 10.0
    heading: float = 0.0  # ordered course in the field frame, deg
    # tuned radiation coefficients, as fractions of mass / inertia
    a33: float = 0.8
    a44: float = 0.25
    a55: float = 0.9
    # linear damping as fractions of critical
    zeta33: float = 0.05
    zeta44: float = 0.08
    zeta55: float = 0.05
    # reference-model stand-in physics; bq44=None sizes it from the decay rule
    bq44: float | None = None
    bq44_decay_deg: float = 10.0
    bq44_decay_cycles: float = 5.0
    roll_leak: float = 0.85
    vert_excitation: float = 0.85
    wander_amp_deg: float = 3.0
    wander_period: float = 60.0

    def __post_init__(self):
        ratio = self.dt_record / self.dt_integrate
        if self.dt_integrate <= 0 or abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("dt_record must be a positive integer multiple of dt_integrate")
        if not self.duration > self.ramp >= 0:
            raise ValueError("duration must exceed ramp")
        if not 0 < self.roll_leak <= 1:
            raise ValueError("roll_leak must be in (0, 1]")

    @property
    def speed(self) -> float:
        return self.speed_kts * KNOT

    @property
    def record_every(self) -> int:
        return int(round(self.dt_record / self.dt_integrate))

    @property
    def n_record(self) -> int:
        return int(round(self.duration / self.dt_record))

    @property
    def ramp_samples(self) -> int:
        return int(math.ceil(self.ramp / self.dt_record - 1e-9))

    def identity_reference(self) -> "SimConfig":
        """Reference-model settings that reduce it to the low-fidelity model."""
        return replace(self, bq44=0.0, roll_leak=1.0, vert_excitation=1.0, wander_amp_deg=0.0)


@dataclass(frozen=True)
class Equilibrium:
    z: float  # upward CG offset from the design draft
    pitch: float  # trim angle, rad, bow-up
    iterations: int
    residual: tuple

    @property
    def sinkage(self) -> float:
        return -self.z


def _calm_forces(t: BonjeanTable, z: float, pitch: float, roll: float = 0.0) -> np.ndarray:
    return fk_hydrostatic_forces(t, None, Pose(z=z, roll=roll, pitch=pitch))


def solve_static_equilibrium(t: BonjeanTable, tol: float = 1e-8, max_iter: int = 100) -> Equilibrium:
    """Damped Newton iteration on (heave, trim) for calm-water balance."""
    p = t.particulars
    weight = p.mass * t.g
    capacity = t.rho * t.g * float(np.dot(t.weights, t.area[:, -1]))
    if weight > capacity:
        raise EquilibriumError(f"displacement {p.disp} t exceeds maximum buoyancy {capacity / t.g / 1000:.1f} t")
    scale = np.array([weight, weight * p.lwl])
    x = np.zeros(2)

    def resid(v):
        f = _calm_forces(t, v[0], v[1])
        return np.array([f[0], f[2]])

    r = resid(x)
    for it in range(1, max_iter + 1):
        if np.all(np.abs(r) < tol * scale):
            return Equilibrium(float(x[0]), float(x[1]), it - 1, tuple(r / scale))
        h = np.array([1e-5, 1e-7])
        J = np.empty((2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = h[j]
            J[:, j] = (resid(x + e) - resid(x - e)) / (2 * h[j])
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            raise EquilibriumError("singular Jacobian in equilibrium iteration") from None
        lam = 1.0
        while lam > 1e-6:
            xn = x + lam * step
            if abs(xn[1]) < MAX_ANGLE:
                rn = resid(xn)
                if np.linalg.norm(rn / scale) < np.linalg.norm(r / scale) or lam < 1e-3:
                    break
            lam *= 0.5
        x, r = xn, rn
    if np.all(np.abs(r) < tol * scale):
        return Equilibrium(float(x[0]), float(x[1]), max_iter, tuple(r / scale))
    raise EquilibriumError(f"no convergence in {max_iter} iterations, residual {r}")


@dataclass(frozen=True)
class ShipModel:
    """Resolved dynamic coefficients for one hull and configuration."""

    table: BonjeanTable
    equilibrium: Equilibrium
    mass: np.ndarray  # (m + a33, Ixx + a44, Iyy + a55)
    stiffness: np.ndarray  # (C33, C44, C55) at equilibrium
    damping: np.ndarray  # (b33, b44, b55)
    bq44: float


def restoring_coefficients(t: BonjeanTable, eq: Equilibrium) -> np.ndarray:
    d = np.array([1e-3, 1e-4, 1e-5])
    c33 = -(_calm_forces(t, eq.z + d[0], eq.pitch)[0] - _calm_forces(t, eq.z - d[0], eq.pitch)[0]) / (2 * d[0])
    c44 = -(_calm_forces(t, eq.z, eq.pitch, d[1])[1] - _calm_forces(t, eq.z, eq.pitch, -d[1])[1]) / (2 * d[1])
    c55 = -(_calm_forces(t, eq.z, eq.pitch + d[2])[2] - _calm_forces(t, eq.z, eq.pitch - d[2])[2]) / (2 * d[2])
    return np.array([c33, c44, c55])


def quadratic_roll_damping(inertia: float, decay_deg: float, cycles: float) -> float:
    """bq44 that alone halves a roll decay from ``decay_deg`` in ``cycles`` cycles.

    Per cycle the amplitude drops by (8/3) q phi^2 with q = bq44 / inertia,
    so 1/phi grows linearly and halving takes (8/3) q n = 1 / phi0.
    """
    phi0 = math.radians(decay_deg)
    return inertia * 3.0 / (8.0 * cycles * phi0)


def build_model(t: BonjeanTable, cfg: SimConfig, eq: Equilibrium | None = None) -> ShipModel:
    p = t.particulars
    eq = eq or solve_static_equilibrium(t)
    mass = np.array([p.mass * (1 + cfg.a33), p.ixx * (1 + cfg.a44), p.iyy * (1 + cfg.a55)])
    c = restoring_coefficients(t, eq)
    zeta = np.array([cfg.zeta33, cfg.zeta44, cfg.zeta55])
    damping = 2.0 * zeta * np.sqrt(mass * np.maximum(c, 0.0))
    if cfg.bq44 is None:
        bq = quadratic_roll_damping(mass[1], cfg.bq44_decay_deg, cfg.bq44_decay_cycles)
    else:
        bq = float(cfg.bq44)
    return ShipModel(t, eq, mass, c, damping, bq)


# ---------------------------------------------------------------------------
# Integration


def rk4(f: Callable, t: float, y: np.ndarray, dt: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step of y' = f(t, y)."""
    k1 = f(t, y)
    k2 = f(t + dt / 2, y + dt / 2 * k1)
    k3 = f(t + dt / 2, y + dt / 2 * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def step_rk4(state: np.ndarray, forcing: Callable, dt: float, t: float = 0.0,
             mass=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Advance ``[z, roll, pitch, dz, droll, dpitch]`` by one RK4 step.

    ``forcing(t, state)`` returns the three generalized forces; accelerations
    are those forces divided by the (added-mass inclusive) ``mass``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    m = np.asarray(mass, dtype=float)

    def deriv(tt, y):
        F = np.asarray(forcing(tt, y), dtype=float)
        if not np.all(np.isfinite(F)):
            raise IntegrationError("non-finite forcing", tt)
        return np.concatenate([y[3:], F / m])

    return rk4(deriv, t, np.asarray(state, dtype=float), dt)


@njit(cache=True)
def _accel(y, idx, z_eq, th_eq, draft_ref, xi, weights, z0, dz, area, zbar, hb, kg, rho_g, weight,
           zeta, sx, sy, kbar, roll_scale, vert_scale, mass, damping, bq44, out):
    fz, mx, my = section_forces_kernel(z_eq + y[0], y[1], th_eq + y[2], draft_ref, xi, weights, z0, dz,
                                       area, zbar, hb, kg, rho_g, weight, zeta[idx], sx[idx], sy[idx],
                                       kbar, roll_scale, vert_scale)
    out[0] = y[3]
    out[1] = y[4]
    out[2] = y[5]
    out[3] = (fz - damping[0] * y[3]) / mass[0]
    out[4] = (mx - damping[1] * y[4] - bq44 * abs(y[4]) * y[4]) / mass[1]
    out[5] = (my - damping[2] * y[5]) / mass[2]


@njit(cache=True)
def _integrate(y0, n_steps, record_every, dt, z_eq, th_eq, draft_ref, xi, weights, z0, dz, area, zbar,
               hb, kg, rho_g, weight, zeta, sx, sy, kbar, roll_scale, vert_scale, mass, damping, bq44,
               max_angle):
    n_rec = n_steps // record_every + 1
    rec = np.zeros((n_rec, 6))
    y = y0.copy()
    rec[0] = y
    k1 = np.zeros(6)
    k2 = np.zeros(6)
    k3 = np.zeros(6)
    k4 = np.zeros(6)
    tmp = np.zeros(6)
    for n in range(n_steps):
        i0 = 2 * n
        _accel(y, i0, z_eq, th_eq, draft_ref, xi, weights, z0, dz, area, zbar, hb, kg, rho_g, weight,
               zeta, sx, sy, kbar, roll_scale, vert_scale, mass, damping, bq44, k1)
        for j in range(6):
            tmp[j] = y[j] + dt / 2 * k1[j]
        _accel(tmp, i0 + 1, z_eq, th_eq, draft_ref, xi, weights, z0, dz, area, zbar, hb, kg, rho_g, weight,
               zeta, sx, sy, kbar, roll_scale, vert_scale, mass, damping, bq44, k2)
        for j in range(6):
            tmp[j] = y[j] + dt / 2 * k2[j]
        _accel(tmp, i0 + 1, z_eq, th_eq, draft_ref, xi, weights, z0, dz, area, zbar, hb, kg, rho_g, weight,
               zeta, sx, sy, kbar, roll_scale, vert_scale, mass, damping, bq44, k3)
        for j in range(6):
            tmp[j] = y[j] + dt * k3[j]
        _accel(tmp, i0 + 2, z_eq, th_eq, draft_ref, xi, weights, z0, dz, area, zbar, hb, kg, rho_g, weight,
               zeta, sx, sy, kbar, roll_scale, vert_scale, mass, damping, bq44, k4)
        for j in range(6):
            y[j] = y[j] + dt / 6 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j])
        ok = True
        for j in range(6):
            if not np.isfinite(y[j]):
                ok = False
        if not ok:
            return rec[: (n // record_every) + 1], 2, n + 1
        if abs(y[1]) > max_angle or abs(y[2]) > max_angle:
            return rec[: (n // record_every) + 1], 1, n + 1
        if (n + 1) % record_every == 0:
            rec[(n + 1) // record_every] = y
    return rec, 0, n_steps


@njit(cache=True)
def _wave_tables(amp, omega, kx, ky, phase, system, nsys, ramp_dur, times, X, Y, chi, xi, uniform):
    """Per-system elevation and ship-frame slopes at every station and time.

    Station phases use a geometric recurrence when stations are evenly spaced.
    """
    T = times.shape[0]
    S = xi.shape[0]
    N = amp.shape[0]
    zeta = np.zeros((T, nsys, S))
    sx = np.zeros((T, nsys, S))
    sy = np.zeros((T, nsys, S))
    cg = np.zeros((T, 3))
    dxi = xi[1] - xi[0] if S > 1 else 0.0
    for m in range(T):
        t = times[m]
        r = 1.0
        if ramp_dur > 0.0:
            r = t / ramp_dur
            if r > 1.0:
                r = 1.0
            elif r < 0.0:
                r = 0.0
        c = math.cos(chi[m])
        s = math.sin(chi[m])
        for i in range(N):
            a = amp[i] * r
            if a == 0.0:
                continue
            j = system[i]
            alpha = kx[i] * X[m] + ky[i] * Y[m] - omega[i] * t + phase[i]
            ca = math.cos(alpha)
            sa = math.sin(alpha)
            cg[m, 0] += a * ca
            cg[m, 1] -= a * kx[i] * sa
            cg[m, 2] -= a * ky[i] * sa
            q = kx[i] * c + ky[i] * s
            qy = -kx[i] * s + ky[i] * c
            if uniform:
                b0 = alpha + q * xi[0]
                cr = math.cos(b0)
                sr = math.sin(b0)
                cd = math.cos(q * dxi)
                sd = math.sin(q * dxi)
                for st in range(S):
                    zeta[m, j, st] += a * cr
                    sx[m, j, st] -= a * q * sr
                    sy[m, j, st] -= a * qy * sr
                    cr, sr = cr * cd - sr * sd, sr * cd + cr * sd
            else:
                for st in range(S):
                    b = alpha + q * xi[st]
                    cb = math.cos(b)
                    sb = math.sin(b)
                    zeta[m, j, st] += a * cb
                    sx[m, j, st] -= a * q * sb
                    sy[m, j, st] -= a * qy * sb
    return zeta, sx, sy, cg


def ship_track(cfg: SimConfig, times: np.ndarray, wander_deg: float = 0.0):
    """CG position and heading along the ordered course, with optional wander."""
    chi0 = math.radians(cfg.heading)
    if wander_deg == 0.0:
        chi = np.full_like(times, chi0)
        X = cfg.speed * times * math.cos(chi0)
        Y = cfg.speed * times * math.sin(chi0)
        return X, Y, chi
    chi = chi0 + math.radians(wander_deg) * np.sin(2 * np.pi * times / cfg.wander_period)
    u = cfg.speed * np.cos(chi)
    v = cfg.speed * np.sin(chi)
    dt = np.diff(times)
    X = np.concatenate([[0.0], np.cumsum(dt * (u[1:] + u[:-1]) / 2)])
    Y = np.concatenate([[0.0], np.cumsum(dt * (v[1:] + v[:-1]) / 2)])
    return X, Y, chi


@dataclass
class MotionRecord:
    t: np.ndarray
    heave: np.ndarray  # m
    roll: np.ndarray  # deg
    pitch: np.ndarray  # deg
    zeta: np.ndarray
    dzdx: np.ndarray
    dzdy: np.ndarray
    meta: dict = field(default_factory=dict)

    CHANNELS = ("heave", "roll", "pitch", "zeta", "dzdx", "dzdy")

    def __post_init__(self):
        n = len(self.t)
        for name in ("t",) + self.CHANNELS:
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"channel {name} has length {arr.shape}, expected {n}")
            setattr(self, name, arr)

    def __len__(self):
        return len(self.t)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    @property
    def ramp_samples(self) -> int:
        return int(self.meta.get("ramp_samples", 0))

    @property
    def fidelity(self) -> str:
        return self.meta.get("fidelity", "")

    @property
    def error(self):
        return self.meta.get("error")

    def matrix(self, channels=CHANNELS) -> np.ndarray:
        return np.column_stack([getattr(self, c) for c in channels])

    def window(self, start: int, stop: int | None = None) -> "MotionRecord":
        sl = slice(start, stop)
        meta = dict(self.meta)
        meta["ramp_samples"] = max(0, self.ramp_samples - start)
        return MotionRecord(*(getattr(self, c)[sl] for c in ("t",) + self.CHANNELS), meta=meta)

    def post_ramp(self) -> "MotionRecord":
        return self.window(self.ramp_samples)

    def write_csv(self, path, sidecar: bool = True, comments=()):
        path = Path(path)
        with open(path, "w", newline="") as fh:
            for c in comments:
                fh.write(f"# {c}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RECORD_COLUMNS)
            cols = [self.t] + [getattr(self, c) for c in self.CHANNELS]
            for row in zip(*cols):
                w.writerow([f"{v:.9g}" for v in row])
        if sidecar:
            path.with_suffix(".json").write_text(json.dumps(self.meta, indent=2, sort_keys=True) + "\n")

    def rounded(self) -> "MotionRecord":
        """Copy with every channel rounded to 9 significant digits."""
        r = np.vectorize(lambda v: float(f"{v:.9g}"), otypes=[float])
        return MotionRecord(*(r(getattr(self, c)) if len(self) else getattr(self, c)
                              for c in ("t",) + self.CHANNELS), meta=dict(self.meta))


def import_motion_record(path, dt_tol: float = 1e-6) -> MotionRecord:
    """Read a motion record CSV (and its JSON sidecar when present)."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        missing = [c for c in RECORD_COLUMNS if c not in header]
        if missing:
            raise FormatError(f"{path}: missing column(s) {', '.join(missing)}")
        extra = [c for c in header if c not in RECORD_COLUMNS]
        if extra:
            raise FormatError(f"{path}: unknown column(s) {', '.join(extra)}")
        idx = [header.index(c) for c in RECORD_COLUMNS]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(row[i]) for i in idx])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    data = np.array(rows, dtype=float).reshape(-1, len(RECORD_COLUMNS))
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{path}: non-finite values")
    t = data[:, 0]
    if len(t) > 2:
        d = np.diff(t)
        dt = (t[-1] - t[0]) / (len(t) - 1)
        if dt <= 0 or np.max(np.abs(d - dt)) > dt_tol:
            raise FormatError(f"{path}: non-uniform time grid (max jitter {np.max(np.abs(d - dt)):.3g} s)")
    meta = {}
    side = path.with_suffix(".json")
    if side.exists():
        try:
            meta = json.loads(side.read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{side}: {exc}") from None
    return MotionRecord(*data.T, meta=meta)


def _run(model: ShipModel, wave: WaveField, cfg: SimConfig, *, roll_scale=1.0, vert_scale=1.0,
         wander_deg=0.0, bq44=0.0, y0=None, fidelity=LOFI, meta=None) -> MotionRecord:
    t = model.table
    p = t.particulars
    eq = model.equilibrium
    n_rec = cfg.n_record
    every = cfg.record_every
    n_steps = (n_rec - 1) * every
    dt = cfg.dt_integrate
    half_times = np.arange(2 * n_steps + 1) * (dt / 2)
    X, Y, chi = ship_track(cfg, half_times, wander_deg)
    xi = np.ascontiguousarray(t.xi)
    dxi = np.diff(xi)
    uniform = bool(len(xi) > 1 and np.allclose(dxi, dxi[0], rtol=1e-12, atol=1e-12))
    zeta, sx, sy, cg = _wave_tables(wave.amplitude, wave.omega, wave.k * np.cos(wave.heading),
                                    wave.k * np.sin(wave.heading), wave.phase, wave.system,
                                    max(wave.n_systems, 1), wave.ramp_duration, half_times, X, Y, chi,
                                    xi, uniform)
    kbar = wave.mean_wavenumbers() if len(wave) else np.zeros(max(wave.n_systems, 1))
    y0 = np.zeros(6) if y0 is None else np.asarray(y0, dtype=float)
    rec, status, n_done = _integrate(
        y0, n_steps, every, dt, eq.z, eq.pitch, p.draft, xi, t.weights, t.z[0], t.z[1] - t.z[0],
        t.area, t.zbar, t.half_breadth, p.kg, t.rho * t.g, p.mass * t.g, zeta, sx, sy, kbar,
        roll_scale, vert_scale, model.mass, model.damping, bq44, MAX_ANGLE)
    n = len(rec)
    rec_idx = np.arange(n) * 2 * every
    meta = dict(meta or {})
    meta.update({
        "fidelity": fidelity,
        "ramp_samples": cfg.ramp_samples,
        "dt_record": cfg.dt_record,
        "speed_kts": cfg.speed_kts,
        "heading": cfg.heading,
        "seed": list(wave.seed),
        "hull_id": t.hull_id,
        "error": None,
    })
    if status == 1:
        meta["error"] = f"model-range: state left +/-45 deg at t={n_done * dt:.6g} s"
    elif status == 2:
        meta["error"] = f"integration: non-finite state at t={n_done * dt:.6g} s"
    return MotionRecord(
        t=np.arange(n) * cfg.dt_record,
        heave=rec[:, 0],
        roll=np.degrees(rec[:, 1]),
        pitch=np.degrees(rec[:, 2]),
        zeta=cg[rec_idx, 0],
        dzdx=cg[rec_idx, 1],
        dzdy=cg[rec_idx, 2],
        meta=meta,
    )


def _model(hull, cfg: SimConfig) -> ShipModel:
    return hull if isinstance(hull, ShipModel) else build_model(hull, cfg)


def simulate_lofi(hull, field: WaveField, cfg: SimConfig, y0=None, meta=None) -> MotionRecord:
    """Low-fidelity 3-DOF run; ``hull`` is a BonjeanTable or a prebuilt ShipModel."""
    return _run(_model(hull, cfg), field, cfg, y0=y0, fidelity=LOFI, meta=meta)


def simulate_hifi_ref(hull, field: WaveField, cfg: SimConfig, y0=None, meta=None) -> MotionRecord:
    """Reference-model run (stand-in physics documented in the module docstring)."""
    model = _model(hull, cfg)
    return _run(model, field, cfg, roll_scale=cfg.roll_leak, vert_scale=cfg.vert_excitation,
                wander_deg=cfg.wander_amp_deg, bq44=model.bq44, y0=y0, fidelity=REFERENCE, meta=meta)


def simulate(hull, field: WaveField, cfg: SimConfig, fidelity: str, **kw) -> MotionRecord:
    if fidelity == LOFI:
        return simulate_lofi(hull, field, cfg, **kw)
    if fidelity == REFERENCE:
        return simulate_hifi_ref(hull, field, cfg, **kw)
    raise ValueError(f"unknown fidelity {fidelity!r}")


def python_forcing(model: ShipModel, field: WaveField | None, cfg: SimConfig, roll_scale=1.0,
                   vert_scale=1.0, bq44=0.0):
    """Forcing closure for :func:`step_rk4` built on :func:`fk_hydrostatic_forces`.

    Slow; intended for checking the compiled integration loop.
    """
    t = model.table
    eq = model.equilibrium

    def forcing(time, y):
        pose = Pose(z=eq.z + y[0], roll=y[1], pitch=eq.pitch + y[2], x=cfg.speed * time, course=cfg.heading)
        f = fk_hydrostatic_forces(t, field, pose, time, roll_scale=roll_scale, vert_scale=vert_scale)
        f = f - model.damping * y[3:]
        f[1] -= bq44 * abs(y[4]) * y[4]
        return f

    return forcing
