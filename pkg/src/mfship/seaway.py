"""Bimodal, bidirectional irregular seaways.

Each spectral system (wind sea or swell) is a long-crested two-parameter
Bretschneider spectrum.  A sea state superposes two such systems travelling
in different directions.

Frame conventions
-----------------
The field frame has X along the reference course and Y to port.  A relative
wave direction ``dir`` is the direction the waves come *from*, measured from
the bow counter-clockwise: 0 deg is head seas, 90 deg waves from port,
180 deg following seas.  The propagation heading of every component is
therefore ``dir + 180 deg``.
"""

from __future__ import annotations

import csv
import math
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

G = 9.81

EQUAL_ENERGY = "equal-energy"
EQUAL_FREQUENCY = "equal-frequency"

# Cumulative energy fraction at which the frequency band is cut off.
BAND_ENERGY = 0.999


@dataclass(frozen=True)
class SpectrumParams:
    hs: float
    tp: float
    dir: float = 0.0

    def __post_init__(self):
        if not (self.hs >= 0.0) or not math.isfinite(self.hs):
            raise ValueError(f"hs must be >= 0, got {self.hs}")
        if not (self.tp > 0.0) or not math.isfinite(self.tp):
            raise ValueError(f"tp must be > 0, got {self.tp}")
        object.__setattr__(self, "dir", float(self.dir) % 360.0)

    @property
    def m0(self) -> float:
        return self.hs**2 / 16.0


@dataclass(frozen=True)
class BimodalSeaState:
    primary: SpectrumParams
    secondary: SpectrumParams

    @property
    def m0(self) -> float:
        return self.primary.m0 + self.secondary.m0

    def as_dict(self) -> dict:
        return {
            "hs1": self.primary.hs, "tp1": self.primary.tp, "dir1": self.primary.dir,
            "hs2": self.secondary.hs, "tp2": self.secondary.tp, "dir2": self.secondary.dir,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BimodalSeaState":
        return cls(
            SpectrumParams(d["hs1"], d["tp1"], d["dir1"]),
            SpectrumParams(d["hs2"], d["tp2"], d["dir2"]),
        )

    def rotated(self, delta_deg: float) -> "BimodalSeaState":
        """Same sea seen from a frame rotated by ``delta_deg``."""
        p, s = self.primary, self.secondary
        return BimodalSeaState(
            SpectrumParams(p.hs, p.tp, p.dir + delta_deg),
            SpectrumParams(s.hs, s.tp, s.dir + delta_deg),
        )


@dataclass(frozen=True)
class WaveComponent:
    amplitude: float
    omega: float
    k: float
    heading: float
    phase: float


def _readonly(a) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class WaveField:
    """Immutable list of regular components plus a linear start-up ramp.

    Components are stored column-wise; ``system`` tags each component with
    the index of the spectral system it came from (0 primary, 1 secondary).
    """

    amplitude: np.ndarray
    omega: np.ndarray
    k: np.ndarray
    heading: np.ndarray
    phase: np.ndarray
    system: np.ndarray
    ramp_duration: float = 0.0
    seed: tuple = ()
    n_systems: int = 2

    def __post_init__(self):
        n = len(self.amplitude)
        for name in ("amplitude", "omega", "k", "heading", "phase"):
            arr = _readonly(getattr(self, name))
            if arr.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},)")
            object.__setattr__(self, name, arr)
        sysarr = np.ascontiguousarray(self.system, dtype=np.int64)
        sysarr.setflags(write=False)
        object.__setattr__(self, "system", sysarr)
        if self.ramp_duration < 0:
            raise ValueError("ramp_duration must be >= 0")
        if np.any(self.amplitude < 0) or np.any(self.omega <= 0):
            raise ValueError("amplitudes must be >= 0 and frequencies > 0")

    @classmethod
    def from_components(cls, comps: Sequence[WaveComponent], ramp_duration=0.0,
                        system=None, seed=(), n_systems=None) -> "WaveField":
        comps = list(comps)
        sysarr = np.zeros(len(comps), dtype=np.int64) if system is None else np.asarray(system)
        return cls(
            amplitude=np.array([c.amplitude for c in comps], dtype=float),
            omega=np.array([c.omega for c in comps], dtype=float),
            k=np.array([c.k for c in comps], dtype=float),
            heading=np.array([c.heading for c in comps], dtype=float),
            phase=np.array([c.phase for c in comps], dtype=float),
            system=sysarr,
            ramp_duration=float(ramp_duration),
            seed=tuple(seed),
            n_systems=int(n_systems if n_systems is not None else (sysarr.max() + 1 if len(comps) else 1)),
        )

    @property
    def components(self) -> list[WaveComponent]:
        return [
            WaveComponent(float(a), float(w), float(k), float(h), float(p))
            for a, w, k, h, p in zip(self.amplitude, self.omega, self.k, self.heading, self.phase)
        ]

    def __len__(self):
        return len(self.amplitude)

    @property
    def variance(self) -> float:
        return float(np.sum(self.amplitude**2) / 2.0)

    def mean_wavenumbers(self) -> np.ndarray:
        """Energy-weighted mean wavenumber of each spectral system (0 if empty)."""
        out = np.zeros(self.n_systems)
        for j in range(self.n_systems):
            m = self.system == j
            e = self.amplitude[m] ** 2
            if e.sum() > 0:
                out[j] = float(np.sum(e * self.k[m]) / e.sum())
        return out

    def ramp(self, t):
        t = np.asarray(t, dtype=float)
        if self.ramp_duration <= 0:
            return np.ones_like(t)
        return np.clip(t / self.ramp_duration, 0.0, 1.0)

    def scaled(self, factor: float) -> "WaveField":
        return WaveField(self.amplitude * factor, self.omega, self.k, self.heading,
                         self.phase, self.system, self.ramp_duration, self.seed, self.n_systems)

    def equals(self, other: "WaveField") -> bool:
        """Bitwise equality of every component array and the metadata."""
        return (
            all(np.array_equal(getattr(self, n), getattr(other, n))
                for n in ("amplitude", "omega", "k", "heading", "phase", "system"))
            and self.ramp_duration == other.ramp_duration
            and self.seed == other.seed
        )


def _check_params(p: SpectrumParams):
    if not p.tp > 0:
        raise ValueError("tp must be positive")


def spectrum_density(p: SpectrumParams, omega):
    """Two-parameter Bretschneider spectral density S(omega) in m^2 s."""
    _check_params(p)
    w = np.asarray(omega, dtype=float)
    if np.any(~(w > 0)):
        raise ValueError("omega must be positive")
    wm = 2.0 * np.pi / p.tp
    r4 = (wm / w) ** 4
    s = (5.0 / 16.0) * p.hs**2 * r4 / w * np.exp(-1.25 * r4)
    return float(s) if np.ndim(s) == 0 else s


def _omega_at_energy_fraction(p: SpectrumParams, q):
    # Cumulative energy of the Bretschneider form: m0 * exp(-5/4 (wm/w)^4).
    wm = 2.0 * np.pi / p.tp
    return wm * (-0.8 * np.log(q)) ** -0.25


def discretize_spectrum(p: SpectrumParams, n: int, scheme: str = EQUAL_ENERGY,
                        rng: np.random.Generator | None = None) -> list[WaveComponent]:
    """Split one spectral system into ``n`` regular long-crested components.

    ``equal-energy`` places components at the mid-quantiles of the cumulative
    energy over the band below the 99.9 % cut-off and gives each the same
    amplitude, so the component variances sum to ``hs**2/16`` exactly.
    ``equal-frequency`` uses a uniform frequency grid over the band and
    amplitudes ``sqrt(2 S dw)``.
    """
    if p.hs == 0.0:
        return []
    if n < 1:
        raise ValueError("n must be >= 1 when hs > 0")
    if rng is None:
        rng = np.random.default_rng()
    if scheme == EQUAL_ENERGY:
        q = BAND_ENERGY * (np.arange(n) + 0.5) / n
        omega = _omega_at_energy_fraction(p, q)
        amp = np.full(n, math.sqrt(2.0 * p.m0 / n))
    elif scheme == EQUAL_FREQUENCY:
        lo = _omega_at_energy_fraction(p, 1.0 - BAND_ENERGY)
        hi = _omega_at_energy_fraction(p, BAND_ENERGY)
        dw = (hi - lo) / n
        omega = lo + dw * (np.arange(n) + 0.5)
        amp = np.sqrt(2.0 * spectrum_density(p, omega) * dw)
    else:
        raise ValueError(f"unknown discretization scheme {scheme!r}")
    phase = rng.uniform(0.0, 2.0 * np.pi, size=n)
    heading = math.radians(p.dir + 180.0) % (2.0 * math.pi)
    return [
        WaveComponent(float(a), float(w), float(w * w / G), heading, float(ph))
        for a, w, ph in zip(np.atleast_1d(amp), np.atleast_1d(omega), phase)
    ]


def _key_int(v) -> int:
    if isinstance(v, (int, np.integer)):
        return int(v) & 0xFFFFFFFFFFFFFFFF
    return zlib.crc32(str(v).encode())


def realization_rng(master_seed: int, condition_id=0, realization_id=0) -> np.random.Generator:
    """Counter-based generator keyed by (master seed, condition, realization)."""
    ss = np.random.SeedSequence([_key_int(master_seed), _key_int(condition_id), _key_int(realization_id)])
    return np.random.Generator(np.random.Philox(ss))


def build_bimodal_field(sea: BimodalSeaState, n_per_system: int = 100, ramp: float = 120.0,
                        rng: np.random.Generator | None = None, scheme: str = EQUAL_ENERGY,
                        seed: tuple = ()) -> WaveField:
    """Discretize both systems of ``sea`` with independent phases.

    When ``rng`` is omitted it is derived from ``seed`` (a tuple of up to three
    keys passed to :func:`realization_rng`).
    """
    if rng is None:
        rng = realization_rng(*seed) if seed else np.random.default_rng()
    comps, system = [], []
    for j, p in enumerate((sea.primary, sea.secondary)):
        c = discretize_spectrum(p, n_per_system, scheme, rng)
        comps += c
        system += [j] * len(c)
    return WaveField.from_components(comps, ramp_duration=ramp, system=system,
                                     seed=tuple(seed), n_systems=2)


def evaluate_by_system(f: WaveField, x, y, t, chunk: int = 2048) -> np.ndarray:
    """Elevation and slopes split by spectral system.

    Returns an array of shape ``(n_systems, 3, *shape)`` holding
    ``(zeta, dzeta/dx, dzeta/dy)`` of each system, ramp included.
    """
    x, y, t = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, t)))
    shape = x.shape
    xf, yf, tf = x.ravel(), y.ravel(), t.ravel()
    out = np.zeros((f.n_systems, 3, xf.size))
    if len(f) == 0:
        return out.reshape((f.n_systems, 3) + shape)
    kx = f.k * np.cos(f.heading)
    ky = f.k * np.sin(f.heading)
    onehot = np.zeros((len(f), f.n_systems))
    onehot[np.arange(len(f)), f.system] = 1.0
    w0 = f.amplitude[:, None] * onehot
    wx = (f.amplitude * kx)[:, None] * onehot
    wy = (f.amplitude * ky)[:, None] * onehot
    for s in range(0, xf.size, chunk):
        sl = slice(s, s + chunk)
        arg = np.outer(xf[sl], kx) + np.outer(yf[sl], ky) - np.outer(tf[sl], f.omega) + f.phase
        c, sn = np.cos(arg), np.sin(arg)
        r = f.ramp(tf[sl])
        out[:, 0, sl] = (c @ w0).T * r
        out[:, 1, sl] = -(sn @ wx).T * r
        out[:, 2, sl] = -(sn @ wy).T * r
    return out.reshape((f.n_systems, 3) + shape)


def elevation_and_slopes(f: WaveField, x, y, t):
    """Incident elevation and its analytic x/y partials at (x, y, t)."""
    v = evaluate_by_system(f, x, y, t).sum(axis=0)
    if v.ndim == 1:
        return float(v[0]), float(v[1]), float(v[2])
    return v[0], v[1], v[2]


@dataclass
class WaveTrace:
    t: np.ndarray
    zeta: np.ndarray
    dzdx: np.ndarray
    dzdy: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def write_csv(self, path, comments: Sequence[str] = ()):
        with open(path, "w", newline="") as fh:
            for c in comments:
                fh.write(f"# {c}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "zeta", "dzdx", "dzdy"])
            for row in zip(self.t, self.zeta, self.dzdx, self.dzdy):
                w.writerow([f"{v:.9g}" for v in row])


def sample_count(duration: float, dt: float) -> int:
    # Guard against floor(1920/0.1) landing on 19199.
    return int(math.floor(duration / dt + 1e-9)) + 1


def encounter_trace(f: WaveField, speed: float, course: float, duration: float, dt: float) -> WaveTrace:
    """Wave channels seen by an observer moving at ``speed`` along ``course``.

    ``course`` is in degrees, counter-clockwise from the field X axis.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if duration < dt:
        raise ValueError("duration must be >= dt")
    n = sample_count(duration, dt)
    t = np.arange(n) * dt
    chi = math.radians(course)
    x = speed * t * math.cos(chi)
    y = speed * t * math.sin(chi)
    z, dx, dy = elevation_and_slopes(f, x, y, t)
    return WaveTrace(t, np.asarray(z), np.asarray(dx), np.asarray(dy),
                     meta={"speed": speed, "course": course})
