"""Voyage evaluation: great-circle routes on a half-degree grid, weather
histograms, condition sampling, ensemble statistics and KDE summaries.

Directions in histograms are compass directions the waves come *from*
(clockwise from north).  Ship courses are compass courses.  The relative
heading used by the simulator is ``course - wave_dir`` (0 = head seas,
90 = waves from port, 180 = following).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import AlignmentError, AmbiguityError, DataError, FormatError, SamplingError
from .seaway import BimodalSeaState, SpectrumParams

EARTH_RADIUS_KM = 6371.0
CELL_DEG = 0.5
N_LAT_BINS = int(180 / CELL_DEG)
N_LON_BINS = int(360 / CELL_DEG)

NORFOLK = (36.85, -76.29)
BERGEN = (60.39, 5.32)

HISTOGRAM_COLUMNS = ["lat_bin", "lon_bin", "hs1", "tp1", "dir1", "hs2", "tp2", "dir2", "count"]
DOFS = ("heave", "roll", "pitch")


# ---------------------------------------------------------------------------
# Grid and geodesy


@dataclass(frozen=True, order=True)
class GridCell:
    lat_bin: int
    lon_bin: int

    def __post_init__(self):
        if not (0 <= self.lat_bin < N_LAT_BINS and 0 <= self.lon_bin < N_LON_BINS):
            raise ValueError(f"cell ({self.lat_bin}, {self.lon_bin}) outside the grid")

    @classmethod
    def from_latlon(cls, lat: float, lon: float) -> "GridCell":
        if not -90.0 <= lat <= 90.0:
            raise ValueError(f"latitude {lat} out of range")
        lat_bin = min(int(math.floor((lat + 90.0) / CELL_DEG)), N_LAT_BINS - 1)
        lon_bin = int(math.floor((((lon + 180.0) % 360.0)) / CELL_DEG)) % N_LON_BINS
        return cls(lat_bin, lon_bin)

    @property
    def center(self) -> tuple[float, float]:
        return (-90.0 + (self.lat_bin + 0.5) * CELL_DEG, -180.0 + (self.lon_bin + 0.5) * CELL_DEG)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """(lat_min, lat_max, lon_min, lon_max)."""
        la = -90.0 + self.lat_bin * CELL_DEG
        lo = -180.0 + self.lon_bin * CELL_DEG
        return la, la + CELL_DEG, lo, lo + CELL_DEG

    def adjacent(self, other: "GridCell") -> bool:
        dlon = abs(self.lon_bin - other.lon_bin)
        dlon = min(dlon, N_LON_BINS - dlon)
        return abs(self.lat_bin - other.lat_bin) <= 1 and dlon <= 1


def haversine_km(lat1, lon1, lat2, lon2, radius=EARTH_RADIUS_KM):
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dp = p2 - p1
    dl = np.radians(np.asarray(lon2) - np.asarray(lon1))
    a = np.sin(dp / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2) ** 2
    return 2 * radius * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def forward_azimuth(lat1, lon1, lat2, lon2):
    """Initial compass bearing (deg) of the great circle from point 1 to 2."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dl = np.radians(np.asarray(lon2) - np.asarray(lon1))
    y = np.sin(dl) * np.cos(p2)
    x = np.cos(p1) * np.sin(p2) - np.sin(p1) * np.cos(p2) * np.cos(dl)
    return np.degrees(np.arctan2(y, x)) % 360.0


def _unit(lat, lon):
    p, l = np.radians(lat), np.radians(lon)
    return np.array([np.cos(p) * np.cos(l), np.cos(p) * np.sin(l), np.sin(p)])


@dataclass(frozen=True)
class Waypoint:
    cell: GridCell
    lat: float
    lon: float
    along_km: float  # along-track distance where the track enters the cell
    course: float  # compass course of the great circle inside the cell


@dataclass(frozen=True)
class VoyagePlan:
    start: tuple
    end: tuple
    waypoints: tuple
    distance_km: float  # along the great circle
    speed_kts: float = 10.0
    seas: tuple = ()  # per-waypoint sampled BimodalSeaState (compass directions)
    fallback: tuple = ()

    def __len__(self):
        return len(self.waypoints)

    @property
    def snapped_length_km(self) -> float:
        """Length of the polyline through the cell centres."""
        if len(self.waypoints) < 2:
            return 0.0
        la = np.array([w.lat for w in self.waypoints])
        lo = np.array([w.lon for w in self.waypoints])
        return float(np.sum(haversine_km(la[:-1], lo[:-1], la[1:], lo[1:])))

    def with_seas(self, seas, fallback=None) -> "VoyagePlan":
        seas = tuple(seas)
        if len(seas) != len(self.waypoints):
            raise ValueError("one sea state per waypoint required")
        fb = tuple(fallback) if fallback is not None else (False,) * len(seas)
        return VoyagePlan(self.start, self.end, self.waypoints, self.distance_km, self.speed_kts, seas, fb)

    def subsample(self, stride: int) -> "VoyagePlan":
        """Every ``stride``-th waypoint (always keeping the last one)."""
        if stride <= 1:
            return self
        idx = list(range(0, len(self.waypoints), stride))
        if idx[-1] != len(self.waypoints) - 1:
            idx.append(len(self.waypoints) - 1)
        pick = lambda seq: tuple(seq[i] for i in idx) if seq else ()
        return VoyagePlan(self.start, self.end, pick(self.waypoints), self.distance_km, self.speed_kts,
                          pick(self.seas), pick(self.fallback))


def great_circle_route(start: tuple, end: tuple, step_km: float = 1.0, speed_kts: float = 10.0) -> VoyagePlan:
    """Half-degree cells crossed by the great circle from ``start`` to ``end``.

    The arc is sampled every ``step_km`` and the visited cells are kept in
    order with consecutive duplicates removed.
    """
    (lat1, lon1), (lat2, lon2) = start, end
    for lat, lon in (start, end):
        if not (-90 <= lat <= 90 and -180 <= lon <= 360 and math.isfinite(lon)):
            raise ValueError(f"invalid coordinate ({lat}, {lon})")
    u1, u2 = _unit(lat1, lon1), _unit(lat2, lon2)
    omega = math.atan2(np.linalg.norm(np.cross(u1, u2)), float(np.dot(u1, u2)))
    if math.pi - omega < 1e-9:
        raise AmbiguityError("antipodal endpoints: the great circle is not unique")
    total = omega * EARTH_RADIUS_KM
    n = max(1, int(math.ceil(total / step_km)))
    f = np.linspace(0.0, 1.0, n + 1)
    if omega < 1e-15:
        pts = np.repeat(u1[None], n + 1, axis=0)
    else:
        so = math.sin(omega)
        pts = (np.sin((1 - f) * omega)[:, None] * u1 + np.sin(f * omega)[:, None] * u2) / so
    lat = np.degrees(np.arcsin(np.clip(pts[:, 2], -1, 1)))
    lon = np.degrees(np.arctan2(pts[:, 1], pts[:, 0]))
    along = f * total
    if omega < 1e-15:
        course = np.zeros(n + 1)
    else:
        nxt = np.minimum(np.arange(n + 1) + 1, n)
        prv = np.maximum(np.arange(n + 1) - 1, 0)
        course = forward_azimuth(lat[prv], lon[prv], lat[nxt], lon[nxt])
    cells = [GridCell.from_latlon(a, b) for a, b in zip(lat, lon)]
    waypoints = []
    i = 0
    while i <= n:
        j = i
        while j + 1 <= n and cells[j + 1] == cells[i]:
            j += 1
        mid = (i + j) // 2
        c = cells[i]
        clat, clon = c.center
        waypoints.append(Waypoint(c, clat, clon, float(along[i]), float(course[mid])))
        i = j + 1
    return VoyagePlan(tuple(start), tuple(end), tuple(waypoints), float(total), speed_kts)


def relative_heading(course: float, wave_from: float) -> float:
    """Relative wave direction (0 head, 90 from port) for a compass course."""
    return (course - wave_from) % 360.0


def relative_sea(sea: BimodalSeaState, course: float) -> BimodalSeaState:
    """Compass-direction sea state expressed relative to the ship's course."""
    p, s = sea.primary, sea.secondary
    return BimodalSeaState(SpectrumParams(p.hs, p.tp, relative_heading(course, p.dir)),
                           SpectrumParams(s.hs, s.tp, relative_heading(course, s.dir)))


# ---------------------------------------------------------------------------
# Weather histograms


@dataclass(frozen=True, order=True)
class SeaKey:
    hs1: float
    tp1: float
    dir1: float
    hs2: float
    tp2: float
    dir2: float | None = None  # None: take the cell's most probable direction difference

    @property
    def ddir(self) -> float | None:
        return None if self.dir2 is None else (self.dir2 - self.dir1) % 360.0

    def sort_key(self):
        return (self.hs1, self.tp1, self.dir1, self.hs2, self.tp2,
                -1.0 if self.dir2 is None else self.dir2)


@dataclass(frozen=True)
class Condition:
    """A basin-wide combination: heights, periods and direction difference."""

    hs1: float
    tp1: float
    hs2: float
    tp2: float
    ddir: float
    count: int = 0

    @property
    def key(self):
        return (self.hs1, self.tp1, self.hs2, self.tp2, self.ddir)

    def sea_state(self, heading: float) -> BimodalSeaState:
        """Sea relative to a ship meeting the primary system at ``heading``.

        The secondary system comes from ``ddir`` further clockwise (compass),
        i.e. ``heading - ddir`` in relative terms.
        """
        return BimodalSeaState(SpectrumParams(self.hs1, self.tp1, heading),
                               SpectrumParams(self.hs2, self.tp2, heading - self.ddir))

    def to_json(self) -> dict:
        return {"hs1": self.hs1, "tp1": self.tp1, "hs2": self.hs2, "tp2": self.tp2, "ddir": self.ddir,
                "count": self.count}


class WeatherHistogram:
    """Per-cell counts of binned bimodal sea states."""

    def __init__(self, cells: Mapping[GridCell, Mapping[SeaKey, int]] | None = None):
        self._cells: dict[GridCell, dict[SeaKey, int]] = {}
        for cell, entries in (cells or {}).items():
            for key, n in entries.items():
                self._add(cell, key, n)

    def _add(self, cell: GridCell, key: SeaKey, n: int):
        if n < 1:
            raise ValueError("counts must be >= 1")
        d = self._cells.setdefault(cell, {})
        d[key] = d.get(key, 0) + int(n)

    def __len__(self):
        return sum(len(v) for v in self._cells.values())

    def __eq__(self, other):
        return isinstance(other, WeatherHistogram) and self._cells == other._cells

    @property
    def cells(self) -> list[GridCell]:
        return sorted(self._cells)

    def __contains__(self, cell):
        return cell in self._cells

    def entries(self, cell: GridCell) -> list[tuple[SeaKey, int]]:
        return sorted(self._cells.get(cell, {}).items(), key=lambda kv: kv[0].sort_key())

    def probabilities(self, cell: GridCell) -> list[tuple[SeaKey, float]]:
        ent = self.entries(cell)
        total = sum(n for _, n in ent)
        return [(k, n / total) for k, n in ent]

    def aggregate(self) -> list[tuple[SeaKey, int]]:
        """Basin-wide counts over all cells."""
        acc: dict[SeaKey, int] = {}
        for entries in self._cells.values():
            for k, n in entries.items():
                acc[k] = acc.get(k, 0) + n
        return sorted(acc.items(), key=lambda kv: kv[0].sort_key())

    def most_probable_ddir(self, cell: GridCell | None = None) -> float:
        ent = self.entries(cell) if cell is not None else self.aggregate()
        acc: dict[float, int] = {}
        for k, n in ent:
            if k.ddir is not None:
                acc[k.ddir] = acc.get(k.ddir, 0) + n
        if not acc:
            if cell is not None:
                return self.most_probable_ddir(None)
            return 0.0
        return min(acc, key=lambda d: (-acc[d], d))

    def combinations(self) -> dict[tuple, int]:
        """Counts per (hs1, tp1, hs2, tp2, ddir) over the whole basin."""
        out: dict[tuple, int] = {}
        for cell in self.cells:
            fallback = None
            for k, n in self.entries(cell):
                d = k.ddir
                if d is None:
                    fallback = self.most_probable_ddir(cell) if fallback is None else fallback
                    d = fallback
                key = (k.hs1, k.tp1, k.hs2, k.tp2, d)
                out[key] = out.get(key, 0) + n
        return out

    def write_csv(self, path, comments: Sequence[str] = ()):
        with open(path, "w", newline="") as fh:
            for c in comments:
                fh.write(f"# {c}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(HISTOGRAM_COLUMNS)
            for cell in self.cells:
                for k, n in self.entries(cell):
                    w.writerow([cell.lat_bin, cell.lon_bin, repr(k.hs1), repr(k.tp1), repr(k.dir1),
                                repr(k.hs2), repr(k.tp2), "" if k.dir2 is None else repr(k.dir2), n])


def load_weather_histogram(path) -> WeatherHistogram:
    """Read a histogram CSV; every malformed row is reported with its line number."""
    h = WeatherHistogram()
    problems = []
    with open(path, newline="") as fh:
        lines = [(i + 1, line) for i, line in enumerate(fh)]
    body = [(n, l) for n, l in lines if l.strip() and not l.lstrip().startswith("#")]
    if not body:
        return h
    header_line, header = body[0]
    cols = next(csv.reader([header]))
    cols = [c.strip() for c in cols]
    unknown = [c for c in cols if c not in HISTOGRAM_COLUMNS]
    missing = [c for c in HISTOGRAM_COLUMNS if c not in cols]
    if unknown or missing or len(cols) != len(HISTOGRAM_COLUMNS):
        raise FormatError(f"{path}: line {header_line}: bad header (unknown {unknown}, missing {missing})")
    idx = {c: cols.index(c) for c in HISTOGRAM_COLUMNS}
    for lineno, line in body[1:]:
        row = next(csv.reader([line]))
        try:
            if len(row) != len(cols):
                raise ValueError(f"expected {len(cols)} fields, got {len(row)}")
            get = lambda c: row[idx[c]].strip()
            count = int(get("count"))
            if count < 1:
                raise ValueError(f"count must be >= 1, got {count}")
            cell = GridCell(int(get("lat_bin")), int(get("lon_bin")))
            vals = {c: float(get(c)) for c in ("hs1", "tp1", "dir1", "hs2", "tp2")}
            d2 = get("dir2")
            key = SeaKey(vals["hs1"], vals["tp1"], vals["dir1"] % 360.0, vals["hs2"], vals["tp2"],
                         None if d2 == "" else float(d2) % 360.0)
            if not all(math.isfinite(v) for v in vals.values()) or key.hs1 < 0 or key.hs2 < 0 \
                    or key.tp1 <= 0 or key.tp2 <= 0:
                raise ValueError("wave parameters must be finite with hs >= 0 and tp > 0")
        except (ValueError, IndexError) as exc:
            problems.append(f"line {lineno}: {exc}")
            continue
        h._add(cell, key, count)
    if problems:
        raise FormatError(f"{path}: " + "; ".join(problems[:20])
                          + (f"; ... ({len(problems)} bad rows)" if len(problems) > 20 else ""))
    return h


def top_k_conditions(h: WeatherHistogram, k: int) -> list[Condition]:
    """Most frequent basin-wide combinations, ties broken lexicographically."""
    if k < 1:
        raise ValueError("k must be >= 1")
    combos = h.combinations()
    if not combos:
        raise SamplingError("histogram is empty")
    ordered = sorted(combos.items(), key=lambda kv: (-kv[1], kv[0]))
    if k > len(ordered):
        warnings.warn(f"only {len(ordered)} distinct combinations available (asked for {k})", stacklevel=2)
    return [Condition(*key, count=n) for key, n in ordered[:k]]


@dataclass(frozen=True)
class SeaStateDraw:
    sea: BimodalSeaState
    fallback: bool = False


def _draw(entries: list[tuple[SeaKey, int]], rng: np.random.Generator) -> SeaKey:
    counts = np.array([n for _, n in entries], dtype=float)
    cum = np.cumsum(counts)
    i = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return entries[min(i, len(entries) - 1)][0]


def sample_condition(h: WeatherHistogram, cell: GridCell, rng: np.random.Generator,
                     fallback: bool = True) -> SeaStateDraw:
    """Draw a sea state for ``cell`` proportionally to the recorded counts."""
    if len(h) == 0:
        raise SamplingError("cannot sample from an empty histogram")
    entries = h.entries(cell)
    used_fallback = False
    if not entries:
        if not fallback:
            raise SamplingError(f"cell {cell} not in histogram")
        entries = h.aggregate()
        used_fallback = True
    key = _draw(entries, rng)
    dir2 = key.dir2
    if dir2 is None:
        dir2 = key.dir1 + h.most_probable_ddir(None if used_fallback else cell)
    sea = BimodalSeaState(SpectrumParams(key.hs1, key.tp1, key.dir1), SpectrumParams(key.hs2, key.tp2, dir2))
    return SeaStateDraw(sea, used_fallback)


def sample_voyage(plan: VoyagePlan, h: WeatherHistogram, seed: int, fallback: bool = True) -> VoyagePlan:
    """Independent draw per waypoint (spatial dependence deliberately ignored)."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0x564F59])))
    draws = [sample_condition(h, w.cell, rng, fallback) for w in plan.waypoints]
    return plan.with_seas([d.sea for d in draws], [d.fallback for d in draws])


def _bin(v, width):
    return float(np.round(v / width) * width)


def synthesize_histogram(cells: Iterable[GridCell], seed: int = 0, obs_per_cell: int = 48) -> WeatherHistogram:
    """Synthetic winter North-Atlantic-like climate on the given cells.

    Wind sea grows northwards and comes mostly from the west; swell is long
    and most often 90 degrees off the wind sea.  Each cell draws from its own
    stream, so the result for a cell does not depend on which other cells
    are requested.
    """
    h = WeatherHistogram()
    ddirs = np.arange(0, 360, 30)
    w = np.exp(-0.5 * (((ddirs - 90 + 180) % 360 - 180) / 45.0) ** 2) + 0.05
    w /= w.sum()
    for cell in sorted(set(cells)):
        lat, lon = cell.center
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, cell.lat_bin, cell.lon_bin])))
        med = 1.6 + 0.045 * max(lat - 30.0, 0.0)
        hs1 = np.minimum(med * np.exp(0.35 * rng.standard_normal(obs_per_cell)), 8.0)
        tp1 = 2.9 * np.sqrt(hs1) + 1.5 + 0.4 * rng.standard_normal(obs_per_cell)
        dir1 = (260.0 + np.degrees(rng.vonmises(0.0, 2.0, obs_per_cell))) % 360
        hs2 = np.minimum(1.1 * np.exp(0.35 * rng.standard_normal(obs_per_cell)), 4.0)
        tp2 = np.clip(11.5 + 1.2 * rng.standard_normal(obs_per_cell), 8.0, 16.0)
        dd = rng.choice(ddirs, size=obs_per_cell, p=w)
        for i in range(obs_per_cell):
            d1 = _bin(dir1[i], 30.0) % 360
            key = SeaKey(max(_bin(hs1[i], 0.5), 0.5), max(_bin(tp1[i], 0.5), 3.0), d1,
                         max(_bin(hs2[i], 0.5), 0.5), _bin(tp2[i], 0.5), float((d1 + dd[i]) % 360))
            h._add(cell, key, 1)
    return h


def corridor_cells(plan: VoyagePlan, half_width: int = 2) -> list[GridCell]:
    """Cells within ``half_width`` cells (Chebyshev) of any route waypoint."""
    out = set()
    for wp in plan.waypoints:
        for dl in range(-half_width, half_width + 1):
            for dn in range(-half_width, half_width + 1):
                la = wp.cell.lat_bin + dl
                if 0 <= la < N_LAT_BINS:
                    out.add(GridCell(la, (wp.cell.lon_bin + dn) % N_LON_BINS))
    return sorted(out)


# ---------------------------------------------------------------------------
# Statistics


def ensemble_std(realizations, channel: str | None = None) -> float:
    """Mean over realizations of each realization's population std.

    ``realizations`` are motion records (ramp excluded automatically, then
    ``channel`` selected) or plain 1-D arrays.
    """
    realizations = list(realizations)
    if not realizations:
        raise DataError("ensemble_std needs at least one realization")
    out = []
    for r in realizations:
        if hasattr(r, "post_ramp"):
            if channel is None:
                raise ValueError("channel required for motion records")
            x = getattr(r.post_ramp(), channel)
        else:
            x = np.asarray(r, dtype=float)
        if len(x) == 0:
            raise DataError("empty realization")
        out.append(float(np.std(x)))
    return float(np.mean(out))


@dataclass(frozen=True)
class KdeCurve:
    grid: np.ndarray
    pdf: np.ndarray
    bandwidth: float
    n_samples: int

    def integral(self) -> float:
        return float(np.trapezoid(self.pdf, self.grid))

    def to_json(self) -> dict:
        return {"bandwidth": self.bandwidth, "n_samples": self.n_samples,
                "grid": self.grid.tolist(), "pdf": self.pdf.tolist()}


def silverman_bandwidth(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    sd = float(np.std(x, ddof=1))
    iqr = float(np.subtract(*np.percentile(x, [75, 25])))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * len(x) ** (-0.2)


def gaussian_kde(samples, bandwidth: str | float = "silverman", n_grid: int = 401) -> KdeCurve:
    """Gaussian KDE tabulated on data range +/- 3 bandwidths, unit trapezoid mass."""
    x = np.asarray(samples, dtype=float).ravel()
    if len(x) < 2:
        raise DataError("KDE needs at least 2 samples")
    if not np.all(np.isfinite(x)):
        raise DataError("KDE samples must be finite")
    bw = silverman_bandwidth(x) if bandwidth == "silverman" else float(bandwidth)
    if not bw > 0 or np.ptp(x) == 0:
        raise DataError("degenerate KDE bandwidth (identical samples)")
    kde = stats.gaussian_kde(x, bw_method=bw / np.std(x, ddof=1))
    grid = np.linspace(x.min() - 3 * bw, x.max() + 3 * bw, n_grid)
    pdf = kde(grid)
    pdf = pdf / np.trapezoid(pdf, grid)
    return KdeCurve(grid, pdf, bw, len(x))


def cross_correlation(a, b, max_lag: int) -> tuple[float, int]:
    """Peak normalized cross-correlation of two equal-length series and its lag.

    ``lag > 0`` means ``b`` trails ``a``.
    """
    a = np.asarray(a, dtype=float) - np.mean(a)
    b = np.asarray(b, dtype=float) - np.mean(b)
    if a.shape != b.shape:
        raise ValueError("series must have equal length")
    n = len(a)
    denom = n * np.std(a) * np.std(b)
    if denom == 0:
        return 0.0, 0
    best, lag = -np.inf, 0
    for L in range(-max_lag, max_lag + 1):
        r = np.dot(a[max(0, -L):n - max(0, L)], b[max(0, L):n - max(0, -L)]) / denom
        if r > best or (r == best and abs(L) < abs(lag)):
            best, lag = r, L
    return float(best), lag


def abs_pct_error(value: float, ref: float) -> float:
    if value == ref:
        return 0.0
    if ref == 0:
        return math.inf
    return abs(value - ref) / abs(ref) * 100.0


@dataclass
class VoyageSummary:
    keys: list
    errors: dict  # dof -> {"lofi": [...], "corrected": [...]} abs % errors per key
    medians: dict  # dof -> {"lofi": m, "corrected": m}
    improved_fraction: dict  # dof -> fraction of keys where corrected beats lofi
    kde: dict  # dof -> fidelity -> KdeCurve
    worst: object = None

    def to_json(self) -> dict:
        return {
            "keys": [str(k) for k in self.keys],
            "errors": self.errors,
            "medians": self.medians,
            "improved_fraction": self.improved_fraction,
            "kde": {d: {f: c.to_json() for f, c in v.items()} for d, v in self.kde.items()},
            "worst": None if self.worst is None else str(self.worst),
        }


def worst_condition(seas: Mapping) -> object:
    """Key with the largest (primary Hs, secondary Hs); first key wins ties."""
    best = None
    for key, sea in seas.items():
        score = (sea.primary.hs, sea.secondary.hs)
        if best is None or score > best[0]:
            best = (score, key)
    return None if best is None else best[1]


def compare_report(lofi: Mapping, corrected: Mapping, reference: Mapping, seas: Mapping | None = None,
                   dofs=DOFS, kde: bool = True) -> VoyageSummary:
    """Per-key abs % errors of std statistics against the reference, medians and KDEs.

    Each mapping is ``key -> {dof: std}``.
    """
    keys = list(reference)
    problems = []
    for name, m in (("lofi", lofi), ("corrected", corrected)):
        missing = [k for k in keys if k not in m]
        extra = [k for k in m if k not in reference]
        if missing or extra:
            problems.append(f"{name}: missing {missing} extra {extra}")
    if problems:
        raise AlignmentError("condition sets differ: " + "; ".join(problems))
    errors, medians, improved, kdes = {}, {}, {}, {}
    for d in dofs:
        el = [abs_pct_error(lofi[k][d], reference[k][d]) for k in keys]
        ec = [abs_pct_error(corrected[k][d], reference[k][d]) for k in keys]
        errors[d] = {"lofi": el, "corrected": ec}
        medians[d] = {"lofi": float(np.median(el)) if el else math.nan,
                      "corrected": float(np.median(ec)) if ec else math.nan}
        improved[d] = float(np.mean([c < l for c, l in zip(ec, el)])) if keys else math.nan
        if kde and len(keys) >= 2:
            curves = {}
            for name, m in (("lofi", lofi), ("corrected", corrected), ("reference", reference)):
                vals = [m[k][d] for k in keys]
                if np.ptp(vals) > 0:
                    curves[name] = gaussian_kde(vals)
            kdes[d] = curves
    worst = worst_condition({k: seas[k] for k in keys}) if seas else None
    return VoyageSummary(keys, errors, medians, improved, kdes, worst)
