"""Batch pipeline: run configuration, simulation campaigns, per-heading
training, held-out evaluation and voyage evaluation.

Every artifact written here carries the configuration hash and master seed,
and re-running a step with the same inputs reproduces identical bytes.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict, replace
from functools import lru_cache
from pathlib import Path

import jsonschema
import numpy as np

from . import lstm
from .errors import DataError, FormatError, NumericalError
from .hull import FRIGATE_5415, Particulars, build_bonjean, generate_hull
from .seaway import BimodalSeaState, build_bimodal_field
from .sim import LOFI, REFERENCE, CORRECTED, MotionRecord, SimConfig, build_model, import_motion_record, simulate
from .voyage import (
    BERGEN, DOFS, NORFOLK, Condition, WeatherHistogram, compare_report, corridor_cells, ensemble_std,
    great_circle_route, haversine_km, load_weather_histogram, relative_sea, sample_voyage,
    synthesize_histogram, top_k_conditions, worst_condition,
)

log = logging.getLogger("mfship")

CANONICAL, DESK = "canonical", "desk"
ALL_HEADINGS = [float(h) for h in range(0, 360, 30)]


class InsufficientRecords(DataError):
    pass


class MissingCheckpoint(DataError):
    pass


# ---------------------------------------------------------------------------
# Configuration

_PARTICULARS = {
    "lwl_m": FRIGATE_5415.lwl, "beam_m": FRIGATE_5415.beam, "draft_m": FRIGATE_5415.draft,
    "disp_t": FRIGATE_5415.disp, "kg_m": FRIGATE_5415.kg, "lcg_m": FRIGATE_5415.lcg,
}

_SIM_DEFAULTS = {k: v for k, v in asdict(SimConfig()).items()}

PROFILES = {
    CANONICAL: {
        "profile": CANONICAL,
        "seed": 20240601,
        "hull": {"kind": "frigate-parametric", "n_stations": 21, "particulars": _PARTICULARS},
        "seaway": {"n_per_system": 100, "scheme": "equal-energy"},
        "sim": dict(_SIM_DEFAULTS, duration=1920.0),
        "train": {"epochs": 100, "seq_len": 18000, "resolution_factor": 9, "learning_rate": 1e-3,
                  "lr_decay": 1.0, "batch_size": 5, "hidden": [150, 150, 150], "shuffle": True, "clip_norm": 5.0},
        "campaign": {"n_conditions": 100, "headings": ALL_HEADINGS, "realizations": 5,
                     "split": [50, 25, 25], "condition_fractions": [0.5, 0.25, 0.25]},
        "voyage": {"start": list(NORFOLK), "end": list(BERGEN), "realizations": 5,
                   "waypoint_stride": 1, "heading_fallback": False},
        "weather": {"corridor_half_width": 2, "obs_per_cell": 48},
    },
}
PROFILES[DESK] = copy.deepcopy(PROFILES[CANONICAL])
PROFILES[DESK].update({"profile": DESK})
PROFILES[DESK]["sim"]["duration"] = 320.0
PROFILES[DESK]["train"].update({"epochs": 30, "seq_len": 2000, "resolution_factor": 4, "batch_size": 2,
                                "hidden": [32, 32, 32], "learning_rate": 5e-3,
                                "lr_decay": 0.92})
PROFILES[DESK]["campaign"].update({"n_conditions": 12, "headings": [0.0, 90.0, 180.0], "split": [10, 5, 5]})
PROFILES[DESK]["voyage"].update({"waypoint_stride": 18, "heading_fallback": True})

_num = {"type": "number"}
_int = {"type": "integer"}


def _obj(props: dict, required=()):
    return {"type": "object", "properties": props, "additionalProperties": False, "required": list(required)}


CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "mfship run configuration",
    **_obj({
        "profile": {"enum": [CANONICAL, DESK]},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "hull": _obj({
            "kind": {"enum": ["box", "frigate-parametric"]},
            "n_stations": {"type": "integer", "minimum": 3},
            "particulars": _obj({k: {"type": "number", "exclusiveMinimum": 0} for k in _PARTICULARS}
                                | {"lcg_m": _num}),
        }),
        "seaway": _obj({"n_per_system": {"type": "integer", "minimum": 1},
                        "scheme": {"enum": ["equal-energy", "equal-frequency"]}}),
        "sim": _obj({k: ({"type": ["number", "null"]} if k == "bq44" else _num) for k in _SIM_DEFAULTS}),
        "train": _obj({
            "epochs": {"type": "integer", "minimum": 1}, "seq_len": {"type": "integer", "minimum": 1},
            "resolution_factor": {"type": "integer", "minimum": 1}, "learning_rate": {"type": "number", "minimum": 0},
            "lr_decay": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            "batch_size": {"type": "integer", "minimum": 1},
            "hidden": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
            "shuffle": {"type": "boolean"}, "clip_norm": {"type": "number", "minimum": 0},
        }),
        "campaign": _obj({
            "n_conditions": {"type": "integer", "minimum": 1},
            "headings": {"type": "array", "items": _num, "minItems": 1},
            "realizations": {"type": "integer", "minimum": 1},
            "split": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 3, "maxItems": 3},
            "condition_fractions": {"type": "array", "items": {"type": "number", "minimum": 0},
                                    "minItems": 3, "maxItems": 3},
        }),
        "voyage": _obj({
            "start": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
            "end": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
            "realizations": {"type": "integer", "minimum": 1},
            "waypoint_stride": {"type": "integer", "minimum": 1},
            "heading_fallback": {"type": "boolean"},
        }),
        "weather": _obj({"corridor_half_width": {"type": "integer", "minimum": 0},
                         "obs_per_cell": {"type": "integer", "minimum": 1}}),
    }),
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True)
class RunConfig:
    data: dict

    @classmethod
    def build(cls, profile: str | None = None, seed: int | None = None, overrides: dict | None = None):
        overrides = overrides or {}
        profile = profile or overrides.get("profile") or DESK
        if profile not in PROFILES:
            raise FormatError(f"unknown profile {profile!r}")
        data = _merge(PROFILES[profile], overrides)
        data["profile"] = profile
        if seed is not None:
            data["seed"] = int(seed)
        try:
            jsonschema.validate(data, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path)
            raise FormatError(f"config invalid at '{path}': {exc.message}") from None
        cfg = cls(data)
        cfg.sim_config()  # surfaces invariant violations early
        cfg.train_config()
        return cfg

    @classmethod
    def load(cls, path=None, profile: str | None = None, seed: int | None = None):
        over = {}
        if path is not None:
            try:
                over = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise FormatError(f"cannot read config {path}: {exc}") from None
        return cls.build(profile, seed, over)

    # -- views -------------------------------------------------------------
    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def profile(self) -> str:
        return self.data["profile"]

    def canonical_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def stamp(self) -> dict:
        return {"config_hash": self.hash, "master_seed": self.seed}

    def comments(self) -> list[str]:
        return [f"config_hash={self.hash}", f"master_seed={self.seed}"]

    def sim_config(self) -> SimConfig:
        try:
            return SimConfig(**self.data["sim"])
        except (TypeError, ValueError) as exc:
            raise FormatError(f"invalid sim config: {exc}") from None

    def train_config(self, seed: int = 0) -> lstm.TrainConfig:
        t = self.data["train"]
        try:
            return lstm.TrainConfig(epochs=t["epochs"], seq_len=t["seq_len"],
                                    resolution_factor=t["resolution_factor"], learning_rate=t["learning_rate"],
                                    lr_decay=t["lr_decay"], batch_size=t["batch_size"], hidden=tuple(t["hidden"]),
                                    shuffle=t["shuffle"], clip_norm=t["clip_norm"], seed=seed)
        except ValueError as exc:
            raise FormatError(f"invalid train config: {exc}") from None

    @property
    def campaign(self) -> dict:
        return self.data["campaign"]

    @property
    def voyage(self) -> dict:
        return self.data["voyage"]

    def particulars(self) -> Particulars:
        p = self.data["hull"]["particulars"]
        return Particulars(lwl=p["lwl_m"], beam=p["beam_m"], draft=p["draft_m"], disp=p["disp_t"],
                           kg=p["kg_m"], lcg=p["lcg_m"])


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True, allow_nan=True) + "\n")


@lru_cache(maxsize=8)
def _model_cached(hull_json: str, sim_json: str):
    h = json.loads(hull_json)
    p = h["particulars"]
    part = Particulars(lwl=p["lwl_m"], beam=p["beam_m"], draft=p["draft_m"], disp=p["disp_t"],
                       kg=p["kg_m"], lcg=p["lcg_m"])
    table = build_bonjean(generate_hull(h["kind"], part, n_stations=h["n_stations"]))
    return build_model(table, SimConfig(**json.loads(sim_json)))


def ship_model(cfg: RunConfig):
    return _model_cached(json.dumps(cfg.data["hull"], sort_keys=True), json.dumps(cfg.data["sim"], sort_keys=True))


# ---------------------------------------------------------------------------
# Conditions and manifests

MANIFEST_COLUMNS = ["id", "cond_index", "heading", "hs1", "tp1", "hs2", "tp2", "ddir", "count"]


@dataclass(frozen=True)
class ManifestRow:
    id: str
    cond_index: int
    heading: float
    condition: Condition

    @property
    def sea(self) -> BimodalSeaState:
        return self.condition.sea_state(self.heading)


def row_id(cond_index: int, heading: float) -> str:
    return f"c{cond_index:03d}-h{int(round(heading)) % 360:03d}"


def make_manifest(conditions: list[Condition], headings) -> list[ManifestRow]:
    return [ManifestRow(row_id(i, h), i, float(h), c) for i, c in enumerate(conditions) for h in headings]


def write_manifest(path, rows: list[ManifestRow], cfg: RunConfig):
    with open(path, "w", newline="") as fh:
        for c in cfg.comments():
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for r in rows:
            c = r.condition
            w.writerow([r.id, r.cond_index, repr(r.heading), repr(c.hs1), repr(c.tp1), repr(c.hs2), repr(c.tp2),
                        repr(c.ddir), c.count])


def read_manifest(path) -> list[ManifestRow]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    except OSError as exc:
        raise FormatError(f"cannot read manifest {path}: {exc}") from None
    out = []
    for n, r in enumerate(rows, start=2):
        try:
            c = Condition(float(r["hs1"]), float(r["tp1"]), float(r["hs2"]), float(r["tp2"]), float(r["ddir"]),
                          int(r["count"]))
            out.append(ManifestRow(r["id"], int(r["cond_index"]), float(r["heading"]), c))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: row {n}: {exc}") from None
    ids = [r.id for r in out]
    if len(set(ids)) != len(ids):
        raise FormatError(f"{path}: duplicate manifest ids")
    return out


def weather_histogram(cfg: RunConfig, path=None) -> WeatherHistogram:
    if path is not None:
        return load_weather_histogram(path)
    v = cfg.voyage
    route = great_circle_route(tuple(v["start"]), tuple(v["end"]))
    w = cfg.data["weather"]
    return synthesize_histogram(corridor_cells(route, w["corridor_half_width"]), seed=cfg.seed,
                                obs_per_cell=w["obs_per_cell"])


def generate_conditions(cfg: RunConfig, hist: WeatherHistogram, k: int | None = None, headings=None):
    k = k or cfg.campaign["n_conditions"]
    headings = cfg.campaign["headings"] if headings is None else headings
    return make_manifest(top_k_conditions(hist, k), headings)


# ---------------------------------------------------------------------------
# Simulation campaign


def record_path(store, rid: str, realization: int, fidelity: str) -> Path:
    return Path(store) / f"{rid}_r{realization}_{fidelity}.csv"


def _field(cfg: RunConfig, sea: BimodalSeaState, key: str, realization: int):
    s = cfg.data["seaway"]
    return build_bimodal_field(sea, n_per_system=s["n_per_system"], ramp=cfg.data["sim"]["ramp"],
                               scheme=s["scheme"], seed=(cfg.seed, key, realization))


def simulate_pair_key(cfg: RunConfig, sea: BimodalSeaState, key: str, realization: int, fidelities, meta=None):
    """Run the requested fidelities for one realization of one sea state."""
    model = ship_model(cfg)
    scfg = cfg.sim_config()
    field = _field(cfg, sea, key, realization)
    meta = dict(meta or {}, **cfg.stamp(), realization=realization, sea=sea.as_dict())
    return {f: simulate(model, field, scfg, f, meta=dict(meta)) for f in fidelities}


def _valid_record(path: Path, cfg: RunConfig) -> bool:
    try:
        rec = import_motion_record(path)
    except (DataError, OSError, ValueError):
        return False
    return rec.meta.get("config_hash") == cfg.hash and len(rec) > 0


def _campaign_task(args):
    cfg_data, row, realization, fidelities, store = args
    cfg = RunConfig(cfg_data)
    meta = {"row_id": row.id, "heading": row.heading, "cond_index": row.cond_index}
    try:
        recs = simulate_pair_key(cfg, row.sea, row.id, realization, fidelities, meta)
    except (NumericalError, ValueError) as exc:
        return row.id, realization, [str(exc)]
    errors = []
    for f, rec in recs.items():
        rec.write_csv(record_path(store, row.id, realization, f), comments=cfg.comments())
        if rec.error:
            errors.append(f"{f}: {rec.error}")
    return row.id, realization, errors


@dataclass
class CampaignResult:
    simulated: int = 0
    skipped: int = 0
    failed: list = None

    def __post_init__(self):
        self.failed = self.failed or []


def run_campaign(cfg: RunConfig, rows: list[ManifestRow], store, fidelities=(LOFI, REFERENCE),
                 realizations: int | None = None, jobs: int = 1) -> CampaignResult:
    """One record per (row, realization, fidelity); existing valid records are kept."""
    store = Path(store)
    store.mkdir(parents=True, exist_ok=True)
    n_real = realizations or cfg.campaign["realizations"]
    res = CampaignResult()
    tasks = []
    for row in rows:
        for r in range(n_real):
            todo = [f for f in fidelities if not _valid_record(record_path(store, row.id, r, f), cfg)]
            res.skipped += len(fidelities) - len(todo)
            if todo:
                tasks.append((cfg.data, row, r, tuple(todo), store))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_campaign_task, tasks))
    else:
        outcomes = [_campaign_task(t) for t in tasks]
    for (rid, r, errors), task in zip(outcomes, tasks):
        res.simulated += len(task[3])
        for e in errors:
            log.warning("run %s r%d failed: %s", rid, r, e)
            res.failed.append(f"{rid} r{r}: {e}")
    return res


# ---------------------------------------------------------------------------
# Splits, training and evaluation


def split_records(cfg: RunConfig, rows: list[ManifestRow], heading: float, available: set | None = None,
                  realizations: int | None = None) -> dict:
    """Condition-disjoint train/validation/test pools, then record draws.

    Conditions of the heading are shuffled and divided by
    ``condition_fractions``; the configured number of (row, realization)
    records is then drawn from each pool.  Test keeps every record of its
    conditions.
    """
    n_real = realizations or cfg.campaign["realizations"]
    hrows = sorted((r for r in rows if abs(((r.heading - heading + 180) % 360) - 180) < 1e-9),
                   key=lambda r: r.cond_index)
    if not hrows:
        raise InsufficientRecords(f"no manifest rows for heading {heading:g}")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, int(round(heading)), 0x5711])))
    order = [hrows[i] for i in rng.permutation(len(hrows))]
    fr = cfg.campaign["condition_fractions"]
    n_tr = int(round(fr[0] / sum(fr) * len(order)))
    n_va = int(round(fr[1] / sum(fr) * len(order)))
    pools = {"train": order[:n_tr], "val": order[n_tr:n_tr + n_va], "test": order[n_tr + n_va:]}
    out = {}
    for name, want in zip(("train", "val", "test"), cfg.campaign["split"]):
        recs = [(r.id, k) for r in sorted(pools[name], key=lambda r: r.cond_index) for k in range(n_real)
                if available is None or (r.id, k) in available]
        if len(recs) < want:
            raise InsufficientRecords(f"heading {heading:g}: {name} split needs {want} records, "
                                      f"only {len(recs)} available")
        pick = sorted(rng.choice(len(recs), size=want, replace=False).tolist()) if want else []
        out[name] = [recs[i] for i in pick]
        out[name + "_conditions"] = sorted(r.id for r in pools[name])
    out["test_all"] = [(r.id, k) for r in sorted(pools["test"], key=lambda r: r.cond_index) for k in range(n_real)
                       if available is None or (r.id, k) in available]
    return out


def _complete(path: Path) -> bool:
    """Record exists and its sidecar carries no truncation flag."""
    side = path.with_suffix(".json")
    if not path.exists():
        return False
    try:
        return not json.loads(side.read_text()).get("error")
    except (OSError, json.JSONDecodeError):
        return True  # bare CSV (e.g. imported data): validated when loaded


def available_records(store, rows: list[ManifestRow], realizations: int) -> set:
    """(row id, realization) pairs with complete lofi and reference records."""
    out = set()
    for row in rows:
        for k in range(realizations):
            if _complete(record_path(store, row.id, k, LOFI)) and _complete(record_path(store, row.id, k, REFERENCE)):
                out.add((row.id, k))
    return out


def load_pair(store, rid: str, k: int):
    lo = import_motion_record(record_path(store, rid, k, LOFI))
    hi = import_motion_record(record_path(store, rid, k, REFERENCE))
    if lo.error or hi.error:
        raise DataError(f"record {rid} r{k} is truncated ({lo.error or hi.error})")
    return lo, hi


def heading_seed(cfg: RunConfig, heading: float) -> int:
    return int(np.random.SeedSequence([cfg.seed, int(round(heading)), 0x7EA1]).generate_state(1)[0])


def checkpoint_path(out_dir, heading: float) -> Path:
    return Path(out_dir) / f"lstm_h{int(round(heading)) % 360:03d}.json"


@dataclass
class HeadingTraining:
    heading: float
    result: lstm.TrainResult
    standardizer: lstm.Standardizer
    split: dict
    checkpoint: Path | None = None


def train_heading(cfg: RunConfig, rows, store, heading: float, out_dir=None, log_fn=None) -> HeadingTraining:
    n_real = cfg.campaign["realizations"]
    split = split_records(cfg, rows, heading, available_records(store, rows, n_real))
    pairs = {key: load_pair(store, *key) for key in split["train"] + split["val"]}
    std = lstm.fit_standardizer_records([pairs[k] for k in split["train"]])

    def xy(keys):
        X, Y = [], []
        for k in keys:
            x, y = lstm.record_pair(*pairs[k])
            X.append(std.apply_inputs(x))
            Y.append(std.apply_targets(y))
        return X, Y

    tcfg = cfg.train_config(seed=heading_seed(cfg, heading))
    n = min(len(lstm.record_pair(*pairs[k])[0]) for k in split["train"] + split["val"])
    if n < tcfg.seq_len:
        raise InsufficientRecords(f"records have {n} post-ramp samples, training needs {tcfg.seq_len}")
    TX, TY = xy(split["train"])
    VX, VY = xy(split["val"])
    net = lstm.LstmNetwork.initialize(len(lstm.INPUT_CHANNELS), tcfg.hidden, len(lstm.TARGET_CHANNELS),
                                      seed=tcfg.seed)
    res = lstm.train(net, TX, TY, VX, VY, tcfg, log=log_fn)
    out = HeadingTraining(heading, res, std, split)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        ck = checkpoint_path(out_dir, heading)
        meta = dict(cfg.stamp(), heading=heading, split={k: [list(x) if isinstance(x, tuple) else x for x in v]
                                                         for k, v in split.items()})
        lstm.save_checkpoint(ck, res.net, std, tcfg, meta)
        write_loss_history(out_dir / f"loss_h{int(round(heading)) % 360:03d}.csv", res, cfg)
        write_json(out_dir / f"split_h{int(round(heading)) % 360:03d}.json", meta)
        out.checkpoint = ck
    return out


def write_loss_history(path, res: lstm.TrainResult, cfg: RunConfig):
    with open(path, "w", newline="") as fh:
        for c in cfg.comments():
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss"])
        w.writerow([0, repr(res.initial_train_loss), repr(res.initial_val_loss)])
        for i, (a, b) in enumerate(zip(res.train_loss, res.val_loss), start=1):
            w.writerow([i, repr(a), repr(b)])


def record_stds(records, dofs=DOFS) -> dict:
    return {d: ensemble_std(records, d) for d in dofs}


def evaluate_heading(store, keys, net, std) -> tuple[dict, dict, dict, dict]:
    """Per-condition ensemble stds (lofi, corrected, reference) over ``keys``."""
    by_row: dict[str, list] = {}
    for rid, k in keys:
        by_row.setdefault(rid, []).append(k)
    lo_s, co_s, hi_s, recs = {}, {}, {}, {}
    for rid in sorted(by_row):
        pairs = [load_pair(store, rid, k) for k in sorted(by_row[rid])]
        los = [p[0] for p in pairs]
        his = [p[1] for p in pairs]
        cos = [lstm.correct(net, std, lo) for lo in los]
        lo_s[rid], co_s[rid], hi_s[rid] = record_stds(los), record_stds(cos), record_stds(his)
        recs[rid] = (los, cos, his)
    return lo_s, co_s, hi_s, recs


# ---------------------------------------------------------------------------
# Voyage


def load_checkpoints(ck_dir) -> dict:
    out = {}
    for p in sorted(Path(ck_dir).glob("lstm_h*.json")):
        net, std, _, meta = lstm.load_checkpoint(p)
        if std is None:
            raise FormatError(f"{p}: checkpoint lacks standardizer statistics")
        out[float(meta.get("heading", float(p.stem[6:])))] = (net, std)
    return out


def heading_bin(rel_deg: float, step: float = 30.0) -> float:
    return float((round(rel_deg / step) * step) % 360)


def pick_checkpoint(checkpoints: dict, rel_deg: float, fallback: bool):
    b = heading_bin(rel_deg)
    if b in checkpoints:
        return b, False
    if not fallback or not checkpoints:
        raise MissingCheckpoint(f"no trained network for relative heading {b:g} deg")
    near = min(checkpoints, key=lambda h: (abs((h - rel_deg + 180) % 360 - 180), h))
    return near, True


def _voyage_task(args):
    cfg_data, i, sea_rel, n_real = args
    cfg = RunConfig(cfg_data)
    return [simulate_pair_key(cfg, sea_rel, f"voyage:{i}", r, (LOFI, REFERENCE), {"waypoint": i})
            for r in range(n_real)]


def run_voyage(cfg: RunConfig, hist: WeatherHistogram, checkpoints: dict, out_dir=None, jobs: int = 1) -> dict:
    """Sample seas along the route, simulate, correct, and summarise."""
    v = cfg.voyage
    plan = great_circle_route(tuple(v["start"]), tuple(v["end"]), speed_kts=cfg.sim_config().speed_kts)
    plan = sample_voyage(plan, hist, cfg.seed).subsample(v["waypoint_stride"])
    n_real = v["realizations"]
    rel = [relative_sea(sea, wp.course) for sea, wp in zip(plan.seas, plan.waypoints)]
    picks = [pick_checkpoint(checkpoints, s.primary.dir, v["heading_fallback"]) for s in rel]
    tasks = [(cfg.data, i, s, n_real) for i, s in enumerate(rel)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            sims = list(pool.map(_voyage_task, tasks))
    else:
        sims = [_voyage_task(t) for t in tasks]
    stats = {LOFI: {}, CORRECTED: {}, REFERENCE: {}}
    waypoints, worst_recs = [], {}
    for i, (wp, sea, rs, (hd, fb), runs) in enumerate(zip(plan.waypoints, plan.seas, rel, picks, sims)):
        entry = {
            "index": i, "lat": wp.lat, "lon": wp.lon, "lat_bin": wp.cell.lat_bin, "lon_bin": wp.cell.lon_bin,
            "along_km": wp.along_km, "course_deg": wp.course, "sea": sea.as_dict(), "relative_sea": rs.as_dict(),
            "histogram_fallback": bool(plan.fallback[i]) if plan.fallback else False,
            "network_heading": hd, "heading_fallback": fb,
        }
        waypoints.append(entry)
        los = [r[LOFI] for r in runs]
        his = [r[REFERENCE] for r in runs]
        flagged = sorted({f"{rec.meta['fidelity']} r{k}: {rec.error}"
                          for k, pair in enumerate(zip(los, his)) for rec in pair if rec.error})
        if flagged:  # truncated records carry no comparable statistics
            entry["excluded"] = flagged
            continue
        net, std = checkpoints[hd]
        cos = [lstm.correct(net, std, lo) for lo in los]
        stats[LOFI][i], stats[CORRECTED][i], stats[REFERENCE][i] = record_stds(los), record_stds(cos), record_stds(his)
        worst_recs[i] = (los[0], cos[0], his[0])
        entry["std"] = {f: stats[f][i] for f in stats}
    if not worst_recs:
        raise NumericalError("every voyage waypoint left the model validity range")
    seas = {i: plan.seas[i] for i in worst_recs}
    report = compare_report(stats[LOFI], stats[CORRECTED], stats[REFERENCE], seas)
    worst = worst_condition(seas)
    summary = {
        **cfg.stamp(),
        "profile": cfg.profile,
        "route": {"start": list(plan.start), "end": list(plan.end), "distance_km": plan.distance_km,
                  "haversine_km": float(haversine_km(*plan.start, *plan.end)),
                  "snapped_length_km": plan.snapped_length_km, "n_waypoints": len(plan),
                  "speed_kts": plan.speed_kts},
        "waypoints": waypoints,
        "errors_pct": report.errors,
        "median_errors_pct": report.medians,
        "improved_fraction": report.improved_fraction,
        "n_excluded": len(plan) - len(worst_recs),
        "worst_condition": {"index": worst, "sea": seas[worst].as_dict()},
        "kde": {d: {f: {"bandwidth": c.bandwidth, "integral": c.integral(), "n_samples": c.n_samples}
                    for f, c in curves.items()} for d, curves in report.kde.items()},
    }
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_json(out_dir / "voyage_summary.json", summary)
        for d, curves in report.kde.items():
            write_kde_csv(out_dir / f"kde_{d}.csv", curves, cfg)
        write_timeseries_csv(out_dir / "worst_condition_timeseries.csv", worst_recs[worst], cfg)
    summary["_kde"] = report.kde
    summary["_worst_records"] = worst_recs[worst]
    return summary


def write_kde_csv(path, curves: dict, cfg: RunConfig):
    with open(path, "w", newline="") as fh:
        for c in cfg.comments():
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fidelity", "x", "pdf"])
        for f in sorted(curves):
            for x, p in zip(curves[f].grid, curves[f].pdf):
                w.writerow([f, repr(float(x)), repr(float(p))])


def write_timeseries_csv(path, recs, cfg: RunConfig):
    lo, co, hi = recs
    lo = lo.post_ramp()
    hi = hi.post_ramp()
    with open(path, "w", newline="") as fh:
        for c in cfg.comments():
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        cols = ["t"] + [f"{d}_{f}" for d in DOFS for f in (LOFI, CORRECTED, REFERENCE)]
        w.writerow(cols)
        for i in range(len(lo)):
            row = [lo.t[i]]
            for d in DOFS:
                row += [getattr(lo, d)[i], getattr(co, d)[i], getattr(hi, d)[i]]
            w.writerow([f"{v:.9g}" for v in row])
