import json
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from mfship import cli, pipeline
from mfship.errors import DataError, FormatError
from mfship.sim import LOFI, REFERENCE, import_motion_record

TINY = {
    "seed": 7,
    "seaway": {"n_per_system": 15},
    "sim": {"duration": 40.0, "ramp": 10.0},
    "train": {"epochs": 2, "seq_len": 100, "resolution_factor": 2, "batch_size": 1, "hidden": [4]},
    "campaign": {"n_conditions": 4, "headings": [0.0], "realizations": 2, "split": [2, 1, 1]},
    "voyage": {"realizations": 1, "waypoint_stride": 400},
    "weather": {"corridor_half_width": 0, "obs_per_cell": 8},
}


@pytest.fixture(scope="module")
def tiny():
    return pipeline.RunConfig.build(pipeline.DESK, overrides=TINY)


# -- configuration ------------------------------------------------------------------


def test_profiles_validate_against_schema():
    for p in pipeline.PROFILES.values():
        jsonschema.validate(p, pipeline.CONFIG_SCHEMA)
    assert pipeline.RunConfig.build().profile == pipeline.DESK


def test_config_hash():
    a = pipeline.RunConfig.build(pipeline.DESK)
    assert a.hash == pipeline.RunConfig.build(pipeline.DESK).hash
    assert a.hash != pipeline.RunConfig.build(pipeline.DESK, seed=1).hash
    assert a.hash != pipeline.RunConfig.build(pipeline.CANONICAL).hash
    assert a.stamp() == {"config_hash": a.hash, "master_seed": a.seed}


def test_invalid_configs():
    with pytest.raises(FormatError, match="train/epochs"):
        pipeline.RunConfig.build(overrides={"train": {"epochs": 0}})
    with pytest.raises(FormatError):
        pipeline.RunConfig.build(overrides={"sim": {"warp": 1.0}})
    with pytest.raises(FormatError):
        pipeline.RunConfig.build(overrides={"sim": {"duration": 50.0, "ramp": 60.0}})
    with pytest.raises(FormatError):
        pipeline.RunConfig.build("huge")


# -- manifests --------------------------------------------------------------------------


def test_manifest_counts():
    cfg = pipeline.RunConfig.build(pipeline.CANONICAL)
    hist = pipeline.weather_histogram(cfg)
    rows = pipeline.generate_conditions(cfg, hist)
    assert len(rows) == 1200
    assert len({r.id for r in rows}) == 1200
    assert len(pipeline.generate_conditions(cfg, hist, k=1, headings=[0.0])) == 1


def test_manifest_round_trip(tmp_path, tiny):
    rows = pipeline.generate_conditions(tiny, pipeline.weather_histogram(tiny))
    pipeline.write_manifest(tmp_path / "m.csv", rows, tiny)
    assert pipeline.read_manifest(tmp_path / "m.csv") == rows
    text = (tmp_path / "m.csv").read_text()
    assert f"# config_hash={tiny.hash}" in text
    lines = text.splitlines()
    (tmp_path / "d.csv").write_text("\n".join(lines + [lines[-1]]) + "\n")
    with pytest.raises(FormatError, match="duplicate"):
        pipeline.read_manifest(tmp_path / "d.csv")


def test_condition_relative_directions():
    rows = pipeline.make_manifest([pipeline.Condition(3.0, 6.5, 1.5, 11.5, 90.0)], [0.0, 90.0])
    assert [r.id for r in rows] == ["c000-h000", "c000-h090"]
    assert (rows[1].sea.primary.dir, rows[1].sea.secondary.dir) == (90.0, 0.0)


# -- campaign ---------------------------------------------------------------------------


def test_campaign_files_and_resume(tmp_path, tiny):
    rows = pipeline.generate_conditions(tiny, pipeline.weather_histogram(tiny), k=1)
    store = tmp_path / "store"
    res = pipeline.run_campaign(tiny, rows, store, realizations=5)
    assert (res.simulated, res.skipped, res.failed) == (10, 0, [])
    files = sorted(store.glob("*.csv"))
    assert len(files) == 10
    for f in files:
        assert import_motion_record(f).meta["config_hash"] == tiny.hash
    before = {f.name: f.read_bytes() for f in files}
    res = pipeline.run_campaign(tiny, rows, store, realizations=5)
    assert (res.simulated, res.skipped) == (0, 10)
    victim = pipeline.record_path(store, rows[0].id, 3, REFERENCE)
    victim.write_text(victim.read_text()[:200])
    res = pipeline.run_campaign(tiny, rows, store, realizations=5)
    assert (res.simulated, res.skipped) == (1, 9)
    assert {f.name: f.read_bytes() for f in files} == before  # deterministic re-simulation


def test_truncated_records_are_unavailable(tmp_path, tiny):
    rows = pipeline.generate_conditions(tiny, pipeline.weather_histogram(tiny), k=1)
    store = tmp_path / "store"
    pipeline.run_campaign(tiny, rows, store, realizations=2)
    assert pipeline.available_records(store, rows, 2) == {(rows[0].id, 0), (rows[0].id, 1)}
    side = pipeline.record_path(store, rows[0].id, 1, LOFI).with_suffix(".json")
    meta = json.loads(side.read_text())
    side.write_text(json.dumps(dict(meta, error="model-range: state left +/-45 deg at t=30 s")))
    assert pipeline.available_records(store, rows, 2) == {(rows[0].id, 0)}
    with pytest.raises(DataError, match="truncated"):
        pipeline.load_pair(store, rows[0].id, 1)


def test_campaign_pair_shares_seaway(tiny):
    sea = pipeline.make_manifest([pipeline.Condition(2.0, 7.0, 1.0, 11.0, 90.0)], [90.0])[0].sea
    recs = pipeline.simulate_pair_key(tiny, sea, "k", 0, (LOFI, REFERENCE))
    assert pipeline._field(tiny, sea, "k", 0).equals(pipeline._field(tiny, sea, "k", 0))
    # same field, ship positions differ only through the reference heading wander
    np.testing.assert_allclose(recs[LOFI].zeta[:20], recs[REFERENCE].zeta[:20], rtol=0.02, atol=1e-3)
    assert not np.array_equal(recs[LOFI].roll, recs[REFERENCE].roll)


# -- splits -----------------------------------------------------------------------------


def test_split_determinism_and_disjointness(tiny):
    cfg = pipeline.RunConfig.build(pipeline.CANONICAL)
    rows = pipeline.generate_conditions(cfg, pipeline.weather_histogram(cfg))
    a = pipeline.split_records(cfg, rows, 30.0)
    assert a == pipeline.split_records(cfg, rows, 30.0)
    assert [len(a[k]) for k in ("train", "val", "test")] == [50, 25, 25]
    assert [len(a[k + "_conditions"]) for k in ("train", "val", "test")] == [50, 25, 25]
    pools = [set(a[k + "_conditions"]) for k in ("train", "val", "test")]
    assert not (pools[0] & pools[1] or pools[0] & pools[2] or pools[1] & pools[2])
    assert all(rid.endswith("h030") for rid in pools[0])
    assert len(a["test_all"]) == 25 * 5
    assert a != pipeline.split_records(cfg, rows, 60.0) and a["train"] != pipeline.split_records(
        pipeline.RunConfig.build(pipeline.CANONICAL, seed=1), rows, 30.0)["train"]


def test_split_insufficient(tiny):
    rows = pipeline.generate_conditions(tiny, pipeline.weather_histogram(tiny))
    with pytest.raises(pipeline.InsufficientRecords):
        pipeline.split_records(tiny, rows, 0.0, available=set())
    with pytest.raises(pipeline.InsufficientRecords):
        pipeline.split_records(tiny, rows, 45.0)


def test_heading_bins_and_fallback():
    cks = {0.0: "a", 90.0: "b"}
    assert pipeline.heading_bin(44.0) == 30.0
    assert pipeline.heading_bin(350.0) == 0.0
    assert pipeline.pick_checkpoint(cks, 355.0, False) == (0.0, False)
    assert pipeline.pick_checkpoint(cks, 70.0, True) == (90.0, True)
    with pytest.raises(pipeline.MissingCheckpoint):
        pipeline.pick_checkpoint(cks, 70.0, False)


# -- command line -------------------------------------------------------------------------


def test_cli_usage_and_data_errors(tmp_path, capsys):
    assert cli.main([]) == cli.EXIT_USAGE
    assert cli.main(["frobnicate"]) == cli.EXIT_USAGE
    assert cli.main(["--jobs", "0", "schema"]) == cli.EXIT_USAGE
    assert cli.main(["--seed", "-1", "schema"]) == cli.EXIT_USAGE
    assert cli.main(["simulate", "--manifest", str(tmp_path / "none.csv"), "--store", str(tmp_path)]) \
        == cli.EXIT_DATA
    (tmp_path / "bad.json").write_text('{"train": {"epochs": "many"}}')
    assert cli.main(["--config", str(tmp_path / "bad.json"), "schema"]) == cli.EXIT_DATA
    assert "data error" in capsys.readouterr().err


def test_cli_schema(capsys):
    assert cli.main(["schema"]) == cli.EXIT_OK
    assert json.loads(capsys.readouterr().out) == pipeline.CONFIG_SCHEMA
    published = Path(__file__).resolve().parents[1] / "docs" / "config_schema.json"
    assert json.loads(published.read_text()) == pipeline.CONFIG_SCHEMA


def test_cli_numerical_failure(tmp_path, tiny, monkeypatch, capsys):
    cfg_path = tmp_path / "tiny.json"
    cfg_path.write_text(json.dumps(TINY))
    pipeline.write_manifest(tmp_path / "m.csv", [], tiny)
    monkeypatch.setattr(pipeline, "run_campaign", lambda *a, **k: pipeline.CampaignResult(failed=["c000 r0: x"]))
    assert cli.main(["--config", str(cfg_path), "simulate", "--manifest", str(tmp_path / "m.csv"),
                     "--store", str(tmp_path / "s")]) == cli.EXIT_NUMERICAL
    assert "numerical error" in capsys.readouterr().err


def test_cli_end_to_end(tmp_path, tiny, capsys):
    cfg_path = tmp_path / "tiny.json"
    cfg_path.write_text(json.dumps(TINY))
    base = ["--config", str(cfg_path)]
    m, store, ck = tmp_path / "m.csv", tmp_path / "store", tmp_path / "ck"

    def run(*args):
        assert cli.main(base + list(args)) == cli.EXIT_OK

    run("synth-weather", "--out", str(tmp_path / "w.csv"))
    run("gen-conditions", "--histogram", str(tmp_path / "w.csv"), "--out", str(m))
    run("simulate", "--manifest", str(m), "--store", str(store))
    run("train", "--manifest", str(m), "--store", str(store), "--out", str(ck))
    lo = next(store.glob(f"*_r0_{LOFI}.csv"))
    run("correct", "--checkpoint", str(ck / "lstm_h000.json"), "--input", str(lo), "--output",
        str(tmp_path / "corr.csv"))
    run("report", "--manifest", str(m), "--store", str(store), "--checkpoints", str(ck), "--out",
        str(tmp_path / "rep"))
    run("voyage", "--checkpoints", str(ck), "--out", str(tmp_path / "voy"))
    capsys.readouterr()

    summary = json.loads((tmp_path / "voy" / "voyage_summary.json").read_text())
    assert summary["config_hash"] == tiny.hash and summary["master_seed"] == 7
    assert json.loads((tmp_path / "rep" / "test_report.json").read_text())["config_hash"] == tiny.hash
    assert import_motion_record(tmp_path / "corr.csv").meta["config_hash"] == tiny.hash
    assert json.loads((ck / "lstm_h000.json").read_text())["meta"]["config_hash"] == tiny.hash
    for p in [tmp_path / "w.csv", m, ck / "loss_h000.csv", *(tmp_path / "voy").glob("*.csv"),
              *(tmp_path / "rep").glob("*.csv")]:
        assert f"# config_hash={tiny.hash}" in p.read_text(), p

    # resumed simulate is a no-op; voyage re-run is byte-identical
    run("simulate", "--manifest", str(m), "--store", str(store))
    assert "simulated 0, skipped 16" in capsys.readouterr().out
    run("voyage", "--checkpoints", str(ck), "--out", str(tmp_path / "voy2"))
    for name in ("voyage_summary.json", "kde_roll.csv", "worst_condition_timeseries.csv"):
        assert (tmp_path / "voy" / name).read_bytes() == (tmp_path / "voy2" / name).read_bytes()
