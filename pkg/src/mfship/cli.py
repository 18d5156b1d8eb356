"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import lstm, pipeline
from .errors import DataError, NumericalError
from .sim import LOFI, REFERENCE, import_motion_record
from .voyage import DOFS, compare_report

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("mfship")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mfship", description="Multi-fidelity ship-motion pipeline (simulate, train, correct, voyage).")
    p.add_argument("--config", type=Path, help="JSON run configuration (overrides the profile defaults)")
    p.add_argument("--seed", type=_seed, help="master seed (u64)")
    p.add_argument("--profile", choices=[pipeline.CANONICAL, pipeline.DESK], help="scale profile (default desk)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for simulation campaigns")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth-weather", help="write a synthetic weather histogram along the configured route")
    s.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("gen-conditions", help="condition x heading manifest from a weather histogram")
    s.add_argument("--histogram", type=Path, help="histogram CSV (default: synthetic)")
    s.add_argument("--k", type=int, help="number of conditions (default from profile)")
    s.add_argument("--headings", type=float, nargs="+", help="relative headings, deg (default from profile)")
    s.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("simulate", help="run the simulation campaign for a manifest (resumable)")
    s.add_argument("--manifest", type=Path, required=True)
    s.add_argument("--store", type=Path, required=True)
    s.add_argument("--fidelity", choices=[LOFI, REFERENCE, "both"], default="both")
    s.add_argument("--realizations", type=int)

    s = sub.add_parser("train", help="train one network per heading")
    s.add_argument("--manifest", type=Path, required=True)
    s.add_argument("--store", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True, help="checkpoint directory")
    s.add_argument("--heading", type=float, nargs="+", help="headings to train (default: all in profile)")

    s = sub.add_parser("correct", help="apply a trained network to a low-fidelity record")
    s.add_argument("--checkpoint", type=Path, required=True)
    s.add_argument("--input", type=Path, required=True)
    s.add_argument("--output", type=Path, required=True)

    s = sub.add_parser("voyage", help="evaluate the configured great-circle voyage")
    s.add_argument("--histogram", type=Path, help="histogram CSV (default: synthetic)")
    s.add_argument("--checkpoints", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("report", help="held-out test-condition error tables and KDE curves")
    s.add_argument("--manifest", type=Path, required=True)
    s.add_argument("--store", type=Path, required=True)
    s.add_argument("--checkpoints", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)

    sub.add_parser("schema", help="print the run-configuration JSON schema")
    return p


def _cfg(args) -> pipeline.RunConfig:
    return pipeline.RunConfig.load(args.config, args.profile, args.seed)


def cmd_synth_weather(args, cfg):
    h = pipeline.weather_histogram(cfg)
    h.write_csv(args.out, comments=cfg.comments())
    print(f"wrote {len(h)} histogram rows over {len(h.cells)} cells to {args.out}")


def cmd_gen_conditions(args, cfg):
    h = pipeline.weather_histogram(cfg, args.histogram)
    rows = pipeline.generate_conditions(cfg, h, args.k, args.headings)
    pipeline.write_manifest(args.out, rows, cfg)
    print(f"wrote {len(rows)} manifest rows to {args.out}")


def cmd_simulate(args, cfg):
    rows = pipeline.read_manifest(args.manifest)
    fid = (LOFI, REFERENCE) if args.fidelity == "both" else (args.fidelity,)
    res = pipeline.run_campaign(cfg, rows, args.store, fid, args.realizations, args.jobs)
    print(f"simulated {res.simulated}, skipped {res.skipped}, failed {len(res.failed)}")
    if res.failed:
        raise NumericalError(f"{len(res.failed)} run(s) failed: " + "; ".join(res.failed[:5]))


def cmd_train(args, cfg):
    rows = pipeline.read_manifest(args.manifest)
    headings = args.heading or cfg.campaign["headings"]
    for h in headings:
        t = pipeline.train_heading(cfg, rows, args.store, h, args.out,
                                   log_fn=lambda e, a, b: log.info("h%g epoch %d train %.4g val %.4g", h, e, a, b))
        r = t.result
        print(f"heading {h:g}: val MSE {r.initial_val_loss:.4g} -> {r.val_loss[-1]:.4g}; wrote {t.checkpoint}")


def cmd_correct(args, cfg):
    net, std, _, meta = lstm.load_checkpoint(args.checkpoint)
    if std is None:
        raise DataError(f"{args.checkpoint}: checkpoint lacks standardizer statistics")
    rec = import_motion_record(args.input)
    out = lstm.correct(net, std, rec)
    out.meta.update(cfg.stamp(), checkpoint_hash=meta.get("config_hash"))
    out.write_csv(args.output, comments=cfg.comments())
    print(f"wrote {len(out)} corrected samples to {args.output}")


def cmd_voyage(args, cfg):
    h = pipeline.weather_histogram(cfg, args.histogram)
    cks = pipeline.load_checkpoints(args.checkpoints)
    if not cks:
        raise pipeline.MissingCheckpoint(f"no checkpoints found in {args.checkpoints}")
    s = pipeline.run_voyage(cfg, h, cks, args.out, jobs=args.jobs)
    med = s["median_errors_pct"]
    for d in DOFS:
        print(f"{d}: median abs error lofi {med[d]['lofi']:.1f}% corrected {med[d]['corrected']:.1f}%")
    print(f"wrote {args.out / 'voyage_summary.json'}")


def cmd_report(args, cfg):
    rows = pipeline.read_manifest(args.manifest)
    cks = pipeline.load_checkpoints(args.checkpoints)
    n_real = cfg.campaign["realizations"]
    avail = pipeline.available_records(args.store, rows, n_real)
    lo, co, hi, seas = {}, {}, {}, {}
    by_id = {r.id: r for r in rows}
    for h in sorted(cks):
        split = pipeline.split_records(cfg, rows, h, avail)
        net, std = cks[h]
        a, b, c, _ = pipeline.evaluate_heading(args.store, split["test_all"], net, std)
        lo.update(a)
        co.update(b)
        hi.update(c)
        seas.update({k: by_id[k].sea for k in a})
    rep = compare_report(lo, co, hi, seas)
    args.out.mkdir(parents=True, exist_ok=True)
    doc = {**cfg.stamp(), "conditions": rep.keys, "std": {"lofi": lo, "lstm-corrected": co, "ref": hi},
           "errors_pct": rep.errors, "median_errors_pct": rep.medians, "improved_fraction": rep.improved_fraction,
           "worst_condition": rep.worst}
    pipeline.write_json(args.out / "test_report.json", doc)
    for d, curves in rep.kde.items():
        pipeline.write_kde_csv(args.out / f"kde_{d}.csv", curves, cfg)
    for d in DOFS:
        m = rep.medians[d]
        print(f"{d}: improved in {rep.improved_fraction[d]:.0%} of {len(rep.keys)} conditions; "
              f"median abs error lofi {m['lofi']:.1f}% corrected {m['corrected']:.1f}%")


def cmd_schema(args, cfg):
    print(json.dumps(pipeline.CONFIG_SCHEMA, indent=2, sort_keys=True))


COMMANDS = {
    "synth-weather": cmd_synth_weather, "gen-conditions": cmd_gen_conditions, "simulate": cmd_simulate,
    "train": cmd_train, "correct": cmd_correct, "voyage": cmd_voyage, "report": cmd_report, "schema": cmd_schema,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.jobs < 1:
        print("mfship: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = _cfg(args)
        COMMANDS[args.command](args, cfg)
    except (DataError, OSError) as exc:
        print(f"mfship: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"mfship: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
