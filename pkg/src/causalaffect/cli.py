"""Command-line entry point: ``causalaffect <subcommand> ...``.

Failures print one JSON line ``{"error": <kind>, "message": <text>}`` on
stderr and exit with status 1.  The default output root for ``grid`` is
taken from ``$CAUSALAFFECT_RUNS`` (falls back to ``./runs``).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import abfs, experiments, regressor, synthgen
from .catalog import FeatureCatalog
from .dataset import (
    TARGETS,
    DomainStore,
    NAN_POLICIES,
    StandardizationStats,
    apply_standardizer,
    collate,
    fit_standardizer,
    ingest,
)
from .gradsuite import TOLERANCE, run_suite
from .profiles import PROFILES, apply_overrides, get_profile

RUNS_ENV = "CAUSALAFFECT_RUNS"


class CliError(Exception):
    """Raised for user-facing failures; ``kind`` goes into the error line."""

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


def _config(args):
    return apply_overrides(get_profile(args.profile), args.set or [])


def _samples(store: DomainStore, domain: str | None):
    if domain is None:
        return list(store.samples)
    if domain not in store.domains:
        raise CliError("UnknownDomain", f"domain {domain!r} not in store (have {store.domains})")
    return store.by_domain(domain)


def _add_profile_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--profile", choices=sorted(PROFILES), default="desk", help="hyperparameter profile (default: desk)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config value, e.g. tcn.epochs=100 (repeatable)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")


# subcommands ------------------------------------------------------------------


def cmd_synth(args) -> int:
    if args.spec:
        spec = synthgen.SyntheticSpec.from_json(Path(args.spec).read_text())
    else:
        spec = synthgen.PRESETS[args.preset]
    if args.seed is not None:
        spec = synthgen.SyntheticSpec(**{**spec.__dict__, "seed": args.seed})
    manifest = synthgen.describe(spec, args.out)
    print(manifest)
    return 0


def cmd_ingest_check(args) -> int:
    try:
        store = ingest(args.manifest, nan_policy=args.nan_policy)
    except (ValueError, OSError) as exc:
        print(json.dumps({"valid": False, "error": str(exc)}))
        return 1
    labelled = [s for s in store.samples if s.labels is not None]
    report = {
        "valid": True,
        "manifest": str(args.manifest),
        "n_samples": len(store),
        "n_features": len(store.catalog),
        "domains": {d: len(store.by_domain(d)) for d in store.domains},
        "n_labelled": len(labelled),
        "frames": {"min": min(s.length for s in store.samples), "max": max(s.length for s in store.samples)} if len(store) else {},
        "modalities": {m: sum(e.modality == m for e in store.catalog.entries) for m in sorted({e.modality for e in store.catalog.entries})},
    }
    print(json.dumps(report, indent=1))
    return 0


def cmd_abfs(args) -> int:
    config = _config(args)
    store = ingest(args.manifest)
    samples = _samples(store, args.domain)
    batch = collate(samples, max_length=config.max_length)
    batch = apply_standardizer(batch, fit_standardizer(batch))
    sel = abfs.run_abfs(batch, replace(config.tcn, seed=args.seed), store.catalog, config.threshold)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = args.domain or experiments.ALL
    csv_path, txt_path = abfs.write_selection_report(sel, name, out / "abfs_scores.csv")
    doc = {"source_domain": name, "config": abfs.config_dict(replace(config.tcn, seed=args.seed)), **abfs.selection_to_dict(sel)}
    (out / "selection.json").write_text(json.dumps(doc, indent=1))
    print(txt_path.read_text(), end="")
    return 0


def _load_selection(path: str | None, width: int) -> list[int]:
    if path is None:
        return list(range(width))
    doc = json.loads(Path(path).read_text())
    idx = doc["union"] if isinstance(doc, dict) else doc
    return [int(j) for j in idx]


def cmd_train(args) -> int:
    config = _config(args)
    store = ingest(args.manifest)
    samples = _samples(store, args.domain)
    if any(s.labels is None for s in samples):
        raise CliError("MissingLabels", "training needs labels for every sample")
    batch = collate(samples, max_length=config.max_length)
    stats = fit_standardizer(batch)
    batch = apply_standardizer(batch, stats)
    idx = _load_selection(args.selection, batch.width)
    model = regressor.train(abfs.reshape_batch(batch, idx), replace(config.lstm, seed=args.seed), idx)
    model.source_width = batch.width
    model.standardizer = {"mean": stats.mean.tolist(), "std": stats.std.tolist()}
    path = model.save(args.out)
    if args.history:
        regressor.write_history(model, args.history)
    print(json.dumps({"checkpoint": str(path), "best_epoch": model.best_epoch, "input_width": model.input_width}))
    return 0


def cmd_predict(args) -> int:
    model = regressor.TrainedRegressor.load(args.checkpoint)
    store = ingest(args.manifest)
    samples = _samples(store, args.domain)
    batch = collate(samples, max_length=args.max_length)
    if model.standardizer is not None and batch.width == len(model.standardizer["mean"]):
        stats = StandardizationStats(np.asarray(model.standardizer["mean"]), np.asarray(model.standardizer["std"]))
        batch = apply_standardizer(batch, stats)
    if model.selection is not None and batch.width == model.source_width:
        batch = abfs.reshape_batch(batch, model.selection)
    try:
        pred, mask = regressor.predict(model, batch)
    except ValueError as exc:
        raise CliError("WidthMismatch", str(exc)) from exc
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "frame", *TARGETS])
        for i, sid in enumerate(batch.sample_ids):
            for t in np.flatnonzero(mask[i]):
                w.writerow([sid, int(t), repr(float(pred[i, t, 0])), repr(float(pred[i, t, 1]))])
    print(out)
    return 0


def _grid_store(args) -> tuple[DomainStore, str]:
    if args.manifest:
        return ingest(args.manifest), str(args.manifest)
    if args.spec:
        spec = synthgen.SyntheticSpec.from_json(Path(args.spec).read_text())
        return synthgen.generate(spec)[0], str(args.spec)
    spec = synthgen.PRESETS[args.synth]
    return synthgen.generate(spec)[0], f"synth:{args.synth}"


def cmd_grid(args) -> int:
    config = _config(args)
    store, origin = _grid_store(args)
    run_id = args.run_id or time.strftime("%Y%m%d-%H%M%S")
    run_dir = Path(args.out_root or os.environ.get(RUNS_ENV, "runs")) / run_id
    if run_dir.exists() and not args.resume and any(run_dir.glob("cells/*.json")):
        raise CliError("RunExists", f"{run_dir} already holds results; pass --resume or a new --run-id")
    matrix = experiments.run_grid(store, config, run_dir, seed=args.seed, jobs=args.jobs, resume=args.resume, profile=args.profile)
    cfg = json.loads((run_dir / "config.json").read_text())
    cfg["data"] = origin
    cfg["jobs"] = args.jobs
    (run_dir / "config.json").write_text(json.dumps(cfg, indent=1, sort_keys=True))
    print((run_dir / "matrix.txt").read_text(), end="")
    print(f"run directory: {run_dir}")
    return 0 if all(c.status != "failed" for c in matrix.cells.values()) else 1


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    if not (run_dir / "cells").is_dir():
        raise CliError("NotARun", f"{run_dir} has no cells/ directory")
    matrix = experiments.load_matrix(run_dir)
    catalog = FeatureCatalog.from_csv(run_dir / "catalog.csv") if (run_dir / "catalog.csv").exists() else None
    experiments.emit_matrix(matrix, run_dir)
    experiments.emit_feature_report(matrix, run_dir / "features.csv", catalog)
    print((run_dir / "matrix.txt").read_text(), end="")
    return 0


def cmd_gradcheck(args) -> int:
    seeds = tuple(range(args.seeds))
    worst = run_suite(seeds)
    ok = True
    for name, err in worst.items():
        passed = err < TOLERANCE
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name:<32} max rel err {err:.2e}")
    print(f"{'all' if ok else 'not all'} checks below {TOLERANCE:g}")
    return 0 if ok else 1


# parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="causalaffect", description="Attention-based feature selection and cross-domain affect regression.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset in ingestible form")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--spec", help="SyntheticSpec JSON file")
    src.add_argument("--preset", choices=sorted(synthgen.PRESETS), default="default3", help="named generator preset (default: default3)")
    p.add_argument("--seed", type=int, default=None, help="override the generator seed")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest-check", help="validate a manifest; exit 0 if it ingests cleanly")
    p.add_argument("manifest")
    p.add_argument("--nan-policy", choices=NAN_POLICIES, default="drop_rows", help="handling of non-finite feature frames")
    p.set_defaults(func=cmd_ingest_check)

    p = sub.add_parser("abfs", help="run feature selection on one domain (or all samples)")
    p.add_argument("manifest")
    p.add_argument("--domain", help="source domain (default: every sample)")
    p.add_argument("--out", required=True, help="directory for abfs_scores.csv/.txt and selection.json")
    _add_profile_args(p)
    p.set_defaults(func=cmd_abfs)

    p = sub.add_parser("train", help="train the regressor on selected features")
    p.add_argument("manifest")
    p.add_argument("--selection", help="selection.json from `abfs` (default: all features)")
    p.add_argument("--domain", help="training domain (default: every sample)")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--history", help="optional CSV for the per-epoch losses")
    _add_profile_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="per-frame predictions from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("manifest")
    p.add_argument("--domain", help="restrict to one domain")
    p.add_argument("--out", required=True, help="predictions CSV path")
    p.add_argument("--max-length", type=int, default=1000, help="pad/truncate length (default: 1000)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("grid", help="run the full intra/inter/multi experiment grid")
    data = p.add_mutually_exclusive_group(required=True)
    data.add_argument("--manifest", help="ingestible dataset manifest")
    data.add_argument("--synth", choices=sorted(synthgen.PRESETS), help="generate a synthetic preset in memory")
    data.add_argument("--spec", help="SyntheticSpec JSON file")
    _add_profile_args(p)
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes (default: 1)")
    p.add_argument("--resume", action="store_true", help="skip cells already written to the run directory")
    p.add_argument("--run-id", help="run directory name (default: timestamp)")
    p.add_argument("--out-root", help=f"parent of run directories (default: ${RUNS_ENV} or ./runs)")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("report", help="re-render matrix and feature reports from a run directory")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gradcheck", help="finite-difference check of every op and both networks")
    p.add_argument("--seeds", type=int, default=5, help="number of random seeds (default: 5)")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore")
    try:
        return args.func(args)
    except CliError as exc:
        kind, msg = exc.kind, str(exc)
    except (ValueError, KeyError, IndexError, OSError, FloatingPointError, RuntimeError) as exc:
        kind, msg = type(exc).__name__, str(exc)
    print(json.dumps({"error": kind, "message": " ".join(msg.split())}), file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
