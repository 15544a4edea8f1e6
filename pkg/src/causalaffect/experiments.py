"""Intracultural / intercultural / multicultural experiment grid.

For ``d`` domains the grid holds ``d`` intra cells, ``d * (d - 1)`` inter
cells and one multi cell.  Every cell runs k-fold cross-validation; inside
each fold the pipeline is

    standardize (train stats) -> ABFS on train -> reshape -> train LSTM -> predict -> metrics

Intra and multi cells test on the held-out fold; inter cells train on the
same source folds as the source's intra cell and test on the whole target
domain.  Because fold models depend only on the source folds, one fitted
model per ``(source, fold)`` serves the intra cell and every inter cell of
that source.

Run directory layout::

    <run_dir>/config.json
    <run_dir>/cells/<source>__<target>.json
    <run_dir>/models/<source>__fold<i>.json
    <run_dir>/matrix.csv, matrix.txt, features.csv, features_modality.csv, figdata.csv
"""
from __future__ import annotations

import csv
import json
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import abfs as abfs_mod
from . import regressor
from .dataset import DomainStore, FrameSeriesSample, apply_standardizer, collate, fit_standardizer, split_folds
from .metrics import MetricReport, aggregate, evaluate
from .profiles import PipelineConfig

log = logging.getLogger(__name__)

ALL = "ALL"
MODES = ("intra", "inter", "multi")


@dataclass(frozen=True)
class ExperimentPlan:
    mode: str
    source: str
    target: str
    k: int = 5
    seed: int = 0
    profile: str = "desk"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.mode == "inter" and self.source == self.target:
            raise ValueError(f"inter plan needs different source and target, got {self.source!r} twice")
        if self.mode == "intra" and self.source != self.target:
            raise ValueError("intra plan needs source == target")
        if self.mode == "multi" and not (self.source == self.target == ALL):
            raise ValueError("multi plan needs source = target = ALL")

    @property
    def key(self) -> str:
        return f"{self.source}__{self.target}"


@dataclass
class FoldResult:
    fold: int
    train_ids: list[str]
    test_ids: list[str]
    report: MetricReport | None = None
    selection: dict | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "fold": self.fold,
            "train_ids": self.train_ids,
            "test_ids": self.test_ids,
            "metrics": self.report.to_dict() if self.report else None,
            "selection": self.selection,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FoldResult":
        return cls(d["fold"], d["train_ids"], d["test_ids"], MetricReport.from_dict(d["metrics"]) if d.get("metrics") else None, d.get("selection"), d.get("error"))


@dataclass
class ExperimentResult:
    plan: ExperimentPlan
    folds: list[FoldResult] = field(default_factory=list)

    @property
    def ok_folds(self) -> list[FoldResult]:
        return [f for f in self.folds if f.report is not None]

    @property
    def status(self) -> str:
        if not self.folds or not self.ok_folds:
            return "failed"
        return "complete" if len(self.ok_folds) == len(self.folds) else "incomplete"

    @property
    def summary(self) -> MetricReport | None:
        ok = self.ok_folds
        return aggregate([f.report for f in ok]) if ok else None

    def to_dict(self) -> dict:
        s = self.summary
        return {
            "plan": self.plan.__dict__,
            "status": self.status,
            "summary": s.to_dict() if s else None,
            "folds": [f.to_dict() for f in self.folds],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentResult":
        return cls(ExperimentPlan(**d["plan"]), [FoldResult.from_dict(f) for f in d["folds"]])


@dataclass
class FoldModel:
    stats: object
    selection: abfs_mod.AbfsSelection
    model: regressor.TrainedRegressor


# grid -------------------------------------------------------------------------


def build_grid(domains: Sequence[str], seed: int = 0, k: int = 5, profile: str = "desk") -> list[ExperimentPlan]:
    """Intra and inter plans source-major in domain order, then the multi plan."""
    domains = list(domains)
    if not domains:
        raise ValueError("no domains")
    if len(domains) == 1:
        warnings.warn("only one domain: the multicultural cell duplicates the intracultural one", stacklevel=2)
    plans = []
    for s in domains:
        for t in domains:
            plans.append(ExperimentPlan("intra" if s == t else "inter", s, t, k, seed, profile))
    plans.append(ExperimentPlan("multi", ALL, ALL, k, seed, profile))
    return plans


def fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


def source_pool(store: DomainStore, source: str) -> list[FrameSeriesSample]:
    pool = list(store.samples) if source == ALL else store.by_domain(source)
    if not pool:
        raise ValueError(f"domain {source!r} has no samples")
    return pool


def _collate(samples: Sequence[FrameSeriesSample], config: PipelineConfig):
    if config.pad_to is None:
        return collate(samples, max_length=config.max_length)
    return collate(samples, length=config.pad_to)


def fit_fold(train: Sequence[FrameSeriesSample], config: PipelineConfig, seed: int, catalog=None) -> FoldModel:
    """Standardize, select features and train the regressor on training samples only."""
    batch = _collate(train, config)
    stats = fit_standardizer(batch)
    batch = apply_standardizer(batch, stats)
    if config.selection_override is not None:
        idx = sorted(config.selection_override)
        selection = abfs_mod.AbfsSelection(idx, idx, idx, catalog, config.threshold)
    else:
        selection = abfs_mod.run_abfs(batch, replace(config.tcn, seed=seed), catalog, config.threshold)
    reshaped = abfs_mod.reshape_batch(batch, selection)
    model = regressor.train(reshaped, replace(config.lstm, seed=seed), selection.union)
    model.source_width = batch.width
    model.standardizer = {"mean": stats.mean.tolist(), "std": stats.std.tolist()}
    return FoldModel(stats, selection, model)


def evaluate_fold(fm: FoldModel, test: Sequence[FrameSeriesSample], config: PipelineConfig) -> MetricReport:
    batch = _collate(test, config)
    batch = abfs_mod.reshape_batch(apply_standardizer(batch, fm.stats), fm.selection)
    pred, mask = regressor.predict(fm.model, batch)
    return evaluate(pred, batch.labels, mask)


def _source_folds(store: DomainStore, source: str, k: int, seed: int):
    pool = source_pool(store, source)
    return pool, split_folds(pool, k, seed)


class FoldCache:
    """Fold models keyed by ``(source, fold)``; failures are cached as messages."""

    def __init__(self, store: DomainStore, config: PipelineConfig, model_dir: Path | None = None):
        self.store, self.config, self.model_dir = store, config, model_dir
        self._models: dict[tuple[str, int], FoldModel | str] = {}

    def get(self, source: str, fold: int, train_ids: list[str], seed: int) -> FoldModel | str:
        key = (source, fold)
        if key not in self._models:
            train = [self.store.get(i) for i in train_ids]
            try:
                fm = fit_fold(train, self.config, fold_seed(seed, fold), self.store.catalog)
            except (abfs_mod.TrainingDivergedError, FloatingPointError, ValueError) as exc:
                log.warning("fold %d of %s failed: %s", fold, source, exc)
                fm = f"{type(exc).__name__}: {exc}"
            if self.model_dir is not None and not isinstance(fm, str):
                fm.model.save(self.model_dir / f"{source}__fold{fold}.json")
            self._models[key] = fm
        return self._models[key]


def run_plan(
    plan: ExperimentPlan,
    store: DomainStore,
    config: PipelineConfig,
    cache: FoldCache | None = None,
    folds: Sequence[int] | None = None,
) -> ExperimentResult:
    """Cross-validate one grid cell (optionally only the listed fold numbers)."""
    if plan.mode != "multi":
        for d in {plan.source, plan.target}:
            if not store.by_domain(d):
                raise ValueError(f"domain {d!r} has no samples")
    cache = cache or FoldCache(store, config)
    _, splits = _source_folds(store, plan.source, plan.k, plan.seed)
    target_all = store.by_domain(plan.target) if plan.mode == "inter" else None
    result = ExperimentResult(plan)
    for i, (train_ids, test_ids) in enumerate(splits):
        if folds is not None and i not in folds:
            continue
        if plan.mode == "inter":
            test_ids = [s.sample_id for s in target_all]
        fr = FoldResult(i, list(train_ids), list(test_ids))
        fm = cache.get(plan.source, i, train_ids, plan.seed)
        if isinstance(fm, str):
            fr.error = fm
        else:
            fr.selection = abfs_mod.selection_to_dict(fm.selection)
            try:
                fr.report = evaluate_fold(fm, [store.get(t) for t in test_ids], config)
            except ValueError as exc:
                fr.error = f"{type(exc).__name__}: {exc}"
        result.folds.append(fr)
    return result


@dataclass
class ResultsMatrix:
    domains: list[str]
    cells: dict[str, ExperimentResult]

    def cell(self, source: str, target: str) -> ExperimentResult | None:
        return self.cells.get(f"{source}__{target}")

    def plans(self) -> list[ExperimentPlan]:
        return [c.plan for c in self.cells.values()]


def _run_group(store: DomainStore, config: PipelineConfig, plans: list[ExperimentPlan], model_dir: str | None) -> list[dict]:
    cache = FoldCache(store, config, Path(model_dir) if model_dir else None)
    return [run_plan(p, store, config, cache).to_dict() for p in plans]


def run_grid(
    store: DomainStore,
    config: PipelineConfig,
    run_dir: str | Path | None = None,
    seed: int = 0,
    jobs: int = 1,
    resume: bool = False,
    profile: str = "desk",
) -> ResultsMatrix:
    """Run every grid cell; cell JSON files are written as soon as a source group finishes."""
    domains = store.domains
    plans = build_grid(domains, seed, config.k, profile)
    run_dir = Path(run_dir) if run_dir else None
    cell_dir = model_dir = None
    if run_dir is not None:
        cell_dir, model_dir = run_dir / "cells", run_dir / "models"
        cell_dir.mkdir(parents=True, exist_ok=True)
        model_dir.mkdir(parents=True, exist_ok=True)
        store.catalog.to_csv(run_dir / "catalog.csv")
        (run_dir / "config.json").write_text(json.dumps({"seed": seed, "profile": profile, "config": config.to_dict()}, indent=1, sort_keys=True))

    done: dict[str, ExperimentResult] = {}
    if resume and cell_dir is not None:
        for p in plans:
            f = cell_dir / f"{p.key}.json"
            if f.exists():
                done[p.key] = ExperimentResult.from_dict(json.loads(f.read_text()))

    groups: dict[str, list[ExperimentPlan]] = {}
    for p in plans:
        if p.key not in done:
            groups.setdefault(p.source, []).append(p)

    def record(results: list[dict]) -> None:
        for d in results:
            res = ExperimentResult.from_dict(d)
            done[res.plan.key] = res
            if cell_dir is not None:
                (cell_dir / f"{res.plan.key}.json").write_text(json.dumps(d, indent=1, sort_keys=True))

    mdir = str(model_dir) if model_dir else None
    if jobs <= 1:
        for g in groups.values():
            record(_run_group(store, config, g, mdir))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_group, store, config, g, mdir) for g in groups.values()]
            for fut in futures:
                record(fut.result())

    matrix = ResultsMatrix(domains, {p.key: done[p.key] for p in plans})
    if run_dir is not None:
        emit_matrix(matrix, run_dir)
        emit_feature_report(matrix, run_dir / "features.csv", store.catalog)
    return matrix


def load_matrix(run_dir: str | Path) -> ResultsMatrix:
    cells = {}
    domains: list[str] = []
    for f in sorted(Path(run_dir, "cells").glob("*.json")):
        res = ExperimentResult.from_dict(json.loads(f.read_text()))
        cells[res.plan.key] = res
    for res in cells.values():
        if res.plan.mode == "intra" and res.plan.source not in domains:
            domains.append(res.plan.source)
    # restore grid order
    order = {p.key: i for i, p in enumerate(build_grid(domains or ["_"]))} if domains else {}
    cells = dict(sorted(cells.items(), key=lambda kv: order.get(kv[0], len(order))))
    return ResultsMatrix(domains, cells)


# reports ----------------------------------------------------------------------

MATRIX_COLUMNS = ("source", "target", "mode", "rmse_mean", "rmse_std", "ccc_mean", "ccc_std", "status")
FAILED_CELL = "— / —"


def format_cell(rmse: float, ccc: float) -> str:
    return f"{rmse:.2f} / {ccc:.2f}"


def _cell_text(res: ExperimentResult | None) -> str:
    if res is None:
        return ""
    s = res.summary
    if s is None:
        return FAILED_CELL
    return format_cell(s.rmse["combined"], s.ccc["combined"]) + ("*" if res.status == "incomplete" else "")


def render_table(matrix: ResultsMatrix) -> str:
    """Source rows x target columns, plus the multicultural cell under ``All``."""
    cols = matrix.domains + [ALL]
    rows = []
    for s in matrix.domains + [ALL]:
        rows.append([s] + [_cell_text(matrix.cell(s, t)) for t in cols])
    header = ["Source \\ Target"] + cols
    widths = [max(len(r[i]) for r in rows + [header]) for i in range(len(header))]
    fmt = lambda r: " | ".join(v.ljust(w) for v, w in zip(r, widths))
    lines = ["RMSE / CCC (mean over folds; valence and arousal averaged)", fmt(header), "-+-".join("-" * w for w in widths)]
    lines += [fmt(r) for r in rows]
    notes = []
    if any(_cell_text(c) == FAILED_CELL for c in matrix.cells.values()):
        notes.append(f"{FAILED_CELL}: every fold of the cell failed (see cells/*.json for errors).")
    if any(c.status == "incomplete" for c in matrix.cells.values()):
        notes.append("*: some folds failed; mean over the remaining folds.")
    return "\n".join(lines + [""] + notes) + "\n"


def emit_matrix(matrix: ResultsMatrix, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "matrix.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MATRIX_COLUMNS)
        for res in matrix.cells.values():
            s = res.summary
            vals = ["", "", "", ""] if s is None else [repr(s.rmse["combined"]), repr(s.rmse_std["combined"]), repr(s.ccc["combined"]), repr(s.ccc_std["combined"])]
            w.writerow([res.plan.source, res.plan.target, res.plan.mode, *vals, res.status])
    txt_path = out / "matrix.txt"
    txt_path.write_text(render_table(matrix))
    fig_path = out / "figdata.csv"
    with open(fig_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["target", "source", "kind", "rmse_mean", "rmse_std"])
        for t in matrix.domains:
            for s in matrix.domains:
                res = matrix.cell(s, t)
                if res is None or res.summary is None:
                    continue
                w.writerow([t, s, res.plan.mode, repr(res.summary.rmse["combined"]), repr(res.summary.rmse_std["combined"])])
        res = matrix.cell(ALL, ALL)
        if res is not None and res.summary is not None:
            w.writerow([ALL, ALL, "multi", repr(res.summary.rmse["combined"]), repr(res.summary.rmse_std["combined"])])
    return [csv_path, txt_path, fig_path]


def source_selections(matrix: ResultsMatrix) -> dict[str, list[list[str]]]:
    """Per source, the list of per-fold selected feature ids (from the intra/multi cell)."""
    out = {}
    for res in matrix.cells.values():
        if res.plan.mode == "inter":
            continue
        out[res.plan.source] = [f.selection["feature_ids"] if f.selection else [] for f in res.folds]
    return out


def emit_feature_report(matrix_or_selections, path: str | Path, catalog=None) -> Path:
    """Per-fold and majority-vote selected features per source domain.

    A feature is ``stable`` when more than half of the folds selected it.
    A companion ``*_modality.csv`` counts stable features by modality.
    """
    sels = source_selections(matrix_or_selections) if isinstance(matrix_or_selections, ResultsMatrix) else matrix_or_selections
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    def describe(fid: str) -> tuple[str, str, str]:
        if catalog is None or fid not in catalog.ids:
            return fid, "", ""
        e = catalog[catalog.index_of(fid)]
        return catalog.display_name(catalog.index_of(fid)), e.group, e.modality

    modality_rows = []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["source_domain", "scope", "feature_id", "name", "group", "modality", "n_folds_selected", "stable"])
        for source, folds in sels.items():
            counts: dict[str, int] = {}
            for fold_ids in folds:
                for fid in fold_ids:
                    counts[fid] = counts.get(fid, 0) + 1
            need = len(folds) // 2 + 1
            for i, fold_ids in enumerate(folds):
                for fid in fold_ids:
                    w.writerow([source, f"fold{i}", fid, *describe(fid), counts[fid], int(counts[fid] >= need)])
            stable = [fid for fid in counts if counts[fid] >= need]
            for fid in sorted(stable, key=lambda f: (-counts[f], f)):
                w.writerow([source, "majority", fid, *describe(fid), counts[fid], 1])
            by_mod: dict[str, int] = {}
            for fid in stable:
                mod = describe(fid)[2] or "unknown"
                by_mod[mod] = by_mod.get(mod, 0) + 1
            for mod in ("audio", "visual", "unknown"):
                if mod in by_mod or mod != "unknown":
                    modality_rows.append([source, mod, by_mod.get(mod, 0)])
    with open(path.with_name(path.stem + "_modality.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["source_domain", "modality", "n_stable_features"])
        w.writerows(modality_rows)
    return path


def mean_rmse(matrix: ResultsMatrix, mode: str) -> float:
    vals = [c.summary.rmse["combined"] for c in matrix.cells.values() if c.plan.mode == mode and c.summary is not None]
    return float(np.mean(vals)) if vals else float("nan")
