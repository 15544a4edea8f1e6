"""Per-frame feature/label time series grouped by domain.

On disk a dataset is a JSON manifest next to a set of CSV files::

    {
      "catalog_file": "catalog.csv",
      "samples": [
        {"domain": "british", "subject": "s01", "sample_id": "v001",
         "features_file": "features/v001.csv",
         "labels_file": "labels/v001.csv",
         "annotators_file": "annotators/v001.csv"}
      ]
    }

Feature files carry one header row of feature ids and one row per frame.
Label files have the columns ``valence,arousal``; annotator files the
columns ``annotator_id,frame,valence,arousal``.  Paths are relative to the
manifest.  ``labels_file``, ``annotators_file`` and ``catalog_file`` are
optional; without a catalog the header of the first feature file defines it.
"""
from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass, field, replace
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .catalog import FeatureCatalog, infer_catalog

log = logging.getLogger(__name__)

TARGETS = ("valence", "arousal")
STD_FLOOR = 1e-8
NAN_POLICIES = ("drop_rows", "drop_sample", "error")


class IngestError(ValueError):
    """A dataset file is missing, malformed or out of range."""


@dataclass
class FrameSeriesSample:
    domain: str
    subject: str
    sample_id: str
    features: np.ndarray  # (L_i, D)
    labels: np.ndarray | None = None  # (L_i, 2), valence then arousal
    annotator_tracks: np.ndarray | None = None  # (L_i, A, 2)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError(f"sample {self.sample_id}: features must be a non-empty (L, D) matrix")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.float64)
            if self.labels.shape != (self.features.shape[0], 2):
                raise ValueError(f"sample {self.sample_id}: labels must be ({self.features.shape[0]}, 2)")

    @property
    def length(self) -> int:
        return self.features.shape[0]


@dataclass
class PaddedBatch:
    """Fixed-length features, labels and validity mask.

    Arrays may carry a leading sample axis: ``features`` is ``(..., L, D)``,
    ``labels`` ``(..., L, 2)`` and ``mask`` ``(..., L)``.
    """

    features: np.ndarray
    labels: np.ndarray
    mask: np.ndarray
    sample_ids: list[str] = field(default_factory=list)

    @property
    def length(self) -> int:
        return self.mask.shape[-1]

    @property
    def width(self) -> int:
        return self.features.shape[-1]


@dataclass(frozen=True)
class StandardizationStats:
    mean: np.ndarray
    std: np.ndarray


class DomainStore:
    """Immutable collection of samples sharing one catalog."""

    def __init__(self, catalog: FeatureCatalog, samples: Iterable[FrameSeriesSample], manifest_path: str | Path | None = None):
        self.catalog = catalog
        self.samples: tuple[FrameSeriesSample, ...] = tuple(samples)
        self.manifest_path = Path(manifest_path) if manifest_path else None
        D = len(catalog)
        seen = set()
        for s in self.samples:
            if not s.domain:
                raise ValueError(f"sample {s.sample_id} has an empty domain id")
            if s.features.shape[1] != D:
                raise ValueError(f"sample {s.sample_id} has {s.features.shape[1]} features, catalog has {D}")
            if s.sample_id in seen:
                raise ValueError(f"duplicate sample id {s.sample_id}")
            seen.add(s.sample_id)

    @property
    def domains(self) -> list[str]:
        out: list[str] = []
        for s in self.samples:
            if s.domain not in out:
                out.append(s.domain)
        return out

    def by_domain(self, domain: str) -> list[FrameSeriesSample]:
        return [s for s in self.samples if s.domain == domain]

    def get(self, sample_id: str) -> FrameSeriesSample:
        for s in self.samples:
            if s.sample_id == sample_id:
                return s
        raise KeyError(sample_id)

    def __len__(self) -> int:
        return len(self.samples)


# ingestion ----------------------------------------------------------------


def _read_header(path: Path) -> list[str]:
    with open(path, newline="") as fh:
        try:
            return next(csv.reader(fh))
        except StopIteration:
            raise IngestError(f"{path}: empty file") from None


def _read_matrix(path: Path, width: int) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise IngestError(f"{path}: row {lineno} has {len(row)} fields, expected {width}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise IngestError(f"{path}: row {lineno}: {exc}") from None
    if not rows:
        raise IngestError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


def _read_labels(path: Path) -> np.ndarray:
    header = _read_header(path)
    if header != list(TARGETS):
        raise IngestError(f"{path}: label header must be valence,arousal, got {','.join(header)}")
    labels = _read_matrix(path, 2)
    bad = np.argwhere(~((labels >= 0.0) & (labels <= 1.0)))
    if bad.size:
        r, c = bad[0]
        raise IngestError(f"{path}: row {r + 2} {TARGETS[c]} = {float(labels[r, c])!r} outside [0, 1]")
    return labels


def _read_annotators(path: Path, n_frames: int) -> np.ndarray:
    header = _read_header(path)
    if header != ["annotator_id", "frame", "valence", "arousal"]:
        raise IngestError(f"{path}: annotator header must be annotator_id,frame,valence,arousal")
    by_ann: dict[str, dict[int, tuple[float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise IngestError(f"{path}: row {lineno} has {len(row)} fields, expected 4")
            by_ann.setdefault(row[0], {})[int(row[1])] = (float(row[2]), float(row[3]))
    tracks = np.zeros((n_frames, len(by_ann), 2))
    for a, ann in enumerate(by_ann):
        frames = by_ann[ann]
        if sorted(frames) != list(range(n_frames)):
            raise IngestError(f"{path}: annotator {ann} does not cover frames 0..{n_frames - 1}")
        for t, va in frames.items():
            tracks[t, a] = va
    return tracks


def _apply_nan_policy(features: np.ndarray, labels: np.ndarray | None, policy: str, where: Path):
    bad_rows = ~np.all(np.isfinite(features), axis=1)
    if not bad_rows.any():
        return features, labels, bad_rows
    if policy == "error":
        raise IngestError(f"{where}: row {int(np.argmax(bad_rows)) + 2} contains NaN/Inf")
    if policy == "drop_sample":
        return None, None, bad_rows
    keep = ~bad_rows
    if not keep.any():
        return None, None, bad_rows
    return features[keep], (labels[keep] if labels is not None else None), bad_rows


def ingest(manifest_path: str | Path, nan_policy: str = "drop_rows") -> DomainStore:
    """Load every sample listed in a manifest.

    ``nan_policy`` decides what happens to frames whose features contain
    NaN/Inf: ``drop_rows`` removes those frames (and their labels),
    ``drop_sample`` drops the whole sample, ``error`` aborts.
    """
    if nan_policy not in NAN_POLICIES:
        raise ValueError(f"nan_policy must be one of {NAN_POLICIES}")
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise IngestError(f"manifest not found: {manifest_path}")
    doc = json.loads(manifest_path.read_text())
    entries = doc["samples"] if isinstance(doc, dict) else doc
    root = manifest_path.parent

    catalog = None
    if isinstance(doc, dict) and doc.get("catalog_file"):
        cat_path = root / doc["catalog_file"]
        if not cat_path.exists():
            raise IngestError(f"catalog file not found: {cat_path}")
        catalog = FeatureCatalog.from_csv(cat_path)

    samples = []
    for entry in entries:
        for key in ("domain", "subject", "sample_id", "features_file"):
            if key not in entry:
                raise IngestError(f"{manifest_path}: manifest entry missing {key!r}: {entry}")
        fpath = root / entry["features_file"]
        if not fpath.exists():
            raise IngestError(f"feature file not found: {fpath}")
        header = _read_header(fpath)
        if catalog is None:
            catalog = infer_catalog(header)
        if header != catalog.ids:
            raise IngestError(f"{fpath}: header does not match the catalog ({len(header)} vs {len(catalog)} columns)")
        features = _read_matrix(fpath, len(header))

        labels = None
        if entry.get("labels_file"):
            lpath = root / entry["labels_file"]
            if not lpath.exists():
                raise IngestError(f"label file not found: {lpath}")
            labels = _read_labels(lpath)
            if labels.shape[0] != features.shape[0]:
                raise IngestError(f"{lpath}: {labels.shape[0]} label rows for {features.shape[0]} feature rows")

        tracks = None
        if entry.get("annotators_file"):
            apath = root / entry["annotators_file"]
            if not apath.exists():
                raise IngestError(f"annotator file not found: {apath}")
            tracks = _read_annotators(apath, features.shape[0])

        features, labels, bad = _apply_nan_policy(features, labels, nan_policy, fpath)
        if features is None:
            log.warning("dropping sample %s: non-finite feature values", entry["sample_id"])
            continue
        if tracks is not None and bad.any():
            tracks = tracks[~bad]
        samples.append(
            FrameSeriesSample(
                domain=str(entry["domain"]),
                subject=str(entry["subject"]),
                sample_id=str(entry["sample_id"]),
                features=features,
                labels=labels,
                annotator_tracks=tracks,
            )
        )
    if catalog is None:
        raise IngestError(f"{manifest_path}: manifest lists no samples")
    return DomainStore(catalog, samples, manifest_path)


def _write_matrix(path: Path, header: Sequence[str], data: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in data:
            # repr round-trips float64 exactly
            w.writerow([repr(float(v)) for v in row])


def export_store(store: DomainStore, out_dir: str | Path) -> Path:
    """Write ``store`` as manifest + CSVs under ``out_dir``; returns the manifest path."""
    out = Path(out_dir)
    for sub in ("features", "labels", "annotators"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    store.catalog.to_csv(out / "catalog.csv")
    entries = []
    for s in store.samples:
        entry = {"domain": s.domain, "subject": s.subject, "sample_id": s.sample_id, "features_file": f"features/{s.sample_id}.csv"}
        _write_matrix(out / entry["features_file"], store.catalog.ids, s.features)
        if s.labels is not None:
            entry["labels_file"] = f"labels/{s.sample_id}.csv"
            _write_matrix(out / entry["labels_file"], TARGETS, s.labels)
        if s.annotator_tracks is not None:
            entry["annotators_file"] = f"annotators/{s.sample_id}.csv"
            with open(out / entry["annotators_file"], "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["annotator_id", "frame", "valence", "arousal"])
                L, A, _ = s.annotator_tracks.shape
                for a in range(A):
                    for t in range(L):
                        v, ar = s.annotator_tracks[t, a]
                        w.writerow([f"a{a}", t, repr(float(v)), repr(float(ar))])
        entries.append(entry)
    manifest = out / "manifest.json"
    manifest.write_text(json.dumps({"catalog_file": "catalog.csv", "samples": entries}, indent=1))
    return manifest


# annotator agreement --------------------------------------------------------


def _pearson(x: np.ndarray, y: np.ndarray) -> float | None:
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return None
    return float(dx @ dy) / np.sqrt(sxx * syy)


def annotator_agreement(tracks: np.ndarray) -> tuple[float, list[tuple[int, int, str]]]:
    """Mean pairwise Pearson correlation between annotators, averaged over valence and arousal.

    Returns the statistic and the ``(a, b, target)`` pairs that involved a
    constant track (those pairs count as correlation 0).
    """
    L, A, _ = tracks.shape
    if A < 2:
        raise ValueError("annotator agreement needs at least two annotators")
    flagged = []
    per_target = []
    for k, target in enumerate(TARGETS):
        vals = []
        for a, b in combinations(range(A), 2):
            r = _pearson(tracks[:, a, k], tracks[:, b, k])
            if r is None:
                flagged.append((a, b, target))
                r = 0.0
            vals.append(r)
        per_target.append(np.mean(vals))
    return float(np.mean(per_target)), flagged


def filter_by_annotator_correlation(samples: Sequence[FrameSeriesSample], threshold: float = 0.0) -> list[FrameSeriesSample]:
    """Keep samples whose annotator agreement is strictly above ``threshold``.

    Samples without annotator tracks pass through unchanged.
    """
    kept = []
    for s in samples:
        if s.annotator_tracks is None:
            kept.append(s)
            continue
        stat, flagged = annotator_agreement(s.annotator_tracks)
        if flagged:
            warnings.warn(f"sample {s.sample_id}: constant annotator tracks {flagged} counted as correlation 0", stacklevel=2)
        if stat > threshold:
            kept.append(s)
        else:
            log.info("dropping sample %s: annotator agreement %.3f <= %.3f", s.sample_id, stat, threshold)
    return kept


# padding, standardization, folds ---------------------------------------------


def pad_and_mask(sample: FrameSeriesSample, length: int = 1000) -> PaddedBatch:
    """Zero-pad (or truncate) one sample to ``length`` frames."""
    if length < 1:
        raise ValueError("length must be >= 1")
    L_i, D = sample.features.shape
    if L_i > length:
        warnings.warn(f"sample {sample.sample_id}: truncating {L_i} frames to {length}", stacklevel=2)
    n = min(L_i, length)
    feats = np.zeros((length, D))
    feats[:n] = sample.features[:n]
    labels = np.zeros((length, 2))
    if sample.labels is not None:
        labels[:n] = sample.labels[:n]
    mask = np.zeros(length, dtype=bool)
    mask[:n] = True
    return PaddedBatch(feats, labels, mask, [sample.sample_id])


def collate(samples: Sequence[FrameSeriesSample], length: int | None = None, max_length: int = 1000) -> PaddedBatch:
    """Stack samples into one ``(N, L, ...)`` batch.

    ``length`` defaults to the longest sample, capped at ``max_length``.
    """
    if not samples:
        raise ValueError("cannot collate an empty list of samples")
    if length is None:
        length = min(max(s.length for s in samples), max_length)
    parts = [pad_and_mask(s, length) for s in samples]
    return PaddedBatch(
        np.stack([p.features for p in parts]),
        np.stack([p.labels for p in parts]),
        np.stack([p.mask for p in parts]),
        [s.sample_id for s in samples],
    )


def fit_standardizer(train_batches: PaddedBatch | Sequence[PaddedBatch]) -> StandardizationStats:
    """Per-feature mean/std over the valid frames of the training batches."""
    if isinstance(train_batches, PaddedBatch):
        train_batches = [train_batches]
    rows = [b.features[b.mask] for b in train_batches]
    rows = [r for r in rows if r.size]
    if not rows:
        raise ValueError("cannot fit a standardizer on an empty training set")
    X = np.concatenate(rows, axis=0)
    mean = X.mean(axis=0)
    std = np.maximum(X.std(axis=0), STD_FLOOR)
    return StandardizationStats(mean, std)


def apply_standardizer(batch: PaddedBatch, stats: StandardizationStats) -> PaddedBatch:
    if batch.width != stats.mean.shape[0]:
        raise ValueError(f"batch has {batch.width} features, standardizer has {stats.mean.shape[0]}")
    z = (batch.features - stats.mean) / stats.std
    z = np.where(batch.mask[..., None], z, 0.0)
    return replace(batch, features=z)


def split_folds(samples: Sequence[FrameSeriesSample], k: int = 5, seed: int = 0) -> list[tuple[list[str], list[str]]]:
    """Seeded k-fold partition of sample ids, stratified by domain.

    Each domain's samples are shuffled, the shuffled lists are concatenated
    (domains in first-seen order) and dealt round-robin into folds, so fold
    sizes differ by at most one and every fold's domain counts stay within
    one sample of the pool's proportions.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(samples) < k:
        raise ValueError(f"need at least {k} samples for {k}-fold splitting, got {len(samples)}")
    rng = np.random.default_rng(seed)
    domains: list[str] = []
    for s in samples:
        if s.domain not in domains:
            domains.append(s.domain)
    order: list[str] = []
    for d in domains:
        ids = [s.sample_id for s in samples if s.domain == d]
        order += [ids[i] for i in rng.permutation(len(ids))]
    folds: list[list[str]] = [[] for _ in range(k)]
    for pos, sid in enumerate(order):
        folds[pos % k].append(sid)
    all_ids = [s.sample_id for s in samples]
    out = []
    for i in range(k):
        test = set(folds[i])
        out.append(([sid for sid in all_ids if sid not in test], [sid for sid in all_ids if sid in test]))
    return out
