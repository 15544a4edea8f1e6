"""Attention-based feature selection with per-target attention TCNs.

One temporal convolutional network is trained per affect target.  Its input
passes through a trainable attention vector (softmax over features) before
a stack of depthwise dilated causal convolution blocks and a per-frame
linear head.  After training, the attention weights are min-max normalised
and thresholded; the valence and arousal selections are unioned and used to
slice the feature space of both source and target domains.
"""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import numkernel as nk
from .catalog import FeatureCatalog
from .dataset import TARGETS, FrameSeriesSample, PaddedBatch

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    def __init__(self, msg: str, epoch: int, config=None):
        super().__init__(msg)
        self.epoch = epoch
        self.config = config


@dataclass(frozen=True)
class AttentionTcnConfig:
    epochs: int = 1000
    kernel_size: int = 250
    dilation_base: int = 250
    hidden_levels: int = 1
    lr: float = 0.01
    seed: int = 0
    # False: frame t sees features up to t - 1 only
    include_present: bool = False
    # "softmax": features compete for a unit attention budget; "identity": plain x * a
    attention: str = "softmax"

    def __post_init__(self):
        if self.kernel_size < 1 or self.dilation_base < 1 or self.epochs < 1 or self.hidden_levels < 0:
            raise ValueError(f"invalid attention TCN config: {self}")
        if self.attention not in ("softmax", "identity"):
            raise ValueError("attention must be 'softmax' or 'identity'")

    @property
    def dilations(self) -> list[int]:
        return [self.dilation_base**i for i in range(self.hidden_levels + 1)]


@dataclass
class AttentionScores:
    target: str
    raw: np.ndarray
    normalized: np.ndarray
    loss_curve: list[float] = field(default_factory=list)
    degenerate: bool = False


@dataclass
class AbfsSelection:
    valence_selected: list[int]
    arousal_selected: list[int]
    union: list[int]
    catalog: FeatureCatalog | None = None
    threshold: float = 0.25
    scores: dict[str, AttentionScores] = field(default_factory=dict)

    def names(self) -> list[str]:
        if self.catalog is None:
            return [str(j) for j in self.union]
        return [self.catalog.display_name(j) for j in self.union]

    def feature_ids(self) -> list[str]:
        if self.catalog is None:
            return [str(j) for j in self.union]
        return [self.catalog[j].feature_id for j in self.union]


# network --------------------------------------------------------------------


def init_tcn(D: int, config: AttentionTcnConfig, rng: np.random.Generator | None = None) -> dict[str, np.ndarray]:
    rng = rng or np.random.default_rng(config.seed)
    K = config.kernel_size
    params = {"attention": np.ones(D)}
    for i, _ in enumerate(config.dilations):
        bound = 1.0 / np.sqrt(K)
        params[f"conv{i}.weight"] = rng.uniform(-bound, bound, (D, K))
        params[f"conv{i}.bias"] = rng.uniform(-bound, bound, D)
        params[f"prelu{i}.slope"] = np.full(D, 0.25)
    bound = 1.0 / np.sqrt(D)
    params["head.weight"] = rng.uniform(-bound, bound, (D, 1))
    params["head.bias"] = rng.uniform(-bound, bound, 1)
    return params


def attention_weights(attention: np.ndarray, config: AttentionTcnConfig) -> np.ndarray:
    """The per-feature weights actually applied to the input (the raw ABFS scores)."""
    if config.attention != "softmax":
        return np.array(attention, dtype=float)
    e = np.exp(attention - attention.max())
    return e / e.sum()


def tcn_forward(p: dict[str, nk.Tensor], x, config: AttentionTcnConfig) -> nk.Tensor:
    """Per-frame prediction ``(N, L)`` from features ``(N, L, D)``."""
    z = nk.as_tensor(x)
    if not config.include_present:
        z = nk.shift_right(z, 1)
    a = nk.softmax(p["attention"]) if config.attention == "softmax" else p["attention"]
    z = nk.attention_mul(z, a)
    for i, dil in enumerate(config.dilations):
        h = nk.depthwise_causal_conv(z, p[f"conv{i}.weight"], p[f"conv{i}.bias"], dil)
        z = nk.prelu(h + z, p[f"prelu{i}.slope"])
    y = nk.linear(z, p["head.weight"], p["head.bias"])
    return nk.Tensor(y.data[..., 0], (y,), lambda g: (g[..., None],), "squeeze")


def tcn_loss(p: dict[str, nk.Tensor], x, y, mask, config: AttentionTcnConfig) -> nk.Tensor:
    return nk.mse(tcn_forward(p, x, config), y, mask)


def _trim(batch: PaddedBatch) -> PaddedBatch:
    """Drop trailing frames that are padding in every sample."""
    valid = np.flatnonzero(batch.mask.reshape(-1, batch.length).any(axis=0))
    L = int(valid[-1]) + 1 if valid.size else 1
    if L == batch.length:
        return batch
    return replace(batch, features=batch.features[..., :L, :], labels=batch.labels[..., :L, :], mask=batch.mask[..., :L])


def train_attention_tcn(
    batch: PaddedBatch, target: str, config: AttentionTcnConfig
) -> tuple[dict[str, np.ndarray], AttentionScores]:
    """Full-batch Adam on masked MSE for one target; returns parameters and scores."""
    if target not in TARGETS:
        raise ValueError(f"target must be one of {TARGETS}")
    k = TARGETS.index(target)
    batch = _trim(batch)
    y = batch.labels[..., k]
    params = init_tcn(batch.width, config)
    state = nk.AdamState(lr=config.lr)
    curve = []
    for epoch in range(1, config.epochs + 1):
        leaves = {n: nk.Tensor(v, name=n) for n, v in params.items()}
        try:
            loss = tcn_loss(leaves, batch.features, y, batch.mask, config)
            loss.backward()
            nk.adam_step(params, {n: t.grad for n, t in leaves.items()}, state)
        except FloatingPointError as exc:
            raise TrainingDivergedError(f"{target} TCN diverged at epoch {epoch}: {exc}", epoch, config) from exc
        curve.append(loss.item())
    raw = attention_weights(params["attention"], config)
    norm, degenerate = normalize_scores(raw)
    if degenerate:
        warnings.warn(f"{target} TCN: attention scores are constant; every feature counts as selected", stacklevel=2)
    return params, AttentionScores(target, raw, norm, curve, degenerate)


def normalize_scores(raw: np.ndarray) -> tuple[np.ndarray, bool]:
    """Min-max rescale to [0, 1]; constant scores map to all ones."""
    lo, hi = float(raw.min()), float(raw.max())
    if hi == lo:
        return np.ones_like(raw), True
    return (raw - lo) / (hi - lo), False


def select_features(scores: AttentionScores | np.ndarray, threshold: float = 0.25) -> list[int]:
    """Indices whose normalised score is strictly above ``threshold``."""
    norm = scores.normalized if isinstance(scores, AttentionScores) else np.asarray(scores)
    chosen = [int(j) for j in np.flatnonzero(norm > threshold)]
    if not chosen:
        raise ValueError(f"threshold {threshold} excludes all features")
    return chosen


def combine(valence_sel: Sequence[int], arousal_sel: Sequence[int], catalog: FeatureCatalog | None = None, threshold: float = 0.25) -> AbfsSelection:
    if not valence_sel or not arousal_sel:
        raise ValueError("empty selection")
    union = sorted(set(valence_sel) | set(arousal_sel))
    return AbfsSelection(sorted(valence_sel), sorted(arousal_sel), union, catalog, threshold)


def run_abfs(batch: PaddedBatch, config: AttentionTcnConfig, catalog: FeatureCatalog | None = None, threshold: float = 0.25) -> AbfsSelection:
    """Train the valence and arousal TCNs on a standardized batch and combine their selections."""
    scores = {}
    for target in TARGETS:
        _, scores[target] = train_attention_tcn(batch, target, config)
    sel = combine(select_features(scores["valence"], threshold), select_features(scores["arousal"], threshold), catalog, threshold)
    sel.scores = scores
    return sel


def reshape_domain(samples: Sequence[FrameSeriesSample], selection: AbfsSelection | Sequence[int]) -> list[FrameSeriesSample]:
    """Copies of ``samples`` restricted to the selected columns, in selection order."""
    idx = list(selection.union if isinstance(selection, AbfsSelection) else selection)
    out = []
    for s in samples:
        D = s.features.shape[1]
        bad = [j for j in idx if not 0 <= j < D]
        if bad:
            raise IndexError(f"selected feature index {bad[0]} out of range for {D} features")
        out.append(replace(s, features=s.features[:, idx].copy()))
    return out


def reshape_batch(batch: PaddedBatch, selection: AbfsSelection | Sequence[int]) -> PaddedBatch:
    idx = list(selection.union if isinstance(selection, AbfsSelection) else selection)
    if any(not 0 <= j < batch.width for j in idx):
        raise IndexError(f"selection {idx} out of range for {batch.width} features")
    return replace(batch, features=batch.features[..., idx])


# reports ----------------------------------------------------------------------

REPORT_COLUMNS = ("source_domain", "target", "feature_id", "group", "modality", "raw_score", "normalized_score", "selected")


def selection_rows(selection: AbfsSelection, source_domain: str) -> list[dict]:
    rows = []
    for target in TARGETS:
        sc = selection.scores.get(target)
        if sc is None:
            continue
        chosen = set(selection.valence_selected if target == "valence" else selection.arousal_selected)
        for j in range(sc.raw.shape[0]):
            entry = selection.catalog[j] if selection.catalog is not None else None
            rows.append(
                {
                    "source_domain": source_domain,
                    "target": target,
                    "feature_id": entry.feature_id if entry else str(j),
                    "group": entry.group if entry else "",
                    "modality": entry.modality if entry else "",
                    "raw_score": repr(float(sc.raw[j])),
                    "normalized_score": repr(float(sc.normalized[j])),
                    "selected": int(j in chosen),
                }
            )
    return rows


def write_selection_report(selection: AbfsSelection, source_domain: str, path: str | Path) -> tuple[Path, Path]:
    """Score CSV plus a text table listing the selected features by name."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        w.writeheader()
        w.writerows(selection_rows(selection, source_domain))
    table = path.with_suffix(".txt")
    names = selection.names()
    width = max(len("Source"), len(source_domain))
    lines = [f"{'Source':<{width}} | ABFS Features Selected and Used", "-" * (width + 36)]
    for i, name in enumerate(names):
        lines.append(f"{source_domain if i == 0 else '':<{width}} | {name}")
    table.write_text("\n".join(lines) + "\n")
    return path, table


def selection_to_dict(sel: AbfsSelection) -> dict:
    return {
        "valence_selected": sel.valence_selected,
        "arousal_selected": sel.arousal_selected,
        "union": sel.union,
        "threshold": sel.threshold,
        "feature_ids": sel.feature_ids(),
        "names": sel.names(),
        "scores": {t: {"raw": s.raw.tolist(), "normalized": s.normalized.tolist()} for t, s in sel.scores.items()},
    }


def config_dict(config: AttentionTcnConfig) -> dict:
    return asdict(config)
