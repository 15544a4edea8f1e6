"""Per-frame valence/arousal LSTM regressor.

Architecture: one LSTM layer, dropout on its hidden states, a 2-unit linear
head and a sigmoid so that predictions stay in [0, 1].  Training uses Adam
with global-norm gradient clipping on mini-batches of whole sequences, and
early stopping on a held-out share of the training samples.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import numkernel as nk
from .abfs import TrainingDivergedError, _trim
from .dataset import PaddedBatch

log = logging.getLogger(__name__)

LOSSES = ("rmse", "ccc", "rmse+ccc")


@dataclass(frozen=True)
class LstmRegressorConfig:
    hidden: int = 256
    dropout: float = 0.1
    lr: float = 0.1
    max_epochs: int = 1000
    patience: int = 10
    min_delta: float = 1e-4
    loss: str = "rmse"
    val_fraction: float = 0.2
    clip_norm: float = 5.0
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.hidden < 1 or self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError(f"invalid regressor config: {self}")


@dataclass
class TrainedRegressor:
    params: dict[str, np.ndarray]
    config: LstmRegressorConfig
    input_width: int
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    selection: list[int] | None = None
    # optional provenance for standalone use: full feature width before
    # selection and the training standardizer ({"mean": [...], "std": [...]})
    source_width: int | None = None
    standardizer: dict | None = None

    def save(self, path: str | Path) -> Path:
        meta = {
            "kind": "lstm_regressor",
            "config": asdict(self.config),
            "input_width": self.input_width,
            "best_epoch": self.best_epoch,
            "selection": self.selection,
            "history": self.history,
            "source_width": self.source_width,
            "standardizer": self.standardizer,
        }
        return nk.save_checkpoint(path, self.params, meta)

    @classmethod
    def load(cls, path: str | Path) -> "TrainedRegressor":
        params, meta = nk.load_checkpoint(path)
        if meta.get("kind") != "lstm_regressor":
            raise ValueError(f"{path} is not an LSTM regressor checkpoint")
        return cls(
            params=params,
            config=LstmRegressorConfig(**meta["config"]),
            input_width=int(meta["input_width"]),
            history=meta.get("history", []),
            best_epoch=int(meta.get("best_epoch", 0)),
            selection=meta.get("selection"),
            source_width=meta.get("source_width"),
            standardizer=meta.get("standardizer"),
        )


def init_params(input_width: int, config: LstmRegressorConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    H = config.hidden
    b_in, b_rec, b_head = 1.0 / np.sqrt(input_width), 1.0 / np.sqrt(H), 1.0 / np.sqrt(H)
    bias = np.zeros(4 * H)
    bias[H : 2 * H] = 1.0  # forget gate
    return {
        "lstm.w_in": rng.uniform(-b_in, b_in, (input_width, 4 * H)),
        "lstm.w_rec": rng.uniform(-b_rec, b_rec, (H, 4 * H)),
        "lstm.bias": bias,
        "head.weight": rng.uniform(-b_head, b_head, (H, 2)),
        "head.bias": np.zeros(2),
    }


def forward(p: dict[str, nk.Tensor], x, config: LstmRegressorConfig, rng: np.random.Generator | None = None, train: bool = False) -> nk.Tensor:
    h = nk.lstm(x, p["lstm.w_in"], p["lstm.w_rec"], p["lstm.bias"])
    h = nk.dropout(h, config.dropout, rng, train)
    return nk.sigmoid(nk.linear(h, p["head.weight"], p["head.bias"]))


def loss_fn(pred: nk.Tensor, labels: np.ndarray, mask: np.ndarray, kind: str) -> nk.Tensor:
    if kind == "rmse":
        return nk.rmse_loss(pred, labels, mask)
    if kind == "ccc":
        return nk.ccc_loss(pred, labels, mask)
    return nk.rmse_loss(pred, labels, mask) + nk.ccc_loss(pred, labels, mask)


def _subset(batch: PaddedBatch, idx) -> PaddedBatch:
    idx = np.asarray(idx)
    return _trim(
        PaddedBatch(batch.features[idx], batch.labels[idx], batch.mask[idx], [batch.sample_ids[i] for i in idx] if batch.sample_ids else [])
    )


def _eval_loss(params, batch: PaddedBatch, config: LstmRegressorConfig) -> float:
    leaves = {n: nk.Tensor(v) for n, v in params.items()}
    return loss_fn(forward(leaves, batch.features, config), batch.labels, batch.mask, config.loss).item()


def validation_split(n: int, config: LstmRegressorConfig) -> tuple[np.ndarray, np.ndarray]:
    n_val = int(round(config.val_fraction * n))
    n_val = max(1, n_val)
    if n - n_val < 1:
        raise ValueError(f"validation split needs at least 2 training samples, got {n}")
    order = np.random.default_rng([config.seed, 1]).permutation(n)
    return np.sort(order[n_val:]), np.sort(order[:n_val])


def train(batch: PaddedBatch, config: LstmRegressorConfig, selection: list[int] | None = None) -> TrainedRegressor:
    """Fit on a standardized, reshaped ``(N, L, D)`` batch with labels."""
    N = batch.features.shape[0]
    tr_idx, val_idx = validation_split(N, config)
    val = _subset(batch, val_idx)
    if not val.mask.any():
        raise ValueError("validation split has no valid frames")

    rng = np.random.default_rng([config.seed, 0])
    params = init_params(batch.width, config, rng)
    drop_rng = np.random.default_rng([config.seed, 2])
    state = nk.AdamState(lr=config.lr)

    best = float("inf")
    best_params = {k: v.copy() for k, v in params.items()}
    best_epoch = 0
    wait = 0
    history = []
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(tr_idx)
        losses, weights = [], []
        for start in range(0, len(order), config.batch_size):
            mb = _subset(batch, np.sort(order[start : start + config.batch_size]))
            if not mb.mask.any():
                continue
            leaves = {n: nk.Tensor(v, name=n) for n, v in params.items()}
            try:
                loss = loss_fn(forward(leaves, mb.features, config, drop_rng, train=True), mb.labels, mb.mask, config.loss)
                loss.backward()
                grads = {n: t.grad for n, t in leaves.items()}
                nk.clip_grad_norm(grads, config.clip_norm)
                nk.adam_step(params, grads, state)
            except FloatingPointError as exc:
                raise TrainingDivergedError(f"LSTM regressor diverged at epoch {epoch}: {exc}", epoch, config) from exc
            losses.append(loss.item())
            weights.append(mb.mask.sum())
        train_loss = float(np.average(losses, weights=weights))
        val_loss = _eval_loss(params, val, config)
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        if val_loss < best - config.min_delta:
            best, best_epoch, wait = val_loss, epoch, 0
            best_params = {k: v.copy() for k, v in params.items()}
        else:
            wait += 1
            if wait >= config.patience:
                log.debug("early stop at epoch %d (best %d)", epoch, best_epoch)
                break
    return TrainedRegressor(best_params, config, batch.width, history, best_epoch, selection)


def predict(model: TrainedRegressor, batch: PaddedBatch) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame ``(N, L, 2)`` predictions in [0, 1] and the validity mask.

    Padded frames are emitted as zeros.
    """
    if batch.width != model.input_width:
        raise ValueError(f"feature width mismatch: model expects D = {model.input_width}, got D = {batch.width}")
    trimmed = _trim(batch)
    leaves = {n: nk.Tensor(v) for n, v in model.params.items()}
    pred = forward(leaves, trimmed.features, model.config).data
    out = np.zeros(batch.mask.shape + (2,))
    out[..., : trimmed.length, :] = pred
    out[~batch.mask] = 0.0
    return out, batch.mask.copy()


def write_history(model: TrainedRegressor, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "val_loss"])
        w.writeheader()
        for row in model.history:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return path


def with_seed(config: LstmRegressorConfig, seed: int) -> LstmRegressorConfig:
    return replace(config, seed=seed)
