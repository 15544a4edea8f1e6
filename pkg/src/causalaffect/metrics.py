"""Masked RMSE / CCC with frames pooled across every sequence of an evaluation set."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TARGETS = ("valence", "arousal")


class DegenerateMetricError(ValueError):
    """Not enough valid frames to compute a metric."""


def _pooled(pred, truth, mask) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    if mask is None:
        return pred.reshape(-1), truth.reshape(-1)
    m = np.asarray(mask, dtype=bool)
    if m.shape != pred.shape:
        raise ValueError(f"mask shape {m.shape} != prediction shape {pred.shape}")
    return pred[m], truth[m]


def rmse(pred, truth, mask=None) -> float:
    p, t = _pooled(pred, truth, mask)
    if p.size == 0:
        raise DegenerateMetricError("rmse needs at least one valid frame")
    d = p - t
    return float(np.sqrt(np.mean(d * d)))


def ccc(pred, truth, mask=None) -> float:
    """Lin's concordance correlation coefficient with population moments.

    Returns 0.0 when both series are constant (no concordance defined).
    """
    p, t = _pooled(pred, truth, mask)
    if p.size < 2:
        raise DegenerateMetricError("ccc needs at least two valid frames")
    mp, mt = p.mean(), t.mean()
    dp, dt = p - mp, t - mt
    cov = np.mean(dp * dt)
    den = np.mean(dp * dp) + np.mean(dt * dt) + (mp - mt) ** 2
    if den == 0.0:
        return 0.0
    return float(2.0 * cov / den)


def is_degenerate_ccc(pred, truth, mask=None) -> bool:
    p, t = _pooled(pred, truth, mask)
    return bool(np.ptp(p) == 0.0 and np.ptp(t) == 0.0)


@dataclass
class MetricReport:
    """RMSE/CCC per target plus the unweighted mean over targets.

    ``folds`` holds per-fold reports after :func:`aggregate`; ``*_std`` are
    the population standard deviations across those folds.
    """

    rmse: dict[str, float]
    ccc: dict[str, float]
    n_frames: int
    rmse_std: dict[str, float] = field(default_factory=dict)
    ccc_std: dict[str, float] = field(default_factory=dict)
    folds: list["MetricReport"] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = {"rmse": self.rmse, "ccc": self.ccc, "n_frames": self.n_frames}
        if self.folds:
            d["rmse_std"] = self.rmse_std
            d["ccc_std"] = self.ccc_std
            d["folds"] = [f.to_dict() for f in self.folds]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(
            rmse=dict(d["rmse"]),
            ccc=dict(d["ccc"]),
            n_frames=int(d["n_frames"]),
            rmse_std=dict(d.get("rmse_std", {})),
            ccc_std=dict(d.get("ccc_std", {})),
            folds=[cls.from_dict(f) for f in d.get("folds", [])],
        )


def evaluate(pred: np.ndarray, truth: np.ndarray, mask: np.ndarray) -> MetricReport:
    """Report for ``(N, L, 2)`` predictions against labels under an ``(N, L)`` mask."""
    m = np.asarray(mask, dtype=bool)
    r, c = {}, {}
    for k, name in enumerate(TARGETS):
        r[name] = rmse(pred[..., k], truth[..., k], m)
        c[name] = ccc(pred[..., k], truth[..., k], m)
    r["combined"] = (r["valence"] + r["arousal"]) / 2.0
    c["combined"] = (c["valence"] + c["arousal"]) / 2.0
    return MetricReport(r, c, int(m.sum()))


def aggregate(reports: list[MetricReport]) -> MetricReport:
    if not reports:
        raise ValueError("nothing to aggregate")
    keys = list(reports[0].rmse)
    r = {k: float(np.mean([x.rmse[k] for x in reports])) for k in keys}
    c = {k: float(np.mean([x.ccc[k] for x in reports])) for k in keys}
    rs = {k: float(np.std([x.rmse[k] for x in reports])) for k in keys}
    cs = {k: float(np.std([x.ccc[k] for x in reports])) for k in keys}
    return MetricReport(r, c, sum(x.n_frames for x in reports), rs, cs, list(reports))
