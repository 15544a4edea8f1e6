"""Multi-domain synthetic affect data with planted lagged causes.

Every domain shares the same causal mechanism::

    label(t) = logistic(sum_j w_j * f_j(t - lag_j)) + N(0, noise_sigma), clipped to [0, 1]

where the causal features ``f_j`` are unit-variance AR(1) processes
(coefficient 0.9).  Distractor features are independent AR(1) noise.
Spurious features copy the current label plus noise with a domain-dependent
sign (``+1, -1, +1, ...``), so they are predictive inside one domain and
misleading across domains.  Valence and arousal use distinct weight vectors;
spurious features alternate between copying valence and arousal.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .catalog import CatalogEntry, FeatureCatalog
from .dataset import DomainStore, FrameSeriesSample, export_store

AR_COEF = 0.9
AUDIO_SHARE = 83 / 792


@dataclass
class SyntheticSpec:
    n_domains: int = 3
    samples_per_domain: int = 10
    D: int = 20
    L: int = 200
    causal_indices: tuple[int, ...] = (2, 7, 13)
    lags: tuple[int, ...] = (1, 2, 3)
    weights: tuple[float, ...] = (0.8, -0.6, 0.5)
    arousal_weights: tuple[float, ...] | None = None
    noise_sigma: float = 0.05
    spurious_indices: tuple[int, ...] = (5, 11)
    spurious_strength: float = 1.0
    # noise added to the label copy in spurious features; None reuses noise_sigma
    spurious_noise: float | None = 0.5
    min_length: int | None = None
    n_annotators: int = 0
    annotator_noise: float = 0.1
    seed: int = 0
    domain_names: tuple[str, ...] | None = field(default=None)

    def __post_init__(self):
        for name in ("causal_indices", "lags", "weights", "arousal_weights", "spurious_indices", "domain_names"):
            val = getattr(self, name)
            if val is not None:
                setattr(self, name, tuple(val))
        self.validate()

    def validate(self) -> None:
        n = len(self.causal_indices)
        if len(self.lags) != n or len(self.weights) != n:
            raise ValueError("causal_indices, lags and weights must have equal length")
        if self.arousal_weights is not None and len(self.arousal_weights) != n:
            raise ValueError("arousal_weights must match causal_indices")
        if set(self.causal_indices) & set(self.spurious_indices):
            raise ValueError("causal and spurious indices overlap")
        idx = list(self.causal_indices) + list(self.spurious_indices)
        if len(set(idx)) != len(idx):
            raise ValueError("duplicate feature indices")
        if any(not 0 <= j < self.D for j in idx):
            raise ValueError(f"feature index out of range for D = {self.D}")
        if any(lag < 1 for lag in self.lags):
            raise ValueError("lags must be >= 1")
        if self.n_domains < 1 or self.samples_per_domain < 1 or self.L < 1:
            raise ValueError("n_domains, samples_per_domain and L must be positive")
        if self.min_length is not None and not 1 <= self.min_length <= self.L:
            raise ValueError("min_length must be in [1, L]")
        if self.noise_sigma < 0 or (self.spurious_noise is not None and self.spurious_noise < 0):
            raise ValueError("noise levels must be >= 0")
        if self.domain_names is not None and len(self.domain_names) != self.n_domains:
            raise ValueError("domain_names must have n_domains entries")

    @property
    def valence_weights(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.float64)

    @property
    def arousal_weight_vector(self) -> np.ndarray:
        if self.arousal_weights is not None:
            return np.asarray(self.arousal_weights, dtype=np.float64)
        return 0.8 * np.roll(self.valence_weights, 1)

    @property
    def names(self) -> tuple[str, ...]:
        return self.domain_names or tuple(f"dom{m}" for m in range(self.n_domains))

    def domain_sign(self, m: int) -> float:
        return 1.0 if m % 2 == 0 else -1.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "SyntheticSpec":
        return cls(**json.loads(text))


def ar1(rng: np.random.Generator, n: int, coef: float = AR_COEF) -> np.ndarray:
    """Stationary unit-variance AR(1) path of length ``n``."""
    scale = np.sqrt(1.0 - coef * coef)
    x = np.empty(n)
    x[0] = rng.standard_normal()
    e = rng.standard_normal(n)
    for t in range(1, n):
        x[t] = coef * x[t - 1] + scale * e[t]
    return x


def _logistic(z):
    return 1.0 / (1.0 + np.exp(-z))


def catalog_for(spec: SyntheticSpec) -> FeatureCatalog:
    n_audio = max(1, round(spec.D * AUDIO_SHARE))
    entries = []
    for j in range(spec.D):
        if j in spec.causal_indices:
            group = "causal"
        elif j in spec.spurious_indices:
            group = "spurious"
        else:
            group = "distractor"
        entries.append(CatalogEntry(f"f{j:03d}", "audio" if j < n_audio else "visual", group))
    return FeatureCatalog(entries)


def _sample(spec: SyntheticSpec, rng: np.random.Generator, sign: float) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    L = spec.L if spec.min_length is None else int(rng.integers(spec.min_length, spec.L + 1))
    burn = max(spec.lags)
    X = np.empty((L, spec.D))
    drivers = {}
    for j in range(spec.D):
        path = ar1(rng, L + burn)
        X[:, j] = path[burn:]
        if j in spec.causal_indices:
            drivers[j] = path

    labels = np.empty((L, 2))
    for k, w in enumerate((spec.valence_weights, spec.arousal_weight_vector)):
        z = np.zeros(L)
        for j, lag, wj in zip(spec.causal_indices, spec.lags, w):
            z += wj * drivers[j][burn - lag : burn - lag + L]
        noise = rng.normal(0.0, spec.noise_sigma, L) if spec.noise_sigma > 0 else 0.0
        labels[:, k] = np.clip(_logistic(z) + noise, 0.0, 1.0)

    sp_sigma = spec.noise_sigma if spec.spurious_noise is None else spec.spurious_noise
    for pos, j in enumerate(spec.spurious_indices):
        noise = rng.normal(0.0, sp_sigma, L) if sp_sigma > 0 else 0.0
        X[:, j] = sign * spec.spurious_strength * (labels[:, pos % 2] + noise)

    tracks = None
    if spec.n_annotators:
        tracks = labels[:, None, :] + rng.normal(0.0, spec.annotator_noise, (L, spec.n_annotators, 2))
    return X, labels, tracks


def generate(spec: SyntheticSpec) -> tuple[DomainStore, tuple[int, ...]]:
    """Build the store; returns it with the planted causal indices."""
    spec.validate()
    catalog = catalog_for(spec)
    seeds = np.random.SeedSequence(spec.seed).spawn(spec.n_domains)
    samples = []
    for m, (name, ss) in enumerate(zip(spec.names, seeds)):
        rng = np.random.default_rng(ss)
        for i in range(spec.samples_per_domain):
            X, y, tracks = _sample(spec, rng, spec.domain_sign(m))
            samples.append(
                FrameSeriesSample(
                    domain=name,
                    subject=f"{name}_s{i:03d}",
                    sample_id=f"{name}_v{i:03d}",
                    features=X,
                    labels=y,
                    annotator_tracks=tracks,
                )
            )
    return DomainStore(catalog, samples), tuple(spec.causal_indices)


def describe(spec: SyntheticSpec, out_dir: str | Path) -> Path:
    """Generate and write the dataset in ingestible form; returns the manifest path."""
    store, _ = generate(spec)
    manifest = export_store(store, out_dir)
    (Path(out_dir) / "synth_spec.json").write_text(spec.to_json())
    return manifest


PRESETS = {
    "default3": SyntheticSpec(),
    "default6": SyntheticSpec(n_domains=6),
}
