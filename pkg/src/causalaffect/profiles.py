"""Named hyperparameter profiles and ``key=value`` overrides."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Sequence

from .abfs import AttentionTcnConfig
from .regressor import LstmRegressorConfig


@dataclass(frozen=True)
class PipelineConfig:
    tcn: AttentionTcnConfig = field(default_factory=AttentionTcnConfig)
    lstm: LstmRegressorConfig = field(default_factory=LstmRegressorConfig)
    threshold: float = 0.25
    max_length: int = 1000
    # fixed padded length for every batch; None pads to the longest sample (capped at max_length)
    pad_to: int | None = None
    k: int = 5
    # fixed feature indices used instead of running ABFS (ablations)
    selection_override: tuple[int, ...] | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        tcn = AttentionTcnConfig(**d.pop("tcn"))
        lstm = LstmRegressorConfig(**d.pop("lstm"))
        if d.get("selection_override") is not None:
            d["selection_override"] = tuple(d["selection_override"])
        return cls(tcn=tcn, lstm=lstm, **d)


PAPER = PipelineConfig(
    tcn=AttentionTcnConfig(epochs=1000, kernel_size=250, dilation_base=250, hidden_levels=1, lr=0.01),
    lstm=LstmRegressorConfig(hidden=256, dropout=0.1, lr=0.1, max_epochs=1000),
)

DESK = PipelineConfig(
    tcn=AttentionTcnConfig(epochs=400, kernel_size=25, dilation_base=25, hidden_levels=1, lr=0.01),
    lstm=LstmRegressorConfig(hidden=32, dropout=0.1, lr=0.01, max_epochs=200, patience=10, batch_size=8),
)

PROFILES = {"paper": PAPER, "desk": DESK}


def get_profile(name: str) -> PipelineConfig:
    try:
        return PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None


def _coerce(raw: str, current):
    if isinstance(current, bool):
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if current is None or isinstance(current, tuple):
        val = json.loads(raw)
        return tuple(val) if isinstance(val, list) else val
    return raw


def apply_overrides(config: PipelineConfig, overrides: Sequence[str]) -> PipelineConfig:
    """Apply ``section.key=value`` (or top-level ``key=value``) overrides; unknown keys raise."""
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override must look like key=value, got {item!r}")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        if len(parts) == 1:
            names = {f.name for f in fields(config)} - {"tcn", "lstm"}
            if parts[0] not in names:
                raise ValueError(f"unknown config key {key!r}")
            config = replace(config, **{parts[0]: _coerce(raw, getattr(config, parts[0]))})
        elif len(parts) == 2 and parts[0] in ("tcn", "lstm"):
            section = getattr(config, parts[0])
            if parts[1] not in {f.name for f in fields(section)}:
                raise ValueError(f"unknown config key {key!r}")
            section = replace(section, **{parts[1]: _coerce(raw, getattr(section, parts[1]))})
            config = replace(config, **{parts[0]: section})
        else:
            raise ValueError(f"unknown config key {key!r}")
    return config
