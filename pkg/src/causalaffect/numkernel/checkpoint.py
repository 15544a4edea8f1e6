"""JSON checkpoints: parameter name -> shape + little-endian float64 bytes."""
from __future__ import annotations

import base64
import json
from pathlib import Path
from typing import Any

import numpy as np

CHECKPOINT_VERSION = 1


def encode_params(params: dict[str, np.ndarray]) -> dict[str, dict[str, Any]]:
    out = {}
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        out[name] = {"shape": list(arr.shape), "data": base64.b64encode(arr.tobytes()).decode("ascii")}
    return out


def decode_params(blob: dict[str, dict[str, Any]]) -> dict[str, np.ndarray]:
    params = {}
    for name, entry in blob.items():
        arr = np.frombuffer(base64.b64decode(entry["data"]), dtype="<f8").astype(np.float64)
        params[name] = arr.reshape(entry["shape"])
    return params


def save_checkpoint(path: str | Path, params: dict[str, np.ndarray], meta: dict[str, Any] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"version": CHECKPOINT_VERSION, "meta": meta or {}, "params": encode_params(params)}
    path.write_text(json.dumps(doc, sort_keys=True, indent=1))
    return path


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    doc = json.loads(Path(path).read_text())
    version = doc.get("version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version!r} in {path}")
    return decode_params(doc["params"]), doc.get("meta", {})
