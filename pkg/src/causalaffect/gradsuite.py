"""Finite-difference gradient checks for every differentiable op and both networks.

Non-scalar outputs are reduced with a fixed random projection so that every
output element contributes to the checked gradient.  Sizes follow the tiny
configuration ``D = 4, L = 20, hidden = 8``.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import numkernel as nk
from .numkernel.tensor import matmul
from .abfs import AttentionTcnConfig, init_tcn, tcn_loss
from .regressor import LstmRegressorConfig, forward, init_params, loss_fn

TOLERANCE = 1e-4
N, L, D, H = 2, 20, 4, 8


def _project(out: nk.Tensor, proj: np.ndarray) -> nk.Tensor:
    return nk.tsum(nk.mul(out, proj))


def _op_cases(rng: np.random.Generator) -> dict[str, tuple[Callable, dict[str, np.ndarray]]]:
    x = rng.normal(size=(N, L, D))
    mask = np.ones((N, L), bool)
    mask[1, 15:] = False
    y2 = rng.uniform(0.1, 0.9, size=(N, L, 2))
    proj = {s: rng.normal(size=s) for s in [(N, L, D), (N, L, H), (N, L, 2), (D,), (D, 3), (N, L, 3)]}

    def P(out):
        return _project(out, proj[out.shape])

    drop_seed = int(rng.integers(1 << 31))
    cases = {
        "add": (lambda t: P(t["a"] + t["b"]), {"a": x, "b": rng.normal(size=D)}),
        "mul": (lambda t: P(t["a"] * t["b"]), {"a": x, "b": rng.normal(size=(N, L, D))}),
        "sub_neg": (lambda t: P(t["a"] - (-t["b"])), {"a": x, "b": rng.normal(size=D)}),
        "square": (lambda t: P(nk.square(t["a"])), {"a": x}),
        "sqrt": (lambda t: P(nk.sqrt(t["a"])), {"a": rng.uniform(0.5, 2.0, size=(N, L, D))}),
        "tanh": (lambda t: P(nk.tanh(t["a"])), {"a": x}),
        "matmul": (lambda t: P(matmul(t["a"], t["w"])), {"a": x, "w": rng.normal(size=(D, 3))}),
        "softmax": (lambda t: P(nk.softmax(t["a"])), {"a": rng.normal(size=D)}),
        "attention_mul": (lambda t: P(nk.attention_mul(t["x"], t["a"])), {"x": x, "a": rng.normal(size=D)}),
        "prelu": (lambda t: P(nk.prelu(t["x"], t["s"])), {"x": x, "s": rng.uniform(0.05, 0.5, size=D)}),
        "sigmoid": (lambda t: P(nk.sigmoid(t["x"])), {"x": 3 * x}),
        "linear": (lambda t: P(nk.linear(t["x"], t["w"], t["b"])), {"x": x, "w": rng.normal(size=(D, 3)), "b": rng.normal(size=3)}),
        "dropout": (
            lambda t: P(nk.dropout(t["x"], 0.3, np.random.default_rng(drop_seed), True)),
            {"x": x},
        ),
        "shift_right": (lambda t: P(nk.shift_right(t["x"], 2)), {"x": x}),
        "lstm": (
            lambda t: P(nk.lstm(t["x"], t["w_in"], t["w_rec"], t["b"])),
            {"x": x, "w_in": 0.5 * rng.normal(size=(D, 4 * H)), "w_rec": 0.5 * rng.normal(size=(H, 4 * H)), "b": rng.normal(size=4 * H)},
        ),
        "mse": (lambda t: nk.mse(t["p"], y2, mask), {"p": rng.normal(size=(N, L, 2))}),
        "rmse_loss": (lambda t: nk.rmse_loss(t["p"], y2, mask), {"p": rng.normal(size=(N, L, 2))}),
        "ccc_loss": (lambda t: nk.ccc_loss(t["p"], y2, mask), {"p": rng.normal(size=(N, L, 2))}),
    }
    for dil in (1, 3):
        cases[f"depthwise_causal_conv_d{dil}"] = (
            lambda t, dil=dil: P(nk.depthwise_causal_conv(t["x"], t["w"], t["b"], dil)),
            {"x": x, "w": rng.normal(size=(D, 3)), "b": rng.normal(size=D)},
        )
    return cases


def _network_cases(rng: np.random.Generator, seed: int) -> dict[str, tuple[Callable, dict[str, np.ndarray]]]:
    x = rng.normal(size=(N, L, D))
    mask = np.ones((N, L), bool)
    mask[0, 17:] = False
    y = rng.uniform(0.1, 0.9, size=(N, L))
    y2 = rng.uniform(0.1, 0.9, size=(N, L, 2))

    tcn_cfg = AttentionTcnConfig(kernel_size=3, dilation_base=2, hidden_levels=1, seed=seed)
    tcn_params = init_tcn(D, tcn_cfg, rng)
    tcn_params["attention"] = rng.normal(size=D)
    cases = {"attention_tcn": (lambda t: tcn_loss(t, x, y, mask, tcn_cfg), tcn_params)}

    for loss in ("rmse", "ccc"):
        cfg = LstmRegressorConfig(hidden=H, dropout=0.1, loss=loss, seed=seed)
        params = init_params(D, cfg, rng)
        drop_seed = int(rng.integers(1 << 31))
        cases[f"lstm_regressor_{loss}"] = (
            lambda t, cfg=cfg, drop_seed=drop_seed: loss_fn(
                forward(t, x, cfg, np.random.default_rng(drop_seed), train=True), y2, mask, cfg.loss
            ),
            params,
        )
    return cases


def run_suite(seeds=(0, 1, 2, 3, 4), step: float = 1e-5) -> dict[str, float]:
    """Worst relative error per case over all seeds."""
    worst: dict[str, float] = {}
    for seed in seeds:
        rng = np.random.default_rng(seed)
        cases = {**_op_cases(rng), **_network_cases(rng, seed)}
        for name, (fn, inputs) in cases.items():
            err = nk.grad_check(fn, inputs, step=step)
            worst[name] = max(worst.get(name, 0.0), err)
    return worst
