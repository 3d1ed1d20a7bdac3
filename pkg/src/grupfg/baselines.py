"""Model variants sharing one forward contract: DayBatch -> m predictions.

Ablations are expressed by freezing fusion scalars of the full model, so
``gru-pfg-primary-only`` is GRU-PFG with ``w_e = w_f = 0`` held fixed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, cosine_rows
from .model import (
    DEFAULT_HIDDEN,
    NUM_FACTORS,
    DayBatch,
    Params,
    forward_day,
    gru_forward,
    init_gru_params,
    init_head_params,
    init_params,
    predict_head,
)
from .errors import SpecError

KINDS = ("mlp", "gru", "gru-pfg", "gru-pfg-primary-only", "gru-pfg-cosine")
MLP_SIZES = (NUM_FACTORS, 256, 64, 1)

__all__ = ["KINDS", "ModelVariant", "make_variant", "mlp_forward", "gru_baseline_forward", "cosine_rows"]


def init_mlp_params(seed: int | np.random.Generator = 0, sizes=MLP_SIZES) -> Params:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    params: Params = {}
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-2], sizes[1:-1]), start=1):
        bound = 1.0 / np.sqrt(fan_in)
        params[f"mlp.w{i}"] = ad.parameter(rng.uniform(-bound, bound, (fan_in, fan_out)))
        params[f"mlp.b{i}"] = ad.parameter(np.zeros(fan_out))
    params.update(init_head_params(sizes[-2], rng))
    return params


def mlp_forward(batch: DayBatch, params: Params) -> Tensor:
    """Per-stock 360 -> 256 -> 64 -> 1 network with tanh activations."""
    h = ad.constant(batch.inputs.reshape(batch.size, -1))
    i = 1
    while f"mlp.w{i}" in params:
        h = ad.tanh(ad.add_bias(ad.matmul(h, params[f"mlp.w{i}"]), params[f"mlp.b{i}"]))
        i += 1
    return predict_head(h, params)


def gru_baseline_forward(batch: DayBatch, params: Params) -> Tensor:
    """GRU final hidden state straight into the linear head."""
    return predict_head(gru_forward(batch, params), params)


@dataclass
class ModelVariant:
    kind: str
    params: Params
    frozen: frozenset[str] = field(default_factory=frozenset)

    @property
    def hidden_size(self) -> int:
        if self.kind == "mlp":
            return self.params["head.w"].shape[0]
        return self.params["gru.u_z"].shape[0]

    def trainable(self) -> Params:
        return {k: v for k, v in self.params.items() if k not in self.frozen}

    def forward(self, batch: DayBatch) -> Tensor:
        if self.kind == "mlp":
            return mlp_forward(batch, self.params)
        if self.kind == "gru":
            return gru_baseline_forward(batch, self.params)
        similarity = cosine_rows if self.kind == "gru-pfg-cosine" else ad.pearson_rows
        return forward_day(batch, self.params, similarity)[0]

    def predict(self, batch: DayBatch) -> np.ndarray:
        return self.forward(batch).values


def freeze(params: Params, values: dict[str, float]) -> frozenset[str]:
    for key, value in values.items():
        params[key].values[...] = value
    return frozenset(values)


def make_variant(kind: str, hidden_size: int = DEFAULT_HIDDEN, seed: int | np.random.Generator = 0) -> ModelVariant:
    """Fresh variant. GRU-based kinds draw identical GRU and head weights for a given seed."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if kind == "mlp":
        return ModelVariant(kind, init_mlp_params(rng))
    if kind == "gru":
        params = init_gru_params(hidden_size, rng)
        params.update(init_head_params(hidden_size, rng))
        return ModelVariant(kind, params)
    if kind in ("gru-pfg", "gru-pfg-cosine"):
        return ModelVariant(kind, init_params(hidden_size, rng))
    if kind == "gru-pfg-primary-only":
        params = init_params(hidden_size, rng)
        return ModelVariant(kind, params, freeze(params, {"mix.w_e": 0.0, "mix.w_f": 0.0}))
    raise SpecError(f"unknown model kind {kind!r}; expected one of {', '.join(KINDS)}")
