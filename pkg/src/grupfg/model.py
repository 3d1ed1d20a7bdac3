"""GRU-PFG: GRU feature extraction followed by two correlation-graph stages.

Shapes used throughout: ``m`` stocks on a day, ``T = 60`` time steps of
``C = 6`` channels, hidden size ``H`` (64 by default).

Parameters live in a flat ``dict[str, Tensor]`` keyed as follows::

    gru.w_{z,r,n}   (C, H)   input weights of update / reset / candidate gates
    gru.u_{z,r,n}   (H, H)   recurrent weights
    gru.b_{z,r,n}   (H,)     biases
    mix.w_a, mix.w_b         scalars, residual mixing
    mix.w_c .. mix.w_f       scalars, feature fusion
    head.w          (H,)     prediction head
    head.b          ()       prediction bias
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import NumericError, SchemaError

NUM_STEPS = 60
NUM_CHANNELS = 6
NUM_FACTORS = NUM_STEPS * NUM_CHANNELS
DEFAULT_HIDDEN = 64
MIX_INIT = 0.1

GATES = ("z", "r", "n")
MIX_KEYS = tuple(f"mix.w_{c}" for c in "abcdef")

Params = dict[str, Tensor]
Similarity = Callable[[Tensor, Tensor], Tensor]


@dataclass
class DayBatch:
    """One trading day's cross-section."""

    date: object
    stock_ids: list[str]
    inputs: np.ndarray  # (m, T, C)
    labels: np.ndarray  # (m,)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        m = len(self.stock_ids)
        if m < 1:
            raise SchemaError("DayBatch needs at least one stock")
        if self.inputs.ndim != 3 or self.inputs.shape[0] != m or self.labels.shape != (m,):
            raise SchemaError(
                f"DayBatch: inputs {self.inputs.shape} / labels {self.labels.shape} inconsistent with {m} stocks"
            )
        if not (np.isfinite(self.inputs).all() and np.isfinite(self.labels).all()):
            raise NumericError("DayBatch: non-finite inputs or labels")

    @property
    def size(self) -> int:
        return len(self.stock_ids)

    def permuted(self, order: Sequence[int]) -> "DayBatch":
        order = list(order)
        return DayBatch(self.date, [self.stock_ids[i] for i in order], self.inputs[order], self.labels[order])


@dataclass
class RelationTrace:
    """Intermediate matrices of one forward pass."""

    X: Tensor
    X_row: Tensor
    X_col: Tensor
    R1: Tensor
    F1: Tensor
    X_hid: Tensor
    R2: Tensor
    F2: Tensor
    F_last: Tensor | None = None


def reshape_factors(row) -> np.ndarray:
    """Turn a time-major 360-vector into ``(60, 6)``: step s, channel c = row[6 s + c]."""
    row = np.asarray(row, dtype=np.float64)
    if row.shape[-1] != NUM_FACTORS:
        raise SchemaError(f"expected {NUM_FACTORS} factors, got {row.shape[-1]}")
    if not np.isfinite(row).all():
        raise NumericError("factor row contains non-finite values")
    return row.reshape(row.shape[:-1] + (NUM_STEPS, NUM_CHANNELS))


def flatten_factors(steps: np.ndarray) -> np.ndarray:
    steps = np.asarray(steps)
    return steps.reshape(steps.shape[:-2] + (NUM_FACTORS,))


# -- parameters -------------------------------------------------------------

def init_gru_params(hidden_size: int, rng: np.random.Generator, num_channels: int = NUM_CHANNELS) -> Params:
    bound = 1.0 / np.sqrt(hidden_size)
    params: Params = {}
    for g in GATES:
        params[f"gru.w_{g}"] = ad.parameter(rng.uniform(-bound, bound, (num_channels, hidden_size)))
        params[f"gru.u_{g}"] = ad.parameter(rng.uniform(-bound, bound, (hidden_size, hidden_size)))
        params[f"gru.b_{g}"] = ad.parameter(np.zeros(hidden_size))
    return params


def init_head_params(hidden_size: int, rng: np.random.Generator) -> Params:
    bound = 1.0 / np.sqrt(hidden_size)
    return {
        "head.w": ad.parameter(rng.uniform(-bound, bound, hidden_size)),
        "head.b": ad.parameter(0.0),
    }


def init_params(hidden_size: int = DEFAULT_HIDDEN, seed: int | np.random.Generator = 0) -> Params:
    """Fresh GRU-PFG parameters; mixing scalars start at 0.1."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    params = init_gru_params(hidden_size, rng)
    for key in MIX_KEYS:
        params[key] = ad.parameter(MIX_INIT)
    params.update(init_head_params(hidden_size, rng))
    return params


def hidden_size_of(params: Params) -> int:
    return params["gru.u_z"].shape[0]


# -- preliminary extraction ---------------------------------------------------

def gru_sequence(inputs: np.ndarray, params: Params) -> Tensor:
    """Run a single-layer GRU over ``inputs`` (m, T, C) from a zero state.

    Returns the final hidden state as one graph node; its backward pass is
    hand-written backpropagation through time.

        z = sigmoid(x W_z + h U_z + b_z)
        r = sigmoid(x W_r + h U_r + b_r)
        n = tanh(x W_n + (r * h) U_n + b_n)
        h' = (1 - z) * n + z * h
    """
    x = np.asarray(inputs, dtype=np.float64)
    m, T, C = x.shape
    w = {g: params[f"gru.w_{g}"] for g in GATES}
    u = {g: params[f"gru.u_{g}"] for g in GATES}
    b = {g: params[f"gru.b_{g}"] for g in GATES}
    H = u["z"].shape[0]

    x_flat = x.transpose(1, 0, 2).reshape(T * m, C)  # step-major rows
    w_all = np.concatenate([w[g].values for g in GATES], axis=1)
    b_all = np.concatenate([b[g].values for g in GATES])
    proj = (x_flat @ w_all + b_all).reshape(T, m, 3 * H)
    uz, ur, un = (u[g].values for g in GATES)
    uzr = np.concatenate([uz, ur], axis=1)

    hs = np.empty((T + 1, m, H))
    hs[0] = 0.0
    zrs = np.empty((T, m, 2 * H))  # gates z | r
    ns = np.empty((T, m, H))
    for t in range(T):
        # In-place updates: at these sizes numpy call overhead dominates.
        h, zr, n, h_next = hs[t], zrs[t], ns[t], hs[t + 1]
        np.matmul(h, uzr, out=zr)
        zr += proj[t, :, : 2 * H]
        zr *= 0.5
        np.tanh(zr, out=zr)  # sigmoid(a) = (tanh(a / 2) + 1) / 2
        zr += 1.0
        zr *= 0.5
        np.matmul(zr[:, H:] * h, un, out=n)
        n += proj[t, :, 2 * H:]
        np.tanh(n, out=n)
        np.subtract(h, n, out=h_next)
        h_next *= zr[:, :H]
        h_next += n
    zs, rs = zrs[:, :, :H], zrs[:, :, H:]
    if not np.isfinite(hs).all():
        step = int(np.argmax((~np.isfinite(hs[1:])).reshape(T, -1).any(axis=1)))
        raise NumericError(f"gru_sequence: non-finite hidden state at step {step}")

    def _back(g):
        da = np.empty((T, m, 3 * H))  # pre-activation grads, gates z | r | n
        uzr_t = uzr.T
        un_t = un.T
        dh = g
        for t in range(T - 1, -1, -1):
            h, z, r, n = hs[t], zs[t], rs[t], ns[t]
            dan = dh * (1.0 - z) * (1.0 - n * n)
            drh = dan @ un_t
            daz = dh * (h - n) * z * (1.0 - z)
            dar = drh * h * r * (1.0 - r)
            da[t, :, :H] = daz
            da[t, :, H:2 * H] = dar
            da[t, :, 2 * H:] = dan
            dh = dh * z + drh * r + da[t, :, :2 * H] @ uzr_t
        da_flat = da.reshape(T * m, 3 * H)
        h_flat = hs[:T].reshape(T * m, H)
        d_uzr = h_flat.T @ da_flat[:, :2 * H]
        d_un = (rs.reshape(T * m, H) * h_flat).T @ da_flat[:, 2 * H:]
        d_w = x_flat.T @ da_flat
        d_b = da_flat.sum(axis=0)
        d_u = {"z": d_uzr[:, :H], "r": d_uzr[:, H:], "n": d_un}
        out = []
        for i, g_name in enumerate(GATES):
            sl = slice(i * H, (i + 1) * H)
            out += [d_w[:, sl], d_u[g_name], d_b[sl]]
        return tuple(out)

    parents = []
    for g in GATES:
        parents += [w[g], u[g], b[g]]
    return ad._result(hs[T].copy(), parents, _back, "gru_sequence")


def gru_sequence_reference(inputs: np.ndarray, params: Params) -> Tensor:
    """Same recurrence as :func:`gru_sequence`, composed from primitive ops."""
    x = np.asarray(inputs, dtype=np.float64)
    m, T, _ = x.shape
    H = params["gru.u_z"].shape[0]
    h = ad.constant(np.zeros((m, H)))
    one = ad.constant(np.ones((m, H)))
    for t in range(T):
        xt = ad.constant(x[:, t, :])

        def gate(name, state):
            pre = ad.add(ad.matmul(xt, params[f"gru.w_{name}"]), ad.matmul(state, params[f"gru.u_{name}"]))
            return ad.add_bias(pre, params[f"gru.b_{name}"])

        z = ad.sigmoid(gate("z", h))
        r = ad.sigmoid(gate("r", h))
        n = ad.tanh(gate("n", ad.mul(r, h)))
        h = ad.add(ad.mul(ad.sub(one, z), n), ad.mul(z, h))
    return h


def gru_forward(batch: DayBatch, params: Params) -> Tensor:
    """Final GRU hidden state per stock, shape ``(m, H)``."""
    return gru_sequence(batch.inputs, params)


# -- relationship extraction ------------------------------------------------------

def relation_stage(X: Tensor, similarity: Similarity = ad.pearson_rows):
    """Row/column softmax, cross similarity scaled by 1/m, aggregation.

    Returns ``(X_row, X_col, R, R @ X)``.
    """
    m = X.shape[0]
    X_row = ad.softmax_rows(X)
    X_col = ad.softmax_cols(X)
    R = ad.scale(similarity(X_row, X_col), 1.0 / m)
    return X_row, X_col, R, ad.matmul(R, X)


def primary_extraction(X: Tensor, similarity: Similarity = ad.pearson_rows):
    return relation_stage(X, similarity)


def secondary_extraction(X: Tensor, X_row: Tensor, X_col: Tensor, params: Params,
                         similarity: Similarity = ad.pearson_rows):
    """Residual ``X_hid = X - w_a X_row - w_b X_col`` run through a second stage.

    Returns ``(X_hid, R2, F2)``.
    """
    X_hid = ad.sub(ad.sub(X, ad.scale(X_row, params["mix.w_a"])), ad.scale(X_col, params["mix.w_b"]))
    _, _, R2, F2 = relation_stage(X_hid, similarity)
    return X_hid, R2, F2


def predict_head(features: Tensor, params: Params) -> Tensor:
    return ad.add_bias(ad.matvec(features, params["head.w"]), params["head.b"])


def fuse_and_predict(trace: RelationTrace, params: Params) -> Tensor:
    """``F_last = w_c X + w_d F1 + w_e X_hid + w_f F2`` then the linear head."""
    terms = [
        ad.scale(trace.X, params["mix.w_c"]),
        ad.scale(trace.F1, params["mix.w_d"]),
        ad.scale(trace.X_hid, params["mix.w_e"]),
        ad.scale(trace.F2, params["mix.w_f"]),
    ]
    F_last = terms[0]
    for t in terms[1:]:
        F_last = ad.add(F_last, t)
    trace.F_last = F_last
    return predict_head(F_last, params)


def forward_features(X: Tensor, params: Params, similarity: Similarity = ad.pearson_rows):
    X_row, X_col, R1, F1 = primary_extraction(X, similarity)
    X_hid, R2, F2 = secondary_extraction(X, X_row, X_col, params, similarity)
    trace = RelationTrace(X, X_row, X_col, R1, F1, X_hid, R2, F2)
    return fuse_and_predict(trace, params), trace


def forward_day(batch: DayBatch, params: Params, similarity: Similarity = ad.pearson_rows):
    """Full forward pass for one day: ``(predictions (m,), RelationTrace)``."""
    return forward_features(gru_forward(batch, params), params, similarity)
