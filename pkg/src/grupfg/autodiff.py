"""Minimal define-by-run reverse-mode autodiff on float64 numpy arrays.

Only the operations the model family needs are provided. Every op builds a
new :class:`Tensor` whose ``_backward`` closure maps the output gradient to
one gradient per parent. :func:`backward` walks the graph once in reverse
topological order and accumulates into the ``grad`` buffer of every leaf
that requires gradients.

Gradients accumulate across calls; use :func:`zero_grads` between steps.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    ContractError,
    DeterminismError,
    DimensionError,
    InsufficientSamplesError,
    NumericError,
)

PEARSON_EPS = 1e-8


class Tensor:
    """Dense float64 array that records how it was produced."""

    __slots__ = ("_values", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, values, requires_grad: bool = False, *, _parents=(), _backward=None, op: str = "leaf"):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = tuple(_parents)
        self._backward = _backward
        self.op = op

    @property
    def values(self) -> np.ndarray:
        return self._values

    @values.setter
    def values(self, new) -> None:
        # Arithmetic on 0-d arrays yields numpy scalars; keep a real ndarray so
        # in-place updates (optimisers, grad_check) always hit the stored data.
        self._values = np.asarray(new, dtype=np.float64)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        return float(self.values)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r})"

    def __add__(self, other):
        return add(self, _wrap(other))

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(values, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    """Create an op output; drop the closure when nothing upstream needs grads."""
    if any(p.requires_grad for p in parents):
        return Tensor(values, True, _parents=parents, _backward=backward_fn, op=op)
    return Tensor(values, False, op=op)


def constant(values) -> Tensor:
    return Tensor(values, False)


def parameter(values) -> Tensor:
    return Tensor(np.array(values, dtype=np.float64), True)


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _check_finite(x: Tensor, op: str) -> None:
    if not np.isfinite(x.values).all():
        raise NumericError(f"{op}: non-finite input")


# -- elementwise -------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return _result(a.values + b.values, (a, b), lambda g: (g, g), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return _result(a.values - b.values, (a, b), lambda g: (g, -g), "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    av, bv = a.values, b.values
    return _result(av * bv, (a, b), lambda g: (g * bv, g * av), "mul")


def scale(x: Tensor, s) -> Tensor:
    """Multiply by a scalar: a python number or a 0-d Tensor (learnable)."""
    xv = x.values
    if not isinstance(s, Tensor):
        s = float(s)
        return _result(xv * s, (x,), lambda g: (g * s,), "scale")
    if s.values.size != 1:
        raise DimensionError(f"scale: expected scalar, got shape {s.shape}")
    sv = s.values.reshape(())
    sshape = s.shape

    def _back(g):
        return g * sv, np.reshape(np.sum(g * xv), sshape)

    return _result(xv * sv, (x, s), _back, "scale")


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """``x + b`` where ``b`` is a scalar or matches the trailing dimension."""
    if b.shape not in ((), x.shape[-1:]) and b.values.size != 1:
        raise DimensionError(f"add_bias: bias shape {b.shape} incompatible with {x.shape}")
    bshape = b.shape
    lead = tuple(range(x.values.ndim - len(bshape)))

    def _back(g):
        return g, np.reshape(np.sum(g, axis=lead) if lead else g, bshape)

    return _result(x.values + b.values, (x, b), _back, "add_bias")


def sigmoid(x: Tensor) -> Tensor:
    y = 0.5 * (np.tanh(0.5 * x.values) + 1.0)
    return _result(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.values)
    return _result(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return _result(np.sum(x.values), (x,), lambda g: (np.broadcast_to(g, shape).copy(),), "sum_all")


def mean_all(x: Tensor) -> Tensor:
    shape, n = x.shape, x.values.size
    return _result(np.mean(x.values), (x,), lambda g: (np.full(shape, g / n),), "mean_all")


# -- linear algebra ------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product."""
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.values, b.values
    return _result(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g), "matmul")


def matvec(a: Tensor, v: Tensor) -> Tensor:
    if a.values.ndim != 2 or v.values.ndim != 1 or a.shape[1] != v.shape[0]:
        raise DimensionError(f"matvec: cannot multiply {a.shape} by {v.shape}")
    av, vv = a.values, v.values
    return _result(av @ vv, (a, v), lambda g: (np.outer(g, vv), av.T @ g), "matvec")


def transpose(x: Tensor) -> Tensor:
    if x.values.ndim != 2:
        raise DimensionError(f"transpose: expected 2-D, got {x.shape}")
    return _result(x.values.T.copy(), (x,), lambda g: (g.T,), "transpose")


# -- softmax ------------------------------------------------------------------

def _softmax(x: Tensor, axis: int, op: str) -> Tensor:
    if x.values.ndim != 2 or 0 in x.shape:
        raise DimensionError(f"{op}: expected non-empty 2-D input, got {x.shape}")
    _check_finite(x, op)
    e = np.exp(x.values - x.values.max(axis=axis, keepdims=True))
    y = e / e.sum(axis=axis, keepdims=True)

    def _back(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return _result(y, (x,), _back, op)


def softmax_rows(x: Tensor) -> Tensor:
    """Normalise each row to a probability vector."""
    return _softmax(x, 1, "softmax_rows")


def softmax_cols(x: Tensor) -> Tensor:
    """Normalise each column (across stocks) to a probability vector."""
    return _softmax(x, 0, "softmax_cols")


# -- correlation ----------------------------------------------------------------

def _row_similarity(a: Tensor, b: Tensor, center: bool, op: str) -> Tensor:
    """Shared kernel for Pearson (centred) and cosine (raw) row similarity.

    ``out[x, y] = <a_x, b_y> / max(|a_x| |b_y|, eps)`` over (optionally
    centred) rows. Pairs involving a degenerate row (constant for Pearson,
    all-zero for cosine) are exactly 0 and pass no gradient.
    """
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}")
    av, bv = a.values, b.values
    if center:
        if a.shape[1] < 2:
            raise InsufficientSamplesError(f"{op}: need at least 2 columns, got {a.shape[1]}")
        ac = av - av.mean(axis=1, keepdims=True)
        bc = bv - bv.mean(axis=1, keepdims=True)
        live = np.outer(np.ptp(av, axis=1) > 0, np.ptp(bv, axis=1) > 0)
    else:
        ac, bc = av, bv
        live = np.outer(np.any(av != 0, axis=1), np.any(bv != 0, axis=1))
    na = np.sqrt(np.sum(ac * ac, axis=1))
    nb = np.sqrt(np.sum(bc * bc, axis=1))
    num = ac @ bc.T
    den = np.outer(na, nb)
    unclamped = den > PEARSON_EPS
    den_g = np.where(unclamped, den, PEARSON_EPS)
    out = np.where(live, num / den_g, 0.0)

    def _back(g):
        g = np.where(live, g, 0.0)
        q = g / den_g
        d_ac = q @ bc
        d_bc = q.T @ ac
        d_den = np.where(unclamped, -g * out / den_g, 0.0)
        d_na = d_den @ nb
        d_nb = d_den.T @ na
        with np.errstate(divide="ignore", invalid="ignore"):
            d_ac += np.where(na[:, None] > 0, d_na[:, None] * ac / na[:, None], 0.0)
            d_bc += np.where(nb[:, None] > 0, d_nb[:, None] * bc / nb[:, None], 0.0)
        if center:
            d_ac -= d_ac.mean(axis=1, keepdims=True)
            d_bc -= d_bc.mean(axis=1, keepdims=True)
        return d_ac, d_bc

    return _result(out, (a, b), _back, op)


def pearson_rows(a: Tensor, b: Tensor) -> Tensor:
    """Pearson correlation of every row of ``a`` with every row of ``b``.

    Returns an ``(m_a, m_b)`` matrix. The denominator is clamped at 1e-8 and
    any pair with a constant row is defined as 0 with zero gradient.
    """
    return _row_similarity(a, b, True, "pearson_rows")


def cosine_rows(a: Tensor, b: Tensor) -> Tensor:
    """Cosine similarity of every row of ``a`` with every row of ``b``."""
    return _row_similarity(a, b, False, "cosine_rows")


# -- graph traversal ----------------------------------------------------------

def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``."""
    if loss.values.size != 1 or loss.values.ndim != 0:
        raise ContractError(f"backward: loss must be a scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topological(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            if node.grad is None:
                node.grad = np.zeros_like(node.values)
            node.grad += g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad or pg is None:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


def _as_list(params) -> list[Tensor]:
    if isinstance(params, dict):
        return list(params.values())
    return list(params)


def grad_check(f: Callable[[], Tensor], params, eps: float = 1e-5) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``f`` takes no arguments and reads the current values of ``params``.
    Relative error per coordinate is ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    if eps <= 0:
        raise ContractError("grad_check: eps must be positive")
    params = _as_list(params)
    first, second = f(), f()
    if not np.array_equal(first.values, second.values):
        raise DeterminismError("grad_check: f returned different values for identical inputs")

    zero_grads(params)
    backward(f())
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.values) if p.grad is None else p.grad.copy()
        if not p.values.flags.c_contiguous or not p.values.flags.writeable:
            p.values = p.values.copy()
        flat = p.values.reshape(-1)  # a view, so writes below perturb p
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = f().item()
            flat[i] = orig - eps
            lo = f().item()
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * eps)
            a = analytic.reshape(-1)[i]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
    zero_grads(params)
    return worst
