"""Dense 2-D float64 tensors with tape-based reverse-mode differentiation.

Every operation in this module takes and returns :class:`Tensor` values.  When a
:class:`Tape` is active (``with Tape() as tape:``) and at least one operand
requires a gradient, the operation appends a record holding the saved values
its backward rule needs.  :func:`backward` then sweeps the records in reverse.

Only row-vector bias broadcasting is supported (``add_bias``); per-row scaling
goes through the explicit ``mul_rows`` primitive.
"""

from __future__ import annotations

import contextvars
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, DimensionError, GradientError, NonDeterministicError

__all__ = [
    "Tensor",
    "Tape",
    "Gradients",
    "parameter",
    "constant",
    "matmul",
    "add",
    "sub",
    "hadamard",
    "scale",
    "add_bias",
    "mul_rows",
    "sigmoid",
    "relu",
    "logsigmoid",
    "square",
    "elementwise",
    "transpose",
    "concat_cols",
    "concat_rows",
    "mean_rows",
    "sum_rows",
    "mean_all",
    "softmax_rows",
    "row_normalize",
    "layer_norm",
    "l2_normalize_rows",
    "grouped_linear",
    "linear",
    "backward",
    "finite_difference_check",
    "check_gradients",
    "GradCheckResult",
]

Gradients = Dict[str, np.ndarray]

_ACTIVE_TAPE: contextvars.ContextVar[Optional["Tape"]] = contextvars.ContextVar(
    "archrep_active_tape", default=None
)


class Tensor:
    """A 2-D float64 matrix, optionally a named trainable leaf."""

    __slots__ = ("data", "name", "requires_grad")

    def __init__(self, data, name: Optional[str] = None, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise DimensionError(f"Tensor must be at most 2-D, got shape {arr.shape}")
        self.data = arr
        self.name = name
        self.requires_grad = requires_grad

    @classmethod
    def _wrap(cls, arr: np.ndarray, requires_grad: bool) -> "Tensor":
        t = cls.__new__(cls)
        t.data = arr
        t.name = None
        t.requires_grad = requires_grad
        return t

    @property
    def shape(self) -> Tuple[int, int]:
        return self.data.shape  # type: ignore[return-value]

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise DimensionError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return hadamard(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def parameter(data, name: str) -> Tensor:
    """Trainable leaf tensor identified by ``name``."""
    return Tensor(data, name=name, requires_grad=True)


def constant(data) -> Tensor:
    return Tensor(data)


@dataclass
class _Record:
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    vjp: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tape:
    """Ordered record of primitive applications for one forward pass."""

    def __init__(self) -> None:
        self.records: List[_Record] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE_TAPE.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.records)

    @staticmethod
    def active() -> Optional["Tape"]:
        return _ACTIVE_TAPE.get()


def _result(op: str, out: np.ndarray, inputs: Tuple[Tensor, ...], vjp) -> Tensor:
    needs = any(t.requires_grad for t in inputs)
    tape = _ACTIVE_TAPE.get()
    y = Tensor._wrap(out, requires_grad=needs and tape is not None)
    if y.requires_grad:
        tape.records.append(_Record(op, inputs, y, vjp))
    return y


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    A, B = a.data, b.data
    return _result("matmul", A @ B, (a, b), lambda g: (g @ B.T, A.T @ g))


def transpose(a: Tensor) -> Tensor:
    return _result("transpose", a.data.T.copy(), (a,), lambda g: (g.T,))


def linear(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    y = matmul(x, w)
    return add_bias(y, b) if b is not None else y


def grouped_linear(x: Tensor, w: Tensor, b: Optional[Tensor], groups: int) -> Tensor:
    """Block-diagonal linear map.

    ``w`` has shape ``(d_in / groups, d_out)``: columns ``j*o:(j+1)*o`` hold the
    weight block of group ``j``, applied to input columns ``j*i:(j+1)*i``.
    ``groups == 1`` is exactly ``x @ w + b``.
    """
    n, d_in = x.shape
    if groups < 1 or d_in % groups:
        raise ConfigurationError(f"grouped_linear: input width {d_in} not divisible by groups={groups}")
    gin = d_in // groups
    if w.rows != gin:
        raise DimensionError(f"grouped_linear: weight rows {w.rows} != d_in/groups = {gin}")
    d_out = w.cols
    if d_out % groups:
        raise ConfigurationError(f"grouped_linear: output width {d_out} not divisible by groups={groups}")
    if groups == 1:
        return linear(x, w, b)

    gout = d_out // groups
    X = x.data.reshape(n, groups, gin).transpose(1, 0, 2)  # (g, n, gin)
    W = w.data.reshape(gin, groups, gout).transpose(1, 0, 2)  # (g, gin, gout)
    out = np.matmul(X, W).transpose(1, 0, 2).reshape(n, d_out)

    def vjp(g):
        G = g.reshape(n, groups, gout).transpose(1, 0, 2)
        dX = np.matmul(G, W.transpose(0, 2, 1)).transpose(1, 0, 2).reshape(n, d_in)
        dW = np.matmul(X.transpose(0, 2, 1), G).transpose(1, 0, 2).reshape(gin, d_out)
        return dX, dW

    y = _result("grouped_linear", out, (x, w), vjp)
    return add_bias(y, b) if b is not None else y


# ---------------------------------------------------------------------------
# elementwise


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _result("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return _result("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("hadamard", a, b)
    A, B = a.data, b.data
    return _result("hadamard", A * B, (a, b), lambda g: (g * B, g * A))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _result("scale", a.data * c, (a,), lambda g: (g * c,))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """``x + b`` with ``b`` a 1 x cols row vector broadcast over rows."""
    if b.shape != (1, x.cols):
        raise DimensionError(f"add_bias: bias {b.shape} does not match {x.shape}")
    return _result("add_bias", x.data + b.data, (x, b), lambda g: (g, g.sum(axis=0, keepdims=True)))


def mul_rows(x: Tensor, s: Tensor) -> Tensor:
    """Scale row ``i`` of ``x`` by ``s[i, 0]``."""
    if s.shape != (x.rows, 1):
        raise DimensionError(f"mul_rows: scale {s.shape} does not match {x.shape}")
    X, S = x.data, s.data
    return _result("mul_rows", X * S, (x, s), lambda g: (g * S, (g * X).sum(axis=1, keepdims=True)))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)
    return _result("sigmoid", y, (x,), lambda g: (g * y * (1.0 - y),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _result("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def logsigmoid(x: Tensor) -> Tensor:
    """``log(sigmoid(x))`` without overflow: ``min(x, 0) - log1p(exp(-|x|))``."""
    X = x.data
    y = np.minimum(X, 0.0) - np.log1p(np.exp(-np.abs(X)))
    return _result("logsigmoid", y, (x,), lambda g: (g * _sigmoid(-X),))


def square(x: Tensor) -> Tensor:
    X = x.data
    return _result("square", X * X, (x,), lambda g: (2.0 * g * X,))


_UNARY = {"sigmoid": sigmoid, "relu": relu, "logsigmoid": logsigmoid}
_BINARY = {"add": add, "hadamard": hadamard}


def elementwise(kind: str, x: Tensor, y: Optional[Tensor] = None) -> Tensor:
    """Dispatch a pointwise op by name."""
    if kind in _UNARY:
        return _UNARY[kind](x)
    if kind in _BINARY:
        if y is None:
            raise DimensionError(f"elementwise {kind!r} needs two operands")
        return _BINARY[kind](x, y)
    raise ConfigurationError(f"unknown elementwise kind {kind!r}")


# ---------------------------------------------------------------------------
# reshaping and reductions


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    parts = tuple(parts)
    rows = {p.rows for p in parts}
    if len(rows) != 1:
        raise DimensionError(f"concat_cols: row counts differ {[p.shape for p in parts]}")
    edges = np.cumsum([0] + [p.cols for p in parts])
    out = np.concatenate([p.data for p in parts], axis=1)
    return _result(
        "concat_cols", out, parts, lambda g: tuple(g[:, edges[i] : edges[i + 1]] for i in range(len(parts)))
    )


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    parts = tuple(parts)
    cols = {p.cols for p in parts}
    if len(cols) != 1:
        raise DimensionError(f"concat_rows: column counts differ {[p.shape for p in parts]}")
    edges = np.cumsum([0] + [p.rows for p in parts])
    out = np.concatenate([p.data for p in parts], axis=0)
    return _result(
        "concat_rows", out, parts, lambda g: tuple(g[edges[i] : edges[i + 1]] for i in range(len(parts)))
    )


def mean_rows(x: Tensor) -> Tensor:
    """Column-wise mean over rows, giving 1 x cols."""
    n = x.rows
    if n == 0:
        raise DimensionError("mean_rows: no rows")
    return _result(
        "mean_rows", x.data.mean(axis=0, keepdims=True), (x,), lambda g: (np.repeat(g / n, n, axis=0),)
    )


def sum_rows(x: Tensor) -> Tensor:
    """Column-wise sum over rows, giving 1 x cols."""
    n = x.rows
    return _result("sum_rows", x.data.sum(axis=0, keepdims=True), (x,), lambda g: (np.repeat(g, n, axis=0),))


def mean_all(x: Tensor) -> Tensor:
    size = x.data.size
    shape = x.shape
    return _result(
        "mean_all", np.array([[x.data.mean()]]), (x,), lambda g: (np.full(shape, g[0, 0] / size),)
    )


def softmax_rows(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return _result("softmax_rows", y, (x,), vjp)


def row_normalize(s: Tensor, tol: float = 1e-12) -> Tensor:
    """Divide each row by its sum.

    Rows whose sum is below ``tol`` become the unit vector on the diagonal
    (weight 1 on self); they carry no gradient.  Requires a square matrix only
    when such a row occurs.
    """
    S = s.data
    r = S.sum(axis=1, keepdims=True)
    ok = r >= tol
    safe = np.where(ok, r, 1.0)
    P = S / safe
    dead = np.flatnonzero(~ok[:, 0])
    if dead.size:
        if S.shape[0] != S.shape[1]:
            raise DimensionError(f"row_normalize: zero-sum row in non-square {S.shape}")
        P[dead] = 0.0
        P[dead, dead] = 1.0

    def vjp(g):
        dS = (g - (g * P).sum(axis=1, keepdims=True)) / safe
        dS[dead] = 0.0
        return (dS,)

    return _result("row_normalize", P, (s,), vjp)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row standardization (population variance, eps inside the root)."""
    if eps <= 0:
        raise ConfigurationError("layer_norm: eps must be positive")
    d = x.cols
    if gamma.shape != (1, d) or beta.shape != (1, d):
        raise DimensionError(f"layer_norm: gamma {gamma.shape} / beta {beta.shape} vs width {d}")
    X = x.data
    mu = X.mean(axis=1, keepdims=True)
    xc = X - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    G = gamma.data
    out = xhat * G + beta.data

    def vjp(g):
        dxhat = g * G
        dx = inv * (
            dxhat - dxhat.mean(axis=1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)
        )
        return dx, (g * xhat).sum(axis=0, keepdims=True), g.sum(axis=0, keepdims=True)

    return _result("layer_norm", out, (x, gamma, beta), vjp)


def l2_normalize_rows(x: Tensor, eps: float = 1e-12) -> Tensor:
    """Divide each row by ``max(||row||, eps)``; a zero row stays zero."""
    if eps <= 0:
        raise ConfigurationError("l2_normalize_rows: eps must be positive")
    X = x.data
    norm = np.sqrt((X * X).sum(axis=1, keepdims=True))
    big = norm > eps
    denom = np.where(big, norm, eps)
    Y = X / denom

    def vjp(g):
        radial = np.where(big, (Y * g).sum(axis=1, keepdims=True), 0.0)
        return ((g - Y * radial) / denom,)

    return _result("l2_normalize_rows", Y, (x,), vjp)


# ---------------------------------------------------------------------------
# reverse sweep


def backward(tape: Tape, loss: Tensor, params: Optional[Iterable[Tensor]] = None) -> Gradients:
    """Gradients of scalar ``loss`` with respect to every named leaf on ``tape``.

    If ``params`` is given, each of them gets an entry; those the loss does not
    depend on map to zeros of the parameter's shape.
    """
    if loss.shape != (1, 1):
        raise GradientError(f"backward: loss must be 1x1, got {loss.shape}")
    recs = tape.records
    is_leaf = loss.requires_grad and loss.name is not None
    if not is_leaf and not any(r.output is loss for r in reversed(recs)):
        raise GradientError("backward: loss is detached from the tape")

    adj: Dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    leaves: Dict[int, Tensor] = {}
    if loss.name is not None:
        leaves[id(loss)] = loss
    for rec in reversed(recs):
        g = adj.pop(id(rec.output), None)
        if g is None:
            continue
        for inp, gi in zip(rec.inputs, rec.vjp(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            prev = adj.get(key)
            adj[key] = gi.copy() if prev is None else prev + gi
            if inp.name is not None:
                leaves[key] = inp

    grads: Gradients = {}
    for key, t in leaves.items():
        g = adj[key]
        grads[t.name] = grads[t.name] + g if t.name in grads else g
    if params is not None:
        for p in params:
            if p.name not in grads:
                grads[p.name] = np.zeros_like(p.data)
    return grads


# ---------------------------------------------------------------------------
# finite differences


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_param: Optional[str]
    per_param: Dict[str, float] = field(default_factory=dict)
    coordinates: int = 0


def _rel_err(a: np.ndarray, n: np.ndarray) -> np.ndarray:
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)


def check_gradients(
    f: Callable[[Mapping[str, Tensor]], Tensor],
    params: Mapping[str, Tensor],
    h: float = 1e-3,
    names: Optional[Sequence[str]] = None,
    order: int = 4,
    levels: int = 4,
) -> GradCheckResult:
    """Compare :func:`backward` against central differences for every coordinate.

    ``f`` maps the parameter dict to a 1x1 loss tensor and must be
    deterministic.  Parameters are perturbed in place and restored.

    ``order=2`` is the two-point stencil ``(f(x+h) - f(x-h)) / 2h``; ``order=4``
    (default) the five-point one.  With ``levels > 1`` the step shrinks from
    ``h`` by factors of sqrt(10); the first pair of consecutive estimates that
    agree is used, otherwise the most self-consistent pair.  A ReLU kink inside
    the stencil shows up as disagreement, so this picks a smooth step without
    consulting the analytic gradient.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ConfigurationError(f"finite difference step h={h} outside [1e-7, 1e-3]")
    if order not in (2, 4):
        raise ConfigurationError(f"unsupported stencil order {order}")
    steps = [h * 10.0 ** (-k / 2) for k in range(max(1, levels))]
    if steps[-1] < 1e-7:
        raise ConfigurationError("step ladder falls below 1e-7")

    def value() -> float:
        return f(params).item()

    base = value()
    again = value()
    if base != again and not (math.isnan(base) and math.isnan(again)):
        raise NonDeterministicError(f"f returned {base!r} then {again!r} for identical inputs")

    with Tape() as tape:
        loss = f(params)
    grads = backward(tape, loss, params.values())

    def estimate(flat: np.ndarray, k: int, orig: float, step: float) -> float:
        flat[k] = orig + step
        up = value()
        flat[k] = orig - step
        down = value()
        if order == 2:
            est = (up - down) / (2.0 * step)
        else:
            flat[k] = orig + 2.0 * step
            up2 = value()
            flat[k] = orig - 2.0 * step
            down2 = value()
            est = (8.0 * (up - down) - (up2 - down2)) / (12.0 * step)
        flat[k] = orig
        return est

    per: Dict[str, float] = {}
    count = 0
    for name in names if names is not None else params:
        p = params[name]
        numeric = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        for k in range(flat.size):
            orig = float(flat[k])
            scale_k = max(1.0, abs(orig))
            prev = estimate(flat, k, orig, steps[0] * scale_k)
            best, best_gap = prev, math.inf
            for step in steps[1:]:
                cur = estimate(flat, k, orig, step * scale_k)
                gap = abs(cur - prev) / max(abs(cur), abs(prev), 1e-8)
                if gap < best_gap:
                    best, best_gap = prev, gap
                if gap <= 1e-6:
                    break
                prev = cur
            numeric.reshape(-1)[k] = best
        count += flat.size
        per[name] = float(_rel_err(grads[name], numeric).max()) if flat.size else 0.0

    worst = max(per, key=per.get) if per else None
    return GradCheckResult(per[worst] if worst else 0.0, worst, per, count)


def finite_difference_check(
    f: Callable[[Mapping[str, Tensor]], Tensor], params: Mapping[str, Tensor], h: float = 1e-3, order: int = 4
) -> float:
    """Max over coordinates of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)."""
    return check_gradients(f, params, h, order=order).max_rel_error
