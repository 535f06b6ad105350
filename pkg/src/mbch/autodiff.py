"""A small dense-tensor engine with reverse-mode differentiation.

Only the operations the MBCH forward pass needs are provided. Every op takes
``Tensor`` inputs, computes its value eagerly in float64 and records a
closure that propagates the output gradient back to its inputs.
``backward`` walks the recorded graph in reverse topological order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    BatchTooSmallError,
    ContractError,
    DimensionError,
    EvaluationError,
    LabelError,
    SequenceTooShortError,
)

DTYPE = np.float64


class Tensor:
    """Dense float64 array that can take part in a recorded computation."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, _parents=(), op: str = ""):
        self.data = np.array(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = tuple(_parents)
        self._backward: Callable[[np.ndarray], tuple] | None = None
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def values(self) -> np.ndarray:
        return self.data.ravel()

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=DTYPE)
        else:
            self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op or 'leaf'})"

    def __add__(self, other):
        return add(self, _as_tensor(other, self.shape))

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, _as_tensor(other, self.shape))

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.shape))

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.shape), self)


class Parameter(Tensor):
    """A named leaf tensor that always requires a gradient."""

    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def _as_tensor(x, shape) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.broadcast_to(np.asarray(x, dtype=DTYPE), shape))


def _result(data, parents, op, backward) -> Tensor:
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents), _parents=parents, op=op)
    if out.requires_grad:
        out._backward = backward
    return out


def _same_shape(op: str, *xs: Tensor) -> None:
    shapes = [x.shape for x in xs]
    if any(s != shapes[0] for s in shapes[1:]):
        raise DimensionError(f"{op}: shape mismatch {' vs '.join(map(str, shapes))}")


# -- linear maps ------------------------------------------------------------


def affine(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ W + b`` over the last axis; leading axes of ``x`` are batch axes."""
    O = W.shape[-1]
    if W.data.ndim != 2 or x.shape[-1] != W.shape[0] or (b is not None and b.shape != (O,)):
        bshape = None if b is None else b.shape
        raise DimensionError(f"affine: x {x.shape}, W {W.shape}, b {bshape} do not compose")
    out = x.data @ W.data
    if b is not None:
        out = out + b.data

    def backward(g):
        lead = g.reshape(-1, O)
        return g @ W.data.T, x.data.reshape(-1, x.shape[-1]).T @ lead, lead.sum(axis=0)

    parents = (x, W) if b is None else (x, W, b)
    return _result(out, parents, "affine", backward)


def conv1d_valid(x: Tensor, filters: Tensor, bias: Tensor | None = None) -> Tensor:
    """Valid 1-D convolution of a word-vector sequence.

    ``x`` is ``[n, M]`` or ``[B, n, M]``, ``filters`` is ``[F, h, M]``; the
    output has ``n - h + 1`` positions and ``F`` channels.
    """
    F, h, M = filters.shape
    if x.shape[-1] != M or (bias is not None and bias.shape != (F,)):
        bshape = None if bias is None else bias.shape
        raise DimensionError(
            f"conv1d_valid: x {x.shape}, filters {filters.shape}, bias {bshape} do not compose"
        )
    n = x.shape[-2]
    if n < h:
        raise SequenceTooShortError(f"conv1d_valid: sequence length {n} < window {h}")
    L = n - h + 1
    # [..., L, M, h] -> [..., L, h*M] with window-major layout matching filters
    cols = np.swapaxes(sliding_window_view(x.data, h, axis=-2), -1, -2)
    cols = cols.reshape(*x.shape[:-2], L, h * M)
    Wmat = filters.data.reshape(F, h * M)
    out = cols @ Wmat.T
    if bias is not None:
        out = out + bias.data

    def backward(g):
        g2 = g.reshape(-1, F)
        dW = (g2.T @ cols.reshape(-1, h * M)).reshape(F, h, M)
        dx = None
        if x.requires_grad:
            dx = np.zeros_like(x.data)
            for j in range(h):
                dx[..., j : j + L, :] += g @ filters.data[:, j, :]
        return dx, dW, g2.sum(axis=0)

    parents = (x, filters) if bias is None else (x, filters, bias)
    return _result(out, parents, "conv1d_valid", backward)


# -- elementwise ------------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0.0)

    def backward(g):
        return (g * (x.data > 0),)

    return _result(out, (x,), "relu", backward)


def sigmoid(x: Tensor) -> Tensor:
    # two-branch form avoids overflow of exp for large |x|
    z = x.data
    e = np.exp(-np.abs(z))
    out = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    def backward(g):
        return (g * out * (1.0 - out),)

    return _result(out, (x,), "sigmoid", backward)


def add(x: Tensor, y: Tensor) -> Tensor:
    _same_shape("add", x, y)

    def backward(g):
        return g, g

    return _result(x.data + y.data, (x, y), "add", backward)


def sub(x: Tensor, y: Tensor) -> Tensor:
    _same_shape("sub", x, y)

    def backward(g):
        return g, -g

    return _result(x.data - y.data, (x, y), "sub", backward)


def mul(x: Tensor, y: Tensor) -> Tensor:
    _same_shape("mul", x, y)

    def backward(g):
        return g * y.data, g * x.data

    return _result(x.data * y.data, (x, y), "mul", backward)


def tensor_sum(x: Tensor) -> Tensor:
    def backward(g):
        return (np.broadcast_to(g, x.shape),)

    return _result(x.data.sum(), (x,), "sum", backward)


def concat_channels(xs: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last (channel) axis."""
    if not xs:
        raise DimensionError("concat_channels: nothing to concatenate")
    lead = xs[0].shape[:-1]
    if any(x.shape[:-1] != lead for x in xs):
        raise DimensionError(
            "concat_channels: leading shapes differ: " + ", ".join(str(x.shape) for x in xs)
        )
    bounds = np.cumsum([0] + [x.shape[-1] for x in xs])

    def backward(g):
        return tuple(g[..., lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:]))

    return _result(np.concatenate([x.data for x in xs], axis=-1), tuple(xs), "concat", backward)


# -- normalisation and pooling ----------------------------------------------


@dataclass
class RunningStats:
    mean: np.ndarray
    var: np.ndarray
    momentum: float = 0.1

    @classmethod
    def fresh(cls, channels: int, momentum: float = 0.1) -> "RunningStats":
        return cls(np.zeros(channels, dtype=DTYPE), np.ones(channels, dtype=DTYPE), momentum)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    eps: float = 1e-5,
    mode: str = "train",
    state: RunningStats | None = None,
    mask: np.ndarray | None = None,
    shift: Tensor | None = None,
) -> Tensor:
    """Per-channel batch normalisation of ``x + shift`` over every leading axis.

    In train mode the statistics are the mean and population variance of the
    rows selected by ``mask`` (all rows when omitted); unselected rows are
    normalised with the same statistics but do not influence them. ``state``
    is updated with momentum in train mode and read in infer mode.

    ``shift`` is a per-channel bias applied before normalisation. Batch
    statistics cancel it exactly, so in train mode it is only folded into the
    running mean and receives a zero gradient; this keeps the output
    bit-identical under changes to it instead of merely equal up to rounding.
    """
    C = x.shape[-1]
    if gamma.shape != (C,) or beta.shape != (C,) or (shift is not None and shift.shape != (C,)):
        raise DimensionError(f"batch_norm: x {x.shape} vs gamma {gamma.shape}, beta {beta.shape}")
    rows = x.data.reshape(-1, C)
    s = 0.0 if shift is None else shift.data
    sel = np.ones(rows.shape[0], dtype=bool) if mask is None else np.asarray(mask, dtype=bool).reshape(-1)
    if sel.shape[0] != rows.shape[0]:
        raise DimensionError(f"batch_norm: mask {np.shape(mask)} does not match x {x.shape}")

    if mode == "train":
        m = int(sel.sum())
        if m < 2:
            raise BatchTooSmallError(f"batch_norm: train mode needs at least 2 rows, got {m}")
        mu = rows[sel].mean(axis=0)
        var = ((rows[sel] - mu) ** 2).mean(axis=0)
        if state is not None:
            state.mean = (1 - state.momentum) * state.mean + state.momentum * (mu + s)
            state.var = (1 - state.momentum) * state.var + state.momentum * var
        centered = rows - mu
    elif mode == "infer":
        if state is None:
            raise ContractError("batch_norm: infer mode requires running statistics")
        m = 0
        var = state.var.copy()
        centered = rows + s - state.mean
    else:
        raise ContractError(f"batch_norm: unknown mode {mode!r}")

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = (gamma.data * xhat + beta.data).reshape(x.shape)

    def backward(g):
        g2 = g.reshape(-1, C)
        dgamma, dbeta = (g2 * xhat).sum(axis=0), g2.sum(axis=0)
        dxhat = g2 * gamma.data
        dx = dxhat * inv_std
        if mode == "train":
            # statistics depend on the selected rows only
            dvar = -0.5 * (dxhat * centered).sum(axis=0) * inv_std**3
            dmu = -(dxhat.sum(axis=0)) * inv_std
            dx[sel] += (2.0 / m) * dvar * centered[sel] + dmu / m
            dshift = np.zeros(C)
        else:
            dshift = dx.sum(axis=0)
        return dx.reshape(x.shape), dgamma, dbeta, dshift

    parents = (x, gamma, beta) if shift is None else (x, gamma, beta, shift)
    return _result(out, parents, f"batch_norm[{mode}]", backward)


def max_over_time(x: Tensor, valid_len) -> Tensor:
    """Max over the time axis restricted to the first ``valid_len`` positions.

    ``x`` is ``[L, F]`` with an integer ``valid_len`` or ``[B, L, F]`` with one
    length per row. Ties send the gradient to the lowest index.
    """
    L = x.shape[-2]
    lens = np.atleast_1d(np.asarray(valid_len))
    if np.any(lens < 1) or np.any(lens > L):
        raise IndexError(f"max_over_time: valid_len {valid_len} outside [1, {L}]")
    batched = x.data.ndim == 3
    data = x.data if batched else x.data[None]
    if lens.shape[0] != data.shape[0]:
        raise DimensionError(f"max_over_time: {lens.shape[0]} lengths for batch of {data.shape[0]}")
    positions = np.arange(L)[None, :, None]
    masked = np.where(positions < lens[:, None, None], data, -np.inf)
    idx = masked.argmax(axis=1)  # [B, F]
    out = np.take_along_axis(data, idx[:, None, :], axis=1)[:, 0, :]

    def backward(g):
        g3 = g if batched else g[None]
        dx = np.zeros_like(data)
        np.put_along_axis(dx, idx[:, None, :], g3[:, None, :], axis=1)
        return (dx if batched else dx[0],)

    return _result(out if batched else out[0], (x,), "max_over_time", backward)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, labels) -> tuple[Tensor, np.ndarray]:
    """Mean negative log-likelihood of ``labels`` under softmax(``logits``).

    Returns the scalar loss tensor and the probability matrix.
    """
    q = logits.data
    if q.ndim == 1:
        q = q[None]
    B, k = q.shape
    labels = np.atleast_1d(np.asarray(labels))
    if labels.shape != (B,):
        raise DimensionError(f"softmax_cross_entropy: {labels.shape[0]} labels for {B} rows")
    if not np.issubdtype(labels.dtype, np.integer) or np.any(labels < 0) or np.any(labels >= k):
        raise LabelError(f"softmax_cross_entropy: labels {labels.tolist()} outside [0, {k})")
    z = q - q.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    log_probs = z - logsum[:, None]
    probs = np.exp(log_probs)
    loss = -log_probs[np.arange(B), labels].mean()

    def backward(g):
        d = probs.copy()
        d[np.arange(B), labels] -= 1.0
        d *= g / B
        return (d.reshape(logits.shape),)

    return _result(loss, (logits,), "softmax_xent", backward), probs


# -- gradients ---------------------------------------------------------------


def topological_order(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root``, each after all of its inputs."""
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
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, params: Iterable[Tensor] = ()) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    Intermediate gradients live only for the duration of the call. Any tensor
    in ``params`` not reached from ``loss`` ends up with a zero gradient.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topological_order(loss)):
        g = grads.pop(id(node), None)
        if g is None or not node.requires_grad:
            continue
        if node._backward is None:
            node._accumulate(g)
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else np.array(pg, dtype=DTYPE)
    for p in params:
        if p.grad is None:
            p.zero_grad()


@dataclass
class GradCheckReport:
    max_rel_error: dict[str, float]
    failures: dict[str, list[tuple[int, ...]]] = field(default_factory=dict)
    tol: float = 1e-4

    @property
    def ok(self) -> bool:
        return not any(self.failures.values())

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)


def relative_error(analytic, numeric, floor: float = 1e-8):
    a = np.asarray(analytic, dtype=DTYPE)
    n = np.asarray(numeric, dtype=DTYPE)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def grad_check(
    forward_fn: Callable[[], Tensor],
    params: Mapping[str, Tensor] | Sequence[Tensor],
    step: float = 1e-5,
    tol: float = 1e-4,
) -> GradCheckReport:
    """Compare backprop gradients with central finite differences.

    ``forward_fn`` rebuilds the scalar loss from the current parameter values
    each time it is called.
    """
    if not isinstance(params, Mapping):
        params = {getattr(p, "name", f"p{i}"): p for i, p in enumerate(params)}
    for p in params.values():
        p.grad = None
    loss = forward_fn()
    if not np.isfinite(loss.data).all():
        raise EvaluationError(f"grad_check: non-finite loss {loss.data}")
    backward(loss, params.values())
    analytic = {name: p.grad.copy() for name, p in params.items()}

    report = GradCheckReport({}, {}, tol)
    for name, p in params.items():
        numeric = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp = float(forward_fn().data)
            flat[i] = orig - step
            fm = float(forward_fn().data)
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise EvaluationError(f"grad_check: non-finite loss perturbing {name}[{i}]")
            numeric.reshape(-1)[i] = (fp - fm) / (2 * step)
        err = relative_error(analytic[name], numeric)
        report.max_rel_error[name] = float(err.max()) if err.size else 0.0
        report.failures[name] = [tuple(int(j) for j in ix) for ix in np.argwhere(err > tol)]
    return report
