"""Reverse-mode automatic differentiation over numpy arrays."""

from __future__ import annotations

from collections.abc import Callable, Sequence
from contextvars import ContextVar
from dataclasses import dataclass, field
import logging

import numpy as np

from .const import GN_EPSILON, SMOOTH_L1_BETA
from .exceptions import ConfigError, DeterminismError, InputError, ShapeError

_LOGGER = logging.getLogger(__name__)

_ACTIVE_TAPE: ContextVar[Tape | None] = ContextVar("mftraj_active_tape", default=None)

Backward = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tensor:
    """Array value with an optional gradient, recorded on the active tape."""

    __array_ufunc__ = None

    def __init__(
        self, values, requires_grad: bool = False, name: str | None = None
    ) -> None:
        """Initialize the tensor; integer and boolean input becomes float64."""
        values = np.asarray(values)
        if not np.issubdtype(values.dtype, np.floating):
            values = values.astype(np.float64)
        self.values = values
        self.requires_grad = requires_grad
        self.name = name
        self.grad: np.ndarray | None = None

    def __repr__(self) -> str:
        """Short description."""
        label = f" {self.name}" if self.name else ""
        return f"<Tensor{label} shape={self.shape} requires_grad={self.requires_grad}>"

    @property
    def shape(self) -> tuple[int, ...]:
        """Dimension sizes."""
        return self.values.shape

    @property
    def ndim(self) -> int:
        """Number of dimensions."""
        return self.values.ndim

    @property
    def size(self) -> int:
        """Number of elements."""
        return self.values.size

    def item(self) -> float:
        """Value of a single-element tensor."""
        return float(self.values.reshape(-1)[0]) if self.size == 1 else float(self.values)

    def zero_grad(self) -> None:
        """Forget the accumulated gradient."""
        self.grad = None

    def backward(self) -> None:
        """Backpropagate from this scalar tensor on the active tape."""
        backward(self)

    def __add__(self, other) -> Tensor:
        return add(self, other)

    def __radd__(self, other) -> Tensor:
        return add(other, self)

    def __sub__(self, other) -> Tensor:
        return sub(self, other)

    def __rsub__(self, other) -> Tensor:
        return sub(other, self)

    def __mul__(self, other) -> Tensor:
        return mul(self, other)

    def __rmul__(self, other) -> Tensor:
        return mul(other, self)

    def __truediv__(self, other) -> Tensor:
        if isinstance(other, Tensor):
            raise ShapeError("div: only division by a constant is supported")
        return mul(self, 1.0 / other)

    def __neg__(self) -> Tensor:
        return neg(self)

    def __matmul__(self, other) -> Tensor:
        return matmul(self, other)

    def __getitem__(self, key) -> Tensor:
        return getitem(self, key)

    def reshape(self, *shape) -> Tensor:
        """See reshape()."""
        if len(shape) == 1 and isinstance(shape[0], tuple | list):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes: Sequence[int] | None = None) -> Tensor:
        """See transpose()."""
        return transpose(self, axes)

    @property
    def T(self) -> Tensor:  # noqa: N802
        """Reverse all axes."""
        return transpose(self)

    def sum(self, axis: int | None = None, keepdims: bool = False) -> Tensor:
        """See tensor_sum()."""
        return tensor_sum(self, axis, keepdims)

    def mean(self, axis: int | None = None, keepdims: bool = False) -> Tensor:
        """See mean()."""
        return mean(self, axis, keepdims)


@dataclass
class TapeNode:
    """One recorded operation."""

    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Backward


@dataclass
class Tape:
    """Ordered record of operations executed while the tape is active."""

    nodes: list[TapeNode] = field(default_factory=list)
    _tokens: list = field(default_factory=list, repr=False)

    def __enter__(self) -> Tape:
        """Make this the active tape of the current context."""
        self._tokens.append(_ACTIVE_TAPE.set(self))
        return self

    def __exit__(self, *exc_info) -> None:
        """Restore the previously active tape."""
        _ACTIVE_TAPE.reset(self._tokens.pop())

    def record(self, op: str, inputs: tuple[Tensor, ...], output: Tensor, rule: Backward) -> None:
        """Append an operation."""
        self.nodes.append(TapeNode(op, inputs, output, rule))

    def clear(self) -> None:
        """Drop every recorded operation."""
        self.nodes.clear()

    def _propagate(self, loss: Tensor) -> dict[int, tuple[Tensor, np.ndarray]]:
        if loss.size != 1:
            raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
        grads: dict[int, tuple[Tensor, np.ndarray]] = {
            id(loss): (loss, np.ones_like(loss.values))
        }
        for node in reversed(self.nodes):
            entry = grads.get(id(node.output))
            if entry is None:
                continue
            for tensor, grad in zip(node.inputs, node.backward(entry[1])):
                if grad is None or not tensor.requires_grad:
                    continue
                previous = grads.get(id(tensor))
                grads[id(tensor)] = (
                    tensor,
                    grad if previous is None else previous[1] + grad,
                )
        return grads

    def gradients(self, loss: Tensor, wrt: Sequence[Tensor]) -> list[np.ndarray]:
        """Gradients of ``loss`` for each tensor in ``wrt`` without touching ``.grad``."""
        grads = self._propagate(loss)
        return [
            grads[id(tensor)][1] if id(tensor) in grads else np.zeros_like(tensor.values)
            for tensor in wrt
        ]


def active_tape() -> Tape | None:
    """Tape recording in the current context, if any."""
    return _ACTIVE_TAPE.get()


def backward(loss: Tensor, tape: Tape | None = None) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf, then clear the tape."""
    tape = tape or _ACTIVE_TAPE.get()
    if tape is None:
        raise InputError("backward: no active tape")
    produced = {id(node.output) for node in tape.nodes}
    for key, (tensor, grad) in tape._propagate(loss).items():  # noqa: SLF001
        if key in produced:
            continue
        tensor.grad = grad if tensor.grad is None else tensor.grad + grad
    _LOGGER.debug("Backward over %d tape nodes", len(tape.nodes))
    tape.clear()


def _as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(op: str, values: np.ndarray, inputs: tuple[Tensor, ...], rule: Backward) -> Tensor:
    requires_grad = any(tensor.requires_grad for tensor in inputs)
    output = Tensor(values, requires_grad=requires_grad)
    tape = _ACTIVE_TAPE.get()
    if requires_grad and tape is not None:
        tape.record(op, inputs, output, rule)
    return output


def _broadcast_shape(op: str, left: tuple[int, ...], right: tuple[int, ...]) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(left, right)
    except ValueError as err:
        raise ShapeError(f"{op}: incompatible shapes {left} and {right}") from err


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    """Element-wise sum with trailing-axis broadcasting."""
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("add", a.shape, b.shape)
    return _result(
        "add",
        a.values + b.values,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    """Element-wise difference with trailing-axis broadcasting."""
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("sub", a.shape, b.shape)
    return _result(
        "sub",
        a.values - b.values,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    """Element-wise product with trailing-axis broadcasting."""
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("mul", a.shape, b.shape)
    return _result(
        "mul",
        a.values * b.values,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.values, a.shape),
            _unbroadcast(g * a.values, b.shape),
        ),
    )


def neg(a) -> Tensor:
    """Negation."""
    return mul(a, -1.0)


def matmul(a, b) -> Tensor:
    """[..., k] @ [k, n] -> [..., n]; the right operand must be 2-D."""
    a, b = _as_tensor(a), _as_tensor(b)
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def rule(g: np.ndarray):
        rows = g.reshape(-1, b.shape[1])
        grad_a = (rows @ b.values.T).reshape(a.shape)
        grad_b = a.values.reshape(-1, b.shape[0]).T @ rows
        return grad_a, grad_b

    return _result("matmul", a.values @ b.values, (a, b), rule)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    """Join tensors along an existing axis."""
    tensors = tuple(_as_tensor(tensor) for tensor in tensors)
    try:
        values = np.concatenate([tensor.values for tensor in tensors], axis=axis)
    except ValueError as err:
        raise ShapeError(
            f"concat: incompatible shapes {[tensor.shape for tensor in tensors]}"
        ) from err
    splits = np.cumsum([tensor.shape[axis] for tensor in tensors])[:-1]
    return _result(
        "concat", values, tensors, lambda g: np.split(g, splits, axis=axis)
    )


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    """Join tensors along a new axis."""
    tensors = [_as_tensor(tensor) for tensor in tensors]
    position = axis if axis >= 0 else tensors[0].ndim + 1 + axis
    expanded = [
        reshape(tensor, tensor.shape[:position] + (1,) + tensor.shape[position:])
        for tensor in tensors
    ]
    return concat(expanded, axis=position)


def getitem(a, key) -> Tensor:
    """Basic or integer-array indexing."""
    a = _as_tensor(a)
    parts = key if isinstance(key, tuple) else (key,)
    basic = all(
        part is None or part is Ellipsis or isinstance(part, int | slice) for part in parts
    )

    def rule(g: np.ndarray):
        grad = np.zeros_like(a.values)
        if basic:
            # basic indexing never repeats an element
            grad[key] += g
        else:
            np.add.at(grad, key, g)
        return (grad,)

    return _result("getitem", a.values[key], (a,), rule)


def reshape(a, shape: Sequence[int]) -> Tensor:
    """Same values, new shape."""
    a = _as_tensor(a)
    try:
        values = a.values.reshape(shape)
    except ValueError as err:
        raise ShapeError(f"reshape: cannot reshape {a.shape} to {tuple(shape)}") from err
    return _result("reshape", values, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes: Sequence[int] | None = None) -> Tensor:
    """Permute axes (reverse them by default)."""
    a = _as_tensor(a)
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _result(
        "transpose", a.values.transpose(axes), (a,), lambda g: (g.transpose(inverse),)
    )


def _expand_reduced(g: np.ndarray, shape: tuple[int, ...], axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def tensor_sum(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    """Sum over one axis or all elements."""
    a = _as_tensor(a)
    return _result(
        "sum",
        a.values.sum(axis=axis, keepdims=keepdims),
        (a,),
        lambda g: (_expand_reduced(g, a.shape, axis, keepdims),),
    )


def mean(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    """Mean over one axis or all elements."""
    a = _as_tensor(a)
    count = a.size if axis is None else a.shape[axis]
    return _result(
        "mean",
        a.values.mean(axis=axis, keepdims=keepdims),
        (a,),
        lambda g: (_expand_reduced(g, a.shape, axis, keepdims) / count,),
    )


def _logistic(values: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * values))


def sigmoid(a) -> Tensor:
    """Logistic function."""
    a = _as_tensor(a)
    out = _logistic(a.values)
    return _result("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus(a) -> Tensor:
    """log(1 + e^x)."""
    a = _as_tensor(a)
    return _result(
        "softplus",
        np.logaddexp(0.0, a.values),
        (a,),
        lambda g: (g * _logistic(a.values),),
    )


def tanh(a) -> Tensor:
    """Hyperbolic tangent."""
    a = _as_tensor(a)
    out = np.tanh(a.values)
    return _result("tanh", out, (a,), lambda g: (g * (1.0 - out**2),))


def relu(a) -> Tensor:
    """max(x, 0)."""
    a = _as_tensor(a)
    return _result(
        "relu", np.maximum(a.values, 0.0), (a,), lambda g: (g * (a.values > 0),)
    )


def exp(a) -> Tensor:
    """e^x."""
    a = _as_tensor(a)
    out = np.exp(a.values)
    return _result("exp", out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    """Natural logarithm."""
    a = _as_tensor(a)
    return _result("log", np.log(a.values), (a,), lambda g: (g / a.values,))


def softmax(a, axis: int = -1) -> Tensor:
    """Normalized exponentials along ``axis``."""
    a = _as_tensor(a)
    shifted = np.exp(a.values - a.values.max(axis=axis, keepdims=True))
    out = shifted / shifted.sum(axis=axis, keepdims=True)
    return _result(
        "softmax",
        out,
        (a,),
        lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),),
    )


def group_norm(x, groups: int, gamma, beta, eps: float = GN_EPSILON) -> Tensor:
    """Normalize channel groups of the last axis, then scale and shift."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    channels = x.shape[-1]
    if groups < 1 or channels % groups:
        raise ConfigError(f"group_norm: {groups} groups do not divide {channels} channels")
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise ShapeError(
            f"group_norm: affine shapes {gamma.shape}, {beta.shape} for {channels} channels"
        )
    width = channels // groups
    grouped = x.values.reshape(x.shape[:-1] + (groups, width))
    centered = grouped - grouped.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered**2).mean(axis=-1, keepdims=True) + eps)
    normalized = centered * inv_std
    flat = normalized.reshape(x.shape)

    def rule(g: np.ndarray):
        scaled = (g * gamma.values).reshape(grouped.shape)
        grad_x = inv_std * (
            scaled
            - scaled.mean(axis=-1, keepdims=True)
            - normalized * (scaled * normalized).mean(axis=-1, keepdims=True)
        )
        leading = tuple(range(g.ndim - 1))
        return (
            grad_x.reshape(x.shape),
            (g * flat).sum(axis=leading),
            g.sum(axis=leading),
        )

    return _result("group_norm", flat * gamma.values + beta.values, (x, gamma, beta), rule)


def smooth_l1(pred, target, beta: float = SMOOTH_L1_BETA) -> Tensor:
    """Element-wise smooth L1: 0.5 d^2 / beta below beta, |d| - 0.5 beta above."""
    pred, target = _as_tensor(pred), _as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"smooth_l1: shapes {pred.shape} and {target.shape} differ")
    diff = pred.values - target.values
    small = np.abs(diff) < beta
    values = np.where(small, 0.5 * diff**2 / beta, np.abs(diff) - 0.5 * beta)
    slope = np.where(small, diff / beta, np.sign(diff))
    return _result("smooth_l1", values, (pred, target), lambda g: (g * slope, -g * slope))


def gaussian_sample(mu, logvar, noise) -> Tensor:
    """Reparameterized sample mu + exp(logvar / 2) * noise."""
    return add(mu, mul(exp(mul(logvar, 0.5)), noise))


@dataclass(frozen=True)
class GradientReport:
    """Maximum relative gradient error per checked input."""

    errors: dict[str, float]
    tolerance: float

    @property
    def max_error(self) -> float:
        """Largest error over all inputs."""
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        """Whether every input is within tolerance."""
        return self.max_error < self.tolerance

    def format_table(self) -> str:
        """Plain-text table, one row per input."""
        width = max((len(name) for name in self.errors), default=5)
        lines = [f"{'input':<{width}}  max_rel_err  status"]
        for name, error in self.errors.items():
            status = "ok" if error < self.tolerance else "FAIL"
            lines.append(f"{name:<{width}}  {error:11.3e}  {status}")
        return "\n".join(lines)


def gradient_check(
    func: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-5,
    tol: float = 1e-3,
) -> GradientReport:
    """Compare analytic gradients of ``func(*inputs)`` with central differences.

    Only inputs with ``requires_grad`` are checked. Relative error uses the
    denominator max(1, |analytic|, |numeric|).
    """
    checked = [tensor for tensor in inputs if tensor.requires_grad]
    for tensor in checked:
        tensor.values = np.array(tensor.values, dtype=tensor.values.dtype, order="C")
    with Tape() as tape:
        loss = func(*inputs)
        analytic = tape.gradients(loss, checked)
    base = loss.item()
    repeat = func(*inputs).item()
    if repeat != base:
        raise DeterminismError(
            f"gradient_check: function returned {base!r} then {repeat!r}"
        )

    errors = {}
    for index, (tensor, grad) in enumerate(zip(checked, analytic)):
        flat = tensor.values.reshape(-1)
        numeric = np.empty(flat.size)
        for position in range(flat.size):
            original = flat[position]
            flat[position] = original + eps
            plus = func(*inputs).item()
            flat[position] = original - eps
            minus = func(*inputs).item()
            flat[position] = original
            numeric[position] = (plus - minus) / (2.0 * eps)
        grad = grad.reshape(-1)
        scale = np.maximum(1.0, np.maximum(np.abs(grad), np.abs(numeric)))
        errors[tensor.name or f"input{index}"] = float(
            np.max(np.abs(grad - numeric) / scale, initial=0.0)
        )
    report = GradientReport(errors, tol)
    _LOGGER.debug("Gradient check:\n%s", report.format_table())
    return report
