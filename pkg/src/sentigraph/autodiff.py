"""Reverse-mode automatic differentiation on dense float64 arrays.

A :class:`Tensor` wraps a numpy array and remembers the operation that
produced it. Calling :func:`backward` on a scalar tensor walks the recorded
graph once, in reverse topological order, and accumulates gradients into
every participating tensor with ``requires_grad=True``. Everything runs in
64-bit precision so analytic gradients can be validated tightly against
central finite differences (:func:`finite_diff_check`).

Supported operand ranks are 0 (scalars), 1 (vectors) and 2 (matrices).
Broadcasting is deliberately restricted to adding a bias row to a matrix;
every other shape mismatch raises :class:`ShapeError` immediately.
"""

from __future__ import annotations

import struct
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit


class ShapeError(ValueError):
    """Operands of an operation have incompatible shapes."""


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or infinite values."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        # Leaves that can receive gradients carry an accumulator from the
        # start; repeated backward passes add into it until zero_grad().
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data) if self.requires_grad else None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn, op: str) -> Tensor:
    """Build an op result, recording the tape edge only when a parent needs it."""
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op}: produced non-finite values")
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward_fn = backward_fn
    return out


def _shape_fail(op: str, *shapes) -> None:
    raise ShapeError(f"{op}: incompatible shapes {' and '.join(str(s) for s in shapes)}")


# ---------------------------------------------------------------------------
# kink monitoring for the finite-difference checker

_KINK_TOL: float | None = None
_KINK_HIT: bool = False


def _note_kink(values: np.ndarray, pivot: float = 0.0) -> None:
    global _KINK_HIT
    if _KINK_TOL is not None and not _KINK_HIT:
        if np.any(np.abs(values - pivot) <= _KINK_TOL):
            _KINK_HIT = True


@contextmanager
def _watch_kinks(tol: float):
    global _KINK_TOL, _KINK_HIT
    prev_tol, prev_hit = _KINK_TOL, _KINK_HIT
    _KINK_TOL, _KINK_HIT = tol, False
    try:
        yield
    finally:
        _KINK_TOL, _KINK_HIT = prev_tol, prev_hit


def _kink_was_hit() -> bool:
    return _KINK_HIT


# ---------------------------------------------------------------------------
# operations

def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    if ad.ndim not in (1, 2) or bd.ndim not in (1, 2):
        _shape_fail("matmul", ad.shape, bd.shape)
    if ad.shape[-1] != bd.shape[0]:
        _shape_fail("matmul", ad.shape, bd.shape)
    out = ad @ bd

    def backward(g):
        if ad.ndim == 2 and bd.ndim == 2:
            return g @ bd.T, ad.T @ g
        if ad.ndim == 2 and bd.ndim == 1:
            return np.outer(g, bd), ad.T @ g
        if ad.ndim == 1 and bd.ndim == 2:
            return bd @ g, np.outer(ad, g)
        return g * bd, g * ad

    return _make(out, (a, b), backward, "matmul")


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; also accepts matrix + bias row (the one broadcast allowed)."""
    ad, bd = a.data, b.data
    if ad.shape == bd.shape:
        bias_row = False
    elif ad.ndim == 2 and bd.ndim == 1 and ad.shape[1] == bd.shape[0]:
        bias_row = True
    else:
        _shape_fail("add", ad.shape, bd.shape)
    out = ad + bd

    def backward(g):
        return g, (g.sum(axis=0) if bias_row else g)

    return _make(out, (a, b), backward, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product of same-shape tensors."""
    ad, bd = a.data, b.data
    if ad.shape != bd.shape:
        _shape_fail("mul", ad.shape, bd.shape)

    def backward(g):
        return g * bd, g * ad

    return _make(ad * bd, (a, b), backward, "mul")


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat: empty tensor list")
    arrays = [t.data for t in tensors]
    ndim = arrays[0].ndim
    if any(arr.ndim != ndim for arr in arrays):
        _shape_fail("concat", *[arr.shape for arr in arrays])
    out = np.concatenate(arrays, axis=axis)
    sizes = [arr.shape[axis] for arr in arrays]
    offsets = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, offsets, axis=axis))

    return _make(out, tuple(tensors), backward, "concat")


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    ad = a.data
    if axis >= ad.ndim or not (0 <= start < stop <= ad.shape[axis]):
        raise ShapeError(f"slice_axis: [{start}:{stop}] on axis {axis} of {ad.shape}")
    key = (slice(start, stop),) if axis == 0 else (slice(None), slice(start, stop))
    out = ad[key]

    def backward(g):
        full = np.zeros_like(ad)
        full[key] = g
        return (full,)

    return _make(out, (a,), backward, "slice_axis")


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        _shape_fail("transpose", a.data.shape)
    return _make(a.data.T.copy(), (a,), lambda g: (g.T,), "transpose")


def gather_rows(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup with scatter-add backward; `ids` may repeat."""
    ids = np.asarray(ids, dtype=np.int64)
    td = table.data
    if td.ndim != 2 or ids.ndim != 1:
        _shape_fail("gather_rows", td.shape, ids.shape)
    if ids.size and (ids.min() < 0 or ids.max() >= td.shape[0]):
        raise ShapeError(f"gather_rows: id out of range for table with {td.shape[0]} rows")
    out = td[ids]

    def backward(g):
        gt = np.zeros_like(td)
        np.add.at(gt, ids, g)
        return (gt,)

    return _make(out, (table,), backward, "gather_rows")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(a: Tensor) -> Tensor:
    out = expit(a.data)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def relu(a: Tensor) -> Tensor:
    ad = a.data
    _note_kink(ad)
    # subgradient at 0 is 0
    mask = (ad > 0).astype(np.float64)
    return _make(np.maximum(ad, 0.0), (a,), lambda g: (g * mask,), "relu")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    ad = a.data
    if np.any(ad <= 0):
        raise ValueError("log: non-positive input")
    return _make(np.log(ad), (a,), lambda g: (g / ad,), "log")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


def clamp_min(a: Tensor, floor: float) -> Tensor:
    """max(a, floor) elementwise; gradient is zero where the floor is active."""
    ad = a.data
    _note_kink(ad, pivot=floor)
    mask = (ad > floor).astype(np.float64)
    return _make(np.maximum(ad, floor), (a,), lambda g: (g * mask,), "clamp_min")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    ad = a.data
    shifted = ad - ad.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return ((g - dot) * out,)

    return _make(out, (a,), backward, "softmax")


def reduce_sum(a: Tensor, axis: int | None = None) -> Tensor:
    ad = a.data
    if axis is None:
        out = ad.sum()

        def backward(g):
            return (np.full_like(ad, float(g)),)
    else:
        if ad.ndim != 2 or axis not in (0, 1):
            _shape_fail("reduce_sum", ad.shape)
        out = ad.sum(axis=axis)

        def backward(g):
            return (np.broadcast_to(g, ad.shape).copy() if axis == 0
                    else np.broadcast_to(g[:, None], ad.shape).copy(),)

    return _make(out, (a,), backward, "reduce_sum")


def reduce_mean(a: Tensor, axis: int | None = None) -> Tensor:
    ad = a.data
    count = ad.size if axis is None else ad.shape[axis]
    if count == 0:
        raise ShapeError("reduce_mean: empty axis")
    return scale(reduce_sum(a, axis=axis), 1.0 / count)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-12) -> Tensor:
    """Normalize each row of a matrix to zero mean / unit variance, then scale and shift."""
    xd, gd, bd = x.data, gain.data, bias.data
    if xd.ndim != 2 or gd.shape != (xd.shape[1],) or bd.shape != (xd.shape[1],):
        _shape_fail("layer_norm", xd.shape, gd.shape, bd.shape)
    mu = xd.mean(axis=1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gd + bd

    def backward(g):
        dgain = (g * xhat).sum(axis=0)
        dbias = g.sum(axis=0)
        dxhat = g * gd
        m1 = dxhat.mean(axis=1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
        dx = inv * (dxhat - m1 - xhat * m2)
        return dx, dgain, dbias

    return _make(out, (x, gain, bias), backward, "layer_norm")


# ---------------------------------------------------------------------------
# backward pass

def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        nid = id(node)
        if nid in visited:
            continue
        visited.add(nid)
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    order.reverse()
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(tensor) into .grad for every reachable tensor.

    Repeated calls keep accumulating; zero grads explicitly between steps.
    """
    if loss.data.shape != ():
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    # Totals propagate through a local map so that stale .grad values from a
    # previous pass can never leak into this one.
    pending: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
    for node in _toposort(loss):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("backward: produced non-finite gradient")
        if node.grad is None:
            node.grad = np.zeros_like(node.data)
        node.grad = node.grad + g
        if node._backward_fn is None:
            continue
        for parent, pg in zip(node._parents, node._backward_fn(g)):
            if not parent.requires_grad or pg is None:
                continue
            key = id(parent)
            prev = pending.get(key)
            pending[key] = pg if prev is None else prev + pg


# ---------------------------------------------------------------------------
# parameter registry

class ParameterStore:
    """Ordered name -> trainable Tensor registry."""

    def __init__(self):
        self._tensors: dict[str, Tensor] = {}
        self._no_decay: set[str] = set()

    def add(self, name: str, data, no_decay: bool = False) -> Tensor:
        if name in self._tensors:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(data, dtype=np.float64), requires_grad=True)
        self._tensors[name] = t
        if no_decay:
            self._no_decay.add(name)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def tensors(self) -> list[Tensor]:
        return list(self._tensors.values())

    def decayed_items(self):
        """Parameters participating in the L2 penalty (biases are exempt)."""
        return [(n, t) for n, t in self._tensors.items() if n not in self._no_decay]

    def zero_grads(self) -> None:
        for t in self._tensors.values():
            t.zero_grad()

    def squared_norm(self) -> float:
        return float(sum((t.data ** 2).sum() for t in self._tensors.values()))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self._tensors.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._tensors) - set(state)
        extra = set(state) - set(self._tensors)
        if missing or extra:
            raise ValueError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, t in self._tensors.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise ShapeError(f"parameter {name!r}: shape {arr.shape} != {t.data.shape}")
            t.data = arr.copy()


# ---------------------------------------------------------------------------
# finite-difference oracle

@dataclass
class FiniteDiffReport:
    """Outcome of a finite-difference gradient check."""

    max_rel_error: float
    checked: int
    skipped: list[tuple[int, int]] = field(default_factory=list)
    worst: tuple[int, int] | None = None

    def __float__(self) -> float:
        return self.max_rel_error


def finite_diff_check(fn, inputs: list[Tensor], eps: float = 1e-5) -> FiniteDiffReport:
    """Compare analytic gradients of ``fn(*inputs)`` against central differences.

    Coordinates whose probes land within ``eps`` of a relu/clamp kink are
    excluded from the maximum and reported in ``skipped`` instead of failing.
    The relative error per coordinate is |analytic - numeric| / max(1, |analytic|).
    """
    out = fn(*inputs)
    if out.data.shape != ():
        raise ShapeError("finite_diff_check: fn must return a scalar tensor")
    for t in inputs:
        t.zero_grad()
    backward(out)
    analytic = [t.grad.copy() for t in inputs]

    max_err = 0.0
    checked = 0
    skipped: list[tuple[int, int]] = []
    worst: tuple[int, int] | None = None
    for i, t in enumerate(inputs):
        flat = t.data.reshape(-1)
        for c in range(flat.size):
            orig = flat[c]
            with _watch_kinks(eps):
                flat[c] = orig + eps
                f_plus = float(fn(*inputs).data)
                flat[c] = orig - eps
                f_minus = float(fn(*inputs).data)
                flat[c] = orig
                hit = _kink_was_hit()
            if hit:
                skipped.append((i, c))
                continue
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = analytic[i].reshape(-1)[c]
            err = abs(a - numeric) / max(1.0, abs(a))
            checked += 1
            if err > max_err:
                max_err = err
                worst = (i, c)
    return FiniteDiffReport(max_rel_error=max_err, checked=checked, skipped=skipped, worst=worst)


# ---------------------------------------------------------------------------
# named-tensor container (checkpoint format)

_MAGIC = b"SGTENS01"


def save_tensor_file(path, arrays: dict[str, np.ndarray]) -> None:
    """Write named float64 tensors: manifest of names, then shape + raw LE values each."""
    names = list(arrays)
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(names)))
        for name in names:
            raw = name.encode("utf-8")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
        for name in names:
            arr = np.asarray(arrays[name], dtype="<f8")
            f.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                f.write(struct.pack("<Q", dim))
            f.write(arr.tobytes())


def load_tensor_file(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        if f.read(8) != _MAGIC:
            raise ValueError(f"{path}: not a tensor container")
        (count,) = struct.unpack("<I", f.read(4))
        names = []
        for _ in range(count):
            (nlen,) = struct.unpack("<H", f.read(2))
            names.append(f.read(nlen).decode("utf-8"))
        out: dict[str, np.ndarray] = {}
        for name in names:
            (ndim,) = struct.unpack("<B", f.read(1))
            shape = tuple(struct.unpack("<Q", f.read(8))[0] for _ in range(ndim))
            n_values = int(np.prod(shape)) if shape else 1
            buf = f.read(8 * n_values)
            out[name] = np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)
        return out
