"""Dense tensors with a reverse-mode gradient tape.

The op set is deliberately small: exactly what the GNO/FNO stack needs.
Grid data uses a channel-first layout [c, x, y, z]; FFTs batch over the
leading channel axis. Real-to-complex transforms keep only non-negative
frequencies along the last axis (Hermitian half-spectrum).

Recording model: ops append closures to the active `Tape` (a Wengert list)
whenever at least one input has `requires_grad`. `backward` walks the list
in reverse exactly once and accumulates into `Tensor.grad`.
"""

from __future__ import annotations

import numpy as np
import scipy.fft as _fft
from scipy.special import erf as _erf

from .errors import ContractError, ShapeError

DTYPES = {"f32": np.float32, "f64": np.float64}
_DTYPE_NAMES = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}

# When true, every op output is checked for NaN/Inf (used by tests; training
# guards the loss instead, which is cheaper).
CHECK_FINITE = False


class Tape:
    """Ordered record of ops; inputs of each op always precede it."""

    _stack: list["Tape"] = []

    def __init__(self):
        self._ops: list = []

    def __enter__(self) -> "Tape":
        Tape._stack.append(self)
        return self

    def __exit__(self, *exc):
        Tape._stack.pop()
        return False

    def __len__(self) -> int:
        return len(self._ops)

    @staticmethod
    def current() -> "Tape | None":
        return Tape._stack[-1] if Tape._stack else None


class Tensor:
    """Row-major dense array, optionally tracked by the active tape."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, dtype=None, requires_grad: bool = False):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(DTYPES.get(dtype, dtype), copy=False)
        if arr.dtype not in _DTYPE_NAMES:
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self) -> str:
        return _DTYPE_NAMES[self.data.dtype]

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, grad={self.requires_grad})"

    # Arithmetic sugar; the module-level functions do the real work.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -other)

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)


class ComplexTensor:
    """Complex array stored as two same-shaped real tensors."""

    __slots__ = ("real", "imag")

    def __init__(self, real: Tensor, imag: Tensor):
        if real.shape != imag.shape:
            raise ShapeError(f"real/imag shapes differ: {real.shape} vs {imag.shape}")
        self.real = real
        self.imag = imag

    @property
    def shape(self) -> tuple:
        return self.real.shape

    def numpy(self) -> np.ndarray:
        return self.real.data + 1j * self.imag.data


def _wrap(value: np.ndarray) -> Tensor:
    if CHECK_FINITE and not np.isfinite(value).all():
        raise FloatingPointError("non-finite values produced by tensor op")
    return Tensor(value)


def _record(parents, outputs, backward) -> None:
    """Register `backward` on the active tape if any parent needs gradients.

    `backward` receives the output gradient array(s) and must accumulate into
    the parents via `_accum`. Multi-output ops pass a tuple of grads (entries
    may be None when an output was never used downstream).
    """
    tape = Tape.current()
    if tape is None:
        return
    if not any(p.requires_grad for p in parents):
        return
    outs = outputs if isinstance(outputs, tuple) else (outputs,)
    for o in outs:
        o.requires_grad = True

    def entry():
        grads = tuple(o.grad for o in outs)
        backward(grads if len(grads) > 1 else grads[0])

    tape._ops.append(entry)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `g` down to `shape` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def backward(loss: Tensor, tape: Tape) -> None:
    """Seed d(loss)=1 and run the tape in reverse; the tape is consumed."""
    if loss.data.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.shape}")
    if len(tape) == 0:
        raise ContractError("tape is empty; nothing was recorded")
    loss.grad = np.ones_like(loss.data)
    for entry in reversed(tape._ops):
        entry()
    tape._ops.clear()


# ---------------------------------------------------------------------------
# elementwise / reduction ops


def add(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        out = _wrap(a.data + b.data)

        def bwd(g):
            _accum(a, _unbroadcast(g, a.data.shape))
            _accum(b, _unbroadcast(g, b.data.shape))

        _record((a, b), out, bwd)
        return out
    out = _wrap(a.data + b)
    _record((a,), out, lambda g: _accum(a, _unbroadcast(g, a.data.shape)))
    return out


def mul(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        out = _wrap(a.data * b.data)

        def bwd(g):
            _accum(a, _unbroadcast(g * b.data, a.data.shape))
            _accum(b, _unbroadcast(g * a.data, b.data.shape))

        _record((a, b), out, bwd)
        return out
    out = _wrap(a.data * b)
    _record((a,), out, lambda g: _accum(a, _unbroadcast(g * b, a.data.shape)))
    return out


def pow_scalar(x: Tensor, p: float) -> Tensor:
    """x**p elementwise; for non-integer p the caller guarantees x > 0."""
    out = _wrap(x.data ** p)

    def bwd(g):
        _accum(x, g * (p * x.data ** (p - 1.0)))

    _record((x,), out, bwd)
    return out


def sqrt(x: Tensor) -> Tensor:
    return pow_scalar(x, 0.5)


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = _wrap(x.data.sum(axis=axis, keepdims=keepdims))

    def bwd(g):
        if axis is not None and not keepdims:
            ax = axis if isinstance(axis, tuple) else (axis,)
            g = np.expand_dims(g, ax)
        _accum(x, np.broadcast_to(g, x.data.shape))

    _record((x,), out, bwd)
    return out


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = x.data.size
    else:
        ax = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([x.data.shape[i] for i in ax]))
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def relu(x: Tensor) -> Tensor:
    out = _wrap(np.maximum(x.data, 0))
    _record((x,), out, lambda g: _accum(x, g * (x.data > 0)))
    return out


_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x: Tensor) -> Tensor:
    """Exact gelu x * Phi(x) using the error function."""
    phi = 0.5 * (1.0 + _erf(x.data * _INV_SQRT2))
    out = _wrap(x.data * phi)

    def bwd(g):
        dens = _INV_SQRT2PI * np.exp(-0.5 * x.data * x.data)
        _accum(x, g * (phi + x.data * dens).astype(x.data.dtype))

    _record((x,), out, bwd)
    return out


def activation(x: Tensor, kind: str = "gelu") -> Tensor:
    if kind == "gelu":
        return gelu(x)
    if kind == "relu":
        return relu(x)
    raise ContractError(f"unknown activation {kind!r}")


# ---------------------------------------------------------------------------
# shape ops


def reshape(x: Tensor, shape) -> Tensor:
    out = _wrap(x.data.reshape(shape))
    _record((x,), out, lambda g: _accum(x, g.reshape(x.data.shape)))
    return out


def transpose(x: Tensor, axes) -> Tensor:
    out = _wrap(x.data.transpose(axes))
    inv = np.argsort(axes)
    _record((x,), out, lambda g: _accum(x, g.transpose(inv)))
    return out


def concat(xs, axis: int = 0) -> Tensor:
    xs = list(xs)
    out = _wrap(np.concatenate([x.data for x in xs], axis=axis))
    sizes = [x.data.shape[axis] for x in xs]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        for x, piece in zip(xs, np.split(g, splits, axis=axis)):
            _accum(x, piece)

    _record(tuple(xs), out, bwd)
    return out


def take_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Gather rows of a [N, c] tensor; rows may repeat."""
    idx = np.asarray(idx, dtype=np.int64)
    out = _wrap(x.data[idx])

    def bwd(g):
        gx = np.empty_like(x.data)
        for j in range(x.data.shape[1]):
            gx[:, j] = np.bincount(idx, weights=g[:, j], minlength=x.data.shape[0])
        _accum(x, gx)

    _record((x,), out, bwd)
    return out


def segment_sum(x: Tensor, seg: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows of [E, c] into [num_segments, c] by segment id."""
    seg = np.asarray(seg, dtype=np.int64)
    cols = x.data.shape[1]
    res = np.empty((num_segments, cols), dtype=x.data.dtype)
    for j in range(cols):
        res[:, j] = np.bincount(seg, weights=x.data[:, j], minlength=num_segments)
    out = _wrap(res)
    _record((x,), out, lambda g: _accum(x, g[seg]))
    return out


def take_block(x: Tensor, idx3) -> Tensor:
    """Gather a rectangular index block from [c, s1, s2, s3(h)] (unique indices)."""
    i1, i2, i3 = (np.asarray(i, dtype=np.int64) for i in idx3)
    sel = np.ix_(np.arange(x.data.shape[0]), i1, i2, i3)
    out = _wrap(x.data[sel])

    def bwd(g):
        gx = np.zeros_like(x.data)
        gx[sel] = g
        _accum(x, gx)

    _record((x,), out, bwd)
    return out


def put_block(x: Tensor, idx3, spatial_shape) -> Tensor:
    """Scatter [c, l1, l2, l3] into zeros of [c, *spatial_shape] (unique indices)."""
    i1, i2, i3 = (np.asarray(i, dtype=np.int64) for i in idx3)
    c = x.data.shape[0]
    res = np.zeros((c,) + tuple(spatial_shape), dtype=x.data.dtype)
    sel = np.ix_(np.arange(c), i1, i2, i3)
    res[sel] = x.data
    out = _wrap(res)
    _record((x,), out, lambda g: _accum(x, g[sel]))
    return out


# ---------------------------------------------------------------------------
# contractions


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """y[..., i] = sum_j w[i, j] x[..., j] (+ b[i])."""
    if x.data.shape[-1] != w.data.shape[1]:
        raise ShapeError(
            f"linear: x last dim {x.data.shape[-1]} != W second dim {w.data.shape[1]}"
        )
    if b is not None and b.data.shape != (w.data.shape[0],):
        raise ShapeError(f"linear: bias shape {b.data.shape} != ({w.data.shape[0]},)")
    lead = x.data.shape[:-1]
    x2 = x.data.reshape(-1, x.data.shape[-1])
    y2 = x2 @ w.data.T
    if b is not None:
        y2 = y2 + b.data
    out = _wrap(y2.reshape(lead + (w.data.shape[0],)))

    def bwd(g):
        g2 = g.reshape(-1, w.data.shape[0])
        _accum(x, (g2 @ w.data).reshape(x.data.shape))
        _accum(w, g2.T @ x2)
        if b is not None:
            _accum(b, g2.sum(axis=0))

    _record((x, w) if b is None else (x, w, b), out, bwd)
    return out


def einsum(subscripts: str, a: Tensor, b: Tensor) -> Tensor:
    """Two-operand einsum. Every index of an operand must also appear in the
    output or in the other operand (so the adjoint is again an einsum)."""
    lhs, so = subscripts.replace(" ", "").split("->")
    sa, sb = lhs.split(",")
    for s in (sa, sb, so):
        if len(set(s)) != len(s):
            raise ContractError(f"einsum {subscripts!r}: repeated index within one term")
    if not (set(sa) <= set(so) | set(sb) and set(sb) <= set(so) | set(sa)):
        raise ContractError(f"einsum {subscripts!r}: unsupported contraction pattern")
    out = _wrap(np.einsum(subscripts, a.data, b.data))

    def bwd(g):
        _accum(a, np.einsum(f"{so},{sb}->{sa}", g, b.data))
        _accum(b, np.einsum(f"{so},{sa}->{sb}", g, a.data))

    _record((a, b), out, bwd)
    return out


# ---------------------------------------------------------------------------
# FFT ops (real-to-complex over the last three axes of [c, s1, s2, s3])


def _neg_index_view(plane: np.ndarray) -> np.ndarray:
    """plane[k1, k2] -> plane[-k1 mod S1, -k2 mod S2] for [c, S1, S2] arrays."""
    return np.roll(np.flip(plane, axis=(1, 2)), shift=(1, 1), axis=(1, 2))


def fft3(x: Tensor) -> ComplexTensor:
    """Unnormalized forward DFT of a real [c, s1, s2, s3] tensor.

    Only non-negative frequencies of the last axis are kept (s3//2 + 1 bins).
    """
    if x.data.ndim != 4:
        raise ShapeError(f"fft3 expects [c, s1, s2, s3], got {x.data.shape}")
    y = _fft.rfftn(x.data, axes=(1, 2, 3))
    re, im = _wrap(np.ascontiguousarray(y.real)), _wrap(np.ascontiguousarray(y.imag))
    s1, s2, s3 = x.data.shape[1:]
    total = s1 * s2 * s3

    def bwd(grads):
        gr, gi = grads
        if gr is None and gi is None:
            return
        shape = re.data.shape
        g = np.zeros(shape, dtype=np.complex64 if x.data.dtype == np.float32 else np.complex128)
        if gr is not None:
            g += gr
        if gi is not None:
            g += 1j * gi
        # adjoint of rfftn: total * Re(ifftn(zero-padded g)); computed via a
        # Hermitian projection so the cheaper c2r transform applies.
        h = g.copy()
        h[:, :, :, 1:] *= 0.5
        if s3 % 2 == 0 and shape[3] > 1:
            h[:, :, :, -1] = 0.5 * (g[:, :, :, -1] + np.conj(_neg_index_view(g[:, :, :, -1])))
        h[:, :, :, 0] = 0.5 * (g[:, :, :, 0] + np.conj(_neg_index_view(g[:, :, :, 0])))
        gx = total * _fft.irfftn(h, s=(s1, s2, s3), axes=(1, 2, 3))
        _accum(x, gx.astype(x.data.dtype, copy=False))

    _record((x,), (re, im), bwd)
    return ComplexTensor(re, im)


def ifft3(c: ComplexTensor, s3: int) -> Tensor:
    """Inverse of fft3; divides by s1*s2*s3. `s3` is the full last extent."""
    z = c.real.data + 1j * c.imag.data
    s1, s2 = z.shape[1], z.shape[2]
    x = _fft.irfftn(z, s=(s1, s2, s3), axes=(1, 2, 3))
    out = _wrap(np.ascontiguousarray(x))
    total = s1 * s2 * s3
    half = z.shape[3]

    def bwd(g):
        gf = _fft.rfftn(g, axes=(1, 2, 3)) / total
        w = np.ones(half, dtype=gf.real.dtype)
        hi = half - 1 if s3 % 2 == 0 else half
        w[1:hi] = 2.0
        gf *= w
        _accum(c.real, np.ascontiguousarray(gf.real))
        _accum(c.imag, np.ascontiguousarray(gf.imag))

    _record((c.real, c.imag), out, bwd)
    return out
