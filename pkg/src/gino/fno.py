"""Global spectral convolution on the periodic latent grid.

A layer multiplies the retained Fourier modes of its input by learned
complex matrices, zero-fills the rest, and inverse-transforms; a pointwise
linear skip and a (possibly velocity-conditioned) instance normalization
complete the block. Mode indices are stored by signed frequency, so the same
weights apply at any grid resolution that can represent them.
"""

from __future__ import annotations

import numpy as np

from . import tensor as tt
from .errors import ContractError, ValidationError
from .gno import fourier_features
from .tensor import ComplexTensor, Tensor


def _axis_index_map(size: int, m: int, extent: int, half: bool):
    """Grid indices and weight slots for retained signed frequencies |f| < m.

    Weight slot layout: [0, 1, .., m-1, -(m-1), .., -1] (length 2m-1) for full
    axes, [0 .. m-1] for the half (rfft) axis. Frequencies the grid cannot
    represent are simply not gathered.
    """
    gi, wi = [], []
    if half:
        for j in range(min(m, size)):
            gi.append(j)
            wi.append(j)
        return np.array(gi, np.int64), np.array(wi, np.int64)
    for j in range(size):
        f = j if j < (size + 1) // 2 else j - size
        if abs(f) < m:
            gi.append(j)
            wi.append(f if f >= 0 else extent + f)
    return np.array(gi, np.int64), np.array(wi, np.int64)


class SpectralWeights:
    """Per-mode complex c_out x c_in matrices over the retained index set."""

    def __init__(self, c_in: int, c_out: int, modes: tuple[int, int, int],
                 dtype: str = "f32", rng: np.random.Generator | None = None,
                 prefix: str = "spectral"):
        rng = rng or np.random.default_rng(0)
        if any(m < 1 for m in modes):
            raise ValidationError(f"mode counts must be >= 1, got {modes}")
        self.c_in = c_in
        self.c_out = c_out
        self.modes = tuple(int(m) for m in modes)
        self.prefix = prefix
        self.dtype = dtype
        ext = (2 * self.modes[0] - 1, 2 * self.modes[1] - 1, self.modes[2])
        self.extents = ext
        scale = 1.0 / (c_in * c_out)
        shape = (c_out, c_in) + ext
        self.weight = ComplexTensor(
            Tensor(rng.normal(0.0, scale, shape), dtype=dtype, requires_grad=True),
            Tensor(rng.normal(0.0, scale, shape), dtype=dtype, requires_grad=True),
        )

    def params(self) -> dict[str, Tensor]:
        return {f"{self.prefix}.re": self.weight.real,
                f"{self.prefix}.im": self.weight.imag}

    def index_maps(self, sizes: tuple[int, int, int]):
        m1, m2, m3 = self.modes
        g1, w1 = _axis_index_map(sizes[0], m1, self.extents[0], half=False)
        g2, w2 = _axis_index_map(sizes[1], m2, self.extents[1], half=False)
        g3, w3 = _axis_index_map(sizes[2] // 2 + 1, m3, self.extents[2], half=True)
        return (g1, g2, g3), (w1, w2, w3)


def spectral_conv(v: Tensor, w: SpectralWeights) -> Tensor:
    """FFT -> per-retained-mode complex matrix multiply -> zero-fill -> iFFT."""
    c_in, s1, s2, s3 = v.shape
    if c_in != w.c_in:
        raise ContractError(f"spectral_conv: input has {c_in} channels, weights expect {w.c_in}")
    for m, s in zip(w.modes, (s1, s2, s3)):
        if m > s // 2 + 1:
            raise ValidationError(
                f"mode count {m} too large for grid extent {s} (max {s // 2 + 1})")
    vhat = tt.fft3(v)
    gidx, widx = w.index_maps((s1, s2, s3))

    def gather_weight(part: Tensor) -> Tensor:
        flat = tt.reshape(part, (w.c_out * w.c_in,) + w.extents)
        block = tt.take_block(flat, widx)
        ext = tuple(len(i) for i in widx)
        return tt.reshape(block, (w.c_out, w.c_in) + ext)

    wr = gather_weight(w.weight.real)
    wi = gather_weight(w.weight.imag)
    vr = tt.take_block(vhat.real, gidx)
    vi = tt.take_block(vhat.imag, gidx)

    out_r = tt.einsum("oiabc,iabc->oabc", wr, vr) - tt.einsum("oiabc,iabc->oabc", wi, vi)
    out_i = tt.einsum("oiabc,iabc->oabc", wr, vi) + tt.einsum("oiabc,iabc->oabc", wi, vr)

    half_shape = (s1, s2, s3 // 2 + 1)
    full_r = tt.put_block(out_r, gidx, half_shape)
    full_i = tt.put_block(out_i, gidx, half_shape)
    return tt.ifft3(ComplexTensor(full_r, full_i), s3)


def instance_normalize(v: Tensor, eps: float = 1e-5) -> Tensor:
    """Zero-mean unit-variance per channel over the spatial axes."""
    axes = (1, 2, 3)
    mean = tt.tmean(v, axis=axes, keepdims=True)
    centered = v - mean
    var = tt.tmean(tt.mul(centered, centered), axis=axes, keepdims=True)
    return tt.mul(centered, tt.pow_scalar(var + eps, -0.5))


class InstanceNorm:
    """Instance norm with learnable per-channel affine parameters."""

    def __init__(self, channels: int, dtype: str = "f32", prefix: str = "norm"):
        self.prefix = prefix
        self.scale = Tensor(np.ones(channels), dtype=dtype, requires_grad=True)
        self.shift = Tensor(np.zeros(channels), dtype=dtype, requires_grad=True)

    def params(self) -> dict[str, Tensor]:
        return {f"{self.prefix}.scale": self.scale, f"{self.prefix}.shift": self.shift}

    def __call__(self, v: Tensor, velocity: float | None = None) -> Tensor:
        c = v.shape[0]
        xhat = instance_normalize(v)
        s = tt.reshape(self.scale, (c, 1, 1, 1))
        b = tt.reshape(self.shift, (c, 1, 1, 1))
        return tt.mul(xhat, s) + b


class AdaInParams:
    """Adaptive instance norm: per-channel scale/shift from an MLP over a
    Fourier-feature embedding of the (normalized) inlet velocity."""

    def __init__(self, channels: int, n_features: int = 8, hidden: int = 32,
                 feature_scale: float = 1.0, dtype: str = "f32",
                 rng: np.random.Generator | None = None, prefix: str = "adain"):
        rng = rng or np.random.default_rng(0)
        self.channels = channels
        self.prefix = prefix
        self.dtype = dtype
        self.b_freq = Tensor(rng.normal(0.0, feature_scale, (n_features, 1)), dtype=dtype)
        d_in = 2 * n_features
        self.w1 = Tensor(rng.normal(0.0, np.sqrt(2.0 / d_in), (hidden, d_in)),
                         dtype=dtype, requires_grad=True)
        self.b1 = Tensor(np.zeros(hidden), dtype=dtype, requires_grad=True)
        self.w2 = Tensor(rng.normal(0.0, 1e-2, (2 * channels, hidden)),
                         dtype=dtype, requires_grad=True)
        # bias initialized so scale starts at one and shift at zero
        b2 = np.concatenate([np.ones(channels), np.zeros(channels)])
        self.b2 = Tensor(b2, dtype=dtype, requires_grad=True)

    def params(self) -> dict[str, Tensor]:
        return {f"{self.prefix}.b_freq": self.b_freq,
                f"{self.prefix}.0.w": self.w1, f"{self.prefix}.0.b": self.b1,
                f"{self.prefix}.1.w": self.w2, f"{self.prefix}.1.b": self.b2}

    def scale_shift(self, velocity: float) -> tuple[Tensor, Tensor]:
        emb = fourier_features(np.array([[velocity]]), self.b_freq.data)
        h = tt.gelu(tt.linear(Tensor(emb, dtype=self.dtype), self.w1, self.b1))
        out = tt.linear(h, self.w2, self.b2)  # [1, 2c]
        c = self.channels
        flat = tt.reshape(out, (2 * c,))
        scale = tt.reshape(tt.take_rows(tt.reshape(flat, (2 * c, 1)),
                                        np.arange(c)), (c, 1, 1, 1))
        shift = tt.reshape(tt.take_rows(tt.reshape(flat, (2 * c, 1)),
                                        np.arange(c, 2 * c)), (c, 1, 1, 1))
        return scale, shift

    def __call__(self, v: Tensor, velocity: float) -> Tensor:
        xhat = instance_normalize(v)
        scale, shift = self.scale_shift(float(velocity))
        return tt.mul(xhat, scale) + shift


def adaptive_instance_norm(v: Tensor, velocity: float, p: AdaInParams) -> Tensor:
    return p(v, velocity)


class FnoBlock:
    """sigma(norm(W v + C(v))): spectral path plus pointwise skip."""

    def __init__(self, channels: int, modes: tuple[int, int, int],
                 norm: str = "instance", activation: str = "gelu",
                 dtype: str = "f32", rng: np.random.Generator | None = None,
                 prefix: str = "fno"):
        rng = rng or np.random.default_rng(0)
        self.prefix = prefix
        self.activation = activation
        self.spectral = SpectralWeights(channels, channels, modes, dtype=dtype,
                                        rng=rng, prefix=f"{prefix}.spectral")
        self.w_skip = Tensor(rng.normal(0.0, np.sqrt(1.0 / channels),
                                        (channels, channels)),
                             dtype=dtype, requires_grad=True)
        self.b_skip = Tensor(np.zeros(channels), dtype=dtype, requires_grad=True)
        if norm == "instance":
            self.norm = InstanceNorm(channels, dtype=dtype, prefix=f"{prefix}.norm")
        elif norm == "adaptive":
            self.norm = AdaInParams(channels, dtype=dtype, rng=rng,
                                    prefix=f"{prefix}.adain")
        elif norm == "none":
            self.norm = None
        else:
            raise ValidationError(f"unknown norm kind {norm!r}")

    def params(self) -> dict[str, Tensor]:
        out = dict(self.spectral.params())
        out[f"{self.prefix}.skip.w"] = self.w_skip
        out[f"{self.prefix}.skip.b"] = self.b_skip
        if self.norm is not None:
            out.update(self.norm.params())
        return out

    def __call__(self, v: Tensor, velocity: float | None = None) -> Tensor:
        c, s1, s2, s3 = v.shape
        flat = tt.reshape(v, (c, s1 * s2 * s3))
        skip = tt.einsum("oc,cn->on", self.w_skip, flat)
        skip = tt.reshape(skip + tt.reshape(self.b_skip, (c, 1)), (c, s1, s2, s3))
        pre = skip + spectral_conv(v, self.spectral)
        if isinstance(self.norm, AdaInParams):
            if velocity is None:
                raise ContractError("adaptive norm requires a velocity value")
            pre = self.norm(pre, velocity)
        elif self.norm is not None:
            pre = self.norm(pre)
        return tt.activation(pre, self.activation)


def fno_block(v: Tensor, block: FnoBlock, velocity: float | None = None) -> Tensor:
    return block(v, velocity)
