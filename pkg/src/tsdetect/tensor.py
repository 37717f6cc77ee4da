"""Minimal dense-tensor kernel: forward inference primitives only.

Layouts in use: [C,H,W] per-frame features, [T,C,H,W] frame sequences,
[Cout,Cin,kh,kw] 2D kernels, [Cout,Cin,kt,kh,kw] 3D kernels. Values are
float64 throughout the reference path; weights files carry float32 widened
on load. Convolution is cross-correlation (no kernel flip) and padding is
zero-padding everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


class Tensor:
    """Immutable dense N-dimensional float64 array, row-major storage."""

    __slots__ = ("_array",)

    def __init__(self, values, dims: tuple[int, ...] | None = None):
        arr = np.asarray(values, dtype=np.float64)
        if dims is not None:
            dims = tuple(int(d) for d in dims)
            if arr.size != int(np.prod(dims)):
                raise ShapeError(
                    f"data length {arr.size} does not match product of dims {dims}"
                )
            arr = arr.reshape(dims)
        arr = np.ascontiguousarray(arr)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if any(d < 1 for d in arr.shape):
            raise ShapeError(f"all extents must be >= 1, got {arr.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "_array", arr)

    @property
    def dims(self) -> tuple[int, ...]:
        return self._array.shape

    @property
    def data(self) -> np.ndarray:
        """Read-only ndarray view; C-contiguous, so .ravel() is the row-major payload."""
        return self._array

    @property
    def rank(self) -> int:
        return self._array.ndim

    def size(self) -> int:
        return self._array.size

    @staticmethod
    def zeros(dims: tuple[int, ...]) -> "Tensor":
        return Tensor(np.zeros(dims))

    @staticmethod
    def full(dims: tuple[int, ...], value: float) -> "Tensor":
        return Tensor(np.full(dims, float(value)))

    def __repr__(self) -> str:
        return f"Tensor(dims={self.dims})"


@dataclass(frozen=True)
class ConvParams:
    weight: Tensor
    bias: Tensor
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.bias.rank != 1:
            raise ShapeError(f"bias must be rank 1, got dims {self.bias.dims}")
        if self.weight.dims[0] != self.bias.dims[0]:
            raise ShapeError(
                f"weight Cout {self.weight.dims[0]} does not match bias extent {self.bias.dims[0]}"
            )
        if self.stride < 1 or self.padding < 0:
            raise ShapeError(
                f"stride must be >= 1 and padding >= 0, got {self.stride}, {self.padding}"
            )


def conv2d(x: Tensor, p: ConvParams) -> Tensor:
    """Cross-correlate [C,H,W] with [Cout,Cin,kh,kw] weights, add bias.

    Output spatial extent is (H + 2*padding - kh) / stride + 1, which must
    come out integral and >= 1.
    """
    if x.rank != 3:
        raise ShapeError(f"conv2d input must be [C,H,W], got dims {x.dims}")
    if p.weight.rank != 4:
        raise ShapeError(f"conv2d weight must be [Cout,Cin,kh,kw], got dims {p.weight.dims}")
    cin, h, w = x.dims
    cout, wcin, kh, kw = p.weight.dims
    if cin != wcin:
        raise ShapeError(f"input channels {x.dims} do not match weight {p.weight.dims}")
    xp = np.pad(x.data, ((0, 0), (p.padding, p.padding), (p.padding, p.padding)))
    hp, wp = h + 2 * p.padding, w + 2 * p.padding
    if hp < kh or wp < kw:
        raise ShapeError(
            f"kernel {p.weight.dims} larger than padded input {(cin, hp, wp)}"
        )
    if (hp - kh) % p.stride or (wp - kw) % p.stride:
        raise ShapeError(
            f"stride {p.stride} does not evenly tile input {x.dims} with kernel {p.weight.dims}"
        )
    ho = (hp - kh) // p.stride + 1
    wo = (wp - kw) // p.stride + 1
    out = np.zeros((cout, ho, wo))
    wgt = p.weight.data
    for dy in range(kh):
        for dx in range(kw):
            patch = xp[:, dy : dy + p.stride * ho : p.stride, dx : dx + p.stride * wo : p.stride]
            out += np.tensordot(wgt[:, :, dy, dx], patch, axes=(1, 0))
    out += p.bias.data[:, None, None]
    return Tensor(out)


def conv3d(x: Tensor, p: ConvParams, temporal_pad: int | None = None) -> Tensor:
    """Cross-correlate a [T,C,H,W] sequence with [Cout,Cin,kt,kh,kw] weights.

    The kernel slides over (T, H, W); `temporal_pad` defaults to (kt-1)//2,
    which keeps the sequence length for odd kt. Spatial padding/stride come
    from `p` as in conv2d.
    """
    if x.rank != 4:
        raise ShapeError(f"conv3d input must be [T,C,H,W], got dims {x.dims}")
    if p.weight.rank != 5:
        raise ShapeError(
            f"conv3d weight must be [Cout,Cin,kt,kh,kw], got dims {p.weight.dims}"
        )
    t, cin, h, w = x.dims
    cout, wcin, kt, kh, kw = p.weight.dims
    if cin != wcin:
        raise ShapeError(f"input channels {x.dims} do not match weight {p.weight.dims}")
    if temporal_pad is None:
        temporal_pad = (kt - 1) // 2
    xp = np.pad(
        x.data,
        ((temporal_pad, temporal_pad), (0, 0), (p.padding, p.padding), (p.padding, p.padding)),
    )
    tp, hp, wp = t + 2 * temporal_pad, h + 2 * p.padding, w + 2 * p.padding
    if tp < kt or hp < kh or wp < kw:
        raise ShapeError(
            f"kernel {p.weight.dims} larger than padded input {(tp, cin, hp, wp)}"
        )
    if (hp - kh) % p.stride or (wp - kw) % p.stride:
        raise ShapeError(
            f"stride {p.stride} does not evenly tile input {x.dims} with kernel {p.weight.dims}"
        )
    to = tp - kt + 1
    ho = (hp - kh) // p.stride + 1
    wo = (wp - kw) // p.stride + 1
    out = np.zeros((to, cout, ho, wo))
    wgt = p.weight.data
    for dt in range(kt):
        for dy in range(kh):
            for dx in range(kw):
                patch = xp[
                    dt : dt + to,
                    :,
                    dy : dy + p.stride * ho : p.stride,
                    dx : dx + p.stride * wo : p.stride,
                ]
                out += np.einsum("oc,tchw->tohw", wgt[:, :, dt, dy, dx], patch)
    out += p.bias.data[None, :, None, None]
    return Tensor(out)


def gap(x: Tensor) -> Tensor:
    """Per-channel spatial mean of [C,H,W] -> [C,1,1]."""
    if x.rank != 3:
        raise ShapeError(f"gap input must be [C,H,W], got dims {x.dims}")
    return Tensor(x.data.mean(axis=(1, 2), keepdims=True))


def sap(x: Tensor, attn: ConvParams) -> Tensor:
    """Attention pooling of [C,H,W] -> [C,1,1].

    A 1x1 convolution maps the C channels to a single score map; its spatial
    softmax weights a per-channel convex combination of the input values.
    Constant scores reduce this exactly to gap().
    """
    if x.rank != 3:
        raise ShapeError(f"sap input must be [C,H,W], got dims {x.dims}")
    cout, cin, kh, kw = attn.weight.dims
    if cout != 1 or kh != 1 or kw != 1:
        raise ShapeError(
            f"attention conv must map C->1 with a 1x1 kernel, got weight dims {attn.weight.dims}"
        )
    scores = conv2d(x, attn).data[0]
    scores = scores - scores.max()
    weights = np.exp(scores)
    weights /= weights.sum()
    pooled = (x.data * weights[None, :, :]).sum(axis=(1, 2))
    return Tensor(pooled[:, None, None])


def relu(x: Tensor) -> Tensor:
    return Tensor(np.maximum(x.data, 0.0))


def sigmoid(x: Tensor) -> Tensor:
    return Tensor(1.0 / (1.0 + np.exp(-x.data)))


def tanh(x: Tensor) -> Tensor:
    return Tensor(np.tanh(x.data))


def batchnorm_inference(
    x: Tensor,
    mean: Tensor,
    var: Tensor,
    gamma: Tensor,
    beta: Tensor,
    eps: float = 1e-5,
    channel_axis: int = 0,
) -> Tensor:
    """Per-channel (x - mean) / sqrt(var + eps) * gamma + beta with stored statistics."""
    c = x.dims[channel_axis]
    for name, t in (("mean", mean), ("var", var), ("gamma", gamma), ("beta", beta)):
        if t.dims != (c,):
            raise ShapeError(f"{name} must have dims ({c},), got {t.dims}")
    if np.any(var.data < 0.0):
        raise ShapeError("variance must be nonnegative")
    shape = [1] * x.rank
    shape[channel_axis] = c
    m = mean.data.reshape(shape)
    v = var.data.reshape(shape)
    g = gamma.data.reshape(shape)
    b = beta.data.reshape(shape)
    return Tensor((x.data - m) / np.sqrt(v + eps) * g + b)


def concat_channels(xs: list[Tensor]) -> Tensor:
    """Concatenate [C,H,W] tensors along the channel axis, argument order."""
    if not xs:
        raise ShapeError("concat_channels needs at least one tensor")
    spatial = xs[0].dims[1:]
    for t in xs[1:]:
        if t.dims[1:] != spatial:
            raise ShapeError(
                f"spatial dims differ: {xs[0].dims} vs {t.dims}"
            )
    return Tensor(np.concatenate([t.data for t in xs], axis=0))
