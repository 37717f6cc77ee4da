"""Temporally calibrated convolution.

A base 2D convolution's weights and biases are rescaled per frame by
correction factors derived from the preceding feature sequence:

    summary   S = BN(ReLU(F_gap(GAP(seq)) + F_sap(SAP(seq))))
    factors   alpha_w = 1 + F_w(S)[newest],  alpha_b = 1 + F_b(S)[newest]
    forward   out = x * (W . alpha_w) + b . alpha_b

GAP/SAP pool each frame to [C,1,1] and the pooled stack [k,C,1,1] is mixed
by kernel-1 3D convolutions; F_w/F_b are [3,1,1] temporal convolutions whose
output at the newest index calibrates the current frame. The factors are a
per-output-channel vector broadcast over (Cin, kh, kw), and zero generator
parameters leave the base convolution untouched (alpha == 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, WeightsFormatError
from .tensor import (
    ConvParams,
    Tensor,
    batchnorm_inference,
    conv2d,
    conv3d,
    gap,
    relu,
    sap,
)


@dataclass(frozen=True)
class BnStats:
    mean: Tensor
    var: Tensor
    gamma: Tensor
    beta: Tensor
    eps: float = 1e-5

    @staticmethod
    def neutral(channels: int) -> "BnStats":
        return BnStats(
            mean=Tensor.zeros((channels,)),
            var=Tensor.full((channels,), 1.0),
            gamma=Tensor.full((channels,), 1.0),
            beta=Tensor.zeros((channels,)),
            eps=0.0,
        )


@dataclass(frozen=True)
class GtConvLayer:
    base: ConvParams
    f_agg_gap: ConvParams
    f_agg_sap: ConvParams
    bn: BnStats
    f_w: ConvParams
    f_b: ConvParams
    sap_attn: ConvParams

    def __post_init__(self):
        cout, cin = self.base.weight.dims[0], self.base.weight.dims[1]
        for name, p in (("f_w", self.f_w), ("f_b", self.f_b)):
            if p.weight.dims[0] != cout:
                raise ShapeError(
                    f"{name} must emit one factor per base output channel "
                    f"({cout}), got weight dims {p.weight.dims}"
                )
            if p.weight.dims[2:] != (3, 1, 1):
                raise ShapeError(
                    f"{name} must have a [3,1,1] kernel, got weight dims {p.weight.dims}"
                )
        for name, p in (("f_agg_gap", self.f_agg_gap), ("f_agg_sap", self.f_agg_sap)):
            if p.weight.dims != (cin, cin, 1, 1, 1):
                raise ShapeError(
                    f"{name} must be a kernel-1 mix over {cin} channels, "
                    f"got weight dims {p.weight.dims}"
                )
        if self.sap_attn.weight.dims != (1, cin, 1, 1):
            raise ShapeError(
                f"sap_attn must map {cin} channels to one score map, "
                f"got weight dims {self.sap_attn.weight.dims}"
            )


class FrameSequenceBuffer:
    """Rolling window of the last k per-frame feature tensors, oldest first.

    Reads always yield exactly k frames: when fewer have been pushed, the
    oldest available frame is repeated on the left, which keeps the first
    frame of a sequence well-defined.
    """

    def __init__(self, capacity: int = 4):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._frames: list[Tensor] = []

    def __len__(self) -> int:
        return len(self._frames)

    def push(self, frame: Tensor) -> None:
        if self._frames and frame.dims != self._frames[0].dims:
            raise ShapeError(
                f"frame dims {frame.dims} differ from buffered {self._frames[0].dims}"
            )
        self._frames.append(frame)
        if len(self._frames) > self.capacity:
            self._frames.pop(0)

    def read(self) -> list[Tensor]:
        if not self._frames:
            raise ValueError("cannot read from an empty frame buffer")
        pad = [self._frames[0]] * (self.capacity - len(self._frames))
        return pad + list(self._frames)

    def clear(self) -> None:
        self._frames.clear()


def temporal_summary(seq: list[Tensor], layer: GtConvLayer) -> Tensor:
    """Pooled and mixed sequence summary, shape [k, C, 1, 1]."""
    if not seq:
        raise ShapeError("temporal_summary needs at least one frame")
    dims = seq[0].dims
    for f in seq[1:]:
        if f.dims != dims:
            raise ShapeError(f"frame dims differ across sequence: {dims} vs {f.dims}")
    gap_stack = Tensor(np.stack([gap(f).data for f in seq]))
    sap_stack = Tensor(np.stack([sap(f, layer.sap_attn).data for f in seq]))
    mixed = Tensor(
        conv3d(gap_stack, layer.f_agg_gap, temporal_pad=0).data
        + conv3d(sap_stack, layer.f_agg_sap, temporal_pad=0).data
    )
    return batchnorm_inference(
        relu(mixed),
        layer.bn.mean,
        layer.bn.var,
        layer.bn.gamma,
        layer.bn.beta,
        eps=layer.bn.eps,
        channel_axis=1,
    )


def calibration_factors(s: Tensor, layer: GtConvLayer) -> tuple[Tensor, Tensor]:
    """Per-output-channel factors for the current (newest) frame.

    Zero-initialized generators give alpha == 1, i.e. the uncalibrated base
    convolution.
    """
    aw = conv3d(s, layer.f_w, temporal_pad=1).data[-1, :, 0, 0]
    ab = conv3d(s, layer.f_b, temporal_pad=1).data[-1, :, 0, 0]
    return Tensor(1.0 + aw), Tensor(1.0 + ab)


def gtconv_forward(x_t: Tensor, buffer: FrameSequenceBuffer, layer: GtConvLayer) -> Tensor:
    """Calibrated convolution of the newest frame.

    The buffer must already contain x_t as its newest entry; history is read
    from the buffer only, so identical histories give identical outputs.
    """
    seq = buffer.read()
    if not np.array_equal(seq[-1].data, x_t.data):
        raise ValueError("buffer's newest frame does not match x_t; push it first")
    s = temporal_summary(seq, layer)
    alpha_w, alpha_b = calibration_factors(s, layer)
    weight = Tensor(layer.base.weight.data * alpha_w.data[:, None, None, None])
    bias = Tensor(layer.base.bias.data * alpha_b.data)
    calibrated = ConvParams(weight, bias, layer.base.stride, layer.base.padding)
    return conv2d(x_t, calibrated)


_GTCONV_ENTRIES = (
    "gtconv.base.weight",
    "gtconv.base.bias",
    "gtconv.f_agg_gap.weight",
    "gtconv.f_agg_gap.bias",
    "gtconv.f_agg_sap.weight",
    "gtconv.f_agg_sap.bias",
    "gtconv.bn.mean",
    "gtconv.bn.var",
    "gtconv.bn.gamma",
    "gtconv.bn.beta",
    "gtconv.f_w.weight",
    "gtconv.f_w.bias",
    "gtconv.f_b.weight",
    "gtconv.f_b.bias",
    "gtconv.sap_attn.weight",
    "gtconv.sap_attn.bias",
)


def layer_from_weights(
    weights: dict[str, Tensor], stride: int = 1, padding: int | None = None
) -> GtConvLayer:
    """Assemble a layer from a named-tensor map (see _GTCONV_ENTRIES).

    Padding defaults to (kh-1)//2 of the base kernel so feature shape is
    preserved.
    """
    missing = [n for n in _GTCONV_ENTRIES if n not in weights]
    if missing:
        raise WeightsFormatError(f"missing weight entries: {', '.join(missing)}")
    w = weights
    if padding is None:
        padding = (w["gtconv.base.weight"].dims[2] - 1) // 2
    return GtConvLayer(
        base=ConvParams(w["gtconv.base.weight"], w["gtconv.base.bias"], stride, padding),
        f_agg_gap=ConvParams(w["gtconv.f_agg_gap.weight"], w["gtconv.f_agg_gap.bias"]),
        f_agg_sap=ConvParams(w["gtconv.f_agg_sap.weight"], w["gtconv.f_agg_sap.bias"]),
        bn=BnStats(
            mean=w["gtconv.bn.mean"],
            var=w["gtconv.bn.var"],
            gamma=w["gtconv.bn.gamma"],
            beta=w["gtconv.bn.beta"],
        ),
        f_w=ConvParams(w["gtconv.f_w.weight"], w["gtconv.f_w.bias"]),
        f_b=ConvParams(w["gtconv.f_b.weight"], w["gtconv.f_b.bias"]),
        sap_attn=ConvParams(w["gtconv.sap_attn.weight"], w["gtconv.sap_attn.bias"]),
    )
