"""Convolutional LSTM over the context window plus progressive accumulation.

The cell follows the classical gate wiring (the forget-labeled gate
multiplies the previous cell state, the input-labeled gate the candidate)
with two substitutions: gate pre-activations are convolutions over the
channel-concatenated [input, hidden] pair, and the hidden output is a 3x3
convolution of o*C instead of o*tanh(C):

    f, i, o = sigmoid(W_* . concat[x, h_prev] + b_*)
    c_tilde = tanh(W_C . concat[x, h_prev] + b_C)
    C       = f * C_prev + i * c_tilde
    h       = F(o * C)

A dense elementwise reference step is kept alongside as the gate-wiring
oracle. The per-step hidden states are then merged oldest-to-newest by a
left fold: each fold halves both operands' channels with its own pair of
reducing convolutions and concatenates them back to C channels, producing
the fused feature map with the per-frame shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, WeightsFormatError
from .tensor import ConvParams, Tensor, concat_channels, conv2d


@dataclass(frozen=True)
class DenseLstmGate:
    w_x: np.ndarray
    w_h: np.ndarray
    b: np.ndarray


@dataclass(frozen=True)
class DenseLstmWeights:
    f: DenseLstmGate
    i: DenseLstmGate
    o: DenseLstmGate
    c: DenseLstmGate

    @staticmethod
    def ones(dim: int = 1) -> "DenseLstmWeights":
        gate = DenseLstmGate(np.ones(dim), np.ones(dim), np.zeros(dim))
        return DenseLstmWeights(gate, gate, gate, gate)


def lstm_reference_step(
    x: np.ndarray, state: tuple[np.ndarray, np.ndarray], weights: DenseLstmWeights
) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray]]:
    """Classical dense LSTM step; returns (h, (h, C)).

    Used only as a cross-check of the gate wiring against the convolutional
    cell.
    """
    h_prev, c_prev = state

    def gate(g: DenseLstmGate, act) -> np.ndarray:
        return act(g.w_x * x + g.w_h * h_prev + g.b)

    sig = lambda z: 1.0 / (1.0 + np.exp(-z))
    f = gate(weights.f, sig)
    i = gate(weights.i, sig)
    o = gate(weights.o, sig)
    c_tilde = gate(weights.c, np.tanh)
    c = f * c_prev + i * c_tilde
    h = o * np.tanh(c)
    return h, (h, c)


@dataclass(frozen=True)
class LstmState:
    h: Tensor
    c: Tensor

    def __post_init__(self):
        if self.h.dims != self.c.dims:
            raise ShapeError(f"h dims {self.h.dims} differ from C dims {self.c.dims}")

    @staticmethod
    def zeros(channels: int, height: int, width: int) -> "LstmState":
        z = Tensor.zeros((channels, height, width))
        return LstmState(z, z)


@dataclass(frozen=True)
class ConvLstmCell:
    w_f: ConvParams
    w_i: ConvParams
    w_o: ConvParams
    w_c: ConvParams
    out_fuse: ConvParams  # 3x3, applied to o*C

    def __post_init__(self):
        dims = self.w_f.weight.dims
        for name, p in (("w_i", self.w_i), ("w_o", self.w_o), ("w_c", self.w_c)):
            if p.weight.dims != dims:
                raise ShapeError(
                    f"gate convs must share extents; w_f {dims} vs {name} {p.weight.dims}"
                )
        ch = dims[0]
        fw = self.out_fuse.weight.dims
        if fw != (ch, ch, 3, 3) or self.out_fuse.padding != 1:
            raise ShapeError(
                f"output fusion must be a shape-preserving {ch}->{ch} 3x3 conv, "
                f"got weight dims {fw} with padding {self.out_fuse.padding}"
            )

    @property
    def hidden_channels(self) -> int:
        return self.w_f.weight.dims[0]

    @property
    def input_channels(self) -> int:
        return self.w_f.weight.dims[1] - self.hidden_channels


def identity_fuse(channels: int) -> ConvParams:
    """3x3 center-tap convolution that leaves its input unchanged."""
    w = np.zeros((channels, channels, 3, 3))
    for c in range(channels):
        w[c, c, 1, 1] = 1.0
    return ConvParams(Tensor(w), Tensor.zeros((channels,)), padding=1)


def convlstm_step(
    x: Tensor, state: LstmState, cell: ConvLstmCell
) -> tuple[Tensor, LstmState]:
    """One cell update; returns (hidden output, new state)."""
    if x.dims[0] != cell.input_channels:
        raise ShapeError(
            f"input has {x.dims[0]} channels, cell expects {cell.input_channels}"
        )
    if state.h.dims != (cell.hidden_channels,) + x.dims[1:]:
        raise ShapeError(
            f"state dims {state.h.dims} incompatible with input {x.dims} "
            f"and {cell.hidden_channels} hidden channels"
        )
    stacked = concat_channels([x, state.h])

    def gate(p: ConvParams) -> np.ndarray:
        out = conv2d(stacked, p)
        if out.dims != state.h.dims:
            raise ShapeError(
                f"gate conv output {out.dims} must match state {state.h.dims}"
            )
        return out.data

    f = 1.0 / (1.0 + np.exp(-gate(cell.w_f)))
    i = 1.0 / (1.0 + np.exp(-gate(cell.w_i)))
    o = 1.0 / (1.0 + np.exp(-gate(cell.w_o)))
    c_tilde = np.tanh(gate(cell.w_c))
    c_new = f * state.c.data + i * c_tilde
    h_out = conv2d(Tensor(o * c_new), cell.out_fuse)
    return h_out, LstmState(h_out, Tensor(c_new))


def run_sequence(
    seq: list[Tensor], cell: ConvLstmCell, init: LstmState | None = None
) -> list[Tensor]:
    """Hidden states for each frame in temporal order; zero initial state."""
    if not seq:
        raise ShapeError("run_sequence needs at least one frame")
    dims = seq[0].dims
    for f in seq[1:]:
        if f.dims != dims:
            raise ShapeError(f"frame dims differ across sequence: {dims} vs {f.dims}")
    state = init or LstmState.zeros(cell.hidden_channels, dims[1], dims[2])
    hiddens: list[Tensor] = []
    for frame in seq:
        h, state = convlstm_step(frame, state, cell)
        hiddens.append(h)
    return hiddens


@dataclass(frozen=True)
class AccumulatorStack:
    """Reducing convolutions consumed pairwise, one pair per fold.

    Folding k hidden states takes k-1 folds and therefore 2*(k-1) reducers:
    reducer 2j acts on the accumulator, reducer 2j+1 on the incoming hidden
    state of fold j. Every reducer halves the channel count.
    """

    reducers: list[ConvParams]

    def __post_init__(self):
        for idx, p in enumerate(self.reducers):
            cout, cin = p.weight.dims[0], p.weight.dims[1]
            if cin != 2 * cout:
                raise ShapeError(
                    f"reducer {idx} must halve channels, got weight dims {p.weight.dims}"
                )


def progressive_accumulate(hiddens: list[Tensor], stack: AccumulatorStack) -> Tensor:
    """Left-fold merge of hidden states, oldest to newest.

    The output keeps the per-frame feature shape [C,H,W]; a single hidden
    state is returned unchanged.
    """
    if not hiddens:
        raise ShapeError("progressive_accumulate needs at least one hidden state")
    k = len(hiddens)
    if k == 1:
        return hiddens[0]
    channels = hiddens[0].dims[0]
    if channels % 2:
        raise ShapeError(f"channel count must be even to fold, got {channels}")
    needed = 2 * (k - 1)
    if len(stack.reducers) < needed:
        raise ShapeError(
            f"folding {k} states needs {needed} reducers, stack has {len(stack.reducers)}"
        )
    acc = hiddens[0]
    for j in range(1, k):
        r_acc, r_new = stack.reducers[2 * (j - 1)], stack.reducers[2 * (j - 1) + 1]
        a = conv2d(acc, r_acc)
        b = conv2d(hiddens[j], r_new)
        acc = concat_channels([a, b])
        if acc.dims != hiddens[0].dims:
            raise ShapeError(
                f"fold {j} produced {acc.dims}, expected {hiddens[0].dims}; "
                "reducers must preserve spatial extent"
            )
    return acc


def hqim_forward(
    seq: list[Tensor],
    cell: ConvLstmCell,
    stack: AccumulatorStack,
    init: LstmState | None = None,
) -> Tensor:
    """Run the cell over the window, then fold the hiddens into one feature map."""
    return progressive_accumulate(run_sequence(seq, cell, init), stack)


_CELL_ENTRIES = tuple(
    f"hqim.cell.{g}.{part}" for g in ("W_f", "W_i", "W_o", "W_C", "F") for part in ("weight", "bias")
)


def cell_from_weights(weights: dict[str, Tensor], gate_padding: int | None = None) -> ConvLstmCell:
    """Assemble a cell from a named-tensor map (hqim.cell.{W_f,W_i,W_o,W_C,F}).

    Gate padding defaults to (kh-1)//2 so the gates preserve spatial shape.
    """
    missing = [n for n in _CELL_ENTRIES if n not in weights]
    if missing:
        raise WeightsFormatError(f"missing weight entries: {', '.join(missing)}")
    w = weights
    if gate_padding is None:
        gate_padding = (w["hqim.cell.W_f.weight"].dims[2] - 1) // 2

    def conv(name: str, padding: int) -> ConvParams:
        return ConvParams(w[f"{name}.weight"], w[f"{name}.bias"], padding=padding)

    return ConvLstmCell(
        w_f=conv("hqim.cell.W_f", gate_padding),
        w_i=conv("hqim.cell.W_i", gate_padding),
        w_o=conv("hqim.cell.W_o", gate_padding),
        w_c=conv("hqim.cell.W_C", gate_padding),
        out_fuse=conv("hqim.cell.F", 1),
    )


def stack_from_weights(weights: dict[str, Tensor]) -> AccumulatorStack:
    """Collect hqim.acc.reducer{idx}.{weight,bias} entries in index order.

    An empty stack is valid (folding a single hidden state needs none).
    """
    reducers = []
    idx = 0
    while f"hqim.acc.reducer{idx}.weight" in weights:
        if f"hqim.acc.reducer{idx}.bias" not in weights:
            raise WeightsFormatError(f"missing weight entries: hqim.acc.reducer{idx}.bias")
        wgt = weights[f"hqim.acc.reducer{idx}.weight"]
        padding = (wgt.dims[2] - 1) // 2
        reducers.append(ConvParams(wgt, weights[f"hqim.acc.reducer{idx}.bias"], padding=padding))
        idx += 1
    return AccumulatorStack(reducers)
