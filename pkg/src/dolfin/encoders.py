"""Sequence encoders: temporal convolution and BiLSTM.

Both map an embedded token sequence [n x d_w] to one context vector per
position.  The convolutional encoder zero-pads so every filter size yields
n rows and concatenates all channels per position; the BiLSTM encoder runs
one LSTM in each direction and concatenates the two states per position,
forward half first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .tensor import ShapeError, Tensor, parameter

CONV = "conv"
BILSTM = "bilstm"


@dataclass
class EncoderConfig:
    kind: str = CONV
    filter_sizes: tuple[int, ...] = (3, 4, 5)
    filters_per_size: int = 100
    lstm_hidden: int = 100

    def __post_init__(self):
        if self.kind not in (CONV, BILSTM):
            raise ValueError(f"unknown encoder kind {self.kind!r}")
        if self.filters_per_size < 1 or self.lstm_hidden < 1 or \
                any(h < 1 for h in self.filter_sizes):
            raise ValueError("encoder dimensions must be positive")
        self.filter_sizes = tuple(self.filter_sizes)

    @property
    def output_width(self) -> int:
        if self.kind == CONV:
            return len(self.filter_sizes) * self.filters_per_size
        return 2 * self.lstm_hidden


@dataclass
class EncodedSequence:
    """Per-position context vectors plus, for BiLSTM, the raw directional states."""

    vectors: Tensor  # [n x d_enc]
    kind: str
    forward_states: list[Tensor] = field(default_factory=list)
    backward_states: list[Tensor] = field(default_factory=list)

    @property
    def length(self) -> int:
        return self.vectors.shape[0]

    @property
    def d_enc(self) -> int:
        return self.vectors.shape[1]


class ConvEncoder:
    """Same-length temporal convolution over the token axis."""

    def __init__(self, embed_dim: int, cfg: EncoderConfig, rng: np.random.Generator,
                 dtype=np.float32):
        self.cfg = cfg
        self.embed_dim = embed_dim
        weights, biases = [], []
        for h in cfg.filter_sizes:
            fan_in = h * embed_dim
            bound = np.sqrt(1.0 / fan_in)
            weights.append(parameter(
                rng.uniform(-bound, bound, size=(fan_in, cfg.filters_per_size)), dtype=dtype))
            biases.append(parameter(np.zeros(cfg.filters_per_size), dtype=dtype))
        self.bank = ops.FilterBank(cfg.filter_sizes, weights, biases)

    @property
    def output_width(self) -> int:
        return self.cfg.output_width

    def encode(self, x: Tensor) -> EncodedSequence:
        return EncodedSequence(ops.conv1d_temporal(x, self.bank, pad=True), CONV)

    def parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for h, w, b in zip(self.bank.sizes, self.bank.weights, self.bank.biases):
            out.append((f"conv{h}.weight", w))
            out.append((f"conv{h}.bias", b))
        return out


class BiLstmEncoder:
    """Forward and backward LSTM passes, states concatenated per position."""

    def __init__(self, embed_dim: int, cfg: EncoderConfig, rng: np.random.Generator,
                 dtype=np.float32):
        self.cfg = cfg
        self.embed_dim = embed_dim
        self.hidden = cfg.lstm_hidden

        def make_direction():
            h = self.hidden
            w_x = parameter(rng.uniform(-0.1, 0.1, size=(embed_dim, 4 * h)), dtype=dtype)
            w_h = parameter(rng.uniform(-0.1, 0.1, size=(h, 4 * h)), dtype=dtype)
            b = np.zeros(4 * h)
            b[h:2 * h] = 1.0  # forget-gate bias starts open
            return w_x, w_h, parameter(b, dtype=dtype)

        self.fwd = make_direction()
        self.bwd = make_direction()
        self.dtype = dtype

    @property
    def output_width(self) -> int:
        return self.cfg.output_width

    def _run(self, x: Tensor, indices, params) -> list[Tensor]:
        w_x, w_h, b = params
        h = Tensor(np.zeros(self.hidden, dtype=self.dtype))
        c = Tensor(np.zeros(self.hidden, dtype=self.dtype))
        states = {}
        for i in indices:
            h, c = ops.lstm_cell(ops.take_row(x, i), h, c, w_x, w_h, b)
            states[i] = h
        return [states[i] for i in range(len(indices))]

    def encode(self, x: Tensor) -> EncodedSequence:
        n = x.shape[0]
        fwd = self._run(x, range(n), self.fwd)
        bwd = self._run(x, range(n - 1, -1, -1), self.bwd)
        rows = [ops.concat([fwd[i], bwd[i]]) for i in range(n)]
        return EncodedSequence(ops.stack_rows(rows), BILSTM,
                               forward_states=fwd, backward_states=bwd)

    def parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for name, (w_x, w_h, b) in (("fwd", self.fwd), ("bwd", self.bwd)):
            out.append((f"lstm.{name}.w_x", w_x))
            out.append((f"lstm.{name}.w_h", w_h))
            out.append((f"lstm.{name}.bias", b))
        return out


def build_encoder(cfg: EncoderConfig, embed_dim: int, rng: np.random.Generator,
                  dtype=np.float32):
    if cfg.kind == CONV:
        return ConvEncoder(embed_dim, cfg, rng, dtype)
    return BiLstmEncoder(embed_dim, cfg, rng, dtype)


def bilstm_endpoints(seq: EncodedSequence) -> Tensor:
    """Backward state at position 0 concatenated with forward state at position n-1."""
    if seq.kind != BILSTM:
        raise ShapeError("bilstm_endpoints needs a bilstm-encoded sequence")
    return ops.concat([seq.backward_states[0], seq.forward_states[-1]])
