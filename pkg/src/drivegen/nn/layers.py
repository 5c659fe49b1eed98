"""Parameter containers and forward passes for LSTM, MLP and ResNet blocks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tape import Tape, Tensor


def _uniform(rng: np.random.Generator, shape, fan_in: int, name: str) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), name=name)


@dataclass
class LstmParams:
    """Packed weights of one LSTM layer, gate order i, f, g, o."""

    w: Tensor  # [input, 4*hidden]
    u: Tensor  # [hidden, 4*hidden]
    b: Tensor  # [4*hidden]

    @property
    def input_size(self) -> int:
        return self.w.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.u.shape[0]

    @classmethod
    def init(cls, rng: np.random.Generator, input_size: int, hidden_size: int,
             name: str = "lstm") -> "LstmParams":
        h = hidden_size
        b = np.zeros(4 * h)
        b[h:2 * h] = 1.0
        return cls(_uniform(rng, (input_size, 4 * h), h, f"{name}.w"),
                   _uniform(rng, (h, 4 * h), h, f"{name}.u"),
                   Tensor(b, name=f"{name}.b"))

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.w": self.w, f"{prefix}.u": self.u, f"{prefix}.b": self.b}


@dataclass
class Linear:
    w: Tensor
    b: Tensor

    @classmethod
    def init(cls, rng, n_in: int, n_out: int, name: str = "linear") -> "Linear":
        return cls(_uniform(rng, (n_in, n_out), n_in, f"{name}.w"),
                   _uniform(rng, (n_out,), n_in, f"{name}.b"))

    @classmethod
    def zeros(cls, n_in: int, n_out: int) -> "Linear":
        return cls(Tensor(np.zeros((n_in, n_out))), Tensor(np.zeros(n_out)))

    def __call__(self, tape: Tape, x: Tensor) -> Tensor:
        return tape.linear(x, self.w, self.b)

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.w": self.w, f"{prefix}.b": self.b}


@dataclass
class MlpParams:
    """Stack of dense layers: ``hidden_act`` between layers, ``out_act`` at the end."""

    layers: list[Linear]
    hidden_act: str = "tanh"
    out_act: str = "linear"

    @classmethod
    def init(cls, rng, widths, hidden_act="tanh", out_act="linear") -> "MlpParams":
        layers = [Linear.init(rng, a, b) for a, b in zip(widths[:-1], widths[1:])]
        return cls(layers, hidden_act, out_act)

    @property
    def widths(self) -> list[int]:
        return [self.layers[0].w.shape[0]] + [lay.w.shape[1] for lay in self.layers]

    def named(self, prefix: str) -> dict[str, Tensor]:
        out = {}
        for k, lay in enumerate(self.layers):
            out.update(lay.named(f"{prefix}.{k}"))
        return out


@dataclass
class ResNetParams:
    """Input projection, residual blocks of two dense layers each, output projection.

    Blocks are pre-activation: ``h + L2(act(L1(act(h))))``, so a block whose
    second layer is all zeros is the identity.  The activation is applied once
    more before the output projection.
    """

    inp: Linear
    blocks: list[tuple[Linear, Linear]]
    out: Linear
    hidden_act: str = "tanh"
    out_act: str = "linear"

    @classmethod
    def init(cls, rng, n_in: int, width: int, n_blocks: int, n_out: int,
             hidden_act="tanh", out_act="linear") -> "ResNetParams":
        blocks = [(Linear.init(rng, width, width), Linear.init(rng, width, width))
                  for _ in range(n_blocks)]
        return cls(Linear.init(rng, n_in, width), blocks, Linear.init(rng, width, n_out),
                   hidden_act, out_act)

    @property
    def widths(self) -> list[int]:
        return [self.inp.w.shape[0], self.inp.w.shape[1], self.out.w.shape[1]]

    def named(self, prefix: str) -> dict[str, Tensor]:
        out = self.inp.named(f"{prefix}.in")
        for k, (a, b) in enumerate(self.blocks):
            out.update(a.named(f"{prefix}.block{k}.a"))
            out.update(b.named(f"{prefix}.block{k}.b"))
        out.update(self.out.named(f"{prefix}.out"))
        return out


def forward_mlp(params: MlpParams | ResNetParams, x: Tensor, tape: Tape) -> Tensor:
    if x.data.ndim != 2 or x.shape[1] != params.widths[0]:
        raise ValueError(f"input width {x.shape} does not match network input {params.widths[0]}")
    if isinstance(params, ResNetParams):
        act = params.hidden_act
        h = params.inp(tape, x)
        for a, b in params.blocks:
            h = tape.add(h, b(tape, tape.activate(a(tape, tape.activate(h, act)), act)))
        return tape.activate(params.out(tape, tape.activate(h, act)), params.out_act)
    h = x
    last = len(params.layers) - 1
    for k, lay in enumerate(params.layers):
        h = tape.activate(lay(tape, h), params.out_act if k == last else params.hidden_act)
    return h


def residual_block(tape: Tape, block: tuple[Linear, Linear], h: Tensor, act: str = "tanh") -> Tensor:
    """Residual branch sum ``h + L2(act(L1(h)))`` without the trailing activation."""
    a, b = block
    return tape.add(h, b(tape, tape.activate(a(tape, h), act)))


def _zeros_state(batch: int, hidden: int) -> Tensor:
    return Tensor(np.zeros((batch, hidden)))


def forward_lstm(params: LstmParams, seq: Tensor, tape: Tape,
                 h0: Tensor | None = None, c0: Tensor | None = None):
    """Run ``seq`` through one layer.

    ``seq`` is ``[T, F]`` or ``[T, B, F]``; outputs follow the same layout.
    Initial states default to zero.
    """
    squeeze = seq.data.ndim == 2
    if squeeze:
        seq = tape.reshape(seq, (seq.shape[0], 1, seq.shape[1]))
    if seq.shape[-1] != params.input_size:
        raise ValueError(f"feature width {seq.shape[-1]} != input_size {params.input_size}")
    batch, hidden = seq.shape[1], params.hidden_size
    h0 = h0 if h0 is not None else _zeros_state(batch, hidden)
    c0 = c0 if c0 is not None else _zeros_state(batch, hidden)
    if h0.data.ndim == 1:
        h0 = tape.reshape(h0, (1, hidden))
    if c0.data.ndim == 1:
        c0 = tape.reshape(c0, (1, hidden))
    out, h_t, c_t = tape.lstm_layer(seq, h0, c0, params.w, params.u, params.b)
    if squeeze:
        out = tape.reshape(out, (out.shape[0], hidden))
        h_t = tape.reshape(h_t, (hidden,))
        c_t = tape.reshape(c_t, (hidden,))
    return out, h_t, c_t


def forward_bilstm(params: tuple[LstmParams, LstmParams], seq: Tensor, tape: Tape) -> Tensor:
    """Forward pass plus reversed-time pass, concatenated per step: ``[T, (B,) 2H]``."""
    fwd, bwd = params
    out_f, _, _ = forward_lstm(fwd, seq, tape)
    out_b, _, _ = forward_lstm(bwd, tape.flip(seq, 0), tape)
    return tape.concat([out_f, tape.flip(out_b, 0)], axis=-1)


@dataclass
class LstmStack:
    layers: list[LstmParams] = field(default_factory=list)

    @classmethod
    def init(cls, rng, input_size: int, hidden_size: int, n_layers: int, name="lstm"):
        sizes = [input_size] + [hidden_size] * n_layers
        return cls([LstmParams.init(rng, a, hidden_size, f"{name}{k}")
                    for k, a in enumerate(sizes[:-1])])

    def named(self, prefix: str) -> dict[str, Tensor]:
        out = {}
        for k, lay in enumerate(self.layers):
            out.update(lay.named(f"{prefix}.{k}"))
        return out

    def __call__(self, tape: Tape, seq: Tensor, init=None):
        """Batched ``[T, B, F]`` forward through all layers.

        ``init`` optionally gives per-layer ``(h0, c0)``.  Returns top-layer
        outputs and the list of final states.
        """
        finals = []
        h = seq
        for k, lay in enumerate(self.layers):
            h0, c0 = init[k] if init is not None else (None, None)
            h, h_t, c_t = forward_lstm(lay, h, tape, h0, c0)
            finals.append((h_t, c_t))
        return h, finals
