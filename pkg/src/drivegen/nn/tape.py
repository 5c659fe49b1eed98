"""Reverse-mode automatic differentiation over numpy arrays.

A :class:`Tape` both builds and records the computation: every op is a
method on the tape that returns fresh :class:`Tensor` outputs and appends a
node holding a vector-Jacobian closure.  :meth:`Tape.backward` walks the
nodes once in reverse order.

Tensors that were never produced by the tape are leaves; gradients can be
requested for any of them (parameters and inputs alike).
"""

from __future__ import annotations

import math
from typing import Callable, Mapping, Sequence

import numpy as np


class NumericError(FloatingPointError):
    """Raised when an op produces NaN/Inf in its forward or backward pass."""


class Tensor:
    __slots__ = ("data", "name")

    def __init__(self, data, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.data.shape})"


class _Node:
    __slots__ = ("op", "inputs", "outputs", "vjp")

    def __init__(self, op, inputs, outputs, vjp):
        self.op = op
        self.inputs = inputs
        self.outputs = outputs
        self.vjp = vjp


def _check(op: str, arr: np.ndarray, stage: str = "forward") -> None:
    # A sum is non-finite iff some entry is (or the total overflows, which is a failure anyway).
    if not math.isfinite(float(np.sum(arr))):
        raise NumericError(f"non-finite values in {stage} pass of op '{op}'")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    # Only trailing-aligned broadcasting (bias rows, scalars) is supported.
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad.reshape(shape)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Exact identity; tanh never overflows.
    return 0.5 + 0.5 * np.tanh(0.5 * x)


def _gate_scale(hs: int) -> np.ndarray:
    # Packed i, f, g, o pre-activations: sigmoid gates take tanh(z/2).
    s = np.full(4 * hs, 0.5)
    s[2 * hs:3 * hs] = 1.0
    return s


def _gates(z: np.ndarray, scale: np.ndarray, hs: int) -> np.ndarray:
    a = np.tanh(z * scale)
    a[..., :2 * hs] = 0.5 + 0.5 * a[..., :2 * hs]
    a[..., 3 * hs:] = 0.5 + 0.5 * a[..., 3 * hs:]
    return a


class Tape:
    """Records differentiable ops in execution (topological) order."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def _emit(self, op: str, inputs: Sequence[Tensor], outs: Sequence[np.ndarray],
              vjp: Callable) -> tuple[Tensor, ...]:
        tensors = []
        for arr in outs:
            _check(op, arr)
            tensors.append(Tensor(arr))
        self.nodes.append(_Node(op, tuple(inputs), tuple(tensors), vjp))
        return tuple(tensors)

    # -- elementwise ---------------------------------------------------------

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        sa, sb = a.shape, b.shape
        return self._emit("add", (a, b), (a.data + b.data,),
                          lambda g: (_unbroadcast(g[0], sa), _unbroadcast(g[0], sb)))[0]

    def sub(self, a: Tensor, b: Tensor) -> Tensor:
        sa, sb = a.shape, b.shape
        return self._emit("sub", (a, b), (a.data - b.data,),
                          lambda g: (_unbroadcast(g[0], sa), -_unbroadcast(g[0], sb)))[0]

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        ad, bd = a.data, b.data
        return self._emit("mul", (a, b), (ad * bd,),
                          lambda g: (_unbroadcast(g[0] * bd, ad.shape),
                                     _unbroadcast(g[0] * ad, bd.shape)))[0]

    def scale(self, a: Tensor, k: float) -> Tensor:
        return self._emit("scale", (a,), (a.data * k,), lambda g: (g[0] * k,))[0]

    def shift(self, a: Tensor, k: float) -> Tensor:
        return self._emit("shift", (a,), (a.data + k,), lambda g: (g[0],))[0]

    def square(self, a: Tensor) -> Tensor:
        ad = a.data
        return self._emit("square", (a,), (ad * ad,), lambda g: (2.0 * ad * g[0],))[0]

    def sqrt(self, a: Tensor) -> Tensor:
        # Invalid inputs surface as NumericError from the finiteness check instead.
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.sqrt(a.data)

        def vjp(g):
            with np.errstate(divide="ignore", invalid="ignore"):
                return (g[0] * 0.5 / out,)

        return self._emit("sqrt", (a,), (out,), vjp)[0]

    def tanh(self, a: Tensor) -> Tensor:
        out = np.tanh(a.data)
        return self._emit("tanh", (a,), (out,), lambda g: (g[0] * (1.0 - out * out),))[0]

    def sigmoid(self, a: Tensor) -> Tensor:
        out = _sigmoid(a.data)
        return self._emit("sigmoid", (a,), (out,), lambda g: (g[0] * out * (1.0 - out),))[0]

    def leaky_relu(self, a: Tensor, slope: float = 0.2) -> Tensor:
        mask = np.where(a.data > 0, 1.0, slope)
        return self._emit("leaky_relu", (a,), (a.data * mask,), lambda g: (g[0] * mask,))[0]

    def softplus(self, a: Tensor) -> Tensor:
        x = a.data
        out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
        return self._emit("softplus", (a,), (out,), lambda g: (g[0] * _sigmoid(x),))[0]

    def activate(self, a: Tensor, kind: str) -> Tensor:
        if kind == "linear":
            return a
        if kind == "tanh":
            return self.tanh(a)
        if kind == "sigmoid":
            return self.sigmoid(a)
        if kind == "leaky_relu":
            return self.leaky_relu(a, 0.2)
        raise ValueError(f"unknown activation {kind!r}")

    # -- linear algebra / shape ------------------------------------------------

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        ad, bd = a.data, b.data
        if ad.shape[-1] != bd.shape[0]:
            raise ValueError(f"matmul shape mismatch {ad.shape} @ {bd.shape}")
        return self._emit("matmul", (a, b), (ad @ bd,),
                          lambda g: (g[0] @ bd.T, ad.T @ g[0]))[0]

    def linear(self, x: Tensor, w: Tensor, b: Tensor) -> Tensor:
        """``x @ w + b`` for 2-D ``x``."""
        xd, wd = x.data, w.data
        if xd.ndim != 2 or xd.shape[1] != wd.shape[0]:
            raise ValueError(f"linear shape mismatch {xd.shape} @ {wd.shape}")
        return self._emit("linear", (x, w, b), (xd @ wd + b.data,),
                          lambda g: (g[0] @ wd.T, xd.T @ g[0], g[0].sum(axis=0)))[0]

    def reshape(self, a: Tensor, shape) -> Tensor:
        old = a.shape
        return self._emit("reshape", (a,), (a.data.reshape(shape),),
                          lambda g: (g[0].reshape(old),))[0]

    def concat(self, parts: Sequence[Tensor], axis: int = -1) -> Tensor:
        sizes = [p.shape[axis] for p in parts]
        cuts = np.cumsum(sizes)[:-1]

        def vjp(g):
            return tuple(np.split(g[0], cuts, axis=axis))

        return self._emit("concat", tuple(parts),
                          (np.concatenate([p.data for p in parts], axis=axis),), vjp)[0]

    def stack(self, parts: Sequence[Tensor]) -> Tensor:
        """Stack equally shaped tensors along a new leading axis."""
        n = len(parts)
        return self._emit("stack", tuple(parts), (np.stack([p.data for p in parts]),),
                          lambda g: tuple(g[0][i] for i in range(n)))[0]

    def flip(self, a: Tensor, axis: int = 0) -> Tensor:
        return self._emit("flip", (a,), (np.flip(a.data, axis=axis).copy(),),
                          lambda g: (np.flip(g[0], axis=axis).copy(),))[0]

    def take(self, a: Tensor, index, axis: int = 0) -> Tensor:
        """Integer-array or slice selection along ``axis``."""
        shape = a.shape
        sel = [slice(None)] * a.data.ndim
        sel[axis] = index
        sel = tuple(sel)

        def vjp(g):
            out = np.zeros(shape)
            np.add.at(out, sel, g[0])
            return (out,)

        return self._emit("take", (a,), (a.data[sel],), vjp)[0]

    # -- reductions / losses ---------------------------------------------------

    def sum(self, a: Tensor, axis: int | None = None) -> Tensor:
        shape = a.shape

        def vjp(g):
            gg = g[0] if axis is None else np.expand_dims(g[0], axis)
            return (np.broadcast_to(gg, shape).copy(),)

        return self._emit("sum", (a,), (np.asarray(a.data.sum(axis=axis)),), vjp)[0]

    def mean(self, a: Tensor) -> Tensor:
        shape, n = a.shape, a.data.size
        return self._emit("mean", (a,), (np.asarray(a.data.mean()),),
                          lambda g: (np.full(shape, float(g[0]) / n),))[0]

    def mse(self, a: Tensor, b: Tensor) -> Tensor:
        """Mean squared error over all elements."""
        diff = a.data - b.data
        n = diff.size
        return self._emit("mse", (a, b), (np.asarray(np.mean(diff * diff)),),
                          lambda g: (2.0 * float(g[0]) / n * diff,
                                     -2.0 * float(g[0]) / n * diff))[0]

    def bce_with_logits(self, logits: Tensor, target: float) -> Tensor:
        """Mean binary cross-entropy against a constant 0/1 target."""
        x = logits.data
        n = x.size
        loss = np.maximum(x, 0.0) - x * target + np.log1p(np.exp(-np.abs(x)))
        return self._emit("bce_with_logits", (logits,), (np.asarray(loss.mean()),),
                          lambda g: (float(g[0]) / n * (_sigmoid(x) - target),))[0]

    # -- recurrent -------------------------------------------------------------

    def lstm_cell(self, x: Tensor, h: Tensor, c: Tensor,
                  w: Tensor, u: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
        """One LSTM step; gate order in the packed weights is i, f, g, o."""
        xd, hd, cd = x.data, h.data, c.data
        wd, ud = w.data, u.data
        hs = hd.shape[-1]
        if xd.shape[-1] != wd.shape[0] or hs != ud.shape[0]:
            raise ValueError("lstm_cell shape mismatch")
        z = xd @ wd + hd @ ud + b.data
        a = _gates(z, _gate_scale(hs), hs)
        i, f, gg, o = a[:, :hs], a[:, hs:2 * hs], a[:, 2 * hs:3 * hs], a[:, 3 * hs:]
        c_new = f * cd + i * gg
        tc = np.tanh(c_new)
        h_new = o * tc

        def vjp(g):
            gh, gc = g
            dc = gc + gh * o * (1.0 - tc * tc)
            dz = np.concatenate([
                dc * gg * i * (1.0 - i),
                dc * cd * f * (1.0 - f),
                dc * i * (1.0 - gg * gg),
                gh * tc * o * (1.0 - o),
            ], axis=1)
            return (dz @ wd.T, dz @ ud.T, dc * f, xd.T @ dz, hd.T @ dz, dz.sum(axis=0))

        return self._emit("lstm_cell", (x, h, c, w, u, b), (h_new, c_new), vjp)

    def lstm_layer(self, xs: Tensor, h0: Tensor, c0: Tensor,
                   w: Tensor, u: Tensor, b: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        """Run a whole ``[T, B, F]`` sequence through one LSTM layer.

        Returns the per-step hidden states ``[T, B, H]`` and the final
        ``(h, c)``.  Backpropagation through time is fused into one node.
        """
        xd = xs.data
        wd, ud, bd = w.data, u.data, b.data
        steps, batch, _ = xd.shape
        hs = ud.shape[0]
        if xd.shape[-1] != wd.shape[0]:
            raise ValueError(f"lstm_layer input width {xd.shape[-1]} != {wd.shape[0]}")
        zx = (xd.reshape(steps * batch, -1) @ wd).reshape(steps, batch, 4 * hs) + bd
        hseq = np.empty((steps + 1, batch, hs))
        cseq = np.empty((steps + 1, batch, hs))
        gates = np.empty((steps, batch, 4 * hs))
        hseq[0], cseq[0] = h0.data, c0.data
        scale = _gate_scale(hs)
        for t in range(steps):
            a = gates[t] = _gates(zx[t] + hseq[t] @ ud, scale, hs)
            cseq[t + 1] = a[:, hs:2 * hs] * cseq[t] + a[:, :hs] * a[:, 2 * hs:3 * hs]
            hseq[t + 1] = a[:, 3 * hs:] * np.tanh(cseq[t + 1])

        def vjp(g):
            g_out, g_h, g_c = g
            dzs = np.empty((steps, batch, 4 * hs))
            dh = g_h.copy()
            dc = g_c.copy()
            for t in range(steps - 1, -1, -1):
                a = gates[t]
                i, f = a[:, :hs], a[:, hs:2 * hs]
                gg, o = a[:, 2 * hs:3 * hs], a[:, 3 * hs:]
                dh = dh + g_out[t]
                tc = np.tanh(cseq[t + 1])
                dc = dc + dh * o * (1.0 - tc * tc)
                dz = dzs[t]
                dz[:, :hs] = dc * gg * i * (1.0 - i)
                dz[:, hs:2 * hs] = dc * cseq[t] * f * (1.0 - f)
                dz[:, 2 * hs:3 * hs] = dc * i * (1.0 - gg * gg)
                dz[:, 3 * hs:] = dh * tc * o * (1.0 - o)
                dh = dz @ ud.T
                dc = dc * f
            flat = dzs.reshape(steps * batch, 4 * hs)
            g_x = (flat @ wd.T).reshape(xd.shape)
            g_w = xd.reshape(steps * batch, -1).T @ flat
            g_u = hseq[:-1].reshape(steps * batch, hs).T @ flat
            return (g_x, dh, dc, g_w, g_u, flat.sum(axis=0))

        return self._emit("lstm_layer", (xs, h0, c0, w, u, b),
                          (hseq[1:].copy(), hseq[-1].copy(), cseq[-1].copy()), vjp)

    # -- reverse pass ------------------------------------------------------------

    def gradients(self, loss: Tensor) -> dict[int, np.ndarray]:
        """Gradients of ``loss`` for every tensor reached, keyed by ``id``."""
        if loss.data.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            outs = [grads.pop(id(t), None) for t in node.outputs]
            if all(g is None for g in outs):
                continue
            outs = [np.zeros_like(t.data) if g is None else g
                    for g, t in zip(outs, node.outputs)]
            in_grads = node.vjp(outs)
            for t, g in zip(node.inputs, in_grads):
                _check(node.op, g, "backward")
                key = id(t)
                prev = grads.get(key)
                grads[key] = g if prev is None else prev + g
        return grads

    def backward(self, loss: Tensor, wrt: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
        """Gradients of a scalar ``loss`` with respect to the named tensors.

        Tensors that the loss does not depend on get zero gradients.
        """
        grads = self.gradients(loss)
        return {name: np.asarray(grads.get(id(t), np.zeros_like(t.data))).reshape(t.shape)
                for name, t in wrt.items()}


def backward(tape: Tape, loss: Tensor, wrt: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
    return tape.backward(loss, wrt)
