"""Recurrent cells.

Row-vector convention: ``x @ W_x``. Each cell keeps the input projection
``x @ W_x + b`` separate so sequence runners can compute it for all time
steps at once and feed slices to ``*_from_proj``.

GRU convention: ``h = (1 - z) * h_prev + z * h_candidate``.
LSTM gate order in the fused matrices: input, forget, candidate, output.
"""
from __future__ import annotations

import numpy as np

from ..autograd import ShapeError, Tensor, matmul, sigmoid, tanh

GATES = {"vanilla_rnn": 1, "gru": 3, "lstm": 4}


def cell_shapes(arch: str, n_in: int, n_hid: int) -> dict[str, tuple[int, ...]]:
    g = GATES[arch]
    if arch == "gru":
        return {"W_x": (n_in, 3 * n_hid), "W_h": (n_hid, 2 * n_hid),
                "U": (n_hid, n_hid), "b": (3 * n_hid,)}
    return {"W_x": (n_in, g * n_hid), "W_h": (n_hid, g * n_hid), "b": (g * n_hid,)}


def input_projection(x: Tensor, w: dict) -> Tensor:
    return matmul(x, w["W_x"]) + w["b"]


def _check(kind, h_prev, w):
    n = w["W_h"].shape[0]
    if h_prev.shape[-1] != n:
        raise ShapeError(f"{kind}: hidden state has size {h_prev.shape[-1]}, weights expect {n}")


def rnn_from_proj(xw: Tensor, h_prev: Tensor, w: dict) -> Tensor:
    return tanh(xw + matmul(h_prev, w["W_h"]))


def gru_from_proj(xw: Tensor, h_prev: Tensor, w: dict) -> Tensor:
    n = h_prev.shape[-1]
    zr = sigmoid(xw[..., : 2 * n] + matmul(h_prev, w["W_h"]))
    z, r = zr[..., :n], zr[..., n:]
    cand = tanh(xw[..., 2 * n:] + matmul(r * h_prev, w["U"]))
    return h_prev + z * (cand - h_prev)


def lstm_from_proj(xw: Tensor, state: tuple[Tensor, Tensor], w: dict) -> tuple[Tensor, Tensor]:
    h_prev, c_prev = state
    n = h_prev.shape[-1]
    pre = xw + matmul(h_prev, w["W_h"])
    ifo = sigmoid(pre[..., : 2 * n])
    i, f = ifo[..., :n], ifo[..., n:]
    g = tanh(pre[..., 2 * n: 3 * n])
    o = sigmoid(pre[..., 3 * n:])
    c = f * c_prev + i * g
    return o * tanh(c), c


def rnn_cell_step(x: Tensor, h_prev: Tensor, w: dict) -> Tensor:
    _check("rnn_cell_step", h_prev, w)
    return rnn_from_proj(input_projection(x, w), h_prev, w)


def gru_cell_step(x: Tensor, h_prev: Tensor, w: dict) -> Tensor:
    _check("gru_cell_step", h_prev, w)
    return gru_from_proj(input_projection(x, w), h_prev, w)


def lstm_cell_step(x: Tensor, state: tuple[Tensor, Tensor], w: dict) -> tuple[Tensor, Tensor]:
    _check("lstm_cell_step", state[0], w)
    if state[1].shape != state[0].shape:
        raise ShapeError(f"lstm_cell_step: h {state[0].shape} and c {state[1].shape} differ")
    return lstm_from_proj(input_projection(x, w), state, w)


def step_from_proj(arch: str, xw: Tensor, state, w: dict):
    """Advance one step; ``state`` is ``h`` or ``(h, c)`` for LSTM."""
    if arch == "vanilla_rnn":
        return rnn_from_proj(xw, state, w)
    if arch == "gru":
        return gru_from_proj(xw, state, w)
    if arch == "lstm":
        return lstm_from_proj(xw, state, w)
    raise ValueError(f"not a recurrent architecture: {arch}")


def zero_state(arch: str, batch: int, n_hid: int, dtype) -> object:
    h = Tensor(np.zeros((batch, n_hid), dtype=dtype))
    if arch == "lstm":
        return h, Tensor(np.zeros((batch, n_hid), dtype=dtype))
    return h


def hidden(arch: str, state) -> Tensor:
    return state[0] if arch == "lstm" else state
