from __future__ import annotations

import math

import numpy as np

from ..autograd import ShapeError, Tensor, matmul, reshape, softmax, tanh, transpose

NEG_INF = -1e9


def additive_mask(allowed, dtype) -> np.ndarray:
    """0 where attention is allowed, a large negative number elsewhere."""
    return np.where(np.asarray(allowed, dtype=bool), 0.0, NEG_INF).astype(dtype)


def precompute_keys(states: Tensor, w: dict, scoring: str = "additive") -> Tensor | None:
    if scoring == "additive":
        return matmul(states, w["W_k"])
    return None


def soft_attention(query: Tensor, states: Tensor, w: dict | None = None, *,
                   keys: Tensor | None = None, mask=None,
                   scoring: str = "additive") -> tuple[Tensor, Tensor]:
    """Attend from decoder states over encoder positions.

    ``query`` is ``(B, H)`` or ``(B, T, H)``; ``states`` is ``(B, S, H)``.
    Additive scoring is ``v . tanh(q W_q + h_j W_k)``; dot scoring is
    ``q . h_j``. ``mask`` (``(B, S)``, truthy = real position) hides padding.
    Returns ``(context, weights)`` with weights summing to one over ``S``.
    """
    if states.ndim != 3 or states.shape[1] == 0:
        raise ShapeError(f"soft_attention: need non-empty (B, S, H) states, got {states.shape}")
    single = query.ndim == 2
    q = reshape(query, (query.shape[0], 1, query.shape[1])) if single else query
    if scoring == "additive":
        if keys is None:
            keys = matmul(states, w["W_k"])
        qp = matmul(q, w["W_q"])                          # B,T,A
        B, T, A = qp.shape
        S = keys.shape[1]
        e = tanh(reshape(qp, (B, T, 1, A)) + reshape(keys, (keys.shape[0], 1, S, A)))
        scores = matmul(e, w["v"])                         # B,T,S
    elif scoring == "dot":
        scores = matmul(q, transpose(states, (0, 2, 1)))   # B,T,S
    else:
        raise ValueError(f"unknown scoring {scoring!r}")
    if mask is not None:
        m = additive_mask(mask, scores.dtype)
        scores = scores + m.reshape(m.shape[0], 1, m.shape[-1])
    weights = softmax(scores, axis=-1)
    ctx = matmul(weights, states)                          # B,T,H
    if single:
        ctx = reshape(ctx, (ctx.shape[0], ctx.shape[2]))
        weights = reshape(weights, (weights.shape[0], weights.shape[2]))
    return ctx, weights


def multi_head_attention(queries: Tensor, keys: Tensor, values: Tensor, w: dict,
                         num_heads: int, mask=None, return_weights: bool = False):
    """Scaled dot-product attention over ``num_heads`` projected subspaces.

    Inputs are ``(B, T, d)``; ``w`` holds ``W_q, W_k, W_v, W_o`` (``d x d``).
    ``mask`` broadcasts to ``(B, Tq, Tk)``, truthy = may attend.
    """
    d = queries.shape[-1]
    if d % num_heads:
        raise ShapeError(f"multi_head_attention: model dim {d} not divisible by {num_heads} heads")
    B, Tq, _ = queries.shape
    Tk = keys.shape[1]
    dh = d // num_heads

    def split(x, W, T):
        return transpose(reshape(matmul(x, W), (x.shape[0], T, num_heads, dh)), (0, 2, 1, 3))

    q = split(queries, w["W_q"], Tq)
    k = split(keys, w["W_k"], Tk)
    v = split(values, w["W_v"], Tk)
    scores = matmul(q, transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(dh))  # B,h,Tq,Tk
    if mask is not None:
        m = additive_mask(mask, scores.dtype)
        m = np.broadcast_to(m, np.broadcast_shapes(m.shape, (1, Tq, Tk)))
        scores = scores + m.reshape(m.shape[0], 1, Tq, Tk)
    a = softmax(scores, axis=-1)
    ctx = transpose(matmul(a, v), (0, 2, 1, 3))
    out = matmul(reshape(ctx, (ctx.shape[0], Tq, d)), w["W_o"])
    return (out, a) if return_weights else out


def sinusoidal_positions(n: int, d: int, dtype=np.float32) -> np.ndarray:
    pos = np.arange(n)[:, None]
    i = np.arange(d // 2 + d % 2)[None, :]
    angle = pos / np.power(10000.0, 2 * i / d)
    pe = np.zeros((n, d))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : d // 2])
    return pe.astype(dtype)
