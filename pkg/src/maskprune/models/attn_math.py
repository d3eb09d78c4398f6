"""Multi-head scaled-dot-product attention, forward with cache and manual backward.

Weights per head h: Wq/Wk/Wv of shape (H, d, dh) and Wo of shape (H, dh, d).
The per-head output f_h = Attn(X Wq_h, X Wk_h, X Wv_h) Wo_h is kept separate so
callers can apply per-head masks and read off exact mask gradients.
"""

from __future__ import annotations

import numpy as np

from .base import softmax

__all__ = ["heads_forward", "heads_backward"]

NEG_INF = -1e30


def heads_forward(X, Wq, Wk, Wv, Wo, causal: bool):
    """Per-head outputs of shape (B, H, T, d) plus the cache for the backward pass."""
    B, T, _ = X.shape
    H, _, dh = Wq.shape
    if H == 0:
        return np.zeros((B, 0, T, Wo.shape[2] if Wo.size else X.shape[2])), None
    q = np.einsum("btd,hde->bhte", X, Wq)
    k = np.einsum("btd,hde->bhte", X, Wk)
    v = np.einsum("btd,hde->bhte", X, Wv)
    scores = np.einsum("bhte,bhse->bhts", q, k) / np.sqrt(dh)
    if causal:
        mask = np.triu(np.ones((T, T), dtype=bool), k=1)
        scores = np.where(mask, NEG_INF, scores)
    attn = softmax(scores, axis=-1)
    ctx = np.einsum("bhts,bhse->bhte", attn, v)
    f = np.einsum("bhte,hed->bhtd", ctx, Wo)
    cache = (q, k, v, attn, ctx)
    return f, cache


def heads_backward(g_f, X, Wq, Wk, Wv, Wo, cache):
    """Gradient w.r.t. the block input X given upstream per-head gradients g_f."""
    if cache is None:
        return np.zeros_like(X)
    q, k, v, attn, _ = cache
    dh = q.shape[-1]
    g_ctx = np.einsum("bhtd,hed->bhte", g_f, Wo)
    g_attn = np.einsum("bhte,bhse->bhts", g_ctx, v)
    g_v = np.einsum("bhts,bhte->bhse", attn, g_ctx)
    # softmax backward; rows that were fully masked have attn = 0 and drop out
    dot = np.sum(g_attn * attn, axis=-1, keepdims=True)
    g_scores = attn * (g_attn - dot)
    g_q = np.einsum("bhts,bhse->bhte", g_scores, k) / np.sqrt(dh)
    g_k = np.einsum("bhts,bhte->bhse", g_scores, q) / np.sqrt(dh)
    g_X = np.einsum("bhte,hde->btd", g_q, Wq)
    g_X += np.einsum("bhte,hde->btd", g_k, Wk)
    g_X += np.einsum("bhte,hde->btd", g_v, Wv)
    return g_X
