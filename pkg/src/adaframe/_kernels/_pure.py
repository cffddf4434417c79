"""Pure-numpy kernel backend.

Reference implementation of the fused per-step forward/backward used by
rollouts. The compiled backend in ``_core.pyx`` must match this module
numerically (same operations, same accumulation order per output); the
parity tests hold both to that.

Parameter tuple layout (shared with the compiled backend):
    (w_in, w_forget, w_out, w_cand,        # gate matrices, (H, Z) each
     b_in, b_forget, b_out, b_cand,        # gate biases, (H,)
     query_proj,                           # (D_mem, H)
     class_w, class_b,                     # (C, H), (C,)
     select_w, utility_w)                  # (H,), (H,)
with Z = D_full + D_mem + H and gate input x = [v, context, h_prev].

The gradient tuple mirrors the parameter tuple and is accumulated into.
"""

from __future__ import annotations

import numpy as np

NAME = "pure"


def _softmax(x):
    e = np.exp(x - x.max())
    return e / e.sum()


def _sigmoid_scalar(x):
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


def _sigmoid_vec(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def step_forward(params, enc, values, h_prev, c_prev, v):
    """One agent step: attention query, LSTM cell, three heads.

    Returns (h, c, scores, loc_mean, utility, attn_weights, context, cache).
    """
    (w_in, w_forget, w_out, w_cand,
     b_in, b_forget, b_out, b_cand,
     query_proj, class_w, class_b, select_w, utility_w) = params

    query = query_proj @ h_prev
    attn_weights = _softmax(enc @ query)
    context = attn_weights @ values

    x = np.concatenate([v, context, h_prev])
    gate_in = _sigmoid_vec(w_in @ x + b_in)
    gate_forget = _sigmoid_vec(w_forget @ x + b_forget)
    gate_out = _sigmoid_vec(w_out @ x + b_out)
    cand = np.tanh(w_cand @ x + b_cand)
    c = gate_forget * c_prev + gate_in * cand
    tanh_c = np.tanh(c)
    h = gate_out * tanh_c

    scores = _softmax(class_w @ h + class_b)
    loc_mean = _sigmoid_scalar(float(select_w @ h))
    utility = float(utility_w @ h)

    cache = (x, gate_in, gate_forget, gate_out, cand, c_prev, tanh_c,
             h, attn_weights, scores, loc_mean)
    return h, c, scores, loc_mean, utility, attn_weights, context, cache


def step_backward(params, enc, values, cache, dh_in, dc_in,
                  d_scores, d_loc_mean, d_utility, grads):
    """Backward of one step; accumulates into ``grads``, returns (dh_prev, dc_prev).

    ``d_scores`` is the gradient w.r.t. the probability vector (may be
    None), ``d_loc_mean`` / ``d_utility`` are scalars for the two heads.
    """
    (w_in, w_forget, w_out, w_cand,
     _b_in, _b_forget, _b_out, _b_cand,
     query_proj, class_w, _class_b, select_w, utility_w) = params
    (g_w_in, g_w_forget, g_w_out, g_w_cand,
     g_b_in, g_b_forget, g_b_out, g_b_cand,
     g_query_proj, g_class_w, g_class_b, g_select_w, g_utility_w) = grads
    (x, gate_in, gate_forget, gate_out, cand, c_prev, tanh_c,
     h, attn_weights, scores, loc_mean) = cache

    hidden = h.shape[0]
    mem_dim = enc.shape[1]
    feat_dim = x.shape[0] - mem_dim - hidden
    h_prev = x[feat_dim + mem_dim:]

    dh = np.array(dh_in, dtype=np.float64, copy=True)

    if d_scores is not None:
        d_logits = scores * (d_scores - float(scores @ d_scores))
        g_class_w += np.outer(d_logits, h)
        g_class_b += d_logits
        dh += class_w.T @ d_logits
    if d_loc_mean != 0.0:
        d_pre = d_loc_mean * loc_mean * (1.0 - loc_mean)
        g_select_w += d_pre * h
        dh += d_pre * select_w
    if d_utility != 0.0:
        g_utility_w += d_utility * h
        dh += d_utility * utility_w

    dc = dc_in + dh * gate_out * (1.0 - tanh_c * tanh_c)
    d_out = dh * tanh_c
    d_in = dc * cand
    d_cand = dc * gate_in
    d_forget = dc * c_prev
    dc_prev = dc * gate_forget

    dz_in = d_in * gate_in * (1.0 - gate_in)
    dz_forget = d_forget * gate_forget * (1.0 - gate_forget)
    dz_out = d_out * gate_out * (1.0 - gate_out)
    dz_cand = d_cand * (1.0 - cand * cand)

    g_w_in += np.outer(dz_in, x)
    g_b_in += dz_in
    g_w_forget += np.outer(dz_forget, x)
    g_b_forget += dz_forget
    g_w_out += np.outer(dz_out, x)
    g_b_out += dz_out
    g_w_cand += np.outer(dz_cand, x)
    g_b_cand += dz_cand

    dx = w_in.T @ dz_in + w_forget.T @ dz_forget + w_out.T @ dz_out + w_cand.T @ dz_cand
    d_context = dx[feat_dim:feat_dim + mem_dim]
    dh_prev = dx[feat_dim + mem_dim:].copy()

    # attention backward; memory entries are constants
    d_attn = values @ d_context
    d_attn_scores = attn_weights * (d_attn - float(attn_weights @ d_attn))
    d_query = enc.T @ d_attn_scores
    g_query_proj += np.outer(d_query, h_prev)
    dh_prev += query_proj.T @ d_query

    return dh_prev, dc_prev
