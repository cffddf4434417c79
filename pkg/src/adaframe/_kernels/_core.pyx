# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernel backend.

Fused per-step forward/backward in C loops. Must stay numerically in
lockstep with ``_pure.py`` (same parameter/cache tuple layout, same
operation order per output element); the backend parity tests enforce
this on random cases.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()

NAME = "cython"


cdef inline double _sigmoid(double x) noexcept:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef void _softmax_inplace(double[::1] x) noexcept:
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double m = x[0]
    cdef double s = 0.0
    for i in range(1, n):
        if x[i] > m:
            m = x[i]
    for i in range(n):
        x[i] = exp(x[i] - m)
        s += x[i]
    for i in range(n):
        x[i] /= s


cdef void _gate_preact(double[:, ::1] w, double[::1] b, double[::1] x,
                       double[::1] out) noexcept:
    cdef Py_ssize_t i, k, rows = w.shape[0], cols = w.shape[1]
    cdef double acc
    for i in range(rows):
        acc = 0.0
        for k in range(cols):
            acc += w[i, k] * x[k]
        out[i] = acc + b[i]


def step_forward(params, double[:, ::1] enc, double[:, ::1] values,
                 double[::1] h_prev, double[::1] c_prev, double[::1] v):
    """Mirror of ``_pure.step_forward``; see that module for the contract."""
    cdef double[:, ::1] w_in = params[0]
    cdef double[:, ::1] w_forget = params[1]
    cdef double[:, ::1] w_out = params[2]
    cdef double[:, ::1] w_cand = params[3]
    cdef double[::1] b_in = params[4]
    cdef double[::1] b_forget = params[5]
    cdef double[::1] b_out = params[6]
    cdef double[::1] b_cand = params[7]
    cdef double[:, ::1] query_proj = params[8]
    cdef double[:, ::1] class_w = params[9]
    cdef double[::1] class_b = params[10]
    cdef double[::1] select_w = params[11]
    cdef double[::1] utility_w = params[12]

    cdef Py_ssize_t hidden = h_prev.shape[0]
    cdef Py_ssize_t n_mem = enc.shape[0]
    cdef Py_ssize_t mem_dim = enc.shape[1]
    cdef Py_ssize_t feat_dim = v.shape[0]
    cdef Py_ssize_t z_dim = feat_dim + mem_dim + hidden
    cdef Py_ssize_t n_cls = class_w.shape[0]
    cdef Py_ssize_t i, j, k, d

    cdef cnp.ndarray query_a = np.empty(mem_dim, dtype=np.float64)
    cdef cnp.ndarray attn_a = np.empty(n_mem, dtype=np.float64)
    cdef cnp.ndarray context_a = np.empty(mem_dim, dtype=np.float64)
    cdef cnp.ndarray x_a = np.empty(z_dim, dtype=np.float64)
    cdef cnp.ndarray gi_a = np.empty(hidden, dtype=np.float64)
    cdef cnp.ndarray gf_a = np.empty(hidden, dtype=np.float64)
    cdef cnp.ndarray go_a = np.empty(hidden, dtype=np.float64)
    cdef cnp.ndarray gc_a = np.empty(hidden, dtype=np.float64)
    cdef cnp.ndarray c_a = np.empty(hidden, dtype=np.float64)
    cdef cnp.ndarray tc_a = np.empty(hidden, dtype=np.float64)
    cdef cnp.ndarray h_a = np.empty(hidden, dtype=np.float64)
    cdef cnp.ndarray scores_a = np.empty(n_cls, dtype=np.float64)

    cdef double[::1] query = query_a
    cdef double[::1] attn = attn_a
    cdef double[::1] context = context_a
    cdef double[::1] x = x_a
    cdef double[::1] gi = gi_a
    cdef double[::1] gf = gf_a
    cdef double[::1] go = go_a
    cdef double[::1] gc = gc_a
    cdef double[::1] c = c_a
    cdef double[::1] tc = tc_a
    cdef double[::1] h = h_a
    cdef double[::1] scores = scores_a

    cdef double acc

    for d in range(mem_dim):
        acc = 0.0
        for k in range(hidden):
            acc += query_proj[d, k] * h_prev[k]
        query[d] = acc
    for j in range(n_mem):
        acc = 0.0
        for d in range(mem_dim):
            acc += enc[j, d] * query[d]
        attn[j] = acc
    _softmax_inplace(attn)
    for d in range(mem_dim):
        acc = 0.0
        for j in range(n_mem):
            acc += attn[j] * values[j, d]
        context[d] = acc

    for k in range(feat_dim):
        x[k] = v[k]
    for d in range(mem_dim):
        x[feat_dim + d] = context[d]
    for k in range(hidden):
        x[feat_dim + mem_dim + k] = h_prev[k]

    _gate_preact(w_in, b_in, x, gi)
    _gate_preact(w_forget, b_forget, x, gf)
    _gate_preact(w_out, b_out, x, go)
    _gate_preact(w_cand, b_cand, x, gc)
    for i in range(hidden):
        gi[i] = _sigmoid(gi[i])
        gf[i] = _sigmoid(gf[i])
        go[i] = _sigmoid(go[i])
        gc[i] = tanh(gc[i])
        c[i] = gf[i] * c_prev[i] + gi[i] * gc[i]
        tc[i] = tanh(c[i])
        h[i] = go[i] * tc[i]

    for i in range(n_cls):
        acc = 0.0
        for k in range(hidden):
            acc += class_w[i, k] * h[k]
        scores[i] = acc + class_b[i]
    _softmax_inplace(scores)

    acc = 0.0
    for k in range(hidden):
        acc += select_w[k] * h[k]
    cdef double loc_mean = _sigmoid(acc)
    acc = 0.0
    for k in range(hidden):
        acc += utility_w[k] * h[k]
    cdef double utility = acc

    cache = (x_a, gi_a, gf_a, go_a, gc_a, np.asarray(c_prev), tc_a,
             h_a, attn_a, scores_a, loc_mean)
    return h_a, c_a, scores_a, loc_mean, utility, attn_a, context_a, cache


def step_backward(params, double[:, ::1] enc, double[:, ::1] values, cache,
                  double[::1] dh_in, double[::1] dc_in,
                  d_scores, double d_loc_mean, double d_utility, grads):
    """Mirror of ``_pure.step_backward``; accumulates into ``grads``."""
    cdef double[:, ::1] w_in = params[0]
    cdef double[:, ::1] w_forget = params[1]
    cdef double[:, ::1] w_out = params[2]
    cdef double[:, ::1] w_cand = params[3]
    cdef double[:, ::1] query_proj = params[8]
    cdef double[:, ::1] class_w = params[9]
    cdef double[::1] select_w = params[11]
    cdef double[::1] utility_w = params[12]

    cdef double[:, ::1] g_w_in = grads[0]
    cdef double[:, ::1] g_w_forget = grads[1]
    cdef double[:, ::1] g_w_out = grads[2]
    cdef double[:, ::1] g_w_cand = grads[3]
    cdef double[::1] g_b_in = grads[4]
    cdef double[::1] g_b_forget = grads[5]
    cdef double[::1] g_b_out = grads[6]
    cdef double[::1] g_b_cand = grads[7]
    cdef double[:, ::1] g_query_proj = grads[8]
    cdef double[:, ::1] g_class_w = grads[9]
    cdef double[::1] g_class_b = grads[10]
    cdef double[::1] g_select_w = grads[11]
    cdef double[::1] g_utility_w = grads[12]

    cdef double[::1] x = cache[0]
    cdef double[::1] gi = cache[1]
    cdef double[::1] gf = cache[2]
    cdef double[::1] go = cache[3]
    cdef double[::1] gc = cache[4]
    cdef double[::1] c_prev = cache[5]
    cdef double[::1] tc = cache[6]
    cdef double[::1] h = cache[7]
    cdef double[::1] attn = cache[8]
    cdef double[::1] scores = cache[9]
    cdef double loc_mean = cache[10]

    cdef Py_ssize_t hidden = h.shape[0]
    cdef Py_ssize_t n_mem = enc.shape[0]
    cdef Py_ssize_t mem_dim = enc.shape[1]
    cdef Py_ssize_t z_dim = x.shape[0]
    cdef Py_ssize_t feat_dim = z_dim - mem_dim - hidden
    cdef Py_ssize_t n_cls = class_w.shape[0]
    cdef Py_ssize_t i, j, k, d

    cdef cnp.ndarray dh_prev_a = np.empty(hidden, dtype=np.float64)
    cdef cnp.ndarray dc_prev_a = np.empty(hidden, dtype=np.float64)
    cdef double[::1] dh_prev = dh_prev_a
    cdef double[::1] dc_prev = dc_prev_a

    cdef cnp.ndarray dh_a = np.empty(hidden, dtype=np.float64)
    cdef double[::1] dh = dh_a
    for k in range(hidden):
        dh[k] = dh_in[k]

    cdef double[::1] ds
    cdef cnp.ndarray d_logits_a = np.empty(n_cls, dtype=np.float64)
    cdef double[::1] d_logits = d_logits_a
    cdef double acc, dot, d_pre

    if d_scores is not None:
        ds = d_scores
        dot = 0.0
        for i in range(n_cls):
            dot += scores[i] * ds[i]
        for i in range(n_cls):
            d_logits[i] = scores[i] * (ds[i] - dot)
        for i in range(n_cls):
            for k in range(hidden):
                g_class_w[i, k] += d_logits[i] * h[k]
            g_class_b[i] += d_logits[i]
        for k in range(hidden):
            acc = 0.0
            for i in range(n_cls):
                acc += class_w[i, k] * d_logits[i]
            dh[k] += acc
    if d_loc_mean != 0.0:
        d_pre = d_loc_mean * loc_mean * (1.0 - loc_mean)
        for k in range(hidden):
            g_select_w[k] += d_pre * h[k]
            dh[k] += d_pre * select_w[k]
    if d_utility != 0.0:
        for k in range(hidden):
            g_utility_w[k] += d_utility * h[k]
            dh[k] += d_utility * utility_w[k]

    cdef cnp.ndarray dz_in_a = np.empty(hidden, dtype=np.float64)
    cdef cnp.ndarray dz_forget_a = np.empty(hidden, dtype=np.float64)
    cdef cnp.ndarray dz_out_a = np.empty(hidden, dtype=np.float64)
    cdef cnp.ndarray dz_cand_a = np.empty(hidden, dtype=np.float64)
    cdef double[::1] dz_in = dz_in_a
    cdef double[::1] dz_forget = dz_forget_a
    cdef double[::1] dz_out = dz_out_a
    cdef double[::1] dz_cand = dz_cand_a
    cdef double dc, d_in, d_cand, d_forget, d_out

    for i in range(hidden):
        dc = dc_in[i] + dh[i] * go[i] * (1.0 - tc[i] * tc[i])
        d_out = dh[i] * tc[i]
        d_in = dc * gc[i]
        d_cand = dc * gi[i]
        d_forget = dc * c_prev[i]
        dc_prev[i] = dc * gf[i]
        dz_in[i] = d_in * gi[i] * (1.0 - gi[i])
        dz_forget[i] = d_forget * gf[i] * (1.0 - gf[i])
        dz_out[i] = d_out * go[i] * (1.0 - go[i])
        dz_cand[i] = d_cand * (1.0 - gc[i] * gc[i])

    for i in range(hidden):
        for k in range(z_dim):
            g_w_in[i, k] += dz_in[i] * x[k]
            g_w_forget[i, k] += dz_forget[i] * x[k]
            g_w_out[i, k] += dz_out[i] * x[k]
            g_w_cand[i, k] += dz_cand[i] * x[k]
        g_b_in[i] += dz_in[i]
        g_b_forget[i] += dz_forget[i]
        g_b_out[i] += dz_out[i]
        g_b_cand[i] += dz_cand[i]

    cdef cnp.ndarray dx_a = np.empty(z_dim, dtype=np.float64)
    cdef double[::1] dx = dx_a
    for k in range(z_dim):
        acc = 0.0
        for i in range(hidden):
            acc += w_in[i, k] * dz_in[i]
        dot = 0.0
        for i in range(hidden):
            dot += w_forget[i, k] * dz_forget[i]
        acc += dot
        dot = 0.0
        for i in range(hidden):
            dot += w_out[i, k] * dz_out[i]
        acc += dot
        dot = 0.0
        for i in range(hidden):
            dot += w_cand[i, k] * dz_cand[i]
        acc += dot
        dx[k] = acc

    for k in range(hidden):
        dh_prev[k] = dx[feat_dim + mem_dim + k]

    # attention backward; memory entries are constants
    cdef cnp.ndarray d_attn_a = np.empty(n_mem, dtype=np.float64)
    cdef double[::1] d_attn = d_attn_a
    for j in range(n_mem):
        acc = 0.0
        for d in range(mem_dim):
            acc += values[j, d] * dx[feat_dim + d]
        d_attn[j] = acc
    dot = 0.0
    for j in range(n_mem):
        dot += attn[j] * d_attn[j]
    cdef cnp.ndarray d_attn_scores_a = np.empty(n_mem, dtype=np.float64)
    cdef double[::1] d_attn_scores = d_attn_scores_a
    for j in range(n_mem):
        d_attn_scores[j] = attn[j] * (d_attn[j] - dot)

    cdef cnp.ndarray d_query_a = np.empty(mem_dim, dtype=np.float64)
    cdef double[::1] d_query = d_query_a
    for d in range(mem_dim):
        acc = 0.0
        for j in range(n_mem):
            acc += enc[j, d] * d_attn_scores[j]
        d_query[d] = acc
    for d in range(mem_dim):
        for k in range(hidden):
            g_query_proj[d, k] += d_query[d] * x[feat_dim + mem_dim + k]
    for k in range(hidden):
        acc = 0.0
        for d in range(mem_dim):
            acc += query_proj[d, k] * d_query[d]
        dh_prev[k] += acc

    return dh_prev_a, dc_prev_a
