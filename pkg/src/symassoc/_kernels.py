"""Compiled inner loops. Plain loops only, so results do not depend on BLAS."""

from __future__ import annotations

import math

import numba
import numpy as np

jit = numba.njit(cache=True, fastmath=False, nogil=True)
# reassociation lets LLVM vectorize the dot products; still deterministic
# for a given build
jit_dot = numba.njit(cache=True, fastmath={"reassoc", "contract"}, nogil=True)


@jit_dot
def lstm_direction_forward(x, Wx, Wh, b):
    T, n = x.shape
    H = Wh.shape[1]
    gates = np.empty((T, 4 * H))
    c = np.empty((T, H))
    tanh_c = np.empty((T, H))
    h = np.empty((T, H))
    h_prev = np.zeros(H)
    c_prev = np.zeros(H)
    a = np.empty(4 * H)
    for t in range(T):
        for r in range(4 * H):
            acc = b[r]
            for k in range(n):
                acc += Wx[r, k] * x[t, k]
            for k in range(H):
                acc += Wh[r, k] * h_prev[k]
            a[r] = acc
        for r in range(3 * H):
            gates[t, r] = 0.5 * (1.0 + math.tanh(0.5 * a[r]))
        for r in range(3 * H, 4 * H):
            gates[t, r] = math.tanh(a[r])
        for k in range(H):
            ck = gates[t, H + k] * c_prev[k] + gates[t, k] * gates[t, 3 * H + k]
            c[t, k] = ck
            c_prev[k] = ck
            tc = math.tanh(ck)
            tanh_c[t, k] = tc
            hk = gates[t, 2 * H + k] * tc
            h[t, k] = hk
            h_prev[k] = hk
    return gates, c, tanh_c, h


@jit_dot
def lstm_direction_backward(dh_out, Wh, gates, tanh_c, c):
    """Gradients w.r.t. the gate pre-activations, ``T x 4H``."""
    T, H = dh_out.shape
    dA = np.empty((T, 4 * H))
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    WhT = np.ascontiguousarray(Wh.T)
    for t in range(T - 1, -1, -1):
        for k in range(H):
            i = gates[t, k]
            f = gates[t, H + k]
            o = gates[t, 2 * H + k]
            g = gates[t, 3 * H + k]
            tc = tanh_c[t, k]
            cp = c[t - 1, k] if t > 0 else 0.0
            dh = dh_out[t, k] + dh_next[k]
            dcell = dh * o * (1.0 - tc * tc) + dc_next[k]
            dA[t, k] = dcell * g * i * (1.0 - i)
            dA[t, H + k] = dcell * cp * f * (1.0 - f)
            dA[t, 2 * H + k] = dh * tc * o * (1.0 - o)
            dA[t, 3 * H + k] = dcell * i * (1.0 - g * g)
            dc_next[k] = dcell * f
        for k in range(H):
            acc = 0.0
            for r in range(4 * H):
                acc += WhT[k, r] * dA[t, r]
            dh_next[k] = acc
    return dA


@jit
def dtw_accumulate(dist):
    T1, T2 = dist.shape
    D = np.empty((T1, T2))
    for i in range(T1):
        for j in range(T2):
            if i == 0 and j == 0:
                best = 0.0
            elif i == 0:
                best = D[0, j - 1]
            elif j == 0:
                best = D[i - 1, 0]
            else:
                best = min(D[i - 1, j - 1], D[i - 1, j], D[i, j - 1])
            D[i, j] = dist[i, j] + best
    return D


@jit
def _lae(a, b):
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@jit
def ctc_forward_backward(logz, skip):
    """Log-domain lattice over the extended labeling; ``logz`` is ``T x S``."""
    T, S = logz.shape
    fw = np.full((T, S), -np.inf)
    bw = np.full((T, S), -np.inf)
    fw[0, 0] = logz[0, 0]
    if S > 1:
        fw[0, 1] = logz[0, 1]
    for t in range(1, T):
        for u in range(S):
            acc = fw[t - 1, u]
            if u >= 1:
                acc = _lae(acc, fw[t - 1, u - 1])
            if u >= 2 and skip[u]:
                acc = _lae(acc, fw[t - 1, u - 2])
            fw[t, u] = acc + logz[t, u] if acc != -np.inf else -np.inf
    bw[T - 1, S - 1] = logz[T - 1, S - 1]
    if S > 1:
        bw[T - 1, S - 2] = logz[T - 1, S - 2]
    for t in range(T - 2, -1, -1):
        for u in range(S):
            acc = bw[t + 1, u]
            if u + 1 < S:
                acc = _lae(acc, bw[t + 1, u + 1])
            if u + 2 < S and skip[u + 2]:
                acc = _lae(acc, bw[t + 1, u + 2])
            bw[t, u] = acc + logz[t, u] if acc != -np.inf else -np.inf
    return fw, bw
