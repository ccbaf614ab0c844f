"""Compiled inner loops for the exhaustive and selective beta searches.

Array conventions shared by every kernel:

* ``pt[i, t, k] = H[i, t] * points[k]``  (product table, complex)
* ``alpha[t, i, k]``: message from symbol node ``t`` to factor node ``i``
* ``beta[i, j, k]``: message from factor node ``i`` to symbol node ``j``
* ``inv2s = 1 / (2 sigma2)``

Candidate vectors of the exhaustive search are flattened big-endian in the
symbol index: ``s = sum_t k_t * A**(N_t - 1 - t)``, so the last symbol is
the contiguous axis.
"""

import numpy as np
from numba import njit

NEG_INF = -np.inf


@njit(cache=True)
def prefix_digits(A, width):
    """Mixed-radix digits of 0 .. A**width - 1, most significant first."""
    n = A**width
    out = np.zeros((n, max(width, 1)), dtype=np.int64)
    for p in range(n):
        q = p
        for t in range(width - 1, -1, -1):
            out[p, t] = q % A
            q //= A
    return out


@njit(cache=True)
def row_metrics(y, pt, inv2s):
    """``m[i, s] = -|y_i - h_i s|^2 * inv2s`` for every candidate vector ``s``."""
    n_r, n_t, A = pt.shape
    last = n_t - 1
    digits = prefix_digits(A, last)
    n_prefix = A**last
    m = np.empty((n_r, n_prefix * A))
    for i in range(n_r):
        for p in range(n_prefix):
            partial = y[i]
            for t in range(last):
                partial -= pt[i, t, digits[p, t]]
            base = p * A
            for k in range(A):
                d = partial - pt[i, last, k]
                m[i, base + k] = -(d.real * d.real + d.imag * d.imag) * inv2s
    return m


@njit(cache=True)
def marginal_max(total, A, n_t):
    """``out[t, k] = max over s with s_t = k of total[s]``."""
    last = n_t - 1
    digits = prefix_digits(A, last)
    out = np.full((n_t, A), NEG_INF)
    for p in range(A**last):
        base = p * A
        w = NEG_INF
        for k in range(A):
            v = total[base + k]
            if v > w:
                w = v
            if v > out[last, k]:
                out[last, k] = v
        for t in range(last):
            d = digits[p, t]
            if w > out[t, d]:
                out[t, d] = w
    return out


@njit(cache=True)
def outer_sum(alpha, i, width, skip, out):
    """``out[p] = sum_{t < width, t != skip} alpha[t, i, digit_t(p)]``, summed in ascending ``t``.

    Built by repeated in-place expansion, so each prefix costs O(1) instead
    of ``width`` gathers.
    """
    A = alpha.shape[2]
    out[0] = 0.0
    n = 1
    for t in range(width):
        for q in range(n - 1, -1, -1):
            base = out[q]
            for d in range(A - 1, -1, -1):
                out[q * A + d] = base + (0.0 if t == skip else alpha[t, i, d])
        n *= A


@njit(cache=True, fastmath={"nnan"})
def obp_beta(m, alpha, beta):
    """One flooding beta sweep of the exhaustive search, all edges at once.

    The leave-one-out belief sum is assembled from the other symbols'
    messages directly (never by subtracting the excluded term).
    """
    n_t, n_r, A = alpha.shape
    last = n_t - 1
    digits = prefix_digits(A, last)
    n_prefix = A**last
    mx = np.empty((n_t, A))
    excl = np.empty((max(last, 1), n_prefix))
    asum = np.empty(n_prefix)
    for i in range(n_r):
        a_last = alpha[last, i].copy()
        outer_sum(alpha, i, last, -1, asum)
        for t in range(last):
            outer_sum(alpha, i, last, t, excl[t])
        mx[:, :] = NEG_INF
        mx_last = np.full(A, NEG_INF)
        for p in range(n_prefix):
            base = p * A
            w = NEG_INF
            ap = asum[p]
            for k in range(A):
                v = m[i, base + k]
                w = max(w, v + a_last[k])
                mx_last[k] = max(mx_last[k], v + ap)
            for t in range(last):
                d = digits[p, t]
                mx[t, d] = max(mx[t, d], w + excl[t, p])
        mx[last, :] = mx_last
        for j in range(n_t):
            ref = mx[j, 0]
            for k in range(A):
                beta[i, j, k] = mx[j, k] - ref
            beta[i, j, 0] = 0.0


@njit(cache=True)
def top_indices(msg, d_m, out):
    """Indices of the ``d_m`` largest entries, descending, ties to the lower index."""
    A = msg.shape[0]
    taken = np.zeros(A, dtype=np.bool_)
    for r in range(d_m):
        best = -1
        bv = NEG_INF
        for k in range(A):
            if not taken[k] and (best < 0 or msg[k] > bv):
                best = k
                bv = msg[k]
        taken[best] = True
        out[r] = best


@njit(cache=True)
def bsp_beta(y, pt, alpha, inv2s, patterns, d_m, beta):
    """Selective beta sweep over the configuration set encoded in ``patterns``.

    ``patterns[j, a, t]`` is the rank (0 = most reliable) within the
    truncated message of interferer ``t`` used by assignment ``a`` of the
    update towards symbol ``j``; the entry at ``t == j`` is ignored.
    """
    n_t, n_r, A = alpha.shape
    n_assign = patterns.shape[1]
    order = np.empty((n_t, d_m), dtype=np.int64)
    best = np.empty(A)
    for i in range(n_r):
        for t in range(n_t):
            top_indices(alpha[t, i], d_m, order[t])
        for j in range(n_t):
            best[:] = NEG_INF
            for a in range(n_assign):
                partial = y[i]
                asum = 0.0
                for t in range(n_t):
                    if t != j:
                        kt = order[t, patterns[j, a, t]]
                        partial -= pt[i, t, kt]
                        asum += alpha[t, i, kt]
                for k in range(A):
                    d = partial - pt[i, j, k]
                    v = asum - (d.real * d.real + d.imag * d.imag) * inv2s
                    if v > best[k]:
                        best[k] = v
            ref = best[0]
            for k in range(A):
                beta[i, j, k] = best[k] - ref
            beta[i, j, 0] = 0.0


@njit(cache=True)
def ebrdf_beta(y, pt, alpha, inv2s, kept, beta):
    """Beta sweep on the pruned graph.

    ``kept[i]`` lists the ``d_f`` symbol nodes still connected to factor
    node ``i``. Disconnected symbols are pinned to the argmax of their
    current message and their beta messages are zero.
    """
    n_t, n_r, A = alpha.shape
    d_f = kept.shape[1]
    digits = prefix_digits(A, d_f - 1)
    n_combo = A ** (d_f - 1)
    connected = np.zeros(n_t, dtype=np.bool_)
    others = np.empty(max(d_f - 1, 1), dtype=np.int64)
    pin = np.empty(1, dtype=np.int64)
    best = np.empty(A)
    for i in range(n_r):
        connected[:] = False
        for q in range(d_f):
            connected[kept[i, q]] = True
        base = y[i]
        for t in range(n_t):
            if not connected[t]:
                top_indices(alpha[t, i], 1, pin)
                base -= pt[i, t, pin[0]]
                for k in range(A):
                    beta[i, t, k] = 0.0
        for q in range(d_f):
            j = kept[i, q]
            n_o = 0
            for r in range(d_f):
                if r != q:
                    others[n_o] = kept[i, r]
                    n_o += 1
            best[:] = NEG_INF
            for c in range(n_combo):
                partial = base
                asum = 0.0
                for r in range(n_o):
                    t = others[r]
                    kt = digits[c, r]
                    partial -= pt[i, t, kt]
                    asum += alpha[t, i, kt]
                for k in range(A):
                    d = partial - pt[i, j, k]
                    v = asum - (d.real * d.real + d.imag * d.imag) * inv2s
                    if v > best[k]:
                        best[k] = v
            ref = best[0]
            for k in range(A):
                beta[i, j, k] = best[k] - ref
            beta[i, j, 0] = 0.0
