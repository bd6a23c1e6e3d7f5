"""Compiled inner loops for the Monte Carlo engines.

Everything here is plain numba over float64 arrays. Stop times are 1-based;
0 means "did not stop within the available horizon". Log-scale sentinels
are ``-inf`` / ``+inf``.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

NEG_INF = -np.inf
POS_INF = np.inf


@njit(cache=True)
def _logsumexp_row(vals, logw):
    m = NEG_INF
    k = vals.shape[0]
    for i in range(k):
        v = vals[i] + logw[i]
        if v > m:
            m = v
    if m == NEG_INF:
        return m
    s = 0.0
    for i in range(k):
        s += math.exp(vals[i] + logw[i] - m)
    return m + math.log(s)


@njit(cache=True)
def _wcusum_advance(rows, nrows, y, a, b, logw):
    """Add one observation to every live start row (plus a fresh start row).

    Returns the new row count and the log statistic max_j log sum_m w_m prod.
    A start whose per-atom log products are all <= 0 can never beat a start
    opened later (they share all future factors), so it is dropped; a fresh
    start is skipped when some live row is >= 0 in every atom. Both rules are
    exact.
    """
    m = a.shape[0]
    # fresh start, unless dominated by a live row
    dominated = False
    for r in range(nrows):
        allpos = True
        for k in range(m):
            if rows[r, k] < 0.0:
                allpos = False
                break
        if allpos:
            dominated = True
            break
    if not dominated:
        for k in range(m):
            rows[nrows, k] = 0.0
        nrows += 1
    best = NEG_INF
    keep = 0
    for r in range(nrows):
        allneg = True
        for k in range(m):
            rows[r, k] += a[k] * y + b[k]
            if rows[r, k] > 0.0:
                allneg = False
        v = _logsumexp_row(rows[r], logw)
        if v > best:
            best = v
        if not allneg:
            if keep != r:
                for k in range(m):
                    rows[keep, k] = rows[r, k]
            keep += 1
    return keep, best


@njit(cache=True)
def wcusum_path(x, a, b, logw, logA):
    """Weighted CUSUM on one path; returns (stop time, log statistic at stop/end)."""
    n = x.shape[0]
    rows = np.empty((n + 1, a.shape[0]))
    nrows = 0
    stat = NEG_INF
    for i in range(n):
        nrows, stat = _wcusum_advance(rows, nrows, x[i], a, b, logw)
        if stat >= logA:
            return i + 1, stat
    return 0, stat


@njit(cache=True)
def wcusum_stop_rows(X, a, b, logw, logA):
    out = np.zeros(X.shape[0], dtype=np.int64)
    for r in range(X.shape[0]):
        out[r] = wcusum_path(X[r], a, b, logw, logA)[0]
    return out


@njit(cache=True)
def wcusum_shifted(eps, t, pre_shift, post_shift, a, b, logw, logA, rows):
    """Weighted CUSUM on y_n = eps_n + (pre_shift if n < t else post_shift)."""
    n = eps.shape[0]
    nrows = 0
    for i in range(n):
        y = eps[i] + (pre_shift if i + 1 < t else post_shift)
        nrows, stat = _wcusum_advance(rows, nrows, y, a, b, logw)
        if stat >= logA:
            return i + 1
    return 0


@njit(cache=True)
def gaussian_brackets(eps, ts, pre_fast, post_fast, pre_slow, post_slow, a, b, logw, logA):
    """Stop times on the fastest and slowest coupled paths for every (t, j)."""
    nt = ts.shape[0]
    B = eps.shape[0]
    t1 = np.zeros((nt, B), dtype=np.int64)
    t2 = np.zeros((nt, B), dtype=np.int64)
    rows = np.empty((eps.shape[1] + 1, a.shape[0]))
    for q in range(nt):
        for j in range(B):
            t1[q, j] = wcusum_shifted(eps[j], ts[q], pre_fast[q], post_fast[q], a, b, logw, logA, rows)
            if pre_fast[q] == pre_slow[q] and post_fast[q] == post_slow[q]:
                t2[q, j] = t1[q, j]
            else:
                t2[q, j] = wcusum_shifted(eps[j], ts[q], pre_slow[q], post_slow[q], a, b, logw, logA, rows)
    return t1, t2


# ---------------------------------------------------------------------------
# Poisson thinning paths: counts[n] ~ Pois(lam) with sorted uniforms stored
# in uvals[uoff[n]:uoff[n+1]]; Y_n(theta) = #{u < theta / lam}.


@njit(cache=True)
def thinned_count(uvals, lo, hi, ratio):
    c = 0
    for k in range(lo, hi):
        if uvals[k] < ratio:
            c += 1
        else:
            break
    return c


@njit(cache=True)
def wcusum_thinned(counts, uoff, uvals, lam, t, pre_rate, post_rate, a, b, logw, logA, rows):
    n = counts.shape[0]
    nrows = 0
    for i in range(n):
        rate = pre_rate if i + 1 < t else post_rate
        y = thinned_count(uvals, uoff[i], uoff[i + 1], rate / lam)
        nrows, stat = _wcusum_advance(rows, nrows, float(y), a, b, logw)
        if stat >= logA:
            return i + 1
    return 0


@njit(cache=True)
def poisson_brackets(counts, uoff, uvals, lam, ts, pre_fast, post_fast, pre_slow, post_slow,
                     a, b, logw, logA):
    nt = ts.shape[0]
    B = counts.shape[0]
    t1 = np.zeros((nt, B), dtype=np.int64)
    t2 = np.zeros((nt, B), dtype=np.int64)
    rows = np.empty((counts.shape[1] + 1, a.shape[0]))
    for q in range(nt):
        for j in range(B):
            t1[q, j] = wcusum_thinned(counts[j], uoff[j], uvals[j], lam, ts[q], pre_fast[q],
                                      post_fast[q], a, b, logw, logA, rows)
            t2[q, j] = wcusum_thinned(counts[j], uoff[j], uvals[j], lam, ts[q], pre_slow[q],
                                      post_slow[q], a, b, logw, logA, rows)
    return t1, t2


@njit(cache=True)
def _log_tables(nmax, mmax):
    """slogs[s] = s log s and logm[m] = log m for integer s, m (0 log 0 = 0)."""
    slogs = np.zeros(nmax + 1)
    for s in range(2, nmax + 1):
        slogs[s] = s * math.log(s)
    logm = np.zeros(mmax + 1)
    for m in range(2, mmax + 1):
        logm[m] = math.log(m)
    return slogs, logm


@njit(cache=True)
def _poisson_profile_gain_tab(C, tp, t, theta0, double_profile, slogs, logm, log_theta0):
    """Same as ``_poisson_profile_gain`` with integer counts read from tables."""
    best = NEG_INF
    ft = 0.0
    ctp = int(C[tp])
    for i in range(1, tp + 1):
        s1 = ctp - int(C[i - 1])
        m1 = tp - i + 1
        if double_profile:
            v = slogs[s1] - s1 * logm[m1]
            s0 = int(C[i - 1])
            if i > 1:
                v += slogs[s0] - s0 * logm[i - 1]
        else:
            v = m1 * theta0 - s1 + slogs[s1] - s1 * (logm[m1] + log_theta0)
        if v > best:
            best = v
        if i == t:
            ft = v
    return best - ft


@njit(cache=True)
def _poisson_profile_gain(C, tp, t, theta0, double_profile):
    """max_i F_i - F_t over i <= tp for the Poisson profile statistic; C is the
    prefix sum of counts (C[0] = 0)."""
    best = NEG_INF
    ft = 0.0
    for i in range(1, tp + 1):
        s1 = C[tp] - C[i - 1]
        m1 = tp - i + 1
        if double_profile:
            v = s1 * math.log(s1 / m1) if s1 > 0 else 0.0
            s0 = C[i - 1]
            if i > 1 and s0 > 0:
                v += s0 * math.log(s0 / (i - 1))
        else:
            v = m1 * theta0 - s1
            if s1 > 0:
                v += s1 * math.log(s1 / (m1 * theta0))
        if v > best:
            best = v
        if i == t:
            ft = v
    return best - ft


@njit(cache=True)
def _append_candidates(buf, nb, uvals, uoff, n_lo, n_hi, lam, lo, hi):
    for n in range(n_lo, n_hi):
        for k in range(uoff[n], uoff[n + 1]):
            v = lam * uvals[k]
            if lo <= v <= hi:
                buf[nb] = v
                nb += 1
    return nb


@njit(cache=True)
def poisson_sup(counts, uoff, uvals, lam, t, t1, t2, pre_lo, pre_hi, post_lo, post_hi,
                theta0, double_profile):
    """Sup of the Poisson profile statistic over a parameter box.

    The thinned counts are step functions of the rates that jump only at
    lam * U, so the maximum over an interval is attained on the finite set of
    such points inside it plus the two endpoints. Without ``double_profile``
    the pre-change rate is fixed at ``theta0``.
    """
    tot = uoff[t2] - uoff[0] + 2
    post_c = np.empty(tot)
    npost = _append_candidates(post_c, 0, uvals, uoff, t - 1, t2, lam, post_lo, post_hi)
    post_c[npost] = post_lo
    post_c[npost + 1] = post_hi
    npost += 2
    pre_c = np.empty(tot)
    if double_profile and t > 1:
        npre = _append_candidates(pre_c, 0, uvals, uoff, 0, t - 1, lam, pre_lo, pre_hi)
        pre_c[npre] = pre_lo
        pre_c[npre + 1] = pre_hi
        npre += 2
    else:
        pre_c[0] = theta0 if not double_profile else pre_lo
        npre = 1
    slogs, logm = _log_tables(uoff[t2] - uoff[0], t2)
    log_theta0 = math.log(theta0) if theta0 > 0 else 0.0
    C = np.zeros(t2 + 1)
    best = NEG_INF
    start = t if t > t1 else t1
    for a in range(npre):
        for b in range(npost):
            for n in range(t2):
                rate = pre_c[a] if n + 1 < t else post_c[b]
                C[n + 1] = C[n] + thinned_count(uvals, uoff[n], uoff[n + 1], rate / lam)
            for tp in range(start, t2 + 1):
                v = _poisson_profile_gain_tab(C, tp, t, theta0, double_profile, slogs, logm,
                                              log_theta0)
                if v > best:
                    best = v
    return best


@njit(cache=True)
def poisson_sup_grid(counts, uoff, uvals, lam, ts, t1, t2, pre_lo, pre_hi, post_lo, post_hi,
                     theta0, L, double_profile):
    nt, B = t1.shape
    out = np.empty((nt, B))
    for q in range(nt):
        t = ts[q]
        for j in range(B):
            a2 = t2[q, j]
            if a2 == 0 or a2 > L:
                out[q, j] = POS_INF
            elif a2 < t:
                out[q, j] = NEG_INF
            else:
                out[q, j] = poisson_sup(counts[j], uoff[j], uvals[j], lam, t, t1[q, j], a2,
                                        pre_lo[q], pre_hi[q], post_lo[q], post_hi[q], theta0,
                                        double_profile)
    return out


@njit(cache=True)
def poisson_stat_at(counts, uoff, uvals, lam, t, pre_rate, post_rate, stop, theta0,
                    double_profile):
    """Profile statistic of the thinned path at one parameter pair, on its
    first ``stop`` observations."""
    C = np.zeros(stop + 1)
    for n in range(stop):
        rate = pre_rate if n + 1 < t else post_rate
        C[n + 1] = C[n] + thinned_count(uvals, uoff[n], uoff[n + 1], rate / lam)
    return _poisson_profile_gain(C, stop, t, theta0, double_profile)


# ---------------------------------------------------------------------------
# Gaussian sup-bounds


@njit(cache=True)
def _concave_max(c0, c1, c2, lo, hi):
    """max over d in [lo, hi] of c0 + c1 d + c2 d^2 / 2 with c2 <= 0."""
    if c2 < -1e-12:
        d = -c1 / c2
        if d < lo:
            d = lo
        elif d > hi:
            d = hi
        return c0 + c1 * d + 0.5 * c2 * d * d
    # linear (or constant up to rounding)
    if abs(c1) <= 1e-9 * (1.0 + abs(c0)):
        return c0
    best = NEG_INF
    if math.isfinite(lo):
        best = max(best, c0 + c1 * lo)
    else:
        best = POS_INF if c1 < 0 else best
    if math.isfinite(hi):
        best = max(best, c0 + c1 * hi)
    else:
        best = POS_INF if c1 > 0 else best
    return best


@njit(cache=True)
def v_known_pre(C, t, t1, t2, dlo, dhi):
    """sup over mean shifts d in [dlo, dhi] and t' in [max(t, t1), t2] of the
    profile log LR statistic with known pre-change mean; C is the prefix sum
    of centred noise (C[0] = 0)."""
    best = NEG_INF
    start = t if t > t1 else t1
    for tp in range(start, t2 + 1):
        mt = tp - t + 1
        Et = C[tp] - C[t - 1]
        for i in range(1, tp + 1):
            if i == t:
                v = 0.0
            else:
                mi = tp - i + 1
                Ei = C[tp] - C[i - 1]
                ci = tp - (i if i > t else t) + 1
                c0 = 0.5 * (Ei * Ei / mi - Et * Et / mt)
                c1 = Ei * ci / mi - Et
                c2 = ci * ci / mi - mt
                v = _concave_max(c0, c1, c2, dlo, dhi)
            if v > best:
                best = v
    return best


@njit(cache=True)
def u_double_profile(C, t, t1, t2, dlo, dhi):
    """As :func:`v_known_pre` for the two-mean (unknown pre and post) statistic."""
    best = NEG_INF
    start = t if t > t1 else t1
    for tp in range(start, t2 + 1):
        mt = tp - t + 1
        Et = C[tp] - C[t - 1]
        base_t = Et * Et / mt
        if t > 1:
            base_t += C[t - 1] * C[t - 1] / (t - 1)
        for i in range(1, tp + 1):
            if i == t:
                v = 0.0
            else:
                mi = tp - i + 1
                Ei = C[tp] - C[i - 1]
                ci = tp - (i if i > t else t) + 1
                a1 = i - t if i > t else 0
                c0 = Ei * Ei / mi - base_t
                c1 = Ei * ci / mi - Et
                c2 = ci * ci / mi - mt
                if i > 1:
                    c0 += C[i - 1] * C[i - 1] / (i - 1)
                    c1 += C[i - 1] * a1 / (i - 1)
                    c2 += a1 * a1 / (i - 1)
                v = _concave_max(0.5 * c0, c1, c2, dlo, dhi)
            if v > best:
                best = v
    return best


@njit(cache=True)
def sup_bound_grid(eps_cum, ts, t1, t2, dlo, dhi, L, double_profile):
    """V (or U) for every (t, j); sentinels per the truncation rule."""
    nt, B = t1.shape
    out = np.empty((nt, B))
    for q in range(nt):
        t = ts[q]
        for j in range(B):
            a1 = t1[q, j]
            a2 = t2[q, j]
            if a2 == 0 or a2 > L:
                # slowest path censored: some parameter in the box is censored
                out[q, j] = POS_INF
            elif a2 < t:
                out[q, j] = NEG_INF
            elif double_profile:
                out[q, j] = u_double_profile(eps_cum[j], t, a1, a2, dlo[q], dhi[q])
            else:
                out[q, j] = v_known_pre(eps_cum[j], t, a1, a2, dlo[q], dhi[q])
    return out


# ---------------------------------------------------------------------------
# direct truncated statistics on explicit Gaussian paths (grid method, oracles)


@njit(cache=True)
def profile_stat_known_pre(z, t):
    """log M_t = 1/2 [max_i Z_i^2/m_i - Z_t^2/m_t] for centred data z[0:n]."""
    n = z.shape[0]
    best = NEG_INF
    s = 0.0
    zt = 0.0
    for i in range(n, 0, -1):
        s += z[i - 1]
        v = s * s / (n - i + 1)
        if v > best:
            best = v
        if i == t:
            zt = v
    return 0.5 * (best - zt)


@njit(cache=True)
def profile_stat_two_mean(y, t):
    n = y.shape[0]
    C = np.zeros(n + 1)
    for k in range(n):
        C[k + 1] = C[k] + y[k]
    best = NEG_INF
    ft = 0.0
    for i in range(1, n + 1):
        v = (C[n] - C[i - 1]) ** 2 / (n - i + 1)
        if i > 1:
            v += C[i - 1] ** 2 / (i - 1)
        if v > best:
            best = v
        if i == t:
            ft = v
    return 0.5 * (best - ft)


@njit(cache=True)
def grid_truncated(eps, t, pre_vals, post_vals, ref, a, b, logw, logA, L, double_profile):
    """M^j_{t,L}(theta, theta') for each grid pair (rows) and noise path j (cols)."""
    P = pre_vals.shape[0]
    B = eps.shape[0]
    H = eps.shape[1]
    out = np.empty((P, B))
    rows = np.empty((H + 1, a.shape[0]))
    y = np.empty(H)
    for p in range(P):
        for j in range(B):
            stop = wcusum_shifted(eps[j], t, pre_vals[p], post_vals[p], a, b, logw, logA, rows)
            if stop != 0 and stop < t:
                out[p, j] = NEG_INF
            elif stop == 0 or stop > L:
                out[p, j] = POS_INF
            else:
                for k in range(stop):
                    y[k] = eps[j, k] + (pre_vals[p] if k + 1 < t else post_vals[p])
                if double_profile:
                    out[p, j] = profile_stat_two_mean(y[:stop], t)
                else:
                    for k in range(stop):
                        y[k] -= ref
                    out[p, j] = profile_stat_known_pre(y[:stop], t)
    return out


# ---------------------------------------------------------------------------
# histogram e-detector


@njit(cache=True)
def ehist_path(x, bins, logA, stop_early):
    """Per-start plug-in histogram e-detector against U[0, 1].

    Returns (stop time, per-start log products at the stop or at the end).
    The factor for start j at time i is bins * (1 + c) / (bins + i - j), with
    c the count of x_j..x_{i-1} in the bin of x_i.
    """
    n = x.shape[0]
    counts = np.zeros((n, bins), dtype=np.int64)
    logp = np.zeros(n)
    stop = 0
    last = n
    for i in range(n):
        k = int(x[i] * bins)
        if k >= bins:
            k = bins - 1
        if k < 0:
            k = 0
        best = NEG_INF
        for j in range(i + 1):
            width = i - j
            logp[j] += math.log(bins * (1.0 + counts[j, k]) / (bins + width))
            counts[j, k] += 1
            if logp[j] > best:
                best = logp[j]
        if stop == 0 and best >= logA:
            stop = i + 1
            if stop_early:
                last = i + 1
                break
    return stop, logp[:last].copy()


@njit(cache=True)
def ehist_stop_rows(X, bins, logA):
    out = np.zeros(X.shape[0], dtype=np.int64)
    for r in range(X.shape[0]):
        out[r] = ehist_path(X[r], bins, logA, True)[0]
    return out
