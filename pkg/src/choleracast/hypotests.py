"""Rank tests used to screen candidate features against a real-valued target.

Real-valued columns get Kendall's tau-b, binary columns the Mann-Whitney U
test; the resulting p-values are adjusted together with Benjamini-Yekutieli.
Both tests use normal approximations with tie-corrected variances.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit
from scipy.special import erfc

from .errors import DegenerateGroups, TooFewSamples

_SQRT2 = math.sqrt(2.0)


def _two_sided_p(z: float) -> float:
    return float(min(1.0, erfc(abs(z) / _SQRT2)))


@njit(cache=True)
def _inversions(ranks, n_ranks):
    # Strict inversions (i < j, ranks[i] > ranks[j]) via a Fenwick tree.
    tree = np.zeros(n_ranks + 1, dtype=np.int64)
    inv = 0
    for i in range(ranks.shape[0] - 1, -1, -1):
        r = ranks[i]
        k = r
        s = 0
        while k > 0:
            s += tree[k]
            k -= k & (-k)
        inv += s
        k = r + 1
        while k <= n_ranks:
            tree[k] += 1
            k += k & (-k)
    return inv


def _tie_sizes(v) -> np.ndarray:
    _, counts = np.unique(v, return_counts=True)
    return counts[counts > 1].astype(np.float64)


def kendall_tau_b(x, y):
    """Return (tau_b, S, tie sizes in x, tie sizes in y); S = concordant - discordant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[0]
    perm = np.lexsort((y, x))
    xs, ys = x[perm], y[perm]
    _, yr = np.unique(ys, return_inverse=True)
    swaps = _inversions(yr.astype(np.int64), int(yr.max()) + 1 if n else 1)
    tx, ty = _tie_sizes(x), _tie_sizes(y)
    n0 = n * (n - 1) // 2
    n1 = int(np.sum(tx * (tx - 1) / 2))
    n2 = int(np.sum(ty * (ty - 1) / 2))
    # joint ties: consecutive equal (x, y) pairs in the lexsorted order
    same = np.concatenate(([False], (xs[1:] == xs[:-1]) & (ys[1:] == ys[:-1])))
    starts = np.flatnonzero(~same)
    runs = np.diff(np.append(starts, n))
    n3 = int(np.sum(runs * (runs - 1) // 2))
    S = n0 - n1 - n2 + n3 - 2 * int(swaps)
    denom = math.sqrt(float((n0 - n1) * (n0 - n2)))
    tau = S / denom if denom > 0 else 0.0
    return tau, S, tx, ty


def kendall_test(x, y) -> tuple[float, float]:
    """Kendall tau-b with a two-sided normal-approximation p-value.

    A constant x or y yields (0.0, 1.0).
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    n = x.shape[0]
    if n != y.shape[0]:
        raise ValueError("x and y differ in length")
    if n < 3:
        raise TooFewSamples(f"kendall_test needs n >= 3, got {n}")
    if x.min() == x.max() or y.min() == y.max():
        return 0.0, 1.0
    tau, S, tx, ty = kendall_tau_b(x, y)
    nf = float(n)
    v0 = nf * (nf - 1) * (2 * nf + 5)
    vt = np.sum(tx * (tx - 1) * (2 * tx + 5))
    vu = np.sum(ty * (ty - 1) * (2 * ty + 5))
    v1 = np.sum(tx * (tx - 1)) * np.sum(ty * (ty - 1)) / (2 * nf * (nf - 1))
    v2 = np.sum(tx * (tx - 1) * (tx - 2)) * np.sum(ty * (ty - 1) * (ty - 2)) / (9 * nf * (nf - 1) * (nf - 2))
    var = (v0 - vt - vu) / 18.0 + v1 + v2
    if var <= 0:
        return float(tau), 1.0
    return float(tau), _two_sided_p(S / math.sqrt(var))


def midranks(v) -> np.ndarray:
    """1-based ranks with tied values sharing the mean of their positions."""
    v = np.asarray(v, dtype=np.float64)
    uniq, inv, counts = np.unique(v, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    mid = ends - (counts - 1) / 2.0
    return mid[inv]


def mann_whitney_test(x, y) -> tuple[float, float]:
    """U statistic of the x == 1 group and its two-sided p-value.

    Uses the tie-corrected normal approximation with a 0.5 continuity
    correction. Raises DegenerateGroups when either group is empty.
    """
    x = np.asarray(x).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape[0] != y.shape[0]:
        raise ValueError("x and y differ in length")
    if not np.isin(x, (0, 1)).all():
        raise ValueError("mann_whitney_test needs a binary x")
    ones = x == 1
    n1 = int(ones.sum())
    n0 = x.shape[0] - n1
    if n1 == 0 or n0 == 0:
        raise DegenerateGroups(f"group sizes n1={n1}, n0={n0}")
    n = n1 + n0
    ranks = midranks(y)
    U = float(np.sum(ranks[ones]) - n1 * (n1 + 1) / 2.0)
    t = _tie_sizes(y)
    tie_term = float(np.sum(t ** 3 - t)) / (n * (n - 1)) if n > 1 else 0.0
    var = n1 * n0 / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return U, 1.0
    num = max(abs(U - n1 * n0 / 2.0) - 0.5, 0.0)
    return U, _two_sided_p(num / math.sqrt(var))


def benjamini_yekutieli(p_values) -> np.ndarray:
    """BY q-values: q_(i) = min_{j >= i} m c(m) p_(j) / j, clipped to 1."""
    p = np.asarray(p_values, dtype=np.float64).ravel()
    m = p.shape[0]
    if m == 0:
        return p.copy()
    if ((p < 0) | (p > 1) | ~np.isfinite(p)).any():
        raise ValueError("p-values must lie in [0, 1]")
    c = float(np.sum(1.0 / np.arange(1, m + 1)))
    order = np.argsort(p, kind="stable")
    scaled = p[order] * (m * c) / np.arange(1, m + 1)
    q_sorted = np.minimum.accumulate(scaled[::-1])[::-1]
    q = np.empty(m)
    q[order] = np.minimum(q_sorted, 1.0)
    return q
