"""Independent brute-force oracles used by the test suite.

These deliberately avoid importing any latfun internals: expected values are
recomputed from first principles (grid search, enumeration, quadrature) so
that library closed forms are checked against a second route.
"""

import math

import numpy as np


def bt_sum_rate_grid(rho, c, d, grid=400):
    """Stage 1: brute-force minimum over a log-spaced (q1, q2) grid."""
    alpha = 1.0 - rho * rho
    sz2 = 1.0 + c * c - 2.0 * rho * c
    q = np.geomspace(1e-6, 1e9, grid)
    q1, q2 = np.meshgrid(q, q, indexing="ij")
    den = (1.0 + q1) * (1.0 + q2) - rho * rho
    dist = (q1 * alpha + q2 * c * c * alpha + q1 * q2 * sz2) / den
    rate = np.where(dist <= d * (1 + 1e-12), 0.5 * np.log2(den / (q1 * q2)), np.inf)
    return float(np.min(rate))


def _refine_1d(fn, zooms=3, n=20000):
    t = np.unique(
        np.concatenate(
            [np.geomspace(1e-9, 0.5, n // 2), 1.0 - np.geomspace(1e-12, 0.5, n // 2)]
        )
    )
    r = fn(t)
    i = int(np.argmin(r))
    best = float(r[i])
    if not np.isfinite(best):
        return math.inf, math.nan
    arg = float(t[i])
    for _ in range(zooms):
        lo, hi = t[max(i - 1, 0)], t[min(i + 1, len(t) - 1)]
        t = np.linspace(lo, hi, 4001)
        r = fn(t)
        i = int(np.argmin(r))
        if float(r[i]) < best:
            best = float(r[i])
            arg = float(t[i])
    return best, arg


def bt_sum_rate_oracle(rho, c, d, grid=400):
    """Brute-force grid plus local refinement of the sum-rate minimum.

    The refinement walks the active distortion constraint in the
    compactified variables t_i = q_i / (1 + q_i) (where the constraint is
    linear in the second coordinate) and the two one-encoder-silent
    boundaries; the result self-checks against the plain grid minimum.
    """
    alpha = 1.0 - rho * rho
    sz2 = 1.0 + c * c - 2.0 * rho * c
    cc = c * c
    if d >= sz2:
        return 0.0
    stage1 = bt_sum_rate_grid(rho, c, d, grid)

    def curve(t1):
        num = t1 * alpha - d * (1.0 - rho * rho * (1.0 - t1))
        den = d * rho * rho * (1.0 - t1) - (1.0 - t1) * cc * alpha - t1 * (sz2 - alpha)
        with np.errstate(divide="ignore", invalid="ignore"):
            t2 = num / den
            s = 1.0 - rho * rho * (1.0 - t1) * (1.0 - t2)
            ok = (t1 > 0) & (t1 < 1) & (t2 > 0) & (t2 <= 1.0) & (s > 0)
            return np.where(ok, 0.5 * np.log2(np.where(ok, s / (t1 * t2), 1.0)), np.inf)

    def silent(other_var):
        def fn(t):
            dist = (1.0 - t) * other_var + t * sz2
            ok = (t > 0) & (t < 1) & (dist <= d * (1 + 1e-12))
            return np.where(ok, 0.5 * np.log2(np.where(t > 0, 1.0 / t, 1.0)), np.inf)

        return fn

    candidates = [stage1]
    val, arg = _refine_1d(curve)
    if math.isfinite(val):
        # Self-check: the refined point really meets the constraint.
        t1 = arg
        num = t1 * alpha - d * (1.0 - rho * rho * (1.0 - t1))
        den = d * rho * rho * (1.0 - t1) - (1.0 - t1) * cc * alpha - t1 * (sz2 - alpha)
        t2 = num / den
        s = 1.0 - rho * rho * (1.0 - t1) * (1.0 - t2)
        dist = (t1 * (1 - t2) * alpha + t2 * (1 - t1) * cc * alpha + t1 * t2 * sz2) / s
        assert abs(dist - d) < 1e-8 * max(d, 1.0)
        candidates.append(val)
    for other in (cc * alpha, alpha):
        val, _ = _refine_1d(silent(other))
        if math.isfinite(val):
            candidates.append(val)
    refined = min(candidates)
    # The plain grid can only sit above the refined minimum.
    assert stage1 >= refined - 1e-9
    return max(refined, 0.0)


def lattice_sum_rate_oracle(sz2, d, n=400001):
    """Numeric minimization of R1 + R2 on the direct-binning constraint."""
    r1 = np.linspace(0.5 * math.log2(sz2 / d) * 0.5 + 1e-9, 30.0, n)
    rhs = d / sz2 - 2.0 ** (-2 * r1)
    ok = rhs > 0
    return float(np.min(r1[ok] - 0.5 * np.log2(rhs[ok])))
