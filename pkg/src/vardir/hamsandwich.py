"""Simultaneous bisection of point sets by a hyperplane (discrete ham sandwich).

Given r <= M finite sets in R^M, find (w, b) so that each set has at most
ceil(size/2) points strictly on each side of w.x = b.  Points on the plane
count on neither side, so passing through points is free.

Method: for a direction w let m_i(w) be the median of the projections of set
i onto w; b = m_i(w) always bisects set i, so it suffices to find w where all
medians coincide.  The median map is piecewise linear in w with an explicit
local Jacobian (the order-statistic points), so a damped semismooth Newton
iteration drives the median spread to zero; the Borsuk-Ulam argument
guarantees a zero exists whenever #sets <= M.  Coordinates are whitened
first (Veronese lifts are badly scaled), tiny instances fall back to
exhaustive search over point-spanned hyperplanes, and every returned cut is
verified by exact side counting in the original coordinates.
"""

from __future__ import annotations

import itertools

import numpy as np


class BisectionError(RuntimeError):
    pass


def _side_counts(pts: np.ndarray, w: np.ndarray, b: float):
    vals = pts @ w - b
    return int(np.sum(vals > 0)), int(np.sum(vals < 0))


def verify_bisection(sets, w, b) -> bool:
    for pts in sets:
        cap = -(-len(pts) // 2)  # ceil(size/2)
        above, below = _side_counts(pts, w, b)
        if above > cap or below > cap:
            return False
    return True


def _median_and_anchor(pts: np.ndarray, w: np.ndarray):
    """Median of projections and the point(s) achieving it (local gradient)."""
    proj = pts @ w
    order = np.argsort(proj, kind="stable")
    n = len(proj)
    if n % 2:
        i = order[n // 2]
        return proj[i], pts[i]
    i, j = order[n // 2 - 1], order[n // 2]
    return 0.5 * (proj[i] + proj[j]), 0.5 * (pts[i] + pts[j])


def _feasible_b(sets, w):
    """Common offset interval check: returns b when max lo <= min hi."""
    max_lo, min_hi = -np.inf, np.inf
    for pts in sets:
        proj = np.sort(pts @ w)
        n = len(proj)
        cap = -(-n // 2)
        lo = proj[n - cap - 1] if n - cap - 1 >= 0 else -np.inf
        hi = proj[cap] if cap < n else np.inf
        max_lo = max(max_lo, lo)
        min_hi = min(min_hi, hi)
    if max_lo <= min_hi:
        if np.isinf(max_lo):
            return min_hi if not np.isinf(min_hi) else 0.0
        if np.isinf(min_hi):
            return max_lo
        return 0.5 * (max_lo + min_hi)
    return None


def _median_spread(sets, w):
    meds = np.array([_median_and_anchor(pts, w)[0] for pts in sets])
    return meds - meds.mean(), [_median_and_anchor(pts, w)[1] for pts in sets]


def _newton_search(sets, w0, rng, max_rounds=120):
    M = len(w0)
    w = w0 / np.linalg.norm(w0)
    best = None
    for _ in range(max_rounds):
        b = _feasible_b(sets, w)
        if b is not None and verify_bisection(sets, w, b):
            return w, float(b)
        g, anchors = _median_spread(sets, w)
        res = np.linalg.norm(g)
        if best is None or res < best:
            best = res
        A = np.array(anchors)
        J = A - A.mean(axis=0)
        step, *_ = np.linalg.lstsq(J, -g, rcond=None)
        if not np.all(np.isfinite(step)):
            return None
        # damped update with renormalization; jitter out of stalls
        moved = False
        lam = 1.0
        for _ in range(12):
            w_new = w + lam * step
            nn = np.linalg.norm(w_new)
            if nn > 1e-12:
                w_new = w_new / nn
                g_new, _ = _median_spread(sets, w_new)
                if np.linalg.norm(g_new) < res or _feasible_b(sets, w_new) is not None:
                    w = w_new
                    moved = True
                    break
            lam *= 0.5
        if not moved:
            w = w + (0.02 + 0.2 * rng.random()) * rng.normal(size=M)
            w /= np.linalg.norm(w)
    return None


def _exhaustive_tuples(sets, M):
    """Hyperplanes through point subsets, for tiny instances."""
    allpts = np.vstack([pts for pts in sets])
    if allpts.shape[0] > 14:
        return None
    idx = range(allpts.shape[0])
    for k in range(min(M, allpts.shape[0]), 0, -1):
        for comb in itertools.combinations(idx, k):
            P = allpts[np.array(comb)]
            A = np.hstack([P, -np.ones((k, 1))])
            _, s, vt = np.linalg.svd(A)
            ns = vt[len(s):] if len(s) < vt.shape[0] else vt[-1:]
            for row in list(ns) + [vt[-1]]:
                w, b = row[:M], row[M]
                nw = np.linalg.norm(w)
                if nw < 1e-12:
                    continue
                if verify_bisection(sets, w / nw, b / nw):
                    return w / nw, b / nw
    return None


def ham_sandwich_bisect(sets, seed: int = 0, restarts: int = 20):
    """Find (w, b) bisecting every set: <= ceil(size/2) strictly per side.

    Sets live in R^M with len(sets) <= M (lifted dimension).  Deterministic
    for a fixed seed.  Raises BisectionError when the search budget runs out;
    the caller retries with a higher lift degree.
    """
    sets = [np.atleast_2d(np.asarray(s, dtype=float)) for s in sets]
    if not sets:
        raise ValueError("need at least one set")
    M = sets[0].shape[1]
    if any(s.shape[1] != M for s in sets):
        raise ValueError("sets must share the ambient dimension")
    if len(sets) > M:
        raise ValueError(f"{len(sets)} sets in R^{M}: need #sets <= M")
    rng = np.random.default_rng(seed)

    small = _exhaustive_tuples(sets, M)
    if small is not None:
        return small[0], float(small[1])

    # whiten: Veronese coordinates span many orders of magnitude
    allpts = np.vstack(sets)
    mu = allpts.mean(axis=0)
    sig = allpts.std(axis=0)
    sig[sig < 1e-12] = 1.0
    white = [(pts - mu) / sig for pts in sets]

    for trial in range(restarts):
        w0 = rng.normal(size=M)
        got = _newton_search(white, w0, rng)
        if got is not None:
            ww, bw = got
            w = ww / sig
            b = bw + float(w @ mu)
            if verify_bisection(sets, w, b):
                return w, float(b)
    raise BisectionError(f"no simultaneous bisection found after {restarts} restarts")
