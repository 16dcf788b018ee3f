"""Polynomial partitioning of points and of direction sets on varieties.

Three layers:

  approx_poly_partition -- partition a finite point set in R^n by a product
      of simultaneous ham-sandwich bisections on Veronese lifts; cells are
      probe-connected components of the complement of Z(Q), points landing
      within wall_tol of Z(Q) are set aside with a certified epsilon-shift.

  direction_partition -- the direction partition on a transverse complete
      intersection: wedge-polynomial walls indexed by a net G on the
      (identified) Grassmannian, excision of directions delta-close to a
      wall, Lipschitz chart patches, a per-patch partition in chart
      coordinates, and epsilon-perturbed patch walls, all certified and all
      distances audited against sampled witness sets.

  cluster_select -- the greedy bad-cluster extraction over a band net.

Supported direction-partition instantiations: (n, m) in {(2,1), (3,1), (3,2)}.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .hamsandwich import BisectionError, ham_sandwich_bisect, verify_bisection
from .nets import Band, DirectionSet, Net, band_members
from .polynomials import Polynomial, PolySystem, veronese_dim, monomials_upto
from .varieties import (
    TCI,
    SamplingError,
    TciCertificationError,
    Variety,
    _float_cache,
    is_tci,
    newton_project,
    newton_project_batch,
    sample_variety,
    trace_curve,
)

WALL_TOL = 1e-9


class PartitionError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# approximate polynomial partitioning in R^n


@dataclass
class PartitionResult:
    Q: Polynomial
    cells: list                  # (cell_id, index array)
    on_wall: np.ndarray
    E: int
    box: tuple                   # (lo, hi) arrays
    epsilon: float | None
    factors: list = field(default_factory=list)
    wall_shift_dist: float = float("nan")

    @property
    def degree(self):
        return self.Q.degree

    def to_json(self) -> str:
        return json.dumps({
            "E": self.E,
            "degree": None if not self.factors else int(self.Q.degree),
            "epsilon": self.epsilon,
            "cells": {str(cid): np.asarray(idx).tolist() for cid, idx in self.cells},
            "on_wall": np.asarray(self.on_wall).tolist(),
            "box": [np.asarray(self.box[0]).tolist(), np.asarray(self.box[1]).tolist()],
        }, sort_keys=True)


def _affine_chart_polys(n: int, lo: np.ndarray, hi: np.ndarray) -> list:
    """Degree-1 polynomials mapping the box to [-1, 1]^n, one per axis."""
    out = []
    for i in range(n):
        c = 0.5 * (lo[i] + hi[i])
        hw = max(0.5 * (hi[i] - lo[i]), 1e-9)
        e = [0] * n
        e[i] = 1
        out.append(Polynomial(n, {tuple(e): 1.0 / hw, (0,) * n: -c / hw}))
    return out


def _cut_to_polynomial(w: np.ndarray, b: float, d: int, axis_polys: list) -> Polynomial:
    """w . veronese_d(T(x)) - b as a polynomial in the original coordinates."""
    n = len(axis_polys)
    out = Polynomial.constant(n, -float(b))
    for coef, e in zip(w, monomials_upto(n, d)):
        if coef == 0.0:
            continue
        term = Polynomial.constant(n, float(coef))
        for ax, k in zip(axis_polys, e):
            if k:
                term = term * ax**k
        out = out + term
    return out


def _lift_normalized(pts: np.ndarray, lo, hi, d: int) -> np.ndarray:
    from .polynomials import veronese_lift_many

    mid = 0.5 * (lo + hi)
    hw = np.maximum(0.5 * (hi - lo), 1e-9)
    return veronese_lift_many((pts - mid) / hw, d)


def _chunk(seq, size):
    return [seq[i : i + size] for i in range(0, len(seq), size)]


def approx_poly_partition(points: np.ndarray, N: int, E: int, box=None,
                          wall_tol: float = WALL_TOL, seed: int = 0, delta: float = 1e-3,
                          group_cap: int = 8) -> PartitionResult:
    """Partition points in R^n so no cell holds more than ceil((N/E)^n).

    Runs ceil(n log2 E) rounds; each round simultaneously bisects the current
    oversized classes (in groups of at most group_cap sets) by a hyperplane
    cut on a Veronese lift, composed back to a polynomial factor of Q.
    On-wall points (|Q| < wall_tol) are recorded together with an epsilon
    such that each is within delta of Z(Q + epsilon).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    k, n = points.shape
    if k > N**n:
        raise ValueError(f"{k} points exceed the declared bound N^n = {N**n}")
    if E < 1:
        raise ValueError("E must be >= 1")
    if box is None:
        lo = points.min(axis=0) - 0.05 * (np.ptp(points, axis=0) + 1e-9)
        hi = points.max(axis=0) + 0.05 * (np.ptp(points, axis=0) + 1e-9)
    else:
        lo, hi = np.asarray(box[0], dtype=float), np.asarray(box[1], dtype=float)
    axis_polys = _affine_chart_polys(n, lo, hi)
    cap = max(1, math.ceil((N / E) ** n))

    if E == 1:
        return PartitionResult(Q=Polynomial.constant(n, 1.0), cells=[(0, np.arange(k))],
                               on_wall=np.array([], dtype=int), E=E, box=(lo, hi), epsilon=None)

    rng = np.random.default_rng(seed)
    classes = [np.arange(k)]
    factors: list[Polynomial] = []
    rounds = math.ceil(n * math.log2(E))
    for _ in range(rounds):
        active = [c for c in classes if len(c) > cap]
        if not active:
            break
        passive = [c for c in classes if len(c) <= cap]
        new_classes = list(passive)
        for group in _chunk(active, group_cap):
            factor, side_vals = _one_cut(points, group, lo, hi, axis_polys, rng)
            factors.append(factor)
            for c, vals in zip(group, side_vals):
                plus, minus = c[vals > 0], c[vals < 0]
                if len(plus):
                    new_classes.append(plus)
                if len(minus):
                    new_classes.append(minus)
            # points exactly on the cut leave the cellular population
        classes = new_classes

    Q = Polynomial.constant(n, 1.0)
    for f in factors:
        Q = Q * f
    logq = np.zeros(k)
    for f in factors:
        logq += np.log(np.maximum(np.abs(f.evaluate_many(points)), 1e-300))
    on_wall = np.nonzero(np.exp(logq) < wall_tol)[0]
    wallset = set(on_wall.tolist())
    cells = []
    cid = 0
    for c in classes:
        c = np.array([i for i in c if i not in wallset], dtype=int)
        if len(c) == 0:
            continue
        for piece in _probe_refine(points, c, factors, (lo, hi), wall_tol):
            cells.append((cid, piece))
            cid += 1
    if any(len(idx) > cap for _, idx in cells):
        raise PartitionError("cell size bound violated")  # unreachable by construction
    epsilon, shift_dist = _choose_epsilon(Q, points, on_wall, delta, wall_tol)
    return PartitionResult(Q=Q, cells=cells, on_wall=on_wall, E=E, box=(lo, hi),
                           epsilon=epsilon, factors=factors, wall_shift_dist=shift_dist)


def _one_cut(points, group, lo, hi, axis_polys, rng):
    """One simultaneous bisection of the index classes in ``group``.

    Returns the polynomial factor and the per-class side values used for the
    split (polynomial evaluations, so the split matches later cell logic).
    Escalates the lift degree, then splits the group, before giving up.
    """
    n = points.shape[1]
    r = len(group)
    d0 = 1
    while veronese_dim(n, d0) < r:
        d0 += 1
    for d in (d0, d0 + 1, d0 + 2):
        lifted = [_lift_normalized(points[c], lo, hi, d) for c in group]
        try:
            w, b = ham_sandwich_bisect(lifted, seed=int(rng.integers(2**31)))
        except BisectionError:
            continue
        factor = _cut_to_polynomial(w, b, d, axis_polys)
        side_vals = [factor.evaluate_many(points[c]) for c in group]
        if _sides_ok(group, side_vals):
            # median scale keeps products of many factors O(1) off the walls
            av = np.abs(np.concatenate(side_vals))
            scale = float(np.median(av[av > 0])) if np.any(av > 0) else 1.0
            factor = factor.scale(1.0 / max(scale, 1e-30))
            side_vals = [v / max(scale, 1e-30) for v in side_vals]
            return factor, side_vals
    if r > 1:
        half = (r + 1) // 2
        f1, s1 = _one_cut(points, group[:half], lo, hi, axis_polys, rng)
        # second half handled by its own cut in the same round
        f2, s2 = _one_cut(points, group[half:], lo, hi, axis_polys, rng)
        prod = f1 * f2
        vals = [prod.evaluate_many(points[c]) for c in group]
        if _sides_ok(group, vals):
            return prod, vals
    raise PartitionError("simultaneous bisection failed after degree escalation")


def _sides_ok(group, side_vals):
    for c, vals in zip(group, side_vals):
        capc = -(-len(c) // 2)
        if int(np.sum(vals > 0)) > capc or int(np.sum(vals < 0)) > capc:
            return False
    return True


def _choose_epsilon(Q, points, on_wall, delta, wall_tol):
    """Geometric scan for epsilon with dist(v, Z(Q+eps)) < delta for wall points."""
    if len(on_wall) == 0:
        return None, 0.0
    grads = [Q.partial(i) for i in range(Q.nvars)]
    pts = points[on_wall]
    n = Q.nvars
    jitters = [np.zeros(n)]
    for ax in range(n):
        for s in (1.0, -1.0):
            e = np.zeros(n)
            e[ax] = s * delta / 8.0
            jitters.append(e)
    for eps in [wall_tol * 2.0**j for j in range(10, -1, -2)]:
        worst = 0.0
        ok = True
        for v in pts:
            best = None
            for jit in jitters:
                root = _newton_scalar(Q, grads, v + jit, eps)
                if root is not None:
                    d = float(np.linalg.norm(root - v))
                    best = d if best is None else min(best, d)
                    if best < delta:
                        break
            if best is None or best >= delta:
                ok = False
                break
            worst = max(worst, best)
        if ok:
            return eps, worst
    raise PartitionError("no epsilon in the scan keeps wall points delta-close to Z(Q+eps)")


def _newton_scalar(Q, grads, x0, eps, iters=40):
    x = np.asarray(x0, dtype=float).copy()
    for _ in range(iters):
        val = float(Q.evaluate_many(x[None, :])[0]) + eps
        if abs(val) < 1e-13:
            return x
        g = np.array([float(gi.evaluate_many(x[None, :])[0]) for gi in grads])
        g2 = float(g @ g)
        if g2 < 1e-30:
            return None
        x = x - val * g / g2
    return None


# -- probing connectivity ----------------------------------------------------


def _staircase_paths(p, q):
    import itertools

    n = len(p)
    for perm in itertools.permutations(range(n)):
        way = [np.array(p, dtype=float)]
        cur = np.array(p, dtype=float)
        for ax in perm:
            cur = cur.copy()
            cur[ax] = q[ax]
            way.append(cur)
        yield np.array(way)


def _path_points(path, per_segment=65):
    chunks = []
    for a, b in zip(path[:-1], path[1:]):
        if np.linalg.norm(b - a) < 1e-15:
            continue
        t = np.linspace(0.0, 1.0, per_segment)
        chunks.append(a[None, :] + t[:, None] * (b - a)[None, :])
    return np.vstack(chunks) if chunks else np.asarray(path)


def _factor_path_clear(factors, pts, wall_tol):
    """Along the sampled path, every factor keeps its sign with a slope guard,
    and the factor product stays at least wall_tol in magnitude."""
    log_abs = np.zeros(pts.shape[0])
    for f in factors:
        vals = f.evaluate_many(pts)
        av = np.abs(vals)
        if np.sign(vals).min() != np.sign(vals).max():
            return False
        guard = 0.75 * np.abs(np.diff(vals)).max() if len(vals) > 1 else 0.0
        if av.min() <= guard:
            return False
        log_abs += np.log(np.maximum(av, 1e-300))
    return bool(np.exp(log_abs.min()) >= wall_tol)


def probe_connected(factors, p, q, box, wall_tol=WALL_TOL):
    """Conservative path probe: same label only with a verified sign-constant
    straight or axis-staircase path along which the product stays off-wall."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if _factor_path_clear(factors, _path_points(np.array([p, q])), wall_tol):
        return True
    for path in _staircase_paths(p, q):
        if _factor_path_clear(factors, _path_points(path), wall_tol):
            return True
    return False


def _probe_refine(points, idx, factors, box, wall_tol):
    """Split an index class into probe-connected pieces (conservative).

    Straight-segment probes against group representatives are batched over
    every factor; staircase detours run individually for the failures.
    """
    groups: list[list[int]] = []
    for i in idx:
        placed = False
        for g in groups:
            reps = g[:2] + g[-1:]
            segs = np.vstack([_path_points(np.array([points[i], points[r]]), 49) for r in reps])
            per = segs.shape[0] // len(reps)
            okmask = np.ones(len(reps), dtype=bool)
            logsum = np.zeros(segs.shape[0])
            for f in factors:
                vals = f.evaluate_many(segs)
                av = np.abs(vals)
                logsum += np.log(np.maximum(av, 1e-300))
                vseg = vals.reshape(len(reps), per)
                aseg = av.reshape(len(reps), per)
                sign_ok = np.sign(vseg).min(axis=1) == np.sign(vseg).max(axis=1)
                guard = 0.75 * np.abs(np.diff(vseg, axis=1)).max(axis=1)
                okmask &= sign_ok & (aseg.min(axis=1) > guard)
            okmask &= np.exp(logsum.reshape(len(reps), per).min(axis=1)) >= wall_tol
            if okmask.any():
                g.append(i)
                placed = True
                break
            if any(probe_connected(factors, points[i], points[r], box, wall_tol) for r in reps[:1]):
                g.append(i)
                placed = True
                break
        if not placed:
            groups.append([i])
    return [np.array(g, dtype=int) for g in groups]


def cell_assign(points: np.ndarray, Q: Polynomial, box=None, wall_tol: float = WALL_TOL,
                factors=None) -> np.ndarray:
    """Labels for each point: -1 when |Q| < wall_tol, else a cell id such that
    equal ids are probe-connected in the complement of Z(Q).  Undecided pairs
    get distinct ids (conservative)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if box is None:
        lo = points.min(axis=0) - 1.0
        hi = points.max(axis=0) + 1.0
        box = (lo, hi)
    vals = Q.evaluate_many(points)
    labels = np.full(points.shape[0], -2, dtype=int)
    labels[np.abs(vals) < wall_tol] = -1
    todo = np.nonzero(labels == -2)[0]
    pieces = _probe_refine(points, todo, factors or [Q], box, wall_tol)
    for cid, piece in enumerate(pieces):
        labels[piece] = cid
    return labels


# ---------------------------------------------------------------------------
# direction partition on a TCI


@dataclass
class Wall:
    name: str
    variety: Variety
    samples: np.ndarray

    def append_samples(self, pts: np.ndarray):
        if pts.size:
            self.samples = np.vstack([self.samples, np.atleast_2d(pts)]) if self.samples.size else np.atleast_2d(pts)


@dataclass
class DirectionPartition:
    cells: list                    # (cell_id, global index array, patch_id)
    walls: list                    # Wall
    V_times: list                  # (index, wall_id, dist)
    E: int
    delta: float
    V: np.ndarray
    cell_samples: dict = field(default_factory=dict)   # cell_id -> sample points
    diagnostics: dict = field(default_factory=dict)

    def conservation_ok(self) -> bool:
        total = sum(len(idx) for _, idx, _ in self.cells) + len(self.V_times)
        return total == self.V.shape[0]

    def max_cell_size(self) -> int:
        return max((len(idx) for _, idx, _ in self.cells), default=0)

    def wall_distance_audit(self) -> float:
        """max over V_x of the distance to its wall's sample set."""
        worst = 0.0
        for i, wid, _ in self.V_times:
            d = np.linalg.norm(self.walls[wid].samples - self.V[i], axis=1).min()
            worst = max(worst, float(d))
        return worst

    def to_json(self, wall_files=None) -> str:
        return json.dumps({
            "E": self.E,
            "delta": self.delta,
            "cells": [{"id": int(cid), "members": np.asarray(idx).tolist(), "patch": int(pid)}
                      for cid, idx, pid in self.cells],
            "V_times": [{"index": int(i), "wall": int(w), "dist": float(d)} for i, w, d in self.V_times],
            "walls": [wall_files[j] if wall_files else w.name for j, w in enumerate(self.walls)],
            "diagnostics": self.diagnostics,
        }, sort_keys=True)


def _wedge_poly(gens: list, g: np.ndarray) -> Polynomial:
    """det[grad P_1; ...; grad P_{n-m}; rows spanning g] collapsed against a
    fixed vector g, for the supported identifications (net on S^{n-1})."""
    n = gens[0].nvars
    grads = [p.gradient_polys() for p in gens]
    if len(gens) == n - 1:
        # curve case: P_g = det of gradients stacked with g as last row
        return _det_with_vector_row(grads, g, n)
    if len(gens) == 1 and n == 3:
        # surface in R^3: wedge with a 2-plane identified with its normal g
        gx, gy, gz = grads[0]
        return gx.scale(float(g[0])) + gy.scale(float(g[1])) + gz.scale(float(g[2]))
    raise PartitionError(f"unsupported wedge setup: {len(gens)} generators in R^{n}")


def _det_with_vector_row(grads, g, n):
    rows = [[q.to_float() for q in grow] for grow in grads]
    out = Polynomial.zero(n, exact=False)
    sign = 1.0 if n % 2 else -1.0
    for k in range(n):
        sub = [[row[j] for j in range(n) if j != k] for row in rows]
        cof = _poly_det(sub)
        out = out + cof.scale(float(g[k]) * sign * ((-1.0) ** k))
    return out


def _poly_det(mat):
    k = len(mat)
    if k == 1:
        return mat[0][0]
    nv = mat[0][0].nvars
    total = Polynomial.zero(nv, exact=False)
    for j in range(k):
        sub = [row[:j] + row[j + 1 :] for row in mat[1:]]
        term = mat[0][j] * _poly_det(sub)
        total = total + (term if j % 2 == 0 else -term)
    return total


def _tangent_frame(z: Variety, x: np.ndarray):
    """Orthonormal basis of the tangent space at x, plus the normal basis."""
    _, grads = _float_cache(z)
    J = np.array([[g.evaluate_many(x[None, :])[0] for g in grow] for grow in grads])
    _, _, vt = np.linalg.svd(J, full_matrices=True)
    c = J.shape[0]
    return vt[c:], vt[:c]


def direction_partition(z: Variety, V: DirectionSet, N: int, E: int, delta: float = 1e-3,
                        seed: int = 0, g_delta: float = 1.0, lipschitz_bound: float = 1.0,
                        wall_tol: float = WALL_TOL, wall_samples: int = 2048) -> DirectionPartition:
    """Partition directions on a transverse complete intersection.

    Walls are the wedge-polynomial varieties W_g for g in a net G plus the
    epsilon-shifted per-patch partition walls; every excised direction is
    within delta of a wall's sample set (hard, audited postcondition), every
    cell has at most ceil((N/E)^m) members, and membership is conserved.
    """
    n, m = z.nvars, z.declared_dim
    if (n, m) not in {(2, 1), (3, 1), (3, 2)}:
        raise PartitionError(f"unsupported instantiation (n, m) = ({n}, {m})")
    pts = V.points
    if pts.shape[0] > N**m:
        raise ValueError("direction set exceeds the declared cardinality bound N^m")
    if E < 1:
        raise ValueError("E must be >= 1")
    diag = {"exponent_condition": bool(E ** max(m - 1, 1) >= z.degree**n)}
    rng = np.random.default_rng(seed)
    gens = [p.to_float() for p in z.generators]

    walls = _build_wedge_walls(z, gens, n, m, g_delta, seed, wall_samples, rng)
    if m == 1:
        return _partition_curve(z, V, N, E, delta, seed, walls, wall_tol, diag, rng)
    return _partition_surface(z, V, N, E, delta, seed, walls, wall_tol, lipschitz_bound, diag, rng)


def _build_wedge_walls(z, gens, n, m, g_delta, seed, wall_samples, rng):
    from .nets import build_net

    net = build_net(f"sphere:{n}", g_delta, seed=seed)
    walls = []
    for gi, g in enumerate(net.points):
        pg = _wedge_poly(gens, g)
        cand = Variety(PolySystem(gens + [pg]), m - 1)
        ok = None
        for _ in range(4):
            ok, _w = is_tci(cand, sample_count=24, seed=int(rng.integers(2**31)),
                            region=("box", [-2.5] * n, [2.5] * n))
            if ok:
                break
            g = g + 1e-3 * rng.normal(size=n)
            g /= np.linalg.norm(g)
            pg = _wedge_poly(gens, g)
            cand = Variety(PolySystem(gens + [pg]), m - 1)
        if ok is None:
            # wedge polynomial never vanishes on z near this g: no wall needed
            continue
        if not ok:
            continue
        count = wall_samples if m - 1 >= 1 else 256
        res = sample_variety(cand, region=("box", [-2.5] * n, [2.5] * n), count=count,
                             seed=int(rng.integers(2**31)), budget_factor=20)
        walls.append(Wall(name=f"wedge:{gi}", variety=cand, samples=res.points))
    return walls


def _excise_near_walls(z, pts, walls, delta):
    """Nearest wall and polished distance per direction; excised = dist < delta."""
    k = pts.shape[0]
    best = np.full(k, np.inf)
    best_wall = np.full(k, -1, dtype=int)
    for wid, wall in enumerate(walls):
        if wall.samples.size == 0:
            continue
        d2 = ((pts[:, None, :] - wall.samples[None, :, :]) ** 2).sum(axis=2)
        d = np.sqrt(d2.min(axis=1))
        proj, ok = newton_project_batch(wall.variety, pts, tol=1e-11, max_iter=40)
        pd = np.linalg.norm(pts - proj, axis=1)
        d = np.where(ok, np.minimum(d, pd), d)
        upd = d < best
        best[upd] = d[upd]
        best_wall[upd] = wid
        take = ok & (pd < 2 * delta)
        if take.any():
            wall.append_samples(proj[take])
    return best, best_wall


def _patch_probe_groups(z, pts, idx, wall_polys, sig, box_r=3.0):
    """Probe-connected refinement of a sign class, probing along the variety."""
    groups: list[list[int]] = []
    reps: list[list[int]] = []
    for i in idx:
        placed = False
        for g_reps, grp in zip(reps, groups):
            if any(_variety_probe(z, pts[i], pts[r], wall_polys, sig) for r in g_reps[:2]):
                grp.append(i)
                placed = True
                break
        if not placed:
            groups.append([i])
            reps.append([i])
    return groups


def _variety_probe(z, p, q, wall_polys, sig, samples=25):
    t = np.linspace(0.0, 1.0, samples)[1:-1]
    chord = p[None, :] + t[:, None] * (q - p)[None, :]
    proj, ok = newton_project_batch(z, chord, tol=1e-9, max_iter=30)
    if not ok.all():
        return False
    step = np.linalg.norm(np.diff(np.vstack([p, proj, q]), axis=0), axis=1)
    if step.max() > 4.0 * np.linalg.norm(q - p) / samples + 0.2:
        return False
    for wp, s in zip(wall_polys, sig):
        vals = wp.evaluate_many(proj)
        if np.any(np.sign(vals) != s) :
            return False
    return True


def _partition_surface(z, V, N, E, delta, seed, walls, wall_tol, lipschitz_bound, diag, rng):
    pts = V.points
    k = pts.shape[0]
    dist, wall_of = _excise_near_walls(z, pts, walls, delta)
    excised = dist < delta
    V_times = [(int(i), int(wall_of[i]), float(dist[i])) for i in np.nonzero(excised)[0]]
    remaining = np.nonzero(~excised)[0]

    wall_polys = [w.variety.generators[-1] for w in walls]
    cells = []
    cell_samples = {}
    cid = 0
    patch_id = 0
    cap = max(1, math.ceil((N / E) ** 2))
    if remaining.size:
        sigm = np.column_stack([np.sign(wp.evaluate_many(pts[remaining])) for wp in wall_polys]) \
            if wall_polys else np.zeros((remaining.size, 0))
        classes: dict[tuple, list[int]] = {}
        for row, i in zip(sigm, remaining):
            classes.setdefault(tuple(row.astype(int)), []).append(int(i))
        for sig, members in sorted(classes.items()):
            for group in _patch_probe_groups(z, pts, members, wall_polys, sig):
                patches = _lipschitz_patches(z, pts, np.array(group, dtype=int), lipschitz_bound, depth=4)
                for patch in patches:
                    cid, patch_id = _partition_patch(
                        z, pts, patch, N, E, cap, delta, wall_tol, walls, V_times,
                        cells, cell_samples, cid, patch_id, rng)
    dp = DirectionPartition(cells=cells, walls=walls, V_times=V_times, E=E, delta=delta,
                            V=pts, cell_samples=cell_samples, diagnostics=diag)
    if not dp.conservation_ok():
        raise PartitionError("conservation violated")  # unreachable
    return dp


@dataclass
class _Patch:
    members: np.ndarray
    seed_point: np.ndarray
    frame: tuple     # (tangent basis (m, n), normal basis (c, n))


def _lipschitz_patches(z, pts, members, bound, depth):
    """Split a connected member group until the sampled finite-difference
    Lipschitz estimate of the chart height map is below the bound."""
    seedp = _patch_seed(pts, members)
    tangent, normal = _tangent_frame(z, seedp)
    rel = pts[members] - seedp
    chart = rel @ tangent.T
    height = rel @ normal.T
    est = _lipschitz_estimate(chart, height)
    if est < bound or depth <= 0 or len(members) < 4:
        return [_Patch(members=members, seed_point=seedp, frame=(tangent, normal))]
    med = np.median(chart, axis=0)
    quads: dict[tuple, list[int]] = {}
    for i, c in zip(members, chart):
        key = tuple((c > med).astype(int))
        quads.setdefault(key, []).append(int(i))
    if len(quads) == 1:
        return [_Patch(members=members, seed_point=seedp, frame=(tangent, normal))]
    out = []
    for sub in quads.values():
        out.extend(_lipschitz_patches(z, pts, np.array(sub, dtype=int), bound, depth - 1))
    return out


def _patch_seed(pts, members):
    centroid = pts[members].mean(axis=0)
    return pts[members[int(np.argmin(np.linalg.norm(pts[members] - centroid, axis=1)))]]


def _lipschitz_estimate(chart, height):
    k = chart.shape[0]
    if k < 2:
        return 0.0
    d2 = ((chart[:, None, :] - chart[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    nn = d2.argmin(axis=1)
    dc = np.sqrt(d2[np.arange(k), nn])
    dh = np.linalg.norm(height - height[nn], axis=1)
    ok = dc > 1e-12
    return float((dh[ok] / dc[ok]).max()) if ok.any() else 0.0


def _partition_patch(z, pts, patch, N, E, cap, delta, wall_tol, walls, V_times,
                     cells, cell_samples, cid, patch_id, rng):
    members = patch.members
    tangent, normal = patch.frame
    chart = (pts[members] - patch.seed_point) @ tangent.T
    if len(members) <= cap:
        cells.append((cid, members, patch_id))
        cell_samples[cid] = pts[members]
        return cid + 1, patch_id + 1
    n_local = int(math.ceil(len(members) ** (1.0 / chart.shape[1])))
    e_local = max(2, math.ceil(n_local * E / N))
    pr = approx_poly_partition(chart, N=n_local, E=e_local, wall_tol=wall_tol,
                               seed=int(rng.integers(2**31)), delta=delta / 2)
    chart_polys = _chart_coordinate_polys(patch.seed_point, tangent)
    q_amb = pr.Q.compose(chart_polys)
    for _, idx in pr.cells:
        gcells = members[idx]
        cells.append((cid, gcells, patch_id))
        cell_samples[cid] = pts[gcells]
        cid += 1
    if len(pr.on_wall):
        wall_members = members[pr.on_wall]
        wid = _make_patch_wall(z, q_amb, pts[wall_members], delta, wall_tol, walls, patch_id, rng)
        for i, d in zip(wall_members, _dist_to_wall(pts[wall_members], walls[wid])):
            V_times.append((int(i), wid, float(d)))
    return cid, patch_id + 1


def _chart_coordinate_polys(seed_point, tangent):
    n = seed_point.shape[0]
    out = []
    for row in tangent:
        terms = {}
        for i in range(n):
            e = [0] * n
            e[i] = 1
            terms[tuple(e)] = float(row[i])
        terms[(0,) * n] = -float(row @ seed_point)
        out.append(Polynomial(n, terms))
    return out


def _dist_to_wall(pts, wall):
    d2 = ((pts[:, None, :] - wall.samples[None, :, :]) ** 2).sum(axis=2)
    return np.sqrt(d2.min(axis=1))


def _make_patch_wall(z, q_amb, wall_pts, delta, wall_tol, walls, patch_id, rng):
    """epsilon-scan: certified TCI wall Z(gens, Q + eps) with all the chart-wall
    points within delta of its sample set."""
    n = z.nvars
    gens = [p.to_float() for p in z.generators]
    for eps in [wall_tol * 4.0**j for j in range(0, 8)] + [-wall_tol * 4.0**j for j in range(0, 8)]:
        shifted = q_amb + Polynomial.constant(n, float(eps))
        cand = Variety(PolySystem(gens + [shifted]), z.declared_dim - 1)
        ok, _ = is_tci(cand, sample_count=20, seed=int(rng.integers(2**31)),
                       region=("box", [-2.5] * n, [2.5] * n))
        if not ok:
            continue
        proj, conv = newton_project_batch(cand, wall_pts, tol=1e-11, max_iter=50)
        if not conv.all():
            continue
        dist = np.linalg.norm(wall_pts - proj, axis=1)
        if dist.max() < delta:
            res = sample_variety(cand, region=("box", [-2.5] * n, [2.5] * n), count=1024,
                                 seed=int(rng.integers(2**31)), budget_factor=15)
            wall = Wall(name=f"patch:{patch_id}", variety=cand,
                        samples=res.points if res.points.size else proj)
            wall.append_samples(proj)
            walls.append(wall)
            return len(walls) - 1
    raise PartitionError("epsilon scan failed: wall points not delta-close to any certified shift")


# -- curve instantiations (m = 1) -------------------------------------------


def _partition_curve(z, V, N, E, delta, seed, walls, wall_tol, diag, rng):
    pts = V.points
    k = pts.shape[0]
    resolution = min(1e-3, delta / 3.0)
    cc = trace_curve(z, resolution=resolution, seed=seed,
                     region=("annulus", 1.5) if z.nvars == 3 else ("box", [-2.5] * 2, [2.5] * 2))
    net_dirs = _curve_net_dirs(z.nvars, seed)
    comp_of = np.empty(k, dtype=int)
    vert_of = np.empty(k, dtype=int)
    for i, p in enumerate(pts):
        best, bc, bv = np.inf, -1, -1
        for ci, poly in enumerate(cc.components):
            d = np.linalg.norm(poly - p, axis=1)
            j = int(d.argmin())
            if d[j] < best:
                best, bc, bv = float(d[j]), ci, j
        if best > 10 * resolution:
            raise PartitionError("direction not on the traced curve")
        comp_of[i], vert_of[i] = bc, bv

    # wall vertices: extrema of g-projections along each component
    wall_vertices = {ci: set() for ci in range(len(cc.components))}
    for g in net_dirs:
        for ci, poly in enumerate(cc.components):
            vals = poly @ g
            for j in _cyclic_extrema(vals, cc.closed[ci]):
                wall_vertices[ci].add(j)
    # polish wall vertices onto the wedge walls and register the samples
    vertex_wall = {}
    for ci, poly in enumerate(cc.components):
        for j in sorted(wall_vertices[ci]):
            wid, proj = _nearest_wall_projection(walls, poly[j])
            if wid is not None:
                vertex_wall[(ci, j)] = (wid, proj)

    dist = np.full(k, np.inf)
    wall_of = np.full(k, -1, dtype=int)
    if walls:
        dist, wall_of = _excise_near_walls(z, pts, walls, delta)
    excised = dist < delta
    V_times = [(int(i), int(wall_of[i]), float(dist[i])) for i in np.nonzero(excised)[0]]
    remaining = np.nonzero(~excised)[0]

    cells = []
    cell_samples = {}
    cid = 0
    patch_id = 0
    cap = max(1, math.ceil(N / E))
    for ci, poly in enumerate(cc.components):
        on_comp = remaining[comp_of[remaining] == ci]
        if on_comp.size == 0:
            continue
        arcs = _arcs_between(sorted(wall_vertices[ci]), len(poly), cc.closed[ci])
        for arc in arcs:
            arc_set = _arc_vertex_set(arc, len(poly))
            members = np.array([i for i in on_comp if vert_of[i] in arc_set], dtype=int)
            if members.size == 0:
                continue
            cid, patch_id = _partition_arc(z, pts, members, poly, vert_of, arc, net_dirs,
                                           N, E, cap, delta, wall_tol, walls, V_times,
                                           cells, cell_samples, cid, patch_id, rng)
    dp = DirectionPartition(cells=cells, walls=walls, V_times=V_times, E=E, delta=delta,
                            V=pts, cell_samples=cell_samples, diagnostics=diag)
    if not dp.conservation_ok():
        raise PartitionError("conservation violated")
    return dp


def _curve_net_dirs(n, seed):
    from .nets import build_net

    return build_net(f"sphere:{n}", 1.0, seed=seed).points


def _cyclic_extrema(vals, closed):
    k = len(vals)
    out = []
    rng_idx = range(k) if closed else range(1, k - 1)
    for j in rng_idx:
        a, b = vals[(j - 1) % k], vals[(j + 1) % k]
        if (vals[j] - a) * (b - vals[j]) < 0:
            out.append(j)
    return out


def _nearest_wall_projection(walls, x):
    best, bw, bp = np.inf, None, None
    for wid, wall in enumerate(walls):
        proj = newton_project(wall.variety, x, tol=1e-11, max_iter=40)
        if proj is None:
            continue
        d = float(np.linalg.norm(proj - x))
        if d < best:
            best, bw, bp = d, wid, proj
    if bw is not None:
        walls[bw].append_samples(bp[None, :])
    return bw, bp


def _arcs_between(wall_verts, nverts, closed):
    if not wall_verts:
        half = nverts // 2
        return [(0, half), (half, nverts - 1)] if closed else [(0, nverts - 1)]
    arcs = []
    ws = sorted(wall_verts)
    for a, b in zip(ws, ws[1:]):
        if b - a > 1:
            arcs.append((a + 1, b - 1))
    if closed:
        wrap_len = (nverts - ws[-1] - 1) + ws[0]
        if wrap_len > 0:
            arcs.append((ws[-1] + 1, (ws[0] - 1) % nverts))
    else:
        if ws[0] > 0:
            arcs.append((0, ws[0] - 1))
        if ws[-1] < nverts - 1:
            arcs.append((ws[-1] + 1, nverts - 1))
    return arcs


def _arc_vertex_set(arc, nverts):
    a, b = arc
    if a <= b:
        return set(range(a, b + 1))
    return set(range(a, nverts)) | set(range(0, b + 1))


def _partition_arc(z, pts, members, poly, vert_of, arc, net_dirs, N, E, cap, delta,
                   wall_tol, walls, V_times, cells, cell_samples, cid, patch_id, rng):
    arc_set = sorted(_arc_vertex_set(arc, len(poly)))
    arc_pts = poly[np.array(arc_set)]
    # chart direction: net element with tangents least orthogonal along the arc
    tangents = np.diff(arc_pts, axis=0)
    if len(tangents) == 0:
        tangents = np.ones((1, pts.shape[1]))
    tangents = tangents / np.maximum(np.linalg.norm(tangents, axis=1, keepdims=True), 1e-15)
    scores = [np.abs(tangents @ g).min() for g in net_dirs]
    gstar = net_dirs[int(np.argmax(scores))]
    u = pts[members] @ gstar
    if len(members) <= cap:
        cells.append((cid, members, patch_id))
        cell_samples[cid] = np.vstack([pts[members], arc_pts])
        return cid + 1, patch_id + 1
    n_local = len(members)
    e_local = max(2, math.ceil(n_local * E / N))
    pr = approx_poly_partition(u[:, None], N=n_local, E=e_local, wall_tol=wall_tol,
                               seed=int(rng.integers(2**31)), delta=delta / 2)
    qu = _compose_1d(pr.Q, gstar)
    arc_u = arc_pts @ gstar
    for _, idx in pr.cells:
        gmem = members[idx]
        cells.append((cid, gmem, patch_id))
        lo_u, hi_u = u[idx].min(), u[idx].max()
        seg = arc_pts[(arc_u >= lo_u) & (arc_u <= hi_u)]
        cell_samples[cid] = np.vstack([pts[gmem], seg]) if seg.size else pts[gmem]
        cid += 1
    if len(pr.on_wall):
        wall_members = members[pr.on_wall]
        wid = _make_patch_wall(z, qu, pts[wall_members], delta, wall_tol, walls, patch_id, rng)
        for i, d in zip(wall_members, _dist_to_wall(pts[wall_members], walls[wid])):
            V_times.append((int(i), wid, float(d)))
    return cid, patch_id + 1


def _compose_1d(q1: Polynomial, gstar: np.ndarray) -> Polynomial:
    n = len(gstar)
    lin = Polynomial(n, {tuple(1 if j == i else 0 for j in range(n)): float(gstar[i]) for i in range(n) if gstar[i] != 0.0})
    return q1.compose([lin])


# ---------------------------------------------------------------------------
# crossings and clusters


def crossing_count(dp: DirectionPartition, xi: np.ndarray, a: float, plane_tol: float = 1e-8) -> int:
    """Number of cells whose sample set meets the plane xi.x = a: a sample
    within plane_tol, or samples strictly straddling it."""
    xi = np.asarray(xi, dtype=float)
    nx = np.linalg.norm(xi)
    if abs(nx - 1.0) > 1e-9:
        raise ValueError("xi must be a unit vector")
    count = 0
    for cell_id, idx, _ in dp.cells:
        vals = dp.cell_samples[cell_id] @ xi - a
        if np.abs(vals).min() < plane_tol or (vals.max() > plane_tol and vals.min() < -plane_tol):
            count += 1
    return count


@dataclass
class ClusterSelection:
    omega_bad: list
    bad_clusters: dict
    good_remainder: list


def cluster_select(items, net: Net, s: float, threshold: int) -> ClusterSelection:
    """Greedy bad-cluster extraction: while some net top xi holds more than
    ``threshold`` items entirely inside the band R_{xi,3s}, extract the
    largest such cluster (ties to the lowest net index).  Disjointness is by
    removal; the remainder satisfies the per-band bound for every top."""
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    item_pts = [np.atleast_2d(np.asarray(p, dtype=float)) for p in items]
    tops = net.points / np.linalg.norm(net.points, axis=1, keepdims=True)
    inside = np.zeros((len(tops), len(item_pts)), dtype=bool)
    for j, pts in enumerate(item_pts):
        dots = np.abs(tops @ pts.T)
        norms = np.linalg.norm(pts, axis=1)
        inside[:, j] = (dots < 3.0 * s * norms[None, :]).all(axis=1)
    alive = np.ones(len(item_pts), dtype=bool)
    omega_bad = []
    bad_clusters = {}
    while True:
        counts = (inside & alive[None, :]).sum(axis=1)
        top = int(np.argmax(counts))
        if counts[top] <= threshold:
            break
        members = np.nonzero(inside[top] & alive)[0]
        omega_bad.append(top)
        bad_clusters[top] = members.tolist()
        alive[members] = False
    return ClusterSelection(omega_bad=omega_bad, bad_clusters=bad_clusters,
                            good_remainder=np.nonzero(alive)[0].tolist())
