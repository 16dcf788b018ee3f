"""Real algebraic varieties and transverse complete intersections.

A variety is a generator system plus a declared dimension.  The transverse
complete intersection (TCI) property -- n-m generators whose gradients stay
linearly independent on the zero set -- is certified numerically: sample the
zero set, require full Jacobian rank with a singular-value floor at every
sample.  Exact semialgebraic computation is out of scope throughout; every
"distance to a variety" below means distance to a sampled witness set, which
upper-bounds the true distance.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .nets import asym_dist
from .polynomials import Polynomial, PolySystem, jacobian_matrix, jacobian_rank

RANK_TOL = 1e-8
SAMPLE_TOL = 1e-10
TRACE_TOL = 1e-8


class SamplingError(RuntimeError):
    pass


class TciCertificationError(RuntimeError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class TracingError(RuntimeError):
    def __init__(self, message, stall_point=None):
        super().__init__(message)
        self.stall_point = stall_point


@dataclass(frozen=True)
class Variety:
    """Zero set of a generator system with declared dimension metadata."""

    generators: PolySystem
    declared_dim: int

    def __post_init__(self):
        n = self.generators.nvars
        if not 0 <= self.declared_dim <= n:
            raise ValueError("declared_dim out of range")

    @property
    def nvars(self) -> int:
        return self.generators.nvars

    @property
    def degree(self) -> int:
        d = self.generators.max_degree
        return 0 if d == float("-inf") else int(d)

    @property
    def count(self) -> int:
        return len(self.generators)

    def residual(self, pts: np.ndarray) -> np.ndarray:
        """max_j |P_j(x)| per point, vectorized."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        vals = np.zeros(pts.shape[0])
        for p in self.generators:
            vals = np.maximum(vals, np.abs(p.evaluate_many(pts)))
        return vals

    def to_text(self) -> str:
        return f"dim {self.declared_dim} deg {self.degree}\n" + self.generators.to_text()

    @classmethod
    def from_text(cls, text: str) -> "Variety":
        lines = text.strip().splitlines()
        header = lines[0].split()
        if header[0] != "dim":
            raise ValueError("variety file must start with 'dim m deg D'")
        m = int(header[1])
        body = "\n".join(lines[1:])
        return cls(PolySystem.from_text(body), m)


@dataclass(frozen=True)
class TCI(Variety):
    """Variety with J = n - m generators plus a rank certificate."""

    certificate: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        super().__post_init__()
        if self.count != self.nvars - self.declared_dim:
            raise ValueError("TCI needs exactly n - m generators")


def sphere_poly(n: int = 3, exact: bool = True) -> Polynomial:
    """x1^2 + ... + xn^2 - 1."""
    one = Fraction(1) if exact else 1.0
    terms = {tuple(2 if j == i else 0 for j in range(n)): one for i in range(n)}
    terms[(0,) * n] = -one
    return Polynomial(n, terms)


def unit_sphere(n: int = 3) -> TCI:
    return TCI(PolySystem([sphere_poly(n)]), n - 1)


# ---------------------------------------------------------------------------
# sampling


@dataclass(frozen=True)
class SampleResult:
    points: np.ndarray
    requested: int
    complete: bool

    def __len__(self):
        return self.points.shape[0]


def _region_seed_points(region, n: int, count: int, rng) -> np.ndarray:
    """Ambient starting points for Newton projection, uniform in the region."""
    kind = region[0]
    if kind == "annulus":
        R = float(region[1])
        lo, hi = 1.0 / R, 2.0 * R
        dirs = rng.normal(size=(count, n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        r = (rng.uniform(lo**n, hi**n, size=count)) ** (1.0 / n)
        return dirs * r[:, None]
    if kind == "box":
        lo = np.asarray(region[1], dtype=float)
        hi = np.asarray(region[2], dtype=float)
        return rng.uniform(lo, hi, size=(count, n))
    raise ValueError(f"unknown region spec {region!r}")


def _in_region(region, pts: np.ndarray) -> np.ndarray:
    kind = region[0]
    if kind == "annulus":
        R = float(region[1])
        r = np.linalg.norm(pts, axis=1)
        return (r >= 1.0 / R - 1e-12) & (r < 2.0 * R + 1e-12)
    if kind == "box":
        lo = np.asarray(region[1], dtype=float)
        hi = np.asarray(region[2], dtype=float)
        return np.all(pts >= lo - 1e-12, axis=1) & np.all(pts <= hi + 1e-12, axis=1)
    raise ValueError(f"unknown region spec {region!r}")


def _float_cache(v: Variety):
    """Cached float generators and their gradient polynomials."""
    cache = getattr(v, "_fcache", None)
    if cache is None:
        polys = [p.to_float() for p in v.generators]
        grads = [[q.to_float() for q in p.gradient_polys()] for p in polys]
        cache = (polys, grads)
        object.__setattr__(v, "_fcache", cache)
    return cache


def _residual_batch(polys, X: np.ndarray) -> np.ndarray:
    return np.column_stack([p.evaluate_many(X) for p in polys])


def _jacobian_batch(grads, X: np.ndarray) -> np.ndarray:
    k = X.shape[0]
    J = np.empty((k, len(grads), X.shape[1]))
    for i, grow in enumerate(grads):
        for j, g in enumerate(grow):
            J[:, i, j] = g.evaluate_many(X)
    return J


def newton_project_batch(v: Variety, X0: np.ndarray, tol: float = SAMPLE_TOL, max_iter: int = 60):
    """Vectorized Gauss-Newton projection of a batch of ambient points.

    Returns (X, ok) where ok marks rows that converged to residual <= tol.
    Diverging rows are frozen and marked failed.
    """
    polys, grads = _float_cache(v)
    X = np.array(X0, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    alive = np.ones(X.shape[0], dtype=bool)
    ok = np.zeros(X.shape[0], dtype=bool)
    prev = np.full(X.shape[0], np.inf)
    for _ in range(max_iter):
        if not alive.any():
            break
        R = _residual_batch(polys, X[alive])
        rmax = np.abs(R).max(axis=1)
        idx = np.nonzero(alive)[0]
        done = rmax <= tol
        ok[idx[done]] = True
        alive[idx[done]] = False
        stuck = (rmax > 0.95 * prev[idx]) & (rmax > tol) | ~np.isfinite(rmax) | (rmax > 1e12)
        alive[idx[stuck]] = False
        prev[idx] = rmax
        live = np.nonzero(alive)[0]
        if live.size == 0:
            break
        keep = np.isin(idx, live)
        J = _jacobian_batch(grads, X[live])
        Jp = np.linalg.pinv(J, rcond=1e-12)
        step = np.einsum("kij,kj->ki", Jp, R[keep])
        bad = ~np.isfinite(step).all(axis=1)
        X[live] = X[live] - np.where(bad[:, None], 0.0, step)
        alive[live[bad]] = False
    return X, ok


def newton_project(v: Variety, x0: np.ndarray, tol: float = SAMPLE_TOL, max_iter: int = 60):
    """Gauss-Newton projection of one ambient point onto the zero set.

    Returns the projected point or None when the corrector diverges.
    """
    X, ok = newton_project_batch(v, np.asarray(x0, dtype=float)[None, :], tol=tol, max_iter=max_iter)
    return X[0] if ok[0] else None


def sample_variety(
    v: Variety,
    region=("annulus", 1.0),
    count: int = 100,
    seed: int = 0,
    sample_tol: float = SAMPLE_TOL,
    budget_factor: int = 60,
) -> SampleResult:
    """Newton-projected samples of the zero set inside a region.

    Every returned point satisfies max_j |P_j| <= sample_tol and the region
    constraint.  Deterministic for fixed seed.  If the attempt budget runs out
    first, the result is partial and flagged ``complete=False``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    n = v.nvars
    found: list[np.ndarray] = []
    attempts = 0
    batch = max(count, 64)
    while len(found) < count and attempts < budget_factor * count:
        seeds = _region_seed_points(region, n, batch, rng)
        attempts += batch
        X, ok = newton_project_batch(v, seeds, tol=sample_tol)
        if ok.any():
            good = X[ok]
            good = good[_in_region(region, good)]
            found.extend(good[: count - len(found)])
    pts = np.array(found) if found else np.empty((0, n))
    return SampleResult(points=pts, requested=count, complete=len(found) >= count)


# ---------------------------------------------------------------------------
# TCI certification


def is_tci(
    v: Variety,
    sample_count: int = 60,
    tol: float = RANK_TOL,
    seed: int = 0,
    region=("annulus", 2.0),
    sample_tol: float = SAMPLE_TOL,
):
    """Sample the zero set and check the rank-(n-m) condition everywhere.

    Returns (True, None), (False, witness_point), or (None, None) when no
    sample point could be produced (indeterminate, distinct from false).

    Sampled points are only known to about sqrt(sample_tol) accuracy, so the
    rank cutoff is floored there: a degenerate intersection sampled slightly
    off the singular set must still be rejected.
    """
    n, m = v.nvars, v.declared_dim
    if v.count != n - m:
        raise ValueError("is_tci needs J = n - m generators")
    res = sample_variety(v, region=region, count=sample_count, seed=seed, sample_tol=sample_tol)
    if len(res) == 0:
        return None, None
    cutoff = max(tol, 4.0 * np.sqrt(sample_tol))
    sys_f = v.generators.to_float()
    for x in res.points:
        rank, min_sv = jacobian_rank(sys_f, x, tol=cutoff)
        if rank != n - m or min_sv < tol:
            return False, x
    return True, None


def certify_tci(v: Variety, sample_count: int = 60, tol: float = RANK_TOL, seed: int = 0, region=("annulus", 2.0)) -> TCI:
    ok, witness = is_tci(v, sample_count=sample_count, tol=tol, seed=seed, region=region)
    if ok is None:
        raise TciCertificationError("no sample points found; certification indeterminate")
    if not ok:
        raise TciCertificationError("rank condition failed", witness=witness)
    res = sample_variety(v, region=region, count=sample_count, seed=seed)
    return TCI(v.generators, v.declared_dim, certificate=res.points)


# ---------------------------------------------------------------------------
# perturbation (shift / shear) with distance audit


def minors_polynomials(sys: PolySystem) -> list[Polynomial]:
    """All c x c minors of the Jacobian of a c-generator system, as polynomials."""
    c = len(sys)
    n = sys.nvars
    grads = [p.gradient_polys() for p in sys]
    out = []
    for cols in itertools.combinations(range(n), c):
        out.append(_det_poly([[grads[i][j] for j in cols] for i in range(c)]))
    return out


def _det_poly(mat: list[list[Polynomial]]) -> Polynomial:
    k = len(mat)
    if k == 1:
        return mat[0][0]
    nv = mat[0][0].nvars
    exact = mat[0][0].exact
    total = Polynomial.zero(nv, exact=exact)
    for j in range(k):
        sub = [row[:j] + row[j + 1 :] for row in mat[1:]]
        term = mat[0][j] * _det_poly(sub)
        total = total + (term if j % 2 == 0 else -term)
    return total


def transversal_samples(v: Variety, rho: float, R: float, count: int = 300, seed: int = 0) -> np.ndarray:
    """Samples of U_{rho,R}: points of Z with |x| < R and max minor >= rho."""
    res = sample_variety(v, region=("box", [-R] * v.nvars, [R] * v.nvars), count=count, seed=seed)
    if len(res) == 0:
        return res.points
    pts = res.points[np.linalg.norm(res.points, axis=1) < R]
    if pts.shape[0] == 0:
        return pts
    minors = minors_polynomials(v.generators.to_float())
    best = np.zeros(pts.shape[0])
    for mp in minors:
        best = np.maximum(best, np.abs(mp.evaluate_many(pts)))
    return pts[best >= rho]


def perturb_tci(v: TCI, mode: str, params, rho: float = 1e-3, R: float = 2.5, seed: int = 0):
    """Shift (P_j + a_j) or shear (first generator precomposed with x_i + b_i x_n).

    Returns (perturbed TCI, achieved_dist) where achieved_dist is the sampled
    asymmetric distance from U_{rho,R} on the original variety to samples of
    the perturbed one.  Raises TciCertificationError if the perturbed system
    fails certification.
    """
    params = list(params)
    gens = list(v.generators)
    if mode == "shift":
        if len(params) != len(gens):
            raise ValueError("shift needs one parameter per generator")
        new_gens = []
        for p, a in zip(gens, params):
            aa = Fraction(a) if p.exact else float(a)
            new_gens.append(p + Polynomial.constant(p.nvars, aa))
    elif mode == "shear":
        if len(params) != v.nvars - 1:
            raise ValueError("shear needs nvars - 1 parameters")
        conv = Fraction if gens[0].exact else float
        first = gens[0].shift_args([conv(b) for b in params])
        new_gens = [first] + gens[1:]
    else:
        raise ValueError(f"unknown perturbation mode {mode!r}")
    pv = Variety(PolySystem(new_gens), v.declared_dim)
    cert = certify_tci(pv, seed=seed, region=("box", [-R] * v.nvars, [R] * v.nvars))
    base = transversal_samples(v, rho=rho, R=R, count=400, seed=seed)
    if base.shape[0] == 0:
        raise SamplingError("no transversal samples on the base variety")
    target = sample_variety(pv, region=("box", [-R - 1] * v.nvars, [R + 1] * v.nvars), count=500, seed=seed + 1)
    if len(target) == 0:
        raise SamplingError("no samples on the perturbed variety")
    # polish: project base points directly onto the perturbed zero set for a
    # tight witness distance, then take the min against the plain sample set
    dists = []
    step = max(1, 2**22 // max(1, len(target)))
    for i in range(0, base.shape[0], step):
        blk = base[i : i + step]
        d2 = ((blk[:, None, :] - target.points[None, :, :]) ** 2).sum(axis=2)
        dists.append(np.sqrt(d2.min(axis=1)))
    dist = np.concatenate(dists)
    for i in range(base.shape[0]):
        w = newton_project(pv, base[i])
        if w is not None:
            dist[i] = min(dist[i], float(np.linalg.norm(base[i] - w)))
    return cert, float(dist.max())


# ---------------------------------------------------------------------------
# TCI approximation of a general variety (singular-locus stripping)


def _alpha_grid(rng, count: int = 24):
    """Seeded log-uniform magnitudes in [1e-6, 1e-2]."""
    return 10.0 ** rng.uniform(-6, -2, size=count)


def tci_approximation(v: Variety, epsilon: float, R: float = 1.0, seed: int = 0, max_depth: int | None = None):
    """Cover Z within the annulus by a finite set plus certified TCIs.

    Follows the constructive proof: strip the singular locus, perturb each
    (n-m)-subset of generators by generic +-alpha to certified TCIs, recurse
    on the locus one dimension down.  Returns (Z0, families, audit) where the
    audit is the sampled distance of Z's annulus samples to the union and is
    guaranteed < epsilon on return (else raises with the best audit achieved).
    """
    if epsilon <= 0 or R < 1:
        raise ValueError("need epsilon > 0 and R >= 1")
    n = v.nvars
    rng = np.random.default_rng(seed)
    base = sample_variety(v, region=("annulus", R), count=400, seed=seed)
    if len(base) == 0:
        return np.empty((0, n)), [], 0.0

    families: list[TCI] = []
    z0_pts: list[np.ndarray] = []
    _collect_tci_families(v, v.declared_dim, R, rng, families, z0_pts,
                          depth=(v.declared_dim if max_depth is None else max_depth))

    z0 = _dedup(np.array(z0_pts)) if z0_pts else np.empty((0, n))
    audit = _coverage_audit(base.points, families, z0, R, seed)
    if audit >= epsilon:
        raise TciCertificationError(f"audit {audit:.3g} >= epsilon {epsilon:.3g}")
    return z0, families, audit


def _collect_tci_families(v, mu, R, rng, families, z0_pts, depth):
    n = v.nvars
    region = ("annulus", R)
    if mu <= 0 or depth < 0:
        res = sample_variety(v, region=region, count=80, seed=int(rng.integers(2**31)), budget_factor=15)
        if len(res):
            z0_pts.extend(_dedup(res.points))
        return
    c = n - mu
    gens = list(v.generators)
    if len(gens) < c:
        return
    minor_polys: list[Polynomial] = []
    for sigma in itertools.combinations(range(len(gens)), c):
        sub = PolySystem([gens[i].to_float() for i in sigma])
        minor_polys.extend(minors_polynomials(sub))
    # genuinely transverse (empirically empty singular locus): keep as is
    if len(gens) == c:
        locus_probe = sample_variety(
            Variety(PolySystem([g.to_float() for g in gens] + minor_polys), max(mu - 1, 0)),
            region=("box", [-2 * R] * n, [2 * R] * n), count=8,
            seed=int(rng.integers(2**31)), budget_factor=30)
        if len(locus_probe) == 0:
            try:
                families.append(certify_tci(Variety(v.generators, mu), seed=int(rng.integers(2**31))))
                return
            except TciCertificationError:
                pass
    for sigma in itertools.combinations(range(len(gens)), c):
        _perturb_subset_to_tcis(gens, sigma, mu, R, rng, families)
    # recurse on the singular locus: original generators plus all minors
    if depth > 0 and minor_polys:
        uniq = list(dict.fromkeys([g.to_float() for g in gens] + minor_polys))
        locus = Variety(PolySystem(uniq), mu - 1)
        probe = sample_variety(locus, region=("box", [-2 * R] * n, [2 * R] * n),
                               count=8, seed=int(rng.integers(2**31)), budget_factor=20)
        if len(probe):
            _collect_tci_families(locus, mu - 1, R, rng, families, z0_pts, depth - 1)


def _perturb_subset_to_tcis(gens, sigma, mu, R, rng, families):
    sub = [gens[i].to_float() for i in sigma]
    n = sub[0].nvars
    for a in _alpha_grid(rng):
        made = []
        for signs in itertools.product((1.0, -1.0), repeat=len(sub)):
            shifted = [p + Polynomial.constant(n, s * a) for p, s in zip(sub, signs)]
            cand = Variety(PolySystem(shifted), mu)
            try:
                made.append(certify_tci(cand, seed=int(rng.integers(2**31)),
                                        region=("box", [-2 * R] * n, [2 * R] * n)))
            except TciCertificationError:
                continue
        if made:
            families.extend(made)
            return


def _coverage_audit(base_pts, families, z0, R, seed):
    n = base_pts.shape[1]
    targets = [z0] if z0.size else []
    for k, fam in enumerate(families):
        res = sample_variety(fam, region=("box", [-2 * R - 1] * n, [2 * R + 1] * n), count=400, seed=seed + 7 * k + 1)
        if len(res):
            targets.append(res.points)
    if not targets:
        return np.inf
    allpts = np.vstack(targets)
    d2 = ((base_pts[:, None, :] - allpts[None, :, :]) ** 2).sum(axis=2)
    dist = np.sqrt(d2.min(axis=1))
    # polish with direct projections onto each family for tight witnesses
    for i in np.argsort(dist)[::-1]:
        if dist[i] < 1e-9:
            break
        for fam in families:
            w = newton_project(fam, base_pts[i])
            if w is not None:
                dist[i] = min(dist[i], float(np.linalg.norm(base_pts[i] - w)))
    return float(dist.max())


def _dedup(pts: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    kept: list[np.ndarray] = []
    for p in pts:
        if all(np.linalg.norm(p - q) > tol for q in kept):
            kept.append(p)
    return np.array(kept)


# ---------------------------------------------------------------------------
# curve tracing on S^2 and plane-crossing counts


@dataclass(frozen=True)
class CurveComponents:
    """Traced polyline approximations of the components of a 1-dim variety."""

    components: list
    closed: list
    resolution: float
    degree: int

    def __len__(self):
        return len(self.components)

    def to_csv(self) -> str:
        lines = ["component,closed,idx," + ",".join(f"x{i}" for i in range(self.components[0].shape[1]))]
        for ci, (poly, cl) in enumerate(zip(self.components, self.closed)):
            for k, row in enumerate(poly):
                lines.append(f"{ci},{int(cl)},{k}," + ",".join(repr(float(x)) for x in row))
        return "\n".join(lines)


def _curve_tangent(grads, x):
    X = np.asarray(x, dtype=float)[None, :]
    jac = np.array([[g.evaluate_many(X)[0] for g in grow] for grow in grads])
    if jac.shape[0] != jac.shape[1] - 1:
        raise ValueError("curve tracing needs n-1 generators")
    # tangent spans the null space
    _, sv, vt = np.linalg.svd(jac)
    t = vt[-1]
    nt = np.linalg.norm(t)
    if nt == 0 or (sv.size and sv[-1] < 1e-10 * max(1.0, sv[0])):
        return None
    return t / nt


def trace_curve(v: Variety, resolution: float = 1e-3, seed: int = 0, region=("annulus", 1.2),
                seeds: int = 160, max_steps: int | None = None) -> CurveComponents:
    """Predictor-corrector continuation of a 1-dimensional variety.

    Components are traced at arclength step ``resolution`` until they close;
    a new start point within merge_tol = 3*resolution of an existing polyline
    is treated as the same component.  A corrector that stops converging
    raises TracingError naming the stall point.
    """
    _, grads = _float_cache(v)
    res = sample_variety(v, region=region, count=seeds, seed=seed)
    if len(res) == 0:
        raise SamplingError("no seed points found on the curve")
    merge_tol = 3.0 * resolution
    if max_steps is None:
        max_steps = int(30.0 / resolution)
    comps: list[np.ndarray] = []
    closed_flags: list[bool] = []
    for start in res.points:
        if any(np.min(np.linalg.norm(c - start, axis=1)) < merge_tol for c in comps):
            continue
        poly, closed = _trace_one(v, grads, start, resolution, max_steps)
        comps.append(poly)
        closed_flags.append(closed)
    return CurveComponents(components=comps, closed=closed_flags, resolution=resolution, degree=v.degree)


def _trace_one(v, grads, start, h, max_steps):
    pts = [np.asarray(start, dtype=float)]
    t_prev = _curve_tangent(grads, pts[0])
    if t_prev is None:
        raise TracingError("degenerate tangent at start", stall_point=pts[0])
    x = pts[0]
    for step in range(max_steps):
        t = _curve_tangent(grads, x)
        if t is None:
            raise TracingError("degenerate tangent", stall_point=x)
        if t @ t_prev < 0:
            t = -t
        xn = newton_project(v, x + h * t, tol=TRACE_TOL, max_iter=30)
        if xn is None:
            raise TracingError("corrector divergence", stall_point=x + h * t)
        pts.append(xn)
        t_prev = t
        x = xn
        if step >= 3 and np.linalg.norm(x - pts[0]) < 1.5 * h:
            return np.array(pts), True
    return np.array(pts), False


def curve_components(v: Variety, resolution: float = 1e-3, seed: int = 0) -> CurveComponents:
    """Connected components of Z(P, P_sph) on the unit sphere, as polylines."""
    if v.declared_dim != 1:
        raise ValueError("curve_components expects a 1-dimensional variety")
    return trace_curve(v, resolution=resolution, seed=seed, region=("annulus", 1.0))


def plane_crossing_details(cc: CurveComponents, xi, a: float, tangency_tol: float = 1e-10):
    """Sign changes of x -> xi.x - a along the traced polylines.

    Consecutive vertices within tangency_tol of the plane are compressed into
    a single zero-run event; a zero-run with equal signs on both sides counts
    once and is flagged as a tangency.  Returns (count, tangencies).
    """
    xi = np.asarray(xi, dtype=float)
    xi = xi / np.linalg.norm(xi)
    count = 0
    tangencies = 0
    for poly, closed in zip(cc.components, cc.closed):
        vals = poly @ xi - a
        if closed:
            vals = vals[:-1] if len(vals) > 1 and np.linalg.norm(poly[0] - poly[-1]) < 2 * cc.resolution else vals
        signs = np.where(np.abs(vals) < tangency_tol, 0, np.sign(vals)).astype(int)
        nz = signs[signs != 0]
        if nz.size == 0:
            if len(vals) > 0:
                tangencies += 1
                count += 1
            continue
        events = _compress_runs(signs, closed)
        for prev_s, zero_run, next_s in events:
            if zero_run:
                if prev_s == next_s:
                    tangencies += 1
                    count += 1
                else:
                    count += 1
            elif prev_s != next_s:
                count += 1
    return count, tangencies


def _compress_runs(signs, closed):
    """Transitions (prev_sign, through_zero_run, next_sign) along the polyline."""
    n = len(signs)
    idx = list(range(n)) + (list(range(n)) if closed else [])
    events = []
    i = 0
    limit = n if not closed else n + _first_nonzero(signs)
    start = 0 if not closed else _first_nonzero(signs)
    i = start
    prev_s = None
    zero_pending = False
    while i < limit + (1 if closed else 0) and i - start < n + 1:
        s = signs[idx[i % len(idx)]] if closed else (signs[i] if i < n else None)
        if s is None:
            break
        if s == 0:
            zero_pending = True
        else:
            if prev_s is not None and (zero_pending or s != prev_s):
                events.append((prev_s, zero_pending, s))
            prev_s = s
            zero_pending = False
        i += 1
    return events


def _first_nonzero(signs):
    for i, s in enumerate(signs):
        if s != 0:
            return i
    return 0


def plane_curve_crossings(cc: CurveComponents, xi, a: float) -> int:
    """Number of sign changes of xi.x - a along all traced components."""
    if abs(np.linalg.norm(np.asarray(xi, dtype=float)) - 1.0) > 1e-9:
        raise ValueError("xi must be a unit vector")
    count, _ = plane_crossing_details(cc, xi, a)
    return count


def grid_component_count(p: Polynomial, res: int = 500) -> int:
    """Independent component-count oracle: flood fill of the sign-change cells
    of P on a dense theta-phi subdivision of the sphere.  Used by tests to
    cross-check traced component counts."""
    from scipy.ndimage import label

    th = np.linspace(0.0, np.pi, res + 1)
    ph = np.linspace(0.0, 2 * np.pi, 2 * res, endpoint=False)
    TH, PH = np.meshgrid(th, ph, indexing="ij")
    pts = np.column_stack([
        (np.sin(TH) * np.cos(PH)).ravel(),
        (np.sin(TH) * np.sin(PH)).ravel(),
        np.cos(TH).ravel(),
    ])
    vals = np.sign(p.evaluate_many(pts)).reshape(res + 1, 2 * res)
    # a cell is crossed when its four corners (phi-periodic) disagree in sign
    v00 = vals[:-1, :]
    v10 = vals[1:, :]
    v01 = np.roll(vals[:-1, :], -1, axis=1)
    v11 = np.roll(vals[1:, :], -1, axis=1)
    lo = np.minimum(np.minimum(v00, v10), np.minimum(v01, v11))
    hi = np.maximum(np.maximum(v00, v10), np.maximum(v01, v11))
    mask = lo < hi
    lbl, k = label(mask)
    if k == 0:
        return 0
    parent = list(range(k + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra

    # periodic phi seam
    for i in range(mask.shape[0]):
        a, b = lbl[i, 0], lbl[i, -1]
        if a and b:
            union(a, b)
    # each pole is a single point: cells in the pole row all touch it
    for pole_row in (0, mask.shape[0] - 1):
        here = sorted({find(v) for v in lbl[pole_row] if v})
        for other in here[1:]:
            union(here[0], other)
    return len({find(v) for v in range(1, k + 1)})
