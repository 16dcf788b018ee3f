"""Exact Groebner bases (Buchberger, pure lex) and elimination-ideal projection.

Coefficients are Fractions throughout; float input is rejected.  The term
order is pure lex under an explicit variable priority so the elimination
theorem applies: with the dropped variable highest, the basis members free of
it generate the first elimination ideal.  The approximate projection of a
transverse complete intersection onto a coordinate hyperplane shears first
when no generator carries a pure power of the eliminated variable.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .polynomials import Polynomial, PolySystem
from .varieties import TCI, SamplingError, TciCertificationError, Variety, is_tci, newton_project, sample_variety

PAIR_BUDGET = 100_000


class ResourceError(RuntimeError):
    pass


@dataclass(frozen=True)
class GroebnerBasis:
    """Reduced lex Groebner basis with its variable priority (highest first)."""

    basis: PolySystem
    order: tuple

    def to_text(self) -> str:
        return "order " + " ".join(str(i) for i in self.order) + "\n" + self.basis.to_text()

    @classmethod
    def from_text(cls, text: str) -> "GroebnerBasis":
        lines = text.strip().splitlines()
        if not lines[0].startswith("order"):
            raise ValueError("basis file must start with an 'order' header")
        order = tuple(int(t) for t in lines[0].split()[1:])
        return cls(PolySystem.from_text("\n".join(lines[1:])), order)


def _lex_key(exps, order):
    return tuple(exps[i] for i in order)


def _leading(terms: dict, order) -> tuple:
    return max(terms, key=lambda e: _lex_key(e, order))


def _mono_divides(a, b) -> bool:
    return all(x <= y for x, y in zip(a, b))


def _mono_div(a, b) -> tuple:
    return tuple(x - y for x, y in zip(a, b))


def _mono_mul(a, b) -> tuple:
    return tuple(x + y for x, y in zip(a, b))


def _mono_lcm(a, b) -> tuple:
    return tuple(max(x, y) for x, y in zip(a, b))


def _reduce(terms: dict, basis: list, order, counter) -> dict:
    """Full multivariate division remainder of ``terms`` by the basis."""
    rem: dict = {}
    work = dict(terms)
    while work:
        counter[0] += 1
        if counter[0] > counter[1]:
            raise ResourceError(f"reduction budget {counter[1]} exceeded")
        lt = _leading(work, order)
        lc = work[lt]
        for g_lt, g_terms in basis:
            if _mono_divides(g_lt, lt):
                q_mono = _mono_div(lt, g_lt)
                q_coef = lc / g_terms[g_lt]
                for e, c in g_terms.items():
                    tgt = _mono_mul(e, q_mono)
                    s = work.get(tgt, Fraction(0)) - q_coef * c
                    if s == 0:
                        work.pop(tgt, None)
                    else:
                        work[tgt] = s
                break
        else:
            rem[lt] = lc
            del work[lt]
    return rem


def _spoly(f_lt, f_terms, g_lt, g_terms, order) -> dict:
    lcm = _mono_lcm(f_lt, g_lt)
    mf, mg = _mono_div(lcm, f_lt), _mono_div(lcm, g_lt)
    cf, cg = f_terms[f_lt], g_terms[g_lt]
    out: dict = {}
    for e, c in f_terms.items():
        out[_mono_mul(e, mf)] = c / cf
    for e, c in g_terms.items():
        tgt = _mono_mul(e, mg)
        s = out.get(tgt, Fraction(0)) - c / cg
        if s == 0:
            out.pop(tgt, None)
        else:
            out[tgt] = s
    return out


def _monic(terms: dict, order) -> dict:
    lc = terms[_leading(terms, order)]
    return {e: c / lc for e, c in terms.items()}


def buchberger(ideal: PolySystem, var_order=None, budget: int = PAIR_BUDGET) -> GroebnerBasis:
    """Reduced lex Groebner basis of the ideal; deterministic.

    ``var_order`` lists variable indices by priority, highest first; it
    defaults to (0, 1, ..., n-1).  The computation is budgeted: more than
    ``budget`` division steps raises ResourceError.
    """
    n = ideal.nvars
    order = tuple(var_order) if var_order is not None else tuple(range(n))
    if sorted(order) != list(range(n)):
        raise ValueError("var_order must be a permutation of the variables")
    for p in ideal:
        if not p.exact:
            raise ValueError("buchberger needs exact rational coefficients")
    counter = [0, budget]
    basis: list = []
    for p in ideal:
        if p.terms:
            t = _monic(dict(p.terms), order)
            basis.append((_leading(t, order), t))
    pairs = list(itertools.combinations(range(len(basis)), 2))
    while pairs:
        # deterministic normal strategy: smallest lcm first
        pairs.sort(key=lambda ij: _lex_key(_mono_lcm(basis[ij[0]][0], basis[ij[1]][0]), order))
        i, j = pairs.pop(0)
        fi_lt, fi = basis[i]
        fj_lt, fj = basis[j]
        lcm = _mono_lcm(fi_lt, fj_lt)
        if lcm == _mono_mul(fi_lt, fj_lt):
            continue  # coprime leading monomials: S-poly reduces to zero
        s = _spoly(fi_lt, fi, fj_lt, fj, order)
        r = _reduce(s, basis, order, counter)
        if r:
            r = _monic(r, order)
            k = len(basis)
            basis.append((_leading(r, order), r))
            pairs.extend((t, k) for t in range(k))
    return GroebnerBasis(PolySystem(_interreduce(basis, order, counter, n)), order)


def _interreduce(basis, order, counter, n) -> list:
    # minimalize: drop members whose leading monomial is divisible by another's
    keep = []
    lts = [lt for lt, _ in basis]
    for i, (lt, terms) in enumerate(basis):
        if any(j != i and _mono_divides(lts[j], lt) and (lts[j] != lt or j < i) for j in range(len(basis))):
            continue
        keep.append((lt, terms))
    # reduce each member against the others
    out = []
    for i, (lt, terms) in enumerate(keep):
        others = keep[:i] + keep[i + 1 :]
        r = _reduce(dict(terms), others, order, counter) if others else dict(terms)
        if r:
            out.append(_monic(r, order))
    out.sort(key=lambda t: _lex_key(_leading(t, order), order))
    return [Polynomial(n, t) for t in out]


def spoly_reduces_to_zero(gb: GroebnerBasis) -> bool:
    """Exact S-polynomial check over every basis pair (Buchberger criterion)."""
    order = gb.order
    basis = [(_leading(dict(p.terms), order), dict(p.terms)) for p in gb.basis]
    counter = [0, 10 * PAIR_BUDGET]
    for (i_lt, i_t), (j_lt, j_t) in itertools.combinations(basis, 2):
        s = _spoly(i_lt, i_t, j_lt, j_t, order)
        if _reduce(s, basis, order, counter):
            return False
    return True


def ideal_membership(p: Polynomial, gb: GroebnerBasis) -> bool:
    """True iff division of p by the basis leaves zero remainder."""
    if not p.exact:
        raise ValueError("ideal_membership needs exact coefficients")
    basis = [(_leading(dict(g.terms), gb.order), dict(g.terms)) for g in gb.basis]
    counter = [0, 10 * PAIR_BUDGET]
    return not _reduce(dict(p.terms), basis, gb.order, counter)


def elimination_ideal(gb: GroebnerBasis, drop_var: int) -> list:
    """Basis members free of ``drop_var``; requires drop_var highest in the order."""
    if gb.order[0] != drop_var:
        raise ValueError("elimination needs the dropped variable highest in the lex order")
    return [p for p in gb.basis if all(e[drop_var] == 0 for e in p.terms)]


# ---------------------------------------------------------------------------
# approximate projection of a TCI onto {x_n = 0}


SHEAR_STEPS = [Fraction(0)] + [s * Fraction(1, 10**k) for k in (1, 2, 3, 4) for s in (1, -1)]


def _has_pure_power(p: Polynomial, var: int) -> bool:
    return any(e[var] >= 1 and all(e[j] == 0 for j in range(len(e)) if j != var) for e in p.terms)


def _find_shear(gens: list, n: int, declared_dim: int, seed: int):
    """Shear parameters making the first generator carry a pure x_n power.

    Lexicographic scan over the grid {0, +-10^-k}; the sheared system must
    also recertify as a transverse complete intersection.
    """
    if any(_has_pure_power(p, n - 1) for p in gens):
        return gens, tuple(Fraction(0) for _ in range(n - 1))
    for deltas in itertools.product(SHEAR_STEPS, repeat=n - 1):
        if all(d == 0 for d in deltas):
            continue
        f = gens[0].shift_args(deltas)
        if not _has_pure_power(f, n - 1):
            continue
        cand = Variety(PolySystem([f] + gens[1:]), declared_dim)
        ok, _ = is_tci(cand, seed=seed)
        if ok:
            return [f] + gens[1:], deltas
    raise TciCertificationError("no shear in the search grid produced a pure power of x_n")


@dataclass(frozen=True)
class ProjectionResult:
    W: Variety
    audit: float
    shear: tuple
    basis: GroebnerBasis
    achieved_degree: int
    achieved_count: int
    budget_exceeded: bool

    def __iter__(self):
        return iter((self.W, self.audit))


def approx_projection(z: TCI, s: float, seed: int = 0, sample_count: int = 200,
                      deg_ct_budget: int = 64) -> ProjectionResult:
    """Project U = Z cap {1 <= |x| < 2, |x_n| < s} onto the hyperplane x_n = 0.

    Computes the first elimination ideal of the (possibly sheared) generators
    via a lex Groebner basis with x_n highest, builds W = Z(I') in R^{n-1},
    and audits dist(U, W) < 2s on sampled points.  The achieved degree/count
    of W are reported and flagged against ``deg_ct_budget`` (the theoretical
    bound exists but is not explicit, so it is logged, not asserted).
    """
    if not 0 < s < 0.5:
        raise ValueError("need 0 < s < 1/2")
    n = z.nvars
    gens = list(z.generators)
    for p in gens:
        if not p.exact:
            raise ValueError("approx_projection needs an exact-coefficient TCI")
    gens2, shear = _find_shear(gens, n, z.declared_dim, seed)
    order = (n - 1,) + tuple(range(n - 1))
    gb = buchberger(PolySystem(gens2), var_order=order)
    kept = elimination_ideal(gb, n - 1)
    if kept:
        w_gens = [_strip_last_var(p) for p in kept]
    else:
        w_gens = [Polynomial.zero(n - 1)]
    W = Variety(PolySystem(w_gens), min(z.declared_dim, n - 2) if kept else n - 1)

    u_pts = _slab_samples(z, s, sample_count, seed)
    if u_pts.shape[0] == 0:
        raise SamplingError("no samples of Z in the slab {1 <= |x| < 2, |x_n| < s}")
    w_res = sample_variety(W, region=("box", [-3.0] * (n - 1), [3.0] * (n - 1)),
                           count=max(500, 3 * sample_count), seed=seed + 1)
    w_pts = np.hstack([w_res.points, np.zeros((len(w_res), 1))]) if len(w_res) else np.empty((0, n))
    audit = _audit_distance(u_pts, w_pts, W)
    if audit >= 2 * s:
        raise TciCertificationError(f"projection audit {audit:.4g} >= 2s = {2*s:.4g}")
    deg = W.degree
    ct = W.count
    return ProjectionResult(W=W, audit=audit, shear=shear, basis=gb,
                            achieved_degree=deg, achieved_count=ct,
                            budget_exceeded=bool(deg + ct > deg_ct_budget))


def _strip_last_var(p: Polynomial) -> Polynomial:
    return Polynomial(p.nvars - 1, {e[:-1]: c for e, c in p.terms.items()})


def _slab_samples(z: Variety, s: float, count: int, seed: int) -> np.ndarray:
    res = sample_variety(z, region=("annulus", 1.0), count=6 * count, seed=seed)
    if len(res) == 0:
        return res.points
    pts = res.points
    mask = (np.linalg.norm(pts, axis=1) >= 1.0) & (np.linalg.norm(pts, axis=1) < 2.0) & (np.abs(pts[:, -1]) < s)
    return pts[mask][:count]


def _audit_distance(u_pts: np.ndarray, w_pts: np.ndarray, W: Variety) -> float:
    from .varieties import newton_project_batch

    if w_pts.shape[0]:
        d2 = ((u_pts[:, None, :] - w_pts[None, :, :]) ** 2).sum(axis=2)
        dist = np.sqrt(d2.min(axis=1))
    else:
        dist = np.full(u_pts.shape[0], np.inf)
    # Newton-polish every point against W inside the hyperplane for tight witnesses
    proj, ok = newton_project_batch(W, u_pts[:, :-1])
    polished = np.sqrt(((u_pts[:, :-1] - proj) ** 2).sum(axis=1) + u_pts[:, -1] ** 2)
    dist[ok] = np.minimum(dist[ok], polished[ok])
    return float(dist.max())
