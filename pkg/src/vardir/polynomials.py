"""Sparse multivariate polynomials over exact rationals or 64-bit floats.

A polynomial is stored as a dict mapping exponent tuples to nonzero
coefficients.  Two coefficient modes exist and never mix implicitly:

  exact mode  -- every coefficient is a ``fractions.Fraction`` (used by the
                 elimination module, where Buchberger needs exactness),
  float mode  -- every coefficient is a Python float (used everywhere else).

Conversion between the modes is explicit via ``to_float`` / ``to_exact``.
Storage/iteration order is graded lex (ascending total degree, then
descending lex on the exponent tuple); the elimination module imposes its
own pure-lex order externally.

Text format (round-trips bit-exactly in exact mode): one term per line,
``num/den e1 e2 ... en``; float coefficients are written with ``repr`` and
carry no slash.  Systems are blank-line-separated blocks of terms.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

Exponent = tuple[int, ...]

NEG_INF = float("-inf")


def monomials_upto(nvars: int, degree: int) -> list[Exponent]:
    """All exponent tuples of total degree 1..degree, graded-lex ordered.

    Ascending total degree; within a degree, descending lex, so for two
    variables and degree 2 the order is x, y, x^2, xy, y^2.
    """
    out: list[Exponent] = []
    for d in range(1, degree + 1):
        level = sorted(_exponents_of_degree(nvars, d), reverse=True)
        out.extend(level)
    return out


def _exponents_of_degree(nvars: int, d: int) -> list[Exponent]:
    if nvars == 1:
        return [(d,)]
    out = []
    for first in range(d, -1, -1):
        for rest in _exponents_of_degree(nvars - 1, d - first):
            out.append((first,) + rest)
    return out


class Polynomial:
    """Immutable sparse polynomial in ``nvars`` real variables."""

    __slots__ = ("nvars", "terms", "exact", "_hash")

    def __init__(self, nvars: int, terms: Mapping[Exponent, object] | Iterable[tuple[Exponent, object]]):
        if nvars < 1:
            raise ValueError("nvars must be >= 1")
        items = terms.items() if isinstance(terms, Mapping) else terms
        clean: dict[Exponent, object] = {}
        exact = None
        for exps, coeff in items:
            exps = tuple(int(e) for e in exps)
            if len(exps) != nvars:
                raise ValueError(f"exponent tuple {exps} does not match nvars={nvars}")
            if any(e < 0 for e in exps):
                raise ValueError(f"negative exponent in {exps}")
            is_exact = isinstance(coeff, (Fraction, int))
            if exact is None:
                exact = is_exact
            elif exact != is_exact:
                raise ValueError("mixed exact/float coefficients; convert explicitly")
            coeff = Fraction(coeff) if is_exact else float(coeff)
            if coeff == 0:
                continue
            if exps in clean:
                raise ValueError(f"duplicate exponent tuple {exps}")
            clean[exps] = coeff
        object.__setattr__(self, "nvars", nvars)
        object.__setattr__(self, "terms", clean)
        object.__setattr__(self, "exact", bool(exact) if clean else (exact if exact is not None else True))
        object.__setattr__(self, "_hash", None)

    def __setattr__(self, name, value):
        raise AttributeError("Polynomial is immutable")

    # -- constructors -------------------------------------------------

    @classmethod
    def zero(cls, nvars: int, exact: bool = True) -> "Polynomial":
        p = cls(nvars, {})
        object.__setattr__(p, "exact", exact)
        return p

    @classmethod
    def constant(cls, nvars: int, value) -> "Polynomial":
        return cls(nvars, {(0,) * nvars: value})

    @classmethod
    def variable(cls, nvars: int, idx: int, exact: bool = True) -> "Polynomial":
        if not 0 <= idx < nvars:
            raise ValueError(f"variable index {idx} out of range")
        exps = [0] * nvars
        exps[idx] = 1
        one = Fraction(1) if exact else 1.0
        return cls(nvars, {tuple(exps): one})

    @classmethod
    def from_coeff_vector(cls, nvars: int, degree: int, coeffs: Sequence, constant=0.0) -> "Polynomial":
        """Polynomial from a coefficient vector in ``monomials_upto`` order."""
        monos = monomials_upto(nvars, degree)
        if len(coeffs) != len(monos):
            raise ValueError("coefficient vector length mismatch")
        terms = {m: c for m, c in zip(monos, coeffs) if c != 0}
        if constant != 0:
            terms[(0,) * nvars] = constant
        return cls(nvars, terms)

    # -- basic queries -------------------------------------------------

    @property
    def degree(self) -> float:
        """Total degree; the zero polynomial has degree -inf."""
        if not self.terms:
            return NEG_INF
        return max(sum(e) for e in self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def sorted_terms(self) -> list[tuple[Exponent, object]]:
        """Terms in graded-lex order, leading term last."""
        return sorted(self.terms.items(), key=lambda t: (sum(t[0]), tuple(-e for e in t[0])))

    # -- arithmetic ----------------------------------------------------

    def _check_compatible(self, other: "Polynomial") -> None:
        if self.nvars != other.nvars:
            raise ValueError("nvars mismatch")
        if self.terms and other.terms and self.exact != other.exact:
            raise ValueError("mixed exact/float polynomials; convert explicitly")

    def __add__(self, other: "Polynomial") -> "Polynomial":
        self._check_compatible(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            s = out.get(e, 0) + c
            if s == 0:
                out.pop(e, None)
            else:
                out[e] = s
        p = Polynomial(self.nvars, out)
        if not out:
            object.__setattr__(p, "exact", self.exact if self.terms else other.exact)
        return p

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-other)

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        self._check_compatible(other)
        out: dict[Exponent, object] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                s = out.get(e, 0) + c1 * c2
                if s == 0:
                    out.pop(e, None)
                else:
                    out[e] = s
        return Polynomial(self.nvars, out)

    def scale(self, k) -> "Polynomial":
        if k == 0:
            return Polynomial.zero(self.nvars, exact=self.exact)
        return Polynomial(self.nvars, {e: c * k for e, c in self.terms.items()})

    def __pow__(self, k: int) -> "Polynomial":
        if k < 0:
            raise ValueError("negative power")
        result = Polynomial.constant(self.nvars, Fraction(1) if self.exact else 1.0)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def __eq__(self, other) -> bool:
        return isinstance(other, Polynomial) and self.nvars == other.nvars and self.terms == other.terms

    def __hash__(self):
        h = object.__getattribute__(self, "_hash")
        if h is None:
            h = hash((self.nvars, frozenset(self.terms.items())))
            object.__setattr__(self, "_hash", h)
        return h

    def __repr__(self) -> str:
        if not self.terms:
            return "Polynomial(0)"
        bits = []
        for e, c in reversed(self.sorted_terms()):
            mono = "*".join(f"x{i}^{k}" if k > 1 else f"x{i}" for i, k in enumerate(e) if k)
            bits.append(f"{c}" + (f"*{mono}" if mono else ""))
        return "Polynomial(" + " + ".join(bits) + ")"

    # -- calculus and evaluation ----------------------------------------

    def partial(self, idx: int) -> "Polynomial":
        out = {}
        for e, c in self.terms.items():
            k = e[idx]
            if k == 0:
                continue
            ne = list(e)
            ne[idx] = k - 1
            out[tuple(ne)] = c * k
        p = Polynomial(self.nvars, out)
        if not out:
            object.__setattr__(p, "exact", self.exact)
        return p

    def gradient_polys(self) -> list["Polynomial"]:
        return [self.partial(i) for i in range(self.nvars)]

    def evaluate(self, x: Sequence):
        if len(x) != self.nvars:
            raise ValueError(f"point dimension {len(x)} != nvars {self.nvars}")
        total = 0
        for e, c in self.terms.items():
            v = c
            for xi, k in zip(x, e):
                if k:
                    v = v * xi**k
            total = total + v
        return total

    def evaluate_many(self, pts: np.ndarray) -> np.ndarray:
        """Vectorized float evaluation at an (k, nvars) array of points."""
        pts = np.asarray(pts, dtype=float)
        if pts.ndim == 1:
            pts = pts[None, :]
        vals = np.zeros(pts.shape[0])
        for e, c in self.terms.items():
            t = np.full(pts.shape[0], float(c))
            for i, k in enumerate(e):
                if k:
                    t *= pts[:, i] ** k
            vals += t
        return vals

    def compose(self, args: Sequence["Polynomial"]) -> "Polynomial":
        """Substitute ``args[i]`` for variable i; all args share one nvars."""
        if len(args) != self.nvars:
            raise ValueError("need one replacement polynomial per variable")
        nv = args[0].nvars
        one = Fraction(1) if self.exact else 1.0
        out = Polynomial.zero(nv, exact=self.exact)
        for e, c in self.terms.items():
            term = Polynomial.constant(nv, c * one)
            for arg, k in zip(args, e):
                if k:
                    term = term * arg**k
            out = out + term
        return out

    def shift_args(self, deltas: Sequence) -> "Polynomial":
        """p(x1 + d1*xn, ..., x_{n-1} + d_{n-1}*xn, xn) for the shear step."""
        n = self.nvars
        if len(deltas) != n - 1:
            raise ValueError("need nvars-1 shear parameters")
        xn = Polynomial.variable(n, n - 1, exact=self.exact)
        args = []
        for i in range(n - 1):
            args.append(Polynomial.variable(n, i, exact=self.exact) + xn.scale(deltas[i]))
        args.append(xn)
        return self.compose(args)

    # -- conversions -----------------------------------------------------

    def to_float(self) -> "Polynomial":
        p = Polynomial(self.nvars, {e: float(c) for e, c in self.terms.items()})
        if not p.terms:
            object.__setattr__(p, "exact", False)
        return p

    def to_exact(self) -> "Polynomial":
        p = Polynomial(self.nvars, {e: Fraction(c) for e, c in self.terms.items()})
        if not p.terms:
            object.__setattr__(p, "exact", True)
        return p

    # -- text format -----------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for e, c in self.sorted_terms():
            if isinstance(c, Fraction):
                coeff = f"{c.numerator}/{c.denominator}"
            else:
                coeff = repr(c)
            lines.append(coeff + " " + " ".join(str(k) for k in e))
        return "\n".join(lines)

    @classmethod
    def from_text(cls, text: str, nvars: int | None = None) -> "Polynomial":
        terms = []
        for line in text.strip().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            toks = line.split()
            coeff = Fraction(toks[0]) if "/" in toks[0] else float(toks[0])
            exps = tuple(int(t) for t in toks[1:])
            if nvars is None:
                nvars = len(exps)
            terms.append((exps, coeff))
        if nvars is None:
            raise ValueError("cannot infer nvars from empty text")
        return cls(nvars, terms)


class PolySystem:
    """Nonempty list of polynomials sharing nvars."""

    __slots__ = ("polys", "nvars")

    def __init__(self, polys: Sequence[Polynomial]):
        polys = list(polys)
        if not polys:
            raise ValueError("PolySystem must be nonempty")
        nvars = polys[0].nvars
        if any(p.nvars != nvars for p in polys):
            raise ValueError("inconsistent nvars in PolySystem")
        object.__setattr__(self, "polys", polys)
        object.__setattr__(self, "nvars", nvars)

    def __setattr__(self, name, value):
        raise AttributeError("PolySystem is immutable")

    def __len__(self) -> int:
        return len(self.polys)

    def __iter__(self):
        return iter(self.polys)

    def __getitem__(self, i) -> Polynomial:
        return self.polys[i]

    @property
    def max_degree(self) -> float:
        return max(p.degree for p in self.polys)

    def to_float(self) -> "PolySystem":
        return PolySystem([p.to_float() for p in self.polys])

    def to_text(self) -> str:
        return "\n\n".join(p.to_text() for p in self.polys)

    @classmethod
    def from_text(cls, text: str) -> "PolySystem":
        blocks = [b for b in text.strip().split("\n\n") if b.strip()]
        polys = [Polynomial.from_text(b) for b in blocks]
        return cls(polys)


def evaluate_with_gradient(p: Polynomial, x: Sequence):
    """Value and gradient of p at x; exact when both p and x are exact."""
    if len(x) != p.nvars:
        raise ValueError(f"point dimension {len(x)} != nvars {p.nvars}")
    value = p.evaluate(x)
    grad = [p.partial(i).evaluate(x) for i in range(p.nvars)]
    return value, grad


def jacobian_matrix(sys: PolySystem, x: Sequence) -> np.ndarray:
    """Float Jacobian of the system at x, one gradient per row."""
    rows = []
    for p in sys:
        _, g = evaluate_with_gradient(p, x)
        rows.append([float(gi) for gi in g])
    return np.array(rows, dtype=float)


def jacobian_rank(sys: PolySystem, x: Sequence, tol: float = 1e-8) -> tuple[int, float]:
    """Numerical rank of the Jacobian at x and the smallest retained singular value.

    The cutoff is ``tol`` relative to the largest singular value, matching the
    nonsingularity notion used for transverse-intersection certificates.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    jac = jacobian_matrix(sys, x)
    sv = np.linalg.svd(jac, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0, 0.0
    rank = int(np.sum(sv > tol * sv[0]))
    min_sv = float(sv[rank - 1]) if rank > 0 else 0.0
    return rank, min_sv


def veronese_lift(x: Sequence, d: int) -> np.ndarray:
    """All monomials of degree 1..d at x, graded-lex ordered.

    The defining property: for any polynomial p of degree <= d with zero
    constant term, p(x) is the dot product of p's coefficient vector (in
    ``monomials_upto`` order) with this lift.
    """
    if d < 1:
        raise ValueError("lift degree must be >= 1")
    x = np.asarray(x, dtype=float)
    out = np.empty(len(monomials_upto(len(x), d)))
    for j, e in enumerate(monomials_upto(len(x), d)):
        v = 1.0
        for xi, k in zip(x, e):
            if k:
                v *= xi**k
        out[j] = v
    return out


def veronese_lift_many(pts: np.ndarray, d: int) -> np.ndarray:
    """Vectorized ``veronese_lift`` for an (k, n) array; returns (k, M)."""
    pts = np.asarray(pts, dtype=float)
    monos = monomials_upto(pts.shape[1], d)
    out = np.empty((pts.shape[0], len(monos)))
    for j, e in enumerate(monos):
        col = np.ones(pts.shape[0])
        for i, k in enumerate(e):
            if k:
                col = col * pts[:, i] ** k
        out[:, j] = col
    return out


def veronese_dim(n: int, d: int) -> int:
    return math.comb(n + d, d) - 1
