"""Sparse polynomials in three variables and vector calculus on them.

Coefficients may be ``int``, ``fractions.Fraction`` or ``float``; arithmetic
stays exact as long as the inputs are exact.
"""
from __future__ import annotations

import math
from fractions import Fraction
from itertools import product

import numpy as np

from .errors import DegreeOverflowError

MAX_DEGREE = 8

_ZERO3 = (0, 0, 0)


def _is_zero(c):
    return c == 0


class Poly3:
    """Polynomial in (x, y, z) stored as ``{(i, j, k): coeff}``.

    Zero coefficients are never stored. Instances are treated as immutable.
    """

    __slots__ = ("_terms",)

    def __init__(self, terms=None):
        clean = {}
        if terms:
            for exps, c in terms.items():
                exps = tuple(int(e) for e in exps)
                if len(exps) != 3 or min(exps) < 0:
                    raise ValueError(f"bad exponent triple {exps!r}")
                if _is_zero(c):
                    continue
                clean[exps] = clean.get(exps, 0) + c
                if _is_zero(clean[exps]):
                    del clean[exps]
        self._terms = clean

    # -- construction -------------------------------------------------
    @classmethod
    def constant(cls, c):
        return cls({_ZERO3: c})

    @classmethod
    def monomial(cls, i, j, k, c=1):
        return cls({(i, j, k): c})

    @classmethod
    def var(cls, axis):
        e = [0, 0, 0]
        e[axis] = 1
        return cls({tuple(e): 1})

    # -- inspection ---------------------------------------------------
    @property
    def terms(self):
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def coeff(self, i, j, k):
        return self._terms.get((i, j, k), 0)

    @property
    def degree(self):
        if not self._terms:
            return -1
        return max(sum(e) for e in self._terms)

    def is_zero(self):
        return not self._terms

    def homogeneous(self, d):
        return Poly3({e: c for e, c in self._terms.items() if sum(e) == d})

    def truncate(self, max_degree):
        return Poly3({e: c for e, c in self._terms.items() if sum(e) <= max_degree})

    def check_degree(self, max_degree=MAX_DEGREE):
        if self.degree > max_degree:
            raise DegreeOverflowError(
                f"polynomial degree {self.degree} exceeds the bound {max_degree}"
            )
        return self

    def __eq__(self, other):
        if isinstance(other, Poly3):
            return self._terms == other._terms
        if other == 0:
            return not self._terms
        return NotImplemented

    def __hash__(self):
        return hash(frozenset(self._terms.items()))

    def __repr__(self):
        if not self._terms:
            return "Poly3(0)"
        parts = []
        for e in sorted(self._terms, key=lambda e: (sum(e), e)):
            mono = "*".join(f"{v}^{p}" if p > 1 else v for v, p in zip("xyz", e) if p)
            parts.append(f"{self._terms[e]}" + (f"*{mono}" if mono else ""))
        return "Poly3(" + " + ".join(parts) + ")"

    # -- arithmetic ---------------------------------------------------
    def __add__(self, other):
        if not isinstance(other, Poly3):
            other = Poly3.constant(other)
        out = dict(self._terms)
        for e, c in other._terms.items():
            out[e] = out.get(e, 0) + c
        return Poly3(out)

    __radd__ = __add__

    def __neg__(self):
        return Poly3({e: -c for e, c in self._terms.items()})

    def __sub__(self, other):
        if not isinstance(other, Poly3):
            other = Poly3.constant(other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Poly3):
            return Poly3({e: c * other for e, c in self._terms.items()})
        out = {}
        for (e1, c1), (e2, c2) in product(self._terms.items(), other._terms.items()):
            e = (e1[0] + e2[0], e1[1] + e2[1], e1[2] + e2[2])
            out[e] = out.get(e, 0) + c1 * c2
        return Poly3(out)

    __rmul__ = __mul__

    def __pow__(self, n):
        result = Poly3.constant(1)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def map_coeffs(self, fn):
        return Poly3({e: fn(c) for e, c in self._terms.items()})

    def to_float(self):
        return self.map_coeffs(float)

    def chop(self, tol):
        """Drop coefficients with ``abs(c) <= tol``."""
        return Poly3({e: c for e, c in self._terms.items() if abs(c) > tol})

    # -- calculus -----------------------------------------------------
    def diff(self, axis):
        out = {}
        for e, c in self._terms.items():
            p = e[axis]
            if p == 0:
                continue
            ne = list(e)
            ne[axis] = p - 1
            out[tuple(ne)] = c * p
        return Poly3(out)

    def integrate(self, axis):
        """Antiderivative in ``axis`` vanishing on the plane ``X[axis] = 0``."""
        out = {}
        for e, c in self._terms.items():
            ne = list(e)
            ne[axis] = e[axis] + 1
            out[tuple(ne)] = c * Fraction(1, ne[axis]) if _exact(c) else c / ne[axis]
        return Poly3(out)

    def restrict(self, axis):
        """Set ``X[axis] = 0``."""
        return Poly3({e: c for e, c in self._terms.items() if e[axis] == 0})

    def gradient(self):
        return tuple(self.diff(a) for a in range(3))

    def hessian(self):
        g = self.gradient()
        return tuple(tuple(g[a].diff(b) for b in range(3)) for a in range(3))

    # -- substitution and evaluation ---------------------------------
    def compose_affine(self, matrix, offset):
        """Return ``p(M @ X + offset)`` for a 3x3 ``matrix`` and 3-vector ``offset``."""
        images = []
        for a in range(3):
            img = Poly3.constant(offset[a])
            for b in range(3):
                img = img + Poly3.var(b) * matrix[a][b]
            images.append(img)
        powers = [[Poly3.constant(1)] for _ in range(3)]
        deg = max(self.degree, 0)
        for a in range(3):
            for _ in range(deg):
                powers[a].append(powers[a][-1] * images[a])
        out = Poly3()
        for (i, j, k), c in self._terms.items():
            out = out + powers[0][i] * powers[1][j] * powers[2][k] * c
        return out

    def __call__(self, x, y, z):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        shape = np.broadcast(x, y, z).shape
        if not self._terms:
            return np.zeros(shape)
        deg = [max(e[a] for e in self._terms) for a in range(3)]
        pw = []
        for v, d in zip((x, y, z), deg):
            col = [np.ones_like(v)]
            for _ in range(d):
                col.append(col[-1] * v)
            pw.append(col)
        out = np.zeros(shape)
        for (i, j, k), c in self._terms.items():
            out = out + float(c) * pw[0][i] * pw[1][j] * pw[2][k]
        return out

    def at(self, point):
        return float(self(*point))


def _exact(c):
    return isinstance(c, (int, Fraction)) and not isinstance(c, bool)


def as_number(text):
    """Parse a decimal string exactly (``Fraction``) when possible."""
    if isinstance(text, (int, Fraction)):
        return Fraction(text)
    if isinstance(text, float):
        return text
    s = str(text).strip()
    try:
        return Fraction(s)
    except ValueError:
        return float(s)


def curl(A, max_degree=MAX_DEGREE):
    """Curl of a polynomial vector potential, ``B = rot A``."""
    for comp in A:
        comp.check_degree(max_degree)
    A1, A2, A3 = A
    return (
        A3.diff(1) - A2.diff(2),
        A1.diff(2) - A3.diff(0),
        A2.diff(0) - A1.diff(1),
    )


def div(F):
    return F[0].diff(0) + F[1].diff(1) + F[2].diff(2)


def norm_sq(F):
    return F[0] * F[0] + F[1] * F[1] + F[2] * F[2]


def transform_vector_field(F, rotation, translation):
    """Components of ``F`` in the frame ``X' = R (X + t)``.

    Returns ``F'(X') = R F(R^T X' - t)``; exact for exact ``rotation``.
    """
    R = [[rotation[a][b] for b in range(3)] for a in range(3)]
    Rt = [[R[b][a] for b in range(3)] for a in range(3)]
    offset = [-translation[a] for a in range(3)]
    pulled = [comp.compose_affine(Rt, offset) for comp in F]
    out = []
    for a in range(3):
        acc = Poly3()
        for b in range(3):
            if R[a][b] != 0:
                acc = acc + pulled[b] * R[a][b]
        out.append(acc)
    return tuple(out)


def radial_gauge(D):
    """Potential ``chi`` with ``grad chi = D`` when ``curl D = 0``.

    Uses the ray integral ``chi(X) = int_0^1 D(tX) . X dt`` termwise; for a
    field whose curl vanishes only to some order the identity holds to that
    order.
    """
    out = Poly3()
    for axis, comp in enumerate(D):
        for e, c in comp.items():
            d = sum(e) + 1
            ne = list(e)
            ne[axis] += 1
            coef = c * Fraction(1, d) if _exact(c) else c / d
            out = out + Poly3({tuple(ne): coef})
    return out


def monomials_of_degree(d):
    return [(i, j, d - i - j) for i in range(d + 1) for j in range(d - i + 1)]


def multinomial_index(e):
    """Sorted 1-based index triple notation: x^2 z -> (1, 1, 3)."""
    out = []
    for axis, p in enumerate(e):
        out.extend([axis + 1] * p)
    return tuple(out)


def factorial_ratio(a, k):
    """a! / (a-k)!"""
    return math.perm(a, k)
