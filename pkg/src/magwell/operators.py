"""Differential operators with polynomial coefficients in three variables.

A :class:`PolyDiffOp` is a finite sum of normal-ordered monomials
``x^a D_x^b  eta^c D_eta^d  z^e D_z^f`` with ``D = -i d/d(variable)``; position
factors stand to the left of derivative factors within each variable, and
different variables commute.  The same class represents operators in
``(x, y, z)`` before the partial Fourier transform (slot 1 is then ``y``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConstructionError, DegreeOverflowError, NotSecondOrder
from .hermite import HermiteBasis, HermiteExpansion, TensorHermiteExpansion, apply_rule

VARS = ("x", "eta", "z")
MAX_POSITION_DEGREE = 8
MAX_DERIVATIVE_ORDER = 4


@lru_cache(maxsize=None)
def _product_1d(a1, b1, a2, b2):
    """``(t^a1 D^b1)(t^a2 D^b2)`` as a normal-ordered list ``[(a, b, coeff)]``."""
    out = []
    for k in range(min(b1, a2) + 1):
        c = math.comb(b1, k) * (-1j) ** k * math.perm(a2, k)
        out.append((a1 + a2 - k, b1 + b2 - k, c))
    return tuple(out)


@lru_cache(maxsize=None)
def _adjoint_1d(a, b):
    """Formal adjoint of ``t^a D^b`` (real coefficient), i.e. ``D^b t^a`` normal-ordered."""
    return _product_1d(0, b, a, 0)


class PolyDiffOp:
    """Sum of ``coeff * x^a D_x^b eta^c D_eta^d z^e D_z^f`` keyed by ``(a, b, c, d, e, f)``."""

    __slots__ = ("terms",)

    def __init__(self, terms=None, tol=0.0):
        clean = {}
        for k, c in (terms or {}).items():
            if abs(c) > tol:
                clean[tuple(k)] = complex(c)
        self.terms = clean

    # -- generators -------------------------------------------------------
    @classmethod
    def scalar(cls, c):
        return cls({(0,) * 6: c})

    @classmethod
    def generator(cls, name):
        """One of ``x, Dx, eta, Deta, z, Dz``; ``y``/``Dy`` alias slot 1."""
        names = {"x": 0, "Dx": 1, "eta": 2, "Deta": 3, "y": 2, "Dy": 3, "z": 4, "Dz": 5}
        k = [0] * 6
        k[names[name]] = 1
        return cls({tuple(k): 1})

    # -- algebra -------------------------------------------------------------
    def __add__(self, other):
        if not isinstance(other, PolyDiffOp):
            other = PolyDiffOp.scalar(other)
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, 0) + c
        return PolyDiffOp({k: c for k, c in out.items() if c != 0})

    __radd__ = __add__

    def __neg__(self):
        return PolyDiffOp({k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other if isinstance(other, PolyDiffOp) else -other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, PolyDiffOp):
            return PolyDiffOp({k: c * other for k, c in self.terms.items()})
        out = {}
        for k1, c1 in self.terms.items():
            for k2, c2 in other.terms.items():
                parts = [_product_1d(k1[2 * v], k1[2 * v + 1], k2[2 * v], k2[2 * v + 1])
                         for v in range(3)]
                for ax, bx, cx in parts[0]:
                    for ae, be, ce in parts[1]:
                        for az, bz, cz in parts[2]:
                            key = (ax, bx, ae, be, az, bz)
                            out[key] = out.get(key, 0) + c1 * c2 * cx * ce * cz
        return PolyDiffOp({k: c for k, c in out.items() if c != 0})

    def __rmul__(self, other):
        return self * other

    def __pow__(self, n):
        out = PolyDiffOp.scalar(1)
        for _ in range(n):
            out = out * self
        return out

    def anticommutator(self, other):
        return self * other + other * self

    def commutator(self, other):
        return self * other - other * self

    def adjoint(self):
        out = PolyDiffOp()
        for k, c in self.terms.items():
            parts = [_adjoint_1d(k[2 * v], k[2 * v + 1]) for v in range(3)]
            acc = {}
            for ax, bx, cx in parts[0]:
                for ae, be, ce in parts[1]:
                    for az, bz, cz in parts[2]:
                        acc[(ax, bx, ae, be, az, bz)] = np.conj(c) * cx * ce * cz
            out = out + PolyDiffOp(acc)
        return out

    # -- inspection -------------------------------------------------------------
    def chop(self, tol):
        return PolyDiffOp(self.terms, tol=tol)

    def max_abs_coeff(self):
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def distance(self, other):
        return (self - other).max_abs_coeff()

    def is_symmetric(self, tol=1e-10):
        scale = max(1.0, self.max_abs_coeff())
        return self.distance(self.adjoint()) <= tol * scale

    @property
    def position_degree(self):
        return max((k[0] + k[2] + k[4] for k in self.terms), default=0)

    @property
    def derivative_order(self):
        return max((k[1] + k[3] + k[5] for k in self.terms), default=0)

    def check_caps(self, max_position=MAX_POSITION_DEGREE, max_derivative=MAX_DERIVATIVE_ORDER):
        if self.position_degree > max_position or self.derivative_order > max_derivative:
            raise DegreeOverflowError(
                f"operator has position degree {self.position_degree} and derivative order "
                f"{self.derivative_order}; caps are {max_position} and {max_derivative}"
            )
        return self

    def parity_split(self, slot=0):
        """Even and odd parts under ``t -> -t`` in one variable (``t^a D^b`` has parity a+b)."""
        even = {k: c for k, c in self.terms.items() if (k[2 * slot] + k[2 * slot + 1]) % 2 == 0}
        odd = {k: c for k, c in self.terms.items() if (k[2 * slot] + k[2 * slot + 1]) % 2 == 1}
        return PolyDiffOp(even), PolyDiffOp(odd)

    def __repr__(self):
        return f"PolyDiffOp({len(self.terms)} terms)"

    def pretty(self, tol=1e-14):
        def mono(k):
            names = ("x", "Dx", "eta", "Deta", "z", "Dz")
            return "".join(f"{n}^{p}" if p > 1 else n for n, p in zip(names, k) if p) or "1"

        return " + ".join(f"({c:.6g}){mono(k)}" for k, c in sorted(self.terms.items()) if abs(c) > tol)

    # -- substitution -------------------------------------------------------------
    def substitute(self, images):
        """Image under the algebra map sending generators ``(x, Dx, y, Dy, z, Dz)`` to ``images``.

        The caller is responsible for ``images`` preserving the canonical
        commutation relations; the product is then well defined on normal-ordered words.
        """
        cache = {}

        def power(g, p):
            key = (g, p)
            if key not in cache:
                cache[key] = PolyDiffOp.scalar(1) if p == 0 else power(g, p - 1) * images[g]
            return cache[key]

        out = PolyDiffOp()
        for k, c in self.terms.items():
            term = PolyDiffOp.scalar(c)
            for g, p in enumerate(k):
                if p:
                    term = term * power(g, p)
            out = out + term
        return out


X, DX, ETA, DETA, Z, DZ = (PolyDiffOp.generator(n) for n in ("x", "Dx", "eta", "Deta", "z", "Dz"))


# -- application to Hermite expansions ------------------------------------------
_MATRIX_CACHE = {}


def _monomial_matrix(a, b, n, lam):
    """Matrix of ``t^a D^b`` from ``n`` modes to ``n + a + b`` modes."""
    key = (a, b, n, lam)
    M = _MATRIX_CACHE.get(key)
    if M is None:
        M = np.eye(n, dtype=complex)
        for _ in range(b):
            M = apply_rule(M, 0, "D", lam)
        for _ in range(a):
            M = apply_rule(M, 0, "t", lam)
        _MATRIX_CACHE[key] = M
    return M


def _apply_axis(c, axis, M, out_len):
    r = np.tensordot(M, c, axes=([1], [axis]))
    r = np.moveaxis(r, 0, axis)
    if r.shape[axis] < out_len:
        pad = [(0, 0)] * r.ndim
        pad[axis] = (0, out_len - r.shape[axis])
        r = np.pad(r, pad)
    return r


def apply(op: PolyDiffOp, u: TensorHermiteExpansion) -> TensorHermiteExpansion:
    """Exact image ``op u`` of a tensor expansion in ``(x, eta, z)``."""
    if u.coeffs.ndim != 3:
        raise ValueError("operators act on three-variable expansions")
    c = u.coeffs
    n = c.shape
    lam = [b.lam for b in u.bases]
    grow = [max((k[2 * v] + k[2 * v + 1] for k in op.terms), default=0) for v in range(3)]
    shape = tuple(n[v] + grow[v] for v in range(3))
    out = np.zeros(shape, dtype=complex)
    stage_x = {}
    stage_xe = {}
    for k, coef in op.terms.items():
        kx, ke, kz = k[0:2], k[2:4], k[4:6]
        if kx not in stage_x:
            stage_x[kx] = _apply_axis(c, 0, _monomial_matrix(*kx, n[0], lam[0]), shape[0])
        kxe = kx + ke
        if kxe not in stage_xe:
            stage_xe[kxe] = _apply_axis(stage_x[kx], 1, _monomial_matrix(*ke, n[1], lam[1]), shape[1])
        out += coef * _apply_axis(stage_xe[kxe], 2, _monomial_matrix(*kz, n[2], lam[2]), shape[2])
    return TensorHermiteExpansion(u.bases, out, u.names)


def project(u: TensorHermiteExpansion, along, mode):
    """Coefficient of ``h_mode`` in variable ``along``: ``<u, h_mode> / ||h_mode||^2``."""
    return u.project(along, mode)


# -- the reduced operators --------------------------------------------------------
@dataclass(frozen=True)
class ReducedOperatorSet:
    """Operators of the expansion ``P0 + h^(1/2) P2 + h^(3/4) P3 + h P4`` (``P1 = 0``)."""

    b0: float
    P0t: PolyDiffOp
    P2t: PolyDiffOp
    P3t: PolyDiffOp
    P4t: PolyDiffOp

    def by_order(self, n):
        return {0: self.P0t, 1: PolyDiffOp(), 2: self.P2t, 3: self.P3t, 4: self.P4t}[n]

    def check(self, tol=1e-10):
        expected = DX * DX + X * X * self.b0**2
        if self.P0t.distance(expected) > tol:
            raise ConstructionError("P0 differs from Dx^2 + b0^2 x^2")
        for name in ("P2t", "P3t", "P4t"):
            op = getattr(self, name)
            op.check_caps()
            if not op.is_symmetric(tol):
                raise ConstructionError(f"{name} is not formally symmetric")
        return self


_NEEDED = ("c33", "c13", "c23", "r333", "beta", "alpha", "a23", "a33", "b13", "b23", "b33",
           "q333", "p333", "c11", "c12", "c22", "r133", "r233", "delta3")


def _coeff_table(coeffs):
    try:
        return {
            "b0": coeffs.b0,
            "c11": coeffs.c(1, 1), "c12": coeffs.c(1, 2), "c13": coeffs.c(1, 3),
            "c22": coeffs.c(2, 2), "c23": coeffs.c(2, 3), "c33": coeffs.c(3, 3),
            "a23": coeffs.a(2, 3), "a33": coeffs.a(3, 3),
            "b13": coeffs.b(1, 3), "b23": coeffs.b(2, 3), "b33": coeffs.b(3, 3),
            "r333": coeffs.r3(3, 3, 3), "r133": coeffs.r3(1, 3, 3), "r233": coeffs.r3(2, 3, 3),
            "q333": coeffs.q3(3, 3, 3), "p333": coeffs.p3(3, 3, 3),
            "delta3": float(coeffs.delta[2]),
            "alpha": [float(v) for v in coeffs.l1], "beta": [float(v) for v in coeffs.l2],
        }
    except (AttributeError, IndexError, KeyError, TypeError) as exc:
        raise ConstructionError(f"missing normal-form coefficient: {exc}") from exc


def build_reduced_ops(coeffs) -> ReducedOperatorSet:
    """Assemble the reduced operators from their closed-form expressions.

    ``Xs = x + eta/b0`` and ``Y = Dx/b0 + beta3 z^2/(2 b0) - Deta`` are the images
    of the original ``x`` and ``y``; ``Lz = Dz + beta3 x z``.
    """
    k = _coeff_table(coeffs)
    b0 = k["b0"]
    al2 = k["alpha"][1]
    be1, be2, be3 = k["beta"]
    Xs = X + ETA * (1 / b0)
    Y = DX * (1 / b0) + Z * Z * (be3 / (2 * b0)) - DETA
    Lz = DZ + X * Z * be3
    bx = X * b0
    z2, z3, z4 = Z**2, Z**3, Z**4

    P0 = DX * DX + X * X * b0**2
    P2 = X * Xs * z2 * (2 * b0 * k["c33"]) + Lz * Lz
    P3 = (
        X * Xs * Xs * Z * (2 * b0 * k["c13"])
        + (bx * Xs * Y * Z + Xs * Y * Z * bx) * (2 * k["c23"])
        + Xs * z3 * bx * (2 * k["r333"])
        + (Xs * Xs * be1 + Xs * Y * (2 * be2) - Y * Y * al2) * Lz
        + (Xs * k["b33"] - Y * k["a33"]) * (Lz * z2 + z2 * Lz)
    )
    S = (
        Xs**3 * (k["c11"] / 3)
        + Xs * Xs * Y * k["c12"]
        + Xs * Y * Y * k["c22"]
        + Xs * Xs * z2 * (k["r133"] / 2)
        + Xs * Y * z2 * k["r233"]
        + Xs * z4 * k["delta3"]
    )
    T = (
        Xs * Xs * Z * k["b13"]
        + Xs * Y * Z * (2 * k["b23"])
        - Y * Y * Z * k["a23"]
        + Xs * z3 * k["q333"]
        - Y * z3 * k["p333"]
    )
    U = (
        Xs * Xs * (be1 / 2)
        + Xs * Y * be2
        - Y * Y * (al2 / 2)
        + Xs * z2 * k["b33"]
        - Y * z2 * k["a33"]
    )
    P4 = bx * S + S * bx + Xs * Xs * z4 * k["c33"] ** 2 + Lz * T + T * Lz + U * U
    return ReducedOperatorSet(b0, P0, P2, P3, P4).check()


# -- independent route: rescale the normal-form potential and transform ----------
def _scaled_pieces(A, min_order):
    """Split ``h^(-1/2) A(h^(1/2) x, h^(1/2) y, h^(1/4) z)`` by powers ``h^(q/4)``."""
    out = {}
    for (i, j, e), c in A.items():
        q = 2 * i + 2 * j + e - 2
        if q < min_order:
            raise ConstructionError(f"potential term x^{i} y^{j} z^{e} has scaled order {q}")
        key = (i, 0, j, 0, e, 0)
        out.setdefault(q, PolyDiffOp())
        out[q] = out[q] + PolyDiffOp({key: float(c)})
    return out


def _series_mul(s1, s2, order):
    out = {}
    for p, a in s1.items():
        for q, b in s2.items():
            if p + q <= order:
                out[p + q] = out.get(p + q, PolyDiffOp()) + a * b
    return out


def rescaled_expansion(A2, A3, order=4):
    """Operators ``P_0..P_order`` in ``(x, y, z)`` from a potential ``(0, A2, A3)``."""
    Ly = {0: PolyDiffOp.generator("Dy")}
    for q, piece in _scaled_pieces(A2, 0).items():
        Ly[q] = Ly.get(q, PolyDiffOp()) - piece
    Lz = {1: PolyDiffOp.generator("Dz")}
    for q, piece in _scaled_pieces(A3, 1).items():
        Lz[q] = Lz.get(q, PolyDiffOp()) - piece
    P = {0: DX * DX}
    for s in (_series_mul(Ly, Ly, order), _series_mul(Lz, Lz, order)):
        for q, op in s.items():
            P[q] = P.get(q, PolyDiffOp()) + op
    return [P.get(n, PolyDiffOp()).chop(1e-15) for n in range(order + 1)]


def metaplectic_images(b0, beta3):
    """Images of ``(x, Dx, y, Dy, z, Dz)`` under Fourier in y, the shift ``x -> x - eta/b0``,
    and the gauge factor in ``eta z^2``."""
    return (
        X + ETA * (1 / b0),
        DX,
        DX * (1 / b0) + Z * Z * (beta3 / (2 * b0)) - DETA,
        ETA,
        Z,
        DZ - ETA * Z * (beta3 / b0),
    )


def derive_reduced_ops(coeffs) -> ReducedOperatorSet:
    """Same operators as :func:`build_reduced_ops`, derived mechanically from the potential."""
    b0 = coeffs.b0
    P = rescaled_expansion(coeffs.A2_poly, coeffs.A3_poly)
    if not P[1].max_abs_coeff() < 1e-14:
        raise ConstructionError("order-1/4 operator does not vanish")
    images = metaplectic_images(b0, float(coeffs.l2[2]))
    Pt = [p.substitute(images).chop(1e-15) for p in P]
    return ReducedOperatorSet(b0, Pt[0], Pt[2], Pt[3], Pt[4]).check()


# -- effective one-dimensional operator --------------------------------------------
@dataclass(frozen=True)
class SecondOrderOp1D:
    """``A D^2 + B (eta D + D eta) + C eta^2 + alpha D + beta eta + gamma``."""

    A: complex
    B: complex
    C: complex
    alpha: complex
    beta: complex
    gamma: complex
    residual: float = 0.0

    def real(self, tol=1e-8):
        vals = (self.A, self.B, self.C, self.alpha, self.beta, self.gamma)
        scale = max(1.0, max(abs(v) for v in vals))
        worst = max(abs(complex(v).imag) for v in vals)
        if worst > tol * scale:
            raise NotSecondOrder(f"effective operator has imaginary coefficient of size {worst:.3g}")
        return SecondOrderOp1D(*(complex(v).real for v in vals), residual=self.residual)

    def as_tuple(self):
        return (self.A, self.B, self.C, self.alpha, self.beta, self.gamma)

    def apply(self, chi: HermiteExpansion) -> HermiteExpansion:
        parts = _basis_images(chi)
        return sum((p * c for p, c in zip(parts, self.as_tuple())), start=0)


def _basis_images(chi):
    D2 = chi.apply_Dt().apply_Dt()
    sym = chi.apply_Dt().mul_t() + chi.mul_t().apply_Dt()
    return [D2, sym, chi.mul_t2(), chi.apply_Dt(), chi.mul_t(), chi]


def effective_operator_eta(functional, basis=HermiteBasis(1.0), n_probes=8, tol=1e-8):
    """Fit ``functional`` (expansion -> expansion in eta) by a second-order operator.

    Probes are ``h_0, ..., h_{n_probes-1}`` in ``basis``. Raises
    :class:`NotSecondOrder` when the best fit leaves a relative residual above ``tol``.
    """
    cols, rhs = [], []
    for m in range(n_probes):
        chi = HermiteExpansion.h(m, basis.lam, "eta")
        target = functional(chi)
        images = _basis_images(chi)
        n = max([len(target.coeffs)] + [len(p.coeffs) for p in images])
        w = np.sqrt(basis.norm_sq(np.arange(n)))
        cols.append(np.stack([np.pad(p.coeffs, (0, n - len(p.coeffs))) * w for p in images], axis=1))
        rhs.append(np.pad(target.coeffs, (0, n - len(target.coeffs))) * w)
    M = np.concatenate(cols)
    b = np.concatenate(rhs)
    sol, *_ = np.linalg.lstsq(M, b, rcond=None)
    res = float(np.linalg.norm(M @ sol - b) / max(np.linalg.norm(b), 1e-300))
    if res > tol:
        raise NotSecondOrder(f"relative residual {res:.3g} of the second-order fit exceeds {tol:g}")
    return SecondOrderOp1D(*(complex(v) for v in sol), residual=res)


def closed_form_ABC(Q, b0, k):
    """Leading coefficients of the effective operator in terms of ``Q``."""
    q = np.asarray(Q, dtype=float)
    s = (2 * k + 1)
    A = s / (2 * b0) * (q[1, 1] * q[2, 2] - q[1, 2] ** 2) / q[2, 2]
    B = -s / (2 * b0**2) * (q[0, 1] * q[2, 2] - q[0, 2] * q[1, 2]) / q[2, 2]
    C = s / (2 * b0**3) * (q[0, 0] * q[2, 2] - q[0, 2] ** 2) / q[2, 2]
    return A, B, C
