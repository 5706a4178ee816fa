"""Scaled Hermite functions and exact coefficient arithmetic on them.

The basis is ``h_m(t) = lam^(1/2) H_m(lam^(1/2) t) exp(-lam t^2 / 2)`` with the
physicists' polynomials ``H_m``. Coefficients are kept in this unnormalized
basis so the multiplication and differentiation rules below act verbatim;
:func:`to_orthonormal` converts at the boundary.

Note ``int h_m^2 dt = lam^(1/2) 2^m m! sqrt(pi)``: the squared norm equals
``||H_m||^2`` only when ``lam = 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SQRT_PI = math.sqrt(math.pi)


class ScaleMismatch(ValueError):
    """Two expansions live in bases with different scales."""


@dataclass(frozen=True)
class HermiteBasis:
    lam: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"Hermite scale must be positive, got {self.lam}")
        object.__setattr__(self, "lam", float(self.lam))

    def log_norm_sq(self, m):
        """``log ||h_m||^2`` for an array of indices."""
        m = np.asarray(m, dtype=float)
        from scipy.special import gammaln

        return 0.5 * math.log(self.lam) + m * math.log(2) + gammaln(m + 1) + math.log(SQRT_PI)

    def norm_sq(self, m):
        return np.exp(self.log_norm_sq(m))

    def normalized_values(self, t, n):
        """Rows ``psi_m(t)``, ``m < n``, of the L2-normalized functions ``h_m / ||h_m||``."""
        s = np.sqrt(self.lam) * np.asarray(t, dtype=float)
        out = np.empty((n,) + s.shape)
        if n == 0:
            return out
        out[0] = np.exp(-s * s / 2) / SQRT_PI**0.5
        if n > 1:
            out[1] = math.sqrt(2) * s * out[0]
        for m in range(1, n - 1):
            out[m + 1] = math.sqrt(2 / (m + 1)) * s * out[m] - math.sqrt(m / (m + 1)) * out[m - 1]
        return out * self.lam**0.25

    def values(self, t, n):
        """Rows ``h_m(t)`` for ``m < n``."""
        psi = self.normalized_values(t, n)
        scale = np.exp(0.5 * self.log_norm_sq(np.arange(n)))
        return psi * scale.reshape((n,) + (1,) * (psi.ndim - 1))


# Each rule: (prefactor(lam), [(offset, coeff(m)), ...]); image of h_m is
# prefactor * sum coeff(m) h_{m+offset}. Terms landing on negative indices carry
# a vanishing factor and are dropped.
RULES = {
    "t": (lambda lam: 1 / (2 * lam**0.5), [(1, lambda m: 1), (-1, lambda m: 2 * m)]),
    "t2": (
        lambda lam: 1 / (4 * lam),
        [(2, lambda m: 1), (0, lambda m: 4 * m + 2), (-2, lambda m: 4 * m * (m - 1))],
    ),
    "t3": (
        lambda lam: 1 / (8 * lam**1.5),
        [
            (3, lambda m: 1),
            (1, lambda m: 6 * m + 6),
            (-1, lambda m: 12 * m * m),
            (-3, lambda m: 8 * m * (m - 1) * (m - 2)),
        ],
    ),
    "D": (lambda lam: 0.5j * lam**0.5, [(1, lambda m: 1), (-1, lambda m: -2 * m)]),
    "Dt2+t2D": (
        lambda lam: 0.25j / lam**0.5,
        [
            (3, lambda m: 1),
            (1, lambda m: 2 * m + 2),
            (-1, lambda m: -4 * m * m),
            (-3, lambda m: -8 * m * (m - 1) * (m - 2)),
        ],
    ),
    "t4D+Dt4": (
        lambda lam: 1j / (16 * lam**1.5),
        [
            (5, lambda m: 1),
            (3, lambda m: 6 * m + 12),
            (1, lambda m: 4 * (2 * m * m + 4 * m + 3)),
            (-1, lambda m: -8 * (2 * m * m + 1) * m),
            (-3, lambda m: -48 * m * (m - 1) ** 2 * (m - 2)),
            (-5, lambda m: -32 * m * (m - 1) * (m - 2) * (m - 3) * (m - 4)),
        ],
    ),
}


def apply_rule(c, axis, rule, lam):
    """Apply a named rule along ``axis`` of a coefficient array; the axis grows."""
    pref, terms = RULES[rule]
    c = np.moveaxis(np.asarray(c, dtype=complex), axis, 0)
    n = c.shape[0]
    grow = max(off for off, _ in terms)
    out = np.zeros((n + grow,) + c.shape[1:], dtype=complex)
    m = np.arange(n)
    for off, fn in terms:
        w = np.array([fn(k) for k in m], dtype=float)
        lo = max(0, -off)
        if lo >= n:
            continue
        shape = (n - lo,) + (1,) * (c.ndim - 1)
        out[lo + off : n + off] += w[lo:].reshape(shape) * c[lo:]
    out *= pref(lam)
    return np.moveaxis(out, 0, axis)


def _trim(c, axis):
    """Drop trailing all-zero slices along ``axis`` (keeping at least one)."""
    c = np.moveaxis(c, axis, 0)
    flat = np.abs(c.reshape(c.shape[0], -1)).max(axis=1) if c.size else np.zeros(0)
    nz = np.nonzero(flat)[0]
    keep = (nz[-1] + 1) if nz.size else 1
    return np.moveaxis(c[:keep], 0, axis)


def _pad_to(c, shape):
    if c.shape == tuple(shape):
        return c
    out = np.zeros(shape, dtype=complex)
    out[tuple(slice(0, s) for s in c.shape)] = c
    return out


class TensorHermiteExpansion:
    """Finite sum ``sum c[m1, ..., mk] h_m1(t1) ... h_mk(tk)``, each variable with its own scale."""

    __array_priority__ = 100

    def __init__(self, bases, coeffs, names=None):
        self.bases = tuple(b if isinstance(b, HermiteBasis) else HermiteBasis(b) for b in bases)
        c = np.atleast_1d(np.asarray(coeffs, dtype=complex))
        if c.ndim != len(self.bases):
            raise ValueError(f"{c.ndim}-dimensional coefficients for {len(self.bases)} bases")
        self.coeffs = c
        self.names = tuple(names) if names is not None else tuple(f"t{i}" for i in range(c.ndim))

    # -- construction -------------------------------------------------
    @classmethod
    def basis_function(cls, bases, index, names=None):
        c = np.zeros([i + 1 for i in index], dtype=complex)
        c[tuple(index)] = 1
        return cls(bases, c, names)

    @classmethod
    def product(cls, *factors):
        """Tensor product of one-variable expansions."""
        c = factors[0].coeffs
        for f in factors[1:]:
            c = np.multiply.outer(c, f.coeffs)
        return cls([f.bases[0] for f in factors], c, [f.names[0] for f in factors])

    def _new(self, coeffs):
        return type(self)(self.bases, coeffs, self.names) if type(self) is not HermiteExpansion \
            else HermiteExpansion(self.bases[0], coeffs, self.names[0])

    def _axis(self, axis):
        return self.names.index(axis) if isinstance(axis, str) else axis

    # -- linear structure --------------------------------------------
    def _check_compatible(self, other):
        if self.bases != other.bases:
            raise ScaleMismatch(f"bases {self.bases} vs {other.bases}; rebasis first")

    def __add__(self, other):
        if isinstance(other, (int, float)) and other == 0:
            return self
        self._check_compatible(other)
        shape = np.maximum(self.coeffs.shape, other.coeffs.shape)
        return self._new(_pad_to(self.coeffs, shape) + _pad_to(other.coeffs, shape))

    __radd__ = __add__

    def __neg__(self):
        return self._new(-self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, scalar):
        return self._new(self.coeffs * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self._new(self.coeffs / scalar)

    def padded(self, shape):
        return self._new(_pad_to(self.coeffs, shape))

    def trimmed(self, tol=0.0):
        c = self.coeffs
        if tol:
            c = np.where(np.abs(c) > tol, c, 0)
        for a in range(c.ndim):
            c = _trim(c, a)
        return self._new(c)

    def truncated(self, shape):
        """Keep only modes below ``shape`` along each axis."""
        return self._new(self.coeffs[tuple(slice(0, s) for s in shape)])

    # -- Hermite rules --------------------------------------------------
    def rule(self, name, axis=0):
        a = self._axis(axis)
        return self._new(apply_rule(self.coeffs, a, name, self.bases[a].lam))

    def mul_t(self, axis=0):
        return self.rule("t", axis)

    def mul_t2(self, axis=0):
        return self.rule("t2", axis)

    def mul_t3(self, axis=0):
        return self.rule("t3", axis)

    def apply_Dt(self, axis=0):
        return self.rule("D", axis)

    def apply_sym2(self, axis=0):
        """``(D_t t^2 + t^2 D_t)``."""
        return self.rule("Dt2+t2D", axis)

    def apply_sym4(self, axis=0):
        """``(t^4 D_t + D_t t^4)``."""
        return self.rule("t4D+Dt4", axis)

    def apply_monomial(self, axis, a, b):
        """Normal-ordered ``t^a D_t^b`` along one axis (derivatives act first)."""
        ax = self._axis(axis)
        c, lam = self.coeffs, self.bases[ax].lam
        for _ in range(b):
            c = apply_rule(c, ax, "D", lam)
        for _ in range(a):
            c = apply_rule(c, ax, "t", lam)
        return self._new(c)

    # -- inner products and projections ---------------------------------
    def _weights(self, shape):
        w = np.ones(shape)
        for a, (b, n) in enumerate(zip(self.bases, shape)):
            sh = [1] * len(shape)
            sh[a] = n
            w = w * b.norm_sq(np.arange(n)).reshape(sh)
        return w

    def inner(self, other):
        """L2 inner product ``int self * conj(other)``."""
        self._check_compatible(other)
        shape = np.minimum(self.coeffs.shape, other.coeffs.shape)
        sl = tuple(slice(0, s) for s in shape)
        return complex(np.sum(self.coeffs[sl] * np.conj(other.coeffs[sl]) * self._weights(shape)))

    def norm(self):
        return math.sqrt(max(self.inner(self).real, 0.0))

    def project(self, axis, mode):
        """``<u, h_mode>_axis / ||h_mode||^2`` as an expansion in the remaining variables."""
        a = self._axis(axis)
        c = np.moveaxis(self.coeffs, a, 0)
        sub = c[mode] if mode < c.shape[0] else np.zeros(c.shape[1:], dtype=complex)
        bases = self.bases[:a] + self.bases[a + 1:]
        names = self.names[:a] + self.names[a + 1:]
        if len(bases) == 1:
            return HermiteExpansion(bases[0], sub, names[0])
        if not bases:
            return complex(sub)
        return TensorHermiteExpansion(bases, sub, names)

    def embed(self, axis, mode, basis, name=None, position=0):
        """Tensor with ``h_mode`` in a new variable inserted at ``position``."""
        e = np.zeros(mode + 1, dtype=complex)
        e[mode] = 1
        c = np.moveaxis(np.multiply.outer(e, self.coeffs), 0, position)
        bases = list(self.bases)
        bases.insert(position, basis if isinstance(basis, HermiteBasis) else HermiteBasis(basis))
        names = list(self.names)
        names.insert(position, name or axis)
        return TensorHermiteExpansion(bases, c, names)

    def to_orthonormal(self):
        """Coefficients with respect to the L2-normalized functions."""
        return self.coeffs * np.sqrt(self._weights(self.coeffs.shape))

    @classmethod
    def from_orthonormal(cls, bases, ortho, names=None):
        tmp = cls(bases, np.asarray(ortho, dtype=complex), names)
        return tmp._new(tmp.coeffs / np.sqrt(tmp._weights(tmp.coeffs.shape)))

    # -- evaluation -------------------------------------------------------
    def evaluate_grid(self, *grids):
        """Values on the tensor grid ``grids[0] x grids[1] x ...``."""
        c = self.to_orthonormal()
        for a, (b, g) in enumerate(zip(self.bases, grids)):
            V = b.normalized_values(g, c.shape[a])  # (n_a, len g)
            c = np.tensordot(c, V, axes=([a], [0]))
            c = np.moveaxis(c, -1, a)
        return c

    def max_abs(self):
        return float(np.abs(self.coeffs).max()) if self.coeffs.size else 0.0

    def __repr__(self):
        return f"{type(self).__name__}(names={self.names}, shape={self.coeffs.shape})"


class HermiteExpansion(TensorHermiteExpansion):
    """One-variable expansion ``sum c_m h_m(t)``."""

    def __init__(self, basis, coeffs, name="t"):
        if isinstance(basis, (tuple, list)):
            basis = basis[0]
        if isinstance(name, (tuple, list)):
            name = name[0]
        super().__init__((basis,), coeffs, (name,))

    @property
    def basis(self):
        return self.bases[0]

    @classmethod
    def h(cls, m, lam=1.0, name="t"):
        c = np.zeros(m + 1, dtype=complex)
        c[m] = 1
        return cls(HermiteBasis(lam), c, name)

    @classmethod
    def from_dict(cls, basis, coeffs, name="t"):
        n = max(coeffs) + 1 if coeffs else 1
        c = np.zeros(n, dtype=complex)
        for m, v in coeffs.items():
            c[m] = v
        return cls(basis, c, name)

    def to_dict(self, tol=0.0):
        return {m: complex(v) for m, v in enumerate(self.coeffs) if abs(v) > tol}

    def __call__(self, t):
        return self.evaluate_grid(np.atleast_1d(np.asarray(t, dtype=float)))

    @classmethod
    def fit(cls, f, basis, n, half_width=None, n_points=4001, name="t"):
        """Project a decaying function onto the first ``n`` modes by trapezoid quadrature.

        Exact up to quadrature error for functions decaying like the basis;
        the grid spans ``+-half_width`` (default ``sqrt(4 n + 60) / lam^(1/2)``).
        """
        if half_width is None:
            half_width = math.sqrt(4 * n + 60) / math.sqrt(basis.lam)
        t = np.linspace(-half_width, half_width, n_points)
        psi = basis.normalized_values(t, n)
        vals = np.asarray(f(t), dtype=complex)
        ortho = np.trapezoid(psi * vals, t, axis=1)
        return cls.from_orthonormal((basis,), ortho, (name,))


def inner(e1, e2):
    return e1.inner(e2)
