"""Polynomial magnetic fields and magnetic-well analysis."""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import (
    NonDegenerateWellViolation,
    NonUniqueMinimum,
    WellOutsideDomain,
    ZeroFieldViolation,
)
from .polynomial import MAX_DEGREE, Poly3, curl, div, monomials_of_degree, norm_sq

DEFAULT_BOX = ((-3.0, 3.0), (-3.0, 3.0), (-3.0, 3.0))


@dataclass(frozen=True)
class PolyVecField:
    """Vector potential ``A`` on an axis-aligned box and its field ``B = rot A``."""

    A: tuple
    domain_box: tuple = DEFAULT_BOX
    max_degree: int = MAX_DEGREE
    B: tuple = dc_field(init=False, repr=False, compare=False)

    def __post_init__(self):
        A = tuple(a if isinstance(a, Poly3) else Poly3(a) for a in self.A)
        if len(A) != 3:
            raise ValueError("A needs three components")
        box = tuple((float(lo), float(hi)) for lo, hi in self.domain_box)
        if any(hi <= lo for lo, hi in box):
            raise ValueError(f"degenerate domain box {box}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "domain_box", box)
        B = curl(A, self.max_degree)
        dB = div(B)
        scale = max((abs(float(c)) for comp in B for _, c in comp.items()), default=1.0)
        if any(abs(float(c)) > 1e-12 * max(scale, 1.0) for _, c in dB.items()):
            raise AssertionError("div rot A does not vanish")
        object.__setattr__(self, "B", B)

    def B_at(self, x, y, z):
        """Field components evaluated on (broadcast) arrays."""
        return np.stack([b(x, y, z) for b in self.B], axis=0)

    def A_at(self, x, y, z):
        return np.stack([a(x, y, z) for a in self.A], axis=0)

    def norm_B(self, x, y, z):
        return np.sqrt(np.sum(self.B_at(x, y, z) ** 2, axis=0))

    def shifted(self, v):
        """Field with arguments shifted, ``A'(X) = A(X + v)``; the well moves by ``-v``."""
        I = np.eye(3)
        A = tuple(a.compose_affine(I, v) for a in self.A)
        box = tuple((lo - s, hi - s) for (lo, hi), s in zip(self.domain_box, v))
        return PolyVecField(A, box, self.max_degree)

    @property
    def center(self):
        return np.array([(lo + hi) / 2 for lo, hi in self.domain_box])


@dataclass(frozen=True)
class WellAnalysis:
    X0: np.ndarray
    b0: float
    B0: np.ndarray
    hessB: np.ndarray
    d: float
    a: float
    eps0_margin: float
    omega1: tuple
    gradient_norm: float

    def to_dict(self):
        return {
            "X0": [float(v) for v in self.X0],
            "b0": float(self.b0),
            "B0": [float(v) for v in self.B0],
            "hessB": [[float(v) for v in row] for row in self.hessB],
            "d": float(self.d),
            "a": float(self.a),
            "eps0_margin": float(self.eps0_margin),
            "omega1": [list(p) for p in self.omega1],
            "gradient_norm": float(self.gradient_norm),
        }

    @property
    def separation_radius(self):
        """Distance from the well to the boundary of the sub-box Omega_1."""
        return float(min(min(x - lo, hi - x) for x, (lo, hi) in zip(self.X0, self.omega1)))


class _NormSq:
    """|B|^2 with exact polynomial gradient and Hessian, evaluated in floats."""

    def __init__(self, B):
        self.f = norm_sq(tuple(b.to_float() for b in B))
        self.g = self.f.gradient()
        self.H = self.f.hessian()

    def value(self, X):
        return self.f.at(X)

    def grad(self, X):
        return np.array([g.at(X) for g in self.g])

    def hess(self, X):
        return np.array([[h.at(X) for h in row] for row in self.H])


def _newton(ns, X, max_iter=200):
    X = np.array(X, dtype=float)
    f = ns.value(X)
    for _ in range(max_iter):
        g = ns.grad(X)
        # |grad |B|| = |grad |B|^2| / (2|B|)
        if np.linalg.norm(g) / (2 * f) < 1e-13:
            break
        H = ns.hess(X)
        w, V = np.linalg.eigh(H)
        floor = 1e-8 * max(np.abs(w).max(), 1e-300)
        w = np.where(w > floor, w, np.abs(w) + floor * 1e3)
        step = -V @ ((V.T @ g) / w)
        t = 1.0
        while t > 1e-12:
            Xn = X + t * step
            fn = ns.value(Xn)
            if fn <= f + 1e-4 * t * g @ step or fn <= f:
                break
            t *= 0.5
        else:
            break
        if np.allclose(Xn, X, rtol=0, atol=1e-17):
            X, f = Xn, fn
            break
        X, f = Xn, fn
    return X


def hess_norm_B(field: PolyVecField, X):
    """Hessian of |B| at ``X`` from the exact derivatives of |B|^2."""
    ns = _NormSq(field.B)
    f = ns.value(X)
    r = np.sqrt(f)
    g = ns.grad(X)
    H = ns.hess(X)
    return H / (2 * r) - np.outer(g, g) / (4 * r**3)


def _is_pd(M):
    w = np.linalg.eigvalsh((M + M.T) / 2)
    tr = np.trace(M)
    return tr > 0 and w.min() > 1e-10 * tr


def _shrink_box(box, fraction):
    out = []
    for lo, hi in box:
        c, r = (lo + hi) / 2, (hi - lo) / 2
        out.append((c - (1 - fraction) * r, c + (1 - fraction) * r))
    return tuple(out)


def _boundary_min(field, box, n=33):
    best = np.inf
    ax = [np.linspace(lo, hi, n) for lo, hi in box]
    for axis in range(3):
        for side in (0, 1):
            grids = list(ax)
            grids[axis] = np.array([box[axis][side]])
            X = np.meshgrid(*grids, indexing="ij")
            best = min(best, float(field.norm_B(*X).min()))
    return best


def _grid_local_minima(vals):
    """Indices of (non-strict) local minima of a 3D array, lowest first."""
    padded = np.pad(vals, 1, mode="constant", constant_values=np.inf)
    is_min = np.ones(vals.shape, dtype=bool)
    n0, n1, n2 = vals.shape
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            for dk in (-1, 0, 1):
                if di == dj == dk == 0:
                    continue
                nb = padded[1 + di:1 + di + n0, 1 + dj:1 + dj + n1, 1 + dk:1 + dk + n2]
                is_min &= vals <= nb
    idx = np.argwhere(is_min)
    order = np.argsort(vals[tuple(idx.T)])
    return idx[order]


def find_well(field: PolyVecField, n_grid=33, omega1=None, omega1_shrink=0.2,
              max_seeds=16):
    """Locate and certify the unique non-degenerate minimum of |B| on the box.

    A coarse grid scan seeds damped Newton iterations on |B|^2. Raises one of
    the :class:`AssumptionViolation` subclasses when the well hypotheses fail.
    """
    box = field.domain_box
    axes = [np.linspace(lo, hi, n_grid) for lo, hi in box]
    grid = np.meshgrid(*axes, indexing="ij")
    normB = field.norm_B(*grid)
    scale = float(normB.max())
    if normB.min() <= 1e-12 * max(scale, 1e-300):
        raise ZeroFieldViolation("|B| vanishes on the domain; b0 > 0 is required")

    ns = _NormSq(field.B)
    seeds = _grid_local_minima(normB)[:max_seeds]
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])

    def inside(X):
        return np.all(X >= lo - 1e-12) and np.all(X <= hi + 1e-12)

    candidates = []
    for idx in seeds:
        X = _newton(ns, [axes[a][idx[a]] for a in range(3)])
        if inside(X):
            candidates.append(X)
        if len(candidates) == 1:
            # certify the best candidate before looking for competitors
            Hb = hess_norm_B(field, X)
            if not _is_pd(Hb):
                raise NonDegenerateWellViolation(
                    f"Hess|B| at the minimizer {X.tolist()} is not positive definite "
                    f"(eigenvalues {np.linalg.eigvalsh(Hb).tolist()})"
                )
    if not candidates:
        raise WellOutsideDomain("minimization of |B| left the domain box")

    values = [np.sqrt(ns.value(X)) for X in candidates]
    best = int(np.argmin(values))
    X0 = candidates[best]
    b0 = float(values[best])
    if b0 <= 1e-12 * scale:
        raise ZeroFieldViolation(f"b0 = {b0} is not positive")
    diam = float(np.linalg.norm(hi - lo))
    for X, v in zip(candidates, values):
        if np.linalg.norm(X - X0) > 1e-6 * diam and abs(v - b0) <= 1e-9 * b0:
            raise NonUniqueMinimum(
                f"|B| attains b0={b0} at distinct points {X0.tolist()} and {X.tolist()}"
            )

    hessB = hess_norm_B(field, X0)
    hessB = (hessB + hessB.T) / 2
    if not _is_pd(hessB):
        raise NonDegenerateWellViolation("Hess|B| at the well is not positive definite")
    grad_norm = float(np.linalg.norm(ns.grad(X0)) / (2 * b0))

    B0 = np.array([b.at(X0) for b in field.B])
    d = float(np.linalg.det(hessB))
    a = float(hessB @ B0 @ B0 / (2 * b0**2))
    if omega1 is None:
        omega1 = _shrink_box(box, omega1_shrink)
    margin = _boundary_min(field, omega1) - b0
    return WellAnalysis(
        X0=X0, b0=b0, B0=B0, hessB=hessB, d=d, a=a, eps0_margin=float(margin),
        omega1=tuple(tuple(p) for p in omega1), gradient_norm=grad_norm,
    )


def invariants_at_well(field: PolyVecField, X0):
    """Return ``(b0, d, a, Q)`` with ``Q = b0 Hess|B|(X0) = Hess(|B|^2)(X0) / 2``."""
    X0 = np.asarray(X0, dtype=float)
    B0 = np.array([b.at(X0) for b in field.B])
    b0 = float(np.linalg.norm(B0))
    if b0 <= 0:
        raise ZeroFieldViolation("B vanishes at X0")
    hessB = hess_norm_B(field, X0)
    hessB = (hessB + hessB.T) / 2
    if not _is_pd(hessB):
        raise NonDegenerateWellViolation("Hess|B| at X0 is not positive definite")
    Q = b0 * hessB
    d = float(np.linalg.det(hessB))
    a = float(hessB @ B0 @ B0 / (2 * b0**2))
    return b0, d, a, Q


# -- model fields used throughout the tests, demos and acceptance runs ------

def isotropic_model_field(b0=1, box=((-8, 8), (-8, 8), (-8, 8))):
    """``A = (0, b0 x + x^3/3 + x y^2 + x z^2, 0)``: |B| ~ b0 + |X|^2 near 0."""
    from fractions import Fraction

    A2 = Poly3({(1, 0, 0): b0, (3, 0, 0): Fraction(1, 3), (1, 2, 0): 1, (1, 0, 2): 1})
    return PolyVecField((Poly3(), A2, Poly3()), box)


def anisotropic_model_field(box=((-8, 8), (-8, 8), (-8, 8))):
    """``A = (0, x + x^3/3 + 2 x y^2 + 3 x z^2, 0)``: Hess|B| = diag(2, 4, 6)."""
    from fractions import Fraction

    A2 = Poly3({(1, 0, 0): 1, (3, 0, 0): Fraction(1, 3), (1, 2, 0): 2, (1, 0, 2): 3})
    return PolyVecField((Poly3(), A2, Poly3()), box)


def skew_model_field(c13=0.3, c23=0.1, beta3=0.5, box=((-8, 8), (-8, 8), (-8, 8))):
    """Isotropic field plus the cross terms ``c13, c23`` and a linear ``B2 = beta3 z``.

    The potential is already in normal gauge; the Hessian of |B| has
    off-diagonal entries, so every corrector of the quasimode is nonzero.
    """
    from fractions import Fraction

    A2 = Poly3({(1, 0, 0): 1, (3, 0, 0): Fraction(1, 3), (1, 2, 0): 1, (1, 0, 2): 1,
                (2, 0, 1): c13, (1, 1, 1): 2 * c23})
    A3 = Poly3({(1, 0, 1): -beta3})
    return PolyVecField((Poly3(), A2, A3), box)


def perturbed_model_field(seed=7, scale=0.05, box=((-1, 1), (-1, 1), (-1, 1))):
    """Skew model field plus random terms of degrees 2 to 5 in every component.

    Every Taylor coefficient family is generically non-zero, so this field
    exercises all terms of the reduced operators.
    """
    rng = np.random.default_rng(seed)
    A = list(skew_model_field().A)
    for comp in range(3):
        for d in (2, 3, 4, 5):
            for e in monomials_of_degree(d):
                A[comp] = A[comp] + Poly3({e: float(rng.normal() * scale)})
    return PolyVecField(tuple(A), box)
