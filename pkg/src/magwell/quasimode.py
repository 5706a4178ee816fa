"""Formal eigenfunction hierarchy for the reduced operators.

For a cell ``(j, k, m)`` the solver builds ``u_0, ..., u_4`` and
``lambda_0, ..., lambda_4`` with

    sum_{p+q=l} (P_p - lambda_p) u_q = 0,   l = 0, ..., 4,

in the tensor Hermite representation (x-scale ``b0``, eta-scale from the
effective operator's ground state, z-scale ``Lambda2``).  Two inverses do all
the work:

* ``R0`` inverts ``h1 - lambda_0 = Dx^2 + b0^2 x^2 - (2k+1) b0`` off the x-mode ``k``;
* ``R3`` inverts ``h3 - lambda_2 = Dz^2 + Lambda2^2 z^2 - (2j+1) Lambda2`` off the z-mode ``j``.

Free components along the resonant modes are set to zero, except for the
eta-profile ``chi0`` of ``u_0`` which is an eigenfunction of the effective
operator obtained by eliminating everything else.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstructionError, SolvabilityViolation
from .hermite import HermiteBasis, HermiteExpansion, TensorHermiteExpansion
from .operators import (
    ReducedOperatorSet,
    SecondOrderOp1D,
    apply,
    build_reduced_ops,
    closed_form_ABC,
    effective_operator_eta,
)

NAMES = ("x", "eta", "z")
SOLVABILITY_TOL = 1e-9


@dataclass(frozen=True)
class ModeIndex:
    j: int
    k: int
    m: int

    def __post_init__(self):
        if min(self.j, self.k, self.m) < 0:
            raise ValueError(f"mode indices must be non-negative, got {self}")

    def as_tuple(self):
        return (self.j, self.k, self.m)


def solve_h3(coeffs, k, n_eigs=6):
    """``Lambda2`` and the first eigenvalues ``(2j+1) Lambda2`` of ``h3``."""
    q33 = float(coeffs.Qmat[2, 2])
    if not q33 > 0:
        raise ConstructionError(f"q33 = {q33} must be positive")
    Lambda2 = math.sqrt(2 * k + 1) * math.sqrt(q33 / (2 * coeffs.b0))
    return Lambda2, [(2 * j + 1) * Lambda2 for j in range(n_eigs)]


# -- harmonic oscillator with cross terms -------------------------------------------
@dataclass(frozen=True)
class LadderOscillator:
    """``A D^2 + B (eta D + D eta) + C eta^2 + alpha D + beta eta + gamma`` with ``AC > B^2``.

    Factorized as ``X X^+ + s + gamma - |zc|^2`` with ``s = sqrt(AC - B^2)``,
    ``X = A^(1/2) D + (B + i s) A^(-1/2) eta + zc`` and ``[X^+, X] = 2 s``.
    """

    op: SecondOrderOp1D

    def __post_init__(self):
        A, B, C = self.op.A, self.op.B, self.op.C
        if not (A > 0 and A * C - B * B > 0):
            raise ConstructionError(f"effective operator not elliptic: A={A}, AC-B^2={A * C - B * B}")

    @property
    def s(self):
        o = self.op
        return math.sqrt(o.A * o.C - o.B**2)

    @property
    def zc(self):
        o, s = self.op, self.s
        return o.alpha / (2 * math.sqrt(o.A)) + 1j * (o.A * o.beta - o.B * o.alpha) / (2 * math.sqrt(o.A) * s)

    @property
    def scale(self):
        """Hermite scale matching the ground-state Gaussian width."""
        return self.s / self.op.A

    def eigenvalue(self, m):
        o, s = self.op, self.s
        shift = (o.C * o.alpha**2 - 2 * o.B * o.alpha * o.beta + o.A * o.beta**2) / (4 * s * s)
        return (2 * m + 1) * s + o.gamma - shift

    def ground_state(self, eta):
        """Unnormalized ``chi_0(eta)``, annihilated by ``X^+``."""
        o, s = self.op, self.s
        zb = np.conj(self.zc)
        return np.exp(-(s + 1j * o.B) * eta**2 / (2 * o.A) - 1j * zb * eta / math.sqrt(o.A))

    def center(self):
        """Peak of ``|chi_0|``."""
        return -float(np.imag(self.zc)) * math.sqrt(self.op.A) / self.s

    def raise_(self, chi: HermiteExpansion) -> HermiteExpansion:
        o = self.op
        p = (o.B + 1j * self.s) / math.sqrt(o.A)
        return chi.apply_Dt() * math.sqrt(o.A) + chi.mul_t() * p + chi * self.zc

    def eigenfunction(self, m, tol=1e-13, max_modes=400, name="eta"):
        """``X^m chi_0`` in the Hermite basis of scale :attr:`scale`, L2-normalized.

        The ground state is projected by quadrature with enough modes that the
        discarded tail carries relative norm below ``tol``.
        """
        basis = HermiteBasis(self.scale)
        c = abs(self.center()) * math.sqrt(self.scale)
        n = 16
        while True:
            width = (c + math.sqrt(2 * n + 40)) / math.sqrt(self.scale)
            pts = max(4001, int(40 * width * math.sqrt(self.scale) * (1 + abs(self.op.B) / self.op.A)))
            chi = HermiteExpansion.fit(self.ground_state, basis, n, half_width=width, n_points=pts, name=name)
            o = np.abs(chi.to_orthonormal()) ** 2
            tail = math.sqrt(o[-8:].sum() / o.sum())
            if tail < tol or n >= max_modes:
                break
            n *= 2
        if tail >= tol:
            raise ConstructionError(f"ground state not resolved with {n} modes (tail {tail:.2e})")
        keep = np.nonzero(np.cumsum(o[::-1])[::-1] > (tol * 1e-2) ** 2 * o.sum())[0]
        chi = chi.truncated((int(keep[-1]) + 1,))
        for _ in range(m):
            chi = self.raise_(chi)
        return chi / chi.norm()


# -- results -------------------------------------------------------------------------
@dataclass(frozen=True)
class AsymptoticEigenvalue:
    j: int
    k: int
    m: int
    lambda0: float
    lambda1: float
    lambda2: float
    lambda3: float
    lambda4: float

    def mu(self, h):
        """``lambda0 h + lambda2 h^(3/2) + lambda4 h^2``."""
        h = np.asarray(h, dtype=float)
        if np.any(h <= 0):
            raise ValueError("h must be positive")
        return self.lambda0 * h + self.lambda2 * h**1.5 + self.lambda4 * h**2

    def to_dict(self):
        return {"j": self.j, "k": self.k, "m": self.m, "lambda0": self.lambda0,
                "lambda2": self.lambda2, "lambda4": self.lambda4}


@dataclass
class QuasimodeBundle:
    """Correctors ``u_0..u_4`` of one cell plus the data needed to render them."""

    index: ModeIndex
    eigen: AsymptoticEigenvalue
    b0: float
    beta3: float
    Lambda2: float
    eta_scale: float
    effective: SecondOrderOp1D
    chi0: HermiteExpansion
    u: list
    U2: TensorHermiteExpansion
    v1: TensorHermiteExpansion
    v2: TensorHermiteExpansion
    diagnostics: dict = field(default_factory=dict)

    @property
    def bases(self):
        return self.u[0].bases

    def combined(self, h, orders=(0, 1, 2, 3, 4)):
        """``sum h^(l/4) u_l`` over the selected orders."""
        return sum((self.u[l] * h ** (l / 4) for l in orders), start=0)


# -- the solver ----------------------------------------------------------------------
def _pad_all(items):
    shape = np.max([it.coeffs.shape for it in items], axis=0)
    return [it.padded(tuple(shape)) for it in items]


class CellSolver:
    """Hierarchy for fixed ``(j, k)``; the eta-profile is supplied per call."""

    def __init__(self, coeffs, ops: ReducedOperatorSet, j, k):
        self.coeffs, self.ops, self.j, self.k = coeffs, ops, j, k
        self.b0 = float(coeffs.b0)
        self.Lambda2, _ = solve_h3(coeffs, k)
        self.lambda0 = (2 * k + 1) * self.b0
        self.lambda2 = (2 * j + 1) * self.Lambda2
        self.xb = HermiteBasis(self.b0)
        self.zb = HermiteBasis(self.Lambda2)

    # basic pieces
    def lift(self, chi: HermiteExpansion):
        """``phi_k (x) chi (x) psi_j``."""
        phi = HermiteExpansion.h(self.k, self.b0, "x")
        psi = HermiteExpansion.h(self.j, self.Lambda2, "z")
        return TensorHermiteExpansion.product(phi, chi, psi)

    def embed_k(self, v: TensorHermiteExpansion):
        """``phi_k (x) v`` for ``v`` in ``(eta, z)``."""
        return v.embed("x", self.k, self.xb, position=0)

    def R0(self, F: TensorHermiteExpansion, what="x-resonant forcing"):
        c = F.coeffs.copy()
        n = np.arange(c.shape[0])
        self._check_resonance(c[self.k] if self.k < c.shape[0] else None, np.abs(c).max(), what)
        denom = 2.0 * (n - self.k) * self.b0
        denom[n == self.k] = np.inf
        return TensorHermiteExpansion(F.bases, c / denom[:, None, None], F.names)

    def R3(self, G: TensorHermiteExpansion, what="z-resonant forcing"):
        c = G.coeffs.copy()
        n = np.arange(c.shape[1])
        self._check_resonance(c[:, self.j] if self.j < c.shape[1] else None, np.abs(c).max(), what)
        denom = 2.0 * (n - self.j) * self.Lambda2
        denom[n == self.j] = np.inf
        return TensorHermiteExpansion(G.bases, c / denom[None, :], G.names)

    @staticmethod
    def _check_resonance(block, scale, what):
        if block is None:
            return
        size = float(np.abs(block).max()) if np.size(block) else 0.0
        if size > SOLVABILITY_TOL * max(scale, 1.0):
            raise SolvabilityViolation(f"{what} has resonant component {size:.3e}")

    # hierarchy pieces as functions of the eta-profile
    def order2(self, chi):
        u0 = self.lift(chi)
        F2 = -(apply(self.ops.P2t, u0) - u0 * self.lambda2)
        return u0, self.R0(F2, "order-2 forcing")

    def order3(self, u0):
        G1 = -apply(self.ops.P3t, u0).project("x", self.k)
        # lambda3 = <P3 u0, phi_k psi_j> / norms; vanishes by parity in z
        lam3 = G1.project("z", self.j)
        if lam3.max_abs() > SOLVABILITY_TOL * max(1.0, G1.max_abs()):
            raise SolvabilityViolation(f"lambda3 forcing does not vanish ({lam3.max_abs():.3e})")
        return self.R3(G1, "order-3 forcing")

    def reduced_rhs(self, chi):
        """``Pi_k [P4 u0 + P3 u1 + P2 U2]`` as an (eta, z) expansion."""
        u0, U2 = self.order2(chi)
        v1 = self.order3(u0)
        u1 = self.embed_k(v1)
        total = sum(_pad_all([apply(self.ops.P4t, u0), apply(self.ops.P3t, u1), apply(self.ops.P2t, U2)]))
        return total.project("x", self.k)

    def effective_operator(self):
        def functional(chi):
            return self.reduced_rhs(chi).project("z", self.j)

        return effective_operator_eta(functional, HermiteBasis(1.0), n_probes=8).real()

    def solve(self, m, chi: HermiteExpansion, lambda4):
        u0, U2 = self.order2(chi)
        v1 = self.order3(u0)
        u1 = self.embed_k(v1)
        P2, P3, P4 = self.ops.P2t, self.ops.P3t, self.ops.P4t

        G2 = -self.reduced_rhs(chi) + chi_psi(chi, self.j, self.Lambda2) * lambda4
        v2 = self.R3(G2, "order-4 forcing (effective eigen-equation)")
        u2 = U2 + self.embed_k(v2)

        F3 = -(apply(P3, u0) + apply(P2, u1) - u1 * self.lambda2)
        u3 = self.R0(F3, "order-3 x-forcing")
        F4 = -(apply(P4, u0) - u0 * lambda4 + apply(P3, u1) + apply(P2, u2) - u2 * self.lambda2)
        u4 = self.R0(F4, "order-4 x-forcing")
        return [u0, u1, u2, u3, u4], U2, v1, v2


def chi_psi(chi, j, Lambda2):
    psi = HermiteExpansion.h(j, Lambda2, "z")
    return TensorHermiteExpansion.product(chi, psi)


def solve_cell(coeffs, j, k, m, ops: ReducedOperatorSet | None = None, effective=None):
    """Run the full hierarchy for ``(j, k, m)``; returns a :class:`QuasimodeBundle`."""
    idx = ModeIndex(j, k, m)
    ops = ops or build_reduced_ops(coeffs)
    solver = CellSolver(coeffs, ops, j, k)
    eff = effective or solver.effective_operator()
    osc = LadderOscillator(eff)
    lambda4 = osc.eigenvalue(m)
    chi = osc.eigenfunction(m)
    u, U2, v1, v2 = solver.solve(m, chi, lambda4)
    eig = AsymptoticEigenvalue(j, k, m, solver.lambda0, 0.0, solver.lambda2, 0.0, float(lambda4))
    A, B, C = closed_form_ABC(coeffs.Qmat, coeffs.b0, k)
    diag = {
        "A_closed": A, "B_closed": B, "C_closed": C,
        "fit_residual": eff.residual,
        "chi0_modes": len(chi.coeffs),
    }
    return QuasimodeBundle(idx, eig, solver.b0, float(coeffs.l2[2]), solver.Lambda2, osc.scale,
                           eff, chi, u, U2, v1, v2, diag)


def asymptotic_eigenvalue(coeffs, j, k, m, ops=None):
    ops = ops or build_reduced_ops(coeffs)
    solver = CellSolver(coeffs, ops, j, k)
    eff = solver.effective_operator()
    lam4 = LadderOscillator(eff).eigenvalue(m)
    return AsymptoticEigenvalue(j, k, m, solver.lambda0, 0.0, solver.lambda2, 0.0, float(lam4))


def assemble_mu(eig: AsymptoticEigenvalue, h):
    return eig.mu(h)


def formal_residuals(bundle: QuasimodeBundle, ops: ReducedOperatorSet):
    """Max coefficient of ``sum_{p+q=l} (P_p - lambda_p) u_q`` for ``l = 0..4``."""
    lam = [bundle.eigen.lambda0, 0.0, bundle.eigen.lambda2, 0.0, bundle.eigen.lambda4]
    out = []
    for l in range(5):
        terms = []
        for p in range(l + 1):
            q = l - p
            P = ops.by_order(p)
            if P.terms:
                terms.append(apply(P, bundle.u[q]))
            if lam[p]:
                terms.append(bundle.u[q] * (-lam[p]))
        out.append(sum(_pad_all(terms)).max_abs() if terms else 0.0)
    return out


# -- closed-form cross-checks -----------------------------------------------------------
def U2_closed_form(coeffs, j, k, chi: HermiteExpansion):
    """Order-2 off-diagonal corrector in terms of ``phi_{k+-1}, phi_{k+-2}``."""
    b0 = coeffs.b0
    beta3 = float(coeffs.l2[2])
    c33 = coeffs.c(3, 3)
    q33 = float(coeffs.Qmat[2, 2])
    Lambda2, _ = solve_h3(coeffs, k)
    psi = HermiteExpansion.h(j, Lambda2, "z")
    phi = np.zeros(k + 3, dtype=complex)
    phi[k + 1] = 1
    if k >= 1:
        phi[k - 1] = -2 * k
    eta_chi_z2 = TensorHermiteExpansion.product(chi.mul_t(), psi.mul_t2()) * (2 * c33)
    sym = psi.mul_t().apply_Dt() + psi.apply_Dt().mul_t()
    beta_part = TensorHermiteExpansion.product(chi, sym) * beta3
    g1 = sum(_pad_all([eta_chi_z2, beta_part]))
    phi2 = np.zeros(k + 3, dtype=complex)
    phi2[k + 2] = 1
    if k >= 2:
        phi2[k - 2] = -4 * k * (k - 1)
    g2 = TensorHermiteExpansion.product(chi, psi.mul_t2()) * q33
    xb = HermiteBasis(b0)
    t1 = _outer_x(phi, g1, xb) * (-1 / (4 * b0**1.5))
    t2 = _outer_x(phi2, g2, xb) * (-1 / (16 * b0**2))
    return sum(_pad_all([t1, t2]))


def _outer_x(xcoef, v, xb):
    c = np.multiply.outer(xcoef, v.coeffs)
    return TensorHermiteExpansion((xb,) + v.bases, c, ("x",) + v.names)


def v1_closed_form(coeffs, j, k, chi: HermiteExpansion):
    """First transverse corrector ``v1 = v1^(2) + v1^(1) + v1^(0)`` as an (eta, z) expansion."""
    b0 = coeffs.b0
    al2 = float(coeffs.l1[1])
    be1, be2, be3 = (float(v) for v in coeffs.l2)
    q13, q23 = coeffs.q(1, 3), coeffs.q(2, 3)
    a33, b33 = coeffs.a(3, 3), coeffs.b(3, 3)
    r333 = coeffs.r3(3, 3, 3)
    L, _ = solve_h3(coeffs, k)
    K = 2 * k + 1
    zb = HermiteBasis(L)

    def zvec(pairs):
        n = max(j + o for o, _ in pairs) + 1
        c = np.zeros(n, dtype=complex)
        for o, w in pairs:
            if j + o >= 0:
                c[j + o] += w
        return HermiteExpansion(zb, c, "z")

    D = lambda e: e.apply_Dt()  # noqa: E731
    eta = lambda e: e.mul_t()  # noqa: E731
    # v1^(2)
    e2 = sum(_pad_all([chi.mul_t2() * (be1 / b0**2), D(chi).mul_t() * (-2 * be2 / b0), D(D(chi)) * (-al2)]))
    z2 = zvec([(1, 1), (-1, 2 * j)]) * (1j / (4 * L**0.5))
    v12 = TensorHermiteExpansion.product(e2, z2) * -1
    # v1^(1)
    e1a = sum(_pad_all([eta(chi) * (q13 / b0**2), D(chi) * (-q23 / b0)]))
    z1a = zvec([(1, 1), (-1, -2 * j)]) * (K / (4 * L**1.5))
    e1b = sum(_pad_all([eta(chi) * (be2 * be3 / (2 * b0**2) + b33 / b0),
                        D(chi) * (al2 * be3 / (2 * b0) + a33)]))
    z1b = zvec([(3, 1), (1, 6 * j + 6), (-1, 12 * j * j), (-3, 8 * j * (j - 1) * (j - 2))]) * (1j / (24 * L**1.5))
    v11 = sum(_pad_all([TensorHermiteExpansion.product(e1a, z1a), TensorHermiteExpansion.product(e1b, z1b)])) * -1
    # v1^(0)
    c0 = q23 * be3 / (2 * b0**2) + (be3 * b33 + b0 * r333) / b0
    z0a = zvec([(3, 1), (1, 18 * j + 18), (-1, -36 * j * j), (-3, -8 * j * (j - 1) * (j - 2))]) * (-c0 * K / (48 * L**2.5))
    c1 = be1 * K / (2 * b0) + 1j * be2 / b0 - al2 * K / (2 * b0)
    z0b = zvec([(1, 1), (-1, 2 * j)]) * (-c1 * 1j / (4 * L**0.5))
    c2 = al2 * be3**2 / (8 * b0**2) + be3 * a33 / (2 * b0)
    z0c = zvec([(5, 0.1), (3, j + 2), (1, 2 * (2 * j * j + 4 * j + 3)), (-1, 4 * (2 * j * j + 1) * j),
                (-3, 8 * j * (j - 1) ** 2 * (j - 2)), (-5, 16 * j * (j - 1) * (j - 2) * (j - 3) * (j - 4) / 5)])
    z0c = z0c * (c2 * 1j / (16 * L**2.5))
    z0 = sum(_pad_all([z0a, z0b, z0c]))
    v10 = TensorHermiteExpansion.product(chi, z0)
    return {"v1_2": v12, "v1_1": v11, "v1_0": v10, "v1": sum(_pad_all([v12, v11, v10]))}


def mu_table(coeffs, cells, ops=None):
    ops = ops or build_reduced_ops(coeffs)
    return [asymptotic_eigenvalue(coeffs, j, k, m, ops) for j, k, m in cells]


def mu_records_json(eigs):
    return json.dumps([e.to_dict() for e in eigs], indent=1, sort_keys=True)
