"""Reduction of a magnetic well to the canonical frame and gauge.

In the canonical frame the well sits at the origin, ``B(0) = (0, 0, b0)``,
``dB1/dz(0) = 0``, and the potential satisfies ``A1 = 0``,
``A2(0, y, z) = 0``, ``A3(0, 0, z) = 0``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations_with_replacement

import numpy as np

from .errors import NonDegenerateWellViolation
from .field import PolyVecField, WellAnalysis, find_well
from .polynomial import (
    Poly3,
    curl,
    div,
    multinomial_index,
    norm_sq,
    radial_gauge,
    transform_vector_field,
)

TAYLOR_ORDER = 4
_IDENTITY = ((1, 0, 0), (0, 1, 0), (0, 0, 1))


@dataclass(frozen=True)
class Frame:
    """Change of coordinates ``X' = rotation @ (X + translation)``."""

    translation: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-12) or abs(np.linalg.det(R) - 1) > 1e-12:
            raise ValueError("frame rotation must be orthogonal with det +1")

    def to_frame(self, X):
        """Map points (last axis of length 3) into the frame."""
        X = np.asarray(X, dtype=float)
        return (X + self.translation) @ np.asarray(self.rotation, dtype=float).T

    def from_frame(self, Xp):
        Xp = np.asarray(Xp, dtype=float)
        return Xp @ np.asarray(self.rotation, dtype=float) - self.translation

    @property
    def is_identity_rotation(self):
        return np.array_equal(np.asarray(self.rotation, dtype=float), np.eye(3))


def _rotation_to_e3(b):
    """Smallest rotation taking the unit vector ``b`` to ``e3``."""
    b = np.asarray(b, dtype=float)
    b = b / np.linalg.norm(b)
    e3 = np.array([0.0, 0.0, 1.0])
    if np.allclose(b, e3, atol=1e-15):
        return np.eye(3)
    if np.allclose(b, -e3, atol=1e-15):
        return np.diag([1.0, -1.0, -1.0])
    v = np.cross(b, e3)
    s = np.linalg.norm(v)
    c = float(b @ e3)
    K = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + K + K @ K * ((1 - c) / s**2)


def _rotation_z(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _exact_matrix(R):
    """Integer matrix when ``R`` is a signed permutation, to keep rational inputs exact."""
    Ri = np.rint(R)
    if np.array_equal(Ri, R):
        return tuple(tuple(int(v) for v in row) for row in Ri)
    return tuple(tuple(float(v) for v in row) for row in R)


def _transform(field, R, t):
    Rm = _exact_matrix(R)
    tt = [0 if v == 0 else float(v) for v in t]
    if Rm == _IDENTITY and not any(tt):
        A = field.A
    else:
        A = transform_vector_field(field.A, Rm, tt)
    corners = np.array([[x, y, z] for x in field.domain_box[0] for y in field.domain_box[1]
                        for z in field.domain_box[2]])
    moved = (corners + np.asarray(tt, dtype=float)) @ np.asarray(R, dtype=float).T
    box = tuple((float(lo), float(hi)) for lo, hi in zip(moved.min(0), moved.max(0)))
    return PolyVecField(A, box, field.max_degree)


def align_frame(field: PolyVecField, well: WellAnalysis):
    """Translate the well to the origin and rotate so ``B(0) = (0, 0, b0)`` and ``alpha_3 = 0``."""
    t = -np.asarray(well.X0, dtype=float)
    R1 = _rotation_to_e3(well.B0)
    stage = _transform(field, R1, t)
    B1, B2 = stage.B[0], stage.B[1]
    alpha3 = float(B1.coeff(0, 0, 1))
    beta3 = float(B2.coeff(0, 0, 1))
    scale = max(abs(alpha3), abs(beta3), well.b0)
    if abs(alpha3) <= 1e-13 * scale:
        theta = 0.0
    elif beta3 == 0:
        theta = math.pi / 2
    else:
        # alpha3' = cos(theta) alpha3 - sin(theta) beta3; theta in (-pi/2, pi/2)
        theta = math.atan(alpha3 / beta3)
    R = _rotation_z(theta) @ R1 if theta else R1
    frame = Frame(translation=t, rotation=R)
    return frame, _transform(field, R, t)


@dataclass(frozen=True)
class NormalFormCoeffs:
    """Taylor data of the aligned field at the well.

    Index conventions follow the usual ones for this reduction: ``l1 = (alpha_1,
    alpha_2, alpha_3)`` and ``l2 = (beta_1, beta_2, beta_3)`` are the linear parts
    of ``B1, B2``; ``aQ, bQ, cQ`` the symmetric matrices of the quadratic parts of
    ``B1, B2, B3``; ``pC, qC, rC`` the cubic monomial coefficients keyed by sorted
    1-based triples; ``delta`` the ``z^4`` coefficients.
    """

    b0: float
    l1: np.ndarray
    l2: np.ndarray
    aQ: np.ndarray
    bQ: np.ndarray
    cQ: np.ndarray
    pC: dict
    qC: dict
    rC: dict
    delta: np.ndarray
    Qmat: np.ndarray
    B_taylor: tuple
    A2_poly: Poly3
    A3_poly: Poly3

    # 1-based coefficient accessors
    def a(self, i, j):
        return float(self.aQ[i - 1, j - 1])

    def b(self, i, j):
        return float(self.bQ[i - 1, j - 1])

    def c(self, i, j):
        return float(self.cQ[i - 1, j - 1])

    def q(self, i, j):
        return float(self.Qmat[i - 1, j - 1])

    def p3(self, *idx):
        return float(self.pC.get(tuple(sorted(idx)), 0.0))

    def q3(self, *idx):
        return float(self.qC.get(tuple(sorted(idx)), 0.0))

    def r3(self, *idx):
        return float(self.rC.get(tuple(sorted(idx)), 0.0))

    @property
    def alpha(self):
        return self.l1

    @property
    def beta(self):
        return self.l2

    @property
    def a_well(self):
        """``a = q33 / (2 b0)``."""
        return float(self.Qmat[2, 2] / (2 * self.b0))

    @property
    def d_well(self):
        """``d = det Hess|B| = det Q / b0^3``."""
        return float(np.linalg.det(self.Qmat) / self.b0**3)

    def to_dict(self):
        def cub(m):
            return {"".join(map(str, k)): float(v) for k, v in sorted(m.items())}

        return {
            "b0": float(self.b0),
            "l1": [float(v) for v in self.l1],
            "l2": [float(v) for v in self.l2],
            "aQ": self.aQ.astype(float).tolist(),
            "bQ": self.bQ.astype(float).tolist(),
            "cQ": self.cQ.astype(float).tolist(),
            "pC": cub(self.pC),
            "qC": cub(self.qC),
            "rC": cub(self.rC),
            "delta": [float(v) for v in self.delta],
            "Qmat": self.Qmat.astype(float).tolist(),
            "A2": _poly_records(self.A2_poly),
            "A3": _poly_records(self.A3_poly),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


def _poly_records(p):
    return [{"exponents": list(e), "coeff": float(c)} for e, c in sorted(p.items())]


def _quadratic_matrix(P):
    M = np.zeros((3, 3))
    for (i, j, k), c in P.homogeneous(2).items():
        e = (i, j, k)
        axes = [a for a in range(3) for _ in range(e[a])]
        u, v = axes
        if u == v:
            M[u, u] = float(c)
        else:
            M[u, v] = M[v, u] = float(c) / 2
    return M


def _cubic_map(P):
    out = {}
    for idx in combinations_with_replacement((1, 2, 3), 3):
        out[idx] = 0.0
    for e, c in P.homogeneous(3).items():
        out[multinomial_index(e)] = float(c)
    return out


def _is_exact(B):
    return all(not isinstance(c, float) for comp in B for _, c in comp.items())


def extract_taylor(aligned: PolyVecField, tol=1e-10):
    """Read every Taylor coefficient of the aligned field at the origin.

    Raises :class:`NonDegenerateWellViolation` when ``Q`` is not positive
    definite in the aligned frame.
    """
    B = tuple(b.truncate(TAYLOR_ORDER) for b in aligned.B)
    b0 = float(B[2].coeff(0, 0, 0))
    if b0 <= 0:
        raise NonDegenerateWellViolation(f"B3(0) = {b0} is not positive in the aligned frame")
    scale = max(b0, max((abs(float(c)) for comp in B for _, c in comp.items()), default=1.0))
    for comp, name in ((B[0], "B1"), (B[1], "B2")):
        if abs(float(comp.coeff(0, 0, 0))) > tol * scale:
            raise NonDegenerateWellViolation(f"{name}(0) does not vanish in the aligned frame")
    if any(abs(float(c)) > tol * scale for _, c in B[2].homogeneous(1).items()):
        raise NonDegenerateWellViolation("grad B3(0) does not vanish: origin is not a critical point")
    alpha3 = float(B[0].coeff(0, 0, 1))
    if abs(alpha3) > tol * scale:
        raise ValueError(f"alpha_3 = {alpha3} is not zero; run align_frame first")

    # exact zeros enforced by the alignment
    B = (
        B[0] - B[0].homogeneous(0) - Poly3({(0, 0, 1): B[0].coeff(0, 0, 1)}),
        B[1] - B[1].homogeneous(0),
        B[2] - B[2].homogeneous(1),
    )
    l1 = np.array([float(B[0].coeff(*e)) for e in ((1, 0, 0), (0, 1, 0), (0, 0, 1))])
    l2 = np.array([float(B[1].coeff(*e)) for e in ((1, 0, 0), (0, 1, 0), (0, 0, 1))])
    aQ, bQ, cQ = (_quadratic_matrix(b) for b in B)
    pC, qC, rC = (_cubic_map(b) for b in B)
    delta = np.array([float(b.coeff(0, 0, 4)) for b in B])

    Q = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            Q[i, j] = l1[i] * l1[j] + l2[i] * l2[j] + 2 * b0 * cQ[i, j]
    if not np.all(np.linalg.eigvalsh(Q) > 1e-10 * np.trace(Q)):
        raise NonDegenerateWellViolation(
            f"Q = {Q.tolist()} is not positive definite (non-degeneracy fails)"
        )
    A2, A3 = _normal_gauge(B)
    coeffs = NormalFormCoeffs(
        b0=b0, l1=l1, l2=l2, aQ=aQ, bQ=bQ, cQ=cQ, pC=pC, qC=qC, rC=rC,
        delta=delta, Qmat=Q, B_taylor=B, A2_poly=A2, A3_poly=A3,
    )
    check_identities(coeffs, tol=0 if _is_exact(B) else 1e-12)
    return coeffs


def _normal_gauge(B):
    A2 = B[2].integrate(0)
    A3 = -B[1].integrate(0) + B[0].restrict(0).integrate(1)
    return A2, A3


def build_normal_gauge(coeffs: NormalFormCoeffs):
    """Normal-gauge potential ``(0, A2, A3)`` through total degree 5.

    ``A2 = int_0^x B3``, ``A3 = -int_0^x B2 + int_0^y B1(0, y', z) dy'``.
    """
    return _normal_gauge(coeffs.B_taylor)


def check_identities(coeffs: NormalFormCoeffs, tol=1e-12):
    """Assert the divergence identities and the entry formulas for ``Q``."""
    B = coeffs.B_taylor
    scale = max(1.0, coeffs.b0)
    l1, l2 = coeffs.l1, coeffs.l2
    problems = []
    if abs(l1[2]) > tol * scale:
        problems.append("alpha_3 != 0")
    if abs(l1[0] + l2[1]) > tol * scale:
        problems.append("alpha_1 + beta_2 != 0")
    for j in range(3):
        s = coeffs.aQ[0, j] + coeffs.bQ[1, j] + coeffs.cQ[2, j]
        if abs(s) > tol * scale:
            problems.append(f"a_1{j+1} + b_2{j+1} + c_3{j+1} != 0")
    for d in range(1, TAYLOR_ORDER + 1):
        dv = div(tuple(b.homogeneous(d) for b in B))
        if any(abs(float(c)) > tol * scale for _, c in dv.items()):
            problems.append(f"degree-{d} divergence identity fails")
    f = norm_sq(tuple(b.to_float() for b in B))
    H = np.array([[f.diff(a).diff(b).coeff(0, 0, 0) for b in range(3)] for a in range(3)]) / 2
    if not np.allclose(H, coeffs.Qmat, rtol=0, atol=max(tol, 1e-12) * scale):
        problems.append("Q != Hess(|B|^2)(0)/2")
    A2, A3 = coeffs.A2_poly, coeffs.A3_poly
    Bn = curl((Poly3(), A2, A3))
    for a in range(3):
        diff = (Bn[a] - B[a]).truncate(TAYLOR_ORDER)
        if any(abs(float(c)) > tol * scale for _, c in diff.items()):
            problems.append(f"curl of the normal-gauge potential misses B{a+1}")
    if problems:
        raise AssertionError("; ".join(problems))


@dataclass(frozen=True)
class NormalForm:
    """Everything needed to move between the original and canonical descriptions."""

    field: PolyVecField
    well: WellAnalysis
    frame: Frame
    aligned: PolyVecField
    coeffs: NormalFormCoeffs
    gauge: Poly3

    @property
    def normal_potential(self):
        return (Poly3(), self.coeffs.A2_poly, self.coeffs.A3_poly)

    @cached_property
    def exact_normal_potential(self):
        """Normal-gauge potential of the full aligned field, without truncation."""
        A2, A3 = _normal_gauge(self.aligned.B)
        return (Poly3(), A2, A3)

    @cached_property
    def exact_gauge(self):
        """``chi`` with ``A_aligned = exact_normal_potential + grad chi`` exactly."""
        D = tuple(a - n for a, n in zip(self.aligned.A, self.exact_normal_potential))
        return radial_gauge(D)


def gauge_function(aligned: PolyVecField, coeffs: NormalFormCoeffs):
    """Polynomial ``chi`` with ``A_aligned = A_normal + grad chi`` up to degree 5."""
    D = tuple(a - n for a, n in zip(aligned.A, (Poly3(), coeffs.A2_poly, coeffs.A3_poly)))
    return radial_gauge(D)


def normal_form(field: PolyVecField, well: WellAnalysis | None = None, **well_kwargs):
    if well is None:
        well = find_well(field, **well_kwargs)
    frame, aligned = align_frame(field, well)
    coeffs = extract_taylor(aligned)
    chi = gauge_function(aligned, coeffs)
    return NormalForm(field, well, frame, aligned, coeffs, chi)
