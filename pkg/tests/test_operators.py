import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from magwell.errors import NotSecondOrder
from magwell.field import (
    anisotropic_model_field,
    isotropic_model_field,
    perturbed_model_field,
    skew_model_field,
)
from magwell.hermite import HermiteBasis, HermiteExpansion, TensorHermiteExpansion
from magwell.normal_form import normal_form
from magwell.operators import (
    DETA,
    DX,
    DZ,
    ETA,
    X,
    Z,
    PolyDiffOp,
    apply,
    build_reduced_ops,
    closed_form_ABC,
    derive_reduced_ops,
    effective_operator_eta,
    project,
)
from magwell.quasimode import CellSolver

FIELDS = {
    "isotropic": isotropic_model_field,
    "anisotropic": anisotropic_model_field,
    "skew": skew_model_field,
    "perturbed": perturbed_model_field,
}


@pytest.fixture(scope="module", params=sorted(FIELDS))
def coeffs(request):
    return normal_form(FIELDS[request.param]()).coeffs


BASES = (HermiteBasis(1.3), HermiteBasis(0.8), HermiteBasis(2.1))


def random_tensor(rng, shape=(3, 3, 3)):
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return TensorHermiteExpansion(BASES, c, ("x", "eta", "z"))


def test_commutators():
    one = PolyDiffOp.scalar(1)
    for q, p in ((X, DX), (ETA, DETA), (Z, DZ)):
        assert q.commutator(p).distance(one * 1j) == 0
    assert X.commutator(DETA).max_abs_coeff() == 0


@pytest.mark.parametrize("seed", range(4))
def test_normal_ordering_matches_composition(seed):
    rng = np.random.default_rng(seed)
    gens = [X, DX, ETA, DETA, Z, DZ]
    word = [gens[i] for i in rng.integers(0, 6, size=5)]
    op = PolyDiffOp.scalar(1)
    for g in word:
        op = op * g
    u = random_tensor(rng)
    composed = u
    for g in reversed(word):
        composed = apply(g, composed)
    direct = apply(op, u)
    shape = np.maximum(direct.coeffs.shape, composed.coeffs.shape)
    assert np.allclose(direct.padded(shape).coeffs, composed.padded(shape).coeffs, atol=1e-12)


def test_adjoint_is_inner_product_adjoint():
    rng = np.random.default_rng(3)
    op = (X * DX * ETA + DZ * Z * Z * 2j + ETA * DETA * DETA) * (0.7 - 0.2j)
    u, v = random_tensor(rng), random_tensor(rng)
    lhs = apply(op, u).inner(v)
    rhs = u.inner(apply(op.adjoint(), v))
    assert abs(lhs - rhs) < 1e-10 * abs(lhs)


def test_P0_and_symmetry(coeffs):
    ops = build_reduced_ops(coeffs)
    b0 = coeffs.b0
    assert ops.P0t.distance(DX * DX + X * X * b0**2) == 0
    rng = np.random.default_rng(0)
    for P in (ops.P2t, ops.P3t, ops.P4t):
        assert P.is_symmetric(1e-12)
        u, v = random_tensor(rng), random_tensor(rng)
        a, b = apply(P, u).inner(v), u.inner(apply(P, v))
        assert abs(a - b) <= 1e-10 * max(1, abs(a))


def test_displayed_and_derived_operators_agree(coeffs):
    R1, R2 = build_reduced_ops(coeffs), derive_reduced_ops(coeffs)
    for n in (0, 2, 3, 4):
        assert R1.by_order(n).distance(R2.by_order(n)) < 1e-13


def test_isotropic_P2():
    c = normal_form(isotropic_model_field()).coeffs
    P2 = build_reduced_ops(c).P2t
    expected = X * (X + ETA) * Z * Z * 2 + DZ * DZ
    assert P2.distance(expected) < 1e-15


class _OnlyB0:
    """Normal-form stand-in where every coefficient except ``b0`` vanishes."""

    b0 = 2.0
    l1 = np.zeros(3)
    l2 = np.zeros(3)
    delta = np.zeros(3)

    def a(self, i, j):
        return 0.0

    b = c = a

    def r3(self, *idx):
        return 0.0

    p3 = q3 = r3


def test_only_b0_degeneration():
    ops = build_reduced_ops(_OnlyB0())
    assert ops.P2t.distance(DZ * DZ) == 0
    assert ops.P3t.max_abs_coeff() == 0
    assert ops.P4t.max_abs_coeff() == 0


def test_oscillator_eigenrelations():
    b0 = 1.7
    h1 = DX * DX + X * X * b0**2
    xb = HermiteBasis(b0)
    for k in range(4):
        u = TensorHermiteExpansion.basis_function((xb, BASES[1], BASES[2]), (k, 1, 2))
        out = apply(h1, u)
        assert np.allclose(out.padded(out.coeffs.shape).coeffs,
                           u.padded(out.coeffs.shape).coeffs * (2 * k + 1) * b0, atol=1e-12)
        for ell in (1, 2):
            v = TensorHermiteExpansion.basis_function((xb, BASES[1], BASES[2]), (k + ell, 0, 0))
            w = apply(h1 - (2 * k + 1) * b0, v)
            assert np.allclose(w.coeffs[k + ell, 0, 0], 2 * ell * b0)


def test_Dz_on_psi():
    L2 = 1.9
    zb = HermiteBasis(L2)
    j = 3
    u = TensorHermiteExpansion.basis_function((BASES[0], BASES[1], zb), (0, 0, j))
    out = apply(DZ, u).coeffs[0, 0]
    assert out[j + 1] == pytest.approx(0.5j * L2**0.5)
    assert out[j - 1] == pytest.approx(-0.5j * L2**0.5 * 2 * j)


def test_project():
    u = TensorHermiteExpansion.basis_function(BASES, (2, 1, 0), names=("x", "eta", "z"))
    assert project(u, "x", 2).coeffs[1, 0] == 1
    assert project(u, "x", 3).max_abs() == 0


def test_project_P2_gives_h3():
    c = normal_form(isotropic_model_field()).coeffs
    ops = build_reduced_ops(c)
    s = CellSolver(c, ops, j=1, k=0)
    chi = HermiteExpansion.h(0, 1.0, "eta")
    u0 = s.lift(chi)
    got = apply(ops.P2t, u0).project("x", 0)
    psi = HermiteExpansion.h(1, s.Lambda2, "z")
    h3psi = psi.apply_Dt().apply_Dt() + psi.mul_t2() * s.Lambda2**2
    want = TensorHermiteExpansion.product(chi, h3psi)
    shape = np.maximum(got.coeffs.shape, want.coeffs.shape)
    assert np.allclose(got.padded(shape).coeffs, want.padded(shape).coeffs, atol=1e-13)


def test_effective_operator_matches_closed_forms(coeffs):
    ops = build_reduced_ops(coeffs)
    for k in (0, 1):
        eff = CellSolver(coeffs, ops, 0, k).effective_operator()
        A, B, C = closed_form_ABC(coeffs.Qmat, coeffs.b0, k)
        assert eff.A == pytest.approx(A, rel=1e-8)
        assert eff.B == pytest.approx(B, rel=1e-8, abs=1e-12)
        assert eff.C == pytest.approx(C, rel=1e-8)
        s2 = eff.A * eff.C - eff.B**2
        d = np.linalg.det(coeffs.Qmat) / coeffs.b0**3
        a = coeffs.Qmat[2, 2] / (2 * coeffs.b0)
        assert s2 == pytest.approx((2 * k + 1) ** 2 / (4 * coeffs.b0**2) * d / (2 * a), rel=1e-8)


def test_isotropic_effective_determinant():
    c = normal_form(isotropic_model_field()).coeffs
    eff = CellSolver(c, build_reduced_ops(c), 0, 0).effective_operator()
    assert eff.A * eff.C - eff.B**2 == pytest.approx(1)


def test_scaling_laws():
    c = normal_form(perturbed_model_field()).coeffs
    ops = build_reduced_ops(c)
    rows = []
    for j in range(3):
        for k in range(3):
            e = CellSolver(c, ops, j, k).effective_operator()
            w = np.sqrt(2 * k + 1) * (2 * j + 1)
            rows.append((j, k, e.alpha / w, e.beta / w, e.gamma))
    r = np.array(rows)
    assert np.ptp(r[:, 2]) < 1e-8 * max(1, abs(r[:, 2]).max())
    assert np.ptp(r[:, 3]) < 1e-8 * max(1, abs(r[:, 3]).max())
    M = np.stack([(2 * r[:, 0] + 1) ** 2, (2 * r[:, 1] + 1) ** 2, np.ones(len(r))], 1)
    sol, *_ = np.linalg.lstsq(M, r[:, 4], rcond=None)
    assert np.abs(M @ sol - r[:, 4]).max() <= 1e-8


def test_effective_fit_rejects_higher_order():
    def quartic(chi):
        return chi.mul_t2().mul_t2()

    with pytest.raises(NotSecondOrder):
        effective_operator_eta(quartic)


@given(st.lists(st.floats(-2, 2), min_size=6, max_size=6))
@settings(max_examples=25, deadline=None)
def test_effective_fit_recovers_coefficients(vals):
    from magwell.operators import SecondOrderOp1D

    op = SecondOrderOp1D(*vals)
    got = effective_operator_eta(op.apply)
    assert np.allclose(got.as_tuple(), vals, atol=1e-9)
