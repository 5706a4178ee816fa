import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from magwell.hermite import (
    HermiteBasis,
    HermiteExpansion,
    ScaleMismatch,
    TensorHermiteExpansion,
    inner,
)

SQRT_PI = math.sqrt(math.pi)
h = HermiteExpansion.h


def coeffs_of(e, n=None):
    c = e.coeffs
    if n is not None:
        c = np.pad(c, (0, max(0, n - len(c))))[:n]
    return c


def test_mul_t_examples():
    assert np.allclose(coeffs_of(h(0).mul_t(), 2), [0, 0.5])
    assert np.allclose(coeffs_of(h(1, lam=4).mul_t(), 3), [0.5, 0, 0.25])


def test_mul_t2_t3_examples():
    assert np.allclose(coeffs_of(h(0).mul_t2(), 3), [0.5, 0, 0.25])
    assert np.allclose(coeffs_of(h(0).mul_t3(), 4), [0, 6 / 8, 0, 1 / 8])


def test_Dt_example():
    assert np.allclose(coeffs_of(h(0).apply_Dt(), 2), [0, 0.5j])


def test_sym_examples():
    assert np.allclose(coeffs_of(h(0).apply_sym2(), 4), 0.25j * np.array([0, 2, 0, 1]))
    assert np.allclose(coeffs_of(h(0).apply_sym4(), 6), 1j / 16 * np.array([0, 12, 0, 12, 0, 1]))


def test_inner_examples():
    assert inner(h(0), h(0)) == pytest.approx(SQRT_PI)
    assert inner(h(0), h(1)) == 0
    assert inner(h(3), h(3)) == pytest.approx(48 * SQRT_PI)


def test_inner_scale_mismatch():
    with pytest.raises(ScaleMismatch):
        inner(h(0, lam=1), h(0, lam=2))


def test_pointwise_t_h3():
    t = np.array([0.0, 0.5, 1.0])
    lhs = t * h(3)(t)
    assert np.allclose(h(3).mul_t()(t), lhs, atol=1e-13)


def test_Dt_finite_difference():
    e, t, s = h(2), 0.7, 1e-5
    fd = -1j * (e(t + s) - e(t - s)) / (2 * s)
    assert abs(e.apply_Dt()(t)[0] - fd[0]) < 1e-8


def test_norm_is_scaled():
    # int h_m^2 = lam^(1/2) ||H_m||^2
    t = np.linspace(-20, 20, 20001)
    for lam in (0.5, 2.0):
        v = h(2, lam=lam)(t).real
        assert np.trapezoid(v * v, t) == pytest.approx(math.sqrt(lam) * 8 * SQRT_PI, rel=1e-10)
        assert inner(h(2, lam=lam), h(2, lam=lam)) == pytest.approx(math.sqrt(lam) * 8 * SQRT_PI)


LHS = {
    "mul_t": lambda t, v, dv: t * v,
    "mul_t2": lambda t, v, dv: t**2 * v,
    "mul_t3": lambda t, v, dv: t**3 * v,
    "apply_Dt": lambda t, v, dv: -1j * dv,
    "apply_sym2": lambda t, v, dv: -1j * (2 * t * v + 2 * t**2 * dv),
    "apply_sym4": lambda t, v, dv: -1j * (4 * t**3 * v + 2 * t**4 * dv),
}


@pytest.mark.parametrize("rule", sorted(LHS))
@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_rules_against_quadrature(rule, lam):
    """Project the left-hand side by Gauss-Hermite quadrature and compare coefficients."""
    basis = HermiteBasis(lam)
    s, w = np.polynomial.hermite.hermgauss(80)
    t = s / math.sqrt(lam)
    n = 20
    psi = basis.normalized_values(t, n)  # includes exp(-s^2/2)
    for m in range(13):
        vals = basis.values(t, m + 2)
        v = vals[m]
        # derivative: d/dt h_m = lam^(1/2) (m h_{m-1} - h_{m+1}/2)
        dv = math.sqrt(lam) * ((m * vals[m - 1] if m else 0) - vals[m + 1] / 2)
        f = LHS[rule](t, v, dv)
        ortho = (psi * f * np.exp(s**2)) @ w / math.sqrt(lam)
        got = getattr(h(m, lam), rule)().to_orthonormal()
        got = np.pad(got, (0, n - len(got)))
        assert np.allclose(got, ortho, rtol=0, atol=1e-10 * max(1, np.abs(ortho).max()))


def random_expansion(draw_vals, lam=1.0):
    return HermiteExpansion(HermiteBasis(lam), np.asarray(draw_vals))


cplx = st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False)
vecs = st.lists(cplx, min_size=1, max_size=6)


@given(vecs, st.sampled_from([0.5, 1.0, 2.0]))
@settings(max_examples=50, deadline=None)
def test_compositions(v, lam):
    e = random_expansion(v, lam)
    assert np.allclose(e.mul_t().mul_t().coeffs, e.mul_t2().padded((len(v) + 2,)).coeffs)
    assert np.allclose(e.mul_t2().mul_t().coeffs, e.mul_t3().padded((len(v) + 3,)).coeffs)
    sym2 = e.mul_t2().apply_Dt() + e.apply_Dt().mul_t2()
    assert np.allclose(sym2.coeffs, e.apply_sym2().padded(sym2.coeffs.shape).coeffs)
    t4 = lambda u: u.mul_t2().mul_t2()
    sym4 = t4(e).apply_Dt() + t4(e.apply_Dt())
    assert np.allclose(sym4.coeffs, e.apply_sym4().padded(sym4.coeffs.shape).coeffs)


@given(vecs, vecs)
@settings(max_examples=50, deadline=None)
def test_Dt_symmetric(v1, v2):
    e1, e2 = random_expansion(v1, 1.7), random_expansion(v2, 1.7)
    lhs, rhs = inner(e1.apply_Dt(), e2), inner(e1, e2.apply_Dt())
    assert abs(lhs - rhs) <= 1e-12 * max(1, abs(lhs))
    # <(tD + Dt) e, e> is real-symmetric too; on h_m its diagonal vanishes
    for m in range(5):
        u = h(m)
        assert abs(inner(u.mul_t().apply_Dt() + u.apply_Dt().mul_t(), u)) < 1e-12


@given(st.lists(cplx, min_size=1, max_size=4))
@settings(max_examples=20, deadline=None)
def test_parity(v):
    c = np.zeros(2 * len(v), dtype=complex)
    c[::2] = v
    out = HermiteExpansion(HermiteBasis(1.0), c).mul_t().coeffs
    assert np.all(out[::2] == 0)


def test_tensor_project_and_embed():
    b = [HermiteBasis(1.0), HermiteBasis(0.7), HermiteBasis(2.0)]
    u = TensorHermiteExpansion.basis_function(b, (2, 1, 0), names="xez")
    chi_psi = u.project("x", 2)
    assert isinstance(chi_psi, TensorHermiteExpansion) and chi_psi.names == ("e", "z")
    assert chi_psi.coeffs[1, 0] == 1
    assert np.all(u.project("x", 3).coeffs == 0)
    back = chi_psi.embed("x", 2, b[0], position=0)
    assert np.array_equal(back.coeffs, u.coeffs)


def test_tensor_inner_and_eval():
    b = [HermiteBasis(1.0), HermiteBasis(2.0)]
    u = TensorHermiteExpansion.basis_function(b, (1, 2))
    assert u.inner(u) == pytest.approx(2 * SQRT_PI * math.sqrt(2) * 8 * SQRT_PI)
    x = np.array([0.3, -0.2])
    z = np.array([0.1, 0.5, 0.9])
    vals = u.evaluate_grid(x, z)
    ex = b[0].values(x, 2)[1][:, None] * b[1].values(z, 3)[2][None, :]
    assert np.allclose(vals, ex)


def test_fit_roundtrip():
    basis = HermiteBasis(1.3)
    e = HermiteExpansion(basis, [1, 0.5j, -0.25, 0, 0.1])
    f = HermiteExpansion.fit(lambda t: e(t), basis, 8)
    assert np.allclose(f.coeffs[:5], e.coeffs, atol=1e-12)
    assert np.allclose(f.coeffs[5:], 0, atol=1e-12)


def test_orthonormal_map_roundtrip():
    basis = HermiteBasis(0.6)
    e = HermiteExpansion(basis, [1, 2, 3j])
    o = e.to_orthonormal()
    assert np.sum(np.abs(o) ** 2) == pytest.approx(e.inner(e).real)
    back = HermiteExpansion.from_orthonormal((basis,), o)
    assert np.allclose(back.coeffs, e.coeffs)
