import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from magwell.errors import BoundaryError, ConvergenceError
from magwell.field import find_well, isotropic_model_field
from magwell.grid import (
    DiscreteH,
    Grid3,
    apply_H_spectral,
    discrete_laplacian_eigenvalue,
    discretize,
    dirichlet_laplacian_eigenvalue,
    lowest_eigenpairs,
    oscillator_1d,
    oscillator_1d_eigenvalues,
    residual_norm,
)

ZERO = (lambda x, y, z: 0 * x, lambda x, y, z: 0 * x, lambda x, y, z: 0 * x)


def _landau(b0=1.0):
    return (lambda x, y, z: 0 * x, lambda x, y, z: b0 * x, lambda x, y, z: 0 * x)


def _skewed():
    # a non-trivial polynomial potential with all three components active
    return (lambda x, y, z: y * z + 0.1 * x,
            lambda x, y, z: x + 0.2 * z**2,
            lambda x, y, z: -0.3 * x * y + 0.05 * x**2)


def _bump(grid, center=(0.1, -0.2, 0.05), width=0.5):
    X, Y, Z = grid.mesh()
    r2 = (X - center[0]) ** 2 + (Y - center[1]) ** 2 + (Z - center[2]) ** 2
    return (np.exp(-r2 / (2 * width**2)) * (1 + 0.3j * X)).ravel()


def test_grid_invariants():
    g = Grid3(((-1, 1), (0, 3), (-2, 2)), (9, 11, 15))
    assert g.spacing == pytest.approx((2 / 10, 3 / 12, 4 / 16))
    assert g.shape == (9, 11, 15) and g.size == 9 * 11 * 15
    xs = g.axes()[0]
    assert xs[0] == pytest.approx(-1 + 0.2) and xs[-1] == pytest.approx(1 - 0.2)
    assert Grid3(((-1, 1),) * 3, 10).n == (10, 10, 10)
    assert g.refined(2).spacing == pytest.approx(tuple(s / 2 for s in g.spacing))
    c = Grid3.centered((1, 2, 3), (1, 1, 2), 9)
    assert c.box == ((0, 2), (1, 3), (1, 5))
    with pytest.raises(ValueError):
        Grid3(((-1, 1),) * 3, 7)
    with pytest.raises(ValueError):
        Grid3(((1, 1), (0, 1), (0, 1)), 9)


def test_hermitian_by_construction():
    g = Grid3(((-2, 2), (-2, 3), (-1, 2)), (9, 10, 11))
    Hd = discretize(_skewed(), 0.3, g)
    assert Hd.hermiticity_defect() == 0.0
    assert np.all(np.imag(Hd.matrix.diagonal()) == 0)
    rng = np.random.default_rng(0)
    for _ in range(5):
        u = rng.standard_normal(g.size) + 1j * rng.standard_normal(g.size)
        v = rng.standard_normal(g.size) + 1j * rng.standard_normal(g.size)
        lhs = np.vdot(Hd @ u, v)
        rhs = np.vdot(u, Hd @ v)
        assert abs(lhs - rhs) <= 1e-12 * np.linalg.norm(u) * np.linalg.norm(v) * abs(Hd.matrix).max()


def test_zero_potential_is_scaled_laplacian_stencil():
    g = Grid3(((0, 1), (0, 2), (0, 3)), (8, 9, 10))
    h = 0.7
    Hd = discretize(ZERO, h, g)
    lap = []
    for n, dx in zip(g.n, g.spacing):
        lap.append(sp.diags([-1, 2, -1], [-1, 0, 1], shape=(n, n)) / dx**2)
    I = [sp.identity(n) for n in g.n]
    L = (sp.kron(sp.kron(lap[0], I[1]), I[2]) + sp.kron(sp.kron(I[0], lap[1]), I[2])
         + sp.kron(sp.kron(I[0], I[1]), lap[2]))
    assert abs(Hd.matrix - h * h * L).max() < 1e-12 * h * h / min(g.spacing) ** 2


def test_zero_potential_matches_discrete_formula():
    g = Grid3(((0, 1), (0, 1.3), (0, 1.7)), (9, 10, 12))
    Hd = discretize(ZERO, 1.0, g)
    vals = sorted(v for v, _, _ in lowest_eigenpairs(Hd, 3, tol=1e-10))
    modes = [(1, 1, 1), (1, 1, 2), (1, 2, 1), (2, 1, 1), (1, 1, 3)]
    ref = sorted(discrete_laplacian_eigenvalue(1.0, g, m) for m in modes)[:3]
    np.testing.assert_allclose(vals, ref, rtol=1e-9)


def test_laplacian_convergence_order():
    box = ((0, 1), (0, 1.5), (0, 2))
    exact = dirichlet_laplacian_eigenvalue(1.0, box)
    errs, dxs = [], []
    for n in (9, 19, 39):
        g = Grid3(box, n)
        lam = lowest_eigenpairs(discretize(ZERO, 1.0, g), 1, tol=1e-11,
                                preconditioner="kinetic")[0][0]
        errs.append(abs(lam - exact))
        dxs.append(g.spacing[0])
    order = np.polyfit(np.log(dxs), np.log(errs), 1)[0]
    assert 1.8 <= order <= 2.2


def test_constant_field_lowest_eigenvalue_is_landau_level():
    h = 0.2
    g = Grid3(((-6, 6),) * 3, (47, 47, 15))
    lam = lowest_eigenpairs(discretize(_landau(), h, g), 1, tol=1e-7,
                            preconditioner="amg")[0][0]
    assert 0.99 * h <= lam <= 1.5 * h


def test_diagonal_matrix():
    r = lowest_eigenpairs(sp.diags([3.0, 1.0, 2.0]).tocsr(), 3)
    assert [v for v, _, _ in r] == pytest.approx([1, 2, 3])


def test_random_sparse_hermitian_against_dense():
    rng = np.random.default_rng(1)
    n = 400
    R = sp.random(n, n, density=0.02, random_state=rng, format="csr")
    R = R + 1j * sp.random(n, n, density=0.02, random_state=rng, format="csr")
    M = (R + R.conj().T) / 2 + sp.diags(np.linspace(0, 40, n))
    dense = np.linalg.eigvalsh(M.toarray())
    r = lowest_eigenpairs(M.tocsr(), 6, tol=1e-10, preconditioner=None, maxiter=20000)
    vals = np.array([v for v, _, _ in r])
    np.testing.assert_allclose(vals, dense[:6], rtol=1e-8, atol=1e-8 * abs(dense).max())


def test_harmonic_oscillator_1d():
    vals = oscillator_1d_eigenvalues(2000, 10.0, count=3)
    np.testing.assert_allclose(vals, [1, 3, 5], atol=1e-4)
    M, _ = oscillator_1d(2000, 10.0)
    r = lowest_eigenpairs(M, 3, tol=1e-9, preconditioner="amg")
    np.testing.assert_allclose([v for v, _, _ in r], [1, 3, 5], atol=1e-4)


def test_nonconvergence_raises_with_residuals():
    M, _ = oscillator_1d(3000, 10.0)
    with pytest.raises(ConvergenceError) as e:
        lowest_eigenpairs(M, 2, tol=1e-12, preconditioner=None, maxiter=5, chunk=5)
    assert len(e.value.residuals) == 2 and max(e.value.residuals) > 1e-12


def test_count_bounds():
    with pytest.raises(ValueError):
        lowest_eigenpairs(sp.identity(50).tocsr(), 21)


def test_residual_norm_properties():
    g = Grid3(((-3, 3),) * 3, 11)
    Hd = discretize(_landau(), 0.5, g)
    lam, v, _ = lowest_eigenpairs(Hd, 1, tol=1e-10, preconditioner="amg")[0]
    assert residual_norm(Hd, v, lam) <= 1e-10 * lam
    for delta in (1e-3, 1e-2, 0.1):
        r = residual_norm(Hd, v, lam + delta)
        assert r >= delta * (1 - 1e-6)
        assert r == pytest.approx(delta, rel=1e-6)
    with pytest.raises(ValueError):
        residual_norm(Hd, v[:-1], lam)


def test_gauge_covariance_at_second_order():
    h = 0.4
    A = _skewed()
    chi = lambda x, y, z: 0.3 * x * y + 0.1 * z**3 - 0.2 * x * z   # noqa: E731
    grad = (lambda x, y, z: 0.3 * y - 0.2 * z,
            lambda x, y, z: 0.3 * x,
            lambda x, y, z: 0.3 * z**2 - 0.2 * x)
    Ag = tuple((lambda a, g: (lambda x, y, z: a(x, y, z) + g(x, y, z)))(a, g)
               for a, g in zip(A, grad))
    disc = []
    for n in (15, 31, 63):
        g = Grid3(((-3, 3),) * 3, n)
        u = _bump(g)
        phase = np.exp(1j * chi(*g.mesh()) / h).ravel()
        lhs = discretize(Ag, h, g) @ (phase * u)
        rhs = phase * (discretize(A, h, g) @ u)
        disc.append(np.linalg.norm(lhs - rhs) / np.linalg.norm(u))
    ratios = [disc[0] / disc[1], disc[1] / disc[2]]
    assert 3 <= ratios[-1] <= 5, ratios


def test_spectrum_bounded_below():
    g = Grid3(((-2, 2),) * 3, 9)
    Hd = discretize(_skewed(), 0.3, g)
    w = np.linalg.eigvalsh(Hd.matrix.toarray())
    assert w.min() > -1e-10


def test_boundary_margin():
    field = isotropic_model_field()
    well = find_well(field)
    g = Grid3(((-1, 1),) * 3, 9)
    with pytest.raises(BoundaryError):
        discretize(field, 0.1, g, well=well, margin=2.0)
    discretize(field, 0.1, g, well=well, margin=0.5)


def test_coo_export():
    g = Grid3(((-1, 1),) * 3, 8)
    Hd = discretize(_landau(), 0.5, g)
    text = Hd.to_coo_text()
    lines = text.splitlines()
    head = lines[0].split()
    assert head[:4] == ["%", "magwell-coo", str(g.size), str(g.size)]
    nnz = int(head[4])
    assert len(lines) == nnz + 1
    rows = np.array([[float(t) for t in ln.split()] for ln in lines[1:]])
    M = sp.csr_matrix((rows[:, 2] + 1j * rows[:, 3], (rows[:, 0].astype(int), rows[:, 1].astype(int))),
                      shape=Hd.shape)
    assert abs(M - Hd.matrix).max() == 0
    assert text == Hd.to_coo_text()


def test_spectral_application_matches_polynomial_eigenfunction():
    # e^{-b x^2/2 ...}: the Landau ground state exp(-(x^2+y^2)/(4h) + i x y/(2h))
    # in the symmetric gauge A = (-y/2, x/2, 0) has H u = h u
    h = 0.3
    A = (lambda x, y, z: -y / 2, lambda x, y, z: x / 2, lambda x, y, z: 0 * x)
    axes = [np.linspace(-6, 6, 96, endpoint=False)] * 2 + [np.linspace(-3, 3, 16, endpoint=False)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    u = np.exp(-(X**2 + Y**2) / (4 * h)) * np.ones_like(Z)
    Hu = apply_H_spectral(u, axes, A, h)
    assert np.abs(Hu - h * u).max() < 1e-10


@settings(max_examples=20, deadline=None)
@given(h=st.floats(0.05, 2.0), b=st.floats(-3, 3), seed=st.integers(0, 10_000))
def test_hermiticity_property(h, b, seed):
    g = Grid3(((-1, 1), (-1.5, 1), (-1, 2)), (8, 9, 8))
    A = (lambda x, y, z: b * y * z, lambda x, y, z: x - b * z, lambda x, y, z: b * x * x)
    Hd = discretize(A, h, g)
    assert isinstance(Hd, DiscreteH)
    assert Hd.hermiticity_defect() == 0.0
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(g.size) + 1j * rng.standard_normal(g.size)
    # sum of squares: the quadratic form is non-negative
    assert np.vdot(u, Hd @ u).real >= -1e-9 * np.linalg.norm(u) ** 2
    assert math.isclose(np.vdot(u, Hd @ u).imag, 0.0, abs_tol=1e-9 * np.vdot(u, Hd @ u).real)
