import math

import numpy as np
import pytest

from magwell.errors import ResolutionError
from magwell.field import isotropic_model_field, perturbed_model_field, skew_model_field
from magwell.grid import Grid3, _fourier_derivative
from magwell.hermite import TensorHermiteExpansion
from magwell.normal_form import normal_form
from magwell.operators import apply, build_reduced_ops
from magwell.polynomial import Poly3
from magwell.quasimode import solve_cell
from magwell.render import (
    evaluate_reduced,
    evaluate_reduced_points,
    flat_top_cutoff,
    read_grid_dump,
    render_aligned,
    render_quasimode,
    scaled_support,
    smooth_step,
    write_grid_dump,
)


@pytest.fixture(scope="module")
def iso():
    nf = normal_form(isotropic_model_field())
    return nf, solve_cell(nf.coeffs, 0, 0, 0)


def test_smooth_step_and_cutoff():
    t = np.linspace(-1, 2, 301)
    s = smooth_step(t)
    assert np.all(s[t <= 0] == 0) and np.all(s[t >= 1] == 1)
    assert np.all(np.diff(s) >= 0)
    assert smooth_step(0.5) == pytest.approx(0.5)
    r = np.array([0.0, 0.5, 0.99, 1.0, 1.5])
    np.testing.assert_allclose(flat_top_cutoff(r, 2.0), [1, 1, 1, 1 - smooth_step(0.0), 0.5])
    assert flat_top_cutoff(2.0, 2.0) == 0


def test_ground_state_has_closed_form(iso):
    """phi0(x - eta) chi0(eta) psi0(z) transforms to exp(-(x^2 + y^2)/4 + ixy/2 - z^2/2)."""
    nf, b = iso
    u = b.u[0]
    xs = np.linspace(-4, 4, 17)
    ys = np.linspace(-4, 4, 15)
    zs = np.linspace(-3, 3, 7)
    w = evaluate_reduced(u, 1.0, 0.0, xs, ys, zs)
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    ref = np.exp(-(X**2 + Y**2) / 4 + 1j * X * Y / 2 - Z**2 / 2)
    ratio = w / ref
    np.testing.assert_allclose(ratio, ratio.flat[0], rtol=1e-10)


def test_points_path_matches_tensor_path():
    nf = normal_form(skew_model_field())
    b = solve_cell(nf.coeffs, 0, 0, 1)
    u = b.combined(0.05)
    sup = scaled_support(u, b.b0, b.beta3)
    xs, ys, zs = np.linspace(-3, 3, 5), np.linspace(-4, 4, 6), np.linspace(-2, 2, 4)
    w = evaluate_reduced(u, b.b0, b.beta3, xs, ys, zs, sup)
    P = np.stack([a.ravel() for a in np.meshgrid(xs, ys, zs, indexing="ij")], axis=1)
    wp = evaluate_reduced_points(u, b.b0, b.beta3, P, sup, chunk=17)
    np.testing.assert_allclose(wp, w.ravel(), atol=1e-12 * np.abs(w).max())


def _scaled_orders(poly, shift, top=4):
    """Split ``poly(sqrt(h) x, sqrt(h) y, h^1/4 z) / h^(shift/4)`` by powers of ``h^1/4``."""
    out = {}
    for (a, b, c), v in poly.items():
        ell = 2 * a + 2 * b + c - shift
        if ell <= top:
            out.setdefault(ell, {})[(a, b, c)] = float(v)
    return {ell: Poly3(t) for ell, t in out.items()}


def _real_space_orders(nf, w, axes, top=4):
    """Order-by-order action of ``H^h / h`` in scaled variables, normal gauge.

    ``H/h = Dx^2 + (Dy - a2)^2 + s^2 (Dz - a3)^2`` with ``s = h^1/4`` and
    ``a2 = sum s^l a2_l``, ``a3 = sum s^l a3_l``.
    """
    _, A2, A3 = nf.normal_potential
    a2 = _scaled_orders(A2, 2, top)
    a3 = _scaled_orders(A3, 3, top)
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    d = [ax[1] - ax[0] for ax in axes]

    def D(f, j):
        return _fourier_derivative(f, j, d[j])

    def ev(p):
        return np.broadcast_to(p(X, Y, Z), w.shape)

    def square_order(a, ell, axis):
        # order-ell part of (D - sum s^l a_l)^2 applied to w
        r = D(D(w, axis), axis) if ell == 0 else 0
        if ell in a:
            f = ev(a[ell])
            r = r - (D(f * w, axis) + f * D(w, axis))
        for p in a:
            if ell - p in a:
                r = r + ev(a[p]) * ev(a[ell - p]) * w
        return r

    out = []
    for ell in range(top + 1):
        r = square_order(a2, ell, 1)
        if ell == 0:
            r = r + D(D(w, 0), 0)
        if ell >= 2:
            r = r + square_order(a3, ell - 2, 2)
        out.append(r)
    return out


@pytest.mark.parametrize("make", [skew_model_field, perturbed_model_field])
def test_render_intertwines_reduced_and_physical_operators(make):
    """Rendering maps each reduced operator onto the scaled physical operator.

    This pins down the Fourier convention, the translation and the sign of
    the quadratic gauge phase: the opposite phase sign fails at order 2.
    """
    nf = normal_form(make())
    ops = build_reduced_ops(nf.coeffs)
    b = solve_cell(nf.coeffs, 0, 0, 0)
    rng = np.random.default_rng(3)
    c = np.zeros((5, 5, 5), complex)
    c[:2, :3, :2] = rng.standard_normal((2, 3, 2))
    v = TensorHermiteExpansion(b.bases, c)
    sup = scaled_support(v.padded((16, 16, 16)), b.b0, b.beta3)
    axes = [np.linspace(-L, L, n, endpoint=False)
            for L, n in ((sup.X, 112), (sup.Y, 128), (sup.Z, 96))]
    for sign, should_match in ((1, True), (-1, False)):
        w = evaluate_reduced(v, b.b0, sign * b.beta3, *axes, sup)
        real = _real_space_orders(nf, w, axes)
        for ell in range(5):
            red = evaluate_reduced(apply(ops.by_order(ell), v), b.b0, sign * b.beta3, *axes, sup)
            err = np.abs(real[ell] - red).max() / max(np.abs(red).max(), 1.0)
            if should_match:
                assert err < 1e-8, (ell, err)
            elif ell == 2:
                assert err > 1e-3


def test_physical_residual_matches_hermite_residual(iso):
    from magwell.experiments import quasimode_residual

    nf, b = iso
    h = 0.04
    r1 = quasimode_residual(b, nf, h, (96, 96, 64))
    r2 = quasimode_residual(b, nf, h, (128, 128, 80))
    assert r1 == pytest.approx(r2, rel=1e-8)


def test_render_aligned_is_normalized(iso):
    nf, b = iso
    h = 0.1
    sup = scaled_support(b.combined(h), b.b0, b.beta3)
    axes = [np.linspace(-L, L, 64, endpoint=False) * s
            for L, s in zip((sup.X, sup.Y, sup.Z), (h**0.5, h**0.5, h**0.25))]
    m = render_aligned(b, nf, h, axes, support=sup)
    assert m.norm() == pytest.approx(1.0, abs=1e-12)


def test_render_quasimode_on_original_grid(iso):
    nf, b = iso
    h = 0.1
    grid = Grid3(((-3, 3), (-3, 3), (-4, 4)), (80, 80, 64))
    m = render_quasimode(b, nf, h, grid)
    assert m.norm() == pytest.approx(1.0, abs=1e-12)
    assert m.frame == "original"
    i = np.unravel_index(np.argmax(np.abs(m.values)), m.values.shape)
    assert [abs(a[k]) for a, k in zip(m.axes, i)] == pytest.approx([0, 0, 0], abs=0.1)


def test_render_rejects_coarse_grid(iso):
    nf, b = iso
    with pytest.raises(ResolutionError) as e:
        render_quasimode(b, nf, 0.1, Grid3(((-3, 3),) * 3, (10, 10, 10)))
    assert e.value.required_spacing > 0


def test_render_rejects_small_box(iso):
    nf, b = iso
    with pytest.raises(ResolutionError):
        render_quasimode(b, nf, 0.1, Grid3(((-0.5, 0.5),) * 3, (24, 24, 24)))


def test_grid_dump_roundtrip(tmp_path, iso):
    nf, b = iso
    h = 0.1
    m = render_quasimode(b, nf, h, Grid3(((-3, 3), (-3, 3), (-4, 4)), (80, 80, 64)))
    path = tmp_path / "mode.txt"
    write_grid_dump(path, m)
    header, values = read_grid_dump(path)
    assert header["format"] == "magwell-grid-v1"
    assert header["shape"] == [80, 80, 64]
    assert header["mode"] == [0, 0, 0]
    np.testing.assert_array_equal(values, m.values)
    assert path.read_text().startswith("# ")
