"""Physical-space quasimodes from their Hermite representation.

A corrector sum ``u(x, eta, z)`` lives in the reduced variables.  Going back
to the operator ``H^h`` in the original frame undoes, in order:

1. the quadratic gauge: ``w(x, eta, z) = exp(-i beta3 eta z^2 / (2 b0)) u``;
2. the translation ``x -> x - eta / b0``;
3. the partial Fourier transform ``eta -> y``,
   ``w(x, y, z) = (2 pi)^-1 int exp(i y eta) w(x, eta, z) d eta``;
4. the dilation ``(x, y, z) = (h^1/2 x~, h^1/2 y~, h^1/4 z~)``;
5. the gauge ``exp(i chi / h)`` from the normal gauge to the aligned potential;
6. the rigid frame change back to the original coordinates;

followed by a flat-top cutoff around the well.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import BoundaryError, ResolutionError
from .grid import Grid3
from .hermite import TensorHermiteExpansion
from .normal_form import NormalForm
from .quasimode import QuasimodeBundle

TAIL = 7.0  # Hermite functions of order n are below ~e^-25 past sqrt(2n+1) + TAIL
BULK = 3.0


def _significant_modes(coeffs, bases, rel=1e-15):
    """Highest index per axis whose coefficient still matters (in L2 weight)."""
    w = TensorHermiteExpansion(bases, coeffs).to_orthonormal()
    a = np.abs(w)
    cut = rel * a.max() if a.size else 0.0
    out = []
    for ax in range(a.ndim):
        other = tuple(i for i in range(a.ndim) if i != ax)
        prof = a.max(axis=other) if other else a
        idx = np.nonzero(prof > cut)[0]
        out.append(int(idx[-1]) + 1 if idx.size else 1)
    return out


@dataclass(frozen=True)
class ScaledSupport:
    """Where a reduced-variable quasimode lives and how finely it oscillates.

    Half widths ``X, Y, Z`` bound ``(x~, y~, z~)``; ``E`` bounds ``eta``.
    ``kx, ky, kz`` bound the wavenumbers in the scaled variables.
    """

    X: float
    Y: float
    Z: float
    E: float
    kx: float
    ky: float
    kz: float

    def union(self, other):
        return ScaledSupport(*(max(a, b) for a, b in zip(self.as_tuple(), other.as_tuple())))

    def as_tuple(self):
        return (self.X, self.Y, self.Z, self.E, self.kx, self.ky, self.kz)


def scaled_support(u: TensorHermiteExpansion, b0, beta3):
    nx, ne, nz = _significant_modes(u.coeffs, u.bases)
    lx, le, lz = (b.lam for b in u.bases)
    rx = math.sqrt(2 * nx + 1) + TAIL
    re = math.sqrt(2 * ne + 1) + TAIL
    rz = math.sqrt(2 * nz + 1) + TAIL
    Xc = rx / math.sqrt(lx)
    E = re / math.sqrt(le)
    Z = rz / math.sqrt(lz)
    X = Xc + E / b0
    # the quadratic gauge phase shears y~ by beta3 z~^2 / (2 b0); it only
    # matters where the mode has mass, so bulk radii are used for it
    Eb = (math.sqrt(2 * ne + 1) + BULK) / math.sqrt(le)
    Zb = (math.sqrt(2 * nz + 1) + BULK) / math.sqrt(lz)
    shear = abs(beta3) / b0
    Y = re * math.sqrt(le) + rx * math.sqrt(lx) / b0 + shear * Zb * Zb / 2
    kx = rx * math.sqrt(lx)
    ky = E
    kz = rz * math.sqrt(lz) + shear * Eb * Zb
    return ScaledSupport(X, Y, Z, E, kx, ky, kz)


def eta_nodes(support: ScaledSupport, y_extent):
    """Trapezoid nodes for the eta integral, alias-free for ``|y~| <= y_extent``."""
    d = 2 * math.pi / (1.25 * (y_extent + support.Y) + 1.0)
    # also resolve the eta profile itself
    d = min(d, math.pi / (support.kx / 1.0 + support.Y + 1.0))
    n = int(math.ceil(2 * support.E / d)) + 1
    return np.linspace(-support.E, support.E, n)


def evaluate_reduced(u: TensorHermiteExpansion, b0, beta3, xs, ys, zs, support=None):
    """Steps 1-3 on the tensor grid ``xs x ys x zs`` of scaled coordinates."""
    support = support or scaled_support(u, b0, beta3)
    eta = eta_nodes(support, float(np.max(np.abs(ys))))
    deta = eta[1] - eta[0]
    c = u.to_orthonormal()
    bx, be, bz = u.bases
    Ee = be.normalized_values(eta, c.shape[1])             # (b, l)
    Ez = bz.normalized_values(zs, c.shape[2])              # (c, r)
    T = np.einsum("abc,bl,cr->alr", c, Ee, Ez, optimize=True)
    T *= np.exp(-1j * beta3 * np.outer(eta, zs**2) / (2 * b0))[None]
    Xs = bx.normalized_values(xs[:, None] - eta[None, :] / b0, c.shape[0])  # (a, i, l)
    W = np.einsum("ail,alr->ilr", Xs, T, optimize=True)
    F = np.exp(1j * np.outer(ys, eta)) * (deta / (2 * math.pi))
    return np.einsum("jl,ilr->ijr", F, W, optimize=True)


def evaluate_reduced_points(u: TensorHermiteExpansion, b0, beta3, pts, support=None, chunk=512):
    """Steps 1-3 at scattered scaled points ``pts`` of shape ``(N, 3)``."""
    support = support or scaled_support(u, b0, beta3)
    pts = np.asarray(pts, dtype=float)
    eta = eta_nodes(support, float(np.max(np.abs(pts[:, 1]))) if len(pts) else 0.0)
    deta = eta[1] - eta[0]
    c = u.to_orthonormal()
    bx, be, bz = u.bases
    Ee = be.normalized_values(eta, c.shape[1])  # (b, l)
    CE = np.einsum("abc,bl->alc", c, Ee)
    out = np.empty(len(pts), dtype=complex)
    for s in range(0, len(pts), chunk):
        p = pts[s:s + chunk]
        Ez = bz.normalized_values(p[:, 2], c.shape[2])                      # (c, p)
        S = np.einsum("alc,cp->alp", CE, Ez)
        S *= np.exp(-1j * beta3 * np.outer(eta, p[:, 2] ** 2) / (2 * b0))[None]
        Xs = bx.normalized_values(p[None, :, 0] - eta[:, None] / b0, c.shape[0])  # (a, l, p)
        F = np.exp(1j * np.outer(eta, p[:, 1])) * (deta / (2 * math.pi))       # (l, p)
        out[s:s + chunk] = np.einsum("alp,alp,lp->p", Xs, S, F)
    return out


def smooth_step(t):
    """C-infinity step: 0 for ``t <= 0``, 1 for ``t >= 1``."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        g = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1 - t, 1.0)), 0.0)
    return f / (f + g)


def flat_top_cutoff(r, radius):
    """Equal to 1 for ``r <= radius/2``, 0 for ``r >= radius``, smooth between."""
    return 1.0 - smooth_step((np.asarray(r) - radius / 2) / (radius / 2))


def localization_lengths(bundle: QuasimodeBundle, h):
    """Physical Gaussian widths ``(sqrt(h/b0), sqrt(h/b0), h^1/4 / sqrt(Lambda2))``."""
    lx = math.sqrt(h / bundle.b0)
    return (lx, lx, h**0.25 / math.sqrt(bundle.Lambda2))


@dataclass
class RenderedMode:
    values: np.ndarray
    axes: tuple
    h: float
    index: tuple
    mu: float
    frame: str

    @property
    def cell_volume(self):
        return float(np.prod([a[1] - a[0] for a in self.axes]))

    def norm(self):
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.cell_volume))

    def inner(self, other):
        return complex(np.vdot(self.values, other.values) * self.cell_volume)


def _gauge_phase(nf: NormalForm, h, X, Y, Z):
    chi = nf.exact_gauge
    if not chi.items():
        return 1.0
    return np.exp(1j * np.asarray(chi(X, Y, Z), dtype=float) / h)


def render_aligned(bundle: QuasimodeBundle, nf: NormalForm, h, axes, orders=(0, 1, 2, 3, 4),
                   normalize=True, support=None):
    """Quasimode on a tensor grid in aligned-frame coordinates (steps 1-5).

    ``axes`` are the physical coordinate arrays of the aligned frame, whose
    origin is the well.  No cutoff is applied.
    """
    u = bundle.combined(h, orders)
    xs = np.asarray(axes[0]) / math.sqrt(h)
    ys = np.asarray(axes[1]) / math.sqrt(h)
    zs = np.asarray(axes[2]) / h**0.25
    w = evaluate_reduced(u, bundle.b0, bundle.beta3, xs, ys, zs, support)
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    w = w * _gauge_phase(nf, h, X, Y, Z)
    mode = RenderedMode(w, tuple(np.asarray(a) for a in axes), h, bundle.index.as_tuple(),
                        bundle.eigen.mu(h), "aligned")
    if normalize:
        mode.values /= mode.norm()
    return mode


def _check_spacing(grid: Grid3, h, lengths, points_per_length=8):
    """Every spacing must fit ``points_per_length`` times into its localization length.

    A localization length is twice the Gaussian width along that axis.
    """
    for j, (dx, l) in enumerate(zip(grid.spacing, lengths)):
        need = 2 * l / points_per_length
        if dx > need:
            raise ResolutionError(
                f"grid spacing {dx:.4g} on axis {j} exceeds {need:.4g} "
                f"({points_per_length} points per localization length at h={h:g})",
                required_spacing=need,
            )


def render_quasimode(bundle: QuasimodeBundle, nf: NormalForm, h, grid: Grid3,
                     orders=(0, 1, 2, 3, 4), edge_tol=1e-6):
    """Normalized, cut-off quasimode on ``grid`` in the original frame."""
    R = np.asarray(nf.frame.rotation, dtype=float)
    axis_aligned = bool(np.allclose(np.abs(R), np.eye(3)))
    ell = localization_lengths(bundle, h)
    if axis_aligned:
        # a signed permutation: aligned axis i is original axis perm[i]
        perm = [int(np.argmax(np.abs(R[i]))) for i in range(3)]
        need = [0.0] * 3
        for i, p in enumerate(perm):
            need[p] = ell[i]
        _check_spacing(grid, h, need)
    else:
        _check_spacing(grid, h, (min(ell),) * 3)
    u = bundle.combined(h, orders)
    support = scaled_support(u, bundle.b0, bundle.beta3)
    scale = np.array([math.sqrt(h), math.sqrt(h), h**0.25])
    radius = nf.well.separation_radius
    if axis_aligned:
        axes = grid.axes()
        # aligned coordinate i = sign_i * (X_perm[i] + t_perm[i])
        al = [R[i, perm[i]] * (axes[perm[i]] + nf.frame.translation[perm[i]]) for i in range(3)]
        w = evaluate_reduced(u, bundle.b0, bundle.beta3, *(a / s for a, s in zip(al, scale)),
                             support)
        Xa = np.meshgrid(*al, indexing="ij")
        w = w * _gauge_phase(nf, h, *Xa)
        w = w * flat_top_cutoff(np.sqrt(sum(c * c for c in Xa)), radius)
        # reorder aligned axes into original axis order
        inv = [perm.index(p) for p in range(3)]
        vals = np.transpose(w, inv)
    else:
        X, Y, Z = grid.mesh()
        P = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
        Pa = nf.frame.to_frame(P)
        cut = flat_top_cutoff(np.linalg.norm(Pa, axis=1), radius)
        keep = cut > 0
        vals = np.zeros(len(P), dtype=complex)
        vals[keep] = evaluate_reduced_points(u, bundle.b0, bundle.beta3, Pa[keep] / scale, support)
        vals[keep] *= _gauge_phase(nf, h, *Pa[keep].T)
        vals = (vals * cut).reshape(grid.shape)
    mode = RenderedMode(vals, grid.axes(), h, bundle.index.as_tuple(), bundle.eigen.mu(h),
                        "original")
    nrm = mode.norm()
    if not nrm > 0:
        raise ResolutionError("rendered quasimode vanishes on the grid", required_spacing=None)
    mode.values = mode.values / nrm
    edge = max(np.abs(np.take(mode.values, i, axis=a)).max()
               for a in range(3) for i in (0, -1))
    if edge > edge_tol * np.abs(mode.values).max():
        raise ResolutionError(
            f"quasimode is not small on the box faces (relative edge value {edge:.2e})",
            required_spacing=None,
        )
    return mode


def auto_render_grid(bundle: QuasimodeBundle, nf: NormalForm, h, grid_max=192,
                     widths=(10.0, 10.0, 8.0), points_per_length=8):
    """Original-frame grid centred on the well that :func:`render_quasimode` accepts.

    Half widths are ``widths`` times the localization lengths; when the
    frame is rotated the box is a cube sized by the largest half width and
    resolved for the smallest length.
    """
    ell = localization_lengths(bundle, h)
    half = [w * l for w, l in zip(widths, ell)]
    step = [2 * l / points_per_length for l in ell]
    if not np.allclose(np.abs(np.asarray(nf.frame.rotation, dtype=float)), np.eye(3)):
        half = [max(half)] * 3
        step = [min(step)] * 3
    n = [int(math.ceil(2 * hw / st)) for hw, st in zip(half, step)]
    if max(n) > grid_max:
        raise ResolutionError(
            f"rendering at h={h:g} needs {n} points per axis, above the cap {grid_max}",
            required_spacing=min(step),
        )
    X0 = np.asarray(nf.well.X0, dtype=float)
    grid = Grid3.centered(X0, half, n)
    for j, ((lo, hi), (dlo, dhi)) in enumerate(zip(grid.box, nf.field.domain_box)):
        if lo < dlo or hi > dhi:
            raise BoundaryError(
                f"rendering box leaves the field domain on axis {j}", required_spacing=None)
    return grid


def write_grid_dump(path, mode: RenderedMode, extra=None):
    """Text dump: ``#`` header lines describing the grid, then ``x y z re im`` rows."""
    hdr = {
        "format": "magwell-grid-v1",
        "frame": mode.frame,
        "h": mode.h,
        "mode": list(mode.index),
        "mu": mode.mu,
        "shape": list(mode.values.shape),
        "axes": [[float(a[0]), float(a[-1]), len(a)] for a in mode.axes],
        "columns": ["x", "y", "z", "re", "im"],
        "order": "C (z fastest)",
    }
    if extra:
        hdr.update(extra)
    X, Y, Z = np.meshgrid(*mode.axes, indexing="ij")
    with open(path, "w") as fh:
        for k in sorted(hdr):
            fh.write(f"# {k}: {json.dumps(hdr[k], sort_keys=True)}\n")
        for x, y, z, v in zip(X.ravel(), Y.ravel(), Z.ravel(), mode.values.ravel()):
            fh.write(f"{x:.17g} {y:.17g} {z:.17g} {v.real:.17g} {v.imag:.17g}\n")


def read_grid_dump(path):
    header = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                k, v = line[1:].split(":", 1)
                header[k.strip()] = json.loads(v)
            elif line.strip():
                rows.append([float(t) for t in line.split()])
    data = np.array(rows)
    shape = tuple(header["shape"])
    values = (data[:, 3] + 1j * data[:, 4]).reshape(shape)
    return header, values
