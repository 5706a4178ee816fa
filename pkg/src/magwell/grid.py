"""Finite-difference discretization of ``H^h`` and sparse eigensolvers.

``H^h = sum_j (h D_j - A_j)^2`` with ``D_j = -i d/dx_j`` is discretized on
the interior nodes of an axis-aligned box with homogeneous Dirichlet
conditions (exterior nodes are simply omitted).  The expanded form

    H = h^2 (-Laplacian) - h (A_j D_j + D_j A_j) + |A|^2

is assembled with a 7-point Laplacian and a centred, midpoint-sampled first
order term, which keeps the matrix Hermitian by construction and second
order accurate.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.fft
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import BoundaryError, ConvergenceError
from .field import PolyVecField


@dataclass(frozen=True)
class Grid3:
    """Interior nodes of an axis-aligned box, ``n[j]`` per axis."""

    box: tuple
    n: tuple

    def __post_init__(self):
        n = (self.n,) * 3 if np.isscalar(self.n) else tuple(self.n)
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        if len(n) != 3 or len(box) != 3:
            raise ValueError("Grid3 needs three axes")
        if any(int(k) < 8 for k in n):
            raise ValueError(f"need at least 8 interior points per axis, got {n}")
        if any(hi <= lo for lo, hi in box):
            raise ValueError(f"degenerate box {box}")
        object.__setattr__(self, "n", tuple(int(k) for k in n))
        object.__setattr__(self, "box", box)

    @property
    def spacing(self):
        return tuple((hi - lo) / (k + 1) for (lo, hi), k in zip(self.box, self.n))

    @property
    def shape(self):
        return self.n

    @property
    def size(self):
        return int(np.prod(self.n))

    def axes(self):
        return tuple(lo + dx * np.arange(1, k + 1)
                     for (lo, _), dx, k in zip(self.box, self.spacing, self.n))

    def mesh(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def refined(self, factor):
        return Grid3(self.box, tuple(max(8, int(round((k + 1) * factor)) - 1) for k in self.n))

    @classmethod
    def centered(cls, center, half_widths, n):
        box = tuple((c - w, c + w) for c, w in zip(center, half_widths))
        return cls(box, n)


@dataclass
class DiscreteH:
    matrix: sp.csr_matrix
    h: float
    grid: Grid3
    field: object = None

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, v):
        return self.matrix @ v

    def diagonal(self):
        return self.matrix.diagonal().real

    def hermiticity_defect(self):
        D = self.matrix - self.matrix.conj().T
        return float(abs(D).max()) if D.nnz else 0.0

    def to_coo_text(self):
        """Coordinate-list text: a header line, then ``row col re im`` per entry."""
        M = self.matrix.tocoo()
        lines = [f"% magwell-coo {M.shape[0]} {M.shape[1]} {M.nnz} h={self.h!r}"]
        for i, j, v in sorted(zip(M.row.tolist(), M.col.tolist(), M.data.tolist())):
            lines.append(f"{i} {j} {v.real:.17g} {v.imag:.17g}")
        return "\n".join(lines) + "\n"


def _potential_callables(A):
    if isinstance(A, PolyVecField):
        return A.A
    return tuple(A)


def _check_margin(field, grid, margin):
    if field is None or margin is None:
        return
    well = getattr(field, "X0", None)
    if well is None:
        return
    X0 = np.asarray(well, dtype=float)
    for j, ((lo, hi), m) in enumerate(zip(grid.box, np.broadcast_to(margin, (3,)))):
        if X0[j] - lo < m or hi - X0[j] < m:
            raise BoundaryError(
                f"well at {X0.tolist()} is closer than {m:g} to the box face on axis {j}",
                required_spacing=None,
            )


def discretize(A, h, grid: Grid3, well=None, margin=None):
    """Sparse Hermitian matrix of ``H^h`` on ``grid``.

    ``A`` is a :class:`PolyVecField` or a triple of vectorized callables.  When
    ``well`` (a :class:`WellAnalysis`) and ``margin`` (length, scalar or per
    axis) are given, the box must keep that distance from the well.
    """
    if well is not None and margin is not None:
        _check_margin(well, grid, margin)
    comps = _potential_callables(A)
    shape = grid.n
    N = grid.size
    axes = grid.axes()
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    idx = np.arange(N).reshape(shape)
    diag = np.zeros(N)
    rows, cols, vals = [], [], []
    for j, (Aj, dx) in enumerate(zip(comps, grid.spacing)):
        # kinetic and |A_j|^2 diagonal
        nodes = Aj(X, Y, Z) if Aj is not None else 0.0
        diag += (2.0 * h * h / dx**2 + np.broadcast_to(nodes, shape) ** 2).ravel()
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[j] = slice(0, shape[j] - 1)
        hi[j] = slice(1, shape[j])
        p = idx[tuple(lo)].ravel()
        q = idx[tuple(hi)].ravel()
        mid = [X, Y, Z]
        mid[j] = mid[j] + dx / 2
        Amid = np.broadcast_to(Aj(*mid), shape)[tuple(lo)].ravel()
        # -h^2/dx^2 from the Laplacian, -h * (-i A_mid / dx) from the magnetic term
        upper = -h * h / dx**2 + 1j * h * Amid / dx
        rows += [p, q]
        cols += [q, p]
        vals += [upper, np.conj(upper)]
    rows.append(np.arange(N))
    cols.append(np.arange(N))
    vals.append(diag.astype(complex))
    M = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(N, N), dtype=complex,
    )
    M.sum_duplicates()
    return DiscreteH(M, float(h), grid, A)


def dense_oracle(M, count=None):
    """All (or the lowest ``count``) eigenpairs of a Hermitian matrix by dense ``eigh``."""
    D = M.toarray() if sp.issparse(M) else np.asarray(M)
    if count is None:
        return scipy.linalg.eigh(D)
    return scipy.linalg.eigh(D, subset_by_index=(0, count - 1))


def kinetic_preconditioner(grid: Grid3, h, shift):
    """Exact inverse of ``h^2 (-Laplacian_FD) + shift`` through DST-I.

    The discrete Dirichlet Laplacian is diagonalized by the type-I sine
    transform, so this costs two 3D transforms per application.
    """
    eig = 0.0
    for j, (k, dx) in enumerate(zip(grid.n, grid.spacing)):
        lam = (2 - 2 * np.cos(np.pi * np.arange(1, k + 1) / (k + 1))) / dx**2
        sh = [1, 1, 1]
        sh[j] = k
        eig = eig + lam.reshape(sh)
    inv = 1.0 / (h * h * eig + shift)
    shape = grid.n

    def apply(V):
        V = np.asarray(V)
        single = V.ndim == 1
        V2 = V.reshape(-1, 1) if single else V
        out = np.empty_like(V2, dtype=complex)
        for c in range(V2.shape[1]):
            u = V2[:, c].reshape(shape)
            w = scipy.fft.dstn(u, type=1, norm="ortho")
            out[:, c] = scipy.fft.idstn(w * inv, type=1, norm="ortho").ravel()
        return out[:, 0] if single else out

    N = grid.size
    return spla.LinearOperator((N, N), matvec=apply, matmat=apply, dtype=complex)


def amg_preconditioner(M):
    """Smoothed-aggregation multigrid V-cycle approximating ``M^{-1}``."""
    import pyamg

    ml = pyamg.smoothed_aggregation_solver(sp.csr_matrix(M), symmetry="hermitian")
    return ml.aspreconditioner(cycle="V")


def _as_operator(Hd):
    return Hd.matrix if isinstance(Hd, DiscreteH) else Hd


def lowest_eigenpairs(Hd, count=1, tol=1e-8, preconditioner="diagonal", X0=None,
                      seed=0, maxiter=3000, shift=None, chunk=5):
    """Lowest ``count`` eigenpairs of a Hermitian (sparse) matrix.

    Block LOBPCG with block size ``count + 4``.  ``tol`` bounds the relative
    residual ``||Hv - lam v|| / (|lam| ||v||)`` (absolute when ``lam = 0``).
    ``preconditioner`` is ``"diagonal"``, ``"amg"`` (one smoothed-aggregation
    V-cycle, the robust choice once ``|A|^2`` dominates the upper spectrum),
    ``"kinetic"`` (DST inverse of the kinetic part, needs a
    :class:`DiscreteH`), ``None``, or a linear operator.
    ``X0`` optionally supplies starting vectors (columns); remaining block
    columns are seeded random.

    Returns a list of ``(value, vector, residual)`` sorted by value.
    """
    if not 1 <= count <= 20:
        raise ValueError("count must be in 1..20")
    M = _as_operator(Hd)
    if sp.issparse(M) and not np.iscomplexobj(M.data):
        M = M.astype(complex)
    N = M.shape[0]
    block = min(count + 4, N)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((N, block)) + 1j * rng.standard_normal((N, block))
    if X0 is not None:
        X0 = np.asarray(X0, dtype=complex).reshape(N, -1)
        X[:, : X0.shape[1]] = X0[:, :block]
    if isinstance(preconditioner, str):
        if preconditioner == "diagonal":
            d = np.real(M.diagonal())
            d = np.where(np.abs(d) > 1e-300, d, 1.0)
            P = sp.diags(1.0 / np.abs(d))
        elif preconditioner == "amg":
            P = amg_preconditioner(M)
        elif preconditioner == "kinetic":
            if not isinstance(Hd, DiscreteH):
                raise TypeError("kinetic preconditioner needs a DiscreteH")
            s = shift if shift is not None else max(Hd.h, 1e-12)
            P = kinetic_preconditioner(Hd.grid, Hd.h, s)
        else:
            raise ValueError(f"unknown preconditioner {preconditioner!r}")
    else:
        P = preconditioner

    if N <= 5 * block:
        w, V = dense_oracle(M, count)
        V = V[:, :count]
    else:
        # lobpcg waits for every block column; run it in short bursts and
        # stop as soon as the wanted ``count`` columns meet the tolerance
        done = 0
        while done < maxiter:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                w, X = spla.lobpcg(M, X, M=P, largest=False, tol=1e-300, maxiter=chunk)
            done += chunk
            chunk = min(2 * chunk, 80)
            order = np.argsort(w)
            w, X = w[order], X[:, order]
            lam = np.abs(w[:count])
            res = np.linalg.norm(M @ X[:, :count] - X[:, :count] * w[:count], axis=0)
            res = res / np.linalg.norm(X[:, :count], axis=0)
            rel = res / np.where(lam > 0, lam, 1.0)
            if rel.max() <= tol:
                break
        w, V = w[:count], X[:, :count]
    out = []
    residuals = []
    for lam, v in zip(w, V.T):
        v = v / np.linalg.norm(v)
        r = residual_norm(M, v, float(lam))
        rel = r / abs(lam) if abs(lam) > 0 else r
        residuals.append(rel)
        out.append((float(np.real(lam)), v, rel))
    if max(residuals) > tol:
        raise ConvergenceError(
            f"eigensolver stopped with relative residuals {residuals} > {tol:g}",
            residuals=residuals,
        )
    return out


def residual_norm(Hd, v, mu):
    """``||H v - mu v|| / ||v||`` with a single matrix application."""
    M = _as_operator(Hd)
    v = np.asarray(v).ravel()
    if v.shape[0] != M.shape[0]:
        raise ValueError(f"vector of length {v.shape[0]} does not match a {M.shape} matrix")
    return float(np.linalg.norm(M @ v - mu * v) / np.linalg.norm(v))


def dirichlet_laplacian_eigenvalue(h, box, mode=(1, 1, 1)):
    """Continuum Dirichlet eigenvalue ``h^2 pi^2 sum n_j^2 / L_j^2``."""
    return h * h * math.pi**2 * sum(k * k / (hi - lo) ** 2 for k, (lo, hi) in zip(mode, box))


def discrete_laplacian_eigenvalue(h, grid: Grid3, mode=(1, 1, 1)):
    """Exact eigenvalue of ``h^2 (-Laplacian_FD)`` on ``grid``."""
    return h * h * sum((2 - 2 * math.cos(math.pi * k / (n + 1))) / dx**2
                       for k, n, dx in zip(mode, grid.n, grid.spacing))


def oscillator_1d(n_points, half_width, omega=1.0):
    """Tridiagonal FD matrix of ``D_t^2 + omega^2 t^2`` on ``[-L, L]`` (Dirichlet)."""
    t = np.linspace(-half_width, half_width, n_points + 2)[1:-1]
    dt = t[1] - t[0]
    main = 2 / dt**2 + (omega * t) ** 2
    off = -np.ones(n_points - 1) / dt**2
    return sp.diags([off, main, off], [-1, 0, 1], format="csr"), t


def oscillator_1d_eigenvalues(n_points, half_width, omega=1.0, count=4):
    """Lowest eigenvalues of :func:`oscillator_1d` by the tridiagonal dense solver."""
    t = np.linspace(-half_width, half_width, n_points + 2)[1:-1]
    dt = t[1] - t[0]
    main = 2 / dt**2 + (omega * t) ** 2
    off = -np.ones(n_points - 1) / dt**2
    return scipy.linalg.eigh_tridiagonal(main, off, eigvals_only=True,
                                         select="i", select_range=(0, count - 1))


# -- spectral (periodic) application of H^h, used for quasimode residuals ----

def _fourier_derivative(u, axis, dx):
    n = u.shape[axis]
    k = 2 * np.pi * np.fft.fftfreq(n, d=dx)
    sh = [1] * u.ndim
    sh[axis] = n
    # D = -i d/dx acts as multiplication by k
    return scipy.fft.ifft(scipy.fft.fft(u, axis=axis) * k.reshape(sh), axis=axis)


def apply_H_spectral(u, axes, A, h):
    """``H^h u`` on a uniform periodic tensor grid by Fourier differentiation.

    ``u`` must be negligible near the faces of the box.  ``(hD - A)^2 u`` is
    formed as ``h^2 D^2 u - h (D(A u) + A D u) + A^2 u`` per axis.
    """
    comps = _potential_callables(A)
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    out = np.zeros_like(u, dtype=complex)
    for j, Aj in enumerate(comps):
        dx = axes[j][1] - axes[j][0]
        a = np.broadcast_to(Aj(X, Y, Z), u.shape)
        Du = _fourier_derivative(u, j, dx)
        out += h * h * _fourier_derivative(Du, j, dx)
        out -= h * (_fourier_derivative(a * u, j, dx) + a * Du)
        out += a * a * u
    return out
