"""Verification campaigns: residual slopes, eigenvalue comparison, Gram decay, gaps.

The expansion comes with no published numerical tables, so every check here is
property based: log-log slopes, inequalities and spacings.  Each emitted row
records the ``h``, grid and tolerance that produced it.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import BoundaryError, InconclusiveResolution
from .field import PolyVecField
from .grid import Grid3, apply_H_spectral, discretize, lowest_eigenpairs
from .normal_form import NormalForm, normal_form
from .operators import build_reduced_ops
from .quasimode import AsymptoticEigenvalue, CellSolver, LadderOscillator, solve_cell
from .render import render_aligned, scaled_support

FULL_ORDERS = (0, 1, 2, 3, 4)


def fmt(x):
    """Fixed 17-significant-digit text for floats; everything else via ``str``."""
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def _as_normal_form(field_or_nf) -> NormalForm:
    if isinstance(field_or_nf, NormalForm):
        return field_or_nf
    if isinstance(field_or_nf, PolyVecField):
        return normal_form(field_or_nf)
    raise TypeError(f"expected a field or a normal form, got {type(field_or_nf).__name__}")


# -- slope fits -----------------------------------------------------------------------
@dataclass
class SlopeFit:
    h: list
    values: list
    slope: float
    intercept: float
    fit_residual: float
    label: str = ""
    rows: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def fit_slope(h, values, label="", rows=None):
    """Least-squares line through ``(log h, log value)``.

    ``fit_residual`` is the largest deviation of a point from the line, in
    natural-log units.
    """
    h = [float(v) for v in h]
    values = [float(v) for v in values]
    if len(h) < 4:
        raise ValueError("a slope fit needs at least 4 h values")
    if any(b >= a for a, b in zip(h, h[1:])):
        raise ValueError("h values must be strictly decreasing")
    if any(not v > 0 for v in values):
        raise ValueError("values must be positive for a log-log fit")
    x, y = np.log(h), np.log(values)
    slope, intercept = np.polyfit(x, y, 1)
    dev = float(np.max(np.abs(np.polyval([slope, intercept], x) - y)))
    return SlopeFit(h, values, float(slope), float(intercept), dev, label, rows or [])


# -- residual study ---------------------------------------------------------------------
def _periodic_axes(support, h, n):
    scales = (math.sqrt(h), math.sqrt(h), h**0.25)
    halves = (support.X, support.Y, support.Z)
    return [np.linspace(-L, L, k, endpoint=False) * s for L, k, s in zip(halves, n, scales)]


def _nyquist_counts(support, factor=1.0):
    pairs = ((support.X, support.kx), (support.Y, support.ky), (support.Z, support.kz))
    return tuple(max(16, int(math.ceil(factor * 2 * L * k / math.pi))) for L, k in pairs)


def quasimode_residual(bundle, nf, h, n, orders=FULL_ORDERS, mu=None, support=None):
    """``||H^h phi - mu phi|| / ||phi||`` with ``H^h`` applied spectrally.

    ``phi`` is rendered in the aligned frame on a periodic grid of ``n``
    points per axis covering the support of the corrector sum.
    """
    support = support or scaled_support(bundle.combined(h, orders), bundle.b0, bundle.beta3)
    axes = _periodic_axes(support, h, n)
    mode = render_aligned(bundle, nf, h, axes, orders=orders, support=support)
    mu = mode.mu if mu is None else mu
    Hv = apply_H_spectral(mode.values, mode.axes, nf.aligned, h)
    return float(np.sqrt(np.sum(np.abs(Hv - mu * mode.values) ** 2) * mode.cell_volume))


def converged_residual(bundle, nf, h, orders=FULL_ORDERS, mu=None, grid_max=192, rtol=0.05,
                       start=0.6, growth=1.3):
    """Residual refined until two successive grids agree within ``rtol``.

    Returns ``(residual, n, history)``; raises :class:`InconclusiveResolution`
    once a grid would exceed ``grid_max`` points on an axis.
    """
    support = scaled_support(bundle.combined(h, orders), bundle.b0, bundle.beta3)
    base = _nyquist_counts(support)
    factor = start
    history = []
    prev = None
    while True:
        n = tuple(int(math.ceil(factor * b)) for b in base)
        if max(n) > grid_max:
            raise InconclusiveResolution(
                f"residual at h={h:g} not converged within {grid_max} points per axis "
                f"(history {history})",
                required_spacing=None,
            )
        r = quasimode_residual(bundle, nf, h, n, orders, mu, support)
        history.append((n, r))
        if prev is not None and abs(r - prev) <= rtol * abs(r):
            return r, n, history
        prev = r
        factor *= growth


def _residual_cell(args):
    nf, bundle, h, orders, mu, grid_max, rtol = args
    return converged_residual(bundle, nf, h, orders, mu, grid_max, rtol)


def run_residual_study(field, mode, h_list, orders=FULL_ORDERS, mu_mode="full",
                       grid_max=192, rtol=0.05, label=None, workers=1):
    """Slope of the quasimode residual over ``h_list`` (expected ``9/4``).

    ``orders`` selects the correctors kept (``(0, 1, 2)`` is the ablation
    without ``u3, u4``).  ``mu_mode="lambda0"`` replaces ``mu`` by its
    leading term ``lambda0 h``.  With ``workers > 1`` the ``h`` cells run in
    a process pool; rows are merged in ``h`` order either way.
    """
    nf = _as_normal_form(field)
    j, k, m = mode
    bundle = solve_cell(nf.coeffs, j, k, m)
    h_list = sorted((float(h) for h in h_list), reverse=True)
    mus = [bundle.eigen.lambda0 * h if mu_mode == "lambda0" else float(bundle.eigen.mu(h))
           for h in h_list]
    cells = [(nf, bundle, h, tuple(orders), mu, grid_max, rtol) for h, mu in zip(h_list, mus)]
    if workers > 1 and len(cells) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_residual_cell, cells))
    else:
        results = [_residual_cell(c) for c in cells]
    values, rows = [], []
    for h, mu, (r, n, _) in zip(h_list, mus, results):
        values.append(r)
        rows.append({"h": h, "mode": list(mode), "orders": list(orders), "mu": mu,
                     "residual": r, "grid": list(n), "tol": rtol, "mu_mode": mu_mode})
    return fit_slope(h_list, values, label or f"residual{tuple(mode)}", rows)


# -- eigenvalue comparison ------------------------------------------------------------
def _box_in_domain(nf: NormalForm, half):
    """Corners of the aligned box mapped back into the original frame must lie in Omega."""
    corners = np.array([[sx * half[0], sy * half[1], sz * half[2]]
                        for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
    orig = nf.frame.from_frame(corners)
    for j, (lo, hi) in enumerate(nf.field.domain_box):
        if orig[:, j].min() < lo or orig[:, j].max() > hi:
            raise BoundaryError(
                f"solver box with half widths {list(half)} leaves the field domain on axis {j}",
                required_spacing=None,
            )


def solver_box(b0, Lambda2, h, m_extra=0):
    """Half widths of the Dirichlet box: many Gaussian widths in each direction."""
    lx = math.sqrt(h / b0)
    lz = h**0.25 / math.sqrt(Lambda2)
    return ((10 + 2 * m_extra) * lx, (10 + 2 * m_extra) * lx, (7 + m_extra) * lz)


def lowest_asymptotic(nf: NormalForm, count, h):
    """The ``count`` smallest ``mu^h_{j,k,m}`` over small indices, sorted."""
    ops = build_reduced_ops(nf.coeffs)
    cands = []
    for k in range(count):
        for j in range(count):
            solver = CellSolver(nf.coeffs, ops, j, k)
            osc = LadderOscillator(solver.effective_operator())
            for m in range(count):
                e = AsymptoticEigenvalue(j, k, m, solver.lambda0, 0.0, solver.lambda2, 0.0,
                                         float(osc.eigenvalue(m)))
                cands.append((e.mu(h), e))
    cands.sort(key=lambda t: t[0])
    return [e for _, e in cands[:count]]


def numerical_eigenvalues(nf: NormalForm, h, count, n_list=(48, 64, 80), tol=1e-7,
                          Lambda2=None, seed=0):
    """Lowest eigenvalues of the Dirichlet FD operator, Richardson-extrapolated.

    Each grid in ``n_list`` covers the same box around the well (aligned
    frame); the two finest grids fix ``lam(dx) = lam* + c dx^2``.
    """
    if Lambda2 is None:
        ops = build_reduced_ops(nf.coeffs)
        Lambda2 = CellSolver(nf.coeffs, ops, 0, 0).Lambda2
    half = solver_box(float(nf.coeffs.b0), Lambda2, h, count - 1)
    _box_in_domain(nf, half)
    per_grid = []
    for n in n_list:
        grid = Grid3.centered((0.0, 0.0, 0.0), half, n)
        Hd = discretize(nf.aligned, h, grid)
        pairs = lowest_eigenpairs(Hd, count, tol=tol, preconditioner="amg", seed=seed)
        per_grid.append((grid, [p[0] for p in pairs], [p[2] for p in pairs]))
    dx = np.array([g.spacing[0] for g, _, _ in per_grid])
    vals = np.array([v for _, v, _ in per_grid])
    if len(n_list) == 1:
        return [float(v) for v in vals[0]], per_grid
    # coarse grids are pre-asymptotic; extrapolate from the two finest only
    extrap = [float(np.polyfit(dx[-2:] ** 2, vals[-2:, i], 1)[-1]) for i in range(count)]
    return extrap, per_grid


def run_eigenvalue_comparison(field, m_max, h_list, n_list=(48, 64, 80), tol=1e-7, seed=0):
    """Numerical ``lambda_m(H^h)`` against ``mu^h`` for the ``m_max + 1`` lowest levels.

    Rows carry the extrapolated eigenvalue, the per-grid values, ``mu``, the
    difference, and the normalized second-order coefficient
    ``(lambda - lambda0 h - lambda2 h^(3/2)) / h^2`` to be compared with
    ``lambda4``.  The summary reports the smallest ``C >= 0`` with
    ``lambda <= mu + C h^(9/4)`` over all rows.
    """
    nf = _as_normal_form(field)
    count = m_max + 1
    rows = []
    for h in sorted((float(h) for h in h_list), reverse=True):
        asym = lowest_asymptotic(nf, count, h)
        lam, per_grid = numerical_eigenvalues(nf, h, count, n_list, tol, seed=seed)
        for i, (e, l) in enumerate(zip(asym, lam)):
            mu = e.mu(h)
            rows.append({
                "h": h, "level": i, "mode": [e.j, e.k, e.m],
                "lambda_num": l, "mu": mu, "difference": l - mu,
                "normalized_h2": (l - e.lambda0 * h - e.lambda2 * h**1.5) / h**2,
                "lambda4": e.lambda4,
                "C_needed": (l - mu) / h**2.25,
                "grids": [list(g.n) for g, _, _ in per_grid],
                "per_grid": [v[i] for _, v, _ in per_grid],
                "tol": tol,
            })
    C = max(0.0, max(r["C_needed"] for r in rows))
    return {"rows": rows, "C_fit": C}


# -- Gram study -----------------------------------------------------------------------------
def gram_matrix(bundles, nf, h, grid_max=192, factor=1.0):
    support = None
    for b in bundles:
        s = scaled_support(b.combined(h), b.b0, b.beta3)
        support = s if support is None else support.union(s)
    n = tuple(min(grid_max, c) for c in _nyquist_counts(support, factor))
    axes = _periodic_axes(support, h, n)
    modes = [render_aligned(b, nf, h, axes, support=support) for b in bundles]
    G = np.array([[a.inner(c) for c in modes] for a in modes])
    return G, n


def run_gram_study(field, modes, h_list, grid_max=192):
    """Slope of the largest off-diagonal Gram entry of normalized quasimodes."""
    nf = _as_normal_form(field)
    bundles = [solve_cell(nf.coeffs, *md) for md in modes]
    h_list = sorted((float(h) for h in h_list), reverse=True)
    values, rows = [], []
    for h in h_list:
        G, n = gram_matrix(bundles, nf, h, grid_max)
        off = float(np.max(np.abs(G - np.diag(np.diag(G)))))
        values.append(off)
        rows.append({"h": h, "grid": list(n), "max_offdiag": off,
                     "diag": [float(abs(d)) for d in np.diag(G)],
                     "abs_gram": np.abs(G).tolist(), "tol": 0.0})
    return fit_slope(h_list, values, "gram", rows)


# -- gap prediction ------------------------------------------------------------------------
@dataclass
class GapReport:
    j: int
    k: int
    N: int
    b0: float
    a: float
    d: float
    lambda2: float
    lambda4: list
    m_spacing: float
    margin: float
    c: float
    C: float
    theorem_bound: float
    h_max: float

    def A(self, h):
        return (2 * self.k + 1) * self.b0 * h + self.lambda2 * h**1.5 + self.c * h**2

    def B(self, h):
        return (2 * self.k + 1) * self.b0 * h + self.lambda2 * h**1.5 + self.C * h**2

    def interval(self, h):
        return (self.A(h), self.B(h))

    @property
    def satisfies_theorem(self):
        return self.C > self.theorem_bound

    def to_dict(self):
        out = asdict(self)
        out["satisfies_theorem"] = self.satisfies_theorem
        return out

    def to_json(self):
        return to_json(self.to_dict())


def predict_gaps(field, j, k, N):
    """Interval ``[A, B_N]`` expected to hold ``N + 1`` eigenvalues of cell ``(j, k)``.

    ``c = lambda4(j,k,0) - margin`` and ``C = lambda4(j,k,N) + margin`` with
    the margin equal to half the spacing of ``lambda4`` in ``m``.  The
    constants in the underlying statement are existence constants; this
    margin is a choice.
    """
    if N < 1:
        raise ValueError("N must be a positive number of gaps")
    nf = _as_normal_form(field)
    coeffs = nf.coeffs
    ops = build_reduced_ops(coeffs)
    solver = CellSolver(coeffs, ops, j, k)
    osc = LadderOscillator(solver.effective_operator())
    lam4 = [float(osc.eigenvalue(m)) for m in range(N + 1)]
    spacing = lam4[1] - lam4[0]
    margin = spacing / 2
    b0, a, d = float(coeffs.b0), float(coeffs.a_well), float(coeffs.d_well)
    c = lam4[0] - margin
    C = lam4[N] + margin
    bound = c + math.sqrt(d / (2 * a)) * (2 * k + 1) * N / b0
    # validity guess: the top of the cluster must stay below the next j-cluster
    nxt = CellSolver(coeffs, ops, j + 1, k)
    c_next = float(LadderOscillator(nxt.effective_operator()).eigenvalue(0)) - margin
    gap32 = nxt.lambda2 - solver.lambda2
    h_max = (gap32 / (C - c_next)) ** 2 if C > c_next else math.inf
    return GapReport(j, k, N, b0, a, d, float(solver.lambda2), lam4, spacing, margin, c, C,
                     bound, h_max)


# -- output ----------------------------------------------------------------------------------
def rows_to_csv(rows, columns=None):
    """RFC-4180 CSV text; floats in fixed 17-significant-digit form."""
    if not rows:
        return ""
    columns = columns or sorted(rows[0])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_compact(_clean(r[c])) if isinstance(r[c], (list, tuple, dict))
                    else fmt(r[c]) for c in columns])
    return buf.getvalue()


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    return obj


def _emit(o, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(o, dict):
        if not o:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_emit(o[k], indent, level + 1)}" for k in sorted(o)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(o, list):
        if not o:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in o):
            return "[" + ", ".join(_emit(v, indent, level) for v in o) + "]"
        return "[\n" + ",\n".join(pad + _emit(v, indent, level + 1) for v in o) + "\n" + end + "]"
    if isinstance(o, bool) or o is None or isinstance(o, (int, str)):
        return json.dumps(o)
    if isinstance(o, float):
        return fmt(o) if math.isfinite(o) else json.dumps(str(o))
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _compact(o):
    """Single-line canonical JSON (same number formatting as :func:`to_json`)."""
    if isinstance(o, dict):
        return "{" + ", ".join(f"{json.dumps(k)}: {_compact(o[k])}" for k in sorted(o)) + "}"
    if isinstance(o, list):
        return "[" + ", ".join(_compact(v) for v in o) + "]"
    return _emit(o, 0, 0)


def to_json(obj, indent=2):
    """Canonical JSON: sorted keys, floats with 17 significant digits."""
    return _emit(_clean(obj), indent, 0) + "\n"
