"""
Magnetic wells and their three-term eigenvalue expansion
========================================================

Locate the well of each model field, read off ``b0, d, a`` and tabulate
``mu = lambda0 h + lambda2 h^(3/2) + lambda4 h^2`` for the first cells.

Run with ``python3 demos/01_well_and_asymptotics.py``.
"""
from pathlib import Path

from magwell.experiments import rows_to_csv
from magwell.io import load_field
from magwell.normal_form import normal_form
from magwell.operators import build_reduced_ops
from magwell.quasimode import asymptotic_eigenvalue

FIELDS = Path(__file__).parent / "fields"

for name in ("isotropic", "anisotropic", "skew"):
    nf = normal_form(load_field(FIELDS / f"{name}.json"))
    w = nf.well
    print(f"== {name}: X0={w.X0.round(12).tolist()} b0={w.b0:.6g} d={w.d:.6g} a={w.a:.6g}")

    # one row per cell; lambda0 depends on k only, lambda2 on (j, k)
    ops = build_reduced_ops(nf.coeffs)
    rows = []
    for j, k, m in [(0, 0, 0), (0, 0, 1), (0, 0, 2), (1, 0, 0), (0, 1, 0)]:
        e = asymptotic_eigenvalue(nf.coeffs, j, k, m, ops)
        rows.append({"j": j, "k": k, "m": m, "lambda0": e.lambda0, "lambda2": e.lambda2,
                     "lambda4": e.lambda4, "mu(h=0.05)": float(e.mu(0.05))})
    print(rows_to_csv(rows, list(rows[0])).replace("\r\n", "\n"))
