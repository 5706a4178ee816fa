"""
Direct eigenvalues against the asymptotic expansion
===================================================

Discretize ``H^h`` with finite differences around the well, extrapolate
the two finest grids, and compare the second-order coefficient
``(lambda0 - b0 h - a^(1/2) h^(3/2)) / h^2`` with ``lambda4``.

Run with ``python3 demos/03_eigenvalues_vs_asymptotics.py`` (about ten
minutes on one core; pass ``--quick`` for coarse grids).
"""
import sys

from magwell.experiments import run_eigenvalue_comparison
from magwell.field import isotropic_model_field

quick = "--quick" in sys.argv
grids = (32, 40) if quick else (48, 64, 80)
res = run_eigenvalue_comparison(isotropic_model_field(), 1, [0.2, 0.1, 0.05], n_list=grids)

print(f"{'h':>6} {'level':>5} {'lambda_num':>12} {'mu':>12} {'normalized':>11} {'lambda4':>8}")
for r in res["rows"]:
    print(f"{r['h']:6.3f} {r['level']:5d} {r['lambda_num']:12.8f} {r['mu']:12.8f} "
          f"{r['normalized_h2']:11.5f} {r['lambda4']:8.4f}")
print(f"smallest C with lambda <= mu + C h^(9/4): {res['C_fit']:.4g}")

# the gap between the two lowest levels should approach 2 h^2
for h in (0.2, 0.1, 0.05):
    a, b = [r["lambda_num"] for r in res["rows"] if r["h"] == h]
    print(f"h={h}: (lambda1 - lambda0)/h^2 = {(b - a) / h**2:.4f}")
