"""
Predicted spectral intervals for periodic wells
===============================================

For a cell ``(j, k)`` the interval ``[A, B_N]`` is expected to hold the
``N + 1`` lowest ``m``-levels; consecutive intervals nest and the upper
constant clears the required bound.

Run with ``python3 demos/04_gaps.py``.
"""
from magwell.experiments import predict_gaps
from magwell.field import anisotropic_model_field, isotropic_model_field

for name, make in (("isotropic", isotropic_model_field), ("anisotropic", anisotropic_model_field)):
    print(f"== {name}")
    for j, k in ((0, 0), (0, 1), (1, 0)):
        for N in (1, 3, 5):
            r = predict_gaps(make(), j, k, N)
            A, B = r.interval(0.01)
            print(f"j={j} k={k} N={N}: c={r.c:8.4f} C={r.C:8.4f} bound={r.theorem_bound:8.4f} "
                  f"ok={r.satisfies_theorem}  [A, B](h=0.01) = [{A:.6f}, {B:.6f}]  "
                  f"h_max~{r.h_max:.3g}")
