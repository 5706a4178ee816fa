"""
Quasimode residuals and their ablations
=======================================

The residual ``||H phi - mu phi||`` of the rendered quasimode should decay
like ``h^(9/4)``.  Dropping correctors or the higher terms of ``mu`` should
never make it decay faster.  The isotropic field has ``u1 = u3 = 0``, so the
ablation without ``u3, u4`` only loses the ``u4`` term there; the skew field
keeps every corrector but needs more than 192 points per axis.

Run with ``python3 demos/02_residual_slopes.py`` (a few minutes).
"""
from magwell.errors import InconclusiveResolution
from magwell.experiments import run_residual_study
from magwell.field import isotropic_model_field, skew_model_field

H = [0.16, 0.12, 0.08, 0.06, 0.04]


def show(label, fit):
    vals = ", ".join(f"{v:.3e}" for v in fit.values)
    print(f"{label:34s} slope {fit.slope:6.3f}  fit residual {fit.fit_residual:.3f}  [{vals}]")


iso = isotropic_model_field()
show("isotropic, u0..u4", run_residual_study(iso, (0, 0, 0), H))
show("isotropic, u0..u2", run_residual_study(iso, (0, 0, 0), H, orders=(0, 1, 2)))
show("isotropic, mu = lambda0 h", run_residual_study(iso, (0, 0, 0), H, mu_mode="lambda0"))

# the skew well is not axis-aligned, so it renders on a cube sized by the wide
# z-profile; at the default 192-point cap this is reported as inconclusive
skew = skew_model_field()
for label, orders in (("skew, u0..u4", (0, 1, 2, 3, 4)), ("skew, u0..u2", (0, 1, 2))):
    try:
        show(label, run_residual_study(skew, (0, 0, 0), H, orders=orders))
    except InconclusiveResolution as e:
        print(f"{label:34s} inconclusive: {e}")
