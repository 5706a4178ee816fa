"""Command-line entry point ``magwell``.

Subcommands: analyze, normal-form, asymptotics, render, solve, verify, gaps.
Settings come from built-in defaults, then an optional JSON ``--config``
file, then flags (flags win).  Exit codes: 0 ok, 2 input or parse error,
3 well assumption violated, 4 eigensolver did not converge, 5 insufficient
resolution.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .errors import InputError, MagwellError

DEFAULTS = {
    "field": None,
    "modes": "0,0,0",
    "h": "0.16,0.12,0.08,0.06,0.04",
    "grid_max": 192,
    "tol": None,
    "out": None,
    "threads": None,
    "seed": 0,
    "dry_run": False,
    # subcommand specific
    "j_max": None,
    "k_max": None,
    "m_max": None,
    "study": "residual",
    "orders": "0,1,2,3,4",
    "mu_mode": "full",
    "n": "48,64,80",
    "count": 1,
    "j": 0,
    "k": 0,
    "N": 3,
}

COMMON = ("field", "modes", "h", "grid_max", "tol", "out", "threads", "seed", "dry_run")
PER_COMMAND = {
    "analyze": (),
    "normal-form": (),
    "asymptotics": ("j_max", "k_max", "m_max"),
    "render": ("orders",),
    "solve": ("n", "count"),
    "verify": ("study", "orders", "mu_mode", "n", "m_max"),
    "gaps": ("j", "k", "N"),
}
DEFAULT_TOL = {"solve": 1e-7, "verify": 0.05}


# -- argument parsing -------------------------------------------------------------------------
def _common(p):
    g = p.add_argument_group("common options")
    g.add_argument("--config", help="JSON file of settings; flags override it")
    g.add_argument("--field", help="field file, or builtin:isotropic|anisotropic|skew|perturbed|constant")
    g.add_argument("--modes", help='mode triples "j,k,m;j,k,m" (default 0,0,0)')
    g.add_argument("--h", help="comma-separated semiclassical parameters")
    g.add_argument("--grid-max", dest="grid_max", type=int, help="cap on points per axis (192)")
    g.add_argument("--tol", type=float, help="tolerance (solver residual or refinement agreement)")
    g.add_argument("--out", help="output directory (stdout only when omitted)")
    g.add_argument("--threads", type=int, help="worker processes and BLAS threads (all cores)")
    g.add_argument("--seed", type=int, help="seed of the eigensolver start block (0)")
    g.add_argument("--dry-run", dest="dry_run", action="store_const", const=True,
                   help="print the resolved plan and stop")


def build_parser():
    p = argparse.ArgumentParser(prog="magwell", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"magwell {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("analyze", help="locate the magnetic well and report b0, d, a")
    _common(s)
    s = sub.add_parser("normal-form", help="Taylor coefficients of the field in normal form")
    _common(s)
    s = sub.add_parser("asymptotics", help="table of lambda0, lambda2, lambda4 per mode")
    _common(s)
    s.add_argument("--j-max", dest="j_max", type=int, help="all j <= j_max (with k/m max)")
    s.add_argument("--k-max", dest="k_max", type=int)
    s.add_argument("--m-max", dest="m_max", type=int)
    s = sub.add_parser("render", help="dump the quasimode of the first mode at the first h")
    _common(s)
    s.add_argument("--orders", help="corrector orders kept (0,1,2,3,4)")
    s = sub.add_parser("solve", help="lowest Dirichlet eigenvalues of the discretized operator")
    _common(s)
    s.add_argument("--n", help="points per axis of the grids used for extrapolation")
    s.add_argument("--count", type=int, help="number of eigenvalues (1)")
    s = sub.add_parser("verify", help="residual, Gram or eigenvalue study with slope fit")
    _common(s)
    s.add_argument("--study", choices=("residual", "gram", "eigen"))
    s.add_argument("--orders", help="corrector orders kept in the residual study")
    s.add_argument("--mu-mode", dest="mu_mode", choices=("full", "lambda0"))
    s.add_argument("--n", help="grids of the eigen study")
    s.add_argument("--m-max", dest="m_max", type=int, help="levels 0..m_max in the eigen study")
    s = sub.add_parser("gaps", help="asymptotic gap interval for cell (j, k)")
    _common(s)
    s.add_argument("--j", type=int)
    s.add_argument("--k", type=int)
    s.add_argument("--N", type=int)
    return p


def _floats(text, what):
    try:
        vals = [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise InputError(f"cannot read {what} list {text!r}") from None
    if not vals:
        raise InputError(f"empty {what} list")
    return vals


def _ints(text, what):
    try:
        return [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise InputError(f"cannot read {what} list {text!r}") from None


def _modes(text):
    out = []
    for chunk in str(text).split(";"):
        if not chunk.strip():
            continue
        t = _ints(chunk, "mode")
        if len(t) != 3 or min(t) < 0:
            raise InputError(f"a mode is three non-negative integers j,k,m, got {chunk!r}")
        out.append(tuple(t))
    if not out:
        raise InputError("no modes given")
    return out


def resolve_config(args):
    """Merge defaults, config file and flags into a validated settings dict."""
    cmd = args.command
    keys = COMMON + PER_COMMAND[cmd]
    cfg = {k: DEFAULTS[k] for k in keys}
    cfg["tol"] = DEFAULT_TOL.get(cmd)
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as e:
            raise InputError(f"cannot read config {args.config!r}: {e.strerror}") from None
        except json.JSONDecodeError as e:
            from .errors import FieldParseError

            raise FieldParseError(f"config: {e.msg}", line=e.lineno, column=e.colno) from None
        if not isinstance(data, dict):
            raise InputError("a config file holds a JSON object")
        for k, v in data.items():
            key = k.replace("-", "_")
            if key not in cfg:
                raise InputError(f"config key {k!r} does not apply to {cmd}")
            cfg[key] = v
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    if cfg["field"] is None:
        raise InputError("--field is required")
    # validation before any computation
    cfg["modes"] = _modes(cfg["modes"])
    cfg["h"] = _floats(cfg["h"], "h")
    if any(h <= 0 for h in cfg["h"]):
        raise InputError("h values must be positive")
    if int(cfg["grid_max"]) < 8:
        raise InputError("--grid-max must be at least 8")
    cfg["grid_max"] = int(cfg["grid_max"])
    if cfg["tol"] is not None and not float(cfg["tol"]) > 0:
        raise InputError("--tol must be positive")
    cfg["threads"] = int(cfg["threads"] or os.cpu_count() or 1)
    if cfg["threads"] < 1:
        raise InputError("--threads must be positive")
    cfg["seed"] = int(cfg["seed"])
    cfg["dry_run"] = bool(cfg["dry_run"])
    if "orders" in cfg:
        cfg["orders"] = _ints(cfg["orders"], "orders")
        if not cfg["orders"] or any(o not in range(5) for o in cfg["orders"]):
            raise InputError("orders are integers in 0..4")
    if "n" in cfg:
        cfg["n"] = _ints(cfg["n"], "grid")
        if not cfg["n"] or min(cfg["n"]) < 8 or max(cfg["n"]) > cfg["grid_max"]:
            raise InputError("grid sizes must lie between 8 and --grid-max")
    if cmd == "solve" and not 1 <= int(cfg["count"]) <= 20:
        raise InputError("--count must be in 1..20")
    if cmd == "gaps" and int(cfg["N"]) < 1:
        raise InputError("--N must be at least 1")
    return cfg


# -- output helpers ------------------------------------------------------------------------------
def _write(cfg, name, text, stdout):
    if cfg["out"]:
        d = Path(cfg["out"])
        d.mkdir(parents=True, exist_ok=True)
        with open(d / name, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    if stdout:
        sys.stdout.write(text)


# -- subcommands ------------------------------------------------------------------------------------
def cmd_analyze(cfg, field):
    from .experiments import to_json
    from .field import find_well

    well = find_well(field)
    _write(cfg, "well.json", to_json(well.to_dict()), True)


def cmd_normal_form(cfg, field):
    from .experiments import to_json
    from .normal_form import normal_form

    nf = normal_form(field)
    out = {"well": nf.well.to_dict(), "frame": {
        "translation": [float(v) for v in nf.frame.translation],
        "rotation": [[float(v) for v in row] for row in nf.frame.rotation]},
        "coefficients": nf.coeffs.to_dict()}
    _write(cfg, "normal_form.json", to_json(out), True)


def _mode_list(cfg):
    if any(cfg.get(k) is not None for k in ("j_max", "k_max", "m_max")):
        jm, km, mm = (int(cfg.get(k) or 0) for k in ("j_max", "k_max", "m_max"))
        return [(j, k, m) for j in range(jm + 1) for k in range(km + 1) for m in range(mm + 1)]
    return cfg["modes"]


def cmd_asymptotics(cfg, field):
    from .experiments import rows_to_csv
    from .normal_form import normal_form
    from .operators import build_reduced_ops
    from .quasimode import asymptotic_eigenvalue

    nf = normal_form(field)
    ops = build_reduced_ops(nf.coeffs)
    rows = []
    for j, k, m in _mode_list(cfg):
        e = asymptotic_eigenvalue(nf.coeffs, j, k, m, ops)
        rows.append({"j": j, "k": k, "m": m, "lambda0": float(e.lambda0),
                     "lambda2": float(e.lambda2), "lambda4": float(e.lambda4)})
    text = rows_to_csv(rows, ["j", "k", "m", "lambda0", "lambda2", "lambda4"])
    _write(cfg, "asymptotics.csv", text, True)


def cmd_render(cfg, field):
    from .experiments import fmt, to_json
    from .normal_form import normal_form
    from .quasimode import solve_cell
    from .render import auto_render_grid, render_quasimode, write_grid_dump

    nf = normal_form(field)
    j, k, m = cfg["modes"][0]
    h = cfg["h"][0]
    bundle = solve_cell(nf.coeffs, j, k, m)
    grid = auto_render_grid(bundle, nf, h, cfg["grid_max"])
    mode = render_quasimode(bundle, nf, h, grid, orders=tuple(cfg["orders"]))
    name = f"mode_{j}_{k}_{m}_h{fmt(h)}.txt"
    out = Path(cfg["out"] or ".")
    out.mkdir(parents=True, exist_ok=True)
    write_grid_dump(out / name, mode, {"orders": cfg["orders"], "box": [list(b) for b in grid.box]})
    sys.stdout.write(to_json({"file": str(out / name), "shape": list(grid.shape),
                              "mu": float(mode.mu), "h": h, "mode": [j, k, m]}))


def cmd_solve(cfg, field):
    from .experiments import numerical_eigenvalues, rows_to_csv
    from .normal_form import normal_form

    nf = normal_form(field)
    count = int(cfg["count"])
    rows = []
    for h in sorted(cfg["h"], reverse=True):
        lam, per_grid = numerical_eigenvalues(nf, h, count, tuple(cfg["n"]), cfg["tol"],
                                              seed=cfg["seed"])
        for i in range(count):
            rows.append({"h": h, "level": i, "lambda": lam[i],
                         "per_grid": [v[i] for _, v, _ in per_grid],
                         "residuals": [r[i] for _, _, r in per_grid],
                         "grids": [list(g.n) for g, _, _ in per_grid], "tol": cfg["tol"]})
    _write(cfg, "solve.csv", rows_to_csv(
        rows, ["h", "level", "lambda", "per_grid", "residuals", "grids", "tol"]), True)


def cmd_verify(cfg, field):
    from .experiments import (
        rows_to_csv,
        run_eigenvalue_comparison,
        run_gram_study,
        run_residual_study,
        to_json,
    )
    from .normal_form import normal_form

    nf = normal_form(field)
    study = cfg["study"]
    if study == "residual":
        fit = run_residual_study(nf, cfg["modes"][0], cfg["h"], orders=tuple(cfg["orders"]),
                                 mu_mode=cfg["mu_mode"], grid_max=cfg["grid_max"],
                                 rtol=cfg["tol"], workers=cfg["threads"])
        cols = ["h", "mode", "orders", "mu_mode", "mu", "residual", "grid", "tol"]
        rows, summary = fit.rows, {"study": study, "slope": fit.slope,
                                   "intercept": fit.intercept, "fit_residual": fit.fit_residual,
                                   "expected_slope": 2.25}
    elif study == "gram":
        modes = cfg["modes"] if len(cfg["modes"]) > 1 else [(0, 0, 0), (0, 0, 1), (0, 0, 2)]
        fit = run_gram_study(nf, modes, cfg["h"], grid_max=cfg["grid_max"])
        cols = ["h", "grid", "max_offdiag", "diag", "tol"]
        rows, summary = fit.rows, {"study": study, "modes": [list(m) for m in modes],
                                   "slope": fit.slope, "intercept": fit.intercept,
                                   "fit_residual": fit.fit_residual, "expected_slope": 1.0}
    else:
        tol = cfg["tol"] if cfg["tol"] is not None and cfg["tol"] < 1e-3 else 1e-7
        res = run_eigenvalue_comparison(nf, int(cfg["m_max"] or 0), cfg["h"], tuple(cfg["n"]),
                                        tol, seed=cfg["seed"])
        cols = ["h", "level", "mode", "lambda_num", "mu", "difference", "normalized_h2",
                "lambda4", "C_needed", "per_grid", "grids", "tol"]
        rows, summary = res["rows"], {"study": study, "C_fit": res["C_fit"]}
    _write(cfg, "verify.csv", rows_to_csv(rows, cols), True)
    _write(cfg, "verify_summary.json", to_json(summary), True)


def cmd_gaps(cfg, field):
    from .experiments import predict_gaps

    r = predict_gaps(field, int(cfg["j"]), int(cfg["k"]), int(cfg["N"]))
    _write(cfg, "gaps.json", r.to_json(), True)


COMMANDS = {
    "analyze": cmd_analyze,
    "normal-form": cmd_normal_form,
    "asymptotics": cmd_asymptotics,
    "render": cmd_render,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "gaps": cmd_gaps,
}


def run(argv=None):
    """Execute one command; returns the process exit code."""
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        from .io import load_field

        field = load_field(cfg["field"])
        if cfg["dry_run"]:
            from .experiments import to_json

            plan = dict(cfg, command=args.command,
                        modes=[list(m) for m in _mode_list(cfg)]
                        if args.command == "asymptotics" else [list(m) for m in cfg["modes"]])
            sys.stdout.write(to_json(plan))
            return 0
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=cfg["threads"]):
            COMMANDS[args.command](cfg, field)
        return 0
    except MagwellError as e:
        print(f"magwell: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
