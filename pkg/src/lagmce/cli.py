"""Command-line entry point: ``lagmce <subcommand> ...``.

Exit status: 0 on success, 1 when a suite fails or a domain error is raised,
2 on usage or configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

log = logging.getLogger("lagmce")


class UsageError(Exception):
    pass


def _floats(text: str) -> list:
    try:
        return [float(a) for a in text.split(",") if a.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list:
    try:
        return [int(a) for a in text.split(",") if a.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise argparse.ArgumentTypeError(f"no such file: {path}")
    return p


def _writable(path: str) -> Path:
    p = Path(path)
    parent = p.parent if str(p.parent) else Path(".")
    if not parent.exists():
        raise argparse.ArgumentTypeError(f"directory does not exist: {parent}")
    return p


# ------------------------------------------------------------------ solve


def _problem_from_config(cfg: dict, base: Path, resolution=None):
    import numpy as np

    from .fields import Grid, read_field
    from .phase import Expression, PhaseSpec
    from .solver import DirichletProblem

    res = resolution or cfg["resolution"]
    if isinstance(res, int):
        res = [res] * len(cfg["domain"]["lo"])
    grid = Grid(tuple(cfg["domain"]["lo"]), tuple(cfg["domain"]["hi"]), tuple(res))
    ph = cfg["phase"]
    if ph["kind"] == "constant":
        theta = PhaseSpec.constant(ph["value"], grid.n)
    elif ph["kind"] == "expr":
        theta = PhaseSpec.expression(ph["expr"], grid.n)
    else:
        theta = PhaseSpec.sampled(read_field(base / ph["path"]))
    bd = cfg["boundary"]
    if bd["kind"] == "expr":
        psi = Expression(bd["expr"], grid.n)
    else:
        f = read_field(base / bd["path"])
        if f.grid != grid:
            from scipy.interpolate import RegularGridInterpolator
            interp = RegularGridInterpolator(f.grid.axes, f.values)
            psi = lambda x: interp(x.reshape(-1, grid.n)).reshape(x.shape[:-1])  # noqa: E731
        else:
            psi = f
    return DirichletProblem(grid, theta, psi), np


def cmd_solve(args) -> int:
    from .fields import read_config, write_field, write_report
    from .solver import SolveOptions, solve

    cfg = read_config(args.config)
    problem, _ = _problem_from_config(cfg, args.config.parent, args.resolution)
    opts = SolveOptions(**cfg.get("solver", {}))
    if args.tol is not None:
        opts.tol = args.tol
    out = solve(problem, opts)
    write_field(args.out, out.u)
    if args.log:
        write_report(args.log, {"config": str(args.config), "grid": problem.grid.resolution, **out.to_dict()})
    log.info("residual %.3e after %d Newton iterations", out.residual_sup, out.newton_iters)
    return EXIT_OK


# ----------------------------------------------------------------- rotate


def cmd_rotate(args) -> int:
    import numpy as np

    from .fields import hessian, read_field, write_field, write_report
    from .rotation import RotationSpec, beta_star, lewy_yuan_sigma, rotate_graph
    from .spectral import phase

    u = read_field(args.input)
    n = u.grid.n
    if args.beta_star:
        spec = beta_star(n)
    elif args.auto_delta:
        H = hessian(u)
        theta = phase(np.linalg.eigvalsh(H.values[H.valid]))
        spec = lewy_yuan_sigma(float(theta.min()), n).rotation(n)
    else:
        if len(args.beta) != n:
            raise UsageError(f"--beta needs {n} angles")
        spec = RotationSpec(tuple(args.beta))
    rg = rotate_graph(u, spec)
    write_field(args.out, rg.ubar_gradient)
    if args.log:
        write_report(args.log, {"beta": spec.beta, "jacobian_min": rg.jacobian_min,
                                "target_lo": rg.target_grid.lo, "target_hi": rg.target_grid.hi})
    return EXIT_OK


# --------------------------------------------------------------- geometry


def cmd_geometry(args) -> int:
    import numpy as np

    from .fields import Grid, ScalarField, gradient, hessian, read_field, third_derivatives
    from .geometry import geometry_at
    from .phase import Expression

    if args.input:
        u = read_field(args.input)
    else:
        if args.n is None:
            raise UsageError("--expr needs --n")
        grid = Grid.cube(args.n, args.resolution, args.half_width)
        u = ScalarField(grid, Expression(args.expr, args.n)(grid.points))
    g = u.grid
    Du, M, C = gradient(u), hessian(u).values, third_derivatives(u)
    mask = g.interior(2)
    n = g.n
    header = ([f"x{i + 1}" for i in range(n)] + [f"lambda{i + 1}" for i in range(n)]
              + [f"angle{i + 1}" for i in range(n)] + ["v", "H_norm", "h_max"])
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for idx in zip(*np.nonzero(mask)):
            geo = geometry_at(Du[idx], M[idx], C[idx], x=g.points[idx])
            row = list(g.points[idx]) + list(geo.lam) + list(geo.jordan) + [
                geo.v, float(np.linalg.norm(geo.H)), float(np.abs(geo.h).max())]
            w.writerow([f"{x:.17g}" for x in row])
    return EXIT_OK


# --------------------------------------------------------- counterexample


def cmd_counterexample(args) -> int:
    from .counterexample import blowup_table, build_family, radial_profile

    eps = sorted(args.eps, reverse=True)
    fam = build_family(args.phi, args.n, eps[0])
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = blowup_table(fam, eps)
    with open(out / "blowup.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eps", "min_eig_origin", "sup_dtheta", "inf_phase_margin"])
        for r in rows:
            w.writerow([f"{r.eps:.17g}", f"{r.min_eig_origin:.17g}", f"{r.sup_dtheta:.17g}",
                        f"{r.inf_phase_margin:.17g}"])
    for e in eps:
        prof = radial_profile(fam.with_eps(e), args.grid)
        cols = ["r", "lambda_min", "lambda_tangential", "theta", "dtheta", "phi"]
        with open(out / f"radial_eps{e:g}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for i in range(len(prof["r"])):
                w.writerow([f"{prof[c][i]:.17g}" for c in cols])
    return EXIT_OK


# ----------------------------------------------------------------- verify


def cmd_verify(args) -> int:
    from .fields import write_report
    from . import verification as V

    s = args.suite
    if s == "all":
        res = V.run_all(args.seed, args.report_dir, args.budget)
        if args.report:
            write_report(args.report, res["summary"])
        ok = res["summary"]["all_passed"]
    else:
        if s == "lambda":
            rep = V.run_lambda_suite(args.n or 3, args.samples or 10**6, args.seed)
        elif s == "identities":
            rep = V.run_identity_suite(args.n or 2, args.samples or 200, args.seed)
        elif s == "jacobi":
            rep = V.run_jacobi_suite(args.n or 3, args.samples or 1000, args.seed)
        elif s == "wnn":
            rep = V.run_wnn_probe(seed=args.seed)
        else:
            rep = V.run_volume_check(seed=args.seed, n=args.n or 2)
        if args.report:
            write_report(args.report, rep)
        ok = rep.passed
        print(f"{rep.suite}: {'PASS' if ok else 'FAIL'} worst={rep.worst:.3e}")
    return EXIT_OK if ok else EXIT_FAIL


# ------------------------------------------------------------------- scan


def cmd_scan(args) -> int:
    from .solver import hessian_scan

    rows = hessian_scan(args.lambdas, args.kappa, tuple(args.resolutions), args.n, args.seed)
    cols = ["Lambda", "resolution", "hessian_sup_half", "gradient_sup", "residual_sup", "newton_iters",
            "lipschitz", "drift", "error"]
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in cols})
    return EXIT_FAIL if any("error" in r for r in rows) else EXIT_OK


# ------------------------------------------------------------------- plot

_PLOT_SCHEMAS = {
    "radial": ({"r", "lambda_min", "theta"}, "r", ["lambda_min", "theta"]),
    "scan": ({"Lambda", "resolution", "hessian_sup_half"}, "Lambda", ["hessian_sup_half"]),
    "blowup": ({"eps", "min_eig_origin"}, "eps", ["min_eig_origin"]),
}

_PLOT_TEMPLATE = '''import csv
import matplotlib.pyplot as plt

rows = list(csv.DictReader(open({path!r})))
fig, axes = plt.subplots(1, {k}, figsize=({w}, 4))
axes = axes if {k} > 1 else [axes]
for ax, col in zip(axes, {cols!r}):
    groups = {{}}
    for r in rows:
        key = r.get("resolution", "")
        groups.setdefault(key, []).append((float(r[{x!r}]), float(r[col])))
    for key, pts in sorted(groups.items()):
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker=".", label=str(key) or None)
    ax.set_xlabel({x!r})
    ax.set_ylabel(col)
    if len(groups) > 1:
        ax.legend(title="resolution")
fig.tight_layout()
fig.savefig({png!r})
'''


def emit_plots(csv_path, out_path=None) -> Path:
    """Write a matplotlib script for a radial-profile, blow-up or scan CSV."""
    csv_path = Path(csv_path)
    with open(csv_path) as fh:
        header = set(next(csv.reader(fh), []))
    for kind, (need, x, cols) in _PLOT_SCHEMAS.items():
        if need <= header:
            break
    else:
        from .errors import FieldFormatError
        raise FieldFormatError(f"{csv_path}: unrecognised CSV columns {sorted(header)}")
    out = Path(out_path) if out_path else csv_path.with_suffix(".plot.py")
    out.write_text(_PLOT_TEMPLATE.format(path=str(csv_path), k=len(cols), w=5 * len(cols), cols=cols, x=x,
                                         png=str(csv_path.with_suffix(".png"))))
    return out


def cmd_plot(args) -> int:
    print(emit_plots(args.csv, args.out))
    return EXIT_OK


# ----------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lagmce", description="Lagrangian mean curvature equation toolkit.")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads for linear algebra (default: $LAGMCE_THREADS or library default)")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve a Dirichlet problem from a JSON config")
    s.add_argument("--config", type=_existing, required=True)
    s.add_argument("--out", type=_writable, required=True)
    s.add_argument("--log", type=_writable)
    s.add_argument("--resolution", type=int)
    s.add_argument("--tol", type=float)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("rotate", help="rotate the gradient graph of a field")
    s.add_argument("--in", dest="input", type=_existing, required=True)
    s.add_argument("--out", type=_writable, required=True)
    s.add_argument("--log", type=_writable)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--beta", type=_floats)
    g.add_argument("--beta-star", action="store_true")
    g.add_argument("--auto-delta", action="store_true")
    s.set_defaults(func=cmd_rotate)

    s = sub.add_parser("geometry", help="per-node graph geometry CSV")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--in", dest="input", type=_existing)
    src.add_argument("--expr")
    s.add_argument("--n", type=int)
    s.add_argument("--resolution", type=int, default=17)
    s.add_argument("--half-width", type=float, default=1.0)
    s.add_argument("--out", type=_writable, required=True)
    s.set_defaults(func=cmd_geometry)

    s = sub.add_parser("counterexample", help="radial counterexample tables")
    s.add_argument("--phi", choices=["default", "log2"], default="log2")
    s.add_argument("--n", type=int, default=2)
    s.add_argument("--eps", type=_floats, default=[0.2, 0.1, 0.05, 0.01])
    s.add_argument("--grid", type=int, default=201, help="radial samples per profile")
    s.add_argument("--out-dir", default=".")
    s.set_defaults(func=cmd_counterexample)

    s = sub.add_parser("verify", help="run property suites")
    s.add_argument("--suite", choices=["lambda", "identities", "jacobi", "wnn", "volume", "all"], required=True)
    s.add_argument("--n", type=int)
    s.add_argument("--samples", type=int)
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--budget", choices=["quick", "full"], default="quick")
    s.add_argument("--report", type=_writable)
    s.add_argument("--report-dir")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("scan", help="Hessian bound scan over Lipschitz constants")
    s.add_argument("--lambdas", type=_floats, default=[0.0, 0.5, 1.0, 2.0])
    s.add_argument("--kappa", type=float, default=1.0)
    s.add_argument("--resolutions", type=_ints, default=[33, 65, 129])
    s.add_argument("--n", type=int, default=2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", type=_writable, required=True)
    s.set_defaults(func=cmd_scan)

    s = sub.add_parser("plot", help="emit a plotting script for a CSV")
    s.add_argument("--csv", type=_existing, required=True)
    s.add_argument("--out", type=_writable)
    s.set_defaults(func=cmd_plot)
    return p


def _set_threads(count) -> None:
    if count is None:
        env = os.environ.get("LAGMCE_THREADS")
        count = int(env) if env else None
    if count is not None:
        for var in THREAD_VARS:
            os.environ[var] = str(count)
        try:
            from threadpoolctl import threadpool_limits
            threadpool_limits(count)
        except ImportError:
            pass


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    _set_threads(args.threads)
    from .errors import FieldFormatError, LagmceError
    try:
        return args.func(args)
    except (UsageError, FieldFormatError) as exc:
        print(f"lagmce {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LagmceError as exc:
        print(f"lagmce {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
