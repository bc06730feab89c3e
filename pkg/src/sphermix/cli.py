"""Command-line surface: estimate, fit-em, gof, cluster, simulate, plot-data."""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import assign_clusters, find_modes
from .em import select_bic
from .gof import GammaPrior, GofConfig, bayes_factor
from .kernels import KernelFamily, KernelSpec
from .pr import WeightSchedule, mixture_density, permutation_average
from .sphere import (
    MixingDensityGrid,
    build_grid,
    export_grid_csv,
    spherical_to_cartesian,
)
from .simulate import ExperimentConfig, schladitz_case, vmf_case
from .structural import maximize_marginal

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class DataError(Exception):
    pass


def load_dataset(path, norm_tol=1e-6, warnings_out=None):
    """Read unit vectors from CSV: 3 Cartesian or 2 (theta, phi) columns.

    An optional header row is autodetected. Cartesian rows are re-normalized,
    with a warning when any norm deviates by more than norm_tol.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    rows = []
    n_cols = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            row = [c.strip() for c in row if c.strip() != ""]
            if not row:
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise DataError(f"{path}: non-numeric value on row {lineno}")
            if n_cols is None:
                n_cols = len(vals)
                if n_cols not in (2, 3):
                    raise DataError(
                        f"{path}: expected 2 or 3 columns, got {n_cols}")
            elif len(vals) != n_cols:
                raise DataError(f"{path}: ragged row {lineno}")
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=float)
    if n_cols == 2:
        return spherical_to_cartesian(arr[:, 0], arr[:, 1])
    norms = np.linalg.norm(arr, axis=1)
    if np.any(norms <= 0):
        raise DataError(f"{path}: zero vector on row {int(np.argmin(norms)) + 1}")
    if np.any(np.abs(norms - 1.0) > norm_tol) and warnings_out is not None:
        worst = float(np.max(np.abs(norms - 1.0)))
        warnings_out.append(
            f"re-normalized Cartesian rows (max norm deviation {worst:.3g})")
    return arr / norms[:, None]


_T0 = None  # wall-clock start, set by main()


def _write_report(out_dir, name, report):
    if _T0 is not None:
        report["timing_seconds"] = round(time.time() - _T0, 3)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return str(path)


def _base_report(args):
    return {
        "command": " ".join(sys.argv[1:]),
        "version": __version__,
        "seed": args.seed,
        "config": {k: v for k, v in vars(args).items() if k != "func"},
        "outputs": [],
        "warnings": [],
    }


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--grid-theta", type=int, default=None,
                   help="polar cell count (default 60 full sphere / 30 hemisphere)")
    p.add_argument("--grid-phi", type=int, default=120)
    p.add_argument("--gamma", type=float, default=2.0 / 3.0)
    p.add_argument("--perms", type=int, default=25)
    p.add_argument("--threads", type=int, default=None,
                   help="cap BLAS thread pools (needs threadpoolctl)")


def _support_grid(family, args):
    spec = KernelSpec(family, 1.0)
    hemisphere = spec.support_theta_max < np.pi - 1e-12
    n_theta = args.grid_theta or (30 if hemisphere else 60)
    return build_grid(spec.support_theta_max, n_theta, args.grid_phi)


def _apply_threads(args, report):
    if args.threads is None:
        return
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(args.threads)
    except ImportError:
        report["warnings"].append("threadpoolctl unavailable; --threads ignored")


def cmd_estimate(args):
    report = _base_report(args)
    _apply_threads(args, report)
    data = load_dataset(args.data, warnings_out=report["warnings"])
    family = KernelFamily(args.family)
    grid = _support_grid(family, args)
    schedule = WeightSchedule(args.gamma)
    spec = KernelSpec(family, 1.0)
    lambda_range = (args.lambda_min or spec.lam_range[0],
                    args.lambda_max or spec.lam_range[1])
    curve = maximize_marginal(data, spec, lambda_range=lambda_range,
                              schedule=schedule, rng_seed=args.seed,
                              grid=grid, tol=args.lambda_tol,
                              budget=args.opt_budget)
    spec_hat = spec.with_lambda(curve.argmax)
    psi0 = MixingDensityGrid.uniform(grid)
    est = permutation_average(data, spec_hat, psi0, schedule=schedule,
                              n_perms=args.perms, rng_seed=args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    psi_path = out_dir / "psi_estimate.csv"
    export_grid_csv(psi_path, grid, est.psi.values)
    dens_grid = build_grid(np.pi, args.grid_theta or 60, args.grid_phi)
    f_hat = mixture_density(est.psi, spec_hat, dens_grid.nodes)
    dens_path = out_dir / "mixture_density.csv"
    export_grid_csv(dens_path, dens_grid, f_hat)
    curve_path = out_dir / "marginal_likelihood_curve.csv"
    np.savetxt(curve_path,
               np.column_stack([curve.lambdas, curve.log_liks]),
               delimiter=",", header="lambda,log_marginal_lik", comments="")
    report["outputs"] = [str(psi_path), str(dens_path), str(curve_path)]
    report["summary"] = {
        "n": est.n, "gamma": args.gamma, "n_perms": est.permutations,
        "lambda": curve.argmax, "log_marginal": est.log_marginal,
        "boundary_solution": curve.boundary_solution,
    }
    report["outputs"].append(_write_report(args.out_dir, "estimate_report.json", report))
    print(json.dumps(report["summary"]))
    return EXIT_OK


def cmd_fit_em(args):
    report = _base_report(args)
    _apply_threads(args, report)
    data = load_dataset(args.data, warnings_out=report["warnings"])
    fit = select_bic(data, KernelFamily(args.family), j_max=args.j_max,
                     restarts=args.restarts, rng_seed=args.seed,
                     max_iter=args.max_iter, tol=args.tol)
    report["fit"] = fit.to_dict()
    path = _write_report(args.out_dir, "em_fit.json", report)
    report["outputs"] = [path]
    print(json.dumps(report["fit"]))
    return EXIT_OK


def cmd_gof(args):
    report = _base_report(args)
    _apply_threads(args, report)
    data = load_dataset(args.data, warnings_out=report["warnings"])
    config = GofConfig(grid_n_theta=args.grid_theta or 60,
                       grid_n_phi=args.grid_phi,
                       n_perms=args.perms, rng_seed=args.seed,
                       gamma=args.gamma)
    result = bayes_factor(data, KernelFamily(args.family),
                          prior=GammaPrior(args.prior_shape, args.prior_scale),
                          config=config)
    report["bayes_factor"] = result.to_dict()
    path = _write_report(args.out_dir, "gof_report.json", report)
    report["outputs"] = [path]
    print(json.dumps(report["bayes_factor"]))
    return EXIT_OK


def cmd_cluster(args):
    report = _base_report(args)
    _apply_threads(args, report)
    data = load_dataset(args.data, warnings_out=report["warnings"])
    family = KernelFamily(args.family)
    grid = _support_grid(family, args)
    schedule = WeightSchedule(args.gamma)
    rng = np.random.default_rng(args.seed)
    n_sub = min(args.lambda_subsample, data.shape[0])
    sub = data[rng.choice(data.shape[0], size=n_sub, replace=False)]
    curve = maximize_marginal(sub, KernelSpec(family, 1.0), schedule=schedule,
                              rng_seed=args.seed, grid=grid)
    spec_hat = KernelSpec(family, curve.argmax)
    psi0 = MixingDensityGrid.uniform(grid)
    est = permutation_average(data, spec_hat, psi0, schedule=schedule,
                              n_perms=args.perms, rng_seed=args.seed)
    model = find_modes(est.psi, rel_threshold=args.rel_threshold,
                       kernel=spec_hat)
    labels = assign_clusters(data, model)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    labels_path = out_dir / "cluster_labels.csv"
    np.savetxt(labels_path,
               np.column_stack([np.arange(data.shape[0]), labels]),
               fmt="%d", delimiter=",", header="index,label", comments="")
    report["outputs"] = [str(labels_path)]
    report["modes"] = {
        "lambda": curve.argmax,
        "n_modes": int(model.n_modes),
        "modes": model.modes.tolist(),
        "mode_masses": model.mode_masses.tolist(),
    }
    report["outputs"].append(_write_report(args.out_dir, "cluster_report.json", report))
    print(json.dumps({"n_modes": int(model.n_modes), "lambda": curve.argmax}))
    return EXIT_OK


def cmd_simulate(args):
    report = _base_report(args)
    _apply_threads(args, report)
    with open(args.config) as fh:
        cfg = json.load(fh)
    family = KernelFamily(cfg["family"])
    case = cfg.get("case")
    overrides = {k: cfg[k] for k in
                 ("n", "replications", "n_perms", "seed", "grid_n_theta",
                  "grid_n_phi", "eval_n_theta", "eval_n_phi",
                  "partition_k_theta", "partition_k_phi", "em_j_max",
                  "em_restarts", "opt_budget") if k in cfg}
    if case is not None:
        maker = vmf_case if family is KernelFamily.VMF else schladitz_case
        config = maker(case, **overrides)
        if "lambda" in cfg:
            config = ExperimentConfig(**{**config.__dict__,
                                         "true_lambda": cfg["lambda"]})
    else:
        raise DataError("config must name a simulation 'case'")
    from .simulate import run_experiment

    result = run_experiment(config)
    summary = result.summary()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table_path = out_dir / "simulation_table.csv"
    with open(table_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["case", "kl_pr_mean", "kl_pr_se", "kl_ml_mean",
                         "kl_ml_se", "d_pr_mean", "d_pr_se", "d_ml_mean",
                         "d_ml_se"])
        writer.writerow([case,
                         summary["kl_pr_mean"], summary["kl_pr_se"],
                         summary["kl_ml_mean"], summary["kl_ml_se"],
                         summary["d_pr_mean"], summary["d_pr_se"],
                         summary["d_ml_mean"], summary["d_ml_se"]])
    report["summary"] = summary
    report["provenance"] = {
        "seed": config.seed, "n": config.n,
        "replications": config.replications, "n_perms": config.n_perms,
        "grid": [config.grid_n_theta, config.grid_n_phi],
        "partition": [config.partition_k_theta, config.partition_k_phi],
        "version": __version__,
    }
    report["outputs"] = [str(table_path),
                         _write_report(args.out_dir, "simulation_report.json",
                                       report)]
    print(json.dumps(summary))
    return EXIT_OK


def cmd_plot_data(args):
    report = _base_report(args)
    arr = np.loadtxt(args.estimate, delimiter=",", skiprows=1)
    if arr.ndim != 2 or arr.shape[1] < 3:
        raise DataError(f"{args.estimate}: expected grid CSV with >= 3 columns")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "plot_data.csv"
    value_col = arr[:, -1]
    np.savetxt(path, np.column_stack([arr[:, 0], arr[:, 1], value_col]),
               delimiter=",", header="theta,phi,value", comments="")
    report["outputs"] = [str(path),
                         _write_report(args.out_dir, "plot_data_report.json",
                                       report)]
    print(json.dumps({"nodes": int(arr.shape[0])}))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sphermix",
        description="Smooth mixing-density estimation for spherical data")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("estimate", help="PR mixing-density estimate")
    p.add_argument("--data", required=True)
    p.add_argument("--family", required=True, choices=["vmf", "schladitz"])
    p.add_argument("--lambda-min", type=float, default=None)
    p.add_argument("--lambda-max", type=float, default=None)
    p.add_argument("--lambda-tol", type=float, default=1e-3)
    p.add_argument("--opt-budget", type=int, default=40)
    _add_common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("fit-em", help="EM finite-mixture baseline with BIC")
    p.add_argument("--data", required=True)
    p.add_argument("--family", required=True, choices=["vmf", "schladitz"])
    p.add_argument("--j-max", type=int, default=10)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-8)
    _add_common(p)
    p.set_defaults(func=cmd_fit_em)

    p = sub.add_parser("gof", help="goodness-of-fit Bayes factor")
    p.add_argument("--data", required=True)
    p.add_argument("--family", required=True, choices=["vmf", "schladitz"])
    p.add_argument("--prior-shape", type=float, default=2.0)
    p.add_argument("--prior-scale", type=float, default=0.5)
    _add_common(p)
    p.set_defaults(func=cmd_gof)

    p = sub.add_parser("cluster", help="mode-based clustering of unit vectors")
    p.add_argument("--data", required=True)
    p.add_argument("--family", default="vmf", choices=["vmf", "schladitz"])
    p.add_argument("--lambda-subsample", type=int, default=500)
    p.add_argument("--rel-threshold", type=float, default=0.2)
    _add_common(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("simulate", help="replication study from a config file")
    p.add_argument("--config", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("plot-data", help="contour-ready (theta, phi, value) CSV")
    p.add_argument("--estimate", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_plot_data)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    global _T0
    _T0 = time.time()
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, FloatingPointError, np.linalg.LinAlgError,
            RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
