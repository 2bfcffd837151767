"""Command-line front end: solve, convergence, fields, ellipses.

Configuration comes from a JSON file; every key has a documented default and
unknown keys are rejected.  Outputs are CSV (full-precision floats, header
row) and JSON for scalar metadata, written into the configured output
directory.  Exit codes: 0 success, 2 configuration error, 3 numerical
failure.

Heavy imports happen inside the command handlers so that --threads can cap
the BLAS thread pools through the environment before numpy is loaded.
"""

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import dataclass

__all__ = ["RunConfig", "ConfigError", "NumericalError", "main",
           "cmd_solve", "cmd_convergence", "cmd_fields", "cmd_ellipses"]


class ConfigError(Exception):
    pass


class NumericalError(Exception):
    pass


_DEFAULT_ALPHAS = (0.5, 0.25, 0.125, 0.0625, 0.03125)
_TOP_KEYS = {"system", "kernel", "rhs_matrix", "grid", "check_grid", "alphas",
             "output_dir", "regularize", "probe_spacing"}
_GRID_KEYS = {"bounds", "spacing", "offset"}
_KERNEL_KEYS = {"c"}


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration with all defaults resolved."""

    system: str
    kernel_c: float
    rhs_matrix: object          # None -> identity for the system dimension
    grid: object                # GridSpec
    check_grid: object          # GridSpec
    alphas: tuple
    output_dir: str
    regularize: bool
    probe_spacing: float


def _reject_unknown(mapping, allowed, context):
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ConfigError(f"unknown {context} keys: {', '.join(unknown)}")


def _parse_grid(raw, name, default_bounds, default_spacing, default_offset=None):
    """Parse one grid object; default_offset None means half the spacing
    (the staggered check-grid convention)."""
    from .collocation import GridSpec

    if not isinstance(raw, dict):
        raise ConfigError(f"{name} must be an object")
    _reject_unknown(raw, _GRID_KEYS, name)
    bounds = raw.get("bounds", default_bounds)
    spacing = float(raw.get("spacing", default_spacing))
    if default_offset is None:
        default_offset = spacing / 2.0
    try:
        spec = GridSpec(
            bounds=tuple(tuple(b) for b in bounds),
            spacing=spacing,
            offset=float(raw.get("offset", default_offset)),
        )
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid {name}: {err}") from err
    return spec


def load_config(path, output_dir=None, regularize=None):
    """Read and validate a JSON config file; flags override file values."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as handle:
            raw = json.load(handle)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config file {path} is not valid JSON: {err}") from err
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    _reject_unknown(raw, _TOP_KEYS, "config")

    kernel_raw = raw.get("kernel", {})
    if not isinstance(kernel_raw, dict):
        raise ConfigError("kernel must be an object")
    _reject_unknown(kernel_raw, _KERNEL_KEYS, "kernel")

    default_bounds = ((-1.0, 1.0), (-1.0, 1.0))
    grid = _parse_grid(raw.get("grid", {}), "grid", default_bounds, 0.125,
                       default_offset=0.0)
    check = _parse_grid(raw.get("check_grid", {}), "check_grid",
                        grid.bounds, 1.0 / 64.0)
    alphas = tuple(float(a) for a in raw.get("alphas", _DEFAULT_ALPHAS))

    rhs = raw.get("rhs_matrix")
    config = RunConfig(
        system=str(raw.get("system", "linear-example")),
        kernel_c=float(kernel_raw.get("c", 0.9)),
        rhs_matrix=None if rhs is None else [[float(v) for v in row] for row in rhs],
        grid=grid,
        check_grid=check,
        alphas=alphas,
        output_dir=str(output_dir if output_dir is not None
                       else raw.get("output_dir", "out")),
        regularize=bool(regularize if regularize is not None
                        else raw.get("regularize", False)),
        probe_spacing=float(raw.get("probe_spacing", 0.05)),
    )
    if config.kernel_c <= 0.0:
        raise ConfigError(f"kernel shape parameter must be positive, got {config.kernel_c}")
    if config.probe_spacing <= 0.0:
        raise ConfigError(f"probe_spacing must be positive, got {config.probe_spacing}")
    return config


def _setup(config):
    """Resolve the system bundle, kernel and right-hand side."""
    import numpy as np

    from .kernels import wendland_c8
    from .systems import get_system

    try:
        bundle = get_system(config.system)
    except ValueError as err:
        raise ConfigError(str(err)) from err
    kernel = wendland_c8(config.kernel_c)
    if config.rhs_matrix is not None:
        rhs = np.asarray(config.rhs_matrix, dtype=float)
    elif bundle.rhs is not None:
        rhs = bundle.rhs
    else:
        rhs = np.eye(bundle.system.dim)
    if rhs.shape != (bundle.system.dim,) * 2:
        raise ConfigError(f"rhs_matrix has shape {rhs.shape}, system dimension "
                          f"is {bundle.system.dim}")
    return bundle, kernel, rhs


def _fmt(value):
    return format(float(value), ".17g")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def _write_json(path, payload):
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _solve_on_grid(bundle, kernel, rhs, points, regularize):
    from .collocation import FactorizationError, assemble, solve

    t0 = time.perf_counter()
    cset, gram = assemble(bundle.system, kernel, points, equilibria=bundle.equilibria)
    t1 = time.perf_counter()
    try:
        solution = solve(gram, rhs, cset, kernel, regularize=regularize)
    except FactorizationError as err:
        raise NumericalError(f"factorization failed (pivot {err.pivot}): {err}") from err
    t2 = time.perf_counter()
    return solution, t1 - t0, t2 - t1


def cmd_solve(config):
    """Solve once on the configured grid; write solution.json and beta.csv."""
    from .collocation import fill_distance_estimate, make_grid, separation_distance

    bundle, kernel, rhs = _setup(config)
    points = make_grid(config.grid)
    solution, assemble_s, solve_s = _solve_on_grid(
        bundle, kernel, rhs, points, config.regularize)

    os.makedirs(config.output_dir, exist_ok=True)
    diag = solution.diagnostics
    _write_json(os.path.join(config.output_dir, "solution.json"), {
        "system": config.system,
        "kernel": {"c": kernel.shape_parameter, "sigma": kernel.sigma},
        "n_points": len(points),
        "n_unknowns": diag.dimension,
        "relative_residual": diag.relative_residual,
        "factorization": diag.factorization,
        "regularized": diag.regularized,
        "regularization_epsilon": diag.epsilon,
        "separation_distance": separation_distance(points) if len(points) > 1 else None,
        "fill_distance_estimate": fill_distance_estimate(
            points, config.grid.bounds, config.probe_spacing),
    })
    # wall-clock values live apart so the data artifacts stay byte-identical
    # across reruns of the same config
    _write_json(os.path.join(config.output_dir, "timing.json"), {
        "assemble_seconds": assemble_s,
        "solve_seconds": solve_s,
    })

    dim = bundle.system.dim
    pairs = [(i, j) for i in range(dim) for j in range(i, dim)]
    header = (["k"] + [f"x{a}" for a in range(dim)]
              + [f"beta_{i}{j}" for i, j in pairs])
    rows = []
    for k in range(len(points)):
        rows.append([str(k)] + [_fmt(v) for v in points[k]]
                    + [_fmt(solution.beta[k, i, j]) for i, j in pairs])
    _write_csv(os.path.join(config.output_dir, "beta.csv"), header, rows)
    print(f"solved {len(points)} points, {diag.dimension} unknowns, "
          f"residual {diag.relative_residual:.3e} -> {config.output_dir}")
    return 0


def cmd_convergence(config):
    """Run the error study over the configured spacings; write convergence.csv."""
    from .collocation import FactorizationError
    from .evaluate import convergence_study

    bundle, kernel, rhs = _setup(config)
    if bundle.exact is None:
        raise ConfigError(f"system {config.system!r} has no exact metric; "
                          "the convergence study needs one")
    try:
        report = convergence_study(
            bundle.system, bundle.exact, rhs, kernel, config.alphas,
            config.grid.bounds, config.check_grid,
            equilibria=bundle.equilibria, regularize=config.regularize)
    except FactorizationError as err:
        raise NumericalError(str(err)) from err

    os.makedirs(config.output_dir, exist_ok=True)
    rows = []
    for row in report.rows:
        rows.append([_fmt(row.alpha), _fmt(row.e_s),
                     "" if row.ratio_s is None else _fmt(row.ratio_s),
                     _fmt(row.e),
                     "" if row.ratio is None else _fmt(row.ratio)])
    rows.append(["reference", "", _fmt(report.reference_ratio),
                 "", _fmt(report.reference_ratio)])
    _write_csv(os.path.join(config.output_dir, "convergence.csv"),
               ["alpha", "e_s", "ratio_s", "e", "ratio"], rows)
    for row in report.rows:
        print(f"alpha={row.alpha:<10g} e_s={row.e_s:<12.4e} e={row.e:.4e}")
    print(f"reference ratio {report.reference_ratio:.4f} -> {config.output_dir}")
    return 0


def cmd_fields(config):
    """Solve, then sample S and L(S) on the evaluation grid; write CSV + summary."""
    from .collocation import make_grid
    from .evaluate import Definiteness, definiteness, field_export

    bundle, kernel, rhs = _setup(config)
    points = make_grid(config.grid)
    solution, _, _ = _solve_on_grid(bundle, kernel, rhs, points, config.regularize)
    eval_grid = make_grid(config.check_grid)
    samples = field_export(solution, bundle.system, eval_grid)

    os.makedirs(config.output_dir, exist_ok=True)
    dim = bundle.system.dim
    coord_names = ["x", "y"] if dim == 2 else [f"x{a}" for a in range(dim)]
    header = coord_names + ["trace_S", "det_S", "trace_FS", "neg_det_FS",
                            "min_eig_S", "max_eig_FS"]
    rows = []
    bad_s = 0
    bad_fs = 0
    for sample in samples:
        rows.append([_fmt(v) for v in sample.x]
                    + [_fmt(sample.trace_s), _fmt(sample.det_s),
                       _fmt(sample.trace_fs), _fmt(sample.neg_det_fs),
                       _fmt(sample.min_eig_s), _fmt(sample.max_eig_fs)])
        if definiteness(sample.s) is not Definiteness.POSITIVE_DEFINITE:
            bad_s += 1
        if definiteness(sample.fs) is not Definiteness.NEGATIVE_DEFINITE:
            bad_fs += 1
    _write_csv(os.path.join(config.output_dir, "fields.csv"), header, rows)
    _write_json(os.path.join(config.output_dir, "fields_summary.json"), {
        "n_points": len(samples),
        "metric_not_positive_definite": bad_s,
        "operator_not_negative_definite": bad_fs,
        "failures": bad_s + bad_fs,
    })
    print(f"{len(samples)} field samples, {bad_s + bad_fs} definiteness "
          f"failures -> {config.output_dir}")
    return 0


def cmd_ellipses(config, anchors, level, count):
    """Sample metric ellipses around anchor points; write ellipses.csv."""
    from .collocation import make_grid
    from .evaluate import Definiteness, definiteness, ellipse_points, eval_metric

    bundle, kernel, rhs = _setup(config)
    if bundle.system.dim != 2:
        raise ConfigError("ellipse export requires a two-dimensional system")
    points = make_grid(config.grid)
    solution, _, _ = _solve_on_grid(bundle, kernel, rhs, points, config.regularize)

    os.makedirs(config.output_dir, exist_ok=True)
    rows = []
    report = []
    failed = 0
    for anchor_id, anchor in enumerate(anchors):
        s_x = eval_metric(solution, anchor)
        if definiteness(s_x) is not Definiteness.POSITIVE_DEFINITE:
            failed += 1
            report.append({"id": anchor_id, "anchor": list(anchor), "ok": False,
                           "reason": "metric not positive definite here"})
            continue
        for v in ellipse_points(anchor, s_x, level, count):
            rows.append([str(anchor_id), _fmt(v[0]), _fmt(v[1])])
        report.append({"id": anchor_id, "anchor": list(anchor), "ok": True})
    _write_csv(os.path.join(config.output_dir, "ellipses.csv"),
               ["anchor_id", "x", "y"], rows)
    _write_json(os.path.join(config.output_dir, "ellipses_summary.json"), {
        "level": level, "points_per_ellipse": count,
        "anchors": report, "n_failed": failed,
    })
    print(f"{len(rows)} ellipse samples for {len(anchors) - failed}/{len(anchors)} "
          f"anchors -> {config.output_dir}")
    if failed == len(anchors):
        raise NumericalError("metric is not positive definite at any anchor")
    return 0


def _parse_anchor(text):
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigError(f"anchors are 'x,y' pairs, got {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError as err:
        raise ConfigError(f"invalid anchor {text!r}: {err}") from err


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="conmet",
        description="Meshfree construction of contraction metrics by kernel collocation.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("solve", "solve on the configured grid and export coefficients"),
            ("convergence", "reproduce the error table over the alpha list"),
            ("fields", "export definiteness fields of S and L(S)"),
            ("ellipses", "export metric ellipses around anchor points")):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("config", help="path to the JSON config file")
        cmd.add_argument("--output-dir", help="override the configured output directory")
        cmd.add_argument("--regularize", action="store_true", default=None,
                         help="retry a failed factorization with diagonal regularization")
        cmd.add_argument("--threads", type=int,
                         help="cap BLAS thread pools (effective at process start)")
        if name == "ellipses":
            cmd.add_argument("--anchor", action="append", default=[],
                             help="ellipse anchor 'x,y' (repeatable)")
            cmd.add_argument("--level", type=float, default=1.0,
                             help="ellipse level constant (default 1.0)")
            cmd.add_argument("--count", type=int, default=64,
                             help="samples per ellipse (default 64)")
    return parser


def _limit_threads(threads):
    if threads is None:
        return
    if threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {threads}")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(threads)
    if "numpy" in sys.modules:
        print("warning: numpy already imported; --threads may not take effect",
              file=sys.stderr)


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        _limit_threads(args.threads)
        config = load_config(args.config, output_dir=args.output_dir,
                             regularize=args.regularize)
        if args.command == "solve":
            return cmd_solve(config)
        if args.command == "convergence":
            return cmd_convergence(config)
        if args.command == "fields":
            return cmd_fields(config)
        anchors = [_parse_anchor(a) for a in args.anchor]
        if not anchors:
            raise ConfigError("ellipses needs at least one --anchor 'x,y'")
        return cmd_ellipses(config, anchors, args.level, args.count)
    except (ConfigError, ValueError) as err:
        print(f"config error: {err}", file=sys.stderr)
        print(parser.format_usage(), end="", file=sys.stderr)
        return 2
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3


def console_entry():
    sys.exit(main())


if __name__ == "__main__":
    console_entry()
