"""Command-line entry point for geopca."""

import argparse
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .config import METHODS, STRATEGIES, ConfigManager, RunConfig
from .errors import BundleError, ConfigError, GeoPCAError, IngestError
from .geometry import ReferenceFrame, frechet_mean, geodesic_point
from .gpca import (
    GeodesicComponents,
    consistency_experiment,
    fpca_fit,
    gpca_fit,
    gpca_scores,
    location_scale_population,
    location_scale_sampler,
    mode_of_variation,
)
from .ingest import (
    DatasetManifest,
    file_checksum,
    load_quantile_bundle,
    materialize,
    parametric_quantile,
    save_quantile_bundle,
)
from .measures import GridConfig, QuantileGrid, density_curve, wasserstein_distance
from .writers import atomic_write_csv, atomic_write_json, atomic_write_text, curve_rows, format_value

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

BUNDLE_SUFFIXES = (".sqlite", ".db")
CONSISTENCY_OMEGA = (-10.0, 10.0)


# ============ SETUP ============


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(name)s: %(message)s",
        stream=sys.stderr,
    )


def _config_manager(args: argparse.Namespace) -> ConfigManager:
    return ConfigManager(Path(args.config) if args.config else None)


def _apply_overrides(manager: ConfigManager, args: argparse.Namespace) -> None:
    omega = getattr(args, "omega", None)
    manager.update(
        grid_size=getattr(args, "grid", None),
        omega_lo=omega[0] if omega else None,
        omega_hi=omega[1] if omega else None,
        k=getattr(args, "k", None),
        method=getattr(args, "method", None),
        seed=getattr(args, "seed", None),
        output_dir=getattr(args, "out", None),
        open_bin_cap=getattr(args, "open_bin_cap", None),
        taus=getattr(args, "taus", None),
        steps=getattr(args, "steps", None),
        strategy=getattr(args, "strategy", None),
        trials=getattr(args, "trials", None),
        n_schedule=getattr(args, "n_schedule", None),
    )


def _grid(config: RunConfig) -> GridConfig:
    return GridConfig(config.grid_size, config.omega_lo, config.omega_hi)


def _prepare(
    args: argparse.Namespace,
) -> Tuple[RunConfig, List[str], List[QuantileGrid], Dict[str, Any]]:
    """Resolve the configuration and load the input dataset."""
    manager = _config_manager(args)
    source = Path(args.input)

    if source.suffix in BUNDLE_SUFFIXES:
        labels, data = load_quantile_bundle(source)
        _apply_overrides(manager, args)
        grid = data[0].grid
        manager.update(grid_size=grid.m, omega_lo=grid.omega_lo, omega_hi=grid.omega_hi)
        config = manager.resolve()
        inputs = {"bundle": str(source), "checksum": file_checksum(source)}
        return config, labels, data, inputs

    manifest = DatasetManifest.load(source)
    # an explicit config file governs the grid over the manifest's default
    if manifest.grid is not None and not args.config:
        manager.update(
            grid_size=manifest.grid.m,
            omega_lo=manifest.grid.omega_lo,
            omega_hi=manifest.grid.omega_hi,
        )
    _apply_overrides(manager, args)
    config = manager.resolve()
    labels, data = materialize(manifest, source.parent, _grid(config), config.open_bin_cap)
    inputs = {"manifest": str(source), "checksum": manifest.compute_checksum(source.parent)}
    return config, labels, data, inputs


def _write_run(out: Path, command: str, config: RunConfig, inputs: Dict[str, Any]) -> None:
    atomic_write_json(
        out / "run.json",
        {"command": command, "version": __version__, "config": config.to_dict(), "inputs": inputs},
    )


def _solver_options(config: RunConfig):
    return replace(config.solver, seed=config.seed)


def _tau_name(tau: float) -> str:
    return format_value(float(tau))


def _common_range(curves: Sequence[QuantileGrid]) -> Tuple[float, float]:
    lo = min(float(q.q[0]) for q in curves)
    hi = max(float(q.q[-1]) for q in curves)
    if not hi > lo:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def _write_quantile(path: Path, qg: QuantileGrid) -> None:
    atomic_write_csv(path, ("t", "q"), curve_rows(qg.knots, qg.q))


def _write_density(path: Path, qg: QuantileGrid, points: int, x_range=None) -> None:
    if x_range is None and not qg.q[-1] > qg.q[0]:
        x_range = _common_range([qg])
    x, f = density_curve(qg, points, x_range)
    atomic_write_csv(path, ("x", "density"), curve_rows(x, f))


# ============ COMMANDS ============


def cmd_ingest(args: argparse.Namespace) -> int:
    config, labels, data, inputs = _prepare(args)
    out = config.resolved_output_dir()
    bundle = Path(args.bundle) if args.bundle else out / "bundle.sqlite"
    save_quantile_bundle(data, labels, bundle)
    _write_run(out, "ingest", config, inputs)
    print(f"Ingested {len(data)} records into {bundle}")
    return EXIT_OK


def cmd_barycenter(args: argparse.Namespace) -> int:
    config, labels, data, inputs = _prepare(args)
    out = config.resolved_output_dir()
    barycenter = frechet_mean(data)
    _write_quantile(out / "barycenter.csv", barycenter)
    _write_density(out / "barycenter_density.csv", barycenter, config.density_points)
    _write_run(out, "barycenter", config, inputs)
    print(f"Barycenter of {len(data)} records written to {out}")
    return EXIT_OK


def _sufficiency_text(labels: List[str], gc: GeodesicComponents) -> str:
    violators = gc.pcs.pca_violators
    lines = [f"components: {gc.n_components}", f"pca_sufficient: {'no' if violators else 'yes'}"]
    lines.append(f"violators: {len(violators)}")
    lines += [f"  {i}\t{labels[i]}" for i in violators]
    return "\n".join(lines) + "\n"


def _write_explained(path: Path, ratios: np.ndarray) -> None:
    atomic_write_csv(path, ("component", "explained_ratio"), ((j + 1, float(r)) for j, r in enumerate(ratios)))


def _write_scores(path: Path, labels: List[str], scores: np.ndarray) -> None:
    header = ["label"] + [f"score_{j + 1}" for j in range(scores.shape[1])]
    atomic_write_csv(path, header, ([label] + row.tolist() for label, row in zip(labels, scores)))


def _write_components(path: Path, axis_name: str, axis: np.ndarray, directions: np.ndarray) -> None:
    header = [axis_name] + [f"u_{j + 1}" for j in range(directions.shape[0])]
    atomic_write_csv(path, header, ([a] + col.tolist() for a, col in zip(axis.tolist(), directions.T)))


def _run_fpca_outputs(out: Path, config: RunConfig, labels: List[str], data: List[QuantileGrid]) -> None:
    fc = fpca_fit(data, config.k, points=config.density_points)
    _write_components(out / "components.csv", "x", fc.x, fc.pcs.directions)
    _write_scores(out / "scores.csv", labels, fc.pcs.scores)
    _write_explained(out / "explained.csv", fc.pcs.explained_ratios)
    for j in range(fc.pcs.k):
        for tau in config.taus:
            atomic_write_csv(
                out / f"mode_{j + 1}_t{_tau_name(tau)}.csv",
                ("x", "density"),
                curve_rows(fc.x, fc.linear_mode(j, tau)),
            )
    atomic_write_text(out / "sufficiency.txt", "not applicable to fpca\n")


def cmd_gpca(args: argparse.Namespace) -> int:
    config, labels, data, inputs = _prepare(args)
    out = config.resolved_output_dir()
    _write_run(out, "gpca", config, inputs)
    if config.method == "fpca":
        _run_fpca_outputs(out, config, labels, data)
        return EXIT_OK

    gc = gpca_fit(data, config.k, _solver_options(config), method=config.method)
    if gc.n_components < config.k:
        logger.warning("Writing %d components instead of %d", gc.n_components, config.k)
    _write_components(out / "components.csv", "t", gc.frame.grid.knots, gc.directions)
    _write_scores(out / "scores.csv", labels, gpca_scores(gc, data))
    _write_explained(out / "explained.csv", gc.pcs.explained_ratios)
    atomic_write_text(out / "sufficiency.txt", _sufficiency_text(labels, gc))

    mode_rows = []
    for j in range(gc.n_components):
        t_lo, t_hi = gc.mode_range(j)
        modes = [mode_of_variation(gc, j, tau) for tau in config.taus]
        x_range = _common_range(modes + [gc.barycenter])
        for tau, mode in zip(config.taus, modes):
            _write_density(out / f"mode_{j + 1}_t{_tau_name(tau)}.csv", mode, config.density_points, x_range)
            mode_rows.append((j + 1, float(tau), float(np.clip(tau, t_lo, t_hi)), t_lo, t_hi))
    atomic_write_csv(out / "modes.csv", ("component", "tau", "t_used", "t_min", "t_max"), mode_rows)
    print(
        f"GPCA ({gc.pcs.strategy}, status {gc.pcs.status}): "
        f"explained {', '.join(format(r, '.4f') for r in gc.pcs.explained_ratios)}"
    )
    return EXIT_OK


def _score_table(labels: List[str], scores: np.ndarray) -> List[str]:
    header = "label\t" + "\t".join(f"score_{j + 1}" for j in range(scores.shape[1]))
    return [header] + [
        label + "\t" + "\t".join(format_value(float(s)) for s in row)
        for label, row in zip(labels, scores)
    ]


def cmd_compare(args: argparse.Namespace) -> int:
    config, labels, data, inputs = _prepare(args)
    out = config.resolved_output_dir()
    _write_run(out, "compare", config, inputs)

    fc = fpca_fit(data, config.k, points=config.density_points)
    method = config.method if config.method != "fpca" else "gpca-global"
    gc = gpca_fit(data, config.k, _solver_options(config), method=method)

    lines = ["# FPCA vs GPCA", ""]
    width = max(len(fc.explained_ratios), len(gc.pcs.explained_ratios))
    lines.append("method\t" + "\t".join(f"ratio_{j + 1}" for j in range(width)))
    for name, ratios in (("fpca", fc.explained_ratios), (method, gc.pcs.explained_ratios)):
        lines.append(name + "\t" + "\t".join(format_value(float(r)) for r in ratios))
    lines += ["", "## FPCA scores"] + _score_table(labels, fc.pcs.scores)
    lines += ["", f"## {method} scores"] + _score_table(labels, gpca_scores(gc, data))

    lines += ["", "## FPCA linear modes", "component\ttau\tmin_density"]
    for j in range(fc.pcs.k):
        for tau in config.taus:
            g = fc.linear_mode(j, tau)
            atomic_write_csv(
                out / f"fpca_mode_{j + 1}_t{_tau_name(tau)}.csv", ("x", "density"), curve_rows(fc.x, g)
            )
            lines.append(f"{j + 1}\t{_tau_name(tau)}\t{format_value(float(g.min()))}")
    atomic_write_text(out / "compare.txt", "\n".join(lines) + "\n")
    print(f"Comparison written to {out / 'compare.txt'}")
    return EXIT_OK


def cmd_geodesic(args: argparse.Namespace) -> int:
    config, labels, data, inputs = _prepare(args)
    out = config.resolved_output_dir()
    index = {label: i for i, label in enumerate(labels)}
    for label in (args.record_a, args.record_b):
        if label not in index:
            raise IngestError(f"No record labelled {label!r}")
    nu0, nu1 = data[index[args.record_a]], data[index[args.record_b]]
    frame = ReferenceFrame.from_quantile(frechet_mean([nu0, nu1]), repair=True)

    times = [i / config.steps for i in range(config.steps + 1)]
    points = [geodesic_point(frame, nu0, nu1, t) for t in times]
    x_range = _common_range(points)
    quantile_rows = []
    for i, (t, point) in enumerate(zip(times, points)):
        quantile_rows += [(t, tj, qj) for tj, qj in zip(point.knots.tolist(), point.q.tolist())]
        _write_density(out / f"geodesic_density_{i}.csv", point, config.density_points, x_range)
    atomic_write_csv(out / "geodesic_quantiles.csv", ("s", "t", "q"), quantile_rows)
    atomic_write_csv(
        out / "geodesic_distances.csv",
        ("s", "distance_from_start"),
        ((t, wasserstein_distance(nu0, p)) for t, p in zip(times, points)),
    )
    _write_run(out, "geodesic", config, inputs)
    print(f"Geodesic with {len(times)} points written to {out}")
    return EXIT_OK


def cmd_consistency(args: argparse.Namespace) -> int:
    manager = _config_manager(args)
    _apply_overrides(manager, args)
    config = manager.config
    if math.isinf(config.omega_lo) or math.isinf(config.omega_hi):
        config.omega_lo, config.omega_hi = CONSISTENCY_OMEGA
        logger.info("Consistency: using compact domain %s", CONSISTENCY_OMEGA)
    config = manager.resolve()
    out = config.resolved_output_dir()

    grid = _grid(config)
    base = parametric_quantile(
        {"family": "location_scale", "a": 1.0, "b": 0.0, "base": args.base}, grid
    )
    a_range, b_range = tuple(args.a_range), tuple(args.b_range)
    population, population_cost = location_scale_population(
        base, a_range, b_range, k=config.k, seed=config.seed
    )
    report = consistency_experiment(
        location_scale_sampler(base, a_range, b_range),
        population,
        n_schedule=config.n_schedule,
        trials=config.trials,
        k=config.k,
        seed=config.seed,
        opts=_solver_options(config),
        population_cost=population_cost,
    )
    atomic_write_csv(
        out / "consistency.csv",
        ("n", "median_barycenter_error", "median_cost", "population_cost"),
        ((n, e, c, population_cost) for n, e, c in report.rows()),
    )
    atomic_write_csv(
        out / "consistency_trials.csv",
        ("n", "trial", "barycenter_error", "cost"),
        (
            (n, trial, float(report.barycenter_errors[i, trial]), float(report.costs[i, trial]))
            for i, n in enumerate(report.n_schedule)
            for trial in range(report.barycenter_errors.shape[1])
        ),
    )
    _write_run(out, "consistency", config, {"base": args.base, "a_range": list(a_range), "b_range": list(b_range)})
    print(f"Consistency report written to {out / 'consistency.csv'}")
    return EXIT_OK


# ============ PARSER ============


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--grid", type=int, help="number of quantile knots m")
    common.add_argument("--omega", type=float, nargs=2, metavar=("LO", "HI"), help="domain bounds")
    common.add_argument("--k", type=int, help="number of components")
    common.add_argument("--method", choices=METHODS)
    common.add_argument("--strategy", choices=STRATEGIES, help="constrained search strategy")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--open-bin-cap", type=float, dest="open_bin_cap")
    common.add_argument("-v", "--verbose", action="store_true")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geopca", description="Geodesic PCA of one-dimensional probability measures"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_parser()

    p = sub.add_parser("ingest", parents=[common], help="materialize a manifest into a quantile bundle")
    p.add_argument("input", help="dataset manifest (JSON)")
    p.add_argument("--bundle", help="bundle path (default: <out>/bundle.sqlite)")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("barycenter", parents=[common], help="Wasserstein barycenter")
    p.add_argument("input", help="dataset manifest or quantile bundle")
    p.set_defaults(handler=cmd_barycenter)

    p = sub.add_parser("gpca", parents=[common], help="principal geodesics and modes of variation")
    p.add_argument("input", help="dataset manifest or quantile bundle")
    p.add_argument("--taus", type=float, nargs="+", help="mode parameters")
    p.set_defaults(handler=cmd_gpca)

    p = sub.add_parser("compare", parents=[common], help="FPCA vs GPCA report")
    p.add_argument("input", help="dataset manifest or quantile bundle")
    p.add_argument("--taus", type=float, nargs="+", help="linear mode parameters")
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("geodesic", parents=[common], help="geodesic between two records")
    p.add_argument("input", help="dataset manifest or quantile bundle")
    p.add_argument("record_a")
    p.add_argument("record_b")
    p.add_argument("--steps", type=int)
    p.set_defaults(handler=cmd_geodesic)

    p = sub.add_parser("consistency", parents=[common], help="location-scale consistency simulation")
    p.add_argument("--base", choices=("uniform", "normal"), default="uniform")
    p.add_argument("--a-range", type=float, nargs=2, default=[0.5, 1.5], dest="a_range")
    p.add_argument("--b-range", type=float, nargs=2, default=[-1.0, 1.0], dest="b_range")
    p.add_argument("--n-schedule", type=int, nargs="+", dest="n_schedule")
    p.add_argument("--trials", type=int)
    p.set_defaults(handler=cmd_consistency)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.verbose)
    try:
        return args.handler(args)
    except (IngestError, ConfigError, BundleError) as e:
        print(f"geopca: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except GeoPCAError as e:
        print(f"geopca: failed: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
