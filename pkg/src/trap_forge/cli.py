"""Command-line interface: ``trap-forge {optimize,analyze,render,sweep}``.

Every command writes its artifacts into ``--out-dir`` and prints a short JSON
summary on stdout.  Failures print ``{"error": ..., "message": ..., "details":
...}`` on stdout and exit with status 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis
from .config import ConfigError, RunConfig
from .constraints import ConstraintError
from .fourier import BasisError, build_basis
from .io import ElectrodeMap, MapFormatError, dumps_json, write_json, write_sweep_csv
from .lattice import LatticeError
from .optimize import OptimizationError
from .pipeline import optimize, suppress_spurious
from .render import write_svg

log = logging.getLogger("trap_forge")

KNOWN_ERRORS = (ConfigError, ConstraintError, OptimizationError, BasisError,
                MapFormatError, LatticeError)


def thread_cap() -> int | None:
    raw = os.environ.get("TRAP_FORGE_THREADS")
    if not raw:
        return None
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"TRAP_FORGE_THREADS must be an integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError("TRAP_FORGE_THREADS must be at least 1")
    return value


def parse_resolution(text: str | None):
    if text is None:
        return None
    try:
        parts = tuple(int(p) for p in text.replace("x", ",").split(","))
    except ValueError:
        raise ConfigError(f"--resolution-override expects nx,ny,nz, got {text!r}") from None
    if len(parts) != 3 or min(parts) < 4:
        raise ConfigError("--resolution-override expects three integers >= 4")
    return parts


# -- core runs (importable, used by the subcommands) --------------------------------


def run_optimize(config: RunConfig, resolution=None, analyze_landscape: bool = True) -> dict:
    """Build, solve, round and analyze one configuration.

    Returns a dict with the ``ElectrodeMap``, the report dict and the raw
    optimization result.
    """
    lattice = config.lattice.build()
    grid = config.grid.build()
    n_cut = config.effective_n_cut
    basis = build_basis(lattice, grid, n_cut)
    traps = config.build_traps()
    extras = config.build_extras()
    options = config.solver.build()
    res = tuple(resolution or config.analysis.resolution)
    region = config.analysis.region
    suppression = None
    if config.analysis.suppress_spurious:
        outcome = suppress_spurious(basis, traps, extras, options, region=region,
                                    resolution=res, threshold=config.solver.rounding_threshold)
        result = outcome.result
        extras = outcome.extras
        suppression = {
            "C_unconstrained": outcome.C_unconstrained,
            "kappa_reduction": outcome.reduction,
            "remaining_spurious": len(outcome.spurious),
            "history": outcome.history,
            "constraints_added": len(outcome.extras) - len(config.extras),
        }
    else:
        result, _ = optimize(basis, traps, extras, options, config.solver.rounding_threshold)

    kappas = analysis.kappa(result.C, traps)
    G, k_m = basis.dominant_mode(result.a)
    solver = {
        "C": result.C,
        "C_rounded": result.C_rounded,
        "kappa": kappas,
        "n_zero": result.n_zero,
        "n_one": result.n_one,
        "n_interior": result.n_interior,
        "interior_bound": result.interior_bound,
        "equality_residual": result.residual,
        "duality_gap": result.gap,
        "basic": result.basic,
        "rounding": result.rounding,
        "dominant_wavevector": G,
        "dominant_wavenumber": k_m,
    }
    report = {
        "config": json.loads(config.dumps()),
        "solver": solver,
        "suppression": suppression,
    }
    if analyze_landscape:
        physical = config.analysis.physical.build() if config.analysis.physical else None
        trap_report = analysis.analyze(basis, result.a, traps, C=result.C, region=region,
                                       resolution=res, physical=physical)
        report["analysis"] = trap_report.to_dict()
    emap = ElectrodeMap(lattice, grid, result.a, n_cut, config.solver.rail_tol,
                        result.C, kappas, traps)
    return {"map": emap, "report": report, "result": result, "basis": basis}


def run_analyze(emap: ElectrodeMap, resolution=(96, 96, 128), region=None, physical=None) -> dict:
    basis = build_basis(emap.lattice, emap.grid, emap.n_cut)
    report = analysis.analyze(basis, emap.a, emap.traps, C=emap.C, region=region,
                              resolution=tuple(resolution), physical=physical)
    if not report.minima:
        log.warning("no pseudopotential minima found")
    return report.to_dict()


def _sweep_point(args) -> dict:
    config_json, z, resolution = args
    config = RunConfig.loads(config_json).with_height(z)
    t0 = time.perf_counter()
    row = {"z_over_d": z, "kappa": None, "tau": None, "interior": None,
           "runtime_s": None, "status": "ok"}
    try:
        out = run_optimize(config, resolution, analyze_landscape=True)
        row["kappa"] = out["report"]["solver"]["kappa"][0]
        row["tau"] = out["report"]["analysis"]["traps"][0]["depth"]
        row["interior"] = out["result"].n_interior
    except KNOWN_ERRORS as exc:
        row["status"] = f"error: {exc}"
    row["runtime_s"] = time.perf_counter() - t0
    return row


def run_sweep(config: RunConfig, heights, workers: int = 1, resolution=None) -> list[dict]:
    if len(config.traps) != 1:
        raise ConfigError("sweep needs a configuration with exactly one trap per cell")
    heights = [float(z) for z in heights]
    if not heights:
        return []
    # lattice length unit: trap heights are given in units of |a1|
    d = float(np.linalg.norm(config.lattice.build().a1))
    jobs = [(config.dumps(), z * d, resolution) for z in heights]
    if workers <= 1:
        rows = [_sweep_point(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    for row, z in zip(rows, heights):
        row["z_over_d"] = z
    return rows


# -- argument handling --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default=".", help="directory for output files")
    common.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--seed", type=int, default=0,
                        help="recorded in reports; the pipeline itself is deterministic")
    common.add_argument("--resolution-override", metavar="NX,NY,NZ",
                        help="pseudopotential grid resolution")

    parser = argparse.ArgumentParser(prog="trap-forge", description="Surface-electrode trap lattice design")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", parents=[common], help="solve for an electrode pattern")
    p.add_argument("--config", required=True)

    p = sub.add_parser("analyze", parents=[common], help="re-analyze an electrode map")
    p.add_argument("map")
    p.add_argument("--config", help="take analysis options (region, resolution, physical) from here")

    p = sub.add_parser("render", parents=[common], help="render an electrode map as SVG")
    p.add_argument("map")
    p.add_argument("--output", help="SVG file name (default: <map stem>.svg)")

    p = sub.add_parser("sweep", parents=[common], help="kappa and depth over trap heights")
    p.add_argument("--config", required=True)
    p.add_argument("--z-over-d", type=float, nargs="*", default=None,
                   help="heights in units of |a1| (default: the config's sweep list)")
    p.add_argument("--workers", type=int, default=1)
    return parser


def _cmd_optimize(args, out_dir: Path) -> dict:
    config = RunConfig.load(args.config)
    out = run_optimize(config, parse_resolution(args.resolution_override))
    out["report"]["seed"] = args.seed
    paths = {
        "map": str(out["map"].write(out_dir / config.output.map)),
        "report": str(write_json(out["report"], out_dir / config.output.report)),
    }
    if config.output.svg:
        paths["svg"] = str(write_svg(out["map"], out_dir / config.output.svg))
    solver = out["report"]["solver"]
    return {"paths": paths, "C": solver["C"], "kappa": solver["kappa"],
            "n_interior": solver["n_interior"]}


def _cmd_analyze(args, out_dir: Path) -> dict:
    emap = ElectrodeMap.read(args.map)
    resolution, region, physical = (96, 96, 128), None, None
    if args.config:
        config = RunConfig.load(args.config)
        resolution, region = config.analysis.resolution, config.analysis.region
        physical = config.analysis.physical.build() if config.analysis.physical else None
    resolution = parse_resolution(args.resolution_override) or resolution
    report = {"analysis": run_analyze(emap, resolution, region, physical), "seed": args.seed}
    path = write_json(report, out_dir / (Path(args.map).stem + "_analysis.json"))
    return {"paths": {"report": str(path)},
            "spurious": len(report["analysis"]["spurious"]),
            "warnings": report["analysis"]["warnings"]}


def _cmd_render(args, out_dir: Path) -> dict:
    emap = ElectrodeMap.read(args.map)
    name = args.output or Path(args.map).stem + ".svg"
    return {"paths": {"svg": str(write_svg(emap, out_dir / name))}}


def _cmd_sweep(args, out_dir: Path) -> dict:
    config = RunConfig.load(args.config)
    heights = args.z_over_d if args.z_over_d is not None else config.sweep.z_over_d
    workers = max(1, args.workers)
    cap = thread_cap()
    if cap is not None:
        workers = min(workers, cap)
    rows = run_sweep(config, heights, workers, parse_resolution(args.resolution_override))
    path = write_sweep_csv(rows, out_dir / config.output.sweep_csv)
    return {"paths": {"sweep_csv": str(path)}, "points": len(rows),
            "failed": sum(1 for r in rows if r["status"] != "ok")}


COMMANDS = {"optimize": _cmd_optimize, "analyze": _cmd_analyze,
            "render": _cmd_render, "sweep": _cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    np.random.seed(args.seed)
    out_dir = Path(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        summary = COMMANDS[args.command](args, out_dir)
    except KNOWN_ERRORS as exc:
        error = {"error": type(exc).__name__, "message": str(exc),
                 "details": getattr(exc, "details", None) or getattr(exc, "diagnostics", None)}
        print(dumps_json(error))
        return 1
    except OSError as exc:
        print(dumps_json({"error": type(exc).__name__, "message": str(exc), "details": None}))
        return 1
    print(dumps_json(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
