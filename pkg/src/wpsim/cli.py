"""Command-line front end: ``wpsim <verb> --config run.yaml --out DIR``.

Every run writes ``manifest.json`` (merged config, versions, timings),
``report.json`` (deterministic results) and, where a trajectory exists, CSV
series.  Exit codes: 0 success, 2 config error, 3 numerical failure (details
in ``error.json``), 4 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import platform
import sys
import time
import traceback
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .analysis.decay import decay_experiment
from .analysis.equilibrium import compute_equilibrium
from .analysis.mms import mms_convergence, sine_cosine_solution
from .analysis.smoothing import smoothing_probe
from .analysis.spectrum import linearized_spectrum
from .analysis.sweep import DataShape, smallness_sweep
from .config import EXPERIMENTS, RunConfig, parse_config
from .errors import ConfigError, NumericalFailure, WPSimError
from .timestepper import check_compatibility, integrate

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_INTERNAL = 0, 2, 3, 4

log = logging.getLogger("wpsim")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def _series(traj, cfg: RunConfig, prob, path: Path, theta_ref=None) -> None:
    ref = cfg.model.params.theta_a if theta_ref is None else theta_ref
    traj.to_csv(path, prob.grid, cfg.model.coeffs, ref, fields=cfg.fields)


def _trajectory_summary(traj, cfg: RunConfig, prob) -> dict:
    cols = traj.series(prob.grid, cfg.model.coeffs, cfg.model.params.theta_a)
    counts = traj.newton_counts()
    return {
        "t_final": traj.times[-1],
        "samples": len(traj.times),
        "steps": len(traj.steps),
        "halvings": int(sum(d.halvings for d in traj.steps)),
        "newton_iterations": {"max": int(counts.max()) if counts.size else 0,
                              "mean": float(counts.mean()) if counts.size else 0.0},
        "min_m": float(np.min(cols["min_m"])),
        "final": {k: float(v[-1]) for k, v in cols.items() if k != "t"},
    }


# experiments --------------------------------------------------------------

def run_simulate(cfg: RunConfig, out: Path) -> dict:
    prob = cfg.build()
    comp = check_compatibility(prob.s0, prob.bc, prob.grid, cfg.exponents)
    try:
        traj = integrate(prob.s0, cfg.t_end, cfg.stepper, cfg.model, prob.ops, prob.bc, cfg.exponents)
    except NumericalFailure as exc:
        partial = getattr(exc, "trajectory", None)
        if partial is not None and partial.states:
            _series(partial, cfg, prob, out / "series.csv")
        raise
    _series(traj, cfg, prob, out / "series.csv")
    return {"compatibility": comp.to_dict(), "trajectory": _trajectory_summary(traj, cfg, prob)}


def run_equilibrium(cfg: RunConfig, out: Path) -> dict:
    prob = cfg.build()
    eq = compute_equilibrium(cfg.model, prob.ops, r=cfg.params.get("r"))
    np.savetxt(out / "equilibrium.csv", np.column_stack([*prob.grid.coords, eq.u_star, eq.theta_star]),
               delimiter=",", header=",".join([*"xy"[:prob.grid.dim], "u_star", "theta_star"]), comments="")
    return {"equilibrium": eq.to_dict()}


def run_spectrum(cfg: RunConfig, out: Path) -> dict:
    prob = cfg.build()
    eq = compute_equilibrium(cfg.model, prob.ops, r=cfg.params.get("r"))
    lin = linearized_spectrum(eq, cfg.model, prob.ops, modes=int(cfg.params.get("modes", 5)),
                               method=cfg.params.get("method", "modes"))
    return {"equilibrium": eq.to_dict(), "spectrum": lin.to_dict()}


def run_decay(cfg: RunConfig, out: Path) -> dict:
    p = cfg.params
    prob = cfg.build()
    fits = []
    omega0 = None
    for i, amp in enumerate(p["amplitudes"]):
        fit, lin, traj = decay_experiment(cfg.model, prob.ops, prob.bc, cfg.stepper, float(amp),
                                           float(p["t_end"]), float(p["theta_amplitude"]),
                                           tuple(p["norms"]), float(p["skip"]), int(p["modes"]))
        omega0 = lin.omega0
        _series(traj, cfg, prob, out / f"series_{i}.csv")
        fits.append({"amplitude": float(amp), **fit.to_dict()})
    gaps = [abs(f["omega"] - omega0) for f in fits]
    return {"omega0": omega0, "modes": int(p["modes"]), "fits": fits,
            "toward_omega0": all(b < a for a, b in zip(gaps, gaps[1:]))}


def run_smoothing(cfg: RunConfig, out: Path) -> dict:
    p = cfg.params
    prob = cfg.build()
    rep = smoothing_probe(cfg.model, prob.ops, prob.bc, prob.s0, cfg.stepper, p["dts"],
                          tau=float(p["tau"]), field_name=str(p["field"]))
    return {"smoothing": rep.to_dict()}


def run_sweep(cfg: RunConfig, out: Path) -> dict:
    p = cfg.params
    prob = cfg.build()
    th_a = cfg.model.params.theta_a
    shape = DataShape(prob.s0.u, prob.s0.v, prob.s0.theta - th_a, np.full(prob.grid.size, th_a))
    horizons = [float(T) for T in np.atleast_1d(p["t_end"])]

    def one(T):
        return smallness_sweep(cfg.model, prob.ops, prob.bc, shape, cfg.stepper, T,
                               float(p["a_lo"]), float(p["a_hi"]), float(p["rel_width"]))

    with ThreadPoolExecutor(max_workers=int(p.get("workers", 1))) as pool:
        reports = list(pool.map(one, horizons))
    thresholds = [r.threshold for r in reports]
    finite = [t for t in thresholds if t is not None]
    monotone = len(finite) == len(thresholds) and all(b <= a for a, b in zip(finite, finite[1:]))
    return {"sweeps": [r.to_dict() for r in reports], "thresholds": thresholds,
            "nonincreasing_in_T": monotone}


def run_mms(cfg: RunConfig, out: Path) -> dict:
    p = cfg.params
    sol = sine_cosine_solution(cfg.model.params.theta_a)
    reports = {}
    for scheme in p["schemes"]:
        rep = mms_convergence(cfg.model, sol, bounds=cfg.grid.bounds, space_nodes=tuple(p["space_nodes"]),
                              space_dt=float(p["space_dt"]), time_nodes=int(p["time_nodes"]),
                              time_dts=tuple(p["time_dts"]), t_end=float(p["t_end"]), scheme=scheme,
                              workers=int(p.get("workers", 1)), j=cfg.j, ell=cfg.ell)
        reports[scheme] = rep.to_dict()
    return {"mms": reports}


def run_check(cfg: RunConfig, out: Path) -> dict:
    prob = cfg.build()
    return {"compatibility": check_compatibility(prob.s0, prob.bc, prob.grid, cfg.exponents).to_dict()}


RUNNERS = {
    "simulate": run_simulate, "equilibrium": run_equilibrium, "spectrum": run_spectrum,
    "decay": run_decay, "smoothing": run_smoothing, "sweep": run_sweep, "mms": run_mms, "check": run_check,
}


def _versions() -> dict:
    return {"wpsim": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "pyyaml": yaml.__version__}


def run(cfg: RunConfig, out: Path, argv: list[str] | None = None) -> dict:
    """Execute the configured experiment, writing manifest and report into ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    manifest = {"experiment": cfg.experiment, "seed": cfg.seed, "config": cfg.raw, "versions": _versions(),
                "argv": argv or [], "warnings": cfg.warnings}
    try:
        report = RUNNERS[cfg.experiment](cfg, out)
    finally:
        manifest["timings"] = {"wall_seconds": time.perf_counter() - t0}
        write_json(out / "manifest.json", manifest)
    report = {"experiment": cfg.experiment, "seed": cfg.seed, **report}
    write_json(out / "report.json", report)
    return report


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wpsim", description="Coupled Westervelt / Pennes simulator and experiments.")
    ap.add_argument("--version", action="version", version=f"wpsim {__version__}")
    ap.add_argument("verb", choices=EXPERIMENTS)
    ap.add_argument("--config", type=Path, help="YAML run configuration (defaults are used when omitted)")
    ap.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
    ap.add_argument("--seed", type=int, help="seed for randomized initial-data shapes")
    ap.add_argument("--fields", action="store_true", help="dump full nodal fields into the CSV series")
    ap.add_argument("--quiet", action="store_true", help="suppress console output")
    return ap


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="%(levelname)s %(message)s")
    say = (lambda *a: None) if args.quiet else (lambda *a: print(*a))

    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.fields:
        overrides["output"] = {"fields": True}
    out = args.out
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            cfg = parse_config(args.config, overrides=overrides or None, experiment=args.verb)
        for w in caught:
            if not args.quiet:
                print(f"warning: {w.message}", file=sys.stderr)
        out = out or cfg.out_dir
        cfg.raw["output"]["dir"] = str(out)
    except ConfigError as exc:
        _fail(out, {"error": "ConfigError", "key": exc.key, "constraint": exc.constraint}, args.quiet)
        return EXIT_CONFIG

    try:
        report = run(cfg, Path(out), argv)
    except NumericalFailure as exc:
        _fail(Path(out), exc.to_dict(), args.quiet)
        return EXIT_NUMERICAL
    except ConfigError as exc:
        _fail(Path(out), {"error": "ConfigError", "key": exc.key, "constraint": exc.constraint}, args.quiet)
        return EXIT_CONFIG
    except (WPSimError, ValueError) as exc:
        # bracket / setup errors raised inside an experiment are configuration problems
        _fail(Path(out), {"error": type(exc).__name__, "message": str(exc)}, args.quiet)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        _fail(Path(out), {"error": type(exc).__name__, "message": str(exc),
                          "traceback": traceback.format_exc()}, args.quiet)
        return EXIT_INTERNAL
    say(f"{cfg.experiment}: report written to {Path(out) / 'report.json'}")
    return EXIT_OK


def _fail(out: Path | None, payload: dict, quiet: bool) -> None:
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        write_json(Path(out) / "error.json", payload)
    if not quiet:
        print(json.dumps(_jsonable(payload)), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
