"""Command line entry point ``kamgrid``.

Usage::

    kamgrid <subcommand> --config run.toml --out result.json [--seed S] [--quiet]

Exit status is 0 on success, 2 on an invalid configuration and 3 when a
solver does not converge (the best iterate is still written).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import RunConfig, load_config
from .coupling import estimate_coupling_gap, estimate_discounted_cost, simulate_chain
from .discounted import bound_report, solve_discounted
from .exceptions import ConfigurationError, ConvergenceError, UnsupportedReferenceError
from .mather import action, holonomic_residual, lp_mather_oracle, mather_from_policy, velocity_grid
from .problem import LatticeProblem
from .studies import discount_sweep, effective_h_reference, effective_hamiltonian_study, rate_study_discounted
from .weak_kam import extension_constant, mcshane_extend, relative_value_iteration, solve_weak_kam
from .lagrangian import torus_samples

logger = logging.getLogger("kamgrid")

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE = 0, 2, 3
SUBCOMMANDS = ("solve-discounted", "weak-kam", "mather", "simulate", "converge", "reference")


def _clean(obj):
    """Make ``obj`` JSON serialisable; non-finite floats become ``null``."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _metadata(cfg: RunConfig, command: str) -> dict:
    return {
        "command": command,
        "version": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "seed": cfg.seed,
        "tolerance": cfg.solver.tolerance,
        "solver": {
            "method": cfg.solver.method,
            "inner": cfg.solver.inner,
            "max_policy_iter": cfg.solver.max_policy_iter,
            "max_inner_iter": cfg.solver.max_inner_iter,
        },
        "schedule": {
            "lam0": cfg.schedule.lam0,
            "ratio": cfg.schedule.ratio,
            "min_lam": cfg.schedule.min_lam,
            "tolerance": cfg.schedule.tolerance,
        },
        "config_path": cfg.source,
        "config": cfg.raw,
        "lagrangian": cfg.lagrangian.to_dict(),
    }


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(payload), indent=2, allow_nan=False) + "\n")


def _companion(out: Path, suffix: str) -> Path:
    return out.with_name(out.stem + suffix)


def _problem(cfg: RunConfig) -> LatticeProblem:
    return LatticeProblem.build(cfg.lagrangian, cfg.single_N)


# --------------------------------------------------------------------------- subcommands


def run_solve_discounted(cfg: RunConfig, out: Path) -> dict:
    if cfg.lam is None:
        raise ConfigurationError("solve-discounted needs a discount", field="solver.lam")
    problem = _problem(cfg)
    sol = solve_discounted(problem, cfg.lam, cfg.solver, anchor=cfg.anchor)
    return {
        "N": problem.N,
        "lam": sol.lam,
        "phi": sol.phi,
        "relative": sol.relative,
        "gain": sol.gain,
        "policy": sol.policy,
        "residual": sol.residual,
        "iterations": sol.iterations,
        "method": sol.method,
        "bounds": bound_report(problem, sol),
        "constants": problem.constants.to_dict(),
    }


def run_weak_kam(cfg: RunConfig, out: Path) -> dict:
    problem = _problem(cfg)
    sol = solve_weak_kam(problem, cfg.schedule, cfg.solver, cfg.anchor)
    result = {"N": problem.N, **sol.to_dict(), "policy": sol.policy, "constants": problem.constants.to_dict()}
    if cfg.output.get("cross_check", True):
        rvi = relative_value_iteration(problem, cfg.solver, cfg.anchor)
        result["cross_check"] = {
            "method": rvi.method,
            "hbar": rvi.hbar,
            "residual": rvi.residual,
            "iterations": rvi.iterations,
            "difference": abs(rvi.hbar - sol.hbar),
        }
    samples = int(cfg.output.get("extension_samples", 0))
    if samples > 0:
        c = extension_constant(problem, sol.psi)
        ext = mcshane_extend(problem.lattice, sol.psi, c)
        pts = torus_samples(problem.d, samples)
        vals = ext(pts)
        path = _companion(out, "_extension.csv")
        header = ",".join([f"x{i}" for i in range(problem.d)] + ["value"])
        np.savetxt(path, np.column_stack([pts, vals]), delimiter=",", header=header, comments="", fmt="%.17g")
        result["extension"] = {"lipschitz": c, "samples": int(len(pts)), "csv": str(path)}
    return result


def run_mather(cfg: RunConfig, out: Path) -> dict:
    problem = _problem(cfg)
    wk = solve_weak_kam(problem, cfg.schedule, cfg.solver, cfg.anchor)
    mu = mather_from_policy(problem, wk.policy)
    report = holonomic_residual(problem, mu, int(cfg.mather.get("n_tests", 16)), seed=cfg.seed)
    atoms_path = _companion(out, "_atoms.csv")
    mu.to_csv(atoms_path)
    result = {
        "N": problem.N,
        "hbar": wk.hbar,
        "action": action(problem, mu),
        "action_plus_hbar": action(problem, mu) + wk.hbar,
        "holonomic": report.to_dict(),
        "atoms": len(mu),
        "atoms_csv": str(atoms_path),
        "max_speed": float(np.max(np.linalg.norm(mu.velocities, axis=1), initial=0.0)),
        "c5": problem.constants.c5,
    }
    if cfg.mather.get("lp", True):
        grid = velocity_grid(problem.d, float(cfg.mather.get("velocity_step", 0.25)), float(cfg.mather.get("velocity_max", 3.0)))
        cert = lp_mather_oracle(problem, grid, wk.policy, int(cfg.mather.get("max_variables", 50_000)))
        result["lp"] = {**cert.to_dict(), "value_plus_hbar": cert.value + wk.hbar}
    return result


def _policy_for(cfg: RunConfig, problem: LatticeProblem):
    sim = cfg.simulate
    if sim.get("policy", "optimal") == "constant":
        v = sim.get("velocity", [2.0] * problem.d)
        v = np.broadcast_to(np.asarray(v, dtype=float), (problem.d,))
        return np.tile(v, (problem.n_nodes, 1)), "constant"
    if cfg.lam is not None:
        return solve_discounted(problem, cfg.lam, cfg.solver).policy, f"discounted optimal (lam={cfg.lam})"
    return solve_weak_kam(problem, cfg.schedule, cfg.solver).policy, "weak KAM optimal"


def run_simulate(cfg: RunConfig, out: Path) -> dict:
    problem = _problem(cfg)
    sim = cfg.simulate
    policy, tag = _policy_for(cfg, problem)
    kind = sim.get("kind", "coupling")
    x2 = sim.get("x2", 0)
    if kind == "cost":
        lam = sim.get("lam", cfg.lam)
        if lam is None:
            raise ConfigurationError("cost estimation needs a discount", field="simulate.lam")
        est, se, tail = estimate_discounted_cost(problem, policy, x2, float(lam), cfg.sim_config(), float(sim.get("tail", 1e-4)))
        result = {"estimate": est, "stderr": se, "tail_bound": tail, "lam": lam, "start": x2}
        if sim.get("policy", "optimal") == "optimal" and cfg.lam is not None and float(lam) == cfg.lam:
            phi = solve_discounted(problem, cfg.lam, cfg.solver).phi
            node = problem.lattice.flat(x2) if np.ndim(x2) else int(x2)
            result["solver_value"] = float(phi[node])
            result["gap_in_stderr"] = abs(est - phi[node]) / se if se > 0 else None
    elif kind == "path":
        path = simulate_chain(problem, policy, x2, float(sim.get("horizon", 1.0)), cfg.seed)
        csv_path = _companion(out, ".csv")
        header = ",".join(["t"] + [f"x{i}" for i in range(problem.d)])
        np.savetxt(csv_path, np.column_stack([path.jump_times, path.lifts]), delimiter=",", header=header, comments="", fmt="%.17g")
        result = {"jumps": int(len(path.jump_times) - 1), "csv": str(csv_path)}
    else:
        times = sim.get("times", [0.25, 0.5, 1.0])
        x1 = sim.get("x1", [0.0] * problem.d)
        report = estimate_coupling_gap(problem, policy, x1, x2, times, cfg.sim_config())
        csv_path = _companion(out, ".csv")
        report.to_csv(csv_path)
        result = {**report.to_dict(), "all_pass": report.all_passed, "csv": str(csv_path)}
    result.update({"N": problem.N, "kind": kind, "policy": tag, "samples": cfg.sim_config().samples})
    return result


def run_converge(cfg: RunConfig, out: Path) -> dict:
    conv = cfg.converge
    sweep = conv.get("sweep", "N")
    workers = int(conv.get("workers", 1))
    if sweep == "lambda":
        lams = conv.get("values", [1.0, 0.1, 0.01, 0.001])
        study = discount_sweep(cfg.lagrangian, cfg.single_N, lams, cfg.schedule, cfg.solver, cfg.anchor)
    else:
        Ns = conv.get("values", cfg.N)
        if len(Ns) < 3:
            raise ConfigurationError("a convergence study needs at least three sweep points", field="converge.values")
        if sweep == "N":
            study = effective_hamiltonian_study(
                cfg.lagrangian, Ns, cfg.schedule, cfg.solver, float(conv.get("constant", 1.0)), workers
            )
        else:
            lam = conv.get("lam", cfg.lam)
            if lam is None:
                raise ConfigurationError("discounted sweep needs a discount", field="converge.lam")
            study = rate_study_discounted(cfg.lagrangian, float(lam), Ns, conv.get("reference_N"), cfg.solver, workers)
    csv_path = _companion(out, ".csv")
    study.to_csv(csv_path)
    result = {**study.to_dict(), "within_bounds": study.within_bounds, "csv": str(csv_path)}
    if sweep == "N" and study.slope is not None:
        result["slope_ok"] = study.slope <= -0.5
    return result


def run_reference(cfg: RunConfig, out: Path) -> dict:
    resolution = cfg.output.get("reference_resolution")
    try:
        value = effective_h_reference(cfg.lagrangian, resolution)
    except UnsupportedReferenceError as exc:
        raise ConfigurationError(str(exc), field="lagrangian") from exc
    return {"hbar": value, "formula": "-min P", "dimension": cfg.d}


RUNNERS = {
    "solve-discounted": run_solve_discounted,
    "weak-kam": run_weak_kam,
    "mather": run_mather,
    "simulate": run_simulate,
    "converge": run_converge,
    "reference": run_reference,
}


def _best_payload(best):
    if best is None:
        return None
    if hasattr(best, "to_dict"):
        return best.to_dict()
    if isinstance(best, tuple):
        return {"relative": best[0], "gain": best[1], "policy": best[2]} if len(best) == 3 else list(best)
    return best


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kamgrid", description="Lattice solvers for discounted and weak KAM Hamilton-Jacobi equations on the torus.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="TOML configuration file")
    parser.add_argument("--out", required=True, help="JSON output path (CSV companions share its stem)")
    parser.add_argument("--seed", type=int, default=None, help="override the master seed")
    parser.add_argument("--quiet", action="store_true", help="suppress the summary and log output")
    return parser


def run(subcommand: str, config: str, out: str, seed: int | None = None, quiet: bool = False) -> int:
    """Execute one subcommand; returns the exit status."""
    out_path = Path(out)
    try:
        cfg = load_config(config)
        if seed is not None:
            if seed < 0:
                raise ConfigurationError("seed must be nonnegative", field="seed")
            cfg.seed = seed
    except ConfigurationError as exc:
        if not quiet:
            print(f"kamgrid: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    meta = _metadata(cfg, subcommand)
    try:
        result = RUNNERS[subcommand](cfg, out_path)
    except ConfigurationError as exc:
        if not quiet:
            print(f"kamgrid: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        _write_json(out_path, {
            "status": "convergence_failure",
            "metadata": meta,
            "error": str(exc),
            "residual": exc.residual,
            "best": _best_payload(exc.best),
        })
        if not quiet:
            print(f"kamgrid: convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    _write_json(out_path, {"status": "ok", "metadata": meta, "result": result})
    if not quiet:
        keys = [k for k in ("hbar", "residual", "action", "slope", "estimate", "all_pass") if k in result]
        summary = ", ".join(f"{k}={result[k]}" for k in keys)
        print(f"kamgrid {subcommand}: wrote {out_path}" + (f" ({summary})" if summary else ""))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, which matches the validation code
        return int(exc.code or 0)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return run(args.subcommand, args.config, args.out, args.seed, args.quiet)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
