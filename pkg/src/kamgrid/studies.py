"""Convergence studies across lattice sizes and discounts."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .discounted import SolverConfig, _solve
from .exceptions import UnsupportedReferenceError
from .lagrangian import Lagrangian, TrigPotential, torus_samples
from .problem import LatticeProblem
from .weak_kam import ContinuationSchedule, solve_weak_kam

logger = logging.getLogger(__name__)

CSV_HEADER = ("sweep_var", "error", "bound", "slope_partial")


def effective_h_reference(lagrangian_or_potential, resolution: int | None = None) -> float:
    """``-min_x P(x)``, the effective Hamiltonian of kinetic-plus-potential Lagrangians.

    Valid whenever the kinetic part is even, vanishes only at ``v = 0`` and
    does not depend on ``x`` (every separable power law qualifies).  The
    minimum is taken on a uniform grid with ``resolution`` points per axis
    (``10^4`` in one dimension) and polished by a local search.

    Raises
    ------
    UnsupportedReferenceError
        For black-box Lagrangians.
    """
    obj = lagrangian_or_potential
    if isinstance(obj, Lagrangian):
        if not obj.separable:
            raise UnsupportedReferenceError("no analytic effective Hamiltonian for a black-box Lagrangian")
        potential = obj.potential
    else:
        potential = obj
    if not hasattr(potential, "d") or not callable(potential):
        raise UnsupportedReferenceError("object is neither a Lagrangian nor a potential")
    d = potential.d
    if resolution is None:
        resolution = {1: 10_000, 2: 1_000}.get(d, 60)
    pts = torus_samples(d, resolution)
    best_val, best_pt = np.inf, None
    for chunk in np.array_split(pts, max(1, len(pts) // 200_000)):
        vals = potential(chunk)
        k = int(np.argmin(vals))
        if vals[k] < best_val:
            best_val, best_pt = float(vals[k]), chunk[k]
    # polish the grid minimum; the potential is periodic so no bounds are needed
    polished = minimize(lambda x: float(potential(x[None, :])[0]), best_pt, method="Nelder-Mead",
                        options={"xatol": 1e-10, "fatol": 1e-15})
    return -min(best_val, float(polished.fun))


def fit_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``.

    Raises
    ------
    ValueError
        With fewer than three points or non-positive entries.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 3 or len(x) != len(y):
        raise ValueError("a slope fit needs at least three points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive values")
    slope, _ = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope)


def partial_slopes(x, y) -> list[float]:
    """Slope between each point and its predecessor (``nan`` for the first or undefined)."""
    out = [math.nan]
    for k in range(1, len(x)):
        if y[k] > 0 and y[k - 1] > 0 and x[k] != x[k - 1]:
            out.append(math.log(y[k] / y[k - 1]) / math.log(x[k] / x[k - 1]))
        else:
            out.append(math.nan)
    return out


@dataclass
class ConvergenceStudy:
    sweep_var: str
    values: list
    errors: list
    bounds: list
    reference: float | None
    reference_tag: str
    slope: float | None = None
    degenerate: bool = False
    note: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def slope_partial(self) -> list[float]:
        return partial_slopes(self.values, self.errors)

    @property
    def within_bounds(self) -> bool:
        return all(e <= b for e, b in zip(self.errors, self.bounds) if b is not None)

    def to_dict(self) -> dict:
        return {
            "sweep_var": self.sweep_var,
            "values": list(self.values),
            "errors": list(self.errors),
            "bounds": list(self.bounds),
            "slope_partial": [None if math.isnan(s) else s for s in self.slope_partial],
            "slope": self.slope,
            "reference": self.reference,
            "reference_tag": self.reference_tag,
            "degenerate": self.degenerate,
            "note": self.note,
            "extra": self.extra,
        }

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for v, e, b, s in zip(self.values, self.errors, self.bounds, self.slope_partial):
                writer.writerow([v, repr(float(e)), "" if b is None else repr(float(b)), "" if math.isnan(s) else repr(s)])


def _finish(study: ConvergenceStudy) -> ConvergenceStudy:
    errs = np.asarray(study.errors, dtype=float)
    study.degenerate = bool(np.all(errs == 0.0))
    if study.degenerate:
        study.note = (study.note + " All errors vanish; no slope is fitted.").strip()
        return study
    positive = errs > 0
    if positive.sum() >= 3:
        study.slope = fit_slope(np.asarray(study.values, dtype=float)[positive], errs[positive])
    return study


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def effective_hamiltonian_study(
    lagrangian: Lagrangian,
    Ns,
    schedule: ContinuationSchedule | None = None,
    cfg: SolverConfig | None = None,
    constant: float = 1.0,
    workers: int = 1,
) -> ConvergenceStudy:
    """``|Hbar_N - Hbar|`` over lattice sizes, against the bound ``constant * N^(-1/2)``.

    The analytic reference is used when available; otherwise the value at
    four times the largest ``N`` serves as a self-convergence reference.
    """
    Ns = sorted(int(n) for n in Ns)

    def hbar(N):
        return solve_weak_kam(LatticeProblem.build(lagrangian, N), schedule, cfg).hbar

    try:
        ref = effective_h_reference(lagrangian)
        tag = "analytic: -min P on a dense grid"
    except UnsupportedReferenceError:
        N_ref = 4 * Ns[-1]
        ref = hbar(N_ref)
        tag = f"self-convergence: Hbar_N at N={N_ref}"
    values = _map(hbar, Ns, workers)
    errors = [abs(v - ref) for v in values]
    bounds = [constant / math.sqrt(N) for N in Ns]
    study = ConvergenceStudy("N", Ns, errors, bounds, ref, tag, extra={"hbar_N": values, "constant": constant})
    return _finish(study)


def _shared_nodes(N: int, N_ref: int, d: int) -> np.ndarray:
    """Flat indices on the ``N_ref`` lattice of the nodes of the ``N`` lattice."""
    step = N_ref // N
    idx = np.stack(np.meshgrid(*([np.arange(N) * step] * d), indexing="ij"), axis=-1).reshape(-1, d)
    return np.ravel_multi_index(tuple(idx.T), (N_ref,) * d)


def rate_study_discounted(
    lagrangian: Lagrangian,
    lam: float,
    Ns,
    N_ref: int | None = None,
    cfg: SolverConfig | None = None,
    workers: int = 1,
) -> ConvergenceStudy:
    """Self-convergence of discounted value functions across lattice sizes.

    The error at ``N`` is ``max |phi_N - phi_ref|`` over the nodes shared
    with the reference lattice ``N_ref`` (default four times the largest
    ``N``, which every ``N`` must divide).  The continuum value function
    has no closed form, so the finest lattice stands in for it; the study
    records this in its ``note``.
    """
    cfg = cfg or SolverConfig()
    Ns = sorted(int(n) for n in Ns)
    N_ref = N_ref or 4 * Ns[-1]
    for N in Ns:
        if N_ref % N:
            raise ValueError(f"reference size {N_ref} is not a multiple of {N}")
    d = lagrangian.d

    def phi(N):
        return _solve(LatticeProblem.build(lagrangian, N), lam, cfg, None, 0).phi

    ref = phi(N_ref)
    phis = _map(phi, Ns, workers)
    errors = [float(np.max(np.abs(p - ref[_shared_nodes(N, N_ref, d)]))) for N, p in zip(Ns, phis)]
    bounds = [None] * len(Ns)
    note = (
        "Reference is the discounted lattice solution at the finest N (surrogate for the continuum "
        "value function, which has no closed form here); the full rate in lam^(-3/2) N^(-1/2) against "
        "the continuum solution is not checked."
    )
    study = ConvergenceStudy(
        "N", Ns, errors, bounds, None, f"self-convergence: phi at N={N_ref}", note=note,
        extra={"lam": lam, "monotone": bool(all(b <= a for a, b in zip(errors, errors[1:])))},
    )
    return _finish(study)


def discount_sweep(
    lagrangian: Lagrangian,
    N: int,
    lams,
    schedule: ContinuationSchedule | None = None,
    cfg: SolverConfig | None = None,
    anchor: int = 0,
) -> ConvergenceStudy:
    """``|-lam phi_lam(anchor) - Hbar_N|`` as the discount decreases."""
    cfg = cfg or SolverConfig()
    problem = LatticeProblem.build(lagrangian, N)
    hbar = solve_weak_kam(problem, schedule, cfg, anchor).hbar
    lams = sorted((float(x) for x in lams), reverse=True)
    errors = [abs(-_solve(problem, lam, cfg, None, anchor).gain - hbar) for lam in lams]
    study = ConvergenceStudy(
        "lambda", lams, errors, [None] * len(lams), hbar, f"Hbar_N at N={N} by vanishing discount",
        extra={"monotone": bool(all(b <= a for a, b in zip(errors, errors[1:])))},
    )
    return _finish(study)


def mechanical_cosine(phase: float = 0.0, d: int = 1) -> Lagrangian:
    """``|v|^2 / 2 + sum_i cos(2 pi x_i + phase)``."""
    pot = TrigPotential.zero(d)
    for i in range(d):
        k = [0] * d
        k[i] = 1
        pot = pot + TrigPotential.cosine(k, 1.0, phase)
    return Lagrangian(potential=pot)
