"""Monte Carlo for the controlled lattice chain.

Samples are advanced together, one event per sweep, by a vectorised
Gillespie scheme.  Sample ``i`` draws its uniforms from its own stream
``SeedSequence(seed, spawn_key=(i,))``, so every path depends only on the
master seed and its sample index and never on batching.

Positions are tracked as unwrapped lifts: the chain as an integer
multi-index (in units of ``h``) and the deterministic companion as a point
of R^d that moves with the chain's current velocity between events.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import canonicalize, nearest_lift, wrap_distance
from .problem import LatticeProblem


@dataclass
class SimConfig:
    """Sampling parameters.

    Attributes
    ----------
    seed : master seed
    samples : number of independent replicas
    horizon : final time ``T``
    lam : discount rate for cost estimates (optional)
    times : observation times in ``[0, T]`` (optional)
    """

    seed: int = 0
    samples: int = 10_000
    horizon: float = 1.0
    lam: float | None = None
    times: list | None = None

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be at least 1")
        if not self.horizon >= 0:
            raise ValueError("horizon must be nonnegative")
        if self.lam is not None and not self.lam > 0:
            raise ValueError("discount must be positive")


class _Strategy:
    """Uniform view of stationary policies and time-dependent strategies."""

    def __init__(self, problem: LatticeProblem, strategy, bound: float | None):
        lat = problem.lattice
        self.lattice = lat
        if callable(strategy):
            if bound is None or not np.isfinite(bound) or bound < 0:
                raise ValueError("a time-dependent strategy needs a finite speed bound")
            self.func = strategy
            self.policy = None
            self.bound = float(bound)
            # sum_i |v_i| <= sqrt(d) |v|
            self.max_rate = lat.N * math.sqrt(lat.d) * self.bound
        else:
            policy = np.asarray(strategy, dtype=float)
            if policy.ndim == 1 and policy.shape == (lat.d,):
                policy = np.tile(policy, (lat.n_nodes, 1))
            if policy.shape != (lat.n_nodes, lat.d) or not np.all(np.isfinite(policy)):
                raise ValueError(f"policy must be a finite ({lat.n_nodes}, {lat.d}) array")
            self.func = None
            self.policy = policy
            self.bound = float(np.max(np.linalg.norm(policy, axis=1)))
            if bound is not None and self.bound > bound * (1 + 1e-12):
                raise ValueError(f"policy speed {self.bound} exceeds the declared bound {bound}")
            self.max_rate = lat.N * float(np.max(np.abs(policy).sum(axis=1)))

    @property
    def stationary(self) -> bool:
        return self.policy is not None

    def velocity(self, t: np.ndarray, nodes: np.ndarray) -> np.ndarray:
        if self.policy is not None:
            return self.policy[nodes]
        v = np.asarray(self.func(t, nodes), dtype=float).reshape(len(nodes), self.lattice.d)
        if not np.all(np.isfinite(v)) or np.any(np.linalg.norm(v, axis=1) > self.bound * (1 + 1e-12)):
            raise ValueError("strategy returned a velocity outside its declared bound")
        return v


class _Streams:
    """Per-sample uniform streams consumed in lockstep blocks."""

    def __init__(self, seed: int, samples: int, per_event: int, expected_events: float):
        self.gens = [np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,))) for i in range(samples)]
        self.per_event = per_event
        width = per_event * int(expected_events + 5 * math.sqrt(expected_events) + 16)
        self.block = np.stack([g.random(width) for g in self.gens]) if samples else np.zeros((0, width))
        self.pos = 0

    def take(self, rows: np.ndarray) -> np.ndarray:
        """Next ``per_event`` uniforms of every sample; ``rows`` are the live samples."""
        if self.pos + self.per_event > self.block.shape[1]:
            extra = np.zeros((len(self.gens), self.block.shape[1]))
            for i in rows:
                extra[i] = self.gens[i].random(self.block.shape[1])
            self.block = np.hstack([self.block, extra])
        out = self.block[:, self.pos : self.pos + self.per_event]
        self.pos += self.per_event
        return out


@dataclass
class _Run:
    times: np.ndarray
    chain: np.ndarray  # (S, K, d) chain lifts in R^d
    companion: np.ndarray  # (S, K, d)
    jumps: np.ndarray  # (S,)
    cost: np.ndarray | None = None  # (S,) discounted running cost
    events: list | None = None  # per-sample (times, multi-indices) when recorded


def _simulate(
    problem: LatticeProblem,
    strat: _Strategy,
    start: np.ndarray,
    horizon: float,
    seed: int,
    samples: int,
    times=(),
    companion0=None,
    lam: float | None = None,
    record: bool = False,
) -> _Run:
    lat = problem.lattice
    d, N, h = lat.d, lat.N, lat.h
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(times > horizon):
        raise ValueError("observation times must lie in [0, horizon]")
    per_event = 2 if strat.stationary else 3
    streams = _Streams(seed, samples, per_event, strat.max_rate * horizon)

    k = np.tile(np.asarray(start, dtype=np.int64), (samples, 1))
    y = np.tile(np.asarray(companion0 if companion0 is not None else start * h, dtype=float), (samples, 1))
    t = np.zeros(samples)
    jumps = np.zeros(samples, dtype=np.int64)
    obs_chain = np.zeros((samples, len(times), d))
    obs_comp = np.zeros((samples, len(times), d))
    cost = np.zeros(samples) if lam is not None else None
    events = [([0.0], [k[i].copy()]) for i in range(samples)] if record else None
    live = np.arange(samples)

    while live.size:
        u = streams.take(live)[live]
        nodes = lat.flat(np.mod(k[live], N))
        v = strat.velocity(t[live], nodes)
        speed = np.abs(v)
        rate = N * speed.sum(axis=1)
        clock = rate if strat.stationary else np.full(live.size, strat.max_rate)
        with np.errstate(divide="ignore"):
            dt = np.where(clock > 0, -np.log1p(-u[:, 0]) / clock, np.inf)
        t0 = t[live]
        t1 = t0 + dt
        for j, tau in enumerate(times):
            hit = (t0 <= tau) & (tau < t1)
            if hit.any():
                rows = live[hit]
                obs_chain[rows, j] = k[rows] * h
                obs_comp[rows, j] = y[rows] + v[hit] * (tau - t0[hit])[:, None]
        stop = np.minimum(t1, horizon)
        if cost is not None:
            running = problem.lagrangian(lat.coords(nodes), v)
            cost[live] += running * (np.exp(-lam * t0) - np.exp(-lam * stop)) / lam
        y[live] += v * (stop - t0)[:, None]
        t[live] = t1
        going = t1 <= horizon
        if strat.stationary:
            fire = going
        else:
            fire = going & (u[:, 2] * strat.max_rate < rate)
        # axis i with probability |v_i| / sum_j |v_j|
        cum = np.cumsum(speed, axis=1)
        pick = u[:, 1] * np.where(rate > 0, cum[:, -1], 1.0)
        axis = np.minimum((cum <= pick[:, None]).sum(axis=1), d - 1)
        rows = live[fire]
        ax = axis[fire]
        k[rows, ax] += np.sign(v[fire, ax]).astype(np.int64)
        jumps[rows] += 1
        if record:
            for r in rows:
                events[r][0].append(float(t[r]))
                events[r][1].append(k[r].copy())
        live = live[going]
    return _Run(times, obs_chain, obs_comp, jumps, cost, events)


def _point(problem: LatticeProblem, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (problem.d,):
        raise ValueError(f"torus point must have shape ({problem.d},)")
    return canonicalize(x)


def _start_index(problem: LatticeProblem, x0) -> np.ndarray:
    lat = problem.lattice
    x0 = np.asarray(x0)
    if x0.ndim == 0:
        return lat.unflat(int(x0))
    idx = x0.astype(np.int64)
    if idx.shape != (lat.d,) or np.any(idx < 0) or np.any(idx >= lat.N):
        raise ValueError("start node must be a flat index or a multi-index on the lattice")
    return idx


@dataclass
class ChainPath:
    """One path of the chain: jump times and lifted multi-indices (units of ``h``)."""

    jump_times: np.ndarray
    states: np.ndarray
    h: float

    @property
    def lifts(self) -> np.ndarray:
        return self.states * self.h

    @property
    def positions(self) -> np.ndarray:
        return canonicalize(self.lifts)

    def at(self, t: float) -> np.ndarray:
        """Lifted position at time ``t`` (right-continuous)."""
        i = np.searchsorted(self.jump_times, t, side="right") - 1
        return self.lifts[max(i, 0)]


@dataclass
class CoupledPath:
    chain: ChainPath
    companion_start: np.ndarray
    times: np.ndarray
    companion: np.ndarray


def simulate_chain(
    problem: LatticeProblem, strategy, x0, horizon: float, seed: int = 0, bound: float | None = None
) -> ChainPath:
    """One path of the chain driven by ``strategy`` on ``[0, horizon]``.

    ``strategy`` is a ``(n_nodes, d)`` policy, a single velocity used at
    every node, or a callable ``(t_array, flat_nodes) -> (m, d)`` bounded by
    ``bound``.  Time-dependent strategies are sampled by thinning at the
    dominating rate ``N sqrt(d) bound``.
    """
    strat = _Strategy(problem, strategy, bound)
    start = _start_index(problem, x0)
    run = _simulate(problem, strat, start, horizon, seed, 1, record=True)
    jt, states = run.events[0]
    return ChainPath(np.array(jt), np.array(states), problem.lattice.h)


def jump_counts(problem: LatticeProblem, strategy, x0, cfg: SimConfig, bound: float | None = None) -> np.ndarray:
    """Number of jumps on ``[0, cfg.horizon]`` for each of ``cfg.samples`` replicas."""
    strat = _Strategy(problem, strategy, bound)
    run = _simulate(problem, strat, _start_index(problem, x0), cfg.horizon, cfg.seed, cfg.samples)
    return run.jumps


def simulate_coupled(
    problem: LatticeProblem, strategy, x1, x2, times, cfg: SimConfig, bound: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Lifted positions of the companion and the chain at ``times``.

    The companion starts at the lift of ``x1`` nearest to the chain's start
    node ``x2`` and moves with the chain's velocity, so its path is piecewise
    linear between events.  Returns two ``(samples, len(times), d)`` arrays.
    """
    strat = _Strategy(problem, strategy, bound)
    start = _start_index(problem, x2)
    y0 = nearest_lift(start * problem.lattice.h, _point(problem, x1))
    horizon = max(float(np.max(times, initial=0.0)), 0.0)
    run = _simulate(problem, strat, start, horizon, cfg.seed, cfg.samples, times, companion0=y0)
    return run.companion, run.chain


@dataclass
class CouplingReport:
    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    bound: np.ndarray
    passed: np.ndarray
    bound_squared: np.ndarray = field(default=None)
    passed_squared: np.ndarray = field(default=None)
    initial_distance: float = 0.0
    speed_bound: float = 0.0
    samples: int = 0
    seed: int = 0

    @property
    def all_passed(self) -> bool:
        return bool(np.all(self.passed))

    def to_dict(self) -> dict:
        return {
            "times": self.times.tolist(),
            "mean": self.mean.tolist(),
            "stderr": self.stderr.tolist(),
            "bound": self.bound.tolist(),
            "pass": self.passed.tolist(),
            "bound_squared_initial": self.bound_squared.tolist(),
            "pass_squared_initial": self.passed_squared.tolist(),
            "initial_distance": self.initial_distance,
            "speed_bound": self.speed_bound,
            "samples": self.samples,
            "seed": self.seed,
        }

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "mean", "stderr", "bound", "pass"])
            for row in zip(self.times, self.mean, self.stderr, self.bound, self.passed):
                writer.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(row[2])), repr(float(row[3])), bool(row[4])])


def estimate_coupling_gap(
    problem: LatticeProblem, strategy, x1, x2, times, cfg: SimConfig, bound: float | None = None
) -> CouplingReport:
    """Mean squared gap ``E|Y_t - X_t|^2`` between companion and chain.

    Compared with ``|x1 - x2| + sqrt(d) c h t`` where ``c`` bounds the
    strategy speed; ``pass`` means ``mean <= bound + 3 stderr``.  The
    variant with the initial distance squared is reported alongside.
    """
    times = np.asarray(times, dtype=float)
    strat = _Strategy(problem, strategy, bound)
    y, x = simulate_coupled(problem, strategy, x1, x2, times, cfg, bound)
    gap = np.sum((y - x) ** 2, axis=-1)
    mean = gap.mean(axis=0)
    stderr = gap.std(axis=0, ddof=1) / math.sqrt(cfg.samples) if cfg.samples > 1 else np.zeros_like(mean)
    lat = problem.lattice
    dist0 = float(wrap_distance(_point(problem, x1), lat.coords(lat.flat(_start_index(problem, x2)))))
    drift = math.sqrt(lat.d) * strat.bound * lat.h * times
    bnd = dist0 + drift
    bnd_sq = dist0**2 + drift
    return CouplingReport(
        times,
        mean,
        stderr,
        bnd,
        mean <= bnd + 3 * stderr,
        bnd_sq,
        mean <= bnd_sq + 3 * stderr,
        dist0,
        strat.bound,
        cfg.samples,
        cfg.seed,
    )


def discounted_horizon(problem: LatticeProblem, policy, lam: float, tail: float) -> tuple[float, float]:
    """Horizon ``T`` with ``exp(-lam T) sup_x |L(x, pi(x))| / lam <= tail``, and that bound."""
    sup = float(np.max(np.abs(problem.running_cost(policy))))
    if sup == 0.0:
        return 0.0, 0.0
    T = max(0.0, math.log(sup / (lam * tail)) / lam)
    return T, sup * math.exp(-lam * T) / lam


def estimate_discounted_cost(
    problem: LatticeProblem, policy, z, lam: float, cfg: SimConfig | None = None, tail: float = 1e-4
) -> tuple[float, float, float]:
    """Monte Carlo value of ``E int_0^T exp(-lam t) L(X_t, pi(X_t)) dt`` from node ``z``.

    The running cost is constant between jumps, so each holding interval
    contributes ``L (exp(-lam a) - exp(-lam b)) / lam`` exactly.  ``T`` is
    chosen so the neglected tail is at most ``tail``.

    Returns
    -------
    estimate, stderr, tail_bound
    """
    cfg = cfg or SimConfig()
    if not lam > 0:
        raise ValueError("discount must be positive")
    strat = _Strategy(problem, policy, None)
    T, tail_bound = discounted_horizon(problem, strat.policy, lam, tail)
    run = _simulate(problem, strat, _start_index(problem, z), T, cfg.seed, cfg.samples, lam=lam)
    est = float(run.cost.mean())
    se = float(run.cost.std(ddof=1) / math.sqrt(cfg.samples)) if cfg.samples > 1 else 0.0
    return est, se, tail_bound
