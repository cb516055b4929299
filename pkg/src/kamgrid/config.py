"""TOML run configuration.

Example::

    [problem]
    dimension = 1
    N = 32                      # or a list for sweeps

    [lagrangian]
    exponents = [2.0]
    weights = [1.0]

    [[lagrangian.potential.modes]]
    k = [1]
    amplitude = 1.0
    phase = 0.7

    [solver]
    lam = 0.5
    tolerance = 1e-10

Validation errors are raised as :class:`ConfigurationError` carrying the
offending field and, where it can be located, its line in the file.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from .coupling import SimConfig
from .discounted import METHODS, SolverConfig
from .exceptions import ConfigurationError
from .lagrangian import Lagrangian, TabulatedPotential, TrigPotential
from .weak_kam import ContinuationSchedule

SECTIONS = {"problem", "lagrangian", "solver", "schedule", "mather", "simulate", "converge", "seeds", "output"}


def _locate(text: str, table: str, key: str) -> int | None:
    """Line number (1-based) of ``key = ...`` inside ``[table]``, if found."""
    current = ""
    header = re.compile(r"^\s*\[\[?\s*([A-Za-z0-9_.\-]+)\s*\]\]?")
    assign = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for n, line in enumerate(text.splitlines(), start=1):
        m = header.match(line)
        if m:
            current = m.group(1)
            continue
        if (current == table or current.startswith(table + ".")) and assign.match(line):
            return n
    return None


@dataclass
class RunConfig:
    """Validated configuration; ``raw`` keeps the parsed TOML for provenance."""

    d: int
    N: list[int]
    lagrangian: Lagrangian
    solver: SolverConfig
    lam: float | None
    schedule: ContinuationSchedule
    anchor: int = 0
    mather: dict = field(default_factory=dict)
    simulate: dict = field(default_factory=dict)
    converge: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    seed: int = 0
    raw: dict = field(default_factory=dict, repr=False)
    source: str | None = None

    @property
    def single_N(self) -> int:
        return self.N[0]

    def sim_config(self, **overrides) -> SimConfig:
        sim = self.simulate
        kw = dict(
            seed=self.seed,
            samples=int(sim.get("samples", 10_000)),
            horizon=float(max(sim.get("times", [1.0]) or [1.0])),
            lam=sim.get("lam"),
            times=sim.get("times"),
        )
        kw.update(overrides)
        return SimConfig(**kw)


class _Checker:
    def __init__(self, text: str):
        self.text = text

    def fail(self, table: str, key: str, message: str):
        raise ConfigurationError(message, field=f"{table}.{key}", line=_locate(self.text, table.split(".")[0], key))

    def number(self, table: str, data: dict, key: str, default=None, positive=False, integer=False, lo=None, hi=None):
        if key not in data:
            if default is None:
                return None
            return default
        value = data[key]
        kind = int if integer else (int, float)
        if isinstance(value, bool) or not isinstance(value, kind):
            self.fail(table, key, f"expected {'an integer' if integer else 'a number'}, got {value!r}")
        if not math.isfinite(value):
            self.fail(table, key, "must be finite")
        if positive and not value > 0:
            self.fail(table, key, "must be positive")
        if lo is not None and value < lo:
            self.fail(table, key, f"must be at least {lo}")
        if hi is not None and value > hi:
            self.fail(table, key, f"must be at most {hi}")
        return value

    def vector(self, table: str, data: dict, key: str, d: int, default: float):
        value = data.get(key, [default] * d)
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            value = [value] * d
        if not isinstance(value, list) or len(value) != d or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        ):
            self.fail(table, key, f"expected {d} numbers")
        return [float(v) for v in value]


def _potential(chk: _Checker, spec: dict, d: int, base: Path | None):
    if "table" in spec:
        path = Path(spec["table"])
        if base is not None and not path.is_absolute():
            path = base / path
        try:
            values = np.load(path) if path.suffix == ".npy" else np.loadtxt(path, delimiter=",", ndmin=1)
        except OSError as exc:
            chk.fail("lagrangian.potential", "table", f"cannot read table: {exc}")
        if d == 1:
            values = np.ravel(values)
        elif values.ndim == 2 and d > 2:
            side = round(values.size ** (1.0 / d))
            values = values.reshape((side,) * d)
        pot = TabulatedPotential(values)
        if pot.d != d:
            chk.fail("lagrangian.potential", "table", f"table has dimension {pot.d}, expected {d}")
        return pot
    modes = spec.get("modes", [])
    if not isinstance(modes, list):
        chk.fail("lagrangian.potential", "modes", "expected an array of tables")
    pot = TrigPotential.zero(d)
    for mode in modes:
        k = mode.get("k")
        if not isinstance(k, list) or len(k) != d or not all(isinstance(j, int) and not isinstance(j, bool) for j in k):
            chk.fail("lagrangian.potential", "k", f"mode wave vector must be {d} integers")
        if "a" in mode or "b" in mode:
            a = chk.number("lagrangian.potential", mode, "a", 0.0)
            b = chk.number("lagrangian.potential", mode, "b", 0.0)
            pot = pot + TrigPotential(((tuple(k), a, b),), d)
        else:
            amp = chk.number("lagrangian.potential", mode, "amplitude", 1.0)
            phase = chk.number("lagrangian.potential", mode, "phase", 0.0)
            pot = pot + TrigPotential.cosine(k, amp, phase)
    return pot


def parse_config(text: str, base: Path | None = None, source: str | None = None) -> RunConfig:
    """Parse and validate configuration text."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigurationError(f"malformed TOML: {exc}", line=int(m.group(1)) if m else None) from exc
    chk = _Checker(text)
    unknown = set(raw) - SECTIONS
    if unknown:
        name = sorted(unknown)[0]
        raise ConfigurationError(f"unknown section [{name}]", field=name, line=_locate_header(text, name))

    prob = raw.get("problem", {})
    d = chk.number("problem", prob, "dimension", 1, integer=True, lo=1, hi=6)
    Ns = prob.get("N", 16)
    Ns = Ns if isinstance(Ns, list) else [Ns]
    if not Ns or not all(isinstance(n, int) and not isinstance(n, bool) and n >= 2 for n in Ns):
        chk.fail("problem", "N", "lattice size must be an integer >= 2 (or a list of them)")
    anchor = chk.number("problem", prob, "anchor", 0, integer=True, lo=0)

    lag_spec = raw.get("lagrangian", {})
    exps = chk.vector("lagrangian", lag_spec, "exponents", d, 2.0)
    if any(not a > 1 for a in exps):
        chk.fail("lagrangian", "exponents", "kinetic exponents must exceed 1")
    wts = chk.vector("lagrangian", lag_spec, "weights", d, 1.0)
    if any(not w > 0 for w in wts):
        chk.fail("lagrangian", "weights", "kinetic weights must be positive")
    pot = _potential(chk, lag_spec.get("potential", {}), d, base)
    lagrangian = Lagrangian(potential=pot, exponents=tuple(exps), weights=tuple(wts))

    sol = raw.get("solver", {})
    method = sol.get("method", "policy_iteration")
    if method not in METHODS:
        chk.fail("solver", "method", f"method must be one of {METHODS}")
    inner = sol.get("inner", "direct")
    if inner not in ("direct", "gauss_seidel"):
        chk.fail("solver", "inner", "inner solver must be 'direct' or 'gauss_seidel'")
    solver = SolverConfig(
        tolerance=chk.number("solver", sol, "tolerance", 1e-10, positive=True),
        max_policy_iter=chk.number("solver", sol, "max_policy_iter", 200, integer=True, lo=1),
        max_inner_iter=chk.number("solver", sol, "max_inner_iter", 200_000, integer=True, lo=1),
        method=method,
        inner=inner,
    )
    lam = chk.number("solver", sol, "lam", None, positive=True)

    sch = raw.get("schedule", {})
    lam0 = chk.number("schedule", sch, "lam0", 1.0, positive=True)
    ratio = chk.number("schedule", sch, "ratio", 0.5, positive=True)
    if not ratio < 1:
        chk.fail("schedule", "ratio", "ratio must lie in (0, 1)")
    min_lam = chk.number("schedule", sch, "min_lam", 1e-14, positive=True)
    if min_lam > lam0:
        chk.fail("schedule", "min_lam", "min_lam must not exceed lam0")
    schedule = ContinuationSchedule(lam0, ratio, min_lam, chk.number("schedule", sch, "tolerance", None, positive=True))

    sim = dict(raw.get("simulate", {}))
    if "samples" in sim:
        chk.number("simulate", sim, "samples", integer=True, lo=1)
    if "times" in sim:
        times = sim["times"]
        if not isinstance(times, list) or not times or not all(
            isinstance(t, (int, float)) and not isinstance(t, bool) and t >= 0 for t in times
        ):
            chk.fail("simulate", "times", "times must be a nonempty list of nonnegative numbers")
    if "lam" in sim:
        chk.number("simulate", sim, "lam", positive=True)
    kind = sim.get("kind", "coupling")
    if kind not in ("coupling", "cost", "path"):
        chk.fail("simulate", "kind", "kind must be 'coupling', 'cost' or 'path'")
    policy = sim.get("policy", "optimal")
    if policy not in ("optimal", "constant"):
        chk.fail("simulate", "policy", "policy must be 'optimal' or 'constant'")

    conv = dict(raw.get("converge", {}))
    sweep = conv.get("sweep", "N")
    if sweep not in ("N", "lambda", "discounted_N"):
        chk.fail("converge", "sweep", "sweep must be 'N', 'lambda' or 'discounted_N'")
    mat = dict(raw.get("mather", {}))
    if "velocity_step" in mat:
        chk.number("mather", mat, "velocity_step", positive=True)
    if "velocity_max" in mat:
        chk.number("mather", mat, "velocity_max", positive=True)

    seeds = raw.get("seeds", {})
    seed = chk.number("seeds", seeds, "master", 0, integer=True, lo=0)

    return RunConfig(
        d=d,
        N=list(Ns),
        lagrangian=lagrangian,
        solver=solver,
        lam=lam,
        schedule=schedule,
        anchor=anchor,
        mather=mat,
        simulate=sim,
        converge=conv,
        output=dict(raw.get("output", {})),
        seed=seed,
        raw=raw,
        source=source,
    )


def _locate_header(text: str, name: str) -> int | None:
    for n, line in enumerate(text.splitlines(), start=1):
        if re.match(rf"^\s*\[\[?\s*{re.escape(name)}[\].]", line):
            return n
    return None


def load_config(path) -> RunConfig:
    """Read and validate a TOML configuration file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read configuration: {exc}") from exc
    return parse_config(text, base=path.parent, source=str(path))
