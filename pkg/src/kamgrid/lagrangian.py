"""Lagrangians on the torus, their Hamiltonians and a-priori constants.

The closed-form family is

    L(x, v) = sum_i kappa_i |v_i|^alpha_i / alpha_i + P(x),   alpha_i > 1, kappa_i > 0,

which is continuous with continuous x-derivative, convex and superlinear
in ``v``.  A black-box Lagrangian can be supplied instead through
``hook``; it must be convex in ``v`` and comes with a velocity search box.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError
from .lattice import canonicalize, pair_dot

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


# --------------------------------------------------------------------------- potentials


@dataclass(frozen=True)
class TrigPotential:
    """``P(x) = sum_k a_k cos(2 pi k.x) + b_k sin(2 pi k.x)``."""

    modes: tuple[tuple[tuple[int, ...], float, float], ...] = ()
    d: int = 1

    def __post_init__(self):
        modes = tuple((tuple(int(j) for j in k), float(a), float(b)) for k, a, b in self.modes)
        for k, _, _ in modes:
            if len(k) != self.d:
                raise ConfigurationError(f"mode {k} does not have arity d={self.d}")
        object.__setattr__(self, "modes", modes)

    @classmethod
    def zero(cls, d: int = 1) -> TrigPotential:
        return cls((), d)

    @classmethod
    def cosine(cls, k: Sequence[int], amplitude: float = 1.0, phase: float = 0.0) -> TrigPotential:
        """Single mode ``amplitude * cos(2 pi k.x + phase)``."""
        k = tuple(int(j) for j in k)
        a = amplitude * math.cos(phase)
        b = -amplitude * math.sin(phase)
        return cls(((k, a, b),), len(k))

    def __add__(self, other: TrigPotential) -> TrigPotential:
        if not isinstance(other, TrigPotential) or other.d != self.d:
            return NotImplemented
        return TrigPotential(self.modes + other.modes, self.d)

    def _phase(self, x):
        x = np.asarray(x, dtype=float)
        ks = np.array([k for k, _, _ in self.modes], dtype=float).reshape(-1, self.d)
        return 2.0 * np.pi * (x @ ks.T)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.modes:
            return np.zeros(x.shape[:-1])
        theta = self._phase(x)
        a = np.array([m[1] for m in self.modes])
        b = np.array([m[2] for m in self.modes])
        return np.cos(theta) @ a + np.sin(theta) @ b

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.modes:
            return np.zeros(x.shape)
        theta = self._phase(x)
        ks = np.array([k for k, _, _ in self.modes], dtype=float)
        a = np.array([m[1] for m in self.modes])
        b = np.array([m[2] for m in self.modes])
        coef = -np.sin(theta) * a + np.cos(theta) * b
        return 2.0 * np.pi * coef @ ks

    def to_dict(self) -> dict:
        return {
            "kind": "trig_polynomial",
            "modes": [{"k": list(k), "a": a, "b": b} for k, a, b in self.modes],
        }


@dataclass(frozen=True)
class TabulatedPotential:
    """Values on a uniform ``M^d`` grid of the torus, periodic multilinear interpolation."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim < 1 or len(set(values.shape)) != 1 or values.shape[0] < 2:
            raise ConfigurationError("tabulated potential must be an M x ... x M array, M >= 2")
        if not np.all(np.isfinite(values)):
            raise ConfigurationError("tabulated potential has non-finite entries")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def d(self) -> int:
        return self.values.ndim

    @property
    def resolution(self) -> int:
        return self.values.shape[0]

    def __call__(self, x) -> np.ndarray:
        x = canonicalize(x)
        M = self.resolution
        s = x * M
        base = np.floor(s).astype(np.int64)
        frac = s - base
        out = np.zeros(x.shape[:-1])
        for corner in itertools.product((0, 1), repeat=self.d):
            c = np.array(corner)
            w = np.prod(np.where(c == 1, frac, 1.0 - frac), axis=-1)
            idx = tuple(np.moveaxis((base + c) % M, -1, 0))
            out = out + w * self.values[idx]
        return out

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        step = 1.0 / self.resolution
        cols = []
        for i in range(self.d):
            e = np.zeros(self.d)
            e[i] = step
            cols.append((self(x + e) - self(x - e)) / (2.0 * step))
        return np.stack(cols, axis=-1)

    def to_dict(self) -> dict:
        return {"kind": "tabulated", "resolution": self.resolution}


Potential = TrigPotential | TabulatedPotential


# --------------------------------------------------------------------------- golden section


def golden_max(f: Callable[[np.ndarray], np.ndarray], lo, hi, tol: float = 1e-12, max_iter: int = 200):
    """Vectorised golden-section maximisation of concave ``f`` on ``[lo, hi]``.

    ``lo`` and ``hi`` are arrays; ``f`` maps an array of candidates of the
    same shape to values.  Returns ``(argmax, max)``.  Both endpoints are
    compared with the final bracket so boundary maxima come out exact.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    a, b = lo.copy(), hi.copy()
    c = b - _GOLDEN * (b - a)
    e = a + _GOLDEN * (b - a)
    fc, fe = f(c), f(e)
    for _ in range(max_iter):
        if np.all(b - a <= tol * (1.0 + np.abs(a) + np.abs(b))):
            break
        left = fc >= fe
        a = np.where(left, a, c)
        b = np.where(left, e, b)
        new = np.where(left, b - _GOLDEN * (b - a), a + _GOLDEN * (b - a))
        fnew = f(new)
        c, e, fc, fe = (
            np.where(left, new, e),
            np.where(left, c, new),
            np.where(left, fnew, fe),
            np.where(left, fc, fnew),
        )
    mid = 0.5 * (a + b)
    cands = np.stack([mid, lo, hi])
    vals = np.stack([f(mid), f(lo), f(hi)])
    best = np.argmax(vals, axis=0)[None]
    return np.take_along_axis(cands, best, 0)[0], np.take_along_axis(vals, best, 0)[0]


# --------------------------------------------------------------------------- Lagrangian


@dataclass(frozen=True)
class Lagrangian:
    """Lagrangian specification: power-law kinetic part plus a potential.

    Parameters
    ----------
    potential : TrigPotential or TabulatedPotential
    exponents : per-axis kinetic exponents, all > 1 (default 2).
    weights : per-axis kinetic weights, all > 0 (default 1).
    hook : optional callable ``hook(x, v)`` evaluating a convex-in-``v``
        Lagrangian on broadcast arrays ``x (..., d)``, ``v (..., d)``.  When
        given it replaces the closed form entirely.
    velocity_box : per-axis half-widths of the velocity search box, required
        with ``hook``.
    """

    potential: Potential = field(default_factory=TrigPotential.zero)
    exponents: tuple[float, ...] | None = None
    weights: tuple[float, ...] | None = None
    hook: Callable | None = field(default=None, compare=False)
    velocity_box: tuple[float, ...] | None = None

    def __post_init__(self):
        d = self.potential.d
        alpha = (2.0,) * d if self.exponents is None else tuple(float(a) for a in self.exponents)
        kappa = (1.0,) * d if self.weights is None else tuple(float(k) for k in self.weights)
        if len(alpha) != d or len(kappa) != d:
            raise ConfigurationError(f"kinetic parameters must have arity d={d}", field="kinetic")
        if any(not a > 1.0 for a in alpha):
            raise ConfigurationError("kinetic exponents must exceed 1", field="exponents")
        if any(not k > 0.0 for k in kappa):
            raise ConfigurationError("kinetic weights must be positive", field="weights")
        object.__setattr__(self, "exponents", alpha)
        object.__setattr__(self, "weights", kappa)
        if self.velocity_box is not None:
            box = tuple(float(b) for b in np.broadcast_to(self.velocity_box, (d,)))
            if any(not b > 0 for b in box):
                raise ConfigurationError("velocity box half-widths must be positive", field="velocity_box")
            object.__setattr__(self, "velocity_box", box)

    @property
    def d(self) -> int:
        return self.potential.d

    @property
    def separable(self) -> bool:
        return self.hook is None

    @property
    def is_quadratic(self) -> bool:
        return self.separable and all(a == 2.0 for a in self.exponents) and all(
            k == 1.0 for k in self.weights
        )

    @property
    def _alpha(self) -> np.ndarray:
        return np.asarray(self.exponents)

    @property
    def _kappa(self) -> np.ndarray:
        return np.asarray(self.weights)

    @property
    def _beta(self) -> np.ndarray:
        return self._alpha / (self._alpha - 1.0)

    def kinetic(self, v) -> np.ndarray:
        v = np.abs(np.asarray(v, dtype=float))
        return np.sum(self._kappa * v**self._alpha / self._alpha, axis=-1)

    def __call__(self, x, v) -> np.ndarray:
        """Evaluate ``L(x, v)`` on broadcast arrays."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.hook is not None:
            return np.asarray(self.hook(x, v), dtype=float)
        return self.kinetic(v) + self.potential(x)

    def grad_x(self, x, v) -> np.ndarray:
        """``L_x(x, v)``; for the separable family this is the potential gradient."""
        x = np.asarray(x, dtype=float)
        if self.hook is None:
            return self.potential.gradient(x)
        v = np.asarray(v, dtype=float)
        step = 1e-6
        cols = []
        for i in range(self.d):
            e = np.zeros(self.d)
            e[i] = step
            cols.append((self(x + e, v) - self(x - e, v)) / (2 * step))
        return np.stack(cols, axis=-1)

    # ----------------------------------------------------------------- Hamiltonians

    def hamiltonian(self, x, p, numeric: bool = False) -> np.ndarray:
        """Continuous Hamiltonian ``H(x, p) = max_v [p.v - L(x, v)]``.

        Closed form for the separable family unless ``numeric`` is set, in
        which case the concave objective is maximised by golden-section
        coordinate ascent inside a box derived from superlinearity.
        """
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        x, p = np.broadcast_arrays(x, p)
        if self.separable and not numeric:
            conj = self._kappa ** (-1.0 / (self._alpha - 1.0)) * np.abs(p) ** self._beta / self._beta
            return np.sum(conj, axis=-1) - self.potential(x)
        if self.separable:
            # maximiser satisfies kappa |v|^(alpha-1) = |p|
            box = 2.0 * (np.abs(p) / self._kappa) ** (1.0 / (self._alpha - 1.0)) + 1.0
        else:
            box = np.broadcast_to(self._box(), p.shape)
        v = np.zeros_like(p)

        def objective(vv):
            return np.sum(p * vv, axis=-1) - self(x, vv)

        prev = objective(v)
        for _ in range(50):
            for i in range(self.d):
                def along(w, i=i):
                    trial = v.copy()
                    trial[..., i] = w
                    return objective(trial)

                w, _ = golden_max(along, -box[..., i], box[..., i])
                v[..., i] = w
            cur = objective(v)
            if np.all(np.abs(cur - prev) <= 1e-15 * (1.0 + np.abs(cur))):
                break
            prev = cur
        return objective(v)

    def _box(self) -> np.ndarray:
        if self.velocity_box is None:
            raise ConfigurationError(
                "a generic Lagrangian hook needs a declared velocity box", field="velocity_box"
            )
        return np.asarray(self.velocity_box, dtype=float)

    def lattice_hamiltonian(self, x, xi, bound: float | None = None):
        """Lattice Hamiltonian ``sup_v [xi . v - L(x, v)]`` and its maximiser.

        Parameters
        ----------
        x : (..., d) node coordinates.
        xi : (..., d, 2) difference pairs.
        bound : optional per-axis velocity bound ``|v_i| <= bound`` (the
            truncated problem used by value iteration).

        Returns
        -------
        value : (...,) array
        argmax : (..., d) array.  Ties are broken towards smaller ``|v|``
            first, then towards the positive direction.
        """
        xi = np.asarray(xi, dtype=float)
        x = np.asarray(x, dtype=float)
        if xi.shape[-2:] != (self.d, 2):
            raise ValueError(f"xi must have trailing shape ({self.d}, 2), got {xi.shape}")
        if self.hook is not None:
            return self._hook_lattice_hamiltonian(x, xi, bound)
        alpha, kappa, beta = self._alpha, self._kappa, self._beta
        s = np.maximum(xi, 0.0)
        w = (s / kappa[:, None]) ** (1.0 / (alpha[:, None] - 1.0))
        if bound is not None:
            w = np.minimum(w, bound)
            gain = s * w - kappa[:, None] * w ** alpha[:, None] / alpha[:, None]
        else:
            gain = kappa[:, None] ** (-1.0 / (alpha[:, None] - 1.0)) * s ** beta[:, None] / beta[:, None]
        up, down = gain[..., 0], gain[..., 1]
        positive = up >= down
        speed = np.where(positive, w[..., 0], w[..., 1])
        velocity = np.where(positive, speed, -speed)
        value = np.sum(np.maximum(up, down), axis=-1) - self.potential(x)
        return value, velocity

    def _hook_lattice_hamiltonian(self, x, xi, bound):
        box = self._box() if bound is None else np.minimum(self._box(), bound)
        shape = np.broadcast_shapes(x.shape[:-1], xi.shape[:-2])
        x = np.broadcast_to(x, shape + (self.d,))
        xi = np.broadcast_to(xi, shape + (self.d, 2))
        box = np.broadcast_to(box, shape + (self.d,)).copy()

        def objective(vv):
            return pair_dot(xi, vv) - self(x, vv)

        for _ in range(8):
            v = np.zeros(shape + (self.d,))
            prev = objective(v)
            for _sweep in range(100):
                for i in range(self.d):
                    def along(w, i=i):
                        trial = v.copy()
                        trial[..., i] = w
                        return objective(trial)

                    # xi . v is concave on each half-line, so split at zero
                    wp, fp = golden_max(along, np.zeros(shape), box[..., i])
                    wm, fm = golden_max(along, -box[..., i], np.zeros(shape))
                    v[..., i] = np.where(fp >= fm, wp, wm)
                cur = objective(v)
                if np.all(np.abs(cur - prev) <= 1e-14 * (1.0 + np.abs(cur))):
                    break
                prev = cur
            at_edge = np.abs(v) >= box * (1.0 - 1e-9)
            if bound is not None or not at_edge.any():
                break
            # superlinear growth keeps the maximiser bounded: widen and retry
            box = np.where(at_edge, 2.0 * box, box)
        return objective(v), v

    def to_dict(self) -> dict:
        out = {
            "dimension": self.d,
            "exponents": list(self.exponents),
            "weights": list(self.weights),
            "potential": self.potential.to_dict(),
        }
        if self.hook is not None:
            out["hook"] = getattr(self.hook, "__name__", repr(self.hook))
            out["velocity_box"] = list(self.velocity_box or ())
        return out


def mechanical(potential: Potential | None = None, d: int | None = None) -> Lagrangian:
    """Quadratic kinetic energy ``|v|^2 / 2`` plus ``potential``."""
    if potential is None:
        potential = TrigPotential.zero(d or 1)
    return Lagrangian(potential=potential)


# --------------------------------------------------------------------------- constants


def torus_samples(d: int, resolution: int) -> np.ndarray:
    """Uniform ``resolution^d`` sample of the torus, shape ``(resolution^d, d)``."""
    axis = np.arange(resolution) / resolution
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def sphere_samples(d: int, resolution: int = 720) -> np.ndarray:
    """Unit vectors covering the sphere ``S^{d-1}``."""
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        t = 2.0 * np.pi * np.arange(resolution) / resolution
        return np.stack([np.cos(t), np.sin(t)], axis=-1)
    pts = np.random.default_rng(0).standard_normal((resolution * 20, d))
    axes = np.concatenate([np.eye(d), -np.eye(d)])
    pts = np.concatenate([axes, pts])
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


@dataclass(frozen=True)
class DiagnosticConstants:
    """A-priori bounds of the lattice scheme.

    ``g(a)`` is a superlinearity floor, ``L(x, v) >= a |v| + g(a)``, and
    ``K(c) = sup_{x, |v| <= c} |L_x(x, v)|``.  Suprema over ``x`` come from
    a sampling grid (``resolution`` per axis) and so under-approximate.
    """

    c0: float
    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    c6: float
    g: Callable[[float], float] = field(repr=False, compare=False)
    K: Callable[[float], float] = field(repr=False, compare=False)
    resolution: int = 0

    def to_dict(self) -> dict:
        return {
            "c0": self.c0, "c1": self.c1, "c2": self.c2, "c3": self.c3,
            "c4": self.c4, "c5": self.c5, "c6": self.c6,
            "g0": self.g(0.0), "K_c5": self.K(self.c5),
            "sampling_resolution": self.resolution,
        }


def _default_resolution(d: int) -> int:
    return {1: 1024, 2: 256}.get(d, 48)


def superlinear_floor(lag: Lagrangian, a: float, p_min: float | None = None, resolution: int | None = None) -> float:
    """Largest certified ``g(a)`` with ``L(x, v) >= a |v| + g(a)``.

    For equal exponents ``alpha >= 2`` and equal weights the infimum of the
    kinetic part minus ``a|v|`` is attained on the diagonal, which gives the
    exact value ``-d sup_w [(a/sqrt d) w - kappa w^alpha / alpha]``.  In the
    other separable cases ``|v| <= sum |v_i|`` gives the certified bound
    ``-sum_i sup_w [a w - kappa_i w^alpha_i / alpha_i]``.
    """
    d = lag.d
    if p_min is None:
        p_min = float(np.min(lag.potential(torus_samples(d, resolution or _default_resolution(d))))) \
            if lag.separable else None
    a = float(a)
    if lag.separable:
        alpha, kappa, beta = lag._alpha, lag._kappa, lag._beta
        if np.all(alpha == alpha[0]) and np.all(kappa == kappa[0]) and alpha[0] >= 2.0:
            s = a / math.sqrt(d)
            conj = kappa[0] ** (-1.0 / (alpha[0] - 1.0)) * s ** beta[0] / beta[0]
            return p_min - d * conj
        conj = kappa ** (-1.0 / (alpha - 1.0)) * a**beta / beta
        return p_min - float(np.sum(conj))
    # black box: sampled infimum over the torus and the search box
    xs = torus_samples(d, resolution or min(_default_resolution(d), 64))
    box = lag._box()
    radii = np.linspace(0.0, float(np.max(box)) * 2.0, 81)
    dirs = sphere_samples(d, 180)
    vs = (radii[:, None, None] * dirs[None]).reshape(-1, d)
    vals = lag(xs[:, None, :], vs[None, :, :]) - a * np.linalg.norm(vs, axis=-1)[None]
    return float(np.min(vals))


def diagnostic_constants(lag: Lagrangian, resolution: int | None = None) -> DiagnosticConstants:
    """Compute ``c0 ... c6``, ``g`` and ``K`` for ``lag``."""
    d = lag.d
    resolution = resolution or _default_resolution(d)
    if resolution < 64 and d == 1:
        raise ConfigurationError("sampling resolution must be at least 64 per axis")
    xs = torus_samples(d, resolution)
    dirs = sphere_samples(d)

    if lag.separable:
        pot = lag.potential(xs)
        p_min, p_max = float(pot.min()), float(pot.max())
        sup_L0 = p_max
        sup_sphere = p_max + float(np.max(lag.kinetic(dirs)))
        # kinetic part is increasing in every |v_i|, so the unit ball's sup is on the sphere
        sup_ball = sup_sphere
        grad_sup = float(np.max(np.linalg.norm(lag.potential.gradient(xs), axis=-1)))

        def K(c: float) -> float:
            return grad_sup

        def g(a: float) -> float:
            return float(superlinear_floor(lag, a, p_min=p_min))
    else:
        xs_c = xs if len(xs) <= 4096 else torus_samples(d, 64)
        sup_L0 = float(np.max(lag(xs_c, np.zeros(d))))
        sup_sphere = float(np.max(lag(xs_c[:, None], dirs[None])))
        radii = np.linspace(0.0, 1.0, 11)
        ball = (radii[:, None, None] * dirs[None]).reshape(-1, d)
        sup_ball = float(np.max(lag(xs_c[:, None], ball[None])))

        def K(c: float) -> float:
            pts = (np.linspace(0, c, 6)[:, None, None] * dirs[None]).reshape(-1, d)
            return float(np.max(np.linalg.norm(lag.grad_x(xs_c[:, None], pts[None]), axis=-1)))

        def g(a: float) -> float:
            return superlinear_floor(lag, a, resolution=resolution)

    c0 = max(abs(g(0.0)), sup_L0)
    c1 = c0 + sup_sphere + 1.0
    c2 = c0 - g(2.0 * c1 + 2.0) / 2.0
    c3 = c0 + sup_ball
    c4 = math.sqrt(d) * c3
    c5 = c0 - g(math.sqrt(d) * c3 + 1.0)
    c6 = -g(c1 + 1.0) + c0
    vals = (float(c) for c in (c0, c1, c2, c3, c4, c5, c6))
    return DiagnosticConstants(*vals, g=g, K=K, resolution=resolution)
