from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kamgrid import ConfigurationError
from kamgrid.lagrangian import (
    Lagrangian,
    TabulatedPotential,
    TrigPotential,
    diagnostic_constants,
    golden_max,
    mechanical,
    superlinear_floor,
)

from conftest import brute_lattice_hamiltonian


def test_trig_potential_values_and_gradient():
    pot = TrigPotential.cosine([1], 2.0, 0.7)
    x = np.array([[0.0], [0.3]])
    np.testing.assert_allclose(pot(x), 2.0 * np.cos(2 * np.pi * x[:, 0] + 0.7))
    np.testing.assert_allclose(pot.gradient(x)[:, 0], -4 * np.pi * np.sin(2 * np.pi * x[:, 0] + 0.7))
    assert TrigPotential.zero(2)(np.zeros((3, 2))).tolist() == [0.0, 0.0, 0.0]
    with pytest.raises(ConfigurationError):
        TrigPotential((((1, 0), 1.0, 0.0),), 1)


def test_tabulated_potential_interpolates_periodically():
    M = 64
    grid = np.arange(M) / M
    tab = TabulatedPotential(np.cos(2 * np.pi * grid))
    x = np.array([[0.0], [0.5], [1.0 - 1 / (2 * M)]])
    np.testing.assert_allclose(tab(x), np.cos(2 * np.pi * x[:, 0]), atol=2e-3)
    assert tab(np.array([[1.25]]))[0] == pytest.approx(tab(np.array([[0.25]]))[0])
    assert tab.gradient(np.array([[0.25]]))[0, 0] == pytest.approx(-2 * np.pi, rel=1e-2)
    with pytest.raises(ConfigurationError):
        TabulatedPotential(np.zeros((4, 5)))


@pytest.mark.parametrize("kw", [{"exponents": (1.0,)}, {"weights": (0.0,)}, {"exponents": (2.0, 2.0)}])
def test_lagrangian_validation(kw):
    with pytest.raises(ConfigurationError):
        Lagrangian(potential=TrigPotential.zero(1), **kw)


def test_golden_max_interior_and_boundary():
    arg, val = golden_max(lambda w: -(w - 0.3) ** 2, np.array([-1.0]), np.array([1.0]))
    assert arg[0] == pytest.approx(0.3, abs=1e-6)
    arg, val = golden_max(lambda w: w, np.array([0.0]), np.array([2.0]))
    assert arg[0] == 2.0 and val[0] == 2.0


@settings(max_examples=60, deadline=None)
@given(
    st.floats(1.2, 4.0),
    st.floats(0.3, 3.0),
    st.floats(-5, 5),
    st.floats(0, 1, exclude_max=True),
)
def test_closed_form_hamiltonian_matches_numeric(alpha, kappa, p, x):
    lag = Lagrangian(potential=TrigPotential.cosine([1]), exponents=(alpha,), weights=(kappa,))
    xs = np.array([[x]])
    ps = np.array([[p]])
    closed = lag.hamiltonian(xs, ps)
    numeric = lag.hamiltonian(xs, ps, numeric=True)
    assert closed[0] == pytest.approx(numeric[0], abs=1e-8 * (1 + abs(closed[0])))


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.sampled_from([0.0, 0.25, 0.5]))
def test_lattice_hamiltonian_matches_velocity_grid(fwd, bwd, x):
    lag = mechanical(TrigPotential.cosine([1]))
    xi = np.array([[fwd, bwd]])
    value, v = lag.lattice_hamiltonian(np.array([x]), xi)
    brute = brute_lattice_hamiltonian(lag, np.array([x]), xi)
    assert value == pytest.approx(brute, abs=1e-5)
    assert value >= brute - 1e-12
    # the returned maximiser attains the value
    attained = np.where(v > 0, fwd * v, bwd * -v)[0] - lag(np.array([x]), v)
    assert attained == pytest.approx(value, abs=1e-12)


def test_lattice_hamiltonian_tie_rules():
    lag = mechanical(TrigPotential.zero(1))
    # equal gains in both directions: positive wins
    _, v = lag.lattice_hamiltonian(np.zeros(1), np.array([[1.0, 1.0]]))
    assert v[0] == 1.0
    # no gain anywhere: standing still
    _, v = lag.lattice_hamiltonian(np.zeros(1), np.array([[-1.0, -2.0]]))
    assert v[0] == 0.0


def test_truncated_lattice_hamiltonian():
    lag = mechanical(TrigPotential.zero(1))
    value, v = lag.lattice_hamiltonian(np.zeros(1), np.array([[4.0, 0.0]]), bound=1.0)
    assert v[0] == 1.0
    assert value == pytest.approx(4.0 - 0.5)


def test_hook_lagrangian_matches_closed_form():
    closed = Lagrangian(potential=TrigPotential.cosine([1, 1]), exponents=(2.0, 1.5), weights=(1.0, 2.0))

    def hook(x, v):
        return closed(x, v)

    black = Lagrangian(potential=TrigPotential.cosine([1, 1]), hook=hook, velocity_box=(0.5, 0.5))
    rng = np.random.default_rng(3)
    x = rng.random((20, 2))
    xi = rng.normal(scale=2.0, size=(20, 2, 2))
    a, va = closed.lattice_hamiltonian(x, xi)
    b, vb = black.lattice_hamiltonian(x, xi)
    np.testing.assert_allclose(b, a, atol=1e-8)
    np.testing.assert_allclose(vb, va, atol=1e-4)


def test_hook_requires_box():
    lag = Lagrangian(potential=TrigPotential.zero(1), hook=lambda x, v: 0.5 * np.sum(v * v, axis=-1))
    with pytest.raises(ConfigurationError):
        lag.lattice_hamiltonian(np.zeros(1), np.zeros((1, 2)))


def test_constants_for_quadratic_cosine():
    c = diagnostic_constants(mechanical(TrigPotential.cosine([1])))
    assert c.c0 == pytest.approx(1.0)
    assert c.c3 == pytest.approx(2.5)
    assert c.c4 == pytest.approx(2.5)
    assert c.c5 == pytest.approx(8.125)
    assert c.K(c.c5) == pytest.approx(2 * np.pi, rel=1e-4)
    # g(a) = min P - a^2 / 2 for the quadratic kinetic
    assert c.g(3.0) == pytest.approx(-1.0 - 4.5)


@pytest.mark.parametrize("alpha,kappa", [(2.0, 1.0), (3.0, 0.5), (1.5, 1.0)])
def test_superlinear_floor_is_a_valid_lower_bound(alpha, kappa):
    d = 2
    lag = Lagrangian(potential=TrigPotential.cosine([1, 0]), exponents=(alpha,) * d, weights=(kappa,) * d)
    rng = np.random.default_rng(0)
    x = rng.random((4000, d))
    v = rng.normal(scale=3.0, size=(4000, d))
    for a in (0.0, 1.0, 4.0):
        g = superlinear_floor(lag, a)
        assert np.all(lag(x, v) - a * np.linalg.norm(v, axis=1) >= g - 1e-9)


def test_superlinear_floor_exact_on_diagonal_case():
    lag = mechanical(TrigPotential.zero(2))
    a = 2.0
    # inf_v |v|^2/2 - a|v| = -a^2/2
    assert superlinear_floor(lag, a) == pytest.approx(-a * a / 2)


def test_constants_serialise():
    out = diagnostic_constants(mechanical(TrigPotential.cosine([1]))).to_dict()
    assert set(out) >= {"c0", "c3", "c5", "g0", "K_c5"}
    assert all(isinstance(v, (int, float)) for v in out.values())
    assert math.isfinite(out["c6"])
