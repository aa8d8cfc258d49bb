import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kineticfv.velocity import (
    MacroState,
    VelocityGridError,
    build_grid,
    conserved_moments,
    discrete_maxwellian,
    macro_state,
    max_speed,
    maxwellian,
    moments,
    support_fits,
)


def direct_moments(f, grid):
    """Loop-by-loop summation oracle."""
    w = grid.dv ** 2
    rho = mx = my = 0.0
    for k, (vx, vy) in enumerate(grid.nodes):
        rho += w * f[k]
        mx += w * vx * f[k]
        my += w * vy * f[k]
    ux, uy = mx / rho, my / rho
    e = 0.0
    for k, (vx, vy) in enumerate(grid.nodes):
        e += w * ((vx - ux) ** 2 + (vy - uy) ** 2) * f[k]
    return np.array([rho, ux, uy, e / (2.0 * rho)])


def direct_maxwellian(state, grid):
    rho, ux, uy, th = state
    return np.array([rho / (2 * math.pi * th) * math.exp(-((vx - ux) ** 2 + (vy - uy) ** 2) / (2 * th))
                     for vx, vy in grid.nodes])


def test_lax_grid_spacing():
    g = build_grid(-15, 15, 32)
    assert g.dv == 0.9375
    assert g.size == 1024


def test_small_grid_nodes():
    g = build_grid(-1, 1, 4)
    assert np.allclose(g.axis, [-0.75, -0.25, 0.25, 0.75])
    assert max_speed(g) == pytest.approx(math.hypot(0.75, 0.75), rel=1e-15)


def test_node_ordering_and_symmetry():
    g = build_grid(-3, 3, 6)
    k = 2 * 6 + 5
    assert g.vx[k] == g.axis[2] and g.vy[k] == g.axis[5]
    nodes = {tuple(v) for v in g.nodes}
    assert all((-a, -b) in nodes for a, b in nodes)


def test_max_speed_lax_grid():
    g = build_grid(-15, 15, 32)
    assert max_speed(g) == pytest.approx(math.hypot(14.53125, 14.53125), rel=1e-15)
    assert max_speed(g) >= np.abs(g.axis).max()


@pytest.mark.parametrize("args", [(1, -1, 8), (0, 0, 8), (-1, 1, 5), (-1, 1, 2)])
def test_grid_validation(args):
    with pytest.raises(VelocityGridError):
        build_grid(*args)


def test_vacuum_moments():
    g = build_grid(-1, 1, 4)
    assert np.array_equal(moments(np.zeros(g.size), g), np.zeros(4))
    assert macro_state(np.zeros(g.size), g) == MacroState(0.0, 0.0, 0.0, 0.0)


def test_unit_maxwellian_roundtrip():
    g = build_grid(-10, 10, 32)
    f = maxwellian(np.array([1.0, 0.0, 0.0, 1.0]), g)
    assert np.allclose(moments(f, g), [1, 0, 0, 1], atol=1e-8)
    assert np.allclose(direct_moments(f, g), [1, 0, 0, 1], atol=1e-8)


def test_lax_left_state_recovery():
    """Temperature 7.928 on [-15, 15]^2 with 32^2 nodes: recovery limited by the grid spacing."""
    g = build_grid(-15, 15, 32)
    state = np.array([0.445, 0.698, 0.0, 7.928])
    f = maxwellian(state, g)
    assert np.allclose(f, direct_maxwellian(state, g), rtol=1e-13, atol=0)
    got = moments(f, g)
    oracle = direct_moments(f, g)
    assert np.allclose(got, oracle, rtol=1e-12, atol=1e-15)
    err = got - state
    # frozen values from the direct-summation oracle
    assert err[0] == pytest.approx(-1.2e-7, rel=0.05)
    assert err[1] == pytest.approx(-2.3e-6, rel=0.05)
    assert err[3] / state[3] == pytest.approx(-3.8e-6, rel=0.05)
    assert abs(err[0]) <= 1e-6


def test_maxwellian_pointwise_values():
    g = build_grid(-2, 2, 4)            # nodes at +-0.5, +-1.5
    f = discrete_maxwellian(MacroState(2.0, 0.5, -0.5, 0.7), g)
    k = 2 * 4 + 1                       # v = (0.5, -0.5) = u
    assert f[k] == pytest.approx(2.0 / (2 * math.pi * 0.7), rel=1e-15)
    val = maxwellian(np.array([1.0, 0.0, 0.0, 1.0]), g)
    k = 2 * 4 + 2                       # v = (0.5, 0.5), |v| = 1/sqrt(2)
    assert val[k] == pytest.approx(math.exp(-0.25) / (2 * math.pi), rel=1e-15)


def test_singular_maxwellian():
    g = build_grid(-1, 1, 4)
    with pytest.raises(VelocityGridError):
        maxwellian(np.array([1.0, 0.0, 0.0, 0.0]), g)
    assert np.array_equal(maxwellian(np.array([0.0, 0.0, 0.0, 0.0]), g), np.zeros(16))


def test_moment_error_decays_with_bounds():
    th = 1.3
    errs = []
    for mult in (6, 10):
        half = mult * math.sqrt(th)
        g = build_grid(-half, half, 32)
        f = maxwellian(np.array([1.0, 0.0, 0.0, th]), g)
        errs.append(np.max(np.abs(moments(f, g) - [1, 0, 0, th])))
    assert errs[1] <= errs[0] / 10 or errs[1] < 1e-14


@given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 1000))
def test_moments_linear_in_f(a, b, seed):
    g = build_grid(-4, 4, 8)
    rng = np.random.default_rng(seed)
    f1, f2 = rng.uniform(0, 1, (2, g.size))
    lhs = conserved_moments(a * f1 + b * f2, g)
    rhs = a * conserved_moments(f1, g) + b * conserved_moments(f2, g)
    assert np.allclose(lhs, rhs, atol=1e-12)


@given(shift=st.integers(-3, 3), seed=st.integers(0, 1000))
def test_galilean_shift(shift, seed):
    g = build_grid(-8, 8, 16)
    rng = np.random.default_rng(seed)
    block = np.zeros((16, 16))
    block[5:11, 5:11] = rng.uniform(0.1, 1, (6, 6))
    shifted = np.roll(block, shift, axis=0)
    m0 = moments(block.ravel(), g)
    m1 = moments(shifted.ravel(), g)
    assert m1[1] == pytest.approx(m0[1] + shift * g.dv, abs=1e-12)
    assert m1[0] == pytest.approx(m0[0], rel=1e-14)
    assert m1[3] == pytest.approx(m0[3], rel=1e-12)


@given(seed=st.integers(0, 10_000))
def test_temperature_nonnegative(seed):
    g = build_grid(-4, 4, 8)
    f = np.random.default_rng(seed).uniform(0, 1, (5, g.size)) ** 4
    assert np.all(moments(f, g)[:, 3] >= 0)


def test_support_rule():
    g = build_grid(-15, 15, 32)
    assert support_fits(0.698, 7.928, g)
    assert not support_fits(3.0, 7.928, g)
