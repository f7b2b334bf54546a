import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_state
from pointsources.blowup import (
    RelativeState,
    blowup_field,
    from_relative,
    integrate_blowup,
    relative_field,
    tau_collision,
    tau_regularize_two_body,
    to_relative,
)
from pointsources.integrate import IntegratorOptions, integrate_adaptive
from pointsources.model import (
    CoincidenceError,
    SystemState,
    UndefinedCenterError,
    linear_momentum,
    velocity_field,
)

TIGHT = IntegratorOptions(atol=1e-14, rtol=1e-13)


def test_to_relative_examples():
    rel = to_relative(SystemState(0.0, [0, 1], [1, 2j]))
    np.testing.assert_array_equal(rel.xi, [1])
    rel = to_relative(SystemState(0.0, [0, 1, 1j], [1, 1, 1]))
    np.testing.assert_array_equal(rel.xi, [1j, 1j - 1])
    assert rel.Z == 1 + 1j
    assert rel.others == (0, 1) and rel.base == 2


def test_pairwise_differences_recoverable():
    s = SystemState(0.0, [0.1, 1 - 0.3j, 1j, -0.5], [1, 2, 3, 4])
    rel = to_relative(s)
    z = s.positions
    for i, a in enumerate(rel.others):
        for j, b in enumerate(rel.others):
            assert z[b] - z[a] == pytest.approx(rel.xi[i] - rel.xi[j], abs=1e-15)


def test_from_relative_examples():
    s = from_relative(RelativeState(0, [2, 1, 1], [1, 1j], base=2))
    np.testing.assert_allclose(s.positions, [-0.5 + 0.25j, 0.5 - 0.75j, 0.5 + 0.25j], atol=1e-15)
    assert abs(linear_momentum(s)) < 1e-15
    s = from_relative(RelativeState(0, [1, 1, 1], [1, 1j], base=2))
    np.testing.assert_allclose(s.positions, [(-2 + 1j) / 3, (1 - 2j) / 3, (1 + 1j) / 3], atol=1e-15)
    s = from_relative(RelativeState(1, [1, 1], [1], base=1))
    np.testing.assert_allclose(s.positions, [0, 1], atol=1e-15)


def test_naive_reconstruction_breaks_momentum_for_unequal_intensities():
    # z_k = z0 + (xi + eta)/G - (xi, eta, 0) only solves the system for equal intensities
    g = np.array([2.0, 1.0, 1.0])
    xi, eta, total = 1.0, 0.0, g.sum()
    naive = np.array([(xi + eta) / total - xi, (xi + eta) / total - eta, (xi + eta) / total])
    assert np.dot(g, naive) == pytest.approx(-1.0)
    s = from_relative(RelativeState(0, g, [xi, 0.5j], base=2))
    assert abs(np.dot(g, s.positions)) < 1e-15


def test_zero_total_intensity_needs_anchor():
    rel = RelativeState(0.5, [1, -1], [1], base=1)
    with pytest.raises(UndefinedCenterError):
        from_relative(rel)
    s = from_relative(rel, anchor=2.0)
    np.testing.assert_allclose(s.positions, [1.0, 2.0])
    s0 = SystemState(0.0, [0.3, 1j, 2], [1, 1, -2])
    np.testing.assert_allclose(from_relative(to_relative(s0)).positions, s0.positions, atol=1e-15)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 8), base=st.integers(0, 7))
def test_round_trip_and_momentum(seed, n, base):
    rng = np.random.default_rng(seed)
    s = random_state(rng, n, complex_intensities=True)
    if abs(np.sum(s.intensities)) < 0.5:
        s = SystemState(0.0, s.positions, s.intensities + 1.0)
    rel = to_relative(s, base % n)
    back = from_relative(RelativeState(rel.Z, rel.intensities, rel.xi, rel.base))
    cond = np.sum(np.abs(s.intensities)) / abs(np.sum(s.intensities))
    assert np.max(np.abs(back.positions - s.positions)) <= 1e-14 * cond * 4
    assert abs(linear_momentum(back) - rel.Z) <= 1e-13 * (1 + abs(rel.Z))


def test_relative_field_two_body():
    rel = RelativeState(1, [1, 1], [1], base=1)
    np.testing.assert_allclose(relative_field(rel), [-2])


def test_relative_field_matches_absolute_velocities(rng):
    for n in (3, 4, 6):
        s = random_state(rng, n, complex_intensities=True)
        rel = to_relative(s)
        v = velocity_field(s)
        b = rel.base
        expected = [v[b] - v[k] for k in rel.others]
        np.testing.assert_allclose(relative_field(rel), expected, rtol=1e-12, atol=1e-12)


def test_relative_field_three_body_term_by_term():
    g1, g2, g3 = 1.0, 1.0, 1.0
    xi, eta = 2.0 + 0j, 1j
    c = np.conj
    dxi = -(g1 + g3) / c(xi) - g2 / c(eta) - g2 / (c(xi) - c(eta))
    deta = -g1 / c(xi) - (g2 + g3) / c(eta) - g1 / (c(eta) - c(xi))
    out = relative_field(RelativeState(0, [g1, g2, g3], [xi, eta], base=2))
    np.testing.assert_allclose(out, [dxi, deta], rtol=1e-15)


def test_relative_field_three_body_unequal_intensities():
    g1, g2, g3 = 0.7, -1.3 + 0.2j, 2.1j
    xi, eta = 0.4 - 0.9j, -1.1 + 0.3j
    c = np.conj
    dxi = -(g1 + g3) / c(xi) - g2 / c(eta) - g2 / (c(xi) - c(eta))
    deta = -g1 / c(xi) - (g2 + g3) / c(eta) - g1 / (c(eta) - c(xi))
    out = relative_field(RelativeState(0, [g1, g2, g3], [xi, eta], base=2))
    np.testing.assert_allclose(out, [dxi, deta], rtol=1e-14)


def test_blowup_three_body_collision_is_equilibrium():
    rel = RelativeState(0, [1, 1, 1], [0, 1j], base=2)
    out = blowup_field(rel, [0])
    assert out[0] == 0 and out[1] == 0


def test_blowup_three_body_matches_blown_up_display():
    g1, g2, g3 = 0.5, 1.5, -0.7
    xi, eta = 0.3 + 0.1j, -0.4 + 0.8j
    c, m = np.conj, abs(xi) ** 2
    dxi = -(g1 + g3) * xi - g2 * m / c(eta) - g2 * m / (c(xi) - c(eta))
    deta = -g1 * xi - (g2 + g3) * m / c(eta) - g1 * m / (c(eta) - c(xi))
    out = blowup_field(RelativeState(0, [g1, g2, g3], [xi, eta], base=2), [0])
    np.testing.assert_allclose(out, [dxi, deta], rtol=1e-14)


def test_blowup_two_body_linear():
    for K in (1.0, 0.3 - 0.2j, 5j):
        rel = RelativeState(0, [1, 1], [K], base=1)
        np.testing.assert_allclose(blowup_field(rel, [0]), [-2 * K], rtol=1e-15)
    rel = RelativeState(0, [-1j, -1j], [1], base=1)
    np.testing.assert_allclose(blowup_field(rel, [0]), [2j])


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(3, 6), two=st.booleans())
def test_blowup_is_rescaled_relative_field(seed, n, two):
    s = random_state(np.random.default_rng(seed), n, complex_intensities=True)
    rel = to_relative(s)
    sel = [0, 1] if two else [0]
    P = np.prod(np.abs(rel.xi[sel]) ** 2)
    np.testing.assert_allclose(blowup_field(rel, sel), P * relative_field(rel), rtol=1e-11, atol=1e-13)


def test_blowup_finite_at_selected_collision_only():
    rel = RelativeState(0, [1, 2, 3, 1j], [0, 1j, 0.5], base=3)
    assert np.all(np.isfinite(blowup_field(rel, [0])))
    with pytest.raises(CoincidenceError):
        blowup_field(RelativeState(0, [1, 2, 3, 1j], [0, 0.5, 0.5], base=3), [0])
    with pytest.raises(CoincidenceError):
        blowup_field(RelativeState(0, [1, 2, 3], [0, 0], base=2), [0])
    with pytest.raises(ValueError):
        blowup_field(rel, [])
    with pytest.raises(ValueError):
        blowup_field(rel, [3])


def test_integrate_blowup_two_sources():
    rel = to_relative(SystemState(0.0, [0, 1], [1, 1]))
    bt = integrate_blowup(rel, [0], 12.0, TIGHT)
    s = bt.s
    np.testing.assert_allclose(bt.xi[:, 0], np.exp(-2 * s), rtol=1e-9, atol=1e-14)
    np.testing.assert_allclose(bt.t, -np.expm1(-4 * s) / 4, atol=1e-12)
    assert bt.t[-1] == pytest.approx(0.25, abs=1e-12)


def test_integrate_blowup_spiral():
    rel = to_relative(SystemState(0.0, [0, 1], [1 + 1j, 1 + 1j]))
    bt = integrate_blowup(rel, [0], 5.0, TIGHT)
    np.testing.assert_allclose(bt.xi[:, 0], np.exp(-(2 + 2j) * bt.s), atol=1e-11)


def test_integrate_blowup_vortex_pair_time_is_linear():
    K = 1.7
    rel = to_relative(SystemState(0.0, [0, K], [-1j, -1j]))
    bt = integrate_blowup(rel, [0], 3.0, TIGHT)
    np.testing.assert_allclose(bt.t, K**2 * bt.s, rtol=1e-12)
    assert np.max(np.abs(np.abs(bt.xi[:, 0]) - K)) <= 1e-10


def test_integrate_blowup_reconstructs_absolute_positions():
    s0 = SystemState(0.0, [0, 1, 0.5 + 2j], [1, 1, 0.3])
    bt = integrate_blowup(to_relative(s0, base=1), [0], 8.0, TIGHT)
    last = bt.absolute()[-1]
    assert linear_momentum(last) == pytest.approx(linear_momentum(s0), abs=1e-13)
    assert abs(last.positions[0] - last.positions[1]) < 1e-5


def test_chart_equivalence_three_body():
    s0 = SystemState(0.0, [0, 1, 0.4 + 1.5j], [1, 0.8, -0.6 + 0.4j])
    # particles 0 and 1 approach each other; base 1 makes that xi_0 -> 0
    bt = integrate_blowup(to_relative(s0, base=1), [0], 0.3, TIGHT)
    assert not bt.terminated
    assert np.min(np.abs(bt.xi)) > 0.1
    for rel in bt.states[1::3]:
        phys = integrate_adaptive(s0, rel.t, TIGHT).final
        np.testing.assert_allclose(from_relative(rel).positions, phys.positions, atol=1e-7)


def test_non_base_collision_is_not_regularized():
    s0 = SystemState(0.0, [0, 1, 0.4 + 1.5j], [1, 0.8, -0.6 + 0.4j])
    bt = integrate_blowup(to_relative(s0, base=2), [0], 1.0)
    assert bt.terminated == "step_floor"
    last = bt.states[-1]
    assert abs(last.xi[0] - last.xi[1]) < 1e-6


def test_tau_regularization():
    z, t = tau_regularize_two_body(1.0, 1.0, 0.0, 0.4)
    assert z == pytest.approx(0.6) and t == pytest.approx(0.4 - 0.08)
    assert tau_collision(1.0, 1.0, 0.0) == pytest.approx((1.0, 0.5))
    z, t = tau_regularize_two_body(1.0, 1.0, 0.0, 1.0)
    assert z == 0 and t == 0.5
    # elapsed time to collision equals r0^2 / (2 G)
    assert tau_collision(1.0, 1.0, 0.0)[1] == pytest.approx(1.0**2 / (2 * 1.0))
    assert tau_regularize_two_body(2.5, 0.7, 0.0, 0.0) == (0.7, 0.0)
    with pytest.raises(ValueError):
        tau_regularize_two_body(0.0, 1.0, 0.0, 0.3)


@pytest.mark.parametrize("G, z0, tau0", [(1.0, 1.0, 0.3), (2.0, 0.5, -0.4), (0.5, 2.0, 1.0)])
def test_tau_time_is_quadrature_of_z(G, z0, tau0):
    from scipy.integrate import quad

    tau = tau0 + 0.8 * z0 / G
    z, t = tau_regularize_two_body(G, z0, tau0, tau)
    _, t_start = tau_regularize_two_body(G, z0, tau0, tau0)
    elapsed = quad(lambda u: -G * (u - tau0) + z0, tau0, tau)[0]
    assert t - t_start == pytest.approx(elapsed, rel=1e-12)
    tau_c, t_c = tau_collision(G, z0, tau0)
    assert t_c - t_start == pytest.approx(z0**2 / (2 * G), rel=1e-12)
    assert tau_regularize_two_body(G, z0, tau0, tau_c)[0] == pytest.approx(0.0, abs=1e-12)
