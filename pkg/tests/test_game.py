"""Follower best response, surrogate models and the leader's SCA loop."""
import math

import numpy as np
import pytest

from covertnet import analytic as an
from covertnet import game
from covertnet.params import NetworkParams, PowerPair

# --- golden section ---------------------------------------------------------


@pytest.mark.parametrize("x0", [-2.3, 0.0, 0.7, 4.9])
def test_golden_section_quadratic(x0):
    calls = []

    def f(x):
        calls.append(x)
        return (x - x0) ** 2 + 1.0

    x, fx = game.golden_section(f, -5.0, 5.0, 1e-6)
    assert x == pytest.approx(x0, abs=1e-6)
    assert fx == pytest.approx(1.0, abs=1e-12)
    # one new evaluation per shrink by the golden ratio
    assert len(calls) < 2 + math.log(10 / 1e-6) / math.log(1.618) + 2


def test_golden_section_uses_supplied_end_points():
    x, fx = game.golden_section(lambda x: x, 0.0, 1.0, 1e-6, fa=0.0, fb=1.0)
    assert (x, fx) == (0.0, 0.0)


def test_golden_section_nonsmooth():
    x, _ = game.golden_section(lambda x: abs(x - 0.3), 0.0, 1.0, 1e-10)
    assert x == pytest.approx(0.3, abs=1e-9)


# --- follower ---------------------------------------------------------------


def test_tau_grid(params, powers):
    g = game.tau_grid(powers, params, 50)
    assert g.size == 50
    assert np.all(np.diff(g) > 0)
    assert g[0] > params.noise_a


def test_best_response_dominates_grid(params, powers):
    det = game.best_response_tau(powers, params)
    errs = game.detection_error(powers, game.tau_grid(powers, params), params)
    assert det.error <= errs.min()
    assert det.error == pytest.approx(det.fa + det.md)
    assert 0 < det.error < 1


def test_best_response_local_optimality(params, powers):
    det = game.best_response_tau(powers, params)
    for f in (0.99, 1.01):
        tau = params.noise_a + f * (det.tau_star - params.noise_a)
        assert game.detection_error(powers, tau, params) >= det.error
        assert game.detection_error(powers, f * det.tau_star, params) >= det.error


def test_best_response_grid_density_invariant(params, powers):
    a = game.best_response_tau(powers, params, points=128)
    b = game.best_response_tau(powers, params, points=256)
    assert b.tau_star == pytest.approx(a.tau_star, rel=1e-6)
    assert b.error == pytest.approx(a.error, abs=1e-12)


def test_best_response_flat_objective(params, powers, monkeypatch):
    monkeypatch.setattr(game, "detection_error", lambda pw, tau, p, settings=None: np.ones(np.shape(tau)))
    det = game.best_response_tau(powers, params)
    assert det.flat
    assert (det.tau_star, det.error) == (params.noise_a, 1.0)


def test_detection_error_limits(params, powers):
    assert game.detection_error(powers, params.noise_a, params) == 1.0
    assert game.detection_error(powers, 1e12, params) == pytest.approx(1.0, abs=1e-6)


# --- leader objective -------------------------------------------------------


def test_utility_reward_only():
    p = NetworkParams(phi_c=0.0, lambda_d=1e-300, lambda_b=1e-300, lambda_u=1.0, noise_rx=0.0)
    assert game.utility(PowerPair(0.01, 1.0), p) == pytest.approx(10.0, abs=1e-9)


def test_utility_decomposition(params, powers):
    u = game.utility(powers, params)
    reward = params.phi_d * an.d2d_success_probability(powers, params)
    cost = params.phi_c * params.lambda_u / params.lambda_d * an.mean_d2d_interference(powers, params)
    assert u == pytest.approx(reward - cost, rel=1e-14)


def test_xi_definitions(params, powers):
    v = game.xi(powers, params)
    det = game.best_response_tau(powers, params)
    assert v.xi0 == -game.utility(powers, params)
    assert v.xi1 == pytest.approx(1 - params.eps_covert - det.error, abs=1e-14)
    rw, ro = an.ergodic_rate(powers, params, True), an.ergodic_rate(powers, params, False)
    assert v.xi2 == pytest.approx((1 - params.eps_qos) * ro - rw, abs=1e-14)
    np.testing.assert_array_equal(v.as_array(), [v.xi0, v.xi1, v.xi2])


def test_xi_vanishing_d2d_tier(powers):
    p = NetworkParams(lambda_d=1e-12)
    v = game.xi(powers, p)
    ro = an.ergodic_rate(powers, p, False)
    assert v.xi2 == pytest.approx(-p.eps_qos * ro, rel=1e-6)
    assert v.xi2 < 0


def test_xi_weak_cover_violates_covertness(params):
    v = game.xi(PowerPair(params.pd_max, params.pc_min), params)
    assert v.xi1 > 0
    assert not v.feasible()


# --- surrogate --------------------------------------------------------------


def _model(delta=0.5, seed=0):
    rng = np.random.default_rng(seed)
    return game.surrogate(rng.random(2), rng.normal(size=3), rng.normal(size=(3, 2)), delta)


def test_surrogate_exact_at_center():
    m = _model()
    np.testing.assert_array_equal(m(m.center), m.values)
    np.testing.assert_array_equal(m.gradient(m.center), m.gradients)


def test_surrogate_linearization_limit():
    m = _model(delta=1e300)
    z = np.array([0.9, 0.1])
    np.testing.assert_allclose(m(z), m.values + m.gradients @ (z - m.center), rtol=1e-14)


def test_surrogate_rejects_bad_delta():
    for d in (0.0, -1.0):
        with pytest.raises(ValueError):
            game.surrogate([0.5, 0.5], [0, 0, 0], np.zeros((3, 2)), d)


def test_surrogate_majorizes_true_xi(params):
    box = game.LogBox.from_params(params)
    opts = game.SCAOptions()
    f = game._XiCache(params, box, None, an.DEFAULT_QUADRATURE)
    z = np.array([0.3, 0.6])
    values, grads = game._fd_gradients(f, z, box.free, opts.fd_step)
    delta = game._calibrate_delta(f, z, box.free, values, grads, opts, np.random.default_rng(0))
    # half the calibrated weight leaves room for curvature the 16 calibration points missed
    m = game.surrogate(z, values, grads, 0.5 * delta)
    rng = np.random.default_rng(1)
    for _ in range(100):
        d = rng.normal(size=2)
        d *= 0.1 * math.sqrt(rng.random()) / np.linalg.norm(d)
        q = np.clip(z + d, 0, 1)
        assert np.all(f(q).as_array() <= m(q) + 1e-9)


def test_solve_unconstrained_step():
    m = game.surrogate([0.5, 0.5], [0.0, -1.0, -1.0], np.array([[0.2, -0.4], [0, 0], [0, 0]]), 0.5)
    z, ok = game.solve_surrogate(m)
    assert ok
    np.testing.assert_allclose(z, np.clip([0.5 - 0.1, 0.5 + 0.2], 0, 1))
    m = game.surrogate([0.5, 0.5], [0.0, -1.0, -1.0], np.array([[5.0, -5.0], [0, 0], [0, 0]]), 0.5)
    z, _ = game.solve_surrogate(m)
    np.testing.assert_array_equal(z, [0.0, 1.0])


def test_solve_zero_gradients_returns_center():
    m = game.surrogate([0.3, 0.8], [1.0, -0.5, -0.5], np.zeros((3, 2)), 1.0)
    z, ok = game.solve_surrogate(m)
    assert ok
    np.testing.assert_array_equal(z, [0.3, 0.8])


def test_solve_fixed_coordinate():
    m = game.surrogate([0.3, 0.8], [0.0, -1.0, -1.0], np.array([[1.0, 1.0], [0, 0], [0, 0]]), 1.0)
    z, _ = game.solve_surrogate(m, free=(True, False))
    assert z[1] == 0.8


@pytest.mark.parametrize("seed", range(6))
def test_solve_against_brute_force(seed):
    rng = np.random.default_rng(seed)
    c = rng.random(2)
    # feasible center so the constrained problem has a solution
    values = np.array([rng.normal(), -abs(rng.normal()) * 0.1, -abs(rng.normal()) * 0.1])
    m = game.surrogate(c, values, rng.normal(size=(3, 2)) * 2, rng.uniform(0.05, 0.5))
    z, ok = game.solve_surrogate(m)
    assert ok
    n = 2048
    g = np.linspace(0, 1, n)
    zz = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    vals = m(zz)
    feas = np.all(vals[:, 1:] <= 0, axis=1)
    brute = vals[feas, 0].min()
    v = m(z)
    assert np.all(v[1:] <= 1e-9)
    # within the objective change over one grid cell
    h = 1.0 / (n - 1)
    slope = np.linalg.norm(m.gradient(z)[0]) + 1.0 / m.delta
    assert v[0] <= brute + slope * h * math.sqrt(2)
    assert np.linalg.norm(z - zz[feas][np.argmin(vals[feas, 0])]) < 0.02


def test_solve_infeasible_returns_min_violation():
    # constraint 1 is violated everywhere, least at z = (1, 1)
    m = game.surrogate([0.5, 0.5], [0.0, 5.0, -1.0], np.array([[0, 0], [-1.0, -1.0], [0, 0]]), 100.0)
    z, ok = game.solve_surrogate(m)
    assert not ok
    np.testing.assert_allclose(z, [1.0, 1.0], atol=1e-6)


def test_pick_tie_break():
    obj = np.array([1.0, 1.0, 1.0, 2.0])
    z = np.array([[0.5, 0.2], [0.1, 0.9], [0.1, 0.3], [0.0, 0.0]])
    assert game._pick(obj, z) == 2


# --- log box and SCA ----------------------------------------------------------


def test_logbox_round_trip(params):
    box = game.LogBox.from_params(params)
    pw = PowerPair(0.01, 1.0)
    assert box.to_powers(box.to_z(pw)).pd == pytest.approx(0.01, rel=1e-12)
    np.testing.assert_allclose(box.to_z(pw), [0.5, 0.5])
    pinned = game.LogBox.from_params(params.replace(pd_min=0.01, pd_max=0.01))
    assert list(pinned.free) == [False, True]
    assert pinned.to_powers([0.3, 0.5]).pd == pytest.approx(0.01)


def test_sca_options_validation():
    with pytest.raises(ValueError):
        game.SCAOptions(gamma=1.0)
    with pytest.raises(ValueError):
        game.SCAOptions(tol=0)
    with pytest.raises(ValueError):
        game.SCAOptions(max_iters=0)


def test_sca_start_outside_box(params):
    with pytest.raises(ValueError):
        game.run_algorithm1(PowerPair(1.0, 1.0), params)


@pytest.mark.slow
def test_sca_cost_free_goes_to_max_power():
    p = NetworkParams(phi_c=0.0, eps_covert=0.6, eps_qos=0.9)
    res = game.run_algorithm1(PowerPair(3e-3, 1.0), p)
    assert res.converged and res.feasible
    assert res.powers.pd == pytest.approx(p.pd_max, rel=2e-3)
    assert all(st.xi.feasible() for st in res.history)


@pytest.mark.slow
def test_sca_history_and_result(params):
    res = game.run_algorithm1(PowerPair(0.003, 3.0), params)
    assert res.history[-1].powers == res.powers
    assert res.iterations == len(res.history) - 1
    assert all(st.powers.in_box(params) for st in res.history)
    assert res.reported_utility == (res.utility if res.feasible else 0.0)
    if res.converged:
        assert max(-s for s in res.constraint_slacks) <= 1e-3
        assert res.detector.error >= 1 - params.eps_covert - 1e-3


def test_infeasible_result_reports_zero():
    r = game.EquilibriumResult(PowerPair(1e-3, 1.0), None, 3.0, (-1.0, 0.0), False, False, 1)
    assert r.reported_utility == 0.0


def test_min_cover_power(params):
    pd = 10 ** (1 / 10) * 1e-3
    pc = game.min_cover_power(pd, params)
    assert pc is not None and params.pc_min <= pc <= params.pc_max
    v = game.xi(PowerPair(pd, pc), params)
    assert max(v.xi1, v.xi2) == pytest.approx(0.0, abs=1e-8)
    assert game.min_cover_power(pd, params.replace(pc_max=1.0)) is None


def test_feasible_starts(params):
    starts = game.feasible_starts(params, 3, seed=2)
    assert len(starts) == 3
    assert all(game.xi(s, params).feasible() for s in starts)


@pytest.mark.slow
def test_equilibrium_insensitive_to_adversary_density_when_qos_binds():
    utils = []
    for la in (0.008, 0.01):
        p = NetworkParams(lambda_a=la)
        res = game.run_algorithm1(PowerPair(0.01, 1.0), p)
        assert res.feasible
        # the QoS residual is the binding one
        assert abs(res.constraint_slacks[1]) < 1e-3
        utils.append(res.utility)
    assert utils[0] == pytest.approx(utils[1], rel=1e-3)
