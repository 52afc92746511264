import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lagmpc.laguerre import reconstruct_sequence
from lagmpc.mpc import (MpcConfig, StateOutsideConstraintsError, Status, lagnmpc_cost,
                        nmpc_cost, rollout, solve_lagnmpc, solve_nmpc)
from lagmpc.plant import BuckBoost
from lagmpc.sampling import halton_sample_states
from oracles import LAGNMPC, NMPC

in_X = st.tuples(st.floats(0.01, 2.0), st.floats(-20.0, 0.0)).map(np.array)


def test_rollout_equilibrium(cfg, plant):
    xs = rollout(plant, cfg.x_ss, cfg.U_ss)
    assert xs.shape == (cfg.N + 1, 2)
    np.testing.assert_allclose(xs, np.tile(cfg.x_ss, (cfg.N + 1, 1)), atol=1e-9)


def test_rollout_first_step(plant):
    xs = rollout(plant, [0, 0], [0.4, 0.9, 0.1])
    np.testing.assert_allclose(xs[1], [0.142857, 0], atol=1e-6)


def test_config_validation():
    with pytest.raises(ValueError):
        MpcConfig(N=0)
    with pytest.raises(ValueError):
        MpcConfig(R=0.0)
    with pytest.raises(ValueError):
        MpcConfig(Q=np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        MpcConfig(M=21)
    with pytest.raises(ValueError):
        MpcConfig(x_ss=np.array([5.0, -10.0]), u_ss=0.4)


def test_cost_zero_at_equilibrium(cfg, plant, basis):
    assert nmpc_cost(cfg, plant, cfg.x_ss, cfg.U_ss) == pytest.approx(0, abs=1e-18)
    assert lagnmpc_cost(cfg, basis, plant, cfg.x_ss, np.zeros(basis.M)) == pytest.approx(0, abs=1e-18)


def test_single_stage_cost(cfg, plant):
    c = cfg.replace(N=1, Q=np.eye(2), R=1.0, P=np.eye(2), M=1)
    x1 = plant.step(c.x_ss, c.u_ss + 1)
    expected = 1.0 + float(np.sum((x1 - c.x_ss) ** 2))
    assert nmpc_cost(c, plant, c.x_ss, [c.u_ss + 1]) == pytest.approx(expected, rel=1e-14)


@given(in_X, st.lists(st.floats(0.1, 0.9), min_size=20, max_size=20))
def test_cost_homogeneous(x0, U):
    cfg = MpcConfig()
    plant = BuckBoost()
    double = cfg.replace(Q=2 * cfg.Q, R=2 * cfg.R, P=2 * cfg.P)
    assert nmpc_cost(double, plant, x0, U) == pytest.approx(2 * nmpc_cost(cfg, plant, x0, U),
                                                            rel=1e-12)


@given(in_X, st.lists(st.floats(-1, 1), min_size=4, max_size=4))
def test_lagnmpc_cost_is_composition(x0, eta):
    cfg = MpcConfig()
    plant = BuckBoost()
    b = cfg.basis()
    U = reconstruct_sequence(b, eta, cfg.u_ss)
    assert lagnmpc_cost(cfg, b, plant, x0, eta) == pytest.approx(nmpc_cost(cfg, plant, x0, U),
                                                                 rel=1e-10, abs=1e-12)


def test_lagnmpc_cost_identity_basis_exact(plant, rng):
    cfg = MpcConfig(alpha=0.0, M=20)
    b = cfg.basis()
    eta = rng.uniform(-0.3, 0.3, 20)
    x0 = np.array([0.4, -6.0])
    assert lagnmpc_cost(cfg, b, plant, x0, eta) == nmpc_cost(cfg, plant, x0, eta + cfg.u_ss)


def test_cost_nonnegative(cfg, plant, rng):
    for _ in range(20):
        x0 = cfg.X.lower + rng.random(2) * (cfg.X.upper - cfg.X.lower)
        assert nmpc_cost(cfg, plant, x0, rng.uniform(0.1, 0.9, cfg.N)) >= 0


def test_cost_shape_errors(cfg, plant, basis):
    with pytest.raises(ValueError):
        nmpc_cost(cfg, plant, cfg.x_ss, np.zeros(3))
    with pytest.raises(ValueError):
        lagnmpc_cost(cfg, basis, plant, cfg.x_ss, np.zeros(3))


def test_solve_at_equilibrium(cfg, plant, basis):
    r = solve_nmpc(cfg, plant, cfg.x_ss)
    assert r.status is Status.CONVERGED
    np.testing.assert_allclose(r.U, cfg.U_ss, atol=1e-4)
    assert r.cost <= 1e-6
    r = solve_lagnmpc(cfg, basis, plant, cfg.x_ss)
    assert r.status is Status.CONVERGED
    assert np.linalg.norm(r.eta) <= 1e-4
    assert r.cost <= 1e-6


@pytest.mark.parametrize("x0", sorted(NMPC))
def test_nmpc_matches_oracle(cfg, plant, x0):
    u0, cost = NMPC[x0]
    r = solve_nmpc(cfg, plant, np.array(x0))
    assert r.status is Status.CONVERGED
    assert r.u0 == pytest.approx(u0, abs=1e-3)
    assert r.cost == pytest.approx(cost, rel=1e-5)


@pytest.mark.parametrize("x0", sorted(LAGNMPC))
def test_lagnmpc_matches_oracle(cfg, plant, basis, x0):
    u0, cost = LAGNMPC[x0]
    r = solve_lagnmpc(cfg, basis, plant, np.array(x0))
    assert r.status is Status.CONVERGED
    assert 0.1 <= r.u0 <= 0.9
    assert r.u0 == pytest.approx(u0, abs=1e-3)
    assert r.cost == pytest.approx(cost, rel=1e-5)
    np.testing.assert_allclose(r.U, basis.L @ r.eta + cfg.u_ss, rtol=0, atol=1e-15)


def test_boundary_start_is_certified(cfg, plant):
    r = solve_nmpc(cfg, plant, np.array([0.5, 0.0]))
    assert r.status is Status.CONVERGED
    xs = rollout(plant, [0.5, 0.0], r.U)
    assert cfg.X.max_violation(xs[1:]) <= 1e-6
    assert np.all((r.U >= 0.1) & (r.U <= 0.9))


def test_cost_self_consistent(cfg, plant, basis):
    x0 = np.array([1.2, -14.0])
    r = solve_nmpc(cfg, plant, x0)
    assert nmpc_cost(cfg, plant, x0, r.U) == pytest.approx(r.cost, abs=1e-9)
    r = solve_lagnmpc(cfg, basis, plant, x0)
    assert lagnmpc_cost(cfg, basis, plant, x0, r.eta) == pytest.approx(r.cost, abs=1e-9)


def test_deterministic(cfg, plant, basis):
    x0 = np.array([0.3, -17.0])
    a, b = solve_lagnmpc(cfg, basis, plant, x0), solve_lagnmpc(cfg, basis, plant, x0)
    np.testing.assert_array_equal(a.U, b.U)
    assert a.cost == b.cost and a.status is b.status


def test_outside_X_is_an_error(cfg, plant, basis):
    with pytest.raises(StateOutsideConstraintsError):
        solve_nmpc(cfg, plant, np.array([3.0, -10.0]))
    with pytest.raises(StateOutsideConstraintsError):
        solve_lagnmpc(cfg, basis, plant, np.array([0.5, 1.0]))
    # within the constraint tolerance counts as inside
    r = solve_lagnmpc(cfg, basis, plant, np.array([0.01 - 1e-7, -15.0]))
    assert r.status is not None


def test_unreachable_state_reports_infeasible(cfg, plant):
    # at [2, -20] keeping x1 <= 2 needs u <= 4/7 while keeping x2 >= -20 needs u >= 0.94
    r = solve_nmpc(cfg, plant, np.array([2.0, -20.0]))
    assert r.status is Status.INFEASIBLE
    assert r.max_violation > cfg.constr_tol


def test_converged_implies_certified(cfg, plant, basis):
    for x0 in halton_sample_states(cfg.X, 15):
        for r in (solve_nmpc(cfg, plant, x0), solve_lagnmpc(cfg, basis, plant, x0)):
            if r.converged:
                assert r.max_violation <= cfg.constr_tol
                assert np.all((r.U >= 0.1 - 1e-9) & (r.U <= 0.9 + 1e-9))


def test_equivalence_with_identity_basis(plant):
    cfg = MpcConfig(alpha=0.0, M=20)
    b = cfg.basis()
    for x0 in halton_sample_states(cfg.X, 10):
        a, l = solve_nmpc(cfg, plant, x0), solve_lagnmpc(cfg, b, plant, x0)
        if a.converged and l.converged:
            assert abs(a.u0 - l.u0) <= 1e-3


def test_solver_logs_diagnostics(cfg, plant, caplog):
    with caplog.at_level(logging.DEBUG, logger="lagmpc.mpc"):
        solve_nmpc(cfg, plant, np.array([1.0, -5.0]))
    rec = [r for r in caplog.records if r.getMessage() == "nmpc solve"]
    assert rec and {"cost", "status", "violation", "iterations"} <= set(vars(rec[0]))
