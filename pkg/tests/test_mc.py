import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gibbslab.diagnostics import exp_dh_expectations
from gibbslab.disorder import rng
from gibbslab.gibbs import BoundaryCondition, exact_gibbs
from gibbslab.lattice import box, closure
from gibbslab.mc import (
    LocalObservable,
    McConfig,
    McError,
    SpinSystem,
    batch_means,
    integrated_autocorr_time,
    mc_badness_gap,
    mc_expectation,
    mc_gap_probe,
    split_rhat,
    stationary_distribution,
    sweep_transition_matrix,
)
from gibbslab.model import build_random_coupling, build_rfim

FAST = McConfig(sweeps=3000, burn_in=300, chains=4, seed=1)


def test_config_validation():
    for bad in (dict(sweeps=0), dict(sweeps=10, burn_in=10), dict(chains=1),
                dict(dynamics="wolff"), dict(stride=0), dict(sweeps=5, burn_in=2)):
        with pytest.raises(McError):
            McConfig(**bad)
    assert McConfig(sweeps=100, burn_in=20, stride=4).samples_per_chain == 20


@pytest.mark.parametrize("dynamics", ["heat_bath", "metropolis"])
@pytest.mark.parametrize("bc", ["plus", "open"])
def test_sweep_kernel_preserves_gibbs_measure(dynamics, bc):
    pot = build_rfim(0.9, 0.7, 2, (-1.0, 0.0, 1.0))
    V = box((0, 0), (1, 2))
    g = np.random.default_rng(2)
    eta = {s: float(g.choice([-1.0, 0.0, 1.0])) for s in closure(V, 1)}
    b = BoundaryCondition(bc)
    P = sweep_transition_matrix(SpinSystem.build(pot, V, b, eta), dynamics)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
    pi = exact_gibbs(pot, V, b, eta).probs()
    np.testing.assert_allclose(pi @ P, pi, atol=1e-12)
    np.testing.assert_allclose(stationary_distribution(P), pi, atol=1e-10)


def test_random_coupling_kernel_preserves_gibbs_measure():
    pot = build_random_coupling((-1.0, 0.5), 2)
    V = box(0, 1, 2)
    g = np.random.default_rng(5)
    eta = {s: pot.alphabet[int(g.integers(4))] for s in closure(V, 1)}
    b = BoundaryCondition.minus()
    P = sweep_transition_matrix(SpinSystem.build(pot, V, b, eta), "metropolis")
    pi = exact_gibbs(pot, V, b, eta).probs()
    np.testing.assert_allclose(pi @ P, pi, atol=1e-12)


def test_ar1_autocorrelation_time():
    g = rng(0, 1)
    rho, n = 0.8, 20000
    x = np.empty((4, n))
    x[:, 0] = g.normal(size=4)
    for t in range(1, n):
        x[:, t] = rho * x[:, t - 1] + math.sqrt(1 - rho**2) * g.normal(size=4)
    tau = integrated_autocorr_time(x)
    assert tau == pytest.approx((1 + rho) / (1 - rho), rel=0.15)
    est = batch_means(x)
    # the standard error of the mean of an AR(1) chain is sqrt(tau / N)
    assert est.std_error == pytest.approx(math.sqrt(tau / (4 * n)), rel=0.35)


def test_rhat_flags_disagreeing_chains():
    g = rng(0, 2)
    ok = g.normal(size=(4, 1000))
    assert split_rhat(ok) < 1.02
    bad = ok + np.array([[0.0], [0.0], [3.0], [3.0]])
    assert split_rhat(bad) > 1.5
    assert split_rhat(np.ones((4, 10))) == 1.0


@given(st.integers(0, 2**20))
def test_batch_means_of_constant_series(c):
    est = batch_means(np.full((3, 40), float(c)))
    assert est.mean == c
    assert est.std_error == 0.0
    assert est.converged


@pytest.mark.parametrize("dynamics", ["heat_bath", "metropolis"])
def test_estimate_agrees_with_enumeration(dynamics):
    pot = build_rfim(0.6, 1.0, 2)
    V = box(0, 2, 2)
    g = np.random.default_rng(7)
    eta = {s: float(g.choice([-1.0, 1.0])) for s in closure(V, 1)}
    bc = BoundaryCondition.plus()
    cfg = McConfig(FAST.sweeps, FAST.burn_in, FAST.chains, 3, dynamics)
    est = mc_expectation(pot, eta, V, bc, LocalObservable.spin_up((1, 1)), cfg)
    exact = exact_gibbs(pot, V, bc, eta).prob((1, 1), 1)
    assert abs(est.mean - exact) <= 4 * est.std_error
    assert est.converged


def test_never_visited_state_keeps_a_resolution_floor():
    pot = build_rfim(3.0, 1.0, 2)
    V = box(0, 1, 2)
    eta = {s: 1.0 for s in closure(V, 1)}
    est = mc_expectation(pot, eta, V, BoundaryCondition.plus(), LocalObservable.spin_up((0, 0)), FAST)
    assert est.mean == 1.0
    assert est.std_error == pytest.approx(1.0 / est.n_samples)


def test_identical_seeds_are_bit_identical():
    pot = build_rfim(1.0, 1.0, 2)
    V = box(0, 2, 2)
    eta = {s: 1.0 for s in closure(V, 1)}
    f = LocalObservable.agree((0, 0), (1, 0))
    a = mc_expectation(pot, eta, V, BoundaryCondition.open(), f, FAST, init="random")
    b = mc_expectation(pot, eta, V, BoundaryCondition.open(), f, FAST, init="random")
    assert a == b
    c = mc_expectation(pot, eta, V, BoundaryCondition.open(), f,
                       McConfig(FAST.sweeps, FAST.burn_in, FAST.chains, 2), init="random")
    assert c.mean != a.mean


def test_observable_outside_volume():
    pot = build_rfim(1.0, 1.0, 1)
    with pytest.raises(McError):
        mc_expectation(pot, {}, box(0, 2, 1), BoundaryCondition.plus(), LocalObservable.spin((5,)), FAST)


def test_gap_probe_common_random_numbers():
    V = box(0, 2, 2)
    eta = {s: 0.0 for s in closure(V, 1)}
    pot = build_rfim(0.5, 0.5, 2, (-1.0, 0.0, 1.0))
    f = LocalObservable.spin_up((1, 1))
    est = mc_gap_probe(pot, V, f, (eta, BoundaryCondition.plus()), (eta, BoundaryCondition.minus()), FAST)
    mp = exact_gibbs(pot, V, BoundaryCondition.plus(), eta).prob((1, 1), 1)
    mm = exact_gibbs(pot, V, BoundaryCondition.minus(), eta).prob((1, 1), 1)
    assert abs(est.mean - (mp - mm)) <= 4 * est.std_error
    same = mc_gap_probe(pot, V, f, (eta, BoundaryCondition.plus()), (eta, BoundaryCondition.plus()), FAST)
    assert same.mean == 0.0
    # identical runs leave only the one-sample resolution as error
    assert same.std_error == pytest.approx(1.0 / same.n_samples)


def test_mc_badness_gap_against_exact():
    pot = build_rfim(0.7, 1.0, 2, (-1.0, 0.0, 1.0))
    V = box(-1, 1, 2)
    cl = closure(V, 1)
    plus = {s: 1.0 for s in cl}
    minus = {s: -1.0 for s in cl}
    bc = BoundaryCondition.open()
    gap, err = mc_badness_gap(pot, plus, minus, (0, 0), -1.0, 1.0, V, bc, FAST)
    a = exp_dh_expectations(pot, V, bc, [plus], (0, 0), 1.0, -1.0)[0]
    b = exp_dh_expectations(pot, V, bc, [minus], (0, 0), -1.0, 1.0)[0]
    assert abs(gap - (1 / a - b)) <= 4 * err


def test_free_spin_is_not_frozen_by_metropolis():
    pot = build_rfim(0.0, 0.0, 2)
    V = box(0, 1, 2)
    eta = {s: 0.0 for s in closure(V, 1)}
    cfg = McConfig(FAST.sweeps, FAST.burn_in, FAST.chains, 5, "metropolis")
    # zero coupling: every chain starts all up, but the boundary exerts no pull
    est = mc_expectation(pot, eta, V, BoundaryCondition.plus(), LocalObservable.spin_up((0, 0)), cfg)
    assert abs(est.mean - 0.5) <= 4 * est.std_error


def test_open_boundary_reaches_the_minority_phase():
    # about 1.6% of the weight sits in the minus phase, out of reach of single-spin moves
    pot = build_rfim(1.2752509321519734, 0.7855420154795281, 2, (-1.0, 0.0, 1.0))
    V = box(0, 2, 2)
    rows = [(-1.0, 1.0, 0.0), (1.0, 1.0, 1.0), (0.0, -1.0, 1.0)]
    eta = {(i, j): rows[i][j] for i in range(3) for j in range(3)}
    cfg = McConfig(6000, 500, 4, 38, "metropolis")
    f = LocalObservable.spin_up((0, 2))
    est = mc_expectation(pot, eta, V, BoundaryCondition.open(), f, cfg)
    exact = exact_gibbs(pot, V, BoundaryCondition.open(), eta).prob((0, 2), 1)
    assert abs(est.mean - exact) <= 4 * est.std_error
