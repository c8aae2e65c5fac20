import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gibbslab import identities, model
from gibbslab.disorder import rng
from gibbslab.lattice import box, closure
from gibbslab.mc import McConfig


@given(st.integers(0, 2**31), st.sampled_from(["rfim", "random_coupling"]))
def test_random_instances_satisfy_all_identities(seed, kind):
    inst = identities.random_instance(rng(seed, 99), kind)
    assert inst.x in inst.volume
    assert identities.perturbation_residual(inst) < 1e-10
    assert identities.partition_ratio_residual(inst) < 1e-10
    assert identities.single_site_residual(inst) < 1e-10


def test_battery_report():
    rep = identities.identity_battery(12, seed=4)
    assert rep.ok
    assert set(rep.max_residual) == {"perturbation_formula", "partition_ratio",
                                     "single_site_compatibility", "rfim_field_relation"}
    assert rep.to_json()["n_instances"] == 12
    only = identities.identity_battery(4, seed=4, kinds=("random_coupling",))
    assert only.max_residual["rfim_field_relation"] == 0.0


def test_battery_detects_wrong_energy_difference(monkeypatch):
    real = model.delta_h_x
    monkeypatch.setattr(model, "delta_h_x", lambda *a, **k: -real(*a, **k))
    rep = identities.identity_battery(6, seed=0)
    assert not rep.passed["perturbation_formula"]
    assert not rep.passed["partition_ratio"]


def test_field_relation_on_larger_box():
    pot = model.build_rfim(1.3, 0.8, 2, (-1.0, 0.0, 1.0))
    V = box(0, 3, 2)
    g = np.random.default_rng(0)
    eta = {s: float(g.choice([-1.0, 0.0, 1.0])) for s in closure(V, 1)}
    assert identities.rfim_relation_residual(pot, V, eta, (1, 2), -1.0, 1.0) < 1e-10


def test_up_probability_helper():
    pot = model.build_rfim(1.0, 1.0, 1)
    V = box(0, 0, 1)
    p = identities.rfim_up_probability(pot, V, {(0,): 0.0}, {(-1,): 1, (1,): -1}, (0,))
    assert p == pytest.approx(0.5)


def test_mc_regression_battery_small():
    cases = identities.mc_regression_battery(4, seed=2, cfg=McConfig(sweeps=3000, burn_in=300, seed=2))
    assert len(cases) == 4
    assert all(c.ok for c in cases)
    assert {c.description["dynamics"] for c in cases} == {"heat_bath", "metropolis"}
