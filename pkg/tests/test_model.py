import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gibbslab import model
from gibbslab.lattice import box, closure
from gibbslab.model import ModelError, build_grising, build_random_coupling, build_rfim

SITES = box(0, 1, 2)


def _spins(idx, vol):
    return {s: (1 if (idx >> i) & 1 else -1) for i, s in enumerate(vol)}


def _rfim_energy(J, h, sigma, eta, vol, bc):
    e = 0.0
    for s in vol:
        e -= h * eta[s] * sigma[s]
        for k in range(2):
            t = list(s)
            t[k] += 1
            t = tuple(t)
            if t in vol:
                e -= J * sigma[s] * sigma[t]
        for k in range(2):
            for step in (1, -1):
                t = list(s)
                t[k] += step
                t = tuple(t)
                if t not in vol and bc is not None:
                    e -= J * sigma[s] * bc
    return e


def test_builders_reject_bad_parameters():
    with pytest.raises(ModelError):
        build_rfim(-1.0, 1.0)
    with pytest.raises(ModelError):
        build_rfim(1.0, float("nan"))
    with pytest.raises(ModelError):
        build_random_coupling([])
    with pytest.raises(ModelError):
        model.RandomFieldIsing(1.0, 1.0, 0)


def test_random_coupling_alphabet_is_the_slot_product():
    pot = build_random_coupling((0.0, 1.0), d=2)
    assert pot.alphabet == ((0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0))
    with pytest.raises(ModelError):
        pot.encode((1.0,))


def test_terms_containing_site():
    pot = build_rfim(1.0, 1.0, d=2)
    terms = pot.terms_containing((0, 0))
    assert sum(t.is_site for t in terms) == 1
    assert len(terms) == 5
    assert len(build_grising(1.0, 2).terms_containing((0, 0))) == 4


@pytest.mark.parametrize("bc", [1, -1, None])
def test_rfim_hamiltonian_matches_hand_sum(bc):
    J, h = 0.7, 1.3
    pot = build_rfim(J, h, 2, (-1.0, 0.0, 1.0))
    g = np.random.default_rng(3)
    eta = {s: float(g.choice([-1.0, 0.0, 1.0])) for s in closure(SITES, 1)}
    bc_spins = None if bc is None else {s: bc for s in closure(SITES, 1) if s not in SITES}
    for idx in range(16):
        sig = _spins(idx, SITES)
        got = model.hamiltonian_in_volume(pot, SITES, sig, bc_spins, eta)
        assert got == pytest.approx(_rfim_energy(J, h, sig, eta, SITES, bc), abs=1e-12)


def test_random_coupling_reads_base_site():
    pot = build_random_coupling((0.0, 0.5, 2.0), d=2)
    vol = box((0, 0), (1, 0))
    eta = {s: (0.0, 0.0) for s in closure(vol, 1)}
    eta[(0, 0)] = (2.0, 0.5)
    for sig in ({(0, 0): 1, (1, 0): 1}, {(0, 0): 1, (1, 0): -1}):
        e = model.hamiltonian_in_volume(pot, vol, sig, None, eta)
        assert e == pytest.approx(-2.0 * sig[(0, 0)] * sig[(1, 0)])


def test_grising_only_couples_occupied_pairs():
    pot = build_grising(1.5, 1)
    vol = box(0, 2, 1)
    sig = {(0,): 1, (1,): 1, (2,): -1}
    eta = {(-1,): 0, (0,): 1, (1,): 1, (2,): 0, (3,): 0}
    assert model.hamiltonian_in_volume(pot, vol, sig, None, eta) == pytest.approx(-1.5)


def test_delta_h_rejects_unknown_symbol():
    pot = build_rfim(1.0, 1.0, 1)
    with pytest.raises(ModelError):
        model.delta_h_x(pot, (0,), {(0,): 1}, 0.5, 1.0, {})


@given(
    st.floats(0, 2), st.floats(0, 2),
    st.lists(st.sampled_from([-1.0, 0.0, 1.0]), min_size=9, max_size=9),
    st.integers(0, 15), st.sampled_from([-1.0, 0.0, 1.0]), st.sampled_from([-1.0, 0.0, 1.0]),
)
def test_delta_h_equals_energy_difference(J, h, etas, idx, a, b):
    pot = build_rfim(J, h, 2, (-1.0, 0.0, 1.0))
    x = (0, 0)
    cl = closure(SITES, 1)
    eta = {s: e for s, e in zip(itertools.islice(cl, 16), etas * 2)}
    sig = {s: 1 for s in cl}
    sig.update(_spins(idx, SITES))
    h1 = model.hamiltonian_in_volume(pot, SITES, sig, sig, {**eta, x: a})
    h2 = model.hamiltonian_in_volume(pot, SITES, sig, sig, {**eta, x: b})
    assert float(model.delta_h_x(pot, x, sig, a, b, eta)) == pytest.approx(h1 - h2, abs=1e-10)


@given(st.lists(st.sampled_from([(0.0, 1.0), (1.0, -0.5), (-0.5, 0.0)]), min_size=9, max_size=9))
def test_delta_h_antisymmetric_random_coupling(values):
    pot = build_random_coupling((-0.5, 0.0, 1.0), 2)
    cl = closure(box(0, 0, 2), 1)
    eta = dict(zip(cl, values))
    sig = {s: (-1) ** i for i, s in enumerate(cl)}
    a, b = (0.0, 1.0), (1.0, -0.5)
    fwd = model.delta_h_x(pot, (0, 0), sig, a, b, eta)
    bwd = model.delta_h_x(pot, (0, 0), sig, b, a, eta)
    assert float(fwd) == pytest.approx(-float(bwd))
