"""Randomized batteries of exact finite-volume identities.

Each check compares two independent routes to the same number: a Gibbs
table computed directly at one disorder configuration, against one computed
at another configuration and corrected by the single-site disorder
variation.  The variation is always taken from :func:`model.delta_h_x`, so a
bug there cannot cancel out.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import model
from .disorder import rng
from .gibbs import BoundaryCondition, GibbsTable, exact_gibbs
from .joint import one_site_specification
from .lattice import Site, Volume, box, closure, r_boundary
from .mc import LocalObservable, McConfig, mc_expectation
from .model import DisorderedPotential

TOLERANCE = 1e-10


@dataclass
class Instance:
    pot: DisorderedPotential
    volume: Volume
    bc: BoundaryCondition
    eta: dict
    x: Site
    eta1: object
    eta2: object

    def describe(self) -> dict:
        return {"model": self.pot.describe(), "shape": list(self.volume.shape()),
                "bc": self.bc.kind, "x": list(self.x), "eta1": _plain(self.eta1), "eta2": _plain(self.eta2)}


def _plain(a):
    return list(a) if isinstance(a, tuple) else a


# -- single identities ----------------------------------------------------------------

def _spins_with_bc(table: GibbsTable, bc: BoundaryCondition, x: Site, pot) -> dict:
    sigma = dict(table.spins())
    if not bc.is_open:
        for t in pot.terms_containing(x):
            for s in t.sites:
                if s not in sigma:
                    sigma[s] = bc.spin(s)
    return sigma


def _delta_h_column(pot, table, bc, x, eta_x, eta_ref, eta) -> np.ndarray:
    sigma = _spins_with_bc(table, bc, x, pot)
    within = table.volume if bc.is_open else None
    dh = model.delta_h_x(pot, x, sigma, eta_x, eta_ref, eta, within=within)
    return np.broadcast_to(np.asarray(dh, dtype=float), table.log_weights.shape)


def perturbation_residual(inst: Instance) -> float:
    """Reweight the table at ``eta2`` by ``exp(-dH_x(eta1, eta2))`` and compare with the table at ``eta1``."""
    p, V, bc, x = inst.pot, inst.volume, inst.bc, inst.x
    at2 = exact_gibbs(p, V, bc, {**inst.eta, x: inst.eta2})
    at1 = exact_gibbs(p, V, bc, {**inst.eta, x: inst.eta1})
    dh = _delta_h_column(p, at2, bc, x, inst.eta1, inst.eta2, inst.eta)
    w = at2.probs() * np.exp(-dh)
    return float(np.max(np.abs(w / w.sum() - at1.probs())))


def partition_ratio_residual(inst: Instance) -> float:
    """Relative error of ``mu[eta1](exp dH) = Z[eta2]/Z[eta1] = 1/mu[eta2](exp -dH)``."""
    p, V, bc, x = inst.pot, inst.volume, inst.bc, inst.x
    at1 = exact_gibbs(p, V, bc, {**inst.eta, x: inst.eta1})
    at2 = exact_gibbs(p, V, bc, {**inst.eta, x: inst.eta2})
    ratio = math.exp(at2.log_Z - at1.log_Z)
    fwd = float(np.dot(at1.probs(), np.exp(_delta_h_column(p, at1, bc, x, inst.eta1, inst.eta2, inst.eta))))
    inv = 1.0 / float(np.dot(at2.probs(), np.exp(-_delta_h_column(p, at2, bc, x, inst.eta1, inst.eta2, inst.eta))))
    return max(abs(fwd - ratio), abs(inv - ratio)) / ratio


def single_site_residual(inst: Instance) -> float:
    """Conditional of ``sigma_x`` given all other spins of the table vs the one-site specification."""
    p, V, bc, x = inst.pot, inst.volume, inst.bc, inst.x
    table = exact_gibbs(p, V, bc, inst.eta)
    n = len(V)
    i = V.index(x)
    probs = table.probs()
    cols = table.spins()
    worst = 0.0
    for idx in range(2**n):
        if (idx >> i) & 1:
            continue
        up = idx | (1 << i)
        cond = probs[up] / (probs[up] + probs[idx])
        sigma = {s: int(cols[s][idx]) for s in V if s != x}
        if bc.is_open:
            spec = _open_spec(p, V, x, sigma, inst.eta)
        else:
            for s in r_boundary(Volume.of([x], V.d), 1):
                if s not in sigma:
                    sigma[s] = bc.spin(s)
            spec = one_site_specification(p, x, sigma, inst.eta)[1]
        worst = max(worst, abs(cond - spec))
    return worst


def _open_spec(pot, V, x, sigma, eta) -> float:
    energy = {}
    for s in (-1, 1):
        spins = {**sigma, x: s}
        total = 0.0
        for t in pot.terms_containing(x):
            if all(u in V for u in t.sites):
                codes = {u: pot.encode(eta[u]) for u in pot.reads(t)}
                total += float(pot.term_energy(t, spins, codes))
        energy[s] = total
    return 1.0 / (1.0 + math.exp(energy[1] - energy[-1]))


def rfim_relation_residual(pot, volume: Volume, eta: Mapping, x: Site, eta1: float, eta2: float) -> float:
    """Largest residual of the two-field relation between ``mu(sigma_x=1)`` values, over plus and minus."""
    worst = 0.0
    for bc in (BoundaryCondition.plus(), BoundaryCondition.minus()):
        m1 = exact_gibbs(pot, volume, bc, {**eta, x: eta1}).prob(x, 1)
        m2 = exact_gibbs(pot, volume, bc, {**eta, x: eta2}).prob(x, 1)
        lhs = math.exp(pot.h * (eta1 - eta2)) * (1.0 / m1 - 1.0)
        rhs = math.exp(pot.h * (eta2 - eta1)) * (1.0 / m2 - 1.0)
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs)))
    return worst


# -- random instances ---------------------------------------------------------------------

SHAPES = [(1, 1), (1, 2), (2, 1), (2, 2), (1, 3), (2, 3), (3, 2), (3, 3)]


def random_instance(g: np.random.Generator, kind: str) -> Instance:
    shape = SHAPES[int(g.integers(len(SHAPES)))]
    V = box((0, 0), (shape[0] - 1, shape[1] - 1))
    if kind == "rfim":
        pot = model.build_rfim(float(g.uniform(0.0, 1.5)), float(g.uniform(0.0, 1.5)), 2, (-1.0, 0.0, 1.0))
    elif kind == "random_coupling":
        vals = tuple(sorted({round(float(v), 3) for v in g.uniform(-1.5, 1.5, size=2)} | {0.0}))
        pot = model.build_random_coupling(vals, 2)
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    kinds = ["plus", "minus", "open", "fixed"]
    bk = kinds[int(g.integers(4))]
    if bk == "fixed":
        bc = BoundaryCondition.fixed({s: int(g.choice([-1, 1])) for s in r_boundary(V, 1)})
    else:
        bc = BoundaryCondition(bk)
    alphabet = pot.alphabet
    eta = {s: alphabet[int(g.integers(len(alphabet)))] for s in closure(V, 1)}
    x = V.sites[int(g.integers(len(V)))]
    a, b = g.choice(len(alphabet), size=2, replace=len(alphabet) < 2)
    return Instance(pot, V, bc, eta, x, alphabet[int(a)], alphabet[int(b)])


@dataclass
class BatteryReport:
    n_instances: int
    max_residual: dict
    passed: dict
    worst_instance: dict = field(default_factory=dict)
    tolerance: float = TOLERANCE

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    def to_json(self) -> dict:
        return {"n_instances": self.n_instances, "tolerance": self.tolerance,
                "max_residual": self.max_residual, "passed": self.passed,
                "worst_instance": self.worst_instance, "ok": self.ok}


def identity_battery(
    n_instances: int = 120,
    seed: int = 0,
    tol: float = TOLERANCE,
    kinds: tuple[str, ...] = ("rfim", "random_coupling"),
) -> BatteryReport:
    """Perturbation formula, partition ratio, single-site compatibility and the field relation.

    Instances cycle through ``kinds``; the field relation is checked on the
    random field instances only.
    """
    g = rng(seed, 17)
    checks = {
        "perturbation_formula": perturbation_residual,
        "partition_ratio": partition_ratio_residual,
        "single_site_compatibility": single_site_residual,
    }
    worst = {k: 0.0 for k in checks}
    worst["rfim_field_relation"] = 0.0
    where: dict = {}
    for i in range(n_instances):
        inst = random_instance(g, kinds[i % len(kinds)])
        for name, fn in checks.items():
            r = fn(inst)
            if r > worst[name] or name not in where:
                worst[name] = max(worst[name], r)
                where[name] = inst.describe()
        if inst.pot.tag == "rfim":
            r = rfim_relation_residual(inst.pot, inst.volume, inst.eta, inst.x, -1.0, 1.0)
            if r >= worst["rfim_field_relation"]:
                worst["rfim_field_relation"] = r
                where["rfim_field_relation"] = inst.describe()
    passed = {k: bool(v < tol) for k, v in worst.items()}
    return BatteryReport(n_instances, worst, passed, where, tol)


# -- FKG -------------------------------------------------------------------------------------

def rfim_up_probability(pot, volume: Volume, fields: Mapping, bc_spins: Mapping, x: Site) -> float:
    return exact_gibbs(pot, volume, BoundaryCondition.fixed(bc_spins), fields).prob(x, 1)


# -- Monte Carlo regression battery ---------------------------------------------------------

@dataclass
class McCase:
    description: dict
    exact: float
    mean: float
    std_error: float

    @property
    def ok(self) -> bool:
        return abs(self.mean - self.exact) <= 4.0 * self.std_error


def mc_regression_battery(n_cases: int = 24, seed: int = 0, cfg: McConfig | None = None) -> list[McCase]:
    """MC estimates of ``mu(sigma_x=1)`` against enumeration on small random instances."""
    cfg = cfg or McConfig(sweeps=6000, burn_in=500, chains=4, seed=seed)
    g = rng(seed, 23)
    cases = []
    for i in range(n_cases):
        inst = random_instance(g, "rfim" if i % 2 == 0 else "random_coupling")
        dyn = "heat_bath" if i % 4 < 2 else "metropolis"
        c = McConfig(cfg.sweeps, cfg.burn_in, cfg.chains, cfg.seed + i, dyn, cfg.stride)
        exact = exact_gibbs(inst.pot, inst.volume, inst.bc, inst.eta).prob(inst.x, 1)
        est = mc_expectation(inst.pot, inst.eta, inst.volume, inst.bc, LocalObservable.spin_up(inst.x), c)
        cases.append(McCase({**inst.describe(), "dynamics": dyn}, exact, est.mean, est.std_error))
    return cases


__all__ = [
    "BatteryReport",
    "Instance",
    "McCase",
    "TOLERANCE",
    "identity_battery",
    "mc_regression_battery",
    "partition_ratio_residual",
    "perturbation_residual",
    "random_instance",
    "rfim_relation_residual",
    "rfim_up_probability",
    "single_site_residual",
]
