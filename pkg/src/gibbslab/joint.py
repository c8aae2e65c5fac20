"""Finite-volume joint spin-disorder measures and their conditional structure.

``K(sigma, eta) = IP(eta) mu_{Lambda_N}^{bc}[eta](sigma)``.  Disorder that the
Gibbs measure never reads integrates out, so ``eta`` only ranges over the
relevant support of ``Lambda_N``.

The conditional law of one disorder variable ``eta_x`` given the spins on
``Lambda \\ x`` and the disorder on ``Lambda \\ x`` factors as

    nu(eta_x) * local(eta_x) * outer(eta_x)

where ``local`` is an expectation in the one-site specification at a
reference symbol and ``outer`` averages the inverse of
``mu_N[reference, ...](exp(-dH))`` over the disorder outside ``Lambda``,
weighted by its conditional law given the inner-boundary spins.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from . import model
from .disorder import (
    ENUMERATION_CAP,
    SingleSiteLaw,
    enumerate_indices,
    sample_indices,
)
from .gibbs import (
    BoundaryCondition,
    DisorderBatch,
    batched_marginals,
    compile_factors,
    enumerate_log_weights,
    exact_gibbs,
    marginalize,
    spin_columns,
)
from .lattice import Site, Volume, closure, inner_boundary
from .model import DisorderedPotential


class JointError(ValueError):
    pass


@dataclass
class JointMeasureFinite:
    pot: DisorderedPotential
    volume: Volume
    bc: BoundaryCondition
    law: SingleSiteLaw
    cap: int = ENUMERATION_CAP
    support: Volume = field(init=False)

    def __post_init__(self):
        for a in self.law.alphabet:
            self.pot.check_symbol(a)
        self.support = self.pot.disorder_support(self.volume, self.bc.is_open)

    def describe(self) -> dict:
        return {
            "model": self.pot.describe(),
            "volume": json.loads(self.volume.to_json()),
            "bc": self.bc.to_json(),
            "law": self.law.to_json(),
        }


def _spin_index(volume: Volume, sigma: Mapping[Site, int]) -> int:
    idx = 0
    for i, s in enumerate(volume):
        if s not in sigma:
            raise JointError(f"missing spin value at site {s}")
        v = sigma[s]
        if v not in (-1, 1):
            raise JointError(f"spin at {s} is not +-1")
        if v == 1:
            idx |= 1 << i
    return idx


def joint_prob(K: JointMeasureFinite, sigma: Mapping[Site, int], eta: Mapping[Site, object]) -> float:
    """``IP(eta) * mu[eta](sigma)`` on ``Lambda_N`` with disorder on the relevant support."""
    w = 1.0
    for s in K.support:
        if s not in eta:
            raise JointError(f"missing disorder value at site {s}")
        w *= K.law.prob(eta[s])
    table = exact_gibbs(K.pot, K.volume, K.bc, {s: eta[s] for s in K.support}, K.cap)
    return w * float(np.exp(table.log_weights[_spin_index(K.volume, sigma)] - table.log_Z))


def one_site_specification(
    pot: DisorderedPotential, x: Site, sigma: Mapping[Site, int], eta: Mapping[Site, object]
) -> dict[int, float]:
    """``mu_x^{sigma_dx}[eta](sigma_x)`` for both spin values."""
    x = tuple(x)
    vol = Volume(len(x), (x,))
    bc = BoundaryCondition.fixed({s: sigma[s] for s in closure(vol, 1) if s != x and s in sigma})
    table = exact_gibbs(pot, vol, bc, eta)
    p = table.probs()
    return {-1: float(p[0]), 1: float(p[1])}


def cond_spin_given_all(
    K: JointMeasureFinite, x: Site, sigma: Mapping[Site, int], eta: Mapping[Site, object]
) -> dict[int, float]:
    """Conditional law of ``sigma_x`` given everything else on ``Lambda``.

    ``Lambda`` is read off the keys of ``sigma`` (plus ``x``); it must contain
    the closure of ``x`` and lie in ``Lambda_N``.
    """
    x = tuple(x)
    lam = Volume.of(list(sigma.keys()) + [x], len(x))
    _check_region(K, x, lam)
    return one_site_specification(K.pot, x, sigma, eta)


def _check_region(K: JointMeasureFinite, x: Site, lam: Volume) -> None:
    if x not in lam:
        raise JointError(f"site {x} not in the conditioning volume")
    if not closure(Volume(lam.d, (x,)), 1).issubset(lam):
        raise JointError(f"conditioning volume must contain the closure of {x}")
    if not lam.issubset(K.volume):
        raise JointError("conditioning volume must lie inside Lambda_N")


# -- geometry and batches for the conditional machinery ----------------------

@dataclass
class _Setup:
    x: Site
    lam: Volume
    rest: Volume
    inner: Volume
    outer: Volume
    edge: Volume
    dh: Volume
    nbrs: Volume
    symbols: tuple


def _setup(K: JointMeasureFinite, x: Site, lam: Volume) -> _Setup:
    x = tuple(x)
    _check_region(K, x, lam)
    xv = Volume(lam.d, (x,))
    rest = lam - xv
    dh_sites = set()
    for term in K.pot.terms_containing(x):
        dh_sites.update(term.sites)
    dh = Volume.of(dh_sites, lam.d)
    return _Setup(
        x=x,
        lam=lam,
        rest=rest,
        inner=(K.support & lam) - xv,
        outer=K.support - lam,
        edge=inner_boundary(lam, 1),
        dh=dh,
        nbrs=dh - xv,
        symbols=K.law.alphabet,
    )


def subindex(src: Volume, dst: Sequence[Site]) -> np.ndarray:
    """For each configuration index over ``src``, the induced index over ``dst``."""
    n = len(src)
    idx = np.arange(2**n, dtype=np.int64)
    out = np.zeros(2**n, dtype=np.int64)
    for j, s in enumerate(sorted(tuple(s) for s in dst)):
        out |= ((idx >> src.index(s)) & 1) << j
    return out


def _tilde_family(K, setup, mode, n_samples, seed):
    """Disorder configurations outside ``Lambda`` with their prior weights."""
    n_out = len(setup.outer)
    A = len(setup.symbols)
    total = A**n_out
    if mode == "auto":
        mode = "enumerate" if total <= min(K.cap, 2**16) else "sample"
    if mode == "enumerate":
        idx = enumerate_indices(A, n_out, K.cap)
        probs = np.asarray(K.law.probs)
        prior = np.prod(probs[idx], axis=1) if n_out else np.ones(1)
        return idx, prior, "exact enumeration"
    if mode == "sample":
        idx = sample_indices(K.law, seed, n_samples, n_out, 1)
        return idx, np.full(n_samples, 1.0 / n_samples), f"importance sampling from IP (n={n_samples}, seed={seed})"
    raise JointError(f"unknown outer-disorder mode {mode!r}")


def _batch(K, setup, inner_idx, tilde_idx, x_symbol) -> DisorderBatch:
    """All (inner, outer) combinations, inner-major, with ``eta_x = x_symbol``."""
    n_in, n_t = len(inner_idx), len(tilde_idx)
    symbols = list(setup.symbols) + [x_symbol]
    sites = setup.inner | setup.outer | Volume(setup.lam.d, (setup.x,))
    cols = np.empty((n_in, n_t, len(sites)), dtype=np.int64)
    for j, s in enumerate(setup.inner):
        cols[:, :, sites.index(s)] = inner_idx[:, j][:, None]
    for j, s in enumerate(setup.outer):
        cols[:, :, sites.index(s)] = tilde_idx[:, j][None, :]
    cols[:, :, sites.index(setup.x)] = len(symbols) - 1
    return DisorderBatch.from_indices(K.pot, sites, cols.reshape(n_in * n_t, len(sites)), symbols)


def _split_terms(K, setup):
    """Disorder read inside/outside ``Lambda`` and the sites of ``Lambda`` linked to the outside."""
    outside = K.volume - setup.lam
    in_reads, out_reads, link = set(), set(), set()
    for term in K.pot.terms_touching(K.volume):
        if K.bc.is_open and not all(s in K.volume for s in term.sites):
            continue
        if any(s in outside for s in term.sites):
            out_reads.update(K.pot.reads(term))
            link.update(s for s in term.sites if s in setup.lam)
        else:
            in_reads.update(K.pot.reads(term))
    return outside, in_reads, out_reads, Volume.of(link, setup.lam.d) if link else Volume(setup.lam.d)


def _split_marginals(K, setup, inner_idx, tilde_idx, x_symbol, sites):
    """Marginals on ``sites`` from ``w_in(sigma_Lambda) * Z_out(sigma_link)``.

    Valid when no term reads disorder from both sides of ``Lambda``; returns
    None otherwise (or when either side is too large to enumerate).
    """
    outside, in_reads, out_reads, link = _split_terms(K, setup)
    inside_disorder = set(setup.inner) | {setup.x}
    if not len(outside) or out_reads & inside_disorder or in_reads & set(setup.outer):
        return None
    if len(outside) > 14 or len(setup.lam) > 14:
        return None
    symbols = list(setup.symbols) + [x_symbol]
    out_batch = DisorderBatch.from_indices(K.pot, setup.outer, tilde_idx, symbols)
    log_zout = np.empty((2 ** len(link), len(tilde_idx)))
    for state in range(2 ** len(link)):
        pinned = {s: 1 if (state >> j) & 1 else -1 for j, s in enumerate(link)}
        f = compile_factors(K.pot, outside, K.bc, out_batch, pinned=pinned)
        log_zout[state] = logsumexp(enumerate_log_weights(f), axis=1)
    in_sites = setup.inner | Volume(setup.lam.d, (setup.x,))
    cols = np.empty((len(inner_idx), len(in_sites)), dtype=np.int64)
    for j, s in enumerate(setup.inner):
        cols[:, in_sites.index(s)] = inner_idx[:, j]
    cols[:, in_sites.index(setup.x)] = len(symbols) - 1
    in_batch = DisorderBatch.from_indices(K.pot, in_sites, cols, symbols)
    lw_in = enumerate_log_weights(compile_factors(K.pot, setup.lam, K.bc, in_batch, skip=outside))
    l_out = log_zout[subindex(setup.lam, link)].T
    n_in, n_t = len(inner_idx), len(tilde_idx)
    out = np.empty((n_in, n_t, 2 ** len(sites)))
    step = max(1, 2**22 // (n_t * lw_in.shape[1]))
    for r0 in range(0, n_in, step):
        lw = lw_in[r0 : r0 + step, None, :] + l_out[None, :, :]
        lw = lw - logsumexp(lw, axis=2, keepdims=True)
        p = np.exp(lw).reshape(-1, lw.shape[2])
        out[r0 : r0 + step] = marginalize(p, setup.lam, sites).reshape(lw.shape[0], n_t, -1)
    return out.reshape(n_in * n_t, -1)


def _lam_marginals(K, setup, inner_idx, tilde_idx, x_symbol, sites):
    """Gibbs marginals on ``sites`` for every (inner, outer) disorder pair, inner-major."""
    sites = list(sites)
    p = _split_marginals(K, setup, inner_idx, tilde_idx, x_symbol, sites)
    if p is None:
        batch = _batch(K, setup, inner_idx, tilde_idx, x_symbol)
        p, _ = batched_marginals(K.pot, K.volume, K.bc, batch, sites)
    return p


def _neighbour_codes(K, setup, inner_idx) -> dict:
    """Encoded disorder of the sites read by terms at ``x``, shape ``(N_in, 1, k)``."""
    table = np.stack([K.pot.encode(a) for a in setup.symbols])
    codes = {}
    for j, s in enumerate(setup.inner):
        codes[s] = table[inner_idx[:, j]][:, None, :]
    return codes


def _dh_spins(setup) -> dict:
    cols = spin_columns(len(setup.dh)).astype(float)
    return {s: cols[:, i] for i, s in enumerate(setup.dh)}


def delta_h_table(K, setup, inner_idx, eta_x, eta_ref) -> np.ndarray:
    """``dH_x(eta_x, eta_ref)`` for each inner disorder row and each state of ``dh``."""
    sigma = _dh_spins(setup)
    codes = _neighbour_codes(K, setup, inner_idx)
    dh = model.delta_h_x(K.pot, setup.x, sigma, eta_x, eta_ref, codes)
    return np.broadcast_to(dh, (len(inner_idx), 2 ** len(setup.dh))).astype(float)


def _local_energy(K, setup, inner_idx, eta_x) -> np.ndarray:
    """``sum_{A contains x} Phi_A`` for each inner row and each state of ``dh``."""
    sigma = _dh_spins(setup)
    codes = _neighbour_codes(K, setup, inner_idx)
    codes[setup.x] = K.pot.encode(eta_x)
    total = np.zeros((len(inner_idx), 2 ** len(setup.dh)))
    for term in K.pot.terms_containing(setup.x):
        total = total + K.pot.term_energy(term, sigma, codes)
    return total


def _local_factor(K, setup, inner_idx, values, eta_ref) -> np.ndarray:
    """``int mu_x^{sigma_dx}[eta_ref](d s) exp(-dH_x(v, eta_ref))`` per (row, neighbour state, v)."""
    e0 = _local_energy(K, setup, inner_idx, eta_ref)
    to_nb = subindex(setup.dh, setup.nbrs)
    onehot = np.zeros((2 ** len(setup.dh), 2 ** len(setup.nbrs)))
    onehot[np.arange(len(to_nb)), to_nb] = 1.0
    # conditional of sigma_x given the neighbours, at the reference symbol
    w = np.exp(-(e0 - e0.max(axis=1, keepdims=True)))
    p_loc = w / (w @ onehot)[:, to_nb]
    out = np.empty((len(inner_idx), 2 ** len(setup.nbrs), len(values)))
    for k, v in enumerate(values):
        out[:, :, k] = (p_loc * np.exp(-delta_h_table(K, setup, inner_idx, v, eta_ref))) @ onehot
    return out


@dataclass
class OuterAverage:
    """Per inner row: boundary-spin law per outer config and inverse-expectation terms."""

    prior: np.ndarray
    p_edge: np.ndarray
    inv_expect: np.ndarray
    method: str


def _outer_average(K, setup, inner_idx, values, eta_ref, mode, n_samples, seed) -> OuterAverage:
    tilde_idx, prior, method = _tilde_family(K, setup, mode, n_samples, seed)
    U = setup.edge | setup.dh
    p = _lam_marginals(K, setup, inner_idx, tilde_idx, eta_ref, U)
    n_in, n_t = len(inner_idx), len(tilde_idx)
    p_edge = marginalize(p, U, list(setup.edge)).reshape(n_in, n_t, -1)
    p_dh = marginalize(p, U, list(setup.dh)).reshape(n_in, n_t, -1)
    inv = np.empty((n_in, n_t, len(values)))
    for k, v in enumerate(values):
        dh = delta_h_table(K, setup, inner_idx, v, eta_ref)
        inv[:, :, k] = 1.0 / np.einsum("rts,rs->rt", p_dh, np.exp(-dh))
    return OuterAverage(prior, p_edge, inv, method)


def _outer_factor(avg: OuterAverage) -> np.ndarray:
    """``(N_in, edge states, values)`` conditional averages of the inverse expectations."""
    w = avg.prior[None, :, None] * avg.p_edge
    num = np.einsum("rte,rtk->rek", w, avg.inv_expect)
    return num / w.sum(axis=1)[:, :, None]


@dataclass
class Lemma1Table:
    """Conditional law of ``eta_x`` for every conditioning on ``Lambda \\ x``.

    ``probs[r, s, k]``: inner disorder row ``r`` (symbol indices over
    ``inner``), spin configuration ``s`` over ``rest`` (lattice-order bits),
    symbol ``k`` of the law's alphabet.
    """

    x: Site
    rest: Volume
    inner: Volume
    inner_idx: np.ndarray
    symbols: tuple
    probs: np.ndarray
    method: str


def lemma1_table(
    K: JointMeasureFinite,
    x: Site,
    lam: Volume,
    eta_ref=None,
    inner_idx: np.ndarray | None = None,
    mode: str = "auto",
    n_samples: int = 4096,
    seed: int = 0,
) -> Lemma1Table:
    setup = _setup(K, x, lam)
    if len(setup.rest) > 16:
        raise JointError("conditioning region too large to tabulate all spin configurations")
    values = setup.symbols
    eta_ref = values[0] if eta_ref is None else eta_ref
    if inner_idx is None:
        inner_idx = enumerate_indices(len(values), len(setup.inner), K.cap)
    local = _local_factor(K, setup, inner_idx, values, eta_ref)
    avg = _outer_average(K, setup, inner_idx, values, eta_ref, mode, n_samples, seed)
    outer = _outer_factor(avg)
    to_nb = subindex(setup.rest, setup.nbrs)
    to_edge = subindex(setup.rest, setup.edge)
    nu = np.asarray(K.law.probs)
    unnorm = nu[None, None, :] * local[:, to_nb, :] * outer[:, to_edge, :]
    probs = unnorm / unnorm.sum(axis=2, keepdims=True)
    return Lemma1Table(setup.x, setup.rest, setup.inner, inner_idx, values, probs, avg.method)


def _inner_row(K, setup, eta) -> np.ndarray:
    row = []
    for s in setup.inner:
        if s not in eta:
            raise JointError(f"missing disorder value at site {s}")
        try:
            row.append(setup.symbols.index(eta[s]))
        except ValueError:
            raise JointError(f"disorder symbol {eta[s]!r} at {s} not in the law's alphabet") from None
    return np.array([row], dtype=np.int64).reshape(1, len(setup.inner))


def cond_disorder_lemma1(
    K: JointMeasureFinite,
    x: Site,
    sigma: Mapping[Site, int],
    eta: Mapping[Site, object],
    eta_ref=None,
    mode: str = "auto",
    n_samples: int = 4096,
    seed: int = 0,
) -> dict:
    """Conditional law of ``eta_x`` given ``sigma`` and ``eta`` on ``Lambda \\ x``.

    ``Lambda`` is the key set of ``sigma`` plus ``x``.
    """
    x = tuple(x)
    lam = Volume.of(list(sigma.keys()) + [x], len(x))
    setup = _setup(K, x, lam)
    values = setup.symbols
    eta_ref = values[0] if eta_ref is None else eta_ref
    inner_idx = _inner_row(K, setup, eta)
    local = _local_factor(K, setup, inner_idx, values, eta_ref)[0]
    avg = _outer_average(K, setup, inner_idx, values, eta_ref, mode, n_samples, seed)
    outer = _outer_factor(avg)[0]
    nb = _spin_index(Volume.of(setup.nbrs, lam.d), sigma)
    edge = _spin_index(setup.edge, sigma)
    unnorm = np.asarray(K.law.probs) * local[nb] * outer[edge]
    unnorm = unnorm / unnorm.sum()
    return {v: float(p) for v, p in zip(values, unnorm)}


# -- q quantities -------------------------------------------------------------

def q_local(
    pot: DisorderedPotential,
    law: SingleSiteLaw,
    x: Site,
    eta1,
    eta2,
    sigma: Mapping[Site, int],
    eta: Mapping[Site, object],
) -> float:
    """``nu(eta1)/nu(eta2) * int mu_x^{sigma_dx}[eta2](ds) exp(-dH_x(eta1, eta2))``."""
    x = tuple(x)
    p2 = law.prob(eta2)
    if p2 == 0:
        raise JointError("conditioning on null symbol")
    pot.check_symbol(eta1)
    spec = one_site_specification(pot, x, sigma, {**eta, x: eta2})
    total = 0.0
    for s in (-1, 1):
        dh = model.delta_h_x(pot, x, {**sigma, x: s}, eta1, eta2, eta)
        total += spec[s] * math.exp(-float(dh))
    return law.prob(eta1) / p2 * total


def q_local_table(
    K: JointMeasureFinite, x: Site, lam: Volume, eta1, eta2, inner_idx: np.ndarray | None = None
) -> np.ndarray:
    """``q_local`` per inner disorder row and per neighbour spin state of ``x``."""
    setup = _setup(K, x, lam)
    p2 = K.law.prob(eta2)
    if p2 == 0:
        raise JointError("conditioning on null symbol")
    if inner_idx is None:
        inner_idx = enumerate_indices(len(setup.symbols), len(setup.inner), K.cap)
    local = _local_factor(K, setup, inner_idx, (eta1,), eta2)[:, :, 0]
    return K.law.prob(eta1) / p2 * local


def _forward_expectation(K, setup, inner_idx, tilde_idx, eta1, eta2) -> np.ndarray:
    """``mu_N[eta1, inner, tilde](exp(+dH_x(eta1, eta2)))`` as ``(N_in, N_t)``."""
    p = _lam_marginals(K, setup, inner_idx, tilde_idx, eta1, setup.dh)
    p = p.reshape(len(inner_idx), len(tilde_idx), -1)
    dh = delta_h_table(K, setup, inner_idx, eta1, eta2)
    return np.einsum("rts,rs->rt", p, np.exp(dh))


def _edge_law(K, setup, inner_idx, tilde_idx, eta2) -> np.ndarray:
    p = _lam_marginals(K, setup, inner_idx, tilde_idx, eta2, setup.edge)
    return p.reshape(len(inner_idx), len(tilde_idx), -1)


def q_nonloc_table(
    K: JointMeasureFinite,
    x: Site,
    lam: Volume,
    eta1,
    eta2,
    inner_idx: np.ndarray | None = None,
    mode: str = "auto",
    n_samples: int = 4096,
    seed: int = 0,
) -> tuple[np.ndarray, str]:
    """``q_nonloc`` for every inner disorder row and every inner-boundary spin state."""
    setup = _setup(K, x, lam)
    if inner_idx is None:
        inner_idx = enumerate_indices(len(setup.symbols), len(setup.inner), K.cap)
    tilde_idx, prior, method = _tilde_family(K, setup, mode, n_samples, seed)
    fwd = _forward_expectation(K, setup, inner_idx, tilde_idx, eta1, eta2)
    w = prior[None, :, None] * _edge_law(K, setup, inner_idx, tilde_idx, eta2)
    q = np.einsum("rte,rt->re", w, fwd) / w.sum(axis=1)
    return q, method


def q_nonloc(
    K: JointMeasureFinite,
    lam: Volume,
    x: Site,
    eta1,
    eta2,
    eta: Mapping[Site, object],
    sigma_edge: Mapping[Site, int],
    mode: str = "auto",
    n_samples: int = 4096,
    seed: int = 0,
) -> float:
    """Average of ``mu_N[eta1, ...](exp(dH_x))`` over the outer disorder given the edge spins."""
    setup = _setup(K, x, lam)
    row = _inner_row(K, setup, eta)
    q, _ = q_nonloc_table(K, x, lam, eta1, eta2, row, mode, n_samples, seed)
    return float(q[0, _spin_index(setup.edge, sigma_edge)])


def q_upper_table(
    K: JointMeasureFinite,
    x: Site,
    lam: Volume,
    eta1,
    eta2,
    inner_idx: np.ndarray | None = None,
    mode: str = "auto",
    n_samples: int = 4096,
    seed: int = 0,
    constants: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, str]:
    """Max over outer disorder of the forward expectation, per inner row.

    Returns ``(values, argmax_rows, outer_configs, method)``.  Ties go to the
    first configuration in enumeration order.  When sampling, the constant
    configurations are prepended to the sampled family.
    """
    setup = _setup(K, x, lam)
    if inner_idx is None:
        inner_idx = enumerate_indices(len(setup.symbols), len(setup.inner), K.cap)
    tilde_idx, _, method = _tilde_family(K, setup, mode, n_samples, seed)
    if method != "exact enumeration" and constants:
        consts = np.repeat(np.arange(len(setup.symbols))[:, None], len(setup.outer), axis=1)
        tilde_idx = np.concatenate([consts, tilde_idx])
        method += " plus constant configurations"
    fwd = _forward_expectation(K, setup, inner_idx, tilde_idx, eta1, eta2)
    arg = np.argmax(fwd, axis=1)
    return fwd[np.arange(len(inner_idx)), arg], arg, tilde_idx, method


def q_upper(
    K: JointMeasureFinite,
    lam: Volume,
    x: Site,
    eta1,
    eta2,
    eta: Mapping[Site, object],
    mode: str = "auto",
    n_samples: int = 4096,
    seed: int = 0,
) -> tuple[float, dict]:
    """``max`` over outer disorder of ``mu_N[eta1, eta_{Lambda\\x}, tilde](exp(dH_x))``.

    Returns the value and the maximizing outer configuration.
    """
    setup = _setup(K, x, lam)
    row = _inner_row(K, setup, eta)
    vals, arg, tilde_idx, _ = q_upper_table(K, x, lam, eta1, eta2, row, mode, n_samples, seed)
    best = {s: setup.symbols[i] for s, i in zip(setup.outer, tilde_idx[arg[0]])}
    return float(vals[0]), best


@dataclass
class QReport:
    q_local: float
    q_nonloc: float
    q_upper: float | None
    x: Site
    eta1: object
    eta2: object
    conditioning: dict
    method: str
    measure: dict
    reference_in_support: bool = True

    def to_json(self) -> str:
        d = asdict(self)
        d["x"] = list(self.x)
        return json.dumps(d, default=_default, sort_keys=True)


def _default(o):
    if isinstance(o, tuple):
        return list(o)
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


def q_report(
    K: JointMeasureFinite,
    lam: Volume,
    x: Site,
    eta1,
    eta2,
    sigma: Mapping[Site, int],
    eta: Mapping[Site, object],
    with_upper: bool = True,
    mode: str = "auto",
    n_samples: int = 4096,
    seed: int = 0,
) -> QReport:
    """All three q quantities for one conditioning, with provenance."""
    x = tuple(x)
    setup = _setup(K, x, lam)
    ql = q_local(K.pot, K.law, x, eta1, eta2, sigma, eta)
    row = _inner_row(K, setup, eta)
    q, method = q_nonloc_table(K, x, lam, eta1, eta2, row, mode, n_samples, seed)
    qn = float(q[0, _spin_index(setup.edge, sigma)])
    qu = None
    if with_upper:
        qu = q_upper(K, lam, x, eta1, eta2, eta, mode, n_samples, seed)[0]
    cond = {
        "lambda": json.loads(lam.to_json()),
        "sigma": [[list(s), sigma[s]] for s in setup.rest if s in sigma],
        "eta": [[list(s), eta[s]] for s in setup.inner],
        "seed": seed,
    }
    return QReport(ql, qn, qu, x, eta1, eta2, cond, method, K.describe(), K.law.prob(eta2) > 0)


__all__ = [
    "JointError",
    "JointMeasureFinite",
    "Lemma1Table",
    "QReport",
    "cond_disorder_lemma1",
    "cond_spin_given_all",
    "delta_h_table",
    "joint_prob",
    "lemma1_table",
    "one_site_specification",
    "q_local",
    "q_local_table",
    "q_nonloc",
    "q_nonloc_table",
    "q_report",
    "q_upper",
    "q_upper_table",
    "subindex",
]
