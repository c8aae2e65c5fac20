"""Single-spin-flip Monte Carlo for finite-volume Gibbs expectations.

Sites are updated in lexicographic order, one full sweep at a time, with
heat-bath (Glauber) or Metropolis acceptance.  Each site update leaves the
Gibbs measure invariant, so the sweep does too, even though the sweep as a
whole is not reversible.  Chain ``c`` draws its uniforms from the Philox
stream ``(seed, c)``, so a run is bit-reproducible from its seed.

Error bars come from batch means; convergence is judged by the split-chain
potential scale reduction.  After every sweep a global spin flip is proposed
with heat-bath acceptance.  Under a fixed boundary it is essentially always
rejected; under an open boundary it carries the chain between the ordered
phases, which local moves cannot do at strong coupling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numba
import numpy as np

from . import model
from .disorder import rng
from .gibbs import BoundaryCondition, DisorderBatch, compile_factors, spin_columns
from .lattice import Site, Volume
from .model import DisorderedPotential

RHAT_LIMIT = 1.1


class McError(ValueError):
    pass


@dataclass(frozen=True)
class McConfig:
    sweeps: int = 20000
    burn_in: int = 2000
    chains: int = 4
    seed: int = 0
    dynamics: str = "heat_bath"
    stride: int = 1

    def __post_init__(self):
        if not isinstance(self.sweeps, int) or self.sweeps < 1:
            raise McError("sweeps must be a positive integer")
        if self.burn_in < 0 or self.sweeps <= self.burn_in:
            raise McError("need sweeps > burn_in >= 0")
        if self.chains < 2:
            raise McError("at least two chains are needed for the split-chain diagnostic")
        if self.dynamics not in ("heat_bath", "metropolis"):
            raise McError(f"unknown dynamics {self.dynamics!r}")
        if self.stride < 1:
            raise McError("stride must be >= 1")
        if (self.sweeps - self.burn_in) // self.stride < 4:
            raise McError("fewer than four measurements per chain")

    @property
    def samples_per_chain(self) -> int:
        return (self.sweeps - self.burn_in) // self.stride


@dataclass
class McEstimate:
    mean: float
    std_error: float
    n_effective: float
    rhat: float
    converged: bool
    n_samples: int
    chain_means: list[float] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "mean": self.mean,
            "std_error": self.std_error,
            "n_effective": self.n_effective,
            "rhat": self.rhat,
            "converged": self.converged,
            "n_samples": self.n_samples,
        }


@dataclass(frozen=True)
class LocalObservable:
    """A function of the spins on a few sites; ``fn`` gets a dict of +-1 arrays."""

    sites: tuple[Site, ...]
    fn: Callable[[dict], np.ndarray]
    label: str = "observable"

    @classmethod
    def spin_up(cls, x: Site) -> LocalObservable:
        return cls((tuple(x),), lambda s, x=tuple(x): (s[x] == 1).astype(float), f"1{{s{tuple(x)}=+1}}")

    @classmethod
    def spin(cls, x: Site) -> LocalObservable:
        return cls((tuple(x),), lambda s, x=tuple(x): s[x].astype(float), f"s{tuple(x)}")

    @classmethod
    def agree(cls, x: Site, y: Site) -> LocalObservable:
        x, y = tuple(x), tuple(y)
        return cls((x, y), lambda s: (s[x] == s[y]).astype(float), f"1{{s{x}=s{y}}}")


# -- compiled system --------------------------------------------------------------

@dataclass
class SpinSystem:
    """``-H`` of one disorder configuration as per-site tables and an adjacency list."""

    volume: Volume
    site: np.ndarray  # (n, 2)
    ptr: np.ndarray  # (n + 1,)
    nbr: np.ndarray  # neighbour index per adjacency entry
    table: np.ndarray  # (entries, 2, 2): [own spin, neighbour spin]

    @classmethod
    def build(cls, pot: DisorderedPotential, volume: Volume, bc: BoundaryCondition, eta: Mapping) -> SpinSystem:
        f = compile_factors(pot, volume, bc, DisorderBatch.single(pot, eta))
        n = len(volume)
        entries: list[list[tuple[int, np.ndarray]]] = [[] for _ in range(n)]
        for (i, j), t in zip(f.bonds, f.bond[0]):
            entries[i].append((int(j), t))
            entries[j].append((int(i), t.T))
        ptr = np.zeros(n + 1, dtype=np.int64)
        nbr, tables = [], []
        for i, row in enumerate(entries):
            ptr[i + 1] = ptr[i] + len(row)
            for j, t in row:
                nbr.append(j)
                tables.append(t)
        table = np.stack(tables) if tables else np.zeros((0, 2, 2))
        return cls(volume, np.ascontiguousarray(f.site[0]), ptr, np.asarray(nbr, dtype=np.int64), table)


@numba.njit(cache=True)
def _log_ratio(state, i, site, ptr, nbr, table):
    """``log w(s_i=+1) - log w(s_i=-1)`` given the other spins (0/1 encoded)."""
    r = site[i, 1] - site[i, 0]
    for k in range(ptr[i], ptr[i + 1]):
        t = state[nbr[k]]
        r += table[k, 1, t] - table[k, 0, t]
    return r


@numba.njit(cache=True)
def _sweep(state, uniforms, site, ptr, nbr, table, metropolis):
    n = state.shape[0]
    for i in range(n):
        r = _log_ratio(state, i, site, ptr, nbr, table)
        u = uniforms[i]
        if metropolis:
            # log acceptance of flipping to the other value
            delta = r if state[i] == 0 else -r
            if delta >= 0.0 or u < math.exp(delta):
                state[i] = 1 - state[i]
        else:
            if r >= 0.0:
                p_up = 1.0 / (1.0 + math.exp(-r))
            else:
                e = math.exp(r)
                p_up = e / (1.0 + e)
            state[i] = 1 if u < p_up else 0


@numba.njit(cache=True)
def _global_flip(state, u, site, ptr, nbr, table):
    """Heat-bath step for flipping every spin at once.

    The proposal is its own inverse, so detailed balance holds for any
    boundary; under an open boundary it is the move that crosses between
    the two ordered phases, which single-spin dynamics almost never does.
    Metropolis acceptance would flip a free system back after every
    Metropolis sweep had flipped it, freezing the chain.
    """
    n = state.shape[0]
    delta = 0.0
    for i in range(n):
        s = state[i]
        delta += site[i, 1 - s] - site[i, s]
        for k in range(ptr[i], ptr[i + 1]):
            t = state[nbr[k]]
            # each bond is listed from both ends
            delta += 0.5 * (table[k, 1 - s, 1 - t] - table[k, s, t])
    if delta >= 0.0:
        accept = 1.0 / (1.0 + math.exp(-delta))
    else:
        e = math.exp(delta)
        accept = e / (1.0 + e)
    if u < accept:
        for i in range(n):
            state[i] = 1 - state[i]


def _initial_state(system: SpinSystem, bc: BoundaryCondition, init: str, g: np.random.Generator) -> np.ndarray:
    n = len(system.volume)
    if init == "bc" and bc.kind in ("plus", "minus"):
        init = bc.kind
    if init == "plus":
        return np.ones(n, dtype=np.int64)
    if init == "minus":
        return np.zeros(n, dtype=np.int64)
    if init in ("random", "bc"):
        return (g.random(n) < 0.5).astype(np.int64)
    raise McError(f"unknown initial state {init!r}")


def run_chain(system: SpinSystem, bc: BoundaryCondition, cfg: McConfig, chain: int, watch: Sequence[int],
              init: str = "bc") -> np.ndarray:
    """Spins (+-1) of the ``watch`` sites at every measurement of one chain."""
    g = rng(cfg.seed, chain)
    state = _initial_state(system, bc, init, g)
    n = len(system.volume)
    watch = np.asarray(watch, dtype=np.int64)
    out = np.empty((cfg.samples_per_chain, len(watch)), dtype=np.int8)
    metropolis = cfg.dynamics == "metropolis"
    k = 0
    for sweep in range(cfg.sweeps):
        u = g.random(n + 1)
        _sweep(state, u[:n], system.site, system.ptr, system.nbr, system.table, metropolis)
        _global_flip(state, u[n], system.site, system.ptr, system.nbr, system.table)
        if sweep >= cfg.burn_in and (sweep - cfg.burn_in) % cfg.stride == cfg.stride - 1:
            if k < len(out):
                out[k] = 2 * state[watch] - 1
                k += 1
    return out


def _series(system: SpinSystem, bc, f: LocalObservable, cfg: McConfig, init: str) -> np.ndarray:
    idx = [system.volume.index(s) for s in f.sites]
    rows = []
    for c in range(cfg.chains):
        spins = run_chain(system, bc, cfg, c, idx, init)
        cols = {s: spins[:, j] for j, s in enumerate(f.sites)}
        rows.append(np.asarray(f.fn(cols), dtype=float))
    return np.stack(rows)


def observable_range(f: LocalObservable) -> float:
    """``max f - min f`` over all spin states of the observable's sites."""
    cols = spin_columns(len(f.sites)).astype(np.int8)
    vals = np.asarray(f.fn({s: cols[:, j] for j, s in enumerate(f.sites)}), dtype=float)
    return float(vals.max() - vals.min())


# -- statistics ----------------------------------------------------------------------

def split_rhat(series: np.ndarray) -> float:
    """Split-chain potential scale reduction of a ``(chains, n)`` array."""
    half = series.shape[1] // 2
    parts = np.concatenate([series[:, :half], series[:, half:2 * half]])
    m, n = parts.shape
    means = parts.mean(axis=1)
    W = parts.var(axis=1, ddof=1).mean()
    B = n * means.var(ddof=1)
    if W == 0.0:
        return 1.0 if B == 0.0 else math.inf
    var_plus = (n - 1) / n * W + B / n
    return float(math.sqrt(var_plus / W))


def integrated_autocorr_time(series: np.ndarray) -> float:
    """Integrated autocorrelation time of a ``(chains, n)`` array.

    Chain-averaged autocovariance via FFT, summed over pairs of lags until
    the first nonpositive pair sum.
    """
    chains, n = series.shape
    x = series - series.mean(axis=1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size, axis=1)
    acov = np.fft.irfft(f * np.conj(f), size, axis=1)[:, :n].mean(axis=0) / n
    if acov[0] <= 0.0:
        return 1.0
    rho = acov / acov[0]
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0.0:
            break
        tau += 2.0 * pair
    return max(1.0, tau)


def batch_means(series: np.ndarray, resolution: float = 0.0) -> McEstimate:
    """Mean and error of a ``(chains, n)`` array.

    Batches are at least ``sqrt(n)`` long and at least five autocorrelation
    times, with at least two batches per chain.  The reported error is the
    larger of the batch-means error and the spread of the chain means, so
    chains stuck in different modes cannot hide behind short batches.  It is
    also at least ``resolution / N``: a run that never sees a rare state
    cannot resolve its probability below one sample's worth.
    """
    chains, n = series.shape
    tau = integrated_autocorr_time(series)
    b = max(1, int(math.isqrt(n)), int(math.ceil(5.0 * tau)))
    b = min(b, max(1, n // 2))
    nb = n // b
    batches = series[:, : nb * b].reshape(chains, nb, b).mean(axis=2).ravel()
    mean = float(series.mean())
    total = chains * n
    se = float(batches.std(ddof=1) / math.sqrt(len(batches))) if len(batches) > 1 else 0.0
    chain_means = series.mean(axis=1)
    se = max(se, float(chain_means.std(ddof=1) / math.sqrt(chains)), resolution / total)
    var = float(series.var())
    n_eff = float(total) if se == 0.0 else min(float(total), var / se**2)
    rhat = split_rhat(series)
    return McEstimate(mean, se, n_eff, rhat, rhat <= RHAT_LIMIT, total, [float(v) for v in chain_means])


# -- public operations ---------------------------------------------------------------

def mc_expectation(
    pot: DisorderedPotential,
    eta: Mapping,
    volume: Volume,
    bc: BoundaryCondition,
    f: LocalObservable,
    cfg: McConfig,
    init: str = "bc",
) -> McEstimate:
    """Estimate ``mu_volume^bc[eta](f)``; identical inputs give identical output."""
    for s in f.sites:
        if s not in volume:
            raise McError(f"observable site {s} not in volume")
    system = SpinSystem.build(pot, volume, bc, eta)
    return batch_means(_series(system, bc, f, cfg, init), observable_range(f))


def mc_gap_probe(
    pot: DisorderedPotential,
    volume: Volume,
    f: LocalObservable,
    first: tuple[Mapping, BoundaryCondition],
    second: tuple[Mapping, BoundaryCondition],
    cfg: McConfig,
) -> McEstimate:
    """``E_first(f) - E_second(f)`` with common random numbers.

    Both runs use the same uniforms, chain by chain, so the paired
    difference series usually has a much smaller variance than either run.
    """
    a = _series(SpinSystem.build(pot, volume, first[1], first[0]), first[1], f, cfg, "bc")
    b = _series(SpinSystem.build(pot, volume, second[1], second[0]), second[1], f, cfg, "bc")
    return batch_means(a - b, observable_range(f))


def mc_badness_gap(
    pot: DisorderedPotential,
    eta_plus: Mapping,
    eta_minus: Mapping,
    x: Site,
    eta1,
    eta2,
    volume: Volume,
    bc: BoundaryCondition,
    cfg: McConfig,
) -> tuple[float, float]:
    """``1/E_plus[eta2](exp dH(eta2,eta1)) - E_minus[eta1](exp dH(eta1,eta2))`` and its delta-method error.

    ``eta_plus`` and ``eta_minus`` are full disorder configurations of the
    volume (value at ``x`` is overwritten).
    """
    x = tuple(x)
    near = sorted({s for t in pot.terms_containing(x) for s in t.sites if s in volume})

    def est(eta, a, b):
        eta = {**eta, x: a}
        codes = {s: pot.encode(v) for s, v in eta.items()}

        def fn(cols):
            sigma = dict(cols)
            for s in {s for t in pot.terms_containing(x) for s in t.sites} - set(near):
                if not bc.is_open:
                    sigma[s] = bc.spin(s)
            return np.exp(model.delta_h_x(pot, x, sigma, a, b, codes, within=volume if bc.is_open else None))

        return mc_expectation(pot, eta, volume, bc, LocalObservable(tuple(near), fn, "exp_dh"), cfg)

    A = est(eta_plus, eta2, eta1)
    B = est(eta_minus, eta1, eta2)
    gap = 1.0 / A.mean - B.mean
    err = math.sqrt((A.std_error / A.mean**2) ** 2 + B.std_error**2)
    return gap, err


def sweep_transition_matrix(system: SpinSystem, dynamics: str = "heat_bath") -> np.ndarray:
    """Exact transition matrix of one lexicographic sweep (small systems only).

    Rows and columns use the bit-packed spin index.  Built from the same
    per-site log-ratio the sampler uses.
    """
    n = len(system.volume)
    if n > 10:
        raise McError("transition matrix only for systems of at most 10 sites")
    N = 2**n
    states = (spin_columns(n).astype(np.int64) + 1) // 2
    P = np.eye(N)
    for i in range(n):
        Ki = np.zeros((N, N))
        for a in range(N):
            st = states[a].copy()
            r = _log_ratio(st, i, system.site, system.ptr, system.nbr, system.table)
            if dynamics == "heat_bath":
                p_up = 1.0 / (1.0 + math.exp(-r))
            else:
                flip = min(1.0, math.exp(-r if st[i] == 1 else r))
                p_up = 1.0 - flip if st[i] == 1 else flip
            up = a | (1 << i)
            down = a & ~(1 << i)
            Ki[a, up] += p_up
            Ki[a, down] += 1.0 - p_up
        P = P @ Ki
    return P


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eig(P.T)
    k = int(np.argmin(np.abs(w - 1.0)))
    pi = np.real(v[:, k])
    return pi / pi.sum()


__all__ = [
    "LocalObservable",
    "McConfig",
    "McError",
    "McEstimate",
    "RHAT_LIMIT",
    "SpinSystem",
    "batch_means",
    "integrated_autocorr_time",
    "mc_badness_gap",
    "mc_expectation",
    "mc_gap_probe",
    "observable_range",
    "run_chain",
    "split_rhat",
    "stationary_distribution",
    "sweep_transition_matrix",
]
