"""Exact finite-volume Gibbs measures.

Spin configurations of a volume are indexed bit-packed little-endian in
lattice order: bit ``i`` of the index is 1 iff the ``i``-th site (sorted
lexicographically) has spin ``+1``.  All weights live in the log domain.

Two exact engines share one compiled form of the Hamiltonian
(:class:`LocalFactors`): plain enumeration of all ``2^n`` configurations, and
a slab transfer matrix that sweeps a box slice by slice along the first axis
(in one dimension this is the usual 2x2 transfer matrix).  Both work on a
batch of disorder configurations at once.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .lattice import Site, Volume, closure, r_boundary
from .model import DisorderedPotential, ModelError

ENUMERATION_CAP = 2**26
_CHUNK = 2**20
_SPINS = np.array([-1.0, 1.0])


class GibbsError(ValueError):
    pass


# -- boundary conditions ----------------------------------------------------

@dataclass(frozen=True)
class BoundaryCondition:
    kind: str
    spins: Mapping[Site, int] | None = None

    def __post_init__(self):
        if self.kind not in ("plus", "minus", "open", "fixed"):
            raise GibbsError(f"unknown boundary condition {self.kind!r}")
        if self.kind == "fixed":
            if self.spins is None:
                raise GibbsError("fixed boundary condition needs spins")
            spins = {tuple(k): int(v) for k, v in self.spins.items()}
            bad = [k for k, v in spins.items() if v not in (-1, 1)]
            if bad:
                raise GibbsError(f"boundary spin at {bad[0]} is not +-1")
            object.__setattr__(self, "spins", spins)

    @classmethod
    def plus(cls) -> BoundaryCondition:
        return cls("plus")

    @classmethod
    def minus(cls) -> BoundaryCondition:
        return cls("minus")

    @classmethod
    def open(cls) -> BoundaryCondition:
        return cls("open")

    @classmethod
    def fixed(cls, spins: Mapping[Site, int]) -> BoundaryCondition:
        return cls("fixed", spins)

    @property
    def is_open(self) -> bool:
        return self.kind == "open"

    def spin(self, site: Site) -> int:
        if self.kind == "plus":
            return 1
        if self.kind == "minus":
            return -1
        if self.kind == "fixed":
            try:
                return self.spins[site]
            except KeyError:
                raise GibbsError(f"fixed boundary condition has no spin at site {site}") from None
        raise GibbsError("open boundary condition has no boundary spins")

    def label(self) -> str:
        return self.kind

    def to_json(self):
        if self.kind == "fixed":
            return {"kind": "fixed", "spins": [[list(k), v] for k, v in sorted(self.spins.items())]}
        return {"kind": self.kind}


# -- disorder batches -------------------------------------------------------

class DisorderBatch:
    """``B`` disorder configurations on a common site set, already encoded.

    ``codes`` has shape ``(B, n_sites, k)``.  Sites not in the batch may
    still be supplied through ``fixed`` (one encoded vector shared by all).
    """

    def __init__(self, sites: Volume, codes: np.ndarray, fixed: Mapping[Site, np.ndarray] | None = None):
        codes = np.asarray(codes, dtype=float)
        if codes.ndim != 3 or codes.shape[1] != len(sites):
            raise GibbsError("codes must have shape (B, n_sites, k)")
        self.sites = sites
        self.codes = codes
        self.fixed = dict(fixed or {})

    @property
    def size(self) -> int:
        return self.codes.shape[0]

    def code(self, site: Site) -> np.ndarray:
        """Encoded disorder at ``site`` with shape ``(B, k)``."""
        if site in self.sites:
            return self.codes[:, self.sites.index(site), :]
        if site in self.fixed:
            return np.broadcast_to(self.fixed[site], (self.size, self.codes.shape[2]))
        raise ModelError(f"missing disorder value at site {site}")

    def take(self, rows) -> DisorderBatch:
        return DisorderBatch(self.sites, self.codes[rows], self.fixed)

    @classmethod
    def single(cls, pot: DisorderedPotential, eta: Mapping[Site, object]) -> DisorderBatch:
        d = None
        fixed = {}
        for s, v in eta.items():
            s = tuple(s)
            d = len(s)
            fixed[s] = pot.encode(v)
        empty = Volume(d or pot.d)
        return cls(empty, np.zeros((1, 0, pot.disorder_dim)), fixed)

    @classmethod
    def from_indices(
        cls,
        pot: DisorderedPotential,
        sites: Volume,
        idx: np.ndarray,
        symbols: Sequence,
        fixed: Mapping[Site, object] | None = None,
    ) -> DisorderBatch:
        """Batch from symbol indices ``idx[b, i]`` into ``symbols``."""
        table = np.stack([pot.encode(a) for a in symbols])
        fixed_codes = {tuple(s): pot.encode(v) for s, v in (fixed or {}).items()}
        return cls(sites, table[np.asarray(idx, dtype=np.int64)], fixed_codes)


# -- compiled Hamiltonian -----------------------------------------------------

@dataclass
class LocalFactors:
    """``-H`` split into per-site log-weights and per-bond log-weight tables.

    ``site[b, i, s]`` and ``bond[b, m, s, t]`` use spin index 0 for ``-1``
    and 1 for ``+1``; ``bonds[m] = (i, j)`` with ``i < j``.
    """

    volume: Volume
    site: np.ndarray
    bonds: np.ndarray
    bond: np.ndarray

    @property
    def batch(self) -> int:
        return self.site.shape[0]


def compile_factors(
    pot: DisorderedPotential,
    volume: Volume,
    bc: BoundaryCondition,
    eta: DisorderBatch,
    pinned: Mapping[Site, int] | None = None,
    skip: Volume | None = None,
) -> LocalFactors:
    """Compile ``-H`` of ``volume`` for a batch of disorder configurations.

    ``pinned`` spins override the boundary condition at those outside sites
    (they are kept even under an open boundary); terms touching ``skip``
    are dropped altogether.
    """
    n = len(volume)
    if n == 0:
        raise GibbsError("empty volume")
    B = eta.size
    site = np.zeros((B, n, 2))
    bonds: list[tuple[int, int]] = []
    tables: list[np.ndarray] = []
    pinned = pinned or {}
    for term in pot.terms_touching(volume):
        if skip is not None and any(s in skip for s in term.sites):
            continue
        inside = [s in volume for s in term.sites]
        if bc.is_open and not all(s in volume or s in pinned for s in term.sites):
            continue
        codes = {s: eta.code(s) for s in pot.reads(term)}
        if term.is_site:
            (x,) = term.sites
            e = pot.site_energy(_SPINS[None, :], codes[x][:, None, :])
            site[:, volume.index(x), :] -= np.broadcast_to(e, (B, 2))
            continue
        a, b = term.sites
        ca = codes[a][:, None, None, :] if a in codes else None
        cb = codes[b][:, None, None, :] if b in codes else None
        table = -np.broadcast_to(
            pot.pair_energy(_SPINS[:, None], _SPINS[None, :], ca, cb, term.axis), (B, 2, 2)
        )
        if all(inside):
            i, j = volume.index(a), volume.index(b)
            bonds.append((i, j))
            tables.append(table)
        elif inside[0]:
            t = 1 if pinned.get(b, None) == 1 or (b not in pinned and bc.spin(b) == 1) else 0
            site[:, volume.index(a), :] += table[:, :, t]
        else:
            t = 1 if pinned.get(a, None) == 1 or (a not in pinned and bc.spin(a) == 1) else 0
            site[:, volume.index(b), :] += table[:, t, :]
    if tables:
        bond = np.stack(tables, axis=1)
        bond_idx = np.array(bonds, dtype=np.int64)
    else:
        bond = np.zeros((B, 0, 2, 2))
        bond_idx = np.zeros((0, 2), dtype=np.int64)
    return LocalFactors(volume, site, bond_idx, bond)


def index_bits(n: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """``(n, stop-start)`` array of spin indices (0/1) for configuration indices."""
    stop = 2**n if stop is None else stop
    idx = np.arange(start, stop, dtype=np.int64)
    return ((idx[None, :] >> np.arange(n, dtype=np.int64)[:, None]) & 1).astype(np.intp)


def spin_columns(n: int) -> np.ndarray:
    """``(2^n, n)`` array of +-1 spins in configuration-index order."""
    return (2 * index_bits(n) - 1).T.astype(np.int8)


def enumerate_log_weights(f: LocalFactors, start: int = 0, stop: int | None = None) -> np.ndarray:
    """``-H`` for configuration indices ``[start, stop)``, shape ``(B, stop-start)``."""
    n = len(f.volume)
    bits = index_bits(n, start, stop)
    lw = np.zeros((f.batch, bits.shape[1]))
    for i in range(n):
        lw += f.site[:, i, :][:, bits[i]]
    for m, (i, j) in enumerate(f.bonds):
        lw += f.bond[:, m, bits[i], bits[j]]
    return lw


def _full_log_weights(f: LocalFactors, cap: int) -> np.ndarray:
    n = len(f.volume)
    if 2**n > cap:
        raise GibbsError(
            f"2^{n} spin configurations exceed the enumeration cap {cap}; "
            "use the slab transfer matrix (boxes) or Monte Carlo"
        )
    N = 2**n
    if N <= _CHUNK:
        return enumerate_log_weights(f)
    out = np.empty((f.batch, N))
    for start in range(0, N, _CHUNK):
        stop = min(N, start + _CHUNK)
        out[:, start:stop] = enumerate_log_weights(f, start, stop)
    return out


# -- tables -----------------------------------------------------------------

@dataclass(frozen=True)
class GibbsTable:
    volume: Volume
    log_weights: np.ndarray
    log_Z: float
    pot: DisorderedPotential = field(repr=False)
    eta: Mapping[Site, object] = field(repr=False)
    bc: BoundaryCondition = field(repr=False)

    def probs(self) -> np.ndarray:
        return np.exp(self.log_weights - self.log_Z)

    def spins(self) -> dict[Site, np.ndarray]:
        cols = spin_columns(len(self.volume))
        return {x: cols[:, i] for i, x in enumerate(self.volume)}

    def marginal(self, sites: Sequence[Site]) -> np.ndarray:
        """Distribution of the spins on ``sites`` (indexed in lattice order)."""
        return marginalize(self.probs()[None, :], self.volume, sites)[0]

    def prob(self, site: Site, value: int) -> float:
        p = self.marginal([site])
        return float(p[1] if value == 1 else p[0])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "log_weight"])
            for i, v in enumerate(self.log_weights):
                w.writerow([i, f"{v:.17g}"])


def marginalize(p: np.ndarray, volume: Volume, sites: Sequence[Site]) -> np.ndarray:
    """Sum a batch of full tables ``(B, 2^n)`` down to ``sites``."""
    n = len(volume)
    keep = sorted({volume.index(s) for s in sites})
    t = p.reshape((p.shape[0],) + (2,) * n) if n else p
    drop = tuple(1 + (n - 1 - i) for i in range(n) if i not in keep)
    t = t.sum(axis=drop) if drop else t
    return t.reshape(p.shape[0], 2 ** len(keep))


def _eta_batch(pot, eta) -> DisorderBatch:
    return eta if isinstance(eta, DisorderBatch) else DisorderBatch.single(pot, eta)


def exact_gibbs(
    pot: DisorderedPotential,
    volume: Volume,
    bc: BoundaryCondition,
    eta: Mapping[Site, object],
    cap: int = ENUMERATION_CAP,
) -> GibbsTable:
    """Full table of ``mu_volume^bc[eta]`` by enumeration."""
    f = compile_factors(pot, volume, bc, DisorderBatch.single(pot, eta))
    lw = _full_log_weights(f, cap)[0]
    return GibbsTable(volume, lw, float(logsumexp(lw)), pot, dict(eta), bc)


def expectation(table: GibbsTable, f: Callable[[dict], object]) -> float:
    """``sum_sigma mu(sigma) f(sigma)``.

    ``f`` receives a mapping from site to the column of spins over all
    configurations, so ordinary arithmetic on it is vectorized.
    """
    values = np.broadcast_to(np.asarray(f(table.spins()), dtype=float), table.log_weights.shape)
    return float(np.dot(table.probs(), values))


# -- slab transfer matrix ----------------------------------------------------

class SlabTransfer:
    """Exact transfer-matrix evaluation of a box, slicing along the first axis.

    Holds forward/backward log messages for a batch of compiled factors.
    Cost is linear in the number of slices and quadratic in ``2^slice``.
    """

    def __init__(self, f: LocalFactors):
        vol = f.volume
        if not vol.is_box():
            raise GibbsError("slab transfer needs a box volume (an interval in d=1)")
        shape = vol.shape()
        L = shape[0]
        w = len(vol) // L
        if w > 12:
            raise GibbsError(f"slices of {w} sites are too wide for the transfer matrix")
        self.f, self.L, self.w, self.S = f, L, w, 2**w
        B, S = f.batch, self.S
        self.bits = index_bits(w)
        U = np.zeros((B, L, S))
        for i in range(len(vol)):
            k, loc = divmod(i, w)
            U[:, k, :] += f.site[:, i, :][:, self.bits[loc]]
        W = np.zeros((B, max(L - 1, 0), S, S))
        for m, (i, j) in enumerate(f.bonds):
            ki, li = divmod(int(i), w)
            kj, lj = divmod(int(j), w)
            if ki == kj:
                U[:, ki, :] += f.bond[:, m, self.bits[li], self.bits[lj]]
            elif kj == ki + 1:
                W[:, ki, :, :] += f.bond[:, m][:, self.bits[li][:, None], self.bits[lj][None, :]]
            else:
                raise GibbsError("bond spans more than one slice")
        self.U, self.W = U, W
        alpha = np.empty((B, L, S))
        beta = np.zeros((B, L, S))
        alpha[:, 0] = U[:, 0]
        for k in range(1, L):
            alpha[:, k] = U[:, k] + logsumexp(alpha[:, k - 1, :, None] + W[:, k - 1], axis=1)
        for k in range(L - 2, -1, -1):
            beta[:, k] = logsumexp(W[:, k] + (U[:, k + 1] + beta[:, k + 1])[:, None, :], axis=2)
        self.alpha, self.beta = alpha, beta
        self.log_Z = logsumexp(alpha[:, L - 1], axis=1)

    def slice_of(self, i: int) -> tuple[int, int]:
        return divmod(i, self.w)

    def marginal(self, sites: Sequence[Site]) -> np.ndarray:
        """Batch of joint distributions ``(B, 2^k)`` of ``sites`` in lattice order."""
        vol = self.f.volume
        idx = sorted({vol.index(s) for s in sites})
        if not idx:
            return np.ones((self.f.batch, 1))
        by_slice: dict[int, list[int]] = {}
        for i in idx:
            k, loc = divmod(i, self.w)
            by_slice.setdefault(k, []).append(loc)
        k0, k1 = min(by_slice), max(by_slice)
        B, S = self.f.batch, self.S
        T = self.alpha[:, k0][:, None, :]
        for k in range(k0, k1 + 1):
            if k > k0:
                T = logsumexp(T[:, :, :, None] + self.W[:, k - 1][:, None, :, :], axis=2)
                T = T + self.U[:, k][:, None, :]
            if k == k1:
                T = T + self.beta[:, k1][:, None, :]
            locs = by_slice.get(k, [])
            if not locs and k < k1:
                continue
            kept = np.zeros(S, dtype=np.int64)
            for j, loc in enumerate(locs):
                kept |= self.bits[loc] << j
            groups = []
            for v in range(2 ** len(locs)):
                mask = kept == v
                if k == k1:
                    groups.append(logsumexp(T[:, :, mask], axis=2))
                else:
                    groups.append(np.where(mask[None, None, :], T, -np.inf))
            if k == k1:
                T = np.stack(groups, axis=1).reshape(B, -1)
            else:
                T = np.stack(groups, axis=1).reshape(B, -1, S)
        return np.exp(T - self.log_Z[:, None])


# -- batched marginals with engine selection -----------------------------------

def _use_slab(volume: Volume) -> bool:
    if not volume.is_box() or len(volume) <= 12:
        return False
    return len(volume) // volume.shape()[0] <= 10


def batched_marginals(
    pot: DisorderedPotential,
    volume: Volume,
    bc: BoundaryCondition,
    eta: DisorderBatch,
    sites: Sequence[Site],
    engine: str = "auto",
    max_chunk: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Marginals of ``sites`` and ``log Z`` for every configuration in the batch."""
    if engine == "auto":
        engine = "slab" if _use_slab(volume) else "enumerate"
    n = len(volume)
    if engine == "slab":
        L = volume.shape()[0]
        S = 2 ** (n // L)
        per = L * S * S * max(1, 2 ** min(len(sites), 10))
    elif engine == "enumerate":
        if 2**n > ENUMERATION_CAP:
            raise GibbsError(f"2^{n} configurations exceed the enumeration cap")
        per = 2**n
    else:
        raise GibbsError(f"unknown engine {engine!r}")
    chunk = max_chunk or max(1, 2**23 // per)
    outs, logz = [], []
    for start in range(0, eta.size, chunk):
        sub = eta.take(slice(start, start + chunk))
        f = compile_factors(pot, volume, bc, sub)
        if engine == "slab":
            st = SlabTransfer(f)
            outs.append(st.marginal(sites))
            logz.append(st.log_Z)
        else:
            lw = _full_log_weights(f, ENUMERATION_CAP)
            lz = logsumexp(lw, axis=1)
            outs.append(marginalize(np.exp(lw - lz[:, None]), volume, sites))
            logz.append(lz)
    return np.concatenate(outs), np.concatenate(logz)


def log_partition(
    pot: DisorderedPotential, volume: Volume, bc: BoundaryCondition, eta: Mapping[Site, object]
) -> float:
    _, lz = batched_marginals(pot, volume, bc, DisorderBatch.single(pot, eta), [])
    return float(lz[0])


@dataclass
class ChainMarginals:
    """Result of :func:`transfer_matrix_1d`."""

    volume: Volume
    log_Z: float
    _engine: SlabTransfer = field(repr=False)

    def site(self, x: Site) -> np.ndarray:
        """``(P(sigma_x=-1), P(sigma_x=+1))``."""
        return self._engine.marginal([tuple(x)])[0]

    def pair(self, x: Site, y: Site) -> np.ndarray:
        """2x2 joint distribution, rows indexed by the lattice-earlier site."""
        p = self._engine.marginal([tuple(x), tuple(y)])[0]
        return p.reshape(2, 2).T


def transfer_matrix_1d(
    pot: DisorderedPotential, chain: Volume, bc: BoundaryCondition, eta: Mapping[Site, object]
) -> ChainMarginals:
    if chain.d != 1 or not chain.is_box():
        raise GibbsError("transfer_matrix_1d needs an interval of Z")
    st = SlabTransfer(compile_factors(pot, chain, bc, DisorderBatch.single(pot, eta)))
    return ChainMarginals(chain, float(st.log_Z[0]), st)


def magnetization_pm(
    pot: DisorderedPotential, eta: Mapping[Site, object], volume: Volume, x: Site
) -> tuple[float, float]:
    """``(mu^+(sigma_x=1), mu^-(sigma_x=1))`` in ``volume``."""
    x = tuple(x)
    if x not in volume:
        raise GibbsError(f"site {x} not in volume")
    out = []
    for bc in (BoundaryCondition.plus(), BoundaryCondition.minus()):
        p, _ = batched_marginals(pot, volume, bc, DisorderBatch.single(pot, eta), [x])
        out.append(float(p[0, 1]))
    return out[0], out[1]


def required_disorder(pot: DisorderedPotential, volume: Volume, bc: BoundaryCondition) -> Volume:
    """Sites whose disorder the Gibbs measure in ``volume`` actually reads."""
    return pot.disorder_support(volume, bc.is_open)


def boundary_sites(volume: Volume) -> Volume:
    return r_boundary(volume, 1)


__all__ = [
    "BoundaryCondition",
    "ChainMarginals",
    "DisorderBatch",
    "ENUMERATION_CAP",
    "GibbsError",
    "GibbsTable",
    "LocalFactors",
    "SlabTransfer",
    "batched_marginals",
    "boundary_sites",
    "closure",
    "compile_factors",
    "enumerate_log_weights",
    "exact_gibbs",
    "expectation",
    "index_bits",
    "log_partition",
    "magnetization_pm",
    "marginalize",
    "required_disorder",
    "spin_columns",
    "transfer_matrix_1d",
]
