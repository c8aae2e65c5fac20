"""Single-site disorder laws, product laws over finite regions, enumeration and sampling.

Random numbers come from numpy's Philox4x32 counter-based generator, keyed by
a ``SeedSequence`` built from the user seed.  Independent substreams (one per
chain, per sampled annulus, per site) are derived by appending integers to the
seed entropy, so results never depend on how many workers share the load.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterator, Mapping

import numpy as np

from .lattice import Site, Volume

ENUMERATION_CAP = 2**24


class LawError(ValueError):
    pass


def _parse_prob(p) -> float:
    if isinstance(p, str):
        try:
            return float(Fraction(p.strip()))
        except (ValueError, ZeroDivisionError):
            raise LawError(f"cannot parse probability {p!r}") from None
    return float(p)


@dataclass(frozen=True)
class SingleSiteLaw:
    """A law on a finite alphabet; probabilities may be given as ``"p/q"`` strings."""

    alphabet: tuple
    probs: tuple[float, ...]

    def __post_init__(self):
        alphabet = tuple(tuple(a) if isinstance(a, list) else a for a in self.alphabet)
        probs = tuple(_parse_prob(p) for p in self.probs)
        if not alphabet:
            raise LawError("empty alphabet")
        if len(alphabet) != len(probs):
            raise LawError("alphabet and probabilities differ in length")
        if len(set(alphabet)) != len(alphabet):
            raise LawError("repeated symbol in alphabet")
        if any(not math.isfinite(p) or p < 0 for p in probs):
            raise LawError("probabilities must be finite and nonnegative")
        if abs(sum(probs) - 1.0) > 1e-12:
            raise LawError(f"probabilities sum to {sum(probs)!r}, not 1")
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "probs", probs)

    def prob(self, symbol) -> float:
        try:
            return self.probs[self.alphabet.index(symbol)]
        except ValueError:
            raise LawError(f"symbol {symbol!r} not in alphabet {self.alphabet}") from None

    def support(self) -> tuple:
        return tuple(a for a, p in zip(self.alphabet, self.probs) if p > 0)

    def to_json(self) -> dict:
        return {"alphabet": [list(a) if isinstance(a, tuple) else a for a in self.alphabet],
                "probs": list(self.probs)}


def bernoulli_pm(p: float, scale: float = 1.0) -> SingleSiteLaw:
    """``+scale`` with probability ``p``, ``-scale`` otherwise."""
    p = _parse_prob(p)
    return SingleSiteLaw((-scale, scale), (1.0 - p, p))


def three_valued_symmetric(p0: float, J: float = 1.0) -> SingleSiteLaw:
    """Couplings ``{-J, 0, J}`` with mass ``p0`` at zero, symmetric otherwise."""
    p0 = _parse_prob(p0)
    if not 0 <= p0 <= 1:
        raise LawError("p0 must lie in [0, 1]")
    q = (1.0 - p0) / 2
    return SingleSiteLaw((-J, 0.0, J), (q, p0, q))


def slot_product(law: SingleSiteLaw, d: int) -> SingleSiteLaw:
    """Law of the coupling tuple ``(J_{x,e})_e`` with i.i.d. slots."""
    alphabet, probs = [], []
    for combo in itertools.product(range(len(law.alphabet)), repeat=d):
        alphabet.append(tuple(float(law.alphabet[i]) for i in combo))
        probs.append(math.prod(law.probs[i] for i in combo))
    total = sum(probs)
    return SingleSiteLaw(tuple(alphabet), tuple(p / total for p in probs))


@dataclass(frozen=True)
class ProductLaw:
    region: Volume
    law: SingleSiteLaw

    def size(self) -> int:
        return len(self.law.alphabet) ** len(self.region)


def weight(pl: ProductLaw, eta: Mapping[Site, object]) -> float:
    w = 1.0
    for x in pl.region:
        if x not in eta:
            raise LawError(f"missing disorder value at site {x}")
        w *= pl.law.prob(eta[x])
    return w


def enumerate_disorder(pl: ProductLaw, cap: int = ENUMERATION_CAP) -> Iterator[tuple[dict, float]]:
    """Every configuration on the region once, with its product weight."""
    if pl.size() > cap:
        raise LawError(
            f"{pl.size()} disorder configurations exceed the cap {cap}; use sample_disorder instead"
        )
    sites = pl.region.sites
    law = pl.law
    for combo in itertools.product(range(len(law.alphabet)), repeat=len(sites)):
        w = 1.0
        for i in combo:
            w *= law.probs[i]
        yield {x: law.alphabet[i] for x, i in zip(sites, combo)}, w


def enumerate_indices(n_symbols: int, n_sites: int, cap: int = ENUMERATION_CAP) -> np.ndarray:
    """All index tuples in ``itertools.product`` order, as an ``(N, n_sites)`` array."""
    total = n_symbols**n_sites
    if total > cap:
        raise LawError(f"{total} disorder configurations exceed the cap {cap}; use sampling instead")
    if n_sites == 0:
        return np.zeros((1, 0), dtype=np.int64)
    grids = np.indices((n_symbols,) * n_sites).reshape(n_sites, -1)
    return grids.T.astype(np.int64)


def rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator for ``seed`` and an optional substream path."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed) & (2**64 - 1), *stream])))


def sample_indices(law: SingleSiteLaw, seed: int, n: int, n_sites: int, *stream: int) -> np.ndarray:
    g = rng(seed, *stream)
    return g.choice(len(law.alphabet), size=(n, n_sites), p=np.asarray(law.probs))


def sample_disorder(pl: ProductLaw, seed: int, n: int) -> list[dict]:
    if n < 1:
        raise LawError("n must be >= 1")
    idx = sample_indices(pl.law, seed, n, len(pl.region))
    sites = pl.region.sites
    return [{x: pl.law.alphabet[i] for x, i in zip(sites, row)} for row in idx]


def disorder_expectation(pl: ProductLaw, f: Callable[[dict], float], cap: int = ENUMERATION_CAP) -> float:
    return math.fsum(w * f(eta) for eta, w in enumerate_disorder(pl, cap))


class SiteField:
    """A disorder configuration defined lazily on all of ``Z^d``.

    ``constant(a)`` is the all-``a`` configuration; ``sampled`` draws each
    site independently from a law using a Philox stream keyed by the site,
    so restrictions to nested regions are consistent.
    """

    def __init__(self, fn: Callable[[Site], object], label: str):
        self._fn = fn
        self.label = label

    def __call__(self, site: Site):
        return self._fn(tuple(site))

    def on(self, region) -> dict:
        return {x: self(x) for x in region}

    @classmethod
    def constant(cls, symbol) -> SiteField:
        return cls(lambda _s: symbol, f"const:{symbol!r}")

    @classmethod
    def sampled(cls, law: SingleSiteLaw, seed: int, stream: int = 0) -> SiteField:
        cache: dict = {}
        p = np.asarray(law.probs)

        def draw(site):
            if site not in cache:
                key = [v + 2**31 for v in site]
                cache[site] = law.alphabet[int(rng(seed, stream, *key).choice(len(p), p=p))]
            return cache[site]

        return cls(draw, f"sample:{seed}:{stream}")

    @classmethod
    def from_mapping(cls, values: Mapping[Site, object], default=None, label: str = "explicit") -> SiteField:
        values = {tuple(k): v for k, v in values.items()}

        def get(site):
            if site in values:
                return values[site]
            if default is None:
                raise LawError(f"no disorder value at site {site}")
            return default

        return cls(get, label)


__all__ = [
    "ENUMERATION_CAP",
    "LawError",
    "ProductLaw",
    "SingleSiteLaw",
    "SiteField",
    "bernoulli_pm",
    "disorder_expectation",
    "enumerate_disorder",
    "enumerate_indices",
    "rng",
    "sample_disorder",
    "sample_indices",
    "slot_product",
    "three_valued_symmetric",
    "weight",
]
