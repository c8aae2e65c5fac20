"""Finite-range disordered potentials and the single-site disorder variation.

Spins take values in ``{-1, +1}``.  Disorder symbols are whatever the model
uses on one site: a field value (random field model), the tuple of couplings
on the forward bonds of the site (random couplings), or an occupation number
(site dilution).  Every potential maps its symbols to a numeric vector of
length ``disorder_dim`` so energies can be evaluated on whole numpy batches.

The inverse temperature is absorbed into the couplings: Boltzmann factors
are always ``exp(-H)``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .lattice import Bond, Site, Volume, bonds_touching

SPIN_VALUES = (-1, 1)


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class Term:
    """One interaction set ``A``: a single site, or a bond ``<base, base+e>``."""

    sites: tuple[Site, ...]
    axis: int | None = None

    @property
    def is_site(self) -> bool:
        return self.axis is None

    @classmethod
    def from_bond(cls, b: Bond) -> Term:
        return cls((b.base, b.tip), b.axis)


class DisorderedPotential:
    """Pair + site potential with disorder.

    Subclasses implement ``site_energy`` / ``pair_energy`` so that they
    broadcast: spins are arrays of +-1, disorder arguments are arrays whose
    trailing axis has length ``disorder_dim``.  ``reads`` names the sites
    whose disorder a term looks at.
    """

    tag = "generic"
    range = 1
    has_site_terms = False

    def __init__(self, d: int, alphabet: Sequence):
        if d < 1:
            raise ModelError("dimension must be >= 1")
        if len(alphabet) == 0:
            raise ModelError("empty disorder alphabet")
        self.d = d
        self.alphabet = tuple(alphabet)
        self._codes = {a: self._encode(a) for a in self.alphabet}

    # -- symbols ---------------------------------------------------------
    disorder_dim = 1

    def _encode(self, symbol) -> np.ndarray:
        return np.array([float(symbol)])

    def encode(self, symbol) -> np.ndarray:
        """Numeric vector of a symbol; off-alphabet symbols are allowed here."""
        code = self._codes.get(symbol)
        if code is None:
            code = self._encode(symbol)
            if code.shape != (self.disorder_dim,) or not np.all(np.isfinite(code)):
                raise ModelError(f"cannot encode disorder symbol {symbol!r}")
        return code

    def in_alphabet(self, symbol) -> bool:
        return symbol in self._codes

    def check_symbol(self, symbol) -> None:
        if symbol not in self._codes:
            raise ModelError(f"disorder symbol {symbol!r} not in alphabet {self.alphabet}")

    # -- energies --------------------------------------------------------
    def site_energy(self, s, eta):
        return 0.0 * s

    def pair_energy(self, s, t, eta_base, eta_tip, axis: int):
        raise NotImplementedError

    def reads(self, term: Term) -> tuple[Site, ...]:
        return term.sites

    def coupling_active(self, eta_base, eta_tip, axis: int) -> bool:
        """Whether the pair term of a bond can be nonzero for these disorder values."""
        return True

    # -- geometry --------------------------------------------------------
    def terms_touching(self, region: Volume) -> list[Term]:
        """All terms ``A`` with ``A`` meeting ``region``, in lattice order."""
        terms = []
        seen = set()
        for x in region:
            if self.has_site_terms:
                terms.append(Term((x,)))
            for b in bonds_touching(x, region.d):
                key = (b.base, b.axis)
                if key not in seen:
                    seen.add(key)
                    terms.append(Term.from_bond(b))
        return terms

    def terms_containing(self, x: Site) -> list[Term]:
        terms = [Term((x,))] if self.has_site_terms else []
        terms.extend(Term.from_bond(b) for b in bonds_touching(x, self.d))
        return terms

    def disorder_support(self, region: Volume, open_bc: bool = False) -> Volume:
        """Sites whose disorder enters the Gibbs measure in ``region``.

        Disorder elsewhere on the closure integrates out exactly under a
        product law, so enumerations only ever run over this set.
        """
        sites = set()
        for term in self.terms_touching(region):
            if open_bc and not all(s in region for s in term.sites):
                continue
            sites.update(self.reads(term))
        return Volume.of(sites, region.d) if sites else Volume(region.d)

    def term_energy(self, term: Term, sigma: Mapping, eta: Mapping):
        """``Phi_A`` for one term; values may be scalars or broadcastable arrays."""
        if term.is_site:
            (x,) = term.sites
            return self.site_energy(sigma[x], eta[x])
        a, b = term.sites
        eb = eta[a] if a in eta else None
        et = eta[b] if b in eta else None
        return self.pair_energy(sigma[a], sigma[b], eb, et, term.axis)

    def describe(self) -> dict:
        return {"model": self.tag, "d": self.d, "alphabet": _jsonable(self.alphabet)}


def _jsonable(x):
    if isinstance(x, tuple):
        return [_jsonable(v) for v in x]
    return x


class RandomFieldIsing(DisorderedPotential):
    tag = "rfim"
    has_site_terms = True

    def __init__(self, J: float, h: float, d: int, alphabet: Sequence[float] = (-1.0, 1.0)):
        super().__init__(d, tuple(float(a) for a in alphabet))
        self.J = float(J)
        self.h = float(h)

    def site_energy(self, s, eta):
        return -self.h * eta[..., 0] * s

    def pair_energy(self, s, t, eta_base, eta_tip, axis):
        return -self.J * s * t

    def reads(self, term):
        return term.sites if term.is_site else ()

    def coupling_active(self, eta_base, eta_tip, axis):
        return self.J != 0.0

    def describe(self):
        return {**super().describe(), "J": self.J, "h": self.h}


class RandomCouplingIsing(DisorderedPotential):
    """Nearest-neighbour couplings ``J_{x,e}`` stored on the base site as a tuple."""

    tag = "random_coupling"

    def __init__(self, coupling_alphabet: Sequence[float], d: int):
        coupling_alphabet = tuple(float(a) for a in coupling_alphabet)
        if not coupling_alphabet:
            raise ModelError("empty coupling alphabet")
        self.coupling_alphabet = coupling_alphabet
        self.disorder_dim = d
        super().__init__(d, tuple(itertools.product(coupling_alphabet, repeat=d)))

    def _encode(self, symbol):
        symbol = tuple(symbol)
        if len(symbol) != self.d:
            raise ModelError(f"coupling tuple {symbol} must have length {self.d}")
        return np.array([float(v) for v in symbol])

    def pair_energy(self, s, t, eta_base, eta_tip, axis):
        return -eta_base[..., axis] * s * t

    def reads(self, term):
        return () if term.is_site else (term.sites[0],)

    def coupling_active(self, eta_base, eta_tip, axis):
        return float(eta_base[axis]) != 0.0

    def describe(self):
        return {**super().describe(), "coupling_alphabet": list(self.coupling_alphabet)}


class GriSing(DisorderedPotential):
    """Site-diluted ferromagnet ``-J sum eta_x s_x eta_y s_y`` with ``eta in {0,1}``."""

    tag = "grising"

    def __init__(self, J: float, d: int):
        super().__init__(d, (0, 1))
        self.J = float(J)

    def pair_energy(self, s, t, eta_base, eta_tip, axis):
        return -self.J * eta_base[..., 0] * eta_tip[..., 0] * s * t

    def coupling_active(self, eta_base, eta_tip, axis):
        return self.J != 0.0 and float(eta_base[0]) * float(eta_tip[0]) != 0.0

    def describe(self):
        return {**super().describe(), "J": self.J}


def _check_coupling(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise ModelError(f"{name} must be a finite nonnegative number, got {value}")
    return value


def build_rfim(J: float, h: float, d: int = 2, alphabet: Sequence[float] = (-1.0, 1.0)) -> RandomFieldIsing:
    """Random field Ising model ``-J sum s_x s_y - h sum eta_x s_x``."""
    return RandomFieldIsing(_check_coupling("J", J), _check_coupling("h", h), d, alphabet)


def build_random_coupling(coupling_alphabet: Sequence[float], d: int = 2) -> RandomCouplingIsing:
    """Ising model with i.i.d. couplings on the bonds (random bond, EA spin glass)."""
    if len(coupling_alphabet) == 0:
        raise ModelError("empty coupling alphabet")
    for v in coupling_alphabet:
        if not math.isfinite(float(v)):
            raise ModelError("couplings must be finite")
    return RandomCouplingIsing(coupling_alphabet, d)


def build_grising(J: float, d: int = 2) -> GriSing:
    return GriSing(_check_coupling("J", J), d)


# -- Hamiltonians ---------------------------------------------------------

def _term_inputs(pot, term, sigma, eta_codes, where):
    for s in term.sites:
        if s not in sigma:
            raise ModelError(f"missing spin value at site {s} ({where})")
    for s in pot.reads(term):
        if s not in eta_codes:
            raise ModelError(f"missing disorder value at site {s} ({where})")


def hamiltonian_in_volume(
    pot: DisorderedPotential,
    volume: Volume,
    sigma: Mapping[Site, int],
    sigma_bc: Mapping[Site, int] | None,
    eta: Mapping,
) -> float:
    """``sum_{A meets volume} Phi_A`` with boundary spins from ``sigma_bc``.

    ``sigma_bc=None`` is the open (free) boundary: terms leaving the volume
    are dropped.
    """
    spins = dict(sigma_bc or {})
    for x in volume:
        if x not in sigma:
            raise ModelError(f"missing spin value at site {x}")
        spins[x] = sigma[x]
    total = 0.0
    for term in pot.terms_touching(volume):
        if sigma_bc is None and not all(s in volume for s in term.sites):
            continue
        codes = {s: pot.encode(eta[s]) for s in pot.reads(term) if s in eta}
        _term_inputs(pot, term, spins, codes, "hamiltonian")
        total += float(pot.term_energy(term, spins, codes))
    return total


def delta_h_x(
    pot: DisorderedPotential,
    x: Site,
    sigma: Mapping[Site, object],
    eta_x,
    eta_ref,
    eta: Mapping,
    within: Volume | None = None,
):
    """Single-site disorder variation at ``x``.

    ``sum_{A contains x} [Phi_A(sigma, eta_x eta_rest) - Phi_A(sigma, eta_ref eta_rest)]``.
    Spin values may be numpy arrays (one entry per configuration) and disorder
    values of the neighbours may be pre-encoded arrays; the result broadcasts.
    ``eta_x`` must be in the alphabet; ``eta_ref`` may be any encodable value.
    When ``within`` is given only terms inside it count (open boundary).
    """
    x = tuple(x)
    pot.check_symbol(eta_x)
    a = pot.encode(eta_x)
    b = pot.encode(eta_ref)
    total = 0.0
    for term in pot.terms_containing(x):
        if within is not None and not all(s in within for s in term.sites):
            continue
        for s in term.sites:
            if s not in sigma:
                raise ModelError(f"missing spin value at site {s}")
        codes = {}
        for s in pot.reads(term):
            if s == x:
                continue
            if s not in eta:
                raise ModelError(f"missing disorder value at site {s}")
            v = eta[s]
            codes[s] = v if isinstance(v, np.ndarray) else pot.encode(v)
        if x in pot.reads(term):
            e1 = pot.term_energy(term, sigma, {**codes, x: a})
            e0 = pot.term_energy(term, sigma, {**codes, x: b})
            total = total + (e1 - e0)
    return total
