"""Run specification files.

A spec is a TOML document (JSON is accepted too) with a ``[model]`` table
and one table per kind of run::

    [model]
    model = "rfim"            # rfim | random_coupling | grising
    d = 2
    J = 2.0
    h = 1.0
    alphabet = [-1.0, 0.0, 1.0]
    law = { alphabet = [-1.0, 0.0, 1.0], probs = ["1/4", "1/2", "1/4"] }
    seed = 0

    [scan]
    probe = "rfim_theorem1"
    x = [0, 0]
    ladder = [1, 2, 3, 4]     # sides of centred boxes, volume literals or {lo, hi} tables

The law may also be written ``law = "bernoulli_pm(0.5)"`` or
``law = "three_valued_symmetric(1/3)"``.  For the random coupling model the
law describes one slot; slots are i.i.d.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

import tomli

from . import model as models
from .disorder import LawError, SingleSiteLaw, bernoulli_pm, slot_product, three_valued_symmetric
from .gibbs import BoundaryCondition
from .lattice import GeometryError, Volume, box, centered_box, parse_volume
from .model import ModelError


class SpecError(ValueError):
    """A malformed or invalid spec; ``line``/``column`` point into the file when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)


@dataclass
class Spec:
    data: dict
    text: str
    path: str
    digest: str

    def section(self, name: str) -> dict:
        if name not in self.data:
            raise SpecError(f"spec has no [{name}] table")
        value = self.data[name]
        if not isinstance(value, dict):
            raise self.error(f"[{name}] must be a table", name)
        return value

    def error(self, message: str, key: str) -> SpecError:
        """Error pointing at the first line that assigns ``key``."""
        k = re.escape(key)
        for pattern in (rf'^[ \t{{,]*"?{k}"?[ \t]*[=:]', rf'^[ \t]*\[{k}\]', rf'\b"?{k}"?[ \t]*[=:]'):
            m = re.search(pattern, self.text, re.M)
            if m is not None:
                start = m.start() + len(m.group(0)) - len(m.group(0).lstrip(' \t{,'))
                line = self.text.count("\n", 0, start) + 1
                col = start - (self.text.rfind("\n", 0, start) + 1) + 1
                return SpecError(message, line, col)
        return SpecError(message)


def parse_spec_text(text: str, path: str = "<string>") -> Spec:
    if not text.strip():
        raise SpecError("empty spec")
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    if path.endswith(".json") or text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno) from None
        if not isinstance(data, dict):
            raise SpecError("spec must be a JSON object", 1, 1)
    else:
        try:
            data = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            msg = str(exc)
            m = re.search(r"\(at line (\d+), column (\d+)\)", msg)
            if m:
                base = msg[: m.start()].strip()
                raise SpecError(f"invalid TOML: {base}", int(m.group(1)), int(m.group(2))) from None
            raise SpecError(f"invalid TOML: {msg}") from None
    return Spec(data, text, path, digest)


def load_spec(path) -> Spec:
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise SpecError(f"cannot read spec {path}: {exc.strerror}") from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise SpecError("spec is not valid UTF-8") from None
    return parse_spec_text(text, str(p))


# -- builders ------------------------------------------------------------------------

_LAW_CALL = re.compile(r"^\s*(bernoulli_pm|three_valued_symmetric)\s*\(\s*([^),]+)\s*(?:,\s*([^)]+))?\)\s*$")


def build_law(spec: Spec, value) -> SingleSiteLaw:
    try:
        if isinstance(value, str):
            m = _LAW_CALL.match(value)
            if not m:
                raise spec.error(f"unknown law {value!r}", "law")
            name, a, b = m.groups()
            extra = [float(b)] if b else []
            if name == "bernoulli_pm":
                return bernoulli_pm(a.strip(), *extra)
            return three_valued_symmetric(a.strip(), *extra)
        if isinstance(value, dict):
            return SingleSiteLaw(tuple(value["alphabet"]), tuple(value["probs"]))
    except KeyError as exc:
        raise spec.error(f"law is missing {exc.args[0]!r}", "law") from None
    except (LawError, ValueError) as exc:
        if isinstance(exc, SpecError):
            raise
        raise spec.error(f"invalid law: {exc}", "law") from None
    raise spec.error("law must be a table or a builder call", "law")


@dataclass
class ModelSpec:
    pot: models.DisorderedPotential
    law: SingleSiteLaw
    seed: int


def build_model(spec: Spec) -> ModelSpec:
    m = spec.section("model")
    kind = m.get("model")
    d = m.get("d", 2)
    if not isinstance(d, int) or d < 1:
        raise spec.error("d must be a positive integer", "d")
    try:
        if kind == "rfim":
            if "law" in m:
                law = build_law(spec, m["law"])
            elif "alphabet" in m:
                k = len(m["alphabet"])
                law = SingleSiteLaw(tuple(m["alphabet"]), (1.0 / k,) * k)
            else:
                law = bernoulli_pm(0.5)
            alphabet = tuple(float(a) for a in m.get("alphabet", law.alphabet))
            pot = models.build_rfim(m.get("J", 1.0), m.get("h", 1.0), d, alphabet)
            if tuple(float(a) for a in law.alphabet) != alphabet:
                raise spec.error("law alphabet must equal the model alphabet", "law")
            law = SingleSiteLaw(alphabet, law.probs)
        elif kind == "random_coupling":
            slot = build_law(spec, m.get("law", "three_valued_symmetric(1/3)"))
            pot = models.build_random_coupling(tuple(float(a) for a in slot.alphabet), d)
            law = slot_product(SingleSiteLaw(tuple(float(a) for a in slot.alphabet), slot.probs), d)
        elif kind == "grising":
            law = build_law(spec, m.get("law", {"alphabet": [0, 1], "probs": [0.5, 0.5]}))
            pot = models.build_grising(m.get("J", 1.0), d)
            law = SingleSiteLaw((0, 1), (law.prob(0), law.prob(1)))
        else:
            raise spec.error(f"unknown model {kind!r}; expected rfim, random_coupling or grising", "model")
    except (ModelError, LawError, TypeError) as exc:
        raise spec.error(f"invalid model: {exc}", "model") from None
    seed = m.get("seed", 0)
    if not isinstance(seed, int):
        raise spec.error("seed must be an integer", "seed")
    return ModelSpec(pot, law, seed)


def build_volume(spec: Spec, value, d: int, key: str) -> Volume:
    try:
        if isinstance(value, int):
            return centered_box(value, d)
        if isinstance(value, dict):
            if set(value) != {"lo", "hi"}:
                raise GeometryError("a box table needs exactly the keys lo and hi")
            v = box(tuple(value["lo"]), tuple(value["hi"]))
        else:
            v = parse_volume(value)
    except GeometryError as exc:
        raise spec.error(f"invalid volume for {key}: {exc}", key) from None
    if v.d != d:
        raise spec.error(f"{key} has dimension {v.d}, model has {d}", key)
    return v


def build_ladder(spec: Spec, values, d: int, key: str = "ladder") -> list[Volume]:
    if not isinstance(values, list) or not values:
        raise spec.error(f"{key} must be a nonempty list", key)
    ladder = [build_volume(spec, v, d, key) for v in values]
    for a, b in zip(ladder, ladder[1:]):
        if not (a.issubset(b) and len(a) < len(b)):
            raise spec.error(f"{key} must be strictly increasing and nested", key)
    return ladder


def build_bc(spec: Spec, value, key: str = "bc") -> BoundaryCondition:
    if value in ("plus", "minus", "open"):
        return BoundaryCondition(value)
    raise spec.error(f"{key} must be plus, minus or open", key)


def symbol(value):
    """Spec value of a disorder symbol; lists become coupling tuples."""
    return tuple(float(v) for v in value) if isinstance(value, list) else value


__all__ = [
    "ModelSpec",
    "Spec",
    "SpecError",
    "build_bc",
    "build_ladder",
    "build_law",
    "build_model",
    "build_volume",
    "load_spec",
    "parse_spec_text",
    "symbol",
]
