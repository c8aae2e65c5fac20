"""Command line front end: ``gibbslab {verify-identities,scan,mc} --spec FILE``.

Exit codes: 0 success, 1 tolerance or verdict failure, 2 usage or spec
error.  Every run writes a JSON report, a CSV table where applicable and a
``manifest.json`` listing all outputs with their SHA-256 digests.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import math
import os
import sys
import warnings
from pathlib import Path
from typing import Sequence

import numba

from . import __version__
from . import diagnostics as diag
from . import identities
from . import mc as montecarlo
from .disorder import LawError, SiteField
from .gibbs import GibbsError, exact_gibbs
from .joint import JointError
from .lattice import Bond, GeometryError
from .model import ModelError
from .specfile import (
    Spec,
    SpecError,
    build_bc,
    build_ladder,
    build_model,
    build_volume,
    load_spec,
    symbol,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
FEASIBILITY_ERRORS = (GibbsError, LawError, JointError, MemoryError)


# -- output ----------------------------------------------------------------------------

def fmt(v) -> str:
    """Round-trip safe number text (17 significant digits)."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "NaN"
        if math.isinf(v):
            return "Infinity" if v > 0 else "-Infinity"
        return format(v, ".17g")
    return str(v)


def to_json_text(obj, indent: int = 0) -> str:
    """JSON text with every float written at 17 significant digits."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if obj is None:
        return "null"
    if isinstance(obj, (bool, int, float)) or hasattr(obj, "dtype"):
        if hasattr(obj, "item"):
            obj = obj.item()
        return fmt(obj)
    if isinstance(obj, str):
        import json

        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{to_json_text(str(k))}: {to_json_text(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[" + ", ".join(to_json_text(v, indent + 1) for v in obj) + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


class Outputs:
    def __init__(self, out_dir: Path):
        self.dir = out_dir
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[Path] = []

    def write_json(self, name: str, obj) -> Path:
        p = self.dir / name
        p.write_text(to_json_text(obj) + "\n", encoding="utf-8", newline="\n")
        self.files.append(p)
        return p

    def write_csv(self, name: str, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
        p = self.dir / name
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([fmt(v) for v in row])
        self.files.append(p)
        return p

    def manifest(self, spec: Spec, seeds: dict, started: str, threads: int) -> Path:
        entries = []
        for p in self.files:
            entries.append({"path": p.name, "sha256": hashlib.sha256(p.read_bytes()).hexdigest()})
        data = {
            "spec": spec.path,
            "spec_sha256": spec.digest,
            "tool": "gibbslab",
            "version": __version__,
            "seeds": seeds,
            "threads": threads,
            "started": started,
            "finished": _now(),
            "outputs": entries,
        }
        p = self.dir / "manifest.json"
        p.write_text(to_json_text(data) + "\n", encoding="utf-8", newline="\n")
        return p


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


# -- helpers ------------------------------------------------------------------------------

def _get(spec: Spec, table: dict, key: str, kind, default=None, required: bool = False):
    if key not in table:
        if required:
            raise spec.error(f"missing required key {key!r}", key)
        return default
    value = table[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise spec.error(f"{key} has the wrong type", key)
    return value


def _site(spec: Spec, table: dict, key: str, d: int, default=None):
    value = table.get(key, default)
    if not isinstance(value, list) or len(value) != d or not all(isinstance(c, int) for c in value):
        raise spec.error(f"{key} must be a list of {d} integers", key)
    return tuple(value)


def _disorder_field(spec: Spec, table: dict, key: str, law, seed: int, default):
    value = table.get(key, default)
    if value == "sample":
        return SiteField.sampled(law, seed, 0)
    return SiteField.constant(symbol(value))


# -- verify-identities -------------------------------------------------------------------

def cmd_verify_identities(spec: Spec, out: Outputs, seed: int | None) -> tuple[int, dict]:
    t = spec.data.get("identities", {})
    if not isinstance(t, dict):
        raise spec.error("[identities] must be a table", "identities")
    n = _get(spec, t, "instances", int, 120)
    tol = _get(spec, t, "tolerance", float, identities.TOLERANCE)
    s = seed if seed is not None else _get(spec, t, "seed", int, 0)
    kinds = tuple(t.get("models", ["rfim", "random_coupling"]))
    for k in kinds:
        if k not in ("rfim", "random_coupling"):
            raise spec.error(f"unknown model kind {k!r} in identities.models", "models")
    if n < 1:
        raise spec.error("instances must be positive", "instances")
    report = identities.identity_battery(n, s, tol, kinds)
    out.write_json("identities.json", report.to_json())
    rows = [(k, report.max_residual[k], report.passed[k]) for k in report.max_residual]
    out.write_csv("identities.csv", ["identity", "max_residual", "passed"], rows)
    return (EXIT_OK if report.ok else EXIT_FAIL), {"identities": s}


# -- scan ------------------------------------------------------------------------------------

def _rungwise(ladder, fn):
    """Evaluate ``fn`` rung by rung; stop at the first infeasible rung."""
    results, flag = [], None
    for V in ladder:
        try:
            results.append(fn(V))
        except FEASIBILITY_ERRORS as exc:
            flag = {
                "infeasible_at": len(V),
                "largest_feasible": len(ladder[len(results) - 1]) if results else None,
                "reason": str(exc),
            }
            break
    return results, flag


def _scan_rfim_theorem1(spec, t, ms, seed):
    pot, d = ms.pot, ms.pot.d
    x = _site(spec, t, "x", d, [0] * d)
    ladder = build_ladder(spec, t.get("ladder"), d)
    eta = _disorder_field(spec, t, "eta", ms.law, seed, 0.0)
    res, flag = _rungwise(ladder, lambda V: diag.rfim_theorem1_probe(pot, eta, x, [V]))
    mp = [r.m_plus[0] for r in res]
    mm = [r.m_minus[0] for r in res]
    gap = [a - b for a, b in zip(mp, mm)]
    mono = all(b <= a + 1e-12 for a, b in zip(mp, mp[1:])) and all(b >= a - 1e-12 for a, b in zip(mm, mm[1:]))
    rows = [(len(V), a, b, g) for V, a, b, g in zip(ladder, mp, mm, gap)]
    report = {"m_plus": mp, "m_minus": mm, "gap": gap, "monotone": mono, "verdict": diag.verdict(gap)}
    return ["V", "m_plus", "m_minus", "gap"], rows, report, flag


def _scan_r_vx(spec, t, ms, seed):
    pot, d = ms.pot, ms.pot.d
    x = _site(spec, t, "x", d, [0] * d)
    e1, e2 = symbol(t.get("eta1")), symbol(t.get("eta2"))
    ladder = build_ladder(spec, t.get("ladder"), d)
    lam = build_volume(spec, t.get("lam"), d, "lam") if "lam" in t else None
    eta = _disorder_field(spec, t, "eta", ms.law, seed, "sample")
    fam = diag.default_annulus_family(ms.law, _get(spec, t, "n_sampled", int, 4), seed)
    bc = build_bc(spec, t.get("bc", "plus"))
    width = _get(spec, t, "annulus_width", int, 2)

    def one(V):
        from .lattice import closure

        return diag.r_Vx(pot, eta, x, e1, e2, V, [lam or closure(V, width)], fam, bc).value

    vals, flag = _rungwise(ladder, one)
    rows = [(len(V), v) for V, v in zip(ladder, vals)]
    return ["V", "defect"], rows, {"defect": vals, "verdict": diag.verdict(vals), "family": [f.label for f in fam]}, flag


def _scan_badness_gap(spec, t, ms, seed):
    pot, d = ms.pot, ms.pot.d
    x = _site(spec, t, "x", d, [0] * d)
    e1, e2 = symbol(t.get("eta1")), symbol(t.get("eta2"))
    ladder = build_ladder(spec, t.get("ladder"), d)
    window = build_volume(spec, t.get("window"), d, "window")
    eta = _disorder_field(spec, t, "eta", ms.law, seed, 0.0)
    plus = SiteField.constant(symbol(t.get("plus")))
    minus = SiteField.constant(symbol(t.get("minus")))
    bc = build_bc(spec, t.get("bc", "open"))
    n = _get(spec, t, "n_samples", int, 1024)
    res, flag = _rungwise(ladder, lambda V: diag.badness_gap(
        pot, ms.law, eta, x, e1, e2, [V], window, plus, minus, bc, None, "auto", n, seed))
    rows = [(len(V), r.gaps[0], r.upper_plus[0], r.upper_minus[0]) for V, r in zip(ladder, res)]
    gaps = [r.gaps[0] for r in res]
    report = {"gap": gaps, "method": [r.method[0] for r in res], "verdict": diag.verdict([max(g, 0) for g in gaps])}
    return ["V", "gap", "upper_plus", "upper_minus"], rows, report, flag


def _scan_grising(spec, t, ms, seed):
    d = ms.pot.d
    J = ms.pot.J
    V = build_volume(spec, t.get("window", 5), d, "window")
    zs = t.get("bridges", [[1] + [0] * (d - 1)])
    if not isinstance(zs, list) or not zs:
        raise spec.error("bridges must be a nonempty list of sites", "bridges")
    rows, bridges = [], []
    for z in zs:
        if not isinstance(z, list) or len(z) != d:
            raise spec.error("each bridge must be a site", "bridges")
        a, b = diag.grising_probe(J, V, tuple(z))
        rows.append((a, b))
        bridges.append(z)
    return ["corr_without", "corr_with"], rows, {"bridges": bridges}, None


def _scan_randombond(spec, t, ms, seed):
    d = ms.pot.d
    J1 = _get(spec, t, "J1", float, required=True)
    window = build_volume(spec, t.get("window"), d, "window")
    probed = _get(spec, t, "probed", float, 0.0)
    bridges = t.get("bridges", [[1] + [0] * (d - 1)])
    rows = []
    for base in bridges:
        rows.append(diag.randombond_probe(J1, window, Bond(tuple(base), d - 1), probed))
    return ["p_without", "p_with"], rows, {"bridges": bridges, "probed": probed}, None


def _scan_theorem2(spec, t, ms, seed):
    pot, d = ms.pot, ms.pot.d
    b = t.get("bond")
    if not isinstance(b, list) or len(b) != 2:
        raise spec.error("bond must be [site, axis]", "bond")
    bond = Bond(tuple(b[0]), int(b[1]))
    ladder = build_ladder(spec, t.get("ladder"), d)
    couplings = _disorder_field(spec, t, "couplings", ms.law, seed, "sample")
    fam = diag.default_annulus_family(ms.law, _get(spec, t, "n_sampled", int, 4), seed)
    width = _get(spec, t, "annulus_width", int, 1)
    vals, flag = _rungwise(ladder, lambda V: diag.theorem2_goodness_scan(
        pot, couplings, bond, [V], fam, width).values[0])
    rows = [(len(V), v) for V, v in zip(ladder, vals)]
    return ["V", "defect"], rows, {"defect": vals, "verdict": diag.verdict(vals)}, flag


def _scan_prop4(spec, t, ms, seed):
    pot, d = ms.pot, ms.pot.d
    x = _site(spec, t, "x", d, [0] * d)
    e1, e2 = symbol(t.get("eta1")), symbol(t.get("eta2"))
    ladder = build_ladder(spec, t.get("ladder"), d)
    eta = _disorder_field(spec, t, "eta", ms.law, seed, 0.0)
    bar = SiteField.constant(symbol(t.get("bar")))
    plain = SiteField.constant(symbol(t.get("plain")))
    n_tail = _get(spec, t, "n_tail", int, 8)
    obs = _get(spec, t, "observable", str, "exp_dh")
    res, flag = _rungwise(ladder, lambda V: diag.prop4_surrogate(
        pot, ms.law, eta, x, e1, e2, [V], bar, plain, seed, n_tail, observable=obs))
    rows = [(len(V), r.bar_min[0], r.plain_max[0]) for V, r in zip(ladder, res)]
    report = {"bar_min": [r[1] for r in rows], "plain_max": [r[2] for r in rows],
              "separated": bool(rows and rows[-1][1] > rows[-1][2])}
    return ["V", "bar_min", "plain_max"], rows, report, flag


PROBES = {
    "rfim_theorem1": _scan_rfim_theorem1,
    "r_vx": _scan_r_vx,
    "badness_gap": _scan_badness_gap,
    "grising": _scan_grising,
    "randombond": _scan_randombond,
    "theorem2": _scan_theorem2,
    "prop4": _scan_prop4,
}


def cmd_scan(spec: Spec, out: Outputs, seed: int | None) -> tuple[int, dict]:
    ms = build_model(spec)
    t = spec.section("scan")
    probe = t.get("probe")
    if probe not in PROBES:
        raise spec.error(f"unknown probe {probe!r}; expected one of {', '.join(PROBES)}", "probe")
    s = seed if seed is not None else _get(spec, t, "seed", int, ms.seed)
    try:
        header, rows, report, flag = PROBES[probe](spec, t, ms, s)
    except (diag.DiagnosticsError, ModelError, GeometryError) as exc:
        raise spec.error(f"invalid scan: {exc}", "scan") from None
    report = {"probe": probe, "model": ms.pot.describe(), "seed": s, **report,
              "note": diag.VERDICT_NOTE, "infeasible": flag}
    out.write_json("scan.json", report)
    out.write_csv("scan.csv", header, rows)
    expect = t.get("expect")
    code = EXIT_OK
    if expect is not None and report.get("verdict") != expect:
        code = EXIT_FAIL
    return code, {"scan": s}


# -- mc --------------------------------------------------------------------------------------

def _mc_config(spec: Spec, t: dict, seed: int) -> montecarlo.McConfig:
    try:
        return montecarlo.McConfig(
            sweeps=_get(spec, t, "sweeps", int, 20000),
            burn_in=_get(spec, t, "burn_in", int, 2000),
            chains=_get(spec, t, "chains", int, 4),
            seed=seed,
            dynamics=_get(spec, t, "dynamics", str, "heat_bath"),
            stride=_get(spec, t, "stride", int, 1),
        )
    except montecarlo.McError as exc:
        raise spec.error(f"invalid mc settings: {exc}", "mc") from None


def cmd_mc(spec: Spec, out: Outputs, seed: int | None) -> tuple[int, dict]:
    ms = build_model(spec)
    t = spec.section("mc")
    d = ms.pot.d
    s = seed if seed is not None else _get(spec, t, "seed", int, ms.seed)
    cfg = _mc_config(spec, t, s)
    V = build_volume(spec, t.get("volume", 3), d, "volume")
    bc = build_bc(spec, t.get("bc", "plus"))
    x = _site(spec, t, "x", d, [0] * d)
    kind = _get(spec, t, "observable", str, "up")
    if kind == "up":
        f = montecarlo.LocalObservable.spin_up(x)
    elif kind == "spin":
        f = montecarlo.LocalObservable.spin(x)
    elif kind == "agree":
        f = montecarlo.LocalObservable.agree(x, _site(spec, t, "y", d))
    else:
        raise spec.error(f"unknown observable {kind!r}", "observable")
    field_ = _disorder_field(spec, t, "eta", ms.law, s, "sample")
    from .lattice import closure

    eta = field_.on(closure(V, 1))
    if x not in V:
        raise spec.error("x must lie in the volume", "x")
    est = montecarlo.mc_expectation(ms.pot, eta, V, bc, f, cfg)
    report = {"observable": f.label, "config": cfg.__dict__, "estimate": est.to_json(),
              "model": ms.pot.describe()}
    row = [est.mean, est.std_error, est.n_effective, est.rhat, est.converged]
    header = ["mean", "std_error", "n_effective", "rhat", "converged"]
    code = EXIT_OK
    if t.get("check_exact", False):
        try:
            table = exact_gibbs(ms.pot, V, bc, eta)
        except GibbsError as exc:
            raise spec.error(f"check_exact needs an enumerable volume: {exc}", "check_exact") from None
        cols = table.spins()
        exact = float(table.probs() @ f.fn({s_: cols[s_] for s_ in f.sites}))
        within = abs(est.mean - exact) <= 4.0 * est.std_error
        report.update({"exact": exact, "within_4_sigma": within})
        row += [exact, within]
        header += ["exact", "within_4_sigma"]
        if not within:
            code = EXIT_FAIL
    out.write_json("mc.json", report)
    out.write_csv("mc.csv", header, [row])
    return code, {"mc": s}


# -- entry point -------------------------------------------------------------------------------

COMMANDS = {"verify-identities": cmd_verify_identities, "scan": cmd_scan, "mc": cmd_mc}


def _threads(arg: int | None) -> int:
    if arg is None:
        env = os.environ.get("GIBBSLAB_THREADS")
        if env:
            try:
                arg = int(env)
            except ValueError:
                raise SpecError(f"GIBBSLAB_THREADS must be an integer, got {env!r}") from None
    if arg is not None and arg < 1:
        raise SpecError("--threads must be >= 1")
    with warnings.catch_warnings():
        # numba probes for an outdated TBB on first use; the fallback layer is fine
        warnings.simplefilter("ignore", numba.NumbaWarning)
        if arg is None:
            return numba.get_num_threads()
        n = min(arg, numba.config.NUMBA_NUM_THREADS)
        numba.set_num_threads(n)
    return n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gibbslab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    for name in COMMANDS:
        c = sub.add_parser(name)
        c.add_argument("--spec", required=True, metavar="PATH")
        c.add_argument("--out", default="gibbslab-out", metavar="DIR")
        c.add_argument("--threads", type=int, default=None, metavar="N")
        c.add_argument("--seed", type=int, default=None, metavar="S")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    started = _now()
    try:
        threads = _threads(args.threads)
        spec = load_spec(args.spec)
        out = Outputs(Path(args.out))
        code, seeds = COMMANDS[args.command](spec, out, args.seed)
        out.manifest(spec, seeds, started, threads)
    except SpecError as exc:
        print(f"gibbslab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    status = "ok" if code == EXIT_OK else "failed"
    print(f"gibbslab {args.command}: {status}; outputs in {out.dir}")
    return code


if __name__ == "__main__":
    sys.exit(main())
