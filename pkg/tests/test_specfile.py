import pytest

from gibbslab.disorder import SingleSiteLaw
from gibbslab.lattice import box, centered_box
from gibbslab.specfile import (
    SpecError,
    build_bc,
    build_ladder,
    build_law,
    build_model,
    build_volume,
    load_spec,
    parse_spec_text,
    symbol,
)

RFIM = """
[model]
model = "rfim"
d = 2
J = 2.0
h = 1.0
law = { alphabet = [-1.0, 0.0, 1.0], probs = ["1/4", "1/2", "1/4"] }
"""


def test_toml_and_json_parse_to_the_same_model():
    a = build_model(parse_spec_text(RFIM, "a.toml"))
    b = build_model(parse_spec_text(
        '{"model": {"model": "rfim", "d": 2, "J": 2.0, "h": 1.0, '
        '"law": {"alphabet": [-1.0, 0.0, 1.0], "probs": ["1/4", "1/2", "1/4"]}}}', "b.json"))
    assert a.pot.describe() == b.pot.describe()
    assert a.law == b.law == SingleSiteLaw((-1.0, 0.0, 1.0), (0.25, 0.5, 0.25))


def test_syntax_errors_carry_positions():
    with pytest.raises(SpecError) as e:
        parse_spec_text("[model]\nJ = = 2\n", "x.toml")
    assert e.value.line == 2
    with pytest.raises(SpecError) as e:
        parse_spec_text('{"model": \n  [1,}', "x.json")
    assert e.value.line == 2
    with pytest.raises(SpecError, match="empty spec"):
        parse_spec_text("  \n", "x.toml")


def test_semantic_errors_point_at_the_key():
    spec = parse_spec_text(RFIM.replace('model = "rfim"', 'model = "potts"'), "x.toml")
    with pytest.raises(SpecError) as e:
        build_model(spec)
    assert (e.value.line, e.value.column) == (3, 1)
    spec = parse_spec_text(RFIM.replace("J = 2.0", "J = -2.0"), "x.toml")
    with pytest.raises(SpecError, match="invalid model"):
        build_model(spec)


def test_law_strings():
    spec = parse_spec_text(RFIM, "x.toml")
    assert build_law(spec, "bernoulli_pm(0.25)").probs == (0.75, 0.25)
    assert build_law(spec, "three_valued_symmetric(1/3, 2)").alphabet == (-2.0, 0.0, 2.0)
    with pytest.raises(SpecError):
        build_law(spec, "gaussian(1)")
    with pytest.raises(SpecError):
        build_law(spec, {"alphabet": [1, 2]})


def test_other_models():
    rc = build_model(parse_spec_text('[model]\nmodel = "random_coupling"\nd = 1\n'
                                     'law = "three_valued_symmetric(0.5)"\n', "x.toml"))
    assert rc.law.alphabet == ((-1.0,), (0.0,), (1.0,))
    gs = build_model(parse_spec_text('[model]\nmodel = "grising"\nJ = 2.0\n', "x.toml"))
    assert gs.law.alphabet == (0, 1)


def test_volumes_ladders_and_bcs():
    spec = parse_spec_text(RFIM, "x.toml")
    assert build_volume(spec, 3, 2, "v") == centered_box(3, 2)
    assert build_volume(spec, {"lo": [0, 0], "hi": [1, 2]}, 2, "v") == box((0, 0), (1, 2))
    assert build_volume(spec, "box: [0..1]^2", 2, "v") == box(0, 1, 2)
    with pytest.raises(SpecError):
        build_volume(spec, "box: [0..1]^3", 2, "v")
    assert len(build_ladder(spec, [1, 2, 3], 2)) == 3
    with pytest.raises(SpecError):
        build_ladder(spec, [3, 2], 2)
    assert build_bc(spec, "minus").kind == "minus"
    with pytest.raises(SpecError):
        build_bc(spec, "periodic")
    assert symbol([1, 0]) == (1.0, 0.0)


def test_load_spec_digest(tmp_path):
    p = tmp_path / "s.toml"
    p.write_text(RFIM)
    a, b = load_spec(p), load_spec(p)
    assert a.digest == b.digest and len(a.digest) == 64
    with pytest.raises(SpecError):
        load_spec(tmp_path / "missing.toml")
    with pytest.raises(SpecError):
        parse_spec_text(RFIM, "x.toml").section("scan")
