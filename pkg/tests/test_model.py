import pytest

from conftest import DEMO, config_text, make_cfg
from deltarenewal.errors import AssumptionError, ConfigError, DomainError, TripleIntersectionError
from deltarenewal.model import (DataAtom, check_assumptions, detect_fertility_gap, load_config,
                                parse_config, require_assumptions, serialize_config)


def verdict(cfg, name):
    return next(v for v in check_assumptions(cfg) if v.name == name)


def test_no_atom_sections_give_empty_lists():
    cfg = make_cfg(T=1.0)
    assert cfg.initial_atoms == cfg.fertility_atoms == cfg.boundary_atoms == ()
    assert not cfg.has_atoms


def test_single_initial_atom():
    cfg = make_cfg(initial=[(0.25, 0, 1.0)])
    assert cfg.initial_atoms == (DataAtom(0.25, 0, 1.0),)


def test_atom_outside_domain():
    with pytest.raises(DomainError):
        make_cfg(initial=[(1.5, 0, 1.0)])


def test_unknown_key_is_named():
    text = config_text() + "\n[extra]\nfoo = 1\n"
    with pytest.raises(ConfigError, match="extra"):
        parse_config(text)
    with pytest.raises(ConfigError, match="rates"):
        parse_config(config_text().replace('p = "0"', 'q = "0"'))


def test_missing_domain_key():
    with pytest.raises(ConfigError, match="domain.T"):
        parse_config("[domain]\nL = 1.0\n[rates]\n")


def test_invalid_toml_and_unreadable_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config("not = = toml")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")


def test_zero_atoms_dropped_and_duplicates_merged():
    cfg = make_cfg(initial=[(0.3, 0, 0.0), (0.25, 1, 1.0), (0.25, 1, 2.0)])
    assert cfg.initial_atoms == (DataAtom(0.25, 1, 3.0),)


def test_negative_order_rejected():
    with pytest.raises(ConfigError):
        make_cfg(initial=[(0.25, -1, 1.0)])


def test_round_trip(demo_cfg):
    again = parse_config(serialize_config(demo_cfg))
    assert again == demo_cfg
    assert serialize_config(again) == serialize_config(demo_cfg)


def test_demo_passes_all_assumptions(demo_cfg):
    vs = check_assumptions(demo_cfg)
    assert [v.name for v in vs] == ["A1", "A2", "A3", "A4", "A5"]
    assert all(v.passed for v in vs)
    require_assumptions(vs)


def test_a1_fails_for_quadratic_contact():
    cfg = make_cfg(a_r="x**2*(1-x)**2", initial=[(0.25, 0, 1.0)], fertility=[(0.6, 0, 1.0)],
                   numerics={"check_order": 2})
    v = verdict(cfg, "A1")
    assert not v.passed and v.severity == "fatal"
    with pytest.raises(AssumptionError):
        require_assumptions(check_assumptions(cfg))


def test_a1_is_not_fatal_without_atoms():
    cfg = make_cfg(a_r="x**2*(1-x)**2", numerics={"check_order": 2})
    v = verdict(cfg, "A1")
    assert v.passed or v.severity == "warning"


def test_a2_requires_fertility_gap_near_zero():
    cfg = make_cfg(b_r="x*(1-x)**8", initial=[(0.25, 0, 1.0)], fertility=[(0.6, 0, 1.0)])
    assert not verdict(cfg, "A2").passed


def test_fertility_gap_detected(demo_cfg):
    assert detect_fertility_gap(demo_cfg) == pytest.approx(0.2, abs=0.04)


def test_a4_pass_and_fail():
    kw = dict(DEMO)
    assert verdict(make_cfg(**kw), "A4").passed
    kw["fertility"] = [(0.75, 0, 1.0)]
    bad = make_cfg(**kw)
    v = verdict(bad, "A4")
    assert not v.passed
    assert "triple singularity intersection" in v.message
    with pytest.raises(TripleIntersectionError):
        require_assumptions(check_assumptions(bad))


def test_a5_is_warning_only():
    cfg = make_cfg(T=1.0, p="-800")
    v = verdict(cfg, "A5")
    assert v.severity == "warning"
    require_assumptions(check_assumptions(cfg))
