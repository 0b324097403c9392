import numpy as np
import pytest

from conftest import DEMO, make_cfg
from deltarenewal.errors import TripleIntersectionError
from deltarenewal.hybrid import solve
from deltarenewal.testfunctions import Bump1D, Bump2D


def test_demo_events_and_atoms(demo_solution):
    assert [e.time for e in demo_solution.events] == pytest.approx([0.35, 0.95, 1.55, 2.0, 2.15])
    (t, atoms) = demo_solution.v_atoms[2]
    # first emission carries S(x1, t*) exactly
    s = np.exp(-0.175 - 0.2 * (0.06125 + 0.0875) + 0.1 * np.sin(0.35))
    assert atoms == ((0, pytest.approx(s, rel=1e-12)),)
    assert demo_solution.flags == []


def test_refuses_triple_intersection():
    with pytest.raises(TripleIntersectionError):
        solve(make_cfg(**dict(DEMO, fertility=[(0.75, 0, 1.0)])))


def test_horizon_on_event_is_shrunk():
    sol = solve(make_cfg(**dict(DEMO, T=0.95)), grid_step=0.01)
    assert sol.horizon == pytest.approx(0.94)
    assert any("shrunk" in f for f in sol.flags)


def _scaled(d):
    return make_cfg(**dict(DEMO, initial=[(0.25, 0, d)]))


def test_linearity_in_initial_atom():
    phi = Bump2D.around(0.5, 1.3, 0.15)
    tests = {"phi": phi}
    base = solve(_scaled(0.0), grid_step=1 / 256, tests=tests)  # zero atoms are dropped
    one = solve(_scaled(1.0), grid_step=1 / 256, tests=tests)
    two = solve(_scaled(2.0), grid_step=1 / 256, tests=tests)
    for line in one.terms:
        if one.terms[line].line.origin == "boundary_atom":
            continue
        for (i, a), (j, b) in zip(one.terms[line].atoms, two.terms[line].atoms):
            assert i == j and b == pytest.approx(2 * a, rel=1e-13)
    s0, s1, s2 = (s.singular_pairing(phi) for s in (base, one, two))
    assert s2 - s0 == pytest.approx(2 * (s1 - s0), rel=1e-12, abs=1e-15)
    f0, f1, f2 = (s.pairing("phi", phi) for s in (base, one, two))
    assert f2 - f0 == pytest.approx(2 * (f1 - f0), rel=1e-9)


def test_causality_bitwise():
    kw = dict(DEMO, g="0.1*x")
    a = solve(make_cfg(**kw), grid_step=1 / 256)
    b = solve(make_cfg(**dict(kw, g="0.1*x + Piecewise((5*(t-2)**3, t > 2), (0, True))")), grid_step=1 / 256)
    k = int(np.searchsorted(a.smooth.sample_t, 2.0, side="right")) - 1
    assert np.array_equal(a.smooth.samples[:k], b.smooth.samples[:k])
    m = a.smooth.trace.t < 2.0
    assert np.array_equal(a.smooth.trace.v_r[m], b.smooth.trace.v_r[m])
    assert not np.array_equal(a.smooth.samples, b.smooth.samples)


def test_trace_pairing_includes_atoms(demo_solution):
    from scipy.integrate import trapezoid

    psi = Bump1D(0.35, 0.1)
    tr = demo_solution.smooth.trace
    smooth = trapezoid(tr.v_r * psi(tr.t), tr.t)
    atom = demo_solution.v_atoms[2][1][0][1]
    assert demo_solution.trace_pairing(psi) == pytest.approx(smooth + atom * psi(0.35), rel=1e-14)
