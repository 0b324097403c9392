import math

import numpy as np
import pytest

from conftest import emission_cfg, make_cfg
from deltarenewal.characteristics import CharLine, EmissionEvent, build_singular_support
from deltarenewal.errors import SmoothnessError
from deltarenewal.hybrid import solve
from deltarenewal.singular import (
    SingularTerm, delta_product_coeffs, emit_boundary_singularity, evaluate_pairing, initial_term,
    pair_time_atoms, prune_atoms, reflection_atoms, s_time_table, smooth_times_atoms,
)
from deltarenewal.testfunctions import Bump1D, Bump2D

P = "-0.5 - 0.4*x + 0.2*cos(3*t) + 0.3*x*t"
X1, TS = 0.6, 0.35


def closed_form():
    """S, D S and d_t S at (0.6, 0.35) on the line x = t + 0.25 for the rate ``P``."""
    def p(x, t):
        return -0.5 - 0.4 * x + 0.2 * math.cos(3 * t) + 0.3 * x * t
    E = sum(w * p(s + 0.25, s) for s, w in _gl(0.0, TS))
    S = math.exp(E)
    # d_t E = p(x, t) - int_0^t p_x(x - t + s, s) ds with p_x = -0.4 + 0.3 s
    dtE = p(X1, TS) - (-0.4 * TS + 0.15 * TS ** 2)
    return S, p(X1, TS) * S, dtE * S


def _gl(a, b, n=20):
    z, w = np.polynomial.legendre.leggauss(n)
    return zip(0.5 * (b - a) * z + 0.5 * (a + b), 0.5 * (b - a) * w)


def table(n, m):
    cfg = emission_cfg(n, m)
    return s_time_table(cfg.p, X1, -0.25, n, m, 1 / 64)


def test_flat_rate_coefficients():
    tab = np.zeros((3, 3))
    tab[0, 0] = 1.0
    assert delta_product_coeffs(0, 0, tab) == [1.0]
    F = delta_product_coeffs(1, 0, tab)
    assert F == [0.0, 1.0]


def test_generic_rate_coefficients_closed_form():
    S, DS, dtS = closed_form()
    assert delta_product_coeffs(0, 0, table(0, 0)) == pytest.approx([S], rel=1e-12)
    assert delta_product_coeffs(1, 0, table(1, 0)) == pytest.approx([-DS, S], rel=1e-10)
    assert delta_product_coeffs(0, 1, table(0, 1)) == pytest.approx([dtS, -S], rel=1e-10)


def test_frozen_emission_atoms():
    # values verified against the mollified oracle (see the acceptance suite)
    frozen = {(0, 0): [0.8455309253056175], (1, 0): [0.4882820947260675, 0.8455309253056175],
              (0, 1): [-0.3854443959357718, -0.8455309253056175]}
    for (n, m), want in frozen.items():
        sol = solve(emission_cfg(n, m), grid_step=0.01)
        (t, atoms), = sol.v_atoms.values()
        assert t == pytest.approx(TS)
        assert [c for _, c in atoms] == pytest.approx(want, rel=1e-9)


def test_smooth_times_atoms_leibniz():
    # f(t) delta'(t - s) = f(s) delta' - f'(s) delta
    out = smooth_times_atoms([2.0, 3.0], {1: 1.0})
    assert out == {1: 2.0, 0: -3.0}


def _line(order=0, offset=2.0):
    return CharLine(1, offset, "boundary_atom", 0, order, atom=0)


def test_boundary_atom_constant_is_trace_value():
    ev = EmissionEvent(2.0, 0, "boundary_atom", 1, 0, atom=0)
    term = emit_boundary_singularity(ev, _line(), v_derivs=[0.7], boundary_coeff=1.0)
    assert term.atoms == ((0, 0.7),)


def test_reflection_with_unit_birth_rate_copies_atoms():
    ev = EmissionEvent(0.35, 1, "reflection", 1, 1, contributions=((0, 0),))
    term = emit_boundary_singularity(ev, _line(1, 0.35), c_derivs=[1.0, 0.0],
                                     v_atoms={0: 0.4, 1: 0.8})
    assert dict(term.atoms) == {0: 0.4, 1: 0.8}


def test_reflection_with_generic_birth_rate():
    ev = EmissionEvent(0.35, 1, "reflection", 1, 0, contributions=((0, 0),))
    term = emit_boundary_singularity(ev, _line(0, 0.35), c_derivs=[0.3], v_atoms={0: 0.5})
    assert term.atoms == ((0, pytest.approx(0.15)),)


def test_inconsistent_classification():
    ev = EmissionEvent(2.0, 0, "boundary_atom", 1, 0, atom=0)
    with pytest.raises(RuntimeError):
        emit_boundary_singularity(ev, _line(), c_derivs=[1.0], v_atoms={0: 1.0})


def test_prune_atoms():
    assert prune_atoms({0: 1.0, 1: 1e-15, 2: 0.0}) == ((0, 1.0),)


class Window:
    """phi = 1 on a box; only valid for order-0 terms away from the box edge."""

    def __init__(self, box):
        self.support = box

    def derivative(self, ix=0, it=0):
        if ix or it:
            return lambda x, t: np.zeros_like(x)
        return lambda x, t: np.ones_like(x)


def test_pairing_length_of_line_window():
    line = CharLine(0, -0.25, "initial_atom", 0, 0, atom=0)
    term = SingularTerm(line, ((0, 1.0),))
    val = evaluate_pairing(term, Window((0.3, 0.6, 0.0, 2.0)), make_cfg().p, 1.0, 2.0)
    assert val == pytest.approx(0.3, rel=1e-12)


def test_pairing_disjoint_support_is_zero():
    term = initial_term(CharLine(0, -0.25, "initial_atom", 0, 0, atom=0), 1.0)
    phi = Bump2D.around(0.8, 0.2, 0.1)
    assert evaluate_pairing(term, phi, make_cfg().p, 1.0, 2.0) == 0.0


def test_pairing_requires_smoothness():
    term = initial_term(CharLine(0, -0.25, "initial_atom", 0, 3, atom=0), 1.0)
    phi = Bump2D.around(0.5, 0.25, 0.1, power=2)
    with pytest.raises(SmoothnessError):
        evaluate_pairing(term, phi, make_cfg().p, 1.0, 2.0)


def test_order_one_pairing_is_integration_by_parts():
    # <-delta'(t - x - tau), phi> = -int d_t phi(x, x + tau) dx for S = 1
    term = initial_term(CharLine(0, -0.25, "initial_atom", 0, 1, atom=0), 1.0)
    phi = Bump2D.around(0.5, 0.25, 0.1)
    xs = np.linspace(0.4, 0.6, 20001)
    from scipy.integrate import trapezoid

    ref = -trapezoid(phi.derivative(0, 1)(xs, xs - 0.25), xs)
    assert evaluate_pairing(term, phi, make_cfg().p, 1.0, 2.0) == pytest.approx(ref, rel=1e-7)


def test_time_atom_pairing():
    psi = Bump1D(0.5, 0.1)
    assert pair_time_atoms(((0, 2.0), (1, 1.0)), 0.5, psi) == pytest.approx(2.0 * psi(0.5))


def test_order_ledger_growth():
    cfg = make_cfg(T=2.0, b_r="0", c_r="t**8/(1+t**8)", initial=[(0.25, 0, 1.0)], fertility=[(0.6, 1, 1.0)])
    sol = solve(cfg)
    by_gen = sol.ledger.by_generation()
    assert [by_gen[g] for g in (1, 2, 3)] == [1, 2, 3]
    assert all(e.measure_order == e.emitted_order + 1 for e in sol.ledger.entries)


def test_order_ledger_constant_for_plain_deltas(demo_solution):
    assert {e.emitted_order for e in demo_solution.ledger.entries} == {0}


def test_empty_ledger_without_atoms():
    sol = solve(make_cfg(T=0.5))
    assert sol.ledger.entries == ()
