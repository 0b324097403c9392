"""End-to-end hybrid solve: assumption gate, singular support, causal march, atoms."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.integrate import trapezoid

from .characteristics import SingularSupport, build_singular_support, default_panel
from .model import AssumptionVerdict, ModelConfig, check_assumptions, require_assumptions
from .singular import (
    OrderLedger, SingularTerm, emit_boundary_singularity, evaluate_pairing, initial_term,
    pair_time_atoms, propagate_orders, prune_atoms, reflection_atoms, s_time_table,
)
from .smooth_solver import MarchState, SmoothSolution, make_lattice, renewal_march

log = logging.getLogger(__name__)


@dataclass
class HybridSolution:
    config: ModelConfig
    horizon: float
    support: SingularSupport
    smooth: SmoothSolution
    terms: dict[int, SingularTerm]  # by line index
    v_atoms: dict[int, tuple[float, tuple[tuple[int, float], ...]]]  # by emitted line
    ledger: OrderLedger
    verdicts: list[AssumptionVerdict]
    flags: list[str] = field(default_factory=list)

    @property
    def events(self):
        return self.support.events

    def singular_pairing(self, test_fn) -> float:
        cfg = self.config
        return sum(evaluate_pairing(term, test_fn, cfg.p, cfg.max_age, self.horizon)
                   for _, term in sorted(self.terms.items()))

    def pairing(self, name: str, test_fn) -> float:
        """Full pairing ``<u, phi>``; ``name`` must have been registered at solve time."""
        return self.smooth.pairings[name] + self.singular_pairing(test_fn)

    def trace_pairing(self, psi) -> float:
        """``<v, psi>`` including the atoms of ``v`` at emission times."""
        tr = self.smooth.trace
        m = tr.t <= self.horizon + 1e-12
        smooth = float(trapezoid(tr.v_r[m] * psi(tr.t[m]), tr.t[m]))
        lo, hi = psi.support
        return smooth + sum(pair_time_atoms(atoms, t, psi) for t, atoms in self.v_atoms.values()
                            if lo < t < hi)


def solve(cfg: ModelConfig, *, grid_step: float | None = None, horizon: float | None = None,
          tests: Mapping | None = None, rk_steps: int = 256) -> HybridSolution:
    """Validate ``cfg`` and compute the regular part plus every singular term below the horizon."""
    verdicts = check_assumptions(cfg)
    require_assumptions(verdicts)
    flags = [v.line() for v in verdicts if not v.passed]
    T = cfg.horizon if horizon is None else horizon
    lat = make_lattice(cfg, grid_step, T)
    tol = cfg.numerics.tol_event * T
    probe = build_singular_support(cfg, T + 2 * tol)
    if any(abs(e.time - T) <= tol for e in probe.events):
        T = T - lat.h
        flags.append(f"horizon falls on an emission time; shrunk by one grid step to {T:.12g}")
    support = build_singular_support(cfg, T)
    panel = default_panel(cfg.max_age, T)
    tol_atom = cfg.numerics.tol_atom

    terms: dict[int, SingularTerm] = {}
    v_atoms: dict[int, tuple[float, tuple]] = {}
    initial = []
    for ln in support.lines:
        if ln.origin == "initial_atom":
            term = initial_term(ln, cfg.initial_atoms[ln.atom].coefficient)
            terms[ln.index] = term
            initial.append((ln.offset, term.atoms))

    def on_event(ev, state: MarchState):
        line = support.lines[ev.emitted_line]
        if ev.kind == "boundary_atom":
            atom = cfg.boundary_atoms[ev.atom]
            vd = state.v_derivatives(ev.time, atom.order)
            term = emit_boundary_singularity(ev, line, v_derivs=vd, boundary_coeff=atom.coefficient,
                                             tol_atom=tol_atom)
        else:
            acc: dict[int, float] = {}
            for j, kf in ev.contributions:
                parent = terms.get(j)
                if parent is None or not parent.atoms:
                    continue
                fa = cfg.fertility_atoms[kf]
                tab = s_time_table(cfg.p, fa.location, parent.line.offset, fa.order, parent.max_order, panel)
                for r, a in reflection_atoms(fa.order, fa.coefficient, parent.atoms, tab).items():
                    acc[r] = acc.get(r, 0.0) + a
            vat = prune_atoms(acc, tol_atom)
            v_atoms[line.index] = (ev.time, vat)
            top = max((r for r, _ in vat), default=0)
            cd = [float(cfg.c_r.derivative(q)(ev.time)) for q in range(top + 1)]
            term = emit_boundary_singularity(ev, line, c_derivs=cd, v_atoms=dict(vat), tol_atom=tol_atom)
        terms[line.index] = term
        return line.offset, term.atoms

    smooth = renewal_march(cfg, initial, support.events, on_event, grid_step=grid_step, horizon=T,
                           tests=tests, rk_steps=rk_steps)
    ledger = propagate_orders(support.lines, support.events, terms,
                              [a.order for a in cfg.fertility_atoms])
    for e in ledger.entries:
        if e.kind == "reflection" and e.emitted_order != e.structural_order:
            flags.append(f"emission at t={e.time:.6g}: top order {e.structural_order} cancelled "
                         f"(observed {e.emitted_order})")
    return HybridSolution(cfg, T, support, smooth, terms, v_atoms, ledger, verdicts, flags)
