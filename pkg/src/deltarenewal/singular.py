"""Exact bookkeeping of delta-derivative atoms carried by characteristic lines.

Conventions (fixed here, checked against the mollified oracle in the tests):

* A singular term on the line ``x = t - tau`` is ``S(x, t) * sum_i c_i delta^(i)(t - x - tau)``.
  An initial atom ``d delta^(m)(x - x*)`` becomes the line ``tau = -x*`` with
  ``c_m = (-1)^m d``.
* Its pairing with a test function is
  ``sum_i c_i (-1)^i int d^i_t(S phi)(x, x + tau) dx`` (integration in ``x``).
* A time atom ``A delta^(r)(t - t*)`` pairs with ``psi(t)`` as ``A (-1)^r psi^(r)(t*)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .characteristics import CharLine, EmissionEvent, along_then_time, gauss_legendre, survival_partials
from .jets import binom

Atoms = tuple[tuple[int, float], ...]


def prune_atoms(atoms: Mapping[int, float] | Iterable[tuple[int, float]], tol_atom: float = 1e-12) -> Atoms:
    """Sorted ``(order, constant)`` pairs with ``|c| <= tol_atom * max|c|`` dropped."""
    items = dict(atoms).items() if not isinstance(atoms, Mapping) else atoms.items()
    items = [(int(i), float(c)) for i, c in items]
    big = max((abs(c) for _, c in items), default=0.0)
    return tuple(sorted((i, c) for i, c in items if c != 0.0 and abs(c) > tol_atom * big))


@dataclass(frozen=True)
class SingularTerm:
    """``S(x, t) sum_i c_i delta^(i)(t - x - tau)`` on ``line``."""

    line: CharLine
    atoms: Atoms

    @property
    def max_order(self) -> int:
        return max((i for i, _ in self.atoms), default=-1)

    def constants(self) -> dict[int, float]:
        return dict(self.atoms)

    def scaled(self, factor: float) -> "SingularTerm":
        return replace(self, atoms=tuple((i, factor * c) for i, c in self.atoms))


# --------------------------------------------------------------------------- products with deltas
def reflection_atoms(fert_order: int, fert_coeff: float, line_atoms: Atoms,
                     dts: np.ndarray) -> dict[int, float]:
    """Time atoms at ``t* = x1 + tau`` produced by ``d delta^(n)(x - x1)`` times a line term.

    ``dts[a, b]`` must hold ``D^a d_t^b S`` at ``(x1, t*)`` for ``a <= n`` and ``b`` up to
    the line order, where ``D = d_x + d_t``.
    """
    n, d = fert_order, fert_coeff
    out: dict[int, float] = {}
    for i, c in line_atoms:
        for k in range(i + 1):
            for l in range(n + 1):
                r = k + l
                val = (d * c * (-1) ** (n + i + r) * binom(i, k) * binom(n, l)
                       * float(dts[n - l, i - k]))
                out[r] = out.get(r, 0.0) + val
    return out


def smooth_times_atoms(f_derivs: Sequence[float], atoms: Mapping[int, float] | Atoms) -> dict[int, float]:
    """``f(t) * sum_r A_r delta^(r)(t - t*)`` rewritten with constant coefficients.

    ``f_derivs[k]`` is ``f^(k)(t*)`` and must cover the largest order present.
    """
    items = atoms.items() if isinstance(atoms, Mapping) else atoms
    out: dict[int, float] = {}
    for r, a in items:
        for k in range(r + 1):
            out[r - k] = out.get(r - k, 0.0) + a * (-1) ** k * binom(r, k) * float(f_derivs[k])
    return out


def delta_product_coeffs(n: int, m: int, dts: np.ndarray) -> list[float]:
    """Coefficients ``F_i``, ``i = 0..n+m``, of ``delta^(i)(t - t*)`` in
    ``int delta^(n)(x - x1) S(x, t) delta^(m)(x - t - x*) dx``.

    ``dts`` is a ``D^a d_t^b S`` table at ``(x1, t*)`` (see :func:`s_time_table`).
    """
    atoms = reflection_atoms(n, 1.0, ((m, float((-1) ** m)),), dts)
    return [atoms.get(i, 0.0) for i in range(n + m + 1)]


def s_time_table(p, x: float, tau: float, a_max: int, b_max: int, panel: float) -> np.ndarray:
    """``T[a, b] = D^a d_t^b S`` at ``(x, x + tau)`` on the branch of the line ``tau``."""
    K = a_max + b_max
    part = survival_partials(p, np.array([x]), np.array([tau]), K, panel)[..., 0]
    table = np.zeros((a_max + 1, b_max + 1))
    for a in range(a_max + 1):
        for b in range(b_max + 1):
            table[a, b] = along_then_time(part, a, b)
    return table


# --------------------------------------------------------------------------- emission
def emit_boundary_singularity(event: EmissionEvent, line: CharLine, *,
                              v_derivs: Sequence[float] | None = None,
                              boundary_coeff: float | None = None,
                              c_derivs: Sequence[float] | None = None,
                              v_atoms: Mapping[int, float] | None = None,
                              tol_atom: float = 1e-12) -> SingularTerm:
    """Atoms of ``u(0, t)`` at an event, launched along ``line``.

    At a boundary-atom time the datum ``d delta^(l)(t - t_j)`` multiplies the regular
    trace ``v_r`` (constants C_i).  At a reflection time the smooth ``c_r`` multiplies
    the atoms of ``v`` (constants E_i).
    """
    boundary = v_derivs is not None or boundary_coeff is not None
    reflection = c_derivs is not None or v_atoms is not None
    if boundary == reflection or (event.kind == "boundary_atom") != boundary:
        raise RuntimeError(f"event at t={event.time} classified inconsistently")
    if boundary:
        atoms = smooth_times_atoms(v_derivs, {line.order: boundary_coeff})
    else:
        atoms = smooth_times_atoms(c_derivs, v_atoms)
    return SingularTerm(line, prune_atoms(atoms, tol_atom))


def initial_term(line: CharLine, coeff: float) -> SingularTerm:
    return SingularTerm(line, ((line.order, float((-1) ** line.order) * coeff),))


# --------------------------------------------------------------------------- orders
@dataclass(frozen=True)
class LedgerEntry:
    time: float
    line: int
    generation: int
    kind: str
    incoming_order: int  # largest parent order, -1 for a boundary atom
    increment: int  # n of the fertility atom(s), or l of the boundary atom
    structural_order: int
    emitted_order: int  # largest order with a nonzero constant

    @property
    def measure_order(self) -> int:
        """Singular order counting a Dirac measure as 1."""
        return self.emitted_order + 1


@dataclass(frozen=True)
class OrderLedger:
    entries: tuple[LedgerEntry, ...] = ()

    def by_generation(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for e in self.entries:
            out[e.generation] = max(out.get(e.generation, -1), e.emitted_order)
        return out

    def to_records(self) -> list[dict]:
        return [dict(e.__dict__, measure_order=e.measure_order) for e in self.entries]


def propagate_orders(lines: Sequence[CharLine], events: Sequence[EmissionEvent],
                     terms: Mapping[int, SingularTerm], fertility_orders: Sequence[int]) -> OrderLedger:
    """Ledger of orders per event; checks growth by ``n`` and constancy when all orders are zero."""
    entries = []
    for ev in events:
        term = terms.get(ev.emitted_line)
        emitted = term.max_order if term is not None else -1
        line = lines[ev.emitted_line]
        if ev.kind == "boundary_atom":
            incoming, inc = -1, line.order
        else:
            incoming = max(lines[j].order for j, _ in ev.contributions)
            inc = max(fertility_orders[k] for _, k in ev.contributions)
        entry = LedgerEntry(ev.time, ev.emitted_line, ev.generation, ev.kind, incoming, inc,
                            line.order, emitted)
        if emitted > entry.structural_order:
            raise RuntimeError(f"emitted order {emitted} exceeds structural bound at t={ev.time}")
        entries.append(entry)
    return OrderLedger(tuple(entries))


# --------------------------------------------------------------------------- pairing
def evaluate_pairing(term: SingularTerm, test_fn, p, max_age: float, horizon: float,
                     panel: float | None = None, q: int = 16, panels: int = 16) -> float:
    """``<S sum_i c_i delta^(i)(t - x - tau), phi>`` by Gauss-Legendre along the line."""
    if not term.atoms:
        return 0.0
    tau = term.line.offset
    x_lo, x_hi, t_lo, t_hi = test_fn.support
    lo = max(x_lo, t_lo - tau, 0.0, -tau)
    hi = min(x_hi, t_hi - tau, max_age, horizon - tau)
    if hi <= lo:
        return 0.0
    kmax = term.max_order
    test_fn.derivative(0, kmax)  # raises SmoothnessError if phi is not smooth enough
    z, w = gauss_legendre(q)
    hpan = (hi - lo) / panels
    xs = (lo + hpan * (np.arange(panels)[:, None] + z[None, :])).ravel()
    ws = np.tile(w * hpan, panels)
    panel = panel or max(max_age, horizon) / 64.0
    part = survival_partials(p, xs, np.full_like(xs, tau), kmax, panel)
    ts = xs + tau
    total = 0.0
    for i, c in term.atoms:
        acc = np.zeros_like(xs)
        for j in range(i + 1):
            acc += binom(i, j) * part[0, j] * test_fn.derivative(0, i - j)(xs, ts)
        total += c * (-1) ** i * float(np.sum(acc * ws))
    return total


def pair_time_atoms(atoms: Mapping[int, float] | Atoms, time: float, psi) -> float:
    """``<sum_r A_r delta^(r)(t - time), psi>``."""
    items = atoms.items() if isinstance(atoms, Mapping) else atoms
    return sum(a * (-1) ** r * float(psi.derivative(r)(time)) for r, a in items)
