"""Brute-force reference: mollify every atom, solve classically, pass to the limit.

The regularised problem is marched on a unit-CFL lattice (``h_x = h_t``) so that
pure transport is exact.  Along each diagonal cell

    u_new = e^dE u_old + h/2 (e^dE g_old + g_new),   dE = h/2 (p_old + p_new),

and the boundary value solves ``u(0, t) = c_eps(t) * trapezoid(b_eps u)`` implicitly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.integrate import trapezoid

from .characteristics import build_singular_support
from .errors import ParameterError
from .model import ModelConfig


@dataclass(frozen=True)
class Mollifier:
    """``q(s^2) (1 - s^2)^power (1 + skew s)`` on ``[-1, 1]`` with unit mass.

    ``vanishing_moments`` counts the moments ``1..r`` that vanish.  Odd moments vanish by
    symmetry; even ones are removed by the polynomial factor ``q``.  A nonzero ``skew``
    (``|skew| < 1``) breaks the symmetry and gives the profile a nonzero first moment,
    which slows the eps-convergence of smooth pairings from second to first order.
    """

    power: int = 8
    vanishing_moments: int = 1
    skew: float = 0.0

    def __post_init__(self):
        if not abs(self.skew) < 1.0:
            raise ParameterError("mollifier skew must lie in (-1, 1) to keep the profile positive")

    @property
    def coefficients(self) -> np.ndarray:
        M = 1 + self.vanishing_moments // 2
        base = P.polypow([1.0, 0.0, -1.0], self.power)

        def moment(k: int) -> float:
            c = P.polyint(P.polymul(base, [0.0] * k + [1.0]))
            return float(P.polyval(1.0, c) - P.polyval(-1.0, c))

        A = np.array([[moment(2 * i + 2 * j) for i in range(M)] for j in range(M)])
        rhs = np.zeros(M)
        rhs[0] = 1.0
        a = np.linalg.solve(A, rhs)
        q = np.zeros(2 * M - 1)
        q[::2] = a
        c = P.polymul(q, base)
        return P.polymul(c, [1.0, self.skew]) if self.skew else c

    def profile(self, order: int = 0):
        c = self.coefficients
        if order:
            c = P.polyder(c, order)
        return lambda s: np.where(np.abs(s) < 1.0, P.polyval(np.asarray(s, float), c), 0.0)

    def delta(self, eps: float, order: int = 0):
        """Approximation of ``delta^(order)`` at scale ``eps``."""
        rho = self.profile(order)
        return lambda z: eps ** (-(order + 1)) * rho(np.asarray(z, float) / eps)


@dataclass
class GridSolution:
    eps: float
    h: float
    x: np.ndarray  # stored sample columns
    t: np.ndarray  # stored sample rows
    u: np.ndarray  # [row, col]
    trace_t: np.ndarray
    v: np.ndarray
    pairings: dict[str, float] = field(default_factory=dict)
    stride: int = 1


def min_event_gap(cfg: ModelConfig, horizon: float) -> float:
    sup = build_singular_support(cfg, horizon)
    times = sorted({e.time for e in sup.events} | {a.location for a in cfg.boundary_atoms if a.location < horizon})
    gaps = np.diff(times)
    return float(gaps.min()) if gaps.size else math.inf


def oracle_step(cfg: ModelConfig, eps: float, horizon: float | None = None) -> float:
    """Default grid step: ``eps / oracle_resolution``, or a fixed fine step without atoms."""
    if cfg.has_atoms:
        return eps / cfg.numerics.oracle_resolution
    T = cfg.horizon if horizon is None else horizon
    return max(cfg.max_age, T) / (2 * cfg.numerics.grid_steps)


def check_eps(cfg: ModelConfig, eps: float, h: float | None = None, horizon: float | None = None) -> float:
    """Validate ``eps`` against the grid and the event spacing; returns the snapped grid step."""
    T = cfg.horizon if horizon is None else horizon
    if not eps > 0:
        raise ParameterError("eps must be positive")
    h_req = oracle_step(cfg, eps, T) if h is None else h
    nx = max(2, math.ceil(cfg.max_age / h_req - 1e-9))
    h = cfg.max_age / nx
    if cfg.has_atoms and eps < 4 * h * (1 - 1e-9):
        raise ParameterError(f"eps={eps:.3g} does not resolve the mollifier: need eps >= 4h = {4 * h:.3g}")
    gap = min_event_gap(cfg, T)
    if cfg.has_atoms and eps >= 0.5 * gap:
        raise ParameterError(f"eps={eps:.3g} must stay below half the minimal event gap {gap:.3g}")
    return h


def solve_regularized(cfg: ModelConfig, eps: float, h: float | None = None, *,
                      horizon: float | None = None, tests: Mapping | None = None,
                      mollifier: Mollifier | None = None, stride: int | None = None,
                      max_cells: float = 4e6) -> GridSolution:
    """Solve the mollified problem; pairings with ``tests`` are accumulated during the march."""
    T = cfg.horizon if horizon is None else horizon
    mol = mollifier or Mollifier()
    h = check_eps(cfg, eps, h, T)
    nx = round(cfg.max_age / h)
    nt = math.ceil(T / h - 1e-9)
    x = np.arange(nx + 1) * h
    t = np.arange(nt + 1) * h

    a0 = cfg.a_ext(x)
    for atom in cfg.initial_atoms:
        a0 = a0 + atom.coefficient * mol.delta(eps, atom.order)(x - atom.location)
    b = cfg.b_ext(x)
    for atom in cfg.fertility_atoms:
        b = b + atom.coefficient * mol.delta(eps, atom.order)(x - atom.location)
    c = cfg.c_r(t)
    for atom in cfg.boundary_atoms:
        c = c + atom.coefficient * mol.delta(eps, atom.order)(t - atom.location)
    bw = b * h
    bw[0] *= 0.5
    bw[-1] *= 0.5
    xw = np.full(nx + 1, h)
    xw[0] = xw[-1] = 0.5 * h

    if stride is None:
        stride = max(1, int(math.ceil(math.sqrt((nx + 1) * (nt + 1) / max_cells))))
    cols = np.arange(0, nx + 1, stride)
    if cols[-1] != nx:
        cols = np.append(cols, nx)
    rows, row_t = [], []
    tests = dict(tests or {})
    acc = {k: 0.0 for k in tests}
    v = np.zeros(nt + 1)

    p, g = cfg.p, cfg.g
    u = a0.copy()
    p_old = p(x, np.zeros_like(x))
    g_old = g(x, np.zeros_like(x))
    v[0] = float(np.dot(bw, u))
    for k in range(nt + 1):
        tk = t[k]
        if k > 0:
            p_new = p(x, np.full_like(x, tk))
            g_new = g(x, np.full_like(x, tk))
            eE = np.exp(0.5 * h * (p_old[:-1] + p_new[1:]))
            u_next = np.empty_like(u)
            u_next[1:] = eE * u[:-1] + 0.5 * h * (eE * g_old[:-1] + g_new[1:])
            R = float(np.dot(bw[1:], u_next[1:]))
            v[k] = R / (1.0 - bw[0] * c[k])
            u_next[0] = c[k] * v[k]
            u, p_old, g_old = u_next, p_new, g_new
        if k % stride == 0 or k == nt:
            rows.append(u[cols].copy())
            row_t.append(tk)
        for name, fn in tests.items():
            _, _, t_lo, t_hi = fn.support
            if t_lo < tk < t_hi:
                wt = 0.5 * h if (k == 0 or k == nt) else h
                acc[name] += wt * float(np.dot(xw, u * fn(x, np.full_like(x, tk))))
    return GridSolution(eps, h, x[cols], np.array(row_t), np.array(rows), t, v, acc, stride)


def weak_pairing(sol: GridSolution, test_fn, name: str | None = None) -> float:
    """Tensor-trapezoid pairing of the stored samples with ``test_fn``.

    If the function was registered under ``name`` during the march, the full-resolution
    accumulated value is returned instead.
    """
    if name is not None and name in sol.pairings:
        return sol.pairings[name]
    X, Tm = np.meshgrid(sol.x, sol.t)
    return float(trapezoid(trapezoid(sol.u * test_fn(X, Tm), sol.x, axis=1), sol.t))


def trace_pairing(sol: GridSolution, psi) -> float:
    return float(trapezoid(sol.v * psi(sol.trace_t), sol.trace_t))


# --------------------------------------------------------------------------- convergence
@dataclass
class ConvergenceRow:
    name: str
    eps: float
    pairing: float
    extrapolate: float
    hybrid: float
    rel_err: float


@dataclass
class TestOutcome:
    name: str
    eps: list[float]
    values: list[float]
    extrapolated: float
    rate: float
    hybrid: float
    rel_err: float
    tolerance: float
    monotone: bool

    @property
    def passed(self) -> bool:
        return bool(self.rel_err <= self.tolerance)


def extrapolate(eps: Sequence[float], values: Sequence[float]) -> tuple[float, float, bool]:
    """Richardson limit with the rate fitted from the last three values.

    Returns ``(limit, rate, monotone)``.  With fewer than three values, or when the
    differences change sign, the last value is returned and ``monotone`` is False.
    """
    e = np.asarray(eps, float)
    y = np.asarray(values, float)
    if y.size < 3:
        return float(y[-1]), math.nan, False
    d1, d2 = y[-2] - y[-3], y[-1] - y[-2]
    if d2 == 0.0:
        return float(y[-1]), math.inf, True
    if d1 == 0.0 or np.sign(d1) != np.sign(d2):
        return float(y[-1]), math.nan, False
    q1, q2 = e[-3] / e[-2], e[-2] / e[-1]
    if abs(q1 - q2) > 1e-9 * q1:
        raise ParameterError("extrapolation needs a geometric eps sequence")
    rate = math.log(abs(d1 / d2)) / math.log(q2)
    if rate <= 0:
        return float(y[-1]), rate, False
    limit = y[-1] + d2 / (q2 ** rate - 1.0)
    return float(limit), float(rate), True


def convergence_report(cfg: ModelConfig, eps_sequence: Sequence[float], tests: Mapping,
                       hybrid_values: Mapping[str, float], *, tolerance: float | Mapping[str, float] = 1e-3,
                       trace_tests: Mapping | None = None, horizon: float | None = None,
                       mollifier: Mollifier | None = None, floor: float = 0.0) -> list[TestOutcome]:
    """Run the oracle for each ``eps`` and compare extrapolated pairings with the hybrid values.

    ``tests`` are 2D test functions paired with ``u``; ``trace_tests`` are 1D test
    functions paired with ``v``.  ``floor`` guards relative errors of near-zero values.
    """
    eps_sequence = sorted(eps_sequence, reverse=True)
    trace_tests = dict(trace_tests or {})
    values: dict[str, list[float]] = {k: [] for k in list(tests) + list(trace_tests)}
    sol = None
    for eps in eps_sequence:
        # without atoms eps plays no role, so one grid run serves the whole sequence
        if sol is None or cfg.has_atoms:
            run_eps = eps if cfg.has_atoms else eps_sequence[-1]
            sol = solve_regularized(cfg, run_eps, horizon=horizon, tests=tests, mollifier=mollifier)
        for name in tests:
            values[name].append(sol.pairings[name])
        for name, psi in trace_tests.items():
            values[name].append(trace_pairing(sol, psi))
    out = []
    for name, vals in values.items():
        lim, rate, mono = extrapolate(eps_sequence, vals)
        hyb = float(hybrid_values[name])
        tol = tolerance[name] if isinstance(tolerance, Mapping) else tolerance
        rel = abs(lim - hyb) / max(abs(hyb), floor, 1e-300)
        out.append(TestOutcome(name, list(eps_sequence), vals, lim, rate, hyb, rel, tol, mono))
    return out


def report_rows(outcomes: Sequence[TestOutcome]) -> list[ConvergenceRow]:
    rows = []
    for o in outcomes:
        for e, v in zip(o.eps, o.values):
            rows.append(ConvergenceRow(o.name, e, v, o.extrapolated, o.hybrid, o.rel_err))
    return rows


def write_convergence_csv(path: str | Path, outcomes: Sequence[TestOutcome]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["test", "eps", "pairing", "extrapolate", "hybrid", "rel_err", "rate", "passed"])
        for o in outcomes:
            for e, v in zip(o.eps, o.values):
                w.writerow([o.name, repr(e), repr(v), repr(o.extrapolated), repr(o.hybrid),
                            repr(o.rel_err), repr(o.rate), o.passed])


# --------------------------------------------------------------------------- default battery
def oracle_horizon(cfg: ModelConfig, generations: int = 2) -> float:
    """Horizon covering the events of generation ``<= generations``.

    The cut sits halfway between the last kept event and the first dropped one, so it never
    falls on an emission time.
    """
    T = cfg.horizon
    events = build_singular_support(cfg, T).events
    later = [e.time for e in events if e.generation > generations]
    if not later:
        return T
    cut = min(later)
    before = [e.time for e in events if e.time < cut]
    return 0.5 * (cut + max(before, default=0.0))


def _fit_radius(xc: float, tc: float, cfg: ModelConfig, horizon: float, offsets: Sequence[float],
                avoid: bool) -> float:
    """Largest admissible half-width of a box test function centred at ``(xc, tc)``."""
    r = min(xc, cfg.max_age - xc, tc, horizon - tc, 0.25 * min(cfg.max_age, horizon))
    if avoid:
        for tau in offsets:
            # the box spans t - x in [tc - xc - 2r, tc - xc + 2r]
            r = min(r, 0.45 * abs(tc - xc - tau))
    return max(r, 0.0)


def default_battery(cfg: ModelConfig, horizon: float | None = None) -> tuple[dict, dict]:
    """Test functions probing every feature the oracle can see below ``horizon``.

    Returns ``(tests_2d, trace_tests)``: box bumps crossing each initial line, box bumps in
    smooth strips away from all lines, and trace bumps around each emission time with one
    odd/even moment per atom order.
    """
    from .testfunctions import Bump1D, Bump2D

    T = oracle_horizon(cfg) if horizon is None else horizon
    L = cfg.max_age
    sup = build_singular_support(cfg, T)
    offsets = [ln.offset for ln in sup.lines]
    tests: dict = {}
    trace: dict = {}
    min_r = 1e-3 * min(L, T)

    first = min((e.time for e in sup.events), default=T)
    for ln in sup.lines:
        if ln.origin != "initial_atom":
            continue
        x_star = -ln.offset
        tc = 0.5 * min(first, L - x_star, T)
        xc = tc + x_star
        r = _fit_radius(xc, tc, cfg, T, [o for o in offsets if o != ln.offset], avoid=True)
        if r > min_r:
            tests[f"line{ln.index}"] = Bump2D.around(xc, tc, r)

    # smooth probes: centres of the strips between consecutive line offsets
    cuts = sorted({-L, *offsets, T})
    for i, (lo, hi) in enumerate(zip(cuts[:-1], cuts[1:])):
        s = 0.5 * (lo + hi)
        if s < 0:
            tc = 0.5 * min(T, L + s)
            xc = tc - s
        else:
            xc = 0.5 * min(L, T - s)
            tc = xc + s
        r = _fit_radius(xc, tc, cfg, T, offsets, avoid=True)
        if r > min_r:
            tests[f"smooth{i}"] = Bump2D.around(xc, tc, r)

    times = sorted({e.time for e in sup.events})
    for e in sup.events:
        nb = [abs(e.time - t) for t in times if t != e.time] + [e.time, T - e.time]
        r = 0.4 * min(nb)
        if r <= min_r:
            continue
        order = sup.lines[e.emitted_line].order
        for k in range(order + 1):
            trace[f"trace{e.emitted_line}_m{k}"] = Bump1D(e.time, r, 8, k)
    return tests, trace


def run_verification(cfg: ModelConfig, eps_sequence: Sequence[float] | None = None, *,
                     grid_step: float | None = None, horizon: float | None = None,
                     mollifier: Mollifier | None = None, tolerance: float | None = None
                     ) -> list[TestOutcome]:
    """Hybrid solve and oracle battery on the same test functions.

    ``eps_sequence`` is relative to the horizon of the configuration.
    """
    from .hybrid import solve

    T_or = oracle_horizon(cfg) if horizon is None else horizon
    rel = cfg.numerics.eps_sequence if eps_sequence is None else eps_sequence
    eps = [float(e) * cfg.horizon for e in rel]
    for e in eps:
        check_eps(cfg, e, horizon=T_or)
    tests, trace = default_battery(cfg, T_or)
    hyb = solve(cfg, grid_step=grid_step, horizon=T_or, tests=tests)
    values = {name: hyb.pairing(name, fn) for name, fn in tests.items()}
    values.update({name: hyb.trace_pairing(psi) for name, psi in trace.items()})
    if tolerance is None:
        tolerance = 1e-3 if cfg.has_atoms else 1e-6
    return convergence_report(cfg, eps, tests, values, tolerance=tolerance, trace_tests=trace,
                              horizon=hyb.horizon, mollifier=mollifier)
