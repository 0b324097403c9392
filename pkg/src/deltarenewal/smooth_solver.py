"""Regular part of the solution: a causal march on a characteristic-aligned lattice.

The lattice has ``x_j = j h`` and ``t_k = k h``, so lattice diagonals are
characteristics.  Going from row ``k - 1`` to row ``k`` we

1. advance ``S`` and ``S1`` one cell along every diagonal (Simpson in the cell),
2. launch the singular terms of events in ``(t_{k-1}, t_k]`` through a callback,
3. solve the trapezoid form of the renewal equation for ``v_r(t_k)``.

The regular part on the lattice is ``S * B(t - x) + S1`` behind the diagonal
``x = t`` and ``S * a_r(x - t) + S1`` ahead of it, with ``B = c_r v_r``.
Nothing at row ``k`` reads data from later rows, so results are causal to the bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .characteristics import (
    Region, count_below, default_panel, exponent_x_derivatives, region_index, regions,
    source_values, source_x_derivatives, survival_exponent,
)
from .errors import GeometryError, ParameterError
from .jets import binom, jet_to_derivatives, series_exp, stencil_weights
from .model import ModelConfig

STENCIL_NODES = 8


# --------------------------------------------------------------------------- data types
@dataclass(frozen=True)
class Lattice:
    h: float
    nx: int
    nt: int

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.nx + 1) * self.h

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.nt + 1) * self.h


def make_lattice(cfg: ModelConfig, grid_step: float | None = None, horizon: float | None = None) -> Lattice:
    T = cfg.horizon if horizon is None else horizon
    h_req = grid_step if grid_step is not None else T / cfg.numerics.grid_steps
    if not h_req > 0:
        raise ParameterError("grid step must be positive")
    nx = max(2, math.ceil(cfg.max_age / h_req - 1e-9))
    h = cfg.max_age / nx
    nt = math.ceil(T / h - 1e-9)
    return Lattice(h, nx, nt)


@dataclass
class SmoothField:
    """Samples of the regular part inside one region."""

    region: Region
    x: np.ndarray
    t: np.ndarray
    values: np.ndarray
    interp: str = "cubic"

    def __len__(self) -> int:
        return self.values.size


@dataclass
class BoundaryTrace:
    t: np.ndarray
    v_r: np.ndarray
    u0: np.ndarray  # regular boundary value c_r v_r
    provenance: np.ndarray  # region index (equation) that produced each sample

    def segment(self, lo: float, hi: float) -> "BoundaryTrace":
        m = (self.t >= lo) & (self.t <= hi)
        return BoundaryTrace(self.t[m], self.v_r[m], self.u0[m], self.provenance[m])


@dataclass
class SmoothSolution:
    lattice: Lattice
    horizon: float
    trace: BoundaryTrace
    sample_x: np.ndarray
    sample_t: np.ndarray
    samples: np.ndarray  # [row, col] regular part at (sample_x[col], sample_t[row])
    event_times: np.ndarray
    pairings: dict[str, float] = field(default_factory=dict)

    def fields(self) -> list[SmoothField]:
        X, Tm = np.meshgrid(self.sample_x, self.sample_t)
        inside = Tm <= self.horizon + 1e-12
        idx = region_index(self.event_times, X, Tm)
        out = []
        times = list(self.event_times)
        bounds = [(-np.inf, 0.0)] + list(zip([0.0] + times, times + [np.inf]))
        for i, (lo, hi) in enumerate(bounds):
            m = inside & (idx == i)
            out.append(SmoothField(Region(i, lo, hi), X[m], Tm[m], self.samples[m]))
        return out

    def evaluate(self, x, t):
        """Cubic interpolation of the stored samples."""
        from scipy.interpolate import RegularGridInterpolator

        rgi = RegularGridInterpolator((self.sample_t, self.sample_x), self.samples, method="cubic")
        x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
        return rgi(np.stack([t.ravel(), x.ravel()], axis=-1)).reshape(x.shape)


# --------------------------------------------------------------------------- pointwise pieces
def line_basis(cfg: ModelConfig, tau: float, times: np.ndarray, order: int, panel: float) -> np.ndarray:
    """``d^i_x (b_r S)`` at ``(t - tau, t)`` for ``i <= order``; zero off ``(0, L)``.

    Pairing ``b_r`` with ``S sum_i c_i delta^(i)(t - x - tau)`` gives ``sum_i c_i`` times row ``i``.
    """
    times = np.asarray(times, float)
    xs = times - tau
    out = np.zeros((order + 1, times.size))
    live = (xs > 0.0) & (xs < cfg.max_age)
    if not np.any(live):
        return out
    x = xs[live]
    bvals = np.array([cfg.b_ext(x, k) for k in range(order + 1)])
    if not np.any(bvals):
        return out
    ex = exponent_x_derivatives(cfg.p, x, np.full_like(x, tau), order, panel)
    sj = jet_to_derivatives(series_exp(ex / jet_to_derivatives(np.ones((order + 1, 1)))))
    for i in range(order + 1):
        out[i, live] = sum(binom(i, j) * bvals[i - j] * sj[j] for j in range(i + 1))
    return out


def x_derivatives_of_survival(cfg: ModelConfig, x: float, times: np.ndarray, order: int,
                              panel: float) -> np.ndarray:
    """``d^j_x S(x, t)`` for ``j <= order`` at fixed age ``x``."""
    times = np.asarray(times, float)
    xs = np.full_like(times, x)
    ex = exponent_x_derivatives(cfg.p, xs, times - xs, order, panel)
    fact = jet_to_derivatives(np.ones((order + 1,) + (1,) * times.ndim))
    return jet_to_derivatives(series_exp(ex / fact))


@dataclass
class FertilityTerm:
    """Precomputed pieces of ``(-1)^n d d^n_x u_reg(x1, t_k)``."""

    x1: float
    order: int
    coeff: float
    s_derivs: np.ndarray  # (n+1, nt+1)
    w_n: np.ndarray  # d^n_x S1
    ahead: np.ndarray  # value when t_k <= x1 (uses initial data only)


def _fertility_terms(cfg: ModelConfig, lat: Lattice, panel: float, steps: int) -> list[FertilityTerm]:
    out = []
    t = lat.t
    for atom in cfg.fertility_atoms:
        n = atom.order
        sd = x_derivatives_of_survival(cfg, atom.location, t, n, panel)
        W = source_x_derivatives(cfg.p, cfg.g, np.full_like(t, atom.location), t, n, steps)[n]
        a_arg = atom.location - t
        ahead = W + sum(binom(n, q) * sd[n - q] * cfg.a_ext(a_arg, q) for q in range(n + 1))
        out.append(FertilityTerm(atom.location, n, atom.coefficient, sd, W, ahead))
    return out


# --------------------------------------------------------------------------- march
class MarchState:
    """Read access to the part of the march computed so far (used by event callbacks)."""

    def __init__(self, lat: Lattice, v: np.ndarray, B: np.ndarray, horizon: float):
        self.lattice = lat
        self.v = v
        self.B = B
        self.k = 0
        self.horizon = horizon

    def stride(self) -> int:
        target = min(self.horizon / 256.0, self.lattice.nx * self.lattice.h / 64.0)
        return max(1, int(round(target / self.lattice.h)))

    def v_derivatives(self, time: float, order: int) -> np.ndarray:
        """``v_r^(q)(time)``, ``q <= order``, from a backward stencil over computed rows."""
        last = self.k - 1
        if last < 0:
            raise GeometryError(f"no regular trace available before t = {time}")
        st = self.stride()
        idx = last - st * np.arange(STENCIL_NODES)
        if idx[-1] < 0:
            idx = np.unique(np.round(np.linspace(0, last, min(STENCIL_NODES, last + 1))).astype(int))
        if idx.size <= order:
            raise GeometryError(f"only {idx.size} trace samples before t = {time}; refine the grid")
        h = self.lattice.h
        W = stencil_weights(idx * h - time, order)
        return W @ self.v[idx]


EventHook = Callable[[object, MarchState], "tuple[float, Sequence[tuple[int, float]]] | None"]


def renewal_march(cfg: ModelConfig, initial_terms: Sequence[tuple[float, Sequence[tuple[int, float]]]],
                  events: Sequence, on_event: EventHook, *, grid_step: float | None = None,
                  horizon: float | None = None, tests: dict | None = None,
                  rk_steps: int = 256) -> SmoothSolution:
    """March the regular part through the whole horizon.

    ``initial_terms`` lists ``(tau, atoms)`` of lines present at ``t = 0``.  ``on_event`` is
    called once per event (in time order) when the march reaches it and returns the
    ``(tau, atoms)`` of the launched line, or ``None``.  ``tests`` maps names to 2D test
    functions whose pairing with the regular part is accumulated on the fly.
    """
    T = cfg.horizon if horizon is None else horizon
    lat = make_lattice(cfg, grid_step, T)
    h, nx, nt = lat.h, lat.nx, lat.nt
    x, t = lat.x, lat.t
    panel = default_panel(cfg.max_age, T)
    gap = _fertility_gap(cfg)
    if len(events) and 0 < gap <= h:
        raise ParameterError(f"grid step {h:.3g} must be below the fertility-free age {gap:.3g}")
    fert = _fertility_terms(cfg, lat, panel, rk_steps)
    for f in fert:
        if f.x1 < (STENCIL_NODES + 1) * h:
            raise ParameterError(f"fertility atom at {f.x1} is within {STENCIL_NODES + 1} grid steps of 0")

    p, g = cfg.p, cfg.g
    c_vals = cfg.c_r(t)
    bw = cfg.b_ext(x) * h
    bw[0] *= 0.5
    bw[-1] *= 0.5

    line_total = np.zeros(nt + 1)

    def add_line(tau: float, atoms, k_from: int) -> None:
        if not atoms:
            return
        order = max(i for i, _ in atoms)
        ks = np.arange(k_from, nt + 1)
        basis = line_basis(cfg, tau, t[ks], order, panel)
        line_total[ks] += sum(c * basis[i] for i, c in atoms)

    for tau, atoms in initial_terms:
        add_line(tau, atoms, 0)

    v = np.zeros(nt + 1)
    B = np.zeros(nt + 1)
    state = MarchState(lat, v, B, T)
    ev_times = np.array([e.time for e in events])
    ev_ptr = 0

    stride = max(1, cfg.numerics.output_stride)
    cols = np.arange(0, nx + 1, stride)
    if cols[-1] != nx:
        cols = np.append(cols, nx)
    rows: list[np.ndarray] = []
    row_t: list[float] = []
    tests = dict(tests or {})
    pair_acc = {name: 0.0 for name in tests}
    test_boxes = {name: fn.support for name, fn in tests.items()}
    xw = np.full(nx + 1, h)
    xw[0] = xw[-1] = 0.5 * h

    S = np.ones(nx + 1)
    S1 = np.zeros(nx + 1)
    p_row = p(x, 0.0 * x)
    g_row = g(x, 0.0 * x)

    for k in range(nt + 1):
        tk = t[k]
        if k > 0:
            xm = x[1:] - 0.5 * h
            pm = p(xm, np.full_like(xm, tk - 0.5 * h))
            gm = g(xm, np.full_like(xm, tk - 0.5 * h))
            p_new = p(x, np.full_like(x, tk))
            g_new = g(x, np.full_like(x, tk))
            p0, p1 = p_row[:-1], p_new[1:]
            dE = h / 6.0 * (p0 + 4.0 * pm + p1)
            dEh = h / 24.0 * (-p0 + 8.0 * pm + 5.0 * p1)
            eE = np.exp(dE)
            src = h / 6.0 * (eE * g_row[:-1] + 4.0 * np.exp(dEh) * gm + g_new[1:])
            S = np.concatenate(([1.0], S[:-1] * eE))
            S1 = np.concatenate(([0.0], S1[:-1] * eE + src))
            p_row, g_row = p_new, g_new
        state.k = k
        while ev_ptr < ev_times.size and ev_times[ev_ptr] <= tk + 1e-12 * max(1.0, T):
            launched = on_event(events[ev_ptr], state)
            if launched is not None:
                tau, atoms = launched
                add_line(tau, atoms, k)
            ev_ptr += 1

        # regular part on row k, except the implicit boundary node
        u = S1.copy()
        m = min(k - 1, nx)
        if m >= 1:
            j = np.arange(1, m + 1)
            u[1:m + 1] += S[1:m + 1] * B[k - j]
        if k + 1 <= nx:
            u[k + 1:] += S[k + 1:] * cfg.a_ext(x[k + 1:] - tk)
        fert_total = 0.0
        for f in fert:
            fert_total += f.coeff * (-1) ** f.order * _fertility_value(f, k, tk, B, state, cfg)
        implicit = c_vals[k]
        if k == 0:
            u0_known = 0.5 * float(cfg.a_ext(0.0))
            implicit = 0.5 * c_vals[0]
        elif k <= nx:
            u[k] = S1[k] + S[k] * 0.5 * (B[0] + float(cfg.a_ext(0.0)))
            u0_known = 0.0
        else:
            u0_known = 0.0
        u[0] = u0_known
        R = float(np.dot(bw[1:], u[1:])) + bw[0] * u0_known + line_total[k] + fert_total
        v[k] = R / (1.0 - bw[0] * implicit)
        B[k] = c_vals[k] * v[k]
        u[0] = u0_known + implicit * v[k]

        if k % stride == 0 or k == nt:
            rows.append(u[cols].copy())
            row_t.append(tk)
        for name, fn in tests.items():
            x_lo, x_hi, t_lo, t_hi = test_boxes[name]
            if t_lo < tk < t_hi:
                wt = 0.5 * h if (k == 0 or k == nt) else h
                pair_acc[name] += wt * float(np.dot(xw, u * fn(x, np.full_like(x, tk))))

    times_sorted = np.array(sorted({e.time for e in events if e.time < T}))
    prov = region_index(times_sorted, np.zeros_like(t), t)
    trace = BoundaryTrace(t, v, B, prov)
    return SmoothSolution(lat, T, trace, x[cols], np.array(row_t), np.array(rows), times_sorted,
                          pair_acc)


def _fertility_value(f: FertilityTerm, k: int, tk: float, B: np.ndarray, state: MarchState,
                     cfg: ModelConfig) -> float:
    """``d^n_x u_reg(x1, t_k)`` using ``B`` derivatives at ``t_k - x1`` behind the diagonal."""
    if tk <= f.x1:
        return float(f.ahead[k])
    n = f.order
    s = tk - f.x1
    h = state.lattice.h
    st = state.stride()
    ic = int(math.floor(s / h + 1e-9))
    J = STENCIL_NODES // 2 - 1
    idx = ic + st * (np.arange(STENCIL_NODES) - J)
    if idx[0] < 0:
        idx = st * np.arange(STENCIL_NODES)
    if idx[-1] > k - 1:
        st = max(1, (k - 1 - ic) // (STENCIL_NODES - 1 - J))
        idx = ic + st * (np.arange(STENCIL_NODES) - J)
        if idx[0] < 0 or idx[-1] > k - 1:
            raise GeometryError(f"stencil for the trace at t={s:.4g} leaves the computed range")
    W = stencil_weights(idx * h - s, n)
    bd = W @ B[idx]
    return float(f.w_n[k] + sum(binom(n, q) * (-1) ** q * f.s_derivs[n - q, k] * bd[q]
                               for q in range(n + 1)))


def _fertility_gap(cfg: ModelConfig) -> float:
    from .model import detect_fertility_gap

    return detect_fertility_gap(cfg)


# --------------------------------------------------------------------------- region views
def solve_omega0(cfg: ModelConfig, nx: int = 64, nt: int = 64) -> SmoothField:
    """``S1 + S a_r(x - t)`` on a grid of the region ``t < x < t + L`` within the horizon."""
    xs = np.linspace(0.0, cfg.max_age, nx + 1)
    ts = np.linspace(0.0, min(cfg.horizon, cfg.max_age), nt + 1)
    X, Tm = np.meshgrid(xs, ts)
    m = X >= Tm
    X, Tm = X[m], Tm[m]
    panel = default_panel(cfg.max_age, cfg.horizon)
    E = survival_exponent(cfg.p, X, Tm, panel)
    vals = np.exp(E) * cfg.a_ext(X - Tm) + source_values(cfg.p, cfg.g, X, Tm, panel)
    return SmoothField(Region(0, -cfg.max_age, 0.0), X, Tm, vals)


@dataclass(frozen=True)
class I0Result:
    smooth: float
    atoms: tuple[tuple[float, tuple[tuple[int, float], ...]], ...]  # (time, ((order, const), ...))


def compute_I0(t: float, cfg: ModelConfig, omega0: SmoothField | None = None, panels: int = 64) -> I0Result:
    """Contribution of the initial-data region to ``v(t) = int b u dx``.

    Smooth part: ``int_t^L b_r u_reg dx``, the fertility atoms acting on ``u_reg`` where
    they sit ahead of the diagonal, and ``b_r`` acting on the initial-atom lines.  The
    atoms are the products of fertility atoms with initial lines, at their emission times.
    """
    from .characteristics import build_singular_support, gauss_legendre
    from .singular import initial_term, reflection_atoms, s_time_table

    panel = default_panel(cfg.max_age, cfg.horizon)
    smooth = 0.0
    if t < cfg.max_age:
        z, w = gauss_legendre(8)
        hp = (cfg.max_age - t) / panels
        xs = (t + hp * (np.arange(panels)[:, None] + z)).ravel()
        ws = np.tile(w * hp, panels)
        ts = np.full_like(xs, t)
        u = np.exp(survival_exponent(cfg.p, xs, ts, panel)) * cfg.a_ext(xs - t) \
            + source_values(cfg.p, cfg.g, xs, ts, panel)
        smooth += float(np.sum(ws * cfg.b_ext(xs) * u))
    tt = np.array([t])
    for atom in cfg.fertility_atoms:
        if atom.location <= t:
            continue
        n = atom.order
        sd = x_derivatives_of_survival(cfg, atom.location, tt, n, panel)[:, 0]
        W = source_x_derivatives(cfg.p, cfg.g, np.array([atom.location]), tt, n)[n, 0]
        val = W + sum(binom(n, q) * sd[n - q] * float(cfg.a_ext(atom.location - t, q)) for q in range(n + 1))
        smooth += (-1) ** n * atom.coefficient * val
    lines, _ = build_singular_support(cfg)
    atoms_out = []
    for ln in lines:
        if ln.origin != "initial_atom":
            continue
        term = initial_term(ln, cfg.initial_atoms[ln.atom].coefficient)
        basis = line_basis(cfg, ln.offset, tt, ln.order, panel)[:, 0]
        smooth += sum(c * basis[i] for i, c in term.atoms)
        for fa in cfg.fertility_atoms:
            ts_ = fa.location + ln.offset
            if 0.0 < ts_ < cfg.horizon:
                tab = s_time_table(cfg.p, fa.location, ln.offset, fa.order, ln.order, panel)
                at = reflection_atoms(fa.order, fa.coefficient, term.atoms, tab)
                atoms_out.append((ts_, tuple(sorted(at.items()))))
    return I0Result(smooth, tuple(sorted(atoms_out)))


def solve_omega1(cfg: ModelConfig, solution=None, **solve_kwargs) -> tuple[SmoothField, BoundaryTrace]:
    """Regular part on the first strip ``0 < t - x < t1*`` and the trace on ``(0, t1*)``."""
    sol = solution if solution is not None else _hybrid(cfg, **solve_kwargs)
    smooth = sol.smooth if hasattr(sol, "smooth") else sol
    f = smooth.fields()[1]
    hi = f.region.s_upper if math.isfinite(f.region.s_upper) else smooth.horizon
    return f, smooth.trace.segment(0.0, hi)


def extend_over_event(cfg: ModelConfig, event, solution=None, **solve_kwargs) -> SmoothField:
    """Regular part on the strip that starts at ``event`` (singular part excluded)."""
    sol = solution if solution is not None else _hybrid(cfg, **solve_kwargs)
    smooth = sol.smooth if hasattr(sol, "smooth") else sol
    for f in smooth.fields()[1:]:
        if abs(f.region.s_lower - event.time) <= 1e-12 * max(1.0, smooth.horizon):
            return f
    raise ValueError(f"no strip starts at t = {event.time}")


def _hybrid(cfg, **kwargs):
    from .hybrid import solve

    return solve(cfg, **kwargs)
