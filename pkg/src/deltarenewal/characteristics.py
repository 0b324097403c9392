"""Characteristics, path integrals along them, and the singular-support event set.

Every characteristic has slope one.  The one through ``(x, t)`` enters the
domain at ``(x - l, t - l)`` with ``l = min(x, t)``: on the initial line when
``x >= t`` and on the boundary ``x = 0`` otherwise.  A line ``x = t - tau`` with
``tau < 0`` carries initial data; ``tau > 0`` means it was launched from the
boundary at time ``tau``.

Survival exponent ``E`` and source accumulation ``S1`` are

    E(x, t)  = int_0^l p(x - l + r, t - l + r) dr,          S = exp(E)
    S1(x, t) = int_0^l exp(E(x, t) - E(x - l + r, t - l + r)) g(...) dr.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterator

import numpy as np
from scipy import integrate

from .errors import NumericalError, TripleIntersectionError
from .functions import SmoothFunction
from .jets import binom, series_diff, series_exp_2d, series_mul


def theta(x, t):
    """``(t - x) H(t - x)``: how long ago the characteristic through (x, t) left age 0."""
    return np.maximum(np.asarray(t, float) - np.asarray(x, float), 0.0)


# --------------------------------------------------------------------------- quadrature
@lru_cache(maxsize=None)
def gauss_legendre(q: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [0, 1]."""
    z, w = np.polynomial.legendre.leggauss(q)
    return (z + 1.0) / 2.0, w / 2.0


_CHUNK = 1 << 18


def path_integral(func: Callable, x0, t0, length, panel: float, q: int = 8) -> np.ndarray:
    """``int_0^length func(x0 + r, t0 + r) dr`` for arrays of start points and lengths.

    Each element uses ``ceil(length / panel)`` Gauss-Legendre panels of its own, so
    the result for one point never depends on the other points in the batch.
    """
    x0, t0, length = np.broadcast_arrays(np.asarray(x0, float), np.asarray(t0, float),
                                         np.asarray(length, float))
    shape = x0.shape
    x0, t0, length = x0.ravel(), t0.ravel(), length.ravel()
    out = np.zeros(x0.size)
    npan = np.maximum(np.ceil(length / panel - 1e-12), 1).astype(int)
    z, w = gauss_legendre(q)
    pmax_all = int(npan.max(initial=1))
    chunk = max(1, _CHUNK // (q * pmax_all))
    for lo in range(0, x0.size, chunk):
        sl = slice(lo, lo + chunk)
        P = npan[sl]
        pmax = int(P.max(initial=1))
        k = np.arange(pmax)[None, :, None]
        active = k < P[:, None, None]
        hpan = (length[sl] / P)[:, None, None]
        r = hpan * (np.minimum(k, P[:, None, None] - 1) + z[None, None, :])
        vals = func(x0[sl][:, None, None] + r, t0[sl][:, None, None] + r)
        out[sl] = np.sum(np.where(active, vals * w[None, None, :] * hpan, 0.0), axis=(1, 2))
    return out.reshape(shape)


def default_panel(max_age: float, horizon: float) -> float:
    return max(max_age, horizon) / 64.0


def _entry(x, t):
    x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
    ell = np.minimum(x, t)
    return x - ell, t - ell, ell


# --------------------------------------------------------------------------- pointwise S, S1
def _quad(func, a: float, b: float, numerics) -> float:
    atol = getattr(numerics, "quad_atol", 1e-10)
    rtol = getattr(numerics, "quad_rtol", 1e-8)
    if b <= a:
        return 0.0
    val, err = integrate.quad(func, a, b, epsabs=atol, epsrel=rtol, limit=200)
    if not (err <= max(atol, rtol * abs(val)) * 10.0) or not math.isfinite(val):
        raise NumericalError(f"quadrature on [{a}, {b}] did not converge", residual=err)
    return val


def survival(x, t, rate: SmoothFunction, sign: int = +1, numerics=None):
    """``exp(+-int_theta^t rate(tau + x - t, tau) dtau)``; ``sign=-1`` gives the reciprocal factor."""
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    xa, ta = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
    out = np.empty(xa.shape)
    for idx in np.ndindex(xa.shape):
        xi, ti = float(xa[idx]), float(ta[idx])
        if rate.is_zero:
            out[idx] = 1.0
            continue
        f = lambda tau: float(rate(tau + xi - ti, tau))  # noqa: E731
        with np.errstate(over="ignore"):
            out[idx] = np.exp(sign * _quad(f, max(ti - xi, 0.0), ti, numerics))
    return out if out.ndim else float(out)


def source_accum(x, t, cfg, numerics=None):
    """Duhamel accumulation ``S1`` of the source ``g`` along the characteristic through (x, t)."""
    numerics = numerics or cfg.numerics
    p, g = cfg.p, cfg.g
    xa, ta = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
    out = np.empty(xa.shape)
    for idx in np.ndindex(xa.shape):
        xi, ti = float(xa[idx]), float(ta[idx])
        if g.is_zero:
            out[idx] = 0.0
            continue
        lo = max(ti - xi, 0.0)

        def integrand(tau):
            inner = 0.0 if p.is_zero else _quad(lambda s: float(p(s + xi - ti, s)), tau, ti, numerics)
            return math.exp(inner) * float(g(tau + xi - ti, tau))

        out[idx] = _quad(integrand, lo, ti, numerics)
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------- vectorised S, S1
def survival_exponent(p: SmoothFunction, x, t, panel: float) -> np.ndarray:
    """``E(x, t)`` for arrays of points (fixed-panel Gauss-Legendre)."""
    x0, t0, ell = _entry(x, t)
    if p.is_zero:
        return np.zeros(ell.shape)
    return path_integral(p, x0, t0, ell, panel)


def source_values(p: SmoothFunction, g: SmoothFunction, x, t, panel: float, q: int = 8) -> np.ndarray:
    """``S1(x, t)`` for arrays of points; inner partial integrals use mapped GL rules."""
    x0, t0, ell = _entry(x, t)
    shape = ell.shape
    if g.is_zero:
        return np.zeros(shape)
    x0, t0, ell = x0.ravel(), t0.ravel(), ell.ravel()
    npan = np.maximum(np.ceil(ell / panel - 1e-12), 1).astype(int)
    pmax = int(npan.max(initial=1))
    z, w = gauss_legendre(q)
    k = np.arange(pmax)[None, :]
    active = k < npan[:, None]
    hp = (ell / npan)[:, None]
    start = hp * np.minimum(k, npan[:, None] - 1)  # panel starts, (N, P)
    # exponent from r to ell at each node: rest of own panel + later panels
    if p.is_zero:
        tail = np.zeros(start.shape + (q,))
    else:
        full = np.where(active, path_integral(p, x0[:, None] + start, t0[:, None] + start,
                                              np.broadcast_to(hp, start.shape), panel=np.inf, q=q), 0.0)
        later = np.cumsum(full[:, ::-1], axis=1)[:, ::-1] - full  # panels after this one
        r = start[..., None] + hp[..., None] * z  # nodes, (N, P, q)
        rest_len = start[..., None] + hp[..., None] - r
        rest = path_integral(p, x0[:, None, None] + r, t0[:, None, None] + r, rest_len,
                             panel=np.inf, q=q)
        tail = rest + later[..., None]
    r = start[..., None] + hp[..., None] * z
    gv = g(x0[:, None, None] + r, t0[:, None, None] + r)
    integrand = np.exp(tail) * gv * (w * hp[..., None])
    return np.sum(np.where(active[..., None], integrand, 0.0), axis=(1, 2)).reshape(shape)


# --------------------------------------------------------------------------- derivatives
def _p_derivs_at(p: SmoothFunction, i: int, j: int, x, t) -> np.ndarray:
    if p.is_zero:
        return np.zeros(np.broadcast(np.asarray(x), np.asarray(t)).shape)
    return p.derivative((i, j))(x, t)


def boundary_exponent_derivatives(p: SmoothFunction, s, order: int) -> np.ndarray:
    """``d^b_x E(0, s)`` for ``b <= order``; follows from ``E(0, t) = 0`` and ``DE = p``."""
    s = np.asarray(s, float)
    out = np.zeros((order + 1,) + s.shape)
    for b in range(1, order + 1):
        for j in range(b):
            out[b] += (-1) ** j * _p_derivs_at(p, b - 1 - j, j, 0.0 * s, s)
    return out


def exponent_x_derivatives(p: SmoothFunction, x, tau, order: int, panel: float) -> np.ndarray:
    """``d^b_x E`` at the points ``(x, x + tau)`` for ``b <= order``, shape ``(order+1, ...)``.

    Along the characteristic ``d/dr (d^b_x E) = d^b_x p``; the entry value is zero on
    the initial line and given by :func:`boundary_exponent_derivatives` on x = 0.
    """
    x, tau = np.broadcast_arrays(np.asarray(x, float), np.asarray(tau, float))
    omega1 = tau > 0
    x_in = np.where(omega1, 0.0, -tau)
    length = np.maximum(x - x_in, 0.0)
    out = np.zeros((order + 1,) + x.shape)
    if p.is_zero:
        return out
    bnd = boundary_exponent_derivatives(p, np.where(omega1, tau, 0.0), order)
    for b in range(order + 1):
        out[b] = path_integral(p.derivative((b, 0)), x_in, x_in + tau, length, panel)
        out[b] += np.where(omega1, bnd[b], 0.0)
    return out


def survival_partials(p: SmoothFunction, x, tau, order: int, panel: float) -> np.ndarray:
    """Table ``P[i, j] = d^i_x d^j_t S`` at ``(x, x + tau)`` for ``i + j <= order``.

    Works in coordinates ``(a, b)`` with ``x = a + b, t = a``: then ``d_a`` is the
    derivative along the characteristic (``d_a E = p``) and ``d_b = d_x``.
    """
    x, tau = np.broadcast_arrays(np.asarray(x, float), np.asarray(tau, float))
    K = order
    e = np.zeros((K + 1, K + 1) + x.shape)
    ex = exponent_x_derivatives(p, x, tau, K, panel)
    t = x + tau
    for b in range(K + 1):
        e[0, b] = ex[b] / math.factorial(b)
    if not p.is_zero:
        for a in range(1, K + 1):
            for b in range(K - a + 1):
                acc = np.zeros(x.shape)
                for q in range(a):
                    acc += binom(a - 1, q) * p.derivative((q + b, a - 1 - q))(x, t)
                e[a, b] = acc / (math.factorial(a) * math.factorial(b))
    f = series_exp_2d(e)
    dab = np.zeros_like(f)
    for a in range(K + 1):
        for b in range(K + 1 - a):
            dab[a, b] = f[a, b] * math.factorial(a) * math.factorial(b)
    out = np.zeros_like(f)
    for i in range(K + 1):
        for j in range(K + 1 - i):
            for q in range(j + 1):
                out[i, j] += binom(j, q) * (-1) ** q * dab[j - q, i + q]
    return out


def along_then_time(partials: np.ndarray, a: int, b: int) -> np.ndarray:
    """``D^a d_t^b S`` with ``D = d_x + d_t``, from a :func:`survival_partials` table."""
    return sum(binom(a, q) * partials[q, a - q + b] for q in range(a + 1))


def _boundary_source_jets(p: SmoothFunction, g: SmoothFunction, s: np.ndarray, n: int) -> np.ndarray:
    """``d^k_x S1(0, s)`` for ``k <= n`` from ``S1(0, t) = 0`` and ``D S1 = p S1 + g``."""
    zero = np.zeros_like(s)
    pj = [np.array([_p_derivs_at(p, i, q, zero, s) / math.factorial(q) for q in range(n - i)])
          if n - i > 0 else np.zeros((1,) + s.shape) for i in range(n + 1)]
    gj = [np.array([_p_derivs_at(g, i, q, zero, s) / math.factorial(q) for q in range(n - i)])
          if n - i > 0 else np.zeros((1,) + s.shape) for i in range(n + 1)]
    w = [np.zeros((n + 1,) + s.shape)]
    for k in range(1, n + 1):
        deg = n - k
        acc = gj[k - 1][: deg + 1] - series_diff(w[k - 1])[: deg + 1]
        for i in range(k):
            acc = acc + binom(k - 1, i) * series_mul(pj[i], w[k - 1 - i], deg)
        w.append(acc)
    return np.array([w[k][0] for k in range(n + 1)])


def source_x_derivatives(p: SmoothFunction, g: SmoothFunction, x, t, order: int,
                         steps: int = 256) -> np.ndarray:
    """``d^k_x S1(x, t)`` for ``k <= order`` by fixed-step RK4 along each characteristic.

    ``W_k = d^k_x S1`` obeys ``D W_k = sum_i C(k,i) d^i_x p W_{k-i} + d^k_x g``.
    Every point takes ``steps`` steps of its own length, so points never interact.
    """
    x0, t0, ell = _entry(x, t)
    shape = ell.shape
    x0, t0, ell = x0.ravel(), t0.ravel(), ell.ravel()
    n = order
    if g.is_zero:
        return np.zeros((n + 1,) + shape)
    W = np.zeros((n + 1, ell.size))
    omega1 = t0 > 0
    if n > 0 and np.any(omega1):
        W[:, omega1] = _boundary_source_jets(p, g, t0[omega1], n)
    h = ell / steps

    def coeffs(r):
        xs, ts = x0 + r, t0 + r
        return ([_p_derivs_at(p, i, 0, xs, ts) for i in range(n + 1)],
                [g.derivative((i, 0))(xs, ts) for i in range(n + 1)])

    def rhs(state, pc, gc):
        out = np.empty_like(state)
        for k in range(n + 1):
            acc = gc[k].copy()
            for i in range(k + 1):
                acc += binom(k, i) * pc[i] * state[k - i]
            out[k] = acc
        return out

    c0 = coeffs(0.0)
    for m in range(steps):
        r = m * h
        cm = coeffs(r + 0.5 * h)
        c1 = coeffs(r + h)
        k1 = rhs(W, *c0)
        k2 = rhs(W + 0.5 * h * k1, *cm)
        k3 = rhs(W + 0.5 * h * k2, *cm)
        k4 = rhs(W + h * k3, *c1)
        W = W + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        c0 = c1
    return W.reshape((n + 1,) + shape)


# --------------------------------------------------------------------------- singular support
@dataclass(frozen=True)
class CharLine:
    """The characteristic ``x = t - offset`` carrying a singular term."""

    index: int
    offset: float
    origin: str  # "initial_atom" | "boundary_atom" | "reflection"
    generation: int
    order: int  # structural maximal delta order
    parent: int | None = None
    parents: tuple[tuple[int, int], ...] = ()  # (line index, fertility atom index)
    atom: int | None = None  # index into the initial or boundary atom list

    @property
    def branch(self) -> int:
        """0 if the line lives in x > t, 1 if it was launched from x = 0."""
        return 0 if self.offset < 0 else 1

    def x_at(self, t):
        return np.asarray(t, float) - self.offset

    @property
    def start_time(self) -> float:
        return max(self.offset, 0.0)


@dataclass(frozen=True)
class EmissionEvent:
    time: float
    generation: int
    kind: str  # "reflection" | "boundary_atom"
    emitted_line: int
    max_delta_order: int
    contributions: tuple[tuple[int, int], ...] = ()  # (parent line, fertility atom)
    atom: int | None = None  # boundary atom index

    @property
    def source_line(self) -> int | None:
        return self.contributions[0][0] if self.contributions else None


@dataclass(frozen=True)
class SingularSupport:
    lines: tuple[CharLine, ...]
    events: tuple[EmissionEvent, ...]
    collisions: tuple[tuple[float, str], ...] = field(default=(), compare=False)

    def __iter__(self) -> Iterator:
        return iter((list(self.lines), list(self.events)))

    @property
    def times(self) -> np.ndarray:
        return np.array([e.time for e in self.events])


def _trace_support(cfg, horizon: float) -> SingularSupport:
    tol = cfg.numerics.tol_event * horizon
    fert = cfg.fertility_atoms
    lines: list[CharLine] = []
    heap: list[tuple[float, int]] = []
    for i, a in enumerate(cfg.initial_atoms):
        lines.append(CharLine(len(lines), -a.location, "initial_atom", 0, a.order, atom=i))
    btimes = []
    for j, a in enumerate(cfg.boundary_atoms):
        if a.location < horizon:
            lines.append(CharLine(len(lines), a.location, "boundary_atom", 0, a.order, atom=j))
            btimes.append((a.location, j))
    for ln in lines:
        heapq.heappush(heap, (ln.offset, ln.index))
    events: list[EmissionEvent] = [
        EmissionEvent(lines[idx].offset, 0, "boundary_atom", idx, lines[idx].order, atom=lines[idx].atom)
        for idx in range(len(lines)) if lines[idx].origin == "boundary_atom"]
    # pending children keyed by emission time; merged within tol
    pending: dict[int, dict] = {}
    collisions: list[tuple[float, str]] = []
    popped = set()
    while heap:
        _, idx = heapq.heappop(heap)
        if idx in popped:
            continue
        popped.add(idx)
        if idx in pending:
            info = pending.pop(idx)
            ln = CharLine(idx, info["time"], "reflection", info["gen"], info["order"],
                          parent=info["parents"][0][0], parents=tuple(info["parents"]))
            lines[idx] = ln
            events.append(EmissionEvent(ln.offset, ln.generation, "reflection", idx, ln.order,
                                        contributions=ln.parents))
        line = lines[idx]
        for k, fa in enumerate(fert):
            ts = fa.location + line.offset
            if ts <= 0.0 or ts >= horizon or fa.location >= cfg.max_age:
                continue
            for tb, j in btimes:
                if abs(ts - tb) <= tol:
                    collisions.append((ts, f"line {idx} reaches fertility age {fa.location:g} "
                                           f"at boundary-atom time {tb:g}"))
            match = next((c for c, info in pending.items() if abs(info["time"] - ts) <= tol), None)
            if match is None:
                match = len(lines)
                lines.append(None)  # placeholder, filled when popped
                pending[match] = {"time": ts, "gen": line.generation + 1,
                                  "order": line.order + fa.order, "parents": []}
                heapq.heappush(heap, (ts, match))
            info = pending[match]
            info["gen"] = min(info["gen"], line.generation + 1)
            info["order"] = max(info["order"], line.order + fa.order)
            info["parents"].append((idx, k))
    events.sort(key=lambda e: (e.time, e.emitted_line))
    return SingularSupport(tuple(lines), tuple(events), tuple(collisions))


def emission_collisions(cfg, horizon: float | None = None) -> list[tuple[float, str]]:
    """Emission times that coincide with a boundary-atom time (assumption 4 violations)."""
    return list(_trace_support(cfg, cfg.horizon if horizon is None else horizon).collisions)


def build_singular_support(cfg, horizon: float | None = None) -> SingularSupport:
    """Lines carrying singularities and the time-sorted emission events below the horizon.

    Unpacks as ``lines, events = build_singular_support(cfg)``.
    """
    sup = _trace_support(cfg, cfg.horizon if horizon is None else horizon)
    if sup.collisions:
        t, why = sup.collisions[0]
        raise TripleIntersectionError(
            f"triple singularity intersection, no distributional solution: {why} (t = {t:g})")
    return sup


# --------------------------------------------------------------------------- regions
@dataclass(frozen=True)
class Region:
    """Region 0 is ``t < x < t + L``; region ``i >= 1`` is ``t*_{i-1} < t - x < t*_i``."""

    index: int
    s_lower: float  # bounds in s = t - x
    s_upper: float

    def contains(self, x, t):
        s = np.asarray(t, float) - np.asarray(x, float)
        return (s > self.s_lower) & (s < self.s_upper)


def count_below(events, horizon: float) -> int:
    return sum(1 for e in events if e.time < horizon)


def regions(events, cfg) -> list[Region]:
    times = sorted({e.time for e in events if e.time < cfg.horizon})
    out = [Region(0, -cfg.max_age, 0.0)]
    lo = 0.0
    for i, t in enumerate(times, start=1):
        out.append(Region(i, lo, t))
        lo = t
    out.append(Region(len(times) + 1, lo, math.inf))
    return out


def region_index(times: np.ndarray, x, t) -> np.ndarray:
    """Index of the region containing each point (points on a line go to the later strip)."""
    s = np.asarray(t, float) - np.asarray(x, float)
    idx = np.searchsorted(np.asarray(times, float), s, side="right") + 1
    return np.where(s < 0, 0, idx)
