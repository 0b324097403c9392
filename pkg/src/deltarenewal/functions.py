"""Smooth coefficient functions: analytic expressions, sample tables, or callables.

Expressions are parsed with sympy over a whitelisted set of primitives and are
differentiated exactly.  Tables are interpolated with splines of a chosen degree;
their derivatives are approximate and the ``approximate`` flag says so.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
import sympy as sp
from sympy.parsing.sympy_parser import parse_expr, standard_transformations

from .errors import ConfigError, SmoothnessError

X, T = sp.symbols("x t", real=True)
_SYMBOLS = {"x": X, "t": T}

# Piecewise/Heaviside/Max/Min are needed for rates that vanish on an interval
# (a fertility window), which no analytic expression can do.
_PRIMITIVES: dict[str, object] = {
    "exp": sp.exp,
    "sin": sp.sin,
    "cos": sp.cos,
    "tan": sp.tan,
    "sinh": sp.sinh,
    "cosh": sp.cosh,
    "tanh": sp.tanh,
    "log": sp.log,
    "sqrt": sp.sqrt,
    "pi": sp.pi,
    "E": sp.E,
    "Piecewise": sp.Piecewise,
    "Heaviside": sp.Heaviside,
    "Max": sp.Max,
    "Min": sp.Min,
    "Abs": sp.Abs,
    "And": sp.And,
    "Or": sp.Or,
    "True": sp.true,
    "False": sp.false,
}
_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")

Evaluator = Callable[..., np.ndarray]


def parse_expression(text: str, variables: Sequence[str]) -> sp.Expr:
    """Parse ``text`` into a sympy expression over ``variables`` only."""
    for name in _NAME_RE.findall(text):
        if name not in _PRIMITIVES and name not in variables:
            raise ConfigError(f"unknown name {name!r} in expression {text!r}")
    local = {name: _SYMBOLS[name] for name in variables}
    local.update(_PRIMITIVES)
    try:
        expr = parse_expr(text, local_dict=local, global_dict={"__builtins__": {}, **_sympy_core()},
                          transformations=standard_transformations, evaluate=True)
    except Exception as exc:  # sympy raises a zoo of types here
        raise ConfigError(f"cannot parse expression {text!r}: {exc}") from exc
    if not isinstance(expr, sp.Basic):
        expr = sp.sympify(expr)
    extra = {str(s) for s in expr.free_symbols} - set(variables)
    if extra:
        raise ConfigError(f"expression {text!r} uses undeclared variables {sorted(extra)}")
    return expr


def _sympy_core() -> dict[str, object]:
    return {"Integer": sp.Integer, "Float": sp.Float, "Rational": sp.Rational, "Symbol": sp.Symbol}


def _broadcast(value, args) -> np.ndarray:
    shape = np.broadcast(*args).shape if args else ()
    out = np.asarray(value, dtype=float)
    if out.shape != shape:
        out = np.broadcast_to(out, shape).copy()
    return out


@dataclass(frozen=True)
class SmoothFunction:
    """A smooth real function of one variable (``x`` or ``t``) or of ``(x, t)``.

    ``kind`` is ``"expression"``, ``"table"`` or ``"callable"``.  ``source`` holds the
    expression text or the table path exactly as written in the configuration.
    """

    kind: str
    variables: tuple[str, ...]
    source: str
    interp_order: int = 5
    base_dir: Path | None = field(default=None, compare=False, repr=False)
    _callable: Callable | None = field(default=None, compare=True, repr=False)
    _derivatives: Mapping[tuple[int, ...], Callable] | None = field(default=None, compare=False, repr=False)

    # ------------------------------------------------------------------ builders
    @classmethod
    def expression(cls, text: str, variables: Sequence[str]) -> "SmoothFunction":
        fn = cls("expression", tuple(variables), str(text))
        fn.sympy_expr  # parse eagerly so errors surface at construction
        return fn

    @classmethod
    def table(cls, path: str, variables: Sequence[str], interp_order: int = 5,
              base_dir: Path | None = None) -> "SmoothFunction":
        fn = cls("table", tuple(variables), str(path), interp_order, base_dir)
        fn._spline
        return fn

    @classmethod
    def from_callable(cls, func: Callable, variables: Sequence[str], name: str = "callable",
                      derivatives: Mapping[tuple[int, ...], Callable] | None = None) -> "SmoothFunction":
        """Wrap a vectorised Python callable (in-process use only; not serialisable)."""
        return cls("callable", tuple(variables), name, 0, None, func, derivatives)

    @classmethod
    def zero(cls, variables: Sequence[str]) -> "SmoothFunction":
        return cls.expression("0", variables)

    # ------------------------------------------------------------------ properties
    @property
    def approximate(self) -> bool:
        """True when derivatives come from interpolation rather than exact calculus."""
        return self.kind == "table"

    @cached_property
    def sympy_expr(self) -> sp.Expr | None:
        if self.kind != "expression":
            return None
        return parse_expression(self.source, self.variables)

    @cached_property
    def is_zero(self) -> bool:
        if self.kind == "expression":
            return bool(self.sympy_expr == 0)
        if self.kind == "table":
            return bool(np.all(self._table[-1] == 0.0))
        return False

    @cached_property
    def _table(self) -> tuple[np.ndarray, ...]:
        path = Path(self.source)
        if not path.is_absolute() and self.base_dir is not None:
            path = self.base_dir / path
        try:
            data = np.genfromtxt(path, delimiter=",", names=True, dtype=float)
        except OSError as exc:
            raise ConfigError(f"cannot read table {path}: {exc}") from exc
        cols = data.dtype.names
        need = list(self.variables) + ["value"]
        if cols is None or any(c not in cols for c in need):
            raise ConfigError(f"table {path} must have columns {need}, found {cols}")
        if len(self.variables) == 1:
            v = np.asarray(data[self.variables[0]], float)
            order = np.argsort(v)
            return v[order], np.asarray(data["value"], float)[order]
        xs = np.unique(data["x"])
        ts = np.unique(data["t"])
        if xs.size * ts.size != data.size:
            raise ConfigError(f"table {path} is not a full rectangular x,t grid")
        grid = np.full((xs.size, ts.size), np.nan)
        grid[np.searchsorted(xs, data["x"]), np.searchsorted(ts, data["t"])] = data["value"]
        return xs, ts, grid

    @cached_property
    def _spline(self):
        from scipy.interpolate import RectBivariateSpline, make_interp_spline

        tab = self._table
        k = self.interp_order
        if len(self.variables) == 1:
            if tab[0].size <= k:
                raise ConfigError(f"table {self.source} needs more than {k} samples")
            return make_interp_spline(tab[0], tab[1], k=k)
        return RectBivariateSpline(tab[0], tab[1], tab[2], kx=k, ky=k)

    # ------------------------------------------------------------------ evaluation
    def __call__(self, *args) -> np.ndarray:
        return self.derivative((0,) * len(self.variables))(*args)

    def derivative(self, orders: int | Sequence[int]) -> Evaluator:
        """Return a vectorised evaluator for the given partial derivative."""
        if isinstance(orders, (int, np.integer)):
            orders = (int(orders),)
        orders = tuple(int(o) for o in orders)
        if len(orders) != len(self.variables):
            raise ValueError(f"need {len(self.variables)} derivative orders, got {orders}")
        return self._derivative_cached(orders)

    def _derivative_cached(self, orders: tuple[int, ...]) -> Evaluator:
        cache = self.__dict__.setdefault("_deriv_cache", {})
        if orders not in cache:
            cache[orders] = self._build_derivative(orders)
        return cache[orders]

    def _build_derivative(self, orders: tuple[int, ...]) -> Evaluator:
        if self.kind == "expression":
            expr = self.sympy_expr
            for var, k in zip(self.variables, orders):
                if k:
                    expr = sp.diff(expr, _SYMBOLS[var], k)
            syms = [_SYMBOLS[v] for v in self.variables]
            if expr.free_symbols == set() and not expr.has(sp.Piecewise):
                const = float(expr)
                return lambda *args: _broadcast(const, [np.asarray(a, float) for a in args])
            raw = sp.lambdify(syms, expr, modules="numpy")

            def evaluate(*args):
                arrs = [np.asarray(a, float) for a in args]
                with np.errstate(all="ignore"):
                    return _broadcast(raw(*arrs), arrs)

            return evaluate
        if self.kind == "table":
            k = self.interp_order
            if any(o >= k for o in orders):
                raise SmoothnessError(
                    f"table {self.source}: derivative {orders} exceeds spline degree {k} smoothness")
            spl = self._spline
            if len(self.variables) == 1:
                d = spl.derivative(orders[0]) if orders[0] else spl
                return lambda s: _broadcast(d(np.asarray(s, float)), [np.asarray(s, float)])

            def evaluate2(x, t):
                x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
                return spl.ev(x, t, dx=orders[0], dy=orders[1])

            return evaluate2
        if not any(orders):
            func = self._callable

            def evaluate_callable(*args):
                arrs = [np.asarray(a, float) for a in args]
                return _broadcast(func(*arrs), arrs)

            return evaluate_callable
        if self._derivatives and orders in self._derivatives:
            dfunc = self._derivatives[orders]
            return lambda *args: _broadcast(dfunc(*[np.asarray(a, float) for a in args]),
                                            [np.asarray(a, float) for a in args])
        raise SmoothnessError(f"callable {self.source!r} provides no derivative {orders}")

    def value_at(self, *point: float, orders: Sequence[int] | None = None) -> float:
        """Scalar evaluation, falling back to a one-sided symbolic limit at removable singularities."""
        orders = tuple(orders) if orders is not None else (0,) * len(self.variables)
        val = float(self.derivative(orders)(*[np.float64(p) for p in point]))
        if math.isfinite(val) or self.kind != "expression":
            return val
        expr = self.sympy_expr
        for var, k in zip(self.variables, orders):
            if k:
                expr = sp.diff(expr, _SYMBOLS[var], k)
        for var, p in zip(self.variables, point):
            expr = sp.limit(expr, _SYMBOLS[var], sp.nsimplify(p), "+")
        return float(expr)

    def to_config(self):
        if self.kind == "expression":
            return self.source
        if self.kind == "table":
            return {"table": self.source, "order": self.interp_order}
        raise ConfigError("callable functions cannot be serialised", key=self.source)
