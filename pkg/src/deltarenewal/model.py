"""Problem definition: data atoms, configuration, parsing and assumption checks.

Configuration documents are TOML with the sections ``[domain]``, ``[rates]``,
``[[atoms.initial]]``, ``[[atoms.fertility]]``, ``[[atoms.boundary]]`` and
``[numerics]``.  See README.md for the exact keys.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import tomli
import tomli_w

from .errors import AssumptionError, ConfigError, DomainError, SmoothnessError, TripleIntersectionError
from .functions import SmoothFunction

RATE_VARIABLES: dict[str, tuple[str, ...]] = {
    "p": ("x", "t"),
    "g": ("x", "t"),
    "a_r": ("x",),
    "b_r": ("x",),
    "c_r": ("t",),
}
ATOM_KINDS = ("initial", "fertility", "boundary")
DEFAULT_CHECK_ORDER = 6


@dataclass(frozen=True, order=True)
class DataAtom:
    """One term ``coefficient * delta^(order)(. - location)`` of a datum."""

    location: float
    order: int
    coefficient: float

    def __post_init__(self):
        if self.order < 0 or int(self.order) != self.order:
            raise ConfigError(f"atom order must be a nonnegative integer, got {self.order}")


@dataclass(frozen=True)
class Numerics:
    """Tolerances and resolutions; every field maps to a ``[numerics]`` key."""

    tol: float = 1e-9
    tol_event: float = 1e-9  # relative to the horizon
    tol_atom: float = 1e-12  # relative to the largest constant of a term
    quad_atol: float = 1e-10
    quad_rtol: float = 1e-8
    grid_steps: int = 4096  # hybrid lattice step is horizon / grid_steps
    output_stride: int = 16
    eps_sequence: tuple[float, ...] = (8e-3, 4e-3, 2e-3, 1e-3)  # relative to the horizon
    oracle_resolution: int = 16  # oracle grid step is min(eps) / oracle_resolution


@dataclass(frozen=True)
class ModelConfig:
    p: SmoothFunction
    g: SmoothFunction
    a_r: SmoothFunction
    b_r: SmoothFunction
    c_r: SmoothFunction
    max_age: float
    horizon: float
    initial_atoms: tuple[DataAtom, ...] = ()
    fertility_atoms: tuple[DataAtom, ...] = ()
    boundary_atoms: tuple[DataAtom, ...] = ()
    check_order: int = DEFAULT_CHECK_ORDER
    numerics: Numerics = field(default_factory=Numerics)

    def __post_init__(self):
        if not (self.max_age > 0 and math.isfinite(self.max_age)):
            raise ConfigError("L must be positive", key="domain.L")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ConfigError("T must be positive", key="domain.T")
        for kind, atoms in self.atom_lists().items():
            limit = self.max_age if kind != "boundary" else math.inf
            for atom in atoms:
                if not (0.0 < atom.location < limit):
                    raise DomainError(f"location {atom.location} outside (0, {limit})",
                                      key=f"atoms.{kind}")
        if self.check_order < self.max_atom_order() + 1:
            raise ConfigError(f"check order {self.check_order} must be at least max atom order + 1",
                              key="numerics.check_order")

    # ----------------------------------------------------------------- helpers
    def atom_lists(self) -> dict[str, tuple[DataAtom, ...]]:
        return {"initial": self.initial_atoms, "fertility": self.fertility_atoms,
                "boundary": self.boundary_atoms}

    def max_atom_order(self) -> int:
        orders = [a.order for atoms in self.atom_lists().values() for a in atoms]
        return max(orders, default=-1)

    @property
    def has_atoms(self) -> bool:
        return bool(self.initial_atoms or self.fertility_atoms or self.boundary_atoms)

    @property
    def tol_event(self) -> float:
        return self.numerics.tol_event * self.horizon

    def a_ext(self, x, order: int = 0) -> np.ndarray:
        """Initial density extended by zero outside ``[0, L]``."""
        x = np.asarray(x, float)
        inside = (x >= 0.0) & (x <= self.max_age)
        return np.where(inside, self.a_r.derivative(order)(np.clip(x, 0.0, self.max_age)), 0.0)

    def b_ext(self, x, order: int = 0) -> np.ndarray:
        """Fertility density extended by zero outside ``[0, L]``."""
        x = np.asarray(x, float)
        inside = (x >= 0.0) & (x <= self.max_age)
        return np.where(inside, self.b_r.derivative(order)(np.clip(x, 0.0, self.max_age)), 0.0)

    def with_changes(self, **changes) -> "ModelConfig":
        return replace(self, **changes)

    @property
    def approximate_functions(self) -> list[str]:
        return [name for name in RATE_VARIABLES if getattr(self, name).approximate]


# --------------------------------------------------------------------------- parsing
_TOP_KEYS = {"domain", "rates", "atoms", "numerics"}
_DOMAIN_KEYS = {"L", "T"}
_ATOM_KEYS = {"coefficient", "order", "location"}
_NUMERIC_KEYS = {"check_order", "tol", "tol_event", "tol_atom", "quad_atol", "quad_rtol",
                 "grid_steps", "output_stride", "eps_sequence", "oracle_resolution"}


def _check_keys(section: Mapping, allowed: set[str], where: str) -> None:
    if not isinstance(section, Mapping):
        raise ConfigError("must be a table", key=where)
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)}", key=where)


def _number(value: Any, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", key=key)
    return float(value)


def _parse_rate(name: str, spec: Any, base_dir: Path | None) -> SmoothFunction:
    variables = RATE_VARIABLES[name]
    key = f"rates.{name}"
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        spec = repr(float(spec))
    if isinstance(spec, str):
        try:
            return SmoothFunction.expression(spec, variables)
        except ConfigError as exc:
            raise ConfigError(str(exc), key=key) from exc
    if isinstance(spec, Mapping):
        _check_keys(spec, {"table", "order"}, key)
        if "table" not in spec:
            raise ConfigError("table specification needs a 'table' path", key=key)
        order = spec.get("order", 5)
        if not isinstance(order, int) or order < 1:
            raise ConfigError("spline order must be a positive integer", key=f"{key}.order")
        try:
            return SmoothFunction.table(str(spec["table"]), variables, order, base_dir)
        except ConfigError as exc:
            raise ConfigError(str(exc), key=key) from exc
    raise ConfigError(f"expected an expression string or a table spec, got {spec!r}", key=key)


def _parse_atoms(raw: Any, kind: str) -> tuple[DataAtom, ...]:
    key = f"atoms.{kind}"
    if not isinstance(raw, list):
        raise ConfigError("must be an array of tables", key=key)
    atoms = []
    for i, item in enumerate(raw):
        where = f"{key}[{i}]"
        _check_keys(item, _ATOM_KEYS, where)
        missing = _ATOM_KEYS - set(item)
        if missing:
            raise ConfigError(f"missing {sorted(missing)}", key=where)
        order = item["order"]
        if isinstance(order, bool) or not isinstance(order, int) or order < 0:
            raise ConfigError("order must be a nonnegative integer", key=f"{where}.order")
        coeff = _number(item["coefficient"], f"{where}.coefficient")
        loc = _number(item["location"], f"{where}.location")
        if coeff == 0.0:
            continue
        atoms.append(DataAtom(loc, order, coeff))
    return _merge_atoms(atoms)


def _merge_atoms(atoms: list[DataAtom]) -> tuple[DataAtom, ...]:
    merged: dict[tuple[float, int], float] = {}
    for a in atoms:
        merged[(a.location, a.order)] = merged.get((a.location, a.order), 0.0) + a.coefficient
    return tuple(sorted(DataAtom(loc, order, c) for (loc, order), c in merged.items() if c != 0.0))


def parse_config(text: str, base_dir: str | Path | None = None) -> ModelConfig:
    """Parse a TOML configuration document into a validated :class:`ModelConfig`."""
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    base = Path(base_dir) if base_dir is not None else None
    _check_keys(doc, _TOP_KEYS, "<root>")
    for required in ("domain", "rates"):
        if required not in doc:
            raise ConfigError("missing section", key=required)

    domain = doc["domain"]
    _check_keys(domain, _DOMAIN_KEYS, "domain")
    for k in _DOMAIN_KEYS:
        if k not in domain:
            raise ConfigError("missing key", key=f"domain.{k}")
    L = _number(domain["L"], "domain.L")
    T = _number(domain["T"], "domain.T")

    rates_raw = doc["rates"]
    _check_keys(rates_raw, set(RATE_VARIABLES), "rates")
    rates = {name: _parse_rate(name, rates_raw.get(name, "0"), base) for name in RATE_VARIABLES}

    atoms_raw = doc.get("atoms", {})
    _check_keys(atoms_raw, set(ATOM_KINDS), "atoms")
    atoms = {kind: _parse_atoms(atoms_raw.get(kind, []), kind) for kind in ATOM_KINDS}

    num_raw = doc.get("numerics", {})
    _check_keys(num_raw, _NUMERIC_KEYS, "numerics")
    num_kwargs: dict[str, Any] = {}
    for k, v in num_raw.items():
        if k == "check_order":
            continue
        if k in ("grid_steps", "output_stride", "oracle_resolution"):
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ConfigError("must be a positive integer", key=f"numerics.{k}")
            num_kwargs[k] = v
        elif k == "eps_sequence":
            if not isinstance(v, list) or not v:
                raise ConfigError("must be a nonempty array", key="numerics.eps_sequence")
            num_kwargs[k] = tuple(_number(e, "numerics.eps_sequence") for e in v)
        else:
            val = _number(v, f"numerics.{k}")
            if val <= 0:
                raise ConfigError("must be positive", key=f"numerics.{k}")
            num_kwargs[k] = val
    max_order = max((a.order for lst in atoms.values() for a in lst), default=-1)
    check_order = num_raw.get("check_order", max(DEFAULT_CHECK_ORDER, max_order + 1))
    if isinstance(check_order, bool) or not isinstance(check_order, int) or check_order < 0:
        raise ConfigError("must be a nonnegative integer", key="numerics.check_order")

    return ModelConfig(
        max_age=L, horizon=T,
        initial_atoms=atoms["initial"], fertility_atoms=atoms["fertility"],
        boundary_atoms=atoms["boundary"], check_order=check_order,
        numerics=Numerics(**num_kwargs), **rates,
    )


def load_config(path: str | Path) -> ModelConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, base_dir=path.parent)


def config_to_dict(cfg: ModelConfig) -> dict[str, Any]:
    num = cfg.numerics
    return {
        "domain": {"L": cfg.max_age, "T": cfg.horizon},
        "rates": {name: getattr(cfg, name).to_config() for name in RATE_VARIABLES},
        "atoms": {kind: [{"coefficient": a.coefficient, "order": a.order, "location": a.location}
                         for a in atoms]
                  for kind, atoms in cfg.atom_lists().items()},
        "numerics": {
            "check_order": cfg.check_order, "tol": num.tol, "tol_event": num.tol_event,
            "tol_atom": num.tol_atom, "quad_atol": num.quad_atol, "quad_rtol": num.quad_rtol,
            "grid_steps": num.grid_steps, "output_stride": num.output_stride,
            "eps_sequence": list(num.eps_sequence), "oracle_resolution": num.oracle_resolution,
        },
    }


def serialize_config(cfg: ModelConfig) -> str:
    return tomli_w.dumps(config_to_dict(cfg))


# --------------------------------------------------------------------------- assumptions
@dataclass(frozen=True)
class AssumptionVerdict:
    name: str
    passed: bool
    severity: str  # "fatal" or "warning" when failing
    message: str
    witness: dict[str, Any] = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else ("FAIL" if self.severity == "fatal" else "WARN")
        wit = ", ".join(f"{k}={_fmt(v)}" for k, v in self.witness.items())
        return f"[{status}] {self.name}: {self.message}" + (f" ({wit})" if wit else "")


def _fmt(v: Any) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(e) for e in v) + "]"
    return str(v)


def _max_derivative(fn: SmoothFunction, point: float, upto: int) -> tuple[float, int, int]:
    """Largest |f^(i)(point)| for i <= upto; also returns its order and the checked depth."""
    worst, worst_i, checked = 0.0, 0, -1
    for i in range(upto + 1):
        try:
            val = abs(fn.value_at(point, orders=(i,)))
        except SmoothnessError:
            break
        checked = i
        if not math.isfinite(val) or val > worst:
            worst, worst_i = val, i
            if not math.isfinite(val):
                break
    return worst, worst_i, checked


def detect_fertility_gap(cfg: ModelConfig, samples: int = 20001) -> float:
    """Length of the largest sampled prefix of ``[0, L]`` on which ``|b_r| <= tol``."""
    xs = np.linspace(0.0, cfg.max_age, samples)
    vals = np.abs(cfg.b_r(xs))
    bad = np.nonzero(~(vals <= cfg.numerics.tol))[0]
    if bad.size == 0:
        return cfg.max_age
    return float(xs[bad[0] - 1]) if bad[0] > 0 else 0.0


def check_assumptions(cfg: ModelConfig) -> list[AssumptionVerdict]:
    """Evaluate the five structural assumptions; pure and deterministic."""
    from .characteristics import emission_collisions

    tol = cfg.numerics.tol
    K = cfg.check_order
    verdicts: list[AssumptionVerdict] = []
    fatal12 = "fatal" if cfg.has_atoms else "warning"

    wa, ia, ka = _max_derivative(cfg.a_r, 0.0, K)
    wc, ic, kc = _max_derivative(cfg.c_r, 0.0, K)
    ok1 = wa <= tol and wc <= tol and ka == K and kc == K
    msg = "a_r and c_r vanish to order K at 0" if ok1 else "a_r or c_r has a nonzero derivative at 0"
    if ka < K or kc < K:
        msg += f" (tabulated data checked only to order {min(ka, kc)})"
    verdicts.append(AssumptionVerdict("A1", ok1, fatal12, msg, {
        "K": K, "max|a_r^(i)(0)|": wa, "worst_i_a": ia, "max|c_r^(i)(0)|": wc, "worst_i_c": ic}))

    wb, ib, kb = _max_derivative(cfg.b_r, cfg.max_age, K)
    gap = detect_fertility_gap(cfg)
    eps = gap / 2.0
    ok2 = wb <= tol and kb == K and gap > 0.0
    verdicts.append(AssumptionVerdict(
        "A2", ok2, fatal12,
        "b_r flat at L and zero near age 0" if ok2 else "b_r not flat at L or not zero near age 0",
        {"max|b_r^(i)(L)|": wb, "worst_i": ib, "zero_prefix": gap, "epsilon": eps}))

    smooth_ok = True
    for name in ("p", "g"):
        fn = getattr(cfg, name)
        try:
            fn(np.array([0.0, cfg.max_age]), np.array([0.0, cfg.horizon]))
        except Exception:  # evaluation failure means the rate is unusable
            smooth_ok = False
    caveat = cfg.approximate_functions
    verdicts.append(AssumptionVerdict(
        "A3", smooth_ok, "fatal",
        "rates evaluable" + (f"; tabulated (approximate derivatives): {caveat}" if caveat else ""),
        {"tabulated": caveat}))

    collisions = emission_collisions(cfg)
    ok4 = not collisions
    verdicts.append(AssumptionVerdict(
        "A4", ok4, "fatal",
        "no triple singularity intersection" if ok4
        else "triple singularity intersection, no distributional solution",
        {"collisions": [c[0] for c in collisions]} if collisions else {}))

    from .characteristics import survival

    xs = np.linspace(0.0, cfg.max_age, 201)[1:-1]
    shat = survival(xs, np.full_like(xs, cfg.horizon), cfg.p, sign=-1, numerics=cfg.numerics)
    min_shat = float(np.min(np.abs(shat)))
    ok5 = min_shat > 1e-300 and bool(np.all(np.isfinite(shat)))
    verdicts.append(AssumptionVerdict(
        "A5", ok5, "warning",
        "reciprocal survival bounded away from zero at T" if ok5
        else "reciprocal survival degenerates at T (uniqueness not guaranteed)",
        {"min_Shat": min_shat}))
    return verdicts


def require_assumptions(verdicts: list[AssumptionVerdict]) -> None:
    """Raise for the first fatal failure; warnings pass through."""
    for v in verdicts:
        if v.passed or v.severity != "fatal":
            continue
        if v.name == "A4":
            raise TripleIntersectionError(
                "triple singularity intersection, no distributional solution: " + _fmt(
                    v.witness.get("collisions", [])))
        raise AssumptionError(f"{v.name} failed: {v.message}")
