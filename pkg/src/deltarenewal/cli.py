"""Command-line entry point: ``deltawave {validate,solve,verify,report}``.

Exit codes: 0 ok, 1 assumption failure, 2 input or parameter error, 3 solver failure,
4 verification failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import platform
import sys
import time
from importlib import metadata
from pathlib import Path
from typing import Sequence

from . import export
from .errors import AssumptionError, ConfigError, DeltaRenewalError, ParameterError
from .model import ModelConfig, check_assumptions, load_config, parse_config, serialize_config

EXIT_OK, EXIT_ASSUMPTION, EXIT_INPUT, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 3, 4
OUT_ENV = "DELTAWAVE_OUT"
DEFAULT_OUT = "deltawave-out"

log = logging.getLogger("deltarenewal")


class CliFailure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _eps_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad eps sequence {text!r}") from exc
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("eps values must be positive")
    return vals


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="deltawave",
                                 description="Renewal transport with Dirac-derivative data.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, solve_flags=True):
        p.add_argument("config", nargs="?", help="TOML configuration file")
        p.add_argument("--check-order", type=int, help="derivative order K for assumption checks")
        if solve_flags:
            p.add_argument("--grid-step", type=_positive, help="hybrid lattice step")
            p.add_argument("--horizon", type=_positive, help="override the time horizon T")
            p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")

    common(sub.add_parser("validate", help="check assumptions and print verdicts"), solve_flags=False)
    ps = sub.add_parser("solve", help="run the hybrid solver and write artifacts")
    common(ps)
    ps.add_argument("--from-manifest", help="rerun from a manifest and check the output hashes")
    pv = sub.add_parser("verify", help="compare against the mollified oracle")
    common(pv)
    pv.add_argument("--eps-sequence", type=_eps_list,
                    help="comma-separated mollification scales relative to T")
    pr = sub.add_parser("report", help="summarise the artifacts in an output directory")
    pr.add_argument("--out", help="output directory to read")
    return ap


# --------------------------------------------------------------------------- helpers
def _out_dir(arg: str | None) -> Path:
    return Path(arg or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def _load(args) -> ModelConfig:
    if not args.config:
        raise CliFailure(EXIT_INPUT, "a configuration file is required")
    cfg = load_config(args.config)
    return _apply_flags(cfg, getattr(args, "horizon", None), args.check_order)


def _apply_flags(cfg: ModelConfig, horizon: float | None, check_order: int | None) -> ModelConfig:
    changes = {}
    if horizon is not None:
        changes["horizon"] = float(horizon)
    if check_order is not None:
        changes["check_order"] = int(check_order)
    return cfg.with_changes(**changes) if changes else cfg


def _versions() -> dict[str, str]:
    out = {"python": platform.python_version()}
    for pkg in ("artifact", "numpy", "scipy", "sympy"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = "unknown"
    return out


# --------------------------------------------------------------------------- commands
def cmd_validate(args) -> int:
    cfg = _load(args)
    verdicts = check_assumptions(cfg)
    for v in verdicts:
        print(v.line())
    fatal = [v for v in verdicts if not v.passed and v.severity == "fatal"]
    if fatal:
        print("; ".join(v.message for v in fatal), file=sys.stderr)
        return EXIT_ASSUMPTION
    return EXIT_OK


def _solve_and_write(cfg: ModelConfig, out: Path, grid_step: float | None) -> tuple[dict, dict]:
    from .hybrid import solve

    times = {}
    t0 = time.perf_counter()
    sol = solve(cfg, grid_step=grid_step)
    times["solve"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    paths = export.write_solution(out, sol)
    times["write"] = time.perf_counter() - t0
    hashes = {str(p.relative_to(out)): export.sha256(p) for p in paths}
    for flag in sol.flags:
        log.warning(flag)
    print(f"{len(sol.events)} emission event(s) below T = {sol.horizon:.12g}: "
          + ", ".join(f"{e.time:.12g}" for e in sol.events))
    return hashes, times


def _manifest(cfg_path: str | None, cfg: ModelConfig, flags: dict, out: Path, hashes: dict,
              times: dict) -> dict:
    num = cfg.numerics
    return {
        "config_path": None if cfg_path is None else str(Path(cfg_path).resolve()),
        "config": serialize_config(cfg),
        "flags": flags,
        "numerics": {k: getattr(num, k) for k in num.__dataclass_fields__},
        "check_order": cfg.check_order,
        "versions": _versions(),
        "output_dir": str(out.resolve()),
        "wall_times": times,
        "outputs": hashes,
    }


def cmd_solve(args) -> int:
    out = _out_dir(args.out)
    if args.from_manifest:
        man = export.read_json(args.from_manifest)
        base = Path(man["config_path"]).parent if man.get("config_path") else None
        cfg = parse_config(man["config"], base_dir=base)
        flags = man.get("flags", {})
        cfg_path = man.get("config_path")
        out = Path(args.out) if args.out else Path(man["output_dir"])
    else:
        cfg = _load(args)
        flags = {"grid_step": args.grid_step, "horizon": args.horizon, "check_order": args.check_order}
        cfg_path = args.config
    out.mkdir(parents=True, exist_ok=True)
    hashes, times = _solve_and_write(cfg, out, flags.get("grid_step"))
    export.write_json(out / export.MANIFEST_FILE, _manifest(cfg_path, cfg, flags, out, hashes, times))
    if args.from_manifest:
        diff = sorted(k for k in set(hashes) | set(man["outputs"]) if hashes.get(k) != man["outputs"].get(k))
        if diff:
            raise CliFailure(EXIT_SOLVER, "rerun differs from manifest in: " + ", ".join(diff))
        print("outputs identical to manifest")
    print(f"artifacts written to {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .oracle import run_verification, write_convergence_csv

    cfg = _load(args)
    out = _out_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outcomes = run_verification(cfg, args.eps_sequence, grid_step=args.grid_step)
    write_convergence_csv(out / export.CONVERGENCE_FILE, outcomes)
    for o in outcomes:
        status = "PASS" if o.passed else "FAIL"
        note = "" if o.monotone else " (non-monotone)"
        print(f"{status} {o.name}: oracle {o.extrapolated:.10g} hybrid {o.hybrid:.10g} "
              f"rel {o.rel_err:.2e} tol {o.tolerance:.0e} rate {o.rate:.3g}{note}")
    if not all(o.passed for o in outcomes):
        return EXIT_VERIFY
    return EXIT_OK


def cmd_report(args) -> int:
    out = _out_dir(args.out)
    path = out / export.REPORT_FILE
    if not path.exists():
        raise CliFailure(EXIT_INPUT, f"no singularity report in {out}")
    rep = export.read_json(path)
    print(f"horizon {rep['horizon']}")
    for a in rep["assumptions"]:
        print(f"  {a['name']}: {'pass' if a['passed'] else 'FAIL'} ({a['message']})")
    for flag in rep["flags"]:
        print(f"  flag: {flag}")
    for e in rep["events"]:
        atoms = " ".join(f"d{o}:{c:.6g}" for o, c in e["atoms"])
        print(f"  t*={e['time']:.12g} gen {e['generation']} {e['kind']} -> {atoms or '(none)'}")
    conv = out / export.CONVERGENCE_FILE
    if conv.exists():
        import csv

        with open(conv) as fh:
            rows = list(csv.DictReader(fh))
        seen = {}
        for r in rows:
            seen[r["test"]] = r
        failed = [k for k, r in seen.items() if r["passed"] != "True"]
        print(f"verification: {len(seen) - len(failed)}/{len(seen)} passed")
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "solve": cmd_solve, "verify": cmd_verify, "report": cmd_report}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CliFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except AssumptionError as exc:
        print(f"assumption failure: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except (ConfigError, ParameterError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DeltaRenewalError, ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"solver failure in {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
