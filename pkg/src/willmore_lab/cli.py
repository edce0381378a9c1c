"""Command-line front end: ``willmore-lab <subcommand> [options]``.

Every subcommand writes a JSON report (``--out``) and, where a series exists,
a CSV file (``--csv``).  Exit status: 0 when every selected check passes, 1 on
a check failure, 2 on a configuration error, 3 on an internal error.

Options may also come from ``--config cfg.json``: a JSON object whose keys are
the option names of the subcommand (dashes or underscores).  Explicit flags on
the command line override the file.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__

SCHEMA_VERSION = "1.0.0"
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("willmore_lab")


def report_schema_version() -> str:
    return SCHEMA_VERSION


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would print usage and exit 2 itself
        raise ConfigError(message)


# ---------------------------------------------------------------------------
# option types


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return v


def _nonneg(text: str) -> float:
    v = float(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {text!r}")
    return v


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("levels must be positive integers")
    return vals


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("radii must be positive")
    return vals


def parse_ambient(text: str | None, default_dim: int = 3):
    """``euclidean``, ``sphere:dim=3,radius=1``, ``hyperbolic:dim=3`` or ``perturbed:eps=0.1``.

    ``None`` is passed through so that each immersion falls back to its own
    default ambient (Euclidean space of the immersion's natural dimension).
    """
    from .ambient import make_ambient
    from .immersion import parse_spec

    if text is None:
        return None
    try:
        kind, params = parse_spec(text)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    params.setdefault("dim", default_dim)
    try:
        return make_ambient({"kind": kind, **params})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad ambient {text!r}: {exc}") from None


def build_immersion(spec: str, ambient, n: int | None = None, **extra):
    from .immersion import _ALIASES, SchemaError, builtin, immersion_from_json, parse_spec

    path = Path(spec)
    if path.suffix == ".json":
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"immersion file {spec} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{spec}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        try:
            return immersion_from_json(data, ambient)
        except SchemaError as exc:
            raise ConfigError(f"{spec}: {exc}") from None
    try:
        name, params = parse_spec(spec)
    except SchemaError as exc:
        raise ConfigError(str(exc)) from None
    if name == "sphere":
        params = {_ALIASES.get(k, k): v for k, v in params.items()}
    if n is not None:
        params["n"] = n
    params.update(extra)
    try:
        return builtin(name, ambient=ambient, **params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad immersion {spec!r}: {exc}") from None


# ---------------------------------------------------------------------------
# output


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "as_dict"):
        return _jsonable(obj.as_dict())
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def make_report(command: str, config: dict, result, passed: bool, runtime: float) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "command": command,
        "config": _jsonable(config),
        "passed": bool(passed),
        "result": _jsonable(result),
        # wall-clock data lives under one key so reports compare equal without it
        "timestamp": {
            "utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "runtime_seconds": runtime,
        },
    }


def write_json(report: dict, path: str | Path | None) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    if path is None:
        print(text)
    else:
        Path(path).write_text(text + "\n")


def write_csv(rows: list[dict], path: str | Path) -> None:
    keys: list[str] = []
    for row in rows:
        for k in row:
            if k not in keys:
                keys.append(k)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(keys)
        for row in rows:
            wr.writerow([_fmt(row.get(k, "")) for k in keys])


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


# ---------------------------------------------------------------------------
# subcommands: each returns (result, passed, csv rows or None)


def cmd_energy(args):
    from .immersion import energies, export_geometry_csv

    amb = parse_ambient(args.ambient)
    imm = build_immersion(args.immersion, amb, args.n)
    rep = energies(imm)
    if args.csv:
        export_geometry_csv(imm, args.csv)
    return {"immersion": imm.describe(), "energies": rep.as_dict()}, True, None


def _applicable(check: str, imm) -> str | None:
    from .residuals import CODIM1_ONLY

    if not imm.conformal:
        return "needs a conformal immersion"
    if check in CODIM1_ONLY and imm.dim != 3:
        return "stated for surfaces in a 3-manifold"
    return None


def cmd_residuals(args):
    from .residuals import IDENTITY_SUITE, available_checks, run_check

    amb = parse_ambient(args.ambient)
    checks = list(IDENTITY_SUITE) if args.check == "all" else [c.strip() for c in args.check.split(",")]
    unknown = [c for c in checks if c not in available_checks()]
    if unknown:
        raise ConfigError(f"unknown checks {unknown}; choose from {sorted(available_checks())} or 'all'")
    if any(b <= a for a, b in zip(args.levels[:-1], args.levels[1:])):
        raise ConfigError("--levels must be strictly increasing")
    imms = [build_immersion(args.immersion, amb, n) for n in args.levels]
    opts = {}
    if args.curvature_sign is not None:
        opts["curvature_sign"] = args.curvature_sign
    results, rows, passed = {}, [], True
    for c in checks:
        why = _applicable(c, imms[0]) if c in IDENTITY_SUITE else None
        if why:
            results[c] = {"status": "not_applicable", "reason": why}
            continue
        rep = run_check(c, imms, expected_order=args.expected_order, **(opts if c == "conservative" else {}))
        results[c] = rep.as_dict()
        passed &= bool(rep.passed)
        for n, sup, l2 in rep.per_refinement:
            rows.append({"check": c, "n": n, "sup": sup, "l2": l2, "estimated_order": rep.estimated_order})
    return {"immersion": imms[-1].describe(), "checks": results}, passed, rows


def cmd_dzsolve(args):
    from .dzsolve import DzSolveError, analytic_case, build_potentials, potentials_immersion

    if args.case == "analytic":
        try:
            out = analytic_case(args.grid, args.gamma_scale, args.seed)
        except DzSolveError as exc:
            return {"case": "analytic", "error": str(exc), "gamma_scale": args.gamma_scale}, False, None
        ok = out["residual_dz_interior"] < args.tol
        if "sup_error_vs_2x1" in out:
            ok = ok and out["sup_error_vs_2x1"] < args.tol
        return {"case": "analytic", **out}, bool(ok), None
    amb = parse_ambient(args.ambient)
    imm = potentials_immersion(args.grid, ambient=amb)
    _, rep = build_potentials(imm)
    return {"case": "potentials", **rep.as_dict()}, bool(rep.h_recovery_error < args.tol), None


def cmd_geodesic_spheres(args):
    from .experiments import geodesic_sphere_family

    amb = parse_ambient(args.ambient)
    rep = geodesic_sphere_family(amb, radii=args.radii, n_theta=args.n)
    ok = rep.rel_err_c2_W < args.tol and rep.fit_stable
    return rep.as_dict(), bool(ok), rep.rows()


def cmd_flow(args):
    from .flow import FlowError, descend

    amb = parse_ambient(args.ambient)
    imm = build_immersion(args.initial, amb, args.n, domain="sphere")
    try:
        state = descend(imm, args.functional, area=args.area, max_steps=args.max_steps, tol_g=args.tol_g)
    except FlowError as exc:
        return {"error": type(exc).__name__, "message": str(exc)}, False, None
    summary = state.summary()
    ok = summary["monotone"]
    return summary, bool(ok), state.trace


def cmd_variation(args):
    from .flow import first_variation_check, random_variation

    amb = parse_ambient(args.ambient)
    imm = build_immersion(args.immersion, amb, args.n, domain="sphere")
    rows, ok = [], True
    for k in range(args.fields):
        var = random_variation(imm.grid, imm.dim, seed=args.seed + k)
        for f in args.functional.split(","):
            rep = first_variation_check(imm, var, f.strip(), tol=args.tol)
            rows.append({"field": k, **{key: val for key, val in rep.as_dict().items() if key != "fd"}})
            ok &= rep.passed
    return {"immersion": imm.describe(), "checks": rows}, bool(ok), rows


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="willmore-lab", description="Willmore-type energies, identities and flows on sampled surfaces.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__} (report schema {SCHEMA_VERSION})")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, series: bool = True):
        sp.add_argument("--config", help="JSON file with option values")
        sp.add_argument("--out", help="JSON report path (stdout when omitted)")
        if series:
            sp.add_argument("--csv", help="CSV series path")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("-v", "--verbose", action="store_true")

    sp = sub.add_parser("energy", help="energies of an immersion")
    sp.add_argument("--immersion", required=True)
    sp.add_argument("--ambient")
    sp.add_argument("--n", type=int)
    common(sp)
    sp.set_defaults(func=cmd_energy)

    sp = sub.add_parser("residuals", help="refinement study of residual checks")
    sp.add_argument("--immersion", required=True)
    sp.add_argument("--ambient")
    sp.add_argument("--check", default="all")
    sp.add_argument("--levels", type=_int_list, default=[32, 64, 128, 256])
    sp.add_argument("--expected-order", type=_positive, default=1.8)
    sp.add_argument("--curvature-sign", type=float, help="sign of the curvature term in the 'conservative' check (negative control)")
    common(sp)
    sp.set_defaults(func=cmd_residuals)

    sp = sub.add_parser("dzsolve", help="d-bar solver cases")
    sp.add_argument("--case", choices=["analytic", "potentials"], default="analytic")
    sp.add_argument("--grid", type=int, default=256)
    sp.add_argument("--gamma-scale", type=_nonneg, default=0.0)
    sp.add_argument("--ambient")
    sp.add_argument("--tol", type=_positive, default=5e-3)
    common(sp, series=False)
    sp.set_defaults(func=cmd_dzsolve)

    sp = sub.add_parser("geodesic-spheres", help="energy expansion of small geodesic spheres")
    sp.add_argument("--ambient", default="sphere:dim=3")
    sp.add_argument("--radii", type=_float_list, default=[0.05, 0.075, 0.1, 0.15])
    sp.add_argument("--n", type=int, default=96)
    sp.add_argument("--tol", type=_positive, default=0.1)
    common(sp)
    sp.set_defaults(func=cmd_geodesic_spheres)

    sp = sub.add_parser("flow", help="area-constrained descent on a sphere mesh")
    sp.add_argument("--initial", default="ellipsoid:axes=[1,1,1.3]")
    sp.add_argument("--ambient")
    sp.add_argument("--functional", choices=["wk", "f", "f1"], default="wk")
    sp.add_argument("--area", type=_positive)
    sp.add_argument("--max-steps", type=int, default=2000)
    sp.add_argument("--tol-g", type=_positive, default=1e-6)
    sp.add_argument("--n", type=int, default=64)
    common(sp)
    sp.set_defaults(func=cmd_flow)

    sp = sub.add_parser("variation", help="finite-difference check of first variations")
    sp.add_argument("--immersion", default="sphere")
    sp.add_argument("--ambient")
    sp.add_argument("--functional", default="A,W")
    sp.add_argument("--fields", type=int, default=5)
    sp.add_argument("--n", type=int, default=64)
    sp.add_argument("--tol", type=_positive, default=1e-3)
    common(sp)
    sp.set_defaults(func=cmd_variation)
    return p


def _config_argv(parser: argparse.ArgumentParser, command: str, path: str) -> list[str]:
    """Translate a JSON config file into option flags for ``command``."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: the config must be a JSON object")
    choices = next(a for a in parser._subparsers._group_actions if isinstance(a, argparse._SubParsersAction)).choices
    if command not in choices:
        raise ConfigError(f"unknown subcommand {command!r}")
    sub = choices[command]
    flags = {opt: act for act in sub._actions for opt in act.option_strings if opt.startswith("--")}
    argv: list[str] = []
    unknown = []
    for key, value in data.items():
        flag = "--" + str(key).replace("_", "-")
        if key == "command":
            if value != command:
                raise ConfigError(f"{path}: config is for {value!r}, not {command!r}")
            continue
        if flag not in flags or flag in ("--config", "--help"):
            unknown.append(key)
            continue
        act = flags[flag]
        if act.nargs == 0:
            if value is True:
                argv.append(flag)
            continue
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        argv += [flag, str(value)]
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    return argv


def _config_path(argv: list[str]) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _threads() -> int | None:
    raw = os.environ.get("WILLMORE_LAB_THREADS")
    if raw is None:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"WILLMORE_LAB_THREADS must be a positive integer, got {raw!r}") from None
    if n <= 0:
        raise ConfigError(f"WILLMORE_LAB_THREADS must be a positive integer, got {raw!r}")
    return n


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _threads()
        cfg = _config_path(argv)
        if cfg is not None and argv and not argv[0].startswith("-"):
            # file values go first so that explicit flags override them
            argv = [argv[0]] + _config_argv(parser, argv[0], cfg) + argv[1:]
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"willmore-lab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "verbose")}
    start = time.perf_counter()
    try:
        result, passed, rows = args.func(args)
    except ConfigError as exc:
        print(f"willmore-lab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # reported as an internal error with exit status 3
        log.debug("internal error", exc_info=True)
        print(f"willmore-lab: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    runtime = time.perf_counter() - start
    report = make_report(args.command, config, result, passed, runtime)
    write_json(report, args.out)
    csv_path = getattr(args, "csv", None)
    if args.command == "geodesic-spheres" and csv_path is None and args.out and args.out.endswith(".csv"):
        csv_path = args.out
    if csv_path and rows is not None:
        write_csv(rows, csv_path)
    return EXIT_OK if passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
