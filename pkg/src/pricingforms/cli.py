"""Batch experiment runner: every module exposed as a subcommand.

File-based inputs, schema-validated JSON/CSV outputs, and a manifest
emitted alongside every run.  Exit-code contract:

* 0  — success / no arbitrage / no defect detected
* 2  — arbitrage or martingale defect detected
* 64 — usage or parse error
* 70 — internal numerical failure
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .forms import (
    ArbitrageDetected,
    CallCurve,
    TailFitError,
    implied_form_from_curve,
    validate_call_curve,
)
from .kernel import (
    GridSpec,
    bs_generator,
    bs_step,
    generator_arbitrage_check,
    implied_short_rate,
    explicit_dt_bound,
    operator_norm,
    price_european,
    value_at,
)
from .market import AugmentedStateSpace, FiniteMarket, price_bounds
from .payoffs import GrowthDirection, payoff_from_json
from .simplex import LPError
from .stochvol import (
    PRESETS,
    SVParams,
    conditioned_estimator,
    limit_order_experiment,
    naive_estimator,
)

EXIT_OK = 0
EXIT_DETECTED = 2
EXIT_USAGE = 64
EXIT_NUMERICAL = 70

SCHEMA_VERSION = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with code 2
        raise UsageError(message)


# ---------------------------------------------------------------------------
# Output schemas (validated before anything is written)

_VIOLATION = {
    "type": "object",
    "required": ["kind", "strike", "magnitude"],
    "properties": {
        "kind": {"type": "string"},
        "strike": {"type": "number"},
        "magnitude": {"type": "number"},
    },
}
VERDICT_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "ok", "violations"],
    "properties": {
        "schema_version": {"type": "integer"},
        "ok": {"type": "boolean"},
        "violations": {"type": "array", "items": _VIOLATION},
    },
}
FORM_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "atoms", "density", "boundary"],
    "properties": {
        "schema_version": {"type": "integer"},
        "atoms": {"type": "array"},
        "density": {"type": ["object", "null"]},
        "boundary": {"type": "object"},
    },
}
IMPLIED_SUMMARY_SCHEMA = {
    "type": "object",
    "required": [
        "schema_version",
        "representable_by_probability",
        "boundary_weight",
        "atom_at_zero",
    ],
}
BOUNDS_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "lower", "upper"],
}
KERNEL_REPORT_SCHEMA = {
    "type": "object",
    "required": [
        "schema_version",
        "price",
        "operator_norm",
        "arbitrage_ok",
        "implied_short_rate",
    ],
}
MARTINGALITY_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "naive", "conditioned", "agreement_z"],
}
SWEEP_SUMMARY_SCHEMA = {
    "type": "object",
    "required": [
        "schema_version",
        "corner_estimate",
        "corner_stderr",
        "martingale_defect",
        "defect_significant",
        "fixed_n_expectation",
    ],
}
MANIFEST_SCHEMA = {
    "type": "object",
    "required": [
        "schema_version",
        "tool_version",
        "subcommand",
        "config",
        "seed",
        "outputs",
        "wall_clock_s",
    ],
}


def _to_builtin(obj):
    if isinstance(obj, dict):
        return {k: _to_builtin(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_builtin(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_to_builtin(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dump(obj) -> str:
    return json.dumps(_to_builtin(obj), indent=2, sort_keys=True) + "\n"


def _outdir(args) -> Path:
    if getattr(args, "outdir", None):
        return Path(args.outdir)
    return Path(os.environ.get("PRICINGFORMS_OUTDIR", "."))


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def _read_json(path: str) -> dict:
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed JSON in {path}: {exc}") from exc


def _validated(obj: dict, schema: dict) -> dict:
    obj = _to_builtin(obj)
    jsonschema.validate(obj, schema)
    return obj


class _Run:
    """Collects outputs and writes the manifest when the run closes."""

    def __init__(self, args, subcommand: str, config: dict, seed=None):
        self.subcommand = subcommand
        self.config = _to_builtin(config)
        self.seed = seed
        self.outputs: list[str] = []
        self.started = time.perf_counter()
        self.outdir = _outdir(args)

    def write(self, path: Path, text: str):
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        self.outputs.append(str(path))

    def emit(self, payload: dict, schema: dict, out: str | None, default_name: str):
        payload = dict(payload)
        payload.setdefault("schema_version", SCHEMA_VERSION)
        payload = _validated(payload, schema)
        text = _dump(payload)
        path = Path(out) if out else self.outdir / default_name
        self.write(path, text)
        sys.stdout.write(text)
        return payload

    def close(self):
        manifest = _validated(
            {
                "schema_version": SCHEMA_VERSION,
                "tool_version": __version__,
                "subcommand": self.subcommand,
                "config": self.config,
                "seed": self.seed,
                "outputs": self.outputs,
                "wall_clock_s": time.perf_counter() - self.started,
            },
            MANIFEST_SCHEMA,
        )
        if self.outputs:
            primary = Path(self.outputs[0])
            path = primary.with_name(primary.stem + ".manifest.json")
        else:  # pragma: no cover - every subcommand writes an output
            path = self.outdir / f"{self.subcommand}.manifest.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(_dump(manifest))


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_validate_curve(args) -> int:
    curve = _parse_curve(args.curve)
    run = _Run(args, "validate-curve", {"curve": args.curve, "spot": args.spot, "tol": args.tol})
    verdict = validate_call_curve(curve, spot=args.spot, tol=args.tol)
    run.emit(verdict.to_json(), VERDICT_SCHEMA, args.out, "verdict.json")
    run.close()
    return EXIT_OK if verdict.ok else EXIT_DETECTED


def _parse_curve(path: str) -> CallCurve:
    try:
        return CallCurve.from_csv(_read_text(path))
    except ValueError as exc:
        raise UsageError(f"bad curve file {path}: {exc}") from exc


def _cmd_implied_form(args) -> int:
    curve = _parse_curve(args.curve)
    run = _Run(args, "implied-form", {"curve": args.curve, "spot": args.spot, "out": args.out})
    try:
        result = implied_form_from_curve(curve, spot=args.spot)
    except ArbitrageDetected as exc:
        payload = {"arbitrage": True, "detail": str(exc)}
        if exc.verdict is not None:
            payload.update(exc.verdict.to_json())
            run.emit(payload, VERDICT_SCHEMA, args.out, "implied_form.json")
        else:
            sys.stdout.write(_dump(payload))
        run.close()
        return EXIT_DETECTED
    form_json = result.form.to_json()
    form_json["schema_version"] = SCHEMA_VERSION
    run.emit(form_json, FORM_SCHEMA, args.out, "implied_form.json")
    summary = {
        "representable_by_probability": result.representable_by_probability,
        "boundary_weight": result.boundary_weight,
        "atom_at_zero": result.atom_at_zero,
        "tail_error_estimate": result.tail_error_estimate,
    }
    summary = _validated(
        {**summary, "schema_version": SCHEMA_VERSION}, IMPLIED_SUMMARY_SCHEMA
    )
    sys.stdout.write(_dump(summary))
    run.close()
    return EXIT_OK


def _parse_target(obj: dict, space: AugmentedStateSpace) -> np.ndarray:
    if "vector" in obj:
        vec = np.asarray(obj["vector"], dtype=float)
        if vec.size != space.dim:
            raise UsageError("target vector length does not match market space")
        return vec
    try:
        return space.payoff_vector(payoff_from_json(obj))
    except (KeyError, ValueError) as exc:
        raise UsageError(f"bad target payoff: {exc}") from exc


def _cmd_bounds(args) -> int:
    try:
        market = FiniteMarket.from_json(_read_json(args.market))
    except (KeyError, ValueError) as exc:
        raise UsageError(f"bad market file {args.market}: {exc}") from exc
    target = _parse_target(_read_json(args.target), market.space)
    run = _Run(args, "bounds", {"market": args.market, "target": args.target})
    try:
        bounds = price_bounds(market, target)
    except ArbitrageDetected as exc:
        run.emit(
            {"arbitrage": True, "detail": str(exc), "lower": None, "upper": None},
            {"type": "object", "required": ["arbitrage"]},
            args.out,
            "bounds.json",
        )
        run.close()
        return EXIT_DETECTED
    names = list(bounds.instrument_names)
    payload = {
        "lower": bounds.lower,
        "upper": bounds.upper,
        "subhedge": dict(zip(names, bounds.subhedge)) if bounds.subhedge is not None else None,
        "superhedge": dict(zip(names, bounds.superhedge)) if bounds.superhedge is not None else None,
    }
    run.emit(payload, BOUNDS_SCHEMA, args.out, "bounds.json")
    run.close()
    return EXIT_OK


def _cmd_kernel_check(args) -> int:
    scenario = _read_json(args.scenario)
    run = _Run(args, "kernel-check", {"scenario": args.scenario})
    try:
        grid_spec = scenario["grid"]
        grid = GridSpec(
            kind=grid_spec.get("kind", "log"),
            s_min=float(grid_spec["s_min"]),
            s_max=float(grid_spec["s_max"]),
            n=int(grid_spec["n"]),
        ).build()
        slope = bool(scenario.get("slope_coordinate", True))
        space = AugmentedStateSpace(
            grid=grid,
            directions=(GrowthDirection.LINEAR_AT_INFINITY,) if slope else (),
        )
        r = float(scenario["r"])
        sigma = float(scenario["sigma"])
        steps = int(scenario["steps"])
        maturity = float(scenario["maturity"])
        theta = float(scenario.get("theta", 0.5))
        payoff = payoff_from_json(scenario["payoff"])
        spot = float(scenario.get("spot", 0.0) or np.median(grid))
    except (KeyError, ValueError, TypeError) as exc:
        raise UsageError(f"bad scenario file {args.scenario}: {exc}") from exc

    gen = bs_generator(r, sigma, space)
    verdict = generator_arbitrage_check(gen)
    vec = space.payoff_vector(payoff)
    values = price_european(gen, vec, maturity, steps, theta=theta)
    rates = implied_short_rate(gen)
    step = bs_step(gen, 0.0, maturity / steps, theta=1.0)  # implicit step is positive
    payload = {
        "price": value_at(space, values, spot),
        "spot": spot,
        "operator_norm": operator_norm(step),
        "operator_min_entry": step.min_entry,
        "arbitrage_ok": verdict.ok,
        "negative_offdiagonals": len(verdict.witnesses),
        "implied_short_rate": {"min": float(np.min(rates)), "max": float(np.max(rates))},
        "cn_positivity_dt_bound": explicit_dt_bound(gen, theta),
    }
    run.emit(payload, KERNEL_REPORT_SCHEMA, args.out, "kernel_report.json")
    run.close()
    return EXIT_OK if verdict.ok else EXIT_DETECTED


def _sv_config(args) -> tuple[SVParams, dict, int]:
    config = _read_json(args.config)
    if "preset" in config:
        name = config["preset"]
        if name not in PRESETS:
            raise UsageError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
        params = PRESETS[name]
        if "n" in config:
            params = params.with_steps(int(config["n"]))
    elif "params" in config:
        try:
            params = SVParams.from_json(config["params"])
        except (KeyError, ValueError) as exc:
            raise UsageError(f"bad params in {args.config}: {exc}") from exc
    else:
        raise UsageError("config needs 'preset' or 'params'")
    paths = int(args.paths or config.get("paths", 100_000))
    return params, config, paths


def _cmd_martingality(args) -> int:
    params, config, paths = _sv_config(args)
    run = _Run(
        args,
        "martingality",
        {"config": args.config, "paths": paths, "workers": args.workers},
        seed=args.seed,
    )
    naive = naive_estimator(params, paths, args.seed, workers=args.workers)
    conditioned = conditioned_estimator(params, paths, args.seed, workers=args.workers)
    combined = (naive.stderr**2 + conditioned.stderr**2) ** 0.5
    gap = abs(naive.estimate - conditioned.estimate)
    payload = {
        "params": params.to_json(),
        "naive": naive.to_json(),
        "conditioned": conditioned.to_json(),
        "agreement_z": gap / combined if combined > 0 else 0.0,
    }
    run.emit(payload, MARTINGALITY_SCHEMA, args.out, "martingality.json")
    run.close()
    return EXIT_OK


def _parse_grid_list(text: str, name: str, conv):
    try:
        values = [conv(chunk) for chunk in text.split(",") if chunk.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --{name} list {text!r}: {exc}") from exc
    if not values:
        raise UsageError(f"--{name} list is empty")
    return values


def _cmd_barrier_sweep(args) -> int:
    params, config, paths = _sv_config(args)
    barriers = _parse_grid_list(args.barriers, "barriers", float)
    steps = _parse_grid_list(args.steps, "steps", int)
    run = _Run(
        args,
        "barrier-sweep",
        {
            "config": args.config,
            "barriers": barriers,
            "steps": steps,
            "paths": paths,
            "workers": args.workers,
        },
        seed=args.seed,
    )
    try:
        result = limit_order_experiment(
            params, barriers, steps, paths, args.seed, workers=args.workers
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out_csv = Path(args.out) if args.out else run.outdir / "sweep.csv"
    run.write(out_csv, result.to_csv())
    summary = {**result.to_json_summary(), "schema_version": SCHEMA_VERSION}
    summary_path = out_csv.with_name(out_csv.stem + ".summary.json")
    summary = _validated(summary, SWEEP_SUMMARY_SCHEMA)
    run.write(summary_path, _dump(summary))
    sys.stdout.write(_dump(summary))
    run.close()
    return EXIT_DETECTED if result.defect_significant else EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="pricingforms", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("validate-curve", help="static-arbitrage checks on a call curve")
    p.add_argument("--curve", required=True, help="CSV with header strike,price")
    p.add_argument("--spot", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", default=None)
    p.add_argument("--outdir", default=None)
    p.set_defaults(func=_cmd_validate_curve)

    p = sub.add_parser("implied-form", help="extract the pricing form a curve implies")
    p.add_argument("--curve", required=True)
    p.add_argument("--spot", type=float, required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--outdir", default=None)
    p.set_defaults(func=_cmd_implied_form)

    p = sub.add_parser("bounds", help="super/sub-replication bounds for a target payoff")
    p.add_argument("--market", required=True, help="market JSON file")
    p.add_argument("--target", required=True, help="payoff JSON file")
    p.add_argument("--out", default=None)
    p.add_argument("--outdir", default=None)
    p.set_defaults(func=_cmd_bounds)

    p = sub.add_parser("kernel-check", help="build a diffusion kernel and check it")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--out", default=None)
    p.add_argument("--outdir", default=None)
    p.set_defaults(func=_cmd_kernel_check)

    p = sub.add_parser("martingality", help="naive vs conditioned estimators of E[X_t]/x0")
    p.add_argument("--config", required=True, help="experiment JSON config")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None)
    p.add_argument("--outdir", default=None)
    p.set_defaults(func=_cmd_martingality)

    p = sub.add_parser("barrier-sweep", help="survival table over barriers and step counts")
    p.add_argument("--config", required=True)
    p.add_argument("--barriers", required=True, help="comma-separated, e.g. 2,4,6,8,10")
    p.add_argument("--steps", required=True, help="comma-separated, e.g. 64,256,1024")
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None)
    p.add_argument("--outdir", default=None)
    p.set_defaults(func=_cmd_barrier_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArbitrageDetected,) as exc:
        # Subcommands handle detection themselves; reaching here means a
        # precondition failed mid-computation.
        print(f"arbitrage: {exc}", file=sys.stderr)
        return EXIT_DETECTED
    except (TailFitError, LPError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
