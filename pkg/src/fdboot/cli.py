"""Command-line front end: test | fpc | simulate | generate.

Every command is a thin shell over the library; reports are
machine-readable JSON with a fixed field order, so identical invocations
with identical seeds produce byte-identical output. The environment
variable ``FDBOOT_SEED`` overrides ``--seed`` when set.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .bootstrap import BootstrapScheme, SchemeKind, bootstrap_pvalue, default_scheme
from .curves import load_dataset, save_dataset
from .errors import NumericalError, ValidationError
from .moments import mean_test_eigensystem, pooled_eigensystem
from .simgen import (
    DEFAULT_SMOOTH_BASIS,
    GeneratorSpec,
    experiment_from_config,
    generate_dataset,
    run_size_power,
)
from .statistics import StatKind, asymptotic_pvalue, compute_statistic

FP_RULE_THRESHOLD = 0.85

_COV_STATS = (StatKind.TN, StatKind.TPN_G, StatKind.TPN)


def _jsonify(value):
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, np.ndarray):
        return [_jsonify(v) for v in value]
    if isinstance(value, (list, tuple)):
        return [_jsonify(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonify(v) for k, v in value.items()}
    return value


def _emit(payload: dict, output: str | None) -> None:
    text = json.dumps(_jsonify(payload), indent=2, ensure_ascii=False) + "\n"
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _resolve_seed(args) -> int:
    env = os.environ.get("FDBOOT_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ValidationError(f"FDBOOT_SEED must be an integer, got {env!r}") from None
    return args.seed


def _statistic_warnings(stat) -> list[str]:
    warnings = []
    gaps = stat.extras.get("degenerate_gaps", ())
    if gaps:
        warnings.append(
            "near-degenerate eigenvalue gap after component(s) "
            + ", ".join(str(k) for k in gaps)
            + "; projection statistics assume distinct leading eigenvalues"
        )
    return warnings


def _load_input(args):
    dataset = load_dataset(args.input)
    if args.smooth_basis:
        dataset = dataset.smoothed(args.smooth_basis)
    return dataset


def cmd_test(args) -> int:
    kind = StatKind(args.statistic)
    seed = _resolve_seed(args)
    hypothesis = args.hypothesis
    if hypothesis is None:
        hypothesis = "covariance" if kind in _COV_STATS else "mean"
    elif hypothesis == "covariance" and kind not in _COV_STATS:
        raise ValidationError(
            f"statistic {kind.value} tests mean functions, not covariance functions"
        )
    elif hypothesis == "mean" and kind in _COV_STATS:
        raise ValidationError(
            f"statistic {kind.value} tests covariance functions, not mean functions"
        )
    if args.method == "asym":
        if kind in (StatKind.TN, StatKind.SN):
            raise ValidationError(
                f"{kind.value} is bootstrap-only: its limit law has an unknown "
                "infinite spectrum, so --method asym is not available"
            )
        if args.scheme is not None:
            raise ValidationError("--scheme applies to --method boot only")

    dataset = _load_input(args)
    warnings: list[str] = []
    if args.method == "boot":
        if args.scheme is not None:
            scheme = BootstrapScheme(SchemeKind(args.scheme))
        elif hypothesis == "joint":
            scheme = BootstrapScheme(SchemeKind.JOINT_NULL)
        else:
            scheme = default_scheme(kind)
        result = bootstrap_pvalue(
            dataset, kind, scheme, args.B, seed, args.p, jobs=args.jobs
        )
        stat = result.observed
        p_value = result.p_value
        scheme_name = scheme.kind.value
        warnings.extend(result.warnings)
    else:
        stat = compute_statistic(dataset, kind, args.p)
        p_value = asymptotic_pvalue(stat, seed=seed)
        scheme_name = None
    warnings.extend(_statistic_warnings(stat))

    report = {"test": kind.value, "hypothesis": hypothesis, "statistic": stat.value,
              "p_value": p_value, "method": args.method,
              "scheme": scheme_name,
              "B": args.B if args.method == "boot" else None}
    if kind.needs_p:
        report["p"] = stat.p
        report["f_p"] = stat.extras.get("f_p")
    report.update(
        {
            "n": list(dataset.sizes),
            "seed": seed,
            "smooth_basis": args.smooth_basis or None,
            "warnings": warnings,
            "version": __version__,
        }
    )
    _emit(report, args.output)
    return 0


def cmd_fpc(args) -> int:
    dataset = _load_input(args)
    limit = min(args.max_p, dataset.total, dataset.m)
    if args.hypothesis == "mean":
        system = mean_test_eigensystem(dataset, limit)
    else:
        system = pooled_eigensystem(dataset, limit)
    fractions = system.explained_fraction
    qualifying = np.nonzero(fractions >= FP_RULE_THRESHOLD)[0]
    report = {
        "hypothesis": args.hypothesis,
        "n": list(dataset.sizes),
        "rows": [
            {
                "p": k + 1,
                "eigenvalue": float(system.eigenvalues[k]),
                "f_p": float(fractions[k]),
            }
            for k in range(limit)
        ],
        "suggested_p": int(qualifying[0]) + 1 if qualifying.size else None,
        "rule_threshold": FP_RULE_THRESHOLD,
        "smooth_basis": args.smooth_basis or None,
        "version": __version__,
    }
    _emit(report, args.output)
    return 0


def cmd_simulate(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        try:
            config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from None
    spec = experiment_from_config(config)
    result = run_size_power(spec, jobs=args.jobs)
    csv_path = args.output_prefix + ".csv"
    json_path = args.output_prefix + ".json"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(result.to_csv())
    with open(json_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(_jsonify(result.to_dict()), indent=2) + "\n")
    sys.stdout.write(result.to_csv())
    sys.stdout.write(f"written: {csv_path}, {json_path}\n")
    return 0


def cmd_generate(args) -> int:
    seed = _resolve_seed(args)
    sizes = [int(v) for v in args.n.split(",") if v.strip()]
    if len(sizes) < 2:
        raise ValidationError("--n must list at least two group sizes, e.g. 25,25")
    smooth = args.smooth_basis if args.smooth_basis else None
    specs = [
        GeneratorSpec(
            kind=args.kind,
            scale=1.0 if i == 0 else args.scale,
            shift=0.0 if i == 0 else args.shift,
            m=args.m,
            smooth_basis=smooth,
        )
        for i in range(len(sizes))
    ]
    dataset = generate_dataset(specs, sizes, np.random.default_rng(seed))
    comments = [
        f"seed,{seed}",
        f"generator,{args.kind},scale={args.scale},shift={args.shift},"
        f"smooth_basis={smooth}",
    ]
    if args.output:
        save_dataset(dataset, args.output, comments)
    else:
        save_dataset(dataset, sys.stdout, comments)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fdboot",
        description=(
            "Bootstrap tests for equality of mean and covariance functions "
            "between two samples of curves"
        ),
    )
    parser.add_argument("--version", action="version", version=f"fdboot {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    test = sub.add_parser("test", help="run one hypothesis test on a CSV dataset")
    test.add_argument("--input", required=True, help="CSV curve file")
    test.add_argument(
        "--statistic",
        required=True,
        choices=[k.value for k in StatKind],
        help="tn/tpn/tpn-g test covariance functions, sn/sp1/sp2 mean functions",
    )
    test.add_argument("--p", type=int, default=None, help="number of leading FPCs")
    test.add_argument("--B", type=int, default=1000, help="bootstrap replicates")
    test.add_argument("--method", choices=["boot", "asym"], default="boot")
    test.add_argument(
        "--hypothesis", choices=["covariance", "mean", "joint"], default=None
    )
    test.add_argument(
        "--scheme",
        choices=[k.value for k in SchemeKind],
        default=None,
        help="override the default null-enforcing resampling scheme",
    )
    test.add_argument("--seed", type=int, default=0)
    test.add_argument(
        "--smooth-basis",
        type=int,
        default=0,
        help="project input curves onto this many Fourier functions first (0 = off)",
    )
    test.add_argument("--jobs", type=int, default=1)
    test.add_argument("--output", default=None, help="write the JSON report here")
    test.set_defaults(func=cmd_test)

    fpc = sub.add_parser("fpc", help="eigenvalue / explained-variance table")
    fpc.add_argument("--input", required=True)
    fpc.add_argument("--max-p", type=int, default=10)
    fpc.add_argument("--hypothesis", choices=["covariance", "mean"], default="covariance")
    fpc.add_argument("--smooth-basis", type=int, default=0)
    fpc.add_argument("--output", default=None)
    fpc.set_defaults(func=cmd_fpc)

    sim = sub.add_parser("simulate", help="run a size/power experiment from a config")
    sim.add_argument("config", help="JSON experiment configuration")
    sim.add_argument("--output-prefix", default="experiment")
    sim.add_argument("--jobs", type=int, default=1)
    sim.set_defaults(func=cmd_simulate)

    gen = sub.add_parser("generate", help="write a synthetic CSV dataset")
    gen.add_argument("--kind", required=True, choices=["bm", "bb", "ng"])
    gen.add_argument("--n", required=True, help="comma-separated group sizes")
    gen.add_argument("--m", type=int, default=500)
    gen.add_argument(
        "--scale", type=float, default=1.0, help="scale for groups after the first"
    )
    gen.add_argument(
        "--shift", type=float, default=0.0, help="shift for groups after the first"
    )
    gen.add_argument("--smooth-basis", type=int, default=DEFAULT_SMOOTH_BASIS)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--output", default=None, help="CSV path (default: stdout)")
    gen.set_defaults(func=cmd_generate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"fdboot: error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"fdboot: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
