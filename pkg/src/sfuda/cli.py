"""Command-line front end.

Subcommands: probe (lp/cp baselines), adapt (sca / shot_lite /
ft_stats), run (batch manifest -> CSV + summary), stats (accuracy
models), gen (synthetic domain pairs). All tabular output uses a fixed
column order and 6-significant-digit floats so repeated runs are
byte-identical.

Exit codes are part of the contract: 2 bad arguments, 3 I/O, 4
validation, 5 degenerate adaptation.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import os
import sys

from . import core, harness, io as fio, stats as st

EXIT_OK = 0
EXIT_ARGS = 2
EXIT_IO = 3
EXIT_VALIDATION = 4
EXIT_DEGENERATE = 5

RESULT_COLUMNS = (
    "pair_id",
    "source",
    "target",
    "method",
    "seed",
    "acc_source_test",
    "acc_target_baseline",
    "acc_target_adapted",
    "delta",
    "failed",
)

_IO_ERRORS = (OSError, fio.IoFailure, fio.FormatError)
_VALIDATION_ERRORS = (
    fio.ManifestError,
    core.ShapeMismatch,
    core.LabelOutOfRange,
    core.NonFiniteValue,
    core.EmptyClass,
    core.UnlabeledSample,
    core.DimMismatch,
    core.TooFewSamples,
    core.EmptyInput,
    st.RankDeficient,
    st.MissingGroup,
    st.DegenerateDof,
    st.DegenerateVariance,
    harness.UnknownMethod,
    harness.MissingKey,
)
_DEGENERATE_ERRORS = (
    core.AllCentroidsStale,
    core.ZeroRow,
    core.ZeroVector,
    st.NumericsError,
)


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _fmt(x: float) -> str:
    return format(x, ".6g")


def _result_row(spec_id, source, target, method, seed, outcome) -> str:
    return ",".join(
        [
            spec_id,
            str(source),
            str(target),
            method,
            str(seed),
            _fmt(outcome.source_acc),
            _fmt(outcome.baseline_target_acc),
            _fmt(outcome.adapted_target_acc),
            _fmt(outcome.delta),
            "true" if outcome.failed else "false",
        ]
    )


def _run_experiment(spec: fio.ExperimentSpec) -> harness.ExperimentOutcome:
    source = fio.read_features(spec.source_path)
    target = fio.read_features(spec.target_path)
    # align the inferred class counts (a target file may not witness every class)
    C = max(source.num_classes, target.num_classes)
    source = core.LabeledDomain(source.features, source.labels, C)
    target = core.LabeledDomain(target.features, target.labels, C)
    return harness.run_pair(
        source,
        target,
        spec.method,
        spec.method_params,
        seed=spec.seed,
        pair_id=spec.id,
    )


def cmd_probe(args) -> int:
    if args.lam < 0:
        raise CliError(EXIT_ARGS, "--lambda must be >= 0")
    spec = fio.ExperimentSpec(
        id=args.pair_id,
        source_path=args.source,
        target_path=args.target,
        method=args.method,
        seed=args.seed,
        method_params={"lambda": args.lam},
    )
    outcome = _run_experiment(spec)
    print(",".join(RESULT_COLUMNS))
    print(_result_row(spec.id, args.source, args.target, args.method, args.seed, outcome))
    return EXIT_OK


def cmd_adapt(args) -> int:
    if args.lam < 0:
        raise CliError(EXIT_ARGS, "--lambda must be >= 0")
    if args.epochs < 1:
        raise CliError(EXIT_ARGS, "--epochs must be >= 1")
    if args.beta < 0:
        raise CliError(EXIT_ARGS, "--beta must be >= 0")
    params = {"lambda": args.lam}
    if args.method == "sca":
        params["init"] = args.init
    elif args.method == "shot_lite":
        params["epochs"] = args.epochs
        params["beta"] = args.beta
    spec = fio.ExperimentSpec(
        id=args.pair_id,
        source_path=args.source,
        target_path=args.target,
        method=args.method,
        seed=args.seed,
        method_params=params,
    )
    outcome = _run_experiment(spec)
    print(",".join(RESULT_COLUMNS))
    print(_result_row(spec.id, args.source, args.target, args.method, args.seed, outcome))
    return EXIT_OK


def _summary_block(outcomes) -> list[str]:
    by_method: dict[str, list] = {}
    for o in outcomes:
        by_method.setdefault(o.method, []).append(o)
    lines = ["# summary"]
    for method in sorted(by_method):
        group = by_method[method]
        rate, (dmean, dstd) = harness.failure_rate(group)
        success, failure = harness.conditional_degradation(group)
        parts = [
            f"method={method}",
            f"n={len(group)}",
            f"failure_rate={_fmt(rate)}",
            f"delta_mean={_fmt(dmean)}",
            f"delta_std={_fmt(dstd)}",
        ]
        parts.append(
            f"success_mean={_fmt(success[0])} success_std={_fmt(success[1])}"
            if success
            else "success_mean=- success_std=-"
        )
        parts.append(
            f"failure_mean={_fmt(failure[0])} failure_std={_fmt(failure[1])}"
            if failure
            else "failure_mean=- failure_std=-"
        )
        lines.append("# " + " ".join(parts))
    return lines


def cmd_run(args) -> int:
    jobs = args.jobs
    if jobs is None:
        env = os.environ.get("SFUDA_THREADS", "")
        jobs = int(env) if env else 1
    if jobs < 1:
        raise CliError(EXIT_ARGS, "--jobs must be >= 1")
    specs = fio.parse_manifest(args.manifest)
    if jobs == 1:
        outcomes = [_run_experiment(s) for s in specs]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_experiment, specs))
    lines = [",".join(RESULT_COLUMNS)]
    for spec, outcome in zip(specs, outcomes):
        lines.append(
            _result_row(
                spec.id, spec.source_path, spec.target_path, spec.method, spec.seed, outcome
            )
        )
    lines.extend(_summary_block(outcomes))
    fio.atomic_write_text(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def _read_records(path) -> tuple[list[st.BackboneRecord], bool]:
    with open(path, "r", newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        if "top1" not in fields or "accuracy" not in fields:
            raise CliError(EXIT_VALIDATION, "input needs top1 and accuracy columns")
        has_pretrain = "pretrain" in fields
        records = []
        for row in reader:
            try:
                records.append(
                    st.BackboneRecord(
                        top1=float(row["top1"]),
                        pretrain=int(row["pretrain"]) if has_pretrain else 0,
                        accuracy=float(row["accuracy"]),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise CliError(EXIT_VALIDATION, f"bad record {row}: {exc}") from None
    return records, has_pretrain


def cmd_stats(args) -> int:
    records, has_pretrain = _read_records(args.input)
    if args.model == "linear":
        if args.prune:
            raise CliError(EXIT_ARGS, "--prune applies to the interaction model only")
        fit = st.fit_linear(records)
        removed: list[str] = []
    else:
        if not has_pretrain:
            raise CliError(EXIT_VALIDATION, "interaction model needs a pretrain column")
        if args.prune:
            fit, removed = st.prune_insignificant(records, alpha=0.01)
        else:
            fit = st.fit_interaction(records)
            removed = []
    print("term,estimate,std_error,t_stat,p_value")
    for i, term in enumerate(fit.terms):
        print(
            ",".join(
                [
                    term,
                    _fmt(fit.coefficients[i]),
                    _fmt(fit.std_errors[i]),
                    _fmt(fit.t_stats[i]),
                    _fmt(fit.p_values[i]),
                ]
            )
        )
    print(f"# r2={_fmt(fit.r2)}")
    print(f"# adj_r2={_fmt(fit.adj_r2)}")
    if removed:
        print(f"# removed={','.join(removed)}")
    return EXIT_OK


def cmd_gen(args) -> int:
    try:
        with open(args.spec, "r") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_ARGS, f"spec is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise CliError(EXIT_ARGS, "spec must be a JSON object")
    try:
        spec = harness.ShiftSpec(**raw)
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_ARGS, f"bad shift spec: {exc}") from None
    source, target = harness.gen_domain_pair(spec)
    fio.write_sfdk(source, args.out_source)
    fio.write_sfdk(target, args.out_target)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sfuda",
        description="Source-free domain adaptation on precomputed feature files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common_io(p):
        p.add_argument("--source", required=True, help="source feature file (.sfdk or .csv)")
        p.add_argument("--target", required=True, help="target feature file (.sfdk or .csv)")
        p.add_argument("--lambda", dest="lam", type=float, default=0.01)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--pair-id", default="pair")

    p = sub.add_parser("probe", help="evaluate lp/cp baselines on a domain pair")
    common_io(p)
    p.add_argument("--method", choices=["lp", "cp"], default="lp")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("adapt", help="run an adaptation method on a domain pair")
    common_io(p)
    p.add_argument("--method", choices=["sca", "shot_lite", "ft_stats"], required=True)
    p.add_argument(
        "--init",
        choices=["source_labels", "mr_weights", "hard", "soft"],
        default="mr_weights",
    )
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--beta", type=float, default=0.3)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("run", help="execute a manifest of experiments")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("stats", help="fit the accuracy models on a records CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--model", choices=["linear", "interaction"], required=True)
    p.add_argument("--prune", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("gen", help="generate a synthetic source/target pair")
    p.add_argument("--spec", required=True, help="JSON shift spec")
    p.add_argument("--out-source", required=True)
    p.add_argument("--out-target", required=True)
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"sfuda: {exc}", file=sys.stderr)
        return exc.code
    except _DEGENERATE_ERRORS as exc:
        print(f"sfuda: degenerate adaptation: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except _VALIDATION_ERRORS as exc:
        print(f"sfuda: validation: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except _IO_ERRORS as exc:
        print(f"sfuda: i/o: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"sfuda: {exc}", file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())
