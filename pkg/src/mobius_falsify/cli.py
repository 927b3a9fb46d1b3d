"""Command-line entry point: ``mobius-falsify {synth,analyze,maxent,resample,compare}``.

Exit codes: 0 success, 1 comparison failure, 2 usage error, 3 data error,
4 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .exceptions import ConvergenceError, DataError, MobiusFalsifyError, ShapeMismatchError
from .maxent import ALGORITHMS, FitConfig, fit_surrogate
from .pipeline import AnalysisConfig, compare_report, format_table, run_analysis
from .records import aggregate, load_dataset, save_dataset
from .resample import LatticeTerm, ResampleConfig, default_threads, resample
from .synth import NoiseSpec, sample_dataset

EXIT_OK = 0
EXIT_COMPARE_FAILED = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_CONVERGENCE = 4


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _input_path(text):
    path = Path(text)
    if not path.is_file():
        raise CliError(f"file not found: {text}", EXIT_DATA)
    return path


def _output_path(text):
    if text is None:
        return None
    path = Path(text)
    if not path.parent.exists():
        raise CliError(f"output directory does not exist: {path.parent}", EXIT_DATA)
    return path


def _emit(text, output):
    if output is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        output.write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True)


def _resample_config(args):
    return ResampleConfig(
        bootstrap_replicates=args.bootstrap,
        permutation_shuffles=args.shuffles,
        ci_level=args.ci_level,
        seed=args.seed,
        threads=args.threads,
    )


def _pair_rates(items, flag):
    out = {}
    for item in items or ():
        try:
            pair, rate = item.split("=")
            i, j = (int(v) - 1 for v in pair.split(","))
            out[(i, j)] = float(rate)
        except ValueError:
            raise CliError(f"{flag} expects I,J=RATE, got {item!r}", EXIT_USAGE) from None
    return out


def cmd_synth(args):
    output = _output_path(args.output)
    flips = (args.eps,)
    if args.eps_per_bit:
        flips = tuple(float(v) for v in args.eps_per_bit.split(","))
    overrides = {
        "flip_probs": flips,
        "pair_flip": _pair_rates(args.pair_flip, "--pair-flip"),
        "crosstalk": _pair_rates(args.crosstalk, "--crosstalk"),
    }
    if args.shots is not None:
        overrides["shots_per_circuit"] = args.shots
    try:
        spec = NoiseSpec.preset(args.preset, seed=args.seed, **overrides)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    dataset = sample_dataset(spec)
    dataset.provenance = f"synthetic preset={args.preset} seed={args.seed}"
    try:
        save_dataset(dataset, output)
    except OSError as exc:
        raise CliError(f"cannot write {output}: {exc}", EXIT_DATA) from None
    eps_text = ",".join(f"{e:g}" for e in spec.flip_probs)
    print(f"records={len(dataset.records)} shots={dataset.total_shots} eps={eps_text} -> {output}")
    return EXIT_OK


def cmd_analyze(args):
    path = _input_path(args.input)
    output = _output_path(args.output)
    dataset = load_dataset(path, bit_order=args.bit_order)
    config = AnalysisConfig(
        seed=args.seed,
        resample=_resample_config(args),
        fit=FitConfig(args.tol, args.max_iter, args.algorithm),
        label_prior=args.prior,
        statistic_subset=args.statistic,
        statistic_kind=args.kind,
        decoder_selection_alpha=None if args.no_decoder_gate else args.selection_alpha,
    )
    report = run_analysis(dataset, config)
    if args.format == "table":
        _emit(report.format_table(), output)
    else:
        _emit(report.to_json(), output)
    return EXIT_OK


def cmd_maxent(args):
    path = _input_path(args.input)
    output = _output_path(args.output)
    counts = aggregate(load_dataset(path, bit_order=args.bit_order))
    surrogate = fit_surrogate(counts, FitConfig(args.tol, args.max_iter, args.algorithm),
                              threads=args.threads)
    _emit(_dump(surrogate.to_dict()), output)
    return EXIT_OK


def cmd_resample(args):
    path = _input_path(args.input)
    output = _output_path(args.output)
    counts = aggregate(load_dataset(path, bit_order=args.bit_order))
    prior = None if args.prior == "empirical" else args.prior
    statistic = LatticeTerm(args.statistic, args.kind, prior)
    report = resample(counts, statistic, _resample_config(args))
    payload = report.to_dict()
    payload["statistic"] = statistic.name(counts.n)
    _emit(_dump(payload), output)
    return EXIT_OK


def _load_report(path):
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: malformed report ({exc})", EXIT_DATA) from None
    if not isinstance(obj, dict):
        raise CliError(f"{path}: report must be a JSON object", EXIT_DATA)
    return obj


def cmd_compare(args):
    report = _load_report(_input_path(args.report))
    reference = _load_report(_input_path(args.reference))
    tolerances = {}
    for item in args.tol or ():
        try:
            key, value = item.rsplit("=", 1)
            tolerances[key] = float(value)
        except ValueError:
            raise CliError(f"--tol expects FIELD=VALUE, got {item!r}", EXIT_USAGE) from None
    results = compare_report(report, reference, tolerances, args.default_tol)
    failed = [r for r in results if not r.passed]
    if args.format == "json":
        print(_dump([{"field": r.field, "passed": r.passed, "actual": r.actual,
                      "expected": r.expected, "tolerance": r.tolerance} for r in results]))
    else:
        for r in results:
            if r.passed and not args.verbose:
                continue
            mark = "PASS" if r.passed else "FAIL"
            print(f"{mark} {r.field}: actual={r.actual!r} expected={r.expected!r} tol={r.tolerance:g}")
        print(f"{len(results) - len(failed)}/{len(results)} fields within tolerance")
    return EXIT_COMPARE_FAILED if failed else EXIT_OK


def _add_common_input(p):
    p.add_argument("input", help="dataset JSON file")
    p.add_argument("-o", "--output", help="write result here instead of stdout")
    p.add_argument("--bit-order", choices=("msb", "lsb"), default="msb",
                   help="msb (default): the last character is variable 1; lsb: the first is")
    p.add_argument("--threads", type=int, default=default_threads(),
                   help="worker cap; results do not depend on it")


def _add_resample_flags(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bootstrap", type=int, default=5000, help="bootstrap replicates")
    p.add_argument("--shuffles", type=int, default=10000, help="permutation shuffles")
    p.add_argument("--ci-level", type=float, default=0.95)
    p.add_argument("--prior", choices=("empirical", "uniform"), default="empirical")
    p.add_argument("--statistic", default=None, help="subset label such as 123 (default: all variables)")
    p.add_argument("--kind", choices=("f", "g"), default="f")


def _add_fit_flags(p):
    p.add_argument("--algorithm", choices=ALGORITHMS, default=ALGORITHMS[0])
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=100_000)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mobius-falsify",
        description="Subset-lattice information analysis of labelled bitstring counts.",
        epilog="exit codes: 0 ok, 1 comparison failed, 2 usage, 3 data, 4 non-convergence",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic parity dataset")
    p.add_argument("--preset", choices=("a1", "a1b"), default="a1")
    p.add_argument("--eps", type=float, default=0.0, help="symmetric per-bit flip probability")
    p.add_argument("--eps-per-bit", help="comma-separated per-variable flip probabilities")
    p.add_argument("--pair-flip", action="append", metavar="I,J=RATE",
                   help="correlated flip of variables I and J (1-based); repeatable")
    p.add_argument("--crosstalk", action="append", metavar="I,K=RATE",
                   help="variable I decays 1->0 with RATE while variable K reads 1; repeatable")
    p.add_argument("--shots", type=int, help="shots per circuit (default 512)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("analyze", help="run the full analysis on a dataset")
    _add_common_input(p)
    _add_resample_flags(p)
    _add_fit_flags(p)
    p.add_argument("--format", choices=("json", "table"), default="json")
    p.add_argument("--selection-alpha", type=float, default=0.05,
                   help="likelihood-ratio gate level for the decoders")
    p.add_argument("--no-decoder-gate", action="store_true",
                   help="always keep fitted decoder features")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("maxent", help="fit the per-label pairwise max-ent surrogate")
    _add_common_input(p)
    _add_fit_flags(p)
    p.set_defaults(func=cmd_maxent)

    p = sub.add_parser("resample", help="bootstrap interval and permutation test")
    _add_common_input(p)
    _add_resample_flags(p)
    p.set_defaults(func=cmd_resample)

    p = sub.add_parser("compare", help="compare a report against a reference")
    p.add_argument("report")
    p.add_argument("reference")
    p.add_argument("--tol", action="append", metavar="FIELD=VALUE",
                   help="absolute tolerance for one flattened field; repeatable")
    p.add_argument("--default-tol", type=float, default=1e-12)
    p.add_argument("--format", choices=("json", "table"), default="table")
    p.add_argument("-v", "--verbose", action="store_true", help="list passing fields too")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConvergenceError as exc:
        stage = f" in stage '{exc.stage}'" if exc.stage else ""
        print(f"error{stage}: non-convergence: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except ShapeMismatchError as exc:
        print(f"error: shape mismatch: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DataError, MobiusFalsifyError) as exc:
        stage = f" in stage '{exc.stage}'" if exc.stage else ""
        print(f"error{stage}: {exc}", file=sys.stderr)
        cause = getattr(exc, "cause", None)
        if isinstance(cause, ConvergenceError):
            return EXIT_CONVERGENCE
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
