"""Command-line interface.

Subcommands: generate (synthesize a scenario), estimate (run the estimator
on a data file), experiment (grid sweeps to CSV, optionally with figures),
hashdemo (combine-compression missing-fraction report).

Exit codes: 0 success, 2 dataset not complete enough, 3 invalid
configuration or unreadable input.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .dataset import load_matrix, sniff_format, store_matrix
from .errors import ConfigError, FormatError, NotGammaCompleteError, RimmError
from .estimator import DistClass, EstimatorConfig, HashingConfig, estimate_mean
from .generation import corrupt_and_conceal, generate, parse_scenario
from .harness import (
    hashing_failure_demo,
    parse_experiment_spec,
    run_experiment,
    write_result_csv,
)

EXIT_OK = 0
EXIT_NOT_COMPLETE = 2
EXIT_BAD_CONFIG = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _fmt_vector(v: np.ndarray) -> str:
    return ",".join(format(x, ".17g") for x in v)


def _cmd_generate(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        scenario = parse_scenario(fh.read())
    full, gt = generate(
        scenario["spec"], scenario["plan"], scenario["n"], scenario["seed"]
    )
    m = corrupt_and_conceal(full, gt, scenario["adversary"], scenario["seed"])
    fmt = "binary" if args.out.endswith(".rimm") else "csv"
    store_matrix(m, args.out, fmt)
    if args.truth:
        with open(args.truth, "w", encoding="utf-8") as fh:
            fh.write(f"# seed={scenario['seed']}\n")
            fh.write("mu," + _fmt_vector(gt.mu) + "\n")
            fh.write(
                "corrupted_rows,"
                + ",".join(str(i + 1) for i in gt.corrupted_rows)
                + "\n"
            )
    print(f"wrote {m.n_examples}x{m.n_dims} matrix to {args.out}")
    return EXIT_OK


def _cmd_estimate(args) -> int:
    m = load_matrix(args.data, sniff_format(args.data))
    config = EstimatorConfig(
        epsilon=args.epsilon,
        gamma=args.gamma,
        delta=args.delta,
        dist_class=DistClass.parse(getattr(args, "class")),
        hashing=HashingConfig(B=args.hash_B) if args.hash_B else HashingConfig(),
        seed=args.seed,
    )
    nu, trace = estimate_mean(m, config)
    print(_fmt_vector(nu))
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write("t,rho,time_ms\n")
            for t, _, rho, wall in trace.records:
                fh.write(f"{t},{rho:.12g},{wall * 1e3:.3f}\n")
    return EXIT_OK


def _cmd_experiment(args) -> int:
    with open(args.spec, "r", encoding="utf-8") as fh:
        spec = parse_experiment_spec(fh.read())
    rows, _ = run_experiment(spec, workers=args.workers)
    with open(args.out, "w", encoding="utf-8") as fh:
        write_result_csv(rows, fh)
    n_err = sum(1 for r in rows if r.status != "ok")
    print(f"wrote {len(rows)} rows to {args.out} ({n_err} errors)")
    if args.figures:
        from .report import render_experiment_figures

        for path in render_experiment_figures(rows, args.figures):
            print(f"wrote {path}")
    return EXIT_OK


def _cmd_hashdemo(args) -> int:
    report = hashing_failure_demo(args.n, args.d, args.gamma, args.C, args.seed)
    lines = [
        ("C", report.c_factor),
        ("gamma", report.gamma),
        ("n", report.n),
        ("d", report.d),
        ("n_new", report.n_new),
        ("observed_missing", report.observed_missing),
        ("predicted_missing", report.predicted_missing),
        ("bound_e4c", report.bound_e4c),
        ("floor_e4c_plus2", report.floor),
    ]
    text = "\n".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in lines)
    print(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("key,value\n")
            for k, v in lines:
                fh.write(f"{k},{v}\n")
    if args.figures:
        from .report import render_hashdemo_figure

        print(f"wrote {render_hashdemo_figure([report], args.figures)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rimm", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize a corrupted incomplete dataset")
    g.add_argument("--config", required=True, help="scenario key=value file")
    g.add_argument("--out", required=True, help="output matrix (.csv or .rimm)")
    g.add_argument("--truth", default=None, help="optional ground-truth file")
    g.set_defaults(func=_cmd_generate)

    e = sub.add_parser("estimate", help="estimate the mean of a data file")
    e.add_argument("--data", required=True)
    e.add_argument("--epsilon", type=float, required=True)
    e.add_argument("--gamma", type=float, required=True)
    e.add_argument("--delta", type=float, default=0.1)
    e.add_argument("--class", dest="class", required=True, help="p1:<eta> or p2")
    e.add_argument("--hash-B", type=int, default=None)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--trace", default=None, help="write per-iteration CSV here")
    e.set_defaults(func=_cmd_estimate)

    x = sub.add_parser("experiment", help="run a scenario grid to CSV")
    x.add_argument("--spec", required=True)
    x.add_argument("--out", required=True)
    x.add_argument("--workers", type=int, default=1)
    x.add_argument("--figures", default=None, help="also render figures into this dir")
    x.set_defaults(func=_cmd_experiment)

    h = sub.add_parser("hashdemo", help="combine-compression missing-fraction demo")
    h.add_argument("--C", type=float, required=True)
    h.add_argument("--gamma", type=float, required=True)
    h.add_argument("--n", type=int, required=True)
    h.add_argument("--d", type=int, required=True)
    h.add_argument("--seed", type=int, default=0)
    h.add_argument("--out", default=None, help="write the report as CSV here")
    h.add_argument("--figures", default=None)
    h.set_defaults(func=_cmd_hashdemo)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except NotGammaCompleteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_COMPLETE
    except (ConfigError, FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except RimmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG


if __name__ == "__main__":
    sys.exit(main())
