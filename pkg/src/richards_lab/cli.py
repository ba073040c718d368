"""Command line entry point ``richards-lab``.

Exit codes: 0 when every time step converged, 2 on NoConvergence, 1 on a
configuration error.
"""

import argparse
import sys
from pathlib import Path

from . import coupled, harness
from .exceptions import ConfigError, MismatchedProblem, NoConvergence

FLAG_KEYS = ("problem", "scheme", "L", "epsilon", "aa_depth", "nx", "ny", "nz", "K", "T",
             "norm", "out", "max_iters", "linear_solver")


def _add_run_flags(p):
    p.add_argument("--config", type=Path, help="flat key = value file")
    p.add_argument("--problem", choices=harness.PROBLEMS)
    p.add_argument("--scheme", choices=harness.SCHEMES)
    p.add_argument("--L", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--aa-depth", type=int, help="enables Anderson acceleration when > 0")
    p.add_argument("--nx", type=int)
    p.add_argument("--ny", type=int)
    p.add_argument("--nz", type=int)
    p.add_argument("--K", type=int, help="time steps, a multiple of 3")
    p.add_argument("--T", type=float, help="final time")
    p.add_argument("--norm", choices=("l2_scaled", "max"))
    p.add_argument("--max-iters", type=int)
    p.add_argument("--linear-solver", choices=("direct", "cg"))
    p.add_argument("--out", type=str, help="output directory")


def config_from_args(args, problem=None):
    overrides = {k: getattr(args, k, None) for k in FLAG_KEYS}
    if problem is not None:
        overrides["problem"] = problem
    if overrides.get("aa_depth") is not None:
        overrides["aa_enabled"] = overrides["aa_depth"] > 0
    if getattr(args, "config", None):
        return harness.ExperimentConfig.from_file(args.config, overrides)
    return harness.ExperimentConfig.from_mapping({k: v for k, v in overrides.items()
                                                  if v is not None})


def _print_reports(sequences, reports):
    for seq, rep in zip(sequences, reports):
        if rep is None:
            print(f"{seq.label}: too short to classify ({len(seq)} terms)")
        else:
            print(rep.summary())


def cmd_run(args):
    cfg = config_from_args(args)
    try:
        record = harness.run(cfg)
    except NoConvergence as exc:
        record = getattr(exc, "record", None)
        if record is not None and cfg.out:
            record.reports = harness.analyse(record.sequences)
            harness.write_outputs(record, cfg.out)
        print(f"no convergence: {exc}", file=sys.stderr)
        return 2
    _print_reports(record.sequences, record.reports)
    print(f"total iterations: {record.total_iterations}")
    for row in record.table1:
        print(f"dz={row.dz:g} err_psi={row.err_psi:.3e} eoc_psi={row.eoc_psi:.3f} "
              f"err_c={row.err_c:.3e} eoc_c={row.eoc_c:.3f}")
    if cfg.out:
        print(f"wrote {cfg.out}")
    return 0


def cmd_table1(args):
    cfg = config_from_args(args, problem="coupled_manufactured")
    rows = coupled.refinement_study(cfg=harness._coupled_config(cfg))
    text = harness.table1_csv(rows)
    if cfg.out:
        harness._write_atomic(Path(cfg.out) / "table1.csv", text)
    sys.stdout.write(text)
    return 0


def cmd_orders(args):
    out = args.out or Path(args.corrections).with_name("orders.csv")
    seqs, reports = harness.reanalyse(args.corrections, out)
    _print_reports(seqs, reports)
    return 0


def cmd_compare(args):
    records = []
    for cfg_path in args.configs:
        cfg = harness.ExperimentConfig.from_file(cfg_path)
        records.append(harness.run(cfg))
    rows = harness.compare(records, cross_problem=args.cross_problem)
    text = harness.comparison_csv(rows)
    if args.out:
        harness._write_atomic(Path(args.out) / "comparison.csv", text)
    sys.stdout.write(text)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="richards-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="run one experiment and write its CSV files")
    _add_run_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_tab = sub.add_parser("table1", help="grid-refinement study of the manufactured problem")
    _add_run_flags(p_tab)
    p_tab.set_defaults(func=cmd_table1)

    p_ord = sub.add_parser("orders", help="re-analyse an existing corrections.csv")
    p_ord.add_argument("corrections", type=Path)
    p_ord.add_argument("--out", type=Path, help="orders.csv path (default: next to the input)")
    p_ord.set_defaults(func=cmd_orders)

    p_cmp = sub.add_parser("compare", help="run several config files and tabulate them")
    p_cmp.add_argument("configs", nargs="+", type=Path)
    p_cmp.add_argument("--cross-problem", action="store_true",
                       help="allow records of different problems")
    p_cmp.add_argument("--out", type=str)
    p_cmp.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NoConvergence as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, MismatchedProblem, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
