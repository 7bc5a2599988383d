"""Command-line entry point.

Exit status: 0 on success, 1 for usage or configuration errors, 2 when the
run itself fails.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import dataset as ds_mod
from . import harness, plotting, ro_synth
from .delay import InvalidInput
from .seeding import derive_seed
from .sci import unreliability

log = logging.getLogger("puflab")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _load_config(args) -> harness.ExperimentConfig:
    cfg = harness.ExperimentConfig.load(args.config)
    if getattr(args, "full_scale", False):
        cfg = harness.full_scale(cfg)
    return cfg.validate()


def _report_format(args) -> str:
    if args.format:
        return args.format
    return "text" if Path(args.report).suffix in (".txt", ".text") else "csv"


def _epoch_logger(verbose: bool):
    return (lambda line: log.info(line)) if verbose else None


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    data = ds_mod.generate(cfg.puf_spec(), cfg.size, cfg.sci(), cfg.noise(),
                           seed=derive_seed(cfg.seed, "data"), mu=cfg.mu, sigma=cfg.sigma, vote_m=cfg.vote_m)
    ds_mod.write(data, args.out)
    print(f"wrote {len(data)} records to {args.out}")
    if data.rel_count is not None:
        print(f"unreliability {unreliability(data.rel_count, cfg.m):.4f}")
        if not args.no_plot:
            plotting.plot_reliability_histogram(data.rel_count, cfg.m, plotting.figure_path(args.out, "_reliability"))
    return EXIT_OK


def cmd_attack(args) -> int:
    cfg = _load_config(args)
    data = None
    if args.dataset:
        if not Path(args.dataset).exists():
            raise UsageError(f"dataset {args.dataset} does not exist")
        data = ds_mod.read(args.dataset, expect_n=cfg.n)
    report = harness.run_attack(cfg, data, log=_epoch_logger(args.verbose))
    harness.emit_report([report], args.report, _report_format(args))
    if not args.no_plot and report.history:
        plotting.plot_history(report.history, plotting.figure_path(args.report, "_history"),
                              f"{cfg.attack} on {cfg.puf}")
    print(f"{cfg.attack} test accuracy {report.test_acc:.4f} "
          f"({'broken' if report.success else 'not broken'}) in {report.epochs} epochs, {report.seconds:.1f} s")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    reports = harness.run_sweep(args.kind, cfg, log=_epoch_logger(args.verbose))
    harness.emit_report(reports, args.report, _report_format(args))
    if not args.no_plot:
        plotting.plot_sweep(reports, plotting.figure_path(args.report), f"{args.kind} sweep, {cfg.attack} on {cfg.puf}")
    for value, best, median, rate in harness.sweep_table(reports):
        print(f"{value}\tbest {best:.4f}\tmedian {median:.4f}\tsuccess {rate:.2f}")
    if args.kind == "minsize":
        table = harness.sweep_table(reports)
        hit = next((v for v, _, _, rate in table if rate >= cfg.min_success), None)
        print(f"minimal size: {hit}" if hit is not None else "minimal size: none in grid")
    return EXIT_OK


def cmd_ro_synth(args) -> int:
    if not Path(args.table).exists():
        raise UsageError(f"RO table {args.table} does not exist")
    table = ro_synth.load_table(args.table)
    if args.device not in table.devices():
        raise UsageError(f"device {args.device!r} not in table; devices: {', '.join(table.devices())}")
    data = ro_synth.ro_dataset(table, args.device, args.n, args.size, args.seed,
                               args.ref_temp, args.meas_temp, args.m, args.cn)
    ds_mod.write(data, args.out)
    ref = data.response
    flips = (data.rel_count != ref * args.m)
    print(f"wrote {len(data)} records to {args.out}")
    print(f"unstable fraction {unreliability(data.rel_count, args.m):.4f}, "
          f"disagreeing with reference {flips.mean():.4f}")
    if not args.no_plot:
        plotting.plot_reliability_histogram(data.rel_count, args.m, plotting.figure_path(args.out, "_reliability"),
                                            f"RO-APUF {args.device}, {args.meas_temp:g} C vs {args.ref_temp:g} C")
    return EXIT_OK


def cmd_ro_table(args) -> int:
    table = ro_synth.make_synthetic_table(args.devices, args.ros, tuple(args.temps), args.reps, args.seed)
    ro_synth.write_table(table, args.out)
    print(f"wrote {len(table)} synthetic measurements to {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    if not Path(args.input).exists():
        raise UsageError(f"report {args.input} does not exist")
    reports = harness.read_report(args.input)
    sys.stdout.write(harness.format_reports(reports, args.format))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="puflab", description="Arbiter-PUF simulation and side-channel modeling attacks.")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate a dataset")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="dataset path; .bin selects the packed format")
    s.add_argument("--paper-scale", dest="full_scale", action="store_true", help="128 stages and large budgets")
    s.add_argument("--no-plot", action="store_true")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("attack", help="run one attack")
    a.add_argument("--config", required=True)
    a.add_argument("--dataset")
    a.add_argument("--report", required=True)
    a.add_argument("--format", choices=("csv", "text"))
    a.add_argument("--paper-scale", dest="full_scale", action="store_true", help="128 stages and large budgets")
    a.add_argument("--no-plot", action="store_true")
    a.set_defaults(func=cmd_attack)

    w = sub.add_parser("sweep", help="run a parameter sweep")
    w.add_argument("--kind", required=True, choices=harness.SWEEP_KINDS)
    w.add_argument("--config", required=True)
    w.add_argument("--report", required=True)
    w.add_argument("--format", choices=("csv", "text"))
    w.add_argument("--paper-scale", dest="full_scale", action="store_true", help="128 stages and large budgets")
    w.add_argument("--no-plot", action="store_true")
    w.set_defaults(func=cmd_sweep)

    r = sub.add_parser("ro-synth", help="dataset from an RO-frequency table")
    r.add_argument("--table", required=True)
    r.add_argument("--device", required=True)
    r.add_argument("--n", type=int, default=128)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", required=True)
    r.add_argument("--size", type=int, default=10_000)
    r.add_argument("--ref-temp", type=float, default=25.0)
    r.add_argument("--meas-temp", type=float, default=55.0)
    r.add_argument("--m", type=int, default=10)
    r.add_argument("--cn", type=int, default=11)
    r.add_argument("--no-plot", action="store_true")
    r.set_defaults(func=cmd_ro_synth)

    t = sub.add_parser("ro-table", help="write a synthetic RO-frequency table")
    t.add_argument("--out", required=True)
    t.add_argument("--devices", type=int, default=1)
    t.add_argument("--ros", type=int, default=512)
    t.add_argument("--temps", type=float, nargs="+", default=[25.0, 55.0])
    t.add_argument("--reps", type=int, default=10)
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(func=cmd_ro_table)

    o = sub.add_parser("report", help="re-render a saved report")
    o.add_argument("--in", dest="input", required=True)
    o.add_argument("--format", choices=("csv", "text"), default="text")
    o.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"puflab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s",
                        stream=sys.stderr)
    try:
        return args.func(args)
    except (UsageError, harness.ConfigError) as exc:
        print(f"puflab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvalidInput, ds_mod.DatasetFormatError, ro_synth.RoTableError) as exc:
        print(f"puflab: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # anything else is a failed run, not a usage problem
        print(f"puflab: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
