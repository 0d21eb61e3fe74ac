"""Command-line entry point.

Subcommands::

    sysid       system-identification ensembles (AR / white inputs)
    aec         echo-cancellation runs on audio files or synthetic speech
    bankinfo    analysis-bank spectral diagnostics
    msd-verify  tracked MSD bound against the ensemble MSD

Exit codes: 0 ok, 1 check failed, 2 usage, 3 validation, 4 I/O.
"""

import argparse
import sys
import time

import numpy as np

from . import config, harness
from ._jit import BACKEND
from .filterbank import bank_diagnostics, make_bank, write_bank

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_IO = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _add_run_flags(p, default_preset):
    p.add_argument("--config", help="INI experiment file")
    p.add_argument("--preset", choices=config.PRESETS,
                   help=f"built-in parameter set (default {default_preset})")
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--plot-data", help="JSON plot-data output path")
    p.add_argument("--trials-out", help="per-trial CSV dump path")
    p.add_argument("--save-config", help="write the resolved configuration here")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override, e.g. T=40000 or proposed-known.rho=1e-4")


def build_parser():
    ap = _Parser(prog="l0nsaf", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("sysid", help="system-identification experiment")
    _add_run_flags(p, "fig7b")

    p = sub.add_parser("aec", help="echo-cancellation experiment")
    _add_run_flags(p, "fig14")
    p.add_argument("--far-end", help="far-end WAV (mono, 16-bit)")
    p.add_argument("--near-end", help="near-end WAV for double-talk")
    p.add_argument("--ir", help="echo path, one coefficient per line")

    p = sub.add_parser("bankinfo", help="filter-bank diagnostics")
    p.add_argument("--N", type=int, default=4, dest="n")
    p.add_argument("--M", type=int, dest="m")
    p.add_argument("--out", help="write the bank matrix here")

    p = sub.add_parser("msd-verify", help="MSD bound check")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--L", type=int, default=32, dest="L")
    p.add_argument("--N", type=int, default=4, dest="n")
    p.add_argument("--T", type=int, default=4000, dest="T")
    p.add_argument("--mu", type=float, default=0.5)
    p.add_argument("--snr", type=float, default=30.0)
    p.add_argument("--required", type=float, default=0.95)
    p.add_argument("--out", help="CSV of tau, empirical MSD, tracked p")
    return ap


def _resolve_spec(args, default_preset):
    if args.config and args.preset:
        raise UsageError("--config and --preset are mutually exclusive")
    if args.config:
        spec = config.load_config(args.config)
    else:
        spec = config.preset(args.preset or default_preset)
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.trials is not None:
        overrides.append(f"trials={args.trials}")
    for flag, key in (("far_end", "far_end_file"), ("near_end", "near_end_file"),
                      ("ir", "ir_file")):
        val = getattr(args, flag, None)
        if val:
            overrides.append(f"{key}={val}")
            if key == "far_end_file":
                overrides.append("input=file")
            if key == "ir_file":
                overrides.append("system=file")
    if overrides:
        spec = config.apply_overrides(spec, overrides)
    if args.parallel < 1:
        raise config.ConfigError("--parallel must be >= 1", field="parallel")
    return spec


def _report(result, spec, out):
    n = result.n_iter
    print(f"{n} decimated iterations x {spec.trials} trial(s), backend {BACKEND}", file=out)
    for name, trace in result.misalignment_db.items():
        resets = sum(len(r) for r in result.meta["resets"][name])
        print(f"  {name:<20s} final {harness.steady_state_db(trace):8.2f} dB"
              f"   min {float(np.min(trace)):8.2f} dB   resets {resets}", file=out)
    print(f"wall time {result.meta['wall_time_s']:.2f} s", file=out)


def _run_experiment(args, default_preset, out):
    spec = _resolve_spec(args, default_preset)
    if args.save_config:
        config.save_config(spec, args.save_config)
    result = harness.run_monte_carlo(spec, parallel=args.parallel,
                                     keep_trials=bool(args.trials_out))
    if args.out:
        harness.emit_csv(result, args.out)
    if args.plot_data:
        harness.emit_plot_data(result, args.plot_data)
    if args.trials_out:
        harness.emit_trials_csv(result.meta["per_trial"], args.trials_out)
    _report(result, spec, out)
    return EXIT_OK


def _bankinfo(args, out):
    m = args.m if args.m is not None else (1 if args.n == 1 else 8 * args.n + 1)
    try:
        bank = make_bank(args.n, m)
    except ValueError as exc:
        raise config.ConfigError(str(exc), field="N/M") from None
    diag = bank_diagnostics(bank)
    for k, v in diag.items():
        print(f"{k} = {v:.4f}" if isinstance(v, float) else f"{k} = {v}", file=out)
    if args.out:
        try:
            write_bank(bank, args.out)
        except OSError as exc:
            raise OSError(f"{args.out}: {exc.strerror or exc}") from exc
    return EXIT_OK


def _msd_verify(args, out):
    t0 = time.perf_counter()
    try:
        chk = harness.msd_bound_check(trials=args.trials, seed=args.seed, L=args.L,
                                      N=args.n, T=args.T, mu=args.mu, snr_db=args.snr)
    except ValueError as exc:
        raise config.ConfigError(str(exc)) from None
    if args.out:
        path = args.out
        try:
            with open(path, "w") as fh:
                fh.write("tau,empirical_msd,tracked_p\n")
                for k, (e, p) in enumerate(zip(chk.empirical, chk.tracked)):
                    fh.write(f"{k},{e!r},{p!r}\n")
        except OSError as exc:
            raise OSError(f"{path}: {exc.strerror or exc}") from exc
    tail = chk.empirical[chk.start + 1:] / chk.tracked[chk.start + 1:]
    print(f"instants after tau={chk.start}: {tail.size}", file=out)
    print(f"empirical <= tracked at {100 * chk.coverage:.1f}% "
          f"(required {100 * args.required:.0f}%)", file=out)
    print(f"median empirical/tracked ratio {float(np.median(tail)):.4f}", file=out)
    print(f"wall time {time.perf_counter() - t0:.2f} s", file=out)
    return EXIT_OK if chk.passed(args.required) else EXIT_CHECK


def parse_and_run(argv=None, out=None):
    out = out or sys.stdout
    err = sys.stderr
    try:
        args = build_parser().parse_args(argv)
        if args.command == "sysid":
            return _run_experiment(args, "fig7b", out)
        if args.command == "aec":
            return _run_experiment(args, "fig14", out)
        if args.command == "bankinfo":
            return _bankinfo(args, out)
        return _msd_verify(args, out)
    except UsageError as exc:
        print(str(exc).rstrip(), file=err)
        return EXIT_USAGE
    except config.ConfigError as exc:
        field = f" [{exc.field}]" if exc.field else ""
        print(f"error{field}: {exc}", file=err)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=err)
        return EXIT_IO
    except ValueError as exc:
        # data-dependent validation (bad audio/IR contents, inconsistent sizes)
        print(f"error: {exc}", file=err)
        return EXIT_VALIDATION


def main():
    sys.exit(parse_and_run())


if __name__ == "__main__":
    main()
