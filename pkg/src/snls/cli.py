"""Command line entry point: ``snls <subcommand> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from .config import load_config
from .control import construct_control, criterion_value, two_phase_batch
from .dynamics import DETECTED, UnderResolvedError, evolve
from .ensemble import (
    check_energy_identity,
    check_momentum_identity,
    check_theorem41,
    path_rng,
    run_ensemble,
    wilson_interval,
)
from .io import (
    CheckLine,
    read_csv_columns,
    write_complex_field,
    write_control,
    write_ensemble_stats,
    write_report,
    write_trajectory,
    write_verdicts,
)
from .noise import ResolutionError
from .verify import SUITES, run_suite

log = logging.getLogger("snls")


def _out(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    out = _out(args.out)
    op = cfg.operator()
    tr = evolve(cfg.initial(), cfg.model(op), cfg.T, cfg.dt, cfg.detector(),
                np.random.default_rng(cfg.seed), cfg.sample_every, cfg.seed)
    write_trajectory(out / "trajectory.csv", tr)
    write_complex_field(out / "final.bin", tr.final)
    log.info("verdict %s, tau* = %s", tr.verdict, tr.tau_star)
    return 0


def cmd_ensemble(args) -> int:
    cfg = load_config(args.config)
    out = _out(args.out)
    op = cfg.operator()
    stats = run_ensemble(cfg.initial(), cfg.model(op), cfg.T, cfg.dt, cfg.paths, cfg.seed,
                         cfg.detector(), cfg.sample_every, workers=args.workers or cfg.workers)
    write_ensemble_stats(out / "ensemble_stats.csv", stats)
    write_verdicts(out / "verdicts.csv", stats)
    lines = []
    if op is None or np.ptp(op.f1) == 0:
        chk = check_energy_identity(stats, op)
        lines.append(CheckLine("energy drift law in expectation", chk.passed,
                               f"worst ratio {chk.worst_ratio:.3f}"))
    chk = check_momentum_identity(stats)
    lines.append(CheckLine("momentum identity in expectation", chk.passed,
                           f"worst ratio {chk.worst_ratio:.3f}"))
    t_bar = cfg.t_bar if cfg.t_bar is not None else cfg.T
    th = check_theorem41(stats, op, t_bar)
    lo, hi = th.interval
    lines.append(CheckLine(
        "blow-up probability positive under the criterion",
        None if th.verdict == "not applicable" else th.verdict == "pass",
        f"criterion {th.criterion:.4g}, p = {th.estimate:.3f}, 95% Wilson [{lo:.3f}, {hi:.3f}]",
    ))
    header = (f"paths {stats.paths}, master seed {stats.master_seed}, config {stats.config_hash}, "
              f"under-resolved {stats.under_resolved}")
    print(write_report(out / "report.txt", lines, header), end="")
    return 0 if all(l.passed is not False for l in lines) else 1


def _control(cfg, out: Path):
    u0 = cfg.initial()
    ctrl = construct_control(u0, cfg.sigma, cfg.sigma_aux, cfg.T1, cfg.M_bar, cfg.H_bar, cfg.dt,
                             cfg.detector())
    write_control(out, ctrl)
    return ctrl


def cmd_control(args) -> int:
    cfg = load_config(args.config)
    out = _out(args.out)
    ctrl = _control(cfg, out)
    c = ctrl.certificate
    lines = [
        CheckLine("energy below -H_bar at T2", c.H < -cfg.H_bar, f"T2 = {ctrl.T2:.6g}, H = {c.H:.6g}"),
        CheckLine("U(T2) admissible",
                  diag.admissible_from_values(c.M, c.H, c.G, c.V, ctrl.M_bar, ctrl.H_bar)),
    ]
    print(write_report(out / "report.txt", lines, f"lambda {ctrl.lam:.10g}, sigma_aux {ctrl.sigma_aux}"), end="")
    return 0


def cmd_two_phase(args) -> int:
    cfg = load_config(args.config)
    out = _out(args.out)
    ctrl = _control(cfg, out / "control")
    op = cfg.operator()
    value = criterion_value(ctrl, op, cfg.t2)
    rngs = [path_rng(cfg.seed, i) for i in range(cfg.paths)]
    dt2 = cfg.dt if cfg.dt2 is None else cfg.dt2
    trs = two_phase_batch(ctrl, op, cfg.sigma, cfg.t2, dt2, rngs, cfg.detector(), cfg.sample_every,
                          seeds=list(range(cfg.paths)))
    hits = sum(tr.verdict == DETECTED for tr in trs)
    lo, hi = wilson_interval(hits, len(trs))
    with open(out / "verdicts.csv", "w") as fh:
        fh.write("path,verdict,tau_star\n")
        for i, tr in enumerate(trs):
            fh.write(f"{i},{tr.verdict},{ctrl.T2 + tr.tau_star!r}\n")
    lines = [CheckLine(
        "blow-up before T2 + t2", lo > 0,
        f"T2 = {ctrl.T2:.6g}, criterion {value:.4g}, detected {hits}/{len(trs)}, "
        f"95% Wilson [{lo:.3f}, {hi:.3f}]",
    )]
    print(write_report(out / "report.txt", lines), end="")
    return 0 if lo > 0 else 1


def cmd_verify(args) -> int:
    cfg = load_config(args.config) if args.config else None
    out = _out(args.out)
    lines = run_suite(args.suite, cfg, workers=args.workers)
    print(write_report(out / "report.txt", lines, f"suite {args.suite}"), end="")
    return 0 if all(l.passed is not False for l in lines) else 1


def cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = _out(args.out)
    for src in args.csv:
        cols = read_csv_columns(src)
        if "t" not in cols:
            raise ValueError(f"{src}: no 't' column to plot against")
        stem = Path(src).stem
        for name, y in cols.items():
            if name == "t":
                continue
            fig, ax = plt.subplots(figsize=(6, 4))
            ax.plot(cols["t"], y)
            ax.set_xlabel("t")
            ax.set_ylabel(name)
            ax.set_title(f"{stem}: {name}")
            fig.tight_layout()
            fig.savefig(out / f"{stem}_{name}.{args.format}")
            plt.close(fig)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="snls", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_io(name, fn, help_, config_required=True):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=config_required, help="key = value config file")
        sp.add_argument("--out", required=True, help="output directory")
        sp.set_defaults(func=fn)
        return sp

    with_io("simulate", cmd_simulate, "one path: trajectory.csv and final.bin")
    e = with_io("ensemble", cmd_ensemble, "Monte Carlo ensemble with identity checks")
    e.add_argument("--workers", type=int, default=0, help="processes (default: run.workers)")
    with_io("control", cmd_control, "construct the control potential")
    with_io("two-phase", cmd_two_phase, "control, then noisy paths from U(T2)")
    v = with_io("verify", cmd_verify, "run one verification suite", config_required=False)
    v.add_argument("--suite", required=True, choices=SUITES)
    v.add_argument("--workers", type=int, default=1)
    pl = sub.add_parser("plot", help="line charts of every column against t")
    pl.add_argument("csv", nargs="+")
    pl.add_argument("--out", required=True)
    pl.add_argument("--format", default="png")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UnderResolvedError, ResolutionError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
