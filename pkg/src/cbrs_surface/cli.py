"""Command-line entry point."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import experiment
from .filters import InfeasibleDesignError, TunableFilter, VaractorLaw
from .records import fmt, write_csv
from .scenario import ScenarioError, load_scenario
from .sim import World, cell_search

EXIT_OK = 0
EXIT_SCENARIO = 2
EXIT_INFEASIBLE = 3


def _int_list(text: str) -> list[int]:
    """'1,2,4' or '1:64' (inclusive range)."""
    if ":" in text:
        lo, hi = text.split(":", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in text.split(",") if v]


def _float_list(text: str) -> list[float]:
    """'0,10,20' or 'start:stop:step' (inclusive)."""
    if text.count(":") == 2:
        lo, hi, step = (float(v) for v in text.split(":"))
        n = int(round((hi - lo) / step))
        return [lo + i * step for i in range(n + 1)]
    return [float(v) for v in text.split(",") if v]


def _out_path(value: Optional[str]):
    return Path(value) if value and value != "-" else None


def _emit(path: Optional[Path], header, rows) -> None:
    if path is None:
        import csv

        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    else:
        write_csv(path, header, rows)


def cmd_simulate(args) -> int:
    spec = experiment.ExperimentSpec(args.scenario, args.duration, args.mode, args.out, args.seed)
    summary = experiment.run(spec)
    for (enb, ue, d), (snr, mbps) in summary.links.items():
        print(f"{enb} {ue} {d}: mean SNR {snr:.2f} dB, {mbps:.2f} Mbps")
    if summary.sync_convergence_ms is not None:
        print(f"sync locked at {summary.sync_convergence_ms:.0f} ms")
    if summary.bf_iterations_to_plateau is not None:
        print(f"beamforming plateau after {summary.bf_iterations_to_plateau} iterations")
    print(f"outputs in {args.out}")
    return EXIT_OK


def cmd_linkbudget(args) -> int:
    rows = experiment.linkbudget_sweep(_int_list(args.k), _float_list(args.lenv), args.d_b, args.d_u, args.freq_mhz * 1e6)
    _emit(_out_path(args.out), experiment.LINKBUDGET_COLUMNS,
          ((k, fmt(l, 3), fmt(g, 6), fmt(gc, 6)) for k, l, g, gc in rows))
    return EXIT_OK


def cmd_sync_demo(args) -> int:
    rows = experiment.sync_demo(args.offset)
    _emit(_out_path(args.out), experiment.SYNC_COLUMNS,
          ((r, fmt(e, 4), fmt(res, 4), g) for r, e, res, g in rows))
    return EXIT_OK


def cmd_filter_design(args) -> int:
    law = VaractorLaw(args.c0, args.phi, args.gamma)
    try:
        tf = TunableFilter.solve(law, args.bias_lo, args.bias_hi,
                                 (args.band_lo_mhz * 1e6, args.band_hi_mhz * 1e6), args.bandwidth_mhz * 1e6, args.l1)
    except InfeasibleDesignError as exc:
        print(f"infeasible filter design: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    d = tf.design
    p = d.params
    print(f"Y_o={p.y_o:.6g} S theta_o={p.theta_o_ref:.6g} rad Y_e={p.y_e:.6g} S theta_e={p.theta_e_ref:.6g} rad "
          f"mismatch={100 * d.rate_mismatch:.3f}%", file=sys.stderr)
    rows = tf.sweep(args.sweep)
    _emit(_out_path(args.out), ("bias", "C_v", "f_odd", "f_even", "center"),
          ((fmt(v, 4), f"{c:.6e}", fmt(fo / 1e6, 4), fmt(fe / 1e6, 4), fmt(fc / 1e6, 4)) for v, c, fo, fe, fc in rows))
    return EXIT_OK


def cmd_cellsearch(args) -> int:
    world = World(load_scenario(args.scenario))
    print("enb,center_mhz,bandwidth_mhz")
    for enb_id, ch in cell_search(world):
        print(f"{enb_id},{ch.center_mhz:g},{ch.bandwidth / 1e6:g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cbrs-surface", description="Active smart-surface simulator for CBRS TDD cells")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario and write CSV outputs")
    p.add_argument("scenario")
    p.add_argument("--mode", choices=experiment.MODES, default="waveflex")
    p.add_argument("--duration", type=int, default=5000, help="ms (>= 1000)")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--out", default="out", help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("linkbudget", help="surface gain over element count and environment loss")
    p.add_argument("--k", default="1:64", help="'1,2,4' or '1:64'")
    p.add_argument("--lenv", default="60:100:10", help="'60,80' or 'start:stop:step' in dB")
    p.add_argument("--d-b", type=float, default=3.0, help="eNB-surface distance, m")
    p.add_argument("--d-u", type=float, default=3.0, help="surface-UE distance, m")
    p.add_argument("--freq-mhz", type=float, default=3600.0)
    p.add_argument("--out", default="-", help="CSV path, '-' for stdout")
    p.set_defaults(func=cmd_linkbudget)

    p = sub.add_parser("sync-demo", help="recover an injected switching offset")
    p.add_argument("--offset", type=float, default=2.5, help="ms in [0, 10)")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_sync_demo)

    p = sub.add_parser("filter-design", help="solve the tunable filter and sweep its bias")
    p.add_argument("--sweep", type=int, default=16, help="number of bias points")
    p.add_argument("--bias-lo", type=float, default=3.0)
    p.add_argument("--bias-hi", type=float, default=4.5)
    p.add_argument("--band-lo-mhz", type=float, default=3550.0)
    p.add_argument("--band-hi-mhz", type=float, default=3700.0)
    p.add_argument("--bandwidth-mhz", type=float, default=20.0)
    p.add_argument("--c0", type=float, default=1.0e-12)
    p.add_argument("--phi", type=float, default=0.7)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--l1", type=float, default=0.5e-9)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_filter_design)

    p = sub.add_parser("cellsearch", help="list eNBs found on the 10 MHz grid")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_cellsearch)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
