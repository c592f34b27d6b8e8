"""Command-line entry point: ``twrswipt run <scenario> [options]``."""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .harness import SCENARIOS, default_scenario, run_scenario
from .sysmodel import SystemConfig


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twrswipt", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario and write its CSV")
    r.add_argument("scenario", choices=SCENARIOS)
    r.add_argument("--config", help="key = value configuration file")
    r.add_argument("--snr", type=float, nargs="+", help="SNR values in dB")
    r.add_argument("--z", type=float, nargs="+", help="chordal-distance budgets")
    r.add_argument("--trials", type=int, help="Monte Carlo trials")
    r.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    r.add_argument("--out", help="output CSV path (default <scenario>.csv)")
    r.add_argument("--max-iter", type=int, help="TWR-IA sweep cap (default grows with SNR)")
    r.add_argument("--tol", type=float, default=1e-8, help="relative MSE stopping tolerance")
    r.add_argument("--balanced-users", choices=("all", "one"), default="all",
                   help="displace every user's precoder or only the first user's")
    r.add_argument("--rho", type=float, help="power-splitting ratio (overrides scenario default)")
    r.add_argument("--n-symbols", type=int, help="QPSK symbols per stream for ser_vs_snr")
    r.add_argument("--trace-every", type=int, default=0,
                   help="convergence: log every N-th sweep (0 = log-spaced)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = SystemConfig.from_file(args.config) if args.config else SystemConfig()
        sc = default_scenario(
            args.scenario,
            snr_list=args.snr,
            z_list=args.z,
            trials=args.trials,
            seed=args.seed,
            output_path=args.out,
            max_iter=args.max_iter,
            tol=args.tol,
            balanced_users=args.balanced_users,
            rho=args.rho,
            n_symbols=args.n_symbols,
            trace_every=args.trace_every,
        )
        result = run_scenario(sc, cfg)
    except (OSError, ValueError) as exc:
        print(f"twrswipt: error: {exc}", file=sys.stderr)
        return 2
    status = "ok" if result.ok else "AUDIT FAILED"
    print(f"{sc.name}: wrote {result.rows} rows to {result.path} ({status})")
    return 0 if result.ok else 1


if __name__ == "__main__":
    sys.exit(main())
