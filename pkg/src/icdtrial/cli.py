"""Command-line interface.

Exit codes: 0 when the trial reaches a decision, 2 on an inconclusive cap,
1 on any error.
"""

from __future__ import annotations

import argparse
import sys

from .config import apply_overrides, parse_trial_spec
from .errors import IcdTrialError
from .runner import run_trial, summarize
from .sprt import Decision


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icdtrial",
        description="Run in-silico ICD comparison trials.")
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run one trial to its decision")
    run_p.add_argument("--config", required=True, help="trial spec file")
    run_p.add_argument("--trial", type=int, choices=(1, 2, 3, 4), default=None)
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--alpha", type=float, default=None)
    run_p.add_argument("--beta", type=float, default=None)
    run_p.add_argument("--delta", type=float, default=None)
    run_p.add_argument("--max-iters", type=int, default=None)
    run_p.add_argument("--cohort-n", type=int, default=None)
    run_p.add_argument("--out", default=None, help="output directory")
    run_p.add_argument("--trace", action="store_true", default=None,
                       help="record internal channels too")
    run_p.add_argument("--synthetic", default=None, metavar="P1,P2",
                       help="replace the physiological pipeline with "
                            "Bernoulli outcome generators")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        spec = parse_trial_spec(args.config)
        synthetic = None
        if args.synthetic is not None:
            parts = args.synthetic.split(",")
            if len(parts) != 2:
                raise IcdTrialError("--synthetic expects 'p1,p2'")
            synthetic = (float(parts[0]), float(parts[1]))
        spec = apply_overrides(
            spec,
            trial_id=args.trial,
            seed=args.seed,
            alpha=args.alpha,
            beta=args.beta,
            delta=args.delta,
            max_iterations=args.max_iters,
            cohort_n=args.cohort_n,
            out_dir=args.out,
            trace=args.trace,
            synthetic=synthetic,
        )
        report = run_trial(spec)
    except IcdTrialError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(summarize(report))
    return 2 if report.decision == Decision.INCONCLUSIVE_CAP.value else 0


if __name__ == "__main__":
    sys.exit(main())
