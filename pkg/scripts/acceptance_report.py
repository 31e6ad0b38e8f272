"""Run the acceptance criteria (or a subset) and write their metrics as JSON and CSV."""

import argparse

from resonantwave.acceptance import run_acceptance
from resonantwave.report import RunResult, emit_report


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--only", type=int, nargs="*")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/acceptance_report")
    args = ap.parse_args()
    res = run_acceptance(args.seed, only=args.only, include_determinism=False)
    emit_report(RunResult("acceptance_report", {"results": [r.to_dict() for r in res]},
                          {"summary": (["criterion", "title", "passed"],
                                       [[r.number, r.title, r.passed] for r in res])},
                          ok=all(r.passed for r in res)), args.out)


if __name__ == "__main__":
    main()
