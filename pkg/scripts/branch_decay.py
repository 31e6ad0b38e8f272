"""Continue the cubic branch and record correction-norm decay per stage and the fitted chi."""

import argparse
import math

import numpy as np

from resonantwave.nashmoser import SchemeParams, continue_branch_Q1, psi0_circle
from resonantwave.report import RunResult, emit_report
from resonantwave.spectral import NonlinearitySpec, TrigPolynomial


def fit_chi(h):
    """exp of the slope of log(-log h_i) against i (h_i ~ exp(-c chi^i))."""
    h = np.asarray(h)
    if len(h) < 3 or np.any(h <= 0) or np.any(h >= 1):
        return float("nan")
    return float(math.exp(np.polyfit(np.arange(len(h)), np.log(-np.log(h)), 1)[0]))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--deltas", type=float, nargs="+", default=[0.0, 0.01, 0.02, 0.03, 0.04, 0.05])
    ap.add_argument("--out", default="results/branch_decay")
    args = ap.parse_args()
    spec = NonlinearitySpec(3, {3: TrigPolynomial(1.0)})
    params = SchemeParams()
    circle = psi0_circle(spec, params)
    points = continue_branch_Q1(spec, circle, args.deltas, params)
    rows, hrows = [], []
    for p in points:
        chi = fit_chi(p.h_norm_history)
        rows.append([p.delta, p.omega, p.accepted, p.residual, p.stages, chi])
        hrows.extend([p.delta, i + 1, h] for i, h in enumerate(p.h_norm_history))
        print(f"delta={p.delta:.3f} accepted={p.accepted} residual={p.residual:.2e} chi={chi:.3f}")
    emit_report(RunResult("branch_decay", {"circle": circle, "points": [p.summary() for p in points]},
                          {"branch": (["delta", "omega", "accepted", "residual", "stages", "chi"], rows)},
                          {"h_norms": (["delta", "stage", "h_norm"], hrows)}), args.out)


if __name__ == "__main__":
    main()
