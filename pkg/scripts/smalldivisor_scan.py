"""Ratios 1/(alpha_k alpha_l) against the small-divisor bound along a delta grid."""

import argparse

import numpy as np

from resonantwave.linop import LinearizedOperator, PositivityError, melnikov_test, smalldivisor_audit
from resonantwave.nashmoser import SchemeParams, nash_moser_solve, psi0_circle
from resonantwave.report import RunResult, emit_report
from resonantwave.spectral import NonlinearitySpec, SpectralField, TrigPolynomial


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--deltas", type=float, nargs="+", default=list(np.round(np.arange(0.30, 0.405, 0.01), 2)))
    ap.add_argument("--L", type=int, default=16)
    ap.add_argument("--out", default="results/smalldivisor_scan")
    args = ap.parse_args()
    spec = NonlinearitySpec(3, {3: TrigPolynomial(1.0)})
    P = SchemeParams()
    v1 = psi0_circle(spec, P).representative.resized(P.L_max, P.J)
    w = SpectralField.zeros(P.L_max, P.J)
    rows = []
    for d in args.deltas:
        try:
            op = LinearizedOperator(spec, d, v1, w, args.L, P.N)
        except PositivityError as exc:
            print(f"delta={d}: {exc}")
            continue
        mel = melnikov_test(d, spec, op.mean_value(), args.L, P.gamma, P.tau)
        tab = smalldivisor_audit(op.eigs, op.omega, op.eps, P.gamma, P.tau)
        rows.append([d, mel.accepted, tab.fitted_C] + [tab.case_counts[c] for c in (1, 2, 3, 4)])
        print(f"delta={d:.2f} melnikov={mel.accepted} C={tab.fitted_C:.4g} cases={tab.case_counts}")
    emit_report(RunResult("smalldivisor_scan", {"L": args.L, "gamma": P.gamma, "tau": P.tau},
                          {"constants": (["delta", "melnikov", "C", "case1", "case2", "case3", "case4"], rows)}),
                args.out)


if __name__ == "__main__":
    main()
