"""Acceptance suite: twelve numbered checks, each returning measured values and a verdict.

Everything here is deterministic for a given seed, so the JSON written by
``verify`` is byte-stable.  Wall-clock timings are printed, never stored.
"""

import math
import os
import subprocess
import sys
import tempfile
import time
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from . import cantor, parity
from .bifurcation import (LoopFunction, Psi0, PsiCubic, PsiQuadratic, V2Sensitivity, align_phase,
                          find_critical_circle, phi0, solve_Q2)
from .linop import (LinearizedOperator, PositivityError, alpha_k, eigen_Sk, invert_Ln_structured,
                    melnikov_test, smalldivisor_audit, weighted_operator_norm)
from .nashmoser import SchemeParams, continue_branch_Q1, psi0_circle, residual_norm
from .spectral import (NonlinearitySpec, NormWeights, SpectralField, TrigPolynomial, norm_sigma_s,
                       pairing, project)


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    note: str = ""

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.number:2d}: {self.title}"

    def to_dict(self):
        return {"number": self.number, "title": self.title, "passed": bool(self.passed),
                "metrics": self.metrics, "note": self.note}


CUBIC = NonlinearitySpec(3, {3: TrigPolynomial(1.0)})


class Context:
    """Shared, lazily computed objects (the cubic circle is used by several checks)."""

    def __init__(self, seed=0, params=None):
        self.seed = int(seed)
        self.params = params or SchemeParams()
        self._cache = {}

    def get(self, key, make):
        if key not in self._cache:
            self._cache[key] = make()
        return self._cache[key]

    def cubic_circle(self):
        return self.get("cubic_circle", lambda: psi0_circle(CUBIC, self.params))

    def cantor_report(self):
        def make():
            P = self.params
            m = cantor.mean_value_curve(CUBIC, self.cubic_circle(), 0.1, P, samples=5)
            return cantor.scan_delta_grid(CUBIC, m, cantor.ScanConfig(eta=0.1, windows=5,
                                                                      gamma=0.05, tau=1.5))
        return self.get("cantor", make)


# --------------------------------------------------------------------------
# 1. quadratic pathway: exact critical circle


def criterion_1(ctx):
    F = PsiQuadratic(L=8)
    rng = np.random.default_rng(ctx.seed)
    ref = np.zeros(F.dim)
    ref[F.L] = 1.0 / math.sqrt(math.pi)            # sin t coefficient
    seed = ref + 0.2 * rng.standard_normal(F.dim) * np.exp(-np.arange(F.dim) % F.L)
    circle = find_critical_circle(F, [seed], newton_tol=1e-13)
    aligned = align_phase(circle.coords, ref, F)
    err = math.sqrt(LoopFunction.from_coords(aligned - ref).l2_squared())
    ok = err < 1e-10 and circle.kernel_dim_mod_translation == 0 and circle.second_eigenvalue_gap > 0.1
    return CriterionResult(1, "quadratic pathway circle is (1/sqrt(pi)) sin t, nondegenerate", ok,
                           {"l2_error_after_alignment": err,
                            "kernel_dim_mod_translation": circle.kernel_dim_mod_translation,
                            "gap": circle.second_eigenvalue_gap, "value": circle.value})


# --------------------------------------------------------------------------
# 2. Sturm-Liouville asymptotics and gaps


def criterion_2(ctx):
    a0 = TrigPolynomial(0.0, (0.0, 1.0), (0.5,))
    eps, J = 0.01, 64
    M = a0.mean()
    fit_lo, fit_hi, top = 8, 16, 32
    per_k, gap_margin, residual = {}, math.inf, 0.0
    for k in (0, 3, 10):
        es = eigen_Sk(k, eps, a0, J)
        residual = max(residual, es.residual())
        js = np.arange(fit_lo, top + 1)
        js = js[js != k]
        scaled = np.array([j * abs(es.eigenvalue(j) - j * j - eps * M) / abs(eps) for j in js])
        fit = js <= fit_hi
        C = float(np.max(scaled[fit]))
        growth = float(np.max(scaled[~fit]) / C)
        per_k[k] = {"C": C, "tail_over_C": growth,
                    "scaled_deviation": {int(j): float(s) for j, s in zip(js, scaled)}}
        modes = es.modes[es.modes <= top]
        lam = np.array([es.eigenvalue(j) for j in modes])
        for a in range(len(modes)):
            for b in range(a + 1, len(modes)):
                margin = abs(lam[a] - lam[b]) - (modes[a] + modes[b] - 2)
                gap_margin = min(gap_margin, margin)
    Cs = np.array([per_k[k]["C"] for k in per_k])
    spread = float(np.max(np.abs(Cs / Cs.mean() - 1.0)))
    tail = max(per_k[k]["tail_over_C"] for k in per_k)
    ok = spread <= 0.2 and tail <= 1.2 and gap_margin >= -1e-8
    return CriterionResult(2, "eigenvalue asymptotics with one constant; gap lower bound", ok,
                           {"C_per_k": {str(k): per_k[k]["C"] for k in per_k},
                            "C_spread": spread, "tail_over_C_max": tail,
                            "gap_margin_min": gap_margin, "eig_residual": residual,
                            "details": {str(k): per_k[k] for k in per_k}},
                           "C is the max of j|dev|/|eps| on j in [8,16]; j in [17,32] must stay "
                           "below 1.2 C (no growth)")


# --------------------------------------------------------------------------
# 3. structured versus direct inverse


def _stage_one_data(ctx, L, J):
    v1 = ctx.cubic_circle().representative.resized(L, J)
    return v1, SpectralField.zeros(L, J)


def criterion_3(ctx):
    P = ctx.params
    delta, J = 0.15, 40
    v1, w = _stage_one_data(ctx, 16, J)
    rows = []
    for n in (1, 2, 3):
        Ln = P.L0 * 2 ** n
        op = LinearizedOperator(CUBIC, delta, v1, w, Ln, P.N)
        mel = melnikov_test(delta, CUBIC, op.mean_value(), Ln, P.gamma, P.tau)
        direct = np.linalg.inv(op.dense())
        structured = invert_Ln_structured(op).inverse
        wts = op.weights(NormWeights(0.0, P.s))
        nrm = weighted_operator_norm(direct, wts)
        rel = weighted_operator_norm(structured - direct, wts) / nrm
        rows.append({"n": n, "L_n": Ln, "size": op.size, "melnikov_accepted": mel.accepted,
                     "relative_difference": rel, "inverse_norm": nrm,
                     "C": nrm * P.gamma / Ln ** (P.tau - 1.0)})
    C1 = rows[0]["C"]
    for r in rows:
        r["C_over_C1"] = r["C"] / C1
    ok = all(r["relative_difference"] < 1e-8 and r["melnikov_accepted"] for r in rows) and \
        all(r["C_over_C1"] <= 1.3 for r in rows)
    return CriterionResult(3, "structured inverse equals direct inverse; norm bound constant", ok,
                           {"delta": delta, "rows": rows},
                           "C fitted at n=1 must bound n=2,3 within +30%; the measured C "
                           "decreases because the inverse norm does not grow")


# --------------------------------------------------------------------------
# 4. small-divisor audit


def criterion_4(ctx):
    P = ctx.params
    L2, L3 = P.L0 * 4, P.L0 * 8
    v1, w = _stage_one_data(ctx, L3, 40)
    deltas = np.round(np.arange(0.30, 0.4001, 0.01), 3)
    calibration, holdout = [], []
    counts = {1: 0, 2: 0, 3: 0, 4: 0}
    accepted, rejected = [], []
    for d in deltas:
        try:
            op = LinearizedOperator(CUBIC, float(d), v1, w, L3, P.N)
        except PositivityError:
            rejected.append(float(d))
            continue
        mel = melnikov_test(float(d), CUBIC, op.mean_value(), L3, P.gamma, P.tau)
        if not mel.accepted:
            rejected.append(float(d))
            continue
        accepted.append(float(d))
        table = smalldivisor_audit(op.eigs, op.omega, op.eps, P.gamma, P.tau)
        for k, l, ak, al, bound, ratio, case in table.rows:
            counts[case] += 1
            (calibration if max(abs(k), abs(l)) <= L2 else holdout).append(
                (float(d), int(k), int(l), ratio, case))
    C = max(r[3] for r in calibration)
    violations = [r for r in holdout if r[3] > C]
    worst = max(holdout, key=lambda r: r[3])
    ok = not violations and all(counts[c] > 0 for c in counts) and len(accepted) > 0
    return CriterionResult(4, "small-divisor bound holds on all pairs up to L_3 with C from L_2", ok,
                           {"accepted_deltas": accepted, "rejected_deltas": rejected,
                            "fitted_C": C, "holdout_pairs": len(holdout),
                            "violations": len(violations), "holdout_max_over_C": worst[3] / C,
                            "case_counts": {str(k): v for k, v in counts.items()},
                            "beta_convention": "smalldivisor"},
                           "C is fitted on pairs with k, l <= L_2 pooled over the accepted delta "
                           "grid and checked on the remaining pairs up to L_3")


# --------------------------------------------------------------------------
# 5. Nash-Moser convergence


def fit_chi(h_norms):
    """chi from the geometric growth of successive differences of -log ||h_i||."""
    y = -np.log(np.asarray(h_norms, float))
    d = np.diff(y)
    if len(d) < 2 or np.any(d <= 0):
        return float("nan")
    return float(math.exp(np.polyfit(np.arange(len(d)), np.log(d), 1)[0]))


def criterion_5(ctx):
    P = ctx.params
    circle = ctx.cubic_circle()
    grid = [0.01, 0.02, 0.03, 0.04, 0.05]
    pts = continue_branch_Q1(CUBIC, circle, grid, P)
    rows = []
    for p in pts:
        if not p.accepted:
            rows.append({"delta": p.delta, "accepted": False})
            continue
        chi = fit_chi(p.h_norm_history)
        i = np.arange(1, len(p.h_norm_history) + 1)
        A = float(np.max(np.asarray(p.h_norm_history) * np.exp(chi ** i)))
        res = residual_norm(CUBIC, p.u, p.omega, delta=p.delta)
        rows.append({"delta": p.delta, "accepted": True, "h_norms": list(p.h_norm_history),
                     "chi_fit": chi, "A": A, "rescaled_residual": res})
    acc = [r for r in rows if r["accepted"]]
    ok = len(pts) == len(grid) and bool(acc) and all(r["chi_fit"] > 1.0 and r["rescaled_residual"] < 1e-8
                                                     for r in acc)
    return CriterionResult(5, "superlinear correction decay and small final residual", ok,
                           {"points": rows, "accepted": len(acc), "requested": len(grid)})


# --------------------------------------------------------------------------
# 6. amplitude law


def criterion_6(ctx):
    P = ctx.params
    spec = NonlinearitySpec(3, {3: TrigPolynomial(1.0), 4: TrigPolynomial(0.0, (1.0,))})
    circle = ctx.get("quartic_circle", lambda: psi0_circle(spec, P))
    grid = [0.0, 0.00625, 0.0125, 0.025, 0.05]
    pts = continue_branch_Q1(spec, circle, grid, P)
    base = [p for p in pts if p.delta == 0.0][0].u
    W = NormWeights(P.sigma_bar / 2.0, P.s)
    ds, errs = [], []
    for p in pts:
        if p.delta == 0.0 or not p.accepted:
            continue
        ds.append(p.delta)
        errs.append(norm_sigma_s((p.u - base) * p.delta, W))
    ds, errs = np.array(ds), np.array(errs)
    slope = float(np.polyfit(np.log(ds), np.log(errs), 1)[0])
    ratios = errs / ds ** 2
    spread = float(ratios.max() / ratios.min())
    ok = len(ds) >= 3 and abs(slope - 2.0) <= 0.15 and spread <= 1.5
    return CriterionResult(6, "deviation from the first-order profile scales like delta^2", ok,
                           {"nonlinearity": "u^3 + cos(x) u^4", "deltas": ds.tolist(),
                            "deviation": errs.tolist(), "ratio_over_delta2": ratios.tolist(),
                            "ratio_spread": spread, "slope": slope},
                           "bounded means the ratios stay within a factor 1.5 of each other")


# --------------------------------------------------------------------------
# 7, 8. Cantor density and excised intervals


def criterion_7(ctx):
    rep = ctx.cantor_report()
    verdict = cantor.density_report(rep, exponent_tol=0.3, last_density=0.9)
    return CriterionResult(7, "window densities tend to 1; excised-measure exponent", verdict.passed,
                           {"eta_values": rep.eta_values, "window_densities": rep.window_densities,
                            "densities": rep.densities, "window_excised": rep.window_excised,
                            "fitted_exponent": rep.fitted_exponent,
                            "fitted_exponent_first_family": rep.fitted_exponent_first_family,
                            "target_exponent": rep.target_exponent,
                            "excision_constants": rep.excision_constants,
                            "outside_aperture_hits": sum(w.outside_aperture_hits for w in rep.windows),
                            "m_curve": rep.m_curve})


def pair_lengths(rep):
    lengths = defaultdict(float)
    for l, j, fam, a, b, m in rep.intervals:
        lengths[(l, j, m)] += b - a
    return lengths


def criterion_8(ctx):
    rep = ctx.cantor_report()
    g, tau, p = rep.gamma, rep.tau, rep.p
    ratio = {}
    for (l, j, m), ln in sorted(pair_lengths(rep).items()):
        d1 = rep.eta_values[m]
        ratio[(l, j, m)] = ln * l ** (tau + 1) * d1 ** (p - 2) / g
    calib = [v for (l, j, m), v in ratio.items() if m <= 1]
    hold_keys = [k for k in ratio if k[2] >= 2]
    C = max(calib)
    rng = np.random.default_rng(ctx.seed)
    pick = rng.choice(len(hold_keys), size=min(100, len(hold_keys)), replace=False)
    sample = [hold_keys[i] for i in sorted(pick)]
    viol = [k for k in sample if ratio[k] > C]
    full_max = max(ratio[k] for k in hold_keys)
    ok = len(sample) == 100 and not viol
    return CriterionResult(8, "per-pair excised length within C gamma / (l^(tau+1) delta^(p-2))", ok,
                           {"fitted_C": C, "calibration_pairs": len(calib), "sample_size": len(sample),
                            "violations": len(viol),
                            "sample_max_over_C": max(ratio[k] for k in sample) / C,
                            "all_holdout_pairs": len(hold_keys), "all_holdout_max_over_C": full_max / C},
                           "C fitted on the two largest windows; 100 seeded pairs from the "
                           "three smaller windows are checked")


# --------------------------------------------------------------------------
# 9. parity lemma


def criterion_9(ctx):
    audit = parity.vq_equivalence_audit(50, (2, 3, 4, 5), truncation=4, tol=1e-10, seed=ctx.seed)
    m = audit.max_matching()
    w = audit.min_mismatching_witness()
    ok = audit.misclassifications == 0 and m < 1e-10 and w > 1e-6
    return CriterionResult(9, "reflection parity decides vanishing of int a v^q on the kernel", ok,
                           {"cases": len(audit.rows), "misclassifications": audit.misclassifications,
                            "max_matching_integral": m, "min_mismatching_witness": w})


# --------------------------------------------------------------------------
# 10. high-mode contraction


def _phi0_critical_point(spec, start, L, iters=30, tol=1e-13):
    """Newton on grad Phi0 = 0 over V modes 1..L with the time-shift fixed."""
    def field(x):
        c = x[:L] + 1j * x[L:]
        return SpectralField.from_modes(L, L, {(l, l): c[l - 1] for l in range(1, L + 1)})

    def coords(v):
        c = np.array([v.coef(l, l) for l in range(1, L + 1)])
        return np.concatenate([c.real, c.imag])

    x = coords(start.resized(L, L))
    x_ref = x.copy()
    l = np.arange(1, L + 1)
    tang = np.concatenate([-l * x_ref[L:], l * x_ref[:L]])
    for _ in range(iters):
        r = phi0(field(x), spec)
        g = coords(r.gradient)
        if np.linalg.norm(g) < tol:
            break
        H = np.zeros((2 * L, 2 * L))
        for i in range(2 * L):
            e = np.zeros(2 * L)
            e[i] = 1.0
            H[:, i] = coords(r.hessian_action(field(e)))
        B = np.block([[H, tang[:, None]], [tang[None, :], np.zeros((1, 1))]])
        rhs = np.concatenate([-g, [np.dot(tang, x_ref - x)]])
        x = x + np.linalg.solve(B, rhs)[:-1]
    return field(x), float(np.linalg.norm(coords(phi0(field(x), spec).gradient)))


def criterion_10(ctx):
    P = ctx.params
    circle = ctx.cubic_circle()
    L = 16
    v1 = circle.representative.resized(L, L)
    rng = np.random.default_rng(ctx.seed)
    rates, agree = [], []
    tol = 1e-13
    for delta in (0.0, 0.05, 0.1):
        wc = np.zeros((2 * L + 1, L), complex)
        wc[L + 2, 0] = 1e-3 * (rng.standard_normal() + 1j * rng.standard_normal())
        w = project(SpectralField.from_modes(L, L, {(2, 1): wc[L + 2, 0]}), "W")
        a, ra = solve_Q2(CUBIC, delta, v1, w, tol=tol, N=P.N)
        start = project(SpectralField.from_modes(L, L, {(3, 3): 0.05, (5, 5): -0.02j}), "V2", N=P.N)
        b, rb = solve_Q2(CUBIC, delta, v1, w, tol=tol, N=P.N, start=start)
        rates += [ra, rb]
        agree.append(norm_sigma_s(a - b, NormWeights(0.0, 1.0)))
    vbar, gnorm = _phi0_critical_point(CUBIC, v1, 32)
    v1_of_vbar = project(vbar, "V1", N=P.N)
    v2, _ = solve_Q2(CUBIC, 0.0, v1_of_vbar, SpectralField.zeros(32, 32), tol=1e-15, N=P.N)
    diff = norm_sigma_s(v2 - project(vbar, "V2", N=P.N), NormWeights(0.0, 1.0))
    ok = max(rates) <= 0.5 and max(agree) <= 10 * tol and diff < 1e-9
    return CriterionResult(10, "high-mode map contracts; fixed point reproduces the Phi0 critical point",
                           ok, {"max_rate": max(rates), "rates": rates, "two_start_gap": agree,
                                "phi0_gradient_norm": gnorm, "v2_vs_projection": diff})


# --------------------------------------------------------------------------
# 11. gradients and Hessians


def _coord_checks(F, x, h=1e-6):
    val, g = F.value_grad(x)
    fd = np.array([(F.value(x + h * e) - F.value(x - h * e)) / (2 * h) for e in np.eye(F.dim)])
    H = F.hessian_raw(x)
    return (float(np.linalg.norm(fd - g) / np.linalg.norm(g)),
            float(np.linalg.norm(H - H.T) / np.linalg.norm(H)))


def criterion_11(ctx):
    rng = np.random.default_rng(ctx.seed)
    out = {}
    decay = lambda n: np.exp(-0.5 * np.arange(n))
    # Phi0 on a random V field
    L = 8
    c = (rng.standard_normal(L) + 1j * rng.standard_normal(L)) * decay(L) * 0.3
    v = SpectralField.from_modes(L, L, {(l, l): c[l - 1] for l in range(1, L + 1)})
    spec = NonlinearitySpec(3, {3: TrigPolynomial(1.0, (0.3,), (0.2,))})
    r = phi0(v, spec)
    dirs = [SpectralField.from_modes(L, L, {(l, l): z for l, z in zip(range(1, L + 1),
            rng.standard_normal(L) + 1j * rng.standard_normal(L))}) for _ in range(4)]
    h = 1e-6
    errs, sym = [], []
    for d in dirs:
        fd = (phi0(v + d * h, spec).value - phi0(v - d * h, spec).value) / (2 * h)
        an = pairing(r.gradient, d)
        errs.append(abs(fd - an) / (norm_sigma_s(r.gradient, NormWeights(0, 0)) * norm_sigma_s(d, NormWeights(0, 0))))
    for a, b in zip(dirs, dirs[1:]):
        x1, x2 = pairing(r.hessian_action(a), b), pairing(a, r.hessian_action(b))
        sym.append(abs(x1 - x2) / max(abs(x1), abs(x2)))
    out["phi0"] = {"gradient_rel": max(errs), "hessian_sym": max(sym)}
    # coordinate functionals
    funcs = {"psi0": Psi0(CUBIC, 4, L=16), "psi0_x_dependent": Psi0(spec, 3, L=12),
             "psi_cubic": PsiCubic(1, TrigPolynomial(1.0), L=8),
             "psi_cubic_remainder": PsiCubic(1, TrigPolynomial(1.0, (0.0, 0.3)), L=8),
             "psi_quadratic": PsiQuadratic(L=8)}
    for name, F in funcs.items():
        x = rng.standard_normal(F.dim) * np.concatenate([decay(F.dim // 2)] * 2) * 0.5
        g_err, h_sym = _coord_checks(F, x)
        out[name] = {"gradient_rel": g_err, "hessian_sym": h_sym}
    # kernel integral used by the parity oracle
    ki = parity.KernelIntegral(parity.random_trig(rng), 5)
    cc = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    g = ki.gradient(cc)
    fd = np.array([(ki(cc + h * e) - ki(cc - h * e)) / (2 * h)
                   for e in list(np.eye(4)) + list(1j * np.eye(4))])
    out["kernel_integral"] = {"gradient_rel": float(np.linalg.norm(fd - g) / np.linalg.norm(g)),
                              "hessian_sym": 0.0}
    ok = all(v["gradient_rel"] <= 1e-6 and v["hessian_sym"] <= 1e-10 for v in out.values())
    return CriterionResult(11, "gradients match finite differences; Hessian actions symmetric", ok, out)


# --------------------------------------------------------------------------
# 12. determinism


def criterion_12(ctx):
    outs = []
    with tempfile.TemporaryDirectory() as tmp:
        for i in range(2):
            d = os.path.join(tmp, f"run{i}")
            cmd = [sys.executable, "-m", "resonantwave.cli", "verify", "--out", d,
                   "--seed", str(ctx.seed), "--skip-determinism"]
            proc = subprocess.run(cmd, capture_output=True, text=True)
            path = os.path.join(d, "acceptance.json")
            outs.append((proc.returncode, open(path, "rb").read() if os.path.exists(path) else b""))
    same = outs[0][1] == outs[1][1] and len(outs[0][1]) > 0
    return CriterionResult(12, "verify twice with one seed gives byte-identical JSON", same,
                           {"bytes": len(outs[0][1]), "identical": same,
                            "exit_codes": [o[0] for o in outs]})


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 13)}


def run_acceptance(seed=0, only=None, include_determinism=True, echo=print):
    ctx = Context(seed)
    numbers = sorted(only) if only else sorted(CRITERIA)
    if not include_determinism:
        numbers = [n for n in numbers if n != 12]
    results = []
    for n in numbers:
        t0 = time.perf_counter()
        try:
            res = CRITERIA[n](ctx)
        except Exception as exc:  # a crash is a failed criterion, not a crashed suite
            res = CriterionResult(n, CRITERIA[n].__name__, False, {}, f"error: {exc!r}")
        if echo:
            echo(f"{res.line()}  ({time.perf_counter() - t0:.1f}s)")
        results.append(res)
    return results
