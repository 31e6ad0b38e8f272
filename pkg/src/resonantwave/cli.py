"""Command-line entry point: scenario files in, JSON/CSV reports out.

    resonantwave solve  --scenario s.yaml --out results/
    resonantwave scan   --scenario s.yaml
    resonantwave eig    --scenario s.yaml
    resonantwave audit  --scenario s.yaml
    resonantwave parity --scenario s.yaml
    resonantwave verify --seed 0 --out results/

Heavy modules are imported after the thread count is fixed in the environment.
"""

import argparse
import math
import os
import sys

import yaml

COMMANDS = ("solve", "scan", "eig", "audit", "parity", "verify")

EXIT_OK, EXIT_FAILED, EXIT_SCENARIO = 0, 1, 2


class ScenarioError(ValueError):
    def __init__(self, field, reason):
        super().__init__(f"{field}: {reason}")
        self.field, self.reason = field, reason


# --------------------------------------------------------------------------
# scenario parsing


def _trig(d, where):
    from .spectral import TrigPolynomial
    if isinstance(d, (int, float)):
        d = {"c0": d}
    if not isinstance(d, dict):
        raise ScenarioError(where, "expected {c0, cos: [...], sin: [...]}")
    unknown = set(d) - {"c0", "cos", "sin"}
    if unknown:
        raise ScenarioError(where, f"unknown keys {sorted(unknown)}")
    try:
        vals = [float(d.get("c0", 0.0))] + [float(v) for v in d.get("cos", [])] + \
            [float(v) for v in d.get("sin", [])]
    except (TypeError, ValueError):
        raise ScenarioError(where, "coefficients must be numbers") from None
    if not all(math.isfinite(v) for v in vals):
        raise ScenarioError(where, "coefficients must be finite")
    return TrigPolynomial(float(d.get("c0", 0.0)), tuple(float(v) for v in d.get("cos", [])),
                          tuple(float(v) for v in d.get("sin", [])))


def _range(sc, key, lo, hi, where):
    if key in sc:
        v = float(sc[key])
        if not lo < v < hi:
            raise ScenarioError(f"{where}.{key}", f"must lie in ({lo:g}, {hi:g}), got {v:g}")


class Scenario:
    """Validated scenario: nonlinearity, scheme parameters, run section, output, seed."""

    def __init__(self, data, precision="double"):
        from .nashmoser import SchemeParams
        from .spectral import NonlinearitySpec, SpectralError
        if not isinstance(data, dict):
            raise ScenarioError("<root>", "scenario must be a mapping")
        nl = data.get("nonlinearity", {"p": 3, "terms": {3: {"c0": 1.0}}})
        if "p" not in nl or "terms" not in nl:
            raise ScenarioError("nonlinearity", "needs p and terms")
        terms = {int(k): _trig(v, f"nonlinearity.terms.{k}") for k, v in nl["terms"].items()}
        self.s_star_request = nl.get("s_star", "auto")
        if self.s_star_request not in ("auto", 1, -1):
            raise ScenarioError("nonlinearity.s_star", "must be auto, 1 or -1")
        self.pathway_request = nl.get("pathway", "auto")
        if self.pathway_request not in ("auto", "standard", "cubic", "quadratic"):
            raise ScenarioError("nonlinearity.pathway", "must be auto, standard, cubic or quadratic")
        try:
            self.p = int(nl["p"])
            self.spec = NonlinearitySpec(self.p, terms, 1 if self.s_star_request == "auto"
                                         else int(self.s_star_request))
        except SpectralError as exc:
            raise ScenarioError("nonlinearity", str(exc)) from None
        sc = dict(data.get("scheme", {}))
        _range(sc, "tau", 1.0, 2.0, "scheme")
        _range(sc, "chi", 1.0, 2.0, "scheme")
        _range(sc, "gamma", 0.0, 1.0, "scheme")
        sc.setdefault("precision", precision)
        try:
            self.params = SchemeParams(**sc)
        except TypeError as exc:
            raise ScenarioError("scheme", str(exc)) from None
        except ValueError as exc:
            raise ScenarioError("scheme", str(exc)) from None
        self.run = dict(data.get("run", {}))
        self.output = data.get("output")
        self.seed = int(data.get("seed", 0))
        self.preflight = None

    @classmethod
    def load(cls, path, precision="double"):
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ScenarioError("<file>", f"cannot read {path}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ScenarioError("<file>", f"not valid YAML: {exc}") from None
        return cls(data, precision)

    def run_preflight(self):
        """Condition on int a_p v^(p+1): selects s*, the pathway and the amplitude scaling."""
        from dataclasses import replace
        from .parity import integral_condition_ap
        ap = integral_condition_ap(self.spec.leading, self.p, seed=self.seed)
        pathway = self.pathway_request
        if pathway == "auto":
            pathway = "standard" if ap.holds else ("quadratic" if self.p == 2 else None)
        if pathway is None:
            raise ScenarioError("nonlinearity.terms",
                                f"int a_{self.p} v^{self.p + 1} vanishes on the kernel; no pathway applies")
        if pathway in ("standard", "cubic") and not ap.holds:
            raise ScenarioError("nonlinearity.pathway",
                                f"{pathway} pathway needs int a_p v^(p+1) != 0 on the kernel")
        if pathway == "cubic":
            if self.p != 3:
                raise ScenarioError("nonlinearity.pathway", "cubic pathway needs p = 3")
            if abs(self.spec.leading.mean()) < 1e-14:
                raise ScenarioError("nonlinearity.terms.3", "cubic pathway needs <a_3> != 0")
        if pathway == "quadratic" and self.p != 2:
            raise ScenarioError("nonlinearity.pathway", "quadratic pathway needs p = 2")
        if self.s_star_request == "auto" and ap.s_star is not None and ap.s_star != self.spec.s_star:
            self.spec = replace(self.spec, s_star=ap.s_star)
        self.pathway = pathway
        self.preflight = {"condition": ap.to_dict(), "pathway": pathway, "s_star": self.spec.s_star,
                          "amplitude_exponent": "delta = |eps|^(1/2)" if pathway == "quadratic"
                          else f"delta = |eps|^(1/{self.p - 1})"}
        return self.preflight

    def header(self):
        return {"nonlinearity": self.spec.to_dict(), "scheme": self.params.to_dict(),
                "seed": self.seed, "preflight": self.preflight, "run": self.run}


# --------------------------------------------------------------------------
# commands


def _delta_list(run):
    if "deltas" in run:
        return [float(d) for d in run["deltas"]]
    if "branch" in run:
        b = run["branch"]
        n = int(b.get("count", 6))
        lo, hi = float(b.get("start", 0.0)), float(b.get("stop", 0.05))
        return [lo + (hi - lo) * i / (n - 1) for i in range(n)] if n > 1 else [lo]
    return [0.0]


def cmd_solve(sc):
    from .report import RunResult
    from .nashmoser import continue_branch_Q1, psi0_circle, rescale_solution
    deltas = _delta_list(sc.run)
    if any(d < 0 for d in deltas):
        raise ScenarioError("run.deltas", "delta must be >= 0")
    if sc.pathway == "quadratic":
        from .bifurcation import PsiQuadratic, default_seeds, find_critical_circle
        F = PsiQuadratic(L=8)
        circle = find_critical_circle(F, default_seeds(F, 3, seed=sc.seed))
        rows = [[d, math.sqrt(1.0 - 2.0 * d * d) if 2 * d * d < 1 else float("nan")] for d in deltas]
        payload = dict(sc.header(), circle=circle.to_dict(),
                       frequency_law=[{"delta": r[0], "omega": r[1]} for r in rows],
                       note="quadratic pathway: critical circle and frequency law only")
        return RunResult("solve", payload, {"frequency_law": (["delta", "omega"], rows)})
    circle = psi0_circle(sc.spec, sc.params, seed=sc.seed)
    points = continue_branch_Q1(sc.spec, circle, deltas, sc.params)
    recs, rows, hplot = [], [], []
    for p in points:
        phys = rescale_solution(p, sc.spec)
        rec = p.to_dict()
        rec["physical"] = {"amplitude": float(abs(phys.samples).max()),
                           "rescaled_residual": phys.rescaled_residual,
                           "physical_residual": phys.physical_residual,
                           "zero_solution": p.delta == 0.0}
        recs.append(rec)
        rows.append([p.delta, p.omega, p.accepted, p.residual, p.stages, p.h_norm_history])
        hplot.extend([p.delta, i + 1, h] for i, h in enumerate(p.h_norm_history))
    payload = dict(sc.header(), circle=circle.to_dict(), points=recs,
                   requested_deltas=deltas, solved=len(points))
    tables = {"branch": (["delta", "omega", "accepted", "residual", "stages", "h_norms"], rows)}
    plots = {"h_decay": (["delta", "stage", "h_norm"], hplot)}
    return RunResult("solve", payload, tables, plots, ok=len(points) == len(deltas))


def cmd_scan(sc):
    from . import cantor
    from .report import RunResult
    from .nashmoser import psi0_circle
    run = sc.run
    cfg = cantor.ScanConfig(eta=float(run.get("eta", 0.1)), windows=int(run.get("windows", 5)),
                            gamma=float(run.get("gamma", sc.params.gamma)),
                            tau=float(run.get("tau", sc.params.tau)),
                            cap_factor=float(run.get("cap_factor", 4.0)),
                            aperture=float(run.get("aperture", 8.0)))
    if not 1.0 < cfg.tau < 2.0:
        raise ScenarioError("run.tau", "must lie in (1, 2)")
    if "m_constant" in run:
        m = cantor.MeanValueCurve.constant(float(run["m_constant"]))
    else:
        circle = psi0_circle(sc.spec, sc.params, seed=sc.seed)
        m = cantor.mean_value_curve(sc.spec, circle, cfg.eta, sc.params, cfg.m_samples)
    rep = cantor.scan_delta_grid(sc.spec, m, cfg)
    verdict = cantor.density_report(rep) if len(rep.window_excised) >= 4 else None
    limit = int(run.get("interval_rows", 100000))
    summary = {k: v for k, v in rep.to_dict().items() if k != "intervals"}
    payload = dict(sc.header(), report=summary, verdict=verdict,
                   intervals_total=len(rep.intervals), intervals_written=min(limit, len(rep.intervals)))
    tables = {
        "windows": (["lo", "hi", "density", "excised", "pairs", "hits"], rep.window_rows()),
        "intervals": (["l", "j", "family", "a", "b", "window"], rep.intervals[:limit]),
    }
    plots = {"density": (["eta", "density", "excised"],
                         [[e, d, x] for e, d, x in zip(rep.eta_values, rep.densities, rep.excised_total)])}
    return RunResult("scan", payload, tables, plots)


def cmd_eig(sc):
    from .linop import alpha_k, eigen_Sk
    from .report import RunResult
    run = sc.run
    a0 = _trig(run.get("a0", {"c0": 0.0, "cos": [0.0, 1.0], "sin": [0.5]}), "run.a0")
    eps = float(run.get("epsilon", 0.01))
    J = int(run.get("J", 64))
    ks = [int(k) for k in run.get("k_list", [0, 3, 10])]
    omega = float(run["omega"]) if "omega" in run else math.sqrt(1.0 + 2.0 * eps)
    M = a0.mean()
    rows, spec_plot, alpha_rows, out = [], [], [], []
    for k in ks:
        es = eigen_Sk(k, eps, a0, J)
        for j, lam in zip(es.modes, es.eigenvalues):
            rows.append([k, int(j), float(lam), float(lam - j * j), float(lam - j * j - eps * M)])
            spec_plot.append([k, int(j), float(lam - j * j)])
        a, j = alpha_k(es, omega)
        alpha_rows.append([k, a, j])
        out.append({"k": k, "alpha": a, "alpha_j": j, "residual": es.residual(),
                    "eigenvalues": es.eigenvalues.tolist()})
    payload = dict(sc.header(), epsilon=eps, omega=omega, mean=M, systems=out)
    return RunResult("eig", payload,
                     {"eigenvalues": (["k", "j", "lambda", "lambda_minus_j2", "deviation"], rows)},
                     {"lambda_minus_j2": (["k", "j", "value"], spec_plot),
                      "alpha": (["k", "alpha", "argmin_j"], alpha_rows)})


def cmd_audit(sc):
    from .acceptance import run_acceptance
    from .report import RunResult
    suite = [int(i) for i in sc.run.get("suite", [2, 3, 4])]
    if any(not 1 <= i <= 11 for i in suite):
        raise ScenarioError("run.suite", "criteria numbers must lie in 1..11")
    res = run_acceptance(sc.seed, only=suite, include_determinism=False, echo=None)
    payload = dict(sc.header(), results=[r.to_dict() for r in res])
    rows = [[r.number, r.title, r.passed] for r in res]
    return RunResult("audit", payload, {"audit": (["criterion", "title", "passed"], rows)},
                     ok=all(r.passed for r in res))


def cmd_parity(sc):
    from . import parity
    from .report import RunResult
    run = sc.run
    a = _trig(run["a"], "run.a") if "a" in run else sc.spec.leading
    qs = run.get("q", [sc.p + 1])
    qs = [int(q) for q in (qs if isinstance(qs, list) else [qs])]
    if any(q < 2 for q in qs):
        raise ScenarioError("run.q", "q must be >= 2")
    verdicts = [parity.parity_classify(a, q, seed=sc.seed) for q in qs]
    rows = [[v.q, v.symmetric_defect, v.antisymmetric_defect, v.vanishes_on_V, v.witness_value]
            for v in verdicts]
    payload = dict(sc.header(), a=a.to_dict(), verdicts=verdicts)
    if int(run.get("audit_count", 0)) > 0:
        audit = parity.vq_equivalence_audit(int(run["audit_count"]), seed=sc.seed)
        payload["audit"] = {"cases": len(audit.rows), "misclassifications": audit.misclassifications}
    return RunResult("parity", payload,
                     {"parity": (["q", "symmetric_defect", "antisymmetric_defect", "vanishes", "witness"],
                                 rows)})


def cmd_verify(seed, skip_determinism, echo=print):
    from .acceptance import run_acceptance
    from .report import RunResult
    res = run_acceptance(seed, include_determinism=not skip_determinism, echo=echo)
    payload = {"seed": seed, "results": [r.to_dict() for r in res],
               "passed": sum(r.passed for r in res), "total": len(res)}
    rows = [[r.number, r.title, r.passed] for r in res]
    return RunResult("acceptance", payload,
                     {"acceptance": (["criterion", "title", "passed"], rows)},
                     ok=all(r.passed for r in res))


DISPATCH = {"solve": cmd_solve, "scan": cmd_scan, "eig": cmd_eig, "audit": cmd_audit,
            "parity": cmd_parity}


def run_scenario(path, command=None, out=None, seed=None, precision="double", echo=print):
    """Validate, preflight, dispatch and write; returns (exit status, written paths)."""
    from .report import emit_report
    try:
        sc = Scenario.load(path, precision)
        if seed is not None:
            sc.seed = int(seed)
        kind = sc.run.get("kind")
        command = command or kind
        if command not in DISPATCH:
            raise ScenarioError("run.kind", f"must be one of {sorted(DISPATCH)}")
        if kind is not None and kind != command:
            raise ScenarioError("run.kind", f"scenario is for {kind!r}, command is {command!r}")
        sc.run_preflight()
        result = DISPATCH[command](sc)
    except ScenarioError as exc:
        echo(f"scenario error: {exc}")
        return EXIT_SCENARIO, []
    out = out or sc.output or "results"
    paths = emit_report(result, out)
    return (EXIT_OK if result.ok else EXIT_FAILED), paths


def build_parser():
    ap = argparse.ArgumentParser(prog="resonantwave",
                                 description="Periodic solutions of resonant nonlinear wave equations")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--scenario", help="YAML scenario file")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--precision", choices=("double", "extended"), default="double")
    ap.add_argument("--skip-determinism", action="store_true",
                    help="verify: leave out the check that runs verify twice")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("--threads must be >= 1", file=sys.stderr)
        return EXIT_SCENARIO
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(args.threads)
    if args.command == "verify":
        from .report import emit_report
        res = cmd_verify(args.seed or 0, args.skip_determinism)
        emit_report(res, args.out or "results")
        return EXIT_OK if res.ok else EXIT_FAILED
    if not args.scenario:
        print(f"{args.command} needs --scenario", file=sys.stderr)
        return EXIT_SCENARIO
    status, paths = run_scenario(args.scenario, args.command, args.out, args.seed, args.precision)
    for p in paths:
        print(p)
    return status


if __name__ == "__main__":
    sys.exit(main())
