"""When does int_Omega a(x) v^q vanish for every v in the resonant kernel V?

Every v in V satisfies v(t, pi - x) = -v(t + pi, x), so reflecting x and
shifting t gives  int a v^q = (-1)^q int a(pi - .) v^q.  Hence the integral
vanishes identically when a is reflection-antisymmetric (q even) or
reflection-symmetric (q odd); the converse is what the audit probes.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .spectral import TrigPolynomial, gauss_rule

STRUCTURAL_TOL = 1e-9
WITNESS_TOL = 1e-6


@dataclass
class ParityVerdict:
    q: int
    symmetric_defect: float
    antisymmetric_defect: float
    vanishes_on_V: bool
    witness: object = None          # complex coefficients c_l, l = 1..len
    witness_value: float = 0.0
    s_star: int = None

    def to_dict(self):
        return {
            "q": self.q,
            "symmetric_defect": self.symmetric_defect,
            "antisymmetric_defect": self.antisymmetric_defect,
            "vanishes_on_V": self.vanishes_on_V,
            "witness": None if self.witness is None else
            [[float(z.real), float(z.imag)] for z in self.witness],
            "witness_value": self.witness_value,
            "s_star": self.s_star,
        }


def reflect(a):
    """a(pi - x) as a trig polynomial."""
    k = np.arange(1, len(a.cos_coeffs) + 1)
    cos_c = np.asarray(a.cos_coeffs, float) * (-1.0) ** k
    k = np.arange(1, len(a.sin_coeffs) + 1)
    sin_c = np.asarray(a.sin_coeffs, float) * (-1.0) ** (k + 1)
    return TrigPolynomial(a.c0, tuple(cos_c), tuple(sin_c))


def split_parity(a):
    """(symmetric, antisymmetric) parts under x -> pi - x."""
    r = reflect(a)
    sym = TrigPolynomial(a.c0, tuple(0.5 * (np.asarray(a.cos_coeffs) + np.asarray(r.cos_coeffs))),
                         tuple(0.5 * (np.asarray(a.sin_coeffs) + np.asarray(r.sin_coeffs))))
    anti = TrigPolynomial(0.0, tuple(0.5 * (np.asarray(a.cos_coeffs) - np.asarray(r.cos_coeffs))),
                          tuple(0.5 * (np.asarray(a.sin_coeffs) - np.asarray(r.sin_coeffs))))
    return sym, anti


def parity_defects(a, samples=2001):
    x = np.linspace(0.0, math.pi, samples)
    ax, arx = a(x), a(math.pi - x)
    return float(np.max(np.abs(arx - ax))), float(np.max(np.abs(arx + ax)))


# --------------------------------------------------------------------------
# exact quadrature of int a v^q over v in V


class KernelIntegral:
    """I(c) = int_0^2pi int_0^pi a(x) v(t,x)^q dx dt for v = sum_l 2 Re(c_l e^{ilt}) sin(lx).

    Quadrature resolves the full trig degree: uniform t (exact for degree
    < nt) and Gauss-Legendre in x sized for total frequency q*modes + deg a.
    """

    def __init__(self, a, q, modes=4, refine=1):
        self.a, self.q, self.modes = a, int(q), int(modes)
        deg_t = self.q * self.modes
        self.nt = refine * (2 * deg_t + 2)
        freq_x = self.q * self.modes + a.degree
        self.nx = refine * (int(math.ceil(0.7 * freq_x)) + 16)
        self.t = 2 * math.pi * np.arange(self.nt) / self.nt
        self.wt = 2 * math.pi / self.nt
        self.x, self.wx = gauss_rule(self.nx)
        ls = np.arange(1, self.modes + 1)
        self.cos_lt = np.cos(np.outer(ls, self.t))       # (modes, nt)
        self.sin_lt = np.sin(np.outer(ls, self.t))
        self.sin_lx = np.sin(np.outer(ls, self.x))       # (modes, nx)
        self.ax = a(self.x)

    def values(self, c):
        """v on the grid for coefficient array c of shape (..., modes) complex."""
        c = np.asarray(c, complex)
        tpart_re = 2 * np.einsum("...l,lt->...lt", c.real, self.cos_lt)
        tpart_im = -2 * np.einsum("...l,lt->...lt", c.imag, self.sin_lt)
        return np.einsum("...lt,lx->...tx", tpart_re + tpart_im, self.sin_lx)

    def __call__(self, c):
        v = self.values(c)
        return self.wt * np.einsum("...tx,x->...", v ** self.q, self.ax * self.wx)

    def gradient(self, c):
        """(dI/dRe c_l, dI/dIm c_l) stacked as a real vector of length 2*modes."""
        v = self.values(c)
        g = self.q * v ** (self.q - 1) * self.ax[None, :]
        gx = np.einsum("tx,lx,x->lt", g, self.sin_lx, self.wx)
        d_re = 2 * self.wt * np.einsum("lt,lt->l", gx, self.cos_lt)
        d_im = -2 * self.wt * np.einsum("lt,lt->l", gx, self.sin_lt)
        return np.concatenate([d_re, d_im])


def _to_complex(x, modes):
    return x[:modes] + 1j * x[modes:]


def _normalized(c):
    n = np.linalg.norm(c)
    return c / n if n > 0 else c


def _seed_coefficients(modes):
    """Deterministic low-mode seeds: single modes and a few two-mode mixtures."""
    seeds = []
    for l in range(modes):
        e = np.zeros(modes, complex)
        e[l] = 1.0
        seeds.append(e)
    for l in range(modes):
        for m in range(l + 1, modes):
            for ph in (1.0, 1j, -1.0):
                e = np.zeros(modes, complex)
                e[l], e[m] = 1.0, ph
                seeds.append(_normalized(e))
    return seeds


def search_witness(a, q, trials=64, modes=4, seed=0, polish=True):
    """Largest |int a v^q| over unit-coefficient v in V (random + seeded + local ascent).

    Returns (coefficients, value) where value carries the sign of the integral.
    """
    ki = KernelIntegral(a, q, modes)
    rng = np.random.default_rng(seed)
    cands = _seed_coefficients(modes)
    raw = rng.standard_normal((trials, modes)) + 1j * rng.standard_normal((trials, modes))
    cands.extend(_normalized(c) for c in raw)
    cands = np.array(cands)
    vals = ki(cands)
    best = int(np.argmax(np.abs(vals)))
    c_best, v_best = cands[best], float(vals[best])
    if polish and abs(v_best) > 0:
        sgn = math.copysign(1.0, v_best)

        def obj(x):
            c = _to_complex(x, modes)
            n2 = float(np.sum(np.abs(c) ** 2))
            val = float(ki(c))
            g = ki.gradient(c)
            # maximise sgn * I(c) / |c|^q (homogeneous of degree zero)
            f = -sgn * val / n2 ** (q / 2)
            grad = -sgn * (g / n2 ** (q / 2) - q * val * x / n2 ** (q / 2 + 1))
            return f, grad

        x0 = np.concatenate([c_best.real, c_best.imag])
        res = minimize(obj, x0, jac=True, method="BFGS", options={"gtol": 1e-12, "maxiter": 200})
        c_new = _normalized(_to_complex(res.x, modes))
        v_new = float(ki(c_new))
        if abs(v_new) > abs(v_best):
            c_best, v_best = c_new, v_new
    return c_best, v_best


def sampled_integrals(a, q, count=64, modes=4, seed=0):
    """|int a v^q| for random unit-coefficient v in V (no optimisation)."""
    ki = KernelIntegral(a, q, modes)
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((count, modes)) + 1j * rng.standard_normal((count, modes))
    raw = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    return np.abs(ki(raw))


def parity_classify(a, q, tol=STRUCTURAL_TOL, find_witness=True, modes=4, seed=0):
    if q < 2:
        raise ValueError("q must be >= 2")
    sym_def, anti_def = parity_defects(a)
    vanishes = (anti_def < tol) if q % 2 == 0 else (sym_def < tol)
    witness, wval, s_star = None, 0.0, None
    if find_witness and not vanishes:
        witness, wval = search_witness(a, q, modes=modes, seed=seed)
        if abs(wval) > WITNESS_TOL:
            s_star = _sign_rule(a, q, witness, wval, modes, seed)
    return ParityVerdict(int(q), sym_def, anti_def, bool(vanishes), witness, wval, s_star)


def _sign_rule(a, q, witness, wval, modes, seed):
    """+1 if some v gives a positive integral, else -1."""
    if wval > 0 or q % 2 == 1:
        return 1     # odd q: v -> -v flips the sign
    # even q with a negative best: look for a positive value explicitly
    _, pos = search_witness(TrigPolynomial(-a.c0, tuple(-np.asarray(a.cos_coeffs)),
                                           tuple(-np.asarray(a.sin_coeffs))), q, modes=modes,
                            seed=seed + 1)
    return 1 if -pos > WITNESS_TOL else -1


@dataclass
class ApCondition:
    holds: bool
    witness: object
    value: float
    s_star: object
    pathway: str          # "standard" or "quadratic"
    refined_value: float = float("nan")

    def to_dict(self):
        return {"holds": self.holds, "value": self.value, "s_star": self.s_star,
                "pathway": self.pathway, "refined_value": self.refined_value,
                "witness": None if self.witness is None else
                [[float(z.real), float(z.imag)] for z in self.witness]}


def integral_condition_ap(a_p, p, trials=64, truncation=4, seed=0):
    """Non-vanishing of int a_p v^(p+1) on V, the sign selector, and the pathway."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    q = p + 1
    witness, value = search_witness(a_p, q, trials=trials, modes=truncation, seed=seed)
    holds = abs(value) > WITNESS_TOL
    refined = float(KernelIntegral(a_p, q, truncation, refine=2)(witness))
    s_star = _sign_rule(a_p, q, witness, value, truncation, seed) if holds else None
    pathway = "standard" if holds else ("quadratic" if p == 2 else "none")
    return ApCondition(bool(holds), witness, float(value), s_star, pathway, refined)


@dataclass
class VqAuditRow:
    index: int
    q: int
    part: str              # "matching", "mismatching" or "mixed"
    predicted_vanish: bool
    max_sampled: float
    witness_value: float
    misclassified: bool


@dataclass
class VqAudit:
    rows: list = field(default_factory=list)

    @property
    def misclassifications(self):
        return sum(r.misclassified for r in self.rows)

    def max_matching(self):
        vals = [r.max_sampled for r in self.rows if r.predicted_vanish]
        return max(vals) if vals else 0.0

    def min_mismatching_witness(self):
        vals = [abs(r.witness_value) for r in self.rows if not r.predicted_vanish]
        return min(vals) if vals else float("inf")

    def csv_rows(self):
        return [[r.index, r.q, r.part, int(r.predicted_vanish), r.max_sampled, r.witness_value,
                 int(r.misclassified)] for r in self.rows]


def random_trig(rng, degree=5):
    return TrigPolynomial(float(rng.standard_normal()), tuple(rng.standard_normal(degree)),
                          tuple(rng.standard_normal(degree)))


def vq_equivalence_audit(random_a_count=50, q_list=(2, 3, 4, 5), truncation=4, tol=1e-10,
                         degree=5, samples=32, seed=0):
    """Split random a into reflection parts and test both directions of the equivalence."""
    rng = np.random.default_rng(seed)
    audit = VqAudit()
    for i in range(random_a_count):
        a = random_trig(rng, degree)
        sym, anti = split_parity(a)
        for q in q_list:
            match, mismatch = (anti, sym) if q % 2 == 0 else (sym, anti)
            for part, poly in (("matching", match), ("mismatching", mismatch), ("mixed", a)):
                verdict = parity_classify(poly, q, find_witness=False)
                sampled = sampled_integrals(poly, q, samples, truncation, seed=seed + 7 * i + q)
                wval = 0.0
                if verdict.vanishes_on_V:
                    bad = bool(np.max(sampled) >= tol)
                else:
                    _, wval = search_witness(poly, q, trials=samples, modes=truncation,
                                             seed=seed + 11 * i + q)
                    bad = abs(wval) <= 100 * tol or abs(wval) <= WITNESS_TOL
                audit.rows.append(VqAuditRow(i, q, part, verdict.vanishes_on_V,
                                             float(np.max(sampled)), float(wval), bad))
    return audit
