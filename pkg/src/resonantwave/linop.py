"""Linearised range operator L_n = D - M1 - M2 on the truncations W^(n).

D is block diagonal in the time frequency and is diagonalised by the
Sturm-Liouville problems S_k; M1 multiplies by the time-oscillating part of
a = d_u g; M2 carries the dependence of the high V-modes on w.  Besides the
direct inverse the module builds the factorised inverse
|D|^{-1/2} (U - R1 - R2)^{-1} |D|^{-1/2} and audits the small divisors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, gmres

from .bifurcation import V2Sensitivity, solve_Q2
from .spectral import (
    MultiplicationOperator,
    NormWeights,
    SpectralField,
    TrigPolynomial,
    beta_value,
    gauss_rule,
    grid_for,
    mode_list,
    weight_array,
)


class PositivityError(ValueError):
    pass


class TruncationTooSmall(ValueError):
    pass


class ResonantLinearization(ArithmeticError):
    def __init__(self, k, j, value):
        super().__init__(f"resonant linearization at (k={k}, j={j}): eigenvalue {value:.3e} below floor")
        self.k, self.j, self.value = k, j, value


# --------------------------------------------------------------------------
# profiles a0(x) and the Sturm-Liouville blocks


class SampledProfile:
    """a0 sampled at Gauss-Legendre nodes; exact for Galerkin products it resolves."""

    def __init__(self, x, w, values):
        self.x, self.w, self.values = x, w, np.asarray(values, dtype=float)

    @classmethod
    def from_trig(cls, a0, J):
        x, w = gauss_rule(int(math.ceil(0.7 * (2 * J + a0.degree))) + 24)
        return cls(x, w, a0(x))

    def mult_matrix(self, J):
        j = np.arange(1, J + 1)
        S = np.sin(np.outer(self.x, j))
        return (2.0 / math.pi) * (S.T * (self.w * self.values)) @ S

    def sup(self):
        return float(np.max(np.abs(self.values)))

    def mean(self):
        return float(np.dot(self.w, self.values)) / math.pi


def _profile(a0, J):
    if isinstance(a0, SampledProfile):
        return a0
    if isinstance(a0, TrigPolynomial):
        return SampledProfile.from_trig(a0, J)
    raise TypeError("a0 must be a TrigPolynomial or SampledProfile")


@dataclass
class EigenSystem:
    k: int
    epsilon: float
    modes: np.ndarray            # sine modes j != |k|, ascending
    eigenvalues: np.ndarray      # ascending; eigenvalues[i] pairs with modes[i]
    vectors: np.ndarray = field(repr=False)   # columns in the sine basis over ``modes``
    matrix: np.ndarray = field(repr=False, default=None)

    def eigenvalue(self, j):
        idx = np.nonzero(self.modes == j)[0]
        if not len(idx):
            raise KeyError(j)
        return float(self.eigenvalues[idx[0]])

    def residual(self):
        S = self.matrix
        return float(np.max(np.linalg.norm(S @ self.vectors - self.vectors * self.eigenvalues, axis=0)))


def eigen_Sk(k, epsilon, a0, J, mult=None):
    """Spectrum of S_k = -d_xx + eps pi_k(a0 .) on sine modes j != |k|, j <= J."""
    if J <= abs(k):
        raise TruncationTooSmall(f"J={J} must exceed |k|={abs(k)}")
    prof = _profile(a0, J) if mult is None else None
    if mult is None:
        if abs(epsilon) * prof.sup() >= 1.0:
            raise PositivityError("<,>_eps not a scalar product: |eps| max|a0| >= 1")
        mult = prof.mult_matrix(J)
    modes = np.array([j for j in range(1, J + 1) if j != abs(k)])
    idx = modes - 1
    S = np.diag(modes.astype(float) ** 2) + epsilon * mult[np.ix_(idx, idx)]
    S = 0.5 * (S + S.T)
    lam, vec = np.linalg.eigh(S)
    # fix signs so that each eigenvector leans on its own sine mode
    piv = vec[np.arange(len(modes)), np.arange(len(modes))]
    vec = vec * np.where(piv < 0, -1.0, 1.0)
    return EigenSystem(int(k), float(epsilon), modes, lam, vec, S)


def alpha_k(eigs, omega, J_margin=8):
    """(alpha_k, argmin j) with alpha_k = min_{j != |k|} |omega^2 k^2 - lambda_{k,j}|."""
    k = abs(eigs.k)
    limit = 2 * k + J_margin
    sel = eigs.modes <= limit
    vals = np.abs(omega ** 2 * k ** 2 - eigs.eigenvalues[sel])
    i = int(np.argmin(vals))
    j = int(eigs.modes[sel][i])
    if j == int(eigs.modes[-1]) and limit > eigs.modes[-1]:
        raise TruncationTooSmall(f"argmin of alpha_{k} sits at the truncation edge j={j}")
    return float(vals[i]), j


# --------------------------------------------------------------------------
# Melnikov conditions


@dataclass
class MelnikovReport:
    accepted: bool
    violations: list
    gamma: float
    tau: float
    L_n: int
    delta: float = 0.0
    min_margin: float = math.inf

    def to_dict(self):
        return {"accepted": self.accepted, "gamma": self.gamma, "tau": self.tau, "L_n": self.L_n,
                "delta": self.delta, "min_margin": None if math.isinf(self.min_margin) else self.min_margin,
                "violations": [list(v) for v in self.violations]}

    @classmethod
    def from_dict(cls, d):
        mm = d.get("min_margin")
        return cls(bool(d["accepted"]), [tuple(v) for v in d["violations"]], d["gamma"], d["tau"],
                   int(d["L_n"]), d["delta"], math.inf if mm is None else mm)


def melnikov_test(delta, spec, M_value, L_n, gamma, tau, precision="double"):
    """Both first-order non-resonance families on k in (1/(3|eps|), L_n], j <= 2 L_n."""
    if delta <= 0:
        raise ValueError("Melnikov test needs delta > 0")
    dt = np.longdouble if precision == "extended" else np.float64
    d = dt(delta)
    eps = dt(spec.s_star) * d ** (spec.p - 1)
    omega = np.sqrt(dt(1) + dt(2) * eps)
    k_lo = int(math.floor(1.0 / (3.0 * abs(float(eps))))) + 1
    ks = np.arange(max(k_lo, 1), L_n + 1)
    violations, min_margin = [], math.inf
    if len(ks):
        js = np.arange(1, 2 * L_n + 1)
        K, Jm = np.meshgrid(ks, js, indexing="ij")
        keep = K != Jm
        Kd, Jd = K.astype(dt), Jm.astype(dt)
        thr = dt(gamma) / (Kd + Jd) ** dt(tau)
        m1 = np.abs(omega * Kd - Jd) - thr
        m2 = np.abs(omega * Kd - Jd - eps * dt(M_value) / (dt(2) * Jd)) - thr
        for name, marg in (("first", m1), ("second", m2)):
            bad = keep & (marg < 0)
            for kk, jj, mm in zip(K[bad], Jm[bad], marg[bad]):
                violations.append((int(kk), int(jj), name, float(mm)))
            if np.any(keep):
                min_margin = min(min_margin, float(np.min(marg[keep])))
    violations.sort(key=lambda v: (v[0], v[1], v[2]))
    return MelnikovReport(not violations, violations, gamma, tau, L_n, float(delta), min_margin)


# --------------------------------------------------------------------------
# the operator


class LinearizedOperator:
    """L_n(delta, v1, w) on W^(n) = {(l, j): |l| <= L_n, j != |l|} of the field truncation.

    Matrix-free ``apply``/``solve`` for the Nash-Moser stages and dense
    ``blocks`` (D, M1, M2) for audits.
    """

    def __init__(self, spec, delta, v1, w, L_n, N, v2=None, q2_tol=1e-15, floor=1e-12,
                 J_margin=8):
        self.spec, self.delta, self.L_n, self.N = spec, float(delta), int(L_n), int(N)
        self.L, self.J = v1.L, v1.J
        if self.L_n > self.L:
            raise TruncationTooSmall(f"L_n={L_n} exceeds field truncation L={self.L}")
        self.eps = spec.epsilon(delta)
        self.omega = spec.omega(delta)
        if v2 is None:
            v2, _ = solve_Q2(spec, delta, v1, w, tol=q2_tol, N=N)
        self.v2 = v2
        self.u = v1 + w + v2
        self.sens = V2Sensitivity(spec, delta, self.u, N)
        self.grid = self.sens.grid
        self.mult = self.sens.mult
        self.a0_vals = self.mult.time_mean()
        self.modes = mode_list(self.L, self.J, "Pn", Ln=self.L_n)
        self.flat = (self.modes[:, 0] + self.L) * self.J + self.modes[:, 1] - 1
        self.size = len(self.modes)
        self.diag_L = (self.omega ** 2 * self.modes[:, 0] ** 2 - self.modes[:, 1] ** 2).astype(complex)
        # Sturm-Liouville blocks from the same quadrature as the operator
        self.a0_profile = SampledProfile(self.grid.x, self.grid.wx, self.a0_vals)
        if abs(self.eps) * self.a0_profile.sup() >= 1.0:
            raise PositivityError("<,>_eps not a scalar product: |eps| max|a0| >= 1")
        A0 = self.mult.block(0).real
        self.eigs = {k: eigen_Sk(k, self.eps, None, self.J, mult=A0) for k in range(self.L_n + 1)}
        self.blocks_idx = {l: np.nonzero(self.modes[:, 0] == l)[0] for l in range(-self.L_n, self.L_n + 1)}
        self.floor = floor
        self._dvals = {}
        for k, es in self.eigs.items():
            d = self.omega ** 2 * k ** 2 - es.eigenvalues
            scale = max(1.0, self.omega ** 2 * k ** 2)
            bad = np.abs(d) < floor * scale
            if np.any(bad):
                i = int(np.argmax(bad))
                raise ResonantLinearization(k, int(es.modes[i]), float(d[i]))
            self._dvals[k] = d
        self.J_margin = J_margin
        self._dense = None

    # -- vectors
    def to_flat(self, field_):
        return field_.c.ravel()[self.flat].copy()

    def to_field(self, vec):
        out = np.zeros((2 * self.L + 1) * self.J, dtype=complex)
        out[self.flat] = vec
        return SpectralField(out.reshape(2 * self.L + 1, self.J))

    def _full(self, vec):
        out = np.zeros((2 * self.L + 1) * self.J, dtype=complex)
        out[self.flat] = vec
        return out.reshape(2 * self.L + 1, self.J)

    # -- actions
    def apply(self, vec):
        c = self._full(vec)
        prod = self.mult.apply(c + self.sens.apply(c))
        return self.diag_L * vec - self.eps * prod.ravel()[self.flat]

    def apply_D_inverse(self, vec):
        out = np.empty_like(vec, dtype=complex)
        for l, idx in self.blocks_idx.items():
            es = self.eigs[abs(l)]
            Phi = es.vectors
            out[idx] = Phi @ ((Phi.T @ vec[idx]) / self._dvals[abs(l)])
        return out

    def solve(self, rhs, rtol=1e-13, maxiter=400):
        A = LinearOperator((self.size, self.size), matvec=self.apply, dtype=complex)
        P = LinearOperator((self.size, self.size), matvec=self.apply_D_inverse, dtype=complex)
        x, info = gmres(A, rhs, M=P, rtol=rtol, atol=0.0, restart=min(60, self.size),
                        maxiter=maxiter)
        if info != 0:
            # fall back to a dense solve on small systems
            if self.size <= 4000:
                return np.linalg.solve(self.dense(), rhs)
            raise RuntimeError(f"GMRES failed to converge (info={info})")
        return x

    # -- dense pieces
    def blocks(self):
        """(D, M1, M2) as dense complex matrices over ``modes``."""
        if self._dense is None:
            n = self.size
            full = self.mult.dense(self.modes, self.modes)
            D = np.zeros((n, n), dtype=complex)
            for l, idx in self.blocks_idx.items():
                D[np.ix_(idx, idx)] = np.diag(self.diag_L[idx]) - self.eps * full[np.ix_(idx, idx)]
            M1 = self.eps * full
            for l, idx in self.blocks_idx.items():
                M1[np.ix_(idx, idx)] = 0.0
            if len(self.sens.modes):
                dv2 = self.sens.dense_from(self.modes)
                M2 = self.eps * self.mult.dense(self.modes, self.sens.modes) @ dv2
            else:
                M2 = np.zeros((n, n), dtype=complex)
            self._dense = (D, M1, M2)
        return self._dense

    def dense(self):
        D, M1, M2 = self.blocks()
        return D - M1 - M2

    def weights(self, w):
        wa = weight_array(self.L, self.J, w).ravel()[self.flat]
        return wa

    def alphas(self):
        return {k: alpha_k(es, self.omega, self.J_margin) for k, es in self.eigs.items()}

    def mean_value(self):
        return mean_value_from_grid(self.grid, self.mult.a_vals)

    def a0_h1_norm(self):
        """H1(0, pi) norm of the time average of a = d_u g, by the chain rule."""
        g, spec = self.grid, self.spec
        j = np.arange(1, self.J + 1)
        cos_xj = np.cos(np.outer(g.x, j)) * j[None, :]
        u = g.synthesize(self.u.c)
        buf = np.zeros((g.nt, g.nx), dtype=complex)
        buf[g._rows] = self.u.c @ cos_xj.T
        ux = (np.fft.ifft(buf, axis=0) * g.nt).real
        x = g.x[None, :]
        da = np.zeros_like(u)
        for k, ak in spec.terms.items():
            scale = self.delta ** (k - spec.p)
            if scale == 0.0:
                continue
            da += scale * k * (ak.derivative()(x) * u ** (k - 1)
                               + (k - 1) * ak(x) * u ** max(k - 2, 0) * ux)
        da *= spec.s_star
        d0 = da.mean(axis=0)
        return math.sqrt(float(np.dot(g.wx, self.a0_vals ** 2 + d0 ** 2)))


def assemble_Ln(spec, delta, v1, w, n, params, v2=None):
    """Linearised operator at stage n with L_n = L0 2^n."""
    return LinearizedOperator(spec, delta, v1, w, params.L0 * 2 ** n, params.N, v2=v2,
                              q2_tol=params.q2_tol, floor=params.eig_floor, J_margin=params.J_margin)


def mean_value_from_grid(grid, a_vals):
    return grid.integrate(a_vals) / (2.0 * math.pi ** 2)


def mean_value_M(spec, delta, v1, w, v2):
    """(1/|Omega|) int d_u g(delta, x, v1 + w + v2)."""
    u = v1 + w + v2
    grid = grid_for(u.L, u.J, spec.max_power, spec.x_degree)
    a = spec.g_pointwise(delta, grid.x[None, :], grid.synthesize(u.c), order=1)
    return mean_value_from_grid(grid, a)


def weighted_operator_norm(A, w_in, w_out=None):
    """||W_out^{1/2} A W_in^{-1/2}||_2 (operator norm between weighted l^2 spaces)."""
    w_out = w_in if w_out is None else w_out
    B = np.sqrt(w_out)[:, None] * A / np.sqrt(w_in)[None, :]
    return float(sla.svdvals(B)[0])


def invert_Ln_direct(op):
    return np.linalg.inv(op.dense())


@dataclass
class StructuredInverse:
    inverse: np.ndarray = field(repr=False)
    abs_D_inv_sqrt: np.ndarray = field(repr=False)
    U: np.ndarray = field(repr=False)
    R1: np.ndarray = field(repr=False)
    R2: np.ndarray = field(repr=False)
    neumann_norm: float = 0.0


def _block_functions(op):
    n = op.size
    Dm = np.zeros((n, n))
    U = np.zeros((n, n))
    for l, idx in op.blocks_idx.items():
        Phi = op.eigs[abs(l)].vectors
        d = op._dvals[abs(l)]
        Dm[np.ix_(idx, idx)] = (Phi / np.sqrt(np.abs(d))) @ Phi.T
        U[np.ix_(idx, idx)] = (Phi * np.sign(d)) @ Phi.T
    return Dm, U


def invert_Ln_structured(op):
    """|D|^{-1/2} (U - R1 - R2)^{-1} |D|^{-1/2}, with (U - R)^{-1} = (I - U R)^{-1} U."""
    D, M1, M2 = op.blocks()
    Dm, U = _block_functions(op)
    R1 = Dm @ M1 @ Dm
    R2 = Dm @ M2 @ Dm
    UR = U @ (R1 + R2)
    inner = np.linalg.solve(np.eye(op.size) - UR, U.astype(complex))
    inv = Dm @ inner @ Dm
    return StructuredInverse(inv, Dm, U, R1, R2, float(np.linalg.norm(UR, 2)))


# --------------------------------------------------------------------------
# small-divisor audit


@dataclass
class AuditTable:
    rows: list            # (k, l, alpha_k, alpha_l, bound, ratio, case)
    fitted_C: float
    case_counts: dict
    case_constants: dict
    violations: list
    beta: float
    beta_convention: str
    extra: dict = field(default_factory=dict)

    def csv_rows(self):
        return [("k", "l", "alpha_k", "alpha_l", "bound", "ratio", "case")] + list(self.rows)


def classify_pair(k, l, jk, il, eps, beta):
    mx = max(abs(k), abs(l))
    if abs(k - l) >= mx ** beta:
        return 1
    if min(abs(k), abs(l)) <= 1.0 / (3.0 * abs(eps)):
        return 2
    if abs(k - l) == abs(jk - il):
        return 3
    return 4


def smalldivisor_audit(eigs, omega, epsilon, gamma, tau, beta_convention="smalldivisor",
                       J_margin=8, C_reference=None):
    """Exhaustive pair scan of 1/(alpha_k alpha_l) against the small-divisor bound.

    ``eigs`` maps k >= 0 to EigenSystem (alpha_{-k} = alpha_k).  If
    ``C_reference`` is given, violations are counted against it; otherwise the
    fitted constant (the largest observed ratio) is reported and the
    violation list is empty by construction.
    """
    beta = beta_value(tau, beta_convention)
    expo = 2.0 * (tau - 1.0) / beta
    alph = {}
    for k, es in eigs.items():
        a, j = alpha_k(es, omega, J_margin)
        alph[k] = (a, j)
        alph[-k] = (a, j)
    ks = sorted(alph)
    rows = []
    counts = {1: 0, 2: 0, 3: 0, 4: 0}
    case_max = {1: 0.0, 2: 0.0, 3: 0.0, 4: 0.0}
    scale = 1.0 / (gamma ** 2 * abs(epsilon) ** (tau - 1.0))
    for k in ks:
        for l in ks:
            if k == l:
                continue
            ak, jk = alph[k]
            al, il = alph[l]
            bound = abs(k - l) ** expo * scale
            ratio = (1.0 / (ak * al)) / bound
            case = classify_pair(k, l, jk, il, epsilon, beta)
            counts[case] += 1
            case_max[case] = max(case_max[case], ratio)
            rows.append((k, l, ak, al, bound, ratio, case))
    fitted = max(case_max.values()) if rows else 0.0
    ref = fitted if C_reference is None else C_reference
    violations = [r for r in rows if r[5] > ref]
    other = "bracket" if beta_convention == "smalldivisor" else "smalldivisor"
    return AuditTable(rows, fitted, counts, case_max, violations, beta, beta_convention,
                      {f"beta_{other}": beta_value(tau, other)})


def norm_constant_audit(op, gamma, tau, weights=NormWeights(0.0, 1.0)):
    """Fitted constants for the |D|^{-1/2}, U^{-1}, R1 and R2 bounds.

    |D|^{-1/2}: ||.||_{s'+(tau-1)/2 -> s'} * sqrt(gamma)
    U^{-1}:     (||U^{-1}||_{s'} - 1) / (|eps| ||a0||_{H1})
    R1:         ||R1|| gamma / |eps|^{(3-tau)/2}
    R2:         ||R2|| gamma / |eps|
    """
    Dm, U = _block_functions(op)
    D, M1, M2 = op.blocks()
    R1 = Dm @ M1 @ Dm
    R2 = Dm @ M2 @ Dm
    w_s = op.weights(weights)
    w_hi = op.weights(NormWeights(weights.sigma, weights.s + (tau - 1.0) / 2.0))
    eps = abs(op.eps)
    a0_h1 = _sampled_h1(op)
    c_d = weighted_operator_norm(Dm, w_hi, w_s) * math.sqrt(gamma)
    u_norm = weighted_operator_norm(U, w_s)  # U^{-1} = U
    c_u = (u_norm - 1.0) / (eps * a0_h1) if eps * a0_h1 > 0 else 0.0
    r1 = weighted_operator_norm(R1, w_hi)
    r2 = weighted_operator_norm(R2, w_hi)
    return {"D_inv_sqrt": c_d, "U_inv": c_u, "U_inv_norm": u_norm,
            "R1": r1 * gamma / eps ** ((3.0 - tau) / 2.0) if eps else 0.0,
            "R2": r2 * gamma / eps if eps else 0.0,
            "R1_norm": r1, "R2_norm": r2, "a0_H1": a0_h1}


def _sampled_h1(op):
    return op.a0_h1_norm()
