"""Range-equation iteration on growing truncations, low-mode continuation in delta,
residuals and the map back to physical scale.

Stage n+1 solves L_omega w - eps P_{n+1} Pi_W Gamma(delta, v1, w) = 0 on
W^(n+1) starting from w_n, with the chord iteration
h <- h - L_{n+1}^{-1} F_{n+1}(w_n + h) and L_{n+1} the linearisation at w_n.
That is the fixed point h = -L_{n+1}^{-1}(r_n + R(h)) written as an update.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .bifurcation import ContractionError, Psi0, V2Sensitivity, solve_Q2
from .linop import LinearizedOperator, MelnikovReport, ResonantLinearization, melnikov_test
from .spectral import (
    NormWeights,
    SpectralField,
    grid_for,
    index_grids,
    minus_laplacian,
    norm_sigma_s,
    project,
    subspace_mask,
)

# sum_{n >= 0} 1/(n^2 + 1)
_GAMMA_SERIES = 0.5 * (1.0 + math.pi / math.tanh(math.pi))


@dataclass(frozen=True)
class SchemeParams:
    N: int = 4
    L0: int = 2
    n_max: int = 4
    J: int = 64
    s: float = 1.0
    gamma: float = 0.05
    tau: float = 1.5
    chi: float = 1.5
    mu: float = 1.0
    sigma_bar: float = None
    gamma0: float = None
    fp_tol: float = 1e-15
    q2_tol: float = 1e-15
    newton_tol: float = 1e-11
    residual_tol: float = 1e-13
    eig_floor: float = 1e-12
    J_margin: int = 8
    gmres_rtol: float = 1e-13
    max_fp_iter: int = 40
    precision: str = "double"

    def __post_init__(self):
        if self.sigma_bar is None:
            object.__setattr__(self, "sigma_bar", math.log(2.0) / self.N)
        if self.gamma0 is None:
            object.__setattr__(self, "gamma0", self.sigma_bar / (2.0 * _GAMMA_SERIES))
        self.validate()

    def validate(self):
        if self.N < 1 or self.L0 < 1 or self.n_max < 0:
            raise ValueError("N, L0 must be >= 1 and n_max >= 0")
        if not 1.0 < self.tau < 2.0:
            raise ValueError("tau must lie in (1, 2)")
        if not 1.0 < self.chi < 2.0:
            raise ValueError("chi must lie in (1, 2)")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.gamma0 * _GAMMA_SERIES > self.sigma_bar / 2.0 + 1e-15:
            raise ValueError("analyticity-loss budget exceeds sigma_bar / 2")
        if self.J <= self.L_max:
            raise ValueError(f"J={self.J} must exceed L_max={self.L_max}")
        if self.precision not in ("double", "extended"):
            raise ValueError("precision must be 'double' or 'extended'")

    @property
    def L_max(self):
        return self.L_n(self.n_max)

    def L_n(self, n):
        return self.L0 * 2 ** n

    def gamma_n(self, n):
        return self.gamma0 / (n * n + 1.0)

    def sigma_n(self, n):
        return self.sigma_bar - sum(self.gamma_n(i) for i in range(n))

    def weights(self, n):
        return NormWeights(self.sigma_n(n), self.s)

    def to_dict(self):
        return asdict(self)


@dataclass
class BranchPoint:
    delta: float
    omega: float
    epsilon: float
    v1: SpectralField
    w: SpectralField
    v2: SpectralField
    residual: float
    accepted: bool
    rejected_stage: int = None
    stages: int = 0
    h: list = field(default_factory=list)
    sigmas: list = field(default_factory=list)
    h_norm_history: list = field(default_factory=list)
    melnikov: list = field(default_factory=list)
    contraction_rates: list = field(default_factory=list)
    stage_residuals: list = field(default_factory=list)
    remainder_constants: list = field(default_factory=list)
    q1_residual: float = 0.0
    note: str = ""

    @property
    def u(self):
        return self.v1 + self.w + self.v2

    def summary(self):
        return {"delta": self.delta, "omega": self.omega, "accepted": self.accepted,
                "residual": self.residual, "stages": self.stages,
                "rejected_stage": self.rejected_stage,
                "h_norms": list(self.h_norm_history)}

    def to_dict(self):
        field_d = lambda f: {"L": f.L, "J": f.J, "coefficients": f.to_pairs()}
        return {"delta": self.delta, "omega": self.omega, "epsilon": self.epsilon,
                "v1": field_d(self.v1), "w": field_d(self.w), "v2": field_d(self.v2),
                "residual": self.residual, "accepted": self.accepted,
                "rejected_stage": self.rejected_stage, "stages": self.stages,
                "h": [field_d(h) for h in self.h], "sigmas": list(self.sigmas),
                "h_norm_history": list(self.h_norm_history),
                "melnikov": [m.to_dict() for m in self.melnikov],
                "contraction_rates": list(self.contraction_rates),
                "stage_residuals": list(self.stage_residuals),
                "remainder_constants": list(self.remainder_constants),
                "q1_residual": self.q1_residual, "note": self.note}

    @classmethod
    def from_dict(cls, d):
        fld = lambda e: SpectralField.from_pairs(e["L"], e["J"], e["coefficients"])
        return cls(d["delta"], d["omega"], d["epsilon"], fld(d["v1"]), fld(d["w"]), fld(d["v2"]),
                   d["residual"], bool(d["accepted"]), d["rejected_stage"], d["stages"],
                   [fld(h) for h in d["h"]], list(d["sigmas"]), list(d["h_norm_history"]),
                   [MelnikovReport.from_dict(m) for m in d["melnikov"]],
                   list(d["contraction_rates"]), list(d["stage_residuals"]),
                   list(d["remainder_constants"]), d["q1_residual"], d["note"])


# --------------------------------------------------------------------------
# residuals


def residual_coefficients(spec, u, omega, delta=None):
    """Galerkin coefficients of omega^2 u_tt - u_xx + f(x,u) (or + eps g when delta is given)."""
    l, j = index_grids(u.L, u.J)
    lin = (j ** 2 - omega ** 2 * l ** 2) * u.c
    grid = grid_for(u.L, u.J, spec.max_power, spec.x_degree)
    vals = grid.synthesize(u.c)
    if delta is None:
        nl = grid.analyze(spec.f_pointwise(grid.x[None, :], vals))
    else:
        nl = spec.epsilon(delta) * grid.analyze(spec.g_pointwise(delta, grid.x[None, :], vals))
    return SpectralField(lin + nl)


def residual_norm(spec, u, omega, weights=NormWeights(0.0, 1.0), delta=None):
    return norm_sigma_s(residual_coefficients(spec, u, omega, delta), weights)


def _gamma_field(spec, delta, u, grid):
    vals = grid.synthesize(u.c)
    return SpectralField(grid.analyze(spec.g_pointwise(delta, grid.x[None, :], vals)))


def p_defect(spec, delta, v1, w, v2, L_n):
    """L_omega w - eps P_n Pi_W Gamma on W^(n)."""
    u = v1 + w + v2
    grid = grid_for(u.L, u.J, spec.max_power, spec.x_degree)
    l, j = index_grids(u.L, u.J)
    omega = spec.omega(delta)
    G = _gamma_field(spec, delta, u, grid)
    out = (omega ** 2 * l ** 2 - j ** 2) * w.c - spec.epsilon(delta) * G.c
    return project(SpectralField(out), "Pn", Ln=L_n)


def q1_defect(spec, delta, v1, w, v2, N):
    """-Delta v1 - Pi_{V1} Gamma."""
    u = v1 + w + v2
    grid = grid_for(u.L, u.J, spec.max_power, spec.x_degree)
    G = _gamma_field(spec, delta, u, grid)
    return project(minus_laplacian(v1) - G, "V1", N=N)


def q2_defect(spec, delta, v1, w, v2, N):
    u = v1 + w + v2
    grid = grid_for(u.L, u.J, spec.max_power, spec.x_degree)
    G = _gamma_field(spec, delta, u, grid)
    return project(minus_laplacian(v2) - G, "V2", N=N)


# --------------------------------------------------------------------------
# the staged iteration


def _fit_truncation(v, params):
    return v.resized(params.L_max, params.J)


def nash_moser_solve(spec, delta, v1, params, raise_on_failure=True):
    """Solve the range equation for w at fixed (delta, v1) stage by stage."""
    v1 = _fit_truncation(v1, params)
    L, J = params.L_max, params.J
    eps = spec.epsilon(delta)
    omega = spec.omega(delta)
    w = SpectralField.zeros(L, J)
    v2, _ = solve_Q2(spec, delta, v1, w, tol=params.q2_tol, N=params.N)
    point = BranchPoint(float(delta), omega, eps, v1, w, v2, 0.0, True)
    if delta == 0.0:
        point.residual = residual_norm(spec, v1 + w + v2, omega, params.weights(0), delta)
        return point
    grid = grid_for(L, J, spec.max_power, spec.x_degree)
    l_idx, j_idx = index_grids(L, J)
    lw = omega ** 2 * l_idx ** 2 - j_idx ** 2
    for n in range(params.n_max):
        stage = n + 1
        L_next = params.L_n(stage)
        wts = params.weights(stage)
        try:
            op = LinearizedOperator(spec, delta, v1, w, L_next, params.N, v2=v2,
                                    q2_tol=params.q2_tol, floor=params.eig_floor,
                                    J_margin=params.J_margin)
        except ResonantLinearization as exc:
            point.accepted, point.rejected_stage = False, stage
            point.note = str(exc)
            break
        report = melnikov_test(delta, spec, op.mean_value(), L_next, params.gamma, params.tau,
                               params.precision)
        point.melnikov.append(report)
        if not report.accepted:
            point.accepted, point.rejected_stage = False, stage
            point.note = f"Melnikov conditions fail at stage {stage}"
            break

        def F(wf, v2_start):
            v2f, _ = solve_Q2(spec, delta, v1, wf, tol=params.q2_tol, N=params.N, start=v2_start)
            G = _gamma_field(spec, delta, v1 + wf + v2f, grid)
            full = SpectralField(lw * wf.c - eps * G.c)
            return op.to_flat(full), v2f

        h = np.zeros(op.size, dtype=complex)
        r0, v2_cur = F(w, v2)
        res, prev_step, rate = r0, None, 0.0
        for it in range(params.max_fp_iter):
            step = op.solve(res, rtol=params.gmres_rtol)
            h = h - step
            sn = norm_sigma_s(op.to_field(step), wts)
            res, v2_cur = F(w + op.to_field(h), v2_cur)
            hn = norm_sigma_s(op.to_field(h), wts)
            if prev_step:
                r = sn / prev_step
                if sn > 1e3 * params.fp_tol * (1.0 + hn):
                    rate = max(rate, r)
                if r >= 1.0 and sn > 1e3 * params.fp_tol * (1.0 + hn):
                    msg = (f"range-equation contraction fails at stage {stage} (ratio {r:.3g}): "
                           f"|eps|/gamma = {abs(eps) / params.gamma:.3g} too large for L_n = {L_next}")
                    if raise_on_failure:
                        raise ContractionError(msg)
                    point.accepted, point.rejected_stage, point.note = False, stage, msg
                    break
            if sn <= params.fp_tol * (1.0 + hn) or (prev_step is not None and sn >= prev_step
                                                    and sn < 1e-12 * (1.0 + hn)):
                break
            prev_step = sn
        else:
            msg = f"range-equation iteration did not settle at stage {stage}"
            if raise_on_failure:
                raise ContractionError(msg)
            point.accepted, point.rejected_stage, point.note = False, stage, msg
        if not point.accepted:
            break
        hf = op.to_field(h)
        # quadratic remainder R(h) = F(w + h) - F(w) - L h, measured at the solution
        lin = op.apply(h)
        rem = norm_sigma_s(op.to_field(res - r0 - lin), wts)
        hn = norm_sigma_s(hf, wts)
        r0n = norm_sigma_s(op.to_field(r0), wts)
        # only resolvable when the quadratic term clears the roundoff of F
        resolvable = abs(eps) * hn ** 2 > 1e-10 * max(r0n, 1e-300)
        point.remainder_constants.append(rem / (abs(eps) * hn ** 2) if resolvable else None)
        w = w + hf
        v2 = v2_cur
        point.h.append(hf)
        point.sigmas.append(params.sigma_n(stage))
        point.h_norm_history.append(hn)
        point.contraction_rates.append(rate)
        point.stage_residuals.append(norm_sigma_s(op.to_field(res), wts))
        point.stages = stage
        if residual_norm(spec, v1 + w + v2, omega, wts, delta) <= params.residual_tol:
            break
    point.w, point.v2 = w, v2
    point.residual = residual_norm(spec, v1 + w + v2, omega, params.weights(point.stages), delta)
    return point


# --------------------------------------------------------------------------
# (Q1) continuation


class _V1Coords:
    def __init__(self, N, L, J):
        self.N, self.L, self.J = N, L, J

    def field(self, x):
        c = x[:self.N] + 1j * x[self.N:]
        return SpectralField.from_modes(self.L, self.J, {(l, l): c[l - 1] for l in range(1, self.N + 1)})

    def coords(self, v):
        c = np.array([v.coef(l, l) for l in range(1, self.N + 1)])
        return np.concatenate([c.real, c.imag])

    def tangent(self, x):
        l = np.arange(1, self.N + 1)
        return np.concatenate([-l * x[self.N:], l * x[:self.N]])


def _q1_jacobian(spec, delta, point, params, cs):
    """Jacobian of v1 -> -Delta v1 - Pi_{V1} Gamma with w frozen, in paired coordinates."""
    sens = V2Sensitivity(spec, delta, point.u, params.N)
    dim = 2 * params.N
    Jm = np.zeros((dim, dim))
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = 1.0
        h = cs.field(e)
        k = h.c + sens.apply(h.c)
        Hh = project(minus_laplacian(h) - SpectralField(sens.mult.apply(k)), "V1", N=params.N)
        Jm[:, i] = 2.0 * math.pi ** 2 * cs.coords(Hh)
    return 0.5 * (Jm + Jm.T)


def solve_Q1_point(spec, delta, v1_guess, v1_ref, params, max_iter=30):
    """Bordered chord-Newton on the low modes at fixed delta."""
    cs = _V1Coords(params.N, params.L_max, params.J)
    x = cs.coords(_fit_truncation(v1_guess, params))
    x_ref = cs.coords(_fit_truncation(v1_ref, params))
    tau = cs.tangent(x_ref)
    Jm = None
    best = None
    for it in range(max_iter):
        v1 = cs.field(x)
        point = nash_moser_solve(spec, delta, v1, params, raise_on_failure=False)
        R = q1_defect(spec, delta, point.v1, point.w, point.v2, params.N)
        r = 2.0 * math.pi ** 2 * cs.coords(R)
        rn = float(np.linalg.norm(r))
        point.q1_residual = rn
        if best is None or rn < best[0]:
            best = (rn, point)
        if rn < params.newton_tol:
            return point
        if Jm is None or it % 4 == 3:
            Jm = _q1_jacobian(spec, delta, point, params, cs)
        n = len(x)
        A = np.zeros((n + 1, n + 1))
        A[:n, :n], A[:n, n], A[n, :n] = Jm, tau, tau
        rhs = np.concatenate([-r, [-np.dot(tau, x - x_ref)]])
        x = x + np.linalg.solve(A, rhs)[:n]
        if not np.all(np.isfinite(x)) or rn > 1e6:
            break
    raise ContractionError(f"(Q1) Newton did not converge at delta={delta:g} "
                           f"(best residual {best[0]:.3e})")


def continue_branch_Q1(spec, circle, delta_grid, params):
    """Predictor-corrector continuation from the circle representative along delta."""
    v_ref = circle.representative
    if not isinstance(v_ref, SpectralField):
        raise TypeError("continuation needs a V1 representative (use the Psi0 circle)")
    v_ref = project(_fit_truncation(v_ref, params), "V1", N=params.N)
    points = []
    history = []
    for delta in sorted(float(d) for d in delta_grid):
        if len(history) >= 2:
            (d0, x0), (d1, x1) = history[-2], history[-1]
            guess = x1 + (x1 - x0) * ((delta - d1) / (d1 - d0)) if d1 != d0 else x1
        elif history:
            guess = history[-1][1]
        else:
            guess = v_ref
        try:
            pt = solve_Q1_point(spec, delta, guess, v_ref, params)
        except ContractionError as exc:
            if points:
                points[-1].note = (points[-1].note + f"; branch terminated after delta={points[-1].delta:g}: {exc}").lstrip("; ")
            break
        points.append(pt)
        history.append((delta, pt.v1))
    return points


# --------------------------------------------------------------------------
# physical scale


@dataclass
class PhysicalSolution:
    u_tilde: SpectralField
    omega: float
    t: np.ndarray
    x: np.ndarray
    samples: np.ndarray
    rescaled_residual: float      # eps-normalised residual norm of the rescaled equation
    physical_residual: float      # residual norm of the original equation, same truncation
    grid_physical_residual: float  # Galerkin norm of the grid-evaluated original residual
    ratio: float


def rescale_solution(point, spec, weights=NormWeights(0.0, 1.0), nt=None, nx=None):
    """u~ = delta (v1 + w + v2), frequency omega, and samples of u~(omega t, x)."""
    delta, omega = point.delta, point.omega
    u = point.u
    ut = u * delta
    L, J = u.L, u.J
    if delta == 0.0:
        z = np.zeros((nt or 8, nx or 8))
        return PhysicalSolution(ut, omega, np.zeros(nt or 8), np.zeros(nx or 8), z, 0.0, 0.0, 0.0, 0.0)
    eps = spec.epsilon(delta)
    resc = residual_coefficients(spec, u, omega, delta)
    rescaled = norm_sigma_s(resc, weights) / abs(eps)
    phys = residual_coefficients(spec, ut, omega, None)
    physical = norm_sigma_s(phys, weights)
    # direct evaluation: u(t,x) = u~(omega t, x) on a grid in physical time, then
    # u_tt - u_xx + f, analysed back in the rescaled time variable
    grid = grid_for(L, J, spec.max_power, spec.x_degree)
    vals = grid.synthesize(ut.c)
    l, j = index_grids(L, J)
    utt = grid.synthesize((-(omega * l) ** 2 * ut.c))   # d^2/dt^2 of u~(omega t, x)
    uxx = grid.synthesize((-(j ** 2)) * ut.c)
    pointwise = utt - uxx + spec.f_pointwise(grid.x[None, :], vals)
    grid_res = norm_sigma_s(SpectralField(grid.analyze(pointwise)), weights)
    nt = nt or 64
    nx = nx or 33
    T = 2.0 * math.pi / omega
    t = np.linspace(0.0, T, nt, endpoint=False)
    x = np.linspace(0.0, math.pi, nx)
    E = np.exp(1j * np.outer(omega * t, np.arange(-L, L + 1)))
    S = np.sin(np.outer(np.arange(1, J + 1), x))
    samples = (E @ ut.c @ S).real
    ratio = physical / (delta ** spec.p * rescaled) if rescaled > 0 else 0.0
    return PhysicalSolution(ut, omega, t, x, samples, rescaled, physical, grid_res, ratio)


def psi0_circle(spec, params, seeds=None, newton_tol=1e-11, gap_threshold=0.1, seed=0):
    """Critical circle of Psi0 on the working V-truncation."""
    from .bifurcation import default_seeds, find_critical_circle, refine_circle
    coarse_L = min(params.L_max, max(4 * params.N, 16))
    F = Psi0(spec, params.N, L=coarse_L, q2_tol=params.q2_tol)
    circle = find_critical_circle(F, seeds or default_seeds(F, 3, seed=seed), newton_tol, gap_threshold)
    if coarse_L == params.L_max:
        return circle
    fine = Psi0(spec, params.N, L=params.L_max, q2_tol=params.q2_tol)
    return refine_circle(fine, circle, newton_tol, gap_threshold)
