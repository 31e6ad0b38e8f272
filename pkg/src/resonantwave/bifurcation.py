"""Zeroth-order variational problem on the resonant subspace V.

Holds the functional Phi0 and its reduction Psi0 to the low modes V1, the
contraction for the high V-modes, loop parametrisations of V together with the
one-dimensional functionals used for cubic and quadratic nonlinearities, and a
search for nondegenerate circles of critical points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .spectral import (
    MultiplicationOperator,
    NormWeights,
    SpectralError,
    SpectralField,
    TrigPolynomial,
    apply_L_inverse_W,
    grid_for,
    h1_squared,
    index_grids,
    inv_laplacian_V,
    minus_laplacian,
    mode_list,
    norm_sigma_s,
    project,
    subspace_mask,
)


class ContractionError(RuntimeError):
    pass


class NoCriticalCircle(RuntimeError):
    pass


class DegenerateCircle(RuntimeError):
    def __init__(self, gap, message=None):
        super().__init__(message or f"degenerate circle: nondegeneracy gap {gap:.3e}")
        self.gap = gap


class MeanValueViolation(ValueError):
    pass


# --------------------------------------------------------------------------
# Phi0 on V


@dataclass
class Phi0Result:
    value: float
    gradient: SpectralField
    hessian_action: object


def _leading_grid(v, spec, extra_power=1):
    return grid_for(v.L, v.J, spec.p + extra_power, spec.leading.degree)


def phi0(v, spec):
    """Phi0(v) = |v|_{H1}^2/2 - int s* a_p v^(p+1)/(p+1).

    The sign selector is folded into the leading coefficient so that the
    Euler-Lagrange equation is the V-part of the rescaled equation at delta = 0.
    """
    if np.any(v.c[~subspace_mask(v.L, v.J, "V")] != 0):
        raise SpectralError("phi0 expects a field supported on V")
    p, a = spec.p, spec.leading
    grid = _leading_grid(v, spec)
    vals = grid.synthesize(v.c)
    ax = spec.s_star * a(grid.x)[None, :]
    value = 0.5 * h1_squared(v) - grid.integrate(ax * vals ** (p + 1)) / (p + 1)
    force = SpectralField(grid.analyze(ax * vals ** p))
    gradient = project(minus_laplacian(v) - force, "V")
    mult = MultiplicationOperator(grid, p * ax * vals ** (p - 1))

    def hessian_action(h):
        return project(minus_laplacian(h) - SpectralField(mult.apply(h.c)), "V")

    return Phi0Result(value, gradient, hessian_action)


# --------------------------------------------------------------------------
# (Q2): high V-modes by contraction


def _q2_map(spec, delta, base, v2, N, grid):
    vals = grid.synthesize((base + v2).c)
    gv = spec.g_pointwise(delta, grid.x[None, :], vals)
    return inv_laplacian_V(project(SpectralField(grid.analyze(gv)), "V2", N=N))


def solve_Q2(spec, delta, v1, w, tol=1e-14, N=None, weights=NormWeights(0.0, 1.0),
             start=None, max_iter=200):
    """Fixed point v2 = (-Delta)^{-1} Pi_{V2} g(delta, x, v1 + w + v2).

    Returns (v2, contraction_rate) where the rate is the largest observed
    ratio of successive iterate differences.
    """
    if N is None:
        raise SpectralError("solve_Q2 needs the V1 cutoff N")
    base = v1 + w
    grid = grid_for(base.L, base.J, spec.max_power, spec.x_degree)
    v2 = start if start is not None else SpectralField.zeros(base.L, base.J)
    rate, prev, growth = 0.0, None, 0
    for _ in range(max_iter):
        nxt = _q2_map(spec, delta, base, v2, N, grid)
        diff = norm_sigma_s(nxt - v2, weights)
        v2 = nxt
        if prev is not None and prev > 0:
            r = diff / prev
            if diff > 1e3 * tol:
                rate = max(rate, r)
            growth = growth + 1 if r > 1.0 else 0
            if growth >= 3:
                raise ContractionError(
                    f"(Q2) map is not contracting (ratio {r:.3g}); the V2 smallness "
                    f"condition fails: increase N (now {N}) or reduce |v1|, |w|, delta")
        if diff <= tol:
            return v2, rate
        prev = diff
    raise ContractionError(f"(Q2) iteration did not reach tol {tol:g} in {max_iter} steps")


class V2Sensitivity:
    """Derivative of v2(delta, v1, w) in its field arguments at a fixed point.

    With T = (-Delta)^{-1} Pi_{V2} (a .) and a = d_u g evaluated at
    u = v1 + w + v2, the derivative is h -> (I - T|_{V2})^{-1} T h.
    """

    def __init__(self, spec, delta, u, N, grid=None):
        self.L, self.J, self.N = u.L, u.J, N
        self.grid = grid or grid_for(u.L, u.J, spec.max_power, spec.x_degree)
        vals = self.grid.synthesize(u.c)
        self.a_vals = spec.g_pointwise(delta, self.grid.x[None, :], vals, order=1)
        self.mult = MultiplicationOperator(self.grid, self.a_vals)
        self.modes = mode_list(u.L, u.J, "V2", N=N)
        self.flat = (self.modes[:, 0] + u.L) * u.J + self.modes[:, 1] - 1
        self.inv_eig = 1.0 / (2.0 * self.modes[:, 0] ** 2)
        if len(self.modes):
            T22 = self.inv_eig[:, None] * self.mult.dense(self.modes, self.modes)
            self.resolvent = np.linalg.inv(np.eye(len(self.modes)) - T22)
        else:
            self.resolvent = np.zeros((0, 0))

    def apply(self, c):
        """coefficient array h (complex, any support) -> array of dv2[h]."""
        prod = self.mult.apply(c).ravel()[self.flat]
        k = self.resolvent @ (self.inv_eig * prod)
        out = np.zeros((2 * self.L + 1) * self.J, dtype=complex)
        out[self.flat] = k
        return out.reshape(2 * self.L + 1, self.J)

    def dense_from(self, cols):
        """matrix of dv2 restricted to inputs at modes ``cols`` (V2 rows)."""
        T2c = self.inv_eig[:, None] * self.mult.dense(self.modes, cols)
        return self.resolvent @ T2c


# --------------------------------------------------------------------------
# Psi0 on V1


def reduced_psi0(v1, spec, N, tol=1e-14):
    """Psi0(v1) = Phi0(v1 + v2(0, v1, 0)) and its gradient on V1."""
    zero = SpectralField.zeros(v1.L, v1.J)
    v2, _ = solve_Q2(spec, 0.0, v1, zero, tol=tol, N=N)
    res = phi0(v1 + v2, spec)
    # the (Q2) equation makes the V2 part of the gradient vanish
    grad = project(res.gradient, "V1", N=N)
    return res.value, grad


# --------------------------------------------------------------------------
# loops eta(t) and the map to V


class LoopFunction:
    """eta(t) = sum_{k=1}^{L} a_k cos(kt) + b_k sin(kt); zero mean."""

    __slots__ = ("a", "b")

    def __init__(self, a, b):
        a = np.array(a, dtype=float)
        b = np.array(b, dtype=float)
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("cos and sin coefficient arrays must match")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    def __setattr__(self, name, value):
        raise AttributeError("LoopFunction is immutable")

    @property
    def L(self):
        return len(self.a)

    @classmethod
    def from_coords(cls, x):
        n = len(x) // 2
        return cls(x[:n], x[n:])

    @property
    def coords(self):
        return np.concatenate([self.a, self.b])

    def values(self, nt):
        t = 2.0 * math.pi * np.arange(nt) / nt
        k = np.arange(1, self.L + 1)
        return np.cos(np.outer(t, k)) @ self.a + np.sin(np.outer(t, k)) @ self.b

    def derivative(self):
        k = np.arange(1, self.L + 1)
        return LoopFunction(k * self.b, -k * self.a)

    def shifted(self, theta):
        """eta(t - theta)."""
        k = np.arange(1, self.L + 1)
        c, s = np.cos(k * theta), np.sin(k * theta)
        return LoopFunction(self.a * c - self.b * s, self.a * s + self.b * c)

    def __add__(self, other):
        return LoopFunction(self.a + other.a, self.b + other.b)

    def __sub__(self, other):
        return LoopFunction(self.a - other.a, self.b - other.b)

    def __mul__(self, s):
        return LoopFunction(self.a * s, self.b * s)

    __rmul__ = __mul__

    def l2_squared(self):
        return math.pi * float(np.sum(self.a ** 2 + self.b ** 2))

    def inner(self, other):
        return math.pi * float(np.dot(self.a, other.a) + np.dot(self.b, other.b))

    def to_V(self, L=None, J=None):
        """v(t,x) = eta(t+x) - eta(t-x) as a V-field."""
        L = L or self.L
        J = J or L
        if L < self.L or J < self.L:
            raise SpectralError("truncation too small for loop")
        modes = {(k, k): complex(self.b[k - 1], self.a[k - 1]) for k in range(1, self.L + 1)}
        return SpectralField.from_modes(L, J, modes)

    @classmethod
    def from_V(cls, v, L=None):
        L = L or v.L
        a = np.zeros(L)
        b = np.zeros(L)
        for k in range(1, min(L, v.L, v.J) + 1):
            c = v.coef(k, k)
            a[k - 1], b[k - 1] = c.imag, c.real
        return cls(a, b)

    def __repr__(self):
        return f"LoopFunction(L={self.L})"


def _loop_grid_size(L, power):
    return 2 * (power * L + L) + 2


def _loop_galerkin(vals, L):
    """cos/sin coefficients (k = 1..L) of grid samples."""
    nt = len(vals)
    hat = np.fft.rfft(vals) / nt
    a = 2.0 * hat[1:L + 1].real
    b = -2.0 * hat[1:L + 1].imag
    return LoopFunction(a, b)


def embed_Hn(v, n):
    """(l, |l|) -> (nl, n|l|); the field keeps its truncation."""
    if n < 1:
        raise ValueError("n must be >= 1")
    on_v = subspace_mask(v.L, v.J, "V")
    if np.any(v.c[~on_v] != 0):
        raise SpectralError("embed_Hn expects a field supported on V")
    l, _ = index_grids(v.L, v.J)
    support = np.abs(l[(on_v) & (v.c != 0)])
    top = int(support.max()) if support.size else 0
    if n * top > min(v.L, v.J):
        raise SpectralError(f"H_n overflow: need L, J >= {n * top}")
    out = np.zeros_like(v.c)
    for k in range(1, top + 1):
        out[n * k + v.L, n * k - 1] = v.c[k + v.L, k - 1]
        out[-n * k + v.L, n * k - 1] = v.c[-k + v.L, k - 1]
    return SpectralField(out)


# --------------------------------------------------------------------------
# one-dimensional functionals


@dataclass
class LoopFunctionalResult:
    value: float
    gradient: LoopFunction
    hessian_action: object


def _psi_cubic_core(eta):
    L = eta.L
    nt = _loop_grid_size(L, 3)
    e = eta.values(nt)
    mean = lambda f: 2.0 * math.pi * float(np.mean(f))
    m2 = mean(e * e)
    de = eta.derivative().values(nt)
    value = 0.5 * mean(de * de) - 0.25 * mean(e ** 4) - 3.0 / (8.0 * math.pi) * m2 ** 2
    k = np.arange(1, L + 1)
    lap = LoopFunction(k ** 2 * eta.a, k ** 2 * eta.b)
    grad = lap - _loop_galerkin(e ** 3, L) - eta * (3.0 / (2.0 * math.pi) * m2)

    def hess(h):
        hv = h.values(nt)
        lap_h = LoopFunction(k ** 2 * h.a, k ** 2 * h.b)
        return (lap_h - _loop_galerkin(3.0 * e * e * hv, L)
                - h * (3.0 / (2.0 * math.pi) * m2)
                - eta * (3.0 / math.pi * mean(e * hv)))

    return LoopFunctionalResult(value, grad, hess)


@dataclass
class PsiCubicResult:
    psi_value: float
    Rn_value: float
    gradients: tuple
    hessian_actions: tuple


class _RnTerm:
    """R_n(eta) = (1/8 pi) int b(x) (H_n v)^4 with v the V-field of eta."""

    def __init__(self, n, a3, L):
        mean = a3.mean()
        if abs(mean) < 1e-14:
            raise MeanValueViolation("mean-value hypothesis violated: <a_3> = 0")
        self.b = a3.scaled(1.0 / mean) + TrigPolynomial(-1.0)
        self.trivial = all(abs(v) < 1e-15 for v in (self.b.c0,) + self.b.cos_coeffs + self.b.sin_coeffs)
        self.n, self.L = n, L
        self.size = n * L
        self.grid = grid_for(self.size, self.size, 4, self.b.degree)
        self.bx = self.b(self.grid.x)[None, :]

    def _field(self, eta):
        return embed_Hn(eta.to_V(self.size, self.size), self.n)

    def _to_loop(self, F):
        # <F, H_n v(h)> in L^2(Omega) written as int_T G h
        a = np.zeros(self.L)
        b = np.zeros(self.L)
        for k in range(1, self.L + 1):
            c = F.coef(self.n * k, self.n * k)
            # pairing 2 pi^2 Re(F conj(c_h)); c_h = b + i a; divide by pi for the loop pairing
            a[k - 1] = 2.0 * math.pi * c.imag
            b[k - 1] = 2.0 * math.pi * c.real
        return LoopFunction(a, b)

    def evaluate(self, eta):
        if self.trivial:
            z = LoopFunction(np.zeros(self.L), np.zeros(self.L))
            return 0.0, z, (lambda h: LoopFunction(np.zeros(self.L), np.zeros(self.L)))
        v = self._field(eta)
        vals = self.grid.synthesize(v.c)
        value = self.grid.integrate(self.bx * vals ** 4) / (8.0 * math.pi)
        F = SpectralField(self.grid.analyze(self.bx * vals ** 3 / (2.0 * math.pi)))
        grad = self._to_loop(F)
        mult = MultiplicationOperator(self.grid, 3.0 * self.bx * vals ** 2 / (2.0 * math.pi))

        def hess(h):
            hv = self._field(h)
            return self._to_loop(SpectralField(mult.apply(hv.c)))

        return value, grad, hess


def psi_cubic(eta, n, a3):
    """Psi(eta) and the remainder R_n for a cubic leading term a3(x) u^3."""
    if not isinstance(a3, TrigPolynomial):
        a3 = TrigPolynomial.from_dict(a3)
    core = _psi_cubic_core(eta)
    rn = _RnTerm(n, a3, eta.L)
    r_val, r_grad, r_hess = rn.evaluate(eta)
    return PsiCubicResult(core.value, r_val, (core.gradient, r_grad), (core.hessian_action, r_hess))


def psi_quadratic(eta):
    """Psi(eta) = 1/2 int eta'^2 - 1/4 (int eta^2)^2."""
    L = eta.L
    m2 = eta.l2_squared()
    k = np.arange(1, L + 1)
    value = 0.5 * eta.derivative().l2_squared() - 0.25 * m2 ** 2
    grad = LoopFunction(k ** 2 * eta.a, k ** 2 * eta.b) - eta * m2

    def hess(h):
        return LoopFunction(k ** 2 * h.a, k ** 2 * h.b) - h * m2 - eta * (2.0 * eta.inner(h))

    return LoopFunctionalResult(value, grad, hess)


def psi_quadratic_el_residual(eta):
    """eta'' + (int eta^2) eta as a loop function."""
    k = np.arange(1, eta.L + 1)
    return LoopFunction(-k ** 2 * eta.a, -k ** 2 * eta.b) + eta * eta.l2_squared()


def phi0_quadratic(v, a2, J_aux=512):
    """|v|_{H1}^2/2 + (a2^2/2) int v^2 L^{-1} Pi_W v^2.

    v^2 has infinitely many sine modes in x; they are truncated at J_aux.
    """
    L2 = 2 * v.L
    big = v.resized(L2, J_aux)
    grid = grid_for(L2, J_aux, 2)
    sq = SpectralField(grid.analyze(grid.synthesize(big.c) ** 2))
    sq_w = project(sq, "W")
    inner = math.pi ** 2 * float(np.sum((sq_w.c * np.conj(apply_L_inverse_W(sq_w).c)).real))
    return 0.5 * h1_squared(v) + 0.5 * a2 ** 2 * inner


# --------------------------------------------------------------------------
# functionals in real coordinates for the circle search


class _CoordFunctional:
    """Interface: value, gradient, hessian (dense), tangent, precond, representative."""

    dim = 0

    def value_grad(self, x):
        raise NotImplementedError

    def value(self, x):
        return self.value_grad(x)[0]

    def gradient(self, x):
        return self.value_grad(x)[1]

    def hessian_raw(self, x):
        """Hessian columns from the action, before symmetrisation."""
        raise NotImplementedError

    def hessian(self, x):
        H = self.hessian_raw(x)
        return 0.5 * (H + H.T)


class Psi0(_CoordFunctional):
    """Psi0 on V1 = span{(l, l): 1 <= l <= N}; coordinates (Re c_l, Im c_l)."""

    def __init__(self, spec, N, L=None, q2_tol=1e-14):
        self.spec, self.N = spec, N
        self.L = L or max(4 * N, 16)
        self.dim = 2 * N
        self.q2_tol = q2_tol
        self.precond = np.concatenate([4.0 * math.pi ** 2 * np.arange(1, N + 1) ** 2] * 2)

    def field(self, x):
        c = x[:self.N] + 1j * x[self.N:]
        return SpectralField.from_modes(self.L, self.L, {(l, l): c[l - 1] for l in range(1, self.N + 1)})

    def coords(self, v1):
        c = np.array([v1.coef(l, l) for l in range(1, self.N + 1)])
        return np.concatenate([c.real, c.imag])

    def _pair_coords(self, G):
        # <G, h> = 2 pi^2 sum Re(G_l conj h_l)
        return 2.0 * math.pi ** 2 * self.coords(G)

    def value_grad(self, x):
        val, grad = reduced_psi0(self.field(x), self.spec, self.N, self.q2_tol)
        return val, self._pair_coords(grad)

    def hessian_raw(self, x):
        v1 = self.field(x)
        zero = SpectralField.zeros(self.L, self.L)
        v2, _ = solve_Q2(self.spec, 0.0, v1, zero, tol=self.q2_tol, N=self.N)
        sens = V2Sensitivity(self.spec, 0.0, v1 + v2, self.N)
        H = np.zeros((self.dim, self.dim))
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = 1.0
            h = self.field(e)
            k = h.c + sens.apply(h.c)
            Hh = project(minus_laplacian(h) - SpectralField(sens.mult.apply(k)), "V1", N=self.N)
            H[:, i] = self._pair_coords(Hh)
        return H

    def tangent(self, x):
        l = np.arange(1, self.N + 1)
        re, im = x[:self.N], x[self.N:]
        return np.concatenate([-l * im, l * re])

    def representative(self, x):
        return self.field(x)

    def shift(self, x, theta):
        l = np.arange(1, self.N + 1)
        c = (x[:self.N] + 1j * x[self.N:]) * np.exp(-1j * l * theta)
        return np.concatenate([c.real, c.imag])


class _LoopCoordFunctional(_CoordFunctional):
    def __init__(self, L):
        self.L = L
        self.dim = 2 * L
        self.precond = np.concatenate([math.pi * np.arange(1, L + 1) ** 2] * 2)

    def _loop_parts(self, eta):
        raise NotImplementedError

    def value_grad(self, x):
        val, grad, _ = self._loop_parts(LoopFunction.from_coords(x))
        return val, math.pi * grad.coords

    def hessian_raw(self, x):
        _, _, hess = self._loop_parts(LoopFunction.from_coords(x))
        H = np.zeros((self.dim, self.dim))
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = 1.0
            H[:, i] = math.pi * hess(LoopFunction.from_coords(e)).coords
        return H

    def tangent(self, x):
        return LoopFunction.from_coords(x).derivative().coords

    def representative(self, x):
        return LoopFunction.from_coords(x)

    def shift(self, x, theta):
        return LoopFunction.from_coords(x).shifted(theta).coords


class PsiCubic(_LoopCoordFunctional):
    """Psi + R_n on loops (cubic leading term)."""

    def __init__(self, n=1, a3=TrigPolynomial(1.0), L=24):
        super().__init__(L)
        self.n = n
        self.a3 = a3 if isinstance(a3, TrigPolynomial) else TrigPolynomial.from_dict(a3)
        self._rn = _RnTerm(n, self.a3, L)

    def _loop_parts(self, eta):
        core = _psi_cubic_core(eta)
        rv, rg, rh = self._rn.evaluate(eta)
        return core.value + rv, core.gradient + rg, (lambda h: core.hessian_action(h) + rh(h))


class PsiQuadratic(_LoopCoordFunctional):
    """Reduced functional for a quadratic leading term; independent of n, a2."""

    def __init__(self, n=1, a2=1.0, L=8):
        super().__init__(L)
        self.n, self.a2 = n, a2

    def _loop_parts(self, eta):
        r = psi_quadratic(eta)
        return r.value, r.gradient, r.hessian_action


@dataclass
class CriticalCircle:
    representative: object
    value: float
    kernel_dim_mod_translation: int
    second_eigenvalue_gap: float
    coords: np.ndarray = field(repr=False)
    gradient_norm: float = 0.0
    hessian_eigenvalues: np.ndarray = field(default=None, repr=False)
    seed_index: int = 0

    def to_dict(self):
        rep = self.representative
        if isinstance(rep, SpectralField):
            rep_d = {"kind": "V1", "L": rep.L, "J": rep.J, "coefficients": rep.to_pairs()}
        else:
            rep_d = {"kind": "loop", "cos": rep.a.tolist(), "sin": rep.b.tolist()}
        return {"representative": rep_d, "value": self.value,
                "kernel_dim_mod_translation": self.kernel_dim_mod_translation,
                "second_eigenvalue_gap": self.second_eigenvalue_gap,
                "gradient_norm": self.gradient_norm,
                "hessian_eigenvalues": [float(v) for v in self.hessian_eigenvalues],
                "seed_index": self.seed_index}


def _ray_maximum(F, x, r_hi=1e6, r_lo=1e-2):
    """argmax over r > 0 of F(r x); returns None when no interior max exists."""
    def phi(r):
        try:
            return F.value(r * x)
        except (ContractionError, FloatingPointError, OverflowError):
            return -math.inf

    r, prev_r, prev = r_lo, 0.0, 0.0
    cur = phi(r)
    while r < r_hi:
        nxt_r = 2.0 * r
        nxt = phi(nxt_r)
        if nxt < cur and cur > prev:
            res = minimize_scalar(lambda s: -phi(s), bracket=(prev_r, r, nxt_r),
                                  tol=1e-6)
            return float(res.x)
        prev_r, prev, r, cur = r, cur, nxt_r, nxt
    return None


def _bordered_newton(F, y, newton_tol, max_iter=40):
    for _ in range(max_iter):
        val, g = F.value_grad(y)
        gn = float(np.linalg.norm(g))
        if gn < newton_tol:
            return y, gn
        H = F.hessian(y)
        tau = F.tangent(y)
        n = F.dim
        A = np.zeros((n + 1, n + 1))
        A[:n, :n] = H
        A[:n, n] = tau
        A[n, :n] = tau
        rhs = np.concatenate([-g, [0.0]])
        step = np.linalg.lstsq(A, rhs, rcond=None)[0][:n]
        # damp when the step does not reduce the gradient
        t = 1.0
        for _ in range(30):
            cand = y + t * step
            try:
                gc = float(np.linalg.norm(F.gradient(cand)))
            except ContractionError:
                gc = math.inf
            if gc < gn or t < 1e-6:
                break
            t *= 0.5
        y = cand
    val, g = F.value_grad(y)
    return y, float(np.linalg.norm(g))


def _nehari_descent(F, x, iters=200, tol=1e-3):
    x = x / np.linalg.norm(x)
    r = _ray_maximum(F, x)
    if r is None:
        return None
    J = F.value(r * x)
    for _ in range(iters):
        g = r * F.gradient(r * x)
        d = -g / F.precond
        d -= np.dot(d, x) * x
        if np.sqrt(np.dot(g, g / F.precond)) < tol * max(1.0, abs(J)):
            break
        step = 1.0 / max(r, 1e-12)
        moved = False
        for _ in range(40):
            xn = x + step * d
            xn /= np.linalg.norm(xn)
            rn = _ray_maximum(F, xn)
            if rn is not None:
                Jn = F.value(rn * xn)
                if Jn < J - 1e-4 * step * np.dot(g, -d):
                    x, r, J, moved = xn, rn, Jn, True
                    break
            step *= 0.5
        if not moved:
            break
    return r * x


def certify_circle(F, y, gradient_norm, gap_threshold, seed_index=0):
    """Spectrum of the Hessian orthogonal to the translation direction."""
    H = F.hessian(y)
    tau = F.tangent(y)
    tau = tau / np.linalg.norm(tau)
    Q = np.linalg.svd(np.eye(F.dim) - np.outer(tau, tau))[0][:, :F.dim - 1]
    eig = np.linalg.eigvalsh(Q.T @ H @ Q)
    gap = float(np.min(np.abs(eig)))
    return CriticalCircle(F.representative(y), F.value(y), int(np.sum(np.abs(eig) < gap_threshold)),
                          gap, y, gradient_norm, eig, seed_index)


def refine_circle(F, circle, newton_tol=1e-10, gap_threshold=0.1):
    """Polish a circle found on a coarser truncation with bordered Newton on F."""
    y, gn = _bordered_newton(F, np.asarray(circle.coords, dtype=float), newton_tol)
    if gn >= newton_tol:
        raise NoCriticalCircle(f"refinement stalled at gradient norm {gn:.3e}")
    out = certify_circle(F, y, gn, gap_threshold, circle.seed_index)
    if out.second_eigenvalue_gap < gap_threshold:
        raise DegenerateCircle(out.second_eigenvalue_gap)
    return out


def find_critical_circle(functional, seeds, newton_tol=1e-10, gap_threshold=0.1,
                         raise_on_degenerate=True):
    """Ground-state circle from Nehari scaling, descent, and bordered Newton."""
    if not seeds:
        raise ValueError("at least one seed is required")
    F = functional
    found, degenerate = [], []
    for idx, seed in enumerate(seeds):
        x0 = np.asarray(getattr(seed, "coords", seed), dtype=float)
        if isinstance(seed, SpectralField) and isinstance(F, Psi0):
            x0 = F.coords(seed)
        if np.linalg.norm(x0) == 0:
            continue
        y = _nehari_descent(F, x0)
        if y is None:
            continue
        y, gn = _bordered_newton(F, y, newton_tol)
        if gn >= newton_tol or np.linalg.norm(y) < 1e-8:
            continue
        circle = certify_circle(F, y, gn, gap_threshold, idx)
        gap = circle.second_eigenvalue_gap
        (found if gap >= gap_threshold else degenerate).append(circle)
    if found:
        return min(found, key=lambda c: (round(c.value, 10), c.seed_index))
    if degenerate and raise_on_degenerate:
        best = min(degenerate, key=lambda c: (round(c.value, 10), c.seed_index))
        raise DegenerateCircle(best.second_eigenvalue_gap)
    if degenerate:
        return min(degenerate, key=lambda c: (round(c.value, 10), c.seed_index))
    raise NoCriticalCircle("no critical circle found: no seed reached a nontrivial critical point")


def default_seeds(functional, count=4, seed=0):
    """First-harmonic seed plus deterministic random seeds."""
    rng = np.random.default_rng(seed)
    first = np.zeros(functional.dim)
    half = functional.dim // 2
    first[0] = 1.0 if isinstance(functional, Psi0) else 0.0
    if not isinstance(functional, Psi0):
        first[half] = 1.0
    seeds = [first]
    decay = np.exp(-np.arange(half))
    for _ in range(count - 1):
        seeds.append(rng.normal(size=functional.dim) * np.concatenate([decay, decay]))
    return seeds


def align_phase(x, reference, functional, samples=720):
    """Time shift of ``x`` closest to ``reference`` (coarse scan then refine)."""
    thetas = np.linspace(0.0, 2.0 * math.pi, samples, endpoint=False)
    dist = [np.linalg.norm(functional.shift(x, th) - reference) for th in thetas]
    th0 = thetas[int(np.argmin(dist))]
    res = minimize_scalar(lambda th: np.linalg.norm(functional.shift(x, th) - reference),
                          bracket=(th0 - 2 * math.pi / samples, th0, th0 + 2 * math.pi / samples),
                          tol=1e-14)
    return functional.shift(x, float(res.x))
