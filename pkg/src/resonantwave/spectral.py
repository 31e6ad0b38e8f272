"""Space-time spectral fields on T x (0, pi).

A field is stored as a complex array ``c`` of shape ``(2L+1, J)`` holding the
coefficients of ``e^{ilt} sin(jx)`` with row ``l + L`` and column ``j - 1``.
Products and nonlinear maps go through a tensor grid: an FFT trapezoid rule
in t and Gauss-Legendre nodes in x.  The x-rule has to be Gauss-Legendre
rather than a uniform sine grid because products of sine series carry cosine
content, whose sine coefficients are not resolved exactly by a DST grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


class SpectralError(ValueError):
    pass


class NotInSubspace(SpectralError):
    pass


class OutsideRadius(SpectralError):
    def __init__(self, amplitude, radius):
        super().__init__(f"outside analyticity radius: amplitude {amplitude:.6g} >= radius {radius:.6g}")
        self.amplitude = amplitude
        self.radius = radius


# --------------------------------------------------------------------------
# coefficient containers


@dataclass(frozen=True)
class NormWeights:
    sigma: float = 0.0
    s: float = 1.0

    def __post_init__(self):
        if self.sigma < 0 or self.s < 0:
            raise SpectralError("sigma and s must be nonnegative")


@dataclass(frozen=True)
class TrigPolynomial:
    """a(x) = c0 + sum_m cos_coeffs[m-1] cos(mx) + sin_coeffs[m-1] sin(mx)."""

    c0: float = 0.0
    cos_coeffs: tuple = ()
    sin_coeffs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "c0", float(self.c0))
        object.__setattr__(self, "cos_coeffs", tuple(float(v) for v in self.cos_coeffs))
        object.__setattr__(self, "sin_coeffs", tuple(float(v) for v in self.sin_coeffs))
        vals = (self.c0,) + self.cos_coeffs + self.sin_coeffs
        if not all(math.isfinite(v) for v in vals):
            raise SpectralError("TrigPolynomial coefficients must be finite")

    @classmethod
    def constant(cls, value):
        return cls(c0=value)

    @property
    def degree(self):
        d = 0
        for arr in (self.cos_coeffs, self.sin_coeffs):
            nz = [m + 1 for m, v in enumerate(arr) if v != 0.0]
            if nz:
                d = max(d, max(nz))
        return d

    def is_zero(self):
        return self.c0 == 0.0 and not any(self.cos_coeffs) and not any(self.sin_coeffs)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, self.c0)
        for m, a in enumerate(self.cos_coeffs, start=1):
            if a:
                out = out + a * np.cos(m * x)
        for m, b in enumerate(self.sin_coeffs, start=1):
            if b:
                out = out + b * np.sin(m * x)
        return out

    def mean(self):
        """(1/pi) * integral over (0, pi)."""
        tot = self.c0
        for m, b in enumerate(self.sin_coeffs, start=1):
            if m % 2:
                tot += b * 2.0 / (m * math.pi)
        return tot

    def reflect(self):
        """x -> pi - x."""
        cos_r = tuple(a * (-1) ** m for m, a in enumerate(self.cos_coeffs, start=1))
        sin_r = tuple(b * (-1) ** (m + 1) for m, b in enumerate(self.sin_coeffs, start=1))
        return TrigPolynomial(self.c0, cos_r, sin_r)

    def scaled(self, factor):
        return TrigPolynomial(self.c0 * factor,
                              tuple(a * factor for a in self.cos_coeffs),
                              tuple(b * factor for b in self.sin_coeffs))

    def __add__(self, other):
        n_c = max(len(self.cos_coeffs), len(other.cos_coeffs))
        n_s = max(len(self.sin_coeffs), len(other.sin_coeffs))
        pad = lambda t, n: np.pad(np.asarray(t, float), (0, n - len(t)))
        return TrigPolynomial(self.c0 + other.c0,
                              tuple(pad(self.cos_coeffs, n_c) + pad(other.cos_coeffs, n_c)),
                              tuple(pad(self.sin_coeffs, n_s) + pad(other.sin_coeffs, n_s)))

    def h1_norm(self):
        x, w = gauss_rule(4 * self.degree + 32)
        v = self(x)
        dv = self.derivative()(x)
        return math.sqrt(float(np.dot(w, v * v + dv * dv)))

    def derivative(self):
        # d/dx cos(mx) = -m sin(mx); d/dx sin(mx) = m cos(mx)
        cos_d = tuple(m * b for m, b in enumerate(self.sin_coeffs, start=1))
        sin_d = tuple(-m * a for m, a in enumerate(self.cos_coeffs, start=1))
        return TrigPolynomial(0.0, cos_d, sin_d)

    def sup_norm(self):
        x = np.linspace(0.0, math.pi, 64 * (self.degree + 1) + 1)
        return float(np.max(np.abs(self(x))))

    def to_dict(self):
        return {"c0": self.c0, "cos": list(self.cos_coeffs), "sin": list(self.sin_coeffs)}

    @classmethod
    def from_dict(cls, d):
        if isinstance(d, (int, float)):
            return cls(c0=float(d))
        unknown = set(d) - {"c0", "cos", "sin"}
        if unknown:
            raise SpectralError(f"unknown TrigPolynomial keys: {sorted(unknown)}")
        return cls(d.get("c0", 0.0), d.get("cos", ()), d.get("sin", ()))


@dataclass(frozen=True)
class NonlinearitySpec:
    """f(x, u) = sum_k a_k(x) u^k with leading power p and sign selector s_star.

    ``radius`` is the convergence radius of f in u; polynomial data use inf.
    """

    p: int
    terms: dict
    s_star: int = 1
    radius: float = math.inf

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 2:
            raise SpectralError("leading power p must be an integer >= 2")
        if self.s_star not in (-1, 1):
            raise SpectralError("s_star must be +1 or -1")
        terms = {}
        for k, a in dict(self.terms).items():
            k = int(k)
            if not isinstance(a, TrigPolynomial):
                a = TrigPolynomial.from_dict(a)
            if k < self.p:
                raise SpectralError(f"power {k} below leading power {self.p}")
            terms[k] = a
        if self.p not in terms or terms[self.p].is_zero():
            raise SpectralError("a_p must be present and not identically zero")
        object.__setattr__(self, "terms", dict(sorted(terms.items())))

    @property
    def max_power(self):
        return max(self.terms)

    @property
    def x_degree(self):
        return max(a.degree for a in self.terms.values())

    @property
    def leading(self):
        return self.terms[self.p]

    def epsilon(self, delta):
        return self.s_star * delta ** (self.p - 1)

    def omega(self, delta, pathway="standard"):
        if pathway == "quadratic":
            return math.sqrt(1.0 - 2.0 * delta ** 2)
        return math.sqrt(1.0 + 2.0 * self.epsilon(delta))

    def g_pointwise(self, delta, x, u, order=0):
        """order-th u-derivative of g(delta, x, u) = s* sum_k delta^(k-p) a_k(x) u^k."""
        out = np.zeros(np.broadcast(x, u).shape)
        for k, a in self.terms.items():
            if k < order:
                continue
            coef = float(math.perm(k, order))
            scale = delta ** (k - self.p)
            if scale == 0.0:
                continue
            out = out + (coef * scale) * a(x) * u ** (k - order)
        return self.s_star * out

    def f_pointwise(self, x, u):
        out = np.zeros(np.broadcast(x, u).shape)
        for k, a in self.terms.items():
            out = out + a(x) * u ** k
        return out

    def to_dict(self):
        return {"p": self.p, "s_star": self.s_star,
                "radius": None if math.isinf(self.radius) else self.radius,
                "terms": {str(k): a.to_dict() for k, a in self.terms.items()}}

    @classmethod
    def from_dict(cls, d):
        radius = d.get("radius")
        return cls(int(d["p"]), {int(k): TrigPolynomial.from_dict(v) for k, v in d["terms"].items()},
                   int(d.get("s_star", 1)), math.inf if radius is None else float(radius))


class SpectralField:
    """Immutable coefficient array of shape (2L+1, J)."""

    __slots__ = ("c",)

    def __init__(self, c):
        c = np.array(c, dtype=complex)
        if c.ndim != 2 or c.shape[0] % 2 != 1 or c.shape[1] < 1:
            raise SpectralError(f"bad coefficient shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)

    def __setattr__(self, name, value):
        raise AttributeError("SpectralField is immutable")

    @property
    def L(self):
        return (self.c.shape[0] - 1) // 2

    @property
    def J(self):
        return self.c.shape[1]

    @classmethod
    def zeros(cls, L, J):
        return cls(np.zeros((2 * L + 1, J), dtype=complex))

    @classmethod
    def from_modes(cls, L, J, modes):
        """modes: {(l, j): value}; the conjugate entry at -l is filled in."""
        c = np.zeros((2 * L + 1, J), dtype=complex)
        for (l, j), v in modes.items():
            if abs(l) > L or not 1 <= j <= J:
                raise SpectralError(f"mode {(l, j)} outside truncation ({L}, {J})")
            c[l + L, j - 1] = v
            if l != 0:
                c[-l + L, j - 1] = np.conj(v)
            elif abs(np.imag(v)) > 0:
                raise SpectralError("l = 0 coefficients must be real")
        return cls(c)

    def coef(self, l, j):
        if abs(l) > self.L or not 1 <= j <= self.J:
            return 0.0j
        return complex(self.c[l + self.L, j - 1])

    def resized(self, L, J):
        out = np.zeros((2 * L + 1, J), dtype=complex)
        lm, jm = min(L, self.L), min(J, self.J)
        out[L - lm:L + lm + 1, :jm] = self.c[self.L - lm:self.L + lm + 1, :jm]
        return SpectralField(out)

    def with_coefficients(self, c):
        return SpectralField(c)

    def __add__(self, other):
        _check_same(self, other)
        return SpectralField(self.c + other.c)

    def __sub__(self, other):
        _check_same(self, other)
        return SpectralField(self.c - other.c)

    def __neg__(self):
        return SpectralField(-self.c)

    def __mul__(self, scalar):
        return SpectralField(self.c * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return SpectralField(self.c / scalar)

    def reality_defect(self):
        flipped = np.conj(self.c[::-1, :])
        scale = max(1.0, float(np.max(np.abs(self.c)))) if self.c.size else 1.0
        return float(np.max(np.abs(self.c - flipped))) / scale

    def max_abs(self):
        return float(np.max(np.abs(self.c))) if self.c.size else 0.0

    def values(self, grid=None):
        grid = grid or default_grid(self.L, self.J, 1)
        return grid.synthesize(self.c)

    def to_pairs(self):
        """Row-major (l, j) real/imag pairs for serialization."""
        return [[float(v.real), float(v.imag)] for v in self.c.ravel()]

    @classmethod
    def from_pairs(cls, L, J, pairs):
        arr = np.asarray(pairs, dtype=float)
        return cls((arr[:, 0] + 1j * arr[:, 1]).reshape(2 * L + 1, J))

    def __repr__(self):
        return f"SpectralField(L={self.L}, J={self.J}, max|c|={self.max_abs():.3g})"


def _check_same(a, b):
    if a.c.shape != b.c.shape:
        raise SpectralError(f"truncation mismatch {a.c.shape} vs {b.c.shape}")


# --------------------------------------------------------------------------
# index bookkeeping


@lru_cache(maxsize=256)
def index_grids(L, J):
    l = np.arange(-L, L + 1)[:, None] * np.ones((1, J), dtype=int)
    j = np.ones((2 * L + 1, 1), dtype=int) * np.arange(1, J + 1)[None, :]
    l.setflags(write=False)
    j.setflags(write=False)
    return l, j


def subspace_mask(L, J, subspace, N=None, Ln=None):
    l, j = index_grids(L, J)
    on_v = j == np.abs(l)
    if subspace == "V":
        return on_v
    if subspace == "W":
        return ~on_v
    if subspace in ("V1", "V2"):
        if N is None:
            raise SpectralError("V1/V2 projections need the cutoff N")
        low = np.abs(l) <= N
        return on_v & low if subspace == "V1" else on_v & ~low
    if subspace in ("Pn", "PnPerp"):
        if Ln is None:
            raise SpectralError("Pn projections need L_n")
        low = np.abs(l) <= Ln
        return ~on_v & low if subspace == "Pn" else ~on_v & ~low
    raise SpectralError(f"unknown subspace {subspace!r}")


def project(u, subspace, N=None, Ln=None):
    mask = subspace_mask(u.L, u.J, subspace, N, Ln)
    return SpectralField(np.where(mask, u.c, 0.0))


def weight_array(L, J, w):
    l, j = index_grids(L, J)
    la = np.abs(l).astype(float)
    return np.exp(2.0 * w.sigma * la) * (la ** (2.0 * w.s) + 1.0) * (math.pi / 2.0) * j.astype(float) ** 2


def norm_sigma_s(u, w):
    return math.sqrt(float(np.sum(weight_array(u.L, u.J, w) * np.abs(u.c) ** 2)))


def pairing(u, v):
    """L^2(T x (0, pi)) inner product of two real fields."""
    _check_same(u, v)
    return math.pi ** 2 * float(np.sum((u.c * np.conj(v.c)).real))


def h1_squared(u):
    """integral of u_t^2 + u_x^2 over the domain."""
    l, j = index_grids(u.L, u.J)
    return math.pi ** 2 * float(np.sum((l ** 2 + j ** 2) * np.abs(u.c) ** 2))


def dt(u):
    l, _ = index_grids(u.L, u.J)
    return SpectralField(1j * l * u.c)


def time_shift(u, theta):
    """u(t - theta, x)."""
    l, _ = index_grids(u.L, u.J)
    return SpectralField(u.c * np.exp(-1j * l * theta))


def minus_laplacian(u):
    l, j = index_grids(u.L, u.J)
    return SpectralField((l ** 2 + j ** 2) * u.c)


def inv_laplacian_V(u):
    l, j = index_grids(u.L, u.J)
    on_v = j == np.abs(l)
    if np.any(u.c[~on_v] != 0):
        raise NotInSubspace("not in V: field has W-support")
    out = np.zeros_like(u.c)
    out[on_v] = u.c[on_v] / (2.0 * l[on_v] ** 2)
    return SpectralField(out)


def apply_L_omega(u, omega):
    l, j = index_grids(u.L, u.J)
    return SpectralField((omega ** 2 * l ** 2 - j ** 2) * u.c)


def apply_L_inverse_W(u):
    l, j = index_grids(u.L, u.J)
    on_v = j == np.abs(l)
    if np.any(u.c[on_v] != 0):
        raise NotInSubspace("not in W: field has V-support")
    out = np.zeros_like(u.c)
    out[~on_v] = u.c[~on_v] / (l[~on_v] ** 2 - j[~on_v] ** 2)
    return SpectralField(out)


def beta_value(tau, convention):
    if convention == "bracket":
        return (2.0 - tau) / 2.0
    if convention == "smalldivisor":
        return (2.0 - tau) / tau
    raise SpectralError(f"unknown beta convention {convention!r}")


def bracket_norm(decomposition, sigma, w, tau, beta_convention="bracket"):
    """Weighted sum over a stored decomposition w = sum h_i (upper bound of the inf)."""
    beta = beta_value(tau, beta_convention)
    expo = 2.0 * (tau - 1.0) / beta
    total = 0.0
    for h, sigma_i in decomposition:
        if sigma_i <= sigma:
            return math.inf
        total += norm_sigma_s(h, NormWeights(sigma_i, w.s)) / (sigma_i - sigma) ** expo
    return total


# --------------------------------------------------------------------------
# tensor grid


@lru_cache(maxsize=64)
def gauss_rule(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x = (x + 1.0) * (math.pi / 2.0)
    w = w * (math.pi / 2.0)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


class Grid:
    """Tensor grid with nt uniform points in t and nx Gauss-Legendre nodes in x."""

    def __init__(self, L, J, nt, nx):
        if nt < 2 * L + 1:
            raise SpectralError("time grid cannot resolve the truncation")
        self.L, self.J, self.nt, self.nx = L, J, nt, nx
        self.t = 2.0 * math.pi * np.arange(nt) / nt
        self.x, self.wx = gauss_rule(nx)
        jj = np.arange(1, J + 1)
        self.sin_xj = np.sin(np.outer(self.x, jj))            # (nx, J)
        self.analysis_x = (2.0 / math.pi) * (self.wx[:, None] * self.sin_xj).T  # (J, nx)
        self._rows = np.arange(-L, L + 1) % nt

    def synthesize(self, c):
        if c.shape != (2 * self.L + 1, self.J):
            raise SpectralError("coefficient shape does not match grid")
        in_x = c @ self.sin_xj.T                  # (2L+1, nx)
        buf = np.zeros((self.nt, self.nx), dtype=complex)
        buf[self._rows] = in_x
        vals = np.fft.ifft(buf, axis=0) * self.nt
        return vals.real

    def synthesize_complex(self, c):
        in_x = c @ self.sin_xj.T
        buf = np.zeros((self.nt, self.nx), dtype=complex)
        buf[self._rows] = in_x
        return np.fft.ifft(buf, axis=0) * self.nt

    def time_coefficients(self, vals, M):
        """Fourier coefficients in t, |m| <= M, at each x node: shape (2M+1, nx)."""
        if self.nt < 2 * M + 1:
            raise SpectralError("time grid too coarse for requested coefficients")
        hat = np.fft.fft(vals, axis=0) / self.nt
        return hat[np.arange(-M, M + 1) % self.nt]

    def analyze(self, vals):
        hat = np.fft.fft(vals, axis=0) / self.nt
        return hat[self._rows] @ self.analysis_x.T

    def integrate(self, vals):
        """integral over T x (0, pi)."""
        return (2.0 * math.pi / self.nt) * float(np.sum(vals @ self.wx))


@lru_cache(maxsize=64)
def _grid(L, J, nt, nx):
    return Grid(L, J, nt, nx)


def grid_for(L, J, power, x_degree=0, oversample=2):
    """Grid exact for Galerkin coefficients of a(x) u^power with deg a = x_degree."""
    if oversample < 2:
        raise SpectralError("oversample must be >= 2")
    nt = oversample * power * L + 2
    nt += nt % 2
    x_freq = power * J + x_degree + J
    nx = int(math.ceil(0.7 * x_freq)) + 16
    return _grid(L, J, nt, nx)


def default_grid(L, J, power=1):
    return grid_for(L, J, max(power, 1))


def eval_nonlinearity(spec, delta, u, oversample=2, order=0, grid=None):
    """Galerkin coefficients of the order-th u-derivative of g(delta, x, u(t,x))."""
    grid = grid or grid_for(u.L, u.J, spec.max_power, spec.x_degree, oversample)
    vals = grid.synthesize(u.c)
    check_radius(spec, delta, vals)
    gv = spec.g_pointwise(delta, grid.x[None, :], vals, order)
    return SpectralField(grid.analyze(gv))


def check_radius(spec, delta, vals):
    if math.isinf(spec.radius):
        return
    amp = delta * float(np.max(np.abs(vals))) if vals.size else 0.0
    if amp >= spec.radius:
        raise OutsideRadius(amp, spec.radius)


def multiply(u, v, grid=None):
    grid = grid or grid_for(u.L, u.J, 2)
    return SpectralField(grid.analyze(grid.synthesize(u.c) * grid.synthesize(v.c)))


class MultiplicationOperator:
    """h -> Galerkin coefficients of a(t,x) h(t,x) for grid values of a.

    ``apply`` works on arbitrary complex coefficient arrays (the map is
    complex-linear); ``dense`` assembles entries
    (2/pi) int a_{l-l'}(x) sin(jx) sin(j'x) dx from the time-Fourier
    coefficients of a.
    """

    def __init__(self, grid, a_vals):
        self.grid = grid
        self.a_vals = np.asarray(a_vals, dtype=float)
        self._blocks = {}
        self._time_coef = None

    def apply(self, c):
        vals = self.grid.synthesize_complex(c)
        hat = np.fft.fft(self.a_vals * vals, axis=0) / self.grid.nt
        return hat[self.grid._rows] @ self.grid.analysis_x.T

    def time_mean(self):
        """a_0(x) at the x nodes."""
        return self.a_vals.mean(axis=0)

    def block(self, m):
        if m not in self._blocks:
            M = self.grid.L * 2
            if self._time_coef is None:
                self._time_coef = self.grid.time_coefficients(self.a_vals, M)
            am = self._time_coef[m + M]
            self._blocks[m] = (self.grid.analysis_x * am[None, :]) @ self.grid.sin_xj
        return self._blocks[m]

    def dense(self, rows, cols):
        """rows, cols: integer arrays of (l, j) pairs; returns complex matrix."""
        rows = np.asarray(rows).reshape(-1, 2)
        cols = np.asarray(cols).reshape(-1, 2)
        out = np.zeros((len(rows), len(cols)), dtype=complex)
        for lr in np.unique(rows[:, 0]):
            ri = np.nonzero(rows[:, 0] == lr)[0]
            for lc in np.unique(cols[:, 0]):
                ci = np.nonzero(cols[:, 0] == lc)[0]
                B = self.block(int(lr - lc))
                out[np.ix_(ri, ci)] = B[np.ix_(rows[ri, 1] - 1, cols[ci, 1] - 1)]
        return out


def mode_list(L, J, subspace, N=None, Ln=None):
    """(l, j) pairs of a subspace in row-major order."""
    mask = subspace_mask(L, J, subspace, N, Ln)
    l, j = index_grids(L, J)
    return np.stack([l[mask], j[mask]], axis=1)


def flat_index(L, J, modes):
    modes = np.asarray(modes).reshape(-1, 2)
    return (modes[:, 0] + L) * J + (modes[:, 1] - 1)
