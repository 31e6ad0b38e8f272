"""Frequency-set scanning: excised parameter intervals and density of the surviving set.

For each index pair (l, j) the non-resonance conditions

    |omega(delta) l - j|                              >= 2 gamma / (l + j)^tau
    |omega(delta) l - j - eps(delta) m(delta) / (2j)| >= 2 gamma / (l + j)^tau

are imposed for l > 1/(3 |eps(delta)|).  Both left-hand sides are monotone
in delta, so every pair removes at most one interval per family, found by
vectorised bisection.  ``m(delta)`` is the mean value of d_u g along the
solution branch, sampled at a few branch points and interpolated.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .linop import mean_value_M
from .nashmoser import continue_branch_Q1


class MonotonicityError(ValueError):
    pass


class InsufficientWindows(ValueError):
    pass


@dataclass
class ScanConfig:
    eta: float = 0.1
    windows: int = 5
    gamma: float = 0.05
    tau: float = 1.5
    cap_factor: float = 4.0       # l <= cap_factor * ceil(1/(3 eps)) at the window's lower edge
    aperture: float = 8.0         # c0: only |j/l - 1| <= c0 eps is scanned
    gamma_factor: float = 2.0     # limiting set uses 2 gamma
    bisect_iter: int = 60
    m_samples: int = 5            # branch points used to build m(delta)


# --------------------------------------------------------------------------
# m(delta)


@dataclass
class MeanValueCurve:
    deltas: np.ndarray
    values: np.ndarray
    spline: object = field(repr=False, default=None)

    def __post_init__(self):
        if self.spline is None:
            if len(self.deltas) >= 2:
                self.spline = CubicSpline(self.deltas, self.values, bc_type="natural")
            else:
                c = float(self.values[0])
                self.spline = lambda d: np.full(np.shape(d), c)

    def __call__(self, delta):
        return self.spline(np.clip(delta, self.deltas[0], self.deltas[-1]))

    @classmethod
    def constant(cls, value):
        return cls(np.array([0.0]), np.array([float(value)]))

    def to_dict(self):
        return {"deltas": self.deltas.tolist(), "values": self.values.tolist()}


def mean_value_curve(spec, circle, delta_max, params, samples=5):
    """Sample m(delta) = M(delta, v1(delta), w(delta)) along the continued branch."""
    grid = np.linspace(0.0, delta_max, samples)
    pts = continue_branch_Q1(spec, circle, grid, params)
    if not pts:
        raise ValueError("branch continuation produced no points")
    ds = np.array([p.delta for p in pts])
    ms = np.array([mean_value_M(spec, p.delta, p.v1, p.w, p.v2) for p in pts])
    return MeanValueCurve(ds, ms)


# --------------------------------------------------------------------------
# intervals


def _omega_minus_one(eps):
    return 2.0 * eps / (np.sqrt(1.0 + 2.0 * eps) + 1.0)


def _family(spec, m_func, l, j, second):
    def f(delta):
        eps = spec.s_star * delta ** (spec.p - 1)
        # (omega - 1) l - (j - l) avoids cancelling two numbers of size l
        val = _omega_minus_one(eps) * l - (j - l)
        if second:
            val = val - eps * m_func(delta) / (2.0 * j)
        return val
    return f


def _solve_level(f, lo, hi, target, increasing, iters):
    a, b = lo.copy(), hi.copy()
    for _ in range(iters):
        mid = 0.5 * (a + b)
        above = (f(mid) > target) == increasing
        b = np.where(above, mid, b)
        a = np.where(above, a, mid)
    return 0.5 * (a + b)


def _intervals_vec(spec, m_func, l, j, lo, hi, thr, second, iters=60, check_points=5):
    """Excised sub-interval of [lo, hi] per pair where |f| < thr; NaN where empty."""
    f = _family(spec, m_func, l, j, second)
    flo, fhi = f(lo), f(hi)
    increasing = fhi >= flo
    # monotonicity diagnostic on interior samples
    prev = flo
    for s in np.linspace(0, 1, check_points + 2)[1:]:
        cur = f(lo + s * (hi - lo))
        bad = np.where(increasing, cur < prev - 1e-14 * np.abs(l), cur > prev + 1e-14 * np.abs(l))
        if np.any(bad):
            i = int(np.argmax(bad))
            raise MonotonicityError(f"f not monotone for (l, j) = ({int(l[i])}, {int(j[i])})")
        prev = cur
    fmin, fmax = np.minimum(flo, fhi), np.maximum(flo, fhi)
    hit = (fmin < thr) & (fmax > -thr)
    a = np.full(l.shape, np.nan)
    b = np.full(l.shape, np.nan)
    if np.any(hit):
        fs = _family(spec, m_func, l[hit], j[hit], second)
        lo_h, hi_h, inc, th = lo[hit], hi[hit], increasing[hit], thr[hit]
        x_minus = _solve_level(fs, lo_h, hi_h, -th, inc, iters)
        x_plus = _solve_level(fs, lo_h, hi_h, th, inc, iters)
        # bisection clamps to the endpoints when a level is not attained
        a[hit] = np.minimum(x_minus, x_plus)
        b[hit] = np.maximum(x_minus, x_plus)
    return a, b


def _lower_edge(spec, l):
    """delta below which l <= 1/(3 |eps(delta)|), i.e. the pair is not tested."""
    return (1.0 / (3.0 * l)) ** (1.0 / (spec.p - 1))


def excision_intervals(l, j, delta1, m_func, gamma, tau, p=None, spec=None, gamma_factor=2.0,
                       iters=60):
    """Excised sub-intervals of [delta1/2, delta1] for one pair, both families.

    Returns a list of (a, b, family) with family in {"first", "second"}.
    """
    if spec is None:
        from .spectral import NonlinearitySpec, TrigPolynomial
        spec = NonlinearitySpec(p, {p: TrigPolynomial(1.0)})
    if gamma <= 0 or l == j:
        return []
    lo = max(delta1 / 2.0, _lower_edge(spec, l))
    if lo >= delta1:
        return []
    L = np.array([float(l)])
    Jv = np.array([float(j)])
    thr = np.array([gamma_factor * gamma / (l + j) ** tau])
    out = []
    for name, second in (("first", False), ("second", True)):
        a, b = _intervals_vec(spec, m_func, L, Jv, np.array([lo]), np.array([delta1]), thr, second,
                              iters)
        if np.isfinite(a[0]) and b[0] > a[0]:
            out.append((float(a[0]), float(b[0]), name))
    return out


def _union_length(a, b):
    if len(a) == 0:
        return 0.0, 0
    order = np.argsort(a, kind="stable")
    a, b = a[order], b[order]
    total, pieces = 0.0, 0
    cur_a, cur_b = a[0], b[0]
    for x, y in zip(a[1:], b[1:]):
        if x > cur_b:
            total += cur_b - cur_a
            pieces += 1
            cur_a, cur_b = x, y
        else:
            cur_b = max(cur_b, y)
    total += cur_b - cur_a
    return float(total), pieces + 1


def window_pairs(spec, lo, hi, cfg):
    """Candidate (l, j) pairs for the window [lo, hi] inside the aperture."""
    eps_hi = abs(spec.epsilon(hi))
    eps_lo = abs(spec.epsilon(lo))
    l_min = int(math.floor(1.0 / (3.0 * eps_hi))) + 1
    l_max = int(cfg.cap_factor * math.ceil(1.0 / (3.0 * eps_lo)))
    ls = np.arange(l_min, l_max + 1)
    width = np.ceil(cfg.aperture * eps_hi * ls).astype(int) + 1
    tot = int(np.sum(2 * width + 1))
    L = np.repeat(ls, 2 * width + 1)
    offs = np.arange(tot) - np.repeat(np.cumsum(2 * width + 1) - (2 * width + 1), 2 * width + 1)
    Jv = L - np.repeat(width, 2 * width + 1) + offs
    keep = (Jv >= 1) & (Jv != L) & (np.abs(Jv - L) <= cfg.aperture * eps_hi * L)
    return L[keep].astype(float), Jv[keep].astype(float), l_max


@dataclass
class WindowResult:
    lo: float
    hi: float
    excised: float
    density: float
    pairs: int
    hits: int
    pieces: int
    l_max: int
    outside_aperture_hits: int
    tail_bound: float
    excised_first_family: float = 0.0

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class MeasureReport:
    eta_values: list
    densities: list            # density of the accepted set in (0, eta) for each eta
    excised_total: list        # excised measure in (0, eta), summed over scanned windows
    window_densities: list
    window_excised: list
    fitted_exponent: float
    fitted_exponent_cumulative: float
    target_exponent: float
    fitted_exponent_first_family: float
    excision_constants: list   # window excised / (gamma * eta^(1 + (p-1)(tau-1)))
    intervals: list            # (l, j, family, a, b, window)
    windows: list
    gamma: float
    tau: float
    p: int
    m_curve: dict

    def to_dict(self):
        d = dict(self.__dict__)
        d["windows"] = [w.to_dict() for w in self.windows]
        return d

    def window_rows(self):
        return [[w.lo, w.hi, w.density, w.excised, w.pairs, w.hits] for w in self.windows]


def _scan_window(spec, m_func, lo, hi, cfg, gamma):
    L, Jv, l_max = window_pairs(spec, lo, hi, cfg)
    lo_pair = np.maximum(lo, _lower_edge(spec, L))
    valid = lo_pair < hi
    L, Jv, lo_pair = L[valid], Jv[valid], lo_pair[valid]
    thr = cfg.gamma_factor * gamma / (L + Jv) ** cfg.tau
    hi_arr = np.full(L.shape, hi)
    rows, A, B = [], [], []
    for name, second in (("first", False), ("second", True)):
        a, b = _intervals_vec(spec, m_func, L, Jv, lo_pair, hi_arr, thr, second, cfg.bisect_iter)
        ok = np.isfinite(a) & (b > a)
        A.append(a[ok])
        B.append(b[ok])
        for ll, jj, aa, bb in zip(L[ok], Jv[ok], a[ok], b[ok]):
            rows.append((int(ll), int(jj), name, float(aa), float(bb)))
    first_only, _ = _union_length(A[0], B[0])
    A, B = np.concatenate(A), np.concatenate(B)
    excised, pieces = _union_length(A, B)
    # aperture check: the band just outside must be empty
    outside = 0
    if len(L):
        eps_hi = abs(spec.epsilon(hi))
        ls = np.unique(L)
        for sgn in (1, -1):
            band = np.ceil(cfg.aperture * eps_hi * ls) + 1
            for extra in range(0, 3):
                jj = ls + sgn * (band + extra)
                ok = jj >= 1
                lp = np.maximum(lo, _lower_edge(spec, ls[ok]))
                th = cfg.gamma_factor * gamma / (ls[ok] + jj[ok]) ** cfg.tau
                for second in (False, True):
                    a, b = _intervals_vec(spec, m_func, ls[ok], jj[ok], lp, np.full(lp.shape, hi),
                                          th, second, 8)
                    outside += int(np.sum(np.isfinite(a)))
    # tail beyond l_max: sum of single-pair bounds, l^-(tau+1) summed times pairs per l
    tail = 0.0
    if gamma > 0:
        eps_hi = abs(spec.epsilon(hi))
        per_l = lambda l: (2 * cfg.aperture * eps_hi * l + 1) * 2 * 2 * cfg.gamma_factor * gamma \
            / ((2 * l) ** cfg.tau * l * (spec.p - 1) * lo ** (spec.p - 2))
        tail = float(sum(per_l(l) for l in range(l_max + 1, 40 * l_max, max(1, l_max // 200))) *
                     max(1, l_max // 200))
    width = hi - lo
    return WindowResult(lo, hi, excised, 1.0 - excised / width, len(L), len(rows), pieces, l_max,
                        outside, tail, first_only), rows


def _loglog_slope(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def scan_delta_grid(spec, m_func, cfg=ScanConfig()):
    """Dyadic-window scan of the limiting non-resonant set in (0, eta].

    ``m_func`` is a callable delta -> m(delta) (e.g. a MeanValueCurve).
    """
    if cfg.windows < 1:
        raise InsufficientWindows("need at least one window")
    windows, intervals = [], []
    etas = [cfg.eta / 2 ** m for m in range(cfg.windows)]
    gamma = cfg.gamma
    for m, hi in enumerate(etas):
        lo = hi / 2
        if gamma > 0:
            res, rows = _scan_window(spec, m_func, lo, hi, cfg, gamma)
        else:
            res, rows = WindowResult(lo, hi, 0.0, 1.0, 0, 0, 0, 0, 0, 0.0), []
        windows.append(res)
        intervals.extend((l, j, fam, a, b, m) for (l, j, fam, a, b) in rows)
    w_exc = [w.excised for w in windows]
    cumulative = [float(sum(w_exc[m:])) for m in range(len(etas))]
    densities = [1.0 - c / e for c, e in zip(cumulative, etas)]
    target = 1.0 + (spec.p - 1) * (cfg.tau - 1)
    consts = [e / (gamma * h ** target) if gamma > 0 else 0.0 for e, h in zip(w_exc, etas)]
    m_dict = m_func.to_dict() if hasattr(m_func, "to_dict") else {}
    return MeasureReport(etas, densities, cumulative, [w.density for w in windows], w_exc,
                         _loglog_slope(etas, w_exc), _loglog_slope(etas[:-1], cumulative[:-1]),
                         target, _loglog_slope(etas, [w.excised_first_family for w in windows]), consts, intervals, windows, gamma, cfg.tau, spec.p, m_dict)


@dataclass
class DensityVerdict:
    fitted_exponent: float
    target_exponent: float
    exponent_ok: bool
    last_window_density: float
    densities_increase: bool
    passed: bool

    def to_dict(self):
        return dict(self.__dict__)


def density_report(report, exponent_tol=0.3, last_density=0.9):
    if len(report.window_excised) < 4:
        raise InsufficientWindows(f"exponent fit needs >= 4 windows, got {len(report.window_excised)}")
    dens = report.window_densities
    inc = all(b >= a - 1e-12 for a, b in zip(dens, dens[1:]))
    ok_exp = abs(report.fitted_exponent - report.target_exponent) <= exponent_tol
    last = dens[-1]
    return DensityVerdict(report.fitted_exponent, report.target_exponent, ok_exp, last, inc,
                          bool(ok_exp and inc and last >= last_density))


def fit_exponent(etas, excised):
    return _loglog_slope(etas, excised)


# --------------------------------------------------------------------------
# brute-force grid check


def grid_excision(spec, m_func, lo, hi, cfg, points=2001, gamma=None):
    """Boolean mask of excised grid points in [lo, hi] by direct evaluation."""
    gamma = cfg.gamma if gamma is None else gamma
    deltas = np.linspace(lo, hi, points)
    L, Jv, _ = window_pairs(spec, lo, hi, cfg)
    ls = np.unique(L)
    excised = np.zeros(points, bool)
    for i, d in enumerate(deltas):
        active = ls[ls > 1.0 / (3.0 * abs(spec.epsilon(d)))]
        if not len(active):
            continue
        eps = spec.epsilon(d)
        om1 = float(_omega_minus_one(eps))
        md = float(m_func(d))
        base = active + np.round(om1 * active)
        for off in (-1, 0, 1):
            jj = base + off
            ok = (jj >= 1) & (jj != active) & (np.abs(jj - active) <= cfg.aperture * abs(spec.epsilon(hi)) * active)
            thr = cfg.gamma_factor * gamma / (active + jj) ** cfg.tau
            f1 = np.abs(om1 * active - (jj - active))
            f2 = np.abs(om1 * active - (jj - active) - eps * md / (2 * jj))
            if np.any(ok & ((f1 < thr) | (f2 < thr))):
                excised[i] = True
                break
    return deltas, excised
