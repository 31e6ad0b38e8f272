import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from resonantwave.cantor import (InsufficientWindows, MeanValueCurve, MonotonicityError,
                                 ScanConfig, density_report, excision_intervals, fit_exponent,
                                 grid_excision, scan_delta_grid, window_pairs)
from resonantwave.spectral import NonlinearitySpec, TrigPolynomial

CUBIC = NonlinearitySpec(3, {3: TrigPolynomial(1.0)})
M = MeanValueCurve.constant(2.65)
FAST = ScanConfig(eta=0.2, windows=2)


@pytest.fixture(scope="module")
def fast_report():
    return scan_delta_grid(CUBIC, M, FAST)


def test_zero_gamma_accepts_everything():
    rep = scan_delta_grid(CUBIC, M, ScanConfig(eta=0.2, windows=4, gamma=0.0))
    assert rep.densities == [1.0] * 4 and not rep.intervals
    assert excision_intervals(30, 31, 0.2, M, 0.0, 1.5, spec=CUBIC) == []


def test_report_invariants(fast_report):
    assert all(0.0 <= d <= 1.0 for d in fast_report.densities)
    assert all(0.0 <= d <= 1.0 for d in fast_report.window_densities)
    for w in fast_report.windows:
        assert w.outside_aperture_hits == 0
    for l, j, fam, a, b, m in fast_report.intervals:
        w = fast_report.windows[m]
        assert w.lo <= a < b <= w.hi


def test_intervals_agree_with_grid_scan(fast_report):
    w = fast_report.windows[0]
    deltas, mask = grid_excision(CUBIC, M, w.lo, w.hi, FAST, points=4001)
    cell = deltas[1] - deltas[0]
    grid_measure = mask.sum() * cell
    assert abs(grid_measure - w.excised) <= 2 * w.pieces * cell
    assert grid_measure <= sum(b - a for l, j, f, a, b, m in fast_report.intervals if m == 0) + 2 * w.pieces * cell


def test_acceptance_monotone_in_gamma():
    lo, hi = 0.1, 0.2
    _, m1 = grid_excision(CUBIC, M, lo, hi, FAST, points=1001, gamma=0.05)
    _, m2 = grid_excision(CUBIC, M, lo, hi, FAST, points=1001, gamma=0.1)
    assert np.all(m2[m1])          # excised at gamma stays excised at 2 gamma


def test_pairs_stay_in_aperture():
    L, J, l_max = window_pairs(CUBIC, 0.1, 0.2, FAST)
    eps = 0.2 ** 2
    assert np.all(np.abs(J - L) <= FAST.aperture * eps * L)
    assert np.all(L > 1 / (3 * eps)) and np.all(J != L) and L.max() <= l_max


@given(st.integers(10, 400), st.floats(0.05, 0.3))
def test_far_pairs_have_no_intervals(l, delta1):
    eps = delta1 ** 2
    j = int(math.ceil(l * (1 + 3 * eps))) + 2
    assert excision_intervals(l, j, delta1, M, 0.05, 1.5, spec=CUBIC) == []


@given(st.integers(0, 10 ** 6))
def test_interval_length_bound(seed):
    rng = np.random.default_rng(seed)
    delta1 = float(rng.uniform(0.02, 0.3))
    eps = delta1 ** 2
    l = int(rng.integers(int(1 / (3 * eps)) + 1, int(4 / (3 * (delta1 / 2) ** 2)) + 2))
    omega = math.sqrt(1 + 2 * eps)
    j = int(round(omega * l)) + int(rng.integers(-1, 2))
    if j == l or j < 1:
        return
    gamma, tau = 0.05, 1.5
    total = sum(b - a for a, b, _ in excision_intervals(l, j, delta1, M, gamma, tau, spec=CUBIC))
    assert total <= 2 * math.sqrt(2) * gamma / (l ** (tau + 1) * delta1) * (1 + 1e-9)


def test_rough_mean_value_is_diagnosed():
    rough = lambda d: 1e6 * np.sin(1e5 * np.asarray(d))
    with pytest.raises(MonotonicityError):
        excision_intervals(40, 41, 0.2, rough, 0.05, 1.5, spec=CUBIC)


def test_synthetic_exponent_fit():
    etas = 0.1 / 2 ** np.arange(6)
    for target in (2.0, 1.5):
        assert fit_exponent(etas, 0.3 * etas ** target) == pytest.approx(target, abs=1e-3)


def test_target_exponents():
    quad = NonlinearitySpec(2, {2: TrigPolynomial(1.0)})
    assert scan_delta_grid(CUBIC, M, ScanConfig(windows=1, gamma=0.0)).target_exponent == 2.0
    assert scan_delta_grid(quad, M, ScanConfig(windows=1, gamma=0.0)).target_exponent == 1.5


def test_density_report_needs_four_windows(fast_report):
    with pytest.raises(InsufficientWindows):
        density_report(fast_report)


def test_mean_value_curve_clips_and_interpolates():
    curve = MeanValueCurve(np.array([0.0, 0.05, 0.1]), np.array([1.0, 2.0, 3.0]))
    assert float(curve(0.2)) == pytest.approx(3.0)
    assert float(curve(0.025)) == pytest.approx(1.5)
