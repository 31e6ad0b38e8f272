import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import dblquad

from resonantwave.parity import (KernelIntegral, integral_condition_ap, parity_classify,
                                 random_trig, reflect, sampled_integrals, split_parity,
                                 vq_equivalence_audit)
from resonantwave.spectral import TrigPolynomial

SIN2X = TrigPolynomial(0.0, (), (0.0, 1.0))
SINX = TrigPolynomial(0.0, (), (1.0,))
ONE = TrigPolynomial(1.0)


@pytest.mark.parametrize("q", [2, 4, 6])
def test_sin2x_even_powers_vanish(q):
    v = parity_classify(SIN2X, q)
    assert v.vanishes_on_V and v.antisymmetric_defect < 1e-12
    assert sampled_integrals(SIN2X, q).max() < 1e-12


@pytest.mark.parametrize("q", [3, 5])
def test_sinx_odd_powers_vanish(q):
    v = parity_classify(SINX, q)
    assert v.vanishes_on_V and v.symmetric_defect < 1e-12
    assert sampled_integrals(SINX, q).max() < 1e-12


@pytest.mark.parametrize("q", [2, 4])
def test_constant_even_powers_have_witness(q):
    v = parity_classify(ONE, q)
    assert not v.vanishes_on_V
    assert v.witness_value > 1e-6 and v.s_star == 1


@pytest.mark.parametrize("q", [2, 4, 6, 8])
def test_single_mode_certifies_constant_for_even_powers(q):
    assert float(KernelIntegral(ONE, q, modes=3)(np.array([0.5, 0.0, 0.0]))) > 0.0


def test_q_must_be_at_least_two():
    with pytest.raises(ValueError):
        parity_classify(ONE, 1)


def test_integral_on_single_mode():
    # v = cos t sin x: int cos^4 t dt * int sin^4 x dx = (3 pi / 4)(3 pi / 8)
    ki = KernelIntegral(ONE, 4, modes=2)
    assert float(ki(np.array([0.5, 0.0]))) == pytest.approx(9 * math.pi ** 2 / 32, rel=1e-13)


def test_integral_against_adaptive_quadrature():
    rng = np.random.default_rng(1)
    a = random_trig(rng, 3)
    c = (rng.standard_normal(2) + 1j * rng.standard_normal(2)) * 0.5
    ki = KernelIntegral(a, 3, modes=2)

    def v(t, x):
        return sum(2 * (c[l - 1] * np.exp(1j * l * t)).real * math.sin(l * x) for l in (1, 2))
    ref = dblquad(lambda x, t: a(np.array([x]))[0] * v(t, x) ** 3, 0, 2 * math.pi, 0, math.pi,
                  epsabs=1e-12, epsrel=1e-12)[0]
    assert float(ki(c)) == pytest.approx(ref, rel=1e-9, abs=1e-10)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    a = random_trig(rng, 4)
    ki = KernelIntegral(a, 4, modes=3)
    x = rng.standard_normal(6)
    cx = lambda y: y[:3] + 1j * y[3:]
    g = ki.gradient(cx(x))
    for _ in range(5):
        d = rng.standard_normal(6)
        h = 1e-6
        fd = (float(ki(cx(x + h * d))) - float(ki(cx(x - h * d)))) / (2 * h)
        assert np.dot(g, d) == pytest.approx(fd, rel=1e-6)


@given(st.integers(0, 10 ** 6))
def test_split_identity(seed):
    a = random_trig(np.random.default_rng(seed), 5)
    sym, anti = split_parity(a)
    x = np.linspace(0, math.pi, 101)
    assert np.allclose(sym(x) + anti(x), a(x), atol=1e-12)
    assert np.allclose(sym(math.pi - x), sym(x), atol=1e-12)
    assert np.allclose(anti(math.pi - x), -anti(x), atol=1e-12)
    assert np.allclose(reflect(a)(x), a(math.pi - x), atol=1e-12)


@given(st.integers(0, 10 ** 6), st.sampled_from([2, 3, 4, 5]))
def test_matching_part_vanishes(seed, q):
    a = random_trig(np.random.default_rng(seed), 4)
    sym, anti = split_parity(a)
    match = anti if q % 2 == 0 else sym
    verdict = parity_classify(match, q, find_witness=False)
    assert verdict.vanishes_on_V
    assert sampled_integrals(match, q, count=16, seed=seed).max() < 1e-10 * max(1.0, abs(a.c0))


def test_ap_cubic_constant():
    ap = integral_condition_ap(ONE, 3)
    assert ap.holds and ap.s_star == 1 and ap.pathway == "standard"
    assert ap.refined_value == pytest.approx(ap.value, abs=1e-10)


def test_ap_negative_constant_gives_negative_sign():
    ap = integral_condition_ap(TrigPolynomial(-1.0), 3)
    assert ap.holds and ap.s_star == -1


def test_ap_quadratic_pathway():
    ap = integral_condition_ap(ONE, 2)
    assert not ap.holds and ap.pathway == "quadratic" and ap.s_star is None


def test_ap_odd_power_non_symmetric():
    ap = integral_condition_ap(TrigPolynomial(0.0, (1.0,)), 2)      # cos x is antisymmetric
    assert ap.holds and ap.s_star == 1


def test_small_equivalence_audit():
    audit = vq_equivalence_audit(random_a_count=3, q_list=(2, 3), samples=8)
    assert len(audit.rows) == 3 * 2 * 3
    assert audit.misclassifications == 0
    assert audit.max_matching() < 1e-10 and audit.min_mismatching_witness() > 1e-6
