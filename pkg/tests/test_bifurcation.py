import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from resonantwave.bifurcation import (ContractionError, LoopFunction, MeanValueViolation, Psi0,
                                      PsiCubic, PsiQuadratic, align_phase, default_seeds,
                                      embed_Hn, find_critical_circle, phi0, phi0_quadratic,
                                      psi_cubic, psi_quadratic, psi_quadratic_el_residual,
                                      reduced_psi0, solve_Q2)
from resonantwave.spectral import (NonlinearitySpec, SpectralError, SpectralField, TrigPolynomial,
                                   apply_L_inverse_W, grid_for, pairing, project, time_shift)

from helpers import random_V

CUBIC = NonlinearitySpec(3, {3: TrigPolynomial(1.0)})


def fd_check(fun, x, d, h=1e-5):
    return (fun(x + h * d) - fun(x - h * d)) / (2 * h)


# Phi0


def test_phi0_zero():
    v = SpectralField.zeros(4, 4)
    r = phi0(v, CUBIC)
    assert r.value == 0.0 and not np.any(r.gradient.c)


def test_phi0_single_mode_value():
    v = SpectralField.from_modes(4, 4, {(1, 1): 1.0, (-1, 1): 1.0})    # 2 cos t sin x
    assert phi0(v, CUBIC).value == pytest.approx(7 * math.pi ** 2 / 8, rel=1e-13)


def test_phi0_rejects_off_V():
    with pytest.raises(SpectralError):
        phi0(SpectralField.from_modes(3, 3, {(0, 1): 1.0}), CUBIC)


@pytest.mark.parametrize("seed", range(5))
def test_phi0_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    v = random_V(rng, 6, 4, scale=0.5)
    for _ in range(4):
        h = random_V(rng, 6, 4)
        fd = fd_check(lambda s: phi0(v + h * s, CUBIC).value, 0.0, 1.0)
        an = pairing(phi0(v, CUBIC).gradient, h)
        assert an == pytest.approx(fd, rel=1e-6, abs=1e-10)


@given(st.integers(0, 10000))
def test_phi0_hessian_symmetric(seed):
    rng = np.random.default_rng(seed)
    v, h, k = (random_V(rng, 6, 4, scale=0.5) for _ in range(3))
    H = phi0(v, CUBIC).hessian_action
    assert pairing(H(h), k) == pytest.approx(pairing(h, H(k)), rel=1e-10, abs=1e-13)


@given(st.integers(0, 10000), st.floats(0.0, 2 * math.pi))
def test_phi0_translation_equivariance(seed, theta):
    v = random_V(np.random.default_rng(seed), 6, 4, scale=0.5)
    r0, r1 = phi0(v, CUBIC), phi0(time_shift(v, theta), CUBIC)
    assert r1.value == pytest.approx(r0.value, rel=1e-11, abs=1e-13)
    assert np.allclose(r1.gradient.c, time_shift(r0.gradient, theta).c, atol=1e-12)


# solve_Q2 and Psi0


def test_solve_Q2_zero_input():
    z = SpectralField.zeros(8, 8)
    v2, rate = solve_Q2(CUBIC, 0.1, z, z, N=2)
    assert not np.any(v2.c)


def test_solve_Q2_requires_cutoff():
    z = SpectralField.zeros(4, 4)
    with pytest.raises(SpectralError):
        solve_Q2(CUBIC, 0.0, z, z)


def test_solve_Q2_noncontraction_diagnostic():
    v1 = SpectralField.from_modes(8, 8, {(1, 1): 40.0, (-1, 1): 40.0})
    with pytest.raises(ContractionError, match="increase N"):
        solve_Q2(CUBIC, 0.0, v1, SpectralField.zeros(8, 8), N=1)


def test_solve_Q2_contraction_and_start_independence():
    rng = np.random.default_rng(0)
    v1 = project(random_V(rng, 16, 3, scale=0.5), "V1", N=3)
    z = SpectralField.zeros(16, 16)
    tol = 1e-13
    a, rate = solve_Q2(CUBIC, 0.0, v1, z, tol=tol, N=3)
    b, _ = solve_Q2(CUBIC, 0.0, v1, z, tol=tol, N=3,
                    start=project(random_V(rng, 16, 16, scale=0.05), "V2", N=3))
    assert rate <= 0.5
    assert np.max(np.abs(a.c - b.c)) <= 10 * tol


def test_psi0_zero():
    v, g = reduced_psi0(SpectralField.zeros(16, 16), CUBIC, 2)
    assert v == 0.0 and not np.any(g.c)


def test_psi0_gradient_matches_finite_differences():
    F = Psi0(CUBIC, 3)
    rng = np.random.default_rng(1)
    x = 0.4 * rng.standard_normal(F.dim)
    g = F.gradient(x)
    for _ in range(5):
        d = rng.standard_normal(F.dim)
        assert np.dot(g, d) == pytest.approx(fd_check(F.value, x, d), rel=1e-6, abs=1e-9)


@pytest.fixture(scope="module")
def cubic_circle():
    F = Psi0(CUBIC, 3)
    return F, find_critical_circle(F, default_seeds(F, 3), newton_tol=1e-11)


def test_psi0_critical_point_is_phi0_critical(cubic_circle):
    F, circle = cubic_circle
    v1 = F.field(circle.coords)
    v2, rate = solve_Q2(CUBIC, 0.0, v1, SpectralField.zeros(F.L, F.L), N=F.N)
    assert rate <= 0.5
    g = phi0(v1 + v2, CUBIC).gradient
    assert np.max(np.abs(g.c)) < 1e-9
    assert circle.kernel_dim_mod_translation == 0


def test_psi0_translation_invariance(cubic_circle):
    F, circle = cubic_circle
    for theta in np.linspace(0, 2 * math.pi, 7):
        assert F.value(F.shift(circle.coords, theta)) == pytest.approx(circle.value, rel=1e-10)


# loop functionals


def sin_loop(a, L=4):
    b = np.zeros(L)
    b[0] = a
    return LoopFunction(np.zeros(L), b)


@pytest.mark.parametrize("a", [0.0, 0.3, 1.0, 2.5])
def test_psi_cubic_on_sine(a):
    r = psi_cubic(sin_loop(a), 1, TrigPolynomial(1.0))
    assert r.psi_value == pytest.approx(a ** 2 * math.pi / 2 - 9 * math.pi * a ** 4 / 16, abs=1e-12)
    assert r.Rn_value == 0.0


def test_psi_cubic_mean_value_violation():
    with pytest.raises(MeanValueViolation):
        psi_cubic(sin_loop(1.0), 1, TrigPolynomial(0.0, (0.0, 1.0)))


def test_remainder_shrinks_with_n():
    a3 = TrigPolynomial(1.0, (0.0, 0.5))
    rng = np.random.default_rng(3)
    etas = [LoopFunction(0.5 * rng.standard_normal(3), 0.5 * rng.standard_normal(3)) for _ in range(4)]
    sizes = []
    for n in (1, 2, 4, 8):
        grads = [np.linalg.norm(psi_cubic(e, n, a3).gradients[1].coords) for e in etas]
        vals = [abs(psi_cubic(e, n, a3).Rn_value) for e in etas]
        sizes.append((max(grads), max(vals)))
    assert sizes[-1][0] < sizes[0][0] and sizes[-1][1] < sizes[0][1]
    assert sizes[-1][0] < 1e-3 * max(1.0, sizes[0][0])


@pytest.mark.parametrize("a", [0.0, 0.5, 1.3])
def test_psi_quadratic_on_sine(a):
    r = psi_quadratic(sin_loop(a))
    assert r.value == pytest.approx(a ** 2 * math.pi / 2 - a ** 4 * math.pi ** 2 / 4, abs=1e-12)


def test_quadratic_profile_solves_euler_lagrange():
    res = psi_quadratic_el_residual(sin_loop(1 / math.sqrt(math.pi)))
    assert np.max(np.abs(res.coords)) < 1e-15


def test_psi_quadratic_circle_closed_form():
    F = PsiQuadratic(L=6)
    circle = find_critical_circle(F, default_seeds(F, 3, seed=4), newton_tol=1e-13)
    ref = sin_loop(1 / math.sqrt(math.pi), 6).coords
    x = align_phase(circle.coords, ref, F)
    assert np.max(np.abs(x - ref)) < 1e-10
    assert circle.kernel_dim_mod_translation == 0


@pytest.mark.parametrize("F", [PsiQuadratic(L=5), PsiCubic(n=2, a3=TrigPolynomial(1.0, (0.0, 0.5)), L=5)],
                         ids=["quadratic", "cubic"])
def test_loop_functional_derivatives(F):
    rng = np.random.default_rng(7)
    x = 0.5 * rng.standard_normal(F.dim)
    g = F.gradient(x)
    H = F.hessian_raw(x)
    assert np.max(np.abs(H - H.T)) < 1e-10 * max(1.0, np.max(np.abs(H)))
    for _ in range(5):
        d = rng.standard_normal(F.dim)
        assert np.dot(g, d) == pytest.approx(fd_check(F.value, x, d), rel=1e-6, abs=1e-9)
        assert H @ d == pytest.approx(fd_check(F.gradient, x, d), rel=1e-5, abs=1e-7)


@given(st.integers(0, 10000), st.floats(0.0, 2 * math.pi))
def test_loop_translation_invariance(seed, theta):
    rng = np.random.default_rng(seed)
    eta = LoopFunction(rng.standard_normal(4), rng.standard_normal(4))
    a3 = TrigPolynomial(1.0, (0.0, 0.5))
    assert psi_quadratic(eta.shifted(theta)).value == pytest.approx(psi_quadratic(eta).value, rel=1e-10)
    r0, r1 = psi_cubic(eta, 1, a3), psi_cubic(eta.shifted(theta), 1, a3)
    assert r1.psi_value == pytest.approx(r0.psi_value, rel=1e-10, abs=1e-12)


# embedding


def test_embed_examples():
    v = SpectralField.from_modes(6, 6, {(1, 1): 1.0, (-1, 1): 1.0})
    assert np.array_equal(embed_Hn(v, 1).c, v.c)
    assert embed_Hn(v, 3).coef(3, 3) == 1.0
    with pytest.raises(SpectralError):
        embed_Hn(v, 7)


@given(st.integers(0, 10000), st.integers(1, 3))
def test_embed_preserves_quartic_integral(seed, n):
    v = random_V(np.random.default_rng(seed), 12, 4)
    g = grid_for(12, 12, 4)
    q0 = g.integrate(g.synthesize(v.c) ** 4)
    q1 = g.integrate(g.synthesize(embed_Hn(v, n).c) ** 4)
    assert q1 == pytest.approx(q0, rel=1e-10, abs=1e-14)


def test_phi0_quadratic_dense_oracle():
    v = SpectralField.from_modes(2, 2, {(1, 1): 1.0, (-1, 1): 1.0})
    # v^2 = 4 cos^2 t sin^2 x = (1 + cos 2t)(1 - cos 2x); sine coefficients in x via quadrature
    J = 512
    x = (np.arange(4 * J) + 0.5) * math.pi / (4 * J)
    one_minus_cos = 1 - np.cos(2 * x)
    j = np.arange(1, J + 1)
    sj = 2.0 / (4 * J) * (np.sin(np.outer(j, x)) @ one_minus_cos)
    c = np.zeros((5, J), dtype=complex)
    c[2] = sj
    c[0] = c[4] = 0.5 * sj
    sq = SpectralField(c)
    sq_w = project(sq, "W")
    inner = math.pi ** 2 * float(np.sum((sq_w.c * np.conj(apply_L_inverse_W(sq_w).c)).real))
    expected = 0.5 * 2 * math.pi ** 2 * 2 + 0.5 * inner
    assert phi0_quadratic(v, 1.0, J_aux=J) == pytest.approx(expected, rel=1e-8)
