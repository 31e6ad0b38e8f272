import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from resonantwave.bifurcation import solve_Q2
from resonantwave.nashmoser import (BranchPoint, SchemeParams, continue_branch_Q1,
                                    nash_moser_solve, p_defect, psi0_circle, q1_defect, q2_defect,
                                    rescale_solution, residual_coefficients, residual_norm)
from resonantwave.report import dumps
from resonantwave.spectral import (NonlinearitySpec, SpectralField, TrigPolynomial, grid_for,
                                   norm_sigma_s, project)

CUBIC = NonlinearitySpec(3, {3: TrigPolynomial(1.0)})
P = SchemeParams(N=3, n_max=3, J=24)


@pytest.fixture(scope="module")
def circle():
    return psi0_circle(CUBIC, P)


@pytest.fixture(scope="module")
def solved(circle):
    return nash_moser_solve(CUBIC, 0.05, circle.representative, P)


@pytest.fixture(scope="module")
def branch(circle):
    return continue_branch_Q1(CUBIC, circle, [0.0, 0.01, 0.02, 0.03, 0.04], P)


# parameters


@pytest.mark.parametrize("kw", [{"tau": 2.5}, {"tau": 1.0}, {"chi": 2.0}, {"gamma": 1.5},
                                {"J": 8}, {"precision": "quad"}])
def test_params_reject_out_of_range(kw):
    with pytest.raises(ValueError):
        SchemeParams(**kw)


@given(st.integers(1, 8), st.integers(1, 4), st.integers(0, 5))
def test_params_invariants(N, L0, n_max):
    p = SchemeParams(N=N, L0=L0, n_max=n_max, J=L0 * 2 ** n_max + 1)
    assert sum(p.gamma_n(n) for n in range(2000)) <= p.sigma_bar / 2 + 1e-15
    for n in range(n_max):
        assert p.L_n(n + 1) == 2 * p.L_n(n)
        assert p.sigma_n(n + 1) == pytest.approx(p.sigma_n(n) - p.gamma_n(n), abs=1e-15)


# residuals


@pytest.mark.parametrize("amp", [1e-2, 1e-4, 1e-6])
def test_kernel_mode_residual_is_purely_nonlinear(amp):
    # cos t sin x solves the linear part at omega = 1, so only the cubic term is left
    u = SpectralField.from_modes(3, 3, {(1, 1): 0.5 * amp, (-1, 1): 0.5 * amp})
    r = residual_norm(CUBIC, u, 1.0)
    assert r == pytest.approx(amp ** 3 * residual_norm(CUBIC, u / amp, 1.0), rel=1e-10)


def test_zero_delta_needs_no_stage(circle):
    pt = nash_moser_solve(CUBIC, 0.0, circle.representative, P)
    assert pt.stages == 0 and pt.accepted and not np.any(pt.w.c)


def test_frequency_identity(solved):
    assert solved.omega ** 2 - 1 == pytest.approx(2 * solved.epsilon, abs=1e-15)
    assert solved.epsilon == 0.05 ** 2


def test_correction_norms_decay_superlinearly(solved):
    h = np.array(solved.h_norm_history)
    assert solved.accepted and len(h) >= 3
    logs = -np.log(h)
    assert np.all(np.diff(logs) > 0)
    assert np.all(logs[1:] / logs[:-1] > 1.0)


def test_full_residual_decreases_over_stages(branch):
    pt = branch[-1]
    w = SpectralField.zeros(pt.w.L, pt.w.J)
    res = []
    for h in [None] + list(pt.h):
        if h is not None:
            w = w + h
        v2, _ = solve_Q2(CUBIC, pt.delta, pt.v1, w, tol=1e-15, N=P.N)
        res.append(residual_norm(CUBIC, pt.v1 + w + v2, pt.omega, P.weights(0), pt.delta))
    assert all(b < a for a, b in zip(res, res[1:]))


def test_stage_equation_solved(solved):
    L_n = P.L_n(solved.stages)
    d = p_defect(CUBIC, solved.delta, solved.v1, solved.w, solved.v2, L_n)
    assert norm_sigma_s(d, P.weights(solved.stages)) <= 1e-12


def test_residual_splits_into_defects(solved):
    pt = solved
    res = residual_coefficients(CUBIC, pt.u, pt.omega, pt.delta)
    eps = pt.epsilon
    L_n = P.L_n(pt.stages)
    q1 = q1_defect(CUBIC, pt.delta, pt.v1, pt.w, pt.v2, P.N)
    q2 = q2_defect(CUBIC, pt.delta, pt.v1, pt.w, pt.v2, P.N)
    pd = p_defect(CUBIC, pt.delta, pt.v1, pt.w, pt.v2, L_n)
    assert np.allclose(project(res, "V1", N=P.N).c, -eps * q1.c, atol=1e-12)
    assert np.allclose(project(res, "V2", N=P.N).c, -eps * q2.c, atol=1e-12)
    assert np.allclose(project(res, "Pn", Ln=L_n).c, -pd.c, atol=1e-12)


def test_tail_bound_from_weights(solved):
    pt = solved
    u = pt.u
    grid = grid_for(u.L, u.J, 3)
    G = SpectralField(grid.analyze(CUBIC.g_pointwise(pt.delta, grid.x[None, :], grid.synthesize(u.c))))
    for n in range(P.n_max):
        band = project(G, "Pn", Ln=P.L_n(n + 1)) - project(G, "Pn", Ln=P.L_n(n))
        lhs = norm_sigma_s(band, P.weights(n + 1))
        rhs = math.exp(-P.L_n(n) * P.gamma_n(n)) * norm_sigma_s(project(G, "W"), P.weights(n))
        assert lhs <= rhs * (1 + 1e-12)


def test_solve_is_deterministic(circle, solved):
    again = nash_moser_solve(CUBIC, 0.05, circle.representative, P)
    assert dumps(again) == dumps(solved)


def test_branch_point_json_roundtrip(solved):
    text = dumps(solved)
    back = BranchPoint.from_dict(json.loads(text))
    assert dumps(back) == text


# continuation


def test_branch_starts_at_circle(branch, circle):
    v0 = project(circle.representative.resized(P.L_max, P.J), "V1", N=P.N)
    assert branch[0].delta == 0.0
    assert np.max(np.abs(branch[0].v1.c - v0.c)) < 1e-10


def test_branch_is_smooth(branch):
    assert len(branch) == 5 and all(p.accepted for p in branch)
    v = np.array([p.v1.c.ravel() for p in branch])
    h = 0.01
    second = np.abs(v[2:] - 2 * v[1:-1] + v[:-2]).max(axis=1) / h ** 2
    assert second.max() < 50.0


def test_branch_deviation_is_second_order(branch):
    u0 = branch[0].u
    r = [norm_sigma_s(p.u * p.delta - u0 * p.delta, P.weights(0)) / p.delta ** 2 for p in branch[1:]]
    assert max(r) < 0.1


def test_branch_residuals_small(branch):
    assert max(p.residual for p in branch) < 1e-8


# physical scale


def test_rescale_zero_delta(branch):
    phys = rescale_solution(branch[0], CUBIC)
    assert not np.any(phys.u_tilde.c) and not np.any(phys.samples)


def test_rescale_frequency_laws():
    assert CUBIC.omega(0.1) ** 2 == pytest.approx(1 + 2 * 0.01, abs=1e-15)
    assert CUBIC.omega(0.1, "quadratic") ** 2 == pytest.approx(1 - 2 * 0.01, abs=1e-15)


def test_physical_residual_scaling(solved):
    phys = rescale_solution(solved, CUBIC)
    assert phys.ratio == pytest.approx(1.0, rel=1e-6)
    assert phys.grid_physical_residual == pytest.approx(phys.physical_residual, rel=1e-6)
    assert phys.samples.shape == (64, 33)
    assert np.allclose(phys.samples[:, 0], 0.0) and np.allclose(phys.samples[:, -1], 0.0, atol=1e-12)
