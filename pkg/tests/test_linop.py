import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from resonantwave.linop import (LinearizedOperator, PositivityError, ResonantLinearization,
                                TruncationTooSmall, alpha_k, classify_pair, eigen_Sk,
                                invert_Ln_direct, invert_Ln_structured, mean_value_M,
                                melnikov_test, norm_constant_audit, smalldivisor_audit,
                                weighted_operator_norm)
from resonantwave.spectral import (NonlinearitySpec, NormWeights, SpectralField, TrigPolynomial,
                                   norm_sigma_s)

from helpers import random_V

CUBIC = NonlinearitySpec(3, {3: TrigPolynomial(1.0)})
A0 = TrigPolynomial(0.4, (0.0, 1.0), (0.5,))       # 0.4 + cos 2x + 0.5 sin x


# mean value


def test_mean_value_at_zero():
    z = SpectralField.zeros(4, 4)
    assert mean_value_M(CUBIC, 0.1, z, z, z) == 0.0


def test_mean_value_single_mode():
    u = SpectralField.from_modes(4, 4, {(1, 1): 1.0, (-1, 1): 1.0})
    z = SpectralField.zeros(4, 4)
    assert mean_value_M(CUBIC, 0.0, u, z, z) == pytest.approx(3.0, rel=1e-13)


def test_mean_value_two_integration_orders():
    v1 = random_V(np.random.default_rng(2), 12, 2, scale=0.5)
    op = LinearizedOperator(CUBIC, 0.2, v1, SpectralField.zeros(12, 12), 4, 2)
    assert op.mean_value() == pytest.approx(op.a0_profile.mean(), abs=1e-12)
    assert op.mean_value() == pytest.approx(mean_value_M(CUBIC, 0.2, v1, op.u - v1, SpectralField.zeros(12, 12)),
                                            abs=1e-12)


# Sturm-Liouville blocks


def test_eigen_unperturbed():
    es = eigen_Sk(3, 0.0, A0, 20)
    assert np.allclose(es.eigenvalues, es.modes.astype(float) ** 2)
    assert np.allclose(np.abs(es.vectors), np.eye(len(es.modes)))


def test_eigen_constant_profile_shift():
    es = eigen_Sk(2, 0.05, TrigPolynomial(1.5), 16)
    assert np.allclose(es.eigenvalues, es.modes ** 2 + 0.05 * 1.5, atol=1e-12)


def test_eigen_errors():
    with pytest.raises(PositivityError):
        eigen_Sk(1, 1.0, TrigPolynomial(2.0), 8)
    with pytest.raises(TruncationTooSmall):
        eigen_Sk(8, 0.1, A0, 8)


@pytest.mark.parametrize("k", [0, 1, 5])
def test_eigen_invariants(k):
    eps = 0.2
    es = eigen_Sk(k, eps, A0, 48)
    assert es.residual() < 1e-9
    assert np.allclose(es.vectors.T @ es.vectors, np.eye(len(es.modes)), atol=1e-10)
    sup = A0.sup_norm()
    assert np.all(np.abs(es.eigenvalues - es.modes ** 2) <= abs(eps) * sup + 1e-12)
    lam = es.eigenvalues
    for a in range(len(lam)):
        for b in range(a + 1, len(lam)):
            assert abs(lam[b] - lam[a]) >= es.modes[a] + es.modes[b] - 2 - 1e-8
    assert np.array_equal(eigen_Sk(-k, eps, A0, 48).eigenvalues, lam)


def test_eigen_asymptotics_single_constant():
    J, eps = 96, 0.05
    es = eigen_Sk(2, eps, A0, J)
    M = A0.mean()
    j = np.arange(J // 4, J // 2 + 1)
    dev = np.array([jj * abs(es.eigenvalue(jj) - jj ** 2 - eps * M) for jj in j])
    assert dev.max() < 1.0
    assert dev[len(dev) // 2:].max() <= 1.2 * dev[: len(dev) // 2].max()


def test_eigenvector_proximity_constant():
    eps = 0.05
    es = eigen_Sk(1, eps, A0, 96)
    scale = eps * A0.sup_norm()
    C = []
    for i, j in enumerate(es.modes[:40]):
        e = np.zeros(len(es.modes))
        e[i] = 1.0
        C.append(j * np.linalg.norm(es.vectors[:, i] - e) / scale)
    C = np.array(C)
    assert np.all(np.isfinite(C))
    assert C[20:].max() <= 1.5 * C[5:20].max()


# small divisors


def test_alpha_unperturbed_closed_form():
    for k in range(1, 8):
        a, j = alpha_k(eigen_Sk(k, 0.0, A0, 40), 1.1)
        cand = [abs(1.21 * k * k - jj * jj) for jj in range(1, 2 * k + 9) if jj != k]
        assert a == pytest.approx(min(cand))


def test_alpha_lower_bound_low_modes():
    delta = 0.3
    eps = delta ** 2
    omega = math.sqrt(1 + 2 * eps)
    for k in range(1, int(1 / (3 * eps)) + 1):
        a, _ = alpha_k(eigen_Sk(k, eps, A0, 4 * k + 16), omega)
        assert a >= (k + 1) / 8


def test_melnikov_gamma_zero_accepts():
    assert melnikov_test(0.3, CUBIC, 2.0, 32, 0.0, 1.5).accepted


def test_melnikov_constructed_resonance():
    eps = (1.05 ** 2 - 1) / 2
    rep = melnikov_test(math.sqrt(eps), CUBIC, 0.0, 24, 0.01, 1.5)
    assert not rep.accepted
    assert any(v[0] == 20 and v[1] == 21 and v[2] == "first" for v in rep.violations)


@given(st.floats(0.05, 0.5), st.floats(1e-4, 0.05), st.floats(-3.0, 3.0))
def test_melnikov_monotone_in_gamma(delta, gamma, M):
    a = melnikov_test(delta, CUBIC, M, 16, gamma, 1.5)
    b = melnikov_test(delta, CUBIC, M, 16, 2 * gamma, 1.5)
    assert a.accepted == (not a.violations)
    assert set(v[:3] for v in a.violations) <= set(v[:3] for v in b.violations)
    if not a.accepted:
        assert not b.accepted


def test_melnikov_report_roundtrip():
    rep = melnikov_test(math.sqrt((1.05 ** 2 - 1) / 2), CUBIC, 0.0, 24, 0.01, 1.5)
    from resonantwave.linop import MelnikovReport
    assert MelnikovReport.from_dict(rep.to_dict()) == rep


def test_classify_pair_cases():
    assert classify_pair(1, 30, 2, 31, 0.1, 0.5) == 1
    assert classify_pair(2, 3, 3, 4, 0.1, 0.5) == 2


# operator


@pytest.fixture(scope="module")
def operator():
    v1 = random_V(np.random.default_rng(4), 16, 2, scale=0.4)
    return LinearizedOperator(CUBIC, 0.3, v1, SpectralField.zeros(16, 16), 4, 2)


def test_linear_equation_is_diagonal():
    z = SpectralField.zeros(10, 10)
    op = LinearizedOperator(CUBIC, 0.3, z, z, 4, 2)
    A = op.dense()
    assert np.allclose(A, np.diag(op.omega ** 2 * op.modes[:, 0] ** 2 - op.modes[:, 1] ** 2))
    assert np.allclose(invert_Ln_direct(op), np.diag(1 / np.diag(A)))
    assert np.allclose(invert_Ln_structured(op).inverse, np.diag(1 / np.diag(A)))


def test_D_diagonalizes_in_eigenbases(operator):
    D, M1, M2 = operator.blocks()
    err = 0.0
    for l, idx in operator.blocks_idx.items():
        es = operator.eigs[abs(l)]
        Phi = es.vectors
        rebuilt = Phi @ np.diag(operator._dvals[abs(l)]) @ Phi.T
        err = max(err, np.linalg.norm(D[np.ix_(idx, idx)] - rebuilt, 2))
    assert err < 1e-10


def test_M1_has_no_time_diagonal_blocks(operator):
    _, M1, _ = operator.blocks()
    for idx in operator.blocks_idx.values():
        assert not np.any(M1[np.ix_(idx, idx)])


def test_structured_inverse_matches_direct(operator):
    direct = invert_Ln_direct(operator)
    w = operator.weights(NormWeights(0.0, 1.0))
    diff = weighted_operator_norm(invert_Ln_structured(operator).inverse - direct, w)
    assert diff / weighted_operator_norm(direct, w) < 1e-8


def test_matrix_free_apply_and_solve(operator):
    rng = np.random.default_rng(9)
    x = rng.standard_normal(operator.size) + 1j * rng.standard_normal(operator.size)
    assert np.allclose(operator.apply(x), operator.dense() @ x, atol=1e-12)
    assert np.allclose(operator.solve(operator.dense() @ x), x, atol=1e-9)


def test_resonant_linearization_detected():
    eps = 1.5                     # omega = 2: k = 1 meets j = 2 exactly
    spec = NonlinearitySpec(2, {2: TrigPolynomial(1.0)})
    z = SpectralField.zeros(6, 6)
    with pytest.raises(ResonantLinearization) as info:
        LinearizedOperator(spec, eps, z, z, 2, 2)
    assert (info.value.k, info.value.j) == (1, 2)


def test_smalldivisor_audit_symmetry_and_stability(operator):
    tab = smalldivisor_audit(operator.eigs, operator.omega, operator.eps, 0.05, 1.5)
    alph = {r[0]: r[2] for r in tab.rows}
    for k in list(alph):
        assert alph[k] == alph.get(-k, alph[k])
    assert math.isfinite(tab.fitted_C) and not tab.violations
    assert sum(tab.case_counts.values()) == len(tab.rows)
    assert tab.beta == pytest.approx(1 / 3) and tab.extra["beta_bracket"] == pytest.approx(0.25)


def test_norm_constants_finite(operator):
    c = norm_constant_audit(operator, 0.05, 1.5)
    assert all(math.isfinite(v) for v in c.values())
    assert c["U_inv_norm"] >= 1.0 - 1e-12


@pytest.mark.parametrize("l", [5, 6, 9])
def test_smoothing_estimate_single_modes(l):
    Ln, s1, s2 = 5, 0.4, 0.1
    u = SpectralField.from_modes(10, 10, {(l, 3): 1.0})
    ratio = norm_sigma_s(u, NormWeights(s2, 1.0)) / norm_sigma_s(u, NormWeights(s1, 1.0))
    assert ratio == pytest.approx(math.exp(-l * (s1 - s2)), rel=1e-14)
    assert ratio <= math.exp(-Ln * (s1 - s2)) * (1 + 1e-14)
