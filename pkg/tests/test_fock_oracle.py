import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bellmag import core_model as cm
from bellmag import fock_oracle as fo
from bellmag import oracle_suite

P_PEAK = 0.3935


def _coherent_projector(alpha, N):
    u = fo.coherent_amplitudes(alpha, N)
    return np.outer(u, u.conj())


# ---------------------------------------------------------------- states


def test_rho1_vacuum_limit():
    st_ = fo.build_rho1(0.0, 4)
    expected = np.zeros((5, 5))
    expected[0, 0] = 1
    assert np.allclose(st_.data, expected)


@pytest.mark.parametrize("builder", [lambda N: fo.build_rho1(P_PEAK, N), lambda N: fo.build_rho_pair(P_PEAK, 1.0, N)])
def test_trace_one_at_cutoff_40(builder):
    assert builder(40).trace() == pytest.approx(1.0, abs=1e-8)


def test_rho1_diagonal():
    c = fo.build_rho1(0.3, 20).data
    n = np.arange(21)
    assert np.allclose(np.diag(c).real, 0.7 * 0.3**n)


def test_pair_trace_follows_geometric_series():
    st_ = fo.build_rho_pair(P_PEAK, 0.95, 40)
    assert st_.trace() == pytest.approx((1 - P_PEAK) / (1 - P_PEAK * 0.95), abs=1e-8)
    assert st_.trace() == pytest.approx(0.9686, abs=1e-4)
    assert st_.trace() == pytest.approx(fo.expected_pair_trace(P_PEAK, 0.95, 40), rel=1e-14)


def test_pair_without_conversion_is_vacuum_weight():
    c = fo.build_rho_pair(0.4, 0.0, 10).data
    assert c[0, 0] == pytest.approx(0.6)
    assert np.count_nonzero(c) == 1


def test_truncation_warning():
    assert fo.build_rho_pair(0.9, 1.0, 5).warnings
    assert not fo.build_rho_pair(0.1, 1.0, 30).warnings


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 0.8), st.floats(0.0, 1.0))
def test_pair_state_hermitian_psd(p, T):
    st_ = fo.build_rho_pair(p, T, 15)
    assert st_.hermiticity_error() <= 1e-14
    assert st_.min_eigenvalue() >= -1e-12
    assert st_.trace() <= 1.0 + 1e-12


# ---------------------------------------------------------------- coherent states


def test_coherent_amplitudes():
    assert np.allclose(fo.coherent_amplitudes(0, 6), np.eye(7)[0])
    assert np.sum(np.abs(fo.coherent_amplitudes(1.0, 30)) ** 2) == pytest.approx(1.0, abs=1e-12)
    assert abs(fo.coherent_amplitudes(2j, 30)[0]) ** 2 == pytest.approx(math.exp(-4), rel=1e-12)


@given(st.floats(0.0, 3.0), st.integers(5, 60))
def test_coherent_tail_bound(r, N):
    missing = 1.0 - np.sum(np.abs(fo.coherent_amplitudes(r, N)) ** 2)
    assert missing <= fo.coherent_tail(r, N) + 1e-14


def test_choose_cutoff_respects_minimum_and_tails():
    assert fo.choose_cutoff(0.0) == 20
    N = fo.choose_cutoff(0.8, 1.0, (2.0,))
    assert 0.8 ** (N + 1) / 0.2 < 1e-12 and fo.coherent_tail(2.0, N) < 1e-12


# ---------------------------------------------------------------- probabilities


def test_vacuum_probabilities():
    vac = fo.build_rho_pair(0.0, 1.0, 10)
    assert fo.oracle_joint_prob(vac, 0, 0) == pytest.approx(1.0)
    assert fo.oracle_marginal_prob(vac, 0) == pytest.approx(1.0)


def test_origin_and_marginal_values():
    st_ = fo.build_rho_pair(P_PEAK, 1.0, 40)
    assert fo.oracle_joint_prob(st_, 0, 0) == pytest.approx(1 - P_PEAK, abs=1e-9)
    assert fo.oracle_joint_prob(st_, 0.5, -0.5) == pytest.approx(float(cm.joint_click_prob(P_PEAK, 1.0, 0.5, -0.5)), abs=1e-9)
    st39 = fo.build_rho_pair(0.39, 1.0, 50)
    assert fo.oracle_marginal_prob(st39, 1.0) == pytest.approx(0.3314, abs=1e-4)
    assert fo.oracle_marginal_prob(st_, 1.0) == pytest.approx(float(cm.marginal_click_prob(P_PEAK, 1.0, 1.0)), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(
    st.floats(0.0, 0.8),
    st.floats(0.0, 1.0),
    st.builds(complex, st.floats(-1.4, 1.4), st.floats(-1.4, 1.4)),
    st.builds(complex, st.floats(-1.4, 1.4), st.floats(-1.4, 1.4)),
)
def test_oracle_matches_closed_form(p, T, a, b):
    st_ = fo.build_rho_pair(p, T, fo.choose_cutoff(p, T, (a, b)))
    assert fo.oracle_joint_prob(st_, a, b) == pytest.approx(float(cm.joint_click_prob(p, T, a, b)), abs=1e-9)
    assert fo.oracle_marginal_prob(st_, a, 0) == pytest.approx(float(cm.marginal_click_prob(p, T, a)), abs=1e-9)
    assert fo.oracle_marginal_prob(st_, b, 1) == pytest.approx(float(cm.marginal_click_prob(p, T, b)), abs=1e-9)
    assert fo.oracle_correlation(st_, a, b) == pytest.approx(float(cm.correlation(p, T, a, b)), abs=1e-9)


def test_dense_and_paired_paths_agree():
    st_ = fo.build_rho_pair(0.3, 0.8, 25)
    dense = fo.TruncatedState(25, ("A1", "A2"), "density", st_.to_density())
    for a, b in [(0.3, -0.7j), (1 + 0.2j, 0.4)]:
        assert fo.oracle_joint_prob(dense, a, b) == pytest.approx(fo.oracle_joint_prob(st_, a, b), abs=1e-14)
        assert fo.oracle_marginal_prob(dense, b, 1) == pytest.approx(fo.oracle_marginal_prob(st_, b, 1), abs=1e-14)


@pytest.mark.parametrize("p, T, alpha, beta", [(0.3935, 1.0, 0.4, -0.6), (0.6, 0.7, 1.2j, 0.5 - 0.5j), (0.1, 0.3, -1.5, 1.0)])
def test_no_signaling_sum_rule(p, T, alpha, beta):
    """Summing both outcomes on one arm reproduces the single-arm marginal."""
    N = fo.choose_cutoff(p, T, (alpha, beta))
    rho = fo.build_rho_pair(p, T, N).to_density()
    d = N + 1
    Pa, Pb = _coherent_projector(alpha, N), _coherent_projector(beta, N)
    joint = {}
    for oa, A in ((+1, Pa), (-1, np.eye(d) - Pa)):
        for ob, B in ((+1, Pb), (-1, np.eye(d) - Pb)):
            joint[oa, ob] = float(np.real(np.einsum("abcd,ca,db->", rho, A, B)))
    st_ = fo.build_rho_pair(p, T, N)
    assert joint[1, 1] + joint[1, -1] == pytest.approx(fo.oracle_marginal_prob(st_, alpha, 0), abs=1e-10)
    assert joint[1, 1] + joint[-1, 1] == pytest.approx(fo.oracle_marginal_prob(st_, beta, 1), abs=1e-10)


def test_tail_violation_suggests_cutoff():
    st_ = fo.build_rho_pair(0.2, 1.0, 10)
    with pytest.raises(fo.TruncationError) as err:
        fo.oracle_joint_prob(st_, 3.0, 0.0)
    assert err.value.suggested_cutoff > 10
    fo.oracle_joint_prob(fo.build_rho_pair(0.2, 1.0, err.value.suggested_cutoff), 3.0, 0.0)


# ---------------------------------------------------------------- propagators


def test_U1_on_vacuum_with_zero_squeezing():
    st_ = fo.apply_U1_vacuum(0.0, 6)
    assert abs(st_.data[0, 0, 0]) == pytest.approx(1.0)
    assert np.sum(np.abs(st_.data) ** 2) == pytest.approx(1.0)


def test_U1_matches_rho1_away_from_boundary():
    N = 40
    ket = fo.apply_U1_vacuum(P_PEAK, N)
    psi = ket.data[:, 0, :]  # A2 stays in vacuum
    block = psi[: N - fo.GUARD_BAND + 1, : N - fo.GUARD_BAND + 1]
    diag = np.diagonal(block)
    rho1 = fo.build_rho1(P_PEAK, N - fo.GUARD_BAND).data
    assert np.max(np.abs(np.outer(diag, diag.conj()) - rho1)) <= 1e-10
    assert np.max(np.abs(block - np.diag(diag))) <= 1e-12
    assert ket.trace() == pytest.approx(1.0, abs=ket.tail_bound + 1e-12)


def test_U2_identity_at_zero_area():
    ket = fo.apply_U1_vacuum(0.3, 20)
    out = fo.apply_U2(ket, 0.0)
    assert np.allclose(out.data, ket.data, atol=1e-15)


@pytest.mark.parametrize("p, g2tau", [(P_PEAK, -0.5 * math.log(0.05)), (0.2, 0.3), (0.5, 2.5)])
def test_propagator_chain_matches_final_state(p, g2tau):
    assert oracle_suite.chain_deviation(p, g2tau) <= 1e-9


def test_chain_reduced_state_matches_pair_state():
    p, T = P_PEAK, 0.95
    g2tau = -0.5 * math.log1p(-T)
    N = 45
    ket = fo.apply_U2(fo.apply_U1_vacuum(p, N), g2tau)
    assert ket.trace() == pytest.approx(1.0, abs=1e-9)
    keep = N - fo.GUARD_BAND + 1
    # magnon-vacuum weight equals the trace of the closed-form pair state
    mag_vac = np.sum(np.abs(ket.data[:keep, :keep, 0]) ** 2)
    assert mag_vac == pytest.approx((1 - p) / (1 - p * T), abs=1e-9)
    reduced = ket.reduce(["A1", "A2"])
    assert reduced.trace() == pytest.approx(1.0, abs=1e-9)
    assert reduced.min_eigenvalue() >= -1e-12


def test_propagators_reject_mixed_input():
    with pytest.raises(ValueError):
        fo.apply_U1(fo.build_rho_pair(0.2, 1.0, 5), 0.2)


# ---------------------------------------------------------------- loss channel


def test_loss_identity_and_single_photon():
    one = np.zeros((4, 4, 4, 4))
    one[1, 0, 1, 0] = 1.0
    st_ = fo.TruncatedState(3, ("A1", "A2"), "density", one)
    assert np.allclose(fo.apply_loss(st_, 1.0).data, one)
    out = fo.apply_loss(st_, 0.7).data
    assert out[1, 0, 1, 0] == pytest.approx(0.7)
    assert out[0, 0, 0, 0] == pytest.approx(0.3)
    assert np.sum(np.abs(out)) == pytest.approx(1.0)


@settings(max_examples=6, deadline=None)
@given(st.floats(0.0, 0.5), st.floats(0.05, 1.0))
def test_loss_preserves_trace_and_positivity(p, eta):
    st_ = fo.build_rho_pair(p, 1.0, 14)
    out = fo.apply_loss(st_, eta)
    assert out.trace() == pytest.approx(st_.trace(), abs=1e-12)
    assert out.min_eigenvalue() >= -1e-12
    assert out.hermiticity_error() <= 1e-13


@pytest.mark.parametrize("p, eta, a, b", [(P_PEAK, 0.9, 0.4, 0.4), (P_PEAK, 0.8, 0.5, 0.0), (0.2, 0.6, 0.3 - 0.8j, -1.0)])
def test_loss_channel_reproduces_efficiency_q_functions(p, eta, a, b):
    N = fo.choose_cutoff(p, 1.0, (a, b))
    lossy = fo.apply_loss(fo.build_rho_pair(p, 1.0, N), eta)
    assert fo.lossy_q2(lossy, eta, a, b) == pytest.approx(float(cm.q2_eta(p, eta, a, b)), abs=1e-8)
    assert fo.lossy_q1(lossy, eta, a) == pytest.approx(float(cm.q1_eta(p, eta, a)), abs=1e-8)


def test_efficiency_q_is_not_the_plain_lossy_q():
    """Without the sqrt(eta) rescaling of the displacement the two models differ."""
    p, eta, a, b = P_PEAK, 0.8, 0.5, 0.5
    N = fo.choose_cutoff(p, 1.0, (a, b))
    lossy = fo.apply_loss(fo.build_rho_pair(p, 1.0, N), eta)
    naive = fo.oracle_joint_prob(lossy, a, b) / math.pi**2
    assert abs(naive - float(cm.q2_eta(p, eta, a, b))) > 1e-3


# ---------------------------------------------------------------- suite


def test_oracle_suite_small_sample():
    results = oracle_suite.run_suite(samples=20, seed=3, chain_samples=2, loss_samples=1)
    assert all(r.passed for r in results)
    assert {r.name for r in results} == {"joint", "marginal", "correlation", "chsh", "propagator_chain", "loss_channel"}


def test_oracle_suite_detects_impossible_tolerance():
    results = oracle_suite.run_suite(samples=2, seed=3, tol=1e-18, chain_samples=1, loss_samples=1)
    failing = [r for r in results if not r.passed]
    assert failing and all(r.worst for r in failing)
