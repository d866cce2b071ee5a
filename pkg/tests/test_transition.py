import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmnem.graph import Network, all_networks, graph_distance
from hmnem.transition import (
    log_binomials,
    log_jacobian,
    log_path_transition,
    log_sigmoid,
    log_transition_normalizer,
    log_transition_normalizer_kappa,
    log_transition_prob,
    logit,
    sigmoid,
)

LAMBDAS = [0.1, 0.5, 0.9]


def test_normalizer_hand_value():
    # terms for distance 0, 1, 2: lam/(1-lam) = 1, 2*lam = 1, lam*(1-lam) = 0.25
    assert log_transition_normalizer(0.5, 2) == pytest.approx(math.log(2.25), abs=1e-14)


def test_transition_prob_hand_value():
    g = Network.empty(2)
    h = Network.from_edges(2, [(0, 1)])
    assert math.exp(log_transition_prob(g, h, 0.5)) == pytest.approx(0.5 / 2.25, abs=1e-15)


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("lam", LAMBDAS)
def test_normalizer_brute_force_and_graph_independent(n, lam):
    graphs = list(all_networks(n))
    for u in (graphs[0], graphs[-1], graphs[len(graphs) // 3]):
        brute = sum(lam * (1 - lam) ** (graph_distance(u, v) - 1) for v in graphs)
        assert math.exp(log_transition_normalizer(lam, n)) == pytest.approx(brute, rel=1e-12)


@pytest.mark.parametrize("n", [2, 3, 6])
@pytest.mark.parametrize("lam", [0.01, 0.1, 0.5, 0.9, 0.999])
def test_normalizer_closed_form(n, lam):
    # binomial theorem: sum_e C(n_e, e) (1-lam)^e = (2-lam)^n_e
    n_e = n * (n - 1)
    closed = math.log(lam) - math.log1p(-lam) + n_e * math.log(2 - lam)
    assert log_transition_normalizer(lam, n) == pytest.approx(closed, abs=1e-12)


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("lam", [0.05, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99])
def test_successor_distribution_sums_to_one(n, lam):
    graphs = list(all_networks(n))
    for u in graphs[:: max(1, len(graphs) // 7)]:
        total = sum(math.exp(log_transition_prob(u, v, lam)) for v in graphs)
        assert abs(total - 1.0) < 1e-12


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("lam", LAMBDAS)
def test_exponent_forms_agree_after_normalisation(n, lam):
    graphs = list(all_networks(n))
    u = graphs[5 % len(graphs)]
    w_a = np.array([(1 - lam) ** graph_distance(u, v) for v in graphs])
    w_b = np.array([lam * (1 - lam) ** (graph_distance(u, v) - 1) for v in graphs])
    p_a, p_b = w_a / w_a.sum(), w_b / w_b.sum()
    ours = np.array([math.exp(log_transition_prob(u, v, lam)) for v in graphs])
    assert np.max(np.abs(p_a - p_b)) < 1e-12
    assert np.max(np.abs(ours - p_b)) < 1e-12


@settings(max_examples=100, deadline=None)
@given(st.floats(0.001, 0.999), st.integers(0, 30), st.integers(0, 30))
def test_ratio_cancels_normaliser(lam, e1, e2):
    lz = log_transition_normalizer(lam, 6)
    lp = [math.log(lam) + (e - 1) * math.log1p(-lam) - lz for e in (e1, e2)]
    assert lp[1] - lp[0] == pytest.approx((e2 - e1) * math.log1p(-lam), abs=1e-10)


def test_concentrates_on_self_transition_near_one():
    g = Network.empty(3)
    assert math.exp(log_transition_prob(g, g, 0.999)) > 0.99


@pytest.mark.parametrize("lam", [0.01, 0.3, 0.5, 0.8, 0.99])
def test_unnormalised_weight_strictly_decreasing(lam):
    w = [math.log(lam) + (e - 1) * math.log1p(-lam) for e in range(31)]
    assert all(a > b for a, b in zip(w, w[1:]))


def test_normalizer_rejects_bad_lambda():
    for lam in (0.0, 1.0, -0.5, 1.5):
        with pytest.raises(ValueError):
            log_transition_normalizer(lam, 3)
    with pytest.raises(ValueError):
        log_transition_prob(Network.empty(2), Network.empty(3), 0.5)


def test_log_binomials():
    lb = log_binomials(3)
    assert np.allclose(np.exp(lb), [math.comb(6, e) for e in range(7)], rtol=1e-12)
    # n = 12 gives n_e = 132, beyond exact 64-bit factorials
    assert np.exp(log_binomials(12)).sum() == pytest.approx(2.0 ** 132, rel=1e-10)


def test_sigmoid_logit():
    assert sigmoid(0.0) == 0.5
    for k in np.linspace(-30, 30, 121):
        lam = sigmoid(k)
        # float64 lambda carries one ulp of error, amplified by 1 / (lam (1 - lam))
        tol = 1e-12 + 2 * np.spacing(lam) / (lam * (1 - lam))
        assert logit(lam) == pytest.approx(k, abs=tol)
        if abs(k) <= 5:
            assert abs(logit(lam) - k) < 1e-12
    assert math.exp(log_jacobian(0.0)) == pytest.approx(0.25, abs=1e-15)
    for lam in (0.0, 1.0):
        with pytest.raises(ValueError):
            logit(lam)


@pytest.mark.parametrize("k", [-800.0, -40.0, 0.3, 40.0, 800.0])
def test_log_sigmoid_stays_finite(k):
    assert math.isfinite(log_sigmoid(k)) and math.isfinite(log_sigmoid(-k))
    assert math.isfinite(log_transition_normalizer_kappa(k, 6))


def test_kappa_normalizer_matches_lambda_form():
    for lam in LAMBDAS:
        assert log_transition_normalizer_kappa(logit(lam), 4) == pytest.approx(
            log_transition_normalizer(lam, 4), abs=1e-12)


def test_path_transition_sum():
    path = [Network.empty(3), Network.from_edges(3, [(0, 1)]), Network.from_edges(3, [(0, 1), (2, 0), (1, 2)])]
    k = logit(0.3)
    expected = sum(log_transition_prob(a, b, 0.3) for a, b in zip(path[:-1], path[1:]))
    assert log_path_transition(path, k) == pytest.approx(expected, abs=1e-12)
    assert log_path_transition(path[:1], k) == 0.0
