import numpy as np
import pytest
from scipy import stats

from hmnem.graph import Network, graph_distance, is_transitively_closed, state_matrix
from hmnem.sampler import SamplerConfig
from hmnem.simulate import (
    SimConfig,
    add_noise,
    coverage_sweep,
    evolve_network,
    flip_count_distribution,
    generate_effects,
    generate_initial_network,
    reporter_attachments,
    run_grid,
    sensitivity_sweep,
    simulate,
    subsample_time,
    time_subsampling_study,
)
from hmnem.likelihood import EffectDataset

A, B, C, D = range(4)
TINY = SamplerConfig(iterations=300, burn_in=100, thin=10)


def test_initial_network_flip_count():
    rng = np.random.default_rng(0)
    for _ in range(200):
        g = generate_initial_network(6, 0.10, rng)
        assert g.n_edges == 3 and is_transitively_closed(g)


def test_initial_network_two_nodes():
    rng = np.random.default_rng(1)
    seen = {generate_initial_network(2, 0.5, rng) for _ in range(100)}
    assert seen == {Network.from_edges(2, [(0, 1)]), Network.from_edges(2, [(1, 0)])}


def test_initial_network_always_closed():
    rng = np.random.default_rng(2)
    assert all(is_transitively_closed(generate_initial_network(5, 0.2, rng)) for _ in range(10_000))


def test_initial_network_errors():
    with pytest.raises(ValueError):
        generate_initial_network(4, 0.0, np.random.default_rng(0))
    # a zero attempt budget exhausts the rejection loop immediately
    with pytest.raises(RuntimeError):
        generate_initial_network(3, 1.0, np.random.default_rng(0), max_attempts=0)


def test_flip_count_two_nodes_hand_values():
    assert np.allclose(flip_count_distribution(2, 0.5), [1 / 2.25, 1 / 2.25, 0.25 / 2.25], atol=1e-15)


def test_flip_count_empirical_two_nodes():
    rng = np.random.default_rng(3)
    g0 = Network.empty(2)
    counts = np.bincount([graph_distance(g0, evolve_network(g0, 0.5, rng, closed=False))
                          for _ in range(100_000)], minlength=3)
    assert np.max(np.abs(counts / counts.sum() - [0.444, 0.444, 0.111])) < 0.02


@pytest.mark.parametrize("lam", [0.1, 0.5, 0.9])
def test_flip_count_chi_square_three_nodes(lam):
    rng = np.random.default_rng(4)
    g0 = Network.from_edges(3, [(0, 1)])
    p = flip_count_distribution(3, lam)
    obs = np.bincount([graph_distance(g0, evolve_network(g0, lam, rng, closed=False))
                       for _ in range(20_000)], minlength=7)
    # fold sparse cells into their densest neighbour so every expected count is >= 5
    exp = p * obs.sum()
    keep = np.flatnonzero(exp >= 5)
    lo, hi = keep[0], keep[-1]
    o = obs[lo:hi + 1].astype(float)
    e = exp[lo:hi + 1].copy()
    o[0] += obs[:lo].sum()
    e[0] += exp[:lo].sum()
    o[-1] += obs[hi + 1:].sum()
    e[-1] += exp[hi + 1:].sum()
    assert stats.chisquare(o, e).pvalue > 1e-3


def test_evolve_frozen_near_one_and_closed():
    rng = np.random.default_rng(5)
    g = Network.from_edges(4, [(A, B), (A, C), (C, D), (A, D)])
    assert all(evolve_network(g, 1 - 1e-9, rng) == g for _ in range(200))
    assert all(is_transitively_closed(evolve_network(g, 0.3, rng)) for _ in range(500))
    with pytest.raises(ValueError):
        flip_count_distribution(3, 1.0)


def test_effects_toy_network():
    g = Network.from_edges(4, [(A, B), (A, C), (C, D), (A, D)])
    att = [B] * 4 + [D] * 4 + [C] * 2
    (ds,) = generate_effects([g], att, 1)
    S = state_matrix(g)
    assert np.array_equal(ds.data, S[att])
    # reporters on D respond to A, C, D; those on B only to A, B
    assert ds.data[4].tolist() == [1, 0, 1, 1]
    assert ds.data[0].tolist() == [1, 1, 0, 0]


def test_effects_empty_network_and_replicates():
    att = reporter_attachments(3, 2)
    (ds,) = generate_effects([Network.empty(3)], att, 3)
    assert ds.data.shape == (6, 9)
    for i, a in enumerate(att):
        for c, (k, _) in enumerate(ds.columns):
            assert ds.data[i, c] == (a == k)
    blocks = ds.data.reshape(6, 3, 3)
    assert np.all(blocks == blocks[:, :, :1])


def test_add_noise_identity_and_extremes():
    (ds,) = generate_effects([Network.from_edges(3, [(0, 1)])], reporter_attachments(3, 4), 2)
    rng = np.random.default_rng(6)
    assert np.array_equal(add_noise(ds, 0.0, 0.0, rng).data, ds.data)
    out = add_noise(ds, 1.0, 0.0, rng).data
    assert np.all(out == 1)
    with pytest.raises(ValueError):
        add_noise(ds, -0.1, 0.0, rng)


@pytest.mark.parametrize("alpha,beta", [(0.1, 0.3), (0.3, 0.1)])
def test_add_noise_rates_binomial(alpha, beta):
    rng = np.random.default_rng(7)
    data = (rng.random((100, 200)) < 0.5).astype(np.uint8)
    ds = EffectDataset(data, 2, [(k % 2, k // 2) for k in range(200)])
    noisy = add_noise(ds, alpha, beta, rng).data
    for val, rate in ((0, alpha), (1, beta)):
        cells = data == val
        N = int(cells.sum())
        flipped = int((noisy[cells] != val).sum())
        lo, hi = stats.binom.interval(0.99, N, rate)
        assert lo <= flipped <= hi


def test_subsample_time():
    gt = simulate(SimConfig(T=128, n=3, seed=1))
    data, truth = subsample_time(gt.noisy_data, gt.networks, 1)
    assert data == gt.noisy_data and truth == gt.networks
    data, truth = subsample_time(gt.noisy_data, gt.networks, 32)
    assert len(data) == len(truth) == 4
    assert truth == [gt.networks[i] for i in (0, 32, 64, 96)]
    with pytest.raises(ValueError):
        subsample_time(gt.noisy_data[:10], None, 10)
    with pytest.raises(ValueError):
        subsample_time(gt.noisy_data, None, 0)


def test_simulate_contract():
    cfg = SimConfig(seed=11)
    gt = simulate(cfg)
    assert len(gt.networks) == cfg.T and all(is_transitively_closed(g) for g in gt.networks)
    assert gt.noisy_data[0].data.shape == (cfg.n * cfg.n_r, cfg.n * cfg.n_p)
    again = simulate(cfg)
    assert again.networks == gt.networks
    assert all(np.array_equal(a.data, b.data) for a, b in zip(again.noisy_data, gt.noisy_data))
    clean = simulate(SimConfig(seed=11, alpha=0.0, beta=0.0))
    assert clean.networks == gt.networks
    assert all(np.array_equal(a.data, b.data) for a, b in zip(clean.noisy_data, clean.clean_data))


def test_simconfig_validation():
    for bad in ({"n": 1}, {"T": 0}, {"alpha": 1.0}, {"lambda_true": 1.0}, {"initial_flip_fraction": 0.0}):
        with pytest.raises(ValueError):
            SimConfig(**bad)


def test_grid_records_and_summaries():
    recs = run_grid([0.9], [0.1], [0.1, 0.2], 2, TINY, base=SimConfig(T=3, n=3), seed=5)
    assert len(recs) == 4
    for r in recs:
        assert 0 <= r.accuracy <= 1 and r.mc_error == pytest.approx(abs(r.posterior_mean - 0.9))
        assert r.covers_lambda == (r.hpd_lambda_lower <= 0.9 <= r.hpd_lambda_upper)
    again = run_grid([0.9], [0.1], [0.1, 0.2], 2, TINY, base=SimConfig(T=3, n=3), seed=5)
    assert again == recs
    _, summ = sensitivity_sweep(records=recs)
    assert [row["runs"] for row in summ] == [2, 2]
    _, cov = coverage_sweep(records=recs)
    assert all(0 <= row["coverage_lambda"] <= 1 for row in cov)


def test_time_subsampling_rows():
    rows = time_subsampling_study(intervals=(4, 1), replicates=2, base=SimConfig(T=8, n=3, lambda_true=0.9),
                                  sampler_config=TINY, seed=3)
    assert [(r["replicate"], r["interval"], r["timepoints"]) for r in rows] == [
        (0, 4, 2), (0, 1, 8), (1, 4, 2), (1, 1, 8)]
    assert all(0 < r["posterior_mean"] < 1 for r in rows)
