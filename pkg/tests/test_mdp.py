import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aepg import mdp
from aepg.mdp import NoiseChannel


def policy(rng, n, k):
    return rng.dirichlet(np.ones(k), size=n)


def test_zero_one_loss_examples():
    assert mdp.zero_one_loss([0, 1, 2], [0, 1, 2]) == 0.0
    assert mdp.zero_one_loss([1, 0], [0, 1]) == 1.0
    assert mdp.zero_one_loss([0, 1, 1], [0, 1, 0]) == pytest.approx(1 / 3, abs=1e-15)


def test_zero_one_loss_rejects_empty_and_mismatch():
    with pytest.raises(ValueError):
        mdp.zero_one_loss([], [])
    with pytest.raises(ValueError):
        mdp.zero_one_loss([0, 1], [0])


def test_argmax_ties_go_to_lowest_index():
    np.testing.assert_array_equal(mdp.argmax_predictions([[1.0, 1.0, 0.0]]), [0])


def test_reward_is_indicator():
    np.testing.assert_array_equal(mdp.reward([0, 1, 2], [0, 2, 2]), [1.0, 0.0, 1.0])


def test_rl_objective_examples():
    assert mdp.rl_objective(np.eye(3), [0, 1, 2]) == 1.0
    assert mdp.rl_objective(np.full((4, 5), 0.2), [0, 1, 2, 3]) == pytest.approx(0.2, abs=1e-15)


def test_rl_objective_on_argmax_policy_is_accuracy():
    rng = np.random.default_rng(0)
    for _ in range(50):
        scores = rng.normal(size=(20, 6))
        y = rng.integers(0, 6, size=20)
        j = mdp.rl_objective(mdp.deterministic_policy(scores), y)
        # equal up to the rounding of 1 - mean(errors) versus mean(hits)
        assert j == pytest.approx(1.0 - mdp.zero_one_loss(mdp.argmax_predictions(scores), y), abs=1e-15)
        assert j * len(y) == pytest.approx(np.sum(mdp.argmax_predictions(scores) == y), abs=1e-12)


def test_objective_rejects_non_simplex_rows():
    with pytest.raises(ValueError, match="row 1"):
        mdp.rl_objective([[0.5, 0.5], [0.7, 0.7]], [0, 1])


def test_noise_channel_rows_are_distributions():
    m = NoiseChannel(0.3, 7).matrix()
    np.testing.assert_allclose(m.sum(axis=1), 1.0, atol=1e-15)
    assert m[2, 2] == 0.7
    assert m[2, 3] == pytest.approx(0.05)


def test_noisy_objective_eta_zero_is_clean():
    rng = np.random.default_rng(1)
    p = policy(rng, 10, 4)
    y = rng.integers(0, 4, 10)
    assert mdp.noisy_objective_exact(p, y, 0.0) == pytest.approx(mdp.rl_objective(p, y), abs=1e-15)


def test_noisy_objective_degenerate_binary_case():
    rng = np.random.default_rng(2)
    for _ in range(20):
        p = policy(rng, 8, 2)
        assert mdp.noisy_objective_exact(p, rng.integers(0, 2, 8), 0.5) == 0.5


def test_affine_identity_eta_02_k10():
    rng = np.random.default_rng(3)
    p = policy(rng, 50, 10)
    y = rng.integers(0, 10, 50)
    slope, intercept = mdp.noise_affine(0.2, 10)
    assert slope == pytest.approx(1 - 10 * 0.2 / 9)
    assert mdp.noisy_objective_exact(p, y, 0.2) == pytest.approx(slope * mdp.rl_objective(p, y) + intercept,
                                                                 abs=1e-12)


def test_closed_form_matches_channel_matrix_expectation():
    rng = np.random.default_rng(8)
    for k in (2, 3, 10):
        p = policy(rng, 25, k)
        y = rng.integers(0, k, 25)
        for eta in (0.0, 0.2, 0.5, 0.9):
            assert mdp.noisy_objective_exact(p, y, eta) == pytest.approx(
                mdp.noisy_objective_channel(p, y, eta), abs=1e-14)


def test_ranking_examples_and_guard():
    rng = np.random.default_rng(4)
    y = rng.integers(0, 10, 30)
    a, b = policy(rng, 30, 10), policy(rng, 30, 10)
    assert mdp.ranking_preserved(a, b, y, 0.0)
    assert mdp.ranking_preserved(a, b, y, 0.2)
    with pytest.raises(ValueError):
        mdp.ranking_preserved(a, b, y, 0.9)


def test_ranking_ranking_flips_beyond_threshold():
    # with slope < 0 the noisy objective reverses the order
    y = np.array([0, 1])
    good, bad = np.eye(3)[[0, 1]], np.eye(3)[[1, 2]]
    eta = 0.8
    assert mdp.noise_affine(eta, 3)[0] < 0
    clean = mdp.rl_objective(good, y) - mdp.rl_objective(bad, y)
    noisy = mdp.noisy_objective_exact(good, y, eta) - mdp.noisy_objective_exact(bad, y, eta)
    assert clean > 0 > noisy


def test_kl_identity_coefficients_closed_form():
    a, b = mdp.kl_identity_coefficients(0.1, 10)
    assert b == math.log(0.1 / 9)
    assert a == math.log(0.9) - math.log(0.1 / 9)
    assert a > 0


def test_kl_identity_at_noisy_target():
    for k in (2, 5, 10):
        for eta in (0.1, 0.3):
            q = NoiseChannel(eta, k).target(0)
            lhs, rhs, diff = mdp.kl_entropy_identity(q, 0, eta)
            entropy = -float(np.dot(q, np.log(q)))
            assert mdp.kl_divergence(q, q) == 0.0
            assert lhs == -entropy
            a, b = mdp.kl_identity_coefficients(eta, k)
            assert rhs == a * (1 - eta) + b
            assert diff < 1e-15


def test_kl_identity_rejects_zero_probabilities():
    with pytest.raises(ValueError):
        mdp.kl_entropy_identity([1.0, 0.0], 0, 0.1)


def test_mean_entropy_examples():
    assert mdp.mean_entropy(np.eye(4)) == 0.0
    assert mdp.mean_entropy(np.full((3, 5), 0.2)) == pytest.approx(math.log(5), abs=1e-15)
    assert mdp.mean_entropy([[0.5, 0.5], [1.0, 0.0]]) == pytest.approx(math.log(2) / 2, abs=1e-15)


def test_apply_noise_identity_and_full_flip():
    rng = np.random.default_rng(5)
    y = rng.integers(0, 2, 100)
    np.testing.assert_array_equal(mdp.apply_noise(y, NoiseChannel(0.0, 2), rng), y)
    np.testing.assert_array_equal(mdp.apply_noise(y, NoiseChannel(1.0, 2), rng), 1 - y)


def test_apply_noise_flip_rate_binomial_bound():
    rng = np.random.default_rng(6)
    y = rng.integers(0, 10, 100_000)
    noisy = mdp.apply_noise(y, NoiseChannel(0.2, 10), rng)
    assert abs(np.mean(noisy != y) - 0.2) < 0.004


def test_apply_noise_targets_are_uniform_over_other_classes():
    rng = np.random.default_rng(7)
    y = np.zeros(90_000, dtype=int)
    noisy = mdp.apply_noise(y, NoiseChannel(1.0, 4), rng)
    counts = np.bincount(noisy, minlength=4)
    assert counts[0] == 0
    assert (np.abs(counts[1:] / 90_000 - 1 / 3) < 0.006).all()


@given(st.integers(2, 30), st.floats(0.01, 0.99), st.integers(0, 2**31 - 1))
@settings(max_examples=200, deadline=None)
def test_affine_identity_property(k, eta, seed):
    rng = np.random.default_rng(seed)
    p = policy(rng, 7, k)
    y = rng.integers(0, k, 7)
    slope, intercept = mdp.noise_affine(eta, k)
    assert abs(mdp.noisy_objective_exact(p, y, eta) - (slope * mdp.rl_objective(p, y) + intercept)) < 1e-12


@given(st.integers(2, 50), st.floats(0.01, 0.99), st.integers(0, 2**31 - 1))
@settings(max_examples=200, deadline=None)
def test_kl_entropy_identity_property(k, eta, seed):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(k))
    p = np.maximum(p, 1e-300)
    p /= p.sum()
    assert mdp.kl_entropy_identity(p, int(rng.integers(k)), eta)[2] < 1e-12
