import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aepg import autodiff as ad
from aepg import losses
from aepg.losses import LossSpec

UNIFORM = np.array([[0.0, 0.0]])


def softmax(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def batch(seed, n=6, k=5, scale=2.0):
    rng = np.random.default_rng(seed)
    return rng.normal(0, scale, size=(n, k)), rng.integers(0, k, size=n)


def test_ce_uniform_two_classes():
    loss, grad = losses.ce_loss(UNIFORM, [0])
    assert loss == pytest.approx(math.log(2), abs=1e-15)
    np.testing.assert_allclose(grad, [[-0.5, 0.5]], atol=1e-15)


def test_ce_near_perfect_prediction_has_near_zero_loss():
    loss, _ = losses.ce_loss([[50.0, 0.0, 0.0]], [0])
    assert loss < 1e-20


def test_epg_uniform_two_classes():
    loss, grad = losses.epg_loss(UNIFORM, [0])
    assert loss == pytest.approx(-0.5, abs=1e-15)
    np.testing.assert_allclose(grad, [[-0.25, 0.25]], atol=1e-15)


@pytest.mark.parametrize("k", [2, 3, 7, 100])
def test_epg_uniform_logits_give_minus_one_over_k(k):
    loss, _ = losses.epg_loss(np.zeros((3, k)), [0, 1, k - 1])
    assert loss == pytest.approx(-1.0 / k, abs=1e-15)


def test_aepg_endpoints_and_midpoint():
    z, y = batch(0)
    ce, epg = losses.ce_loss(z, y), losses.epg_loss(z, y)
    assert losses.aepg_loss(z, y, 1.0)[0] == ce[0]
    np.testing.assert_array_equal(losses.aepg_loss(z, y, 1.0)[1], ce[1])
    assert losses.aepg_loss(z, y, 0.0)[0] == epg[0]
    np.testing.assert_array_equal(losses.aepg_loss(z, y, 0.0)[1], epg[1])
    np.testing.assert_allclose(losses.aepg_loss(z, y, 0.5)[1], 0.5 * ce[1] + 0.5 * epg[1], rtol=0, atol=1e-12)


def test_aepg_rejects_alpha_outside_unit_interval():
    with pytest.raises(ValueError):
        losses.aepg_loss(UNIFORM, [0], 1.5)


def test_focal_gamma_zero_is_ce_and_uniform_value():
    z, y = batch(1)
    np.testing.assert_allclose(losses.focal_loss(z, y, 0.0)[1], losses.ce_loss(z, y)[1], atol=1e-15)
    assert losses.focal_loss(UNIFORM, [0], 1.0)[0] == pytest.approx(0.5 * math.log(2), abs=1e-15)


def test_label_smoothing_gamma_zero_is_ce():
    z, y = batch(2)
    ls, ce = losses.label_smoothing_loss(z, y, 0.0), losses.ce_loss(z, y)
    assert ls[0] == pytest.approx(ce[0], abs=1e-14)
    np.testing.assert_allclose(ls[1], ce[1], atol=1e-15)


def test_label_smoothing_kl_term_vanishes_at_uniform_policy():
    z = np.zeros((2, 4))
    ls = losses.label_smoothing_loss(z, [0, 3], 0.3)[0]
    ce = losses.ce_loss(z, [0, 3])[0]
    assert ls == pytest.approx((1 - 0.3) * ce, abs=1e-15)


def test_confidence_penalty_zero_beta_and_uniform_value():
    z, y = batch(3)
    np.testing.assert_allclose(losses.confidence_penalty_loss(z, y, 0.0)[1], losses.ce_loss(z, y)[1], atol=1e-15)
    z = np.zeros((1, 4))
    penalty = losses.confidence_penalty_loss(z, [0], 0.1)[0] - losses.ce_loss(z, [0])[0]
    assert penalty == pytest.approx(-0.1 * math.log(4), abs=1e-15)


def test_entropy_penalty_zero_beta_and_one_hot():
    z, y = batch(4)
    np.testing.assert_allclose(losses.entropy_penalty_loss(z, y, 0.0)[1], losses.ce_loss(z, y)[1], atol=1e-15)
    z = np.array([[800.0, 0.0, 0.0]])
    penalty = losses.entropy_penalty_loss(z, [0], 1.0)[0] - losses.ce_loss(z, [0])[0]
    assert penalty == 0.0


@pytest.mark.parametrize("kind", [k for k in losses.KINDS if k != "REINFORCE"])
def test_analytic_gradient_matches_tape(kind):
    spec = LossSpec(kind)
    for seed in range(20):
        z, y = batch(seed, n=4, k=6)
        alpha = 0.3 if kind == "aEPG" else None
        loss_a, grad_a = spec.analytic(z, y, alpha)
        tape = ad.Tape()
        zt = tape.watch(z, "z")
        out = spec.graph(zt, y, alpha=alpha)
        grad_t = tape.backward(out)["z"]
        assert loss_a == pytest.approx(float(out.data), rel=1e-12, abs=1e-14)
        np.testing.assert_allclose(grad_a, grad_t, rtol=0, atol=1e-14)


@pytest.mark.parametrize("kind,param", [("Focal", 2.0), ("LabelSmooth", 0.1), ("ConfPenalty", 0.1),
                                        ("EntropyPenalty", 1.0)])
def test_nondefault_strength_passes_fd(kind, param):
    key = "gamma" if kind in ("Focal", "LabelSmooth") else "beta"
    spec = LossSpec(kind, **{key: param})
    z, y = batch(11, n=5, k=4, scale=1.0)
    assert ad.fd_check(lambda p: spec.graph(p["z"], y), {"z": z}) < 1e-5


def test_default_strengths():
    assert LossSpec("Focal").gamma == 1.0
    assert LossSpec("LabelSmooth").gamma == 0.01
    assert LossSpec("ConfPenalty").beta == 0.1
    assert LossSpec("EntropyPenalty").beta == 1.0


def test_loss_spec_rejects_unknown_kind():
    with pytest.raises(ValueError):
        LossSpec("Hinge")


def test_labels_are_validated():
    with pytest.raises(ValueError):
        losses.ce_loss(UNIFORM, [2])
    with pytest.raises(ValueError):
        losses.ce_loss(UNIFORM, [0, 1])


# ------------------------------------------------------------------ REINFORCE


def test_enumeration_mode_equals_epg():
    for seed in range(20):
        z, y = batch(seed)
        est = losses.reinforce_grad(z, y, enumerate_actions=True)
        np.testing.assert_allclose(est.grad, losses.epg_loss(z, y)[1], rtol=0, atol=1e-12)


def test_deterministic_policy_sampling_matches_epg_with_zero_variance():
    z = np.array([[0.0, 900.0, 0.0], [900.0, 0.0, 0.0]])
    y = np.array([1, 2])
    rng = np.random.default_rng(0)
    grads = [losses.reinforce_grad(z, y, rng=rng).grad for _ in range(20)]
    for g in grads:
        np.testing.assert_array_equal(g, grads[0])
        np.testing.assert_allclose(g, losses.epg_loss(z, y)[1], atol=1e-300)


def test_sample_actions_inverse_cdf_frequencies():
    probs = np.array([[0.1, 0.6, 0.3]])
    acts = losses.sample_actions(probs, 100_000, np.random.default_rng(5))
    freq = np.bincount(acts.ravel(), minlength=3) / acts.size
    sigma = np.sqrt(probs[0] * (1 - probs[0]) / acts.size)
    assert (np.abs(freq - probs[0]) < 4 * sigma).all()


def test_reinforce_is_reproducible_from_seed():
    z, y = batch(7)
    a = losses.reinforce_grad(z, y, n_samples=8, rng=np.random.default_rng(3))
    b = losses.reinforce_grad(z, y, n_samples=8, rng=np.random.default_rng(3))
    np.testing.assert_array_equal(a.grad, b.grad)
    np.testing.assert_array_equal(a.actions, b.actions)


# ------------------------------------------------------------------ ratio identity


def test_grad_ratio_worked_example():
    assert losses.grad_ratio_check(UNIFORM, 0) == 0.0


def test_grad_ratio_near_one_hot():
    z = np.zeros((1, 10))
    z[0, 3] = 30.0
    assert losses.grad_ratio_check(z, 3) < 1e-10


def test_grad_ratio_skips_vanishing_probability():
    z = np.zeros((1, 3))
    z[0, 0] = 800.0
    assert losses.grad_ratio_check(z, 1) is None


def test_grad_ratio_random_k10():
    rng = np.random.default_rng(9)
    worst = max(losses.grad_ratio_check(rng.normal(0, 2, (1, 10)), int(rng.integers(10))) for _ in range(1000))
    assert worst < 1e-10


logit_rows = arrays(np.float64, st.tuples(st.just(1), st.integers(2, 12)),
                    elements=st.floats(-20, 20, allow_nan=False))


@given(logit_rows, st.data())
@settings(max_examples=200, deadline=None)
def test_epg_gradient_is_pi_times_ce_gradient(z, data):
    y = data.draw(st.integers(0, z.shape[1] - 1))
    g_ce = losses.ce_loss(z, [y])[1]
    g_epg = losses.epg_loss(z, [y])[1]
    p_y = softmax(z)[0, y]
    np.testing.assert_allclose(g_epg, p_y * g_ce, rtol=0, atol=1e-15)
    assert np.abs(g_epg).sum() <= np.abs(g_ce).sum() + 1e-15


@given(logit_rows, st.data(), st.floats(0, 1))
@settings(max_examples=100, deadline=None)
def test_aepg_is_convex_combination(z, data, a):
    y = data.draw(st.integers(0, z.shape[1] - 1))
    mix = losses.aepg_loss(z, [y], a)
    ce, epg = losses.ce_loss(z, [y]), losses.epg_loss(z, [y])
    assert mix[0] == pytest.approx(a * ce[0] + (1 - a) * epg[0], abs=1e-12)
    np.testing.assert_allclose(mix[1], a * ce[1] + (1 - a) * epg[1], rtol=0, atol=1e-15)
