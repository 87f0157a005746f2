"""Classification as a one-step MDP: rewards, objectives, and label-noise identities.

States are inputs, actions are class labels, and the reward is 1 for the true
class and 0 otherwise. The expected reward of a policy over a batch is then the
mean true-class probability, and its value on a deterministic argmax policy is
the accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SIMPLEX_TOL = 1e-9
ZERO_DIFF = 1e-12


@dataclass(frozen=True)
class NoiseChannel:
    """Symmetric label noise: keep w.p. 1-eta, else flip uniformly to another class."""

    eta: float
    n_classes: int

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if self.n_classes < 2:
            raise ValueError("symmetric noise needs at least 2 classes")

    def matrix(self) -> np.ndarray:
        k = self.n_classes
        m = np.full((k, k), self.eta / (k - 1))
        np.fill_diagonal(m, 1.0 - self.eta)
        return m

    def target(self, true_class: int) -> np.ndarray:
        """Target distribution over observed labels given the true class."""
        return self.matrix()[true_class]


def reward(labels, actions) -> np.ndarray:
    return (np.asarray(labels) == np.asarray(actions)).astype(np.float64)


def argmax_predictions(scores) -> np.ndarray:
    # np.argmax returns the first maximum, so ties go to the lowest class index
    return np.argmax(np.asarray(scores), axis=1)


def zero_one_loss(predictions, labels) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.size == 0:
        raise ValueError("zero_one_loss of an empty batch")
    if predictions.shape != labels.shape:
        raise ValueError(f"shape mismatch: {predictions.shape} vs {labels.shape}")
    return float(np.mean(predictions != labels))


def _check_simplex(probs) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ValueError("expected a 2-D array of probability rows")
    bad = np.abs(probs.sum(axis=1) - 1.0) > SIMPLEX_TOL
    if bad.any() or (probs < 0).any():
        row = int(np.argmax(bad)) if bad.any() else int(np.argmax((probs < 0).any(axis=1)))
        raise ValueError(f"row {row} is not a probability distribution")
    return probs


def rl_objective(probs, labels) -> float:
    """Expected 0/1 reward averaged uniformly over the batch."""
    probs = _check_simplex(probs)
    labels = np.asarray(labels, dtype=np.intp)
    return float(probs[np.arange(len(labels)), labels].mean())


def deterministic_policy(scores) -> np.ndarray:
    """One-hot policy on the argmax class of each row."""
    scores = np.asarray(scores)
    out = np.zeros(scores.shape)
    out[np.arange(scores.shape[0]), argmax_predictions(scores)] = 1.0
    return out


def noisy_objective_exact(probs, labels, eta: float) -> float:
    """Expected reward when observed labels pass through symmetric noise.

    Exact expectation over the noise, per sample:
    ``(1 - eta) pi(y) + eta / (K - 1) * (1 - pi(y))``.
    """
    probs = _check_simplex(probs)
    k = probs.shape[1]
    if k < 2:
        raise ValueError("noisy objective needs at least 2 classes")
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    labels = np.asarray(labels, dtype=np.intp)
    py = probs[np.arange(len(labels)), labels]
    return float(((1.0 - eta) * py + eta / (k - 1) * (1.0 - py)).mean())


def noisy_objective_channel(probs, labels, eta: float) -> float:
    """Same expectation taken through the channel matrix: ``mean_n sum_j T[y_n, j] pi_n(j)``."""
    probs = _check_simplex(probs)
    rows = NoiseChannel(eta, probs.shape[1]).matrix()[np.asarray(labels, dtype=np.intp)]
    return float(np.einsum("nk,nk->n", rows, probs).mean())


def noise_affine(eta: float, k: int) -> tuple[float, float]:
    """Slope and intercept mapping the clean objective to the noisy one."""
    return 1.0 - k * eta / (k - 1), eta / (k - 1)


def ranking_preserved(probs_a, probs_b, labels, eta: float) -> bool:
    """Does symmetric noise preserve which of two policies has higher expected reward?"""
    k = np.asarray(probs_a).shape[1]
    if not eta < 1.0 - 1.0 / k:
        raise ValueError(f"eta={eta} violates eta < 1 - 1/K for K={k}")
    clean = rl_objective(probs_a, labels) - rl_objective(probs_b, labels)
    noisy = noisy_objective_exact(probs_a, labels, eta) - noisy_objective_exact(probs_b, labels, eta)
    if abs(clean) <= ZERO_DIFF:
        return abs(noisy) <= ZERO_DIFF
    return np.sign(clean) == np.sign(noisy)


def kl_identity_coefficients(eta: float, k: int) -> tuple[float, float]:
    """A and B with ``-KL(p || q_eta) - H(p) = A p(y*) + B``."""
    b = math.log(eta / (k - 1))
    return math.log(1.0 - eta) - b, b


def kl_divergence(p, q) -> float:
    """KL(p || q) as ``p.log p - p.log q``; zero bitwise when ``p is q``."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    return float(np.dot(p, np.log(p))) - float(np.dot(p, np.log(q)))


def kl_entropy_identity(p, true_class: int, eta: float) -> tuple[float, float, float]:
    """Evaluate both sides of the noisy-target KL/entropy identity.

    Returns ``(lhs, rhs, |lhs - rhs|)`` with ``lhs = -KL(p || q_eta) - H(p)``
    and ``rhs = A p(y*) + B``.
    """
    p = np.asarray(p, dtype=np.float64)
    if not 0.0 < eta < 1.0:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    if (p <= 0).any():
        raise ValueError("p must be strictly positive for KL(p || q) to be defined")
    k = p.size
    q = NoiseChannel(eta, k).target(true_class)
    neg_entropy = float(np.dot(p, np.log(p)))
    kl = kl_divergence(p, q)
    lhs = -kl + neg_entropy
    a, b = kl_identity_coefficients(eta, k)
    rhs = a * p[true_class] + b
    return lhs, rhs, abs(lhs - rhs)


def entropy_rows(probs) -> np.ndarray:
    """Natural-log entropy of each row, with 0 log 0 = 0."""
    probs = np.asarray(probs, dtype=np.float64)
    safe = np.where(probs > 0, probs, 1.0)
    return -(probs * np.log(safe)).sum(axis=1)


def mean_entropy(probs) -> float:
    return float(entropy_rows(probs).mean())


def apply_noise(labels, channel: NoiseChannel, rng: np.random.Generator) -> np.ndarray:
    """Flip each label independently according to ``channel``."""
    labels = np.asarray(labels, dtype=np.intp)
    k = channel.n_classes
    flip = rng.random(labels.shape) < channel.eta
    # offset in 1..K-1 picks one of the other classes uniformly
    offset = rng.integers(1, k, size=labels.shape)
    return np.where(flip, (labels + offset) % k, labels)
