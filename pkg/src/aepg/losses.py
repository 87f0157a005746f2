"""Classification losses over softmax logits, including policy-gradient estimators.

Every loss exists in two forms:

* a graph builder (``*_graph``) that records the loss on an autodiff tape so
  trunk gradients can be backpropagated, and
* an analytic function (``ce_loss``, ``epg_loss`` ...) returning
  ``(loss, dloss/dlogits)`` computed directly in numpy.

Losses average over the batch. With the 0/1 reward, the expected-reward
objective of a softmax policy collapses to the true-class probability, so the
EPG loss is ``-mean(pi(y|x))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

KINDS = ("CE", "EPG", "aEPG", "REINFORCE", "Focal", "LabelSmooth", "ConfPenalty", "EntropyPenalty")

# Defaults follow the hyperparameter sweeps used for the regularized baselines.
DEFAULT_GAMMA = {"Focal": 1.0, "LabelSmooth": 0.01}
DEFAULT_BETA = {"ConfPenalty": 0.1, "EntropyPenalty": 1.0}

RATIO_MIN_PROB = 1e-12


@dataclass(frozen=True)
class LossSpec:
    kind: str = "CE"
    gamma: float | None = None
    beta: float | None = None
    n_samples: int = 1  # REINFORCE actions per input

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {KINDS}")
        if self.gamma is None:
            object.__setattr__(self, "gamma", DEFAULT_GAMMA.get(self.kind, 0.0))
        if self.beta is None:
            object.__setattr__(self, "beta", DEFAULT_BETA.get(self.kind, 0.0))
        if self.gamma < 0 or self.beta < 0:
            raise ValueError("gamma and beta must be non-negative")
        if self.kind == "LabelSmooth" and not self.gamma < 1:
            raise ValueError("label smoothing gamma must lie in [0, 1)")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")

    def graph(self, logits: Tensor, labels, alpha: float | None = None,
              rng: np.random.Generator | None = None) -> Tensor:
        """Record this loss on the tape that ``logits`` belongs to."""
        if self.kind == "CE":
            return ce_graph(logits, labels)
        if self.kind == "EPG":
            return epg_graph(logits, labels)
        if self.kind == "aEPG":
            if alpha is None:
                raise ValueError("aEPG needs the current annealing coefficient")
            return aepg_graph(logits, labels, alpha)
        if self.kind == "REINFORCE":
            if rng is None:
                raise ValueError("REINFORCE needs an rng for action sampling")
            actions = sample_actions(_softmax(logits.data), self.n_samples, rng)
            return reinforce_graph(logits, labels, actions)
        if self.kind == "Focal":
            return focal_graph(logits, labels, self.gamma)
        if self.kind == "LabelSmooth":
            return label_smoothing_graph(logits, labels, self.gamma)
        if self.kind == "ConfPenalty":
            return confidence_penalty_graph(logits, labels, self.beta)
        return entropy_penalty_graph(logits, labels, self.beta)

    def analytic(self, logits, labels, alpha: float | None = None) -> tuple[float, np.ndarray]:
        """Closed-form (loss, logits-gradient), independent of the tape."""
        if self.kind == "aEPG":
            if alpha is None:
                raise ValueError("aEPG needs the current annealing coefficient")
            return aepg_loss(logits, labels, alpha)
        if self.kind == "REINFORCE":
            raise ValueError("REINFORCE has no closed form; use reinforce_grad")
        return ANALYTIC[self.kind](logits, labels, self)


@dataclass
class GradientEstimate:
    grad: np.ndarray
    loss: float
    actions: np.ndarray | None = None
    rewards: np.ndarray | None = None
    per_sample: np.ndarray | None = field(default=None, repr=False)


def _check_labels(logits: np.ndarray, labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.intp)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ValueError(f"logits {logits.shape} and labels {labels.shape} do not align")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ValueError(f"label out of range for {logits.shape[1]} classes")
    return labels


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    s = z - z.max(axis=1, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=1, keepdims=True))


def _onehot(labels: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((labels.size, k))
    out[np.arange(labels.size), labels] = 1.0
    return out


def _entropy_rows(logp: np.ndarray) -> np.ndarray:
    p = np.exp(logp)
    return -(p * logp).sum(axis=1)


def _entropy_grad(logp: np.ndarray) -> np.ndarray:
    """d H(softmax(z)) / dz, row-wise."""
    p = np.exp(logp)
    h = -(p * logp).sum(axis=1, keepdims=True)
    return -p * (logp + h)


# ---------------------------------------------------------------- tape graphs


def _true_logprob(logits: Tensor, labels) -> Tensor:
    labels = _check_labels(logits.data, labels)
    return ad.gather(ad.log_softmax(logits), np.arange(labels.size), labels)


def _row_entropy(logits: Tensor) -> Tensor:
    logp = ad.log_softmax(logits)
    return -ad.sum(ad.exp(logp) * logp, axis=1)


def ce_graph(logits: Tensor, labels) -> Tensor:
    return -ad.mean(_true_logprob(logits, labels))


def epg_graph(logits: Tensor, labels) -> Tensor:
    return -ad.mean(ad.exp(_true_logprob(logits, labels)))


def aepg_graph(logits: Tensor, labels, alpha: float) -> Tensor:
    _check_alpha(alpha)
    alpha = float(alpha)
    return alpha * ce_graph(logits, labels) + (1.0 - alpha) * epg_graph(logits, labels)


def focal_graph(logits: Tensor, labels, gamma: float) -> Tensor:
    lp = _true_logprob(logits, labels)
    weight = ad.power(1.0 - ad.exp(lp), gamma)
    return -ad.mean(weight * lp)


def label_smoothing_graph(logits: Tensor, labels, gamma: float) -> Tensor:
    k = logits.shape[1]
    logp = ad.log_softmax(logits)
    # KL(u || p) = -log K - (1/K) sum_k log p_k
    kl = -float(np.log(k)) - ad.mean(ad.sum(logp, axis=1)) * (1.0 / k)
    return (1.0 - gamma) * ce_graph(logits, labels) + gamma * kl


def confidence_penalty_graph(logits: Tensor, labels, beta: float) -> Tensor:
    return ce_graph(logits, labels) - beta * ad.mean(_row_entropy(logits))


def entropy_penalty_graph(logits: Tensor, labels, beta: float) -> Tensor:
    return ce_graph(logits, labels) + beta * ad.mean(_row_entropy(logits))


def reinforce_graph(logits: Tensor, labels, actions: np.ndarray) -> Tensor:
    """Score-function surrogate whose gradient is the REINFORCE estimate for fixed actions."""
    labels = _check_labels(logits.data, labels)
    actions = np.asarray(actions, dtype=np.intp)
    n, m = actions.shape
    rewards = (actions == labels[:, None]).astype(np.float64)
    rows = np.repeat(np.arange(n), m)
    lp = ad.gather(ad.log_softmax(logits), rows, actions.reshape(-1))
    return -ad.sum(lp * rewards.reshape(-1)) * (1.0 / (n * m))


# ------------------------------------------------------- analytic (loss, grad)


def ce_loss(logits, labels) -> tuple[float, np.ndarray]:
    z = np.asarray(logits, dtype=np.float64)
    y = _check_labels(z, labels)
    n, k = z.shape
    logp = _log_softmax(z)
    loss = -logp[np.arange(n), y].mean()
    return float(loss), (np.exp(logp) - _onehot(y, k)) / n


def epg_loss(logits, labels) -> tuple[float, np.ndarray]:
    z = np.asarray(logits, dtype=np.float64)
    y = _check_labels(z, labels)
    n, k = z.shape
    p = _softmax(z)
    py = p[np.arange(n), y]
    grad = -py[:, None] * (_onehot(y, k) - p) / n
    return float(-py.mean()), grad


def _check_alpha(alpha: float) -> None:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")


def aepg_loss(logits, labels, alpha_t: float) -> tuple[float, np.ndarray]:
    _check_alpha(alpha_t)
    l_ce, g_ce = ce_loss(logits, labels)
    l_epg, g_epg = epg_loss(logits, labels)
    return alpha_t * l_ce + (1 - alpha_t) * l_epg, alpha_t * g_ce + (1 - alpha_t) * g_epg


def focal_loss(logits, labels, gamma: float = DEFAULT_GAMMA["Focal"]) -> tuple[float, np.ndarray]:
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    tape = ad.Tape()
    z = tape.watch(logits, "logits")
    loss = focal_graph(z, labels, gamma)
    return float(loss.data), tape.backward(loss)["logits"]


def label_smoothing_loss(logits, labels,
                         gamma: float = DEFAULT_GAMMA["LabelSmooth"]) -> tuple[float, np.ndarray]:
    if not 0.0 <= gamma < 1.0:
        raise ValueError("label smoothing gamma must lie in [0, 1)")
    z = np.asarray(logits, dtype=np.float64)
    y = _check_labels(z, labels)
    n, k = z.shape
    logp = _log_softmax(z)
    p = np.exp(logp)
    ce = -logp[np.arange(n), y].mean()
    kl = (-np.log(k) - logp.sum(axis=1) / k).mean()
    grad = ((1 - gamma) * (p - _onehot(y, k)) + gamma * (p - 1.0 / k)) / n
    return float((1 - gamma) * ce + gamma * kl), grad


def confidence_penalty_loss(logits, labels,
                            beta: float = DEFAULT_BETA["ConfPenalty"]) -> tuple[float, np.ndarray]:
    if beta < 0:
        raise ValueError("beta must be non-negative")
    ce, g = ce_loss(logits, labels)
    logp = _log_softmax(np.asarray(logits, dtype=np.float64))
    n = logp.shape[0]
    return float(ce - beta * _entropy_rows(logp).mean()), g - beta * _entropy_grad(logp) / n


def entropy_penalty_loss(logits, labels,
                         beta: float = DEFAULT_BETA["EntropyPenalty"]) -> tuple[float, np.ndarray]:
    if beta < 0:
        raise ValueError("beta must be non-negative")
    ce, g = ce_loss(logits, labels)
    logp = _log_softmax(np.asarray(logits, dtype=np.float64))
    n = logp.shape[0]
    return float(ce + beta * _entropy_rows(logp).mean()), g + beta * _entropy_grad(logp) / n


# ------------------------------------------------------------- REINFORCE


def sample_actions(probs: np.ndarray, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF categorical sampling, one row of ``n_samples`` actions per input."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random((probs.shape[0], n_samples))
    idx = np.array([np.searchsorted(c, row, side="right") for c, row in zip(cdf, u)])
    return np.minimum(idx.reshape(probs.shape[0], n_samples), probs.shape[1] - 1)


def reinforce_grad(logits, labels, n_samples: int = 1, rng: np.random.Generator | None = None,
                   enumerate_actions: bool = False) -> GradientEstimate:
    """REINFORCE descent direction with respect to the logits.

    ``grad = -(1/(N M)) sum_i sum_m R(x_i, a_im) (onehot(a_im) - pi_i)``. With
    ``enumerate_actions`` every action is visited and weighted by its
    probability instead of sampled, which is the EPG gradient.
    """
    z = np.asarray(logits, dtype=np.float64)
    y = _check_labels(z, labels)
    n, k = z.shape
    p = _softmax(z)
    logp = _log_softmax(z)
    eye = np.eye(k)
    if enumerate_actions:
        grad = np.zeros_like(z)
        for a in range(k):
            reward = (y == a).astype(np.float64)
            grad -= (p[:, a] * reward)[:, None] * (eye[a] - p)
        grad /= n
        rewards = p[np.arange(n), y]
        loss = float(-rewards.mean())
        return GradientEstimate(grad=grad, loss=loss, rewards=rewards)
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if rng is None:
        raise ValueError("sampling mode needs an rng")
    actions = sample_actions(p, n_samples, rng)
    rewards = (actions == y[:, None]).astype(np.float64)
    score = eye[actions] - p[:, None, :]  # (N, M, K)
    grad = -(rewards[:, :, None] * score).sum(axis=1) / (n * n_samples)
    surrogate = -(rewards * logp[np.arange(n)[:, None], actions]).sum() / (n * n_samples)
    return GradientEstimate(grad=grad, loss=float(surrogate), actions=actions, rewards=rewards)


# ------------------------------------------------------------- identities


def grad_ratio_check(logits, label: int) -> float | None:
    """Deviation from ``g_CE = -(1/pi(y|x)) g_EPG`` for one sample.

    ``g_CE`` is the descent gradient of ``-log pi(y|x)`` and ``g_EPG`` the
    ascent gradient of ``pi(y|x)``, both with respect to the logits. Returns
    ``None`` (skipped) when ``pi(y|x) <= 1e-12``.
    """
    z = np.asarray(logits, dtype=np.float64).reshape(1, -1)
    y = _check_labels(z, [label])
    _, g_ce = ce_loss(z, y)
    _, g_epg_descent = epg_loss(z, y)
    p_y = _softmax(z)[0, y[0]]
    if p_y <= RATIO_MIN_PROB:
        return None
    g_epg_ascent = -g_epg_descent
    return float(np.max(np.abs(g_ce + g_epg_ascent / p_y)))


ANALYTIC = {
    "CE": lambda z, y, spec: ce_loss(z, y),
    "EPG": lambda z, y, spec: epg_loss(z, y),
    "Focal": lambda z, y, spec: focal_loss(z, y, spec.gamma),
    "LabelSmooth": lambda z, y, spec: label_smoothing_loss(z, y, spec.gamma),
    "ConfPenalty": lambda z, y, spec: confidence_penalty_loss(z, y, spec.beta),
    "EntropyPenalty": lambda z, y, spec: entropy_penalty_loss(z, y, spec.beta),
}
