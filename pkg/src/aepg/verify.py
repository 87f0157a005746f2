"""Hermetic suite of analytical identity checks with fixed seeds.

Each ``measure_*`` function returns the measured deviation(s); ``run_checks``
compares them against fixed tolerances and reports pass/fail per check.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from . import losses, mdp, schedules
from .harness import AccuracyMatrix, metrics

SIGMOID_ENDPOINTS = {4: (0.9820, 0.0180), 6: (0.9975, 0.0025), 8: (0.9997, 0.0003)}


@dataclass
class CheckResult:
    name: str
    passed: bool
    deviation: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return f"[{status}] {self.name}: max deviation {self.deviation:.3e} (tol {self.tolerance:.0e}){extra}"


def random_logits(rng: np.random.Generator, n: int, k: int, scale: float = 2.0) -> np.ndarray:
    return rng.normal(0.0, scale, size=(n, k))


def measure_grad_ratio(n_samples: int = 1000, ks=(2, 10, 100), seed: int = 0,
                       epg_loss: Callable = losses.epg_loss) -> tuple[float, int]:
    """Worst per-sample deviation of ``g_CE + g_EPG_ascent / pi(y)`` and the skip count."""
    rng = np.random.default_rng(seed)
    worst, skipped = 0.0, 0
    for k in ks:
        for _ in range(n_samples):
            z = random_logits(rng, 1, k)
            y = int(rng.integers(k))
            _, g_ce = losses.ce_loss(z, [y])
            _, g_epg = epg_loss(z, [y])
            p_y = losses._softmax(z)[0, y]
            if p_y <= losses.RATIO_MIN_PROB:
                skipped += 1
                continue
            worst = max(worst, float(np.max(np.abs(g_ce + (-g_epg) / p_y))))
    return worst, skipped


def measure_enumeration(n_batches: int = 100, seed: int = 1) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_batches):
        n, k = int(rng.integers(1, 9)), int(rng.integers(2, 12))
        z = random_logits(rng, n, k)
        y = rng.integers(0, k, size=n)
        g_enum = losses.reinforce_grad(z, y, enumerate_actions=True).grad
        worst = max(worst, float(np.max(np.abs(g_enum - losses.epg_loss(z, y)[1]))))
    return worst


def single_sample_estimates(z: np.ndarray, y: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """``m`` independent one-action-per-input REINFORCE estimates, shape (m, N, K)."""
    est = losses.reinforce_grad(z, y, n_samples=m, rng=rng)
    n, k = z.shape
    p = losses._softmax(z)
    score = np.eye(k)[est.actions] - p[:, None, :]  # (N, m, K)
    per = -(est.rewards[:, :, None] * score) / n
    return np.transpose(per, (1, 0, 2))


def measure_monte_carlo(m: int = 100_000, seed: int = 2) -> dict:
    """Mean of ``m`` single-sample estimates versus the EPG gradient, in standard errors."""
    rng = np.random.default_rng(seed)
    z = random_logits(rng, 4, 5, scale=1.0)
    y = rng.integers(0, 5, size=4)
    samples = single_sample_estimates(z, y, m, rng)
    mean = samples.mean(axis=0)
    var = samples.var(axis=0, ddof=1)
    se = np.sqrt(var / m)
    g_epg = losses.epg_loss(z, y)[1]
    z_scores = np.abs(mean - g_epg) / se
    return {
        "max_z": float(z_scores.max()),
        "min_var": float(var.min()),
        "epg_var": 0.0,  # EPG is a deterministic function of the batch
        "logits": z,
        "labels": y,
    }


def measure_fd_losses(n_instances: int = 100, seed: int = 3) -> dict[str, float]:
    """Worst finite-difference relative error per loss kind, over random batches."""
    rng = np.random.default_rng(seed)
    worst = {k: 0.0 for k in losses.KINDS}
    for kind in losses.KINDS:
        spec = losses.LossSpec(kind)
        for _ in range(n_instances):
            n, k = int(rng.integers(1, 5)), int(rng.integers(2, 6))
            z = random_logits(rng, n, k, scale=1.0)
            y = rng.integers(0, k, size=n)
            if kind == "aEPG":
                a = float(rng.random())
                f = lambda p, y=y, a=a: losses.aepg_graph(p["z"], y, a)  # noqa: E731
            elif kind == "REINFORCE":
                actions = losses.sample_actions(losses._softmax(z), 2, rng)
                f = lambda p, y=y, act=actions: losses.reinforce_graph(p["z"], y, act)  # noqa: E731
            else:
                f = lambda p, y=y, spec=spec: spec.graph(p["z"], y)  # noqa: E731
            worst[kind] = max(worst[kind], ad.fd_check(f, {"z": z}, eps=1e-5))
    return worst


def random_policy(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    return rng.dirichlet(np.full(k, 0.5), size=n)


def measure_affine_identity(n_policies: int = 1000, seed: int = 4) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_policies):
        k = int(rng.integers(2, 21))
        n = int(rng.integers(1, 30))
        eta = float(rng.random())
        probs = random_policy(rng, n, k)
        y = rng.integers(0, k, size=n)
        slope, intercept = mdp.noise_affine(eta, k)
        noisy = mdp.noisy_objective_exact(probs, y, eta)
        rhs = slope * mdp.rl_objective(probs, y) + intercept
        worst = max(worst, abs(noisy - rhs), abs(mdp.noisy_objective_channel(probs, y, eta) - rhs))
    return worst


def measure_rank_preservation(n_pairs: int = 1000, k: int = 10, eta: float = 0.2,
                              seed: int = 5) -> int:
    """Number of random policy pairs whose ranking noise flips (0 expected)."""
    rng = np.random.default_rng(seed)
    flips = 0
    for _ in range(n_pairs):
        n = int(rng.integers(1, 30))
        y = rng.integers(0, k, size=n)
        a, b = random_policy(rng, n, k), random_policy(rng, n, k)
        flips += not mdp.ranking_preserved(a, b, y, eta)
    return flips


def measure_degenerate_noise(n_policies: int = 100, seed: int = 6) -> float:
    """Largest distance from 0.5 of the K=2, eta=0.5 noisy objective."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_policies):
        n = int(rng.integers(1, 30))
        probs = random_policy(rng, n, 2)
        y = rng.integers(0, 2, size=n)
        worst = max(worst, abs(mdp.noisy_objective_exact(probs, y, 0.5) - 0.5))
    return worst


def measure_kl_identity(n_draws: int = 1000, seed: int = 7) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_draws):
        k = int(rng.integers(2, 101))
        eta = float(rng.uniform(0.01, 0.99))
        p = rng.dirichlet(np.ones(k))
        p = np.maximum(p, 1e-300)
        p = p / p.sum()
        y = int(rng.integers(k))
        worst = max(worst, mdp.kl_entropy_identity(p, y, eta)[2])
    return worst


def measure_kl_identity_at_target(etas=(0.05, 0.1, 0.2, 0.3, 0.45), ks=(2, 3, 5, 10, 100)) -> dict:
    """Identity evaluated at ``p = q_eta``: KL term and total deviation."""
    worst_kl, worst_diff = 0.0, 0.0
    for k in ks:
        for eta in etas:
            q = mdp.NoiseChannel(eta, k).target(0)
            kl = mdp.kl_divergence(q, q)
            worst_kl = max(worst_kl, abs(kl))
            worst_diff = max(worst_diff, mdp.kl_entropy_identity(q, 0, eta)[2])
    return {"kl": worst_kl, "diff": worst_diff}


def measure_sigmoid_endpoints() -> float:
    worst = 0.0
    for tau, (start, end) in SIGMOID_ENDPOINTS.items():
        a0, a_T = schedules.schedule_endpoints(tau)
        worst = max(worst, abs(round(a0, 4) - start), abs(round(a_T, 4) - end))
    return worst


def measure_metric_formulas() -> float:
    cases = [
        ([[1.0], [0.8, 0.9]], 0.85, 0.925),
        ([[1.0], [1.0, 1.0], [1.0, 1.0, 1.0]], 1.0, 1.0),
        ([[0.7]], 0.7, 0.7),
        ([[0.9], [0.6, 0.8], [0.5, 0.4, 0.9]], (0.5 + 0.4 + 0.9) / 3,
         (0.9 + 0.7 + (0.5 + 0.4 + 0.9) / 3) / 3),
    ]
    worst = 0.0
    for cols, a_T, a_tilde in cases:
        m = metrics(AccuracyMatrix([list(c) for c in cols]))
        worst = max(worst, abs(m["A_T"] - a_T), abs(m["A_tilde_T"] - a_tilde))
    return worst


def run_checks(epg_loss: Callable = losses.epg_loss, fd_instances: int = 100) -> list[CheckResult]:
    """Run every identity check; ``epg_loss`` is injectable for mutation testing."""
    out: list[CheckResult] = []

    dev, skipped = measure_grad_ratio(epg_loss=epg_loss)
    out.append(CheckResult("grad_ratio_check", dev < 1e-10, dev, 1e-10, f"skipped={skipped}"))

    dev = measure_enumeration()
    out.append(CheckResult("reinforce_enumeration_equals_epg", dev < 1e-12, dev, 1e-12))

    mc = measure_monte_carlo()
    ok = mc["max_z"] < 3.0 and mc["min_var"] > 0.0
    out.append(CheckResult("reinforce_monte_carlo_mean", ok, mc["max_z"], 3.0,
                           f"in standard errors; min sampling variance {mc['min_var']:.3e}, EPG variance 0"))

    fd = measure_fd_losses(fd_instances)
    worst = max(fd.values())
    out.append(CheckResult("fd_check_all_losses", worst < 1e-5, worst, 1e-5,
                           ", ".join(f"{k}={v:.1e}" for k, v in fd.items())))

    dev = measure_affine_identity()
    out.append(CheckResult("noisy_objective_affine_identity", dev < 1e-12, dev, 1e-12))

    flips = measure_rank_preservation()
    out.append(CheckResult("noise_rank_preservation", flips == 0, float(flips), 0.0, "flipped pairs"))

    dev = measure_degenerate_noise()
    out.append(CheckResult("degenerate_noise_constant_half", dev < 1e-12, dev, 1e-12, "K=2, eta=0.5"))

    dev = measure_kl_identity()
    out.append(CheckResult("kl_entropy_identity", dev < 1e-12, dev, 1e-12))

    at = measure_kl_identity_at_target()
    out.append(CheckResult("kl_entropy_identity_at_target", at["kl"] == 0.0 and at["diff"] < 1e-12,
                           at["diff"], 1e-12, f"KL(q||q)={at['kl']}"))

    dev = measure_sigmoid_endpoints()
    ends = ", ".join(f"tau={t}: {a:.4f}/{b:.4f}"
                     for t, (a, b) in ((t, schedules.schedule_endpoints(t)) for t in SIGMOID_ENDPOINTS))
    out.append(CheckResult("sigmoid_schedule_endpoints", dev == 0.0, dev, 0.0, ends))

    dev = measure_metric_formulas()
    out.append(CheckResult("accuracy_metric_formulas", dev < 1e-15, dev, 1e-15))
    return out


def main(epg_loss: Callable = losses.epg_loss, echo: Callable[[str], None] = print) -> int:
    start = time.perf_counter()
    results = run_checks(epg_loss=epg_loss)
    for r in results:
        echo(r.line())
    failed = [r.name for r in results if not r.passed]
    elapsed = time.perf_counter() - start
    if failed:
        echo(f"{len(failed)} check(s) failed: {', '.join(failed)} ({elapsed:.1f}s)")
        return 1
    echo(f"all {len(results)} checks passed ({elapsed:.1f}s)")
    return 0


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
