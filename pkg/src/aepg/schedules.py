"""Annealing coefficient schedules for mixing CE and EPG.

``alpha`` starts near 1 (pure CE, exploratory) and decays toward 0 (pure EPG).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

KINDS = ("sigmoid", "linear", "cosine", "constant")
SCOPES = ("per-task", "global")


@dataclass(frozen=True)
class AnnealState:
    kind: str = "sigmoid"
    tau: float = 6.0
    t: int = 0
    T: int = 1
    scope: str = "per-task"
    value: float = 1.0  # constant schedule only

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown schedule {self.kind!r}; expected one of {KINDS}")
        if self.scope not in SCOPES:
            raise ValueError(f"unknown scope {self.scope!r}; expected one of {SCOPES}")
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.t < 0:
            raise ValueError("t must be non-negative")
        if not 0.0 <= self.value <= 1.0:
            raise ValueError("constant alpha must lie in [0, 1]")


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def alpha(state: AnnealState) -> float:
    """Coefficient on the CE term at the state's step; steps beyond T clamp to T."""
    t = min(state.t, state.T)
    T = state.T
    if state.kind == "sigmoid":
        return _sigmoid(state.tau * (T - 2 * t) / T)
    if state.kind == "linear":
        return (T - t) / T
    if state.kind == "cosine":
        return 0.5 + 0.5 * math.cos(math.pi * t / T)
    return state.value


def advance(state: AnnealState) -> AnnealState:
    return replace(state, t=state.t + 1)


def start_task(state: AnnealState, steps: int) -> AnnealState:
    """Enter a new task with a budget of ``steps`` optimizer steps.

    Per-task scope restarts the clock with ``T = steps``; global scope keeps
    counting and leaves ``T`` alone.
    """
    if state.scope == "per-task":
        return replace(state, t=0, T=max(int(steps), 1))
    return state


def schedule_endpoints(tau: float) -> tuple[float, float]:
    """Sigmoid alpha at t=0 and t=T for a given sharpness."""
    s = AnnealState(kind="sigmoid", tau=tau, T=1000)
    return alpha(s), alpha(replace(s, t=s.T))
