"""Softmax MLP policy with an extensible classifier head and a low-rank adapter."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

ADAPTER_INIT_STD = 0.02
HEAD_INIT_STD = 0.001
CHECKPOINT_FORMAT = "aepg-checkpoint-v1"


@dataclass
class MlpPolicy:
    """``pi(a|x) = softmax(f(x))_a`` with ``f`` a relu MLP trunk plus linear head.

    Parameters live in ``params`` under names ``trunk.W{i}``, ``trunk.b{i}``,
    ``adapter.B{i}``, ``adapter.A{i}``, ``head.W`` and ``head.b``.
    """

    in_dim: int
    depth: int = 2
    width: int = 128
    rank: int = 0
    params: dict[str, np.ndarray] = field(default_factory=dict)
    trunk_frozen: bool = False

    @property
    def n_classes(self) -> int:
        return self.params["head.W"].shape[1]

    @property
    def trunk_names(self) -> list[str]:
        return [f"trunk.{p}{i}" for i in range(self.depth) for p in "Wb"]

    @property
    def adapter_names(self) -> list[str]:
        return [f"adapter.{p}{i}" for i in range(self.depth) for p in "BA"] if self.rank else []

    def trainable(self) -> list[str]:
        """Names the optimizer may update. Head is always trainable.

        With an adapter the base trunk weights never train; the adapter
        factors take their place once the trunk is unfrozen.
        """
        names = ["head.W", "head.b"]
        if not self.trunk_frozen:
            names += self.adapter_names if self.rank else self.trunk_names
        return names

    def copy(self) -> MlpPolicy:
        return MlpPolicy(self.in_dim, self.depth, self.width, self.rank,
                         {k: v.copy() for k, v in self.params.items()}, self.trunk_frozen)


def build_policy(in_dim: int, depth: int, width: int, rng: np.random.Generator,
                 rank: int = 0) -> MlpPolicy:
    """He-initialized trunk with an empty (zero-class) head."""
    if in_dim <= 0 or depth <= 0 or width <= 0 or rank < 0:
        raise ValueError("in_dim, depth and width must be positive and rank non-negative")
    params: dict[str, np.ndarray] = {}
    fan_in = in_dim
    for i in range(depth):
        params[f"trunk.W{i}"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, width))
        params[f"trunk.b{i}"] = np.zeros(width)
        fan_in = width
    params["head.W"] = np.zeros((width, 0))
    params["head.b"] = np.zeros(0)
    model = MlpPolicy(in_dim, depth, width, 0, params)
    if rank:
        attach_adapter(model, rank, rng)
    return model


def attach_adapter(model: MlpPolicy, rank: int, rng: np.random.Generator) -> None:
    """Add zero-effect low-rank factors ``W + B A`` to every trunk layer."""
    if rank <= 0:
        raise ValueError("adapter rank must be positive")
    for i in range(model.depth):
        fan_in, fan_out = model.params[f"trunk.W{i}"].shape
        model.params[f"adapter.B{i}"] = np.zeros((fan_in, rank))
        model.params[f"adapter.A{i}"] = rng.normal(0.0, ADAPTER_INIT_STD, size=(rank, fan_out))
    model.rank = rank


def init_head(model: MlpPolicy, k_new: int, std: float = HEAD_INIT_STD,
              rng: np.random.Generator | None = None) -> MlpPolicy:
    """Append ``k_new`` head columns drawn from N(0, std^2); old columns untouched."""
    if k_new <= 0:
        raise ValueError("k_new must be positive")
    if std < 0:
        raise ValueError("std must be non-negative")
    if std > 0 and rng is None:
        raise ValueError("a seeded rng is required for std > 0")
    cols = rng.normal(0.0, std, size=(model.width, k_new)) if std > 0 else np.zeros((model.width, k_new))
    model.params["head.W"] = np.concatenate([model.params["head.W"], cols], axis=1)
    model.params["head.b"] = np.concatenate([model.params["head.b"], np.zeros(k_new)])
    return model


def set_freeze(model: MlpPolicy, trunk_frozen: bool) -> None:
    model.trunk_frozen = bool(trunk_frozen)


def forward(model: MlpPolicy, x, tape: ad.Tape | None = None) -> Tensor:
    """Logits as a tensor; trainable parameters are watched on ``tape`` if given."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.in_dim:
        raise ValueError(f"expected inputs of shape (N, {model.in_dim}), got {x.shape}")
    watched = set(model.trainable()) if tape is not None else set()
    p = {k: tape.watch(v, k) if k in watched else Tensor(v) for k, v in model.params.items()}
    h = Tensor(x)
    for i in range(model.depth):
        pre = h @ p[f"trunk.W{i}"]
        if model.rank:
            pre = pre + (h @ p[f"adapter.B{i}"]) @ p[f"adapter.A{i}"]
        h = ad.relu(pre + p[f"trunk.b{i}"])
    return h @ p["head.W"] + p["head.b"]


def predict(model: MlpPolicy, x, mask=None) -> np.ndarray:
    """Logits for ``x``; classes where ``mask`` is False get -inf."""
    logits = np.array(forward(model, x).data)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (model.n_classes,):
            raise ValueError(f"mask must have shape ({model.n_classes},)")
        logits[:, ~mask] = -np.inf
    return logits


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def save_checkpoint(model: MlpPolicy, path) -> None:
    """JSON checkpoint; floats stored as hex strings so round-trips are bit-exact."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "in_dim": model.in_dim,
        "depth": model.depth,
        "width": model.width,
        "rank": model.rank,
        "trunk_frozen": model.trunk_frozen,
        "params": {
            name: {"shape": list(arr.shape), "data": [float(v).hex() for v in arr.reshape(-1)]}
            for name, arr in model.params.items()
        },
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> MlpPolicy:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unrecognized checkpoint format {doc.get('format')!r}")
    params = {}
    for name, entry in doc["params"].items():
        flat = np.array([float.fromhex(s) for s in entry["data"]], dtype=np.float64)
        params[name] = flat.reshape(entry["shape"])
    return MlpPolicy(doc["in_dim"], doc["depth"], doc["width"], doc["rank"], params,
                     doc["trunk_frozen"])
