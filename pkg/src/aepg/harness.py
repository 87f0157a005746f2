"""Class-incremental training and evaluation.

A run pretrains the trunk on a pretext class set (unless training from
scratch), then learns a sequence of tasks with disjoint classes. After each
task the model is evaluated on every task seen so far with an argmax over all
seen classes, filling one column of the accuracy matrix.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import autodiff as ad
from . import data as datamod
from . import mdp
from .config import ExperimentConfig
from .losses import LossSpec
from .model import MlpPolicy, build_policy, forward, init_head, predict, set_freeze, softmax
from .schedules import AnnealState, advance, alpha, start_task

log = logging.getLogger(__name__)

STREAMS = ("data", "split", "noise", "init", "batch", "sample")


class TrainingDiverged(RuntimeError):
    def __init__(self, msg: str, trace: RunTrace):
        super().__init__(msg)
        self.trace = trace


@dataclass
class Task:
    classes: list[int]
    train_idx: np.ndarray
    test_idx: np.ndarray


@dataclass
class TaskSequence:
    tasks: list[Task]

    def __post_init__(self):
        seen: set[int] = set()
        for t in self.tasks:
            if seen & set(t.classes):
                raise ValueError("task class sets must be disjoint")
            seen |= set(t.classes)

    def __len__(self) -> int:
        return len(self.tasks)

    def __iter__(self) -> Iterator[Task]:
        return iter(self.tasks)

    @property
    def class_order(self) -> list[int]:
        """Global class ids in head-column order."""
        return [c for t in self.tasks for c in t.classes]


@dataclass
class AccuracyMatrix:
    """``columns[j][i]`` is the accuracy on task i after learning task j (i <= j)."""

    columns: list[list[float]] = field(default_factory=list)

    def add_column(self, col) -> None:
        self.columns.append([float(v) for v in col])

    @property
    def n_tasks(self) -> int:
        return len(self.columns)

    def check_complete(self) -> None:
        if not self.columns:
            raise ValueError("accuracy matrix is empty")
        for j, col in enumerate(self.columns):
            if len(col) != j + 1:
                raise ValueError(f"column {j} has {len(col)} entries, expected {j + 1}")
            if any(not 0.0 <= v <= 1.0 for v in col):
                raise ValueError(f"column {j} has entries outside [0, 1]")


@dataclass
class TraceRow:
    step: int
    task: int
    epoch: int
    alpha: float | None
    loss: float
    entropy: float


@dataclass
class RunTrace:
    rows: list[TraceRow] = field(default_factory=list)
    matrix: AccuracyMatrix = field(default_factory=AccuracyMatrix)

    def record(self, **kw) -> None:
        self.rows.append(TraceRow(**kw))

    def task_rows(self, task: int) -> list[TraceRow]:
        return [r for r in self.rows if r.task == task]


# ------------------------------------------------------------- optimizers


class Sgd:
    def __init__(self, lr: float, momentum: float = 0.0):
        self.lr = lr
        self.momentum = momentum
        self.velocity: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], names) -> None:
        for k in names:
            g = grads[k]
            if self.momentum:
                v = self.velocity.get(k)
                v = g if v is None else self.momentum * v + g
                self.velocity[k] = v
                g = v
            params[k] = params[k] - self.lr * g


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t: dict[str, int] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], names) -> None:
        for k in names:
            g = grads[k]
            m = self.beta1 * self.m.get(k, 0.0) + (1 - self.beta1) * g
            v = self.beta2 * self.v.get(k, 0.0) + (1 - self.beta2) * g * g
            t = self.t.get(k, 0) + 1
            self.m[k], self.v[k], self.t[k] = m, v, t
            m_hat = m / (1 - self.beta1**t)
            v_hat = v / (1 - self.beta2**t)
            params[k] = params[k] - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(cfg) -> Sgd | Adam:
    if cfg.kind == "sgd":
        return Sgd(cfg.lr, cfg.momentum)
    return Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)


# ------------------------------------------------------------- tasks


def split_tasks(dataset: datamod.Dataset, n_tasks: int, seed, classes=None,
                test: datamod.Dataset | None = None) -> TaskSequence:
    """Shuffle the class order with ``seed`` and cut it into contiguous chunks.

    Every task gets ``len(classes) // n_tasks`` classes; the remainder goes to
    the last task. Sample indices refer to ``dataset`` (train) and ``test``.
    """
    classes = sorted(set(dataset.y.tolist())) if classes is None else list(classes)
    if n_tasks < 1 or n_tasks > len(classes):
        raise ValueError(f"cannot split {len(classes)} classes into {n_tasks} tasks")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    order = [classes[i] for i in rng.permutation(len(classes))]
    size = len(classes) // n_tasks
    tasks = []
    for t in range(n_tasks):
        chunk = order[t * size:(t + 1) * size] if t < n_tasks - 1 else order[t * size:]
        train_idx = np.flatnonzero(np.isin(dataset.y, chunk))
        test_idx = (np.flatnonzero(np.isin(test.y, chunk)) if test is not None
                    else np.zeros(0, dtype=np.intp))
        tasks.append(Task(chunk, train_idx, test_idx))
    return TaskSequence(tasks)


def _local_labels(y: np.ndarray, class_order: list[int]) -> np.ndarray:
    lookup = {c: i for i, c in enumerate(class_order)}
    return np.array([lookup[c] for c in y.tolist()], dtype=np.intp)


def noisy_task_labels(y: np.ndarray, classes: list[int], eta: float,
                      rng: np.random.Generator) -> np.ndarray:
    """Symmetric noise restricted to one task's class set."""
    if eta == 0 or len(classes) < 2:
        return y.copy()
    local = _local_labels(y, classes)
    flipped = mdp.apply_noise(local, mdp.NoiseChannel(eta, len(classes)), rng)
    return np.asarray(classes, dtype=np.intp)[flipped]


# ------------------------------------------------------------- training


@dataclass
class TrainSettings:
    epochs: int = 20
    batch_size: int = 64
    freeze_frac: float = 0.6


def _frozen_epochs(settings: TrainSettings) -> int:
    return int(round(settings.freeze_frac * settings.epochs))


def train_task(model: MlpPolicy, x: np.ndarray, y: np.ndarray, spec: LossSpec, optimizer,
               schedule: AnnealState | None, settings: TrainSettings,
               batch_rng: np.random.Generator, sample_rng: np.random.Generator | None = None,
               trace: RunTrace | None = None, task_id: int = 0,
               step0: int = 0, columns=None) -> tuple[AnnealState | None, int]:
    """Mini-batch training on one task; ``y`` are head-column indices.

    With ``columns`` the softmax is taken over those head columns only
    (``y`` must fall inside them); otherwise over every column. The trunk is
    frozen for the first ``freeze_frac`` of the epochs. Returns the advanced
    schedule state and the next global step index. A non-finite loss or
    gradient aborts with :class:`TrainingDiverged`.
    """
    if model.n_classes == 0 or y.max() >= model.n_classes:
        raise ValueError("head does not cover the task classes; call init_head first")
    if columns is not None:
        columns = np.asarray(columns, dtype=np.intp)
        pos = np.full(model.n_classes, -1)
        pos[columns] = np.arange(columns.size)
        y = pos[y]
        if (y < 0).any():
            raise ValueError("labels fall outside the trained columns")
    trace = trace if trace is not None else RunTrace()
    n = len(y)
    steps_per_epoch = math.ceil(n / settings.batch_size)
    if schedule is not None:
        schedule = start_task(schedule, steps_per_epoch * settings.epochs)
    frozen_epochs = _frozen_epochs(settings)
    step = step0
    for epoch in range(settings.epochs):
        set_freeze(model, epoch < frozen_epochs)
        names = model.trainable()
        perm = batch_rng.permutation(n)
        for b in range(steps_per_epoch):
            idx = perm[b * settings.batch_size:(b + 1) * settings.batch_size]
            tape = ad.Tape()
            logits = forward(model, x[idx], tape)
            if columns is not None:
                logits = ad.select_columns(logits, columns)
            a_t = alpha(schedule) if schedule is not None and spec.kind == "aEPG" else None
            loss = spec.graph(logits, y[idx], alpha=a_t, rng=sample_rng)
            grads = tape.backward(loss)
            loss_value = float(loss.data)
            entropy = mdp.mean_entropy(softmax(logits.data))
            trace.record(step=step, task=task_id, epoch=epoch, alpha=a_t,
                         loss=loss_value, entropy=entropy)
            if not np.isfinite(loss_value) or not all(np.isfinite(grads[k]).all() for k in names):
                raise TrainingDiverged(f"non-finite loss or gradient at step {step} "
                                       f"(task {task_id}, epoch {epoch})", trace)
            optimizer.step(model.params, grads, names)
            if schedule is not None:
                schedule = advance(schedule)
            step += 1
    return schedule, step


def accuracy(model: MlpPolicy, x: np.ndarray, y: np.ndarray) -> float:
    if len(y) == 0:
        return float("nan")
    return 1.0 - mdp.zero_one_loss(mdp.argmax_predictions(predict(model, x)), y)


def evaluate(model: MlpPolicy, tasks: TaskSequence, upto: int, test: datamod.Dataset) -> list[float]:
    """Column ``upto`` of the accuracy matrix (tasks are 0-indexed)."""
    order = tasks.class_order
    col = []
    for task in tasks.tasks[:upto + 1]:
        ys = _local_labels(test.y[task.test_idx], order)
        col.append(accuracy(model, test.x[task.test_idx], ys))
    return col


def metrics(matrix: AccuracyMatrix) -> dict:
    """Final accuracy over seen tasks, its running average, and per-task forgetting.

    Forgetting (max earlier accuracy minus final accuracy) is a diagnostic
    only and covers tasks 0..T-2.
    """
    matrix.check_complete()
    per_step = [sum(col) / len(col) for col in matrix.columns]
    final = matrix.columns[-1]
    T = matrix.n_tasks
    forgetting = [max(matrix.columns[j][i] for j in range(i, T - 1)) - final[i] for i in range(T - 1)]
    return {
        "A_T": per_step[-1],
        "A_tilde_T": sum(per_step) / T,
        "A_t": per_step,
        "final_accuracies": list(final),
        "forgetting": forgetting,
    }


# ------------------------------------------------------------- experiment


def seed_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators per concern, all derived from one run seed."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(s) for name, s in zip(STREAMS, children)}


def load_data(cfg: ExperimentConfig, rng: np.random.Generator) -> tuple[datamod.Dataset, datamod.Dataset]:
    d = cfg.data
    if d.kind == "blobs":
        src = rng if d.seed is None else d.seed
        return datamod.gaussian_blobs(d.n_classes, d.dim, d.n_per_class, d.spread, d.margin, src,
                                      informative_dim=d.informative_dim)
    if d.kind == "idx":
        train = datamod.load_idx(d.train_images, d.train_labels, split="train")
        test = datamod.load_idx(d.test_images, d.test_labels, split="test")
        k = max(train.n_classes, test.n_classes)
        return (datamod.Dataset(train.x, train.y, k, "train"), datamod.Dataset(test.x, test.y, k, "test"))
    return datamod.load_csv(d.train_csv, d.label_column, test_path=d.test_csv)


@dataclass
class RunResult:
    seed: int
    trace: RunTrace
    metrics: dict
    final_entropy: float
    test_entropy: float
    model: MlpPolicy | None = field(default=None, repr=False)


def pretrain_trunk(model: MlpPolicy, train: datamod.Dataset, classes: list[int], cfg: ExperimentConfig,
                   streams: dict[str, np.random.Generator]) -> None:
    """Fit the trunk with CE on pretext classes, then drop the temporary head."""
    idx = np.flatnonzero(np.isin(train.y, classes))
    init_head(model, len(classes), cfg.model.head_std, streams["init"])
    settings = TrainSettings(cfg.model.pretrain_epochs, cfg.batch_size, 0.0)
    train_task(model, train.x[idx], _local_labels(train.y[idx], classes), LossSpec("CE"),
               make_optimizer(cfg.optimizer), None, settings, streams["batch"], task_id=-1)
    model.params["head.W"] = np.zeros((model.width, 0))
    model.params["head.b"] = np.zeros(0)


def run_experiment(cfg: ExperimentConfig, seed: int, keep_model: bool = False) -> RunResult:
    cfg.validate()
    streams = seed_streams(seed)
    train, test = load_data(cfg, streams["data"])
    all_classes = sorted(set(train.y.tolist()))
    n_pretext = cfg.data.pretext_classes if cfg.model.pretrain else 0
    if cfg.model.pretrain:
        if not 0 < n_pretext < len(all_classes):
            raise ValueError("pretraining needs 0 < pretext_classes < number of classes")
    order = [all_classes[i] for i in streams["split"].permutation(len(all_classes))]
    pretext, continual = order[:n_pretext], sorted(order[n_pretext:]) if n_pretext else all_classes
    tasks = split_tasks(train, cfg.split.n_tasks, streams["split"], classes=continual, test=test)

    model = build_policy(train.x.shape[1], cfg.model.depth, cfg.model.width, streams["init"])
    if cfg.model.pretrain:
        pretrain_trunk(model, train, pretext, cfg, streams)
    if cfg.model.rank:
        from .model import attach_adapter
        attach_adapter(model, cfg.model.rank, streams["init"])

    spec = cfg.loss.spec()
    settings = TrainSettings(cfg.epochs, cfg.batch_size, cfg.freeze_frac)
    s = cfg.schedule
    schedule = AnnealState(s.kind, s.tau, 0, 1, s.scope, s.alpha) if spec.kind == "aEPG" else None
    if schedule is not None and s.scope == "global":
        total = sum(math.ceil(len(t.train_idx) / cfg.batch_size) for t in tasks) * cfg.epochs
        schedule = AnnealState(s.kind, s.tau, 0, total, s.scope, s.alpha)

    trace = RunTrace()
    step = 0
    order_cols = tasks.class_order
    for j, task in enumerate(tasks):
        first = model.n_classes
        init_head(model, len(task.classes), cfg.model.head_std, streams["init"])
        columns = np.arange(first, model.n_classes) if cfg.train_mask == "task" else None
        y_obs = noisy_task_labels(train.y[task.train_idx], task.classes, cfg.eta, streams["noise"])
        schedule, step = train_task(
            model, train.x[task.train_idx], _local_labels(y_obs, order_cols), spec,
            make_optimizer(cfg.optimizer), schedule, settings, streams["batch"], streams["sample"],
            trace, task_id=j, step0=step, columns=columns)
        trace.matrix.add_column(evaluate(model, tasks, j, test))
        log.debug("seed %d task %d: %s", seed, j, trace.matrix.columns[-1])

    last = trace.task_rows(len(tasks) - 1)
    last_epoch = [r.entropy for r in last if r.epoch == cfg.epochs - 1]
    seen_test = np.concatenate([t.test_idx for t in tasks])
    test_entropy = mdp.mean_entropy(softmax(predict(model, test.x[seen_test])))
    return RunResult(seed, trace, metrics(trace.matrix), float(np.mean(last_epoch)), test_entropy,
                     model if keep_model else None)
