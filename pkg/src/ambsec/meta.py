"""Reptile meta-training over detection tasks that differ in their fading law.

Each episode picks a task uniformly at random, runs ``p`` SGD steps on a copy
of the current parameters and then moves the parameters a fraction ``eta`` of
the way towards the adapted copy.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from . import nn
from .channel import FadingModel
from .numerics import Prng


@dataclass(frozen=True)
class MetaTask:
    task_id: str
    fading: FadingModel
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if len(self.y) == 0 or self.X.shape[0] != len(self.y):
            raise ValueError(f"task {self.task_id}: dataset must be nonempty with matching labels")


@dataclass(frozen=True)
class MetaConfig:
    outer_step_eta: float = 0.1
    inner_steps_p: int = 5
    episodes: int = 1000
    inner: nn.TrainConfig = field(default_factory=lambda: nn.TrainConfig(batch_size=100))
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.outer_step_eta <= 1.0:
            raise ValueError("outer step eta must lie in [0, 1]")
        if self.inner_steps_p < 1 or self.episodes < 0:
            raise ValueError("need p >= 1 and episodes >= 0")


@dataclass
class EpisodeRecord:
    episode: int
    task_id: str
    val_loss: float


def inner_update(model: nn.MlpModel, task: MetaTask, p: int, inner_cfg: nn.TrainConfig,
                 rng: Prng) -> nn.MlpModel:
    """``p`` SGD steps on minibatches drawn from the task; ``model`` is left untouched.

    A batch size at least as large as the task dataset means full-batch steps.
    """
    if p < 1:
        raise ValueError("inner step count p must be >= 1")
    adapted = model.copy()
    n = len(task.y)
    for _ in range(p):
        if inner_cfg.batch_size >= n:
            idx = np.arange(n)
        else:
            idx = rng.permutation(n)[:inner_cfg.batch_size]
        grads = nn.backward(adapted, task.X[idx], task.y[idx])
        nn.sgd_step(adapted, grads, inner_cfg.learning_rate)
    return adapted


def interpolate(model: nn.MlpModel, target: nn.MlpModel, eta: float) -> nn.MlpModel:
    """In-place ``theta <- theta + eta (target - theta)``."""
    for w, b, tw, tb in zip(model.weights, model.biases, target.weights, target.biases):
        w += eta * (tw - w)
        b += eta * (tb - b)
    return model


def reptile_step(model: nn.MlpModel, task: MetaTask, cfg: MetaConfig, rng: Prng) -> nn.MlpModel:
    adapted = inner_update(model, task, cfg.inner_steps_p, cfg.inner, rng)
    return interpolate(model, adapted, cfg.outer_step_eta)


def meta_train(model: nn.MlpModel, tasks: list[MetaTask], cfg: MetaConfig,
               callback=None) -> tuple[nn.MlpModel, list[EpisodeRecord]]:
    """Run ``cfg.episodes`` Reptile episodes, updating ``model`` in place.

    ``callback(episode, task, model)`` runs after every outer update; tests use
    it to inspect per-episode parameters.
    """
    if not tasks:
        raise ValueError("meta-training needs at least one task")
    rng = Prng(cfg.seed, 0)
    history = []
    for episode in range(cfg.episodes):
        task = tasks[int(rng.integers(len(tasks)))]
        reptile_step(model, task, cfg, rng.substream(episode))
        history.append(EpisodeRecord(episode + 1, task.task_id, nn.mean_loss(model, task.X, task.y)))
        if callback is not None:
            callback(episode, task, model)
    return model, history


def fine_tune(meta_model: nn.MlpModel, X, y, cfg: nn.TrainConfig) -> tuple[nn.MlpModel, list]:
    """Ordinary SGD training started from a copy of the meta-learned parameters."""
    return nn.train(meta_model.copy(), X, y, cfg)


def write_episode_csv(history: list[EpisodeRecord], path, header_comment: str = "") -> None:
    with Path(path).open("w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["episode", "task_id", "val_loss"])
        for rec in history:
            writer.writerow([rec.episode, rec.task_id, repr(float(rec.val_loss))])


class ReptileMetaLearner(BaseEstimator):
    """Estimator-style front end: ``fit(tasks)`` learns an initialization,
    ``adapt(X, y)`` fine-tunes it to a target task and returns an ``MLPDetector``.
    """

    def __init__(self, hidden_layer_sizes=nn.DEFAULT_HIDDEN, meta_config: MetaConfig | None = None,
                 fine_tune_config: nn.TrainConfig | None = None, random_state: int = 0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.meta_config = meta_config
        self.fine_tune_config = fine_tune_config
        self.random_state = random_state

    def fit(self, tasks: list[MetaTask]):
        cfg = self.meta_config or MetaConfig(seed=self.random_state)
        sizes = (tasks[0].X.shape[1], *self.hidden_layer_sizes, 2)
        model = nn.init_model(Prng(self.random_state, 1), sizes)
        self.model_, self.history_ = meta_train(model, tasks, cfg)
        return self

    def adapt(self, X, y) -> nn.MLPDetector:
        cfg = self.fine_tune_config or nn.TrainConfig(seed=self.random_state)
        det = nn.MLPDetector(self.hidden_layer_sizes, cfg.learning_rate, cfg.batch_size,
                             cfg.epochs, cfg.seed)
        return det.fit(X, y, warm_model=self.model_)
