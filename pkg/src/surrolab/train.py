"""Mini-batch training with early stopping, transfer continuation and repeats."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .augment import build_training_set
from .dataset import Dataset
from .loss import LossSpec, fit_for, loss_and_grad
from .nn import Model, ModelArch, ShapeMismatch, init_model, surrogate_arch
from .seeding import derive_seed

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


class RunAborted(RuntimeError):
    """Too many repeats diverged to report statistics."""


class LeakageError(ValueError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    momentum: float = 0.0

    def __post_init__(self):
        if self.kind not in ("adam", "sgd"):
            raise ValueError("optimizer must be adam or sgd")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")


class Adam:
    def __init__(self, cfg: OptimizerConfig):
        self.cfg = cfg
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params, grads):
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for name, g in grads.items():
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            v = self.v[name]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            params[name] -= c.lr * (m / bc1) / (np.sqrt(v / bc2) + c.eps)


class SGD:
    def __init__(self, cfg: OptimizerConfig):
        self.cfg = cfg
        self.velocity = {}

    def step(self, params, grads):
        for name, g in grads.items():
            if self.cfg.momentum:
                vel = self.velocity.setdefault(name, np.zeros_like(g))
                vel *= self.cfg.momentum
                vel -= self.cfg.lr * g
                params[name] += vel
            else:
                params[name] -= self.cfg.lr * g


def make_optimizer(cfg: OptimizerConfig):
    return Adam(cfg) if cfg.kind == "adam" else SGD(cfg)


@dataclass(frozen=True)
class TrainConfig:
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    min_delta: float = 1e-5
    val_fraction: float = 0.1
    loss: LossSpec = field(default_factory=LossSpec)
    mode_bins: int = 50
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainHistory:
    """Per-epoch losses; epoch 0 is the starting weights (no train loss)."""

    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_reason: str = "max_epochs"

    @property
    def best_val_loss(self) -> float:
        return self.val_loss[self.best_epoch]

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "best_epoch": self.best_epoch,
            "stopped_reason": self.stopped_reason,
        }


def split_validation(d0: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded split of unaugmented rows into (train, validation)."""
    if np.any(d0.sources != "D0"):
        raise LeakageError("validation must be split from unaugmented D0 only")
    n = len(d0)
    n_val = int(round(fraction * n))
    if n_val < 1 or n_val > n - 1:
        raise ValueError(f"validation fraction {fraction} leaves an empty side for n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    val_idx = np.sort(perm[:n_val])
    train_idx = np.sort(perm[n_val:])
    return d0.subset(train_idx), d0.subset(val_idx, tag=d0.tag)


def eval_mse(model: Model, data: Dataset, features=None) -> float:
    x = data.features() if features is None else features
    pred = model.predict(x)
    return float(np.mean((pred - data.labels) ** 2))


def _check_purity(train_set: Dataset, val_set: Dataset):
    if len(val_set) == 0:
        raise ValueError("validation set is empty")
    if np.any(val_set.sources != "D0"):
        raise LeakageError("validation set contains augmented instances")
    if np.intersect1d(train_set.ids, val_set.ids).size:
        raise LeakageError("training set contains validation instances or their augmented copies")


def train(model: Model, train_set: Dataset, val_set: Dataset, cfg: TrainConfig) -> tuple[Model, TrainHistory]:
    """Train a copy of ``model``; returns the best-validation weights.

    Validation loss is always eval-mode MSE, whatever the training loss.
    Stops after ``patience`` consecutive epochs that fail to beat the best
    validation loss by ``min_delta``, or at ``max_epochs``.
    """
    _check_purity(train_set, val_set)
    if train_set.cells.shape[1:] != model.arch.input_shape:
        raise ShapeMismatch(f"data shape {train_set.cells.shape[1:]} != model input {model.arch.input_shape}")
    work = model.copy()
    fit = fit_for(cfg.loss, train_set.labels, cfg.mode_bins)
    opt = make_optimizer(cfg.optimizer)
    rng = np.random.default_rng(cfg.seed)
    x, y = train_set.features(), train_set.labels
    xv = val_set.features()
    n = len(y)

    history = TrainHistory()
    best = eval_mse(work, val_set, xv)
    history.train_loss.append(None)
    history.val_loss.append(best)
    best_params = {k: v.copy() for k, v in work.params.items()}
    wait = 0
    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            pred = work.forward(x[idx], train=True, dropout_seed=int(rng.integers(2**32)))
            loss, grad = loss_and_grad(cfg.loss, pred[:, 0], y[idx], fit)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite training loss at epoch {epoch}, batch starting {start}")
            work.backward(grad[:, None])
            opt.step(work.params, work.grads)
            total += loss * len(idx)
        val = eval_mse(work, val_set, xv)
        if not math.isfinite(val):
            raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}")
        history.train_loss.append(total / n)
        history.val_loss.append(val)
        improved = val < best - cfg.min_delta
        if val < best:
            best = val
            history.best_epoch = epoch
            best_params = {k: v.copy() for k, v in work.params.items()}
        wait = 0 if improved else wait + 1
        log.debug("epoch %d train %.6g val %.6g", epoch, total / n, val)
        if wait > cfg.patience:
            history.stopped_reason = "patience"
            break
    work.params = best_params
    return work, history


def transfer_train(pretrained: Model, train_set: Dataset, val_set: Dataset, cfg: TrainConfig):
    """Continue training from ``pretrained`` weights; no layer is frozen."""
    if train_set.cells.shape[1:] != pretrained.arch.input_shape:
        raise ShapeMismatch(
            f"pretrained model expects {pretrained.arch.input_shape}, data is {train_set.cells.shape[1:]}"
        )
    return train(pretrained, train_set, val_set, cfg)


@dataclass
class RunResult:
    index: int
    seeds: dict
    test_mse: float | None
    history: TrainHistory | None = None
    model: Model | None = None
    start_hash: str | None = None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass
class RepeatStats:
    values: list
    failed: list = field(default_factory=list)

    def __post_init__(self):
        ok = [v for v in self.values if v is not None]
        if not ok:
            raise ValueError("no successful runs")

    @property
    def successful(self) -> list:
        return [v for v in self.values if v is not None]

    @property
    def optimal(self) -> float:
        return min(self.successful)

    @property
    def mean(self) -> float:
        ok = self.successful
        return sum(ok) / len(ok)

    def to_dict(self) -> dict:
        return {
            "per_run_test_mse": self.values,
            "failed_runs": self.failed,
            "optimal": self.optimal,
            "mean": self.mean,
        }


@dataclass(frozen=True)
class RunPlan:
    """Everything a single repeat needs; picklable for worker processes."""

    d0: Dataset
    test: Dataset
    ops: tuple
    cfg: TrainConfig
    arch: ModelArch
    pretrained: Model | None = None
    # when set, every repeat shares this validation split
    split_seed: int | None = None


def run_seeds(base_seed: int, k: int, split_seed: int | None = None) -> dict:
    return {
        "split": derive_seed(base_seed, k, 1) if split_seed is None else split_seed,
        "init": derive_seed(base_seed, k, 2),
        "train": derive_seed(base_seed, k, 3),
    }


def run_once(plan: RunPlan, base_seed: int, k: int) -> RunResult:
    seeds = run_seeds(base_seed, k, plan.split_seed)
    train_part, val_part = split_validation(plan.d0, plan.cfg.val_fraction, seeds["split"])
    train_set = build_training_set(train_part, plan.ops)
    if plan.pretrained is not None:
        start = plan.pretrained.copy()
    else:
        start = init_model(plan.arch, seeds["init"])
    start_hash = start.weight_hash()
    cfg = replace(plan.cfg, seed=seeds["train"])
    try:
        if plan.pretrained is not None:
            model, history = transfer_train(start, train_set, val_part, cfg)
        else:
            model, history = train(start, train_set, val_part, cfg)
    except TrainingDiverged as exc:
        log.warning("run %d aborted: %s", k, exc)
        return RunResult(k, seeds, None, start_hash=start_hash, error=str(exc))
    return RunResult(k, seeds, eval_mse(model, plan.test), history, model, start_hash)


def _run_star(args):
    return run_once(*args)


def run_repeats(
    plan: RunPlan,
    n_repeats: int,
    base_seed: int,
    workers: int = 1,
    on_result: Callable[[RunResult], None] | None = None,
) -> tuple[RepeatStats, list[RunResult]]:
    """Run ``n_repeats`` seeded trainings; run ``k`` uses seeds derived from ``(base_seed, k)``."""
    if n_repeats < 1:
        raise ValueError("n_repeats must be >= 1")
    jobs = [(plan, base_seed, k) for k in range(n_repeats)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_star, jobs))
    else:
        results = [run_once(*job) for job in jobs]
    results.sort(key=lambda r: r.index)
    if on_result is not None:
        for r in results:
            on_result(r)
    if all(r.failed for r in results):
        raise RunAborted(f"all {n_repeats} runs diverged")
    stats = RepeatStats([r.test_mse for r in results], [r.index for r in results if r.failed])
    return stats, results


def default_arch(d0: Dataset, dropout: float = 0.2) -> ModelArch:
    return surrogate_arch(*d0.geometry.shape, dropout=dropout)
