"""Regression losses with gradients w.r.t. predictions.

Besides MSE, MAE and Huber this implements the density-weighted loss that
up-weights errors of predictions close to the label mode::

    F_i  = floor + (alpha * Z(pred_i) / beta) ** p
    loss = agg_i F_i * (y_i - pred_i) ** 2

where ``Z`` is the Gaussian pdf fitted to the training labels (mode ``mu``,
standard deviation ``sigma``) and ``beta`` its supremum ``1/(sigma sqrt(2 pi))``.
With ``p = 2``, mean aggregation and no floor this is the unmodified form;
the flags switch off the power, the mean and add the unit floor.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

SQRT_2PI = math.sqrt(2.0 * math.pi)

KINDS = ("mse", "mae", "huber", "weighted")


@dataclass(frozen=True)
class LossSpec:
    kind: str = "huber"
    delta: float = 1.0
    alpha: float = 1.0
    squared: bool = True
    take_mean: bool = True
    floor_one: bool = True
    batch_beta: bool = False
    mu: float | None = None
    sigma: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"loss kind must be one of {KINDS}")
        if not self.delta > 0:
            raise ValueError("huber delta must be > 0")
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError("sigma must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LossSpec":
        return cls(**d)


def weighted(alpha=1.0, squared=True, take_mean=True, floor_one=True, **kw) -> LossSpec:
    return LossSpec("weighted", alpha=alpha, squared=squared, take_mean=take_mean, floor_one=floor_one, **kw)


@dataclass(frozen=True)
class ModeFit:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")

    @property
    def beta(self) -> float:
        return 1.0 / (self.sigma * SQRT_2PI)


class DegenerateFit(ValueError):
    pass


def estimate_mode_sigma(labels, bins: int = 50) -> ModeFit:
    """Histogram mode over [0, 1] (lowest bin wins ties) and sample std."""
    labels = np.asarray(labels, dtype=np.float64)
    if labels.size < 2:
        raise DegenerateFit("need at least two labels")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    sigma = float(np.std(labels, ddof=1))
    # identical labels leave only round-off in the std
    if sigma <= 1e-12 * max(1.0, float(np.abs(labels).max())):
        raise DegenerateFit("labels have zero spread")
    counts, edges = np.histogram(labels, bins=bins, range=(0.0, 1.0))
    k = int(np.argmax(counts))
    return ModeFit(float((edges[k] + edges[k + 1]) / 2), sigma)


def fit_for(spec: LossSpec, labels, bins: int = 50) -> ModeFit | None:
    if spec.kind != "weighted":
        return None
    if spec.mu is not None and spec.sigma is not None:
        return ModeFit(spec.mu, spec.sigma)
    est = estimate_mode_sigma(labels, bins)
    return ModeFit(est.mu if spec.mu is None else spec.mu, est.sigma if spec.sigma is None else spec.sigma)


def z_factor(pred, fit: ModeFit):
    pred = np.asarray(pred, dtype=np.float64)
    return fit.beta * np.exp(-((pred - fit.mu) ** 2) / (2.0 * fit.sigma**2))


def _check(preds, truths):
    preds = np.asarray(preds, dtype=np.float64).ravel()
    truths = np.asarray(truths, dtype=np.float64).ravel()
    if preds.shape != truths.shape or preds.size == 0:
        raise ValueError("preds and truths must be non-empty and equal length")
    return preds, truths


def _weighted_parts(preds, truths, spec: LossSpec, fit: ModeFit):
    z = z_factor(preds, fit)
    if spec.batch_beta:
        k = int(np.argmax(z))
        beta = z[k]
    else:
        k, beta = None, fit.beta
    p = 2 if spec.squared else 1
    ratio = spec.alpha * z / beta
    factor = ratio**p + (1.0 if spec.floor_one else 0.0)
    return z, k, beta, p, ratio, factor


def weighted_loss(preds, truths, spec: LossSpec, fit: ModeFit) -> float:
    preds, truths = _check(preds, truths)
    factor = _weighted_parts(preds, truths, spec, fit)[-1]
    terms = factor * (truths - preds) ** 2
    return float(terms.mean() if spec.take_mean else terms.sum())


def weighted_loss_gradient(preds, truths, spec: LossSpec, fit: ModeFit) -> np.ndarray:
    """d(loss)/d(pred_i); mu, sigma fixed, ``beta`` differentiated in batch mode."""
    preds, truths = _check(preds, truths)
    z, k, beta, p, ratio, factor = _weighted_parts(preds, truths, spec, fit)
    resid = truths - preds
    sq = resid**2
    dz = -z * (preds - fit.mu) / fit.sigma**2
    # d ratio_i^p / d ratio_i
    dpow = p * ratio ** (p - 1)
    grad = dpow * spec.alpha * dz / beta * sq - 2.0 * factor * resid
    if k is not None:
        # beta = z_k also moves with pred_k
        grad[k] -= np.sum(dpow * spec.alpha * z / beta**2 * sq) * dz[k]
    return grad / preds.size if spec.take_mean else grad


def standard_loss(preds, truths, kind: str, delta: float = 1.0) -> tuple[float, np.ndarray]:
    """Mean-aggregated MSE, MAE or Huber value and its gradient."""
    preds, truths = _check(preds, truths)
    e = preds - truths
    n = preds.size
    if kind == "mse":
        return float(np.mean(e**2)), 2.0 * e / n
    if kind == "mae":
        # subgradient 0 at e == 0
        return float(np.mean(np.abs(e))), np.sign(e) / n
    if kind == "huber":
        a = np.abs(e)
        inner = a <= delta
        vals = np.where(inner, 0.5 * e**2, delta * (a - 0.5 * delta))
        grad = np.where(inner, e, delta * np.sign(e))
        return float(np.mean(vals)), grad / n
    raise ValueError(f"unknown standard loss {kind!r}")


def loss_and_grad(spec: LossSpec, preds, truths, fit: ModeFit | None = None) -> tuple[float, np.ndarray]:
    if spec.kind == "weighted":
        if fit is None:
            raise ValueError("weighted loss needs a ModeFit")
        return weighted_loss(preds, truths, spec, fit), weighted_loss_gradient(preds, truths, spec, fit)
    return standard_loss(preds, truths, spec.kind, spec.delta)
