"""Synthetic stand-in for the seismic solver.

The raw label of a configuration is a baseline plus, for every cracked
brick, a radial Gaussian influence of its channel's distance from the core
center and an optional symmetry-breaking directional term::

    raw = b0 + sum_cracked [ exp(-rho^2 / (2 rho0^2)) + kappa * v(x, y) ] + noise

with ``v = 0`` (``none``), ``v = x`` (``odd_x``) or ``v = x * y``
(``saddle``). Each mode leaves exactly one subgroup of the five plan
transforms invariant: all of them, ``{MH}`` and ``{R180}`` respectively.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .augment import AugmentOp, parse_op, transform_cells
from .dataset import Dataset, DegenerateLabels, fit_norm, normalize
from .lattice import CRACKED, CoreGeometry, CrackConfig, random_cells
from .seeding import derive_seed

DIRECTIONAL_MODES = ("none", "odd_x", "saddle")


@dataclass(frozen=True)
class OracleConfig:
    baseline: float = 0.0
    radial_scale: float = 3.0
    directional_mode: str = "none"
    break_weight: float = 0.0
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.radial_scale > 0:
            raise ValueError("radial_scale must be > 0")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.break_weight < 0:
            raise ValueError("break_weight must be >= 0")
        if self.directional_mode not in DIRECTIONAL_MODES:
            raise ValueError(f"directional_mode must be one of {DIRECTIONAL_MODES}")

    def to_dict(self) -> dict:
        return asdict(self)


def influence_field(geometry: CoreGeometry, oc: OracleConfig) -> np.ndarray:
    """Per-channel contribution of one cracked brick, shape (H, W)."""
    x, y = geometry.offsets()
    rho2 = x**2 + y**2
    field = np.exp(-rho2 / (2 * oc.radial_scale**2))
    if oc.directional_mode == "odd_x":
        field = field + oc.break_weight * x
    elif oc.directional_mode == "saddle":
        field = field + oc.break_weight * x * y
    return np.where(geometry.fuel_mask, field, 0.0)


def _raw_labels(cells: np.ndarray, field: np.ndarray, baseline: float) -> np.ndarray:
    cracked = (cells == CRACKED).astype(np.float64)
    return baseline + np.einsum("...lhw,hw->...", cracked, field)


def oracle_label(config: CrackConfig, oc: OracleConfig, noise_seed: int = 0) -> float:
    raw = float(_raw_labels(config.cells, influence_field(config.geometry, oc), oc.baseline))
    if oc.noise_std > 0:
        raw += np.random.default_rng(noise_seed).normal(0.0, oc.noise_std)
    return raw


def _noise(oc: OracleConfig, seed: int, index: int) -> float:
    if oc.noise_std == 0:
        return 0.0
    return float(np.random.default_rng(derive_seed(oc.seed, seed, index)).normal(0.0, oc.noise_std))


def generate_dataset(
    geometry: CoreGeometry,
    oc: OracleConfig,
    n: int,
    fraction_range: tuple[float, float] = (0.0, 0.4),
    seed: int = 0,
    *,
    norm: tuple[float, float] | None = None,
    exclude: Iterable[bytes] = (),
    tag: str = "D0",
) -> Dataset:
    """Draw ``n`` labeled random configurations.

    Instance ``i`` is generated from a seed derived from ``(seed, i)``.
    Labels are min-max normalized over this draw unless ``norm`` is given,
    in which case those parameters are reused (test sets). Configurations
    whose cell bytes appear in ``exclude`` are skipped and redrawn.
    """
    lo, hi = fraction_range
    if n < 2:
        raise ValueError("n must be >= 2")
    if not 0.0 <= lo <= hi <= 1.0:
        raise ValueError(f"fraction_range must satisfy 0 <= lo <= hi <= 1, got {fraction_range}")
    excluded = set(exclude)
    field = influence_field(geometry, oc)
    cells = np.empty((n, *geometry.shape), dtype=np.int8)
    noise = np.empty(n)
    key = 0
    filled = 0
    while filled < n:
        rng = np.random.default_rng(derive_seed(seed, key))
        fraction = rng.uniform(lo, hi) if hi > lo else lo
        c = random_cells(geometry, fraction, rng)
        if c.tobytes() not in excluded:
            cells[filled] = c
            noise[filled] = _noise(oc, seed, key)
            filled += 1
        key += 1
    raw = _raw_labels(cells, field, oc.baseline) + noise
    if norm is None:
        norm = fit_norm(raw)
    return Dataset(geometry, cells, normalize(raw, norm), norm, tag)


def agreement_check(oc: OracleConfig, base_instances: Sequence[CrackConfig], op) -> dict:
    """Compare the oracle on transformed inputs against the unchanged label.

    Noise is disabled. Returns max and mean absolute raw-label discrepancy.
    """
    op = parse_op(op)
    quiet = replace(oc, noise_std=0.0)
    if not base_instances:
        return {"op": op.value, "n": 0, "max_abs": 0.0, "mean_abs": 0.0}
    geometry = base_instances[0].geometry
    field = influence_field(geometry, quiet)
    cells = np.stack([c.cells for c in base_instances])
    before = _raw_labels(cells, field, quiet.baseline)
    after = _raw_labels(transform_cells(cells, op), field, quiet.baseline)
    diff = np.abs(after - before)
    return {
        "op": op.value,
        "n": len(base_instances),
        "max_abs": float(diff.max()),
        "mean_abs": float(diff.mean()),
    }


def agreement_table(oc: OracleConfig, base_instances: Sequence[CrackConfig]) -> list[dict]:
    return [agreement_check(oc, base_instances, op) for op in AugmentOp]



__all__ = [
    "OracleConfig",
    "Dataset",
    "DegenerateLabels",
    "oracle_label",
    "generate_dataset",
    "agreement_check",
    "agreement_table",
    "influence_field",
]
