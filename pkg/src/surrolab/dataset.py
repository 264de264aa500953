"""Labeled crack-configuration datasets, stored column-wise."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import CoreGeometry, CrackConfig


class DegenerateLabels(ValueError):
    pass


def normalize(raw, norm: tuple[float, float]) -> np.ndarray:
    lo, hi = norm
    return (np.asarray(raw, dtype=np.float64) - lo) / (hi - lo)


def denormalize(values, norm: tuple[float, float]) -> np.ndarray:
    lo, hi = norm
    return np.asarray(values, dtype=np.float64) * (hi - lo) + lo


def fit_norm(raw) -> tuple[float, float]:
    raw = np.asarray(raw, dtype=np.float64)
    lo, hi = float(raw.min()), float(raw.max())
    if not lo < hi:
        raise DegenerateLabels(f"all raw labels equal ({lo}); cannot min-max normalize")
    return lo, hi


def combined_tag(parts) -> str:
    return "combined(" + ",".join(parts) + ")"


@dataclass(eq=False)
class Dataset:
    """Instances as parallel arrays.

    ``ids`` identify the unaugmented source instance, ``sources`` name the
    dataset each row came from (``D0``..``D5``), so augmented descendants
    can always be traced back.
    """

    geometry: CoreGeometry
    cells: np.ndarray
    labels: np.ndarray
    norm: tuple[float, float]
    tag: str = "D0"
    ids: np.ndarray = field(default=None)
    sources: np.ndarray = field(default=None)

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.int8)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        n = len(self.labels)
        if self.cells.shape != (n, *self.geometry.shape):
            raise ValueError(f"cells shape {self.cells.shape} inconsistent with {n} labels")
        if self.ids is None:
            self.ids = np.arange(n, dtype=np.int64)
        if self.sources is None:
            self.sources = np.full(n, "D0")
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.sources = np.asarray(self.sources, dtype="<U2")
        lo, hi = self.norm
        if not lo < hi:
            raise DegenerateLabels("norm requires raw_min < raw_max")
        self.norm = (float(lo), float(hi))

    def __len__(self) -> int:
        return len(self.labels)

    def instance(self, i: int) -> tuple[CrackConfig, float]:
        return CrackConfig(self.geometry, self.cells[i]), float(self.labels[i])

    def __iter__(self):
        for i in range(len(self)):
            yield self.instance(i)

    def features(self) -> np.ndarray:
        return self.cells.astype(np.float64)

    def raw_labels(self) -> np.ndarray:
        return denormalize(self.labels, self.norm)

    def subset(self, index, tag: str | None = None) -> "Dataset":
        index = np.asarray(index)
        return Dataset(
            self.geometry,
            self.cells[index],
            self.labels[index],
            self.norm,
            self.tag if tag is None else tag,
            self.ids[index],
            self.sources[index],
        )

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.geometry == other.geometry
            and self.tag == other.tag
            and self.norm == other.norm
            and np.array_equal(self.cells, other.cells)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.sources, other.sources)
        )
