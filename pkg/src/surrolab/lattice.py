"""Core geometry and crack-configuration encoding.

A core is a square-ish plan of channel positions stacked ``levels`` high.
Each fuel brick is encoded as +1 (cracked), -1 (intact) and positions
outside the fuel mask as 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

CRACKED = 1
INTACT = -1
EMPTY = 0

AGR_CHANNELS = 284


class GeometryError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CoreGeometry:
    plan_width: int
    plan_height: int
    levels: int
    fuel_mask: np.ndarray = field(repr=False)
    mask_spec: dict = field(default_factory=lambda: {"kind": "full"})

    def __post_init__(self):
        mask = np.asarray(self.fuel_mask, dtype=bool)
        if mask.shape != (self.plan_height, self.plan_width):
            raise GeometryError(
                f"fuel_mask shape {mask.shape} does not match plan "
                f"{(self.plan_height, self.plan_width)}"
            )
        if not mask.any():
            raise GeometryError("fuel mask has no channels")
        mask.setflags(write=False)
        object.__setattr__(self, "fuel_mask", mask)

    @property
    def center(self) -> tuple[float, float]:
        return ((self.plan_height - 1) / 2, (self.plan_width - 1) / 2)

    @property
    def is_square(self) -> bool:
        return self.plan_width == self.plan_height

    @property
    def n_channels(self) -> int:
        return int(self.fuel_mask.sum())

    @property
    def n_bricks(self) -> int:
        return self.n_channels * self.levels

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.levels, self.plan_height, self.plan_width)

    def offsets(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-center offsets ``(x, y)`` from the plan center, y pointing up."""
        rows, cols = np.mgrid[: self.plan_height, : self.plan_width]
        cy, cx = self.center
        return cols - cx, cy - rows

    def symmetric_under(self) -> dict[str, bool]:
        m = self.fuel_mask
        out = {"MV": np.array_equal(m, m[:, ::-1]), "MH": np.array_equal(m, m[::-1, :])}
        out["R180"] = np.array_equal(m, m[::-1, ::-1])
        if self.is_square:
            out["R90"] = np.array_equal(m, np.rot90(m, -1))
            out["R270"] = np.array_equal(m, np.rot90(m, 1))
        else:
            out["R90"] = out["R270"] = False
        return out

    def to_dict(self) -> dict:
        return {
            "plan_width": self.plan_width,
            "plan_height": self.plan_height,
            "levels": self.levels,
            "mask_spec": self.mask_spec,
            "fuel_mask": ["".join("1" if v else "0" for v in row) for row in self.fuel_mask],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CoreGeometry":
        mask = np.array([[ch == "1" for ch in row] for row in d["fuel_mask"]], dtype=bool)
        return cls(d["plan_width"], d["plan_height"], d["levels"], mask, d.get("mask_spec", {}))

    def __eq__(self, other):
        if not isinstance(other, CoreGeometry):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.fuel_mask, other.fuel_mask)
        )

    def __hash__(self):
        return hash((self.shape, self.fuel_mask.tobytes()))


def _squared_distances(width: int, height: int) -> np.ndarray:
    rows, cols = np.mgrid[:height, :width]
    return (rows - (height - 1) / 2) ** 2 + (cols - (width - 1) / 2) ** 2


def _within(width: int, height: int, radius: float) -> np.ndarray:
    # squared distances are multiples of 1/4; absorb sqrt round-off
    return _squared_distances(width, height) <= radius**2 + 1e-9


def agr_like_radius(width: int, height: int, target: int = AGR_CHANNELS) -> float:
    """Smallest disk radius whose channel count is closest to ``target``."""
    d2 = np.sort(_squared_distances(width, height).ravel())
    radii2, counts = np.unique(d2, return_counts=True)
    cumulative = np.cumsum(counts)
    # argmin returns the first (smallest radius) on ties
    best = int(np.argmin(np.abs(cumulative - target)))
    return math.sqrt(radii2[best])


def make_geometry(width: int, height: int, levels: int = 3, mask_spec="agr_like") -> CoreGeometry:
    """Build a geometry; ``mask_spec`` is ``"full"``, ``"agr_like"`` or ``{"kind": "disk", "radius": r}``."""
    if min(width, height, levels) < 1:
        raise GeometryError("width, height and levels must be >= 1")
    spec = {"kind": mask_spec} if isinstance(mask_spec, str) else dict(mask_spec)
    kind = spec.get("kind")
    if kind == "full":
        mask = np.ones((height, width), dtype=bool)
    elif kind == "disk":
        radius = float(spec.get("radius", 0))
        if radius <= 0:
            raise GeometryError("disk radius must be > 0")
        mask = _within(width, height, radius)
        if not mask.any():
            raise GeometryError(f"disk radius {radius} selects no channels")
    elif kind == "agr_like":
        if width != height:
            raise GeometryError("agr_like mask needs a square plan for four-fold symmetry")
        radius = agr_like_radius(width, height)
        spec["radius"] = radius
        mask = _within(width, height, radius)
    else:
        raise GeometryError(f"unknown mask kind {kind!r}")
    return CoreGeometry(width, height, levels, mask, spec)


@dataclass(frozen=True, eq=False)
class CrackConfig:
    geometry: CoreGeometry
    cells: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.int8)
        if cells.shape != self.geometry.shape:
            raise GeometryError(f"cells shape {cells.shape} != geometry {self.geometry.shape}")
        if not np.array_equal(cells != EMPTY, np.broadcast_to(self.geometry.fuel_mask, cells.shape)):
            raise GeometryError("cells must be nonzero exactly on the fuel mask")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @property
    def n_cracked(self) -> int:
        return int((self.cells == CRACKED).sum())

    @property
    def crack_fraction(self) -> float:
        return self.n_cracked / self.geometry.n_bricks

    def __eq__(self, other):
        if not isinstance(other, CrackConfig):
            return NotImplemented
        return self.geometry == other.geometry and np.array_equal(self.cells, other.cells)

    def __hash__(self):
        return hash(self.cells.tobytes())


def crack_count(fraction: float, n_bricks: int) -> int:
    # round half up
    return int(math.floor(fraction * n_bricks + 0.5))


def random_cells(geometry: CoreGeometry, fraction: float, rng: np.random.Generator) -> np.ndarray:
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    mask3 = np.broadcast_to(geometry.fuel_mask, geometry.shape)
    positions = np.flatnonzero(mask3)
    k = crack_count(fraction, positions.size)
    chosen = rng.choice(positions.size, size=k, replace=False, shuffle=False)
    cells = np.where(mask3, INTACT, EMPTY).astype(np.int8).ravel()
    cells[positions[chosen]] = CRACKED
    return cells.reshape(geometry.shape)


def random_crack_config(geometry: CoreGeometry, fraction: float, seed: int) -> CrackConfig:
    rng = np.random.default_rng(seed)
    return CrackConfig(geometry, random_cells(geometry, fraction, rng))
