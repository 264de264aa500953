"""Label-preserving rotations and mirrors of crack configurations.

All transforms act on the plan (last two axes) and never permute levels.
Rotations are clockwise.
"""

from __future__ import annotations

import enum
from typing import Sequence

import numpy as np

from .dataset import Dataset, combined_tag
from .lattice import CrackConfig, GeometryError


class AugmentOp(str, enum.Enum):
    R90 = "R90"
    R180 = "R180"
    R270 = "R270"
    MV = "MV"
    MH = "MH"

    @property
    def dataset_tag(self) -> str:
        return DATASET_TAGS[self]

    @property
    def needs_square(self) -> bool:
        return self in (AugmentOp.R90, AugmentOp.R270)


DATASET_TAGS = {
    AugmentOp.R90: "D1",
    AugmentOp.R180: "D2",
    AugmentOp.R270: "D3",
    AugmentOp.MV: "D4",
    AugmentOp.MH: "D5",
}
TAG_TO_OP = {v: k for k, v in DATASET_TAGS.items()}

# every op is its own inverse except the quarter turns
INVERSE = {
    AugmentOp.R90: AugmentOp.R270,
    AugmentOp.R270: AugmentOp.R90,
    AugmentOp.R180: AugmentOp.R180,
    AugmentOp.MV: AugmentOp.MV,
    AugmentOp.MH: AugmentOp.MH,
}


def parse_op(op) -> AugmentOp:
    if isinstance(op, AugmentOp):
        return op
    if op in TAG_TO_OP:
        return TAG_TO_OP[op]
    return AugmentOp(op)


def transform_cells(cells: np.ndarray, op: AugmentOp) -> np.ndarray:
    """Apply ``op`` to an array whose last two axes are (rows, cols).

    Index maps, for an H x W plan:
      R90  out[r, c] = in[H-1-c, r]
      R180 out[r, c] = in[H-1-r, W-1-c]
      R270 out[r, c] = in[c, W-1-r]
      MV   out[r, c] = in[r, W-1-c]
      MH   out[r, c] = in[H-1-r, c]
    """
    op = parse_op(op)
    h, w = cells.shape[-2:]
    if op.needs_square and h != w:
        raise GeometryError(f"{op.value} needs a square plan, got {h}x{w}")
    if op is AugmentOp.R90:
        out = np.swapaxes(cells, -1, -2)[..., ::-1]
    elif op is AugmentOp.R180:
        out = cells[..., ::-1, ::-1]
    elif op is AugmentOp.R270:
        out = np.swapaxes(cells, -1, -2)[..., ::-1, :]
    elif op is AugmentOp.MV:
        out = cells[..., :, ::-1]
    else:
        out = cells[..., ::-1, :]
    return np.ascontiguousarray(out)


def apply_op(config: CrackConfig, op) -> CrackConfig:
    op = parse_op(op)
    geom = config.geometry
    out = transform_cells(config.cells, op)
    mask = geom.fuel_mask
    if np.any((out != 0) & ~mask):
        raise GeometryError(f"{op.value} maps fuel cells off the mask; mask is not symmetric")
    return CrackConfig(geom, out)


def augment_instance(instance: tuple[CrackConfig, float], op) -> tuple[CrackConfig, float]:
    config, label = instance
    return apply_op(config, op), label


def check_ops(ops: Sequence) -> list[AugmentOp]:
    parsed = [parse_op(o) for o in ops]
    if len(set(parsed)) != len(parsed):
        raise ValueError(f"duplicate augmentation op in {[o.value for o in parsed]}")
    return parsed


def build_training_set(d0: Dataset, ops: Sequence) -> Dataset:
    """D0 followed by one transformed block per op, in ``ops`` order."""
    ops = check_ops(ops)
    if not ops:
        return d0
    symmetric = d0.geometry.symmetric_under()
    blocks = [d0.cells]
    for op in ops:
        if op.needs_square and not d0.geometry.is_square:
            raise GeometryError(f"{op.value} needs a square plan")
        if not symmetric[op.value]:
            raise GeometryError(f"fuel mask is not symmetric under {op.value}")
        blocks.append(transform_cells(d0.cells, op))
    k = len(ops) + 1
    parts = [d0.tag] + [op.dataset_tag for op in ops]
    return Dataset(
        d0.geometry,
        np.concatenate(blocks),
        np.tile(d0.labels, k),
        d0.norm,
        combined_tag(parts),
        np.tile(d0.ids, k),
        np.concatenate([d0.sources] + [np.full(len(d0), op.dataset_tag) for op in ops]),
    )
