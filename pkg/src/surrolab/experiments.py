"""Experiment registry E1.0 - E5.3.

Augmentation blocks are named by their dataset tags: D1 R90, D2 R180,
D3 R270, D4 MV, D5 MH. Experiment 2 adds blocks in the order
D2, D4, D1, D3, D5.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .augment import AugmentOp, TAG_TO_OP
from .loss import LossSpec, weighted

ALL_TAGS = ("D2", "D4", "D1", "D3", "D5")
PRETRAINED_NAMES = ("M1", "M2", "M3", "M4", "M5")


class UnknownExperiment(KeyError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    id: str
    datasets: tuple[str, ...]
    loss: LossSpec
    repeats: int
    start: str = "fresh"
    description: str = ""

    @property
    def ops(self) -> tuple[AugmentOp, ...]:
        return tuple(TAG_TO_OP[t] for t in self.datasets)

    @property
    def transfer(self) -> bool:
        return self.start == "pretrained"

    def with_loss(self, **changes) -> "ExperimentSpec":
        return replace(self, loss=replace(self.loss, **changes))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "datasets": ["D0", *self.datasets],
            "loss": self.loss.to_dict(),
            "repeats": self.repeats,
            "start": self.start,
            "description": self.description,
        }


HUBER = LossSpec("huber", delta=1.0)


def _registry() -> dict[str, ExperimentSpec]:
    reg = {}

    def add(eid, tags, loss, repeats=32, start="fresh", desc=""):
        reg[eid] = ExperimentSpec(eid, tuple(tags), loss, repeats, start, desc)

    add("E1.0", [], HUBER, desc="D0")
    for i, tag in enumerate(("D1", "D2", "D3", "D4", "D5"), start=1):
        add(f"E1.{i}", [tag], HUBER, desc=f"D0 & {tag}")
    for i in range(1, 5):
        tags = ALL_TAGS[: i + 1]
        add(f"E2.{i}", tags, HUBER, desc="All" if i == 4 else ", ".join(("D0",) + tags))
    add("E3.1", [], weighted(1.0), desc="weighted loss")
    add("E3.2", [], weighted(1.0, squared=False), desc="weighted loss without power of 2")
    add("E3.3", [], weighted(1.0, take_mean=False), desc="weighted loss without mean term")
    add("E3.4", [], weighted(1.0, squared=False, take_mean=False), desc="E3.2 and E3.3 combined")
    for i in range(4):
        add(f"E4.{i}", ALL_TAGS, weighted(float(i + 1)), desc=f"E2.4 data, weighted loss alpha={i + 1}")
    add("E5.1", ALL_TAGS, HUBER, 6, "pretrained", "transfer, E2.4 data")
    add("E5.2", ALL_TAGS, weighted(1.0), 6, "pretrained", "transfer, E2.4 data, weighted loss")
    add("E5.3", ALL_TAGS, weighted(2.0), 6, "pretrained", "transfer, E2.4 data, weighted loss alpha=2")
    return reg


REGISTRY = _registry()


def get_experiment(eid: str) -> ExperimentSpec:
    try:
        return REGISTRY[eid]
    except KeyError:
        raise UnknownExperiment(f"unknown experiment {eid!r}; known: {', '.join(REGISTRY)}") from None
