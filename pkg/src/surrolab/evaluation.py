"""Test metrics and report files (JSON summary plus ``truth,pred`` CSV)."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset

MARGINS = (0.10, 0.20)
LOWER, UPPER = 0.2, 0.6
HIST_BINS = 50


def _pairs(pairs) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(pairs, dtype=np.float64).reshape(-1, 2)
    if arr.shape[0] == 0:
        raise ValueError("no (truth, pred) pairs")
    return arr[:, 0], arr[:, 1]


def mse(truth, pred) -> float:
    truth = np.asarray(truth, dtype=np.float64)
    if truth.size == 0:
        raise ValueError("empty test set")
    return float(np.mean((np.asarray(pred, dtype=np.float64) - truth) ** 2))


def test_mse(model, test_set: Dataset) -> float:
    if len(test_set) == 0:
        raise ValueError("empty test set")
    return mse(test_set.labels, model.predict(test_set.features()))


test_mse.__test__ = False  # not a pytest test


def margin_fraction(pairs, margin: float) -> float:
    """Share of predictions within ``margin`` (inclusive) of the truth."""
    if not margin > 0:
        raise ValueError("margin must be > 0")
    truth, pred = _pairs(pairs)
    return float(np.mean(np.abs(pred - truth) <= margin))


@dataclass(frozen=True)
class Segment:
    n_truth: int
    placed_ratio: float | None

    def to_dict(self) -> dict:
        return {"n_truth": self.n_truth, "placed_ratio": self.placed_ratio}


def segment_report(pairs, lower: float = LOWER, upper: float = UPPER) -> dict[str, Segment]:
    """Placement of predictions relative to two label thresholds.

    A truth above ``upper`` is placed when its prediction is above ``upper``,
    one below ``lower`` when its prediction is below ``lower``, and one in
    between when its prediction is in ``[lower, upper]``. Empty segments get
    ``placed_ratio=None``.
    """
    if not 0 < lower < upper < 1:
        raise ValueError("need 0 < lower < upper < 1")
    truth, pred = _pairs(pairs)
    groups = {
        f"above_{upper:g}": (truth > upper, pred > upper),
        f"below_{lower:g}": (truth < lower, pred < lower),
        "middle": ((truth >= lower) & (truth <= upper), (pred >= lower) & (pred <= upper)),
    }
    out = {}
    for name, (members, placed) in groups.items():
        n = int(members.sum())
        out[name] = Segment(n, float(placed[members].mean()) if n else None)
    return out


def extreme_placement(segments: dict[str, Segment], lower: float = LOWER, upper: float = UPPER) -> float:
    """Mean placed ratio of the two tail segments (ignores empty ones)."""
    vals = [segments[k].placed_ratio for k in (f"above_{upper:g}", f"below_{lower:g}")]
    vals = [v for v in vals if v is not None]
    return float(np.mean(vals)) if vals else float("nan")


def reduction_percent(old_mse: float, new_mse: float) -> float:
    """Relative MSE reduction in percent, rounded to the nearest 0.5."""
    if not old_mse > 0:
        raise ValueError("old_mse must be > 0")
    pct = 100.0 * (old_mse - new_mse) / old_mse
    return math.floor(2.0 * pct + 0.5) / 2.0


def label_histogram(labels, bins: int = HIST_BINS) -> list[int]:
    counts, _ = np.histogram(np.asarray(labels, dtype=np.float64), bins=bins, range=(0.0, 1.0))
    return [int(c) for c in counts]


@dataclass(eq=False)
class EvaluationReport:
    test_mse: float
    margins: dict[str, float]
    segments: dict[str, Segment]
    histogram: list[int]
    pairs: np.ndarray = field(repr=False)

    def outside_margin_percent(self, margin: float) -> float:
        return 100.0 * (1.0 - self.margins[f"{margin:g}"])

    def to_dict(self) -> dict:
        return {
            "test_mse": self.test_mse,
            "margins": self.margins,
            "segments": {k: s.to_dict() for k, s in self.segments.items()},
            "histogram": {"bins": len(self.histogram), "range": [0.0, 1.0], "counts": self.histogram},
            "pairs": self.pairs.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationReport":
        return cls(
            d["test_mse"],
            dict(d["margins"]),
            {k: Segment(v["n_truth"], v["placed_ratio"]) for k, v in d["segments"].items()},
            list(d["histogram"]["counts"]),
            np.asarray(d["pairs"], dtype=np.float64).reshape(-1, 2),
        )

    def __eq__(self, other):
        if not isinstance(other, EvaluationReport):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def build_report(truth, pred, bins: int = HIST_BINS) -> EvaluationReport:
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    pairs = np.column_stack([truth, pred])
    return EvaluationReport(
        mse(truth, pred),
        {f"{m:g}": margin_fraction(pairs, m) for m in MARGINS},
        segment_report(pairs),
        label_histogram(truth, bins),
        pairs,
    )


def evaluate(model, test_set: Dataset, bins: int = HIST_BINS) -> EvaluationReport:
    if len(test_set) == 0:
        raise ValueError("empty test set")
    return build_report(test_set.labels, model.predict(test_set.features()), bins)


def emit_report(report: EvaluationReport, directory) -> tuple[Path, Path]:
    """Write ``report.json`` and ``preds.csv`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    json_path = directory / "report.json"
    csv_path = directory / "preds.csv"
    json_path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["truth", "pred"])
        for t, p in report.pairs:
            writer.writerow([repr(float(t)), repr(float(p))])
    return json_path, csv_path


def read_report(directory) -> EvaluationReport:
    path = Path(directory)
    if path.is_dir():
        path = path / "report.json"
    return EvaluationReport.from_dict(json.loads(path.read_text(encoding="utf-8")))
