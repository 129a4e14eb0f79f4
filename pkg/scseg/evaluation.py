"""Precision and recall of foreground masks against ground truth."""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from scseg.errors import InvalidArgumentError, SegmentationError
from scseg.image_io import load_mask
from scseg.segmenter import Mask
from scseg.utils import mean

logger = logging.getLogger(__name__)

REPORT_FIELDS = ("name", "tp", "fp", "fn", "precision", "recall")


class EvaluationError(SegmentationError):
    """A prediction/truth pair could not be evaluated."""


def _ratio(hits: int, total: int, other_empty: bool) -> float:
    # empty denominators: perfect when the other side is empty too
    if total == 0:
        return 1.0 if other_empty else 0.0
    return hits / total


@dataclass(frozen=True)
class EvalReport:
    """Pixel counts with foreground as the positive class."""

    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    name: str = ""

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int, name: str = "") -> EvalReport:
        truth_empty = tp + fn == 0
        pred_empty = tp + fp == 0
        return cls(
            tp=tp,
            fp=fp,
            fn=fn,
            precision=_ratio(tp, tp + fp, truth_empty),
            recall=_ratio(tp, tp + fn, pred_empty),
            name=name,
        )

    def row(self) -> list[str]:
        return [
            self.name, str(self.tp), str(self.fp), str(self.fn),
            f"{self.precision:.6f}", f"{self.recall:.6f}",
        ]


@dataclass(frozen=True)
class DatasetReport:
    images: list[EvalReport]
    aggregate: EvalReport
    pooled: EvalReport

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(REPORT_FIELDS)
        for report in self.images:
            writer.writerow(report.row())
        writer.writerow(self.aggregate.row())
        return buffer.getvalue()

    def to_json(self) -> str:
        document = {
            "images": [asdict(report) for report in self.images],
            "aggregate": asdict(self.aggregate),
            "pooled": asdict(self.pooled),
        }
        return json.dumps(document, indent=2)


def precision_recall(pred: Mask, truth: Mask, name: str = "") -> EvalReport:
    if pred.bits.shape != truth.bits.shape:
        raise InvalidArgumentError(
            f"mask sizes differ: prediction {pred.width}x{pred.height}, truth {truth.width}x{truth.height}"
        )
    predicted = pred.bits.astype(bool)
    actual = truth.bits.astype(bool)
    tp = int(np.count_nonzero(predicted & actual))
    fp = int(np.count_nonzero(predicted & ~actual))
    fn = int(np.count_nonzero(~predicted & actual))
    return EvalReport.from_counts(tp, fp, fn, name)


def aggregate_reports(reports: Sequence[EvalReport]) -> tuple[EvalReport, EvalReport]:
    """Per-image mean and pixel-pooled summaries of a list of reports."""
    if not reports:
        raise EvaluationError("nothing to aggregate: no image pairs")
    tp = sum(report.tp for report in reports)
    fp = sum(report.fp for report in reports)
    fn = sum(report.fn for report in reports)
    aggregate = EvalReport(
        tp=tp,
        fp=fp,
        fn=fn,
        precision=mean([report.precision for report in reports]),
        recall=mean([report.recall for report in reports]),
        name="aggregate",
    )
    return aggregate, EvalReport.from_counts(tp, fp, fn, name="pooled")


def _evaluate_pair(pair: tuple[Path, Path]) -> EvalReport:
    pred_path, truth_path = pair
    try:
        return precision_recall(load_mask(pred_path), load_mask(truth_path), name=Path(pred_path).name)
    except (SegmentationError, OSError) as e:
        raise EvaluationError(f"cannot evaluate {pred_path} against {truth_path}: {e}") from e


def evaluate_dataset(
    pairs: Sequence[tuple[str | Path, str | Path]], workers: int = 1
) -> DatasetReport:
    if not pairs:
        raise EvaluationError("nothing to evaluate: no image pairs")
    items = [(Path(pred), Path(truth)) for pred, truth in pairs]
    if workers == 1:
        reports = [_evaluate_pair(item) for item in items]
    else:
        with ThreadPoolExecutor(max_workers=workers or None) as pool:
            reports = list(pool.map(_evaluate_pair, items))
    aggregate, pooled = aggregate_reports(reports)
    logger.info(
        "Evaluated %d pairs: precision %.3f, recall %.3f",
        len(reports), aggregate.precision, aggregate.recall,
    )
    return DatasetReport(images=reports, aggregate=aggregate, pooled=pooled)


def pair_directories(pred_dir: str | Path, truth_dir: str | Path) -> list[tuple[Path, Path]]:
    """Pair files with identical names; unmatched names are an error."""
    pred_dir, truth_dir = Path(pred_dir), Path(truth_dir)
    for directory in (pred_dir, truth_dir):
        if not directory.is_dir():
            raise EvaluationError(f"not a directory: {directory}")
    preds = {p.name: p for p in pred_dir.iterdir() if p.is_file()}
    truths = {p.name: p for p in truth_dir.iterdir() if p.is_file()}
    unmatched = sorted(preds.keys() ^ truths.keys())
    if unmatched:
        raise EvaluationError(f"unmatched file names: {', '.join(unmatched)}")
    return [(preds[name], truths[name]) for name in sorted(preds)]
