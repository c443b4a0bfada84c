"""Metrics sinks: iteration rows as CSV, evaluation reports as JSON."""

import csv
from pathlib import Path
from typing import Optional

from khn.errors import KHNError
from khn.models.schemas import EvalReport, IterationMetrics

ITERATION_FIELDS = ["iteration", "loss", "wall_ms"]


class MetricsWriter:
    """Append-only CSV of per-iteration rows; iterations must strictly increase."""

    def __init__(self, path: Path, reset: bool = False):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.last_iteration: Optional[int] = None
        if reset or not self.path.exists() or self.path.stat().st_size == 0:
            with self.path.open("w", newline="") as f:
                csv.writer(f).writerow(ITERATION_FIELDS)
        else:
            rows = read_iteration_metrics(self.path)
            self.last_iteration = rows[-1].iteration if rows else None

    def write(self, row: IterationMetrics):
        if self.last_iteration is not None and row.iteration <= self.last_iteration:
            raise KHNError(f"iteration {row.iteration} does not follow {self.last_iteration}")
        with self.path.open("a", newline="") as f:
            csv.writer(f).writerow([row.iteration, repr(row.loss), f"{row.wall_ms:.3f}"])
        self.last_iteration = row.iteration

    __call__ = write


def read_iteration_metrics(path: Path) -> list[IterationMetrics]:
    with Path(path).open(newline="") as f:
        return [
            IterationMetrics(
                iteration=int(r["iteration"]), loss=float(r["loss"]), wall_ms=float(r["wall_ms"])
            )
            for r in csv.DictReader(f)
        ]


def write_eval_report(path: Path, report: EvalReport) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.model_dump_json(indent=2))
    return path


def read_eval_report(path: Path) -> EvalReport:
    return EvalReport.model_validate_json(Path(path).read_text())
