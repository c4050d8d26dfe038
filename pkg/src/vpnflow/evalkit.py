"""Confusion matrices, precision/recall reports, threshold sweeps and method comparison.

VPN is the sixth predicted label. Precision or recall with a zero
denominator is reported as ``None`` (empty field in CSV), never 0.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field

import numpy as np

from vpnflow.decision import Method, Pipeline, Thresholds
from vpnflow.errors import ConfigError, VpnflowError
from vpnflow.ingest import LABEL_NAMES, N_LABELS, VPN_LABEL, samples_to_arrays


class EvaluationError(VpnflowError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    """6x6 counts; rows are true labels, columns predicted, both in label order."""

    counts: np.ndarray

    @classmethod
    def from_predictions(cls, true, pred) -> "ConfusionMatrix":
        counts = np.zeros((N_LABELS, N_LABELS), dtype=np.int64)
        np.add.at(counts, (np.asarray(true), np.asarray(pred)), 1)
        return cls(counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def precision(self, c: int) -> float | None:
        col = self.counts[:, c].sum()
        return None if col == 0 else float(self.counts[c, c] / col)

    def recall(self, c: int) -> float | None:
        row = self.counts[c].sum()
        return None if row == 0 else float(self.counts[c, c] / row)

    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total)


@dataclass(frozen=True)
class MetricsReport:
    precision: tuple
    recall: tuple
    accuracy: float
    vpn_rejection_rate: float | None
    method: str
    thresholds: Thresholds | None
    n_samples: int
    dataset_digest: str = field(default="", compare=False)

    @property
    def mean_precision(self) -> float | None:
        vals = [p for p in self.precision if p is not None]
        return float(np.mean(vals)) if vals else None

    @classmethod
    def from_confusion(cls, cm: ConfusionMatrix, method: str, thresholds, digest="") -> "MetricsReport":
        return cls(
            precision=tuple(cm.precision(c) for c in range(N_LABELS)),
            recall=tuple(cm.recall(c) for c in range(N_LABELS)),
            accuracy=cm.accuracy(),
            vpn_rejection_rate=cm.recall(VPN_LABEL),
            method=method,
            thresholds=thresholds,
            n_samples=cm.total,
            dataset_digest=digest,
        )


def _fmt(v: float | None) -> str:
    return "" if v is None else f"{v:.6f}"


def report_csv(report: MetricsReport) -> str:
    lines = ["class,precision,recall"]
    for c, name in enumerate(LABEL_NAMES):
        lines.append(f"{name},{_fmt(report.precision[c])},{_fmt(report.recall[c])}")
    lines.append(f"overall,{_fmt(report.accuracy)},")
    return "\n".join(lines) + "\n"


def confusion_csv(cm: ConfusionMatrix) -> str:
    lines = ["true\\pred," + ",".join(LABEL_NAMES)]
    for name, row in zip(LABEL_NAMES, cm.counts):
        lines.append(name + "," + ",".join(str(int(v)) for v in row))
    return "\n".join(lines) + "\n"


def _as_arrays(test_set):
    """Accept a sequence of LabeledSample or an ``(x, labels)`` pair.

    ``x`` may be raw uint8 bytes (normalized here) or already-normalized floats.
    """
    if isinstance(test_set, tuple) and len(test_set) == 2:
        x, labels = test_set
    else:
        x, labels = samples_to_arrays(test_set)
    x = np.asarray(x)
    if x.dtype == np.uint8:
        x = x / 255.0
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        raise EvaluationError("test set is empty")
    return np.asarray(x, dtype=np.float64), labels


def dataset_digest(x: np.ndarray, labels: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(labels, dtype="<i8").tobytes())
    h.update(np.ascontiguousarray(x, dtype="<f8").tobytes())
    return h.hexdigest()


def _method_id(pipeline) -> str:
    method = getattr(pipeline, "method", None)
    return method.value if isinstance(method, Method) else str(method or "custom")


def evaluate(test_set, pipeline) -> tuple[ConfusionMatrix, MetricsReport]:
    """Classify every sample with ``pipeline.classify_batch`` and tabulate."""
    x, labels = _as_arrays(test_set)
    pred, _ = pipeline.classify_batch(x)
    cm = ConfusionMatrix.from_predictions(labels, pred)
    report = MetricsReport.from_confusion(
        cm, _method_id(pipeline), getattr(pipeline, "thresholds", None), dataset_digest(x, labels)
    )
    return cm, report


AXES = {"lambda": "lam", "eta": "eta"}


@dataclass(frozen=True)
class SweepGrid:
    axis: str
    values: tuple
    reports: tuple
    confusions: tuple

    def vpn_predicted(self) -> list[int]:
        return [int(cm.counts[:, VPN_LABEL].sum()) for cm in self.confusions]


def sweep(test_set, pipeline: Pipeline, axis: str, values, cache: bool = True) -> SweepGrid:
    """Evaluate ``pipeline`` at each threshold value along ``axis`` ("lambda" or "eta").

    With ``cache`` the network outputs are computed once and reused; the
    decision rules are pure in the thresholds, so the result is identical.
    """
    if axis not in AXES:
        raise ConfigError(f"sweep axis must be 'lambda' or 'eta', got {axis!r}")
    values = tuple(float(v) for v in values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError("sweep values must be strictly increasing")
    method = Method.SCORE if axis == "lambda" else Method.DISTANCE
    if pipeline.method is not method:
        raise ConfigError(f"axis {axis!r} does not apply to the {pipeline.method.value} method")
    variants = []
    for v in values:
        try:
            variants.append(pipeline.with_thresholds(**{AXES[axis]: v}))
        except ConfigError as exc:
            raise ConfigError(f"threshold value {v}: {exc}") from None

    x, labels = _as_arrays(test_set)
    digest = dataset_digest(x, labels)
    if cache:
        y1, y2 = pipeline.outputs(x)
    reports, confusions = [], []
    for variant in variants:
        if cache:
            pred, _ = variant.decide_outputs(y1, y2)
        else:
            pred, _ = variant.classify_batch(x)
        cm = ConfusionMatrix.from_predictions(labels, pred)
        confusions.append(cm)
        reports.append(MetricsReport.from_confusion(cm, method.value, variant.thresholds, digest))
    return SweepGrid(axis, values, tuple(reports), tuple(confusions))


def sweep_csv(grid: SweepGrid) -> str:
    lines = ["threshold,accuracy,vpn_recall,mean_precision"]
    for v, r in zip(grid.values, grid.reports):
        lines.append(f"{v:g},{_fmt(r.accuracy)},{_fmt(r.recall[VPN_LABEL])},{_fmt(r.mean_precision)}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Comparison:
    score: MetricsReport
    distance: MetricsReport

    @property
    def accuracy_delta(self) -> float:
        """Distance accuracy minus score accuracy (sign not presumed)."""
        return self.distance.accuracy - self.score.accuracy


def compare_reports(score: MetricsReport, distance: MetricsReport) -> Comparison:
    if score.n_samples != distance.n_samples or score.dataset_digest != distance.dataset_digest:
        raise EvaluationError("reports were computed on different test sets")
    return Comparison(score, distance)


def compare_methods(test_set, score_pipeline, distance_pipeline) -> Comparison:
    x, labels = _as_arrays(test_set)
    _, score = evaluate((x, labels), score_pipeline)
    _, distance = evaluate((x, labels), distance_pipeline)
    return compare_reports(score, distance)


def comparison_csv(cmp: Comparison) -> str:
    lines = ["class,score_precision,score_recall,distance_precision,distance_recall"]
    for c, name in enumerate(LABEL_NAMES):
        lines.append(",".join([
            name, _fmt(cmp.score.precision[c]), _fmt(cmp.score.recall[c]),
            _fmt(cmp.distance.precision[c]), _fmt(cmp.distance.recall[c]),
        ]))
    lines.append(f"overall,{_fmt(cmp.score.accuracy)},,{_fmt(cmp.distance.accuracy)},")
    lines.append(f"delta,{_fmt(cmp.accuracy_delta)},,,")
    return "\n".join(lines) + "\n"


def write_text(text: str, destination) -> None:
    if destination is None or destination == "-":
        import sys

        sys.stdout.write(text)
        return
    with open(os.fspath(destination), "w") as fh:
        fh.write(text)
