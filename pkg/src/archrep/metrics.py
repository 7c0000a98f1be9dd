"""Prediction records and evaluation metrics (MAPE, Acc(delta), Kendall's tau)."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class PredictionRecord:
    id: str
    pred: float
    target: float


def _arrays(records: Sequence[PredictionRecord]):
    pred = np.array([r.pred for r in records], dtype=np.float64)
    y = np.array([r.target for r in records], dtype=np.float64)
    return pred, y


def _relative_errors(records: Sequence[PredictionRecord]) -> np.ndarray:
    if not records:
        raise ConfigurationError("no prediction records")
    pred, y = _arrays(records)
    if np.any(y <= 0):
        bad = [r.id for r in records if r.target <= 0]
        raise ConfigurationError(f"relative error needs positive targets; offending ids {bad[:5]}")
    return np.abs(pred - y) / y


def metric_mape(records: Sequence[PredictionRecord]) -> float:
    """Mean absolute percentage error, in percent."""
    return float(np.mean(_relative_errors(records)) * 100.0)


def metric_acc_delta(records: Sequence[PredictionRecord], delta: float) -> float:
    """Percentage of records whose relative error is at most ``delta``."""
    if delta <= 0:
        raise ConfigurationError("delta must be positive")
    return float(np.mean(_relative_errors(records) <= delta) * 100.0)


def metric_kendall(records: Sequence[PredictionRecord]) -> float:
    """Kendall's tau over all pairs.

    Tied pairs (in either ranking) count as neither concordant nor discordant;
    the denominator is always ``n (n - 1) / 2``.
    """
    n = len(records)
    if n < 2:
        raise ConfigurationError("Kendall's tau needs at least two records")
    pred, y = _arrays(records)
    iu = np.triu_indices(n, k=1)
    s = np.sign(pred[:, None] - pred[None, :])[iu] * np.sign(y[:, None] - y[None, :])[iu]
    return float(s.sum() / (n * (n - 1) / 2))


def repeat_and_trim(values: Sequence[float], trim: int = 1) -> float:
    """Mean after discarding the ``trim`` lowest and ``trim`` highest values."""
    vals = sorted(values)
    if trim < 0 or len(vals) <= 2 * trim:
        raise ConfigurationError(f"cannot trim {trim} from each end of {len(vals)} values")
    kept = vals[trim : len(vals) - trim] if trim else vals
    return float(np.mean(kept))


LATENCY_FIELDS = ("task", "n", "mape", "acc_5", "acc_10")
ACCURACY_FIELDS = ("task", "n", "kendall_tau")


@dataclass
class MetricReport:
    """Evaluation summary; percentages are in percent units."""

    task: str
    n: int
    mape: Optional[float] = None
    acc_5: Optional[float] = None
    acc_10: Optional[float] = None
    kendall_tau: Optional[float] = None

    @property
    def fields(self) -> Sequence[str]:
        return LATENCY_FIELDS if self.task == "latency" else ACCURACY_FIELDS

    def as_dict(self) -> Dict[str, object]:
        return {k: getattr(self, k) for k in self.fields}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.fields)
        w.writerow([_fmt(v) for v in self.as_dict().values()])
        return buf.getvalue()


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def report_from_records(records: List[PredictionRecord], task: str) -> MetricReport:
    if not records:
        raise ConfigurationError("cannot evaluate an empty dataset")
    if task == "latency":
        return MetricReport(
            task,
            len(records),
            mape=metric_mape(records),
            acc_5=metric_acc_delta(records, 0.05),
            acc_10=metric_acc_delta(records, 0.10),
        )
    return MetricReport(task, len(records), kendall_tau=metric_kendall(records))
