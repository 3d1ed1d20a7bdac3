"""Daily IC, Rank IC and Precision@N, aggregated overall and per month."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import EmptyInputError, InsufficientSamplesError, NumericError, SpecError

PRECISION_NS = (3, 5, 10, 30)
_EPS = 1e-8


def _pair(preds, labels) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(preds, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.float64).ravel()
    if p.shape != y.shape:
        raise SpecError(f"preds and labels differ in length ({p.size} vs {y.size})")
    if p.size < 2:
        raise InsufficientSamplesError(f"need at least 2 stocks, got {p.size}")
    if not (np.isfinite(p).all() and np.isfinite(y).all()):
        raise NumericError("non-finite predictions or labels")
    return p, y


def _pearson(p: np.ndarray, y: np.ndarray) -> float:
    if np.ptp(p) == 0 or np.ptp(y) == 0:
        return 0.0
    pc, yc = p - p.mean(), y - y.mean()
    den = math.sqrt(float(pc @ pc)) * math.sqrt(float(yc @ yc))
    return float(pc @ yc) / max(den, _EPS)


def daily_ic(preds, labels) -> float:
    """Pearson correlation; 0 when either side is constant."""
    return _pearson(*_pair(preds, labels))


def daily_rank_ic(preds, labels) -> float:
    """Spearman correlation with average ranks for ties."""
    p, y = _pair(preds, labels)
    return _pearson(rankdata(p), rankdata(y))


def precision_at_n(preds, labels, n: int, stock_ids: Sequence | None = None) -> float:
    """Percent of the top-``n`` predicted stocks whose label is strictly positive.

    Ties in prediction are broken by ascending stock id (or position when no
    ids are given).
    """
    p = np.asarray(preds, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.float64).ravel()
    if p.shape != y.shape:
        raise SpecError(f"preds and labels differ in length ({p.size} vs {y.size})")
    if not 1 <= n <= p.size:
        raise SpecError(f"precision@{n} needs 1 <= N <= {p.size}")
    tiebreak = np.arange(p.size) if stock_ids is None else np.argsort(np.argsort(np.asarray(stock_ids), kind="stable"))
    order = np.lexsort((tiebreak, -p))
    return 100.0 * float(np.count_nonzero(y[order[:n]] > 0)) / n


@dataclass
class DayMetrics:
    date: object
    ic: float
    rank_ic: float
    precision: dict[int, float]


def day_metrics(date, preds, labels, stock_ids=None, ns: Iterable[int] = PRECISION_NS) -> DayMetrics:
    p = np.asarray(preds, dtype=np.float64)
    prec = {n: precision_at_n(p, labels, n, stock_ids) for n in ns if n <= p.size}
    return DayMetrics(date, daily_ic(p, labels), daily_rank_ic(p, labels), prec)


@dataclass
class MetricsReport:
    """Means and across-day standard deviations (population, ddof=0)."""

    ic_mean: float
    ic_std: float
    rank_ic_mean: float
    rank_ic_std: float
    precision: dict[int, tuple[float, float]]
    monthly: dict[str, tuple[float, dict[int, float]]]
    num_days: int
    daily: list[DayMetrics] = field(default_factory=list, repr=False)

    def rows(self) -> list[tuple[str, str, float]]:
        out = [
            ("ic", "mean", self.ic_mean), ("ic", "std", self.ic_std),
            ("rank_ic", "mean", self.rank_ic_mean), ("rank_ic", "std", self.rank_ic_std),
        ]
        for n, (mean, std) in sorted(self.precision.items()):
            out += [(f"precision@{n}", "mean", mean), (f"precision@{n}", "std", std)]
        out.append(("num_days", "count", float(self.num_days)))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "scope", "value"])
        for metric, scope, value in self.rows():
            w.writerow([metric, scope, repr(float(value))])
        return buf.getvalue()

    def monthly_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["month", "ic"] + [f"p{n}" for n in PRECISION_NS])
        for month, (ic, prec) in sorted(self.monthly.items()):
            w.writerow([month, repr(ic)] + [repr(prec[n]) if n in prec else "" for n in PRECISION_NS])
        return buf.getvalue()

    def table(self) -> str:
        lines = [f"days evaluated: {self.num_days} (std across days)"]
        lines.append(f"  {'IC':<14}{self.ic_mean:>9.4f} ({self.ic_std:.4f})")
        lines.append(f"  {'Rank IC':<14}{self.rank_ic_mean:>9.4f} ({self.rank_ic_std:.4f})")
        for n, (mean, std) in sorted(self.precision.items()):
            lines.append(f"  {f'Precision@{n}':<14}{mean:>9.2f} ({std:.2f})")
        return "\n".join(lines)


def _month(date) -> str:
    return str(date)[:7]


def aggregate(days: Sequence[DayMetrics]) -> MetricsReport:
    """Reduce per-day metrics in the given (date) order."""
    if not days:
        raise EmptyInputError("no days to aggregate")
    ic = np.array([d.ic for d in days])
    ric = np.array([d.rank_ic for d in days])
    precision = {}
    for n in PRECISION_NS:
        vals = np.array([d.precision[n] for d in days if n in d.precision])
        if vals.size:
            precision[n] = (float(vals.mean()), float(vals.std()))
    buckets: dict[str, list[DayMetrics]] = {}
    for d in days:
        buckets.setdefault(_month(d.date), []).append(d)
    monthly = {}
    for month, group in buckets.items():
        prec = {}
        for n in PRECISION_NS:
            vals = [d.precision[n] for d in group if n in d.precision]
            if vals:
                prec[n] = float(np.mean(vals))
        monthly[month] = (float(np.mean([d.ic for d in group])), prec)
    return MetricsReport(float(ic.mean()), float(ic.std()), float(ric.mean()), float(ric.std()),
                         precision, monthly, len(days), list(days))
