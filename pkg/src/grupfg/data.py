"""Factor panels: labels, CSV I/O, date splits and a synthetic generator.

Panel CSV schema (version 1)::

    date,stock_id,f000,...,f359,label

* ``date`` is ISO-8601 ``YYYY-MM-DD``; rows are grouped by date ascending.
* ``f000..f359`` are time-major: step ``s`` (0 = oldest, 59 = newest),
  channel ``c`` lives in column ``f{6*s + c:03d}``.
* ``label`` is the next trading day's return for that stock, aligned to the
  row's date.
* floats are written with ``repr`` precision, so files round-trip exactly.
"""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import pandas as pd

from .errors import DomainError, EmptyInputError, SchemaError, SpecError
from .model import NUM_CHANNELS, NUM_FACTORS, NUM_STEPS, DayBatch

SCHEMA_VERSION = 1
FACTOR_COLUMNS = [f"f{i:03d}" for i in range(NUM_FACTORS)]
COLUMNS = ["date", "stock_id", *FACTOR_COLUMNS, "label"]


def trend(p_t: float, p_next: float) -> float:
    """Price change rate ``(p_next - p_t) / p_t``."""
    if not p_t > 0:
        raise DomainError(f"trend: price must be positive, got {p_t}")
    return (p_next - p_t) / p_t


def daily_return(open_price: float, close_price: float) -> float:
    """Intraday return ``(close - open) / open``."""
    if not open_price > 0:
        raise DomainError(f"daily_return: open price must be positive, got {open_price}")
    return (close_price - open_price) / open_price


def _to_date(d) -> dt.date:
    if isinstance(d, dt.datetime):
        return d.date()
    if isinstance(d, dt.date):
        return d
    if isinstance(d, np.datetime64):
        return pd.Timestamp(d).date()
    return dt.date.fromisoformat(str(d))


@dataclass(eq=False)
class CrossSection:
    date: dt.date
    stock_ids: list[str]
    factors: np.ndarray  # (m, 360)
    labels: np.ndarray  # (m,)

    def __eq__(self, other) -> bool:
        """Exact equality: same date, ids in the same order, identical float64 values."""
        if not isinstance(other, CrossSection):
            return NotImplemented
        return (self.date == other.date and list(self.stock_ids) == list(other.stock_ids)
                and np.array_equal(self.factors, other.factors) and np.array_equal(self.labels, other.labels))

    @property
    def size(self) -> int:
        return len(self.stock_ids)

    def to_batch(self) -> DayBatch:
        m = self.size
        return DayBatch(self.date, list(self.stock_ids), self.factors.reshape(m, NUM_STEPS, NUM_CHANNELS), self.labels)


@dataclass
class FactorPanel:
    """Ordered trading days, each a cross-section of stocks."""

    days: list[CrossSection] = field(default_factory=list)
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        prev = None
        for day in self.days:
            if prev is not None and not day.date > prev:
                raise SchemaError(f"dates must be strictly increasing ({prev} then {day.date})")
            prev = day.date
            if len(set(day.stock_ids)) != len(day.stock_ids):
                raise SchemaError(f"duplicate stock id on {day.date}")
            if day.factors.shape != (day.size, NUM_FACTORS) or day.labels.shape != (day.size,):
                raise SchemaError(f"bad array shapes on {day.date}")
            if not np.isfinite(day.labels).all():
                raise SchemaError(f"non-finite label on {day.date}")

    @property
    def dates(self) -> list[dt.date]:
        return [d.date for d in self.days]

    def __len__(self) -> int:
        return len(self.days)

    def __iter__(self) -> Iterator[CrossSection]:
        return iter(self.days)

    def batches(self) -> list[DayBatch]:
        return [d.to_batch() for d in self.days]

    def select(self, start, end) -> "FactorPanel":
        start, end = _to_date(start), _to_date(end)
        return FactorPanel([d for d in self.days if start <= d.date <= end])


@dataclass
class LoadReport:
    rows_read: int
    rows_kept: int
    drop_count: int
    num_dates: int

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in vars(self).items())


def panel_to_frame(panel: FactorPanel) -> pd.DataFrame:
    frames = []
    for day in panel:
        f = pd.DataFrame(day.factors, columns=FACTOR_COLUMNS)
        f.insert(0, "stock_id", day.stock_ids)
        f.insert(0, "date", day.date.isoformat())
        f["label"] = day.labels
        frames.append(f)
    if not frames:
        return pd.DataFrame(columns=COLUMNS)
    return pd.concat(frames, ignore_index=True)


def write_panel(panel: FactorPanel, path) -> None:
    panel_to_frame(panel).to_csv(path, index=False, float_format=None, lineterminator="\n")


def load_panel(path, schema_version: int = SCHEMA_VERSION, report_path=None) -> tuple[FactorPanel, LoadReport]:
    """Read a panel CSV, dropping rows with non-finite factors or labels.

    When ``report_path`` is given the load report is also written there as
    ``key=value`` lines.
    """
    if schema_version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported panel schema version {schema_version}")
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"panel file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype={"stock_id": str, "date": str}, float_precision="round_trip")
    except pd.errors.EmptyDataError as exc:
        raise EmptyInputError(f"panel file is empty: {path}") from exc
    missing = [c for c in COLUMNS if c not in frame.columns]
    if missing:
        shown = ", ".join(missing[:5]) + (" ..." if len(missing) > 5 else "")
        raise SchemaError(f"panel file missing columns: {shown}")
    values = frame[FACTOR_COLUMNS + ["label"]].to_numpy(dtype=np.float64)
    ok = np.isfinite(values).all(axis=1)
    rows_read = len(frame)
    frame = frame.loc[ok]
    if frame.empty:
        raise EmptyInputError(f"panel file has no usable rows: {path}")

    days = []
    for date, grp in frame.groupby("date", sort=True):
        days.append(CrossSection(
            _to_date(date),
            grp["stock_id"].tolist(),
            grp[FACTOR_COLUMNS].to_numpy(dtype=np.float64),
            grp["label"].to_numpy(dtype=np.float64),
        ))
    panel = FactorPanel(days)
    report = LoadReport(rows_read, int(ok.sum()), int(rows_read - ok.sum()), len(days))
    if report_path is not None:
        Path(report_path).write_text(report.to_text())
    return panel, report


# -- splits -----------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    """Inclusive date ranges; defaults are the 2007-2014 / 2015-2016 / 2017-2020 protocol."""

    train: tuple[dt.date, dt.date] = (dt.date(2007, 1, 1), dt.date(2014, 12, 31))
    valid: tuple[dt.date, dt.date] = (dt.date(2015, 1, 1), dt.date(2016, 12, 31))
    test: tuple[dt.date, dt.date] = (dt.date(2017, 1, 1), dt.date(2020, 12, 31))

    def __post_init__(self):
        for name in ("train", "valid", "test"):
            a, b = (_to_date(x) for x in getattr(self, name))
            object.__setattr__(self, name, (a, b))
            if a > b:
                raise SpecError(f"split {name}: start {a} after end {b}")
        if not (self.train[1] < self.valid[0] and self.valid[1] < self.test[0]):
            raise SpecError("split ranges must be ordered train < valid < test without overlap")

    @classmethod
    def from_counts(cls, dates: Sequence, n_train: int, n_valid: int, n_test: int) -> "SplitSpec":
        """Consecutive blocks of the first ``n_train + n_valid + n_test`` dates."""
        dates = sorted(_to_date(d) for d in dates)
        if min(n_train, n_valid, n_test) < 1 or n_train + n_valid + n_test > len(dates):
            raise SpecError(f"cannot carve {n_train}/{n_valid}/{n_test} days from {len(dates)} dates")
        a, b = n_train, n_train + n_valid
        return cls((dates[0], dates[a - 1]), (dates[a], dates[b - 1]), (dates[b], dates[b + n_test - 1]))

    def as_dict(self) -> dict[str, str]:
        return {f"{n}": f"{r[0].isoformat()}:{r[1].isoformat()}" for n, r in
                (("train", self.train), ("valid", self.valid), ("test", self.test))}


def split(panel: FactorPanel, spec: SplitSpec = SplitSpec(), drop_last_date: bool = False):
    """Partition ``panel`` by date into ``(train, valid, test)``.

    Dates outside every range are discarded. With ``drop_last_date`` the
    final date of each part is removed, since its next-day label falls in
    the following period.
    """
    parts = []
    for lo, hi in (spec.train, spec.valid, spec.test):
        part = panel.select(lo, hi)
        if drop_last_date and part.days:
            part = FactorPanel(part.days[:-1])
        parts.append(part)
    return tuple(parts)


# -- synthetic data -----------------------------------------------------------------

def synthetic_dates(num_days: int, start="2007-01-01") -> list[dt.date]:
    first = np.busday_offset(np.datetime64(_to_date(start)), 0, roll="forward")
    days = np.busday_offset(first, np.arange(num_days))
    return [pd.Timestamp(d).date() for d in days]


def gen_synthetic(num_stocks: int, num_days: int, num_groups: int, signal_strength: float,
                  noise_sigma: float, seed: int, *, persistence: float = 0.5,
                  style_strength: float = 1.0, start_date="2007-01-01") -> FactorPanel:
    """Panel whose stocks fall into groups sharing a latent return driver.

    Each group ``k`` has a driver following a unit-variance AR(1) with
    coefficient ``persistence``. A stock's daily return is

        x[i, t] = s * g[k(i), t] + sqrt(1 - s^2) * u[i, t]

    with ``u`` white noise and ``s = signal_strength``. Each of the six
    channels at a step observes ``x`` with independent ``noise_sigma`` noise
    plus a static per-group channel offset of scale ``style_strength`` (a
    style signature that makes group membership visible in the factors),
    and the label of date ``t`` is ``x[i, t+1]`` plus ``noise_sigma`` noise.
    Only the group part is predictable, and it is shared by all group
    members, so pooling peers sharpens the forecast.
    """
    if num_stocks < 1 or num_days < 1 or num_groups < 1 or num_groups > num_stocks:
        raise SpecError(f"invalid sizes: stocks={num_stocks} days={num_days} groups={num_groups}")
    if not 0.0 <= signal_strength <= 1.0:
        raise SpecError(f"signal_strength must be in [0, 1], got {signal_strength}")
    if noise_sigma < 0 or style_strength < 0 or not -1.0 < persistence < 1.0:
        raise SpecError("noise_sigma and style_strength must be >= 0 and |persistence| < 1")

    rng = np.random.default_rng(seed)
    horizon = num_days + NUM_STEPS  # one extra step for the final label
    s = signal_strength
    phi = persistence
    g = np.empty((num_groups, horizon))
    g[:, 0] = rng.standard_normal(num_groups)
    shocks = rng.standard_normal((num_groups, horizon)) * math.sqrt(1.0 - phi * phi)
    for t in range(1, horizon):
        g[:, t] = phi * g[:, t - 1] + shocks[:, t]
    groups = rng.permutation(np.arange(num_stocks) % num_groups)
    idio = rng.standard_normal((num_stocks, horizon))
    x = s * g[groups] + math.sqrt(1.0 - s * s) * idio
    obs = x[:, :, None] + noise_sigma * rng.standard_normal((num_stocks, horizon, NUM_CHANNELS))
    style = style_strength * rng.standard_normal((num_groups, NUM_CHANNELS))
    obs += style[groups][:, None, :]
    label_noise = noise_sigma * rng.standard_normal((num_stocks, num_days))

    ids = [f"S{i:04d}" for i in range(num_stocks)]
    days = []
    for t, date in enumerate(synthetic_dates(num_days, start_date)):
        window = obs[:, t:t + NUM_STEPS, :].reshape(num_stocks, NUM_FACTORS)
        labels = x[:, t + NUM_STEPS] + label_noise[:, t]
        days.append(CrossSection(date, list(ids), window.copy(), labels))
    return FactorPanel(days, meta={"groups": dict(zip(ids, groups.tolist()))})

