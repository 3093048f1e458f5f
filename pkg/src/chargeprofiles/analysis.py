"""Demand-pattern analytics: max normalization, load-shape grouping,
seasonality matrices, weekday/weekend and window comparisons, monthly
timelines with gap interpolation, and relative-share development.

All operations are pure functions over immutable inputs. Each report type
knows how to render itself as a JSON dict and as long-format CSV rows so the
CLI can emit plot-ready files.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import date
from typing import Sequence

import numpy as np

from . import categories
from .errors import DimensionError, InputError
from .ingest import (
    HOURS_PER_DAY,
    ChargerSite,
    ChargingSession,
    ZsjUnit,
    bin_session,
    iter_days,
)


class GroupLabel(enum.Enum):
    """The four archetypal demand-pattern groups."""

    SUSTAINED_SINGLE_PEAK = "sustained_single_peak"
    MORNING_SINGLE_PEAK = "morning_single_peak"
    EVENING_SINGLE_PEAK = "evening_single_peak"
    DOUBLE_PEAK = "double_peak"


@dataclass
class NormalizedCurve:
    """A max-normalized series; ``degenerate`` marks an all-zero source."""

    values: np.ndarray
    degenerate: bool = False


def normalize_max(series) -> NormalizedCurve:
    """Rescale a non-negative series by its maximum so the largest value is 1.

    An all-zero series comes back unchanged with the degenerate flag set.
    """
    values = np.asarray(series, dtype=np.float64)
    if not np.isfinite(values).all():
        raise InputError("series contains non-finite values")
    if (values < 0).any():
        raise InputError("max normalization requires non-negative values")
    peak = values.max() if values.size else 0.0
    if peak == 0.0:
        return NormalizedCurve(values=np.zeros_like(values), degenerate=True)
    return NormalizedCurve(values=values / peak, degenerate=False)


@dataclass(frozen=True)
class GroupRule:
    """Constants of the peak-grouping heuristic; all overridable."""

    smooth_width: int = 3
    peak_threshold: float = 0.8
    morning_window: tuple[int, int] = (6, 10)
    evening_window: tuple[int, int] = (15, 19)


def _smooth_wrap(values: np.ndarray, width: int) -> np.ndarray:
    if width < 1 or width % 2 == 0:
        raise InputError("smoothing width must be a positive odd integer")
    half = width // 2
    out = np.zeros_like(values)
    for offset in range(-half, half + 1):
        out += np.roll(values, offset)
    return out / width


def classify_group(curve, rule: GroupRule = GroupRule()) -> GroupLabel:
    """Assign a demand curve to one of the four peak-pattern groups.

    The normalized curve is smoothed with a centered wrap-around moving
    average and re-normalized to max 1; strict local maxima at or above the
    peak threshold are then located. Peaks in both the morning and evening
    windows give DOUBLE_PEAK, a single-window hit gives the matching
    single-peak label, anything else (broad midday peak, plateau, flat) is
    SUSTAINED_SINGLE_PEAK.
    """
    values = curve.values if isinstance(curve, NormalizedCurve) else normalize_max(curve).values
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (HOURS_PER_DAY,):
        raise DimensionError(f"group classification expects {HOURS_PER_DAY} bins, got {values.shape}")

    smoothed = _smooth_wrap(values, rule.smooth_width)
    top = smoothed.max()
    if top > 0:
        smoothed = smoothed / top

    peaks = [
        h
        for h in range(HOURS_PER_DAY)
        if smoothed[h] > smoothed[h - 1]
        and smoothed[h] > smoothed[(h + 1) % HOURS_PER_DAY]
        and smoothed[h] >= rule.peak_threshold
    ]
    lo_m, hi_m = rule.morning_window
    lo_e, hi_e = rule.evening_window
    morning = any(lo_m <= h <= hi_m for h in peaks)
    evening = any(lo_e <= h <= hi_e for h in peaks)
    if morning and evening:
        return GroupLabel.DOUBLE_PEAK
    if morning:
        return GroupLabel.MORNING_SINGLE_PEAK
    if evening:
        return GroupLabel.EVENING_SINGLE_PEAK
    return GroupLabel.SUSTAINED_SINGLE_PEAK


def _daily_totals(sessions: Sequence[ChargingSession]) -> dict[date, np.ndarray]:
    """Per-start-date summed hour curves."""
    totals: dict[date, np.ndarray] = {}
    for s in sorted(sessions, key=lambda s: (s.start, s.end, s.charger_id)):
        day = s.start.date()
        if day not in totals:
            totals[day] = np.zeros(HOURS_PER_DAY)
        totals[day] += bin_session(s)
    return totals


@dataclass
class SeasonCell:
    n: int
    mean: np.ndarray
    ci_half_width: np.ndarray | None  # None when n < 2 (CI undefined)


@dataclass
class SeasonalityMatrix:
    """Mean daily curves and normal-approximation CIs per (month, Mon..Fri)."""

    cells: dict[tuple[int, int], SeasonCell]

    def to_json_dict(self) -> dict:
        out = {}
        for (month, weekday), cell in sorted(self.cells.items()):
            out[f"{month:02d}-{weekday}"] = {
                "month": month,
                "weekday": weekday,
                "n": cell.n,
                "mean": cell.mean.tolist(),
                "ci_half_width": None if cell.ci_half_width is None else cell.ci_half_width.tolist(),
            }
        return {"cells": out}

    def to_csv_rows(self) -> list[list]:
        rows = [["month", "weekday", "hour", "mean_kwh", "ci_half_width", "n"]]
        for (month, weekday), cell in sorted(self.cells.items()):
            for h in range(HOURS_PER_DAY):
                ci = "" if cell.ci_half_width is None else repr(float(cell.ci_half_width[h]))
                rows.append([month, weekday, h, repr(float(cell.mean[h])), ci, cell.n])
        return rows


def seasonality_matrix(sessions: Sequence[ChargingSession]) -> SeasonalityMatrix:
    """Mean load curve and 95% CI per (month, weekday Mon-Fri) cell.

    Every calendar day of the observation window contributes (inactive days
    as zero curves); cells with no matching dates are absent. With n = 1 the
    CI is undefined and emitted as null.
    """
    if not sessions:
        raise InputError("seasonality analysis needs at least one session")
    totals = _daily_totals(sessions)
    first, last = min(totals), max(totals)

    grouped: dict[tuple[int, int], list[np.ndarray]] = {}
    for d in iter_days(first, last):
        if d.weekday() >= 5:
            continue
        curve = totals.get(d)
        if curve is None:
            curve = np.zeros(HOURS_PER_DAY)
        grouped.setdefault((d.month, d.weekday()), []).append(curve)

    cells = {}
    for key, curves in grouped.items():
        stack = np.vstack(curves)
        n = stack.shape[0]
        mean = stack.mean(axis=0)
        if n >= 2:
            sd = stack.std(axis=0, ddof=1)
            ci = 1.96 * sd / np.sqrt(n)
        else:
            ci = None
        cells[key] = SeasonCell(n=n, mean=mean, ci_half_width=ci)
    return SeasonalityMatrix(cells=cells)


@dataclass
class WeekdayWeekendReport:
    """Mean weekday and weekend curves (global or per charger) with the
    weekend-to-weekday ratio of mean daily energy (None when undefined)."""

    curves: dict[str, dict[str, np.ndarray]]
    ratios: dict[str, float | None]
    weekday_days: int
    weekend_days: int

    def to_json_dict(self) -> dict:
        return {
            "weekday_days": self.weekday_days,
            "weekend_days": self.weekend_days,
            "curves": {
                key: {part: curve.tolist() for part, curve in parts.items()}
                for key, parts in sorted(self.curves.items())
            },
            "ratios": dict(sorted(self.ratios.items())),
        }

    def to_csv_rows(self) -> list[list]:
        rows = [["key", "part", "hour", "mean_kwh"]]
        for key, parts in sorted(self.curves.items()):
            for part in ("weekday", "weekend"):
                for h in range(HOURS_PER_DAY):
                    rows.append([key, part, h, repr(float(parts[part][h]))])
        return rows


def weekday_weekend_compare(
    sessions: Sequence[ChargingSession], per_charger: bool = False
) -> WeekdayWeekendReport:
    """Split the observation window into Mon-Fri and Sat-Sun mean curves.

    The ratio compares mean energy per weekend day against mean energy per
    weekday; it is None when either side has no days or the weekday energy
    is zero.
    """
    if not sessions:
        raise InputError("weekday comparison needs at least one session")
    first = min(s.start.date() for s in sessions)
    last = max(s.start.date() for s in sessions)
    weekday_days = sum(1 for d in iter_days(first, last) if d.weekday() < 5)
    weekend_days = sum(1 for d in iter_days(first, last) if d.weekday() >= 5)

    def key_of(s: ChargingSession) -> str:
        return s.charger_id if per_charger else "all"

    keys = sorted({key_of(s) for s in sessions})
    sums = {key: {"weekday": np.zeros(HOURS_PER_DAY), "weekend": np.zeros(HOURS_PER_DAY)} for key in keys}
    for s in sorted(sessions, key=lambda s: (s.charger_id, s.start, s.end)):
        part = "weekday" if s.start.date().weekday() < 5 else "weekend"
        sums[key_of(s)][part] += bin_session(s)

    curves: dict[str, dict[str, np.ndarray]] = {}
    ratios: dict[str, float | None] = {}
    for key in keys:
        wk = sums[key]["weekday"] / weekday_days if weekday_days else np.zeros(HOURS_PER_DAY)
        we = sums[key]["weekend"] / weekend_days if weekend_days else np.zeros(HOURS_PER_DAY)
        curves[key] = {"weekday": wk, "weekend": we}
        wk_daily = float(sums[key]["weekday"].sum() / weekday_days) if weekday_days else None
        we_daily = float(sums[key]["weekend"].sum() / weekend_days) if weekend_days else None
        if wk_daily is None or we_daily is None or wk_daily == 0.0:
            ratios[key] = None
        else:
            ratios[key] = we_daily / wk_daily
    return WeekdayWeekendReport(
        curves=curves, ratios=ratios, weekday_days=weekday_days, weekend_days=weekend_days
    )


@dataclass
class WindowComparison:
    window_mean: np.ndarray
    baseline_mean: np.ndarray
    difference: np.ndarray
    window_days: int
    baseline_days: int

    def to_json_dict(self) -> dict:
        return {
            "window_days": self.window_days,
            "baseline_days": self.baseline_days,
            "window_mean": self.window_mean.tolist(),
            "baseline_mean": self.baseline_mean.tolist(),
            "difference": self.difference.tolist(),
        }

    def to_csv_rows(self) -> list[list]:
        rows = [["series", "hour", "kwh"]]
        for name, arr in (
            ("window", self.window_mean),
            ("baseline", self.baseline_mean),
            ("difference", self.difference),
        ):
            for h in range(HOURS_PER_DAY):
                rows.append([name, h, repr(float(arr[h]))])
        return rows


def window_compare(
    sessions: Sequence[ChargingSession],
    window: tuple[date, date],
    baselines: Sequence[tuple[date, date]],
) -> WindowComparison:
    """Mean daily curve of a date window against baseline date ranges.

    The ranges must not overlap. Days without sessions count as zero curves.
    No significance testing is applied; the output is descriptive.
    """
    w_start, w_end = window
    if w_start > w_end:
        raise InputError("window range is empty (start after end)")
    ranges = [(w_start, w_end)] + [tuple(r) for r in baselines]
    for b_start, b_end in ranges[1:]:
        if b_start > b_end:
            raise InputError("baseline range is empty (start after end)")
    for i, (s1, e1) in enumerate(ranges):
        for s2, e2 in ranges[i + 1:]:
            if s1 <= e2 and s2 <= e1:
                raise InputError("window and baseline ranges must not overlap")
    if not baselines:
        raise InputError("at least one baseline range is required")

    totals = _daily_totals(sessions)

    def mean_over(ranges_: Sequence[tuple[date, date]]) -> tuple[np.ndarray, int]:
        acc = np.zeros(HOURS_PER_DAY)
        n = 0
        for r_start, r_end in ranges_:
            for d in iter_days(r_start, r_end):
                acc += totals.get(d, np.zeros(HOURS_PER_DAY))
                n += 1
        return (acc / n if n else acc), n

    window_mean, n_w = mean_over([window])
    baseline_mean, n_b = mean_over(list(baselines))
    return WindowComparison(
        window_mean=window_mean,
        baseline_mean=baseline_mean,
        difference=window_mean - baseline_mean,
        window_days=n_w,
        baseline_days=n_b,
    )


def month_key(d: date) -> str:
    return f"{d.year:04d}-{d.month:02d}"


def _month_seq(first: str, last: str) -> list[str]:
    y, m = int(first[:4]), int(first[5:7])
    ly, lm = int(last[:4]), int(last[5:7])
    out = []
    while (y, m) <= (ly, lm):
        out.append(f"{y:04d}-{m:02d}")
        m += 1
        if m > 12:
            m, y = 1, y + 1
    return out


@dataclass
class TimelinePoint:
    month: str
    total_kwh: float
    interpolated: bool


def total_load_timeline(
    sessions: Sequence[ChargingSession],
    start_month: str | None = None,
    end_month: str | None = None,
) -> list[TimelinePoint]:
    """Monthly total energy with linear interpolation across interior gaps.

    Months with zero sessions strictly between populated months are filled by
    linear interpolation between their populated neighbors and flagged;
    leading/trailing empty months (possible only with an explicit range)
    stay at zero, unflagged.
    """
    if not sessions:
        raise InputError("timeline needs at least one session")
    totals: dict[str, float] = {}
    counts: dict[str, int] = {}
    for s in sessions:
        key = month_key(s.start.date())
        totals[key] = totals.get(key, 0.0) + s.energy_kwh
        counts[key] = counts.get(key, 0) + 1

    months = _month_seq(start_month or min(totals), end_month or max(totals))
    values = [totals.get(m, 0.0) for m in months]
    populated = [i for i, m in enumerate(months) if counts.get(m, 0) > 0]
    flags = [False] * len(months)
    if populated:
        for left, right in zip(populated, populated[1:]):
            span = right - left
            for i in range(left + 1, right):
                if counts.get(months[i], 0) == 0:
                    frac = (i - left) / span
                    values[i] = values[left] + (values[right] - values[left]) * frac
                    flags[i] = True
    return [TimelinePoint(m, float(v), f) for m, v, f in zip(months, values, flags)]


def timeline_to_json_dict(points: list[TimelinePoint]) -> dict:
    return {
        "months": [
            {"month": p.month, "total_kwh": p.total_kwh, "interpolated": p.interpolated}
            for p in points
        ]
    }


def timeline_to_csv_rows(points: list[TimelinePoint]) -> list[list]:
    rows = [["month", "total_kwh", "interpolated"]]
    for p in points:
        rows.append([p.month, repr(p.total_kwh), int(p.interpolated)])
    return rows


@dataclass
class MonthlyShareSeries:
    """Per-month relative share of each ZSJ category, with interpolation flags."""

    name: str
    months: list[str]
    categories: list[str]
    shares: np.ndarray  # (n_months, n_categories)
    interpolated: list[bool]

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "months": self.months,
            "categories": self.categories,
            "shares": self.shares.tolist(),
            "interpolated": self.interpolated,
        }

    def to_csv_rows(self) -> list[list]:
        rows = []
        for i, month in enumerate(self.months):
            for j, cat in enumerate(self.categories):
                rows.append([self.name, month, cat, repr(float(self.shares[i, j])), int(self.interpolated[i])])
        return rows


def shares_csv_rows(series_list: Sequence[MonthlyShareSeries]) -> list[list]:
    rows = [["series", "month", "category", "share", "interpolated"]]
    for series in series_list:
        rows.extend(series.to_csv_rows())
    return rows


def share_development(
    sessions: Sequence[ChargingSession],
    sites: Sequence[ChargerSite],
    zsj_units: Sequence[ZsjUnit],
) -> tuple[MonthlyShareSeries, MonthlyShareSeries]:
    """Monthly relative shares per ZSJ category for charging instances and for
    cumulative installed chargers.

    The installed series counts every charger commissioned up to the month's
    end, including before the timeline start. Instance-share months with no
    sessions strictly inside the timeline are linearly interpolated between
    populated neighbors and flagged.
    """
    if not sessions:
        raise InputError("share analysis needs at least one session")
    site_by_id = {s.charger_id: s for s in sites}
    unit_by_id = {u.zsj_id: u for u in zsj_units}

    def category_of(charger_id: str) -> str | None:
        site = site_by_id.get(charger_id)
        if site is None:
            return None
        unit = unit_by_id.get(site.zsj_id)
        return unit.category if unit is not None else None

    cats = list(categories.CATEGORIES)
    cat_idx = {c: i for i, c in enumerate(cats)}

    months = _month_seq(
        min(month_key(s.start.date()) for s in sessions),
        max(month_key(s.start.date()) for s in sessions),
    )
    month_idx = {m: i for i, m in enumerate(months)}

    instance_counts = np.zeros((len(months), len(cats)))
    for s in sessions:
        cat = category_of(s.charger_id)
        if cat is None:
            continue
        instance_counts[month_idx[month_key(s.start.date())], cat_idx[cat]] += 1

    inst_shares = np.zeros_like(instance_counts)
    month_totals = instance_counts.sum(axis=1)
    populated = [i for i, t in enumerate(month_totals) if t > 0]
    for i in populated:
        inst_shares[i] = instance_counts[i] / month_totals[i]
    inst_flags = [False] * len(months)
    for left, right in zip(populated, populated[1:]):
        span = right - left
        for i in range(left + 1, right):
            frac = (i - left) / span
            inst_shares[i] = inst_shares[left] + (inst_shares[right] - inst_shares[left]) * frac
            inst_flags[i] = True

    installed_shares = np.zeros((len(months), len(cats)))
    for i, m in enumerate(months):
        year, mon = int(m[:4]), int(m[5:7])
        counts = np.zeros(len(cats))
        for site in sites:
            cat = category_of(site.charger_id)
            if cat is None:
                continue
            cm = (site.commissioned.year, site.commissioned.month)
            if cm <= (year, mon):
                counts[cat_idx[cat]] += 1
        total = counts.sum()
        if total > 0:
            installed_shares[i] = counts / total

    instances = MonthlyShareSeries(
        name="instances", months=months, categories=cats, shares=inst_shares, interpolated=inst_flags
    )
    installed = MonthlyShareSeries(
        name="installed", months=months, categories=cats, shares=installed_shares,
        interpolated=[False] * len(months),
    )
    return instances, installed
