"""Session-log and attribute-table ingestion, hourly binning, dataset assembly.

CSV dialects (UTF-8, comma separated, ``.`` decimal point, ISO-8601 local
timestamps at minute precision, no DST adjustment):

* ``sessions.csv``: header ``charger_id,start,end,energy_kwh``
* ``sites.csv``:    header ``charger_id,zsj_id,rated_power_kw,commissioned``
  (rated power may be empty)
* ``zsj.csv``:      header ``zsj_id,category,population_density,address_count,commuter_inflow``
  with the category spelled exactly as in categories.CATEGORIES

Session rows that violate invariants are collected as rejects (with line
numbers and reasons) rather than aborting; a malformed header is fatal.
The attribute table zsj.csv is strict: it is small, curated input and any
bad row raises InputError.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import categories, model
from .errors import DimensionError, InputError

HOURS_PER_DAY = 24
MAX_SESSION_DAYS = 7

SESSIONS_HEADER = ["charger_id", "start", "end", "energy_kwh"]
SITES_HEADER = ["charger_id", "zsj_id", "rated_power_kw", "commissioned"]
ZSJ_HEADER = ["zsj_id", "category", "population_density", "address_count", "commuter_inflow"]

SCALAR_FIELDS = ("population_density", "address_count", "commuter_inflow")

DAY_FILTERS = ("all", "weekday", "weekend")


@dataclass
class ChargingSession:
    """One charging event; timestamps are naive local civil time."""

    charger_id: str
    start: datetime
    end: datetime
    energy_kwh: float


@dataclass
class ChargerSite:
    charger_id: str
    zsj_id: str
    rated_power_kw: float | None
    commissioned: date


@dataclass
class ZsjUnit:
    zsj_id: str
    category: str
    population_density: float
    address_count: float
    commuter_inflow: float


@dataclass
class Reject:
    """A skipped input row (or session) with the reason it was skipped."""

    reason: str
    line: int | None = None
    detail: str = ""


def _check_header(row: list[str] | None, expected: list[str], filename: str) -> None:
    if row is None or [c.strip() for c in row] != expected:
        got = ",".join(row) if row is not None else "<empty file>"
        raise InputError(
            f"bad {filename} header: expected {','.join(expected)!r}, got {got!r}"
        )


def _parse_minute_timestamp(text: str) -> datetime:
    ts = datetime.fromisoformat(text.strip())
    if ts.tzinfo is not None:
        raise ValueError("timestamps must be naive local time")
    return ts.replace(second=0, microsecond=0)


def parse_sessions(lines: Iterable[str]) -> tuple[list[ChargingSession], list[Reject]]:
    """Parse a sessions.csv stream; invalid rows become rejects, not errors."""
    reader = csv.reader(lines)
    header = next(reader, None)
    _check_header(header, SESSIONS_HEADER, "sessions.csv")

    sessions: list[ChargingSession] = []
    rejects: list[Reject] = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(SESSIONS_HEADER):
            rejects.append(Reject("wrong field count", line_no))
            continue
        charger_id = row[0].strip()
        if not charger_id:
            rejects.append(Reject("empty charger id", line_no))
            continue
        try:
            start = _parse_minute_timestamp(row[1])
            end = _parse_minute_timestamp(row[2])
        except ValueError:
            rejects.append(Reject("invalid timestamp", line_no))
            continue
        try:
            energy = float(row[3])
        except ValueError:
            rejects.append(Reject("invalid energy value", line_no))
            continue
        if not np.isfinite(energy):
            rejects.append(Reject("non-finite energy", line_no))
            continue
        if energy < 0:
            rejects.append(Reject("negative energy", line_no))
            continue
        if end <= start:
            rejects.append(Reject("non-positive duration", line_no))
            continue
        if end - start > timedelta(days=MAX_SESSION_DAYS):
            rejects.append(Reject(f"duration exceeds {MAX_SESSION_DAYS} days", line_no))
            continue
        sessions.append(ChargingSession(charger_id, start, end, energy))
    return sessions, rejects


def parse_sites(lines: Iterable[str]) -> tuple[list[ChargerSite], list[Reject]]:
    """Parse a sites.csv stream; duplicates and invalid rows become rejects."""
    reader = csv.reader(lines)
    header = next(reader, None)
    _check_header(header, SITES_HEADER, "sites.csv")

    sites: list[ChargerSite] = []
    seen: set[str] = set()
    rejects: list[Reject] = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(SITES_HEADER):
            rejects.append(Reject("wrong field count", line_no))
            continue
        charger_id = row[0].strip()
        if not charger_id:
            rejects.append(Reject("empty charger id", line_no))
            continue
        if charger_id in seen:
            rejects.append(Reject("duplicate charger id", line_no, charger_id))
            continue
        rated: float | None
        rated_text = row[2].strip()
        try:
            rated = float(rated_text) if rated_text else None
        except ValueError:
            rejects.append(Reject("invalid rated power", line_no))
            continue
        if rated is not None and (not np.isfinite(rated) or rated <= 0):
            rejects.append(Reject("non-positive rated power", line_no))
            continue
        try:
            commissioned = date.fromisoformat(row[3].strip())
        except ValueError:
            rejects.append(Reject("invalid commissioned date", line_no))
            continue
        seen.add(charger_id)
        sites.append(ChargerSite(charger_id, row[1].strip(), rated, commissioned))
    return sites, rejects


def parse_zsj(lines: Iterable[str]) -> list[ZsjUnit]:
    """Parse a zsj.csv stream strictly; any invalid row raises InputError."""
    reader = csv.reader(lines)
    header = next(reader, None)
    _check_header(header, ZSJ_HEADER, "zsj.csv")

    units: list[ZsjUnit] = []
    seen: set[str] = set()
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(ZSJ_HEADER):
            raise InputError(f"zsj.csv line {line_no}: wrong field count")
        zsj_id = row[0].strip()
        if not zsj_id or zsj_id in seen:
            raise InputError(f"zsj.csv line {line_no}: missing or duplicate zsj id")
        category = row[1].strip()
        categories.category_index(category)  # raises for unknown spellings
        try:
            scalars = [float(v) for v in row[2:5]]
        except ValueError as exc:
            raise InputError(f"zsj.csv line {line_no}: {exc}") from exc
        if any(not np.isfinite(v) or v < 0 for v in scalars):
            raise InputError(f"zsj.csv line {line_no}: scalars must be finite and >= 0")
        seen.add(zsj_id)
        units.append(ZsjUnit(zsj_id, category, *scalars))
    return units


def bin_session(session: ChargingSession) -> np.ndarray:
    """Spread a session's energy over hour-of-day bins by time overlap.

    Power is assumed constant over the session; sessions crossing midnight
    wrap onto the same 24-bin hour-of-day axis.
    """
    bins = np.zeros(HOURS_PER_DAY)
    total_s = (session.end - session.start).total_seconds()
    t = session.start
    while t < session.end:
        boundary = t.replace(minute=0, second=0, microsecond=0) + timedelta(hours=1)
        seg_end = min(boundary, session.end)
        frac = (seg_end - t).total_seconds() / total_s
        bins[t.hour] += session.energy_kwh * frac
        t = seg_end
    return bins


def session_bin_fractions(session: ChargingSession) -> np.ndarray:
    """Fraction of the session's duration overlapping each hour-of-day bin."""
    bins = np.zeros(HOURS_PER_DAY)
    total_s = (session.end - session.start).total_seconds()
    t = session.start
    while t < session.end:
        boundary = t.replace(minute=0, second=0, microsecond=0) + timedelta(hours=1)
        seg_end = min(boundary, session.end)
        bins[t.hour] += (seg_end - t).total_seconds() / total_s
        t = seg_end
    return bins


def parse_day_filter(text: str):
    """Parse 'all' | 'weekday' | 'weekend' | 'month:<1-12>' into a filter value."""
    text = text.strip()
    if text in DAY_FILTERS:
        return text
    if text.startswith("month:"):
        try:
            m = int(text.split(":", 1)[1])
        except ValueError:
            raise InputError(f"bad day filter {text!r}") from None
        if not 1 <= m <= 12:
            raise InputError(f"month filter out of range: {text!r}")
        return ("month", m)
    raise InputError(f"bad day filter {text!r}; expected all, weekday, weekend, or month:<n>")


def day_matches(d: date, day_filter) -> bool:
    if day_filter == "all":
        return True
    if day_filter == "weekday":
        return d.weekday() < 5
    if day_filter == "weekend":
        return d.weekday() >= 5
    if isinstance(day_filter, tuple) and day_filter[0] == "month":
        return d.month == day_filter[1]
    raise InputError(f"bad day filter {day_filter!r}")


def day_filter_name(day_filter) -> str:
    if isinstance(day_filter, tuple):
        return f"month:{day_filter[1]}"
    return str(day_filter)


def iter_days(first: date, last: date):
    d = first
    while d <= last:
        yield d
        d += timedelta(days=1)


@dataclass
class CurveSet:
    """Mean daily curves per group over the calendar days matching a filter.

    ``curves`` holds mean energy per hour bin (kWh); ``counts`` holds the
    matching charging-instance variant where each session contributes its
    bin-overlap fraction. ``day_count`` is the number of matching days in the
    observation window (first to last session start date).
    """

    group_by: str
    day_filter: object
    day_count: int
    window: tuple[date, date] | None
    curves: dict[str, np.ndarray]
    counts: dict[str, np.ndarray]
    rejects: list[Reject] = field(default_factory=list)


def build_curves(
    sessions: Sequence[ChargingSession],
    sites: Sequence[ChargerSite],
    zsj_units: Sequence[ZsjUnit] | None = None,
    group_by: str = "charger",
    day_filter="all",
) -> CurveSet:
    """Aggregate sessions into mean daily load curves per group.

    Groups are charger ids or ZSJ categories. A session belongs to the
    calendar day of its start. Sessions whose charger (or the charger's ZSJ
    unit) cannot be resolved are rejected, not fatal.
    """
    if group_by not in ("charger", "zsj_category"):
        raise InputError("group_by must be 'charger' or 'zsj_category'")
    registry = {s.charger_id: s for s in sites}
    unit_by_id = {u.zsj_id: u for u in zsj_units} if zsj_units is not None else {}
    if group_by == "zsj_category" and zsj_units is None:
        raise InputError("zsj_category grouping requires the ZSJ attribute table")

    def group_key(charger_id: str) -> str | None:
        site = registry.get(charger_id)
        if site is None:
            return None
        if group_by == "charger":
            return site.charger_id
        unit = unit_by_id.get(site.zsj_id)
        return unit.category if unit is not None else None

    rejects: list[Reject] = []
    unresolved: set[str] = set()
    accepted: list[tuple[str, ChargingSession]] = []
    for s in sessions:
        key = group_key(s.charger_id)
        if key is None:
            if s.charger_id not in unresolved:
                unresolved.add(s.charger_id)
                rejects.append(Reject("unresolved charger id", detail=s.charger_id))
            continue
        accepted.append((key, s))

    # Canonical order so aggregation is independent of input row order.
    accepted.sort(key=lambda item: (item[1].charger_id, item[1].start, item[1].end))

    if group_by == "charger":
        all_keys = sorted(registry)
    else:
        all_keys = sorted({u.category for u in unit_by_id.values() if u.zsj_id in {s.zsj_id for s in sites}})
    sums = {key: np.zeros(HOURS_PER_DAY) for key in all_keys}
    count_sums = {key: np.zeros(HOURS_PER_DAY) for key in all_keys}

    if accepted:
        first = min(s.start.date() for _, s in accepted)
        last = max(s.start.date() for _, s in accepted)
        window: tuple[date, date] | None = (first, last)
        day_count = sum(1 for d in iter_days(first, last) if day_matches(d, day_filter))
    else:
        window = None
        day_count = 0

    for key, s in accepted:
        if not day_matches(s.start.date(), day_filter):
            continue
        sums[key] += bin_session(s)
        count_sums[key] += session_bin_fractions(s)

    denom = float(day_count) if day_count else 1.0
    curves = {key: arr / denom for key, arr in sums.items()}
    counts = {key: arr / denom for key, arr in count_sums.items()}
    return CurveSet(
        group_by=group_by,
        day_filter=day_filter,
        day_count=day_count,
        window=window,
        curves=curves,
        counts=counts,
        rejects=rejects,
    )


@dataclass
class Standardization:
    """Z-score parameters for the three demographic scalars, persisted with the model."""

    means: np.ndarray
    stds: np.ndarray
    warnings: list[str] = field(default_factory=list)

    def apply(self, unit: ZsjUnit) -> np.ndarray:
        raw = np.array(
            [unit.population_density, unit.address_count, unit.commuter_inflow]
        )
        return (raw - self.means) / self.stds

    def to_json_dict(self) -> dict:
        return {
            "fields": list(SCALAR_FIELDS),
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Standardization":
        try:
            means = np.asarray(doc["means"], dtype=np.float64)
            stds = np.asarray(doc["stds"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed standardization record: {exc}") from exc
        if means.shape != (len(SCALAR_FIELDS),) or stds.shape != (len(SCALAR_FIELDS),):
            raise DimensionError("standardization record has wrong arity")
        if not (np.isfinite(means).all() and np.isfinite(stds).all() and (stds > 0).all()):
            raise InputError("standardization record must be finite with positive stds")
        return cls(means=means, stds=stds, warnings=list(doc.get("warnings", [])))


def compute_standardization(units: Sequence[ZsjUnit]) -> Standardization:
    """Population-statistics z-score parameters over the given unit rows.

    A zero-variance scalar standardizes to 0 (std forced to 1) and leaves a
    warning record instead of failing.
    """
    if not units:
        raise InputError("cannot standardize an empty dataset")
    raw = np.array(
        [[u.population_density, u.address_count, u.commuter_inflow] for u in units]
    )
    means = raw.mean(axis=0)
    stds = raw.std(axis=0)  # population std (ddof=0)
    warnings = []
    for i, name in enumerate(SCALAR_FIELDS):
        if stds[i] == 0.0:
            stds[i] = 1.0
            warnings.append(f"zero variance in {name}; values standardize to 0")
    return Standardization(means=means, stds=stds, warnings=warnings)


@dataclass
class Sample:
    charger_id: str
    bucket: str
    features: np.ndarray
    target: np.ndarray


@dataclass
class Dataset:
    samples: list[Sample]
    standardization: Standardization

    def to_json_list(self) -> list[dict]:
        return [
            {
                "features": s.features.tolist(),
                "target": s.target.tolist(),
                "label": {"charger_id": s.charger_id, "bucket": s.bucket},
            }
            for s in self.samples
        ]


def build_features(unit: ZsjUnit, standardization: Standardization) -> np.ndarray:
    """Model feature vector for one ZSJ unit: one-hot category + z-scored scalars."""
    vec = np.concatenate([categories.one_hot(unit.category), standardization.apply(unit)])
    return model.validate_features(vec)


def build_dataset(
    curve_sets: Mapping[str, CurveSet],
    sites: Sequence[ChargerSite],
    zsj_units: Sequence[ZsjUnit],
    standardization: Standardization | None = None,
) -> Dataset:
    """Pair per-charger mean curves with location features, one sample per
    (charger, day-filter bucket).

    Standardization statistics are computed over the dataset's sample rows
    unless an existing record is supplied (e.g. when rebuilding a dataset with
    the statistics a model was trained with).
    """
    registry = {s.charger_id: s for s in sites}
    unit_by_id = {u.zsj_id: u for u in zsj_units}

    keyed: list[tuple[str, str, np.ndarray, ZsjUnit]] = []
    for bucket, curve_set in curve_sets.items():
        if curve_set.group_by != "charger":
            raise InputError("build_dataset requires charger-grouped curves")
        for charger_id in sorted(curve_set.curves):
            site = registry.get(charger_id)
            if site is None:
                raise InputError(f"charger {charger_id!r} has no site record")
            unit = unit_by_id.get(site.zsj_id)
            if unit is None:
                raise InputError(f"site {charger_id!r} references unknown ZSJ unit {site.zsj_id!r}")
            keyed.append((charger_id, bucket, curve_set.curves[charger_id], unit))
    if not keyed:
        raise InputError("empty dataset: no charger curves to train on")

    keyed.sort(key=lambda item: (item[0], item[1]))
    if standardization is None:
        standardization = compute_standardization([unit for _, _, _, unit in keyed])

    samples = [
        Sample(
            charger_id=charger_id,
            bucket=day_filter_name(bucket),
            features=build_features(unit, standardization),
            target=np.asarray(curve, dtype=np.float64),
        )
        for charger_id, bucket, curve, unit in keyed
    ]
    return Dataset(samples=samples, standardization=standardization)


def dataset_json_text(dataset: Dataset) -> str:
    return json.dumps(dataset.to_json_list(), indent=2, sort_keys=True) + "\n"
