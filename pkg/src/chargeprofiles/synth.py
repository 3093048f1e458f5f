"""Synthetic charging scenario generator.

Produces the three ingestion CSVs (sessions, sites, ZSJ attributes) plus a
ground-truth record, from four built-in archetypal daily behaviors mixed per
area category. Stations emit one constant-power session inside each active
hour whose energy is that hour's share of the day's energy, so hourly binning
of the generated log reproduces each day's intended curve exactly; at zero
noise the round trip through ingestion is exact to float precision.

Generation is deterministic: every station derives its own PCG64 stream from
(seed, station index), so output bytes depend only on the scenario config.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from typing import Sequence

import numpy as np

from . import categories
from .analysis import GroupLabel
from .errors import InputError
from .ingest import HOURS_PER_DAY, SESSIONS_HEADER, SITES_HEADER, ZSJ_HEADER, iter_days

#: Archetype order used by mixing rows and ground-truth records.
GROUP_ORDER = (
    GroupLabel.SUSTAINED_SINGLE_PEAK,
    GroupLabel.MORNING_SINGLE_PEAK,
    GroupLabel.EVENING_SINGLE_PEAK,
    GroupLabel.DOUBLE_PEAK,
)


@dataclass
class ArchetypeSpec:
    """One archetypal daily behavior: a simplex shape plus demand multipliers."""

    name: GroupLabel
    base_shape: np.ndarray
    weekday_energy_kwh: float
    weekend_multiplier: float
    monthly_multipliers: np.ndarray
    noise_cv: float = 0.1


def hann_bump(center: int, half_width: int) -> np.ndarray:
    """Raised-cosine bump on the 24-hour circle, normalized to the simplex.

    Mass is exactly zero outside +/- half_width hours of the center, which
    keeps generated session logs compact.
    """
    hours = np.arange(HOURS_PER_DAY)
    dist = np.minimum(np.abs(hours - center), HOURS_PER_DAY - np.abs(hours - center))
    w = np.where(dist < half_width, 1.0 + np.cos(np.pi * dist / half_width), 0.0)
    return w / w.sum()


_SEASONAL = np.array([1.05, 1.02, 1.0, 0.98, 0.95, 0.90, 0.85, 0.87, 0.95, 1.0, 1.04, 1.08])


def default_archetypes() -> list[ArchetypeSpec]:
    """The four built-in behaviors: gradual midday hump, sharp morning peak at
    hour 8, sharp evening peak at hour 17, and a two-peak shape at 8 and 17."""
    double = 0.5 * hann_bump(8, 2) + 0.5 * hann_bump(17, 2)
    return [
        ArchetypeSpec(
            name=GroupLabel.SUSTAINED_SINGLE_PEAK,
            base_shape=hann_bump(13, 8),
            weekday_energy_kwh=9.0,
            weekend_multiplier=0.85,
            monthly_multipliers=_SEASONAL.copy(),
        ),
        ArchetypeSpec(
            name=GroupLabel.MORNING_SINGLE_PEAK,
            base_shape=hann_bump(8, 4),
            weekday_energy_kwh=6.0,
            weekend_multiplier=0.60,
            monthly_multipliers=_SEASONAL.copy(),
        ),
        ArchetypeSpec(
            name=GroupLabel.EVENING_SINGLE_PEAK,
            base_shape=hann_bump(17, 4),
            weekday_energy_kwh=7.0,
            weekend_multiplier=0.90,
            monthly_multipliers=_SEASONAL.copy(),
        ),
        ArchetypeSpec(
            name=GroupLabel.DOUBLE_PEAK,
            base_shape=double,
            weekday_energy_kwh=5.0,
            weekend_multiplier=0.70,
            monthly_multipliers=_SEASONAL.copy(),
        ),
    ]


#: Default archetype mixing per category (rows over GROUP_ORDER).
DEFAULT_MIXING: dict[str, tuple[float, float, float, float]] = {
    "Compact residential area": (1.0, 0.0, 0.0, 0.0),
    "Urban and suburban mixed area": (1.0, 0.0, 0.0, 0.0),
    "Civic amenities area": (1.0, 0.0, 0.0, 0.0),
    "Transportation infrastructure area": (0.0, 1.0, 0.0, 0.0),
    "Recreational area": (0.0, 1.0, 0.0, 0.0),
    "Separated residential area": (0.0, 0.0, 1.0, 0.0),
    "Agricultural area": (0.0, 0.0, 1.0, 0.0),
    "Reserve area": (0.0, 0.0, 0.0, 1.0),
    "Industrial area": (0.0, 0.0, 0.0, 1.0),
    "Residential and recreational area": (0.5, 0.0, 0.5, 0.0),
    "Other purpose area": (0.25, 0.25, 0.25, 0.25),
    "Forest area": (0.0, 0.5, 0.5, 0.0),
}

# Rough per-category demographic scales (density per km^2, addresses, commuter inflow).
_DEMOGRAPHICS: dict[str, tuple[float, float, float]] = {
    "Compact residential area": (6000.0, 2200.0, 900.0),
    "Urban and suburban mixed area": (4000.0, 1500.0, 1400.0),
    "Residential and recreational area": (2500.0, 900.0, 700.0),
    "Separated residential area": (1500.0, 600.0, 1600.0),
    "Transportation infrastructure area": (800.0, 250.0, 3000.0),
    "Civic amenities area": (3000.0, 1200.0, 1800.0),
    "Recreational area": (500.0, 180.0, 1200.0),
    "Other purpose area": (1000.0, 400.0, 800.0),
    "Industrial area": (700.0, 350.0, 2600.0),
    "Reserve area": (300.0, 100.0, 400.0),
    "Agricultural area": (200.0, 80.0, 500.0),
    "Forest area": (50.0, 20.0, 200.0),
}


@dataclass
class ShockWindow:
    """A date range whose demand is scaled by a multiplier (e.g. a lockdown)."""

    start: date
    end: date
    multiplier: float


@dataclass
class ScenarioConfig:
    stations_per_category: dict[str, int]
    start: date
    end: date
    mixing: dict[str, tuple[float, ...]]
    shocks: list[ShockWindow] = field(default_factory=list)
    seed: int = 0
    noise_cv: float | None = None  # overrides every archetype's noise_cv when set
    archetypes: list[ArchetypeSpec] = field(default_factory=default_archetypes)

    def validate(self) -> "ScenarioConfig":
        if self.start > self.end:
            raise InputError("scenario date range is empty (start after end)")
        k = len(self.archetypes)
        for cat, count in self.stations_per_category.items():
            categories.category_index(cat)
            if count < 0:
                raise InputError(f"negative station count for {cat!r}")
        for cat, row in self.mixing.items():
            categories.category_index(cat)
            row = tuple(float(v) for v in row)
            if len(row) != k:
                raise InputError(f"mixing row for {cat!r} must have {k} weights")
            if any(v < 0 for v in row):
                raise InputError(f"mixing row for {cat!r} has negative weights")
            if abs(sum(row) - 1.0) > 1e-9:
                raise InputError(f"mixing row for {cat!r} does not sum to 1")
        for cat in self.stations_per_category:
            if self.stations_per_category[cat] > 0 and cat not in self.mixing:
                raise InputError(f"no mixing row for category {cat!r}")
        for shock in self.shocks:
            if shock.start > shock.end:
                raise InputError("shock window is empty (start after end)")
            if not np.isfinite(shock.multiplier) or shock.multiplier < 0:
                raise InputError("shock multiplier must be finite and >= 0")
        if self.noise_cv is not None and self.noise_cv < 0:
            raise InputError("noise_cv must be >= 0")
        if self.seed < 0:
            raise InputError("seed must be a non-negative integer")
        return self

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ScenarioConfig":
        if not isinstance(doc, dict):
            raise InputError("scenario config must be a JSON object")
        known = {
            "stations_per_category", "start", "end", "mixing", "shocks", "seed", "noise_cv",
        }
        unknown = set(doc) - known
        if unknown:
            raise InputError(f"unknown scenario config fields: {sorted(unknown)}")
        try:
            start = date.fromisoformat(doc["start"]) if "start" in doc else date(2022, 1, 1)
            end = date.fromisoformat(doc["end"]) if "end" in doc else start + timedelta(days=179)
        except (TypeError, ValueError) as exc:
            raise InputError(f"bad scenario dates: {exc}") from exc
        stations = doc.get("stations_per_category", 4)
        if isinstance(stations, int):
            stations = {cat: stations for cat in categories.CATEGORIES}
        mixing = {cat: tuple(row) for cat, row in doc.get("mixing", DEFAULT_MIXING).items()}
        shocks = [
            ShockWindow(
                start=date.fromisoformat(s["start"]),
                end=date.fromisoformat(s["end"]),
                multiplier=float(s["multiplier"]),
            )
            for s in doc.get("shocks", [])
        ]
        return cls(
            stations_per_category=dict(stations),
            start=start,
            end=end,
            mixing=mixing,
            shocks=shocks,
            seed=int(doc.get("seed", 0)),
            noise_cv=None if doc.get("noise_cv") is None else float(doc["noise_cv"]),
        ).validate()


def default_scenario(seed: int = 0, noise_cv: float | None = 0.1) -> ScenarioConfig:
    """Four stations in each of the 12 categories over 180 days."""
    return ScenarioConfig(
        stations_per_category={cat: 4 for cat in categories.CATEGORIES},
        start=date(2022, 1, 1),
        end=date(2022, 6, 29),
        mixing=dict(DEFAULT_MIXING),
        seed=seed,
        noise_cv=noise_cv,
    ).validate()


def uniform_mixing(archetype_index: int, k: int = 4) -> dict[str, tuple[float, ...]]:
    """Mixing table sending every category to a single archetype."""
    row = tuple(1.0 if i == archetype_index else 0.0 for i in range(k))
    return {cat: row for cat in categories.CATEGORIES}


@dataclass
class GeneratedScenario:
    sessions_csv: bytes
    sites_csv: bytes
    zsj_csv: bytes
    ground_truth: dict


def _station_rng(seed: int, station_index: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(2, station_index)))
    )


def generate(config: ScenarioConfig) -> GeneratedScenario:
    """Generate sessions.csv, sites.csv, zsj.csv bytes and the ground truth.

    Per station and day, the expected energy of archetype k is
    ``mix_k * base_energy_k * weekend_k * monthly_k * shock``; the day's hourly
    masses mix the archetype shapes with those energies, and each active hour
    becomes one session row with lognormal multiplicative noise (unit mean,
    coefficient of variation = noise_cv).
    """
    config.validate()
    archetypes = config.archetypes
    k = len(archetypes)
    shapes = np.vstack([a.base_shape for a in archetypes])
    days = list(iter_days(config.start, config.end))
    if not days:
        raise InputError("scenario date range is empty")

    shock_mult = np.ones(len(days))
    for shock in config.shocks:
        for i, d in enumerate(days):
            if shock.start <= d <= shock.end:
                shock_mult[i] *= shock.multiplier

    sessions_buf = io.StringIO()
    sites_buf = io.StringIO()
    zsj_buf = io.StringIO()
    sessions_w = csv.writer(sessions_buf, lineterminator="\n")
    sites_w = csv.writer(sites_buf, lineterminator="\n")
    zsj_w = csv.writer(zsj_buf, lineterminator="\n")
    sessions_w.writerow(SESSIONS_HEADER)
    sites_w.writerow(SITES_HEADER)
    zsj_w.writerow(ZSJ_HEADER)

    ground_truth: dict[str, dict] = {}
    rated_choices = (11.0, 22.0, 50.0)
    station_index = 0
    for cat in categories.CATEGORIES:
        count = config.stations_per_category.get(cat, 0)
        if count == 0:
            continue
        w = np.array(config.mixing[cat], dtype=np.float64)
        for _ in range(count):
            rng = _station_rng(config.seed, station_index)
            charger_id = f"CH{station_index:04d}"
            zsj_id = f"Z{station_index:04d}"

            density, addresses, inflow = _DEMOGRAPHICS[cat]
            factors = rng.uniform(0.7, 1.3, size=3)
            zsj_w.writerow([
                zsj_id, cat,
                repr(round(density * factors[0], 2)),
                repr(round(addresses * factors[1], 2)),
                repr(round(inflow * factors[2], 2)),
            ])
            rated = rated_choices[int(rng.integers(0, len(rated_choices)))]
            commissioned = config.start - timedelta(days=int(rng.integers(30, 400)))
            sites_w.writerow([charger_id, zsj_id, repr(rated), commissioned.isoformat()])

            cv = config.noise_cv
            mean_curve = np.zeros(HOURS_PER_DAY)
            for day_i, day in enumerate(days):
                energies = np.array([
                    w[j]
                    * a.weekday_energy_kwh
                    * (a.weekend_multiplier if day.weekday() >= 5 else 1.0)
                    * a.monthly_multipliers[day.month - 1]
                    for j, a in enumerate(archetypes)
                ]) * shock_mult[day_i]
                masses = energies @ shapes
                mean_curve += masses

                day_cv = cv if cv is not None else float(w @ np.array([a.noise_cv for a in archetypes]))
                sigma = float(np.sqrt(np.log1p(day_cv * day_cv)))
                noise = rng.lognormal(mean=-0.5 * sigma * sigma, sigma=sigma, size=HOURS_PER_DAY)
                for h in range(HOURS_PER_DAY):
                    if masses[h] <= 0.0:
                        continue
                    energy = masses[h] * noise[h]
                    start_dt = datetime.combine(day, time(h))
                    end_dt = start_dt + timedelta(hours=1)
                    sessions_w.writerow([
                        charger_id,
                        start_dt.strftime("%Y-%m-%dT%H:%M"),
                        end_dt.strftime("%Y-%m-%dT%H:%M"),
                        repr(float(energy)),
                    ])

            mean_curve /= len(days)
            daily_kwh = float(mean_curve.sum())
            shape = mean_curve / daily_kwh if daily_kwh > 0 else mean_curve
            ground_truth[charger_id] = {
                "mixing": w.tolist(),
                "shape": shape.tolist(),
                "daily_kwh": daily_kwh,
            }
            station_index += 1

    return GeneratedScenario(
        sessions_csv=sessions_buf.getvalue().encode("utf-8"),
        sites_csv=sites_buf.getvalue().encode("utf-8"),
        zsj_csv=zsj_buf.getvalue().encode("utf-8"),
        ground_truth=ground_truth,
    )


def archetype_shapes(archetypes: Sequence[ArchetypeSpec] | None = None) -> np.ndarray:
    """K x 24 matrix of archetype shapes (defaults when none given)."""
    if archetypes is None:
        archetypes = default_archetypes()
    return np.vstack([a.base_shape for a in archetypes])


def archetype_names(archetypes: Sequence[ArchetypeSpec] | None = None) -> list[str]:
    if archetypes is None:
        archetypes = default_archetypes()
    return [a.name.value for a in archetypes]
