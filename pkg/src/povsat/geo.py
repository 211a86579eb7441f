"""Survey records, coordinate jitter, tile pairing, label normalization, splits."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateDistributionError, EmptyCatalogError, InvalidConfigError

EARTH_RADIUS_KM = 6371.0
CONTINENTS = ("Africa", "Asia", "Europe", "SouthAmerica", "Caribbean")
URBAN_JITTER_KM = 2.0
RURAL_JITTER_KM = 5.0


@dataclass(frozen=True)
class SurveyRecord:
    id: str
    lat: float
    lon: float
    country: str
    continent: str
    urban: bool
    raw_wealth: float

    def __post_init__(self):
        _check_coord(self.lat, self.lon)
        if not self.country:
            raise InvalidConfigError(f"{self.id}: empty country")
        if self.continent not in CONTINENTS:
            raise InvalidConfigError(f"{self.id}: unknown continent {self.continent!r}")


def _check_coord(lat: float, lon: float) -> None:
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
        raise InvalidConfigError(f"coordinate out of range: ({lat}, {lon})")


def haversine_km(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle distance between two (lat, lon) points in degrees."""
    lat1, lon1 = map(math.radians, a)
    lat2, lon2 = map(math.radians, b)
    h = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def _haversine_many(lat: float, lon: float, lats: np.ndarray, lons: np.ndarray) -> np.ndarray:
    lat1, lon1 = math.radians(lat), math.radians(lon)
    lat2, lon2 = np.radians(lats), np.radians(lons)
    h = np.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def destination(coord: tuple[float, float], bearing: float, distance_km: float) -> tuple[float, float]:
    """Point reached from ``coord`` along ``bearing`` (radians) after ``distance_km``."""
    lat1, lon1 = map(math.radians, coord)
    d = distance_km / EARTH_RADIUS_KM
    sin_lat2 = math.sin(lat1) * math.cos(d) + math.cos(lat1) * math.sin(d) * math.cos(bearing)
    lat2 = math.asin(max(-1.0, min(1.0, sin_lat2)))
    lon2 = lon1 + math.atan2(
        math.sin(bearing) * math.sin(d) * math.cos(lat1),
        math.cos(d) - math.sin(lat1) * sin_lat2,
    )
    lon_deg = (math.degrees(lon2) + 180.0) % 360.0 - 180.0
    return math.degrees(lat2), lon_deg


def jitter(coord: tuple[float, float], urban: bool, rng: np.random.Generator) -> tuple[float, float]:
    """Displace ``coord`` uniformly within a 2 km (urban) or 5 km (rural) disk."""
    _check_coord(*coord)
    radius = URBAN_JITTER_KM if urban else RURAL_JITTER_KM
    r = radius * math.sqrt(rng.random())
    theta = 2 * math.pi * rng.random()
    return destination(coord, theta, r)


def pair_nearest(records: Sequence, tiles: Sequence, kind: str) -> dict[str, object]:
    """Map each record id to the closest tile of ``kind``.

    Ties go to the lexicographically smallest tile id.
    """
    catalog = sorted((t for t in tiles if t.kind == kind), key=lambda t: t.id)
    if not catalog:
        raise EmptyCatalogError(f"no {kind} tiles to pair against")
    lats = np.array([t.lat for t in catalog])
    lons = np.array([t.lon for t in catalog])
    out = {}
    for rec in records:
        dist = _haversine_many(rec.lat, rec.lon, lats, lons)
        # argmin returns the first minimum, i.e. the smallest id among ties
        out[rec.id] = catalog[int(np.argmin(dist))]
    return out


def normalize_wealth(raw: Sequence[float]) -> np.ndarray:
    """Center on the median and scale the largest deviation to 2."""
    x = np.asarray(raw, dtype=np.float64)
    if x.size < 2 or np.all(x == x[0]):
        raise DegenerateDistributionError("need at least two distinct wealth values")
    med = np.median(x)
    dev = np.max(np.abs(x - med))
    return np.clip(2.0 * (x - med) / dev, -2.0, 2.0)


def split_counts(n_countries: int, ratios: Sequence[float] = (0.8, 0.1, 0.1)) -> tuple[int, int, int]:
    """(train, tune, test) country counts: tune/test floored, at least one each."""
    if n_countries < 3:
        raise InvalidConfigError(f"need at least 3 countries to split, got {n_countries}")
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise InvalidConfigError(f"bad split ratios {ratios}")
    total = sum(Fraction(str(r)) for r in ratios)
    n_tune = max(1, math.floor(Fraction(str(ratios[1])) / total * n_countries))
    n_test = max(1, math.floor(Fraction(str(ratios[2])) / total * n_countries))
    n_train = n_countries - n_tune - n_test
    if n_train < 1:
        raise InvalidConfigError(f"ratios {ratios} leave no training countries out of {n_countries}")
    return n_train, n_tune, n_test


def split_by_country(
    records: Iterable,
    ratios: Sequence[float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> dict[str, str]:
    """Assign whole countries to train/tune/test so no country spans two splits."""
    countries = sorted({r.country for r in records})
    _, n_tune, n_test = split_counts(len(countries), ratios)
    order = np.random.default_rng(seed).permutation(len(countries))
    shuffled = [countries[i] for i in order]
    assignment = {}
    for i, country in enumerate(shuffled):
        if i < n_tune:
            assignment[country] = "tune"
        elif i < n_tune + n_test:
            assignment[country] = "test"
        else:
            assignment[country] = "train"
    return dict(sorted(assignment.items()))


@dataclass(frozen=True)
class CountryStats:
    country: str
    n: int
    average: float
    median: float
    variance: float | None  # None when the country has a single record


def country_stats(rows: Iterable) -> list[CountryStats]:
    """Per-country mean, median and sample variance of normalized wealth."""
    groups: dict[str, list[float]] = defaultdict(list)
    for r in rows:
        groups[r.country].append(r.norm_wealth)
    out = []
    for country in sorted(groups):
        v = np.asarray(groups[country])
        var = float(np.var(v, ddof=1)) if v.size >= 2 else None
        out.append(CountryStats(country, int(v.size), float(np.mean(v)), float(np.median(v)), var))
    return out


def country_stats_csv(stats: Sequence[CountryStats]) -> str:
    lines = ["country,average,median,variance"]
    for s in stats:
        var = "" if s.variance is None else f"{s.variance:.6g}"
        name = f'"{s.country}"' if "," in s.country else s.country
        lines.append(f"{name},{s.average:.6g},{s.median:.6g},{var}")
    return "\n".join(lines) + "\n"
