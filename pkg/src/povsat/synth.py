"""Synthetic world: survey records plus day/night tiles carrying a planted wealth signal.

Night tiles encode wealth as mean luminance::

    L = night_base + night_gain * wealth + render_offset + N(0, luminance_noise)
    pixel = clamp(round(L + N(0, pixel_noise)))

Day tiles carry the same kind of signal in the green channel only, at
``day_gain`` (a quarter of the night gain unless set). Red and blue are
label-independent. Render offsets move tile statistics per continent
without touching labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidConfigError, UnsupportedError
from .geo import CONTINENTS, SurveyRecord, jitter, normalize_wealth, pair_nearest, split_by_country
from .manifest import DatasetManifest, ManifestRow
from .seeding import derive_seed, rng_for
from .tiles import ImageTile, write_tile

MAX_IMAGE_SIZE = 256
MAX_CLIP_FRACTION = 0.01
_PATCH_COLS = 18
_PATCH_LAT_PITCH = 9.0
_PATCH_LON_PITCH = 19.5
_PATCH_MAX_DEG = 7.0
_CITY_SPACING_DEG = 0.25


@dataclass(frozen=True)
class ContinentSpec:
    name: str
    countries: int = 4
    wealth_mean: float = 0.0
    wealth_spread: float = 0.35
    render_offset: float = 0.0


DEFAULT_CONTINENTS = (
    ContinentSpec("Africa", 4, -0.3),
    ContinentSpec("Asia", 4, 0.0),
    ContinentSpec("Europe", 4, 0.4),
    ContinentSpec("SouthAmerica", 4, 0.1),
    ContinentSpec("Caribbean", 4, 0.0),
)


@dataclass(frozen=True)
class SynthConfig:
    n_cities: int = 1000
    continents: tuple[ContinentSpec, ...] = DEFAULT_CONTINENTS
    image_size: int = 32
    night_gain: float = 28.0
    day_gain: float | None = None  # None -> night_gain / 4
    luminance_noise: float = 9.0
    pixel_noise: float = 6.0
    urban_fraction: float = 0.5
    mode_gap: float = 2.0
    country_spread: float = 0.15
    night_base: float = 64.0
    day_base: tuple[float, float, float] = (96.0, 112.0, 80.0)
    jitter: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "continents", tuple(self.continents))
        object.__setattr__(self, "day_base", tuple(float(v) for v in self.day_base))
        names = [c.name for c in self.continents]
        if not names:
            raise InvalidConfigError("at least one continent is required")
        if len(set(names)) != len(names):
            raise InvalidConfigError(f"duplicate continents in {names}")
        for c in self.continents:
            if c.name not in CONTINENTS:
                raise InvalidConfigError(f"unknown continent {c.name!r}; choose from {CONTINENTS}")
            if c.countries < 1:
                raise InvalidConfigError(f"{c.name}: need at least one country")
            if c.wealth_spread < 0:
                raise InvalidConfigError(f"{c.name}: wealth_spread must be >= 0")
        if self.n_cities < self.n_countries:
            raise InvalidConfigError(
                f"n_cities={self.n_cities} is fewer than the {self.n_countries} countries"
            )
        if self.n_countries > _PATCH_COLS * 13:
            raise InvalidConfigError(f"at most {_PATCH_COLS * 13} countries fit on the map")
        if not 4 <= self.image_size <= MAX_IMAGE_SIZE:
            raise InvalidConfigError(f"image_size must be in [4, {MAX_IMAGE_SIZE}], got {self.image_size}")
        for name in ("night_gain", "luminance_noise", "pixel_noise", "mode_gap", "country_spread"):
            if getattr(self, name) < 0:
                raise InvalidConfigError(f"{name} must be >= 0")
        if self.day_gain is not None and self.day_gain < 0:
            raise InvalidConfigError("day_gain must be >= 0")
        if not 0.0 <= self.urban_fraction <= 1.0:
            raise InvalidConfigError("urban_fraction must lie in [0, 1]")

    @property
    def n_countries(self) -> int:
        return sum(c.countries for c in self.continents)

    @property
    def effective_day_gain(self) -> float:
        return self.night_gain / 4.0 if self.day_gain is None else self.day_gain

    def continent(self, name: str) -> ContinentSpec:
        for c in self.continents:
            if c.name == name:
                return c
        raise KeyError(name)


@dataclass(frozen=True)
class SynthCity:
    record: SurveyRecord
    true_lat: float
    true_lon: float
    norm_wealth: float


def _country_layout(config: SynthConfig):
    """Yield (country, continent spec, number of cities, patch origin)."""
    base, extra = divmod(config.n_cities, config.n_countries)
    i = 0
    for spec in config.continents:
        for k in range(spec.countries):
            n = base + (1 if i < extra else 0)
            origin = (
                -55.0 + _PATCH_LAT_PITCH * (i // _PATCH_COLS),
                -175.0 + _PATCH_LON_PITCH * (i % _PATCH_COLS),
            )
            yield f"{spec.name}-{k + 1:02d}", spec, n, origin
            i += 1


def generate_records(config: SynthConfig) -> list[SynthCity]:
    """Survey records with jittered coordinates and normalized labels (no pixels)."""
    rng = rng_for(config.seed, "synth-records")
    cities = []
    raw = []
    index = 0
    for country, spec, n, (lat0, lon0) in _country_layout(config):
        effect = rng.normal(0.0, 1.0) * config.country_spread
        side = math.ceil(math.sqrt(n))
        spacing = min(_CITY_SPACING_DEG, _PATCH_MAX_DEG / side)
        for j in range(n):
            urban = bool(rng.random() < config.urban_fraction)
            mode = config.mode_gap / 2.0 if urban else -config.mode_gap / 2.0
            raw_wealth = spec.wealth_mean + effect + mode + spec.wealth_spread * rng.normal()
            true = (lat0 + spacing * (j // side + 0.5), lon0 + spacing * (j % side + 0.5))
            city_id = f"c{index:05d}"
            survey = jitter(true, urban, rng_for(config.seed, "jitter", city_id)) if config.jitter else true
            rec = SurveyRecord(city_id, survey[0], survey[1], country, spec.name, urban, float(raw_wealth))
            cities.append((rec, true))
            raw.append(raw_wealth)
            index += 1
    labels = normalize_wealth(raw)
    return [SynthCity(rec, t[0], t[1], float(y)) for (rec, t), y in zip(cities, labels)]


def render_night(config: SynthConfig, city: SynthCity) -> ImageTile:
    rng = rng_for(config.seed, "night-tile", city.record.id)
    s = config.image_size
    offset = config.continent(city.record.continent).render_offset
    lum = (config.night_base + config.night_gain * city.norm_wealth + offset
           + config.luminance_noise * rng.normal())
    px = lum + config.pixel_noise * rng.normal(size=(s, s, 1))
    return ImageTile("n" + city.record.id[1:], "night", _to_u8(px), city.true_lat, city.true_lon)


def render_day(config: SynthConfig, city: SynthCity) -> ImageTile:
    rng = rng_for(config.seed, "day-tile", city.record.id)
    s = config.image_size
    offset = config.continent(city.record.continent).render_offset
    means = np.array(config.day_base) + offset + config.luminance_noise * rng.normal(size=3)
    means[1] += config.effective_day_gain * city.norm_wealth
    px = means[None, None, :] + config.pixel_noise * rng.normal(size=(s, s, 3))
    return ImageTile("d" + city.record.id[1:], "day", _to_u8(px), city.true_lat, city.true_lon)


def _to_u8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


def generate_world(config: SynthConfig, out_dir) -> DatasetManifest:
    """Write tiles and ``manifest.csv`` under ``out_dir`` and return the manifest.

    Each survey record is paired with the nearest tile of each kind, so
    jitter acts exactly as it would on real survey coordinates.
    """
    out_dir = Path(out_dir)
    (out_dir / "night").mkdir(parents=True, exist_ok=True)
    (out_dir / "day").mkdir(parents=True, exist_ok=True)
    cities = generate_records(config)
    records = [c.record for c in cities]
    night = [render_night(config, c) for c in cities]
    day = [render_day(config, c) for c in cities]
    night_for = pair_nearest(records, night, "night")
    day_for = pair_nearest(records, day, "day")
    splits = split_by_country(records, seed=derive_seed(config.seed, "split"))

    for tile in night:
        write_tile(tile, out_dir / "night" / f"{tile.id}.pgm")
    for tile in day:
        write_tile(tile, out_dir / "day" / f"{tile.id}.ppm")

    rows = []
    for city in cities:
        r = city.record
        rows.append(ManifestRow(
            r.id, r.country, r.continent, r.lat, r.lon, r.urban, r.raw_wealth, city.norm_wealth,
            f"day/{day_for[r.id].id}.ppm", f"night/{night_for[r.id].id}.pgm", splits[r.country],
        ))
    manifest = DatasetManifest(rows, out_dir)
    manifest.save(out_dir / "manifest.csv")
    return manifest


def _effective_noise(config: SynthConfig) -> float:
    """Std of a night tile's mean luminance around its noise-free value."""
    pixels = config.image_size ** 2
    return math.sqrt(config.luminance_noise ** 2 + config.pixel_noise ** 2 / pixels)


def clip_fraction(config: SynthConfig, labels) -> float:
    """Expected fraction of night pixels that hit 0 or 255 before clamping."""
    y = np.asarray(labels, dtype=np.float64)
    mu = config.night_base + config.night_gain * y
    sigma = math.hypot(config.luminance_noise, config.pixel_noise)
    if sigma == 0:
        return float(np.mean((mu < 0) | (mu > 255)))
    z_lo = (0.0 - mu) / sigma
    z_hi = (mu - 255.0) / sigma
    cdf = np.vectorize(lambda z: 0.5 * math.erfc(-z / math.sqrt(2.0)))
    return float(np.mean(cdf(z_lo) + cdf(z_hi)))


def _check_linear(config: SynthConfig, labels) -> None:
    if any(c.render_offset != 0 for c in config.continents):
        raise UnsupportedError("render offsets break the single linear luminance model")
    frac = clip_fraction(config, labels)
    if frac > MAX_CLIP_FRACTION:
        raise UnsupportedError(
            f"{frac:.2%} of night pixels clip at the intensity bounds; the response is not linear"
        )


def oracle_rmse(config: SynthConfig, labels=None) -> float:
    """RMSE of the best linear predictor of wealth from night mean luminance.

    With label variance ``V``, gain ``g`` and luminance noise ``s``, the
    residual variance of regressing wealth on ``g*wealth + noise`` is
    ``V s^2 / (g^2 V + s^2)``. ``labels`` defaults to the config's own
    generated labels.
    """
    if labels is None:
        labels = [c.norm_wealth for c in generate_records(config)]
    _check_linear(config, labels)
    var = float(np.var(np.asarray(labels, dtype=np.float64)))
    g = config.night_gain
    s2 = _effective_noise(config) ** 2
    if g == 0:
        return math.sqrt(var)
    if s2 == 0:
        return 0.0
    return math.sqrt(var * s2 / (g * g * var + s2))


def gain_for_oracle(config: SynthConfig, target: float, labels=None) -> float:
    """Night gain at which ``oracle_rmse`` equals ``target`` (other fields fixed)."""
    if labels is None:
        labels = [c.norm_wealth for c in generate_records(config)]
    var = float(np.var(np.asarray(labels, dtype=np.float64)))
    if not 0 < target < math.sqrt(var):
        raise InvalidConfigError(f"target must lie in (0, {math.sqrt(var):.4f})")
    s2 = _effective_noise(config) ** 2
    # target^2 = V s2 / (g^2 V + s2)  =>  g^2 = s2 (V - t^2) / (V t^2)
    return math.sqrt(s2 * (var - target ** 2) / (var * target ** 2))
