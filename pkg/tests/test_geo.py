import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from povsat.errors import DegenerateDistributionError, EmptyCatalogError, InvalidConfigError
from povsat.geo import (
    SurveyRecord,
    country_stats,
    country_stats_csv,
    haversine_km,
    jitter,
    normalize_wealth,
    pair_nearest,
    split_by_country,
    split_counts,
)
from povsat.manifest import ManifestRow
from povsat.tiles import ImageTile


def chord_distance_km(a, b, radius=6371.0):
    """Independent oracle: great-circle distance via the 3D chord length."""
    def xyz(lat, lon):
        lat, lon = math.radians(lat), math.radians(lon)
        return np.array([math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)])
    chord = np.linalg.norm(xyz(*a) - xyz(*b))
    return 2 * radius * math.asin(min(1.0, chord / 2))


def rec(rid, lat=0.0, lon=0.0, country="A", urban=False, wealth=0.0):
    return SurveyRecord(rid, lat, lon, country, "Africa", urban, wealth)


def tile(tid, lat, lon, kind="night"):
    return ImageTile(tid, kind, np.zeros((1, 1, 1 if kind == "night" else 3), np.uint8), lat, lon)


class TestHaversine:
    def test_identity(self):
        assert haversine_km((12.3, 45.6), (12.3, 45.6)) == 0.0

    def test_one_degree_equator(self):
        assert haversine_km((0, 0), (0, 1)) == pytest.approx(111.19, abs=0.01)

    def test_quarter_meridian(self):
        assert haversine_km((90, 0), (0, 0)) == pytest.approx(math.pi * 6371 / 2, abs=0.5)
        assert haversine_km((90, 0), (0, 0)) == pytest.approx(10007.5, abs=0.5)

    @settings(max_examples=200)
    @given(st.floats(-90, 90), st.floats(-180, 180), st.floats(-90, 90), st.floats(-180, 180))
    def test_matches_chord_oracle_and_symmetric(self, a, b, c, d):
        dist = haversine_km((a, b), (c, d))
        assert dist >= 0
        assert dist == pytest.approx(haversine_km((c, d), (a, b)), abs=1e-9)
        assert dist == pytest.approx(chord_distance_km((a, b), (c, d)), abs=1e-6)


class TestJitter:
    @pytest.mark.parametrize("urban,radius", [(True, 2.0), (False, 5.0)])
    def test_bound_10000_draws(self, urban, radius):
        rng = np.random.default_rng(0)
        rng_coords = np.random.default_rng(1)
        worst = 0.0
        for _ in range(10_000):
            c = (float(rng_coords.uniform(-80, 80)), float(rng_coords.uniform(-179, 179)))
            d = haversine_km(c, jitter(c, urban, rng))
            assert d <= radius + 1e-6
            worst = max(worst, d)
        # the disk is actually used, not a shrunken one
        assert worst > 0.95 * radius

    def test_uniform_on_disk(self):
        rng = np.random.default_rng(3)
        d = np.array([haversine_km((10, 10), jitter((10, 10), False, rng)) for _ in range(4000)])
        # uniform disk: P(r < R/2) = 1/4
        assert abs(np.mean(d < 2.5) - 0.25) < 0.03

    def test_deterministic(self):
        a = jitter((1.0, 2.0), True, np.random.default_rng(5))
        b = jitter((1.0, 2.0), True, np.random.default_rng(5))
        assert a == b


class TestPairing:
    def test_singleton(self):
        assert pair_nearest([rec("r")], [tile("t", 40, 40)], "night")["r"].id == "t"

    def test_closer_tile_wins(self):
        out = pair_nearest([rec("r")], [tile("far", 0, 2.0), tile("near", 0, 0.5)], "night")
        assert out["r"].id == "near"

    def test_tie_goes_to_lowest_id(self):
        out = pair_nearest([rec("r")], [tile("b", 0, 1.0), tile("a", 0, -1.0)], "night")
        assert out["r"].id == "a"

    def test_kind_filter_and_empty_catalog(self):
        tiles = [tile("d", 0, 0, "day"), tile("n", 5, 5)]
        assert pair_nearest([rec("r")], tiles, "night")["r"].id == "n"
        with pytest.raises(EmptyCatalogError):
            pair_nearest([rec("r")], [tile("n", 0, 0)], "day")

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10**6))
    def test_never_farther_than_any_other(self, seed):
        rng = np.random.default_rng(seed)
        tiles = [tile(f"t{i}", rng.uniform(-5, 5), rng.uniform(-5, 5)) for i in range(int(rng.integers(1, 12)))]
        records = [rec(f"r{i}", rng.uniform(-5, 5), rng.uniform(-5, 5)) for i in range(5)]
        out = pair_nearest(records, tiles, "night")
        for r in records:
            best = haversine_km((r.lat, r.lon), (out[r.id].lat, out[r.id].lon))
            assert all(best <= haversine_km((r.lat, r.lon), (t.lat, t.lon)) for t in tiles)


class TestNormalize:
    def test_examples(self):
        assert normalize_wealth([1, 2, 3]).tolist() == [-2.0, 0.0, 2.0]
        assert normalize_wealth([0, 0, 10]).tolist() == [0.0, 0.0, 2.0]

    def test_degenerate(self):
        with pytest.raises(DegenerateDistributionError):
            normalize_wealth([4, 4, 4])
        with pytest.raises(DegenerateDistributionError):
            normalize_wealth([1])

    @settings(max_examples=100)
    @given(
        st.lists(st.integers(-1000, 1000), min_size=2, max_size=40).filter(lambda v: len(set(v)) > 1),
        st.integers(1, 50), st.integers(-100, 100),
    )
    def test_properties(self, raw, a, b):
        x = np.asarray(raw, dtype=float)
        y = normalize_wealth(x)
        assert np.all(np.abs(y) <= 2) and np.max(np.abs(y)) == 2.0
        if len(x) % 2 == 1:
            assert y[np.argsort(x, kind="stable")[len(x) // 2]] == 0.0
        # order preserving
        order = np.argsort(x, kind="stable")
        assert np.all(np.diff(y[order]) >= 0)
        assert np.allclose(normalize_wealth(a * x + b), y, atol=1e-12)


class TestSplits:
    def test_ten_countries(self):
        assert split_counts(10) == (8, 1, 1)

    @pytest.mark.parametrize("c", range(3, 61))
    def test_counts(self, c):
        train, tune, test = split_counts(c)
        assert tune == test == max(1, math.floor(0.1 * c + 1e-9))
        assert train == c - tune - test

    def test_too_few(self):
        with pytest.raises(InvalidConfigError):
            split_counts(2)

    def test_assignment(self):
        records = [rec(f"r{i}", country=f"C{i % 12}") for i in range(60)]
        a = split_by_country(records, seed=9)
        assert sorted(a) == sorted({r.country for r in records})
        assert sorted(a.values()).count("tune") == 1 and list(a.values()).count("test") == 1
        assert a == split_by_country(records, seed=9)
        assert any(split_by_country(records, seed=s) != a for s in range(10, 20))


class TestCountryStats:
    def _rows(self, pairs):
        return [
            ManifestRow(f"e{i}", c, "Africa", 0, 0, False, w, w, "d", "n", "train")
            for i, (c, w) in enumerate(pairs)
        ]

    def test_examples(self):
        stats = country_stats(self._rows([("X", 1), ("X", 2), ("X", 3), ("Y", 5), ("Y", 5)]))
        x, y = stats
        assert (x.average, x.median, x.variance) == (2.0, 2.0, 1.0)
        assert (y.average, y.median, y.variance) == (5.0, 5.0, 0.0)

    def test_even_median_and_single(self):
        stats = {s.country: s for s in country_stats(self._rows([("E", 1), ("E", 2), ("E", 4), ("E", 10), ("S", 1.5)]))}
        assert stats["E"].median == 3.0
        assert stats["S"].variance is None

    def test_csv_schema(self):
        rows = self._rows([("Armenia", 1.2), ("Armenia", 1.3), ("Armenia", 1.1)])
        text = country_stats_csv(country_stats(rows))
        header, line = text.strip().splitlines()
        assert header == "country,average,median,variance"
        name, *nums = line.split(",")
        assert name == "Armenia" and len(nums) == 3 and all(float(v) == float(v) for v in nums)
