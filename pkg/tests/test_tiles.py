import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from povsat.errors import (
    InvalidConfigError,
    ShapeError,
    TileKindError,
    TileMagicError,
    TileMaxvalError,
    TileTruncatedError,
)
from povsat.tiles import ImageTile, decode_tile, downsample, encode_tile, flatten, read_tile, write_tile


def night(px, **kw):
    return ImageTile("t", "night", np.asarray(px, dtype=np.uint8), **kw)


def test_round_trip_2x2_night(tmp_path):
    t = ImageTile("n1", "night", np.array([[0, 17], [200, 255]], np.uint8), lat=12.5, lon=-3.25)
    write_tile(t, tmp_path / "a.pgm")
    back = read_tile(tmp_path / "a.pgm")
    assert back.same_as(t)
    assert (back.id, back.lat, back.lon) == ("n1", 12.5, -3.25)


def test_files_are_plain_netpbm(tmp_path):
    t = ImageTile("d", "day", np.zeros((2, 3, 3), np.uint8))
    data = encode_tile(t)
    assert data.startswith(b"P6")
    assert data.endswith(bytes(18))


def test_p6_as_night_is_kind_error():
    data = encode_tile(ImageTile("d", "day", np.zeros((2, 2, 3), np.uint8)))
    with pytest.raises(TileKindError):
        decode_tile(data, kind="night")


def test_truncated_payload():
    with pytest.raises(TileTruncatedError):
        decode_tile(b"P5 2 2 255\n" + bytes(3))


def test_bad_magic():
    with pytest.raises(TileMagicError):
        decode_tile(b"P2 2 2 255\n" + bytes(4))


def test_bad_maxval():
    with pytest.raises(TileMaxvalError):
        decode_tile(b"P5 2 2 65535\n" + bytes(8))


def test_header_without_comment_gets_defaults():
    t = decode_tile(b"P5\n1 2\n255\n\x05\x06", default_id="x")
    assert t.id == "x"
    assert t.pixels[:, 0, 0].tolist() == [5, 6]


def test_tile_validation():
    with pytest.raises(ShapeError):
        ImageTile("x", "night", np.zeros((2, 2, 3), np.uint8))
    with pytest.raises(InvalidConfigError):
        night([[1]], lat=91.0)
    with pytest.raises(ShapeError):
        ImageTile("x", "night", np.array([[300]]))


class TestDownsample:
    def test_constant(self):
        t = night(np.full((300, 300), 87))
        out = downsample(t, 256)
        assert out.width == out.height == 256 and np.all(out.pixels == 87)

    def test_four_pixel_mean(self):
        assert downsample(night([[0, 100], [100, 200]]), 1).pixels.item() == 100

    def test_reference_dims(self):
        t = ImageTile("d", "day", np.random.default_rng(0).integers(0, 256, (890, 890, 3), dtype=np.uint8))
        out = downsample(t, 256)
        assert out.pixels.shape == (256, 256, 3)

    def test_fractional_footprint_oracle(self):
        # 3 -> 2: each output pixel covers 1.5 source pixels per axis
        src = np.arange(9, dtype=float).reshape(3, 3) * 10
        w = np.array([[1, 0.5, 0], [0, 0.5, 1]]) / 1.5
        want = np.floor(w @ src @ w.T + 0.5)
        got = downsample(night(src.astype(np.uint8)), 2).pixels[:, :, 0]
        assert np.array_equal(got, want)

    def test_round_half_up(self):
        assert downsample(night([[0, 1]]).with_pixels(np.array([[[0], [1]], [[0], [1]]], np.uint8)), 1).pixels.item() == 1

    def test_target_too_large(self):
        with pytest.raises(InvalidConfigError):
            downsample(night(np.zeros((4, 4))), 5)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12))), st.data())
    def test_range_and_idempotence(self, px, data):
        t = night(px)
        target = data.draw(st.integers(1, min(px.shape)))
        out = downsample(t, target)
        assert out.pixels.min() >= px.min() and out.pixels.max() <= px.max()
        side = min(px.shape)
        square = night(px[:side, :side])
        assert downsample(square, side).same_as(square)


class TestFlatten:
    def test_endpoint(self):
        assert flatten(night([[255]])).tolist() == [1.0]

    def test_fifth(self):
        assert flatten(night([[0, 51]])).tolist() == [0.0, 0.2]

    def test_day_length_and_interleave(self):
        t = ImageTile("d", "day", np.zeros((256, 256, 3), np.uint8))
        assert flatten(t).shape == (196608,)
        small = ImageTile("d", "day", np.array([[[255, 0, 51], [0, 255, 0]]], np.uint8))
        assert flatten(small).tolist() == [1.0, 0.0, 0.2, 0.0, 1.0, 0.0]

    @settings(max_examples=30)
    @given(arrays(np.uint8, st.tuples(st.integers(1, 6), st.integers(1, 6), st.just(3))))
    def test_length_and_range(self, px):
        v = flatten(ImageTile("d", "day", px))
        assert v.size == px.size and 0 <= v.min() <= v.max() <= 1


tile_strategy = st.builds(
    lambda kind, h, w, seed, lat, lon: ImageTile(
        f"t{seed}", kind,
        np.random.default_rng(seed).integers(0, 256, (h, w, 1 if kind == "night" else 3), dtype=np.uint8),
        lat, lon),
    st.sampled_from(["day", "night"]), st.integers(1, 9), st.integers(1, 9), st.integers(0, 10**6),
    st.floats(-90, 90), st.floats(-180, 180),
)


@settings(max_examples=100)
@given(tile_strategy)
def test_io_round_trip_property(tile):
    back = decode_tile(encode_tile(tile), kind=tile.kind)
    assert back.same_as(tile)
    assert (back.id, back.lat, back.lon) == (tile.id, tile.lat, tile.lon)
    assert encode_tile(back) == encode_tile(tile)
