"""Image tiles: binary PGM/PPM IO, area-average downsampling, flattening.

Geo metadata rides along in a header comment line of the form
``# povsat id=<id> lat=<lat> lon=<lon>`` so that a tile file is
self-describing. Readers that ignore comments still see a valid raster.
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    InvalidConfigError,
    ShapeError,
    TileFormatError,
    TileKindError,
    TileMagicError,
    TileMaxvalError,
    TileTruncatedError,
)

KINDS = ("day", "night")
CHANNELS = {"night": 1, "day": 3}
_MAGIC = {"night": b"P5", "day": b"P6"}
_KIND_FOR_MAGIC = {b"P5": "night", b"P6": "day"}


@dataclass(frozen=True, eq=False)
class ImageTile:
    """A night (1-channel) or day (3-channel) raster with its location.

    ``pixels`` is a uint8 array of shape (height, width, channels).
    """

    id: str
    kind: str
    pixels: np.ndarray
    lat: float = 0.0
    lon: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidConfigError(f"tile kind must be one of {KINDS}, got {self.kind!r}")
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] != CHANNELS[self.kind]:
            raise ShapeError(f"{self.kind} tile needs {CHANNELS[self.kind]} channel(s), got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ShapeError("tile must have at least one pixel")
        if px.dtype != np.uint8:
            if np.any(px < 0) or np.any(px > 255) or np.any(px != np.round(px)):
                raise ShapeError("pixel intensities must be integers in [0, 255]")
            px = px.astype(np.uint8)
        if not (-90.0 <= self.lat <= 90.0 and -180.0 <= self.lon <= 180.0):
            raise InvalidConfigError(f"coordinate out of range: ({self.lat}, {self.lon})")
        if any(ch.isspace() for ch in self.id):
            raise InvalidConfigError(f"tile id may not contain whitespace: {self.id!r}")
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def with_pixels(self, pixels: np.ndarray) -> "ImageTile":
        return ImageTile(self.id, self.kind, pixels, self.lat, self.lon)

    def same_as(self, other: "ImageTile") -> bool:
        return (
            self.id == other.id
            and self.kind == other.kind
            and self.lat == other.lat
            and self.lon == other.lon
            and self.pixels.shape == other.pixels.shape
            and bool(np.array_equal(self.pixels, other.pixels))
        )


def encode_tile(tile: ImageTile) -> bytes:
    header = (
        _MAGIC[tile.kind]
        + f"\n# povsat id={tile.id} lat={tile.lat!r} lon={tile.lon!r}\n"
        f"{tile.width} {tile.height}\n255\n".encode("ascii")
    )
    return header + tile.pixels.tobytes()


def write_tile(tile: ImageTile, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_tile(tile))
    os.replace(tmp, path)


_META_RE = re.compile(r"povsat id=(\S*) lat=(\S+) lon=(\S+)")


def decode_tile(data: bytes, kind: str | None = None, default_id: str = "") -> ImageTile:
    """Parse a binary PGM (P5) or PPM (P6) raster with maxval 255."""
    magic = data[:2]
    if magic not in _KIND_FOR_MAGIC:
        raise TileMagicError(f"unsupported magic {magic!r}; expected P5 or P6")
    file_kind = _KIND_FOR_MAGIC[magic]
    if kind is not None and kind != file_kind:
        raise TileKindError(f"file holds a {file_kind} raster ({magic.decode()}) but a {kind} tile was requested")

    pos = 2
    tokens: list[int] = []
    meta = None
    n = len(data)
    while len(tokens) < 3:
        if pos >= n:
            raise TileTruncatedError("header ended early")
        ch = data[pos:pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            end = data.find(b"\n", pos)
            if end < 0:
                raise TileTruncatedError("unterminated header comment")
            m = _META_RE.search(data[pos + 1:end].decode("ascii", "replace"))
            if m:
                meta = m
            pos = end + 1
        else:
            start = pos
            while pos < n and data[pos:pos + 1].isdigit():
                pos += 1
            if pos == start:
                raise TileFormatError(f"unexpected header byte {ch!r}")
            tokens.append(int(data[start:pos]))
    # exactly one whitespace byte separates maxval from the raster
    if pos >= n or not data[pos:pos + 1].isspace():
        raise TileTruncatedError("missing raster after header")
    pos += 1
    width, height, maxval = tokens
    if maxval != 255:
        raise TileMaxvalError(f"maxval must be 255, got {maxval}")
    if width < 1 or height < 1:
        raise TileFormatError(f"bad dimensions {width}x{height}")
    channels = 1 if file_kind == "night" else 3
    expected = width * height * channels
    raster = data[pos:]
    if len(raster) < expected:
        raise TileTruncatedError(f"raster has {len(raster)} bytes, expected {expected}")
    pixels = np.frombuffer(raster[:expected], dtype=np.uint8).reshape(height, width, channels)

    tile_id, lat, lon = default_id, 0.0, 0.0
    if meta is not None:
        tile_id, lat, lon = meta.group(1), float(meta.group(2)), float(meta.group(3))
    return ImageTile(tile_id, file_kind, pixels.copy(), lat, lon)


def read_tile(path, kind: str | None = None) -> ImageTile:
    path = Path(path)
    return decode_tile(path.read_bytes(), kind, default_id=path.stem)


def _area_weights(src: int, dst: int) -> np.ndarray:
    """(dst, src) matrix averaging each output cell's fractional footprint."""
    scale = src / dst
    w = np.zeros((dst, src))
    for i in range(dst):
        lo, hi = i * scale, (i + 1) * scale
        for j in range(int(math.floor(lo)), min(src, int(math.ceil(hi)))):
            w[i, j] = min(hi, j + 1) - max(lo, j)
    return w / scale


def downsample(tile: ImageTile, target: int) -> ImageTile:
    """Area-average resample to ``target`` x ``target``, rounding half up."""
    if target < 1 or target > min(tile.width, tile.height):
        raise InvalidConfigError(
            f"target {target} must be in [1, {min(tile.width, tile.height)}] for a "
            f"{tile.width}x{tile.height} tile"
        )
    if tile.width == tile.height == target:
        return tile
    rows = _area_weights(tile.height, target)
    cols = _area_weights(tile.width, target)
    src = tile.pixels.astype(np.float64)
    out = np.tensordot(rows, src, axes=(1, 0))  # (target, w, c)
    out = np.tensordot(out, cols, axes=(1, 1)).transpose(0, 2, 1)
    # tolerance keeps exact .5 averages from rounding down on float error
    out = np.floor(out + 0.5 + 1e-9)
    out = np.clip(out, src.min(), src.max())
    return tile.with_pixels(out.astype(np.uint8))


def flatten(tile: ImageTile) -> np.ndarray:
    """Row-major, channel-interleaved feature vector scaled to [0, 1]."""
    return tile.pixels.reshape(-1).astype(np.float64) / 255.0
