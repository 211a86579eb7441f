"""Train-time tile augmentations: flip, quarter rotation, Gaussian pixel noise."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError, ShapeError
from .tiles import ImageTile


@dataclass(frozen=True)
class AugmentationConfig:
    enable_flip: bool = True
    enable_rot90: bool = True
    enable_noise: bool = True
    noise_sigma: float = 2.5
    apply_probability: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not self.noise_sigma >= 0:
            raise InvalidConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not 0.0 <= self.apply_probability <= 1.0:
            raise InvalidConfigError(f"apply_probability must lie in [0, 1], got {self.apply_probability}")


def flip180_mirror(tile: ImageTile) -> ImageTile:
    """Rotate by 180 degrees, then mirror left-right; net effect is an up-down flip."""
    return tile.with_pixels(tile.pixels[::-1, :, :])


def rotate90ccw(tile: ImageTile) -> ImageTile:
    if tile.width != tile.height:
        raise ShapeError(f"rotation needs a square tile, got {tile.width}x{tile.height}")
    return tile.with_pixels(np.rot90(tile.pixels, k=1, axes=(0, 1)))


def gaussian_noise(tile: ImageTile, sigma: float, rng: np.random.Generator) -> ImageTile:
    """Add i.i.d. N(0, sigma^2) to every pixel, then round and clamp to [0, 255]."""
    if not sigma >= 0:
        raise InvalidConfigError(f"sigma must be >= 0, got {sigma}")
    noisy = tile.pixels.astype(np.float64) + rng.normal(0.0, sigma, size=tile.pixels.shape)
    return tile.with_pixels(np.clip(np.rint(noisy), 0, 255).astype(np.uint8))


def augment(tile: ImageTile, config: AugmentationConfig, rng: np.random.Generator) -> ImageTile:
    """Apply each enabled transform with ``config.apply_probability``.

    Order is flip, then rotate, then noise, with one independent coin per
    enabled transform.
    """
    p = config.apply_probability
    out = tile
    if config.enable_flip and rng.random() < p:
        out = flip180_mirror(out)
    if config.enable_rot90 and rng.random() < p:
        out = rotate90ccw(out)
    if config.enable_noise and rng.random() < p:
        out = gaussian_noise(out, config.noise_sigma, rng)
    return out
