import numpy as np
import pytest

from p2codec.image import ImageBuffer


def random_image(rng: np.random.Generator, width: int, height: int, channels: int) -> ImageBuffer:
    return ImageBuffer.from_array(
        rng.integers(0, 256, size=(height, width, channels), dtype=np.uint8)
    )


def natural_crop(rng: np.random.Generator, size: int = 32, channels: int = 3) -> ImageBuffer:
    """Piecewise-smooth synthetic crop with the plateau/run structure of
    photographic 8-bit content: coarse smooth fields, flat regions, mild
    channel-correlated color, sparse noise."""
    coarse = rng.normal(0.0, 1.0, size=(5, 5))
    y = np.linspace(0, 4, size)
    xi = np.clip(y.astype(int), 0, 3)
    fx = y - xi
    up = (
        coarse[np.ix_(xi, xi)] * np.outer(1 - fx, 1 - fx)
        + coarse[np.ix_(xi + 1, xi)] * np.outer(fx, 1 - fx)
        + coarse[np.ix_(xi, xi + 1)] * np.outer(1 - fx, fx)
        + coarse[np.ix_(xi + 1, xi + 1)] * np.outer(fx, fx)
    )
    base = 120 + 60 * up
    # Flat regions: quantize a second smooth field into a few levels.
    region = np.floor((up - up.min()) / (np.ptp(up) + 1e-9) * 4)
    plateau = 40 + region * 45
    mix = np.where(rng.random(size=(size, size)) < 0.7, plateau, base)
    img = np.empty((size, size, channels))
    offsets = rng.integers(-12, 13, size=channels)
    for c in range(channels):
        img[:, :, c] = mix + int(offsets[c])
    noise_mask = rng.random(size=(size, size, channels)) < 0.02
    img = img + noise_mask * rng.integers(-4, 5, size=img.shape)
    return ImageBuffer.from_array(np.clip(img, 0, 255).astype(np.uint8))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0xC0DEC)
