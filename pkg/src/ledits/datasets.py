"""Procedural training data: labeled mixture points and 16x16 shape images.

The image domain is axis-aligned rectangles (style 0) and discs (style 1)
on a dark background, intensities in [0, 1]. Models see images mapped to
[-1, 1] and flattened to 256-vectors; condition id = style + 1 (id 0 stays
unconditional).
"""

from __future__ import annotations

import numpy as np

from .predictors import GaussianMixture

IMAGE_SIZE = 16
IMAGE_DIM = IMAGE_SIZE * IMAGE_SIZE

STYLE_RECT = 0
STYLE_DISC = 1
N_IMAGE_STYLES = 2


def to_model_space(images: np.ndarray) -> np.ndarray:
    """[0, 1] images (..., 16, 16) -> flattened [-1, 1] vectors (..., 256)."""
    images = np.asarray(images, dtype=float)
    return (2.0 * images - 1.0).reshape(images.shape[:-2] + (IMAGE_DIM,))

def from_model_space(x: np.ndarray) -> np.ndarray:
    """Inverse of :func:`to_model_space`; output is not clamped."""
    x = np.asarray(x, dtype=float)
    return ((x + 1.0) / 2.0).reshape(x.shape[:-1] + (IMAGE_SIZE, IMAGE_SIZE))


def sample_shape_images(rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw n images; returns (images (n, 16, 16) in [0, 1], styles (n,))."""
    styles = rng.integers(0, N_IMAGE_STYLES, size=n)
    images = np.empty((n, IMAGE_SIZE, IMAGE_SIZE))
    yy, xx = np.mgrid[0:IMAGE_SIZE, 0:IMAGE_SIZE]
    for i in range(n):
        background = rng.uniform(0.0, 0.2)
        foreground = rng.uniform(0.7, 1.0)
        img = np.full((IMAGE_SIZE, IMAGE_SIZE), background)
        if styles[i] == STYLE_RECT:
            w = rng.integers(4, 9)
            h = rng.integers(4, 9)
            x0 = rng.integers(1, IMAGE_SIZE - w)
            y0 = rng.integers(1, IMAGE_SIZE - h)
            img[y0 : y0 + h, x0 : x0 + w] = foreground
        else:
            cx = rng.uniform(5.0, 11.0)
            cy = rng.uniform(5.0, 11.0)
            r = rng.uniform(2.5, 5.0)
            img[(xx - cx) ** 2 + (yy - cy) ** 2 <= r * r] = foreground
        images[i] = img
    return images, styles


def make_gmm_sampler(gmm: GaussianMixture):
    """Batch sampler for mixture data; condition id = component + 1."""

    def sampler(rng: np.random.Generator, n: int):
        x, labels = gmm.sample(rng, n)
        return x, labels + 1

    return sampler


def make_shapes_sampler():
    """Batch sampler for the image domain, in model space."""

    def sampler(rng: np.random.Generator, n: int):
        images, styles = sample_shape_images(rng, n)
        return to_model_space(images), styles + 1

    return sampler
