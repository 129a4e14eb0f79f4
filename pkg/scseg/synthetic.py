"""Synthetic screen-content images with known foreground masks."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from scseg.dct_basis import build_basis
from scseg.image_io import GrayImage
from scseg.segmenter import Mask

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SyntheticStyle:
    """Knobs for the generated images."""

    size: int = 128
    background_bases: int = 6
    mean_range: tuple[float, float] = (70.0, 185.0)
    amplitude_range: tuple[float, float] = (10.0, 40.0)
    offset_range: tuple[int, int] = (60, 100)
    stroke_length: tuple[int, int] = (5, 24)
    stroke_width: tuple[int, int] = (1, 2)
    density: float = 0.05


def smooth_background(rng: np.random.Generator, style: SyntheticStyle) -> np.ndarray:
    """Random combination of the lowest image-wide DCT bases."""
    size = style.size
    basis = build_basis(size, style.background_bases)
    weights = rng.standard_normal(style.background_bases - 1)
    variation = basis.columns[:, 1:] @ weights
    peak = np.abs(variation).max()
    if peak > 0:
        variation /= peak
    level = rng.uniform(*style.mean_range)
    amplitude = rng.uniform(*style.amplitude_range)
    return (level + amplitude * variation).reshape(size, size)


def draw_strokes(rng: np.random.Generator, style: SyntheticStyle) -> np.ndarray:
    """Horizontal and vertical bars until the requested density is reached."""
    size = style.size
    mask = np.zeros((size, size), dtype=bool)
    target = style.density * size * size
    while mask.sum() < target:
        length = int(rng.integers(style.stroke_length[0], style.stroke_length[1] + 1))
        width = int(rng.integers(style.stroke_width[0], style.stroke_width[1] + 1))
        if rng.random() < 0.5:
            height, span = width, length
        else:
            height, span = length, width
        top = int(rng.integers(0, size - height + 1))
        left = int(rng.integers(0, size - span + 1))
        mask[top:top + height, left:left + span] = True
    return mask


def make_screen_image(
    rng: np.random.Generator, style: SyntheticStyle | None = None
) -> tuple[GrayImage, Mask]:
    """Smooth background plus strokes that differ from it by at least 60."""
    style = style or SyntheticStyle()
    background = np.rint(smooth_background(rng, style))
    strokes = draw_strokes(rng, style)

    low, high = style.offset_range
    offsets = rng.integers(int(low), int(high) + 1, size=background.shape)
    # move away from the background towards whichever end has room
    direction = np.where(background < 128.0, 1.0, -1.0)
    pixels = np.where(strokes, background + direction * offsets, background)
    pixels = np.clip(pixels, 0.0, 255.0)
    logger.debug("Generated %dx%d image with %d stroke pixels", style.size, style.size, int(strokes.sum()))
    return GrayImage(data=pixels), Mask(bits=strokes)
