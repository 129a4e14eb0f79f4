"""Reading luminance images and reading/writing binary masks."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from scseg.errors import ImageFormatError, ImageWriteError
from scseg.segmenter import Mask
from scseg.utils import to_uint8

logger = logging.getLogger(__name__)

# ITU-R BT.601 luma weights
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

SUPPORTED_FORMATS = {"PPM", "PNG"}
MASK_THRESHOLD = 127


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Row-major luminance values in [0, 255]."""

    data: np.ndarray

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


def _open(path: str | Path) -> Image.Image:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"No such image file: {path}")
    try:
        image = Image.open(path)
        image.load()
    except UnidentifiedImageError as e:
        raise ImageFormatError(f"{path}: not a recognised image") from e
    except (OSError, SyntaxError, ValueError) as e:
        raise ImageFormatError(f"{path}: cannot decode image") from e
    if image.format not in SUPPORTED_FORMATS:
        raise ImageFormatError(f"{path}: unsupported format {image.format}, expected PGM or PNG")
    return image


def load_image(path: str | Path) -> GrayImage:
    image = _open(path)
    if image.mode == "L":
        data = np.asarray(image, dtype=float)
    elif image.mode == "RGB":
        data = np.asarray(image, dtype=float) @ LUMA_WEIGHTS
    else:
        raise ImageFormatError(f"{path}: unsupported pixel mode {image.mode}, expected 8-bit gray or RGB")
    logger.debug("Loaded %s (%s, %dx%d)", path, image.mode, image.width, image.height)
    return GrayImage(data=data)


def load_mask(path: str | Path) -> Mask:
    """Gray levels above 127 are foreground."""
    image = _open(path)
    if image.mode == "1":
        image = image.convert("L")
    if image.mode != "L":
        raise ImageFormatError(f"{path}: masks must be grayscale, got mode {image.mode}")
    return Mask(bits=np.asarray(image) > MASK_THRESHOLD)


def _save(path: str | Path, pixels: np.ndarray, fmt: str | None = None) -> None:
    path = Path(path)
    # Pillow names the netpbm writer "PPM"; 8-bit gray gives a binary P5 file
    if fmt is None and path.suffix.lower() in {".pgm", ".pnm", ".ppm"}:
        fmt = "PPM"
    try:
        Image.fromarray(pixels).save(path, format=fmt)
    except (OSError, ValueError, KeyError) as e:
        raise ImageWriteError(f"Cannot write {path}: {e}") from e


def save_mask(path: str | Path, mask: Mask) -> None:
    """Binary PGM (P5, maxval 255): foreground 255, background 0."""
    _save(path, np.where(mask.bits, 255, 0).astype(np.uint8), fmt="PPM")


def save_gray(path: str | Path, values: np.ndarray) -> None:
    """Write luminance values, clamped to 8 bits; format follows the suffix."""
    _save(path, to_uint8(values))
