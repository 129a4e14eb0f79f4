from math import nan
from typing import Sequence

import numpy as np


def mean(values: Sequence[float]) -> float:
    if not values:
        return nan
    return sum(values) / len(values)


def to_uint8(values: np.ndarray) -> np.ndarray:
    """Round and clamp luminance values to 8-bit pixels."""
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)
