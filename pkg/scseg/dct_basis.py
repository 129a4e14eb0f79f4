"""Low-frequency 2D-DCT basis used as the smooth background model."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.fft

from scseg.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

DEFAULT_BLOCK_SIZE = 64
DEFAULT_BASES = 10


class FrequencyPair(NamedTuple):
    u: int
    v: int


@dataclass(frozen=True, eq=False)
class BasisMatrix:
    """N²×K matrix whose columns are vectorized orthonormal DCT-II bases.

    Pixel (x, y) of a block maps to row ``x * n + y`` (row-major), the same
    vectorization numpy uses for ``block.ravel()``.
    """

    n: int
    k: int
    columns: np.ndarray
    ordering: tuple[FrequencyPair, ...]


@dataclass(frozen=True, eq=False)
class ScaledBasis:
    """Basis with every column multiplied by 1/q."""

    n: int
    k: int
    q: float
    columns: np.ndarray
    ordering: tuple[FrequencyPair, ...]


def zigzag_order(k: int, n: int = DEFAULT_BLOCK_SIZE) -> list[FrequencyPair]:
    """Return the first ``k`` frequency pairs of an n×n block in zig-zag order.

    Antidiagonals d = u + v are visited in increasing order. Odd antidiagonals
    run with u ascending, even ones with u descending, which gives the JPEG
    scan (0,0), (0,1), (1,0), (2,0), (1,1), (0,2), ...
    """
    if n < 1:
        raise InvalidArgumentError(f"block size must be positive, got {n}")
    if not 1 <= k <= n * n:
        raise InvalidArgumentError(f"k must be in [1, {n * n}], got {k}")

    pairs: list[FrequencyPair] = []
    for d in range(2 * n - 1):
        lo = max(0, d - n + 1)
        hi = min(d, n - 1)
        us = range(lo, hi + 1) if d % 2 else range(hi, lo - 1, -1)
        for u in us:
            pairs.append(FrequencyPair(u, d - u))
            if len(pairs) == k:
                return pairs
    return pairs


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal 1D DCT-II matrix, entry [w, x] = β_w cos((2x+1)πw / 2n)."""
    return scipy.fft.dct(np.eye(n), type=2, norm="ortho", axis=0)


def build_basis(n: int, k: int) -> BasisMatrix:
    if n < 1:
        raise InvalidArgumentError(f"block size must be positive, got {n}")
    if not 1 <= k <= n * n:
        raise InvalidArgumentError(f"number of bases must be in [1, {n * n}], got {k}")

    ordering = tuple(zigzag_order(k, n))
    cos_table = dct_matrix(n)
    columns = np.empty((n * n, k))
    for j, (u, v) in enumerate(ordering):
        columns[:, j] = np.outer(cos_table[u], cos_table[v]).ravel()
    columns.flags.writeable = False

    logger.debug("Built %d DCT bases for %dx%d blocks", k, n, n)
    return BasisMatrix(n=n, k=k, columns=columns, ordering=ordering)


def scale_basis(basis: BasisMatrix, q: float) -> ScaledBasis:
    if not q > 0:
        raise InvalidArgumentError(f"q must be positive, got {q}")
    columns = basis.columns * (1.0 / q)
    columns.flags.writeable = False
    return ScaledBasis(n=basis.n, k=basis.k, q=q, columns=columns, ordering=basis.ordering)


def format_basis(basis: BasisMatrix | ScaledBasis) -> str:
    """Plain-text dump: one row per pixel index, 17 significant digits."""
    lines = [" ".join(f"{value:.17g}" for value in row) for row in basis.columns]
    return "\n".join(lines) + "\n"
