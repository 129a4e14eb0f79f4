"""Block-wise background/foreground segmentation.

Each N×N block goes through three checks, cheapest first:

1. flat blocks (a single intensity) are labelled from their neighbours,
2. blocks that K low-frequency DCT bases fit within eps3 are background,
3. everything else is split into smooth + sparse layers by the ADMM solver
   and each pixel is labelled by its distance to the smooth layer.
"""

from __future__ import annotations

import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import StrEnum
from typing import TYPE_CHECKING

import numpy as np

from scseg.dct_basis import DEFAULT_BASES, DEFAULT_BLOCK_SIZE, BasisMatrix, build_basis, scale_basis
from scseg.errors import InvalidArgumentError
from scseg.lasso_admm import (
    DEFAULT_ITERATIONS, DEFAULT_RHO, Decomposition, SolverState, StackedSystem,
    precompute_solver, solve_lasso,
)

if TYPE_CHECKING:
    from scseg.image_io import GrayImage

logger = logging.getLogger(__name__)


class LambdaKind(StrEnum):
    ABSOLUTE = "absolute"
    RELATIVE = "relative"
    CORRELATION = "correlation"


@dataclass(frozen=True)
class LambdaRule:
    """How the L1 weight λ is chosen for a block.

    ``relative`` scales ‖f‖∞, the identity block of Gᵀf; ``correlation``
    scales the whole ‖Gᵀf‖∞, whose basis block grows with N/q.
    """

    kind: LambdaKind = LambdaKind.RELATIVE
    value: float = 0.1

    @classmethod
    def absolute(cls, value: float) -> LambdaRule:
        return cls(LambdaKind.ABSOLUTE, value)

    def resolve(self, f: np.ndarray, system: StackedSystem) -> float:
        if self.kind is LambdaKind.ABSOLUTE:
            return self.value
        if self.kind is LambdaKind.RELATIVE:
            reference = float(np.abs(f).max(initial=0.0))
        else:
            reference = float(np.abs(system.rmatvec(f)).max(initial=0.0))
        # an all-zero block decomposes to zero for any positive weight
        return self.value * reference if reference > 0 else self.value


@dataclass(frozen=True)
class SegmenterConfig:
    n: int = DEFAULT_BLOCK_SIZE
    k: int = DEFAULT_BASES
    q: float = 0.01
    eps1: float = 10.0
    eps2: float = 10.0
    eps3: float = 3.0
    lambda_rule: LambdaRule = field(default_factory=LambdaRule)
    rho: float = DEFAULT_RHO
    iterations: int = DEFAULT_ITERATIONS
    workers: int = 1

    def validate(self) -> None:
        if self.n < 1:
            raise InvalidArgumentError(f"block size must be at least 1, got {self.n}")
        if not 1 <= self.k <= self.n * self.n:
            raise InvalidArgumentError(
                f"number of bases must be in [1, {self.n * self.n}] for block size {self.n}, got {self.k}"
            )
        if self.iterations < 1:
            raise InvalidArgumentError(f"iterations must be at least 1, got {self.iterations}")
        for name in ("eps1", "eps2", "eps3"):
            value = getattr(self, name)
            if not (value >= 0 and np.isfinite(value)):
                raise InvalidArgumentError(f"{name} must be a finite non-negative number, got {value}")
        if not (self.q > 0 and np.isfinite(self.q)):
            raise InvalidArgumentError(f"q must be positive, got {self.q}")
        if not (self.rho > 0 and np.isfinite(self.rho)):
            raise InvalidArgumentError(f"rho must be positive, got {self.rho}")
        if not (self.lambda_rule.value > 0 and np.isfinite(self.lambda_rule.value)):
            raise InvalidArgumentError(f"lambda must be positive, got {self.lambda_rule.value}")
        if self.workers < 0:
            raise InvalidArgumentError(f"workers must be non-negative, got {self.workers}")


class BlockPath(StrEnum):
    FLAT = "flat"
    LEAST_SQUARES = "ls"
    SPARSE = "sparse"


@dataclass(frozen=True, eq=False)
class Block:
    pixels: np.ndarray
    origin: tuple[int, int] = (0, 0)

    @property
    def n(self) -> int:
        return self.pixels.shape[0]

    @property
    def vector(self) -> np.ndarray:
        return self.pixels.ravel()


@dataclass(frozen=True, eq=False)
class BlockResult:
    """Outcome for one block. Flat blocks stay unresolved until pass two."""

    mask: np.ndarray
    path: BlockPath
    background_color: float | None
    smooth: np.ndarray | None = None
    sparse: np.ndarray | None = None
    flat_value: float | None = None
    resolved: bool = True


@dataclass(frozen=True, eq=False)
class Mask:
    """Per-pixel labels, True = foreground."""

    bits: np.ndarray

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Mask):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(np.array_equal(self.bits, other.bits))


def is_flat(block: Block) -> bool:
    return bool(np.ptp(block.pixels) == 0)


def least_squares_fit(block: Block, basis: BasisMatrix) -> tuple[np.ndarray, float]:
    if block.n != basis.n:
        raise InvalidArgumentError(f"block is {block.n}x{block.n}, basis expects {basis.n}x{basis.n}")
    f = block.vector
    # orthonormal columns: the normal equations reduce to a projection
    alpha = basis.columns.T @ f
    error = float(np.abs(f - basis.columns @ alpha).max())
    return alpha, error


def sparse_decompose(block: Block, state: SolverState, config: SegmenterConfig) -> Decomposition:
    f = block.vector
    lam = config.lambda_rule.resolve(f, state.system)
    return solve_lasso(f, state, lam, config.iterations)


def classify_pixels(block: Block, smooth: np.ndarray, eps1: float) -> np.ndarray:
    """Foreground wherever the smooth model misses by eps1 or more."""
    smooth = np.asarray(smooth, dtype=float).reshape(block.pixels.shape)
    return np.abs(block.pixels - smooth) >= eps1


def _flat_result(n: int, value: float) -> BlockResult:
    return BlockResult(
        mask=np.zeros((n, n), dtype=bool),
        path=BlockPath.FLAT,
        background_color=None,
        flat_value=value,
        resolved=False,
    )


def segment_block(
    block: Block, state: SolverState, basis: BasisMatrix, config: SegmenterConfig
) -> BlockResult:
    n = block.n
    if is_flat(block):
        return _flat_result(n, float(block.pixels[0, 0]))

    alpha, error = least_squares_fit(block, basis)
    if error < config.eps3:
        logger.debug("Block %s fits the smooth model (max error %.3g)", block.origin, error)
        return BlockResult(
            mask=np.zeros((n, n), dtype=bool),
            path=BlockPath.LEAST_SQUARES,
            background_color=float(block.pixels.mean()),
            smooth=(basis.columns @ alpha).reshape(n, n),
            sparse=np.zeros((n, n)),
        )

    decomp = sparse_decompose(block, state, config)
    mask = classify_pixels(block, decomp.smooth, config.eps1)
    background = block.pixels[~mask]
    logger.debug(
        "Block %s decomposed: %d foreground pixels, primal residual %.3g",
        block.origin, int(mask.sum()), decomp.primal_residual,
    )
    return BlockResult(
        mask=mask,
        path=BlockPath.SPARSE,
        background_color=float(background.mean()) if background.size else None,
        smooth=decomp.smooth.reshape(n, n),
        sparse=decomp.sparse.reshape(n, n),
    )


def _neighbours(row: int, col: int, rows: int, cols: int):
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            r, c = row + dr, col + dc
            if (dr or dc) and 0 <= r < rows and 0 <= c < cols:
                yield r, c


def resolve_flat_blocks(grid: list[list[BlockResult]], eps2: float) -> list[list[BlockResult]]:
    """Label flat blocks in raster order from their 8-neighbourhood.

    A flat block is background when a resolved neighbour has a background
    color within eps2 of its value, foreground when resolved neighbours exist
    but none qualifies, and background when no neighbour is resolved yet.
    Blocks resolved as background lend their value to later flat blocks.
    """
    grid = [list(row) for row in grid]
    rows = len(grid)
    cols = len(grid[0]) if rows else 0
    for r in range(rows):
        for c in range(cols):
            result = grid[r][c]
            if result.resolved:
                continue
            value = result.flat_value
            assert value is not None
            resolved = [
                grid[i][j] for i, j in _neighbours(r, c, rows, cols) if grid[i][j].resolved
            ]
            if any(
                nb.background_color is not None and abs(nb.background_color - value) < eps2
                for nb in resolved
            ):
                background = True
            elif resolved:
                background = False
            else:
                logger.warning("Flat block (%d, %d) has no resolved neighbour, using background", r, c)
                background = True
            grid[r][c] = replace(
                result,
                mask=np.full(result.mask.shape, not background),
                background_color=value if background else None,
                resolved=True,
            )
    return grid


@dataclass(frozen=True, eq=False)
class Segmentation:
    mask: Mask
    blocks: list[list[BlockResult]]
    n: int

    @property
    def counts(self) -> Counter[BlockPath]:
        return Counter(result.path for row in self.blocks for result in row)

    def layers(self) -> tuple[np.ndarray, np.ndarray]:
        """Smooth and absolute sparse layers, cropped to the mask size.

        Flat blocks contribute their constant value and a zero sparse part.
        """
        n = self.n
        rows, cols = len(self.blocks), len(self.blocks[0])
        smooth = np.zeros((rows * n, cols * n))
        sparse = np.zeros((rows * n, cols * n))
        for r, row in enumerate(self.blocks):
            for c, result in enumerate(row):
                window = np.s_[r * n:(r + 1) * n, c * n:(c + 1) * n]
                if result.smooth is None:
                    smooth[window] = result.flat_value
                else:
                    smooth[window] = result.smooth
                if result.sparse is not None:
                    sparse[window] = np.abs(result.sparse)
        h, w = self.mask.height, self.mask.width
        return np.clip(smooth[:h, :w], 0.0, 255.0), sparse[:h, :w]


class BlockSegmenter:
    """Segments whole images, sharing one basis and solver across blocks."""

    def __init__(self, config: SegmenterConfig | None = None) -> None:
        self._config = config or SegmenterConfig()
        self._config.validate()
        self._basis = build_basis(self._config.n, self._config.k)
        self._state = precompute_solver(scale_basis(self._basis, self._config.q), self._config.rho)

    @property
    def config(self) -> SegmenterConfig:
        return self._config

    @property
    def basis(self) -> BasisMatrix:
        return self._basis

    @property
    def state(self) -> SolverState:
        return self._state

    def segment_block(self, block: Block) -> BlockResult:
        return segment_block(block, self._state, self._basis, self._config)

    def segment(self, image: GrayImage) -> Segmentation:
        data = np.asarray(image.data, dtype=float)
        if data.ndim != 2 or data.size == 0:
            raise InvalidArgumentError(f"image must be a non-empty 2D array, got shape {data.shape}")

        n = self._config.n
        height, width = data.shape
        rows, cols = -(-height // n), -(-width // n)
        padded = np.pad(data, ((0, rows * n - height), (0, cols * n - width)), mode="edge")
        tiles = padded.reshape(rows, n, cols, n).swapaxes(1, 2)

        # pass 1: flat blocks are cheap to spot for the whole grid at once
        flat = tiles.max(axis=(2, 3)) == tiles.min(axis=(2, 3))
        grid: list[list[BlockResult | None]] = [[None] * cols for _ in range(rows)]
        pending: list[Block] = []
        for r in range(rows):
            for c in range(cols):
                if flat[r, c]:
                    grid[r][c] = _flat_result(n, float(tiles[r, c, 0, 0]))
                else:
                    pending.append(Block(pixels=tiles[r, c], origin=(r, c)))

        for block, result in zip(pending, self._map(pending)):
            r, c = block.origin
            grid[r][c] = result

        # pass 2
        blocks = resolve_flat_blocks(grid, self._config.eps2)  # type: ignore[arg-type]

        bits = np.zeros((rows * n, cols * n), dtype=bool)
        for r, row in enumerate(blocks):
            for c, result in enumerate(row):
                bits[r * n:(r + 1) * n, c * n:(c + 1) * n] = result.mask
        segmentation = Segmentation(mask=Mask(bits[:height, :width]), blocks=blocks, n=n)
        logger.info(
            "Segmented %dx%d image into %d blocks: %s",
            width, height, rows * cols,
            ", ".join(f"{path}={count}" for path, count in segmentation.counts.items()),
        )
        return segmentation

    def _map(self, blocks: list[Block]) -> list[BlockResult]:
        workers = self._config.workers
        if workers == 1 or len(blocks) < 2:
            return [self.segment_block(block) for block in blocks]
        with ThreadPoolExecutor(max_workers=workers or None) as pool:
            return list(pool.map(self.segment_block, blocks))


def segment_image(image: GrayImage, config: SegmenterConfig | None = None) -> Mask:
    return BlockSegmenter(config).segment(image).mask
