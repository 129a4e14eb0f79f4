import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scseg.errors import InvalidArgumentError
from scseg.image_io import GrayImage
from scseg.lasso_admm import precompute_solver
from scseg.segmenter import (
    Block, BlockPath, BlockResult, BlockSegmenter, LambdaKind, LambdaRule, SegmenterConfig,
    classify_pixels, is_flat, least_squares_fit, resolve_flat_blocks, segment_block, segment_image,
    sparse_decompose,
)
from tests.conftest import smooth_block

CONFIG = SegmenterConfig()


def gradient_with_strokes(basis) -> tuple[Block, np.ndarray]:
    block = smooth_block(basis, [64 * 110.0, 600.0, -500.0])
    strokes = np.zeros((64, 64), dtype=bool)
    strokes[20, 30:35] = True
    pixels = block.pixels + np.where(strokes, 80.0, 0.0)
    return Block(pixels=pixels), strokes


def test_constant_block_is_flat() -> None:
    assert is_flat(Block(pixels=np.full((64, 64), 128.0)))
    assert is_flat(Block(pixels=np.zeros((8, 8))))


def test_single_different_pixel_is_not_flat() -> None:
    pixels = np.full((64, 64), 128.0)
    pixels[10, 10] = 129.0
    assert not is_flat(Block(pixels=pixels))


def test_least_squares_recovers_basis_column(basis64) -> None:
    block = Block(pixels=(50 * basis64.columns[:, 2]).reshape(64, 64))
    alpha, error = least_squares_fit(block, basis64)
    expected = np.zeros(10)
    expected[2] = 50.0
    np.testing.assert_allclose(alpha, expected, atol=1e-9)
    assert error < 1e-9


def test_least_squares_constant_block(basis64) -> None:
    alpha, error = least_squares_fit(Block(pixels=np.full((64, 64), 37.0)), basis64)
    assert alpha[0] == pytest.approx(64 * 37.0)
    np.testing.assert_allclose(alpha[1:], 0.0, atol=1e-9)
    assert error < 1e-9


def test_least_squares_impulse_leaves_large_error(basis64) -> None:
    ramp = np.add.outer(np.zeros(64), 0.25 * np.arange(64)) + 60.0
    ramp[40, 17] += 40.0
    _, error = least_squares_fit(Block(pixels=ramp), basis64)
    assert error >= 30.0


def test_least_squares_rejects_wrong_size(basis64) -> None:
    with pytest.raises(InvalidArgumentError):
        least_squares_fit(Block(pixels=np.zeros((8, 8))), basis64)


def test_classify_exact_model_is_background() -> None:
    block = Block(pixels=np.arange(16.0).reshape(4, 4))
    assert not classify_pixels(block, block.vector, 10.0).any()


def test_classify_threshold_is_foreground() -> None:
    block = Block(pixels=np.arange(16.0).reshape(4, 4))
    assert classify_pixels(block, block.vector + 10.0, 10.0).all()


def test_classify_single_outlier() -> None:
    block = Block(pixels=np.arange(16.0).reshape(4, 4))
    smooth = block.vector.copy()
    smooth[5] += 20.0
    mask = classify_pixels(block, smooth, 10.0)
    assert mask.sum() == 1
    assert mask[1, 1]


@given(st.floats(0, 50), st.floats(0, 50))
def test_classify_monotone_in_threshold(a: float, b: float) -> None:
    low, high = sorted((a, b))
    rng = np.random.default_rng(7)
    block = Block(pixels=rng.uniform(0, 255, size=(8, 8)))
    smooth = block.vector + rng.normal(0, 20, size=64)
    assert np.all(classify_pixels(block, smooth, high) <= classify_pixels(block, smooth, low))


@given(st.permutations(range(64)))
def test_classify_is_pointwise(order: list[int]) -> None:
    rng = np.random.default_rng(11)
    pixels = rng.integers(0, 4, size=64) * 60.0
    smooth = pixels + rng.choice([0.0, 5.0, 25.0], size=64)
    index = np.array(order)
    mask = classify_pixels(Block(pixels=pixels.reshape(8, 8)), smooth, 10.0).ravel()
    shuffled = classify_pixels(Block(pixels=pixels[index].reshape(8, 8)), smooth[index], 10.0).ravel()
    np.testing.assert_array_equal(shuffled, mask[index])


def test_sparse_decompose_zero_block(scaled64) -> None:
    state = precompute_solver(scaled64)
    decomp = sparse_decompose(Block(pixels=np.zeros((64, 64))), state, CONFIG)
    assert not decomp.alpha.any()
    assert not decomp.sparse.any()


def test_sparse_decompose_constant_block(scaled64) -> None:
    state = precompute_solver(scaled64)
    block = Block(pixels=np.full((64, 64), 128.0))
    decomp = sparse_decompose(block, state, CONFIG)
    assert not decomp.sparse.any()
    assert not classify_pixels(block, decomp.smooth, CONFIG.eps1).any()


def test_sparse_decompose_finds_strokes(basis64, scaled64) -> None:
    state = precompute_solver(scaled64)
    block, strokes = gradient_with_strokes(basis64)
    decomp = sparse_decompose(block, state, CONFIG)
    sparse = decomp.sparse.reshape(64, 64)
    assert np.all(np.abs(sparse[strokes]) > CONFIG.eps1)
    assert not sparse[~strokes].any()
    assert np.array_equal(classify_pixels(block, decomp.smooth, CONFIG.eps1), strokes)


def test_correlation_lambda_uses_basis_block(scaled64) -> None:
    state = precompute_solver(scaled64)
    f = np.full(4096, 100.0)
    relative = LambdaRule().resolve(f, state.system)
    correlation = LambdaRule(LambdaKind.CORRELATION, 0.1).resolve(f, state.system)
    assert relative == pytest.approx(10.0)
    assert correlation == pytest.approx(0.1 * 100 * 64 * 100.0)
    assert LambdaRule.absolute(3.5).resolve(f, state.system) == 3.5


def test_segment_block_paths(basis64, scaled64) -> None:
    state = precompute_solver(scaled64)

    flat = segment_block(Block(pixels=np.full((64, 64), 9.0)), state, basis64, CONFIG)
    assert flat.path is BlockPath.FLAT
    assert not flat.resolved

    smooth = segment_block(smooth_block(basis64, [64 * 90.0, 120.0, 40.0, -60.0]), state, basis64, CONFIG)
    assert smooth.path is BlockPath.LEAST_SQUARES
    assert not smooth.mask.any()
    assert smooth.background_color == pytest.approx(90.0)

    block, strokes = gradient_with_strokes(basis64)
    sparse = segment_block(block, state, basis64, CONFIG)
    assert sparse.path is BlockPath.SPARSE
    assert np.array_equal(sparse.mask, strokes)
    assert sparse.background_color == pytest.approx(block.pixels[~strokes].mean())


def test_least_squares_path_is_sound(basis64, scaled64, rng) -> None:
    state = precompute_solver(scaled64)
    for _ in range(10):
        coefficients = rng.uniform(-200, 200, size=10)
        coefficients[0] = 64 * 128.0
        block = smooth_block(basis64, coefficients)
        block = Block(pixels=block.pixels + rng.uniform(-1, 1, size=(64, 64)))
        result = segment_block(block, state, basis64, CONFIG)
        if result.path is BlockPath.LEAST_SQUARES:
            assert least_squares_fit(block, basis64)[1] < CONFIG.eps3


def _resolved(n: int, color: float | None, foreground: bool = False) -> BlockResult:
    return BlockResult(mask=np.full((n, n), foreground), path=BlockPath.SPARSE, background_color=color)


def _flat(n: int, value: float) -> BlockResult:
    return BlockResult(
        mask=np.zeros((n, n), dtype=bool), path=BlockPath.FLAT, background_color=None,
        flat_value=value, resolved=False,
    )


def test_flat_block_near_neighbour_color_is_background() -> None:
    grid = resolve_flat_blocks([[_resolved(2, 195.0), _flat(2, 200.0)]], eps2=10.0)
    assert not grid[0][1].mask.any()
    assert grid[0][1].background_color == 200.0


def test_flat_block_among_foreground_is_foreground() -> None:
    grid = [[_resolved(2, None, True)] * 3, [_resolved(2, None, True), _flat(2, 50.0), _resolved(2, None, True)]]
    resolved = resolve_flat_blocks(grid, eps2=10.0)
    assert resolved[1][1].mask.all()
    assert resolved[1][1].background_color is None


def test_flat_blocks_seed_each_other_in_raster_order() -> None:
    grid = resolve_flat_blocks([[_resolved(2, 198.0), _flat(2, 200.0), _flat(2, 204.0)]], eps2=10.0)
    assert not grid[0][1].mask.any()
    assert not grid[0][2].mask.any()


def test_flat_block_far_from_neighbour_color_is_foreground() -> None:
    grid = resolve_flat_blocks([[_resolved(2, 100.0), _flat(2, 110.0)]], eps2=10.0)
    assert grid[0][1].mask.all()


def test_resolution_does_not_mutate_input() -> None:
    grid = [[_resolved(2, 195.0), _flat(2, 200.0)]]
    resolve_flat_blocks(grid, eps2=10.0)
    assert not grid[0][1].resolved


def test_constant_image_is_background() -> None:
    segmentation = BlockSegmenter().segment(GrayImage(data=np.full((64, 64), 77.0)))
    assert not segmentation.mask.bits.any()
    assert segmentation.counts[BlockPath.FLAT] == 1


def test_flat_block_next_to_gradient(basis64) -> None:
    left = smooth_block(basis64, [64 * 120.0, 100.0]).pixels
    right = np.full((64, 64), left[:, -1].mean())
    image = GrayImage(data=np.hstack((left, right)))
    assert image.width == 128 and image.height == 64

    segmentation = BlockSegmenter().segment(image)
    assert segmentation.blocks[0][0].path is BlockPath.LEAST_SQUARES
    assert segmentation.blocks[0][1].path is BlockPath.FLAT
    assert not segmentation.mask.bits.any()


def test_mask_is_cropped(rng) -> None:
    mask = segment_image(GrayImage(data=rng.uniform(0, 255, size=(70, 100))))
    assert (mask.width, mask.height) == (100, 70)


def test_empty_image_is_rejected() -> None:
    with pytest.raises(InvalidArgumentError):
        segment_image(GrayImage(data=np.zeros((0, 5))))


def test_invalid_config_is_rejected() -> None:
    with pytest.raises(InvalidArgumentError):
        BlockSegmenter(SegmenterConfig(n=64, k=4097))
    with pytest.raises(InvalidArgumentError):
        BlockSegmenter(SegmenterConfig(eps1=-1.0))


def test_parallel_pass_is_deterministic(rng) -> None:
    image = GrayImage(data=np.rint(rng.uniform(0, 255, size=(150, 130))))
    config = SegmenterConfig(n=16, iterations=30)
    sequential = BlockSegmenter(config).segment(image)
    parallel = BlockSegmenter(SegmenterConfig(n=16, iterations=30, workers=4)).segment(image)
    assert sequential.mask == parallel.mask
    assert sequential.counts == parallel.counts


def test_constant_megapixel_skips_solver(monkeypatch) -> None:
    def fail(*args, **kwargs):
        raise AssertionError("solver must not run on flat blocks")

    monkeypatch.setattr("scseg.segmenter.solve_lasso", fail)
    segmenter = BlockSegmenter()
    image = GrayImage(data=np.full((1024, 1024), 200.0))
    start = time.perf_counter()
    segmentation = segmenter.segment(image)
    elapsed = time.perf_counter() - start
    assert not segmentation.mask.bits.any()
    assert segmentation.counts[BlockPath.FLAT] == 256
    assert elapsed < 0.05


def test_smooth_image_takes_least_squares_path(basis64, rng, monkeypatch) -> None:
    monkeypatch.setattr("scseg.segmenter.solve_lasso", None)
    tiles = [
        [smooth_block(basis64, [64 * rng.uniform(60, 200)] + list(rng.uniform(-150, 150, size=9))).pixels
         for _ in range(3)]
        for _ in range(2)
    ]
    segmentation = BlockSegmenter().segment(GrayImage(data=np.block(tiles)))
    assert segmentation.counts[BlockPath.LEAST_SQUARES] == 6
    assert not segmentation.mask.bits.any()


def test_layers_for_flat_and_sparse_blocks(basis64) -> None:
    block, strokes = gradient_with_strokes(basis64)
    image = GrayImage(data=np.hstack((block.pixels, np.full((64, 64), 128.0))))
    smooth, sparse = BlockSegmenter().segment(image).layers()
    assert smooth.shape == sparse.shape == (64, 128)
    assert np.all(smooth[:, 64:] == 128.0)
    assert not sparse[:, 64:].any()
    assert np.all(sparse[:, :64][strokes] > 0)
    assert not sparse[:, :64][~strokes].any()
