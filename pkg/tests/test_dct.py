import numpy as np
import pytest

from fvv.dct import (ZIGZAG, UNZIGZAG, dct8, dct8_blocks, idct8, idct8_blocks,
                     lift8_blocks, unlift8_blocks)
from oracles import naive_dct8, naive_idct8

# ITU T.81 Annex K zigzag: rank of each raster-order coefficient
STD_ZIGZAG_RANK = (0, 1, 5, 6, 14, 15, 27, 28,
                   2, 4, 7, 13, 16, 26, 29, 42,
                   3, 8, 12, 17, 25, 30, 41, 43,
                   9, 11, 18, 24, 31, 40, 44, 53,
                   10, 19, 23, 32, 39, 45, 52, 54,
                   20, 22, 33, 38, 46, 51, 55, 60,
                   21, 34, 37, 47, 50, 56, 59, 61,
                   35, 36, 48, 49, 57, 58, 62, 63)


def test_constant_block_collapses_to_dc():
    out = dct8(np.full((8, 8), 9.0))
    assert out[0, 0] == pytest.approx(72.0, abs=1e-9)
    out[0, 0] = 0.0
    assert np.abs(out).max() < 1e-9


def test_round_trip_identity(rng):
    b = rng.uniform(-255, 255, (8, 8))
    assert np.abs(idct8(dct8(b)) - b).max() < 1e-9


def test_matches_naive_four_loop_definition(rng):
    for _ in range(100):
        b = rng.uniform(-255, 255, (8, 8))
        assert np.abs(dct8(b) - naive_dct8(b)).max() < 1e-9
    b = rng.uniform(-255, 255, (8, 8))
    assert np.abs(idct8(b) - naive_idct8(b)).max() < 1e-9


def test_batched_matches_single(rng):
    blocks = rng.uniform(-255, 255, (12, 8, 8))
    batched = dct8_blocks(blocks)
    for i in range(12):
        assert np.allclose(batched[i], dct8(blocks[i]), atol=1e-9)
    assert np.abs(idct8_blocks(batched) - blocks).max() < 1e-9


def test_lifting_transform_exactly_reversible(rng):
    blocks = rng.integers(-255, 256, (200, 8, 8)).astype(np.int32)
    assert np.array_equal(unlift8_blocks(lift8_blocks(blocks)), blocks)


def test_lifting_dc_is_rounded_average():
    blocks = np.full((1, 8, 8), 100, np.int32)
    assert lift8_blocks(blocks)[0, 0, 0] == 100


def test_zigzag_matches_standard_table():
    for raster, rank in enumerate(STD_ZIGZAG_RANK):
        assert ZIGZAG[rank] == raster
    assert sorted(ZIGZAG.tolist()) == list(range(64))
    ident = np.arange(64)[ZIGZAG][UNZIGZAG]
    assert np.array_equal(ident, np.arange(64))
