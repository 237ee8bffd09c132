"""8x8 block transforms: orthonormal DCT-II and a reversible integer lifting
transform used by the lossless quality setting."""
from __future__ import annotations

import numpy as np


def _dct_matrix() -> np.ndarray:
    n = np.arange(8)
    k = n[:, None]
    c = np.cos((2 * n[None, :] + 1) * k * np.pi / 16)
    c *= np.sqrt(2.0 / 8.0)
    c[0] *= np.sqrt(0.5)
    return c


_C = _dct_matrix()


def dct8(block: np.ndarray) -> np.ndarray:
    """Orthonormal 2-D DCT-II of one 8x8 block (constant c -> DC of 8c)."""
    return _C @ block.astype(np.float64) @ _C.T


def idct8(coeffs: np.ndarray) -> np.ndarray:
    return _C.T @ coeffs.astype(np.float64) @ _C


def dct8_blocks(blocks: np.ndarray) -> np.ndarray:
    """Batched forward DCT over (n, 8, 8)."""
    return np.einsum("ij,njk,lk->nil", _C, blocks.astype(np.float64), _C, optimize=True)


def idct8_blocks(coeffs: np.ndarray) -> np.ndarray:
    return np.einsum("ji,njk,kl->nil", _C, coeffs.astype(np.float64), _C, optimize=True)


def _lift_axis_forward(a: np.ndarray) -> np.ndarray:
    """3-level S-transform (average/difference lifting) along the last axis.

    Integer in, integer out, exactly invertible; output layout per 8 samples
    is [L3, H3, H2 x2, H1 x4].
    """
    out = a.copy()
    n = 8
    while n > 1:
        even = out[..., 0:n:2]
        odd = out[..., 1:n:2]
        lo = (even + odd) >> 1
        hi = even - odd
        out[..., : n // 2] = lo
        out[..., n // 2: n] = hi
        n //= 2
    return out


def _lift_axis_inverse(a: np.ndarray) -> np.ndarray:
    out = a.copy()
    sizes = [2, 4, 8]
    for n in sizes:
        lo = out[..., : n // 2].copy()
        hi = out[..., n // 2: n].copy()
        even = lo + ((hi + 1) >> 1)
        out[..., 0:n:2] = even
        out[..., 1:n:2] = even - hi
    return out


def lift8_blocks(blocks: np.ndarray) -> np.ndarray:
    """Reversible integer transform over (n, 8, 8) int arrays: rows then columns."""
    b = blocks.astype(np.int32)
    b = _lift_axis_forward(b)
    b = _lift_axis_forward(b.swapaxes(-1, -2)).swapaxes(-1, -2)
    return b


def unlift8_blocks(coeffs: np.ndarray) -> np.ndarray:
    b = coeffs.astype(np.int32)
    b = _lift_axis_inverse(b.swapaxes(-1, -2)).swapaxes(-1, -2)
    b = _lift_axis_inverse(b)
    return b


def _zigzag_order() -> tuple[int, ...]:
    order = []
    for d in range(15):
        cells = [(u, d - u) for u in range(max(0, d - 7), min(d, 7) + 1)]
        if d % 2 == 0:
            cells.reverse()  # even diagonals walk bottom-left to top-right
        order.extend(u * 8 + v for u, v in cells)
    return tuple(order)


ZIGZAG = np.array(_zigzag_order(), dtype=np.int64)
UNZIGZAG = np.argsort(ZIGZAG)
