"""Vectorized Catmull-Rom interpolation on uniform periodic grids.

Shared by the guiding-field evaluation (real densities and currents) and
the momentum-space boost transport (complex amplitudes). The grid is
treated as periodic, matching the spectral representation; callers are
responsible for keeping queries away from wrap-around artifacts.
"""

from __future__ import annotations

import itertools

import numpy as np

__all__ = ["cubic_interp_uniform", "cubic_interp_grid"]


def _catmull_rom_weights(theta: np.ndarray) -> tuple[np.ndarray, ...]:
    t = theta
    t2 = t * t
    t3 = t2 * t
    w_m1 = 0.5 * (-t + 2.0 * t2 - t3)
    w_0 = 0.5 * (2.0 - 5.0 * t2 + 3.0 * t3)
    w_p1 = 0.5 * (t + 4.0 * t2 - 3.0 * t3)
    w_p2 = 0.5 * (-t2 + t3)
    return w_m1, w_0, w_p1, w_p2


def cubic_interp_uniform(values: np.ndarray, x0: float, dx: float, xq: np.ndarray) -> np.ndarray:
    """Cubic interpolation of samples on the uniform periodic grid x0 + i dx."""
    values = np.asarray(values)
    n = values.shape[-1]
    pos = (np.asarray(xq, dtype=float) - x0) / dx
    base = np.floor(pos).astype(np.int64)
    theta = pos - base
    weights = _catmull_rom_weights(theta)
    out = np.zeros(np.broadcast_shapes(values.shape[:-1] + pos.shape), dtype=values.dtype)
    for off, w in zip((-1, 0, 1, 2), weights):
        out = out + w * values[..., (base + off) % n]
    return out


def cubic_interp_grid(values: np.ndarray, x_min, dx, points: np.ndarray) -> np.ndarray:
    """Tensor-product cubic interpolation of a d-dim grid at scattered points.

    values: array with the grid shape; points: (k, d). Returns (k,).
    """
    values = np.asarray(values)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    dim = points.shape[1]
    shape = values.shape
    bases, weight_sets = [], []
    for ax in range(dim):
        pos = (points[:, ax] - x_min[ax]) / dx[ax]
        base = np.floor(pos).astype(np.int64)
        bases.append(base)
        weight_sets.append(_catmull_rom_weights(pos - base))
    out = np.zeros(points.shape[0], dtype=values.dtype)
    flat = values.reshape(-1)
    strides = np.cumprod((1,) + shape[::-1][:-1])[::-1]
    for offsets in itertools.product((-1, 0, 1, 2), repeat=dim):
        idx = np.zeros(points.shape[0], dtype=np.int64)
        w = np.ones(points.shape[0])
        for ax, off in enumerate(offsets):
            idx += ((bases[ax] + off) % shape[ax]) * strides[ax]
            w = w * weight_sets[ax][(-1, 0, 1, 2).index(off)]
        out = out + w * flat[idx]
    return out
