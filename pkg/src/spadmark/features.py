"""Intensity-band feature planes and challenge-address construction.

An 8-bit image is quantized into L binary planes, one per intensity band of
width 256/L. Plane i is computed with a nested signum expression

    plane_i = sign(sign(256/L * i - I) + 1) - sign(sum of planes 1..i-1)

using sign(0) = 0, which makes each band upper-inclusive: plane 1 covers
[0, 32] and plane 8 covers (224, 255] at the defaults. In double-threshold
mode a pixel within overlap/2 of an internal band boundary is additionally
marked in the neighboring plane, trading edit sensitivity for noise
immunity the way a Schmitt trigger does.

The first four planes form a 4-bit row address and the last four a 4-bit
column address per pixel of the (downsampled) image; those addresses are
what gets asked of the device's relative dark count maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

INTENSITY_RANGE = 256  # 8-bit images only

SINGLE = "single"
DOUBLE = "double"


@dataclass(frozen=True)
class FeatureConfig:
    """Quantizer settings: plane count, threshold mode, overlap width."""

    L: int = 8
    mode: str = SINGLE
    overlap: float = 0.0        # total width of the desensitized band, intensity units
    lsb_mask: bool = True       # quantize with the LSB plane cleared

    def __post_init__(self) -> None:
        if self.L < 2 or self.L % 2 != 0:
            raise ValueError(f"L must be even and >= 2, got {self.L}")
        if INTENSITY_RANGE % self.L != 0:
            raise ValueError(f"L must divide {INTENSITY_RANGE}, got {self.L}")
        if self.mode not in (SINGLE, DOUBLE):
            raise ValueError(f"mode must be {SINGLE!r} or {DOUBLE!r}, got {self.mode!r}")
        if self.overlap < 0 or self.overlap >= INTENSITY_RANGE / self.L:
            raise ValueError(
                f"overlap must be in [0, {INTENSITY_RANGE // self.L}), got {self.overlap}")


@dataclass
class FeatureStack:
    """L binary planes, stacked as a (L, height, width) array."""

    planes: np.ndarray
    config: FeatureConfig


@dataclass
class ChallengeMatrix:
    """Per-cell (row, col) map addresses; values in [0, 2**(L/2) - 1]."""

    addrs: np.ndarray           # (grid_dim, grid_dim, 2) uint8
    grid_dim: int


def _check_gray(img: np.ndarray) -> np.ndarray:
    pixels = np.asarray(img)
    if pixels.ndim != 2 or pixels.size == 0:
        raise ValueError(f"expected a non-empty 2-D grayscale image, got shape {pixels.shape}")
    if pixels.dtype != np.uint8:
        if not np.issubdtype(pixels.dtype, np.integer):
            raise ValueError(f"expected integer pixels, got dtype {pixels.dtype}")
        if pixels.min() < 0 or pixels.max() > 255:
            raise ValueError("pixel values must lie in [0, 255]")
        pixels = pixels.astype(np.uint8)
    return pixels


def feature_images(img: np.ndarray, cfg: FeatureConfig) -> FeatureStack:
    """Quantize an image into L binary band-membership planes."""
    pixels = _check_gray(img)
    if cfg.lsb_mask:
        pixels = pixels & 0xFE
    level = pixels.astype(np.int32)
    band = INTENSITY_RANGE // cfg.L
    planes = np.zeros((cfg.L,) + level.shape, dtype=np.uint8)
    assigned = np.zeros_like(level)
    for i in range(1, cfg.L + 1):
        above = np.sign(np.sign(band * i - level) + 1)
        plane = above - np.sign(assigned)
        planes[i - 1] = plane
        assigned += plane
    if cfg.mode == DOUBLE and cfg.overlap > 0:
        half = cfg.overlap / 2.0
        for t in range(1, cfg.L):
            zone = np.abs(level - band * t) <= half
            planes[t - 1][zone] = 1
            planes[t][zone] = 1
    return FeatureStack(planes=planes, config=cfg)


def downsample(img: np.ndarray, grid_dim: int) -> np.ndarray:
    """Block-mean an image down to grid_dim x grid_dim, truncating toward zero.

    Integer arithmetic throughout, so the result is bit-exact regardless of
    platform. Both image dimensions must be divisible by grid_dim.
    """
    pixels = _check_gray(img)
    h, w = pixels.shape
    if grid_dim < 1 or h % grid_dim != 0 or w % grid_dim != 0:
        raise ValueError(
            f"image {h}x{w} not divisible into a {grid_dim}x{grid_dim} grid")
    bh, bw = h // grid_dim, w // grid_dim
    blocks = pixels.astype(np.int64).reshape(grid_dim, bh, grid_dim, bw)
    sums = blocks.sum(axis=(1, 3))
    return (sums // (bh * bw)).astype(np.uint8)


def challenge_matrix(stack: FeatureStack) -> ChallengeMatrix:
    """Pack plane bits into per-pixel map addresses.

    Planes 1-4 are read MSB-first as the row address, planes 5-8 as the
    column address. Only L = 8 has a defined nibble packing.
    """
    if stack.config.L != 8:
        raise ValueError(f"challenge addresses are defined for L = 8 only, got L = {stack.config.L}")
    planes = stack.planes
    if planes.shape[1] != planes.shape[2]:
        raise ValueError(f"challenge grid must be square, got {planes.shape[1]}x{planes.shape[2]}")
    weights = np.array([8, 4, 2, 1], dtype=np.uint8).reshape(4, 1, 1)
    row_addr = (planes[0:4] * weights).sum(axis=0, dtype=np.uint8)
    col_addr = (planes[4:8] * weights).sum(axis=0, dtype=np.uint8)
    return ChallengeMatrix(addrs=np.stack([row_addr, col_addr], axis=-1),
                           grid_dim=planes.shape[1])
