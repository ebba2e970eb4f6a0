"""Deterministic synthetic clips for tests, benchmarks, and demos.

Real video is redundant: patches repeat and drift slowly.  Plain per-pixel
noise has neither property (random high-dimensional patches sit at nearly
equal distances from each other, so distance rings cannot narrow anything),
which makes it useless for exercising this engine.  The generators here
build smooth textures and move them gently to get honest, reproducible
stand-ins for natural clips.
"""

from __future__ import annotations

import numpy as np

from .transforms import luminance, quantize_u8


def _bilinear_upsample(coarse: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    ch, cw = coarse.shape
    ys = np.linspace(0.0, ch - 1.0, out_h)
    xs = np.linspace(0.0, cw - 1.0, out_w)
    y0 = np.clip(np.floor(ys).astype(int), 0, ch - 2)
    x0 = np.clip(np.floor(xs).astype(int), 0, cw - 2)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    c00 = coarse[np.ix_(y0, x0)]
    c01 = coarse[np.ix_(y0, x0 + 1)]
    c10 = coarse[np.ix_(y0 + 1, x0)]
    c11 = coarse[np.ix_(y0 + 1, x0 + 1)]
    top = c00 * (1 - fx) + c01 * fx
    bot = c10 * (1 - fx) + c11 * fx
    return (top * (1 - fy) + bot * fy).astype(np.float32)


def smooth_texture(
    width: int,
    height: int,
    *,
    cells: int = 6,
    seed: int = 0,
    low: float = 0.125,
    high: float = 0.875,
) -> np.ndarray:
    """Smooth random grayscale texture: coarse noise upsampled bilinearly.

    ``cells`` controls feature size (fewer cells = smoother).  Intensities
    span [low, high], leaving headroom inside [0, 1] for later drift.
    """
    if cells < 1:
        raise ValueError(f"cells must be >= 1, got {cells}")
    rng = np.random.default_rng(seed)
    coarse = rng.uniform(low, high, size=(cells + 1, cells + 1))
    return _bilinear_upsample(coarse, height, width)


def still_sequence(frame: np.ndarray, count: int) -> list[np.ndarray]:
    return [np.array(frame) for _ in range(count)]


def pan_sequence(
    texture: np.ndarray,
    count: int,
    size: tuple[int, int],
    step: tuple[int, int] = (1, 0),
    start: tuple[int, int] = (0, 0),
) -> list[np.ndarray]:
    """Crop a moving window out of a larger texture, ``step`` pixels per frame."""
    w, h = size
    x, y = start
    dx, dy = step
    frames = []
    for _ in range(count):
        if x < 0 or y < 0 or x + w > texture.shape[1] or y + h > texture.shape[0]:
            raise ValueError("pan window leaves the texture")
        frames.append(np.array(texture[y : y + h, x : x + w]))
        x += dx
        y += dy
    return frames


def drift_sequence(
    base: np.ndarray,
    count: int,
    *,
    seed: int = 0,
    max_step: float = 2.0 / 255.0,
    cells: int = 4,
) -> list[np.ndarray]:
    """Low-temporal-change clip: every pixel creeps by at most ``max_step``
    per frame along a fixed smooth ramp."""
    h, w = base.shape
    ramp = smooth_texture(w, h, cells=cells, seed=seed, low=-max_step, high=max_step)
    return [np.asarray(base, dtype=np.float32) + t * ramp for t in range(count)]


def alternating_sequence(
    width: int,
    height: int,
    *,
    still: int = 10,
    motion: int = 10,
    jump: int = 8,
    cells: int = 10,
    seed: int = 0,
) -> list[np.ndarray]:
    """``still`` identical frames followed by ``motion`` frames of large jumps.

    The jump frames crop the same big texture at random far-apart offsets, so
    temporal change switches from exactly zero to large mid-sequence.
    """
    rng = np.random.default_rng(seed)
    margin = jump * (motion + 1)
    big = smooth_texture(width + 2 * margin, height + 2 * margin, cells=cells, seed=seed)
    frames = still_sequence(big[:height, :width], still)
    for _ in range(motion):
        x = int(rng.integers(0, 2 * margin))
        y = int(rng.integers(0, 2 * margin))
        frames.append(np.array(big[y : y + height, x : x + width]))
    return frames


def colorize_map(gray: np.ndarray) -> np.ndarray:
    """Map a [0, 1] grayscale raster to a saturated uint8 RGB one.

    Brightness picks the color (fixed smooth palette), so chromaticity is
    predictable from local appearance; that is the regime where keyframe
    color transfer can work.
    """
    g = np.asarray(gray, dtype=np.float32) * 255.0
    r = g
    gg = 255.0 - g
    b = 0.25 * g + 64.0
    return quantize_u8(np.stack([r, gg, b], axis=-1))


def colored_pan_video(
    width: int,
    height: int,
    count: int,
    *,
    cells: int = 6,
    seed: int = 0,
    step: tuple[int, int] = (1, 0),
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """A panning colored clip plus its grayscale (luminance) version.

    Returns (color_frames, gray_frames); color frames are uint8 RGB, gray
    frames are float32 in [0, 1], exactly what loading the color frames
    through the grayscale loader would produce.
    """
    dx, dy = step
    big = smooth_texture(
        width + abs(dx) * count, height + abs(dy) * count, cells=cells, seed=seed
    )
    gray_pan = pan_sequence(
        big,
        count,
        size=(width, height),
        step=step,
        start=(max(0, -dx) * count, max(0, -dy) * count),
    )
    color = [colorize_map(f) for f in gray_pan]
    gray = [luminance(c).astype(np.float32) / 255.0 for c in color]
    return color, gray
