"""Lossless frame I/O over directories of numbered images.

A sequence is a directory of same-sized images consumed in lexicographic
filename order.  Grayscale frames come back as float32 in [0, 1] (8-bit
values divided by 255); color files are reduced to luminance with the same
integer transform the colorization path uses, so grayscale pipelines see
identical values no matter which loader produced them.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DimensionError, FormatError
from .transforms import luminance, quantize_u8

FRAME_SUFFIXES = (".png", ".bmp", ".tif", ".tiff")


def list_frames(directory) -> list[Path]:
    """Frame files under ``directory`` in lexicographic order."""
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"frame directory not found: {d}")
    paths = sorted(p for p in d.iterdir() if p.suffix.lower() in FRAME_SUFFIXES)
    if not paths:
        raise FileNotFoundError(f"no frame files ({'/'.join(FRAME_SUFFIXES)}) in {d}")
    return paths


def load_rgb(path) -> np.ndarray:
    """Load an image as (h, w, 3) uint8."""
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except FileNotFoundError:
        raise
    except OSError as e:
        raise FormatError(f"cannot decode image {path}: {e}") from e


def load_gray(path) -> np.ndarray:
    """Load an image as (h, w) float32 luminance in [0, 1].

    Single-band files divide by 255 directly; color files go through the
    integer luminance/chroma split (not the viewing-weighted conversion) so
    that colorization inputs and outputs agree bit for bit.
    """
    try:
        with Image.open(path) as im:
            if im.mode == "L":
                arr = np.asarray(im, dtype=np.uint8)
            else:
                rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
                arr = luminance(rgb).astype(np.uint8)
    except FileNotFoundError:
        raise
    except OSError as e:
        raise FormatError(f"cannot decode image {path}: {e}") from e
    return arr.astype(np.float32) / 255.0


def save_frame(path, array: np.ndarray) -> None:
    """Write a raster losslessly.

    Float input is treated as intensities in [0, 1] and quantized to 8 bits;
    uint8 input is written as-is.
    """
    arr = np.asarray(array)
    if arr.dtype != np.uint8:
        arr = quantize_u8(arr.astype(np.float64) * 255.0)
    if arr.ndim == 2:
        im = Image.fromarray(arr, mode="L")
    elif arr.ndim == 3 and arr.shape[2] == 3:
        im = Image.fromarray(arr, mode="RGB")
    else:
        raise DimensionError(f"cannot save raster of shape {arr.shape}")
    im.save(path)


def load_gray_sequence(directory) -> list[np.ndarray]:
    frames = [load_gray(p) for p in list_frames(directory)]
    first = frames[0].shape
    for p, f in zip(list_frames(directory), frames):
        if f.shape != first:
            raise DimensionError(
                f"frame {p.name} is {f.shape}, sequence started at {first}"
            )
    return frames


def save_sequence(directory, frames, prefix: str = "frame") -> list[Path]:
    """Write frames as zero-padded PNGs; returns the paths written."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(max(len(frames) - 1, 0))))
    paths = []
    for t, frame in enumerate(frames):
        p = d / f"{prefix}_{t:0{width}d}.png"
        save_frame(p, frame)
        paths.append(p)
    return paths
