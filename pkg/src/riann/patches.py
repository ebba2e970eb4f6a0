"""Patch extraction, normalization, and the distance metrics everything else uses.

Frames are 2-D float32 luminance rasters with intensities in [0, 1] (8-bit
inputs are divided by 255 at load time).  A patch is the flattened row-major
window of such a raster; queries are normalized to unit length at runtime
while the original magnitude is kept for later rescaling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError

# Below this L2 magnitude a patch is considered degenerate: it normalizes to
# the all-zero vector with norm 0 instead of erroring.
ZERO_NORM_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class Patch:
    """A flattened patch window plus its recorded L2 magnitude.

    For raw patches ``norm`` equals the L2 norm of ``values``; after
    :func:`normalize_patch` the values are unit length (or all zero for a
    degenerate patch) and ``norm`` holds the original magnitude.
    """

    values: np.ndarray
    norm: float

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True, eq=False)
class PatchGrid:
    """All patch windows of one frame, row-major by patch position.

    ``values[y * width + x]`` is the window whose top-left pixel is
    ``(x * stride, y * stride)`` in frame coordinates.
    """

    width: int
    height: int
    values: np.ndarray  # (width * height, dim) float32, unnormalized
    patch_size: tuple[int, int]  # (patch_w, patch_h)
    stride: int = 1

    def __len__(self) -> int:
        return self.width * self.height

    def patch(self, x: int, y: int) -> Patch:
        """Materialize the raw patch at grid position (x, y)."""
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise IndexError(f"patch position ({x}, {y}) outside {self.width}x{self.height} grid")
        row = self.values[y * self.width + x]
        return Patch(values=row, norm=float(np.sqrt(np.sum(row.astype(np.float64) ** 2))))


def extract_patches(frame: np.ndarray, patch_size: tuple[int, int], stride: int = 1) -> PatchGrid:
    """Collect every patch window of a frame into a row-major grid.

    Args:
        frame: 2-D luminance raster, any real dtype (converted to float32).
        patch_size: (patch_w, patch_h) window size in pixels.
        stride: step between adjacent windows; 1 gives the dense field.

    Returns:
        PatchGrid with ``width = (frame_w - patch_w) // stride + 1`` and the
        analogous height.  Patches are raw (not normalized).

    Raises:
        DimensionError: frame smaller than the patch or invalid stride.
    """
    frame = np.asarray(frame, dtype=np.float32)
    if frame.ndim != 2:
        raise DimensionError(f"expected a 2-D luminance raster, got shape {frame.shape}")
    pw, ph = int(patch_size[0]), int(patch_size[1])
    if pw < 1 or ph < 1:
        raise DimensionError(f"patch size must be positive, got {patch_size}")
    if stride < 1:
        raise DimensionError(f"stride must be >= 1, got {stride}")
    frame_h, frame_w = frame.shape
    if frame_w < pw or frame_h < ph:
        raise DimensionError(
            f"frame {frame_w}x{frame_h} smaller than patch {pw}x{ph}"
        )
    gw = (frame_w - pw) // stride + 1
    gh = (frame_h - ph) // stride + 1
    windows = sliding_window_view(frame, (ph, pw))[::stride, ::stride]
    values = np.ascontiguousarray(windows.reshape(gh * gw, ph * pw))
    return PatchGrid(width=gw, height=gh, values=values, patch_size=(pw, ph), stride=stride)


def normalize_rows(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Normalize each row to unit L2 length.

    Returns ``(unit, norms)`` where ``unit`` is float32 and rows with
    magnitude below ``ZERO_NORM_EPS`` become all-zero with norm 0 (the
    degenerate-patch rule).
    """
    v = np.ascontiguousarray(values, dtype=np.float64)
    if v.ndim != 2:
        raise DimensionError(f"expected a (count, dim) array, got shape {v.shape}")
    norms = np.sqrt(np.sum(v * v, axis=1))
    ok = norms >= ZERO_NORM_EPS
    unit = np.zeros(v.shape, dtype=np.float32)
    if np.any(ok):
        unit[ok] = (v[ok] / norms[ok, None]).astype(np.float32)
    return unit, np.where(ok, norms, 0.0)


def normalize_patch(p: Patch) -> Patch:
    """Return the unit-length version of a patch, recording its magnitude."""
    unit, norms = normalize_rows(p.values[None, :])
    return Patch(values=unit[0], norm=float(norms[0]))


class Metric:
    """A distance on flattened patch vectors.

    Subclasses implement :meth:`one_to_many`; the scalar form and dimension
    checks come for free.  Any implementation must satisfy the metric axioms
    (symmetry, identity of indiscernibles, triangle inequality) for the ring
    search to remain sound.
    """

    name = "abstract"

    def one_to_many(self, q: np.ndarray, refs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, a: np.ndarray, b: np.ndarray) -> float:
        a = np.asarray(a)
        b = np.asarray(b)
        if a.shape != b.shape:
            raise DimensionError(f"dimension mismatch: {a.shape} vs {b.shape}")
        return float(self.one_to_many(a, b[None, :])[0])


class EuclideanMetric(Metric):
    """Euclidean distance on normalized patch values (the default metric)."""

    name = "euclidean"

    def one_to_many(self, q: np.ndarray, refs: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64)
        refs = np.asarray(refs, dtype=np.float64)
        if refs.ndim != 2 or q.ndim != 1 or refs.shape[1] != q.shape[0]:
            raise DimensionError(
                f"dimension mismatch: query {q.shape} vs references {refs.shape}"
            )
        diff = np.ascontiguousarray(refs) - q
        return np.sqrt(np.sum(diff * diff, axis=1))


EUCLIDEAN = EuclideanMetric()

# Numeric ids are what the model file format stores; new metrics get new ids.
_METRIC_REGISTRY: dict[int, Metric] = {0: EUCLIDEAN}


def register_metric(metric_id: int, metric: Metric) -> None:
    """Register a custom metric under a numeric id for use in model files."""
    if not (0 <= metric_id <= 255):
        raise ValueError(f"metric id must fit in a byte, got {metric_id}")
    _METRIC_REGISTRY[int(metric_id)] = metric


def get_metric(metric_id: int) -> Metric:
    try:
        return _METRIC_REGISTRY[int(metric_id)]
    except KeyError:
        raise KeyError(f"no metric registered under id {metric_id}") from None


def distance(a: Patch, b: Patch, metric: Metric = EUCLIDEAN) -> float:
    """Distance between two patches under the given metric."""
    return metric(a.values, b.values)
