"""Frame-level match propagation and the ANNF stream container.

The engine owns no spatial search: each grid position carries its match
index forward in time and every frame refines it with one ring query.  The
first field is random; matching quality then improves frame over frame
because a query never does worse than keeping its previous match.
"""

from __future__ import annotations

import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, FormatError
from .model import ReferenceModel
from .patches import extract_patches, normalize_rows
from .search import SearchParams, query_rng_key, riann_query

ANNF_MAGIC = b"ANNF"
ANNF_VERSION = 1
_ANNF_HEADER = "<HIIHHI"  # version, grid_w, grid_h, patch_w, patch_h, frame_count


@dataclass(frozen=True)
class AnnField:
    """Dense per-position match state for one frame.

    indices[y, x] names the matched reference for the patch at grid position
    (x, y); distances holds the corresponding match distances (+inf before
    the first frame has been processed).
    """

    width: int
    height: int
    indices: np.ndarray  # (height, width) int32
    distances: np.ndarray  # (height, width) float64
    frame_t: int = 0

    def __post_init__(self):
        if self.indices.shape != (self.height, self.width):
            raise DimensionError(
                f"indices shape {self.indices.shape} does not match grid "
                f"{self.width}x{self.height}"
            )
        if self.distances.shape != (self.height, self.width):
            raise DimensionError(
                f"distances shape {self.distances.shape} does not match grid "
                f"{self.width}x{self.height}"
            )


@dataclass(frozen=True)
class FrameStats:
    """Per-frame search telemetry.

    temporal_change sums, over grid positions, the distance between this
    frame's normalized query patch and the previous frame's; 0.0 on the
    first frame.
    """

    total_rings: int
    total_distance_evals: int
    mean_candidates: float
    temporal_change: float
    queries: int


def init_field(grid_w: int, grid_h: int, n: int, seed: int = 0) -> AnnField:
    """Random starting field: indices i.i.d. uniform over [0, n), distances
    unset (+inf) until the first frame is processed."""
    if n < 1:
        raise ValueError(f"need at least one reference, got n={n}")
    if grid_w < 1 or grid_h < 1:
        raise ValueError(f"empty grid {grid_w}x{grid_h}")
    rng = np.random.default_rng(seed)
    indices = rng.integers(0, n, size=(grid_h, grid_w), dtype=np.int32)
    distances = np.full((grid_h, grid_w), np.inf, dtype=np.float64)
    return AnnField(width=grid_w, height=grid_h, indices=indices, distances=distances)


def _resolve_threads(threads: int | None) -> int:
    if threads is None:
        return os.cpu_count() or 1
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    return threads


def process_frame(
    frame: np.ndarray,
    prev_field: AnnField,
    model: ReferenceModel,
    params: SearchParams = SearchParams(),
    *,
    prev_unit: np.ndarray | None = None,
    threads: int | None = None,
) -> tuple[AnnField, FrameStats]:
    """Advance the field by one frame.

    Every position runs one ring query seeded from its previous match.  Pass
    ``prev_unit`` (the previous frame's normalized patch rows, as returned by
    :func:`frame_units`) to get a nonzero temporal_change statistic.  Queries
    are independent: execution order and thread count do not affect any
    output.
    """
    grid = extract_patches(frame, model.patch_size)
    if (grid.width, grid.height) != (prev_field.width, prev_field.height):
        raise DimensionError(
            f"frame yields grid {grid.width}x{grid.height}, field is "
            f"{prev_field.width}x{prev_field.height}"
        )
    if grid.values.shape[1] != model.dim:
        raise DimensionError(
            f"patch dim {grid.values.shape[1]} does not match model dim {model.dim}"
        )
    unit, _ = normalize_rows(grid.values)

    gw, gh = grid.width, grid.height
    total = gw * gh
    t_next = prev_field.frame_t + 1
    prev_idx = prev_field.indices.reshape(-1)

    out_idx = np.empty(total, dtype=np.int32)
    out_dist = np.empty(total, dtype=np.float64)
    rings = np.empty(total, dtype=np.int64)
    evals = np.empty(total, dtype=np.int64)
    cands = np.empty(total, dtype=np.int64)
    seed = params.seed

    def work(start: int, stop: int) -> None:
        for g in range(start, stop):
            y, x = divmod(g, gw)
            res = riann_query(
                model,
                unit[g],
                int(prev_idx[g]),
                params,
                rng_state=query_rng_key(seed, x, y, t_next),
            )
            out_idx[g] = res.match_index
            out_dist[g] = res.match_distance
            rings[g] = res.rings_drawn
            evals[g] = res.distance_evals
            cands[g] = res.candidates_final

    nthreads = min(_resolve_threads(threads), total)
    if nthreads <= 1:
        work(0, total)
    else:
        bounds = np.linspace(0, total, nthreads + 1, dtype=int)
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            futures = [
                pool.submit(work, int(bounds[k]), int(bounds[k + 1]))
                for k in range(nthreads)
            ]
            for f in futures:
                f.result()

    if prev_unit is not None:
        if prev_unit.shape != unit.shape:
            raise DimensionError(
                f"prev_unit shape {prev_unit.shape} does not match {unit.shape}"
            )
        diff = unit.astype(np.float64) - prev_unit.astype(np.float64)
        temporal_change = float(np.sum(np.sqrt(np.sum(diff * diff, axis=1))))
    else:
        temporal_change = 0.0

    field = AnnField(
        width=gw,
        height=gh,
        indices=out_idx.reshape(gh, gw),
        distances=out_dist.reshape(gh, gw),
        frame_t=t_next,
    )
    stats = FrameStats(
        total_rings=int(np.sum(rings)),
        total_distance_evals=int(np.sum(evals)),
        mean_candidates=float(np.sum(cands)) / total,
        temporal_change=temporal_change,
        queries=total,
    )
    return field, stats


def frame_units(frame: np.ndarray, model: ReferenceModel) -> np.ndarray:
    """Normalized patch rows for a frame, for feeding ``prev_unit``."""
    unit, _ = normalize_rows(extract_patches(frame, model.patch_size).values)
    return unit


def grid_shape(frame_shape: tuple[int, int], patch_size: tuple[int, int]) -> tuple[int, int]:
    """(grid_w, grid_h) for dense stride-1 patches of the given frame shape."""
    h, w = frame_shape
    pw, ph = patch_size
    if w < pw or h < ph:
        raise DimensionError(f"frame {w}x{h} smaller than patch {pw}x{ph}")
    return (w - pw + 1, h - ph + 1)


def stream_fields(
    model: ReferenceModel,
    frames,
    params: SearchParams = SearchParams(),
    threads: int | None = None,
):
    """Drive a whole sequence, yielding (frame, AnnField, FrameStats) per frame.

    Initialization is random from ``params.seed``; temporal_change tracking
    is wired automatically.
    """
    field = None
    prev_unit = None
    for frame in frames:
        frame = np.asarray(frame)
        if field is None:
            gw, gh = grid_shape(frame.shape[:2], model.patch_size)
            field = init_field(gw, gh, model.n, seed=params.seed)
        field, stats = process_frame(
            frame, field, model, params, prev_unit=prev_unit, threads=threads
        )
        prev_unit = frame_units(frame, model)
        yield frame, field, stats


class AnnfWriter:
    """Streaming writer for the ANNF container.

    Header goes out immediately with a zero frame count; the count is patched
    on close, so the writer must be closed (or used as a context manager) for
    the file to be valid.
    """

    def __init__(self, path, grid_w: int, grid_h: int, patch_size: tuple[int, int]):
        self.grid_w = int(grid_w)
        self.grid_h = int(grid_h)
        self.patch_size = (int(patch_size[0]), int(patch_size[1]))
        self.frame_count = 0
        self._f = open(path, "wb")
        self._f.write(ANNF_MAGIC)
        self._f.write(
            struct.pack(
                _ANNF_HEADER,
                ANNF_VERSION,
                self.grid_w,
                self.grid_h,
                self.patch_size[0],
                self.patch_size[1],
                0,
            )
        )

    def append(self, field: AnnField) -> None:
        if (field.width, field.height) != (self.grid_w, self.grid_h):
            raise DimensionError(
                f"field grid {field.width}x{field.height} does not match stream "
                f"{self.grid_w}x{self.grid_h}"
            )
        self._f.write(np.ascontiguousarray(field.indices, dtype="<u4").tobytes())
        self._f.write(np.ascontiguousarray(field.distances, dtype="<f4").tobytes())
        self.frame_count += 1

    def close(self) -> None:
        if self._f.closed:
            return
        self._f.seek(4 + struct.calcsize("<HIIHH"))
        self._f.write(struct.pack("<I", self.frame_count))
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass(frozen=True)
class AnnfStream:
    grid_w: int
    grid_h: int
    patch_size: tuple[int, int]
    indices: np.ndarray  # (frames, grid_h, grid_w) int32
    distances: np.ndarray  # (frames, grid_h, grid_w) float32

    @property
    def frame_count(self) -> int:
        return int(self.indices.shape[0])


def read_annf(path) -> AnnfStream:
    """Load an ANNF container written by :class:`AnnfWriter`."""
    with open(path, "rb") as f:
        data = f.read()
    header_len = 4 + struct.calcsize(_ANNF_HEADER)
    if len(data) < header_len:
        raise FormatError("field stream truncated inside the header")
    if data[:4] != ANNF_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {ANNF_MAGIC!r}")
    version, gw, gh, pw, ph, frames = struct.unpack(
        _ANNF_HEADER, data[4:header_len]
    )
    if version != ANNF_VERSION:
        raise FormatError(f"unsupported field stream version {version}")
    per_frame = 8 * gw * gh
    expected = header_len + frames * per_frame
    if len(data) != expected:
        raise FormatError(
            f"field stream length {len(data)} does not match header "
            f"({frames} frames of {gw}x{gh} require {expected} bytes)"
        )
    idx = np.empty((frames, gh, gw), dtype=np.int32)
    dist = np.empty((frames, gh, gw), dtype=np.float32)
    off = header_len
    cells = gw * gh
    for t in range(frames):
        idx[t] = (
            np.frombuffer(data, dtype="<u4", count=cells, offset=off)
            .reshape(gh, gw)
            .astype(np.int32)
        )
        off += 4 * cells
        dist[t] = np.frombuffer(data, dtype="<f4", count=cells, offset=off).reshape(
            gh, gw
        )
        off += 4 * cells
    return AnnfStream(
        grid_w=gw, grid_h=gh, patch_size=(pw, ph), indices=idx, distances=dist
    )
