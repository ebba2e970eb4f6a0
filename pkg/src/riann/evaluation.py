"""Ground-truth oracle and the measurement harness.

Everything here is brute force on purpose: the linear-scan oracle is the
reference answer the ring search is judged against, and the statistics
reproduce measurable properties (temporal coherency, the ring-radius
predictor, distance-evaluation savings) on synthetic desk-scale data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as _scipy_stats

from .engine import AnnField, FrameStats
from .errors import DimensionError
from .model import ReferenceModel
from .patches import extract_patches, normalize_rows

DEFAULT_BIN_WIDTH = 0.1


def exact_nn(query: np.ndarray, model: ReferenceModel) -> tuple[int, float]:
    """Exact nearest reference by full linear scan; ties take the lowest index."""
    query = np.asarray(query)
    if query.shape != (model.dim,):
        raise DimensionError(
            f"query shape {query.shape} does not match model dim {model.dim}"
        )
    dists = model.metric.one_to_many(query, model.refs)
    best = int(np.argmin(dists))
    return best, float(dists[best])


def field_exact_oracle(frame: np.ndarray, model: ReferenceModel) -> AnnField:
    """Ground-truth field: exact_nn at every grid position."""
    grid = extract_patches(frame, model.patch_size)
    unit, _ = normalize_rows(grid.values)
    total = grid.width * grid.height
    indices = np.empty(total, dtype=np.int32)
    distances = np.empty(total, dtype=np.float64)
    for g in range(total):
        indices[g], distances[g] = exact_nn(unit[g], model)
    return AnnField(
        width=grid.width,
        height=grid.height,
        indices=indices.reshape(grid.height, grid.width),
        distances=distances.reshape(grid.height, grid.width),
    )


@dataclass(frozen=True)
class CoherencyStats:
    """How far exact matches move between consecutive frames.

    shift samples are distances between a position's references at t-1 and
    t; residual samples measure how well the query distance to the old match
    predicts that shift.  Positions whose match did not change are excluded
    (counted in ``excluded``).  Raw samples are kept alongside the
    histograms so medians and quantiles stay available.
    """

    shift_hist: np.ndarray
    shift_edges: np.ndarray
    residual_hist: np.ndarray
    residual_edges: np.ndarray
    excluded: int
    shift_samples: np.ndarray
    residual_samples: np.ndarray

    @property
    def samples(self) -> int:
        return int(self.shift_samples.size)


def _histogram(samples: np.ndarray, bin_width: float) -> tuple[np.ndarray, np.ndarray]:
    top = float(samples.max()) if samples.size else bin_width
    edges = np.arange(0.0, top + bin_width, bin_width)
    if len(edges) < 2:
        edges = np.array([0.0, bin_width])
    hist, edges = np.histogram(samples, bins=edges)
    return hist, edges


def coherency_stats(
    video, model: ReferenceModel, bin_width: float = DEFAULT_BIN_WIDTH
) -> CoherencyStats:
    """Measure match drift across a clip using exact fields.

    For every consecutive-frame pair and grid position with differing exact
    matches r_prev and r_cur, record the reference shift dist(r_prev, r_cur)
    and the predictor residual |dist(r_prev, r_cur) - dist(r_prev, q)| where
    q is the current normalized query patch.
    """
    frames = [np.asarray(f) for f in video]
    if len(frames) < 2:
        raise ValueError(f"coherency needs at least 2 frames, got {len(frames)}")
    if bin_width <= 0:
        raise ValueError(f"bin_width must be positive, got {bin_width}")

    metric = model.metric
    refs = model.refs
    shifts: list[float] = []
    residuals: list[float] = []
    excluded = 0

    prev_field = field_exact_oracle(frames[0], model)
    for t in range(1, len(frames)):
        cur_field = field_exact_oracle(frames[t], model)
        grid = extract_patches(frames[t], model.patch_size)
        unit, _ = normalize_rows(grid.values)
        prev_idx = prev_field.indices.reshape(-1)
        cur_idx = cur_field.indices.reshape(-1)
        for g in range(prev_idx.size):
            i, j = int(prev_idx[g]), int(cur_idx[g])
            if i == j:
                excluded += 1
                continue
            shift = float(metric(refs[i], refs[j]))
            predictor = float(metric(refs[i], unit[g]))
            shifts.append(shift)
            residuals.append(abs(shift - predictor))
        prev_field = cur_field

    shift_samples = np.asarray(shifts, dtype=np.float64)
    residual_samples = np.asarray(residuals, dtype=np.float64)
    shift_hist, shift_edges = _histogram(shift_samples, bin_width)
    residual_hist, residual_edges = _histogram(residual_samples, bin_width)
    return CoherencyStats(
        shift_hist=shift_hist,
        shift_edges=shift_edges,
        residual_hist=residual_hist,
        residual_edges=residual_edges,
        excluded=excluded,
        shift_samples=shift_samples,
        residual_samples=residual_samples,
    )


def median_pairwise_reference_distance(model: ReferenceModel) -> float:
    """Median over all distinct reference pairs (taken from the sorted rows)."""
    n = model.n
    if n < 2:
        raise ValueError("need at least 2 references for pairwise distances")
    return float(np.median(model.sorted_dist[:, 1:]))


@dataclass(frozen=True)
class EfficiencyReport:
    """Search cost over a run, in platform-independent distance evaluations.

    brute_force_ratio is references-per-query divided by evaluations actually
    spent, i.e. the factor saved versus a linear scan.  Wall-clock throughput
    is carried along when the caller measured it, but never asserted on.
    """

    frames: int
    queries: int
    mean_distance_evals: float
    brute_force_ratio: float
    rings_change_spearman: float | None
    frames_per_second: float | None = None


def efficiency_report(
    frame_stats: list[FrameStats], n: int, elapsed_seconds: float | None = None
) -> EfficiencyReport:
    """Aggregate per-frame stats into the cost summary."""
    if not frame_stats:
        raise ValueError("no frame stats to report on")
    if n < 1:
        raise ValueError(f"model size must be >= 1, got {n}")
    queries = int(sum(s.queries for s in frame_stats))
    evals = int(sum(s.total_distance_evals for s in frame_stats))
    mean_evals = evals / queries

    spearman: float | None = None
    if len(frame_stats) >= 2:
        rings = np.array([s.total_rings for s in frame_stats], dtype=np.float64)
        change = np.array([s.temporal_change for s in frame_stats], dtype=np.float64)
        # constant inputs leave the rank correlation undefined
        if np.ptp(rings) > 0 and np.ptp(change) > 0:
            rho = _scipy_stats.spearmanr(rings, change).statistic
            spearman = None if np.isnan(rho) else float(rho)

    fps: float | None = None
    if elapsed_seconds is not None and elapsed_seconds > 0:
        fps = len(frame_stats) / elapsed_seconds
    return EfficiencyReport(
        frames=len(frame_stats),
        queries=queries,
        mean_distance_evals=mean_evals,
        brute_force_ratio=n / mean_evals,
        rings_change_spearman=spearman,
        frames_per_second=fps,
    )
