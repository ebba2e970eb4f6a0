"""Per-query candidate narrowing by intersecting distance rings.

Each query starts from the position's previous match: the distance to it
fixes the first ring's radius, and every reference falling inside that ring
becomes a candidate.  While the candidate set stays large, rings around
randomly drawn candidate anchors cut it down, and the survivors are scanned
directly.  Every ring costs one distance evaluation plus two binary searches
on a precomputed sorted row, which is what makes the whole query cheap
compared to a linear scan.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .model import ReferenceModel

DEFAULT_L = 20
DEFAULT_ALPHA = 0.25
DEFAULT_MAX_RINGS = 8


@dataclass(frozen=True)
class SearchParams:
    """Query-loop knobs.

    L is the candidate-set size under which ring drawing stops and the
    survivors are scanned directly.  alpha sets each ring's half-width as a
    fraction of the anchor distance.  max_rings caps the total number of
    rings (the initial one included) so ties or duplicates cannot spin the
    loop forever.  seed feeds per-query random anchor choice.
    """

    L: int = DEFAULT_L
    alpha: float = DEFAULT_ALPHA
    max_rings: int = DEFAULT_MAX_RINGS
    seed: int = 0

    def __post_init__(self):
        if self.L < 1:
            raise ValueError(f"L must be >= 1, got {self.L}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.max_rings < 1:
            raise ValueError(f"max_rings must be >= 1, got {self.max_rings}")


@dataclass(frozen=True)
class QueryResult:
    match_index: int
    match_distance: float
    rings_drawn: int
    distance_evals: int
    candidates_final: int
    # The indices actually scanned for the argmin (final candidates plus the
    # previous match), kept so callers can re-verify optimality in scope.
    scanned: np.ndarray = None  # type: ignore[assignment]


def ring_candidates(
    model: ReferenceModel, anchor: int, d: float, eps: float
) -> np.ndarray:
    """References whose distance to ``anchor`` lies in [d - eps, d + eps].

    Two binary searches on the anchor's sorted row bound a contiguous window;
    the matching slice of the index row is returned (ordered by distance from
    the anchor, not by index).
    """
    n = model.n
    if not 0 <= anchor < n:
        raise IndexError(f"anchor {anchor} out of range for {n} references")
    if d < 0 or eps < 0:
        raise ValueError("ring radius and width must be nonnegative")
    row = model.sorted_dist[anchor]
    lo = int(np.searchsorted(row, d - eps, side="left"))
    hi = int(np.searchsorted(row, d + eps, side="right"))
    return model.sorted_idx[anchor, lo:hi]


def riann_query(
    model: ReferenceModel,
    query: np.ndarray,
    prev_index: int,
    params: SearchParams = SearchParams(),
    rng_state=None,
) -> QueryResult:
    """Find an approximate nearest reference for one unit-norm (or zero) query.

    The previous match anchors the first ring with radius equal to its own
    query distance; subsequent rings use uniformly drawn, not-yet-used
    candidates as anchors.  An intersection that would empty the set is
    rolled back and ring drawing stops.  The answer is the exact argmin over
    the surviving candidates plus ``prev_index`` itself, ties resolved toward
    the lowest index, so a query can never do worse than keeping its previous
    match.

    ``rng_state`` may be a Generator or anything accepted as a seed (the
    engine passes a per-position key); defaults to ``params.seed``.
    """
    refs = model.refs
    n = model.n
    query = np.asarray(query)
    if query.shape != (model.dim,):
        raise DimensionError(
            f"query shape {query.shape} does not match model dim {model.dim}"
        )
    if not 0 <= prev_index < n:
        raise IndexError(f"prev_index {prev_index} out of range for {n} references")

    metric = model.metric
    d_prev = float(metric.one_to_many(query, refs[prev_index : prev_index + 1])[0])
    evals = 1
    cand = np.sort(ring_candidates(model, prev_index, d_prev, params.alpha * d_prev))
    rings = 1

    rng = rng_state if isinstance(rng_state, np.random.Generator) else None
    used = [prev_index]
    while cand.size >= params.L and rings < params.max_rings:
        avail = cand[~np.isin(cand, used)]
        if avail.size == 0:
            break
        if rng is None:
            rng = np.random.default_rng(
                params.seed if rng_state is None else rng_state
            )
        anchor = int(avail[rng.integers(avail.size)])
        used.append(anchor)
        d_k = float(metric.one_to_many(query, refs[anchor : anchor + 1])[0])
        evals += 1
        ring = ring_candidates(model, anchor, d_k, params.alpha * d_k)
        narrowed = np.intersect1d(cand, ring, assume_unique=True)
        rings += 1
        if narrowed.size == 0:
            break  # rolling back to the pre-intersection set
        cand = narrowed

    scanned = np.union1d(cand, np.array([prev_index], dtype=cand.dtype))
    dists = metric.one_to_many(query, refs[scanned])
    evals += scanned.size
    best = int(np.argmin(dists))  # first minimum = lowest index (scanned ascending)
    return QueryResult(
        match_index=int(scanned[best]),
        match_distance=float(dists[best]),
        rings_drawn=rings,
        distance_evals=evals,
        candidates_final=int(cand.size),
        scanned=scanned,
    )


def query_rng_key(seed: int, x: int, y: int, t: int) -> tuple[int, int, int, int]:
    """Deterministic per-position seed key: queries can run in any order or
    thread layout and still draw identical anchors."""
    return (seed, x, y, t)
