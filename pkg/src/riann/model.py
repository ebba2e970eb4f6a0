"""Reference dictionary construction and the sorted pairwise-distance structure.

A reference model is a fixed set of ``n`` unit-norm patches together with,
for each reference, the ascending list of its distances to all other
references.  That structure is what lets a ring query run as one distance
calculation plus two binary searches.  Building it costs O(n^2) time and
memory, so the builder enforces a size cap.
"""

from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, FormatError, ModelCapacityError
from .patches import EUCLIDEAN, Metric, extract_patches, get_metric, normalize_rows

# Refuse reference sets at or beyond this size: the sorted structure needs
# n^2 * 8 bytes, which at 20k references is already ~3.2 GB.
DEFAULT_REF_CAP = 20_000

# Representatives closer than this after normalization are duplicates.
DEDUP_EPS = 1e-9

MODEL_MAGIC = b"RIAN"
MODEL_VERSION = 1


@dataclass(eq=False)
class ClusterNode:
    members: np.ndarray  # indices into the patch array this tree was built over
    split_dim: int = -1
    threshold: float = 0.0
    left: "ClusterNode | None" = None
    right: "ClusterNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass(eq=False)
class ClusterTree:
    """Binary median-split tree over patches; leaves partition the input."""

    root: ClusterNode
    leaves: list[ClusterNode] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.leaves)


@dataclass(frozen=True, eq=False)
class ReferenceModel:
    """The immutable search structure: unit references plus sorted distance rows.

    ``sorted_dist[i]`` is non-decreasing and starts with the self-distance 0;
    ``sorted_idx[i][p]`` names the reference at that position.  Distances are
    float32-quantized (the file format precision) but held as float64 so that
    binary-search bounds compare exactly.
    """

    refs: np.ndarray  # (n, dim) float32, unit rows
    sorted_dist: np.ndarray  # (n, n) float64, values exactly representable in float32
    sorted_idx: np.ndarray  # (n, n) int32
    patch_size: tuple[int, int]
    channels: int = 1
    metric_id: int = 0

    @property
    def n(self) -> int:
        return int(self.refs.shape[0])

    @property
    def dim(self) -> int:
        return int(self.refs.shape[1])

    @property
    def metric(self) -> Metric:
        return get_metric(self.metric_id)


def _lower_median(sorted_rows: np.ndarray) -> np.ndarray:
    # Even counts take the lower of the two middle values: deterministic and
    # never introduces values absent from the data.
    k = sorted_rows.shape[0]
    return sorted_rows[(k - 1) // 2]


def build_cluster_tree(values: np.ndarray, target_leaves: int) -> ClusterTree:
    """Cluster patches with repeated median splits until ``target_leaves``.

    Each split acts on the currently largest leaf: project members onto the
    dimension of maximal variance and send values <= the member median left.
    Leaves that cannot split (singletons, or duplicates that would leave one
    side empty) are left as-is, so degenerate inputs may yield fewer leaves
    than requested.
    """
    values = np.asarray(values, dtype=np.float32)
    if values.ndim != 2 or values.shape[0] == 0:
        raise ValueError("cannot cluster an empty patch set")
    if target_leaves < 1:
        raise ValueError(f"target_leaves must be >= 1, got {target_leaves}")

    root = ClusterNode(members=np.arange(values.shape[0], dtype=np.int64))
    heap: list[tuple[int, int, ClusterNode]] = [(-len(root.members), 0, root)]
    seq = 1
    leaf_count = 1
    while heap and leaf_count < target_leaves:
        _, _, node = heapq.heappop(heap)
        if len(node.members) < 2:
            continue
        member_vals = values[node.members].astype(np.float64)
        variances = member_vals.var(axis=0)
        dim = int(np.argmax(variances))
        if variances[dim] <= 0.0:
            continue  # all members identical
        col = member_vals[:, dim]
        threshold = float(_lower_median(np.sort(col)))
        left_mask = col <= threshold
        if left_mask.all():
            continue  # duplicates pile onto the median; split makes no progress
        node.split_dim = dim
        node.threshold = threshold
        node.left = ClusterNode(members=node.members[left_mask])
        node.right = ClusterNode(members=node.members[~left_mask])
        leaf_count += 1
        for child in (node.left, node.right):
            heapq.heappush(heap, (-len(child.members), seq, child))
            seq += 1

    leaves: list[ClusterNode] = []
    stack = [root]
    while stack:
        node = stack.pop()
        if node.is_leaf:
            leaves.append(node)
        else:
            # push right first so left comes off the stack first
            stack.append(node.right)  # type: ignore[arg-type]
            stack.append(node.left)  # type: ignore[arg-type]
    return ClusterTree(root=root, leaves=leaves)


def cluster_representatives(tree: ClusterTree, values: np.ndarray) -> np.ndarray:
    """One unit-norm representative per leaf: element-wise median, normalized.

    Degenerate medians (magnitude below the zero threshold) come back as
    all-zero rows; the model builder drops those.
    """
    values = np.asarray(values, dtype=np.float32)
    medians = np.empty((len(tree.leaves), values.shape[1]), dtype=np.float32)
    for k, leaf in enumerate(tree.leaves):
        medians[k] = _lower_median(np.sort(values[leaf.members], axis=0))
    unit, _ = normalize_rows(medians)
    return unit


def compute_sorted_lists(
    refs: np.ndarray, metric: Metric = EUCLIDEAN
) -> tuple[np.ndarray, np.ndarray]:
    """Per-reference ascending distance rows with aligned index permutations.

    Distance ties break by ascending reference index, except that position 0
    of row i is always the self-entry (0, i).  Row values are quantized to
    float32, matching the serialized precision exactly.
    """
    refs = np.asarray(refs, dtype=np.float32)
    n = refs.shape[0]
    if n == 0:
        raise ValueError("cannot build sorted lists over an empty reference set")
    sorted_dist = np.empty((n, n), dtype=np.float64)
    sorted_idx = np.empty((n, n), dtype=np.int32)
    for i in range(n):
        row = metric.one_to_many(refs[i], refs)
        row = row.astype(np.float32).astype(np.float64)
        order = np.argsort(row, kind="stable")
        if order[0] != i:
            # Exact duplicates of reference i sort ahead of it; keep the
            # self-entry first, preserving ascending order among the rest.
            pos = int(np.flatnonzero(order == i)[0])
            order[1 : pos + 1] = order[0:pos]
            order[0] = i
        sorted_idx[i] = order
        sorted_dist[i] = row[order]
    return sorted_dist, sorted_idx


def _dedup_unit_rows(rows: np.ndarray, tol: float = DEDUP_EPS) -> tuple[np.ndarray, np.ndarray]:
    """Group rows closer than ``tol`` and keep the lowest index of each group.

    Returns ``(keep, canon)`` where ``keep`` is the ascending array of kept
    row indices and ``canon[i]`` is the kept index representing row i.
    Closeness is resolved on lexicographically sorted rows, so only
    neighborhoods with first-coordinate gaps <= tol need pairwise checks.
    """
    m = rows.shape[0]
    canon = np.arange(m, dtype=np.int64)

    def find(i: int) -> int:
        while canon[i] != i:
            canon[i] = canon[canon[i]]
            i = int(canon[i])
        return i

    order = np.lexsort(rows.T[::-1])
    first = rows[order, 0].astype(np.float64)
    run_start = 0
    for pos in range(1, m + 1):
        if pos == m or first[pos] - first[pos - 1] > tol:
            run = order[run_start:pos]
            if len(run) > 1:
                sub = rows[run].astype(np.float64)
                for a in range(len(run)):
                    diff = sub[a + 1 :] - sub[a]
                    close = np.sqrt(np.sum(diff * diff, axis=1)) < tol
                    for b in np.flatnonzero(close):
                        ra, rb = find(int(run[a])), find(int(run[a + 1 + b]))
                        if ra != rb:
                            lo, hi = min(ra, rb), max(ra, rb)
                            canon[hi] = lo
            run_start = pos
    roots = np.array([find(i) for i in range(m)], dtype=np.int64)
    keep = np.unique(roots)
    remap = {int(r): k for k, r in enumerate(keep)}
    canon_kept = np.array([remap[int(r)] for r in roots], dtype=np.int64)
    return keep, canon_kept


def build_model_from_patches(
    raw_values: np.ndarray,
    model_size: int,
    patch_size: tuple[int, int],
    channels: int = 1,
    metric_id: int = 0,
    max_refs: int = DEFAULT_REF_CAP,
) -> tuple[ReferenceModel, np.ndarray]:
    """Cluster raw patches and assemble the searchable model.

    Returns the model plus an assignment array mapping every input patch to
    its reference index (or -1 where the cluster representative degenerated
    to zero and was dropped).
    """
    raw_values = np.asarray(raw_values, dtype=np.float32)
    if raw_values.ndim != 2 or raw_values.shape[0] == 0:
        raise ValueError("model source yielded no patches")
    if model_size < 1:
        raise ValueError(f"model_size must be >= 1, got {model_size}")
    if model_size >= max_refs:
        raise ModelCapacityError(
            f"model_size {model_size} hits the reference cap {max_refs}: the sorted "
            f"distance structure grows as O(n^2) and would need "
            f"~{2 * 8 * model_size * model_size / 1e9:.1f} GB"
        )

    tree = build_cluster_tree(raw_values, min(model_size, raw_values.shape[0]))
    reps = cluster_representatives(tree, raw_values)

    nonzero = np.flatnonzero(np.any(reps != 0.0, axis=1))
    if nonzero.size == 0:
        raise ValueError("all cluster representatives degenerated to zero patches")
    keep_rel, canon_rel = _dedup_unit_rows(reps[nonzero])
    kept_leaves = nonzero[keep_rel]

    # leaf -> final reference index (-1 for dropped zero representatives)
    leaf_to_ref = np.full(len(tree.leaves), -1, dtype=np.int64)
    leaf_to_ref[nonzero] = canon_rel

    refs = reps[kept_leaves]
    sorted_dist, sorted_idx = compute_sorted_lists(refs, get_metric(metric_id))
    model = ReferenceModel(
        refs=refs,
        sorted_dist=sorted_dist,
        sorted_idx=sorted_idx,
        patch_size=(int(patch_size[0]), int(patch_size[1])),
        channels=channels,
        metric_id=metric_id,
    )

    assignments = np.full(raw_values.shape[0], -1, dtype=np.int64)
    for leaf_id, leaf in enumerate(tree.leaves):
        assignments[leaf.members] = leaf_to_ref[leaf_id]
    return model, assignments


def build_local_model(
    frame: np.ndarray,
    model_size: int,
    patch_size: tuple[int, int] = (8, 8),
    metric_id: int = 0,
    max_refs: int = DEFAULT_REF_CAP,
) -> tuple[ReferenceModel, np.ndarray]:
    """Build a model from all patches of a single frame.

    The assignment array aligns with the frame's dense row-major patch grid,
    which is what effect tables need to locate each reference's members.
    """
    grid = extract_patches(frame, patch_size, stride=1)
    return build_model_from_patches(
        grid.values, model_size, patch_size, metric_id=metric_id, max_refs=max_refs
    )


def sample_global_patches(
    images: list[np.ndarray],
    raw_patches: int,
    patch_size: tuple[int, int] = (8, 8),
    seed: int = 0,
) -> np.ndarray:
    """Sample patch windows uniformly (without replacement) across images."""
    if not images:
        raise ValueError("global model source needs at least one image")
    pw, ph = patch_size
    counts = []
    for img in images:
        h, w = np.asarray(img).shape[:2]
        if w < pw or h < ph:
            raise DimensionError(f"image {w}x{h} smaller than patch {pw}x{ph}")
        counts.append((w - pw + 1) * (h - ph + 1))
    total = int(np.sum(counts))
    raw_patches = min(raw_patches, total)
    if raw_patches < 1:
        raise ValueError("raw_patches must be >= 1")

    rng = np.random.default_rng(seed)
    if raw_patches == total:
        picks = np.arange(total, dtype=np.int64)
    elif raw_patches > total // 2:
        picks = np.sort(rng.permutation(total)[:raw_patches])
    else:
        chosen: set[int] = set()
        while len(chosen) < raw_patches:
            for v in rng.integers(0, total, size=raw_patches - len(chosen)):
                chosen.add(int(v))
                if len(chosen) == raw_patches:
                    break
        picks = np.sort(np.fromiter(chosen, dtype=np.int64))

    offsets = np.cumsum([0] + counts)
    out = np.empty((raw_patches, pw * ph), dtype=np.float32)
    for k, flat in enumerate(picks):
        img_id = int(np.searchsorted(offsets, flat, side="right") - 1)
        local = int(flat - offsets[img_id])
        img = np.asarray(images[img_id], dtype=np.float32)
        per_row = img.shape[1] - pw + 1
        y, x = divmod(local, per_row)
        out[k] = img[y : y + ph, x : x + pw].reshape(-1)
    return out


def build_global_model(
    images: list[np.ndarray],
    raw_patches: int,
    model_size: int,
    patch_size: tuple[int, int] = (8, 8),
    seed: int = 0,
    metric_id: int = 0,
    max_refs: int = DEFAULT_REF_CAP,
) -> ReferenceModel:
    """Build a model from patches sampled randomly across a set of images."""
    raw = sample_global_patches(images, raw_patches, patch_size, seed)
    model, _ = build_model_from_patches(
        raw, model_size, patch_size, metric_id=metric_id, max_refs=max_refs
    )
    return model


def build_model(
    source: np.ndarray | list[np.ndarray],
    model_size: int,
    patch_size: tuple[int, int] = (8, 8),
    seed: int = 0,
    raw_patches: int | None = None,
    metric_id: int = 0,
    max_refs: int = DEFAULT_REF_CAP,
) -> ReferenceModel:
    """Build a reference model from either source kind.

    A single 2-D frame builds a local model from all of its patches; a list
    of frames builds a global model from ``raw_patches`` randomly sampled
    windows (required for the global form).
    """
    if isinstance(source, np.ndarray) and source.ndim == 2:
        model, _ = build_local_model(
            source, model_size, patch_size, metric_id=metric_id, max_refs=max_refs
        )
        return model
    if raw_patches is None:
        raise ValueError("global sources require raw_patches")
    return build_global_model(
        list(source), raw_patches, model_size, patch_size, seed, metric_id, max_refs
    )


def serialize_model(model: ReferenceModel) -> bytes:
    """Encode a model in the RIAN container (little-endian, float32 payload)."""
    pw, ph = model.patch_size
    header = MODEL_MAGIC + struct.pack(
        "<HIHHBB", MODEL_VERSION, model.n, pw, ph, model.channels, model.metric_id
    )
    return b"".join(
        (
            header,
            np.ascontiguousarray(model.refs, dtype="<f4").tobytes(),
            np.ascontiguousarray(model.sorted_dist, dtype="<f4").tobytes(),
            np.ascontiguousarray(model.sorted_idx, dtype="<u4").tobytes(),
        )
    )


def deserialize_model(data: bytes) -> ReferenceModel:
    """Decode a RIAN container; the inverse of :func:`serialize_model`."""
    header_len = 4 + struct.calcsize("<HIHHBB")
    if len(data) < header_len:
        raise FormatError("model file truncated inside the header")
    if data[:4] != MODEL_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {MODEL_MAGIC!r}")
    version, n, pw, ph, channels, metric_id = struct.unpack(
        "<HIHHBB", data[4:header_len]
    )
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model version {version}")
    dim = pw * ph * channels
    expected = header_len + 4 * (n * dim + 2 * n * n)
    if len(data) != expected:
        raise FormatError(
            f"model payload length {len(data)} does not match header "
            f"(n={n}, dim={dim} requires {expected} bytes)"
        )
    off = header_len
    refs = np.frombuffer(data, dtype="<f4", count=n * dim, offset=off).reshape(n, dim)
    off += 4 * n * dim
    dist = np.frombuffer(data, dtype="<f4", count=n * n, offset=off).reshape(n, n)
    off += 4 * n * n
    idx = np.frombuffer(data, dtype="<u4", count=n * n, offset=off).reshape(n, n)
    return ReferenceModel(
        refs=refs.astype(np.float32),
        sorted_dist=dist.astype(np.float64),
        sorted_idx=idx.astype(np.int32),
        patch_size=(pw, ph),
        channels=channels,
        metric_id=metric_id,
    )


def save_model(path, model: ReferenceModel) -> None:
    with open(path, "wb") as f:
        f.write(serialize_model(model))


def load_model(path) -> ReferenceModel:
    with open(path, "rb") as f:
        return deserialize_model(f.read())


def model_memory_bytes(n: int, dim: int) -> int:
    """Serialized footprint of a model of the given size."""
    return 4 * (n * dim + 2 * n * n)
