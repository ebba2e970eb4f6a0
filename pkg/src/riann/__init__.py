"""Streaming approximate-nearest-neighbor fields for video.

Matches every patch of every frame against a fixed dictionary of reference
patches, carrying matches forward in time and refining them with
ring-intersection queries whose cost tracks how much the video actually
changes.  The matched fields drive patch-based reconstruction and keyframe
effect transfer such as colorization.
"""

from .engine import (
    AnnfWriter,
    AnnField,
    FrameStats,
    init_field,
    process_frame,
    read_annf,
    stream_fields,
)
from .errors import DimensionError, FormatError, ModelCapacityError, RiannError
from .evaluation import (
    CoherencyStats,
    EfficiencyReport,
    coherency_stats,
    efficiency_report,
    exact_nn,
    field_exact_oracle,
)
from .model import (
    ReferenceModel,
    build_cluster_tree,
    build_global_model,
    build_local_model,
    build_model,
    load_model,
    save_model,
)
from .patches import EUCLIDEAN, Patch, PatchGrid, distance, extract_patches
from .search import QueryResult, SearchParams, ring_candidates, riann_query
from .transforms import (
    EffectTable,
    apply_effect,
    build_effect_table,
    reconstruct_frame,
    reconstruction_error,
    rgb_to_ycocg,
    ycocg_to_rgb,
)

__version__ = "0.1.0"

__all__ = [
    "AnnField",
    "AnnfWriter",
    "CoherencyStats",
    "DimensionError",
    "EffectTable",
    "EfficiencyReport",
    "EUCLIDEAN",
    "FormatError",
    "FrameStats",
    "ModelCapacityError",
    "Patch",
    "PatchGrid",
    "QueryResult",
    "ReferenceModel",
    "RiannError",
    "SearchParams",
    "apply_effect",
    "build_cluster_tree",
    "build_effect_table",
    "build_global_model",
    "build_local_model",
    "build_model",
    "coherency_stats",
    "distance",
    "efficiency_report",
    "exact_nn",
    "extract_patches",
    "field_exact_oracle",
    "init_field",
    "load_model",
    "process_frame",
    "read_annf",
    "reconstruct_frame",
    "reconstruction_error",
    "rgb_to_ycocg",
    "riann_query",
    "ring_candidates",
    "save_model",
    "stream_fields",
    "ycocg_to_rgb",
    "__version__",
]
