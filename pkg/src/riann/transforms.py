"""Patch replacement, overlap blending, and effect transfer.

A matched field turns back into pixels by pasting one payload patch per grid
position and averaging wherever windows overlap.  Payloads come in three
kinds: the model's own unit references (reconstruction, rescaled by each
query's norm), externally transformed patches (full-patch), and chroma
planes married to the input's luminance (chroma-pair, for colorization).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import AnnField
from .errors import DimensionError
from .model import ReferenceModel, _lower_median
from .patches import extract_patches, normalize_rows

KIND_RECONSTRUCTION = "reconstruction"
KIND_CHROMA = "chroma-pair"
KIND_FULL = "full-patch"
_KINDS = (KIND_RECONSTRUCTION, KIND_CHROMA, KIND_FULL)


@dataclass(frozen=True)
class EffectTable:
    """Per-reference payload patches, aligned with model indices.

    Payload rows are flattened pw*ph patches; chroma payloads hold two such
    planes back to back (first channel then second).
    """

    payloads: np.ndarray  # (n, payload_dim) float32
    payload_kind: str
    patch_size: tuple[int, int]

    def __post_init__(self):
        if self.payload_kind not in _KINDS:
            raise ValueError(f"unknown payload kind {self.payload_kind!r}")
        pw, ph = self.patch_size
        per_kind = pw * ph * (2 if self.payload_kind == KIND_CHROMA else 1)
        if self.payloads.ndim != 2 or self.payloads.shape[1] != per_kind:
            raise DimensionError(
                f"{self.payload_kind} payloads must be (n, {per_kind}), got "
                f"{self.payloads.shape}"
            )

    @property
    def n(self) -> int:
        return int(self.payloads.shape[0])


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to nearest integer, halves away from zero (so 0.5 -> 1, -0.5 -> -1)."""
    x = np.asarray(x)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


def quantize_u8(x: np.ndarray) -> np.ndarray:
    return np.clip(round_half_away(x), 0, 255).astype(np.uint8)


def rgb_to_ycocg(rgb: np.ndarray) -> np.ndarray:
    """Reversible integer luminance/chroma split of an RGB raster.

    Output channel 0 is luminance in the input's value range; channels 1 and
    2 (the chroma pair) may be negative.  Exact integer inverse is
    :func:`ycocg_to_rgb`.
    """
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise DimensionError(f"expected (h, w, 3) raster, got {rgb.shape}")
    r = rgb[..., 0].astype(np.int64)
    g = rgb[..., 1].astype(np.int64)
    b = rgb[..., 2].astype(np.int64)
    co = r - b
    t = b + (co >> 1)
    cg = g - t
    y = t + (cg >> 1)
    return np.stack([y, co, cg], axis=-1)


def ycocg_to_rgb(ycocg: np.ndarray) -> np.ndarray:
    ycocg = np.asarray(ycocg)
    if ycocg.ndim != 3 or ycocg.shape[2] != 3:
        raise DimensionError(f"expected (h, w, 3) raster, got {ycocg.shape}")
    y = ycocg[..., 0].astype(np.int64)
    co = ycocg[..., 1].astype(np.int64)
    cg = ycocg[..., 2].astype(np.int64)
    t = y - (cg >> 1)
    g = cg + t
    b = t - (co >> 1)
    r = b + co
    return np.stack([r, g, b], axis=-1)


def luminance(rgb: np.ndarray) -> np.ndarray:
    """Integer luminance plane of an RGB raster."""
    return rgb_to_ycocg(rgb)[..., 0]


def reconstruction_table(model: ReferenceModel) -> EffectTable:
    """Identity payloads: the model's own unit references."""
    return EffectTable(
        payloads=np.array(model.refs, dtype=np.float32),
        payload_kind=KIND_RECONSTRUCTION,
        patch_size=model.patch_size,
    )


def build_effect_table(
    model: ReferenceModel,
    source_frame_raw: np.ndarray,
    source_frame_transformed: np.ndarray,
    tree_assignments: np.ndarray,
) -> EffectTable:
    """Precompute transformed payloads from an aligned keyframe pair.

    ``tree_assignments`` maps each dense patch of the raw keyframe to its
    reference (as returned by the local model builder); the payload for a
    reference is the element-wise lower median over its members' transformed
    patches.  A grayscale transformed frame yields full-patch payloads; an
    RGB (or 2-plane) transformed frame yields chroma-pair payloads carrying
    the two chroma channels of the luminance/chroma split.
    """
    raw = np.asarray(source_frame_raw)
    fx = np.asarray(source_frame_transformed)
    if tree_assignments is None:
        raise ValueError(
            "effect tables need the cluster membership of a locally built model"
        )
    if fx.shape[:2] != raw.shape[:2]:
        raise DimensionError(
            f"keyframe pair geometry mismatch: raw {raw.shape[:2]}, "
            f"transformed {fx.shape[:2]}"
        )

    if fx.ndim == 2:
        kind = KIND_FULL
        planes = fx.astype(np.float32)[..., None]
    elif fx.ndim == 3 and fx.shape[2] == 3:
        kind = KIND_CHROMA
        planes = rgb_to_ycocg(fx)[..., 1:].astype(np.float32)
    elif fx.ndim == 3 and fx.shape[2] == 2:
        kind = KIND_CHROMA
        planes = fx.astype(np.float32)
    else:
        raise DimensionError(f"unsupported transformed keyframe shape {fx.shape}")

    pw, ph = model.patch_size
    per_plane = extract_patches(planes[..., 0], (pw, ph)).values
    patch_rows = [per_plane]
    for c in range(1, planes.shape[2]):
        patch_rows.append(extract_patches(planes[..., c], (pw, ph)).values)
    fx_patches = np.concatenate(patch_rows, axis=1)

    assignments = np.asarray(tree_assignments)
    if assignments.shape[0] != fx_patches.shape[0]:
        raise DimensionError(
            f"{assignments.shape[0]} assignments for {fx_patches.shape[0]} "
            "keyframe patches: model was not built from this keyframe"
        )

    payloads = np.zeros((model.n, fx_patches.shape[1]), dtype=np.float32)
    for ref in range(model.n):
        members = np.flatnonzero(assignments == ref)
        if members.size == 0:
            raise ValueError(f"reference {ref} has no keyframe members")
        payloads[ref] = _lower_median(np.sort(fx_patches[members], axis=0))
    return EffectTable(payloads=payloads, payload_kind=kind, patch_size=model.patch_size)


def _blend_planes(
    payload_rows: np.ndarray, gw: int, gh: int, pw: int, ph: int, out_h: int, out_w: int
) -> np.ndarray:
    """Uniform average of overlapping windows, one output plane per channel."""
    channels = payload_rows.shape[1] // (pw * ph)
    placed = payload_rows.reshape(gh, gw, channels, ph, pw)
    acc = np.zeros((channels, out_h, out_w), dtype=np.float32)
    cnt = np.zeros((out_h, out_w), dtype=np.float32)
    for dy in range(ph):
        for dx in range(pw):
            acc[:, dy : dy + gh, dx : dx + gw] += np.moveaxis(
                placed[:, :, :, dy, dx], 2, 0
            )
            cnt[dy : dy + gh, dx : dx + gw] += 1.0
    return acc / cnt


def apply_effect(
    frame: np.ndarray,
    field: AnnField,
    table: EffectTable,
    model: ReferenceModel,
) -> np.ndarray:
    """Replace every patch with its match's payload and blend overlaps.

    Reconstruction payloads are rescaled by each query patch's norm before
    placement; the other kinds place payloads as-is.  Grayscale kinds return
    a float32 raster in the input's value range.  The chroma kind returns a
    quantized uint8 RGB raster built from the input's luminance (intensities
    in [0, 1], mapped back to 8-bit) plus the blended chroma planes, since
    the integer color split needs whole numbers.
    """
    frame = np.asarray(frame)
    if frame.ndim != 2:
        raise DimensionError(f"expected a single-plane frame, got shape {frame.shape}")
    if table.n != model.n:
        raise DimensionError(
            f"table holds {table.n} payloads for a model of {model.n} references"
        )
    if table.patch_size != model.patch_size:
        raise DimensionError(
            f"table patch size {table.patch_size} does not match model "
            f"{model.patch_size}"
        )
    grid = extract_patches(frame, model.patch_size)
    if (grid.width, grid.height) != (field.width, field.height):
        raise DimensionError(
            f"frame yields grid {grid.width}x{grid.height}, field is "
            f"{field.width}x{field.height}"
        )

    idx = field.indices.reshape(-1)
    rows = table.payloads[idx]
    if table.payload_kind == KIND_RECONSTRUCTION:
        _, norms = normalize_rows(grid.values)
        rows = rows * norms.astype(np.float32)[:, None]

    pw, ph = model.patch_size
    h, w = frame.shape
    planes = _blend_planes(rows, grid.width, grid.height, pw, ph, h, w)

    if table.payload_kind == KIND_CHROMA:
        ycocg = np.stack(
            [
                round_half_away(frame.astype(np.float64) * 255.0),
                round_half_away(planes[0]),
                round_half_away(planes[1]),
            ],
            axis=-1,
        )
        return np.clip(ycocg_to_rgb(ycocg), 0, 255).astype(np.uint8)
    return planes[0]


def reconstruct_frame(
    frame: np.ndarray, field: AnnField, model: ReferenceModel
) -> np.ndarray:
    """Rebuild a frame from its matches alone (identity payloads)."""
    return apply_effect(frame, field, reconstruction_table(model), model)


def reconstruction_error(gt: np.ndarray, rec: np.ndarray) -> float:
    """Relative error between rasters: ratio of difference norm to input norm."""
    gt = np.asarray(gt, dtype=np.float64)
    rec = np.asarray(rec, dtype=np.float64)
    if gt.shape != rec.shape:
        raise DimensionError(f"raster shapes differ: {gt.shape} vs {rec.shape}")
    denom = float(np.linalg.norm(gt))
    if denom == 0.0:
        raise ValueError("reconstruction error undefined for all-zero ground truth")
    return float(np.linalg.norm(gt - rec) / denom)
