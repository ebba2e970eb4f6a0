import numpy as np
import pytest

from riann.model import ReferenceModel, compute_sorted_lists

SQRT2 = float(np.sqrt(2.0))
# dist((1,0), (sqrt2/2, sqrt2/2)) = sqrt(2 - sqrt(2))
D_AXIS_TO_DIAG = float(np.sqrt(2.0 - np.sqrt(2.0)))  # 0.765366864...


def make_model(refs, patch_size=None) -> ReferenceModel:
    """Hand-built model from explicit unit reference rows."""
    refs = np.asarray(refs, dtype=np.float32)
    sorted_dist, sorted_idx = compute_sorted_lists(refs)
    if patch_size is None:
        patch_size = (refs.shape[1], 1)
    return ReferenceModel(
        refs=refs,
        sorted_dist=sorted_dist,
        sorted_idx=sorted_idx,
        patch_size=patch_size,
    )


@pytest.fixture
def tri_model() -> ReferenceModel:
    """Three unit references in the plane: two axes and the diagonal."""
    s = SQRT2 / 2.0
    return make_model([[1.0, 0.0], [0.0, 1.0], [s, s]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_unit_rows(rng, n, dim) -> np.ndarray:
    rows = rng.normal(size=(n, dim))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return rows.astype(np.float32)
