import numpy as np
import pytest
from scipy.spatial.distance import cdist

from riann.engine import FrameStats
from riann.errors import DimensionError
from riann.evaluation import (
    CoherencyStats,
    coherency_stats,
    efficiency_report,
    exact_nn,
    field_exact_oracle,
    median_pairwise_reference_distance,
)
from riann.model import build_local_model
from riann.patches import extract_patches, normalize_rows
from riann.synthetic import smooth_texture

from conftest import SQRT2, make_model, random_unit_rows


class TestExactNN:
    def test_exact_hits(self, tri_model):
        assert exact_nn(tri_model.refs[2], tri_model) == (2, 0.0)
        assert exact_nn(tri_model.refs[0], tri_model) == (0, 0.0)

    def test_tie_takes_lowest_index(self):
        refs = np.array([[1, 0], [0, 1], [1, 0]], dtype=np.float32)
        model = make_model(refs)
        idx, dist = exact_nn(np.array([1.0, 0.0], dtype=np.float32), model)
        assert (idx, dist) == (0, 0.0)

    def test_agrees_with_batch_scan(self, rng):
        refs = random_unit_rows(rng, 60, 10)
        model = make_model(refs)
        queries = random_unit_rows(rng, 40, 10)
        dmat = cdist(queries.astype(np.float64), refs.astype(np.float64))
        for k in range(40):
            idx, dist = exact_nn(queries[k], model)
            assert idx == int(np.argmin(dmat[k]))
            assert dist == pytest.approx(float(dmat[k].min()), rel=1e-12)

    def test_dimension_mismatch(self, tri_model):
        with pytest.raises(DimensionError):
            exact_nn(np.ones(5, dtype=np.float32), tri_model)


class TestFieldExactOracle:
    def test_every_position_is_optimal(self, rng):
        frame = smooth_texture(10, 9, cells=3, seed=4)
        model, _ = build_local_model(frame, 9, patch_size=(4, 4))
        field = field_exact_oracle(frame, model)
        assert (field.width, field.height) == (7, 6)

        unit, _ = normalize_rows(extract_patches(frame, (4, 4)).values)
        dmat = cdist(unit.astype(np.float64), model.refs.astype(np.float64))
        assert np.array_equal(field.indices.reshape(-1), np.argmin(dmat, axis=1))
        assert field.distances.reshape(-1) == pytest.approx(
            dmat.min(axis=1), rel=1e-12
        )


class TestCoherencyStats:
    def test_flipping_matches_on_a_two_reference_line(self, tri_model):
        # 1x3 frames with 2x1 patches: both grid positions swap their exact
        # match between the frames, shift = dist(e0, e1), residual = 0
        frame1 = np.array([[1.0, 0.0, 1.0]], dtype=np.float32)
        frame2 = np.array([[0.0, 1.0, 0.0]], dtype=np.float32)
        model = make_model(tri_model.refs[:2], patch_size=(2, 1))
        stats = coherency_stats([frame1, frame2], model)
        assert stats.samples == 2
        assert stats.excluded == 0
        assert stats.shift_samples == pytest.approx([SQRT2, SQRT2])
        assert stats.residual_samples == pytest.approx([0.0, 0.0], abs=1e-12)

    def test_static_pair_is_fully_excluded(self, tri_model):
        frame = np.array([[1.0, 0.0, 1.0]], dtype=np.float32)
        model = make_model(tri_model.refs[:2], patch_size=(2, 1))
        stats = coherency_stats([frame, frame, frame], model)
        assert stats.samples == 0
        assert stats.excluded == 4

    def test_histograms_count_every_sample(self, rng):
        frame = smooth_texture(12, 12, cells=4, seed=8)
        moved = smooth_texture(12, 12, cells=4, seed=9)
        model, _ = build_local_model(frame, 10, patch_size=(4, 4))
        stats = coherency_stats([frame, moved, frame], model)
        assert int(stats.shift_hist.sum()) == stats.samples
        assert int(stats.residual_hist.sum()) == stats.samples
        assert np.all(np.diff(stats.shift_edges) == pytest.approx(0.1))

    def test_input_validation(self, tri_model):
        frame = np.array([[1.0, 0.0, 1.0]], dtype=np.float32)
        model = make_model(tri_model.refs[:2], patch_size=(2, 1))
        with pytest.raises(ValueError):
            coherency_stats([frame], model)
        with pytest.raises(ValueError):
            coherency_stats([frame, frame], model, bin_width=0.0)

    def test_samples_property(self):
        stats = CoherencyStats(
            shift_hist=np.array([1]),
            shift_edges=np.array([0.0, 0.1]),
            residual_hist=np.array([1]),
            residual_edges=np.array([0.0, 0.1]),
            excluded=3,
            shift_samples=np.array([0.5, 0.7]),
            residual_samples=np.array([0.1, 0.0]),
        )
        assert stats.samples == 2


class TestMedianPairwise:
    def test_tri_model_value(self, tri_model):
        # off-diagonal distances: four axis-to-diagonal, two axis-to-axis;
        # the median of the sorted six is the axis-to-diagonal distance
        want = float(np.float32(np.sqrt(2.0 - SQRT2)))
        assert median_pairwise_reference_distance(tri_model) == pytest.approx(want)

    def test_needs_two_references(self, tri_model):
        model = make_model(tri_model.refs[:1])
        with pytest.raises(ValueError):
            median_pairwise_reference_distance(model)


def _stats(rings, evals, change, queries=10):
    return FrameStats(
        total_rings=rings,
        total_distance_evals=evals,
        mean_candidates=1.0,
        temporal_change=change,
        queries=queries,
    )


class TestEfficiencyReport:
    def test_mean_and_ratio(self):
        report = efficiency_report([_stats(10, 30, 0.0), _stats(12, 50, 1.0)], n=200)
        assert report.frames == 2
        assert report.queries == 20
        assert report.mean_distance_evals == pytest.approx(4.0)
        assert report.brute_force_ratio == pytest.approx(50.0)
        assert report.frames_per_second is None

    def test_monotone_rings_give_perfect_spearman(self):
        up = [_stats(10, 30, 0.1), _stats(20, 30, 0.5), _stats(30, 30, 0.9)]
        assert efficiency_report(up, n=100).rings_change_spearman == pytest.approx(1.0)
        down = [_stats(30, 30, 0.1), _stats(20, 30, 0.5), _stats(10, 30, 0.9)]
        assert efficiency_report(down, n=100).rings_change_spearman == pytest.approx(
            -1.0
        )

    def test_degenerate_spearman_reported_as_none(self):
        flat = [_stats(10, 30, 0.1), _stats(10, 30, 0.5)]
        assert efficiency_report(flat, n=100).rings_change_spearman is None
        single = [_stats(10, 30, 0.1)]
        assert efficiency_report(single, n=100).rings_change_spearman is None

    def test_throughput_passthrough(self):
        report = efficiency_report(
            [_stats(1, 2, 0.0), _stats(1, 2, 0.0)], n=10, elapsed_seconds=0.5
        )
        assert report.frames_per_second == pytest.approx(4.0)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            efficiency_report([], n=10)
        with pytest.raises(ValueError):
            efficiency_report([_stats(1, 2, 0.0)], n=0)
