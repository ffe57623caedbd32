import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_view, make_view_set
from frailty_metrics.errors import (
    EmptyInput,
    LengthMismatch,
    NoTumorVoxels,
    ZeroSampleCount,
)
from frailty_metrics.views import (
    Plane,
    aggregate_predictions,
    dump_views,
    extract_views,
    sample_views,
    tumor_fraction_weights,
)
from frailty_metrics.volume_io import SegmentationVolume, Volume


def _volume_pair(dims, tumor_at=(0, 0, 0)):
    rng = np.random.default_rng(5)
    image = Volume(dims=dims, data=rng.normal(40, 10, size=dims))
    labels = np.zeros(dims, dtype=np.uint8)
    labels[tumor_at] = 2
    seg = SegmentationVolume(dims=dims, labels=labels, label_counts={2: 1})
    return image, seg


class TestExtractViews:
    def test_cube_has_one_view_per_slice_per_plane(self):
        image, seg = _volume_pair((4, 4, 4))
        vs = extract_views(image, seg, case_id="c")
        assert len(vs) == 12
        assert sum(1 for v in vs.views if v.plane is Plane.AXIAL) == 4
        assert sum(1 for v in vs.views if v.plane is Plane.CORONAL) == 4
        assert sum(1 for v in vs.views if v.plane is Plane.SAGITTAL) == 4

    def test_noncubic_shapes(self):
        image, seg = _volume_pair((2, 3, 4))
        vs = extract_views(image, seg)
        assert len(vs) == 9
        shapes = {Plane.AXIAL: set(), Plane.CORONAL: set(), Plane.SAGITTAL: set()}
        for v in vs.views:
            shapes[v.plane].add(v.hu.shape)
        assert shapes[Plane.AXIAL] == {(2, 3)}
        assert shapes[Plane.CORONAL] == {(2, 4)}
        assert shapes[Plane.SAGITTAL] == {(3, 4)}

    def test_single_slice_tumor_projection(self):
        dims = (4, 4, 4)
        image = Volume(dims=dims, data=np.zeros(dims))
        labels = np.zeros(dims, dtype=np.uint8)
        labels[1, 2, 3] = 2
        labels[2, 2, 3] = 2  # both tumor voxels on axial slice z=3
        seg = SegmentationVolume(dims=dims, labels=labels, label_counts={2: 2})
        vs = extract_views(image, seg)
        axial = [v for v in vs.views if v.plane is Plane.AXIAL]
        assert [int(v.tumor_mask.sum()) for v in axial] == [0, 0, 0, 2]

    def test_channels_match_labels(self):
        dims = (3, 3, 3)
        image = Volume(dims=dims, data=np.arange(27, dtype=float).reshape(dims))
        labels = np.zeros(dims, dtype=np.uint8)
        labels[0, 0, 0] = 1
        labels[1, 1, 1] = 2
        seg = SegmentationVolume(dims=dims, labels=labels, label_counts={1: 1, 2: 1})
        vs = extract_views(image, seg)
        axial0 = vs.views[0]
        assert axial0.kidney_mask[0, 0] == 1
        assert axial0.tumor_mask[0, 0] == 0
        assert np.array_equal(axial0.hu, image.data[:, :, 0])

    def test_no_tumor_propagates(self):
        dims = (2, 2, 2)
        image = Volume(dims=dims, data=np.zeros(dims))
        seg = SegmentationVolume(dims=dims, labels=np.zeros(dims, dtype=np.uint8),
                                 label_counts={0: 8})
        with pytest.raises(NoTumorVoxels):
            extract_views(image, seg)


class TestWeights:
    def test_single_concentrated_slice(self):
        views = [make_view(c) for c in (0, 8, 0, 0)]
        assert np.array_equal(tumor_fraction_weights(views), [0.0, 1.0, 0.0, 0.0])

    def test_uniform_counts(self):
        views = [make_view(2) for _ in range(4)]
        assert np.array_equal(tumor_fraction_weights(views), [0.25] * 4)

    def test_all_zero_counts(self):
        with pytest.raises(NoTumorVoxels):
            tumor_fraction_weights([make_view(0) for _ in range(3)])

    @given(st.lists(st.integers(0, 50), min_size=1, max_size=30)
           .filter(lambda c: sum(c) > 0))
    @settings(max_examples=60, deadline=None)
    def test_normalized_and_nonnegative(self, counts):
        w = tumor_fraction_weights([make_view(c, shape=(8, 8)) for c in counts])
        assert abs(float(w.sum()) - 1.0) < 1e-12
        assert float(w.min()) >= 0.0


class TestSampleViews:
    def test_degenerate_distribution(self):
        vs = make_view_set([0, 5, 0])
        assert np.array_equal(sample_views(vs, 5, seed=123), [1] * 5)

    def test_zero_count_rejected(self):
        with pytest.raises(ZeroSampleCount):
            sample_views(make_view_set([1, 1]), 0, seed=1)

    def test_deterministic_for_seed(self):
        vs = make_view_set([1, 2, 3, 4])
        a = sample_views(vs, 50, seed=777)
        b = sample_views(vs, 50, seed=777)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, sample_views(vs, 50, seed=778))

    def test_law_of_large_numbers(self):
        vs = make_view_set([3, 3])
        draws = sample_views(vs, 10000, seed=7)
        freq0 = float(np.mean(draws == 0))
        assert abs(freq0 - 0.5) < 0.02


class TestAggregate:
    def test_constant_predictions(self):
        assert aggregate_predictions([55.0] * 4, [0.1, 0.2, 0.3, 0.4]) == pytest.approx(55.0, abs=1e-12)

    def test_weighted_mean(self):
        assert aggregate_predictions([60.0, 68.0], [0.25, 0.75]) == 66.0

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            aggregate_predictions([1.0, 2.0, 3.0], [0.5, 0.5])

    def test_empty(self):
        with pytest.raises(EmptyInput):
            aggregate_predictions([], [])

    @given(st.lists(st.floats(1.0, 120.0), min_size=1, max_size=25),
           st.integers(0, 2**32 - 1))
    @settings(max_examples=80, deadline=None)
    def test_bounds_and_permutation_invariance(self, preds, seed):
        rng = np.random.default_rng(seed)
        w = rng.uniform(0.0, 1.0, size=len(preds))
        if w.sum() == 0.0:
            w[0] = 1.0
        w = w / w.sum()
        agg = aggregate_predictions(preds, w)
        slack = 1e-9 * (1.0 + max(abs(p) for p in preds))
        assert min(preds) - slack <= agg <= max(preds) + slack
        perm = rng.permutation(len(preds))
        agg_perm = aggregate_predictions(np.asarray(preds)[perm], w[perm])
        assert agg_perm == agg  # exact, canonical summation order


def test_dump_views_layout(tmp_path, small_volume_pair):
    image, seg = small_volume_pair
    vs = extract_views(image, seg, case_id="case_7")
    dump_views(vs, tmp_path / "v.bin", tmp_path / "v.json")
    sidecar = json.loads((tmp_path / "v.json").read_text())
    blob = (tmp_path / "v.bin").read_bytes()
    assert sidecar["case_id"] == "case_7"
    assert len(sidecar["views"]) == 12
    assert len(blob) == sidecar["total_bytes"]
    first = sidecar["views"][0]
    rows, cols = first["shape"]
    hu = np.frombuffer(blob[first["hu_offset"]:first["hu_offset"] + 4 * rows * cols],
                       dtype="<f4").reshape(rows, cols)
    assert np.allclose(hu, vs.views[0].hu.astype(np.float32))
    assert abs(sum(v["weight"] for v in sidecar["views"]) - 1.0) < 1e-9
