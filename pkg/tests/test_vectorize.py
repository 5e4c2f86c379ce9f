import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from tdanet import (
    CurveConfig,
    ImageTensor,
    betti_curve,
    diagram_for_image,
    vectorize_dataset,
    vectorize_image,
)

from conftest import sublevel_components

int_images = hnp.arrays(
    np.float64,
    st.tuples(st.integers(1, 6), st.integers(1, 6)),
    elements=st.integers(0, 6).map(float),
)


class TestBettiCurve:
    def test_three_minima_profile(self, fig_image, fig_diagram):
        curve = betti_curve(fig_diagram, 0.7, 4.6, 5)
        expected = [
            sublevel_components(fig_image.values, t) for t in np.linspace(0.7, 4.6, 5)
        ]
        assert list(curve.samples) == expected == [1, 3, 3, 2, 1]

    def test_constant_image_is_all_ones(self):
        pd = diagram_for_image(ImageTensor(np.full((3, 3), 0.4)))
        curve = betti_curve(pd, pd.global_min, pd.global_max, 7)
        assert list(curve.samples) == [1] * 7

    def test_last_sample_is_one_at_global_max(self):
        rng = np.random.default_rng(9)
        pd = diagram_for_image(ImageTensor(rng.random((6, 6))))
        curve = betti_curve(pd, pd.global_min, pd.global_max, 50)
        assert curve.samples[-1] == 1
        assert curve.samples[0] >= 1

    def test_single_sample_evaluates_at_t_min(self, fig_diagram):
        curve = betti_curve(fig_diagram, 2.0, 4.0, 1)
        assert list(curve.samples) == [3]

    def test_inverted_range_rejected(self, fig_diagram):
        with pytest.raises(ValueError):
            betti_curve(fig_diagram, 1.0, 0.0, 5)


class TestVectorizeImage:
    def test_composition_matches_manual(self, fig_image):
        curve = vectorize_image(fig_image, CurveConfig(n=5, range_mode="auto"))
        assert list(curve.samples) == [1, 3, 3, 2, 1]
        assert (curve.t_min, curve.t_max) == (0.7, 4.6)

    def test_large_constant_image(self):
        curve = vectorize_image(ImageTensor(np.full((128, 128), 0.5)), CurveConfig(n=100))
        assert list(curve.samples) == [1] * 100

    def test_two_blob_plateau(self):
        # two dark wells separated by a bright ridge: the curve sits at 2
        # for thresholds between the well floors and the ridge
        values = np.full((8, 8), 1.0)
        values[1:3, 1:3] = 0.1
        values[5:7, 5:7] = 0.2
        curve = vectorize_image(
            ImageTensor(values), CurveConfig(n=10, range_mode="fixed", t_min=0.0, t_max=1.0)
        )
        ts = np.linspace(0.0, 1.0, 10)
        expected = [sublevel_components(values, t) for t in ts]
        assert list(curve.samples) == expected
        assert all(s == 2 for s, t in zip(curve.samples, ts) if 0.2 <= t < 1.0)

    def test_normalization_option(self, fig_image):
        raw = vectorize_image(fig_image, CurveConfig(n=5))
        norm = vectorize_image(fig_image, CurveConfig(n=5, normalize=True))
        assert np.allclose(norm.samples, raw.samples / raw.samples.max())

    @given(int_images, st.integers(-3, 3))
    @settings(deadline=None, max_examples=40)
    def test_shift_invariance_with_auto_range(self, values, c):
        a = vectorize_image(ImageTensor(values), CurveConfig(n=16))
        b = vectorize_image(ImageTensor(values + float(c)), CurveConfig(n=16))
        assert np.array_equal(a.samples, b.samples)

    @given(int_images)
    @settings(deadline=None, max_examples=40)
    def test_geometric_symmetry(self, values):
        config = CurveConfig(n=16)
        reference = vectorize_image(ImageTensor(values), config).samples
        for transform in (np.transpose, np.rot90, np.fliplr):
            curve = vectorize_image(ImageTensor(np.ascontiguousarray(transform(values))), config)
            assert np.array_equal(curve.samples, reference)

    @given(int_images)
    @settings(deadline=None, max_examples=40)
    def test_piecewise_constant_between_events(self, values):
        pd = diagram_for_image(ImageTensor(values))
        curve = vectorize_image(ImageTensor(values), CurveConfig(n=24))
        events = {b.birth for b in pd.bars} | {b.death for b in pd.bars}
        ts = np.linspace(curve.t_min, curve.t_max, 24) if curve.t_min != curve.t_max else [curve.t_min] * 24
        for k in range(23):
            # the count changes only at event values, which take effect at
            # the event itself, so the window is half-open on the right
            if not any(ts[k] < e <= ts[k + 1] for e in events):
                assert curve.samples[k] == curve.samples[k + 1]


class TestVectorizeDataset:
    def test_identical_images_give_identical_rows(self, fig_image):
        rows = vectorize_dataset([fig_image, fig_image], CurveConfig(n=8))
        assert np.array_equal(rows[0], rows[1])

    def test_singleton_matches_vectorize_image(self, fig_image):
        rows = vectorize_dataset([fig_image], CurveConfig(n=8))
        assert np.array_equal(rows[0], vectorize_image(fig_image, CurveConfig(n=8)).samples)

    def test_global_range_spans_dataset(self):
        # constant-0 and constant-1 images over the shared range [0, 1]:
        # the second image's sole component is only born at t = 1
        imgs = [ImageTensor(np.zeros((2, 2))), ImageTensor(np.ones((2, 2)))]
        rows = vectorize_dataset(imgs, CurveConfig(n=4, range_mode="global"))
        for i, img in enumerate(imgs):
            expected = [sublevel_components(img.values, t) for t in np.linspace(0, 1, 4)]
            assert list(rows[i]) == expected
        assert list(rows[0]) == [1, 1, 1, 1]
        assert list(rows[1]) == [0, 0, 0, 1]

    def test_row_order_matches_input_order(self):
        rng = np.random.default_rng(2)
        imgs = [ImageTensor(rng.random((4, 4))) for _ in range(5)]
        rows = vectorize_dataset(imgs, CurveConfig(n=6))
        for i, img in enumerate(imgs):
            assert np.array_equal(rows[i], vectorize_image(img, CurveConfig(n=6)).samples)

    def test_empty_list_rejected(self):
        with pytest.raises(ValueError):
            vectorize_dataset([], CurveConfig(n=4))


class TestCurveConfig:
    def test_rejects_bad_length(self):
        with pytest.raises(ValueError):
            CurveConfig(n=0)

    def test_rejects_unknown_mode(self):
        with pytest.raises(ValueError):
            CurveConfig(range_mode="quantile")

    def test_rejects_inverted_fixed_range(self):
        with pytest.raises(ValueError):
            CurveConfig(range_mode="fixed", t_min=2.0, t_max=1.0)
