import numpy as np
import pytest
from hypothesis import given, strategies as st

from adaptk.seqmodel import (
    CountModel,
    DimensionMismatch,
    fit_counts,
    load_model,
    predict_next,
    save_model,
)
from conftest import make_window


class TestFitCounts:
    def test_zero_samples_predicts_uniform(self):
        model = fit_counts([], n=10, w=3, alpha=1.0)
        np.testing.assert_allclose(predict_next(model, [1, 2, 3]), np.full(10, 0.1))

    def test_counts_accumulate(self):
        samples = [make_window([1, 2, 3], t) for t in (2, 2, 7)]
        model = fit_counts(samples, n=10, w=3, alpha=1.0)
        assert model.counts[(1, 2, 3)] == {2: 2, 7: 1}

    def test_anomalous_samples_ignored(self):
        mixed = [
            make_window([1, 2, 3], 2, label=0),
            make_window([1, 2, 3], 5, label=1),
            make_window([1, 2, 3], 2, label=0),
        ]
        model = fit_counts(mixed, n=10, w=3, alpha=1.0)
        clean = fit_counts([s for s in mixed if s.label == 0], n=10, w=3, alpha=1.0)
        assert model.counts == clean.counts

    def test_wrong_width_rejected(self):
        with pytest.raises(DimensionMismatch):
            fit_counts([make_window([1, 2], 0)], n=5, w=3)

    def test_target_out_of_range_rejected(self):
        with pytest.raises(DimensionMismatch):
            fit_counts([make_window([1, 2, 3], 9)], n=5, w=3)


class TestPredictNext:
    def test_unseen_history_uniform(self):
        model = fit_counts([make_window([0, 0, 0], 1)], n=48, w=3, alpha=1.0)
        np.testing.assert_allclose(predict_next(model, [9, 9, 9]), np.full(48, 1 / 48))

    def test_laplace_smoothing_values(self):
        samples = [make_window([1, 2, 3], t) for t in (2, 2, 7)]
        model = fit_counts(samples, n=10, w=3, alpha=1.0)
        probs = predict_next(model, [1, 2, 3])
        assert probs[2] == pytest.approx(3 / 13)
        assert probs[7] == pytest.approx(2 / 13)
        for i in set(range(10)) - {2, 7}:
            assert probs[i] == pytest.approx(1 / 13)

    @given(
        targets=st.lists(st.integers(0, 7), min_size=0, max_size=30),
        alpha=st.floats(0.01, 5.0),
    )
    def test_normalization(self, targets, alpha):
        samples = [make_window([0, 1], t) for t in targets]
        model = fit_counts(samples, n=8, w=2, alpha=alpha)
        probs = predict_next(model, [0, 1])
        assert abs(probs.sum() - 1.0) < 1e-9
        assert (probs >= 0).all()

    @given(
        targets=st.lists(st.integers(0, 7), min_size=1, max_size=30),
        extra=st.integers(0, 7),
    )
    def test_monotonic_in_evidence(self, targets, extra):
        samples = [make_window([0, 1], t) for t in targets]
        before = predict_next(fit_counts(samples, n=8, w=2), [0, 1])
        after = predict_next(
            fit_counts(samples + [make_window([0, 1], extra)], n=8, w=2), [0, 1]
        )
        assert after[extra] >= before[extra]

    def test_wrong_history_width(self):
        model = CountModel(n=4, w=3)
        with pytest.raises(DimensionMismatch):
            model.predict([1, 2])


class TestPersistence:
    def test_round_trip(self, tmp_path):
        samples = [make_window([1, 2, 3], t) for t in (2, 2, 7)]
        samples += [make_window([4, 5, 6], 0)]
        model = fit_counts(samples, n=10, w=3, alpha=0.5)
        path = tmp_path / "model.txt"
        save_model(model, path)
        back = load_model(path)
        assert (back.n, back.w, back.alpha) == (10, 3, 0.5)
        assert back.counts == model.counts

    def test_save_is_deterministic(self, tmp_path):
        samples = [make_window([i, i + 1], (3 * i) % 6) for i in range(20)]
        m1 = fit_counts(samples, n=6, w=2)
        m2 = fit_counts(list(reversed(samples)), n=6, w=2)
        p1, p2 = tmp_path / "m1.txt", tmp_path / "m2.txt"
        save_model(m1, p1)
        save_model(m2, p2)
        assert p1.read_bytes() == p2.read_bytes()
