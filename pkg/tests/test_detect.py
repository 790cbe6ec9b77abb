import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adaptk import detect
from adaptk.detect import (
    ConfusionCounts,
    OutOfRange,
    compute_metrics,
    detect_sequence,
    detect_window,
    metrics_from_verdicts,
    rank_of_actual,
    save_sweep,
    sweep_fixed_k,
)
from adaptk.seqmodel import fit_counts
from conftest import make_sequence, make_window


class TestRank:
    def test_worked_nine_event_example(self, nine_event_dist):
        assert rank_of_actual(nine_event_dist, 2) == 4

    def test_argmax_ranks_first(self, nine_event_dist):
        assert rank_of_actual(nine_event_dist, 8) == 1

    def test_uniform_ties_break_by_id(self):
        assert rank_of_actual(np.full(4, 0.25), 2) == 3

    def test_out_of_range(self, nine_event_dist):
        with pytest.raises(OutOfRange):
            rank_of_actual(nine_event_dist, 9)

    @given(n=st.integers(2, 30), actual=st.integers(0, 29), seed=st.integers(0, 999))
    def test_rank_matches_sorting_oracle(self, n, actual, seed):
        if actual >= n:
            return
        rng = np.random.default_rng(seed)
        dist = rng.random(n)
        dist /= dist.sum()
        order = sorted(range(n), key=lambda e: (-dist[e], e))
        assert rank_of_actual(dist, actual) == order.index(actual) + 1


class TestDetectWindow:
    def test_paper_example_normal_for_k_at_least_four(self, nine_event_dist):
        for k in range(4, 10):
            assert detect_window(nine_event_dist, 2, k) == 0

    def test_paper_example_anomalous_for_small_k(self, nine_event_dist):
        for k in (1, 2, 3):
            assert detect_window(nine_event_dist, 2, k) == 1

    def test_k_equal_n_passes_everything(self, nine_event_dist):
        for actual in range(9):
            assert detect_window(nine_event_dist, actual, 9) == 0

    def test_k_bounds_checked(self, nine_event_dist):
        with pytest.raises(OutOfRange):
            detect_window(nine_event_dist, 2, 0)
        with pytest.raises(OutOfRange):
            detect_window(nine_event_dist, 2, 10)


def tiny_model():
    # deterministic chain 0->1->2->3->0 over n=6, W=2
    samples = []
    for start in range(4):
        seq = [(start + i) % 4 for i in range(12)]
        samples.extend(make_window(seq[t - 2 : t], seq[t]) for t in range(2, 12))
    return fit_counts(samples, n=6, w=2, alpha=1.0)


class TestDetectSequence:
    def test_all_windows_pass(self):
        model = tiny_model()
        seq = make_sequence([0, 1, 2, 3, 0, 1])
        assert detect_sequence(seq, model, lambda w: 1) == 0

    def test_single_failing_window_flags(self):
        model = tiny_model()
        seq = make_sequence([0, 1, 2, 3, 5, 1])  # 5 breaks the chain
        assert detect_sequence(seq, model, lambda w: 1) == 1

    def test_max_k_passes_everything(self):
        model = tiny_model()
        seq = make_sequence([0, 1, 5, 3, 0, 2])
        assert detect_sequence(seq, model, lambda w: model.n) == 0

    def test_short_sequence_predicted_normal(self):
        model = tiny_model()
        assert detect_sequence(make_sequence([0, 1]), model, lambda w: 1) == 0


class TestComputeMetrics:
    def test_direct_formula(self):
        report = compute_metrics(ConfusionCounts(tp=2, fp=1, tn=6, fn=1))
        assert report.precision == pytest.approx(2 / 3)
        assert report.recall == pytest.approx(2 / 3)
        assert report.f1 == pytest.approx(2 / 3)
        assert report.accuracy == pytest.approx(0.8)
        assert not report.degenerate

    def test_reported_hdfs_spot_check(self):
        # published rounded inputs P=0.6785, R=0.5438 against reported F1 0.6064
        p, r = 0.6785, 0.5438
        f1 = 2 * p * r / (p + r)
        assert abs(f1 - 0.6064) < 0.005

    def test_all_zero_positive_cells_degenerate(self):
        report = compute_metrics(ConfusionCounts(tp=0, fp=0, tn=5, fn=0))
        assert (report.precision, report.recall, report.f1) == (0.0, 0.0, 0.0)
        assert report.degenerate

    def test_empty_counts_rejected(self):
        with pytest.raises(ValueError):
            compute_metrics(ConfusionCounts())

    @given(
        tp=st.integers(0, 50), fp=st.integers(0, 50),
        tn=st.integers(0, 50), fn=st.integers(0, 50),
    )
    def test_against_recount_oracle(self, tp, fp, tn, fn):
        if tp + fp + tn + fn == 0:
            return
        labels = [1] * tp + [0] * fp + [0] * tn + [1] * fn
        verdicts = [1] * tp + [1] * fp + [0] * tn + [0] * fn
        report = metrics_from_verdicts(labels, verdicts)
        assert report.counts == ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)
        if tp + fp:
            assert report.precision == pytest.approx(tp / (tp + fp))
        if tp + fn:
            assert report.recall == pytest.approx(tp / (tp + fn))
        if report.precision + report.recall:
            expected = (
                2 * report.precision * report.recall
                / (report.precision + report.recall)
            )
            assert report.f1 == pytest.approx(expected)
        assert report.accuracy == pytest.approx((tp + tn) / (tp + fp + tn + fn))


def random_dataset(rng, n=8, w=2):
    sequences = []
    for i in range(rng.integers(5, 15)):
        length = int(rng.integers(3, 10))
        events = rng.integers(0, n, size=length).tolist()
        sequences.append(
            make_sequence(events, label=int(rng.random() < 0.3), seq_id=f"s{i}")
        )
    samples = [
        make_window(s.events[t - w : t], s.events[t], label=s.label, seq_id=s.seq_id)
        for s in sequences
        for t in range(w, len(s.events))
        if s.label == 0
    ]
    model = fit_counts(samples, n=n, w=w, alpha=1.0)
    return sequences, model


class TestSweep:
    def test_k_equals_n_predicts_all_normal(self):
        rng = np.random.default_rng(0)
        sequences, model = random_dataset(rng)
        results, _ = sweep_fixed_k(sequences, model, [model.n])
        report = results[0][1]
        assert report.recall == 0.0
        assert report.counts.tn == sum(1 for s in sequences if s.label == 0)
        assert report.counts.fp == 0

    def test_k_one_maximizes_false_positives(self):
        rng = np.random.default_rng(1)
        sequences, model = random_dataset(rng)
        results, _ = sweep_fixed_k(sequences, model, list(range(1, model.n + 1)))
        fps = [report.counts.fp for _, report in results]
        assert fps[0] == max(fps)

    def test_sweep_matches_detect_sequence(self):
        rng = np.random.default_rng(2)
        sequences, model = random_dataset(rng)
        results, _ = sweep_fixed_k(sequences, model, [1, 3, 5])
        for k, report in results:
            verdicts = [detect_sequence(s, model, lambda w: k) for s in sequences]
            recount = metrics_from_verdicts([s.label for s in sequences], verdicts)
            assert recount.counts == report.counts

    def test_empty_k_values_rejected(self):
        rng = np.random.default_rng(3)
        sequences, model = random_dataset(rng)
        with pytest.raises(ValueError):
            sweep_fixed_k(sequences, model, [])

    def test_sweep_file_format(self, tmp_path):
        rng = np.random.default_rng(4)
        sequences, model = random_dataset(rng)
        results, _ = sweep_fixed_k(sequences, model, [1, 2])
        path = tmp_path / "sweep.tsv"
        save_sweep(results, path)
        lines = path.read_text().splitlines()
        assert len(lines) == 2
        fields = lines[0].split("\t")
        assert fields[0] == "1"
        assert len(fields) == 5
        for value in fields[1:]:
            float(value)


class TestMonotonicity:
    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_flagged_set_shrinks_as_k_grows(self, seed):
        rng = np.random.default_rng(seed)
        sequences, model = random_dataset(rng)
        flagged_by_k = []
        for k in (1, 2, 4, model.n):
            flagged = {
                s.seq_id
                for s in sequences
                if detect_sequence(s, model, lambda w: k)
            }
            flagged_by_k.append(flagged)
        for small, large in zip(flagged_by_k, flagged_by_k[1:]):
            assert large <= small


class TestFormatting:
    def test_kv_lines(self):
        report = compute_metrics(ConfusionCounts(tp=1, fp=1, tn=1, fn=1))
        kv = detect.metrics_kv(report, prefix="x_")
        assert "x_precision=0.500000" in kv
        assert "x_tp=1" in kv

    def test_human_table_mentions_all_metrics(self):
        report = compute_metrics(ConfusionCounts(tp=1, fp=1, tn=1, fn=1))
        text = detect.format_metrics(report)
        for word in ("precision", "recall", "f1", "accuracy", "confusion"):
            assert word in text
