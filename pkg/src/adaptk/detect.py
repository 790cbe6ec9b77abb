"""Top-k filter detection and evaluation metrics.

A window is flagged anomalous when the event that actually occurred is
not among the top k events of the predicted distribution; a sequence is
flagged when any of its windows is.  The 1-based rank of the actual
event (descending probability, ties broken by ascending event id) is the
single source of truth: ``detect_window(dist, actual, k) == rank > k``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .partition import LabeledSequence, WindowSample, windows_from_sequence
from .seqmodel import CountModel


class OutOfRange(Exception):
    pass


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def add(self, label: int, predicted: int) -> None:
        if label and predicted:
            self.tp += 1
        elif label and not predicted:
            self.fn += 1
        elif predicted:
            self.fp += 1
        else:
            self.tn += 1

    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class MetricsReport:
    precision: float
    recall: float
    f1: float
    accuracy: float
    counts: ConfusionCounts
    degenerate: bool = False


def rank_of_actual(dist: np.ndarray, actual: int) -> int:
    """1-based rank of ``actual`` by descending probability, ties by id."""
    dist = np.asarray(dist)
    if not 0 <= actual < dist.shape[0]:
        raise OutOfRange(f"event {actual} out of range [0, {dist.shape[0]})")
    p = dist[actual]
    higher = int(np.count_nonzero(dist > p))
    tied_before = int(np.count_nonzero(dist[:actual] == p))
    return 1 + higher + tied_before


def detect_window(dist: np.ndarray, actual: int, k: int) -> int:
    """1 iff the actual event ranks outside the top k."""
    n = np.asarray(dist).shape[0]
    if not 1 <= k <= n:
        raise OutOfRange(f"k={k} out of range [1, {n}]")
    return int(rank_of_actual(dist, actual) > k)


def detect_sequence(
    seq: LabeledSequence,
    model: CountModel,
    k_provider: Callable[[WindowSample], int],
) -> int:
    """1 iff any window is flagged under its provided k.

    Sequences too short to produce a window are predicted normal.
    """
    for window in windows_from_sequence(seq, model.w):
        dist = model.predict(window.history)
        if detect_window(dist, window.target, k_provider(window)):
            return 1
    return 0


def window_ranks(samples: Sequence[WindowSample], model: CountModel) -> np.ndarray:
    """Rank of the actual next event for every window (shared, reusable)."""
    return np.array(
        [rank_of_actual(model.predict(s.history), s.target) for s in samples],
        dtype=np.int64,
    )


def sequence_max_ranks(
    dataset: Sequence[LabeledSequence], model: CountModel
) -> np.ndarray:
    """Per-sequence max window rank; 0 for sequences with no windows.

    Under a constant k the sequence verdict reduces to ``max rank > k``,
    which lets a whole k-sweep reuse one pass over the windows.
    """
    out = np.zeros(len(dataset), dtype=np.int64)
    for i, seq in enumerate(dataset):
        best = 0
        for window in windows_from_sequence(seq, model.w):
            rank = rank_of_actual(model.predict(window.history), window.target)
            if rank > best:
                best = rank
        out[i] = best
    return out


def compute_metrics(counts: ConfusionCounts) -> MetricsReport:
    """Precision/recall/F1/accuracy; any 0/0 reported as 0 with a flag."""
    if counts.total() < 1:
        raise ValueError("need at least one counted sequence")
    degenerate = False
    if counts.tp + counts.fp > 0:
        precision = counts.tp / (counts.tp + counts.fp)
    else:
        precision, degenerate = 0.0, True
    if counts.tp + counts.fn > 0:
        recall = counts.tp / (counts.tp + counts.fn)
    else:
        recall, degenerate = 0.0, True
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1, degenerate = 0.0, True
    accuracy = (counts.tp + counts.tn) / counts.total()
    return MetricsReport(
        precision=precision,
        recall=recall,
        f1=f1,
        accuracy=accuracy,
        counts=counts,
        degenerate=degenerate,
    )


def metrics_from_verdicts(
    labels: Sequence[int], predictions: Sequence[int]
) -> MetricsReport:
    counts = ConfusionCounts()
    for label, predicted in zip(labels, predictions):
        counts.add(label, predicted)
    return compute_metrics(counts)


def sweep_fixed_k(
    dataset: Sequence[LabeledSequence],
    model: CountModel,
    k_values: Sequence[int],
    max_ranks: np.ndarray | None = None,
) -> tuple[list[tuple[int, MetricsReport]], int]:
    """Metrics for each fixed k plus the argmax-F1 k (ties: smallest k)."""
    if len(k_values) == 0:
        raise ValueError("k_values must be non-empty")
    for k in k_values:
        if not 1 <= k <= model.n:
            raise OutOfRange(f"k={k} out of range [1, {model.n}]")
    if max_ranks is None:
        max_ranks = sequence_max_ranks(dataset, model)
    labels = [seq.label for seq in dataset]
    results = []
    best_k, best_f1 = None, -1.0
    for k in k_values:
        report = metrics_from_verdicts(labels, (max_ranks > k).astype(int))
        results.append((int(k), report))
        if report.f1 > best_f1:
            best_k, best_f1 = int(k), report.f1
    return results, best_k


def format_metrics(report: MetricsReport) -> str:
    """Human-readable metrics block."""
    c = report.counts
    lines = [
        f"  precision  {report.precision:.4f}",
        f"  recall     {report.recall:.4f}",
        f"  f1         {report.f1:.4f}",
        f"  accuracy   {report.accuracy:.4f}",
        f"  confusion  tp={c.tp} fp={c.fp} tn={c.tn} fn={c.fn}",
    ]
    if report.degenerate:
        lines.append("  (degenerate: some metric was 0/0, reported as 0)")
    return "\n".join(lines)


def metrics_kv(report: MetricsReport, prefix: str = "") -> str:
    """Machine-readable ``key=value`` lines."""
    c = report.counts
    return "\n".join(
        [
            f"{prefix}precision={report.precision:.6f}",
            f"{prefix}recall={report.recall:.6f}",
            f"{prefix}f1={report.f1:.6f}",
            f"{prefix}accuracy={report.accuracy:.6f}",
            f"{prefix}tp={c.tp}",
            f"{prefix}fp={c.fp}",
            f"{prefix}tn={c.tn}",
            f"{prefix}fn={c.fn}",
            f"{prefix}degenerate={int(report.degenerate)}",
        ]
    )


def save_sweep(results: Sequence[tuple[int, MetricsReport]], path) -> None:
    """``<k>\\t<P>\\t<R>\\t<F1>\\t<Acc>`` rows for plotting."""
    with open(path, "w") as fh:
        for k, report in results:
            fh.write(
                f"{k}\t{report.precision:.6f}\t{report.recall:.6f}\t"
                f"{report.f1:.6f}\t{report.accuracy:.6f}\n"
            )
