"""Next-event conditional probability model over mined templates.

A count model with Laplace smoothing: it tabulates, for every W-length
history seen during training on normal sequences, how often each event
followed.  Prediction returns a full probability vector over the n
templates; a history never seen in training falls back to the uniform
distribution.  The detector and RL modules depend only on the
``predict_next`` contract, so any model producing a distribution over
the next event (e.g. an LSTM) can be swapped in.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .partition import WindowSample


class DimensionMismatch(Exception):
    pass


class CountModel:
    """Smoothed history -> next-event counts.  Immutable after fit."""

    def __init__(self, n: int, w: int, alpha: float = 1.0):
        if n < 1 or w < 1:
            raise DimensionMismatch(f"need n >= 1 and W >= 1, got n={n} W={w}")
        if alpha <= 0:
            raise ValueError("alpha must be > 0")
        self.n = n
        self.w = w
        self.alpha = alpha
        self.counts: dict[tuple[int, ...], dict[int, int]] = {}

    def observe(self, history: Sequence[int], target: int) -> None:
        if len(history) != self.w:
            raise DimensionMismatch(f"history length {len(history)} != W={self.w}")
        if not 0 <= target < self.n:
            raise DimensionMismatch(f"target {target} out of range [0, {self.n})")
        row = self.counts.setdefault(tuple(history), {})
        row[target] = row.get(target, 0) + 1

    def predict(self, history: Sequence[int]) -> np.ndarray:
        """Probability vector: (count + alpha) / (total + alpha * n)."""
        if len(history) != self.w:
            raise DimensionMismatch(f"history length {len(history)} != W={self.w}")
        row = self.counts.get(tuple(history))
        if not row:
            return np.full(self.n, 1.0 / self.n)
        probs = np.full(self.n, self.alpha)
        total = 0
        for event, count in row.items():
            probs[event] += count
            total += count
        probs /= total + self.alpha * self.n
        return probs


def fit_counts(
    samples: Iterable[WindowSample], n: int, w: int, alpha: float = 1.0
) -> CountModel:
    """Fit on the label-0 samples only; anomalous samples are ignored."""
    model = CountModel(n=n, w=w, alpha=alpha)
    for sample in samples:
        if sample.label != 0:
            continue
        model.observe(sample.history, sample.target)
    return model


def predict_next(model: CountModel, history: Sequence[int]) -> np.ndarray:
    return model.predict(history)


def save_model(model: CountModel, path) -> None:
    """Header ``n W alpha``, then one history row per line."""
    with open(path, "w") as fh:
        fh.write(f"{model.n} {model.w} {model.alpha!r}\n")
        for history in sorted(model.counts):
            row = model.counts[history]
            cells = ",".join(f"{e}:{c}" for e, c in sorted(row.items()))
            fh.write(f"{','.join(map(str, history))}\t{cells}\n")


def load_model(path) -> CountModel:
    with open(path) as fh:
        n, w, alpha = fh.readline().split()
        model = CountModel(n=int(n), w=int(w), alpha=float(alpha))
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            history, cells = line.split("\t")
            key = tuple(int(e) for e in history.split(","))
            model.counts[key] = {
                int(e): int(c)
                for e, c in (cell.split(":") for cell in cells.split(","))
            }
    return model
