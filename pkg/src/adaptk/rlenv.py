"""The filter-selection MDP.

Each step presents one prediction window: the observation is the window's
event-id history normalized to [0, 1], the action picks a filter value k
from a structured list {1, 1+stride, 1+2*stride, ...} capped at M, and
the reward scores the resulting normal/anomalous verdict against the
window's label -- +1/-1 for anomalous windows, +c/-c for normal ones, so
the heavily imbalanced normal class cannot drown out the anomalies.
Episodes are fixed-horizon samples over the training workload.

Multiple environment instances (distinct seeds) can run in parallel
rollout workers against a shared immutable model and workload.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import IO, Optional, Sequence

import numpy as np

from .detect import rank_of_actual
from .partition import WindowSample
from .seqmodel import CountModel


class EmptyWorkload(Exception):
    pass


class InvalidAction(Exception):
    pass


@dataclass
class EnvConfig:
    m_max: int = 48  # maximum filter value (action-space cap)
    action_stride: int = 2  # 1 = dense, 2 = odd-valued structured space
    c: float = 0.1  # normal-class reward scale
    gamma: float = 0.99  # MDP discount
    horizon: int = 256  # steps per episode
    seed: int = 0
    balanced_sampling: bool = False  # sample labels 50/50 instead of uniformly

    def __post_init__(self):
        if self.m_max < 1:
            raise ValueError("m_max must be >= 1")
        if self.action_stride < 1:
            raise ValueError("action_stride must be >= 1")
        if not 0.0 < self.c <= 1.0:
            raise ValueError("c must be in (0, 1]")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    @property
    def action_list(self) -> list[int]:
        return list(range(1, self.m_max + 1, self.action_stride))


@dataclass
class StepResult:
    next_obs: np.ndarray
    reward: float
    done: int
    info: dict = field(default_factory=dict)  # rank, label, k


def observe(history: Sequence[int], n: int) -> np.ndarray:
    """Event ids normalized to [0, 1] by division by (n - 1)."""
    scale = float(n - 1) if n > 1 else 1.0
    return np.asarray(history, dtype=np.float64) / scale


def reward_of(window_label: int, predicted: int, c: float) -> float:
    """+1/-1 for anomalous windows, +c/-c for normal ones."""
    if window_label:
        return 1.0 if predicted else -1.0
    return -c if predicted else c


class LogFilterEnv:
    """Episodic sampling over a fixed workload of prediction windows."""

    def __init__(
        self,
        config: EnvConfig,
        workload: Sequence[WindowSample],
        model: CountModel,
        ranks: Optional[np.ndarray] = None,
        trace: Optional[IO[str]] = None,
    ):
        if len(workload) == 0:
            raise EmptyWorkload("workload must contain at least one window")
        self.config = config
        self.workload = list(workload)
        self.model = model
        self.actions = config.action_list
        self.n = model.n
        self._rng = np.random.default_rng(config.seed)
        if ranks is None:
            ranks = np.array(
                [
                    rank_of_actual(model.predict(s.history), s.target)
                    for s in self.workload
                ],
                dtype=np.int64,
            )
        elif len(ranks) != len(self.workload):
            raise ValueError("precomputed ranks must align with the workload")
        self._ranks = ranks
        self._labels = np.array([s.label for s in self.workload], dtype=np.int64)
        self._obs = np.stack(
            [observe(s.history, self.n) for s in self.workload]
        )
        self._trace = trace
        self._order: Optional[np.ndarray] = None
        self._pos = 0
        self._steps = 0
        self._total_steps = 0

    def _draw_order(self) -> np.ndarray:
        if not self.config.balanced_sampling:
            return self._rng.permutation(len(self.workload))
        # Half the episode from each class; classes sampled with replacement
        # when smaller than the episode demands.
        pos = np.flatnonzero(self._labels == 1)
        neg = np.flatnonzero(self._labels == 0)
        if len(pos) == 0 or len(neg) == 0:
            return self._rng.permutation(len(self.workload))
        take = self.config.horizon + 1
        picks = np.where(
            self._rng.random(take) < 0.5,
            self._rng.choice(pos, size=take),
            self._rng.choice(neg, size=take),
        )
        return picks

    def reset(self) -> np.ndarray:
        self._order = self._draw_order()
        self._pos = 0
        self._steps = 0
        return self._obs[self._order[0]]

    def _advance(self) -> int:
        self._pos += 1
        if self._pos >= len(self._order):
            self._order = self._draw_order()
            self._pos = 0
        return self._order[self._pos]

    def step(self, action_index: int) -> StepResult:
        if self._order is None:
            raise RuntimeError("call reset() before step()")
        if not 0 <= action_index < len(self.actions):
            raise InvalidAction(
                f"action index {action_index} out of range [0, {len(self.actions)})"
            )
        idx = self._order[self._pos]
        k = self.actions[action_index]
        rank = int(self._ranks[idx])
        label = int(self._labels[idx])
        predicted = int(rank > k)
        reward = reward_of(label, predicted, self.config.c)
        self._steps += 1
        self._total_steps += 1
        done = int(self._steps >= self.config.horizon)
        if self._trace is not None:
            self._trace.write(f"{self._total_steps}\t{k}\t{reward}\t{rank}\t{label}\n")
        if done:
            # Reshuffle per episode; stepping past done continues seamlessly.
            self._order = self._draw_order()
            self._pos = 0
            self._steps = 0
            next_idx = self._order[0]
        else:
            next_idx = self._advance()
        return StepResult(
            next_obs=self._obs[next_idx],
            reward=reward,
            done=done,
            info={"rank": rank, "label": label, "k": k},
        )


def env_reset(
    config: EnvConfig, workload: Sequence[WindowSample], model: CountModel
) -> tuple[LogFilterEnv, np.ndarray]:
    """Build an environment and return it with its first observation."""
    env = LogFilterEnv(config, workload, model)
    return env, env.reset()
