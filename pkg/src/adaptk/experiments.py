"""The canonical adaptive-vs-fixed comparison, packaged as one call.

Protocol: generate the two-regime workload, split off a test set, fit
the count model on half the training sequences, train the PPO agent on
the other half, then compare the agent's greedy F1 on the test set
against the best fixed filter value found by a full sweep over the same
test set (the strongest fixed baseline: it gets to pick its k after
seeing the test results).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from . import detect, partition, ppo, seqmodel, workload
from .cli import model_fit_split, stratified_split
from .detect import MetricsReport
from .rlenv import EnvConfig, LogFilterEnv


@dataclass
class ComparisonResult:
    seed: int
    fixed_best_k: int
    fixed: MetricsReport
    adaptive: MetricsReport
    sweep: list[tuple[int, MetricsReport]] = field(repr=False, default_factory=list)
    env_steps: int = 0
    train_seconds: float = 0.0

    @property
    def f1_margin(self) -> float:
        return self.adaptive.f1 - self.fixed.f1


def reference_ppo_config(seed: int = 0, **overrides) -> ppo.PpoConfig:
    """Training settings for the desk-scale reference workload.

    A short discount horizon (the filter choice never influences which
    window comes next) and larger, less-reused batches than the
    full-scale defaults; both make the small step budget converge.
    """
    base = dict(
        gamma=0.5,
        entropy_coeff=0.005,
        train_batch_size=2048,
        sgd_minibatch_size=256,
        num_sgd_iter=10,
        learning_rate=1e-4,
        num_envs=8,
        seed=seed,
    )
    base.update(overrides)
    return ppo.PpoConfig(**base)


def adaptive_vs_fixed(
    seed: int,
    n_sequences: int = 5000,
    window: int = 6,
    m_max: int = 48,
    action_stride: int = 2,
    c: float = 0.1,
    max_env_steps: int = 160_000,
    train_ratio: float = 0.8,
    model_fit_ratio: float = 0.5,
    ppo_config: ppo.PpoConfig | None = None,
) -> ComparisonResult:
    spec = workload.two_regime_spec(
        n_templates=m_max, n_sequences=n_sequences, seed=seed, window=window
    )
    generated = workload.generate_workload(spec)
    train_seqs, test_seqs = stratified_split(generated.sequences, train_ratio, 700 + seed)
    fit_seqs, agent_seqs = model_fit_split(train_seqs, model_fit_ratio, 800 + seed)
    model = seqmodel.fit_counts(
        partition.windows_from_dataset(fit_seqs, window),
        n=spec.n_templates,
        w=window,
    )

    sweep, best_k = detect.sweep_fixed_k(test_seqs, model, list(range(1, m_max + 1)))
    fixed = dict(sweep)[best_k]

    samples = partition.windows_from_dataset(agent_seqs, window)
    ranks = detect.window_ranks(samples, model)
    env_cfg = EnvConfig(m_max=m_max, action_stride=action_stride, c=c)

    def factory(worker: int) -> LogFilterEnv:
        cfg = EnvConfig(
            m_max=m_max, action_stride=action_stride, c=c, seed=seed * 1000 + worker
        )
        return LogFilterEnv(cfg, samples, model, ranks=ranks)

    config = ppo_config or reference_ppo_config(seed)
    started = time.perf_counter()
    result = ppo.train(factory, config, ppo.StopCondition(max_env_steps=max_env_steps))
    elapsed = time.perf_counter() - started
    adaptive = ppo.evaluate_policy(result.params, test_seqs, model, env_cfg)
    return ComparisonResult(
        seed=seed,
        fixed_best_k=best_k,
        fixed=fixed,
        adaptive=adaptive,
        sweep=sweep,
        env_steps=result.env_steps,
        train_seconds=elapsed,
    )
