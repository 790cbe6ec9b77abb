"""Proximal policy optimization over the filter-selection environment.

Two update variants are provided: the clipped surrogate objective
(default) and the adaptive-KL-penalty objective whose coefficient is
doubled or halved depending on the measured divergence from the
pre-update policy.  Advantages come from generalized advantage
estimation over per-environment rollout streams.  Rollouts may be
collected from several environment instances in lockstep; the gradient
update is single-writer and acts as the synchronization barrier.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import policy as pol
from .detect import MetricsReport, metrics_from_verdicts, window_ranks
from .partition import LabeledSequence, windows_from_sequence
from .policy import Adam, PolicyParameters
from .rlenv import EnvConfig, observe
from .seqmodel import CountModel


class EmptyBatch(Exception):
    pass


class NonFiniteLoss(Exception):
    pass


@dataclass
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 1.0
    clip_param: float = 0.3
    kl_coeff: float = 0.2
    kl_target: float = 0.01
    vf_loss_coeff: float = 1.0
    vf_clip_param: float = 10.0
    entropy_coeff: float = 0.0
    sgd_minibatch_size: int = 128
    num_sgd_iter: int = 30
    train_batch_size: int = 256
    learning_rate: float = 1e-4  # paper sweeps 1e-5 .. 1e-4
    variant: str = "clipped"  # "clipped" | "adaptive_kl"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: Optional[float] = None
    hidden: tuple[int, int] = (256, 256)
    num_envs: int = 4
    shuffle_sequences: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must be in [0, 1]")
        if self.sgd_minibatch_size > self.train_batch_size:
            raise ValueError("sgd_minibatch_size must be <= train_batch_size")
        if self.variant not in ("clipped", "adaptive_kl"):
            raise ValueError(f"unknown PPO variant {self.variant!r}")
        if self.num_envs < 1:
            raise ValueError("num_envs must be >= 1")


@dataclass
class Transition:
    obs: np.ndarray
    action_index: int
    reward: float
    done: int
    log_prob: float
    value: float


@dataclass
class KlController:
    beta: float
    delta: float

    def __post_init__(self):
        if self.beta <= 0 or self.delta <= 0:
            raise ValueError("beta and delta must be > 0")


def adapt_kl_beta(kl_measured: float, controller: KlController) -> KlController:
    """Double beta when KL >= 1.5*delta, halve when KL <= delta/1.5."""
    if kl_measured >= 1.5 * controller.delta:
        return replace(controller, beta=2.0 * controller.beta)
    if kl_measured <= controller.delta / 1.5:
        return replace(controller, beta=controller.beta / 2.0)
    return controller


@dataclass
class RolloutBatch:
    """Time-ordered rollout data, concatenated env-major."""

    obs: np.ndarray  # (B, obs_dim)
    actions: np.ndarray  # (B,)
    old_log_probs: np.ndarray  # (B,)
    old_logits: np.ndarray  # (B, A)
    advantages: np.ndarray  # (B,)
    value_targets: np.ndarray  # (B,)

    def __len__(self) -> int:
        return self.obs.shape[0]

    def take(self, idx: np.ndarray) -> "RolloutBatch":
        return RolloutBatch(
            obs=self.obs[idx],
            actions=self.actions[idx],
            old_log_probs=self.old_log_probs[idx],
            old_logits=self.old_logits[idx],
            advantages=self.advantages[idx],
            value_targets=self.value_targets[idx],
        )


def gae_from_arrays(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    bootstrap_value: float,
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Raw GAE recursion over one time-ordered stream.

    delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t)
    A_t     = delta_t + gamma * lam * (1 - done_t) * A_{t+1}
    """
    steps = len(rewards)
    if steps == 0:
        raise EmptyBatch("no transitions to estimate advantages from")
    next_values = np.append(values[1:], bootstrap_value)
    not_done = 1.0 - dones
    deltas = rewards + gamma * next_values * not_done - values
    advantages = np.empty(steps)
    acc = 0.0
    for t in range(steps - 1, -1, -1):
        acc = deltas[t] + gamma * lam * not_done[t] * acc
        advantages[t] = acc
    return advantages, advantages + values


def normalize_advantages(advantages: np.ndarray) -> np.ndarray:
    """Zero mean, unit variance; identity when variance < 1e-12."""
    var = advantages.var()
    if var < 1e-12:
        return advantages
    return (advantages - advantages.mean()) / np.sqrt(var)


def compute_gae(
    transitions: Sequence[Transition],
    bootstrap_value: float,
    gamma: float,
    lam: float,
    normalize: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """GAE over a transition list from one environment."""
    rewards = np.array([t.reward for t in transitions], dtype=np.float64)
    values = np.array([t.value for t in transitions], dtype=np.float64)
    dones = np.array([t.done for t in transitions], dtype=np.float64)
    advantages, targets = gae_from_arrays(
        rewards, values, dones, bootstrap_value, gamma, lam
    )
    if normalize:
        advantages = normalize_advantages(advantages)
    return advantages, targets


def _loss_pieces(
    params: PolicyParameters,
    batch: RolloutBatch,
    config: PpoConfig,
    beta: float,
):
    """Forward pass plus everything shared by loss and gradient."""
    probs, values, cache = pol.forward(params, batch.obs)
    size = len(batch)
    rows = np.arange(size)
    logp_all = cache["logp"]
    logp = logp_all[rows, batch.actions]
    ratio = np.exp(logp - batch.old_log_probs)
    adv = batch.advantages

    old_logp_all = pol.log_softmax(batch.old_logits)
    old_probs = np.exp(old_logp_all)
    kl_per = (old_probs * (old_logp_all - logp_all)).sum(axis=1)
    entropy_per = -(probs * logp_all).sum(axis=1)

    if config.variant == "clipped":
        unclipped = ratio * adv
        clipped = np.clip(ratio, 1.0 - config.clip_param, 1.0 + config.clip_param) * adv
        policy_loss = -np.minimum(unclipped, clipped).mean()
        kl_pen = 0.0
    else:
        policy_loss = -(ratio * adv).mean()
        kl_pen = beta * kl_per.mean()

    vf_err = values - batch.value_targets
    vf_sq = vf_err * vf_err
    vf_loss = np.minimum(vf_sq, config.vf_clip_param).mean()
    entropy = entropy_per.mean()

    loss = policy_loss + kl_pen + config.vf_loss_coeff * vf_loss
    loss -= config.entropy_coeff * entropy
    diagnostics = {
        "loss": float(loss),
        "policy_loss": float(policy_loss),
        "vf_loss": float(vf_loss),
        "entropy": float(entropy),
        "kl": float(kl_per.mean()),
        "clip_fraction": float((np.abs(ratio - 1.0) > config.clip_param).mean()),
    }
    pieces = {
        "probs": probs,
        "values": values,
        "cache": cache,
        "rows": rows,
        "logp_all": logp_all,
        "ratio": ratio,
        "old_probs": old_probs,
        "vf_err": vf_err,
        "vf_sq": vf_sq,
        "entropy_per": entropy_per,
    }
    return loss, diagnostics, pieces


def ppo_loss(
    params: PolicyParameters,
    batch: RolloutBatch,
    config: PpoConfig,
    kl: Optional[KlController] = None,
) -> tuple[float, dict]:
    """Scalar PPO loss and diagnostics for the configured variant."""
    beta = kl.beta if kl is not None else config.kl_coeff
    loss, diagnostics, _ = _loss_pieces(params, batch, config, beta)
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss is {loss}")
    return float(loss), diagnostics


def loss_and_grad(
    params: PolicyParameters,
    batch: RolloutBatch,
    config: PpoConfig,
    beta: float,
) -> tuple[float, PolicyParameters, dict]:
    """Analytic gradient of the PPO loss with respect to all parameters."""
    loss, diagnostics, p = _loss_pieces(params, batch, config, beta)
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss is {loss}")
    size = len(batch)
    rows, probs, ratio, adv = p["rows"], p["probs"], p["ratio"], batch.advantages

    # d loss / d log pi(a_t | s_t)
    if config.variant == "clipped":
        unclipped = ratio * adv
        clipped_ratio = np.clip(ratio, 1.0 - config.clip_param, 1.0 + config.clip_param)
        active = unclipped <= clipped_ratio * adv
        g_logp = -(adv * ratio * active) / size
    else:
        g_logp = -(adv * ratio) / size

    # Through the softmax: d logp_a / d logits = onehot(a) - probs.
    g_logits = -g_logp[:, None] * probs
    g_logits[rows, batch.actions] += g_logp
    if config.variant == "adaptive_kl":
        g_logits += beta / size * (probs - p["old_probs"])
    if config.entropy_coeff != 0.0:
        g_logits += (
            config.entropy_coeff
            / size
            * probs
            * (p["logp_all"] + p["entropy_per"][:, None])
        )

    g_values = (
        config.vf_loss_coeff
        * 2.0
        * p["vf_err"]
        * (p["vf_sq"] <= config.vf_clip_param)
        / size
    )

    grads = pol.backward(params, p["cache"], g_logits, g_values)
    return float(loss), grads, diagnostics


def measure_kl(params: PolicyParameters, batch: RolloutBatch) -> float:
    """Mean KL(old || new) of the batch under the given parameters."""
    _, _, cache = pol.forward(params, batch.obs)
    old_logp_all = pol.log_softmax(batch.old_logits)
    old_probs = np.exp(old_logp_all)
    return float((old_probs * (old_logp_all - cache["logp"])).sum(axis=1).mean())


def ppo_update(
    params: PolicyParameters,
    batch: RolloutBatch,
    config: PpoConfig,
    controller: Optional[KlController] = None,
    optimizer: Optional[Adam] = None,
    rng: Optional[np.random.Generator] = None,
) -> tuple[PolicyParameters, dict]:
    """Several epochs of shuffled-minibatch Adam steps on one batch.

    A non-finite loss aborts the update and the previous parameters are
    returned untouched (diagnostics carry ``aborted=True``).
    """
    if len(batch) == 0:
        raise EmptyBatch("cannot update from an empty batch")
    if optimizer is None:
        optimizer = Adam(
            config.learning_rate,
            beta1=config.adam_beta1,
            beta2=config.adam_beta2,
            eps=config.adam_eps,
            grad_clip=config.grad_clip,
        )
    if rng is None:
        rng = np.random.default_rng(config.seed)
    beta = controller.beta if controller is not None else config.kl_coeff
    work = params.copy()
    diagnostics: dict = {}
    size = len(batch)
    try:
        for _ in range(config.num_sgd_iter):
            order = rng.permutation(size) if config.shuffle_sequences else np.arange(size)
            for start in range(0, size, config.sgd_minibatch_size):
                idx = order[start : start + config.sgd_minibatch_size]
                _, grads, diagnostics = loss_and_grad(work, batch.take(idx), config, beta)
                optimizer.step(work, grads)
        if not work.allfinite():
            raise NonFiniteLoss("parameters diverged to non-finite values")
    except NonFiniteLoss:
        return params, {"aborted": True, "kl": float("nan")}
    diagnostics["kl"] = measure_kl(work, batch)
    diagnostics["aborted"] = False
    return work, diagnostics


@dataclass
class StopCondition:
    max_env_steps: int
    plateau_patience: Optional[int] = None  # iterations without improvement
    plateau_delta: float = 0.01


@dataclass
class TrainResult:
    params: PolicyParameters
    curve: list[tuple[int, float]]  # (env steps, mean episode reward)
    episode_returns: list[float] = field(default_factory=list)
    iterations: int = 0
    env_steps: int = 0
    elapsed: float = 0.0
    kl_controller: Optional[KlController] = None


def train(
    env_factory: Callable[[int], object],
    config: PpoConfig,
    stop: StopCondition,
    callback: Optional[Callable[[int, dict], None]] = None,
) -> TrainResult:
    """Iterate rollout -> GAE -> update until the stop condition.

    ``env_factory(i)`` must build the i-th rollout environment; an
    environment exposes ``actions`` (the discrete k list), ``reset()``
    and ``step(action_index)`` returning an object with ``next_obs``,
    ``reward`` and ``done`` fields.
    """
    started = time.perf_counter()
    envs = [env_factory(i) for i in range(config.num_envs)]
    obs = [np.asarray(env.reset(), dtype=np.float64) for env in envs]
    obs_dim = obs[0].shape[0]
    n_actions = len(envs[0].actions)
    params = pol.init_params(obs_dim, n_actions, hidden=config.hidden, seed=config.seed)
    optimizer = Adam(
        config.learning_rate,
        beta1=config.adam_beta1,
        beta2=config.adam_beta2,
        eps=config.adam_eps,
        grad_clip=config.grad_clip,
    )
    controller = KlController(beta=config.kl_coeff, delta=config.kl_target)
    rng = np.random.default_rng(config.seed + 1)

    per_env = max(1, -(-config.train_batch_size // config.num_envs))
    curve: list[tuple[int, float]] = []
    episode_returns: list[float] = []
    recent = deque(maxlen=32)
    running = [0.0] * config.num_envs
    env_steps = 0
    iterations = 0
    best = -np.inf
    stale = 0

    while env_steps < stop.max_env_steps:
        n_envs = config.num_envs
        obs_buf = np.empty((per_env, n_envs, obs_dim))
        act_buf = np.empty((per_env, n_envs), dtype=np.int64)
        logp_buf = np.empty((per_env, n_envs))
        logits_buf = np.empty((per_env, n_envs, n_actions))
        rew_buf = np.empty((per_env, n_envs))
        done_buf = np.empty((per_env, n_envs))
        val_buf = np.empty((per_env, n_envs))

        for t in range(per_env):
            x = np.stack(obs)
            probs, values, cache = pol.forward(params, x)
            actions, logps = pol.sample_actions(probs, rng)
            obs_buf[t] = x
            act_buf[t] = actions
            logp_buf[t] = logps
            logits_buf[t] = cache["logits"]
            val_buf[t] = values
            for e, env in enumerate(envs):
                res = env.step(int(actions[e]))
                rew_buf[t, e] = res.reward
                done_buf[t, e] = res.done
                running[e] += res.reward
                if res.done:
                    episode_returns.append(running[e])
                    recent.append(running[e])
                    running[e] = 0.0
                obs[e] = np.asarray(res.next_obs, dtype=np.float64)
        _, bootstrap, _ = pol.forward(params, np.stack(obs))

        adv_cols, tgt_cols = [], []
        for e in range(n_envs):
            adv, tgt = gae_from_arrays(
                rew_buf[:, e],
                val_buf[:, e],
                done_buf[:, e],
                float(bootstrap[e]),
                config.gamma,
                config.gae_lambda,
            )
            adv_cols.append(adv)
            tgt_cols.append(tgt)
        batch = RolloutBatch(
            obs=obs_buf.transpose(1, 0, 2).reshape(-1, obs_dim),
            actions=act_buf.T.reshape(-1),
            old_log_probs=logp_buf.T.reshape(-1),
            old_logits=logits_buf.transpose(1, 0, 2).reshape(-1, n_actions),
            advantages=normalize_advantages(np.concatenate(adv_cols)),
            value_targets=np.concatenate(tgt_cols),
        )
        env_steps += len(batch)
        params, diagnostics = ppo_update(
            params, batch, config, controller=controller, optimizer=optimizer, rng=rng
        )
        if config.variant == "adaptive_kl" and not diagnostics.get("aborted"):
            controller = adapt_kl_beta(diagnostics["kl"], controller)
        iterations += 1

        if recent:
            mean_episode = float(np.mean(recent))
        else:
            # No episode finished yet: estimate from the step rewards.
            horizon = getattr(getattr(envs[0], "config", None), "horizon", 1)
            mean_episode = float(rew_buf.mean()) * horizon
        curve.append((env_steps, mean_episode))
        if callback is not None:
            callback(env_steps, {**diagnostics, "mean_episode_reward": mean_episode})

        if stop.plateau_patience is not None:
            if mean_episode > best + stop.plateau_delta:
                best = mean_episode
                stale = 0
            else:
                stale += 1
                if stale >= stop.plateau_patience:
                    break

    return TrainResult(
        params=params,
        curve=curve,
        episode_returns=episode_returns,
        iterations=iterations,
        env_steps=env_steps,
        elapsed=time.perf_counter() - started,
        kl_controller=controller,
    )


def greedy_actions(
    params: PolicyParameters, observations: np.ndarray, action_list: Sequence[int]
) -> np.ndarray:
    """Deterministic argmax filter value for each observation row."""
    probs, _, _ = pol.forward(params, observations)
    return np.asarray(action_list)[probs.argmax(axis=1)]


def evaluate_policy(
    params: PolicyParameters,
    dataset: Sequence[LabeledSequence],
    model: CountModel,
    env_config: EnvConfig,
) -> MetricsReport:
    """Greedy per-window filter values, sequence verdicts, metrics.

    Sequences too short to produce a window are predicted normal.
    """
    samples = []
    slices = []
    for seq in dataset:
        windows = windows_from_sequence(seq, model.w)
        slices.append((len(samples), len(samples) + len(windows)))
        samples.extend(windows)
    labels = [seq.label for seq in dataset]
    if not samples:
        return metrics_from_verdicts(labels, [0] * len(dataset))
    obs = np.stack([observe(s.history, model.n) for s in samples])
    ks = greedy_actions(params, obs, env_config.action_list)
    ranks = window_ranks(samples, model)
    flagged = ranks > ks
    verdicts = [int(flagged[lo:hi].any()) for lo, hi in slices]
    return metrics_from_verdicts(labels, verdicts)


def save_curve(curve: Sequence[tuple[int, float]], path) -> None:
    """``<steps>\\t<mean_reward>`` rows."""
    with open(path, "w") as fh:
        for steps, reward in curve:
            fh.write(f"{steps}\t{reward:.6f}\n")
