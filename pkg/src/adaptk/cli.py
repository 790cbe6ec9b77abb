"""Command-line pipeline: generate, parse, partition, train-model,
sweep-k, train-agent, evaluate.

Each subcommand reads its declared inputs, writes its declared artifacts
under the configured output directory, and prints a one-line summary.
Every stage is deterministic given the same config and seeds, so reruns
produce byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import detect, logparse, partition, ppo, seqmodel, workload
from .config import ConfigError, RunConfig, load_config
from .policy import load_params, save_params
from .rlenv import EnvConfig, LogFilterEnv


def stratified_split(
    sequences: list[partition.LabeledSequence], train_ratio: float, seed: int
) -> tuple[list[partition.LabeledSequence], list[partition.LabeledSequence]]:
    """Deterministic label-stratified split."""
    rng = np.random.default_rng(seed)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for label in (0, 1):
        idx = [i for i, s in enumerate(sequences) if s.label == label]
        order = rng.permutation(len(idx))
        cut = int(round(train_ratio * len(idx)))
        train_idx.extend(idx[i] for i in order[:cut])
        test_idx.extend(idx[i] for i in order[cut:])
    return (
        [sequences[i] for i in sorted(train_idx)],
        [sequences[i] for i in sorted(test_idx)],
    )


def model_fit_split(
    train_seqs: list[partition.LabeledSequence], model_fit_ratio: float, seed: int
) -> tuple[list[partition.LabeledSequence], list[partition.LabeledSequence]]:
    """Split training sequences into model-fit and agent-training parts.

    The count model memorizes every window it is fit on, so the agent
    must train on sequences the model never saw; otherwise the ranks it
    learns from do not transfer to unseen data.  The split is stratified
    so the agent part keeps the true anomaly share.
    """
    return stratified_split(train_seqs, model_fit_ratio, seed)


def _mkdir(cfg: RunConfig) -> None:
    Path(cfg.paths.out_dir).mkdir(parents=True, exist_ok=True)


def cmd_generate(cfg: RunConfig) -> str:
    _mkdir(cfg)
    w = cfg.workload
    spec = workload.two_regime_spec(
        n_templates=w.n_templates,
        n_sequences=w.n_sequences,
        cycle_size=w.cycle_size,
        noise_size=w.noise_size,
        rank_gap=w.rank_gap,
        anomaly_rate=w.anomaly_rate,
        seq_len_range=(w.seq_len_min, w.seq_len_max),
        seed=w.seed,
        window=cfg.partition.window,
        anomaly_kind=w.anomaly_kind,
    )
    generated = workload.generate_workload(spec)
    with open(cfg.paths.resolve("raw_log"), "w") as fh:
        fh.write("\n".join(generated.lines) + "\n")
    partition.save_sequences(generated.sequences, cfg.paths.resolve("truth_sequences"))
    logparse.save_table(generated.table, cfg.paths.resolve("truth_templates"))
    with open(cfg.paths.resolve("labels"), "w") as fh:
        for seq in generated.sequences:
            fh.write(f"{seq.seq_id}\t{seq.label}\n")
    anomalies = sum(s.label for s in generated.sequences)
    return (
        f"generate: {len(generated.lines)} lines, {len(generated.sequences)} sequences "
        f"({anomalies} anomalous), {len(generated.table)} templates"
    )


def cmd_parse(cfg: RunConfig) -> str:
    _mkdir(cfg)
    records, table, skipped = logparse.parse_file(
        cfg.paths.resolve("raw_log"),
        cfg.parser.format_preset,
        similarity_threshold=cfg.parser.similarity_threshold,
        depth=cfg.parser.depth,
        id_pattern=cfg.parser.id_pattern or None,
    )
    if cfg.parser.format_preset == "bgl":
        for rec in records:
            rec.alert = 0 if rec.timestamp_fields.get("Label") == "-" else 1
    logparse.save_table(table, cfg.paths.resolve("templates"))
    logparse.save_records(records, cfg.paths.resolve("structured"))
    return (
        f"parse: {len(records)} records, {skipped} skipped, {len(table)} templates"
    )


def cmd_partition(cfg: RunConfig) -> str:
    _mkdir(cfg)
    records = logparse.load_records(cfg.paths.resolve("structured"))
    if cfg.partition.mode == "session":
        labels: dict[str, int] = {}
        with open(cfg.paths.resolve("labels")) as fh:
            for line in fh:
                seq_id, label = line.rstrip("\n").split("\t")
                labels[seq_id] = int(label)
        sequences = partition.partition_by_session(records, labels=labels)
    else:
        sequences = partition.partition_sliding(
            records, cfg.partition.window_logs, cfg.partition.step_logs
        )
    partition.save_sequences(sequences, cfg.paths.resolve("sequences"))
    anomalies = sum(s.label for s in sequences)
    return f"partition: {len(sequences)} sequences ({anomalies} anomalous)"


def cmd_train_model(cfg: RunConfig) -> str:
    _mkdir(cfg)
    sequences = partition.load_sequences(cfg.paths.resolve("sequences"))
    table = logparse.load_table(cfg.paths.resolve("templates"))
    train_seqs, test_seqs = stratified_split(
        sequences, cfg.split.train_ratio, cfg.split.seed
    )
    fit_seqs, agent_seqs = model_fit_split(
        train_seqs, cfg.split.model_fit_ratio, cfg.split.seed + 1
    )
    partition.save_sequences(train_seqs, cfg.paths.resolve("train_sequences"))
    partition.save_sequences(agent_seqs, cfg.paths.resolve("agent_sequences"))
    partition.save_sequences(test_seqs, cfg.paths.resolve("test_sequences"))
    samples = partition.windows_from_dataset(fit_seqs, cfg.partition.window)
    model = seqmodel.fit_counts(
        samples, n=len(table), w=cfg.partition.window, alpha=cfg.model.alpha
    )
    seqmodel.save_model(model, cfg.paths.resolve("model"))
    return (
        f"train-model: {len(train_seqs)} train ({len(fit_seqs)} model-fit, "
        f"{len(agent_seqs)} agent) / {len(test_seqs)} test sequences, "
        f"{len(model.counts)} contexts (n={model.n}, W={model.w})"
    )


def cmd_sweep_k(cfg: RunConfig) -> str:
    model = seqmodel.load_model(cfg.paths.resolve("model"))
    test_seqs = partition.load_sequences(cfg.paths.resolve("test_sequences"))
    k_values = list(range(1, cfg.env.m_max + 1))
    results, best_k = detect.sweep_fixed_k(test_seqs, model, k_values)
    detect.save_sweep(results, cfg.paths.resolve("sweep"))
    best = dict(results)[best_k]
    return f"sweep-k: best fixed k={best_k} with F1={best.f1:.4f} over k=1..{cfg.env.m_max}"


def _make_env_factory(cfg: RunConfig, samples, model, ranks):
    def factory(worker: int) -> LogFilterEnv:
        env_cfg = EnvConfig(
            m_max=cfg.env.m_max,
            action_stride=cfg.env.action_stride,
            c=cfg.env.c,
            gamma=cfg.env.gamma,
            horizon=cfg.env.horizon,
            seed=cfg.env.seed + worker,
            balanced_sampling=cfg.env.balanced_sampling,
        )
        return LogFilterEnv(env_cfg, samples, model, ranks=ranks)

    return factory


def cmd_train_agent(cfg: RunConfig) -> str:
    model = seqmodel.load_model(cfg.paths.resolve("model"))
    agent_seqs = partition.load_sequences(cfg.paths.resolve("agent_sequences"))
    samples = partition.windows_from_dataset(agent_seqs, model.w)
    ranks = detect.window_ranks(samples, model)
    stop = ppo.StopCondition(
        max_env_steps=cfg.train.max_env_steps,
        plateau_patience=cfg.train.plateau_patience or None,
        plateau_delta=cfg.train.plateau_delta,
    )
    result = ppo.train(_make_env_factory(cfg, samples, model, ranks), cfg.ppo, stop)
    save_params(result.params, cfg.paths.resolve("policy"))
    ppo.save_curve(result.curve, cfg.paths.resolve("curve"))
    final = result.curve[-1][1] if result.curve else float("nan")
    return (
        f"train-agent: {result.env_steps} env steps in {result.iterations} iterations "
        f"({result.elapsed:.1f}s), mean episode reward {final:.3f}"
    )


def cmd_evaluate(cfg: RunConfig) -> str:
    model = seqmodel.load_model(cfg.paths.resolve("model"))
    test_seqs = partition.load_sequences(cfg.paths.resolve("test_sequences"))
    params = load_params(cfg.paths.resolve("policy"))
    k_values = list(range(1, cfg.env.m_max + 1))
    results, best_k = detect.sweep_fixed_k(test_seqs, model, k_values)
    fixed = dict(results)[best_k]
    adaptive = ppo.evaluate_policy(params, test_seqs, model, cfg.env)
    lines = [
        f"fixed filter, best k={best_k}:",
        detect.format_metrics(fixed),
        "adaptive filter (greedy policy):",
        detect.format_metrics(adaptive),
        f"adaptive_minus_fixed_f1={adaptive.f1 - fixed.f1:+.4f}",
    ]
    report = "\n".join(lines)
    with open(cfg.paths.resolve("metrics"), "w") as fh:
        fh.write(detect.metrics_kv(fixed, prefix="fixed_") + "\n")
        fh.write(f"fixed_best_k={best_k}\n")
        fh.write(detect.metrics_kv(adaptive, prefix="adaptive_") + "\n")
        fh.write(f"adaptive_minus_fixed_f1={adaptive.f1 - fixed.f1:.6f}\n")
    print(report)
    return (
        f"evaluate: fixed k={best_k} F1={fixed.f1:.4f} vs adaptive F1={adaptive.f1:.4f}"
    )


_COMMANDS = {
    "generate": cmd_generate,
    "parse": cmd_parse,
    "partition": cmd_partition,
    "train-model": cmd_train_model,
    "sweep-k": cmd_sweep_k,
    "train-agent": cmd_train_agent,
    "evaluate": cmd_evaluate,
}


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adaptk",
        description="Log anomaly detection with a learned adaptive top-k filter.",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="path to the INI run config")
    parser.add_argument("--seed", type=int, default=None, help="override all stage seeds")
    parser.add_argument(
        "--workers", type=int, default=None, help="override rollout environment count"
    )
    parser.add_argument("--out-dir", default=None, help="override the output directory")
    return parser


def main(argv=None) -> int:
    args = build_arg_parser().parse_args(argv)
    overrides: dict[str, dict[str, str]] = {}
    if args.seed is not None:
        overrides["workload"] = {"seed": str(args.seed)}
        overrides["env"] = {"seed": str(args.seed)}
        overrides["split"] = {"seed": str(args.seed)}
    if args.workers is not None:
        overrides.setdefault("ppo", {})["num_envs"] = str(args.workers)
    if args.out_dir is not None:
        overrides.setdefault("paths", {})["out_dir"] = args.out_dir
    try:
        cfg = load_config(args.config, overrides)
        summary = _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # surface module errors with the stage name
        print(f"error in {args.command}: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
