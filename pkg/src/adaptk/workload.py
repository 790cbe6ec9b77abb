"""Synthetic log workload generation and external dataset ingestion.

The generator draws event sequences from per-regime Markov chains over
disjoint template alphabets, injects one perturbation into each
anomalous sequence (event substitution, truncation, or a shuffled span),
and renders every event as a raw log line with realistic header fields
and randomized parameters.  Everything is derived from the workload
seed, so generation is byte-reproducible.

The canonical two-regime workload pairs a steady regime (deterministic
template cycle, low event ids; its anomalies only make sense under a
small filter) with a bursty regime (uniform template draws, higher event
ids; normal windows there need a large filter to pass).  Regime identity
is never exposed to the detector -- only the window of event ids -- which
is exactly what makes a per-window adaptive filter testable against the
best fixed one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .logparse import (
    FORMAT_PRESETS,
    HeaderMismatch,
    LogRecord,
    Template,
    TemplateTable,
    parse_line,
)
from .partition import LabeledSequence

ANOMALY_KINDS = ("event-substitution", "truncation", "shuffle")

_VERBS = [
    "alloc", "open", "close", "send", "recv", "flush",
    "verify", "commit", "replicate", "purge", "scan", "sync",
]
_NOUNS = ["block", "segment", "chunk", "buffer", "region", "stripe", "extent", "page"]


class InvalidSpec(Exception):
    pass


class SchemaMismatch(Exception):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass
class RegimeSpec:
    """One workload regime: a Markov chain over its template alphabet."""

    name: str
    template_ids: list[int]
    transition: np.ndarray  # row-stochastic, square over template_ids
    anomaly_rate: float
    anomaly_kind: str = "event-substitution"
    substitution_ids: Optional[list[int]] = None  # pool for substituted events
    inject_position: str = "uniform"  # "uniform" over the tail, or "last"
    weight: float = 1.0

    def validate(self, n_templates: int) -> None:
        size = len(self.template_ids)
        if size == 0:
            raise InvalidSpec(f"regime {self.name}: empty alphabet")
        if any(not 0 <= t < n_templates for t in self.template_ids):
            raise InvalidSpec(f"regime {self.name}: template id out of range")
        matrix = np.asarray(self.transition, dtype=np.float64)
        if matrix.shape != (size, size):
            raise InvalidSpec(f"regime {self.name}: transition must be {size}x{size}")
        if (matrix < 0).any() or not np.allclose(matrix.sum(axis=1), 1.0):
            raise InvalidSpec(f"regime {self.name}: transition rows must sum to 1")
        if not 0.0 <= self.anomaly_rate <= 1.0:
            raise InvalidSpec(f"regime {self.name}: anomaly rate must be in [0, 1]")
        if self.anomaly_kind not in ANOMALY_KINDS:
            raise InvalidSpec(f"regime {self.name}: unknown kind {self.anomaly_kind!r}")
        if self.inject_position not in ("uniform", "last"):
            raise InvalidSpec(
                f"regime {self.name}: unknown inject position {self.inject_position!r}"
            )
        if self.weight <= 0:
            raise InvalidSpec(f"regime {self.name}: weight must be > 0")


@dataclass
class WorkloadSpec:
    n_templates: int
    n_sequences: int
    regimes: list[RegimeSpec]
    seq_len_range: tuple[int, int] = (14, 20)
    seed: int = 0
    inject_after: int = 6  # perturbations land at positions >= this
    emit_banner: bool = True  # one startup line per template pins mined ids

    def validate(self) -> None:
        if self.n_templates < 1 or self.n_sequences < 0:
            raise InvalidSpec("need n_templates >= 1 and n_sequences >= 0")
        if not self.regimes:
            raise InvalidSpec("at least one regime is required")
        lo, hi = self.seq_len_range
        if lo < 2 or hi < lo:
            raise InvalidSpec("seq_len_range must satisfy 2 <= lo <= hi")
        for regime in self.regimes:
            regime.validate(self.n_templates)


@dataclass
class GeneratedWorkload:
    lines: list[str]
    sequences: list[LabeledSequence]
    table: TemplateTable
    regime_of: dict[str, str] = field(default_factory=dict)

    @property
    def labels(self) -> dict[str, int]:
        return {seq.seq_id: seq.label for seq in self.sequences}


def _template_tokens(event_id: int) -> list[str]:
    """Ground-truth token skeleton; '<*>' marks parameter slots."""
    tokens = [f"{_VERBS[event_id % 12]}{event_id:02d}", _NOUNS[event_id % 8], "<*>"]
    if event_id % 3 == 0:
        tokens += ["size", "<*>"]
    elif event_id % 3 == 1:
        tokens += ["took", "<*>", "ms"]
    return tokens


def truth_table(n_templates: int) -> TemplateTable:
    table = TemplateTable()
    for event_id in range(n_templates):
        table.insert_template(_template_tokens(event_id))
    return table


def _render_line(
    event_id: int, session: str, clock: int, pid: int, rng: np.random.Generator
) -> str:
    tokens = list(_template_tokens(event_id))
    tokens[2] = session  # the identifier slot
    for i, tok in enumerate(tokens):
        if tok == "<*>":
            tokens[i] = str(rng.integers(1, 100000))
    level = "INFO" if event_id % 4 else "WARN"
    component = f"svc.{_VERBS[event_id % 12].capitalize()}Handler"
    return f"260103 {clock % 1000000:06d} {pid} {level} {component}: {' '.join(tokens)}"


def _sample_chain(regime: RegimeSpec, length: int, rng: np.random.Generator) -> list[int]:
    ids = regime.template_ids
    matrix = np.asarray(regime.transition, dtype=np.float64)
    cumulative = matrix.cumsum(axis=1)
    state = int(rng.integers(len(ids)))
    events = [ids[state]]
    for _ in range(length - 1):
        state = int(np.searchsorted(cumulative[state], rng.random(), side="right"))
        state = min(state, len(ids) - 1)
        events.append(ids[state])
    return events


def _inject(
    events: list[int],
    regime: RegimeSpec,
    inject_after: int,
    rng: np.random.Generator,
) -> list[int]:
    """Apply exactly one perturbation; the result always differs."""
    length = len(events)
    low = min(inject_after, length - 1)
    kind = regime.anomaly_kind
    if kind == "truncation" and length >= 3:
        cut = int(rng.integers(max(1, length // 3), max(2, 2 * length // 3)))
        return events[:cut]
    if kind == "shuffle":
        span = min(4, length - low)
        if span >= 2:
            start = int(rng.integers(low, length - span + 1))
            window = events[start : start + span]
            if len(set(window)) >= 2:
                rotated = window[1:] + window[:1]
                while rotated == window:
                    rotated = rotated[1:] + rotated[:1]
                return events[:start] + rotated + events[start + span :]
        kind = "event-substitution"  # degenerate span: fall through
    if regime.inject_position == "last":
        pos = length - 1
    else:
        pos = int(rng.integers(low, length))
    pool = regime.substitution_ids or regime.template_ids
    options = [e for e in pool if e != events[pos]]
    if not options:
        raise InvalidSpec(f"regime {regime.name}: substitution pool is degenerate")
    out = list(events)
    out[pos] = int(options[int(rng.integers(len(options)))])
    return out


def generate_workload(spec: WorkloadSpec) -> GeneratedWorkload:
    """Draw sequences per regime, inject anomalies, render raw lines."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    lines: list[str] = []
    sequences: list[LabeledSequence] = []
    regime_of: dict[str, str] = {}
    clock = 0

    if spec.emit_banner:
        # Startup banner: each template once, in id order, as one-line
        # sessions (negative block ids).  Too short to form a window, so
        # they never affect detection; they only pin template-mining order.
        for event_id in range(spec.n_templates):
            seq_id = f"blk_-{event_id + 1}"
            lines.append(_render_line(event_id, seq_id, clock, 1, rng))
            clock += 1
            sequences.append(LabeledSequence(seq_id=seq_id, events=[event_id], label=0))
            regime_of[seq_id] = "banner"

    weights = np.array([r.weight for r in spec.regimes], dtype=np.float64)
    weights /= weights.sum()
    lo, hi = spec.seq_len_range
    for i in range(spec.n_sequences):
        regime = spec.regimes[int(rng.choice(len(spec.regimes), p=weights))]
        length = int(rng.integers(lo, hi + 1))
        events = _sample_chain(regime, length, rng)
        label = int(rng.random() < regime.anomaly_rate)
        if label:
            events = _inject(events, regime, spec.inject_after, rng)
        seq_id = f"blk_{i}"
        pid = int(rng.integers(100, 1000))
        for event in events:
            lines.append(_render_line(event, seq_id, clock, pid, rng))
            clock += 1
        sequences.append(LabeledSequence(seq_id=seq_id, events=events, label=label))
        regime_of[seq_id] = regime.name
    return GeneratedWorkload(
        lines=lines,
        sequences=sequences,
        table=truth_table(spec.n_templates),
        regime_of=regime_of,
    )


def cycle_regime(
    name: str,
    template_ids: Sequence[int],
    anomaly_rate: float,
    anomaly_kind: str = "event-substitution",
    substitution_ids: Optional[Sequence[int]] = None,
    weight: float = 1.0,
) -> RegimeSpec:
    """Deterministic cycle: template i is always followed by i+1 (wrapping)."""
    size = len(template_ids)
    matrix = np.zeros((size, size))
    for i in range(size):
        matrix[i, (i + 1) % size] = 1.0
    return RegimeSpec(
        name=name,
        template_ids=list(template_ids),
        transition=matrix,
        anomaly_rate=anomaly_rate,
        anomaly_kind=anomaly_kind,
        substitution_ids=list(substitution_ids) if substitution_ids else None,
        weight=weight,
    )


def uniform_regime(
    name: str,
    template_ids: Sequence[int],
    anomaly_rate: float,
    anomaly_kind: str = "event-substitution",
    substitution_ids: Optional[Sequence[int]] = None,
    weight: float = 1.0,
) -> RegimeSpec:
    """Maximum-entropy chain: every next template equally likely."""
    size = len(template_ids)
    matrix = np.full((size, size), 1.0 / size)
    return RegimeSpec(
        name=name,
        template_ids=list(template_ids),
        transition=matrix,
        anomaly_rate=anomaly_rate,
        anomaly_kind=anomaly_kind,
        substitution_ids=list(substitution_ids) if substitution_ids else None,
        weight=weight,
    )


def two_regime_spec(
    n_templates: int = 48,
    n_sequences: int = 5000,
    cycle_size: int = 24,
    noise_size: int = 10,
    rank_gap: int = 4,
    anomaly_rate: float = 0.08,
    seq_len_range: tuple[int, int] = (14, 20),
    seed: int = 0,
    window: int = 6,
    anomaly_kind: str = "event-substitution",
) -> WorkloadSpec:
    """The canonical steady-vs-bursty workload.

    Template ids [0, cycle_size) form the steady cycle; ids
    [cycle_size, cycle_size + noise_size) are the bursty alphabet; the
    top ids only ever appear as substituted events in bursty anomalies.
    ``rank_gap`` ids in between never occur inside a sequence (the
    startup banner still exercises them once), so bursty anomalies sit a
    comfortable margin above the largest rank a bursty normal window can
    reach and every filter value inside the gap separates them exactly.
    """
    pool_start = cycle_size + noise_size + rank_gap
    if n_templates <= pool_start:
        raise InvalidSpec(
            "n_templates must exceed cycle_size + noise_size + rank_gap"
        )
    steady = cycle_regime(
        "steady",
        list(range(cycle_size)),
        anomaly_rate,
        anomaly_kind,
        substitution_ids=list(range(cycle_size // 2, cycle_size)),
    )
    bursty = uniform_regime(
        "bursty",
        list(range(cycle_size, cycle_size + noise_size)),
        anomaly_rate,
        anomaly_kind,
        substitution_ids=list(range(pool_start, n_templates)),
    )
    # A bursty anomaly corrupts the final event, so it is visible only as
    # a window target (an outside-top-k prediction); the steady regime's
    # anomalies also corrupt mid-sequence histories.  Each regime then
    # rewards one coherent filter range.
    bursty.inject_position = "last"
    return WorkloadSpec(
        n_templates=n_templates,
        n_sequences=n_sequences,
        regimes=[steady, bursty],
        seq_len_range=seq_len_range,
        seed=seed,
        inject_after=window,
    )


def load_structured_logs(path, preset: str) -> list[LogRecord]:
    """Read an externally parsed dataset with a known column layout.

    ``hdfs`` lines carry a block identifier in the message body; ``bgl``
    lines start with an alert tag where ``-`` means non-alert and
    anything else is an alert.  Any malformed row raises SchemaMismatch
    naming the line.
    """
    if preset not in FORMAT_PRESETS:
        raise InvalidSpec(f"unknown schema preset {preset!r}")
    records = []
    with open(path, errors="replace") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = parse_line(
                    line,
                    FORMAT_PRESETS[preset],
                    line_no=line_no,
                    id_pattern=r"blk_-?\d+" if preset == "hdfs" else None,
                )
            except HeaderMismatch as exc:
                raise SchemaMismatch(line_no, str(exc)) from exc
            if preset == "hdfs":
                if rec.identifier is None:
                    raise SchemaMismatch(line_no, "no block identifier in content")
            else:
                tag = rec.timestamp_fields.get("Label", "")
                rec.alert = 0 if tag == "-" else 1
            records.append(rec)
    return records
