"""Grouping structured logs into labeled sequences and prediction windows.

Two partitioning strategies are supported: session-based (group by a
shared identifier such as an HDFS block id) and sliding (fixed log count
advanced by a fixed step, for identifier-free streams such as BGL).
Sequences are then cut into fixed-width windows, each pairing a W-length
event history with the event that actually followed it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

from .logparse import LogRecord


class MissingLabel(Exception):
    def __init__(self, seq_id: str):
        super().__init__(f"no label for sequence {seq_id!r}")
        self.seq_id = seq_id


class InvalidWindow(Exception):
    pass


@dataclass
class LabeledSequence:
    seq_id: str
    events: list[int]
    label: int  # 0 normal, 1 anomalous


@dataclass
class WindowSample:
    history: tuple[int, ...]
    target: int
    label: int  # inherited from the owning sequence
    seq_id: str


def partition_by_session(
    records: Sequence[LogRecord],
    id_extractor: Optional[Callable[[LogRecord], Optional[str]]] = None,
    labels: Mapping[str, int] = (),
) -> list[LabeledSequence]:
    """One sequence per identifier, events in record order.

    Every record must carry a non-empty identifier and every identifier
    must appear in ``labels``; a missing label raises MissingLabel.
    """
    if id_extractor is None:
        id_extractor = lambda rec: rec.identifier
    order: list[str] = []
    grouped: dict[str, list[int]] = {}
    for rec in records:
        ident = id_extractor(rec)
        if not ident:
            raise ValueError(f"record at line {rec.line_no} has no identifier")
        if rec.event_id is None:
            raise ValueError(f"record at line {rec.line_no} has no event id")
        if ident not in grouped:
            grouped[ident] = []
            order.append(ident)
        grouped[ident].append(rec.event_id)
    sequences = []
    for ident in order:
        if ident not in labels:
            raise MissingLabel(ident)
        sequences.append(
            LabeledSequence(seq_id=ident, events=grouped[ident], label=int(labels[ident]))
        )
    return sequences


def partition_sliding(
    records: Sequence[LogRecord],
    window_logs: int,
    step_logs: int,
    per_record_labels: Optional[Sequence[int]] = None,
) -> list[LabeledSequence]:
    """Cut sequences of ``window_logs`` records every ``step_logs`` records.

    The final partial window is dropped.  A sequence is labeled anomalous
    iff any member record is an alert (label 1).
    """
    if window_logs < 1 or step_logs < 1 or step_logs > window_logs:
        raise InvalidWindow(
            f"need window_logs >= 1 and 1 <= step_logs <= window_logs, "
            f"got window={window_logs} step={step_logs}"
        )
    if per_record_labels is None:
        per_record_labels = [rec.alert or 0 for rec in records]
    if len(per_record_labels) != len(records):
        raise InvalidWindow("per_record_labels must align with records")
    sequences = []
    for offset in range(0, len(records) - window_logs + 1, step_logs):
        chunk = records[offset : offset + window_logs]
        events = []
        for rec in chunk:
            if rec.event_id is None:
                raise ValueError(f"record at line {rec.line_no} has no event id")
            events.append(rec.event_id)
        label = int(any(per_record_labels[offset : offset + window_logs]))
        sequences.append(
            LabeledSequence(seq_id=f"win_{offset}", events=events, label=label)
        )
    return sequences


def windows_from_sequence(seq: LabeledSequence, w: int) -> list[WindowSample]:
    """One sample per position t in [W, len): history events[t-W:t], target events[t]."""
    if w < 1:
        raise InvalidWindow("window width W must be >= 1")
    samples = []
    for t in range(w, len(seq.events)):
        samples.append(
            WindowSample(
                history=tuple(seq.events[t - w : t]),
                target=seq.events[t],
                label=seq.label,
                seq_id=seq.seq_id,
            )
        )
    return samples


def windows_from_dataset(
    sequences: Sequence[LabeledSequence], w: int
) -> list[WindowSample]:
    samples: list[WindowSample] = []
    for seq in sequences:
        samples.extend(windows_from_sequence(seq, w))
    return samples


def save_sequences(sequences: Sequence[LabeledSequence], path) -> None:
    """One ``<seq_id>\\t<label>\\t<comma-joined event ids>`` line per sequence."""
    with open(path, "w") as fh:
        for seq in sequences:
            fh.write(f"{seq.seq_id}\t{seq.label}\t{','.join(map(str, seq.events))}\n")


def load_sequences(path) -> list[LabeledSequence]:
    sequences = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            seq_id, label, events = line.split("\t")
            sequences.append(
                LabeledSequence(
                    seq_id=seq_id,
                    events=[int(e) for e in events.split(",")] if events else [],
                    label=int(label),
                )
            )
    return sequences
