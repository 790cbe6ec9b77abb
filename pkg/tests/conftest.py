import numpy as np
import pytest

from adaptk.partition import LabeledSequence, WindowSample


@pytest.fixture
def nine_event_dist():
    """The 9-event next-event distribution used in the worked example."""
    return np.array([0.15, 0.18, 0.12, 0.05, 0.10, 0.10, 0.01, 0.01, 0.28])


@pytest.fixture
def hdfs_line():
    return "081109 203518 143 INFO dfs.DataNode: Receiving block blk_1 src: /10.0.0.1"


def make_sequence(events, label=0, seq_id="s"):
    return LabeledSequence(seq_id=seq_id, events=list(events), label=label)


def make_window(history, target, label=0, seq_id="s"):
    return WindowSample(history=tuple(history), target=target, label=label, seq_id=seq_id)
