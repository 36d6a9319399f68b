import numpy as np
import pytest

from dedt import Tracker, TrackerConfig
from dedt.auxiliary import AuxiliaryModel
from dedt.bench.synth import SynthSpec, synth_sequence
from dedt.snapshot import SnapshotError, dumps, load_snapshot, loads, save_snapshot


@pytest.fixture(scope="module")
def tracker():
    frames, gt = synth_sequence(SynthSpec(frames=4), seed=0)
    cfg = TrackerConfig(C=3, k=3, n=40, m=10, m_prime=20, member_capacity=200, delta=10)
    tr, _ = Tracker.init(frames[0], gt[0], cfg)
    for f in frames[1:]:
        tr.step(f)
    return tr, frames


def test_round_trip(tracker, tmp_path):
    tr, frames = tracker
    path = tmp_path / "snap.bin"
    save_snapshot(path, tr.committee, tr.aux)
    com, aux = load_snapshot(path)
    assert com.state_equal(tr.committee)
    assert np.array_equal(aux.weights, tr.aux.weights)
    assert aux.last_trained == tr.aux.last_trained and aux.window_times == tr.aux.window_times
    assert all(np.array_equal(a, b) for a, b in zip(aux.window_features, tr.aux.window_features))
    q = tr.features(frames[-1], np.array([[60.0, 40.0, 32.0, 32.0]]))
    assert np.array_equal(com.member_scores(q), tr.committee.member_scores(q))
    assert dumps(com, aux) == path.read_bytes()


def test_untrained_aux(tracker):
    tr, _ = tracker
    _, aux = loads(dumps(tr.committee, AuxiliaryModel(tr.committee.dim)))
    assert aux.weights is None and aux.last_trained is None


def test_corrupt(tracker):
    tr, _ = tracker
    data = dumps(tr.committee, tr.aux)
    with pytest.raises(SnapshotError, match="magic"):
        loads(b"XXXX" + data[4:])
    with pytest.raises(SnapshotError, match="truncated"):
        loads(data[:-3])
    with pytest.raises(SnapshotError, match="trailing"):
        loads(data + b"\0")
    with pytest.raises(SnapshotError, match="version"):
        loads(data[:4] + b"\x09\x00" + data[6:])
