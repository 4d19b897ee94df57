import numpy as np
import pytest
from numpy.testing import assert_allclose

from motionforecast import (
    HorizonSpec,
    MotionSequence,
    Pose,
    SequenceTooShortError,
    Skeleton,
    build_adjacency,
    default_skeleton,
    sliding_windows,
    split_sequence,
)

from helpers import chain_skeleton, random_sequence


def test_skeleton_rejects_invalid_layouts():
    with pytest.raises(ValueError):
        Skeleton(num_joints=0, joint_names=(), edges=(), root_index=0)
    with pytest.raises(ValueError):
        Skeleton(num_joints=2, joint_names=("a",), edges=((0, 1),), root_index=0)
    with pytest.raises(ValueError):
        Skeleton(num_joints=2, joint_names=("a", "b"), edges=((0, 1),), root_index=5)
    with pytest.raises(ValueError):
        Skeleton(num_joints=2, joint_names=("a", "b"), edges=((0, 0),), root_index=0)
    with pytest.raises(ValueError):
        Skeleton(num_joints=2, joint_names=("a", "b"), edges=((0, 1), (1, 0)), root_index=0)
    with pytest.raises(ValueError):
        Skeleton(num_joints=2, joint_names=("a", "b"), edges=((0, 5),), root_index=0)


def test_skeleton_requires_one_connected_body():
    with pytest.raises(ValueError, match="connect"):
        Skeleton(
            num_joints=4,
            joint_names=("a", "b", "c", "d"),
            edges=((0, 1), (2, 3)),
            root_index=0,
        )


def test_default_skeleton_is_a_rooted_tree():
    sk = default_skeleton()
    assert sk.num_joints == 17
    assert len(sk.edges) == 16
    assert sk.root_index == 0
    assert len(set(sk.joint_names)) == 17


def test_pose_is_immutable_and_finite():
    p = Pose(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        p.coords[0, 0] = 1.0
    bad = np.zeros((2, 3))
    bad[1, 2] = np.nan
    with pytest.raises(ValueError):
        Pose(bad)
    with pytest.raises(ValueError):
        Pose(np.zeros((3, 2)))


def test_sequence_validation():
    sk = chain_skeleton(3)
    frames = np.zeros((4, 3, 3))
    seq = MotionSequence(sk, frames, 10.0)
    assert len(seq) == 4
    with pytest.raises(ValueError):
        MotionSequence(sk, np.zeros((4, 2, 3)), 10.0)
    with pytest.raises(ValueError):
        MotionSequence(sk, frames, 0.0)
    with pytest.raises(ValueError):
        MotionSequence(sk, np.zeros((0, 3, 3)), 10.0)
    nan_frames = frames.copy()
    nan_frames[1, 1, 1] = np.inf
    with pytest.raises(ValueError):
        MotionSequence(sk, nan_frames, 10.0)


def test_sequence_accessors_and_locking():
    rng = np.random.default_rng(0)
    sk = chain_skeleton(4)
    seq = random_sequence(sk, 6, rng)
    assert seq.pose(2).num_joints == 4
    assert_allclose(seq.root_path(), seq.frames[:, 0])
    with pytest.raises(ValueError):
        seq.frames[0, 0, 0] = 9.0
    other = seq.with_frames(seq.frames + 1.0)
    assert other.fps == seq.fps
    assert other.skeleton is seq.skeleton
    assert_allclose(other.frames, seq.frames + 1.0)


def test_sequence_accepts_pose_iterable():
    sk = chain_skeleton(2)
    poses = [Pose(np.full((2, 3), float(t))) for t in range(3)]
    seq = MotionSequence(sk, poses, 10.0)
    assert len(seq) == 3
    assert_allclose(seq.frames[2], np.full((2, 3), 2.0))


def test_horizon_spec():
    hz = HorizonSpec(5, 20)
    assert hz.total == 25
    with pytest.raises(ValueError):
        HorizonSpec(1, 5)
    with pytest.raises(ValueError):
        HorizonSpec(5, 0)


def test_build_adjacency_matches_edge_list():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n = int(rng.integers(2, 12))
        sk = chain_skeleton(n)
        adj = build_adjacency(sk)
        expected = np.eye(n)
        for i, j in sk.edges:
            expected[i, j] = expected[j, i] = 1.0
        assert_allclose(adj, expected)


def test_build_adjacency_default_skeleton():
    adj = build_adjacency(default_skeleton())
    assert adj.shape == (17, 17)
    assert_allclose(adj, adj.T)
    assert np.all(np.diag(adj) == 1.0)
    # self-loops plus both directions of every bone
    assert adj.sum() == 17 + 2 * 16


def test_split_sequence():
    rng = np.random.default_rng(2)
    sk = chain_skeleton(3)
    seq = random_sequence(sk, 10, rng)
    hz = HorizonSpec(4, 6)
    s_in, s_out = split_sequence(seq, hz)
    assert_allclose(s_in.frames, seq.frames[:4])
    assert_allclose(s_out.frames, seq.frames[4:10])
    with pytest.raises(SequenceTooShortError):
        split_sequence(random_sequence(sk, 9, rng), hz)


def test_sliding_windows_counts_and_content():
    rng = np.random.default_rng(3)
    sk = chain_skeleton(3)
    seq = random_sequence(sk, 30, rng)
    hz = HorizonSpec(4, 6)
    wins = sliding_windows(seq, hz, stride=3)
    assert len(wins) == 7
    for k, (s_in, s_out) in enumerate(wins):
        start = 3 * k
        assert_allclose(s_in.frames, seq.frames[start : start + 4])
        assert_allclose(s_out.frames, seq.frames[start + 4 : start + 10])
    assert sliding_windows(random_sequence(sk, 9, rng), hz) == []
    with pytest.raises(ValueError):
        sliding_windows(seq, hz, stride=0)
