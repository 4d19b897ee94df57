import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from motionforecast import (
    DIRECTION_EPS,
    MotionSequence,
    SequenceTooShortError,
    TransformParams,
    canonicalize,
    compute_params,
    decanonicalize,
    rotation_z,
)

from helpers import chain_skeleton, random_sequence, walking_sequence


def test_rotation_z_known_angles():
    assert_allclose(rotation_z(0.0), np.eye(3))
    quarter = rotation_z(math.pi / 2)
    assert_allclose(quarter @ np.array([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], atol=1e-15)
    assert_allclose(quarter @ np.array([0.0, 0.0, 1.0]), [0.0, 0.0, 1.0], atol=1e-15)
    assert_allclose(rotation_z(0.3) @ rotation_z(-0.3), np.eye(3), atol=1e-15)
    assert_allclose(rotation_z(0.7) @ rotation_z(0.7).T, np.eye(3), atol=1e-15)


def test_compute_params_translation_and_yaw():
    sk = chain_skeleton(2)
    frames = np.zeros((3, 2, 3))
    frames[:, 0, 1] = [0.0, 1.0, 2.0]  # root walks along +y
    frames[:, 0, 2] = 0.9
    frames[:, 1, 0] = 0.5
    seq = MotionSequence(sk, frames, 10.0)
    p = compute_params(seq)
    assert_allclose(p.translation, [0.0, -2.0, -0.9])
    assert p.yaw == pytest.approx(math.pi / 2)
    assert p.direction_interval == 1


def test_direction_interval_changes_heading():
    sk = chain_skeleton(2)
    frames = np.zeros((3, 2, 3))
    frames[0, 0, :2] = [0.0, 0.0]
    frames[1, 0, :2] = [1.0, 0.0]
    frames[2, 0, :2] = [1.0, 1.0]
    seq = MotionSequence(sk, frames, 10.0)
    assert compute_params(seq, direction_interval=1).yaw == pytest.approx(math.pi / 2)
    assert compute_params(seq, direction_interval=2).yaw == pytest.approx(math.pi / 4)


def test_stationary_root_has_zero_yaw():
    sk = chain_skeleton(2)
    frames = np.zeros((4, 2, 3))
    frames[:, 0, 2] = [0.9, 1.0, 0.95, 1.05]  # vertical motion is not heading
    seq = MotionSequence(sk, frames, 10.0)
    assert compute_params(seq).yaw == 0.0

    # planar displacement below the threshold in both axes also falls back
    frames2 = np.zeros((2, 2, 3))
    frames2[1, 0, :2] = [0.0, 0.5 * DIRECTION_EPS]
    assert compute_params(MotionSequence(sk, frames2, 10.0)).yaw == 0.0

    # ... but a displacement above it in either axis is a real heading
    frames3 = np.zeros((2, 2, 3))
    frames3[1, 0, :2] = [0.0, 2.0 * DIRECTION_EPS]
    assert compute_params(MotionSequence(sk, frames3, 10.0)).yaw == pytest.approx(math.pi / 2)


def test_yaw_stays_in_half_open_interval():
    sk = chain_skeleton(2)
    frames = np.zeros((2, 2, 3))
    frames[1, 0, 0] = -1.0  # straight backwards along -x
    p = compute_params(MotionSequence(sk, frames, 10.0))
    assert p.yaw == pytest.approx(math.pi)
    with pytest.raises(ValueError):
        TransformParams(np.zeros(3), -math.pi, 1)
    TransformParams(np.zeros(3), math.pi, 1)  # the boundary itself is allowed


def test_params_validation():
    with pytest.raises(ValueError):
        TransformParams(np.zeros(2), 0.0, 1)
    with pytest.raises(ValueError):
        TransformParams(np.zeros(3), 0.0, 0)
    sk = chain_skeleton(2)
    seq = MotionSequence(sk, np.zeros((2, 2, 3)), 10.0)
    with pytest.raises(ValueError):
        compute_params(seq, direction_interval=0)
    with pytest.raises(SequenceTooShortError):
        compute_params(seq, direction_interval=4)


def test_canonical_frame_properties():
    rng = np.random.default_rng(7)
    for _ in range(25):
        sk = chain_skeleton(int(rng.integers(2, 8)))
        seq = walking_sequence(sk, int(rng.integers(3, 12)), rng)
        delta = int(rng.integers(1, len(seq)))
        p = compute_params(seq, direction_interval=delta)
        canon = canonicalize(seq, p)
        # root of the last observed frame lands exactly at the origin
        assert_allclose(canon.frames[-1, sk.root_index], np.zeros(3), atol=1e-12)
        # the measured heading is mapped onto +x
        disp = canon.frames[-1, sk.root_index] - canon.frames[-1 - delta, sk.root_index]
        assert abs(disp[1]) < 1e-9
        assert disp[0] > 0.0


def test_round_trip_recovers_global_frames():
    rng = np.random.default_rng(11)
    for _ in range(50):
        sk = chain_skeleton(int(rng.integers(2, 10)))
        seq = random_sequence(sk, int(rng.integers(2, 20)), rng, scale=20.0)
        p = compute_params(seq)
        back = decanonicalize(canonicalize(seq, p), p)
        assert np.max(np.abs(back.frames - seq.frames)) < 1e-12


def test_canonical_form_ignores_rigid_placement():
    # the same motion observed anywhere, facing any way, canonicalizes identically
    rng = np.random.default_rng(13)
    sk = chain_skeleton(5)
    for _ in range(20):
        seq = walking_sequence(sk, 8, rng)
        canon = canonicalize(seq, compute_params(seq))
        shift = rng.uniform(-10.0, 10.0, size=3)
        angle = rng.uniform(-math.pi, math.pi)
        moved_frames = seq.frames @ rotation_z(angle).T + shift
        moved = seq.with_frames(moved_frames)
        canon_moved = canonicalize(moved, compute_params(moved))
        assert_allclose(canon_moved.frames, canon.frames, atol=1e-9)


def test_decanonicalize_is_exact_inverse_of_arbitrary_params():
    rng = np.random.default_rng(17)
    sk = chain_skeleton(3)
    for _ in range(20):
        seq = random_sequence(sk, 6, rng, scale=15.0)
        p = TransformParams(
            rng.uniform(-10.0, 10.0, size=3),
            rng.uniform(-math.pi * 0.999, math.pi),
            1,
        )
        back = decanonicalize(canonicalize(seq, p), p)
        assert np.max(np.abs(back.frames - seq.frames)) < 1e-12
