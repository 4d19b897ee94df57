"""Small builders shared across test modules."""

import numpy as np

from motionforecast import ModelConfig, MotionSequence, Skeleton


def chain_skeleton(n):
    """Path-graph skeleton with n joints rooted at joint 0."""
    return Skeleton(
        num_joints=n,
        joint_names=tuple(f"j{i}" for i in range(n)),
        edges=tuple((i, i + 1) for i in range(n - 1)),
        root_index=0,
    )


def random_sequence(skeleton, t, rng, scale=1.0, fps=10.0):
    frames = rng.uniform(-scale, scale, size=(t, skeleton.num_joints, 3))
    return MotionSequence(skeleton, frames, fps)


def walking_sequence(skeleton, t, rng, fps=10.0):
    """Random poses drifting along a random planar heading.

    Unlike pure uniform noise this has a clear root displacement, so the
    heading estimate of the canonical transform is well defined.
    """
    n = skeleton.num_joints
    heading = rng.uniform(-np.pi, np.pi)
    step = rng.uniform(0.05, 0.2)
    root = np.zeros((t, 3))
    root[:, 0] = np.arange(t) * step * np.cos(heading)
    root[:, 1] = np.arange(t) * step * np.sin(heading)
    root += rng.uniform(-5.0, 5.0, size=3)
    offsets = rng.uniform(-0.5, 0.5, size=(t, n, 3))
    offsets[:, skeleton.root_index] = 0.0
    return MotionSequence(skeleton, root[:, None, :] + offsets, fps)


def tiny_config(**overrides):
    base = dict(
        num_joints=17,
        input_len=5,
        output_len=4,
        j_dim=8,
        num_layers=1,
        num_heads=2,
        ffn_dim=64,
        dropout=0.0,
    )
    base.update(overrides)
    return ModelConfig(**base)
