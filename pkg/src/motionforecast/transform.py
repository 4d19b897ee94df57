"""Canonical motion frame for translation- and heading-invariant learning.

A sequence is canonicalized by translating it so the root joint of the last
observed frame sits at the origin, then rotating about the z-axis so the
observed motion direction points along +x. The same parameters map model
output back to the original global frame, so a forecaster trained entirely in
the canonical frame predicts global pose and trajectory at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .skeleton import MotionSequence, SequenceTooShortError

# Planar root displacement below this magnitude (metres) has no usable
# heading; the yaw falls back to 0 instead of trusting atan2 on noise.
DIRECTION_EPS = 1e-6


@dataclass(frozen=True)
class TransformParams:
    """Rigid parameters that canonicalize one sequence.

    Attributes:
        translation: 3-vector added to every joint; the negated root position
            at the last observed frame, so the translated root lands at 0.
        yaw: observed heading angle in radians, in (-pi, pi]; the sequence is
            rotated by -yaw about z to align the heading with +x.
        direction_interval: frame gap used to measure the heading (the root
            displacement from frame T-1-interval to frame T-1).
    """

    translation: np.ndarray
    yaw: float
    direction_interval: int

    def __post_init__(self):
        translation = np.array(self.translation, dtype=np.float64)
        if translation.shape != (3,):
            raise ValueError(f"translation must be a 3-vector, got shape {translation.shape}")
        translation.flags.writeable = False
        object.__setattr__(self, "translation", translation)
        object.__setattr__(self, "yaw", float(self.yaw))
        if not -math.pi < self.yaw <= math.pi:
            raise ValueError(f"yaw must lie in (-pi, pi], got {self.yaw}")
        if self.direction_interval < 1:
            raise ValueError("direction_interval must be >= 1")


def rotation_z(angle: float) -> np.ndarray:
    """3x3 rotation matrix about the z-axis (counter-clockwise, z-up)."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def compute_params(
    s_in: MotionSequence,
    root_index: int | None = None,
    direction_interval: int = 1,
) -> TransformParams:
    """Canonicalization parameters from an observed segment.

    The translation is the negated root position of the last frame. The yaw is
    atan2 of the planar root displacement over the trailing
    ``direction_interval`` frames, or 0 when that displacement vanishes (a
    stationary person has no heading).

    Raises:
        SequenceTooShortError: fewer than ``direction_interval + 1`` frames.
    """
    if direction_interval < 1:
        raise ValueError("direction_interval must be >= 1")
    if len(s_in) < direction_interval + 1:
        raise SequenceTooShortError(
            f"need at least {direction_interval + 1} frames to estimate heading, "
            f"got {len(s_in)}"
        )
    root = s_in.skeleton.root_index if root_index is None else root_index
    last = s_in.frames[-1, root]
    prev = s_in.frames[-1 - direction_interval, root]
    dx = last[0] - prev[0]
    dy = last[1] - prev[1]
    if abs(dx) < DIRECTION_EPS and abs(dy) < DIRECTION_EPS:
        yaw = 0.0
    else:
        yaw = math.atan2(dy, dx)
        if yaw <= -math.pi:
            yaw = math.pi
    return TransformParams(-last, yaw, direction_interval)


def canonicalize(seq: MotionSequence, params: TransformParams) -> MotionSequence:
    """Translate by ``params.translation`` then rotate by -yaw about z.

    With params computed from the sequence's own observed segment, the root of
    the last observed frame maps to the origin and the observed heading to +x.
    """
    rot = rotation_z(params.yaw)
    # Row vectors: p'' = R_z(-yaw) p'  <=>  p''_row = p'_row @ R_z(yaw)
    frames = (seq.frames + params.translation) @ rot
    return seq.with_frames(frames)


def decanonicalize(seq: MotionSequence, params: TransformParams) -> MotionSequence:
    """Exact inverse of :func:`canonicalize`: rotate by +yaw, untranslate."""
    rot = rotation_z(params.yaw)
    frames = seq.frames @ rot.T - params.translation
    return seq.with_frames(frames)
