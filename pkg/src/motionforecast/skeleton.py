"""Core data model: skeletons, poses, and motion sequences.

Coordinates are metres in a z-up global frame. All types are immutable after
construction (coordinate arrays are locked) and safe to share across threads;
the operations below are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np


class SequenceTooShortError(ValueError):
    """A sequence has fewer frames than the requested operation needs."""


def _locked_copy(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=np.float64)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Skeleton:
    """Joint layout and bone connectivity shared by all frames of a sequence.

    Attributes:
        num_joints: number of joints N.
        joint_names: N names in the fixed joint order of the file format.
        edges: undirected bones (i, j) of the kinematic chain; the edge set
            must connect all N joints into a single body.
        root_index: index of the trajectory-defining joint (hip / pelvis).
    """

    num_joints: int
    joint_names: tuple[str, ...]
    edges: tuple[tuple[int, int], ...]
    root_index: int

    def __post_init__(self):
        n = self.num_joints
        if n < 1:
            raise ValueError(f"num_joints must be positive, got {n}")
        object.__setattr__(self, "joint_names", tuple(str(s) for s in self.joint_names))
        object.__setattr__(self, "edges", tuple((int(i), int(j)) for i, j in self.edges))
        if len(self.joint_names) != n:
            raise ValueError(f"expected {n} joint names, got {len(self.joint_names)}")
        if not 0 <= self.root_index < n:
            raise ValueError(f"root_index {self.root_index} out of range [0, {n})")
        seen = set()
        for i, j in self.edges:
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i}, {j}) has an endpoint out of range [0, {n})")
            if i == j:
                raise ValueError(f"self-edge ({i}, {i}) is not allowed")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate edge ({i}, {j})")
            seen.add(key)
        if not self._is_connected():
            raise ValueError("edge set does not connect all joints into one body")

    def _is_connected(self) -> bool:
        neighbours: list[list[int]] = [[] for _ in range(self.num_joints)]
        for i, j in self.edges:
            neighbours[i].append(j)
            neighbours[j].append(i)
        seen = {0}
        stack = [0]
        while stack:
            for j in neighbours[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == self.num_joints


@dataclass(frozen=True)
class Pose:
    """One frame of N joint positions, shape (N, 3), metres, global frame."""

    coords: np.ndarray

    def __post_init__(self):
        coords = _locked_copy(self.coords)
        if coords.ndim != 2 or coords.shape[1] != 3:
            raise ValueError(f"pose coords must have shape (N, 3), got {coords.shape}")
        if not np.isfinite(coords).all():
            raise ValueError("pose contains non-finite coordinates")
        object.__setattr__(self, "coords", coords)

    @property
    def num_joints(self) -> int:
        return self.coords.shape[0]


@dataclass(frozen=True)
class MotionSequence:
    """Ordered frames of per-joint 3D global coordinates at a fixed frame rate.

    ``frames`` is a read-only float64 array of shape (T, N, 3); an iterable of
    :class:`Pose` is also accepted and stacked.
    """

    skeleton: Skeleton
    frames: np.ndarray
    fps: float

    def __post_init__(self):
        frames = self.frames
        if not isinstance(frames, np.ndarray):
            frames = np.stack([p.coords for p in frames]) if frames else np.empty((0, 0, 3))
        frames = _locked_copy(frames)
        if frames.ndim != 3 or frames.shape[2] != 3:
            raise ValueError(f"frames must have shape (T, N, 3), got {frames.shape}")
        if frames.shape[0] < 1:
            raise ValueError("a motion sequence needs at least one frame")
        if frames.shape[1] != self.skeleton.num_joints:
            raise ValueError(
                f"frames have {frames.shape[1]} joints, skeleton has {self.skeleton.num_joints}"
            )
        if not np.isfinite(frames).all():
            raise ValueError("frames contain non-finite coordinates")
        if not self.fps > 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "fps", float(self.fps))

    def __len__(self) -> int:
        return self.frames.shape[0]

    def pose(self, t: int) -> Pose:
        return Pose(self.frames[t])

    def root_path(self) -> np.ndarray:
        """Global positions of the root joint over time, shape (T, 3)."""
        return self.frames[:, self.skeleton.root_index]

    def with_frames(self, frames: np.ndarray) -> "MotionSequence":
        """New sequence sharing this skeleton and frame rate."""
        return MotionSequence(self.skeleton, frames, self.fps)


@dataclass(frozen=True)
class HorizonSpec:
    """Prediction horizon: observe ``input_len`` frames, forecast ``output_len``."""

    input_len: int
    output_len: int

    def __post_init__(self):
        if self.input_len < 2:
            raise ValueError("input_len must be >= 2 (heading needs two root positions)")
        if self.output_len < 1:
            raise ValueError("output_len must be >= 1")

    @property
    def total(self) -> int:
        return self.input_len + self.output_len


def build_adjacency(skeleton: Skeleton) -> np.ndarray:
    """Binary joint adjacency from the kinematic chain, with self-loops.

    Returns a symmetric (N, N) float64 matrix with A[i][j] = 1 iff (i, j) is a
    bone in either order, plus 1s on the diagonal so each joint attends to
    itself in graph attention.
    """
    n = skeleton.num_joints
    adj = np.eye(n, dtype=np.float64)
    for i, j in skeleton.edges:
        adj[i, j] = 1.0
        adj[j, i] = 1.0
    return adj


def split_sequence(
    seq: MotionSequence, horizon: HorizonSpec
) -> tuple[MotionSequence, MotionSequence]:
    """Split the leading frames into an observed and a future segment.

    Raises:
        SequenceTooShortError: if the sequence has fewer than
            ``horizon.input_len + horizon.output_len`` frames.
    """
    if len(seq) < horizon.total:
        raise SequenceTooShortError(
            f"sequence has {len(seq)} frames, horizon needs {horizon.total}"
        )
    s_in = seq.with_frames(seq.frames[: horizon.input_len])
    s_out = seq.with_frames(seq.frames[horizon.input_len : horizon.total])
    return s_in, s_out


def sliding_windows(
    seq: MotionSequence, horizon: HorizonSpec, stride: int = 1
) -> list[tuple[MotionSequence, MotionSequence]]:
    """All (observed, future) windows starting at 0, stride, 2*stride, ...

    Returns an empty list when the sequence is shorter than one window.
    """
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    windows = []
    for start in range(0, len(seq) - horizon.total + 1, stride):
        sub = seq.with_frames(seq.frames[start : start + horizon.total])
        windows.append(split_sequence(sub, horizon))
    return windows
