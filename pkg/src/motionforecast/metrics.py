"""Displacement-error metrics and inference-latency benchmarking.

Trajectory errors (ade_traj / fde_traj) measure the root joint in global
coordinates. Pose errors (ade_pose / fde_pose) first subtract each frame's
root from every joint of both sequences, which removes global translation,
then average the per-joint Euclidean distances over the remaining N-1 joints.
All distances are Euclidean, in meters.
"""

from __future__ import annotations

import dataclasses
import statistics
import time
from dataclasses import dataclass

import numpy as np

from .skeleton import MotionSequence


def _frames(x) -> np.ndarray:
    if isinstance(x, MotionSequence):
        return x.frames
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[-1] != 3:
        raise ValueError(f"expected (T, N, 3) coordinates, got shape {arr.shape}")
    return arr


def _check_pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    p, g = _frames(pred), _frames(gt)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: pred {p.shape} vs gt {g.shape}")
    if p.shape[0] < 1:
        raise ValueError("need at least one frame")
    return p, g


def ade_traj(pred, gt, root_index: int = 0) -> float:
    """Mean over frames of the root joint's Euclidean prediction error."""
    p, g = _check_pair(pred, gt)
    dist = np.linalg.norm(p[:, root_index] - g[:, root_index], axis=-1)
    return float(dist.mean())


def fde_traj(pred, gt, root_index: int = 0) -> float:
    """Root joint's Euclidean error at the final frame only."""
    p, g = _check_pair(pred, gt)
    return float(np.linalg.norm(p[-1, root_index] - g[-1, root_index]))


def _root_relative(frames: np.ndarray, root_index: int) -> np.ndarray:
    rel = frames - frames[:, root_index : root_index + 1]
    return np.delete(rel, root_index, axis=1)


def ade_pose(pred, gt, root_index: int = 0) -> float:
    """Mean per-joint error of the root-relative pose over frames and joints."""
    p, g = _check_pair(pred, gt)
    if p.shape[1] < 2:
        raise ValueError("pose error needs at least two joints")
    dist = np.linalg.norm(_root_relative(p, root_index) - _root_relative(g, root_index), axis=-1)
    return float(dist.mean())


def fde_pose(pred, gt, root_index: int = 0) -> float:
    """Root-relative pose error restricted to the final frame."""
    p, g = _check_pair(pred, gt)
    if p.shape[1] < 2:
        raise ValueError("pose error needs at least two joints")
    dist = np.linalg.norm(
        _root_relative(p[-1:], root_index) - _root_relative(g[-1:], root_index), axis=-1
    )
    return float(dist.mean())


@dataclass(frozen=True)
class EvalReport:
    """Aggregate errors over a window set, plus optional latency."""

    ade_pose: float
    fde_pose: float
    ade_traj: float
    fde_traj: float
    num_windows: int
    runtime_ms: float | None = None

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def table(self) -> str:
        header = f"{'ADE_Po':>8} {'FDE_Po':>8} {'ADE_Tr':>8} {'FDE_Tr':>8} {'windows':>8}"
        row = (
            f"{self.ade_pose:8.4f} {self.fde_pose:8.4f} "
            f"{self.ade_traj:8.4f} {self.fde_traj:8.4f} {self.num_windows:8d}"
        )
        if self.runtime_ms is not None:
            header += f" {'R(ms)':>8}"
            row += f" {self.runtime_ms:8.2f}"
        return header + "\n" + row


def evaluate_windows(predictor, windows, runtime_ms: float | None = None) -> EvalReport:
    """Average the four displacement errors over (observed, future) windows.

    ``predictor`` is anything with ``predict(MotionSequence) -> MotionSequence``;
    each window is weighted equally.
    """
    if not windows:
        raise ValueError("no evaluation windows given")
    sums = np.zeros(4)
    for s_in, s_out in windows:
        root = s_in.skeleton.root_index
        pred = predictor.predict(s_in)
        sums += (
            ade_pose(pred, s_out, root),
            fde_pose(pred, s_out, root),
            ade_traj(pred, s_out, root),
            fde_traj(pred, s_out, root),
        )
    mean = sums / len(windows)
    return EvalReport(
        ade_pose=float(mean[0]),
        fde_pose=float(mean[1]),
        ade_traj=float(mean[2]),
        fde_traj=float(mean[3]),
        num_windows=len(windows),
        runtime_ms=runtime_ms,
    )


@dataclass(frozen=True)
class BenchResult:
    median_ms: float
    p95_ms: float
    repeats: int
    samples_ms: tuple[float, ...]

    def as_dict(self) -> dict:
        return {
            "median_ms": self.median_ms,
            "p95_ms": self.p95_ms,
            "repeats": self.repeats,
            "samples_ms": list(self.samples_ms),
        }


def bench_forward(predictor, s_in: MotionSequence, repeats: int = 50, warmup: int = 3) -> BenchResult:
    """Time single-sequence predictions, excluding at least 3 warmup passes.

    Returns the median and the 95th percentile (nearest-rank) over the timed
    repeats; the median of one sample is that sample.
    """
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    warmup = max(3, warmup)
    for _ in range(warmup):
        predictor.predict(s_in)
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        predictor.predict(s_in)
        samples.append((time.perf_counter() - start) * 1000.0)
    ordered = sorted(samples)
    rank = max(1, int(np.ceil(0.95 * repeats)))
    return BenchResult(
        median_ms=float(statistics.median(samples)),
        p95_ms=float(ordered[rank - 1]),
        repeats=repeats,
        samples_ms=tuple(samples),
    )


@dataclass(frozen=True)
class ZeroVelocityPredictor:
    """Baseline that repeats the last observed pose for the whole horizon."""

    output_len: int

    def __post_init__(self):
        if self.output_len < 1:
            raise ValueError(f"output_len must be >= 1, got {self.output_len}")

    def predict(self, s_in: MotionSequence) -> MotionSequence:
        last = s_in.frames[-1]
        frames = np.repeat(last[None, :, :], self.output_len, axis=0)
        return MotionSequence(s_in.skeleton, frames, s_in.fps)
