"""Sequence file I/O, synthetic walking data, and rigid perturbations.

The on-disk format is plain text: ``key=value`` header lines (format version,
units, fps, skeleton), a ``---`` separator, then one whitespace-separated row
of 3N coordinates per frame. Coordinates are written with ``repr`` so a
read-back is bitwise identical.

The synthetic generator produces a forward-kinematic walking figure on a
parametric path. It is a test and desk-training fixture, not a claim about
human motion; bone lengths are constant by construction and everything is
deterministic for a fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .skeleton import MotionSequence, Skeleton
from .transform import rotation_z

SEQUENCE_SUFFIX = ".seq"

MODES = ("straight", "wavy", "deviating", "run")

SPEED_RANGE = (0.6, 1.6)


class SequenceFileError(ValueError):
    """Base error for unreadable sequence files."""


class MalformedHeaderError(SequenceFileError):
    """Header is missing, inconsistent, or has invalid values."""


class RowLengthError(SequenceFileError):
    """A body row does not hold exactly 3N numbers."""


class NonFiniteValueError(SequenceFileError):
    """A coordinate parsed to NaN or infinity."""


_JOINT_NAMES = (
    "pelvis",
    "right_hip",
    "right_knee",
    "right_ankle",
    "left_hip",
    "left_knee",
    "left_ankle",
    "spine",
    "thorax",
    "neck",
    "head",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
)

_EDGES = (
    (0, 1),
    (1, 2),
    (2, 3),
    (0, 4),
    (4, 5),
    (5, 6),
    (0, 7),
    (7, 8),
    (8, 9),
    (9, 10),
    (8, 11),
    (11, 12),
    (12, 13),
    (8, 14),
    (14, 15),
    (15, 16),
)


def default_skeleton() -> Skeleton:
    """The package's documented 17-joint layout (pelvis-rooted kinematic tree)."""
    return Skeleton(
        num_joints=17,
        joint_names=_JOINT_NAMES,
        edges=_EDGES,
        root_index=0,
    )


def write_sequence(seq: MotionSequence, path) -> None:
    """Serialize to the text format; numbers keep full float64 precision."""
    sk = seq.skeleton
    lines = [
        "format_version=1",
        "units=m",
        f"fps={seq.fps!r}",
        f"root={sk.root_index}",
        "joints=" + ",".join(sk.joint_names),
        "edges=" + ",".join(f"{i}-{j}" for i, j in sk.edges),
        "---",
    ]
    for frame in seq.frames:
        lines.append(" ".join(repr(float(v)) for v in frame.reshape(-1)))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


_REQUIRED_KEYS = ("format_version", "units", "fps", "root", "joints", "edges")


def read_sequence(path) -> MotionSequence:
    """Parse a sequence file, validating header and every coordinate.

    Raises:
        MalformedHeaderError: missing separator, bad keys, wrong version or
            units, or an inconsistent skeleton description.
        RowLengthError: a frame row without exactly 3N values.
        NonFiniteValueError: NaN or infinite coordinates.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    header: dict[str, str] = {}
    body_start = None
    for lineno, line in enumerate(lines):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped == "---":
            body_start = lineno + 1
            break
        if "=" not in stripped:
            raise MalformedHeaderError(f"{path}:{lineno + 1}: expected key=value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in _REQUIRED_KEYS:
            raise MalformedHeaderError(f"{path}:{lineno + 1}: unknown header key {key!r}")
        if key in header:
            raise MalformedHeaderError(f"{path}:{lineno + 1}: duplicate header key {key!r}")
        header[key] = value.strip()
    if body_start is None:
        raise MalformedHeaderError(f"{path}: missing '---' separator")
    missing = [k for k in _REQUIRED_KEYS if k not in header]
    if missing:
        raise MalformedHeaderError(f"{path}: missing header keys {missing}")
    if header["format_version"] != "1":
        raise MalformedHeaderError(
            f"{path}: unsupported format_version {header['format_version']!r}"
        )
    if header["units"] != "m":
        raise MalformedHeaderError(f"{path}: units must be 'm', got {header['units']!r}")
    try:
        fps = float(header["fps"])
        root = int(header["root"])
        names = tuple(header["joints"].split(","))
        edges = tuple(
            (int(a), int(b))
            for a, b in (pair.split("-", 1) for pair in header["edges"].split(","))
        )
    except ValueError as exc:
        raise MalformedHeaderError(f"{path}: {exc}") from exc
    if any(not n for n in names):
        raise MalformedHeaderError(f"{path}: empty joint name in header")
    try:
        skeleton = Skeleton(
            num_joints=len(names), joint_names=names, edges=edges, root_index=root
        )
    except ValueError as exc:
        raise MalformedHeaderError(f"{path}: invalid skeleton: {exc}") from exc
    width = 3 * skeleton.num_joints
    rows = []
    for lineno in range(body_start, len(lines)):
        stripped = lines[lineno].strip()
        if not stripped:
            continue
        parts = stripped.split()
        if len(parts) != width:
            raise RowLengthError(
                f"{path}:{lineno + 1}: expected {width} values, got {len(parts)}"
            )
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise SequenceFileError(f"{path}:{lineno + 1}: {exc}") from exc
    if not rows:
        raise SequenceFileError(f"{path}: no frames after header")
    frames = np.asarray(rows, dtype=np.float64).reshape(len(rows), skeleton.num_joints, 3)
    if not np.isfinite(frames).all():
        bad = int(np.argwhere(~np.isfinite(frames))[0][0])
        raise NonFiniteValueError(f"{path}: non-finite coordinate in frame {bad}")
    try:
        return MotionSequence(skeleton, frames, fps)
    except ValueError as exc:
        raise MalformedHeaderError(f"{path}: {exc}") from exc


def load_directory(data_dir) -> list[MotionSequence]:
    """Read every ``*.seq`` file under ``data_dir``, sorted by name."""
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        return []
    return [read_sequence(p) for p in sorted(data_dir.glob(f"*{SEQUENCE_SUFFIX}"))]


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of one generated walking sequence.

    Speeds outside the 0.6 to 1.6 m/s envelope are rejected; that is the range
    the synthetic set is meant to cover, and the presets' horizons assume it.
    The path-shape fields (``amp``, ``wavelength`` for wavy, ``turn_rate`` for
    deviating) are drawn from the seed when left unset.
    """

    mode: str
    speed: float
    duration: float
    fps: float
    seed: int
    actor_height: float = 1.75
    amp: float | None = None
    wavelength: float | None = None
    turn_rate: float | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not SPEED_RANGE[0] <= self.speed <= SPEED_RANGE[1]:
            raise ValueError(
                f"speed must be within {SPEED_RANGE} m/s, got {self.speed}"
            )
        if self.duration <= 0:
            raise ValueError(f"duration must be positive, got {self.duration}")
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        if self.actor_height <= 0:
            raise ValueError(f"actor_height must be positive, got {self.actor_height}")
        if self.amp is not None and not 0.0 < self.amp <= 1.0:
            raise ValueError(f"amp must be in (0, 1] meters, got {self.amp}")
        if self.wavelength is not None and self.wavelength <= 0.0:
            raise ValueError(f"wavelength must be positive, got {self.wavelength}")
        if self.turn_rate is not None and not 0.0 < abs(self.turn_rate) <= 1.0:
            raise ValueError(
                f"turn_rate magnitude must be in (0, 1] rad/s, got {self.turn_rate}"
            )


def _sagittal(angle: float | np.ndarray) -> np.ndarray:
    """Unit vector in the body's forward/up plane, measured from straight down."""
    return np.stack(
        [np.sin(angle), np.zeros_like(angle), -np.cos(angle)], axis=-1
    )


def generate_synthetic(spec: SyntheticSpec, skeleton: Skeleton | None = None) -> MotionSequence:
    """Walking figure on a parametric ground path, in world coordinates.

    The root follows the mode's path at the requested speed; limbs swing with
    a gait phase locked to distance travelled, so bone lengths are constant
    to float rounding. Only the built-in 17-joint skeleton is supported.
    """
    if skeleton is None:
        skeleton = default_skeleton()
    if skeleton != default_skeleton():
        raise ValueError("the synthetic generator only supports the default 17-joint skeleton")
    rng = np.random.default_rng(spec.seed)
    num_frames = max(2, int(round(spec.duration * spec.fps)))
    dt = 1.0 / spec.fps
    t = np.arange(num_frames, dtype=np.float64) * dt
    s = spec.speed * t  # distance travelled along the path

    start = rng.uniform(-2.0, 2.0, size=2)
    heading0 = rng.uniform(-math.pi, math.pi)
    direction = np.array([math.cos(heading0), math.sin(heading0)])
    perp = np.array([-direction[1], direction[0]])

    if spec.mode in ("straight", "run"):
        xy = start + np.outer(s, direction)
        heading = np.full(num_frames, heading0)
    elif spec.mode == "wavy":
        amp = rng.uniform(0.2, 0.4) if spec.amp is None else spec.amp
        wavelength = rng.uniform(2.0, 4.0) if spec.wavelength is None else spec.wavelength
        k = 2.0 * math.pi / wavelength
        xy = start + np.outer(s, direction) + np.outer(amp * np.sin(k * s), perp)
        heading = heading0 + np.arctan(amp * k * np.cos(k * s))
    else:  # deviating
        omega = rng.choice([-1.0, 1.0]) * rng.uniform(0.1, 0.3)
        if spec.turn_rate is not None:
            omega = spec.turn_rate
        heading = heading0 + omega * t
        step = spec.speed * dt * np.stack([np.cos(heading), np.sin(heading)], axis=-1)
        xy = start + np.concatenate([np.zeros((1, 2)), np.cumsum(step[:-1], axis=0)])

    h = spec.actor_height
    stride = 0.9 if spec.mode == "run" else 0.6
    phase = 2.0 * math.pi * s / stride
    swing = 0.25 + 0.25 * (spec.speed - SPEED_RANGE[0]) / (SPEED_RANGE[1] - SPEED_RANGE[0])
    lean = 0.10 if spec.mode == "run" else 0.02

    hip_half = 0.06 * h
    thigh = 0.245 * h
    shin = 0.246 * h
    pelvis_z = thigh + shin + 0.04 * h
    spine_len = 0.10 * h
    chest_len = 0.10 * h
    neck_len = 0.09 * h
    head_len = 0.07 * h
    shoulder_half = 0.10 * h
    upper_arm = 0.15 * h
    forearm = 0.14 * h

    bob = 0.02 * (0.5 + 0.5 * spec.speed / SPEED_RANGE[1])
    root_z = pelvis_z - bob * (1.0 - np.cos(2.0 * phase)) / 2.0

    # Joint positions relative to the pelvis, in the body frame
    # (x forward, y left, z up); angles are sagittal-plane swings.
    body = np.zeros((num_frames, 17, 3))
    up = np.array([math.sin(lean), 0.0, math.cos(lean)])

    hip_r = swing * np.sin(phase)
    hip_l = swing * np.sin(phase + math.pi)
    knee_r = 0.5 * swing * (1.0 - np.cos(phase)) / 2.0 + 0.05
    knee_l = 0.5 * swing * (1.0 - np.cos(phase + math.pi)) / 2.0 + 0.05
    arm_r = 0.5 * swing * np.sin(phase + math.pi)
    arm_l = 0.5 * swing * np.sin(phase)
    elbow = 0.3

    right = np.array([0.0, -1.0, 0.0])
    left = np.array([0.0, 1.0, 0.0])

    body[:, 1] = hip_half * right
    body[:, 2] = body[:, 1] + thigh * _sagittal(hip_r)
    body[:, 3] = body[:, 2] + shin * _sagittal(hip_r - knee_r)
    body[:, 4] = hip_half * left
    body[:, 5] = body[:, 4] + thigh * _sagittal(hip_l)
    body[:, 6] = body[:, 5] + shin * _sagittal(hip_l - knee_l)
    body[:, 7] = spine_len * up
    body[:, 8] = body[:, 7] + chest_len * up
    body[:, 9] = body[:, 8] + neck_len * up
    body[:, 10] = body[:, 9] + head_len * up
    body[:, 11] = body[:, 8] + shoulder_half * left
    body[:, 12] = body[:, 11] + upper_arm * _sagittal(arm_l)
    body[:, 13] = body[:, 12] + forearm * _sagittal(arm_l + elbow)
    body[:, 14] = body[:, 8] + shoulder_half * right
    body[:, 15] = body[:, 14] + upper_arm * _sagittal(arm_r)
    body[:, 16] = body[:, 15] + forearm * _sagittal(arm_r + elbow)

    cos_h, sin_h = np.cos(heading), np.sin(heading)
    world = np.empty_like(body)
    world[..., 0] = cos_h[:, None] * body[..., 0] - sin_h[:, None] * body[..., 1]
    world[..., 1] = sin_h[:, None] * body[..., 0] + cos_h[:, None] * body[..., 1]
    world[..., 2] = body[..., 2]
    world[..., 0] += xy[:, None, 0]
    world[..., 1] += xy[:, None, 1]
    world[..., 2] += root_z[:, None]
    return MotionSequence(skeleton, world, spec.fps)


@dataclass(frozen=True)
class RigidMotion:
    """A planar translation plus a yaw rotation about the world z axis."""

    translation: tuple[float, float, float]
    yaw: float

    def apply(self, frames: np.ndarray) -> np.ndarray:
        rot = rotation_z(self.yaw)
        return frames @ rot.T + np.asarray(self.translation, dtype=np.float64)


def apply_rigid(seq: MotionSequence, motion: RigidMotion) -> MotionSequence:
    """Rotate every frame by the yaw, then translate."""
    return seq.with_frames(motion.apply(seq.frames))


def random_rigid(
    seed: int, translation_range: float = 10.0, yaw_range: float = math.pi
) -> RigidMotion:
    """Draw a planar rigid motion with both components uniform in their ranges."""
    if translation_range < 0 or yaw_range < 0:
        raise ValueError("ranges must be non-negative")
    rng = np.random.default_rng(seed)
    tx, ty = rng.uniform(-translation_range, translation_range, size=2)
    yaw = rng.uniform(-yaw_range, yaw_range)
    return RigidMotion(translation=(float(tx), float(ty), 0.0), yaw=float(yaw))


def apply_random_rigid(
    seq: MotionSequence,
    translation_range: float = 10.0,
    yaw_range: float = math.pi,
    seed: int = 0,
) -> tuple[MotionSequence, RigidMotion]:
    """Perturb a sequence with a seeded random rigid motion; returns both."""
    motion = random_rigid(seed, translation_range, yaw_range)
    return apply_rigid(seq, motion), motion


def convert_raw(
    in_path,
    skeleton: Skeleton,
    fps_in: float,
    fps_out: float | None = None,
    units: str = "m",
) -> MotionSequence:
    """Turn a raw coordinate dump into a validated sequence.

    Accepts ``.npy`` arrays of shape (T, N, 3) or whitespace text tables with
    3N columns. ``units='mm'`` rescales to meters. When ``fps_out`` is given
    it must divide ``fps_in`` evenly; frames are decimated by the ratio.
    """
    in_path = Path(in_path)
    if in_path.suffix == ".npy":
        arr = np.load(in_path, allow_pickle=False)
    else:
        arr = np.loadtxt(in_path, dtype=np.float64, ndmin=2)
    arr = np.asarray(arr, dtype=np.float64)
    n = skeleton.num_joints
    if arr.ndim == 2:
        if arr.shape[1] != 3 * n:
            raise ValueError(
                f"{in_path}: expected {3 * n} columns for {n} joints, got {arr.shape[1]}"
            )
        arr = arr.reshape(arr.shape[0], n, 3)
    if arr.ndim != 3 or arr.shape[1:] != (n, 3):
        raise ValueError(f"{in_path}: expected (T, {n}, 3) data, got shape {arr.shape}")
    if units == "mm":
        arr = arr * 0.001
    elif units != "m":
        raise ValueError(f"units must be 'm' or 'mm', got {units!r}")
    fps = float(fps_in)
    if fps <= 0:
        raise ValueError(f"fps_in must be positive, got {fps_in}")
    if fps_out is not None:
        ratio = fps / float(fps_out)
        if fps_out <= 0 or abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError(
                f"fps_out {fps_out} must evenly divide fps_in {fps_in}"
            )
        arr = arr[:: int(round(ratio))]
        fps = float(fps_out)
    return MotionSequence(skeleton, arr, fps)
