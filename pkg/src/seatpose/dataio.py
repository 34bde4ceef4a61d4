"""Recording formats, stream synchronisation, resampling and CV splits.

On-disk layout of a recording directory::

    meta.json      subject/chair/activity, mass, height, rate, frame count
    pressure.bin   float32 (N, 80, 28) mmHg
    pose.bin       float32 (N, 69): 22x3 axis-angle then 3 root translation

Every ``.bin`` file starts with an 8-byte magic, a uint32 version, a uint32
ndim and ndim uint32 dimensions, all little-endian, followed by the float32
payload in row-major order. See ``docs/formats.md``.
"""
from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import find_peaks

from .body import NUM_JOINTS, RATE_HZ, JOINT_INDEX, PoseSequence, canonicalize_rotvec, forward_kinematics, make_skeleton

log = logging.getLogger(__name__)

MAT_ROWS, MAT_COLS = 80, 28
PRESSURE_MAX = 5000.0
FORMAT_VERSION = 1
MAGIC_PRESSURE = b"SPPRESS\x00"
MAGIC_POSE = b"SPPOSE\x00\x00"
MAGIC_CHAIR = b"SPCHAIR\x00"
CHAIR_POINTS = 5000

ACTIVITIES = (
    "upright_sitting", "forward_leaning", "reclining", "slouching", "crossing_legs",
    "reaching_forward", "twisting_torso", "leg_on_chair", "lifting_body",
    "sliding_on_chair", "leaning_to_side", "sitting_back",
)
PROTOCOLS = ("LOUOCV", "LOCOCV", "LOCUOCV")


class RecordingFormatError(ValueError):
    """A recording file violates the on-disk schema."""

    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class HeaderError(RecordingFormatError):
    pass


class ShapeError(RecordingFormatError):
    pass


class RangeError(RecordingFormatError):
    pass


class SyncError(RuntimeError):
    """Fewer than three tap events were found in a stream."""

    def __init__(self, stream, count):
        super().__init__(f"{stream} stream: found {count} tap peaks, need 3")
        self.stream = stream
        self.count = count


class SplitError(ValueError):
    pass


# ---------------------------------------------------------------------------
# containers

@dataclass
class PressureSequence:
    frames: np.ndarray  # (N, 80, 28) mmHg
    rate_hz: float = RATE_HZ
    mat_geometry_id: str = ""

    def __post_init__(self):
        validate_pressure(self.frames)

    def __len__(self):
        return len(self.frames)


def validate_pressure(frames):
    frames = np.asarray(frames)
    if frames.ndim != 3:
        raise ShapeError("frames", f"expected (N, {MAT_ROWS}, {MAT_COLS}), got {frames.shape}")
    if frames.shape[1] != MAT_ROWS:
        raise ShapeError("rows", f"expected {MAT_ROWS} rows, got {frames.shape[1]}")
    if frames.shape[2] != MAT_COLS:
        raise ShapeError("columns", f"expected {MAT_COLS} columns, got {frames.shape[2]}")
    if frames.size and (np.nanmin(frames) < 0 or np.nanmax(frames) > PRESSURE_MAX or np.isnan(frames).any()):
        raise RangeError("pressure", f"cells must lie in [0, {PRESSURE_MAX:g}] mmHg")


@dataclass
class Recording:
    pressure: PressureSequence
    pose: PoseSequence
    chair_id: str
    subject_id: str
    activity_label: str
    synthetic: bool = False
    recording_id: str = ""

    def __post_init__(self):
        if len(self.pressure) != len(self.pose):
            raise ShapeError("frame_count", f"pressure has {len(self.pressure)} frames, pose {len(self.pose)}")
        if self.activity_label not in ACTIVITIES:
            raise RecordingFormatError("activity", f"unknown activity {self.activity_label!r}")
        if not self.recording_id:
            self.recording_id = f"{self.subject_id}-{self.chair_id}-{self.activity_label}"

    def __len__(self):
        return len(self.pose)

    @property
    def activity_index(self):
        return ACTIVITIES.index(self.activity_label)


# ---------------------------------------------------------------------------
# binary arrays

def write_array(path, magic, array):
    array = np.ascontiguousarray(array, dtype="<f4")
    header = magic + struct.pack("<II", FORMAT_VERSION, array.ndim) + struct.pack(f"<{array.ndim}I", *array.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(array.tobytes(order="C"))


def read_array(path, magic):
    raw = Path(path).read_bytes()
    name = Path(path).name
    if len(raw) < 16 or raw[:8] != magic:
        raise HeaderError("magic", f"{name} does not start with {magic!r}")
    version, ndim = struct.unpack_from("<II", raw, 8)
    if version != FORMAT_VERSION:
        raise HeaderError("version", f"{name} has unsupported version {version}")
    if ndim < 1 or ndim > 8 or len(raw) < 16 + 4 * ndim:
        raise HeaderError("ndim", f"{name} declares {ndim} dimensions")
    shape = struct.unpack_from(f"<{ndim}I", raw, 16)
    offset = 16 + 4 * ndim
    count = math.prod(shape)
    if len(raw) - offset != 4 * count:
        raise ShapeError("payload", f"{name} payload holds {(len(raw) - offset) // 4} values, header says {count}")
    return np.frombuffer(raw, dtype="<f4", offset=offset, count=count).reshape(shape).astype(np.float32)


def write_recording(recording, path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    pose = recording.pose
    packed = np.concatenate([np.asarray(pose.theta, np.float32).reshape(len(pose), -1),
                             np.asarray(pose.root_translation, np.float32)], axis=1)
    write_array(path / "pressure.bin", MAGIC_PRESSURE, recording.pressure.frames)
    write_array(path / "pose.bin", MAGIC_POSE, packed)
    meta = {
        "format_version": FORMAT_VERSION,
        "recording_id": recording.recording_id,
        "subject_id": recording.subject_id,
        "chair_id": recording.chair_id,
        "activity": recording.activity_label,
        "subject_mass_kg": float(pose.subject_mass),
        "subject_height_m": float(pose.subject_height),
        "rate_hz": float(pose.rate_hz),
        "frame_count": len(recording),
        "synthetic": bool(recording.synthetic),
        "mat_geometry_id": recording.pressure.mat_geometry_id,
    }
    (path / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


_META_FIELDS = ("subject_id", "chair_id", "activity", "subject_mass_kg", "subject_height_m",
                "rate_hz", "frame_count", "synthetic")


def read_recording(path):
    path = Path(path)
    try:
        meta = json.loads((path / "meta.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise HeaderError("meta", f"cannot read meta.json in {path}: {exc}") from exc
    for key in _META_FIELDS:
        if key not in meta:
            raise HeaderError(key, "missing from meta.json")
    pressure = read_array(path / "pressure.bin", MAGIC_PRESSURE)
    validate_pressure(pressure)
    pose = read_array(path / "pose.bin", MAGIC_POSE)
    if pose.ndim != 2 or pose.shape[1] != NUM_JOINTS * 3 + 3:
        raise ShapeError("pose_channels", f"expected {NUM_JOINTS * 3 + 3} channels, got {pose.shape}")
    n = meta["frame_count"]
    if len(pressure) != n or len(pose) != n:
        raise ShapeError("frame_count", f"meta says {n}, pressure {len(pressure)}, pose {len(pose)}")
    seq = PoseSequence(pose[:, :NUM_JOINTS * 3].reshape(n, NUM_JOINTS, 3), pose[:, NUM_JOINTS * 3:],
                       rate_hz=meta["rate_hz"], subject_mass=meta["subject_mass_kg"],
                       subject_height=meta["subject_height_m"])
    return Recording(
        PressureSequence(pressure, meta["rate_hz"], meta.get("mat_geometry_id", "")),
        seq, meta["chair_id"], meta["subject_id"], meta["activity"], bool(meta["synthetic"]),
        meta.get("recording_id", ""),
    )


def write_chair_cloud(points, path):
    points = np.asarray(points)
    if points.shape != (CHAIR_POINTS, 3):
        raise ShapeError("points", f"chair cloud must be {CHAIR_POINTS}x3, got {points.shape}")
    write_array(path, MAGIC_CHAIR, points)


def read_chair_cloud(path):
    pts = read_array(path, MAGIC_CHAIR)
    if pts.shape != (CHAIR_POINTS, 3):
        raise ShapeError("points", f"chair cloud must be {CHAIR_POINTS}x3, got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise RangeError("points", "non-finite coordinates")
    return pts


def load_corpus(root):
    """Read every recording directory below ``root`` in sorted order."""
    dirs = sorted(p.parent for p in Path(root).rglob("meta.json"))
    return [read_recording(d) for d in dirs]


# ---------------------------------------------------------------------------
# resampling and synchronisation

def resample_pose(theta, root, rate_in, times):
    """Linear interpolation of axis-angle and root channels at ``times`` (s)."""
    src_t = np.arange(len(theta)) / rate_in
    flat = np.asarray(theta, float).reshape(len(theta), -1)
    th = np.stack([np.interp(times, src_t, flat[:, c]) for c in range(flat.shape[1])], axis=1)
    rt = np.stack([np.interp(times, src_t, np.asarray(root, float)[:, c]) for c in range(3)], axis=1)
    return canonicalize_rotvec(th.reshape(len(times), -1, 3)), rt


def resample_pressure(frames, rate_in, times):
    """Nearest-frame sampling of a raster stream at ``times`` (s)."""
    idx = np.clip(np.rint(np.asarray(times) * rate_in).astype(int), 0, len(frames) - 1)
    return np.asarray(frames)[idx]


def _robust_z(signal):
    signal = np.asarray(signal, float)
    med = np.median(signal)
    mad = np.median(np.abs(signal - med)) * 1.4826
    if mad <= 1e-12:
        mad = signal.std() or 1.0
    return (signal - med) / mad


def detect_taps(signal, rate, threshold=4.0, min_separation=0.3):
    """Frame indices of tap peaks: local maxima above ``threshold`` robust sigma."""
    z = _robust_z(signal)
    distance = max(1, int(math.ceil(min_separation * rate)))
    peaks, _ = find_peaks(z, height=threshold, distance=distance)
    return peaks


def hand_contact_signal(pose, skeleton=None):
    """Height of the lower wrist, negated, so hand taps on the seat are peaks."""
    skeleton = skeleton or make_skeleton(pose.subject_height)
    pos = forward_kinematics(pose, skeleton)
    wrists = pos[:, [JOINT_INDEX["left_wrist"], JOINT_INDEX["right_wrist"]], 2]
    return -wrists.min(axis=1)


def tap_synchronize(pressure_frames, pressure_rate, pose, *, chair_id, subject_id, activity_label,
                    synthetic=False, guard=0.5, rate_out=RATE_HZ):
    """Align a raw pressure stream with a raw pose stream using seat taps.

    The offset is ``t_pressure - t_pose`` of the third start tap, in seconds.
    Both streams are cut to the region between the third start tap (plus
    ``guard`` seconds) and the first end tap, if three end taps exist, and
    resampled to ``rate_out`` on the pose clock.
    """
    pressure_frames = np.asarray(pressure_frames, dtype=float)
    p_peaks = detect_taps(pressure_frames.reshape(len(pressure_frames), -1).sum(1), pressure_rate)
    if len(p_peaks) < 3:
        raise SyncError("pressure", len(p_peaks))
    q_peaks = detect_taps(hand_contact_signal(pose), pose.rate_hz)
    if len(q_peaks) < 3:
        raise SyncError("pose", len(q_peaks))
    t_p = p_peaks / pressure_rate
    t_q = q_peaks / pose.rate_hz
    offset = float(t_p[2] - t_q[2])

    start = t_q[2] + guard
    end_pose = (len(pose) - 1) / pose.rate_hz
    end_pressure = (len(pressure_frames) - 1) / pressure_rate - offset
    end = min(end_pose, end_pressure)
    if len(q_peaks) >= 6:
        end = min(end, t_q[-3] - guard)
    if len(p_peaks) >= 6:
        end = min(end, t_p[-3] - offset - guard)
    times = start + np.arange(int(math.floor((end - start) * rate_out)) + 1) / rate_out
    theta, root = resample_pose(pose.theta, pose.root_translation, pose.rate_hz, times)
    frames = resample_pressure(pressure_frames, pressure_rate, times + offset)
    seq = PoseSequence(theta, root, rate_out, pose.subject_mass, pose.subject_height)
    rec = Recording(PressureSequence(np.clip(frames, 0, PRESSURE_MAX), rate_out), seq,
                    chair_id, subject_id, activity_label, synthetic)
    return offset, rec


# ---------------------------------------------------------------------------
# cross-validation

@dataclass
class Fold:
    held_out: tuple
    train: list
    test: list


@dataclass
class SplitPlan:
    protocol: str
    folds: list = field(default_factory=list)

    def to_dict(self):
        return {
            "protocol": self.protocol,
            "folds": [{"held_out": list(f.held_out), "train": f.train, "test": f.test} for f in self.folds],
        }


def make_splits(recordings, protocol, evaluate_synthetic=False):
    """Leave-one-user/chair/(user+chair)-out folds over recording ids.

    Synthetic recordings are never tested; they join every training set
    unless they share the held-out subject or chair. With
    ``evaluate_synthetic`` they are treated like measured recordings, which
    is the only option when a corpus is entirely simulated.
    """
    if protocol not in PROTOCOLS:
        raise SplitError(f"unknown protocol {protocol!r}")
    real = [r for r in recordings if evaluate_synthetic or not r.synthetic]
    subjects = sorted({r.subject_id for r in real})
    chairs = sorted({r.chair_id for r in real})
    if protocol in ("LOUOCV", "LOCUOCV") and len(subjects) < 2:
        raise SplitError(f"{protocol} needs at least 2 subjects, found {len(subjects)}")
    if protocol in ("LOCOCV", "LOCUOCV") and len(chairs) < 2:
        raise SplitError(f"{protocol} needs at least 2 chairs, found {len(chairs)}")

    if protocol == "LOUOCV":
        keys = [(s,) for s in subjects]
    elif protocol == "LOCOCV":
        keys = [(c,) for c in chairs]
    else:
        present = {(r.subject_id, r.chair_id) for r in real}
        keys = sorted(present)

    plan = SplitPlan(protocol)
    for key in keys:
        if protocol == "LOUOCV":
            touches = lambda r, k=key: r.subject_id == k[0]
            is_test = touches
        elif protocol == "LOCOCV":
            touches = lambda r, k=key: r.chair_id == k[0]
            is_test = touches
        else:
            touches = lambda r, k=key: r.subject_id == k[0] or r.chair_id == k[1]
            is_test = lambda r, k=key: r.subject_id == k[0] and r.chair_id == k[1]
        train = [r.recording_id for r in recordings if not touches(r)]
        test = [r.recording_id for r in real if is_test(r)]
        plan.folds.append(Fold(key, train, test))
    return plan
