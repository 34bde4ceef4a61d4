"""Capsule-body skeleton, forward kinematics and motion descriptors.

World frame used throughout the package: x points forward (out of the chair
front), y points to the subject's left, z points up. Lengths are meters,
angles radians, time in frames at ``RATE_HZ``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

RATE_HZ = 15
NUM_JOINTS = 22
REFERENCE_HEIGHT = 1.75
GRAVITY = 9.81

JOINT_NAMES = (
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee",
    "spine2", "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot",
    "neck", "left_collar", "right_collar", "head", "left_shoulder",
    "right_shoulder", "left_elbow", "right_elbow", "left_wrist", "right_wrist",
)
JOINT_INDEX = {name: i for i, name in enumerate(JOINT_NAMES)}
PARENTS = (-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19)

# Left-side values only; right side is the y-mirror. Reference height 1.75 m.
_REST_OFFSET = {
    "pelvis": (0.0, 0.0, 0.0),
    "left_hip": (0.0, 0.09, -0.08),
    "spine1": (0.0, 0.0, 0.11),
    "left_knee": (0.0, 0.0, -0.40),
    "spine2": (0.0, 0.0, 0.13),
    "left_ankle": (0.0, 0.0, -0.40),
    "spine3": (0.0, 0.0, 0.05),
    "left_foot": (0.12, 0.0, -0.06),
    "neck": (0.0, 0.0, 0.21),
    "left_collar": (0.0, 0.07, 0.15),
    "head": (0.0, 0.0, 0.10),
    "left_shoulder": (0.0, 0.11, 0.02),
    "left_elbow": (0.0, 0.0, -0.28),
    "left_wrist": (0.0, 0.0, -0.25),
}
# capsule axis (local, from the joint) and radius of the segment owned by a joint
_SEGMENT = {
    "pelvis": ((-0.03, 0.0, -0.044), 0.11),
    "left_hip": ((0.0, 0.0, -0.40), 0.07),
    "spine1": ((0.0, 0.0, 0.13), 0.11),
    "left_knee": ((0.0, 0.0, -0.40), 0.05),
    "spine2": ((0.0, 0.0, 0.05), 0.12),
    "left_ankle": ((0.12, 0.0, -0.06), 0.04),
    "spine3": ((0.0, 0.0, 0.21), 0.12),
    "left_foot": ((0.06, 0.0, 0.0), 0.03),
    "neck": ((0.0, 0.0, 0.10), 0.05),
    "left_collar": ((0.0, 0.11, 0.02), 0.04),
    "head": ((0.0, 0.0, 0.15), 0.09),
    "left_shoulder": ((0.0, 0.0, -0.28), 0.045),
    "left_elbow": ((0.0, 0.0, -0.25), 0.04),
    "left_wrist": ((0.0, 0.0, -0.15), 0.035),
}
# Anthropometric mass split (Dempster-style, trunk spread over the spine chain).
_MASS = {
    "pelvis": 0.113, "spine1": 0.100, "spine2": 0.100, "spine3": 0.100,
    "neck": 0.012, "head": 0.069,
    "left_hip": 0.1416, "left_knee": 0.0433, "left_ankle": 0.0100, "left_foot": 0.0037,
    "left_collar": 0.0050, "left_shoulder": 0.0271, "left_elbow": 0.0162,
    "left_wrist": 0.0061,
}


def _side_lookup(table, name):
    if name in table:
        return table[name]
    if name.startswith("right_"):
        return table["left_" + name[len("right_"):]]
    raise KeyError(name)


def _mirror(v):
    v = np.asarray(v, dtype=float)
    return v * np.array([1.0, -1.0, 1.0])


class DimensionError(ValueError):
    """Array shapes do not match the skeleton."""


# ---------------------------------------------------------------------------
# rotations

def rotvec_to_matrix(rotvec):
    """Rodrigues formula, vectorised over leading dimensions."""
    rotvec = np.asarray(rotvec, dtype=float)
    angle = np.linalg.norm(rotvec, axis=-1)[..., None, None]
    small = angle < 1e-8
    safe = np.where(small, 1.0, angle)
    a = np.where(small, 1.0, np.sin(safe) / safe)
    b = np.where(small, 0.5, (1.0 - np.cos(safe)) / safe**2)
    x, y, z = rotvec[..., 0], rotvec[..., 1], rotvec[..., 2]
    zero = np.zeros_like(x)
    k = np.stack([
        np.stack([zero, -z, y], -1),
        np.stack([z, zero, -x], -1),
        np.stack([-y, x, zero], -1),
    ], -2)
    eye = np.broadcast_to(np.eye(3), k.shape)
    return eye + a * k + b * (k @ k)


def matrix_to_rotvec(matrix):
    """Inverse of :func:`rotvec_to_matrix`; returns angles in [0, pi]."""
    from scipy.spatial.transform import Rotation

    matrix = np.asarray(matrix, dtype=float)
    flat = matrix.reshape(-1, 3, 3)
    out = Rotation.from_matrix(flat).as_rotvec()
    return out.reshape(matrix.shape[:-2] + (3,))


def canonicalize_rotvec(rotvec):
    """Map axis-angle vectors to the equivalent rotation with angle in [0, pi]."""
    rotvec = np.asarray(rotvec, dtype=float)
    angle = np.linalg.norm(rotvec, axis=-1, keepdims=True)
    wrapped = np.mod(angle + np.pi, 2 * np.pi) - np.pi
    safe = np.where(angle < 1e-12, 1.0, angle)
    return np.where(angle < 1e-12, rotvec, rotvec / safe * wrapped)


# ---------------------------------------------------------------------------
# skeleton

def capsule_samples(axis, radius, n_rings, n_around, reference=None):
    """Surface points on a capsule starting at the origin and spanning ``axis``.

    Rings are spaced uniformly along the capsule profile (cap arc, cylinder,
    cap arc). Returns ``(points, areas)`` with equal area per point.
    """
    axis = np.asarray(axis, dtype=float)
    length = np.linalg.norm(axis)
    a_hat = axis / length
    if reference is None:
        # in-plane reference keeps the set mirror symmetric for xz-plane axes
        reference = np.array([1.0, 0.0, 0.0]) if abs(a_hat[0]) < 0.9 else np.array([0.0, 0.0, 1.0])
    u1 = reference - a_hat * (reference @ a_hat)
    u1 /= np.linalg.norm(u1)
    u2 = np.cross(a_hat, u1)

    profile = np.pi * radius + length
    u = (np.arange(n_rings) + 0.5) / n_rings * profile
    cap = np.pi * radius / 2
    axial = np.empty(n_rings)
    rho = np.empty(n_rings)
    for k, s in enumerate(u):
        if s < cap:
            phi = s / radius
            axial[k], rho[k] = -radius * np.cos(phi), radius * np.sin(phi)
        elif s <= cap + length:
            axial[k], rho[k] = s - cap, radius
        else:
            phi = (s - cap - length) / radius
            axial[k], rho[k] = length + radius * np.sin(phi), radius * np.cos(phi)
    psi = 2 * np.pi * (np.arange(n_around) + 0.5) / n_around
    ring = np.cos(psi)[:, None] * u1 + np.sin(psi)[:, None] * u2
    pts = axial[:, None, None] * a_hat + rho[:, None, None] * ring[None]
    area = 2 * np.pi * radius * length + 4 * np.pi * radius**2
    n = n_rings * n_around
    return pts.reshape(n, 3), np.full(n, area / n)


@dataclass
class Skeleton:
    """22-joint capsule body.

    ``surface_local[j]`` holds sample points in the local frame of joint ``j``
    (relative to the joint position) and ``surface_area[j]`` their areas.
    """

    names: tuple
    parents: np.ndarray
    rest_offset: np.ndarray
    segment_axis: np.ndarray
    segment_radius: np.ndarray
    mass_fraction: np.ndarray
    height: float = REFERENCE_HEIGHT
    rings: int = 4
    around: int = 8
    surface_local: np.ndarray = field(init=False, repr=False)
    surface_area: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.parents = np.asarray(self.parents, dtype=int)
        self.rest_offset = np.asarray(self.rest_offset, dtype=float)
        self.segment_axis = np.asarray(self.segment_axis, dtype=float)
        self.segment_radius = np.asarray(self.segment_radius, dtype=float)
        self.mass_fraction = np.asarray(self.mass_fraction, dtype=float)
        self.validate()
        self.surface_local, self.surface_area = self.sample_surface(self.rings, self.around)

    @property
    def joint_count(self):
        return len(self.names)

    def validate(self):
        j = len(self.names)
        if j != NUM_JOINTS:
            raise DimensionError(f"expected {NUM_JOINTS} joints, got {j}")
        for arr, name in ((self.rest_offset, "rest_offset"), (self.segment_axis, "segment_axis")):
            if arr.shape != (j, 3):
                raise DimensionError(f"{name} must be {j}x3, got {arr.shape}")
        if self.parents[0] != -1 or np.any(self.parents[1:] < 0):
            raise ValueError("joint 0 must be the only root")
        if np.any(self.parents[1:] >= np.arange(1, j)):
            raise ValueError("parents must precede children (tree without cycles)")
        if np.any(self.mass_fraction <= 0) or abs(self.mass_fraction.sum() - 1.0) > 1e-9:
            raise ValueError("mass fractions must be positive and sum to 1")

    def sample_surface(self, rings, around):
        """Capsule samples per segment, mirrored for right-side segments."""
        pts = np.empty((self.joint_count, rings * around, 3))
        areas = np.empty((self.joint_count, rings * around))
        for j, name in enumerate(self.names):
            if name.startswith("right_"):
                twin = self.names.index("left_" + name[len("right_"):])
                p, a = capsule_samples(self.segment_axis[twin], self.segment_radius[twin], rings, around)
                pts[j], areas[j] = _mirror(p), a
            else:
                pts[j], areas[j] = capsule_samples(self.segment_axis[j], self.segment_radius[j], rings, around)
        return pts, areas

    def segment_centroid_local(self):
        """Capsule centroid (axis midpoint) per segment, local frame."""
        return self.segment_axis / 2.0

    def to_dict(self):
        return {
            "height_m": self.height,
            "samples": {"rings": self.rings, "around": self.around},
            "joints": [
                {
                    "name": n,
                    "parent": int(p),
                    "rest_offset_m": [float(v) for v in o],
                    "segment_axis_m": [float(v) for v in a],
                    "segment_radius_m": float(r),
                    "mass_fraction": float(m),
                }
                for n, p, o, a, r, m in zip(self.names, self.parents, self.rest_offset,
                                            self.segment_axis, self.segment_radius, self.mass_fraction)
            ],
        }

    @classmethod
    def from_dict(cls, doc):
        joints = doc["joints"]
        return cls(
            names=tuple(j["name"] for j in joints),
            parents=[j["parent"] for j in joints],
            rest_offset=[j["rest_offset_m"] for j in joints],
            segment_axis=[j["segment_axis_m"] for j in joints],
            segment_radius=[j["segment_radius_m"] for j in joints],
            mass_fraction=[j["mass_fraction"] for j in joints],
            height=doc["height_m"],
            rings=doc["samples"]["rings"],
            around=doc["samples"]["around"],
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def make_skeleton(height=REFERENCE_HEIGHT, rings=4, around=8):
    """SMPL-topology skeleton with offsets scaled linearly by ``height``.

    The default 4x8 sampling gives 32 surface points per segment.
    """
    scale = height / REFERENCE_HEIGHT
    offsets, axes, radii, masses = [], [], [], []
    for name in JOINT_NAMES:
        o = _side_lookup(_REST_OFFSET, name)
        a, r = _side_lookup(_SEGMENT, name)
        if name.startswith("right_"):
            o, a = _mirror(o), _mirror(a)
        offsets.append(np.asarray(o, float) * scale)
        axes.append(np.asarray(a, float) * scale)
        radii.append(r * scale)
        masses.append(_side_lookup(_MASS, name))
    masses = np.asarray(masses)
    masses = masses / masses.sum()
    return Skeleton(JOINT_NAMES, PARENTS, np.array(offsets), np.array(axes), np.array(radii),
                    masses, height=height, rings=rings, around=around)


# ---------------------------------------------------------------------------
# poses

@dataclass
class PoseFrame:
    theta: np.ndarray  # (J, 3) axis-angle, radians
    root_translation: np.ndarray  # (3,)


@dataclass
class PoseSequence:
    """Pose stream stored as stacked arrays.

    theta is ``(N, J, 3)``; root_translation is ``(N, 3)``.
    """

    theta: np.ndarray
    root_translation: np.ndarray
    rate_hz: float = RATE_HZ
    subject_mass: float = 70.0
    subject_height: float = REFERENCE_HEIGHT

    def __post_init__(self):
        if self.theta.ndim != 3 or self.theta.shape[1:] != (NUM_JOINTS, 3):
            raise DimensionError(f"theta must be (N, {NUM_JOINTS}, 3), got {self.theta.shape}")
        if self.root_translation.shape != (self.theta.shape[0], 3):
            raise DimensionError("root_translation must be (N, 3)")
        if len(self) < 1:
            raise ValueError("pose sequence needs at least one frame")

    def __len__(self):
        return self.theta.shape[0]

    def frame(self, i):
        return PoseFrame(self.theta[i], self.root_translation[i])

    @property
    def frames(self):
        return [self.frame(i) for i in range(len(self))]


def _check_theta(theta, skeleton):
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-2:] != (skeleton.joint_count, 3):
        raise DimensionError(
            f"pose has {theta.shape[-2] if theta.ndim >= 2 else '?'} joints, skeleton has {skeleton.joint_count}")
    return theta


def global_transforms(theta, root_translation, skeleton):
    """World rotations ``(..., J, 3, 3)`` and joint positions ``(..., J, 3)``."""
    theta = _check_theta(theta, skeleton)
    root = np.asarray(root_translation, dtype=float)
    local = rotvec_to_matrix(theta)
    rots = [None] * skeleton.joint_count
    pos = [None] * skeleton.joint_count
    for j, p in enumerate(skeleton.parents):
        if p < 0:
            rots[j] = local[..., j, :, :]
            pos[j] = np.broadcast_to(root, theta.shape[:-2] + (3,)) + skeleton.rest_offset[j]
        else:
            rots[j] = rots[p] @ local[..., j, :, :]
            pos[j] = pos[p] + np.einsum("...ij,j->...i", rots[p], skeleton.rest_offset[j])
    return np.stack(rots, -3), np.stack(pos, -2)


def forward_kinematics(pose, skeleton):
    """Joint positions ``(J, 3)`` of a :class:`PoseFrame`.

    Also accepts a :class:`PoseSequence`, returning ``(N, J, 3)``.
    """
    return global_transforms(pose.theta, pose.root_translation, skeleton)[1]


def surface_points(pose, skeleton, samples=None):
    """World-space body surface samples.

    Returns ``(points, areas, segment)`` where points has shape
    ``(..., J*S, 3)``. ``samples`` optionally overrides the skeleton's own
    ``(local_points, areas)`` sampling.
    """
    local, area = samples if samples is not None else (skeleton.surface_local, skeleton.surface_area)
    rots, pos = global_transforms(pose.theta, pose.root_translation, skeleton)
    world = np.einsum("...jab,jsb->...jsa", rots, local) + pos[..., :, None, :]
    j, s = local.shape[:2]
    world = world.reshape(world.shape[:-3] + (j * s, 3))
    segment = np.repeat(np.arange(j), s)
    return world, area.reshape(-1), segment


def segment_centroids(pose, skeleton):
    """World-space capsule centroids per segment, ``(..., J, 3)``."""
    rots, pos = global_transforms(pose.theta, pose.root_translation, skeleton)
    return pos + np.einsum("...jab,jb->...ja", rots, skeleton.segment_centroid_local())


def mirror_pose(theta, root_translation, plane_y=0.0):
    """Reflect a pose through the plane y = plane_y (left and right swap)."""
    theta = np.asarray(theta, float)
    swap = [JOINT_INDEX[_swap_side(n)] for n in JOINT_NAMES]
    out = theta[..., swap, :] * np.array([-1.0, 1.0, -1.0])
    root = np.array(root_translation, float)
    root[..., 1] = 2 * plane_y - root[..., 1]
    return out, root


def _swap_side(name):
    if name.startswith("left_"):
        return "right_" + name[5:]
    if name.startswith("right_"):
        return "left_" + name[6:]
    return name


def descendants(skeleton, joint):
    """All joints below ``joint`` in the tree (excluding itself)."""
    out = []
    for j in range(joint + 1, skeleton.joint_count):
        p = skeleton.parents[j]
        if p == joint or p in out:
            out.append(j)
    return out


# ---------------------------------------------------------------------------
# motion descriptors

@dataclass
class FeatureChunk:
    positions: np.ndarray
    theta: np.ndarray
    lin_vel: np.ndarray
    ang_vel: np.ndarray
    lin_acc: np.ndarray
    ang_acc: np.ndarray

    BLOCKS = ("theta", "positions", "lin_vel", "ang_vel", "lin_acc", "ang_acc")

    def as_array(self):
        """Stack the blocks as ``(T, J, 18)`` in the order theta, P, v_l, v_a, a_l, a_a."""
        return np.concatenate([getattr(self, b) for b in self.BLOCKS], axis=-1)

    @classmethod
    def from_array(cls, x):
        parts = np.split(np.asarray(x), 6, axis=-1)
        kw = dict(zip(cls.BLOCKS, parts))
        return cls(**kw)


def central_difference(x, rate):
    """Central difference along axis 0 with replicate padding at both ends."""
    x = np.asarray(x, dtype=float)
    padded = np.concatenate([x[:1], x, x[-1:]], axis=0)
    return (padded[2:] - padded[:-2]) * (rate / 2.0)


def motion_descriptors(poses, window, skeleton=None):
    """Split a pose sequence into non-overlapping descriptor chunks.

    Derivatives are taken over the whole sequence before chunking; a trailing
    partial window is dropped. Returns an empty list when the sequence is
    shorter than one window.
    """
    t = window * poses.rate_hz
    if abs(t - round(t)) > 1e-9:
        raise ValueError(f"window {window}s is not a whole number of frames at {poses.rate_hz} Hz")
    t = int(round(t))
    n = len(poses) // t
    if n == 0:
        return []
    if skeleton is None:
        skeleton = make_skeleton(poses.subject_height)
    theta = np.asarray(poses.theta, dtype=float)
    pos = forward_kinematics(poses, skeleton)
    v_l = central_difference(pos, poses.rate_hz)
    v_a = central_difference(theta, poses.rate_hz)
    a_l = central_difference(v_l, poses.rate_hz)
    a_a = central_difference(v_a, poses.rate_hz)
    chunks = []
    for k in range(n):
        s = slice(k * t, (k + 1) * t)
        chunks.append(FeatureChunk(pos[s], theta[s], v_l[s], v_a[s], a_l[s], a_a[s]))
    return chunks
