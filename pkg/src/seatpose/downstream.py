"""Applications on top of reconstructed poses.

Volumetric centre of mass, spine angles for posture monitoring, and a
pose plus pressure activity classifier.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.ensemble import RandomForestClassifier
from sklearn.linear_model import Ridge

from .body import JOINT_INDEX, RATE_HZ, global_transforms, segment_centroids
from .dataio import ACTIVITIES, MAT_COLS, MAT_ROWS
from .metrics import extract_features

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# centre of mass

@dataclass
class VCoMResult:
    position: np.ndarray  # (..., 3) m
    per_segment_com: np.ndarray  # (..., J, 3)
    method: str = "mesh_based"


def weighted_com(per_segment, mass_fraction):
    per_segment = np.asarray(per_segment, float)
    w = np.asarray(mass_fraction, float)
    return np.einsum("...jk,j->...k", per_segment, w) / w.sum()


def vcom(pose, skeleton):
    """Mass-fraction weighted mean of capsule centroids (uniform density per segment)."""
    seg = segment_centroids(pose, skeleton)
    return VCoMResult(weighted_com(seg, skeleton.mass_fraction), seg, "mesh_based")


def sample_capsule_volume(axis, radius, n, rng):
    """Uniform points inside a capsule from the origin along ``axis`` (rejection sampling)."""
    axis = np.asarray(axis, float)
    length = np.linalg.norm(axis)
    a_hat = axis / length
    out = []
    need = n
    lo = np.array([-radius, -radius, -radius])
    hi = np.array([radius, radius, length + radius])
    while need > 0:
        p = rng.uniform(lo, hi, size=(2 * need + 16, 3))
        t = np.clip(p[:, 2], 0.0, length)
        d2 = p[:, 0] ** 2 + p[:, 1] ** 2 + (p[:, 2] - t) ** 2
        p = p[d2 <= radius * radius][:need]
        out.append(p)
        need -= len(p)
    p = np.concatenate(out)
    # rotate local z onto the capsule axis
    ref = np.array([1.0, 0.0, 0.0]) if abs(a_hat[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u1 = ref - a_hat * (ref @ a_hat)
    u1 /= np.linalg.norm(u1)
    u2 = np.cross(a_hat, u1)
    return p[:, :1] * u1 + p[:, 1:2] * u2 + p[:, 2:3] * a_hat


def vcom_monte_carlo(pose, skeleton, n=20000, seed=0):
    """Centre of mass by sampling each capsule's volume; independent of the centroid formula."""
    rng = np.random.default_rng(seed)
    rots, pos = global_transforms(pose.theta, pose.root_translation, skeleton)
    coms = np.empty((skeleton.joint_count, 3))
    for j in range(skeleton.joint_count):
        local = sample_capsule_volume(skeleton.segment_axis[j], skeleton.segment_radius[j], n, rng)
        coms[j] = (pos[j] + local @ rots[j].T).mean(0)
    return weighted_com(coms, skeleton.mass_fraction)


class VCoMRegressor:
    """Direct pressure -> pelvis-relative centre of mass baseline (ridge on pooled rasters)."""

    def __init__(self, alpha=1.0, pool=4):
        self.alpha = alpha
        self.pool = pool
        self.model = None

    def features(self, pressure):
        p = np.asarray(pressure, float)
        if p.ndim == 2:
            p = p[None]
        k = self.pool
        pooled = p.reshape(len(p), MAT_ROWS // k, k, MAT_COLS // k, k).mean((2, 4))
        return np.sqrt(pooled.reshape(len(p), -1) / 5000.0)

    def fit(self, pressure, target):
        self.model = Ridge(alpha=self.alpha).fit(self.features(pressure), np.asarray(target, float))
        return self

    def predict(self, pressure):
        if self.model is None:
            raise RuntimeError("VCoM regressor is not trained")
        return self.model.predict(self.features(pressure))


def vcom_direct(model, pressure_chunk):
    """Mean predicted centre of mass over a pressure window ``(T, 80, 28)``."""
    return model.predict(pressure_chunk).mean(0)


# ---------------------------------------------------------------------------
# spine angles

@dataclass
class SpineAngles:
    lumbar_flexion_deg: np.ndarray
    thoracic_tilt_deg: np.ndarray


def _body_axes(pelvis_rot):
    """Heading-aligned forward and left axes from the pelvis frame, world z kept vertical."""
    fwd = pelvis_rot[..., :, 0].copy()
    fwd[..., 2] = 0.0
    n = np.linalg.norm(fwd, axis=-1, keepdims=True)
    # pelvis pitched to vertical: fall back on its up axis for the heading
    alt = -pelvis_rot[..., :, 2].copy() * np.sign(pelvis_rot[..., 2:3, 0])
    alt[..., 2] = 0.0
    fwd = np.where(n > 1e-6, fwd / np.maximum(n, 1e-12), alt / np.maximum(np.linalg.norm(alt, axis=-1, keepdims=True), 1e-12))
    up = np.broadcast_to([0.0, 0.0, 1.0], fwd.shape)
    left = np.cross(up, fwd)
    return fwd, left, up


def _plane_angle(v, axis, up):
    """Signed angle in degrees of ``v`` from vertical within the plane spanned by ``axis`` and ``up``."""
    a = np.einsum("...k,...k->...", v, axis)
    b = np.einsum("...k,...k->...", v, up)
    if np.any(np.hypot(a, b) < 1e-9):
        raise ValueError("degenerate spine vector")
    ang = np.degrees(np.arctan2(a, b))
    return np.where(ang <= -180.0, ang + 360.0, ang)


def spine_angles(pose, skeleton):
    """Lumbar flexion (pelvis->spine2, sagittal) and thoracic tilt (spine2->neck, coronal).

    Flexion is positive forward; tilt is positive towards the body's left.
    The planes follow the pelvis heading, so global yaw has no effect.
    """
    rots, pos = global_transforms(pose.theta, pose.root_translation, skeleton)
    fwd, left, up = _body_axes(rots[..., JOINT_INDEX["pelvis"], :, :])
    lumbar = pos[..., JOINT_INDEX["spine2"], :] - pos[..., JOINT_INDEX["pelvis"], :]
    thoracic = pos[..., JOINT_INDEX["neck"], :] - pos[..., JOINT_INDEX["spine2"], :]
    return SpineAngles(_plane_angle(lumbar, fwd, up), _plane_angle(thoracic, left, up))


def posture_report(poses, skeleton, slouch_deg=20.0):
    """Per-frame spine angles with slouch flags (lumbar flexion above ``slouch_deg``)."""
    ang = spine_angles(poses, skeleton)
    flex = np.atleast_1d(ang.lumbar_flexion_deg)
    tilt = np.atleast_1d(ang.thoracic_tilt_deg)
    slouch = flex > slouch_deg
    return {
        "slouch_threshold_deg": slouch_deg,
        "frames": [{"lumbar_flexion_deg": float(f), "thoracic_tilt_deg": float(t), "slouch": bool(s)}
                   for f, t, s in zip(flex, tilt, slouch)],
        "slouch_fraction": float(slouch.mean()) if len(slouch) else 0.0,
    }


# ---------------------------------------------------------------------------
# activity recognition

def pressure_summary(frames):
    """Mean and variance of each raster quadrant over a window: 8 values."""
    p = np.asarray(frames, float)
    r, c = MAT_ROWS // 2, MAT_COLS // 2
    out = []
    for rs in (slice(0, r), slice(r, None)):
        for cs in (slice(0, c), slice(c, None)):
            q = p[:, rs, cs].mean((1, 2))
            out += [q.mean(), q.var()]
    return np.array(out)


def window_starts(n_frames, window, hop):
    return list(range(0, n_frames - window + 1, hop))


def har_features(pressure, positions=None, theta=None, rate=RATE_HZ, window_s=2.0, overlap=0.5, mode="fusion"):
    """Feature rows for 2 s windows with 50% overlap.

    ``mode`` is ``"fusion"`` (pose features then pressure summary) or
    ``"pressure"`` (pressure summary only).
    """
    if mode not in ("fusion", "pressure"):
        raise ValueError("mode must be 'fusion' or 'pressure'")
    w = int(round(window_s * rate))
    hop = max(1, int(round(w * (1 - overlap))))
    rows = []
    for s in window_starts(len(pressure), w, hop):
        f = [pressure_summary(pressure[s:s + w])]
        if mode == "fusion":
            mf = extract_features(positions[s:s + w], theta[s:s + w], rate)
            f = [mf.geometric, mf.kinetic] + f
        rows.append(np.concatenate(f))
    return np.array(rows).reshape(len(rows), -1)


class HARClassifier:
    """Random forest over window features; 12 seated activities."""

    classes = ACTIVITIES

    def __init__(self, seed=0, n_estimators=200):
        self.seed = seed
        self.model = RandomForestClassifier(n_estimators=n_estimators, random_state=seed, n_jobs=1)
        self.fitted = False

    def fit(self, features, labels):
        self.model.fit(features, labels)
        self.fitted = True
        return self

    def predict(self, features):
        if not self.fitted:
            raise RuntimeError("activity classifier is not trained")
        return self.model.predict(features)


def har_classify(model, features):
    """Labels (indices into the 12 activities) for feature rows."""
    return model.predict(np.atleast_2d(features))
