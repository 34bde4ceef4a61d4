"""Pose, distribution and classification metrics.

Position inputs are in meters; the pose errors are returned in millimeters.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


class AlignmentDegenerateError(ValueError):
    """Rigid alignment is undefined (all joints collinear)."""


def _check_same(pred, gt):
    pred, gt = np.asarray(pred, dtype=float), np.asarray(gt, dtype=float)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    if pred.shape[-1] != 3:
        raise ValueError("last axis must hold 3-D coordinates")
    return pred, gt


def mpjpe(pred, gt):
    """Mean per-joint position error in mm over all frames and joints."""
    pred, gt = _check_same(pred, gt)
    return float(np.linalg.norm(pred - gt, axis=-1).mean() * 1000.0)


def rigid_align(pred, gt):
    """Rotate and translate ``pred`` (J, 3) onto ``gt`` by least squares.

    Orthogonal Procrustes without scaling; reflections are excluded.
    """
    mu_p, mu_g = pred.mean(0), gt.mean(0)
    p, g = pred - mu_p, gt - mu_g
    for pts in (p, g):
        s = np.linalg.svd(pts, compute_uv=False)
        if s[0] == 0 or s[1] <= 1e-9 * s[0]:
            raise AlignmentDegenerateError("joints are collinear; rotation is not identifiable")
    u, _, vt = np.linalg.svd(p.T @ g)
    d = np.sign(np.linalg.det(u @ vt))
    rot = u @ np.diag([1.0, 1.0, d]) @ vt
    return p @ rot + mu_g


def pa_mpjpe(pred, gt):
    """MPJPE after per-frame rigid alignment, in mm."""
    pred, gt = _check_same(pred, gt)
    if pred.shape[-2] < 3:
        raise AlignmentDegenerateError("need at least 3 joints")
    flat_p = pred.reshape(-1, *pred.shape[-2:])
    flat_g = gt.reshape(-1, *gt.shape[-2:])
    aligned = np.stack([rigid_align(p, g) for p, g in zip(flat_p, flat_g)])
    return float(np.linalg.norm(aligned - flat_g, axis=-1).mean() * 1000.0)


def mpve(pred_vertices, gt_vertices):
    """Mean per-vertex error in mm; vertices must correspond one-to-one."""
    pred, gt = np.asarray(pred_vertices, float), np.asarray(gt_vertices, float)
    if pred.shape != gt.shape:
        raise ValueError(f"vertex count mismatch: {pred.shape} vs {gt.shape}")
    return float(np.linalg.norm(pred - gt, axis=-1).mean() * 1000.0)


# ---------------------------------------------------------------------------
# Frechet distance

@dataclass
class DistStats:
    mean: np.ndarray
    covariance: np.ndarray
    sample_count: int

    @classmethod
    def from_features(cls, feats):
        feats = np.asarray(feats, dtype=float)
        if feats.ndim != 2 or len(feats) < 2:
            raise ValueError("need a (n >= 2, d) feature matrix")
        cov = np.cov(feats, rowvar=False)
        cov = np.atleast_2d(cov)
        cov = (cov + cov.T) / 2
        return cls(feats.mean(0), cov, len(feats))


def _psd_sqrt(m):
    w, v = np.linalg.eigh((m + m.T) / 2)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.T


def fid(stats_x, stats_y):
    """Frechet distance between two Gaussians.

    The trace of sqrt(Sx Sy) is taken from the symmetric matrix
    sqrt(Sx) Sy sqrt(Sx), whose eigenvalues are clamped at zero.
    """
    mx, my = np.atleast_1d(stats_x.mean), np.atleast_1d(stats_y.mean)
    sx, sy = np.atleast_2d(stats_x.covariance), np.atleast_2d(stats_y.covariance)
    if mx.shape != my.shape or sx.shape != sy.shape or sx.shape != (mx.size, mx.size):
        raise ValueError("feature dimensions differ")
    for arr in (mx, my, sx, sy):
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite statistics")
    root_x = _psd_sqrt(sx)
    inner = root_x @ sy @ root_x
    w = np.linalg.eigvalsh((inner + inner.T) / 2)
    tr_sqrt = np.sqrt(np.clip(w, 0, None)).sum()
    diff = mx - my
    value = diff @ diff + np.trace(sx) + np.trace(sy) - 2 * tr_sqrt
    return float(max(value, 0.0))


@dataclass
class MotionFeatures:
    kinetic: np.ndarray
    geometric: np.ndarray


def extract_features(positions, theta, rate=15.0, pelvis=0):
    """Kinetic (2J) and geometric (4J) summary features of one sequence.

    kinetic: per-joint mean speed and mean acceleration magnitude.
    geometric: mean pelvis-relative joint positions followed by mean joint
    rotation angles.
    """
    positions = np.asarray(positions, float)
    theta = np.asarray(theta, float)
    if len(positions) < 2:
        raise ValueError("sequence needs at least 2 frames")
    vel = np.diff(positions, axis=0) * rate
    speed = np.linalg.norm(vel, axis=-1).mean(0)
    if len(vel) > 1:
        acc = np.linalg.norm(np.diff(vel, axis=0) * rate, axis=-1).mean(0)
    else:
        acc = np.zeros(positions.shape[1])
    rel = (positions - positions[:, pelvis:pelvis + 1]).mean(0).reshape(-1)
    angle = np.linalg.norm(theta, axis=-1).mean(0)
    return MotionFeatures(np.concatenate([speed, acc]), np.concatenate([rel, angle]))


def windowed_features(sequences, window=30, hop=15, rate=15.0):
    """Stack features of sliding windows cut from ``(positions, theta)`` sequences.

    Windows that straddle chunk boundaries let the kinetic block see
    discontinuities between consecutive decoded tokens.
    """
    kin, geo = [], []
    for pos, theta in sequences:
        n = len(pos)
        for s in range(0, n - window + 1, hop):
            f = extract_features(pos[s:s + window], theta[s:s + window], rate)
            kin.append(f.kinetic)
            geo.append(f.geometric)
    if len(kin) < 2:
        raise ValueError("fewer than two windows; sequences too short for the window")
    return np.stack(kin), np.stack(geo)


def motion_fid(generated, real, window=30, hop=15, rate=15.0):
    """FID_k and FID_g between two collections of ``(positions, theta)`` sequences."""
    gk, gg = windowed_features(generated, window, hop, rate)
    rk, rg = windowed_features(real, window, hop, rate)
    return {"fid_k": fid(DistStats.from_features(gk), DistStats.from_features(rk)),
            "fid_g": fid(DistStats.from_features(gg), DistStats.from_features(rg))}


# ---------------------------------------------------------------------------
# retrieval and classification

def r_precision(generated, real, k=3, pool=32, seed=0):
    """Fraction of generated samples whose paired real sample ranks in the top k.

    Each query is compared against its true partner plus ``pool - 1``
    randomly drawn other real samples, by Euclidean distance.
    """
    gen = np.asarray(generated, float).reshape(len(generated), -1)
    real = np.asarray(real, float).reshape(len(real), -1)
    if gen.shape != real.shape:
        raise ValueError("generated and real sets must be paired and equally sized")
    n = len(gen)
    if n < k:
        raise ValueError("set smaller than k")
    if n < pool:
        log.warning("pool size %d exceeds set size %d; shrinking pool", pool, n)
        pool = n
    rng = np.random.default_rng(seed)
    hits = 0
    for i in range(n):
        others = rng.choice(n - 1, size=pool - 1, replace=False)
        others = others + (others >= i)
        d_true = np.linalg.norm(gen[i] - real[i])
        d_other = np.linalg.norm(real[others] - gen[i], axis=1)
        rank = 1 + int(np.sum(d_other < d_true))
        hits += rank <= k
    return hits / n


def macro_f1(pred, gt, classes=12):
    """Unweighted mean of per-class F1; classes absent from both score 0."""
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError("length mismatch")
    if pred.size and (pred.min() < 0 or gt.min() < 0 or max(pred.max(), gt.max()) >= classes):
        raise ValueError("label out of range")
    scores = []
    for c in range(classes):
        tp = np.sum((pred == c) & (gt == c))
        fp = np.sum((pred == c) & (gt != c))
        fn = np.sum((pred != c) & (gt == c))
        if tp + fp + fn == 0:
            log.warning("class %d absent from predictions and labels; F1 set to 0", c)
            scores.append(0.0)
            continue
        scores.append(2 * tp / (2 * tp + fp + fn))
    return float(np.mean(scores))


def aggregate(values):
    """Mean and sample standard deviation of per-fold values."""
    v = np.asarray(values, dtype=float)
    std = float(v.std(ddof=1)) if len(v) > 1 else 0.0
    return {"mean": float(v.mean()), "std": std}
