"""Analytic contact simulator for a flexible pressure mat draped over a chair.

The mat is a non-stretching 80x28 strip (21 mm row pitch, 20 mm column
pitch). Chairs are extruded profiles in the xz plane, so the draped mat is a
ruled surface: a midline polyline swept along y. Contact queries go through
a signed-distance grid over that polyline.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .body import (
    GRAVITY, PoseFrame, PoseSequence, descendants, global_transforms, make_skeleton, matrix_to_rotvec,
    rotvec_to_matrix,
)
from .dataio import CHAIR_POINTS, MAT_COLS, MAT_ROWS, PRESSURE_MAX, PressureSequence, Recording

log = logging.getLogger(__name__)

ROW_PITCH = 0.021
COL_PITCH = 0.020
MAT_LENGTH = MAT_ROWS * ROW_PITCH  # 1.68 m
MAT_WIDTH = MAT_COLS * COL_PITCH  # 0.56 m
CELL_AREA = ROW_PITCH * COL_PITCH
PA_PER_MMHG = 133.322
CONTACT_THRESHOLD = 0.005
MAX_PENETRATION = 0.002
SUPPORT_NZ = 0.3
# dense capsule sampling used for contact; the 32-point set stays for MPVE
CONTACT_RINGS, CONTACT_AROUND = 24, 48


class UndrapeableChairError(ValueError):
    """No seat-like horizontal surface was found in the chair point cloud."""


class SettleError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# chairs

@dataclass
class ChairSpec:
    """Parametric chair: tilted seat, optional reclined backrest.

    Angles in radians. ``back_height`` of 0 means no backrest.
    """

    name: str
    seat_height: float = 0.46
    seat_depth: float = 0.45
    seat_width: float = 0.46
    seat_tilt: float = 0.05
    back_angle: float = 0.12
    back_height: float = 0.50
    back_thickness: float = 0.04
    base: str = "legs"  # legs | star | stool | wheels


def _fillet(vertices, radius):
    """Replace interior corners of a 2-D polyline by circular arcs."""
    pts = [np.asarray(vertices[0], float)]
    for k in range(1, len(vertices) - 1):
        a, b, c = (np.asarray(v, float) for v in vertices[k - 1:k + 2])
        u, w = a - b, c - b
        lu, lw = np.linalg.norm(u), np.linalg.norm(w)
        u, w = u / lu, w / lw
        turn = math.pi - math.acos(np.clip(u @ w, -1, 1))
        if turn < 1e-6:
            pts.append(b)
            continue
        r = min(radius, 0.45 * min(lu, lw) / math.tan(turn / 2))
        t = r * math.tan(turn / 2)
        p1, p2 = b + u * t, b + w * t
        bis = u + w
        bis /= np.linalg.norm(bis)
        center = b + bis * (r / math.cos(turn / 2))
        a1 = math.atan2(*(p1 - center)[::-1])
        a2 = math.atan2(*(p2 - center)[::-1])
        d = (a2 - a1 + math.pi) % (2 * math.pi) - math.pi
        for f in np.linspace(0, 1, 24):
            ang = a1 + d * f
            pts.append(center + r * np.array([math.cos(ang), math.sin(ang)]))
    pts.append(np.asarray(vertices[-1], float))
    return np.array(pts)


def _densify(path, step=5e-4):
    out = [path[0]]
    for a, b in zip(path[:-1], path[1:]):
        n = max(1, int(math.ceil(np.linalg.norm(b - a) / step)))
        out.extend(a + (b - a) * (np.arange(1, n + 1) / n)[:, None])
    return np.array(out)


def _equal_chord_resample(path, n_points, total):
    """Points on ``path`` whose consecutive chords all equal total/(n-1)."""
    d = total / (n_points - 1)
    dense = _densify(path)
    out = [dense[0]]
    k = 0
    cur = dense[0]
    while len(out) < n_points:
        while k + 1 < len(dense) and np.linalg.norm(dense[k + 1] - cur) < d:
            k += 1
        if k + 1 >= len(dense):
            raise UndrapeableChairError("chair profile too short for the mat")
        # solve |a + t (b - a) - cur| = d on the crossing segment
        a, b = dense[k], dense[k + 1]
        e, f = b - a, a - cur
        qa, qb, qc = e @ e, 2 * e @ f, f @ f - d * d
        t = (-qb + math.sqrt(max(qb * qb - 4 * qa * qc, 0.0))) / (2 * qa)
        cur = a + t * e
        out.append(cur)
        dense[k] = cur
    return np.array(out)


def chair_profile(spec):
    """Mat midline path in the xz plane (front edge, rear edge, up the back, over, down)."""
    xf, zf = spec.seat_depth / 2, spec.seat_height
    xr, zr = -spec.seat_depth / 2, spec.seat_height - spec.seat_depth * math.tan(spec.seat_tilt)
    verts = [(xf, zf), (xr, zr)]
    if spec.back_height > 0:
        up = np.array([-math.sin(spec.back_angle), math.cos(spec.back_angle)])
        top = np.array([xr, zr]) + spec.back_height * up
        back = np.array([-up[1], up[0]])  # points away from the sitter
        over = top + spec.back_thickness * back
        verts += [tuple(top), tuple(over), tuple(over - 1.5 * up)]
    else:
        verts += [(xr, zr - 1.5)]
    return _fillet(verts, 0.03)


@dataclass
class ChairModel:
    chair_id: str
    point_cloud: np.ndarray  # (5000, 3)
    drape_profile: np.ndarray  # (80, 3) along the mat midline
    spec: ChairSpec | None = None

    def __post_init__(self):
        if self.point_cloud.shape != (CHAIR_POINTS, 3):
            self.point_cloud = resample_cloud(self.point_cloud, CHAIR_POINTS)

    def normalized_cloud(self):
        """Point cloud centred at its centroid and scaled to unit max radius."""
        pts = np.asarray(self.point_cloud, float)
        pts = pts - pts.mean(0)
        return pts / np.linalg.norm(pts, axis=1).max()


def resample_cloud(points, n, seed=0):
    points = np.asarray(points, float)
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(points), n, replace=len(points) < n)
    return points[np.sort(idx)]


def _sample_rect(rng, n, origin, u, v):
    a, b = rng.random((2, n))
    return origin + a[:, None] * u + b[:, None] * v


def _sample_cylinder(rng, n, base, axis, radius):
    h, ang = rng.random(n), rng.random(n) * 2 * np.pi
    axis = np.asarray(axis, float)
    length = np.linalg.norm(axis)
    a = axis / length
    ref = np.array([1.0, 0, 0]) if abs(a[0]) < 0.9 else np.array([0, 0, 1.0])
    u1 = np.cross(a, ref)
    u1 /= np.linalg.norm(u1)
    u2 = np.cross(a, u1)
    ring = np.cos(ang)[:, None] * u1 + np.sin(ang)[:, None] * u2
    return base + h[:, None] * axis + radius * ring


def make_chair(spec, seed=0):
    """Build a :class:`ChairModel` (point cloud plus drape profile) from a spec."""
    rng = np.random.default_rng(seed)
    w = spec.seat_width
    xf, zf = spec.seat_depth / 2, spec.seat_height
    xr, zr = -spec.seat_depth / 2, spec.seat_height - spec.seat_depth * math.tan(spec.seat_tilt)
    front, rear = np.array([xf, -w / 2, zf]), np.array([xr, -w / 2, zr])
    lateral = np.array([0, w, 0])
    parts = []  # (area weight, sampler)
    parts.append((spec.seat_depth * w * 2.0, lambda n: _sample_rect(rng, n, front, rear - front, lateral)))
    parts.append((spec.seat_depth * w * 0.6,
                  lambda n: _sample_rect(rng, n, front - [0, 0, 0.04], rear - front, lateral)))
    if spec.back_height > 0:
        up = np.array([-math.sin(spec.back_angle), 0, math.cos(spec.back_angle)])
        bw = w * 0.95
        o = rear + [0, (w - bw) / 2, 0]
        thick = np.array([-math.cos(spec.back_angle), 0, -math.sin(spec.back_angle)]) * spec.back_thickness
        parts.append((spec.back_height * bw, lambda n: _sample_rect(rng, n, o, up * spec.back_height, [0, bw, 0])))
        parts.append((spec.back_height * bw * 0.5,
                      lambda n: _sample_rect(rng, n, o + thick, up * spec.back_height, [0, bw, 0])))
    if spec.base == "legs":
        for x in (xf - 0.02, xr + 0.02):
            for y in (-w / 2 + 0.02, w / 2 - 0.02):
                top = zf if x > 0 else zr
                parts.append((0.02 * top, lambda n, x=x, y=y, top=top:
                              _sample_cylinder(rng, n, np.array([x, y, 0.0]), [0, 0, top - 0.04], 0.012)))
    elif spec.base == "star":
        parts.append((0.03 * zf, lambda n: _sample_cylinder(rng, n, np.array([0, 0, 0.08]), [0, 0, zf - 0.12], 0.03)))
        for k in range(5):
            ang = 2 * np.pi * k / 5
            parts.append((0.01, lambda n, ang=ang: _sample_cylinder(
                rng, n, np.array([0, 0, 0.08]), [0.33 * math.cos(ang), 0.33 * math.sin(ang), -0.03], 0.015)))
    elif spec.base == "stool":
        parts.append((0.04 * zf, lambda n: _sample_cylinder(rng, n, np.array([0, 0, 0.0]), [0, 0, zf - 0.04], 0.035)))
        parts.append((0.05, lambda n: _sample_cylinder(rng, n, np.array([0.0, 0, 0.35]), [0.0, 0, 0.02], 0.2)))
    elif spec.base == "wheels":
        for y in (-w / 2 - 0.04, w / 2 + 0.04):
            ang = lambda n: rng.random(n) * 2 * np.pi
            def wheel(n, y=y):
                a = ang(n)
                r = 0.3 * np.sqrt(rng.random(n) * 0.1 + 0.9)
                return np.stack([-0.05 + r * np.cos(a), np.full(n, y), 0.3 + r * np.sin(a)], 1)
            parts.append((0.12, wheel))
            parts.append((0.02, lambda n, y=y: _sample_cylinder(rng, n, np.array([xr, y, zr + 0.2]), [spec.seat_depth, 0, 0], 0.015)))
    weights = np.array([p[0] for p in parts])
    counts = np.floor(weights / weights.sum() * CHAIR_POINTS).astype(int)
    counts[0] += CHAIR_POINTS - counts.sum()
    cloud = np.concatenate([sampler(n) for (_, sampler), n in zip(parts, counts)])

    path = chair_profile(spec)
    mid = _equal_chord_resample(path, MAT_ROWS, MAT_LENGTH)
    profile = np.stack([mid[:, 0], np.zeros(MAT_ROWS), mid[:, 1]], 1)
    return ChairModel(spec.name, cloud, profile, spec)


def flat_chair(height=0.45, name="flat"):
    """A horizontal plate long enough to carry the whole mat flat."""
    rng = np.random.default_rng(0)
    cloud = _sample_rect(rng, CHAIR_POINTS, np.array([-1.2, -0.3, height]), [2.0, 0, 0], [0, 0.6, 0])
    x = 0.3 - np.arange(MAT_ROWS) * (MAT_LENGTH / (MAT_ROWS - 1))
    profile = np.stack([x, np.zeros(MAT_ROWS), np.full(MAT_ROWS, height)], 1)
    return ChairModel(name, cloud, profile, None)


STANDARD_CHAIRS = {
    "office": ChairSpec("office", seat_height=0.48, seat_depth=0.46, seat_width=0.48, seat_tilt=0.06,
                        back_angle=0.20, back_height=0.55, base="star"),
    "foldable": ChairSpec("foldable", seat_height=0.44, seat_depth=0.40, seat_width=0.42, seat_tilt=0.02,
                          back_angle=0.08, back_height=0.42, base="legs"),
    "barstool": ChairSpec("barstool", seat_height=0.72, seat_depth=0.38, seat_width=0.38, seat_tilt=0.0,
                          back_angle=0.0, back_height=0.0, base="stool"),
    "wheelchair": ChairSpec("wheelchair", seat_height=0.50, seat_depth=0.42, seat_width=0.44, seat_tilt=0.10,
                            back_angle=0.15, back_height=0.45, base="wheels"),
}


def random_chair_spec(rng, name):
    has_back = rng.random() > 0.2
    return ChairSpec(
        name,
        seat_height=float(rng.uniform(0.42, 0.62)),
        seat_depth=float(rng.uniform(0.38, 0.50)),
        seat_width=float(rng.uniform(0.40, 0.52)),
        seat_tilt=float(rng.uniform(0.0, 0.12)),
        back_angle=float(rng.uniform(0.0, 0.30)) if has_back else 0.0,
        back_height=float(rng.uniform(0.35, 0.60)) if has_back else 0.0,
        base=str(rng.choice(["legs", "star", "stool", "wheels"])),
    )


# ---------------------------------------------------------------------------
# mat

@dataclass
class MatGeometry:
    cell_centers: np.ndarray  # (80, 28, 3)
    cell_normals: np.ndarray  # (80, 28, 3)
    cell_area: float
    midline: np.ndarray  # (80, 3) drape polyline
    lateral_center: float
    chair_id: str = ""
    _field: tuple | None = field(default=None, repr=False)

    @property
    def row_normals(self):
        return self.cell_normals[:, 0]

    def _signed_field(self, res=0.0025, margin=0.35):
        """Signed distance and arc-length grids over the xz plane."""
        if self._field is not None:
            return self._field
        pts = self.midline[:, [0, 2]]
        x0, z0 = pts.min(0) - margin
        x1, z1 = pts.max(0) + margin
        gx = np.arange(x0, x1 + res, res)
        gz = np.arange(z0, z1 + res, res)
        X, Z = np.meshgrid(gx, gz, indexing="ij")
        q = np.stack([X.ravel(), Z.ravel()], 1)
        seg_a, seg_b = pts[:-1], pts[1:]
        seg = seg_b - seg_a
        seg_len = np.linalg.norm(seg, axis=1)
        arc0 = np.concatenate([[0.0], np.cumsum(seg_len)])[:-1]
        normals = np.stack([seg[:, 1], -seg[:, 0]], 1) / seg_len[:, None]
        best_d = np.full(len(q), np.inf)
        best_h = np.zeros(len(q))
        best_s = np.zeros(len(q))
        for k in range(len(seg)):
            rel = q - seg_a[k]
            t = rel @ seg[k] / seg_len[k] ** 2
            # extend the end segments so the mat edges have a clean field
            lo = -np.inf if k == 0 else 0.0
            hi = np.inf if k == len(seg) - 1 else 1.0
            tc = np.clip(t, lo, hi)
            diff = rel - tc[:, None] * seg[k]
            d = np.linalg.norm(diff, axis=1)
            better = d < best_d
            best_d[better] = d[better]
            along = rel[better] @ normals[k]
            best_h[better] = np.where(np.abs(along) > 1e-12, np.sign(along), 1.0) * d[better]
            best_s[better] = arc0[k] + tc[better] * seg_len[k]
        shape = X.shape
        self._field = (x0, z0, res, best_h.reshape(shape), best_s.reshape(shape))
        return self._field

    def _lookup(self, points, with_arc):
        x0, z0, res, hf, sf = self._signed_field()
        gx = np.clip((points[..., 0] - x0) / res, 0, hf.shape[0] - 1.000001)
        gz = np.clip((points[..., 2] - z0) / res, 0, hf.shape[1] - 1.000001)
        i, k = gx.astype(np.intp), gz.astype(np.intp)
        fx, fz = gx - i, gz - k
        w00, w10, w01, w11 = (1 - fx) * (1 - fz), fx * (1 - fz), (1 - fx) * fz, fx * fz

        def interp(f):
            return w00 * f[i, k] + w10 * f[i + 1, k] + w01 * f[i, k + 1] + w11 * f[i + 1, k + 1]

        return interp(hf), (interp(sf) if with_arc else None)

    def signed_distance(self, points):
        """Signed distance (m) to the mat surface, positive on the body side."""
        return self._lookup(np.asarray(points, float), False)[0]

    def query(self, points):
        """Signed normal distance, arc length, lateral coordinate and normal for points.

        Returns ``(h, s, v, normal, on_mat)`` where ``v`` is the lateral
        offset from the mat centre line and ``on_mat`` marks points whose
        footprint lies inside the mat.
        """
        points = np.asarray(points, float)
        h, s = self._lookup(points, True)
        v = points[..., 1] - self.lateral_center
        row = np.clip((s / ROW_PITCH).astype(int), 0, MAT_ROWS - 1)
        normal = self.row_normals[row]
        on_mat = (s > 0) & (s < MAT_LENGTH) & (np.abs(v) <= MAT_WIDTH / 2)
        return h, s, v, normal, on_mat


def _polyline_point(poly, s):
    seg = np.diff(poly, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg_len)])
    k = np.clip(np.searchsorted(arc, s, side="right") - 1, 0, len(seg) - 1)
    t = (s - arc[k]) / seg_len[k]
    return poly[k] + t[:, None] * seg[k], seg[k] / seg_len[k][:, None]


def find_seat(chair, slab=0.05, min_fraction=0.08, min_extent=0.25):
    """Height and lateral centre of the largest near-horizontal point cluster."""
    pts = np.asarray(chair.point_cloud, float)
    z = pts[:, 2]
    edges = np.arange(z.min(), z.max() + slab, slab / 2)
    best, best_count = None, 0
    for lo in edges:
        sel = (z >= lo) & (z < lo + slab)
        c = int(sel.sum())
        if c <= best_count:
            continue
        ext = np.ptp(pts[sel, :2], axis=0) if c > 1 else np.zeros(2)
        if np.all(ext >= min_extent):
            best, best_count = sel, c
    if best is None or best_count < min_fraction * len(pts):
        raise UndrapeableChairError(f"chair {chair.chair_id!r}: no horizontal seat cluster found")
    seat = pts[best]
    return float(np.median(seat[:, 2])), float((seat[:, 1].min() + seat[:, 1].max()) / 2)


def drape_mat(chair):
    """Lay the mat along the chair's drape profile, centred on the seat."""
    _, y_center = find_seat(chair)
    poly = np.asarray(chair.drape_profile, float)
    arc_len = np.linalg.norm(np.diff(poly, axis=0), axis=1).sum()
    if abs(arc_len - MAT_LENGTH) > 1e-6:
        raise ValueError(f"drape profile length {arc_len:.6f} m differs from mat length {MAT_LENGTH} m")
    s = (np.arange(MAT_ROWS) + 0.5) * ROW_PITCH
    mid, tangent = _polyline_point(poly, s)
    normal = np.stack([tangent[:, 2], np.zeros(MAT_ROWS), -tangent[:, 0]], 1)
    normal /= np.linalg.norm(normal, axis=1, keepdims=True)
    offsets = (np.arange(MAT_COLS) - (MAT_COLS - 1) / 2) * COL_PITCH + y_center
    centers = mid[:, None, :] + offsets[None, :, None] * np.array([0.0, 1.0, 0.0])
    normals = np.repeat(normal[:, None, :], MAT_COLS, axis=1)
    midline = poly.copy()
    return MatGeometry(centers, normals, CELL_AREA, midline, y_center, chair.chair_id)


# ---------------------------------------------------------------------------
# settling and rendering

def contact_samples(skeleton):
    return skeleton.sample_surface(CONTACT_RINGS, CONTACT_AROUND)


def _world_samples(theta, root, skeleton, samples):
    rots, pos = global_transforms(theta, root, skeleton)
    local, area = samples
    world = np.einsum("jab,jsb->jsa", rots, local) + pos[:, None, :]
    return world.reshape(-1, 3), area.reshape(-1), np.repeat(np.arange(local.shape[0]), local.shape[1])


CULL_MARGIN = 0.005  # slack for interpolation error in the distance grid


@dataclass
class _Contact:
    pts: np.ndarray
    area: np.ndarray
    seg: np.ndarray
    h: np.ndarray
    s: np.ndarray
    v: np.ndarray
    normal: np.ndarray
    on_mat: np.ndarray
    culled_bound: float  # lower bound on h over all dropped segments


def _query(theta, root, skeleton, samples, mat, reach=np.inf):
    """Contact query over the segments whose capsule may come within ``reach`` of the mat.

    The signed distance is 1-Lipschitz, so for a capsule with axis a->b,
    length L and radius r every surface point has h >= (h(a)+h(b)-L)/2 - r.
    """
    rots, pos = global_transforms(theta, root, skeleton)
    local, area = samples
    keep = np.arange(len(local))
    bound = np.inf
    if np.isfinite(reach):
        tip = pos + np.einsum("jab,jb->ja", rots, skeleton.segment_axis)
        ha, hb = mat.signed_distance(pos), mat.signed_distance(tip)
        length = np.linalg.norm(skeleton.segment_axis, axis=1)
        lb = (ha + hb - length) / 2 - skeleton.segment_radius
        sel = lb <= reach
        keep = np.flatnonzero(sel)
        if (~sel).any():
            bound = float(lb[~sel].min()) - CULL_MARGIN
    world = np.matmul(local[keep], rots[keep].transpose(0, 2, 1)) + pos[keep, None, :]
    pts = world.reshape(-1, 3)
    h, s, v, normal, on_mat = mat.query(pts)
    return _Contact(pts, area[keep].reshape(-1), np.repeat(keep, local.shape[1]), h, s, v, normal, on_mat, bound)


def _support_gap(c):
    support = c.on_mat & (c.normal[..., 2] >= SUPPORT_NZ) & (c.h > -0.05)
    if not support.any():
        return None
    return float(np.min(c.h[support] / c.normal[support, 2]))


def _backrest_clearance(c):
    steep = c.on_mat & (c.normal[..., 2] < SUPPORT_NZ) & (c.normal[..., 0] > 0.5) & (c.h > -0.05) & (c.h < 0.25)
    return float(np.min(c.h[steep] / c.normal[steep, 0])) if steep.any() else None


def _near_query(theta, root, skeleton, samples, mat, slack=0.12):
    """Query the segments nearest the mat; fall back to all if culling could matter.

    Vertical gaps h/n_z and horizontal clearances h/n_x are never smaller
    than h, so a dropped segment cannot hold the minimum of either when
    that minimum is below the dropped segments' bound.
    """
    rots, pos = global_transforms(theta, root, skeleton)
    tip = pos + np.einsum("jab,jb->ja", rots, skeleton.segment_axis)
    lb = (mat.signed_distance(pos) + mat.signed_distance(tip) - np.linalg.norm(skeleton.segment_axis, axis=1)) / 2
    lb = lb - skeleton.segment_radius
    c = _query(theta, root, skeleton, samples, mat, reach=max(float(lb.min()), 0.0) + slack)
    gap, clear = _support_gap(c), _backrest_clearance(c)
    worst = min(x for x in (gap, clear, np.inf) if x is not None)
    if gap is None or worst > c.culled_bound:
        c = _query(theta, root, skeleton, samples, mat)
        gap, clear = _support_gap(c), _backrest_clearance(c)
    return c, gap, clear


def settle(pose, skeleton, mat, samples=None, max_iter=200, tol=1e-5):
    """Translate the root along gravity until the body just rests on the mat.

    Joint rotations are untouched. Newton-like steps on the smallest
    vertical gap, safeguarded by bisection when samples enter or leave the
    mat footprint. Raises :class:`SettleError` if the body is not above the
    mat or the descent does not converge.
    """
    samples = samples or contact_samples(skeleton)
    theta = np.asarray(pose.theta, float)
    root = np.array(pose.root_translation, float)
    lo, hi = -np.inf, np.inf  # heights known to penetrate / float
    for it in range(max_iter):
        _, gap, _ = _near_query(theta, root, skeleton, samples, mat)
        if gap is None:
            raise SettleError("no body sample lies above a supporting part of the mat")
        if abs(gap) <= tol:
            return pose if it == 0 else PoseFrame(pose.theta, root)
        if gap > 0:
            hi = min(hi, root[2])
        else:
            lo = max(lo, root[2])
        if hi - lo < 1e-7:
            # gap jumps across a footprint edge: rest at the lowest floating height
            root[2] = hi
            return PoseFrame(pose.theta, root)
        z = root[2] - gap
        if not lo < z < hi:
            z = 0.5 * (lo + hi)
        root[2] = z
    raise SettleError(f"settling did not converge in {max_iter} iterations")


def max_penetration(pose, skeleton, mat, samples=None):
    """Deepest penetration (m, positive) of body samples into the mat."""
    samples = samples or contact_samples(skeleton)
    c = _query(pose.theta, pose.root_translation, skeleton, samples, mat)
    sel = c.on_mat & (c.h > -0.05)
    return float(max(0.0, -c.h[sel].min())) if sel.any() else 0.0


def supported_fraction(skeleton, contacting):
    """Mass fraction of contacting segments plus everything hanging below them."""
    supported = set()
    for j in contacting:
        supported.add(j)
        supported.update(descendants(skeleton, j))
    return float(skeleton.mass_fraction[sorted(supported)].sum()) if supported else 0.0


def _contacts(pose, skeleton, mat, samples=None):
    samples = samples or contact_samples(skeleton)
    c = _query(pose.theta, pose.root_translation, skeleton, samples, mat, reach=CONTACT_THRESHOLD + CULL_MARGIN)
    return c, c.on_mat & (c.h <= CONTACT_THRESHOLD) & (c.h > -0.05)


def contact_segments(pose, skeleton, mat, samples=None):
    """Sorted indices of segments with at least one sample within the contact threshold."""
    c, contact = _contacts(pose, skeleton, mat, samples)
    return np.unique(c.seg[contact])


def render_pressure(pose, skeleton, mat, mass, samples=None, clamp=True):
    """Rasterise contact loads to an 80x28 pressure map in mmHg.

    Samples within the contact threshold of the mat carry load proportional
    to their segment's mass (times sample area); loads are bilinearly
    splatted onto cells and scaled so the total normal force equals the
    supported mass times g.
    """
    c, contact = _contacts(pose, skeleton, mat, samples)
    area, seg, s, v = c.area, c.seg, c.s, c.v
    raster = np.zeros((MAT_ROWS, MAT_COLS))
    if not contact.any():
        return raster
    cseg = seg[contact]
    weight = skeleton.mass_fraction[cseg] * area[contact]
    force = supported_fraction(skeleton, np.unique(cseg)) * mass * GRAVITY
    weight = weight * (force / weight.sum())

    fi = s[contact] / ROW_PITCH - 0.5
    fj = (v[contact] + MAT_WIDTH / 2) / COL_PITCH - 0.5
    i0, j0 = np.floor(fi).astype(int), np.floor(fj).astype(int)
    di, dj = fi - i0, fj - j0
    corners = [(0, 0, (1 - di) * (1 - dj)), (1, 0, di * (1 - dj)), (0, 1, (1 - di) * dj), (1, 1, di * dj)]
    idx_i = np.stack([i0 + a for a, _, _ in corners], 1)
    idx_j = np.stack([j0 + b for _, b, _ in corners], 1)
    wts = np.stack([w for _, _, w in corners], 1)
    inside = (idx_i >= 0) & (idx_i < MAT_ROWS) & (idx_j >= 0) & (idx_j < MAT_COLS)
    wts = np.where(inside, wts, 0.0)
    wts /= wts.sum(1, keepdims=True)
    np.add.at(raster, (idx_i[inside], idx_j[inside]), (wts * weight[:, None])[inside])
    raster = raster / mat.cell_area / PA_PER_MMHG
    return np.clip(raster, 0.0, PRESSURE_MAX) if clamp else raster


def total_force(raster, cell_area=CELL_AREA):
    """Normal force (N) carried by a mmHg raster."""
    return float(np.sum(raster) * PA_PER_MMHG * cell_area)


# ---------------------------------------------------------------------------
# corpus

def place_on_chair(pose, skeleton, mat, back_gap=0.0, samples=None, max_iter=60, tol=1e-5):
    """Seat a pose: slide to the requested backrest clearance, then settle.

    ``back_gap`` is the desired clearance (m) between the body and steep
    (backrest) parts of the mat. Vertical and horizontal corrections are
    alternated from a single contact query per iteration.
    """
    samples = samples or contact_samples(skeleton)
    theta = np.asarray(pose.theta, float)
    root = np.array(pose.root_translation, float)
    for _ in range(max_iter):
        _, gap, clear = _near_query(theta, root, skeleton, samples, mat)
        if gap is None:
            raise SettleError("no body sample lies above a supporting part of the mat")
        shift = clear - back_gap if clear is not None else 0.0
        if abs(gap) <= tol and abs(shift) <= 1e-4:
            break
        root[2] -= gap
        root[0] -= shift
    return settle(PoseFrame(theta, root), skeleton, mat, samples)


@dataclass
class Subject:
    subject_id: str
    mass: float
    height: float


@dataclass
class Motion:
    """A seated motion clip before placement on a chair."""

    subject_id: str
    activity: str
    theta: np.ndarray  # (N, 22, 3)
    back_gap: np.ndarray  # (N,) desired backrest clearance, m
    lateral: np.ndarray | None = None  # (N,) lateral root offset, m
    name: str = ""

    def __len__(self):
        return len(self.theta)


def seat_tilt(mat):
    """Rear-down pitch (rad) of the near-horizontal mat rows."""
    n = mat.row_normals
    flat = n[:, 2] > 0.9
    if not flat.any():
        return 0.0
    # median, so the rounded seat edges do not bias the estimate
    return float(np.median(np.arctan2(-n[flat, 0], n[flat, 2])))


def pitch_root(theta, angle):
    """Pre-rotate the root joint about the lateral axis by ``angle`` (rad)."""
    theta = np.array(theta, float)
    r = rotvec_to_matrix(np.array([0.0, angle, 0.0])) @ rotvec_to_matrix(theta[..., 0, :])
    theta[..., 0, :] = matrix_to_rotvec(r)
    return theta


def simulate_recording(motion, chair, subject, seed, noise=0.01, rate=15, mat=None):
    """Place, settle and render every frame of one motion on one chair."""
    rng = np.random.default_rng(seed)
    skel = make_skeleton(subject.height)
    samples = contact_samples(skel)
    mat = mat or drape_mat(chair)
    lateral = motion.lateral if motion.lateral is not None else np.zeros(len(motion))
    # small per-recording seating offset
    jitter = rng.normal(scale=0.01, size=2)
    thetas, roots, rasters = [], [], []
    seat_z = find_seat(chair)[0]
    prev = None
    thetas_in = pitch_root(motion.theta, -seat_tilt(mat))
    for k in range(len(motion)):
        start = np.array([0.0, mat.lateral_center + lateral[k] + jitter[1], seat_z + 0.35 * subject.height / 1.75])
        if prev is not None:
            # warm start from the previous frame's placement
            start[[0, 2]] = prev[[0, 2]]
        try:
            placed = place_on_chair(PoseFrame(thetas_in[k], start), skel, mat,
                                    back_gap=float(motion.back_gap[k]) + abs(jitter[0]), samples=samples)
        except SettleError as exc:
            log.warning("%s/%s frame %d skipped: %s", chair.chair_id, motion.name, k, exc)
            continue
        raster = render_pressure(placed, skel, mat, subject.mass, samples, clamp=False)
        if noise:
            raster = raster * (1.0 + noise * rng.normal(size=raster.shape))
        prev = np.asarray(placed.root_translation, float)
        rasters.append(np.clip(raster, 0.0, PRESSURE_MAX))
        thetas.append(placed.theta)
        roots.append(placed.root_translation)
    if not thetas:
        raise SettleError(f"every frame of {motion.name} failed to settle on {chair.chair_id}")
    pose = PoseSequence(np.asarray(thetas, np.float32), np.asarray(roots, np.float32), rate,
                        subject.mass, subject.height)
    pressure = PressureSequence(np.asarray(rasters, np.float32), rate, chair.chair_id)
    return Recording(pressure, pose, chair.chair_id, subject.subject_id, motion.activity, True,
                     f"{chair.chair_id}-{motion.name}")


def _simulate_job(args):
    return simulate_recording(*args)


def generate_corpus(motions, chairs, subjects, seed, workers=1, synthetic=True, noise=0.01):
    """Simulate every (motion, chair) pair.

    Each recording draws from its own RNG stream seeded by (seed, index), so
    results do not depend on ``workers``.
    """
    if not motions or not chairs:
        raise ValueError("need at least one motion and one chair")
    by_id = {s.subject_id: s for s in subjects}
    jobs = []
    for ci, chair in enumerate(chairs):
        mat = drape_mat(chair)
        mat._signed_field()
        for mi, motion in enumerate(motions):
            index = ci * len(motions) + mi
            jobs.append((motion, chair, by_id[motion.subject_id], [seed, index], noise, 15, mat))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            recs = list(pool.map(_simulate_job, jobs))
    else:
        recs = [_simulate_job(j) for j in jobs]
    for r in recs:
        r.synthetic = synthetic
    return recs
