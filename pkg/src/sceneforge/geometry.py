"""Geometric primitives: poses, yaw-only oriented boxes, convex hulls.

Collision checking uses the separating-axis test on yaw-only oriented boxes:
boxes share the world z axis, so the test reduces to a z-interval overlap
plus a 2D SAT over the four horizontal face normals. A pair counts as
colliding only when the penetration depth exceeds ``PENETRATION_TOL``
(0.5 mm), so resting contact is not a collision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull as _SciHull
from scipy.spatial import QhullError

from .errors import PreconditionError

# Normative tolerances, in meters.
CONTACT_TOL = 0.002        # vertical contact for "on" / "in"
WALL_THICKNESS = 0.005     # container wall shrink for "in"
ADJACENT_GAP_MAX = 0.050   # maximum horizontal gap for "adjacent"
ALIGNED_TOL = 0.005        # default center alignment tolerance
PENETRATION_TOL = 0.0005   # allowed interpenetration depth
QUAT_NORM_TOL = 1e-9


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = float(np.linalg.norm(q))
    if n == 0.0 or not np.isfinite(n):
        raise PreconditionError("quaternion has zero or non-finite norm")
    return q / n


def quat_from_yaw(yaw: float) -> np.ndarray:
    h = 0.5 * yaw
    return np.array([math.cos(h), 0.0, 0.0, math.sin(h)])


def quat_from_rpy(roll: float, pitch: float, yaw: float) -> np.ndarray:
    cr, sr = math.cos(roll / 2), math.sin(roll / 2)
    cp, sp = math.cos(pitch / 2), math.sin(pitch / 2)
    cy, sy = math.cos(yaw / 2), math.sin(yaw / 2)
    return np.array([
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    ])


def quat_multiply(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([w, -x, -y, -z])


def quat_rotate(q, v) -> np.ndarray:
    """Rotate vector v by unit quaternion q."""
    w, x, y, z = q
    u = np.array([x, y, z])
    v = np.asarray(v, dtype=float)
    return v + 2.0 * np.cross(u, np.cross(u, v) + w * v)


def quat_yaw(q) -> float:
    """Yaw (z rotation) component of q."""
    w, x, y, z = q
    return math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))


def quat_pitch(q) -> float:
    w, x, y, z = q
    s = 2.0 * (w * y - z * x)
    s = max(-1.0, min(1.0, s))
    return math.asin(s)


@dataclass(frozen=True)
class Pose:
    """Rigid pose: position in meters, orientation as a wxyz unit quaternion."""

    position: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        object.__setattr__(self, "orientation", np.asarray(self.orientation, dtype=float).reshape(4))

    def validate(self) -> None:
        if not np.all(np.isfinite(self.position)) or not np.all(np.isfinite(self.orientation)):
            raise PreconditionError("pose has non-finite components")
        if abs(float(np.linalg.norm(self.orientation)) - 1.0) > QUAT_NORM_TOL:
            raise PreconditionError("orientation quaternion is not unit length")

    @property
    def yaw(self) -> float:
        return quat_yaw(self.orientation)

    def to_dict(self) -> dict:
        return {
            "position": [float(v) for v in self.position],
            "orientation": [float(v) for v in self.orientation],
        }

    @staticmethod
    def from_dict(d: dict) -> "Pose":
        return Pose(np.asarray(d["position"], dtype=float), np.asarray(d["orientation"], dtype=float))

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.zeros(3))


@dataclass(frozen=True)
class GraspAnnotation:
    """Pre-labeled end-effector pose relative to an asset enabling a stable grasp."""

    pose: Pose                  # EE pose in the asset frame
    approach_axis: np.ndarray   # unit vector in the asset frame
    width: float                # grip opening in meters
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "approach_axis", np.asarray(self.approach_axis, dtype=float).reshape(3))

    def validate(self) -> None:
        if abs(float(np.linalg.norm(self.approach_axis)) - 1.0) > 1e-6:
            raise PreconditionError("grasp approach axis must be a unit vector")
        if not self.width > 0:
            raise PreconditionError("grasp width must be positive")

    def to_dict(self) -> dict:
        return {
            "pose": self.pose.to_dict(),
            "approach_axis": [float(v) for v in self.approach_axis],
            "width": float(self.width),
            "label": self.label,
        }

    @staticmethod
    def from_dict(d: dict) -> "GraspAnnotation":
        return GraspAnnotation(
            pose=Pose.from_dict(d["pose"]),
            approach_axis=np.asarray(d["approach_axis"], dtype=float),
            width=float(d["width"]),
            label=str(d.get("label", "")),
        )


@dataclass(frozen=True)
class OrientedBox:
    """Axis-up box: center, full extents, yaw about world z."""

    center: np.ndarray
    extents: np.ndarray
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        object.__setattr__(self, "extents", np.asarray(self.extents, dtype=float).reshape(3))

    @property
    def top(self) -> float:
        return float(self.center[2] + self.extents[2] / 2.0)

    @property
    def bottom(self) -> float:
        return float(self.center[2] - self.extents[2] / 2.0)

    def footprint_corners(self) -> np.ndarray:
        """(4, 2) world xy corners of the horizontal footprint."""
        hx, hy = self.extents[0] / 2.0, self.extents[1] / 2.0
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        local = np.array([[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + self.center[:2]

    def footprint_aabb(self) -> tuple[np.ndarray, np.ndarray]:
        corners = self.footprint_corners()
        return corners.min(axis=0), corners.max(axis=0)

    def contains_xy(self, point_xy, slack: float = 0.0) -> bool:
        """Is the world point inside the yaw-rotated footprint rectangle."""
        d = np.asarray(point_xy, dtype=float) - self.center[:2]
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        local = np.array([c * d[0] + s * d[1], -s * d[0] + c * d[1]])
        return bool(
            abs(local[0]) <= self.extents[0] / 2.0 + slack
            and abs(local[1]) <= self.extents[1] / 2.0 + slack
        )


def _axis_overlap(corners_a: np.ndarray, corners_b: np.ndarray, axis: np.ndarray) -> float:
    pa = corners_a @ axis
    pb = corners_b @ axis
    return float(min(pa.max(), pb.max()) - max(pa.min(), pb.min()))


def penetration_depth(a: OrientedBox, b: OrientedBox) -> float:
    """Minimum overlap across all separating axes; <= 0 means disjoint."""
    z_overlap = min(a.top, b.top) - max(a.bottom, b.bottom)
    if z_overlap <= 0.0:
        return z_overlap
    ca, cb = a.footprint_corners(), b.footprint_corners()
    best = z_overlap
    for yaw in (a.yaw, b.yaw):
        c, s = math.cos(yaw), math.sin(yaw)
        for axis in (np.array([c, s]), np.array([-s, c])):
            ov = _axis_overlap(ca, cb, axis)
            if ov <= 0.0:
                return ov
            best = min(best, ov)
    return best


def boxes_collide(a: OrientedBox, b: OrientedBox, tol: float = PENETRATION_TOL) -> bool:
    return penetration_depth(a, b) > tol


def footprint_gap(a: OrientedBox, b: OrientedBox) -> float:
    """Euclidean separation between the footprint AABBs (0 when touching/overlapping)."""
    amin, amax = a.footprint_aabb()
    bmin, bmax = b.footprint_aabb()
    dx = max(0.0, max(bmin[0] - amax[0], amin[0] - bmax[0]))
    dy = max(0.0, max(bmin[1] - amax[1], amin[1] - bmax[1]))
    return math.hypot(dx, dy)


def footprints_overlap(a: OrientedBox, b: OrientedBox) -> bool:
    """Do the footprint AABBs overlap with positive area."""
    amin, amax = a.footprint_aabb()
    bmin, bmax = b.footprint_aabb()
    return bool(amin[0] < bmax[0] and bmin[0] < amax[0] and amin[1] < bmax[1] and bmin[1] < amax[1])


def point_box_distance(point, box: OrientedBox) -> float:
    """Distance from a world point to the box surface (0 inside)."""
    p = np.asarray(point, dtype=float) - box.center
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    local = np.array([c * p[0] + s * p[1], -s * p[0] + c * p[1], p[2]])
    d = np.abs(local) - box.extents / 2.0
    outside = np.maximum(d, 0.0)
    return float(np.linalg.norm(outside))


# --- Convex hulls -----------------------------------------------------------

class HullError(PreconditionError):
    """The vertex set does not span a 3D convex body."""


def hull_vertices(points: np.ndarray) -> np.ndarray:
    """Vertices of the convex hull of the given points, in qhull order."""
    points = np.asarray(points, dtype=float)
    try:
        hull = _SciHull(points)
    except QhullError as exc:
        raise HullError(f"degenerate hull: {exc}") from exc
    return points[hull.vertices]


def hull_volume(points: np.ndarray) -> float:
    try:
        return float(_SciHull(np.asarray(points, dtype=float)).volume)
    except QhullError as exc:
        raise HullError(f"degenerate hull: {exc}") from exc


def hull_contains(points: np.ndarray, query, slack: float = 1e-9) -> bool:
    """Is the query point inside the convex hull of points (within slack)."""
    try:
        hull = _SciHull(np.asarray(points, dtype=float))
    except QhullError as exc:
        raise HullError(f"degenerate hull: {exc}") from exc
    q = np.append(np.asarray(query, dtype=float), 1.0)
    return bool(np.all(hull.equations @ q <= slack))


def aabb_of(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    points = np.asarray(points, dtype=float)
    return points.min(axis=0), points.max(axis=0)


def aabb_corners(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    xs = [lo[0], hi[0]]
    ys = [lo[1], hi[1]]
    zs = [lo[2], hi[2]]
    return np.array([[x, y, z] for x in xs for y in ys for z in zs])


def simplify_hull(vertices: np.ndarray, target_vertices: int) -> np.ndarray:
    """Reduce a hull to at most ``target_vertices``, never cutting volume.

    Dropping a true hull vertex always removes volume, so any hull over
    budget is replaced by its AABB corners, which contain the original by
    construction. Hulls already within budget pass through unchanged.
    """
    if target_vertices < 8:
        raise PreconditionError("target_vertices must be at least 8")
    vertices = np.asarray(vertices, dtype=float)
    if vertices.ndim != 2 or vertices.shape[1] != 3 or vertices.shape[0] < 4:
        raise HullError("hull needs at least 4 points in 3D")
    true_vertices = hull_vertices(vertices)
    if len(true_vertices) <= target_vertices:
        return true_vertices
    lo, hi = aabb_of(vertices)
    return aabb_corners(lo, hi)
