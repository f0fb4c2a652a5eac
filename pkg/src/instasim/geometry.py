"""SE(2) anchor frames, relative poses, and angle utilities.

Every instance in a scene (agent or map element) carries an anchor pose: the
origin and heading of its local coordinate frame expressed in an arbitrary
global frame.  Spatial relationships between instances are described by
relative poses between their anchor frames, which makes all downstream
encodings independent of the global frame.

All geometry here is computed in float64; angles are kept normalized to
(-pi, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

# Below this separation two anchors are treated as coincident and the
# azimuth is defined to be 0.
COINCIDENT_EPS = 1e-9


def normalize_angle(x: float) -> float:
    """Wrap an angle (radians) into (-pi, pi]."""
    if not math.isfinite(x):
        raise ValueError(f"angle must be finite, got {x!r}")
    r = math.fmod(x, TWO_PI)
    if r <= -math.pi:
        r += TWO_PI
    elif r > math.pi:
        r -= TWO_PI
    return r


def normalize_angle_array(x: np.ndarray) -> np.ndarray:
    """Vectorized :func:`normalize_angle`."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("angles must be finite")
    r = np.fmod(x, TWO_PI)
    r = np.where(r <= -math.pi, r + TWO_PI, r)
    r = np.where(r > math.pi, r - TWO_PI, r)
    return r


@dataclass(frozen=True)
class AnchorPose:
    """Origin and heading of a local frame in the global frame."""

    x: float
    y: float
    heading: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("anchor position must be finite")
        object.__setattr__(self, "heading", normalize_angle(self.heading))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)

    def to_local(self, points: np.ndarray) -> np.ndarray:
        """Express global (..., 2) points in this frame."""
        pts = np.asarray(points, dtype=np.float64) - self.position
        c, s = math.cos(self.heading), math.sin(self.heading)
        # R(-heading) @ pts
        return np.stack([c * pts[..., 0] + s * pts[..., 1],
                         -s * pts[..., 0] + c * pts[..., 1]], axis=-1)

    def to_global(self, points: np.ndarray) -> np.ndarray:
        """Express local (..., 2) points in the global frame."""
        pts = np.asarray(points, dtype=np.float64)
        c, s = math.cos(self.heading), math.sin(self.heading)
        return np.stack([c * pts[..., 0] - s * pts[..., 1] + self.x,
                         s * pts[..., 0] + c * pts[..., 1] + self.y], axis=-1)


@dataclass(frozen=True)
class RelPose:
    """Relative pose of one anchor seen from another.

    Angles are stored as unit-circle embeddings (cos, sin) of the heading
    difference and of the azimuth of the target in the source frame.
    """

    dheading_cos: float
    dheading_sin: float
    azimuth_cos: float
    azimuth_sin: float
    distance: float

    def as_array(self) -> np.ndarray:
        return np.array([self.dheading_cos, self.dheading_sin,
                         self.azimuth_cos, self.azimuth_sin,
                         self.distance], dtype=np.float64)


def relative_pose(src: AnchorPose, dst: AnchorPose) -> RelPose:
    """Relative pose of ``dst`` expressed in the frame of ``src``.

    The azimuth is the angle of the displacement vector measured against the
    x-axis of the source frame.  When the anchors coincide the azimuth is 0
    by convention.
    """
    dheading = normalize_angle(dst.heading - src.heading)
    dx = dst.x - src.x
    dy = dst.y - src.y
    dist = math.hypot(dx, dy)
    if dist < COINCIDENT_EPS:
        azimuth = 0.0
    else:
        azimuth = normalize_angle(math.atan2(dy, dx) - src.heading)
    return RelPose(math.cos(dheading), math.sin(dheading),
                   math.cos(azimuth), math.sin(azimuth), dist)


def relative_pose_fields(src: AnchorPose, dst: AnchorPose) -> tuple[float, float, float]:
    """(dheading, azimuth, distance) form of :func:`relative_pose`."""
    dheading = normalize_angle(dst.heading - src.heading)
    dx = dst.x - src.x
    dy = dst.y - src.y
    dist = math.hypot(dx, dy)
    azimuth = 0.0 if dist < COINCIDENT_EPS else normalize_angle(math.atan2(dy, dx) - src.heading)
    return dheading, azimuth, dist


def relative_pose_batch(src_pose: np.ndarray, dst_poses: np.ndarray) -> np.ndarray:
    """Relative poses of many anchors in the frame of one source anchor.

    Args:
        src_pose: (3,) array (x, y, heading).
        dst_poses: (N, 3) array of target anchors.

    Returns:
        (N, 5) float64 array of (cos dh, sin dh, cos az, sin az, distance).
    """
    dst_poses = np.asarray(dst_poses, dtype=np.float64)
    dh = dst_poses[:, 2] - src_pose[2]
    delta = dst_poses[:, :2] - src_pose[:2]
    dist = np.hypot(delta[:, 0], delta[:, 1])
    az = np.arctan2(delta[:, 1], delta[:, 0]) - src_pose[2]
    az = np.where(dist < COINCIDENT_EPS, 0.0, az)
    out = np.empty((len(dst_poses), 5), dtype=np.float64)
    out[:, 0] = np.cos(dh)
    out[:, 1] = np.sin(dh)
    out[:, 2] = np.cos(az)
    out[:, 3] = np.sin(az)
    out[:, 4] = dist
    return out


def apply_rigid_transform(pose: AnchorPose, transform: AnchorPose) -> AnchorPose:
    """Apply an SE(2) transform (given as a pose) to another pose."""
    c, s = math.cos(transform.heading), math.sin(transform.heading)
    return AnchorPose(
        x=c * pose.x - s * pose.y + transform.x,
        y=s * pose.x + c * pose.y + transform.y,
        heading=normalize_angle(pose.heading + transform.heading),
    )


def transform_points(points: np.ndarray, transform: AnchorPose) -> np.ndarray:
    """Apply an SE(2) transform to global (..., 2) points."""
    return transform.to_global(points)


# -- oriented rectangles --------------------------------------------------------

def rect_corners(pose: tuple[float, float, float],
                 size: tuple[float, float]) -> np.ndarray:
    """Corners of an oriented rectangle centered at pose=(x, y, heading).

    ``size`` is (length, width): length along the heading axis.
    """
    x, y, heading = pose
    hl, hw = size[0] / 2.0, size[1] / 2.0
    c, s = math.cos(heading), math.sin(heading)
    local = np.array([[hl, hw], [hl, -hw], [-hl, -hw], [-hl, hw]])
    return np.stack([x + local[:, 0] * c - local[:, 1] * s,
                     y + local[:, 0] * s + local[:, 1] * c], axis=1)


def rects_overlap(pose_a: tuple[float, float, float], size_a: tuple[float, float],
                  pose_b: tuple[float, float, float], size_b: tuple[float, float]) -> bool:
    """Separating-axis overlap test for two oriented rectangles.

    Touching rectangles (zero separation) count as overlapping.
    """
    # broad phase: bounding circles
    r_a = 0.5 * math.hypot(*size_a)
    r_b = 0.5 * math.hypot(*size_b)
    if math.hypot(pose_b[0] - pose_a[0], pose_b[1] - pose_a[1]) > r_a + r_b:
        return False
    ca = rect_corners(pose_a, size_a)
    cb = rect_corners(pose_b, size_b)
    for heading in (pose_a[2], pose_b[2]):
        c, s = math.cos(heading), math.sin(heading)
        for axis in ((c, s), (-s, c)):
            pa = ca @ axis
            pb = cb @ axis
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True
