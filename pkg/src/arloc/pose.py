"""Eye pose, view frustum, and virtual-object visibility.

Headings are degrees clockwise from +z (map north) when viewed from above, so
heading 0 faces +z and heading 90 faces +x. The facing vector is horizontal;
pitch is out of scope. The local frame L has the eye at its origin, the facing
vector as forward, +y as up, and right = forward x up, which for heading 0
coincides with the world axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .mapmodel import _as_point

if TYPE_CHECKING:
    from .mapmodel import ReferencePoint, VirtualObject


@dataclass
class PoseConfig:
    body_height_h: float = 1.6
    max_observe_distance: float = 10.0
    horizontal_fov: float = 60.0
    aspect_ratio: float = 16.0 / 9.0

    def __post_init__(self):
        if min(self.body_height_h, self.max_observe_distance, self.aspect_ratio) <= 0:
            raise ValueError("pose config values must be positive")
        if not 0 < self.horizontal_fov < 180:
            raise ValueError(f"horizontal_fov must be in (0, 180), got {self.horizontal_fov}")


@dataclass(eq=False)
class EyePose:
    eye: np.ndarray
    facing: np.ndarray

    def __post_init__(self):
        self.eye = _as_point(self.eye)
        self.facing = _as_point(self.facing)
        if abs(float(np.linalg.norm(self.facing)) - 1.0) > 1e-9:
            raise ValueError("facing must be a unit vector")
        if abs(self.facing[1]) > 1e-9:
            raise ValueError("facing must be horizontal (f.y = 0)")


@dataclass(eq=False)
class ViewFrustum:
    apex: np.ndarray
    axis: np.ndarray
    half_angle_h: float
    half_angle_v: float
    max_distance: float


@dataclass
class LocalPose:
    """Coordinates of a point in the local frame L, plus bearing and range."""

    forward: float
    right: float
    up: float
    bearing: float
    distance: float


def eye_pose_at(position, heading: float, cfg: PoseConfig) -> EyePose:
    """Eye pose for a body standing at ``position`` facing ``heading`` degrees."""
    if not 0 <= heading < 360:
        raise ValueError(f"heading must be in [0, 360), got {heading}")
    p = _as_point(position)
    theta = math.radians(heading)
    eye = p + np.array([0.0, cfg.body_height_h, 0.0])
    facing = np.array([math.sin(theta), 0.0, math.cos(theta)])
    return EyePose(eye=eye, facing=facing)


def eye_pose(rp: "ReferencePoint", heading: float, cfg: PoseConfig) -> EyePose:
    return eye_pose_at(rp.position, heading, cfg)


def build_frustum(pose: EyePose, cfg: PoseConfig) -> ViewFrustum:
    """View pyramid from the eye: horizontal half-angle from the FOV, vertical from the aspect ratio."""
    half_h = math.radians(cfg.horizontal_fov / 2)
    half_v = math.atan(math.tan(half_h) / cfg.aspect_ratio)
    return ViewFrustum(
        apex=pose.eye.copy(),
        axis=pose.facing.copy(),
        half_angle_h=half_h,
        half_angle_v=half_v,
        max_distance=cfg.max_observe_distance,
    )


def to_local(pose: EyePose, object_position) -> LocalPose:
    """Express a world point in the local frame L centered on the eye.

    right axis r = (f.z, 0, -f.x), so a heading-0 pose maps world +x to +right.
    """
    d = _as_point(object_position) - pose.eye
    f = pose.facing
    r = np.array([f[2], 0.0, -f[0]])
    forward = float(d @ f)
    right = float(d @ r)
    up = float(d[1])
    return LocalPose(
        forward=forward,
        right=right,
        up=up,
        bearing=math.degrees(math.atan2(right, forward)),
        distance=float(np.linalg.norm(d)),
    )


def local_to_world(pose: EyePose, local: LocalPose) -> np.ndarray:
    """Inverse of to_local: world position of a local-frame point."""
    f = pose.facing
    r = np.array([f[2], 0.0, -f[0]])
    return pose.eye + local.forward * f + local.right * r + np.array([0.0, local.up, 0.0])


def is_visible(local: LocalPose, frustum: ViewFrustum) -> bool:
    if local.forward <= 0:
        return False
    if local.distance > frustum.max_distance:
        return False
    if abs(math.atan2(local.right, local.forward)) > frustum.half_angle_h:
        return False
    if abs(math.atan2(local.up, local.forward)) > frustum.half_angle_v:
        return False
    return True


def visible_objects(pose: EyePose, frustum: ViewFrustum,
                    objects: list["VirtualObject"]) -> list[tuple["VirtualObject", LocalPose]]:
    """Objects inside the view pyramid with their local poses, nearest first."""
    hits = []
    for obj in objects:
        lp = to_local(pose, obj.position)
        if is_visible(lp, frustum):
            hits.append((obj, lp))
    hits.sort(key=lambda t: (t[1].distance, t[0].id))
    return hits
