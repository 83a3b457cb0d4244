"""Indoor map model: reference-point grid, subareas, and virtual objects.

Axis convention for the virtual space: x = right, z = forward, y = vertical.
The map origin is the center of the walkable rectangle and doubles as the
origin of the virtual space. Everything here is immutable after construction
or loading and safe to share across workers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .fingerprints import Fingerprint
    from .vision import KeypointSet

DEFAULT_GRID_INTERVAL = 0.5


def _as_point(p) -> np.ndarray:
    a = np.asarray(p, dtype=float)
    if a.shape != (3,):
        raise ValueError(f"expected a 3D point, got shape {a.shape}")
    return a


@dataclass(eq=False)
class ReferencePoint:
    """A surveyed grid position with its stored fingerprints and keypoint sets."""

    id: int
    position: np.ndarray
    fingerprints: list["Fingerprint"] = field(default_factory=list)
    images: list["KeypointSet"] = field(default_factory=list)
    viewpoint_headings: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.position = _as_point(self.position)
        if len(self.images) != len(self.viewpoint_headings):
            raise ValueError(
                f"RP {self.id}: {len(self.images)} images but "
                f"{len(self.viewpoint_headings)} viewpoint headings"
            )


@dataclass(eq=False)
class Subarea:
    """A cluster of reference points represented by one central fingerprint."""

    id: int
    centroid: "Fingerprint"
    member_rp_ids: list[int]

    def __post_init__(self):
        if not self.member_rp_ids:
            raise ValueError(f"subarea {self.id} has no member RPs")


@dataclass(eq=False)
class VirtualObject:
    id: int
    label: str
    position: np.ndarray

    def __post_init__(self):
        self.position = _as_point(self.position)


@dataclass(eq=False)
class IndoorMap:
    """Planar RP grid plus subareas and virtual objects.

    ``interval`` is the grid spacing the map was built with; it is kept on the
    map because downstream consumers (step length, error thresholds) are
    expressed in grid cells.
    """

    width: float
    depth: float
    interval: float
    rps: list[ReferencePoint] = field(default_factory=list)
    subareas: list[Subarea] = field(default_factory=list)
    objects: list[VirtualObject] = field(default_factory=list)
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale_ratio: float = 1.0

    def rp_by_id(self, rp_id: int) -> ReferencePoint:
        for rp in self.rps:
            if rp.id == rp_id:
                return rp
        raise KeyError(f"no RP with id {rp_id}")

    def validate(self) -> None:
        """Check structural invariants; raises ValueError on the first violation."""
        if self.scale_ratio != 1.0:
            raise ValueError(f"scale_ratio must be 1.0, got {self.scale_ratio}")
        ids = [rp.id for rp in self.rps]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate RP ids")
        hx, hz = self.width / 2 + 1e-9, self.depth / 2 + 1e-9
        for rp in self.rps:
            x, y, z = rp.position
            if abs(x) > hx or abs(z) > hz:
                raise ValueError(f"RP {rp.id} at ({x}, {z}) lies outside the map")
            if y != 0.0:
                raise ValueError(f"RP {rp.id} must be at floor level (y=0), got y={y}")
        if self.subareas:
            member_ids = [i for sa in self.subareas for i in sa.member_rp_ids]
            if len(member_ids) != len(set(member_ids)):
                raise ValueError("subareas overlap")
            if set(member_ids) != set(ids):
                raise ValueError("subareas do not cover the RP set")
        obj_ids = [o.id for o in self.objects]
        if len(obj_ids) != len(set(obj_ids)):
            raise ValueError("duplicate virtual object ids")


def make_grid_map(width: float, depth: float, interval: float = DEFAULT_GRID_INTERVAL) -> IndoorMap:
    """Lay reference points on a regular grid centered on the map origin.

    Per axis there are floor(extent / interval) + 1 points at ``interval``
    spacing, so the grid is symmetric about the origin. No fingerprints or
    images are attached yet.
    """
    if width <= 0 or depth <= 0:
        raise ValueError(f"map dimensions must be positive, got {width} x {depth}")
    if not 0 < interval <= min(width, depth):
        raise ValueError(f"interval {interval} not in (0, {min(width, depth)}]")
    # the epsilon guards against 0.8999... / 0.3 style float division
    nx = int(math.floor(width / interval + 1e-9)) + 1
    nz = int(math.floor(depth / interval + 1e-9)) + 1
    rps = []
    for iz in range(nz):
        for ix in range(nx):
            x = (ix - (nx - 1) / 2) * interval
            z = (iz - (nz - 1) / 2) * interval
            rps.append(ReferencePoint(id=len(rps), position=np.array([x, 0.0, z])))
    return IndoorMap(width=width, depth=depth, interval=interval, rps=rps)


def nearest_rp(indoor_map: IndoorMap, p) -> ReferencePoint:
    """Reference point closest to ``p`` on the x/z plane; ties go to the lowest id."""
    if not indoor_map.rps:
        raise ValueError("map has no reference points")
    p = _as_point(p)

    def key(rp: ReferencePoint):
        dx = rp.position[0] - p[0]
        dz = rp.position[2] - p[2]
        return (dx * dx + dz * dz, rp.id)

    return min(indoor_map.rps, key=key)
