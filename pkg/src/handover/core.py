"""Geometry primitives, the grasp taxonomy and canonical robot grasp frames.

World frame: z up, table surface at z = 0.  The *hand frame* is the hand's
yaw-only frame: z up, +x pointing from the human's wrist toward the robot.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

STANDOFF_DIST = 0.12
BLOCK_HALF = 0.025

# gripper body / jaw sweep box: closing axis x, thickness y, approach z
GRIPPER_HALF_EXTENTS = np.array([0.04, 0.01, 0.03])


class HandoverError(Exception):
    """Base class for library errors."""


class NotHoldingObject(HandoverError):
    pass


def vec3(x, y=None, z=None) -> np.ndarray:
    if y is None:
        v = np.asarray(x, dtype=float).reshape(3)
    else:
        v = np.array([x, y, z], dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite vector {v}")
    return v


@dataclass(frozen=True)
class Quat:
    w: float = 1.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __post_init__(self):
        n = math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)
        if not math.isfinite(n) or n == 0.0:
            raise ValueError("quaternion must be finite and nonzero")
        if abs(n - 1.0) > 1e-12:
            object.__setattr__(self, "w", self.w / n)
            object.__setattr__(self, "x", self.x / n)
            object.__setattr__(self, "y", self.y / n)
            object.__setattr__(self, "z", self.z / n)

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "Quat":
        a = np.asarray(axis, dtype=float)
        a = a / np.linalg.norm(a)
        s = math.sin(angle / 2.0)
        return cls(math.cos(angle / 2.0), a[0] * s, a[1] * s, a[2] * s)

    @classmethod
    def from_yaw(cls, yaw: float) -> "Quat":
        return cls(math.cos(yaw / 2.0), 0.0, 0.0, math.sin(yaw / 2.0))

    @classmethod
    def from_matrix(cls, m) -> "Quat":
        m = np.asarray(m, dtype=float)
        tr = m[0, 0] + m[1, 1] + m[2, 2]
        if tr > 0:
            s = math.sqrt(tr + 1.0) * 2
            return cls(0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s)
        if m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
            return cls((m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s)
        if m[1, 1] > m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
            return cls((m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s)
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        return cls((m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s)

    def __mul__(self, o: "Quat") -> "Quat":
        return Quat(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )

    def conj(self) -> "Quat":
        return Quat(self.w, -self.x, -self.y, -self.z)

    def norm(self) -> float:
        return math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])

    def rotate(self, v) -> np.ndarray:
        return self.matrix() @ np.asarray(v, dtype=float)

    def yaw(self) -> float:
        """Heading of the rotated x axis projected on the ground plane."""
        m = self.matrix()
        return math.atan2(m[1, 0], m[0, 0])

    def angle_to(self, o: "Quat") -> float:
        d = abs(self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z)
        return 2.0 * math.acos(min(1.0, d))


@dataclass(frozen=True)
class Pose:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: Quat = field(default_factory=Quat)

    def __post_init__(self):
        object.__setattr__(self, "position", vec3(self.position))

    @classmethod
    def from_yaw(cls, position, yaw: float) -> "Pose":
        return cls(vec3(position), Quat.from_yaw(yaw))

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous transform."""
        m = np.eye(4)
        m[:3, :3] = self.orientation.matrix()
        m[:3, 3] = self.position
        return m

    def apply(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts @ self.orientation.matrix().T + self.position

    def __eq__(self, other):
        return (
            isinstance(other, Pose)
            and np.array_equal(self.position, other.position)
            and self.orientation == other.orientation
        )

    def __hash__(self):
        return hash((tuple(self.position), self.orientation))


IDENTITY = Pose()


def compose(a: Pose, b: Pose) -> Pose:
    """``a ∘ b``: apply ``b`` first, then ``a``."""
    return Pose(a.position + a.orientation.rotate(b.position), a.orientation * b.orientation)


def inverse(p: Pose) -> Pose:
    qi = p.orientation.conj()
    return Pose(-qi.rotate(p.position), qi)


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite values")
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    def __eq__(self, other):
        return isinstance(other, PointCloud) and np.array_equal(self.points, other.points)

    __hash__ = None


def transform_cloud(p: Pose, c: PointCloud) -> PointCloud:
    return PointCloud(p.apply(c.points))


class GraspClass(enum.IntEnum):
    OnOpenPalm = 0
    PinchBottom = 1
    PinchTop = 2
    PinchSide = 3
    Lifting = 4
    Waiting = 5
    Others = 6

    @property
    def holding(self) -> bool:
        return self in HOLDING_CLASSES

    @classmethod
    def parse(cls, label: str) -> "GraspClass":
        return cls[label]


HOLDING_CLASSES = frozenset(
    {GraspClass.OnOpenPalm, GraspClass.PinchBottom, GraspClass.PinchTop, GraspClass.PinchSide, GraspClass.Lifting}
)


def closing_reference(approach) -> np.ndarray:
    """Closing axis at zero roll: horizontal and perpendicular for tilted
    approaches, world +y for (near-)vertical ones."""
    a = np.asarray(approach, dtype=float)
    if abs(a[2]) < 0.999:
        c = np.cross([0.0, 0.0, 1.0], a)
        return c / np.linalg.norm(c)
    ref = np.array([0.0, 1.0, 0.0])
    c = ref - a * (ref @ a)
    return c / np.linalg.norm(c)


def gripper_matrix(approach, roll: float) -> np.ndarray:
    """Rotation with columns (closing, thickness, approach)."""
    a = np.asarray(approach, dtype=float)
    a = a / np.linalg.norm(a)
    c0 = closing_reference(a)
    c = math.cos(roll) * c0 + math.sin(roll) * np.cross(a, c0)
    t = np.cross(a, c)
    return np.column_stack([c, t, a])


def roll_of(m: np.ndarray) -> float:
    a, c = m[:, 2], m[:, 0]
    c0 = closing_reference(a)
    return math.atan2(np.cross(c0, c) @ a, c0 @ c)


@dataclass(frozen=True)
class CanonicalGraspFrame:
    approach_dir: np.ndarray
    gripper_roll: float
    standoff_dist: float = STANDOFF_DIST
    # jaw midpoint displacement from the block center, world frame
    grasp_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        a = vec3(self.approach_dir)
        object.__setattr__(self, "approach_dir", a / np.linalg.norm(a))
        object.__setattr__(self, "grasp_offset", vec3(self.grasp_offset))
        if not self.standoff_dist > 0:
            raise ValueError("standoff_dist must be positive")

    @classmethod
    def from_matrix(cls, m, standoff_dist=STANDOFF_DIST, grasp_offset=(0.0, 0.0, 0.0)):
        return cls(m[:, 2].copy(), roll_of(m), standoff_dist, grasp_offset)

    def matrix(self) -> np.ndarray:
        return gripper_matrix(self.approach_dir, self.gripper_roll)

    def orientation(self) -> Quat:
        return Quat.from_matrix(self.matrix())


def _frame(c, a):
    c, a = np.asarray(c, float), np.asarray(a, float)
    return np.column_stack([c, np.cross(a, c), a])


# Hand-frame canonical grasp frames: (gripper rotation, jaw offset from block center).
# Each keeps the jaws and the approach corridor out of the region the fingers occupy.
CANONICAL_TABLE = {
    # jaws close across the palm axis, fingers lie flat below and ahead of the block
    GraspClass.OnOpenPalm: (_frame([0, 1, 0], [0, 0, -1]), (0.0, 0.0, 0.0)),
    # fingertips sit on the +-x faces near the bottom edge; thickness axis is x
    GraspClass.PinchBottom: (_frame([0, 1, 0], [0, 0, -1]), (0.0, 0.0, 0.0)),
    # fingertips pinch the top edge; approach horizontally from the robot side
    GraspClass.PinchTop: (_frame([0, -1, 0], [-1, 0, 0]), (0.0, 0.0, 0.0)),
    # hand on the -y side, tips on the +-x faces; approach from +y, jaws close vertically
    GraspClass.PinchSide: (_frame([0, 0, 1], [0, -1, 0]), (0.0, 0.0, 0.0)),
    # fingers hooked under the -x bottom edge; top-down, jaws shifted toward +x
    GraspClass.Lifting: (_frame([0, 1, 0], [0, 0, -1]), (0.01, 0.0, 0.0)),
}


def yaw_matrix(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def canonical_frame(g: GraspClass, hand_pose: Pose, standoff_dist: float = STANDOFF_DIST) -> CanonicalGraspFrame:
    """Canonical robot grasp frame for a holding class, turned by the hand's yaw."""
    g = GraspClass(g)
    if g not in CANONICAL_TABLE:
        raise NotHoldingObject(f"{g.name} does not hold an object")
    m, off = CANONICAL_TABLE[g]
    rz = yaw_matrix(hand_pose.orientation.yaw())
    return CanonicalGraspFrame.from_matrix(rz @ m, standoff_dist, rz @ np.asarray(off))
