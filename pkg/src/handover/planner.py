"""RRT-connect for a free-flying gripper with a fixed orientation per query.

The gripper body is an oriented box (closing x thickness x approach).  Obstacles
are capsules (hand, forearm, human body), oriented boxes (block, walls) and the
table half-space z <= 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import (
    GRIPPER_HALF_EXTENTS,
    STANDOFF_DIST,
    CanonicalGraspFrame,
    GraspClass,
    HandoverError,
    Pose,
    canonical_frame,
)

WORKSPACE_LO = np.array([-0.8, -0.8, 0.0])
WORKSPACE_HI = np.array([0.8, 0.8, 1.2])
STEP = 0.03
GOAL_BIAS = 0.1
MAX_ITERS = 5000
CLEARANCE = 0.005
DENSIFY = 0.01
SHORTCUTS = 100

Config = np.ndarray  # gripper position; orientation is fixed per query


class PlanFail(HandoverError):
    pass


class InvalidEndpoint(HandoverError, ValueError):
    pass


class Unreachable(HandoverError):
    pass


@dataclass(frozen=True)
class Box:
    center: np.ndarray
    rot: np.ndarray
    half: np.ndarray

    @classmethod
    def axis_aligned(cls, lo, hi) -> "Box":
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        return cls((lo + hi) / 2, np.eye(3), (hi - lo) / 2)


@dataclass(frozen=True)
class CollisionWorld:
    capsules: np.ndarray = field(default_factory=lambda: np.zeros((0, 7)))  # (a, b, radius)
    boxes: tuple[Box, ...] = ()
    table: bool = True

    def __post_init__(self):
        caps = np.ascontiguousarray(self.capsules, dtype=float).reshape(-1, 7)
        if not np.all(np.isfinite(caps)):
            raise ValueError("non-finite capsule")
        object.__setattr__(self, "capsules", caps)

    def with_capsules(self, caps) -> "CollisionWorld":
        return CollisionWorld(np.vstack([self.capsules, np.reshape(caps, (-1, 7))]), self.boxes, self.table)


BODY_RADIUS = 0.2
BODY_HEIGHT = 1.8
FOREARM_RADIUS = 0.035


def human_capsules(hand_pose: Pose, body_x_offset: float = 0.5) -> np.ndarray:
    """Forearm and torso capsules behind a hand (hand frame -x points at the body)."""
    r = hand_pose.orientation.matrix()
    p = hand_pose.position
    wrist = p + r @ np.array([-0.05, 0.0, 0.0])
    elbow = p + r @ np.array([-0.30, 0.0, -0.08])
    body = p + r @ np.array([-body_x_offset, 0.0, 0.0])
    torso = np.array([[body[0], body[1], 0.0, body[0], body[1], BODY_HEIGHT, BODY_RADIUS]])
    return np.vstack([[*wrist, *elbow, FOREARM_RADIUS], torso])


def world_from_scene(scene, include_block: bool = True, include_human: bool = True) -> CollisionWorld:
    caps = scene.world_capsules()
    if include_human:
        caps = np.vstack([caps, human_capsules(scene.hand_pose)])
    boxes = ()
    if include_block and scene.block is not None:
        b = scene.block
        boxes = (Box(b.pose.position, b.pose.orientation.matrix(), b.half_extents),)
    return CollisionWorld(caps, boxes)


def in_workspace(c) -> bool:
    c = np.asarray(c)
    return bool(np.all(c >= WORKSPACE_LO - 1e-12) and np.all(c <= WORKSPACE_HI + 1e-12))


def collides_many(centers, world: CollisionWorld, rot: np.ndarray, clearance: float = CLEARANCE,
                  half: np.ndarray = GRIPPER_HALF_EXTENTS) -> np.ndarray:
    """Per-center collision flags for the gripper box at ``rot``."""
    centers = np.ascontiguousarray(centers, dtype=float).reshape(-1, 3)
    hit = np.zeros(centers.shape[0], dtype=bool)
    if world.table:
        reach = np.abs(rot[2]) @ half
        hit |= centers[:, 2] - reach < clearance
    if world.capsules.shape[0]:
        d = kernels.segment_box_distance(centers, rot, half, world.capsules[:, 0:3], world.capsules[:, 3:6])
        hit |= (d < world.capsules[None, :, 6] + clearance).any(axis=1)
    for box in world.boxes:
        hit |= _obb_overlap(centers, rot, half, box.center, box.rot, box.half + clearance)
    return hit


def collides(c: Config, world: CollisionWorld, rot: np.ndarray = np.eye(3), clearance: float = CLEARANCE) -> bool:
    return bool(collides_many(np.asarray(c)[None], world, rot, clearance)[0])


def _obb_overlap(centers, ra, ha, cb, rb, hb) -> np.ndarray:
    """Separating-axis test of one box shape at many centers against a fixed box."""
    t = cb[None, :] - centers
    axes = [ra[:, i] for i in range(3)] + [rb[:, i] for i in range(3)]
    for i in range(3):
        for j in range(3):
            ax = np.cross(ra[:, i], rb[:, j])
            n = np.linalg.norm(ax)
            if n > 1e-9:
                axes.append(ax / n)
    sep = np.zeros(centers.shape[0], dtype=bool)
    for ax in axes:
        r = np.abs(ax @ ra) @ ha + np.abs(ax @ rb) @ hb
        sep |= np.abs(t @ ax) > r
    return ~sep


def densify(a, b, step: float = DENSIFY) -> np.ndarray:
    """Points from a to b (inclusive) no more than ``step`` apart."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    n = max(1, int(math.ceil(np.linalg.norm(b - a) / step - 1e-12)))
    s = np.arange(n + 1)[:, None] / n
    return a + s * (b - a)


def densify_path(waypoints, step: float = DENSIFY) -> np.ndarray:
    wp = np.asarray(waypoints, float).reshape(-1, 3)
    if len(wp) == 1:
        return wp.copy()
    parts = [densify(wp[i], wp[i + 1], step)[:-1] for i in range(len(wp) - 1)]
    return np.vstack(parts + [wp[-1:]])


def path_length(waypoints) -> float:
    wp = np.asarray(waypoints, float).reshape(-1, 3)
    return float(np.linalg.norm(np.diff(wp, axis=0), axis=1).sum())


@dataclass(frozen=True)
class Path:
    waypoints: np.ndarray
    total_length: float

    @classmethod
    def of(cls, waypoints) -> "Path":
        wp = np.asarray(waypoints, float).reshape(-1, 3)
        return cls(wp, path_length(wp))

    def __eq__(self, other):
        return isinstance(other, Path) and np.array_equal(self.waypoints, other.waypoints)

    def __hash__(self):
        return hash(self.waypoints.tobytes())


class _Tree:
    def __init__(self, root, cap=256):
        self.nodes = np.empty((cap, 3))
        self.parent = np.empty(cap, dtype=np.int64)
        self.nodes[0] = root
        self.parent[0] = -1
        self.n = 1

    def add(self, q, parent):
        if self.n == len(self.parent):
            self.nodes = np.vstack([self.nodes, np.empty_like(self.nodes)])
            self.parent = np.concatenate([self.parent, np.empty_like(self.parent)])
        self.nodes[self.n] = q
        self.parent[self.n] = parent
        self.n += 1
        return self.n - 1

    def nearest(self, q):
        d = self.nodes[: self.n] - q
        return int(np.argmin((d * d).sum(axis=1)))

    def branch(self, i):
        out = []
        while i >= 0:
            out.append(self.nodes[i])
            i = self.parent[i]
        return out


def _edge_free(a, b, world, rot, clearance) -> bool:
    return not collides_many(densify(a, b), world, rot, clearance).any()


def _steer(tree, q, world, rot, clearance, step):
    """Extend ``tree`` one step toward q: returns (status, new index)."""
    i = tree.nearest(q)
    base = tree.nodes[i]
    d = q - base
    dist = float(np.linalg.norm(d))
    if dist <= step:
        new, status = q, "reached"
    else:
        new, status = base + d * (step / dist), "advanced"
    if not in_workspace(new) or not _edge_free(base, new, world, rot, clearance):
        return "trapped", -1
    return status, tree.add(new, i)


def rrt_connect(start: Config, goal: Config, world: CollisionWorld, rng_state=0, max_iters: int = MAX_ITERS,
                rot: np.ndarray = np.eye(3), clearance: float = CLEARANCE, step: float = STEP,
                goal_bias: float = GOAL_BIAS, shortcuts: int = SHORTCUTS) -> Path:
    start = np.asarray(start, float)
    goal = np.asarray(goal, float)
    for name, c in (("start", start), ("goal", goal)):
        if not in_workspace(c) or collides(c, world, rot, clearance):
            raise InvalidEndpoint(f"{name} configuration {c} is in collision or outside the workspace")
    if np.array_equal(start, goal):
        return Path.of(start[None])
    rng = rng_state if isinstance(rng_state, np.random.Generator) else np.random.default_rng(rng_state)
    ta, tb = _Tree(start), _Tree(goal)
    for _ in range(max_iters):
        if rng.random() < goal_bias:
            q = tb.nodes[0].copy()
        else:
            q = rng.uniform(WORKSPACE_LO, WORKSPACE_HI)
        status, ia = _steer(ta, q, world, rot, clearance, step)
        if status != "trapped":
            qn = ta.nodes[ia]
            while True:
                s2, ib = _steer(tb, qn, world, rot, clearance, step)
                if s2 != "advanced":
                    break
            if s2 == "reached":
                pa, pb = ta.branch(ia), tb.branch(ib)
                if not np.array_equal(ta.nodes[0], start):
                    pa, pb = pb, pa
                wp = np.array(pa[::-1] + pb[1:])
                wp = shortcut(wp, world, rot, clearance, rng, shortcuts)
                dense = densify_path(wp)
                if collides_many(dense, world, rot, clearance).any():
                    raise PlanFail("densified path in collision")
                return Path.of(dense)
        ta, tb = tb, ta
    raise PlanFail(f"no connection after {max_iters} iterations")


def shortcut(wp, world, rot, clearance, rng, attempts: int = SHORTCUTS) -> np.ndarray:
    """Random shortcutting: replace a sub-path by its chord when the chord is free."""
    wp = np.asarray(wp, float)
    for _ in range(attempts):
        if len(wp) < 3:
            break
        i, j = sorted(rng.choice(len(wp), size=2, replace=False))
        if j - i < 2:
            continue
        if _edge_free(wp[i], wp[j], world, rot, clearance):
            wp = np.vstack([wp[: i + 1], wp[j:]])
    return wp


def approach_configs(frame: CanonicalGraspFrame, block_position) -> tuple[Config, Config]:
    """(standoff, grasp) gripper positions for a grasp frame and block position."""
    grasp = np.asarray(block_position, float) + frame.grasp_offset
    standoff = grasp - frame.approach_dir * frame.standoff_dist
    for name, c in (("grasp", grasp), ("standoff", standoff)):
        if not in_workspace(c):
            raise Unreachable(f"{name} configuration {np.round(c, 3)} leaves the workspace")
    return standoff, grasp


def standoff_and_grasp(g: GraspClass, hand_pose: Pose, block_pose: Pose,
                       standoff_dist: float = STANDOFF_DIST) -> tuple[Config, Config]:
    frame = canonical_frame(g, hand_pose, standoff_dist)
    return approach_configs(frame, block_pose.position)


def corridor_world(gap: float = 0.12, thickness: float = 0.02) -> CollisionWorld:
    """Wall across x = 0 with one full-height doorway of width ``gap`` centred on y = 0."""
    lo, hi = WORKSPACE_LO, WORKSPACE_HI
    left = Box.axis_aligned([-thickness / 2, lo[1], lo[2]], [thickness / 2, -gap / 2, hi[2]])
    right = Box.axis_aligned([-thickness / 2, gap / 2, lo[2]], [thickness / 2, hi[1], hi[2]])
    return CollisionWorld(boxes=(left, right))
