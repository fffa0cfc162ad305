"""Handover task state machine.

One :class:`TaskModel` drives a free-flying gripper through a handover:
wait for a still hand, plan to a standoff pose, approach, close, retreat and
place the block in the bin.  It replans when the hand moves or the grasp class
changes and backs off to the standoff when perception stays uncertain.

Every event carries ``exec=<seconds>``: robot motion time since the previous
event.  Summing these over a log gives the total execution time, so all metrics
can be recomputed from the log alone.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels, planner
from .core import (
    GRIPPER_HALF_EXTENTS,
    STANDOFF_DIST,
    CanonicalGraspFrame,
    GraspClass,
    NotHoldingObject,
    Pose,
    Quat,
    canonical_frame,
    gripper_matrix,
)
from .perception import PerceptionOut


class HandoverState(enum.Enum):
    Idle = "Idle"
    HandDetected = "HandDetected"
    WaitStill = "WaitStill"
    PlanApproach = "PlanApproach"
    FollowPlan = "FollowPlan"
    AtStandoff = "AtStandoff"
    Approach = "Approach"
    CloseGripper = "CloseGripper"
    Retreat = "Retreat"
    Place = "Place"
    Done = "Done"
    Backoff = "Backoff"


S = HandoverState
TRANSITIONS: dict[HandoverState, frozenset[HandoverState]] = {
    S.Idle: frozenset({S.Idle, S.HandDetected}),
    S.HandDetected: frozenset({S.WaitStill, S.Idle}),
    S.WaitStill: frozenset({S.WaitStill, S.PlanApproach, S.Idle}),
    S.PlanApproach: frozenset({S.FollowPlan, S.WaitStill}),
    S.FollowPlan: frozenset({S.FollowPlan, S.AtStandoff, S.PlanApproach, S.WaitStill}),
    S.AtStandoff: frozenset({S.AtStandoff, S.Approach, S.PlanApproach, S.WaitStill}),
    S.Approach: frozenset({S.Approach, S.CloseGripper, S.Backoff}),
    S.CloseGripper: frozenset({S.Retreat, S.Backoff}),
    S.Retreat: frozenset({S.Retreat, S.Place}),
    S.Place: frozenset({S.Place, S.Idle, S.Done}),
    S.Backoff: frozenset({S.Backoff, S.PlanApproach, S.WaitStill}),
    S.Done: frozenset({S.Done}),
}

EVENT_KINDS = (
    "hand_detected", "plan_started", "plan_success", "plan_fail", "replan_hand_moved",
    "replan_class_changed", "backoff", "grasp_attempt", "grasp_success", "grasp_fail",
    "finger_contact", "block_placed", "trial_done",
)


class Policy(enum.Enum):
    SimpleBaseline = "SimpleBaseline"
    HandPoseEstimation = "HandPoseEstimation"
    Ours = "Ours"


class Outcome(enum.Enum):
    success = "success"
    fail = "fail"
    finger_contact = "finger_contact"


@dataclass(frozen=True)
class Event:
    t: float
    kind: str
    detail: str = ""

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")

    def field(self, key: str, default: str | None = None) -> str | None:
        for part in self.detail.split(";"):
            k, _, v = part.partition("=")
            if k == key:
                return v
        return default

    @property
    def exec_time(self) -> float:
        return float(self.field("exec", "0"))


@dataclass(frozen=True)
class TaskCfg:
    dt: float = 0.05
    v_max: float = 0.25
    omega_max: float = 1.0
    eps_replan: float = 0.04
    t_u: float = 0.5
    bin_position: tuple[float, float, float] = (0.5, -0.4, 0.05)
    home: tuple[float, float, float] = (0.25, 0.0, 0.55)
    num_blocks: int = 4
    standoff_dist: float = STANDOFF_DIST
    pos_tol: float = 0.015
    angle_tol: float = math.radians(25.0)
    plan_retry_delay: float = 0.5
    # gripper clears the bin by this much when dropping
    drop_height: float = 0.1

    def __post_init__(self):
        if self.dt <= 0 or self.v_max <= 0 or self.omega_max <= 0 or self.num_blocks < 1:
            raise ValueError(f"invalid task config {self}")


@dataclass(frozen=True)
class WorldView:
    """What the robot knows at a tick, plus the ground truth used to score grasps."""

    t: float
    hand_pose: Pose  # tracked, yaw only
    hand_orientation: Quat  # tracked full palm orientation (noisy), for the pose-estimation baseline
    block_position: np.ndarray  # estimated
    scene: object  # true scene: collision geometry and grasp scoring only
    human_still: bool = True


TOP_DOWN = gripper_matrix([0.0, 0.0, -1.0], math.pi / 2)  # jaws close along world x


def policy_grasp_direction(policy: Policy, perception: PerceptionOut, noisy_hand_pose: Pose,
                           hand_orientation: Quat | None = None,
                           standoff_dist: float = STANDOFF_DIST) -> CanonicalGraspFrame:
    """Grasp frame chosen by a policy for the current perception."""
    if not perception.object_present:
        raise NotHoldingObject(f"{perception.filtered_class.name} does not hold an object")
    if policy is Policy.SimpleBaseline:
        return CanonicalGraspFrame.from_matrix(TOP_DOWN, standoff_dist)
    if policy is Policy.HandPoseEstimation:
        q = hand_orientation if hand_orientation is not None else noisy_hand_pose.orientation
        normal = q.rotate(np.array([0.0, 0.0, 1.0]))
        return CanonicalGraspFrame.from_matrix(gripper_matrix(-normal, 0.0), standoff_dist)
    return canonical_frame(perception.filtered_class, noisy_hand_pose, standoff_dist)


def _sweep_centers(start, end, step: float = 0.005) -> np.ndarray:
    if start is None:
        return np.asarray(end, float)[None]
    return planner.densify(start, end, step)


def grasp_outcome(scene, gripper, rot: np.ndarray, approach_start=None, pos_tol: float = 0.015,
                  angle_tol: float = math.radians(25.0)) -> Outcome:
    """Score a gripper close against the true scene.

    The jaw sweep is the gripper box carried from ``approach_start`` to
    ``gripper`` (or just the box at ``gripper``).  Any finger capsule inside it is
    a finger contact (the palm is not: an open palm under the block is always
    inside the jaw depth); otherwise the block center must sit within ``pos_tol`` of
    the jaw midpoint with the approach axis within ``angle_tol`` of a face normal.
    """
    caps = scene.world_finger_capsules()
    centers = _sweep_centers(approach_start, gripper)
    d = kernels.segment_box_distance(centers, rot, GRIPPER_HALF_EXTENTS, caps[:, 0:3], caps[:, 3:6])
    if (d < caps[None, :, 6]).any():
        return Outcome.finger_contact
    block = scene.block
    if block is None:
        return Outcome.fail
    if np.linalg.norm(block.pose.position - np.asarray(gripper)) > pos_tol:
        return Outcome.fail
    a = rot[:, 2]
    cosang = np.abs(block.pose.orientation.matrix().T @ a).max()
    if math.acos(min(1.0, float(cosang))) > angle_tol:
        return Outcome.fail
    return Outcome.success


def _rotation_angle(r1: np.ndarray, r2: np.ndarray) -> float:
    c = (np.trace(r1.T @ r2) - 1.0) / 2.0
    return math.acos(max(-1.0, min(1.0, c)))


@dataclass
class RobotState:
    position: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: TOP_DOWN.copy())
    holding: bool = False
    placed: int = 0


@dataclass
class _Motion:
    """Straight or polyline move with a fixed duration."""

    points: np.ndarray
    duration: float
    elapsed: float = 0.0

    @classmethod
    def make(cls, points, v_max, rot_angle=0.0, omega_max=1.0) -> "_Motion":
        pts = np.asarray(points, float).reshape(-1, 3)
        length = planner.path_length(pts)
        return cls(pts, max(length / v_max, rot_angle / omega_max))

    def advance(self, dt: float) -> tuple[np.ndarray, float, bool]:
        """Move for up to dt; returns (position, time spent moving, finished)."""
        spent = min(dt, self.duration - self.elapsed)
        self.elapsed += spent
        done = self.elapsed >= self.duration - 1e-12
        return self.at(1.0 if done else self.elapsed / self.duration), spent, done

    def at(self, frac: float) -> np.ndarray:
        pts = self.points
        if len(pts) == 1:
            return pts[0].copy()
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        s = frac * cum[-1]
        i = int(np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1))
        u = 0.0 if seg[i] == 0 else (s - cum[i]) / seg[i]
        return pts[i] + min(max(u, 0.0), 1.0) * (pts[i + 1] - pts[i])


class IllegalTransition(RuntimeError):
    pass


class TaskModel:
    """Single-owner handover controller; call :meth:`tick` every ``cfg.dt`` seconds."""

    def __init__(self, policy: Policy, cfg: TaskCfg = TaskCfg(), seed=0):
        self.policy = Policy(policy)
        self.cfg = cfg
        self.state = S.Idle
        self.robot = RobotState(np.array(cfg.home, float))
        self.rng = np.random.default_rng(seed)
        self.log: list[Event] = []
        self._exec = 0.0
        self._motion: _Motion | None = None
        self._frame: CanonicalGraspFrame | None = None
        self._standoff = None
        self._plan_hand = None
        self._plan_class = None
        self._uncertain_since = None
        self._retry_at = -math.inf
        self._approach_start = None
        self.transitions: list[tuple[HandoverState, HandoverState]] = []

    # -- helpers -----------------------------------------------------------

    def _emit(self, t: float, kind: str, **detail) -> Event:
        parts = [f"exec={self._exec:.4f}"] + [f"{k}={v}" for k, v in detail.items()]
        ev = Event(round(t, 6), kind, ";".join(parts))
        self._exec = 0.0
        self.log.append(ev)
        return ev

    def _go(self, new: HandoverState):
        if new not in TRANSITIONS[self.state]:
            raise IllegalTransition(f"{self.state.name} -> {new.name}")
        self.transitions.append((self.state, new))
        self.state = new

    def _move(self) -> bool:
        pos, spent, done = self._motion.advance(self.cfg.dt)
        self.robot.position = pos
        self._exec += spent
        return done

    def _world(self, view: WorldView) -> planner.CollisionWorld:
        return planner.world_from_scene(view.scene)

    def _replan_reason(self, perc: PerceptionOut, view: WorldView) -> str | None:
        if np.linalg.norm(view.hand_pose.position - self._plan_hand) > self.cfg.eps_replan:
            return "replan_hand_moved"
        if (
            self.policy is Policy.Ours
            and perc.object_present
            and perc.filtered_class != self._plan_class
        ):
            return "replan_class_changed"
        return None

    # -- main step ---------------------------------------------------------

    def tick(self, perc: PerceptionOut, view: WorldView) -> tuple[HandoverState, list[Event]]:
        n0 = len(self.log)
        t = view.t
        st = self.state
        cfg = self.cfg

        if st is S.Idle:
            if perc.object_present:
                self._emit(t, "hand_detected", cls=perc.filtered_class.name)
                self._go(S.HandDetected)
        elif st is S.HandDetected:
            self._go(S.WaitStill if perc.object_present else S.Idle)
        elif st is S.WaitStill:
            if not perc.object_present:
                self._go(S.Idle)
            elif perc.hand_still and not perc.uncertain and t >= self._retry_at:
                self._go(S.PlanApproach)
                self._plan(perc, view)
        elif st in (S.FollowPlan, S.AtStandoff):
            reason = self._replan_reason(perc, view)
            if not perc.object_present:
                self._motion = None
                self._go(S.WaitStill)
            elif reason is not None:
                self._emit(t, reason, cls=perc.filtered_class.name)
                self._go(S.PlanApproach)
                self._plan(perc, view)
            elif st is S.FollowPlan:
                if self._move():
                    self.robot.position = self._standoff.copy()
                    self._emit(t, "plan_success")
                    self._go(S.AtStandoff)
            elif perc.hand_still and not perc.uncertain:
                grasp = np.asarray(view.block_position) + self._frame.grasp_offset
                self._approach_start = self.robot.position.copy()
                self._motion = _Motion.make([self.robot.position, grasp], cfg.v_max)
                self._uncertain_since = None
                self._go(S.Approach)
        elif st is S.Approach:
            if perc.uncertain:
                self._uncertain_since = t if self._uncertain_since is None else self._uncertain_since
            else:
                self._uncertain_since = None
            if self._uncertain_since is not None and t - self._uncertain_since > cfg.t_u:
                self._start_backoff()
            elif self._move():
                self._go(S.CloseGripper)
        elif st is S.CloseGripper:
            self._emit(t, "grasp_attempt")
            out = grasp_outcome(view.scene, self.robot.position, self.robot.rotation, self._approach_start,
                                cfg.pos_tol, cfg.angle_tol)
            if out is Outcome.success and not view.human_still:
                out = Outcome.fail
            if out is Outcome.success:
                self._emit(t, "grasp_success")
                self.robot.holding = True
                self._motion = _Motion.make([self.robot.position, self._standoff], cfg.v_max)
                self._go(S.Retreat)
            else:
                self._emit(t, out.value if out is Outcome.finger_contact else "grasp_fail")
                self._start_backoff()
        elif st is S.Retreat:
            if self._move():
                target = np.array(cfg.bin_position) + np.array([0.0, 0.0, cfg.drop_height])
                self._motion = _Motion.make([self.robot.position, target], cfg.v_max)
                self._go(S.Place)
        elif st is S.Place:
            if self._move():
                self.robot.holding = False
                self.robot.placed += 1
                self._emit(t, "block_placed", n=self.robot.placed)
                if self.robot.placed >= cfg.num_blocks:
                    self._emit(t, "trial_done", blocks=self.robot.placed)
                    self._go(S.Done)
                else:
                    self._go(S.Idle)
        elif st is S.Backoff:
            if self._move():
                self._emit(t, "backoff")
                if perc.object_present and not perc.uncertain:
                    self._go(S.PlanApproach)
                    self._plan(perc, view)
                else:
                    self._go(S.WaitStill)
        return self.state, self.log[n0:]

    def abort(self, t: float, reason: str) -> Event:
        """Close the log of a trial cut short by the harness."""
        return self._emit(t, "trial_done", blocks=self.robot.placed, reason=reason)

    def _start_backoff(self):
        self._motion = _Motion.make([self.robot.position, self._standoff], self.cfg.v_max)
        self._go(S.Backoff)

    def _plan(self, perc: PerceptionOut, view: WorldView):
        """PlanApproach: choose a frame, plan to its standoff, start following."""
        t = view.t
        cfg = self.cfg
        self._emit(t, "plan_started", cls=perc.filtered_class.name)
        if view.scene is None or view.block_position is None:
            self._emit(t, "plan_fail", reason="NoHand")
            self._retry_at = t + cfg.plan_retry_delay
            self._go(S.WaitStill)
            return
        try:
            frame = policy_grasp_direction(self.policy, perc, view.hand_pose, view.hand_orientation, cfg.standoff_dist)
            standoff, _ = planner.approach_configs(frame, view.block_position)
            rot = frame.matrix()
            path = planner.rrt_connect(self.robot.position, standoff, self._world(view), self.rng, rot=rot)
        except (NotHoldingObject, planner.Unreachable, planner.PlanFail, planner.InvalidEndpoint) as e:
            self._emit(t, "plan_fail", reason=type(e).__name__)
            self._retry_at = t + cfg.plan_retry_delay
            self._go(S.WaitStill)
            return
        angle = _rotation_angle(self.robot.rotation, rot)
        self.robot.rotation = rot
        self._frame = frame
        self._standoff = standoff
        self._plan_hand = np.asarray(view.hand_pose.position, float).copy()
        self._plan_class = perc.filtered_class
        self._motion = _Motion.make(path.waypoints, cfg.v_max, angle, cfg.omega_max)
        self._go(S.FollowPlan)


# ---------------------------------------------------------------------------
# event log CSV


def events_to_csv(events) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "kind", "detail"])
    for e in events:
        w.writerow([f"{e.t:.3f}", e.kind, e.detail])
    return buf.getvalue()


def events_from_csv(text: str) -> list[Event]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["t", "kind", "detail"]:
        raise ValueError("not an event log")
    return [Event(float(t), kind, detail) for t, kind, detail in rows[1:]]


def well_formed(events) -> bool:
    """Known kinds, nondecreasing times, and exec fields present and nonnegative."""
    last = -math.inf
    for e in events:
        if e.kind not in EVENT_KINDS or e.t < last:
            return False
        ex = e.field("exec")
        if ex is None or float(ex) < 0:
            return False
        last = e.t
    return True
