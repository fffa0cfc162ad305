"""Simulated participant handing over four blocks.

The hand hovers at a hold point with Ornstein-Uhlenbeck jitter.  A two-state
still/moving process scales the jitter.  Repositions and grasp changes arrive
as Poisson events.  After the robot takes a block the hand leaves for a pickup
delay and returns with the next block, held in a freshly drawn grasp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import HOLDING_CLASSES, GraspClass, Pose
from .scenegen import (
    JOINT_JITTER,
    NUM_SUBJECTS,
    TEMPLATES,
    HandModel,
    Scene,
    block_anchor,
    look_at,
    make_block,
    make_hand,
    random_angles,
    random_palm_rot,
    subject_params,
)

CANONICAL = tuple(sorted(HOLDING_CLASSES))
HOLD_LO = np.array([0.45, -0.15, 0.25])
HOLD_HI = np.array([0.65, 0.25, 0.45])
HOLD_YAW = math.pi
HOLD_YAW_SPREAD = math.radians(30.0)
OU_THETA = 2.0  # 1/s
STILL_CYCLE = 4.0  # mean seconds for one still + moving period
MOVING_GAIN = 3.0  # jitter multiplier while moving
STILL_GAIN = 0.3  # jitter multiplier while still
REPOSITION_TIME = 1.0
PICKUP_DELAY = 2.0
P_CHANGE_ON_FAILURE = 0.5
CAMERA_EYE = (-0.1, 0.0, 0.9)
CAMERA_TARGET = (0.55, 0.05, 0.35)
OUTLIER_MIN_JOINT_DIST = math.radians(15.0)


@dataclass(frozen=True)
class BehaviorProfile:
    name: str
    p_outlier: float
    reposition_rate: float  # per minute
    grasp_change_rate: float  # per minute
    still_fraction: float
    jitter_sigma: float  # m

    def __post_init__(self):
        if min(self.reposition_rate, self.grasp_change_rate, self.jitter_sigma) < 0:
            raise ValueError("rates must be nonnegative")
        if not 0 <= self.p_outlier <= 1 or not 0 < self.still_fraction < 1:
            raise ValueError("p_outlier must lie in [0, 1] and still_fraction in (0, 1)")
        if self.name == "Attentive" and self.p_outlier != 0:
            raise ValueError("the attentive profile never uses outlier grasps")


PROFILES = {
    "Attentive": BehaviorProfile("Attentive", 0.0, 0.5, 0.3, 0.8, 0.002),
    "Freeform": BehaviorProfile("Freeform", 0.23, 1.0, 0.8, 0.7, 0.003),
    "Distracted": BehaviorProfile("Distracted", 0.23, 2.0, 1.5, 0.5, 0.005),
}


def fixed_camera() -> Pose:
    return look_at(CAMERA_EYE, CAMERA_TARGET)


def sample_grasp(profile: BehaviorProfile, rng, exclude: GraspClass | None = None) -> tuple[GraspClass, bool]:
    """(class, is_outlier); outliers carry the ground-truth label Others."""
    if rng.random() < profile.p_outlier:
        return GraspClass.Others, True
    choices = [g for g in CANONICAL if g != exclude] or list(CANONICAL)
    return choices[int(rng.integers(len(choices)))], False


def outlier_hand(rng, subject_id: int = 0) -> tuple[HandModel, np.ndarray]:
    """Random hand whose joints differ from every template by > 15 deg somewhere."""
    scale, mult = subject_params(subject_id)
    while True:
        angles = random_angles(rng)
        if all(np.abs(angles - t.angles).max() > OUTLIER_MIN_JOINT_DIST for t in TEMPLATES.values()):
            break
    hand = HandModel(random_palm_rot(rng), angles, scale, mult)
    return hand, block_anchor("front", hand)


def outlier_scene(rng_state) -> Scene:
    """A block held in a hand pose outside the trained taxonomy, labeled Others."""
    rng = rng_state if isinstance(rng_state, np.random.Generator) else np.random.default_rng(rng_state)
    hand, center = outlier_hand(rng, int(rng.integers(NUM_SUBJECTS)))
    pose = Pose.from_yaw(rng.uniform(HOLD_LO, HOLD_HI), HOLD_YAW + rng.uniform(-HOLD_YAW_SPREAD, HOLD_YAW_SPREAD))
    block = make_block(center, pose, int(rng.integers(4)))
    return Scene(hand, block, GraspClass.Others, fixed_camera(), pose, outlier=True)


@dataclass
class HumanState:
    subject_id: int
    blocks_remaining: int = 4
    grasp: GraspClass = GraspClass.Waiting
    outlier: bool = False
    hand: HandModel | None = None
    block_center: np.ndarray | None = None  # hand frame
    hold: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yaw: float = HOLD_YAW
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    still: bool = True
    present: bool = False
    absent_for: float = 0.0
    move_from: np.ndarray | None = None
    move_left: float = 0.0
    config_version: int = 0
    repositions: int = 0
    grasp_changes: int = 0
    t: float = 0.0

    def __post_init__(self):
        if not 0 <= self.blocks_remaining <= 4:
            raise ValueError("blocks_remaining must lie in [0, 4]")

    @property
    def hand_pose(self) -> Pose:
        pos = self.hold + self.offset
        if self.move_from is not None and self.move_left > 0:
            s = 1.0 - self.move_left / REPOSITION_TIME
            blend = s * s * s * (10 - 15 * s + 6 * s * s)  # minimum-jerk profile
            pos = self.move_from + blend * (self.hold - self.move_from) + self.offset
        return Pose.from_yaw(pos, self.yaw)


def _new_hold(h: HumanState, rng):
    h.hold = rng.uniform(HOLD_LO, HOLD_HI)
    h.yaw = HOLD_YAW + rng.uniform(-HOLD_YAW_SPREAD, HOLD_YAW_SPREAD)


def _new_grasp(h: HumanState, profile: BehaviorProfile, rng, exclude=None):
    h.grasp, h.outlier = sample_grasp(profile, rng, exclude)
    if h.outlier:
        h.hand, h.block_center = outlier_hand(rng, h.subject_id)
    else:
        h.hand, h.block_center = make_hand(h.grasp, h.subject_id, rng, JOINT_JITTER)
    h.config_version += 1


def start(subject_id: int, profile: BehaviorProfile, rng, blocks: int = 4) -> HumanState:
    h = HumanState(subject_id, blocks)
    _new_hold(h, rng)
    _new_grasp(h, profile, rng)
    h.present = True
    return h


def scene_of(h: HumanState, camera: Pose | None = None) -> Scene | None:
    if not h.present or h.hand is None:
        return None
    pose = h.hand_pose
    block = make_block(h.block_center, pose) if h.block_center is not None else None
    return Scene(h.hand, block, h.grasp, camera or fixed_camera(), pose, outlier=h.outlier)


def advance(h: HumanState, profile: BehaviorProfile, dt: float, robot_feedback=(), rng_state=None,
            camera: Pose | None = None):
    """Advance the participant by dt; ``h`` is updated in place and returned.

    ``robot_feedback`` is the list of event kinds the robot emitted last tick.
    Returns (h, true hand pose or None, scene or None).
    """
    if h.blocks_remaining <= 0:
        raise ValueError("no blocks left to hand over")
    rng = rng_state if isinstance(rng_state, np.random.Generator) else np.random.default_rng(rng_state)
    h.t += dt
    feedback = set(robot_feedback)
    if "grasp_success" in feedback and h.present:
        h.blocks_remaining -= 1
        h.present = False
        h.absent_for = PICKUP_DELAY
        h.config_version += 1
        if h.blocks_remaining == 0:
            return h, None, None
    elif feedback & {"grasp_fail", "finger_contact"} and h.present and not h.outlier:
        if rng.random() < P_CHANGE_ON_FAILURE:
            _new_grasp(h, profile, rng, exclude=h.grasp)
            h.grasp_changes += 1
    if not h.present:
        h.absent_for -= dt
        if h.absent_for <= 1e-9:
            _new_hold(h, rng)
            _new_grasp(h, profile, rng)
            h.offset[:] = 0.0
            h.move_from, h.move_left = None, 0.0
            h.present = True
        else:
            return h, None, None

    # still / moving switching with mean durations summing to STILL_CYCLE
    mean = STILL_CYCLE * (profile.still_fraction if h.still else 1 - profile.still_fraction)
    if rng.random() < 1 - math.exp(-dt / mean):
        h.still = not h.still
    sigma = profile.jitter_sigma * (STILL_GAIN if h.still else MOVING_GAIN)
    decay = math.exp(-OU_THETA * dt)
    h.offset = h.offset * decay + rng.normal(0.0, sigma * math.sqrt(1 - decay * decay), 3)

    if h.move_left > 0:
        h.move_left = max(0.0, h.move_left - dt)
    if rng.random() < 1 - math.exp(-profile.reposition_rate / 60.0 * dt):
        h.move_from = h.hand_pose.position - h.offset
        h.move_left = REPOSITION_TIME
        _new_hold(h, rng)
        h.repositions += 1
    if rng.random() < 1 - math.exp(-profile.grasp_change_rate / 60.0 * dt):
        _new_grasp(h, profile, rng, exclude=h.grasp)
        h.grasp_changes += 1
    pose = h.hand_pose
    return h, pose, scene_of(h, camera)
