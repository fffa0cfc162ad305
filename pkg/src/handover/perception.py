"""Per-frame grasp classification stream with temporal filtering.

The stream keeps a short window of per-frame predictions (majority vote,
ties to the most recent class) and of hand positions (stillness test).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import net as gnet
from .core import HOLDING_CLASSES, GraspClass, PointCloud, Pose, Quat
from .scenegen import visible_block_fraction


@dataclass(frozen=True)
class PerceptionCfg:
    window: int = 7
    frame_rate: float = 20.0
    still_window: float = 0.5
    eps_still: float = 0.01
    tau_u: float = 0.6
    theta_vis: float = 0.3

    def __post_init__(self):
        if self.window < 1 or self.still_window <= 0 or self.eps_still < 0:
            raise ValueError(f"invalid perception config {self}")
        if not 0 <= self.tau_u <= 1 or not 0 <= self.theta_vis <= 1:
            raise ValueError("tau_u and theta_vis must lie in [0, 1]")


@dataclass(frozen=True)
class Frame:
    t: float
    hand_pose: Pose
    cloud: PointCloud | None
    true_scene: Any = field(default=None, repr=False, compare=False)
    # class probabilities already computed for this cloud (memoized frames)
    probs: np.ndarray | None = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class PerceptionOut:
    filtered_class: GraspClass
    confidence: float
    uncertain: bool
    hand_still: bool
    object_present: bool
    raw_class: GraspClass = GraspClass.Waiting


@dataclass(frozen=True)
class StreamState:
    labels: tuple[tuple[int, float], ...] = ()  # (class, max softmax) per recent frame
    positions: tuple[tuple[float, tuple[float, float, float]], ...] = ()
    last_t: float = -math.inf


def classify(params, net_cfg, cloud) -> np.ndarray | None:
    """Class probabilities, or None when the cloud is too small to classify."""
    if cloud is None:
        return None
    try:
        return gnet.predict_proba(params, net_cfg, cloud)
    except gnet.TooFewPoints:
        return None


def majority(labels) -> int:
    """Most frequent label; ties go to the tied label seen most recently."""
    counts = Counter(labels)
    best = max(counts.values())
    for lab in reversed(labels):
        if counts[lab] == best:
            return lab
    raise ValueError("empty window")


def hand_still(positions, t_now: float, window: float, eps: float) -> bool:
    """True when the stamped positions span ``window`` seconds and none strays > eps from the latest."""
    if not positions or positions[0][0] > t_now - window + 1e-9:
        return False
    last = np.asarray(positions[-1][1])
    pts = np.asarray([p for _, p in positions])
    return bool(np.sqrt(((pts - last) ** 2).sum(axis=1)).max() <= eps)


def step(frame: Frame, params, net_cfg, state: StreamState, cfg: PerceptionCfg = PerceptionCfg()):
    if frame.t < state.last_t:
        raise ValueError("frame times must be nondecreasing")
    probs = frame.probs if frame.probs is not None else classify(params, net_cfg, frame.cloud)
    if probs is None:
        raw, conf = int(GraspClass.Waiting), 0.0
    else:
        raw, conf = int(np.argmax(probs)), float(np.max(probs))
    labels = (state.labels + ((raw, conf),))[-cfg.window:]
    pos = tuple(float(v) for v in frame.hand_pose.position)
    positions = state.positions + ((frame.t, pos),)
    # keep exactly one sample at or before the window start
    while len(positions) > 1 and positions[1][0] <= frame.t - cfg.still_window + 1e-9:
        positions = positions[1:]
    cls = GraspClass(majority([l for l, _ in labels]))
    confidence = float(np.mean([c for _, c in labels]))
    out = PerceptionOut(
        filtered_class=cls,
        confidence=confidence,
        uncertain=confidence < cfg.tau_u,
        hand_still=hand_still(positions, frame.t, cfg.still_window, cfg.eps_still),
        object_present=cls in HOLDING_CLASSES,
        raw_class=GraspClass(raw),
    )
    return out, StreamState(labels, positions, frame.t)


def presence_visibility_baseline(frame: Frame, theta_vis: float = PerceptionCfg.theta_vis) -> bool:
    """Visibility-limited object detector: sees the block only if enough of it is visible."""
    scene = frame.true_scene
    if scene is None or scene.block is None:
        return False
    return visible_block_fraction(scene) >= theta_vis


# ---------------------------------------------------------------------------
# simulated hand tracker

POSITION_SIGMA = 0.001
YAW_SIGMA = math.radians(3.0)


def tracked_hand_pose(true_pose: Pose, rng) -> Pose:
    """Noisy yaw-only hand pose as reported by the body tracker."""
    pos = true_pose.position + rng.normal(0.0, POSITION_SIGMA, 3)
    return Pose.from_yaw(pos, true_pose.orientation.yaw() + rng.normal(0.0, YAW_SIGMA))


def orientation_error_sigma(occluded_fraction: float) -> float:
    """Full-orientation tracker error grows linearly with hand occlusion (5 to 40 deg)."""
    f = min(max(float(occluded_fraction), 0.0), 1.0)
    return math.radians(5.0 + 35.0 * f)


def noisy_orientation(true: Quat, occluded_fraction: float, rng) -> Quat:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    err = Quat.from_axis_angle(axis, rng.normal(0.0, orientation_error_sigma(occluded_fraction)))
    return err * true
