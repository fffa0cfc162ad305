"""Procedural hand + block scenes and their occluded, cropped point clouds.

A hand is a palm capsule plus five two-segment finger chains.  Each grasp
class has a template: a palm orientation in the hand frame, joint angles per
finger, and a rule anchoring the block to the contact fingertips.  Scenes are
rendered by casting one jittered ray per pixel of a 96x96 depth buffer spanning
the crop window; every pixel's first hit is a candidate point, so hidden
surfaces never appear in a cloud.
"""

from __future__ import annotations

import csv
import io
import math
import os
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import kernels
from .core import (
    BLOCK_HALF,
    HOLDING_CLASSES,
    GraspClass,
    HandoverError,
    PointCloud,
    Pose,
    Quat,
    compose,
    inverse,
)


class DegenerateScene(HandoverError):
    pass


class DatasetIoError(HandoverError, OSError):
    pass


FINGERS = ("thumb", "index", "middle", "ring", "pinky")
THUMB, INDEX, MIDDLE, RING, PINKY = range(5)

PALM_RADIUS = 0.018
PALM_HALF_LENGTH = 0.022
# palm-frame knuckle positions (x: toward fingertips, y: thumb side, z: palm normal)
FINGER_BASES = np.array([
    [0.000, 0.034, -0.002],
    [0.035, 0.026, 0.000],
    [0.037, 0.009, 0.000],
    [0.035, -0.009, 0.000],
    [0.031, -0.026, 0.000],
])
FINGER_LENGTHS = np.array([
    [0.040, 0.034],
    [0.046, 0.040],
    [0.050, 0.044],
    [0.047, 0.040],
    [0.038, 0.032],
])
FINGER_RADII = np.array([0.0095, 0.0085, 0.0085, 0.0080, 0.0072])

NUM_SUBJECTS = 8
SUBJECT_TABLE_SEED = 20201
JOINT_JITTER = math.radians(10.0)
CROP_RADIUS = 0.25
RASTER = 96
DEFAULT_N_POINTS = 512
DEFAULT_NOISE = 0.002
MIN_VISIBLE = 8
BLOCK_SIZE = 2 * BLOCK_HALF


def subject_params(subject_id: int) -> tuple[float, float]:
    """(scale, finger-length multiplier) for a subject, from a fixed seeded table."""
    rng = np.random.default_rng([SUBJECT_TABLE_SEED, int(subject_id)])
    return float(rng.uniform(0.85, 1.15)), float(rng.uniform(0.9, 1.1))


def _finger_fk(base, angles, lengths):
    abd, f1, f2 = angles
    u = np.array([math.cos(abd), math.sin(abd), 0.0])
    z = np.array([0.0, 0.0, 1.0])
    d1 = math.cos(f1) * u + math.sin(f1) * z
    d2 = math.cos(f1 + f2) * u + math.sin(f1 + f2) * z
    joint = base + lengths[0] * d1
    return joint, joint + lengths[1] * d2


def _finger_ik(base, target, lengths):
    """Joint angles placing a two-link finger's tip at ``target`` (palm frame)."""
    d = np.asarray(target) - base
    abd = math.atan2(d[1], d[0])
    r = math.hypot(d[0], d[1])
    h = d[2]
    l1, l2 = lengths
    c = (r * r + h * h - l1 * l1 - l2 * l2) / (2 * l1 * l2)
    f2 = math.acos(max(-1.0, min(1.0, c)))
    f1 = math.atan2(h, r) - math.atan2(l2 * math.sin(f2), l1 + l2 * math.cos(f2))
    return abd, f1, f2


def _rot(x, y, z):
    return np.column_stack([x, y, z]).astype(float)


@dataclass(frozen=True)
class GraspTemplate:
    palm_rot: np.ndarray  # palm frame -> hand frame
    angles: np.ndarray  # (5, 3): abduction, proximal flex, distal flex
    anchor: str | None  # block anchoring rule, None for empty hands


def _template(palm_rot, targets, fixed, anchor):
    """Build a template; ``targets`` maps finger -> hand-frame tip position."""
    angles = np.zeros((5, 3))
    for f, a in fixed.items():
        angles[f] = a
    for f, t in targets.items():
        angles[f] = _finger_ik(FINGER_BASES[f], palm_rot.T @ np.asarray(t), FINGER_LENGTHS[f])
    return GraspTemplate(palm_rot, angles, anchor)


_FLAT = {
    THUMB: (0.75, -0.10, 0.05),
    INDEX: (0.12, 0.06, 0.06),
    MIDDLE: (0.03, 0.06, 0.06),
    RING: (-0.06, 0.06, 0.06),
    PINKY: (-0.15, 0.06, 0.06),
}
_FIST = {f: (0.0, 1.5, 1.9) for f in (MIDDLE, RING, PINKY)}
# bent slightly away from the palm normal
_EXTENDED = {f: (_FLAT[f][0], -0.15, -0.05) for f in (MIDDLE, RING, PINKY)}

_PALM_UP = _rot([1, 0, 0], [0, 1, 0], [0, 0, 1])
_PALM_DOWN_SIDEWAYS = _rot([0, 1, 0], [1, 0, 0], [0, 0, -1])
_PALM_FACING_PY = _rot([1, 0, 0], [0, 0, -1], [0, 1, 0])
_PALM_FACING_PX_DOWN = _rot([0, 0, -1], [0, 1, 0], [1, 0, 0])
_PALM_FACING_PX_UP = _rot([0, 0, 1], [0, -1, 0], [1, 0, 0])

TEMPLATES: dict[GraspClass, GraspTemplate] = {
    GraspClass.OnOpenPalm: _template(_PALM_UP, {}, _FLAT, "palm"),
    GraspClass.PinchTop: _template(
        _PALM_DOWN_SIDEWAYS,
        {THUMB: (0.02, 0.001, -0.06), INDEX: (0.02, 0.069, -0.06)},
        _FIST,
        "top",
    ),
    GraspClass.PinchBottom: _template(
        _PALM_UP,
        {THUMB: (0.016, 0.016, 0.037), INDEX: (0.084, 0.016, 0.037)},
        {f: (_FLAT[f][0], 0.1, 0.15) for f in (MIDDLE, RING, PINKY)},
        "bottom",
    ),
    GraspClass.PinchSide: _template(
        _PALM_FACING_PY,
        {THUMB: (0.011, 0.06, -0.02), INDEX: (0.079, 0.06, -0.02)},
        _EXTENDED,
        "side",
    ),
    GraspClass.Lifting: _template(
        _PALM_FACING_PX_DOWN,
        {
            THUMB: (0.038, 0.01, 0.024),
            INDEX: (0.033, 0.026, -0.0435),
            MIDDLE: (0.033, 0.009, -0.0435),
            RING: (0.033, -0.009, -0.0435),
            PINKY: (0.030, -0.024, -0.040),
        },
        {},
        "lift",
    ),
    GraspClass.Waiting: _template(_PALM_FACING_PX_UP, {}, _FLAT, None),
}


@dataclass(frozen=True)
class HandModel:
    """Hand geometry in the hand frame (origin at the palm center)."""

    palm_rot: np.ndarray
    angles: np.ndarray
    scale: float = 1.0
    length_mult: float = 1.0

    def __post_init__(self):
        if not 0.8 <= self.scale <= 1.2:
            raise ValueError("hand scale must lie in [0.8, 1.2]")

    @property
    def palm_radius(self) -> float:
        return PALM_RADIUS * self.scale

    @property
    def palm(self) -> tuple[Pose, float, float]:
        """(center pose, radius, half length) of the palm capsule."""
        return Pose(np.zeros(3), Quat.from_matrix(self.palm_rot)), self.palm_radius, PALM_HALF_LENGTH * self.scale

    def finger_points(self) -> np.ndarray:
        """(5, 3, 3): base, joint, tip per finger, hand frame."""
        out = np.empty((5, 3, 3))
        for f in range(5):
            base = FINGER_BASES[f] * self.scale
            joint, tip = _finger_fk(base, self.angles[f], FINGER_LENGTHS[f] * self.scale * self.length_mult)
            out[f] = (self.palm_rot @ np.stack([base, joint, tip]).T).T
        return out

    def fingertips(self) -> np.ndarray:
        return self.finger_points()[:, 2]

    def finger_capsules(self) -> np.ndarray:
        """(10, 7) capsules (a, b, radius), hand frame."""
        pts = self.finger_points()
        caps = []
        for f in range(5):
            r = FINGER_RADII[f] * self.scale
            caps.append([*pts[f, 0], *pts[f, 1], r])
            caps.append([*pts[f, 1], *pts[f, 2], r])
        return np.array(caps)

    def capsules(self) -> np.ndarray:
        """Palm capsule followed by the finger capsules, hand frame."""
        half = PALM_HALF_LENGTH * self.scale
        axis = self.palm_rot[:, 1] * half
        palm = np.array([[*(-axis), *axis, self.palm_radius]])
        return np.vstack([palm, self.finger_capsules()])

    def palm_normal(self) -> np.ndarray:
        return self.palm_rot[:, 2].copy()


@dataclass(frozen=True)
class BlockModel:
    half_extents: np.ndarray
    pose: Pose
    color_id: int = 0

    def __post_init__(self):
        h = np.asarray(self.half_extents, dtype=float)
        if h.shape != (3,) or not np.all(h > 0):
            raise ValueError("block half extents must be positive")
        object.__setattr__(self, "half_extents", h)
        if not 0 <= int(self.color_id) <= 3:
            raise ValueError("color_id must be in 0..3")

    def box_row(self) -> np.ndarray:
        """Kernel box encoding: center, row-major rotation, half extents."""
        return np.concatenate([self.pose.position, self.pose.orientation.matrix().ravel(), self.half_extents])


@dataclass(frozen=True)
class Scene:
    hand: HandModel
    block: BlockModel | None
    grasp: GraspClass
    camera: Pose
    hand_pose: Pose = field(default_factory=Pose)
    # held block outside the trained taxonomy; ground-truth label stays Others
    outlier: bool = False

    def __post_init__(self):
        if not self.outlier and (self.block is not None) != (self.grasp in HOLDING_CLASSES):
            raise ValueError("block must be present exactly for holding classes")

    def world_capsules(self) -> np.ndarray:
        caps = self.hand.capsules().copy()
        r = self.hand_pose.orientation.matrix()
        caps[:, 0:3] = caps[:, 0:3] @ r.T + self.hand_pose.position
        caps[:, 3:6] = caps[:, 3:6] @ r.T + self.hand_pose.position
        return caps

    def world_finger_capsules(self) -> np.ndarray:
        return self.world_capsules()[1:]

    def hand_centroid(self) -> np.ndarray:
        caps = self.world_capsules()
        return 0.5 * (caps[:, 0:3] + caps[:, 3:6]).mean(axis=0)

    def boxes(self) -> np.ndarray:
        if self.block is None:
            return np.zeros((0, 15))
        return self.block.box_row()[None, :]

    def moved(self, hand_pose: Pose) -> "Scene":
        """Same hand and block rigidly carried to a new hand pose."""
        block = self.block
        if block is not None:
            rel = compose(inverse(self.hand_pose), block.pose)
            block = replace(block, pose=compose(hand_pose, rel))
        return replace(self, hand_pose=hand_pose, block=block)


def block_anchor(rule: str, hand: HandModel) -> np.ndarray:
    """Block center in the hand frame for a template anchoring rule."""
    tips = hand.fingertips()
    if rule == "palm":
        return hand.palm_normal() * (hand.palm_radius + BLOCK_HALF)
    if rule == "top":
        return 0.5 * (tips[THUMB] + tips[INDEX]) - np.array([0.0, 0.0, BLOCK_HALF])
    if rule == "bottom":
        return 0.5 * (tips[THUMB] + tips[INDEX]) + np.array([0.0, 0.0, BLOCK_HALF - 0.007])
    if rule == "side":
        return 0.5 * (tips[THUMB] + tips[INDEX])
    if rule == "lift":
        under = tips[[INDEX, MIDDLE, RING]].mean(axis=0)
        return under + np.array([0.02, 0.0, BLOCK_HALF + FINGER_RADII[INDEX] * hand.scale])
    if rule == "front":
        return hand.palm_normal() * (hand.palm_radius + BLOCK_HALF + 0.005)
    raise ValueError(f"unknown anchor rule {rule!r}")


def look_at(eye, target) -> Pose:
    """Camera pose: +z along the optical axis, +x right, +y down."""
    eye = np.asarray(eye, dtype=float)
    fwd = np.asarray(target, dtype=float) - eye
    fwd /= np.linalg.norm(fwd)
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(fwd, up)
    if np.linalg.norm(right) < 1e-9:
        right = np.array([1.0, 0.0, 0.0])
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    return Pose(eye, Quat.from_matrix(np.column_stack([right, down, fwd])))


def camera_around(center, azimuth: float, elevation: float, rng_range: float, frame_yaw: float = 0.0) -> Pose:
    """Camera on a sphere around ``center``; azimuth 0 is the hand frame's +x."""
    a = azimuth + frame_yaw
    d = np.array([math.cos(elevation) * math.cos(a), math.cos(elevation) * math.sin(a), math.sin(elevation)])
    return look_at(np.asarray(center) + rng_range * d, center)


def random_angles(rng, low=(-0.35, -0.2, 0.0), high=(0.35, 1.6, 1.9)) -> np.ndarray:
    a = rng.uniform(low, high, size=(5, 3))
    a[THUMB, 0] = rng.uniform(0.2, 1.2)
    return a


def random_palm_rot(rng) -> np.ndarray:
    q = rng.normal(size=4)
    return Quat(*q).matrix()


def make_hand(g: GraspClass, subject_id: int, rng, jitter: float = JOINT_JITTER) -> tuple[HandModel, np.ndarray | None]:
    """Hand model for a grasp class and the block center (hand frame) if holding."""
    scale, mult = subject_params(subject_id)
    g = GraspClass(g)
    if g is GraspClass.Others:
        hand = HandModel(random_palm_rot(rng), random_angles(rng), scale, mult)
        return hand, None
    tpl = TEMPLATES[g]
    angles = tpl.angles + rng.uniform(-jitter, jitter, size=(5, 3))
    hand = HandModel(tpl.palm_rot, angles, scale, mult)
    return hand, (None if tpl.anchor is None else block_anchor(tpl.anchor, hand))


def make_block(center_hand, hand_pose: Pose, color_id: int = 0) -> BlockModel:
    pose = compose(hand_pose, Pose(center_hand))
    return BlockModel(np.full(3, BLOCK_HALF), pose, color_id)


def sample_scene(g: GraspClass, subject_id: int, rng, num_subjects: int = NUM_SUBJECTS) -> Scene:
    """Random dataset scene: template hand with jittered joints, random viewpoint."""
    if not 0 <= subject_id < num_subjects:
        raise ValueError(f"subject_id {subject_id} outside [0, {num_subjects})")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    g = GraspClass(g)
    hand, center = make_hand(g, subject_id, rng)
    tilt = rng.uniform(-math.radians(8), math.radians(8), size=2)
    orient = Quat.from_axis_angle([1, 0, 0], tilt[0]) * Quat.from_axis_angle([0, 1, 0], tilt[1])
    hand_pose = Pose(np.zeros(3), orient)
    block = None if center is None else make_block(center, hand_pose, int(rng.integers(0, 4)))
    az = math.radians(rng.uniform(-60, 60))
    el = math.radians(rng.uniform(10, 50))
    rr = rng.uniform(0.6, 1.1)
    scene = Scene(hand, block, g, Pose(), hand_pose)
    return replace(scene, camera=camera_around(scene.hand_centroid(), az, el, rr))


@dataclass
class RenderResult:
    cloud: PointCloud
    prim_ids: np.ndarray  # primitive hit per point; capsules first, then the block
    num_capsules: int
    visible: int

    @property
    def block_mask(self) -> np.ndarray:
        return self.prim_ids >= self.num_capsules


def _pixel_rays(scene: Scene, rng, jitter: bool, raster: int = RASTER):
    cam = scene.camera
    center = scene.hand_centroid()
    dist = float(np.linalg.norm(center - cam.position))
    half = CROP_RADIUS / math.sqrt(max(dist * dist - CROP_RADIUS * CROP_RADIUS, 1e-6))
    # pixel centers (or jittered samples) on the tangent plane, camera frame
    g = (np.arange(raster) + 0.5) / raster
    if jitter:
        offs = rng.uniform(-0.5, 0.5, size=(raster, raster, 2)) / raster
    else:
        offs = np.zeros((raster, raster, 2))
    u = (g[None, :] + offs[..., 0]) * 2 - 1
    v = (g[:, None] + offs[..., 1]) * 2 - 1
    local = np.stack([u * half, v * half, np.ones_like(u)], axis=-1).reshape(-1, 3)
    local /= np.linalg.norm(local, axis=1)[:, None]
    # cam frame is rotated relative to the optical axis toward the crop center
    rot = cam.orientation.matrix()
    c_local = rot.T @ (center - cam.position)
    aim = look_at(np.zeros(3), c_local).orientation.matrix()
    dirs = local @ (rot @ aim).T
    return dirs, center


def render(scene: Scene, n_points: int = DEFAULT_N_POINTS, noise_sigma: float = DEFAULT_NOISE, rng=None) -> RenderResult:
    if n_points < 32:
        raise ValueError("n_points must be >= 32")
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(0 if rng is None else int(rng))
    caps = scene.world_capsules()
    boxes = scene.boxes()
    dirs, center = _pixel_rays(scene, rng, jitter=True)
    origin = scene.camera.position
    depth, hit = kernels.raycast(origin, dirs, caps, boxes)
    ok = np.isfinite(depth)
    pts = origin + dirs[ok] * depth[ok, None]
    ids = hit[ok]
    near = np.linalg.norm(pts - center, axis=1) <= CROP_RADIUS
    pts, ids = pts[near], ids[near]
    if pts.shape[0] < MIN_VISIBLE:
        raise DegenerateScene(f"only {pts.shape[0]} visible points")
    visible = pts.shape[0]
    rot = scene.camera.orientation.matrix()
    local = (pts - origin) @ rot
    if noise_sigma > 0:
        local = local + rng.normal(0.0, noise_sigma, size=local.shape)
    if visible >= n_points:
        sel = rng.choice(visible, size=n_points, replace=False)
    else:
        sel = np.concatenate([np.arange(visible), rng.integers(0, visible, size=n_points - visible)])
    return RenderResult(PointCloud(local[sel]), ids[sel], caps.shape[0], visible)


def render_cloud(scene: Scene, n_points: int = DEFAULT_N_POINTS, noise_sigma: float = DEFAULT_NOISE, rng=None) -> PointCloud:
    return render(scene, n_points, noise_sigma, rng).cloud


def occluding_camera(scene: Scene, rng, cone: float = math.radians(20.0), dist=(0.6, 1.1)) -> Pose:
    """Camera on the far side of the hand from the block, looking at the hand.

    The viewing direction is the block-to-hand line perturbed within ``cone``.
    """
    if scene.block is None:
        raise DegenerateScene("occluding viewpoints need a held block")
    hc = scene.hand_centroid()
    axis = hc - scene.block.pose.position
    axis /= np.linalg.norm(axis)
    perp = np.cross(axis, [0.0, 0.0, 1.0] if abs(axis[2]) < 0.9 else [1.0, 0.0, 0.0])
    perp /= np.linalg.norm(perp)
    tilt = Quat.from_axis_angle(perp, rng.uniform(0.0, cone))
    spin = Quat.from_axis_angle(axis, rng.uniform(-math.pi, math.pi))
    d = (spin * tilt).rotate(axis)
    return look_at(hc + rng.uniform(*dist) * d, hc)


def visible_block_fraction(scene: Scene) -> float:
    """Share of the block's pixels that stay visible with the hand in place."""
    if scene.block is None:
        return 0.0
    dirs, _ = _pixel_rays(scene, None, jitter=False)
    caps = scene.world_capsules()
    boxes = scene.boxes()
    _, alone = kernels.raycast(scene.camera.position, dirs, np.zeros((0, 7)), boxes)
    total = int(np.count_nonzero(alone >= 0))
    if total == 0:
        return 0.0
    _, hit = kernels.raycast(scene.camera.position, dirs, caps, boxes)
    return int(np.count_nonzero(hit == caps.shape[0])) / total


def hand_occluded_fraction(scene: Scene, raster: int = 32) -> float:
    """Share of the hand's pixels hidden by the block."""
    dirs, _ = _pixel_rays(scene, None, jitter=False, raster=raster)
    caps = scene.world_capsules()
    _, alone = kernels.raycast(scene.camera.position, dirs, caps, np.zeros((0, 15)))
    total = int(np.count_nonzero(alone >= 0))
    if total == 0 or scene.block is None:
        return 0.0
    _, hit = kernels.raycast(scene.camera.position, dirs, caps, scene.boxes())
    seen = int(np.count_nonzero((hit >= 0) & (hit < caps.shape[0])))
    return 1.0 - seen / total


# ---------------------------------------------------------------------------
# datasets

CLOUD_MAGIC = b"PCLHND1\x00"


@dataclass(frozen=True)
class DatasetSpec:
    samples_per_class: int = 300
    num_subjects: int = NUM_SUBJECTS
    n_points: int = DEFAULT_N_POINTS
    noise_sigma: float = DEFAULT_NOISE

    def __post_init__(self):
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be >= 1")
        if self.num_subjects < 2:
            raise ValueError("num_subjects must be >= 2")


@dataclass(frozen=True)
class LabeledSample:
    cloud: PointCloud
    label: GraspClass
    subject_id: int


@dataclass
class Dataset:
    samples: list[LabeledSample]
    root: Path | None = None

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def subjects(self) -> set[int]:
        return {s.subject_id for s in self.samples}

    def split(self, held_out_subject: int) -> tuple[list[LabeledSample], list[LabeledSample]]:
        train = [s for s in self.samples if s.subject_id != held_out_subject]
        test = [s for s in self.samples if s.subject_id == held_out_subject]
        return train, test


def encode_cloud(cloud: PointCloud) -> bytes:
    pts = np.asarray(cloud.points, dtype="<f4")
    return CLOUD_MAGIC + struct.pack("<I", pts.shape[0]) + pts.tobytes()


def decode_cloud(data: bytes) -> PointCloud:
    if data[:8] != CLOUD_MAGIC:
        raise DatasetIoError("bad cloud file magic")
    (n,) = struct.unpack("<I", data[8:12])
    body = data[12:]
    if len(body) != 12 * n:
        raise DatasetIoError("truncated cloud file")
    return PointCloud(np.frombuffer(body, dtype="<f4").reshape(n, 3).astype(np.float64))


def _f32(cloud: PointCloud) -> PointCloud:
    return PointCloud(cloud.points.astype(np.float32).astype(np.float64))


def generate_sample(label: GraspClass, subject_id: int, spec: DatasetSpec, seed: int, index: int) -> LabeledSample:
    """One sample; the rng stream depends only on (seed, index)."""
    rng = np.random.default_rng([int(seed), int(index)])
    for _ in range(100):
        scene = sample_scene(label, subject_id, rng, spec.num_subjects)
        try:
            cloud = render_cloud(scene, spec.n_points, spec.noise_sigma, rng)
        except DegenerateScene:
            continue
        return LabeledSample(_f32(cloud), GraspClass(label), subject_id)
    raise DegenerateScene(f"could not render sample {index}")


def generate_dataset(cfg: DatasetSpec, seed: int, out_dir: str | os.PathLike | None = None) -> Dataset:
    samples = []
    for c in GraspClass:
        for j in range(cfg.samples_per_class):
            index = int(c) * cfg.samples_per_class + j
            samples.append(generate_sample(c, j % cfg.num_subjects, cfg, seed, index))
    ds = Dataset(samples)
    if out_dir is not None:
        write_dataset(ds, out_dir)
    return ds


def write_dataset(ds: Dataset, out_dir) -> Path:
    root = Path(out_dir)
    try:
        (root / "clouds").mkdir(parents=True, exist_ok=True)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sample_id", "label", "subject_id", "file"])
        for i, s in enumerate(ds.samples):
            rel = f"clouds/{i:06d}.bin"
            (root / rel).write_bytes(encode_cloud(s.cloud))
            w.writerow([i, s.label.name, s.subject_id, rel])
        (root / "index.csv").write_text(buf.getvalue())
    except OSError as e:
        raise DatasetIoError(f"cannot write dataset to {root}: {e}") from e
    ds.root = root
    return root


def read_dataset(root) -> Dataset:
    root = Path(root)
    try:
        with open(root / "index.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        samples = [
            LabeledSample(decode_cloud((root / r["file"]).read_bytes()), GraspClass.parse(r["label"]), int(r["subject_id"]))
            for r in rows
        ]
    except OSError as e:
        raise DatasetIoError(f"cannot read dataset at {root}: {e}") from e
    return Dataset(samples, root)
