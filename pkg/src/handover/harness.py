"""Experiment orchestration: trials, metrics, reports.

Every metric is a pure function of a trial's event log, so reports can be
rebuilt offline from ``events/<trial>.csv`` plus ``trials.csv``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import humansim, perception
from . import net as gnet
from .core import HandoverError, Pose, Quat
from .humansim import PROFILES, BehaviorProfile
from .perception import Frame, PerceptionCfg, StreamState
from .scenegen import DegenerateScene, hand_occluded_fraction, render
from .taskmodel import (
    HandoverState,
    Policy,
    TaskCfg,
    TaskModel,
    WorldView,
    events_from_csv,
    events_to_csv,
)

METRIC_COLUMNS = (
    "Planning Success Rate",
    "Grasp Success Rate",
    "Action Execution Time (s)",
    "Total Execution Time (s)",
    "Trial Duration (s)",
)
STUDY_COLUMNS = ("Finger Contacts", "Grasp Changes", "Repositions")
POLICY_ROWS = {
    Policy.SimpleBaseline: "Simple Baseline",
    Policy.HandPoseEstimation: "Hand Pose Estimation",
    Policy.Ours: "Ours",
}
STUDY_PROFILES = ("Freeform", "Attentive", "Distracted")
BLOCK_TIMEOUT = 120.0  # s without a placed block before the trial is abandoned
BLOCK_POSITION_SIGMA = 0.002
MEMO_POSITION = 0.01
MEMO_YAW = math.radians(5.0)


class TrialTimeout(HandoverError):
    pass


class IoError(HandoverError, OSError):
    pass


@dataclass(frozen=True)
class Model:
    params: gnet.NetParams
    cfg: gnet.NetCfg

    @classmethod
    def load(cls, path=None) -> "Model":
        try:
            params, cfg = gnet.load_checkpoint(path or gnet.default_model_path())
        except OSError as e:
            raise IoError(f"cannot load model: {e}") from e
        return cls(params, cfg)


@dataclass
class TrialRecord:
    policy: str
    profile: str
    seed: int
    trial_index: int = 0
    planning_attempts: int = 0
    planning_successes: int = 0
    grasp_attempts: int = 0
    grasp_successes: int = 0
    action_exec_times: list[float] = field(default_factory=list)
    total_exec_time: float = 0.0
    trial_duration: float | None = None
    finger_contacts: int = 0
    grasp_changes: int = 0
    repositions: int = 0
    blocks_placed: int = 0
    timed_out: bool = False

    def __post_init__(self):
        if self.planning_successes > self.planning_attempts or self.grasp_successes > self.grasp_attempts:
            raise ValueError("successes exceed attempts")

    @property
    def planning_rate(self) -> float | None:
        return rate(self.planning_successes, self.planning_attempts)

    @property
    def grasp_rate(self) -> float | None:
        return rate(self.grasp_successes, self.grasp_attempts)

    @property
    def mean_action_time(self) -> float | None:
        return float(np.mean(self.action_exec_times)) if self.action_exec_times else None

    def metric_values(self) -> tuple:
        return (self.planning_rate, self.grasp_rate, self.mean_action_time, self.total_exec_time, self.trial_duration)

    def study_values(self) -> tuple:
        return (float(self.finger_contacts), float(self.grasp_changes), float(self.repositions))


def rate(successes: int, attempts: int) -> float | None:
    """None when there were no attempts: an undefined rate is not a zero rate."""
    return successes / attempts if attempts else None


def metrics_from_events(events) -> dict:
    """Event-log metrics of one trial."""
    kinds = [e.kind for e in events]
    out = {
        "planning_attempts": kinds.count("plan_started"),
        "planning_successes": kinds.count("plan_success"),
        "grasp_attempts": kinds.count("grasp_attempt"),
        "grasp_successes": kinds.count("grasp_success"),
        "finger_contacts": kinds.count("finger_contact"),
        "blocks_placed": kinds.count("block_placed"),
        "total_exec_time": round(sum(e.exec_time for e in events), 6),
        "action_exec_times": [],
        "trial_duration": None,
        "timed_out": any(e.kind == "trial_done" and e.field("reason") == "timeout" for e in events),
    }
    last_plan = last_grasp_plan = None
    for e in events:
        if e.kind == "plan_started":
            last_plan = e.t
        elif e.kind == "grasp_success":
            last_grasp_plan = last_plan
        elif e.kind == "block_placed" and last_grasp_plan is not None:
            out["action_exec_times"].append(round(e.t - last_grasp_plan, 6))
            last_grasp_plan = None
    first = next((e.t for e in events if e.kind == "hand_detected"), None)
    done = next((e.t for e in events if e.kind == "trial_done"), None)
    if first is not None and done is not None:
        out["trial_duration"] = round(done - first, 6)
    return out


# ---------------------------------------------------------------------------
# trial loop


class _FrameCache:
    """Classifier output per (hand configuration, 1 cm position cell, 5 deg yaw cell)."""

    def __init__(self, model: Model, rng, occlusion: bool):
        self.model = model
        self.rng = rng
        self.occlusion = occlusion
        self.store: dict = {}

    def lookup(self, version: int, pose: Pose, scene):
        cell = tuple(np.floor(pose.position / MEMO_POSITION).astype(int))
        key = (version, cell, int(math.floor(pose.orientation.yaw() / MEMO_YAW)))
        hit = self.store.get(key)
        if hit is None:
            try:
                cloud = render(scene, rng=self.rng).cloud
            except DegenerateScene:
                cloud = None
            probs = perception.classify(self.model.params, self.model.cfg, cloud)
            hit = (cloud, probs, hand_occluded_fraction(scene) if self.occlusion else 0.0)
            self.store[key] = hit
        return hit


def _palm_orientation(scene) -> Quat:
    r = scene.hand_pose.orientation.matrix() @ scene.hand.palm_rot
    return Quat.from_matrix(r)


def run_trial(policy, profile, seed: int, model: Model | None = None, task_cfg: TaskCfg = TaskCfg(),
              perc_cfg: PerceptionCfg = PerceptionCfg(), trial_index: int = 0):
    """One four-block handover; returns (TrialRecord, event log)."""
    policy = Policy(policy) if not isinstance(policy, Policy) else policy
    if isinstance(profile, str):
        profile = PROFILES[profile]
    model = model or Model.load()
    base = [int(seed), int(trial_index)]
    human_rng = np.random.default_rng(base + [1])
    sense_rng = np.random.default_rng(base + [2])
    # only the pose-estimation baseline reads the occlusion-dependent orientation
    cache = _FrameCache(model, np.random.default_rng(base + [3]), policy is Policy.HandPoseEstimation)
    task = TaskModel(policy, task_cfg, seed=base + [4])
    human = humansim.start((int(seed) + int(trial_index)) % humansim.NUM_SUBJECTS, profile, human_rng, task_cfg.num_blocks)
    camera = humansim.fixed_camera()
    stream = StreamState()
    feedback: list[str] = []
    tracked = None
    true_track: list = []  # (t, true hand position) for the release rule
    t = 0.0
    last_progress = 0.0
    max_ticks = int(round(BLOCK_TIMEOUT * task_cfg.num_blocks / task_cfg.dt)) + 1
    for tick in range(1, max_ticks + 1):
        t = round(tick * task_cfg.dt, 6)
        scene = None
        if human.blocks_remaining > 0:
            human, pose, scene = humansim.advance(human, profile, task_cfg.dt, feedback, human_rng, camera)
        if scene is not None:
            true_track.append((t, tuple(scene.hand_pose.position)))
            while len(true_track) > 1 and true_track[1][0] <= t - perc_cfg.still_window + 1e-9:
                true_track.pop(0)
        else:
            true_track.clear()
        if scene is not None:
            cloud, probs, occluded = cache.lookup(human.config_version, scene.hand_pose, scene)
            tracked = perception.tracked_hand_pose(scene.hand_pose, sense_rng)
            orient = perception.noisy_orientation(_palm_orientation(scene), occluded, sense_rng)
            block_est = None
            if scene.block is not None:
                block_est = scene.block.pose.position + sense_rng.normal(0.0, BLOCK_POSITION_SIGMA, 3)
            frame = Frame(t, tracked, cloud, scene, probs)
        else:
            orient, block_est = None, None
            frame = Frame(t, tracked or Pose(), None, None, None)
        perc, stream = perception.step(frame, model.params, model.cfg, stream, perc_cfg)
        # the human lets go only while the true hand is still by the perception criterion
        released = perception.hand_still(true_track, t, perc_cfg.still_window, perc_cfg.eps_still)
        view = WorldView(t, tracked or Pose(), orient, block_est, scene, released)
        state, events = task.tick(perc, view)
        feedback = [e.kind for e in events]
        if any(e.kind == "block_placed" for e in events):
            last_progress = t
        if state is HandoverState.Done:
            break
        if t - last_progress >= BLOCK_TIMEOUT:
            task.abort(t, "timeout")
            break
    else:
        task.abort(t, "timeout")
    log = list(task.log)
    rec = TrialRecord(policy.name, profile.name, int(seed), int(trial_index), grasp_changes=human.grasp_changes,
                      repositions=human.repositions, **metrics_from_events(log))
    return rec, log


# ---------------------------------------------------------------------------
# experiments and reports


@dataclass(frozen=True)
class ExperimentCfg:
    mode: str = "systematic"
    trials_per_cell: int = 100
    seed: int = 7
    checkpoint: str | None = None
    out_dir: str | None = None
    task: TaskCfg = TaskCfg()
    perception: PerceptionCfg = PerceptionCfg()
    profiles: tuple[BehaviorProfile, ...] = tuple(PROFILES.values())

    def __post_init__(self):
        if self.mode not in ("systematic", "study"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.trials_per_cell < 1:
            raise ValueError("trials_per_cell must be >= 1")

    def profile(self, name: str) -> BehaviorProfile:
        for p in self.profiles:
            if p.name == name:
                return p
        raise KeyError(name)


@dataclass
class Report:
    mode: str
    rows: list[str]
    columns: tuple[str, ...]
    values: list[list[float | None]]
    counts: list[list[int]]  # trials with a defined value, per cell
    records: list[TrialRecord]
    logs: list[list] = field(default_factory=list, repr=False)

    def row(self, name: str) -> dict[str, float | None]:
        return dict(zip(self.columns, self.values[self.rows.index(name)]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "trials", *self.columns])
        for name, vals, cnt in zip(self.rows, self.values, self.counts):
            w.writerow([name, max(cnt), *(_fmt(v, 6) for v in vals)])
        return buf.getvalue()

    def to_markdown(self) -> str:
        head = "| " + " | ".join(["", *self.columns]) + " |"
        sep = "|" + "---|" * (len(self.columns) + 1)
        lines = [head, sep]
        for name, vals in zip(self.rows, self.values):
            cells = [_pct(v) if "Rate" in c else _fmt(v, 2) for c, v in zip(self.columns, vals)]
            lines.append("| " + " | ".join([name, *cells]) + " |")
        return "\n".join(lines) + "\n"


def _fmt(v, digits: int) -> str:
    return "" if v is None else f"{v:.{digits}f}"


def _pct(v) -> str:
    return "" if v is None else f"{100 * v:.1f}%"


def _values(rec: TrialRecord, mode: str) -> tuple:
    return rec.metric_values() + (rec.study_values() if mode == "study" else ())


def aggregate(mode: str, rows: list[str], groups: list[list[TrialRecord]], overall: bool = False) -> Report:
    """Per-row means over trials with a defined value; an Overall row pools all trials."""
    columns = METRIC_COLUMNS + (STUDY_COLUMNS if mode == "study" else ())
    if overall:
        rows = rows + ["Overall"]
        groups = groups + [[r for g in groups for r in g]]
    values, counts = [], []
    for recs in groups:
        per = [_values(r, mode) for r in recs]
        vals, cnt = [], []
        for j in range(len(columns)):
            defined = [p[j] for p in per if p[j] is not None]
            vals.append(float(np.mean(defined)) if defined else None)
            cnt.append(len(defined))
        values.append(vals)
        counts.append(cnt)
    records = [r for g in groups[: len(groups) - (1 if overall else 0)] for r in g]
    return Report(mode, rows, columns, values, counts, records)


def trial_id(index: int, policy: str, profile: str) -> str:
    return f"{index:04d}_{policy}_{profile}"


def _cells(cfg: ExperimentCfg) -> list[tuple[int, Policy, str]]:
    """(trial index, policy, profile) in execution order."""
    cells = []
    for i in range(cfg.trials_per_cell):
        if cfg.mode == "systematic":
            order = np.random.default_rng([cfg.seed, i, 99]).permutation(len(POLICY_ROWS))
            pols = [list(POLICY_ROWS)[k] for k in order]
            cells += [(i, p, "Attentive") for p in pols]
        else:
            cells += [(i, Policy.Ours, name) for name in STUDY_PROFILES]
    return cells


def run_experiment(cfg: ExperimentCfg, model: Model | None = None, progress=None) -> Report:
    model = model or Model.load(cfg.checkpoint)
    results = {}
    for n, (i, pol, prof) in enumerate(_cells(cfg)):
        rec, log = run_trial(pol, cfg.profile(prof), cfg.seed, model, cfg.task, cfg.perception, trial_index=i)
        results[(i, pol.name, prof)] = (rec, log)
        if progress is not None:
            progress(n, rec)
    return _report(cfg.mode, results)


def _report(mode: str, results: dict) -> Report:
    keys = sorted(results)
    if mode == "systematic":
        rows = list(POLICY_ROWS.values())
        groups = [[results[k][0] for k in keys if k[1] == p.name] for p in POLICY_ROWS]
        rep = aggregate(mode, rows, groups)
    else:
        rows = list(STUDY_PROFILES)
        groups = [[results[k][0] for k in keys if k[2] == p] for p in STUDY_PROFILES]
        rep = aggregate(mode, rows, groups, overall=True)
    rep.records = [results[k][0] for k in keys]
    rep.logs = [results[k][1] for k in keys]
    return rep


def run_systematic(cfg: ExperimentCfg, model: Model | None = None, progress=None) -> Report:
    rep = run_experiment(replace(cfg, mode="systematic"), model, progress)
    if cfg.out_dir:
        write_report(rep, cfg.out_dir, cfg)
    return rep


def run_study(cfg: ExperimentCfg, model: Model | None = None, progress=None) -> Report:
    rep = run_experiment(replace(cfg, mode="study"), model, progress)
    if cfg.out_dir:
        write_report(rep, cfg.out_dir, cfg)
    return rep


TRIAL_FIELDS = ("trial", "index", "policy", "profile", "seed", "grasp_changes", "repositions")


def write_report(rep: Report, out_dir, cfg: ExperimentCfg | None = None) -> Path:
    root = Path(out_dir)
    try:
        (root / "events").mkdir(parents=True, exist_ok=True)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRIAL_FIELDS)
        for rec, log in zip(rep.records, rep.logs):
            tid = trial_id(rec.trial_index, rec.policy, rec.profile)
            (root / "events" / f"{tid}.csv").write_text(events_to_csv(log))
            w.writerow([tid, rec.trial_index, rec.policy, rec.profile, rec.seed, rec.grasp_changes, rec.repositions])
        (root / "trials.csv").write_text(buf.getvalue())
        (root / "metrics.csv").write_text(rep.to_csv())
        (root / "table.md").write_text(rep.to_markdown())
        (root / "experiment.json").write_text(json.dumps({"mode": rep.mode}, sort_keys=True) + "\n")
    except OSError as e:
        raise IoError(f"cannot write report to {root}: {e}") from e
    return root


def report_from_dir(out_dir) -> Report:
    """Rebuild a report from the per-trial event logs written by :func:`write_report`."""
    root = Path(out_dir)
    try:
        mode = json.loads((root / "experiment.json").read_text())["mode"]
        with open(root / "trials.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        results = {}
        for r in rows:
            log = events_from_csv((root / "events" / f"{r['trial']}.csv").read_text())
            rec = TrialRecord(r["policy"], r["profile"], int(r["seed"]), int(r["index"]), grasp_changes=int(r["grasp_changes"]),
                              repositions=int(r["repositions"]), **metrics_from_events(log))
            results[(int(r["index"]), r["policy"], r["profile"])] = (rec, log)
    except (OSError, KeyError, ValueError) as e:
        raise IoError(f"cannot read report inputs in {root}: {e}") from e
    return _report(mode, results)
