import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from handover import perception
from handover.core import HOLDING_CLASSES, GraspClass, PointCloud, Pose, Quat
from handover.perception import (
    Frame,
    PerceptionCfg,
    StreamState,
    hand_still,
    majority,
    noisy_orientation,
    orientation_error_sigma,
    presence_visibility_baseline,
    step,
)
from handover.scenegen import look_at, sample_scene, visible_block_fraction


def onehot(g, conf=0.9):
    p = np.full(7, (1 - conf) / 6)
    p[int(g)] = conf
    return p


def run(labels, positions=None, cfg=PerceptionCfg(), conf=0.9):
    state = StreamState()
    out = None
    for k, g in enumerate(labels):
        pos = np.zeros(3) if positions is None else positions[k]
        out, state = step(Frame(k * 0.05, Pose(pos), None, probs=onehot(g, conf)), None, None, state, cfg)
    return out, state


def test_unanimous_confident_window():
    out, _ = run([GraspClass.PinchTop] * 7)
    assert out.filtered_class is GraspClass.PinchTop
    assert not out.uncertain and out.object_present
    assert out.confidence == pytest.approx(0.9)


def test_alternating_window_majority():
    seq = [GraspClass.PinchTop, GraspClass.PinchSide] * 4 + [GraspClass.PinchTop]
    out, _ = run(seq, cfg=PerceptionCfg(window=5))
    assert out.filtered_class is GraspClass.PinchTop


def test_majority_ties_go_to_most_recent():
    assert majority([1, 2, 2, 1]) == 1
    assert majority([3, 1, 1, 3, 4]) == 3


@given(st.lists(st.integers(0, 6), min_size=1, max_size=12))
def test_majority_outputs_a_window_member(labels):
    assert majority(labels) in labels


def test_stillness_threshold():
    still, _ = run([GraspClass.PinchTop] * 12)
    assert still.hand_still
    moving = [np.array([0.05 * (k >= 11), 0, 0]) for k in range(12)]
    out, _ = run([GraspClass.PinchTop] * 12, moving, PerceptionCfg(eps_still=0.01))
    assert not out.hand_still


def test_stillness_needs_a_full_window():
    out, _ = run([GraspClass.PinchTop] * 5)  # 0.2 s of history
    assert not out.hand_still


@given(
    st.lists(st.tuples(st.floats(-0.02, 0.02), st.floats(-0.02, 0.02), st.floats(-0.02, 0.02)), min_size=1, max_size=15),
    st.floats(0.0, 0.05),
    st.floats(0.0, 0.05),
)
def test_stillness_monotone_in_eps(pts, e1, e2):
    lo, hi = sorted((e1, e2))
    stamped = [(k * 0.05, p) for k, p in enumerate(pts)]
    t = stamped[-1][0]
    if hand_still(stamped, t, 0.5, lo):
        assert hand_still(stamped, t, 0.5, hi)


def test_output_invariants():
    rng = np.random.default_rng(0)
    cfg = PerceptionCfg()
    state = StreamState()
    for k in range(200):
        p = rng.dirichlet(np.ones(7) * 0.3)
        out, state = step(Frame(k * 0.05, Pose(rng.normal(0, 0.01, 3)), None, probs=p), None, None, state, cfg)
        assert out.uncertain == (out.confidence < cfg.tau_u)
        assert out.object_present == (out.filtered_class in HOLDING_CLASSES)
        assert 0 <= out.confidence <= 1


def test_missing_cloud_is_uncertain_waiting():
    out, _ = step(Frame(0.0, Pose(), None), None, None, StreamState())
    assert out.raw_class is GraspClass.Waiting and out.uncertain and not out.object_present


def test_too_few_points_is_no_detection(desk_model):
    tiny = PointCloud(np.zeros((10, 3)))
    out, _ = step(Frame(0.0, Pose(), tiny), desk_model.params, desk_model.cfg, StreamState())
    assert out.raw_class is GraspClass.Waiting and out.confidence == 0.0


def test_time_must_not_go_backwards():
    _, state = run([GraspClass.PinchTop] * 3)
    with pytest.raises(ValueError):
        step(Frame(0.0, Pose(), None), None, None, state)


def test_stream_is_deterministic(desk_model):
    from handover.scenegen import render_cloud

    frames = []
    for k in range(10):
        s = sample_scene(GraspClass.PinchSide, 1, k)
        frames.append(Frame(k * 0.05, Pose(), render_cloud(s, rng=k)))

    def go():
        state, outs = StreamState(), []
        for f in frames:
            o, state = step(f, desk_model.params, desk_model.cfg, state)
            outs.append(o)
        return outs

    assert go() == go()


def test_config_validation():
    with pytest.raises(ValueError):
        PerceptionCfg(window=0)
    with pytest.raises(ValueError):
        PerceptionCfg(tau_u=1.5)


def test_visibility_baseline_examples():
    s = sample_scene(GraspClass.OnOpenPalm, 0, 2)
    c = s.block.pose.position
    top = dataclasses.replace(s, camera=look_at(c + np.array([0.0, 0.0, 0.8]), c))
    assert visible_block_fraction(top) > 0.9
    assert presence_visibility_baseline(Frame(0.0, Pose(), None, top))
    empty = sample_scene(GraspClass.Waiting, 0, 2)
    assert not presence_visibility_baseline(Frame(0.0, Pose(), None, empty))
    assert not presence_visibility_baseline(Frame(0.0, Pose(), None, None))


def test_visibility_baseline_misses_occluded_lifting():
    s = sample_scene(GraspClass.Lifting, 0, 4)
    hc = s.hand_centroid()
    away = hc - s.block.pose.position
    away /= np.linalg.norm(away)
    behind = dataclasses.replace(s, camera=look_at(hc + 0.8 * away, hc))
    frac = visible_block_fraction(behind)
    assert frac < 0.3
    assert not presence_visibility_baseline(Frame(0.0, Pose(), None, behind), 0.3)


def test_tracker_noise_scales_with_occlusion():
    assert orientation_error_sigma(0.0) == pytest.approx(math.radians(5))
    assert orientation_error_sigma(1.0) == pytest.approx(math.radians(40))
    assert orientation_error_sigma(2.0) == orientation_error_sigma(1.0)
    rng = np.random.default_rng(0)
    q = Quat.from_axis_angle([0, 1, 0], 0.3)
    for f, sigma in ((0.0, 5), (1.0, 40)):
        err = [noisy_orientation(q, f, rng).angle_to(q) for _ in range(4000)]
        assert np.mean(err) == pytest.approx(math.radians(sigma) * math.sqrt(2 / math.pi), rel=0.05)


def test_tracked_pose_is_yaw_only():
    rng = np.random.default_rng(1)
    true = Pose(np.array([0.5, 0.0, 0.3]), Quat.from_yaw(math.pi) * Quat.from_axis_angle([1, 0, 0], 0.2))
    est = perception.tracked_hand_pose(true, rng)
    m = est.orientation.matrix()
    np.testing.assert_allclose(m[:, 2], [0, 0, 1], atol=1e-12)
    assert np.linalg.norm(est.position - true.position) < 0.01
