import itertools
import math

import numpy as np
import pytest

from handover import net as gnet
from handover.core import GraspClass, PointCloud
from handover.net import (
    BadK,
    BadSplit,
    CheckpointError,
    NetCfg,
    SALayerCfg,
    TooFewPoints,
    TrainCfg,
    ball_group,
    evaluate,
    fps,
    forward,
    gradient_check,
    init_params,
    load_checkpoint,
    loss_and_grad,
    predict_proba,
    save_checkpoint,
    train,
    zero_params,
)
from handover.scenegen import DatasetSpec, generate_dataset


def tiny_cfg(use_norm=False):
    return NetCfg(
        sa_layers=(SALayerCfg(16, 0.3, 8, (8, 6)), SALayerCfg(4, 0.6, 4, (8,))),
        head_widths=(8, 6, 7),
        dropout_p=0.2,
        use_norm=use_norm,
    )


def random_params(cfg, seed):
    """Random weights and biases; nonzero biases keep ReLUs off their kinks."""
    params = init_params(cfg, seed, np.float64)
    rng = np.random.default_rng([seed, 1])
    for v in params.arrays.values():
        v += rng.normal(0.0, 0.1, v.shape)
    return params


def brute_fps(pts, k):
    picked = [0]
    while len(picked) < k:
        best, best_d = None, -1.0
        for i in range(len(pts)):
            d = min(float(np.sum((pts[i] - pts[j]) ** 2)) for j in picked)
            if d > best_d:
                best, best_d = i, d
        picked.append(best)
    return picked


def brute_group(pts, c, radius, max_group):
    d = [(float(np.sum((pts[i] - pts[c]) ** 2)), i) for i in range(len(pts))]
    inside = sorted((dd, i) for dd, i in d if dd <= radius * radius)
    return [i for _, i in inside][:max_group] or [c]


def test_fps_examples():
    pts = np.array([[0, 0, 0], [1, 0, 0], [0.4, 0, 0]], float)
    assert list(fps(PointCloud(pts), 2)) == [0, 1]
    assert sorted(fps(PointCloud(pts), 3)) == [0, 1, 2]
    with pytest.raises(BadK):
        fps(PointCloud(pts), 4)
    with pytest.raises(BadK):
        fps(PointCloud(pts), 0)


def test_fps_matches_greedy_oracle(rng):
    for _ in range(50):
        pts = rng.normal(size=(8, 3))
        assert list(fps(pts, 4)) == brute_fps(pts, 4)


def test_fps_ties_to_lowest_index():
    pts = np.array([[0, 0, 0], [1, 0, 0], [-1, 0, 0], [0, 1, 0]], float)
    assert list(fps(pts, 2)) == [0, 1]


def test_ball_group_examples(rng):
    pts = rng.normal(size=(10, 3)) * 10
    assert ball_group(range(10), pts, 1e-6, 4) == [[i] for i in range(10)]
    full = ball_group([3], pts, math.inf, 10)[0]
    d = np.sum((pts - pts[3]) ** 2, axis=1)
    assert full == sorted(range(10), key=lambda i: (d[i], i))
    for _ in range(20):
        pts = rng.normal(size=(10, 3))
        r = rng.uniform(0.3, 2.0)
        assert ball_group(range(10), pts, r, 5) == [brute_group(pts, c, r, 5) for c in range(10)]


def test_zero_params_give_uniform_softmax():
    cfg = tiny_cfg()
    cloud = np.random.default_rng(0).normal(size=(32, 3))
    logits, _ = forward(zero_params(cfg), cfg, cloud)
    np.testing.assert_array_equal(logits, 0)
    np.testing.assert_allclose(predict_proba(zero_params(cfg), cfg, cloud), 1 / 7)


def test_softmax_positive_and_normalized(rng):
    cfg = tiny_cfg()
    p = predict_proba(init_params(cfg, 3), cfg, rng.normal(size=(40, 3)))
    assert np.all(p > 0) and abs(p.sum() - 1) < 1e-9


def test_translation_invariance(rng):
    cfg = tiny_cfg()
    params = init_params(cfg, 1, np.float64)
    cloud = rng.normal(size=(32, 3)) * 0.1
    a, _ = forward(params, cfg, cloud)
    b, _ = forward(params, cfg, cloud + np.array([0.3, 0, 0]))
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_permutation_invariance(rng):
    cfg = tiny_cfg()
    params = init_params(cfg, 2, np.float64)
    cloud = rng.normal(size=(32, 3)) * 0.1
    perm = np.concatenate([[0], 1 + rng.permutation(31)])  # keep the fps seed point
    a, _ = forward(params, cfg, cloud)
    b, _ = forward(params, cfg, cloud[perm])
    assert np.abs(a - b).max() <= 1e-6


def test_too_few_points():
    cfg = tiny_cfg()
    with pytest.raises(TooFewPoints):
        forward(init_params(cfg, 0), cfg, np.zeros((15, 3)))


def test_uniform_logits_loss_is_ln7():
    cfg = tiny_cfg()
    cloud = np.random.default_rng(0).normal(size=(32, 3))
    loss, grad = loss_and_grad(zero_params(cfg), cfg, [(cloud, GraspClass.PinchTop)])
    assert loss == pytest.approx(math.log(7), abs=1e-12)
    assert set(grad.arrays) == set(zero_params(cfg).arrays)


def test_confident_logits_drive_loss_to_zero():
    cfg = tiny_cfg()
    cloud = np.random.default_rng(0).normal(size=(32, 3))
    losses = []
    for margin in (1.0, 5.0, 20.0, 50.0):
        p = zero_params(cfg)
        p.arrays["head.b2"][2] = margin
        losses.append(loss_and_grad(p, cfg, [(cloud, 2)])[0])
    assert all(a > b for a, b in zip(losses, losses[1:]))
    assert losses[-1] < 1e-15


@pytest.mark.parametrize("use_norm", [False, True])
def test_gradient_matches_finite_differences(use_norm):
    cfg = tiny_cfg(use_norm)
    rng = np.random.default_rng(5)
    batch = [(rng.normal(size=(32, 3)) * 0.1, int(rng.integers(7))) for _ in range(3)]
    assert gradient_check(random_params(cfg, 5), cfg, batch) < 1e-4


def tiny_dataset(seed=0):
    return generate_dataset(DatasetSpec(samples_per_class=4, num_subjects=2, n_points=64), seed)


def small_net():
    return NetCfg(sa_layers=(SALayerCfg(32, 0.05, 8, (8,)), SALayerCfg(8, 0.12, 8, (16,))), head_widths=(16, 8, 7))


def test_train_smoke_and_determinism():
    ds = tiny_dataset()
    cfg = small_net()
    p1, h1 = train(ds, cfg, TrainCfg(epochs=1, batch_size=8))
    p2, h2 = train(ds, cfg, TrainCfg(epochs=1, batch_size=8))
    assert np.isfinite(h1[0][0]) and p1.all_finite()
    assert p1 == p2 and h1 == h2


def test_train_split_errors():
    ds = tiny_dataset()
    with pytest.raises(BadSplit):
        train(ds, small_net(), TrainCfg(epochs=1, held_out_subject=5))
    one = [s for s in ds if s.subject_id == 0]
    with pytest.raises(BadSplit):
        train(one, small_net(), TrainCfg(epochs=1))
    with pytest.raises(ValueError):
        TrainCfg(epochs=0)


def test_evaluate_identities():
    ds = tiny_dataset()
    cfg = small_net()
    acc, conf = evaluate(zero_params(cfg), cfg, ds)
    assert (conf[:, 1:] == 0).all()  # argmax ties resolve to class 0
    assert acc == pytest.approx(1 / 7)
    np.testing.assert_array_equal(conf.sum(axis=1), np.bincount([int(s.label) for s in ds], minlength=7))
    params = init_params(cfg, 0)
    acc, conf = evaluate(params, cfg, ds)
    assert acc == pytest.approx(np.trace(conf) / conf.sum())


def test_evaluate_perfect_predictions(monkeypatch):
    ds = tiny_dataset()
    cfg = small_net()
    labels = np.array([int(s.label) for s in ds])
    monkeypatch.setattr(gnet, "predict_logits", lambda p, c, preps: np.eye(7)[labels])
    acc, conf = evaluate(init_params(cfg, 0), cfg, ds)
    assert acc == 1.0
    assert (conf == np.diag(np.diag(conf))).all()


def test_config_validation():
    with pytest.raises(ValueError):
        NetCfg(head_widths=(8, 7))
    with pytest.raises(ValueError):
        NetCfg(head_widths=(8, 8, 5))
    with pytest.raises(ValueError):
        NetCfg(dropout_p=1.0)
    with pytest.raises(ValueError):
        SALayerCfg(0, 0.1, 4, (8,))
    four = NetCfg(sa_layers=tuple(SALayerCfg(n, 0.05 * (i + 1), 8, (8,)) for i, n in enumerate((256, 128, 64, 16))))
    assert len(four.sa_layers) == 4


@pytest.mark.parametrize("use_norm", [False, True])
def test_checkpoint_round_trip(tmp_path, use_norm):
    cfg = tiny_cfg(use_norm)
    params = init_params(cfg, 4)
    path = tmp_path / "m.gnet"
    save_checkpoint(path, params, cfg)
    data = path.read_bytes()
    assert data[:8] == b"GNET1\x00\x00\x00"
    back, cfg2 = load_checkpoint(path)
    assert cfg2 == cfg and back == params
    path.write_bytes(data[:-4])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
    path.write_bytes(b"NOTAGNET" + data[8:])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_shipped_model_loads():
    params, cfg = gnet.load_default_model()
    assert cfg == NetCfg()
    assert params.all_finite()
