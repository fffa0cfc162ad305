"""Set-abstraction point-cloud classifier written directly in numpy.

Each set-abstraction (SA) layer samples centroids by farthest-point sampling,
groups neighbours by ball query, runs a shared per-point MLP on
(offset / radius, normalized position, previous features) and max-pools each
group.  A global max pool feeds a three-layer head.  Gradients are computed by hand.

Sampling and grouping indices depend only on the input cloud, never on the
parameters, so they are computed once per cloud (:func:`prepare`) and reused
across epochs.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .core import GraspClass, HandoverError, PointCloud

NUM_CLASSES = len(GraspClass)
BN_EPS = 1e-5
BN_MOMENTUM = 0.1
CHECKPOINT_MAGIC = b"GNET1\x00\x00\x00"
# per grouped point: offset / radius and normalized position
POS_FEATURES = 6


class BadK(HandoverError, ValueError):
    pass


class TooFewPoints(HandoverError, ValueError):
    pass


class BadSplit(HandoverError, ValueError):
    pass


class CheckpointError(HandoverError, ValueError):
    pass


@dataclass(frozen=True)
class SALayerCfg:
    num_centroids: int
    radius: float
    max_group: int
    mlp_widths: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "mlp_widths", tuple(int(w) for w in self.mlp_widths))
        if self.num_centroids < 1 or self.radius <= 0 or self.max_group < 1 or not self.mlp_widths:
            raise ValueError(f"invalid SA layer config {self}")


@dataclass(frozen=True)
class NetCfg:
    sa_layers: tuple[SALayerCfg, ...] = (
        SALayerCfg(256, 0.04, 16, (16, 32)),
        SALayerCfg(64, 0.10, 16, (32, 64)),
    )
    head_widths: tuple[int, int, int] = (64, 32, NUM_CLASSES)
    dropout_p: float = 0.2
    use_norm: bool = False
    num_classes: int = NUM_CLASSES

    def __post_init__(self):
        object.__setattr__(self, "sa_layers", tuple(
            s if isinstance(s, SALayerCfg) else SALayerCfg(**s) for s in self.sa_layers
        ))
        object.__setattr__(self, "head_widths", tuple(int(w) for w in self.head_widths))
        if not self.sa_layers:
            raise ValueError("at least one SA layer is required")
        if len(self.head_widths) != 3:
            raise ValueError("the head has exactly three layers")
        if self.num_classes != NUM_CLASSES or self.head_widths[-1] != self.num_classes:
            raise ValueError(f"the head must end in {NUM_CLASSES} classes")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must lie in [0, 1)")
        for prev, cur in zip(self.sa_layers, self.sa_layers[1:]):
            if cur.num_centroids > prev.num_centroids:
                raise ValueError("SA layers must not increase the centroid count")

    @property
    def min_points(self) -> int:
        return self.sa_layers[0].num_centroids

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "NetCfg":
        d = dict(d)
        d["sa_layers"] = tuple(SALayerCfg(**s) for s in d.get("sa_layers", ()))
        return cls(**d)


@dataclass(frozen=True)
class TrainCfg:
    epochs: int = 30
    batch_size: int = 16
    learning_rate: float = 0.01
    seed: int = 42
    held_out_subject: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError(f"invalid training config {self}")


# ---------------------------------------------------------------------------
# parameters


@dataclass
class NetParams:
    """Named arrays in declaration order; ``buffers`` are non-trainable."""

    arrays: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, k):
        return self.arrays[k]

    @property
    def dtype(self):
        return next(iter(self.arrays.values())).dtype

    def copy(self) -> "NetParams":
        return NetParams({k: v.copy() for k, v in self.arrays.items()}, {k: v.copy() for k, v in self.buffers.items()})

    def astype(self, dtype) -> "NetParams":
        return NetParams({k: v.astype(dtype) for k, v in self.arrays.items()}, {k: v.astype(dtype) for k, v in self.buffers.items()})

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in [*self.arrays.values(), *self.buffers.values()])

    def __eq__(self, other):
        if not isinstance(other, NetParams):
            return NotImplemented
        return (
            list(self.arrays) == list(other.arrays)
            and list(self.buffers) == list(other.buffers)
            and all(np.array_equal(self.arrays[k], other.arrays[k]) for k in self.arrays)
            and all(np.array_equal(self.buffers[k], other.buffers[k]) for k in self.buffers)
        )


def param_shapes(cfg: NetCfg) -> tuple[dict[str, tuple], dict[str, tuple]]:
    shapes: dict[str, tuple] = {}
    buffers: dict[str, tuple] = {}
    c = 0
    for i, sa in enumerate(cfg.sa_layers):
        c += POS_FEATURES
        for j, w in enumerate(sa.mlp_widths):
            shapes[f"sa{i}.w{j}"] = (c, w)
            shapes[f"sa{i}.b{j}"] = (w,)
            c = w
    for j, w in enumerate(cfg.head_widths):
        shapes[f"head.w{j}"] = (c, w)
        shapes[f"head.b{j}"] = (w,)
        if cfg.use_norm and j < 2:
            shapes[f"head.gamma{j}"] = (w,)
            shapes[f"head.beta{j}"] = (w,)
            buffers[f"head.mean{j}"] = (w,)
            buffers[f"head.var{j}"] = (w,)
        c = w
    return shapes, buffers


def init_params(cfg: NetCfg, seed: int, dtype=np.float32) -> NetParams:
    rng = np.random.default_rng(seed)
    shapes, buffers = param_shapes(cfg)
    arrays = {}
    last = f"head.w{len(cfg.head_widths) - 1}"
    for name, shape in shapes.items():
        kind = name.split(".")[1].rstrip("0123456789")
        if kind == "w":
            gain = 1.0 if name == last else 2.0
            arrays[name] = rng.normal(0.0, math.sqrt(gain / shape[0]), size=shape)
        elif kind == "gamma":
            arrays[name] = np.ones(shape)
        else:
            arrays[name] = np.zeros(shape)
    bufs = {n: (np.zeros(s) if "mean" in n else np.ones(s)) for n, s in buffers.items()}
    return NetParams(arrays, bufs).astype(dtype)


def zero_params(cfg: NetCfg, dtype=np.float64) -> NetParams:
    p = init_params(cfg, 0, dtype)
    for v in p.arrays.values():
        v[...] = 0
    return p


# ---------------------------------------------------------------------------
# sampling and grouping


def _points(cloud) -> np.ndarray:
    return cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)


def fps(cloud, k: int) -> np.ndarray:
    """Farthest-point sampling from index 0; ties go to the lowest index."""
    pts = _points(cloud)
    if not 1 <= k <= pts.shape[0]:
        raise BadK(f"k={k} outside [1, {pts.shape[0]}]")
    return kernels.fps(pts, k)


def ball_group(centers: Sequence[int], cloud, radius: float, max_group: int) -> list[list[int]]:
    """Per center, up to ``max_group`` indices within ``radius`` nearest first."""
    idx, cnt = kernels.ball_group(_points(cloud), np.asarray(centers, dtype=np.int64), radius, max_group)
    return [row[:c].tolist() for row, c in zip(idx, cnt)]


def normalize(points: np.ndarray) -> tuple[np.ndarray, float]:
    """Center on the centroid and divide by the max radius."""
    x = points - points.mean(axis=0)
    scale = float(np.sqrt((x * x).sum(axis=1)).max())
    if scale <= 0:
        scale = 1.0
    return x / scale, scale


@dataclass
class Prepared:
    """Parameter-independent geometry of one cloud."""

    levels: list[np.ndarray]  # normalized positions per level, level 0 = input
    groups: list[np.ndarray]  # (M_l, K_l) indices into the previous level
    offsets: list[np.ndarray]  # (M_l, K_l, 6) offsets / normalized radius, then positions


def prepare(cfg: NetCfg, cloud) -> Prepared:
    pts = _points(cloud)
    if pts.shape[0] < cfg.min_points:
        raise TooFewPoints(f"{pts.shape[0]} points, need {cfg.min_points}")
    x, scale = normalize(pts)
    levels, groups, offsets = [x], [], []
    cur = x
    for sa in cfg.sa_layers:
        r = sa.radius / scale
        cidx = kernels.fps(cur, sa.num_centroids)
        gidx, _ = kernels.ball_group(cur, cidx, r, sa.max_group)
        cen = cur[cidx]
        groups.append(gidx)
        offsets.append(np.concatenate([(cur[gidx] - cen[:, None, :]) / r, cur[gidx]], axis=-1))
        levels.append(cen)
        cur = cen
    return Prepared(levels, groups, offsets)


# ---------------------------------------------------------------------------
# forward / backward


def _stack(preps: Sequence[Prepared], dtype):
    nl = len(preps[0].groups)
    groups = [np.stack([p.groups[l] for p in preps]) for l in range(nl)]
    offsets = [np.stack([p.offsets[l] for p in preps]).astype(dtype) for l in range(nl)]
    return groups, offsets


def _forward(params: NetParams, cfg: NetCfg, groups, offsets, train_mode: bool, rng):
    dt = params.dtype
    bsz = offsets[0].shape[0]
    bidx = np.arange(bsz)[:, None, None]
    cache = {"sa": [], "head": []}
    feats = None
    for i, sa in enumerate(cfg.sa_layers):
        g = offsets[i] if feats is None else np.concatenate([offsets[i], feats[bidx, groups[i]]], axis=-1)
        hs, zs = [g], []
        h = g
        for j in range(len(sa.mlp_widths)):
            z = h @ params[f"sa{i}.w{j}"] + params[f"sa{i}.b{j}"]
            h = np.maximum(z, 0)
            zs.append(z)
            hs.append(h)
        if train_mode:
            arg = h.argmax(axis=2)
            feats = np.take_along_axis(h, arg[:, :, None, :], axis=2)[:, :, 0, :]
        else:  # same values; the argmax is only needed for backprop
            arg, feats = None, h.max(axis=2)
        cache["sa"].append((hs, zs, arg, h.shape))
    if train_mode:
        garg = feats.argmax(axis=1)
        x = np.take_along_axis(feats, garg[:, None, :], axis=1)[:, 0, :]
    else:
        garg, x = None, feats.max(axis=1)
    cache["global"] = (garg, feats.shape)
    stats = {}
    nh = len(cfg.head_widths)
    for j in range(nh):
        inp = x
        z = x @ params[f"head.w{j}"] + params[f"head.b{j}"]
        if j == nh - 1:
            cache["head"].append((inp, None, None, None))
            x = z
            break
        bn = None
        if cfg.use_norm:
            if train_mode:
                mu, var = z.mean(axis=0), z.var(axis=0)
                stats[j] = (mu, var)
            else:
                mu, var = params.buffers[f"head.mean{j}"], params.buffers[f"head.var{j}"]
            inv = 1.0 / np.sqrt(var + BN_EPS)
            xhat = (z - mu) * inv
            bn = (xhat, inv)
            z = params[f"head.gamma{j}"] * xhat + params[f"head.beta{j}"]
        a = np.maximum(z, 0)
        mask = None
        if train_mode and cfg.dropout_p > 0:
            keep = 1.0 - cfg.dropout_p
            mask = ((rng.random(a.shape) < keep) / keep).astype(dt)
            a = a * mask
        cache["head"].append((inp, z, bn, mask))
        x = a
    cache["groups"] = groups
    cache["stats"] = stats
    return x, cache


def _backward(params: NetParams, cfg: NetCfg, cache, dlogits) -> dict[str, np.ndarray]:
    grads: dict[str, np.ndarray] = {}
    nh = len(cfg.head_widths)
    d = dlogits
    for j in reversed(range(nh)):
        inp, z, bn, mask = cache["head"][j]
        if j < nh - 1:
            if mask is not None:
                d = d * mask
            d = d * (z > 0)
            if bn is not None:
                xhat, inv = bn
                grads[f"head.gamma{j}"] = (d * xhat).sum(axis=0)
                grads[f"head.beta{j}"] = d.sum(axis=0)
                dx = d * params[f"head.gamma{j}"]
                n = dx.shape[0]
                d = inv / n * (n * dx - dx.sum(axis=0) - xhat * (dx * xhat).sum(axis=0))
        grads[f"head.w{j}"] = inp.T @ d
        grads[f"head.b{j}"] = d.sum(axis=0)
        d = d @ params[f"head.w{j}"].T
    garg, fshape = cache["global"]
    dfeat = np.zeros(fshape, dtype=d.dtype)
    np.put_along_axis(dfeat, garg[:, None, :], d[:, None, :], axis=1)
    groups = cache["groups"]
    for i in reversed(range(len(cfg.sa_layers))):
        hs, zs, arg, hshape = cache["sa"][i]
        dh = np.zeros(hshape, dtype=dfeat.dtype)
        np.put_along_axis(dh, arg[:, :, None, :], dfeat[:, :, None, :], axis=2)
        nm = len(zs)
        for j in reversed(range(nm)):
            dz = dh * (zs[j] > 0)
            hin = hs[j]
            grads[f"sa{i}.w{j}"] = hin.reshape(-1, hin.shape[-1]).T @ dz.reshape(-1, dz.shape[-1])
            grads[f"sa{i}.b{j}"] = dz.reshape(-1, dz.shape[-1]).sum(axis=0)
            if j > 0 or i > 0:
                dh = dz @ params[f"sa{i}.w{j}"].T
        if i > 0:
            dg = dh[..., POS_FEATURES:]
            _, _, _, prev_shape = cache["sa"][i - 1]
            bsz, m_prev, _, c_prev = prev_shape
            flat = (groups[i] + (np.arange(bsz) * m_prev)[:, None, None]).ravel()
            acc = np.zeros((bsz * m_prev, c_prev), dtype=dg.dtype)
            np.add.at(acc, flat, dg.reshape(-1, c_prev))
            dfeat = acc.reshape(bsz, m_prev, c_prev)
    return {k: grads[k] for k in params.arrays}


def _softmax(z):
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _as_rng(rng_state):
    if isinstance(rng_state, np.random.Generator):
        return rng_state
    return np.random.default_rng(rng_state)


def forward(params: NetParams, cfg: NetCfg, cloud, train_mode: bool = False, rng_state=0):
    """Logits for one cloud (or a :class:`Prepared`) and the activation cache."""
    prep = cloud if isinstance(cloud, Prepared) else prepare(cfg, cloud)
    groups, offsets = _stack([prep], params.dtype)
    logits, cache = _forward(params, cfg, groups, offsets, train_mode, _as_rng(rng_state))
    return logits[0], cache


def predict_logits(params: NetParams, cfg: NetCfg, preps: Sequence[Prepared], batch: int = 64) -> np.ndarray:
    out = np.zeros((len(preps), cfg.num_classes), dtype=params.dtype)
    for s in range(0, len(preps), batch):
        chunk = list(preps[s:s + batch])
        for sub in _by_shape(chunk):
            groups, offsets = _stack([chunk[k] for k in sub], params.dtype)
            logits, _ = _forward(params, cfg, groups, offsets, False, None)
            out[[s + k for k in sub]] = logits
    return out


def predict_proba(params: NetParams, cfg: NetCfg, cloud) -> np.ndarray:
    logits, _ = forward(params, cfg, cloud, False)
    return _softmax(logits.astype(np.float64))


def _by_shape(preps: Sequence[Prepared]) -> list[list[int]]:
    buckets: dict[tuple, list[int]] = {}
    for k, p in enumerate(preps):
        buckets.setdefault(tuple(g.shape for g in p.groups), []).append(k)
    return list(buckets.values())


def loss_and_grad(params: NetParams, cfg: NetCfg, batch, rng_state=0, return_stats: bool = False):
    """Mean cross-entropy over ``batch`` of (cloud or Prepared, label) and its exact gradient."""
    batch = list(batch)
    if not batch:
        raise ValueError("empty batch")
    rng = _as_rng(rng_state)
    preps = [c if isinstance(c, Prepared) else prepare(cfg, c) for c, _ in batch]
    labels = np.array([int(l) for _, l in batch])
    total = len(batch)
    loss = 0.0
    correct = 0
    grads = {k: np.zeros_like(v) for k, v in params.arrays.items()}
    stats = []
    for sub in _by_shape(preps):
        groups, offsets = _stack([preps[k] for k in sub], params.dtype)
        logits, cache = _forward(params, cfg, groups, offsets, True, rng)
        y = labels[sub]
        p = _softmax(logits)
        n = len(sub)
        lp = np.log(np.maximum(p[np.arange(n), y], np.finfo(p.dtype).tiny))
        loss += float(-lp.sum(dtype=np.float64))
        correct += int((logits.argmax(axis=1) == y).sum())
        d = p.copy()
        d[np.arange(n), y] -= 1
        d /= total
        for k, g in _backward(params, cfg, cache, d.astype(params.dtype)).items():
            grads[k] += g
        stats.append((n, cache["stats"]))
    result = (loss / total, NetParams(grads))
    if return_stats:
        return result + (correct, stats)
    return result


# ---------------------------------------------------------------------------
# training / evaluation


def _sample_parts(s):
    if isinstance(s, tuple):
        return s[0], s[1], (s[2] if len(s) > 2 else None)
    return s.cloud, s.label, s.subject_id


def train(dataset, net_cfg: NetCfg, train_cfg: TrainCfg, progress=None):
    """SGD on every sample except the held-out subject.

    Returns (params, history) where history holds per-epoch (loss, accuracy).
    """
    samples = [_sample_parts(s) for s in dataset]
    subjects = {sid for _, _, sid in samples}
    if len(subjects) < 2:
        raise BadSplit("need at least two subjects")
    if train_cfg.held_out_subject not in subjects:
        raise BadSplit(f"held-out subject {train_cfg.held_out_subject} has no samples")
    train_set = [(prepare(net_cfg, c), int(l)) for c, l, sid in samples if sid != train_cfg.held_out_subject]
    params = init_params(net_cfg, train_cfg.seed)
    lr = params.dtype.type(train_cfg.learning_rate)
    history = []
    n = len(train_set)
    for epoch in range(train_cfg.epochs):
        order = np.random.default_rng([train_cfg.seed, epoch]).permutation(n)
        tot_loss, tot_correct = 0.0, 0
        for bi, s in enumerate(range(0, n, train_cfg.batch_size)):
            batch = [train_set[k] for k in order[s:s + train_cfg.batch_size]]
            rng = np.random.default_rng([train_cfg.seed, epoch, bi])
            loss, grad, correct, stats = loss_and_grad(params, net_cfg, batch, rng, return_stats=True)
            for k, g in grad.arrays.items():
                params.arrays[k] -= lr * g
            _update_running(params, stats)
            tot_loss += loss * len(batch)
            tot_correct += correct
        history.append((tot_loss / n, tot_correct / n))
        if progress is not None:
            progress(epoch, *history[-1])
    return params, history


def _update_running(params: NetParams, stats):
    for n, st in stats:
        for j, (mu, var) in st.items():
            unbiased = var * n / max(n - 1, 1)
            m, v = params.buffers[f"head.mean{j}"], params.buffers[f"head.var{j}"]
            m *= 1 - BN_MOMENTUM
            m += BN_MOMENTUM * mu
            v *= 1 - BN_MOMENTUM
            v += BN_MOMENTUM * unbiased


def evaluate(params: NetParams, net_cfg: NetCfg, samples) -> tuple[float, np.ndarray]:
    """Accuracy and the confusion matrix (rows: true class)."""
    parts = [_sample_parts(s) for s in samples]
    if not parts:
        raise ValueError("no samples to evaluate")
    preps = [c if isinstance(c, Prepared) else prepare(net_cfg, c) for c, _, _ in parts]
    pred = predict_logits(params, net_cfg, preps).argmax(axis=1)
    conf = np.zeros((net_cfg.num_classes, net_cfg.num_classes), dtype=np.int64)
    for (_, l, _), p in zip(parts, pred):
        conf[int(l), int(p)] += 1
    return float(np.trace(conf) / conf.sum()), conf


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, params: NetParams, cfg: NetCfg) -> None:
    cfg_bytes = cfg.to_json().encode("utf-8")
    body = b"".join(
        np.ascontiguousarray(v, dtype="<f4").tobytes() for v in [*params.arrays.values(), *params.buffers.values()]
    )
    Path(path).write_bytes(CHECKPOINT_MAGIC + struct.pack("<I", len(cfg_bytes)) + cfg_bytes + body)


def load_checkpoint(path) -> tuple[NetParams, NetCfg]:
    data = Path(path).read_bytes()
    if data[:8] != CHECKPOINT_MAGIC:
        raise CheckpointError("not a classifier checkpoint")
    (n,) = struct.unpack("<I", data[8:12])
    cfg = NetCfg.from_dict(json.loads(data[12:12 + n].decode("utf-8")))
    shapes, buffers = param_shapes(cfg)
    off = 12 + n
    out = []
    for shape in [*shapes.values(), *buffers.values()]:
        size = int(np.prod(shape)) * 4
        if off + size > len(data):
            raise CheckpointError("truncated checkpoint")
        out.append(np.frombuffer(data[off:off + size], dtype="<f4").reshape(shape).astype(np.float32))
        off += size
    if off != len(data):
        raise CheckpointError("trailing bytes in checkpoint")
    names = list(shapes) + list(buffers)
    arrays = dict(zip(names[: len(shapes)], out[: len(shapes)]))
    bufs = dict(zip(names[len(shapes):], out[len(shapes):]))
    return NetParams(arrays, bufs), cfg


def default_model_path() -> Path:
    return Path(__file__).with_name("data") / "desk_model.gnet"


def load_default_model() -> tuple[NetParams, NetCfg]:
    return load_checkpoint(default_model_path())


def gradient_check(params: NetParams, cfg: NetCfg, batch, h: float = 1e-5, rng_seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients."""
    preps = [(c if isinstance(c, Prepared) else prepare(cfg, c), l) for c, l in batch]
    _, grad = loss_and_grad(params, cfg, preps, rng_seed)
    worst = 0.0
    for name, arr in params.arrays.items():
        g = grad[name]
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + h
            lp, _ = loss_and_grad(params, cfg, preps, rng_seed)
            arr[idx] = orig - h
            lm, _ = loss_and_grad(params, cfg, preps, rng_seed)
            arr[idx] = orig
            num = (lp - lm) / (2 * h)
            a = float(g[idx])
            denom = max(abs(a), abs(num), 1e-6)
            worst = max(worst, abs(a - num) / denom)
    return worst
