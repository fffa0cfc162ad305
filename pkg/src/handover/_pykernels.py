"""Pure numpy implementations of the hot kernels.

Same signatures and return values as the compiled ``_ckernels`` module.
Index-valued kernels (fps, ball_group) agree bit for bit; float kernels agree
to rounding.
"""

from __future__ import annotations

import numpy as np

GOLDEN_ITERS = 64
_GR = 0.6180339887498949


def _sqdist(pts, p):
    dx = pts[:, 0] - p[0]
    dy = pts[:, 1] - p[1]
    dz = pts[:, 2] - p[2]
    return dx * dx + dy * dy + dz * dz


def fps(pts, k):
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    n = pts.shape[0]
    out = np.empty(k, dtype=np.int64)
    mind = np.full(n, np.inf)
    last = 0
    out[0] = 0
    for j in range(1, k):
        np.minimum(mind, _sqdist(pts, pts[last]), out=mind)
        last = int(np.argmax(mind))
        out[j] = last
    return out


def ball_group(pts, centers, radius, max_group):
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.int64)
    m = centers.shape[0]
    idx = np.empty((m, max_group), dtype=np.int64)
    cnt = np.empty(m, dtype=np.int64)
    r2 = radius * radius
    for c in range(m):
        ci = centers[c]
        d = _sqdist(pts, pts[ci])
        inside = np.flatnonzero(d <= r2)
        if inside.size == 0:
            sel = np.array([ci], dtype=np.int64)
        else:
            sel = inside[np.argsort(d[inside], kind="stable")][:max_group]
        cnt[c] = sel.size
        idx[c, : sel.size] = sel
        idx[c, sel.size:] = sel[0]
    return idx, cnt


def _capsule_hits(o, dirs, a, b, r):
    ba = b - a
    oa = o - a
    baba = ba @ ba
    bard = dirs @ ba
    baoa = ba @ oa
    rdoa = dirs @ oa
    oaoa = oa @ oa
    qa = baba - bard * bard
    qb = baba * rdoa - baoa * bard
    qc = baba * oaoa - baoa * baoa - r * r * baba
    h = qb * qb - qa * qc
    out = np.full(dirs.shape[0], np.inf)
    with np.errstate(invalid="ignore", divide="ignore"):
        body = (qa > 1e-14) & (h >= 0.0)
        t = (-qb - np.sqrt(np.where(body, h, 0.0))) / np.where(body, qa, 1.0)
        y = baoa + t * bard
        body &= (y > 0.0) & (y < baba)
        out[body & (t > 0.0)] = t[body & (t > 0.0)]
        rest = ~body
        for oc in (oa, o - b):
            qb2 = dirs @ oc
            qc2 = oc @ oc - r * r
            h2 = qb2 * qb2 - qc2
            ok = rest & (h2 >= 0.0)
            t2 = -qb2 - np.sqrt(np.where(ok, h2, 0.0))
            ok &= (t2 > 0.0) & (t2 < out)
            out[ok] = t2[ok]
    return out


def _box_hits(o, dirs, box):
    c = box[:3]
    rot = box[3:12].reshape(3, 3)
    half = box[12:15]
    lo = (o - c) @ rot
    ld = dirs @ rot
    tn = np.full(dirs.shape[0], -np.inf)
    tf = np.full(dirs.shape[0], np.inf)
    miss = np.zeros(dirs.shape[0], dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(3):
            par = np.abs(ld[:, k]) < 1e-15
            if lo[k] < -half[k] or lo[k] > half[k]:
                miss |= par
            t1 = (-half[k] - lo[k]) / ld[:, k]
            t2 = (half[k] - lo[k]) / ld[:, k]
            lo_t = np.where(par, -np.inf, np.minimum(t1, t2))
            hi_t = np.where(par, np.inf, np.maximum(t1, t2))
            tn = np.maximum(tn, lo_t)
            tf = np.minimum(tf, hi_t)
    ok = ~miss & (tn <= tf) & (tf > 0.0) & (tn > 0.0)
    return np.where(ok, tn, np.inf)


def raycast(origin, dirs, caps, boxes):
    origin = np.asarray(origin, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    nr = dirs.shape[0]
    depth = np.full(nr, np.inf)
    hit = np.full(nr, -1, dtype=np.int64)
    prims = [_capsule_hits(origin, dirs, c[0:3], c[3:6], c[6]) for c in caps]
    prims += [_box_hits(origin, dirs, b) for b in boxes]
    for j, t in enumerate(prims):
        closer = t < depth
        depth[closer] = t[closer]
        hit[closer] = j
    return depth, hit


def _pt_box(p, half):
    e = np.maximum(np.abs(p) - half, 0.0)
    return np.sqrt(e[..., 0] * e[..., 0] + e[..., 1] * e[..., 1] + e[..., 2] * e[..., 2])


def segment_box_distance(centers, rot, half, seg_a, seg_b):
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    seg_a = np.asarray(seg_a, dtype=np.float64).reshape(-1, 3)
    seg_b = np.asarray(seg_b, dtype=np.float64).reshape(-1, 3)
    # box-local endpoints, shape (K, S, 3)
    a = (seg_a[None, :, :] - centers[:, None, :]) @ rot
    b = (seg_b[None, :, :] - centers[:, None, :]) @ rot
    ab = b - a
    lo = np.zeros(a.shape[:2])
    hi = np.ones(a.shape[:2])
    m1 = hi - _GR * (hi - lo)
    m2 = lo + _GR * (hi - lo)
    f1 = _pt_box(a + m1[..., None] * ab, half)
    f2 = _pt_box(a + m2[..., None] * ab, half)
    for _ in range(GOLDEN_ITERS):
        left = f1 <= f2
        hi = np.where(left, m2, hi)
        lo = np.where(left, lo, m1)
        nm1 = np.where(left, hi - _GR * (hi - lo), m2)
        nm2 = np.where(left, m1, lo + _GR * (hi - lo))
        nf1 = np.where(left, _pt_box(a + nm1[..., None] * ab, half), f2)
        nf2 = np.where(left, f1, _pt_box(a + nm2[..., None] * ab, half))
        m1, m2, f1, f2 = nm1, nm2, nf1, nf2
    best = np.minimum(f1, f2)
    best = np.minimum(best, _pt_box(a, half))
    return np.minimum(best, _pt_box(b, half))
