# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Contracts mirror handover._pykernels exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, INFINITY

cnp.import_array()


def fps(double[:, ::1] pts, Py_ssize_t k):
    cdef Py_ssize_t n = pts.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.empty(k, dtype=np.int64)
    cdef double[::1] mind = np.full(n, INFINITY)
    cdef Py_ssize_t i, j, last = 0, best
    cdef double dx, dy, dz, d, bestd
    out[0] = 0
    for j in range(1, k):
        best = 0
        bestd = -1.0
        for i in range(n):
            dx = pts[i, 0] - pts[last, 0]
            dy = pts[i, 1] - pts[last, 1]
            dz = pts[i, 2] - pts[last, 2]
            d = dx * dx + dy * dy + dz * dz
            if d < mind[i]:
                mind[i] = d
            if mind[i] > bestd:
                bestd = mind[i]
                best = i
        out[j] = best
        last = best
    return out


def ball_group(double[:, ::1] pts, cnp.int64_t[::1] centers, double radius, Py_ssize_t max_group):
    cdef Py_ssize_t m = centers.shape[0], n = pts.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=2] idx = np.empty((m, max_group), dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] cnt = np.empty(m, dtype=np.int64)
    cdef double[::1] bd = np.empty(max_group)
    cdef cnp.int64_t[::1] bi = np.empty(max_group, dtype=np.int64)
    cdef double r2 = radius * radius
    cdef Py_ssize_t c, i, s, size, pos
    cdef cnp.int64_t ci
    cdef double dx, dy, dz, d
    for c in range(m):
        ci = centers[c]
        size = 0
        for i in range(n):
            dx = pts[i, 0] - pts[ci, 0]
            dy = pts[i, 1] - pts[ci, 1]
            dz = pts[i, 2] - pts[ci, 2]
            d = dx * dx + dy * dy + dz * dz
            if d > r2:
                continue
            if size == max_group and d >= bd[size - 1]:
                continue
            # insertion keeps (distance, index) order; equal distances keep scan order
            pos = size if size < max_group else max_group - 1
            while pos > 0 and bd[pos - 1] > d:
                if pos < max_group:
                    bd[pos] = bd[pos - 1]
                    bi[pos] = bi[pos - 1]
                pos -= 1
            bd[pos] = d
            bi[pos] = i
            if size < max_group:
                size += 1
        if size == 0:
            bi[0] = ci
            size = 1
        cnt[c] = size
        for s in range(max_group):
            idx[c, s] = bi[s] if s < size else bi[0]
    return idx, cnt


cdef inline double _capsule_hit(double ox, double oy, double oz, double dx, double dy, double dz,
                                double ax, double ay, double az, double bx, double by, double bz,
                                double r) nogil:
    cdef double bax = bx - ax, bay = by - ay, baz = bz - az
    cdef double oax = ox - ax, oay = oy - ay, oaz = oz - az
    cdef double baba = bax * bax + bay * bay + baz * baz
    cdef double bard = bax * dx + bay * dy + baz * dz
    cdef double baoa = bax * oax + bay * oay + baz * oaz
    cdef double rdoa = dx * oax + dy * oay + dz * oaz
    cdef double oaoa = oax * oax + oay * oay + oaz * oaz
    cdef double qa = baba - bard * bard
    cdef double qb = baba * rdoa - baoa * bard
    cdef double qc = baba * oaoa - baoa * baoa - r * r * baba
    cdef double h, t, y, ocx, ocy, ocz, best = INFINITY
    if qa > 1e-14:
        h = qb * qb - qa * qc
        if h >= 0.0:
            t = (-qb - sqrt(h)) / qa
            y = baoa + t * bard
            if y > 0.0 and y < baba:
                return t if t > 0.0 else INFINITY
    # end caps
    ocx = oax
    ocy = oay
    ocz = oaz
    qb = dx * ocx + dy * ocy + dz * ocz
    qc = ocx * ocx + ocy * ocy + ocz * ocz - r * r
    h = qb * qb - qc
    if h >= 0.0:
        t = -qb - sqrt(h)
        if t > 0.0 and t < best:
            best = t
    ocx = ox - bx
    ocy = oy - by
    ocz = oz - bz
    qb = dx * ocx + dy * ocy + dz * ocz
    qc = ocx * ocx + ocy * ocy + ocz * ocz - r * r
    h = qb * qb - qc
    if h >= 0.0:
        t = -qb - sqrt(h)
        if t > 0.0 and t < best:
            best = t
    return best


cdef inline double _box_hit(double ox, double oy, double oz, double dx, double dy, double dz,
                            double[::1] b) nogil:
    # b: center(3), rotation row-major(9), half extents(3)
    cdef double px = ox - b[0], py = oy - b[1], pz = oz - b[2]
    cdef double lo[3]
    cdef double ld[3]
    cdef int k
    cdef double tn = -INFINITY, tf = INFINITY, t1, t2, tmp
    for k in range(3):
        lo[k] = b[3 + k] * px + b[6 + k] * py + b[9 + k] * pz
        ld[k] = b[3 + k] * dx + b[6 + k] * dy + b[9 + k] * dz
    for k in range(3):
        if fabs(ld[k]) < 1e-15:
            if lo[k] < -b[12 + k] or lo[k] > b[12 + k]:
                return INFINITY
            continue
        t1 = (-b[12 + k] - lo[k]) / ld[k]
        t2 = (b[12 + k] - lo[k]) / ld[k]
        if t1 > t2:
            tmp = t1
            t1 = t2
            t2 = tmp
        if t1 > tn:
            tn = t1
        if t2 < tf:
            tf = t2
    if tn > tf or tf <= 0.0:
        return INFINITY
    return tn if tn > 0.0 else INFINITY


def raycast(double[::1] origin, double[:, ::1] dirs, double[:, ::1] caps, double[:, ::1] boxes):
    """First-hit distance and primitive id per ray (capsules first, then boxes)."""
    cdef Py_ssize_t nr = dirs.shape[0], nc = caps.shape[0], nb = boxes.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] depth = np.full(nr, INFINITY)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] hit = np.full(nr, -1, dtype=np.int64)
    cdef Py_ssize_t i, j
    cdef double t, best
    cdef cnp.int64_t bid
    cdef double ox = origin[0], oy = origin[1], oz = origin[2]
    for i in range(nr):
        best = INFINITY
        bid = -1
        for j in range(nc):
            t = _capsule_hit(ox, oy, oz, dirs[i, 0], dirs[i, 1], dirs[i, 2],
                             caps[j, 0], caps[j, 1], caps[j, 2], caps[j, 3], caps[j, 4], caps[j, 5], caps[j, 6])
            if t < best:
                best = t
                bid = j
        for j in range(nb):
            t = _box_hit(ox, oy, oz, dirs[i, 0], dirs[i, 1], dirs[i, 2], boxes[j])
            if t < best:
                best = t
                bid = nc + j
        depth[i] = best
        hit[i] = bid
    return depth, hit


cdef inline double _pt_box(double px, double py, double pz, double[::1] hx) nogil:
    cdef double ex = fabs(px) - hx[0], ey = fabs(py) - hx[1], ez = fabs(pz) - hx[2]
    if ex < 0.0:
        ex = 0.0
    if ey < 0.0:
        ey = 0.0
    if ez < 0.0:
        ez = 0.0
    return sqrt(ex * ex + ey * ey + ez * ez)


GOLDEN_ITERS = 64


def segment_box_distance(double[:, ::1] centers, double[:, ::1] rot, double[::1] half,
                         double[:, ::1] seg_a, double[:, ::1] seg_b):
    """(K, C) distances between segments and boxes sharing rotation/extents, one box per center.

    The point-to-box distance is convex along a segment, so a golden-section
    search on the segment parameter converges to the minimum.
    """
    cdef Py_ssize_t nk = centers.shape[0], ns = seg_a.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((nk, ns))
    cdef Py_ssize_t k, s, it, q
    cdef double ax[3]
    cdef double bx[3]
    cdef double lo, hi, m1, m2, f1, f2, px, py, pz
    cdef double gr = 0.6180339887498949
    for k in range(nk):
        for s in range(ns):
            for q in range(3):
                ax[q] = (rot[0, q] * (seg_a[s, 0] - centers[k, 0]) + rot[1, q] * (seg_a[s, 1] - centers[k, 1])
                         + rot[2, q] * (seg_a[s, 2] - centers[k, 2]))
                bx[q] = (rot[0, q] * (seg_b[s, 0] - centers[k, 0]) + rot[1, q] * (seg_b[s, 1] - centers[k, 1])
                         + rot[2, q] * (seg_b[s, 2] - centers[k, 2]))
            lo = 0.0
            hi = 1.0
            m1 = hi - gr * (hi - lo)
            m2 = lo + gr * (hi - lo)
            f1 = _pt_box(ax[0] + m1 * (bx[0] - ax[0]), ax[1] + m1 * (bx[1] - ax[1]), ax[2] + m1 * (bx[2] - ax[2]), half)
            f2 = _pt_box(ax[0] + m2 * (bx[0] - ax[0]), ax[1] + m2 * (bx[1] - ax[1]), ax[2] + m2 * (bx[2] - ax[2]), half)
            for it in range(GOLDEN_ITERS):
                if f1 <= f2:
                    hi = m2
                    m2 = m1
                    f2 = f1
                    m1 = hi - gr * (hi - lo)
                    f1 = _pt_box(ax[0] + m1 * (bx[0] - ax[0]), ax[1] + m1 * (bx[1] - ax[1]), ax[2] + m1 * (bx[2] - ax[2]), half)
                else:
                    lo = m1
                    m1 = m2
                    f1 = f2
                    m2 = lo + gr * (hi - lo)
                    f2 = _pt_box(ax[0] + m2 * (bx[0] - ax[0]), ax[1] + m2 * (bx[1] - ax[1]), ax[2] + m2 * (bx[2] - ax[2]), half)
            f1 = f1 if f1 < f2 else f2
            f2 = _pt_box(ax[0], ax[1], ax[2], half)
            if f2 < f1:
                f1 = f2
            f2 = _pt_box(bx[0], bx[1], bx[2], half)
            if f2 < f1:
                f1 = f2
            out[k, s] = f1
    return out
