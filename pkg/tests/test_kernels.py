import numpy as np
import pytest

from handover import kernels

BACKENDS = kernels.backend_modules()


def brute_segment_box(center, rot, half, a, b, n=4001):
    s = np.linspace(0.0, 1.0, n)[:, None]
    pts = (a + s * (b - a) - center) @ rot
    return np.linalg.norm(np.maximum(np.abs(pts) - half, 0.0), axis=1).min()


def random_rot(rng):
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    return q * np.sign(np.linalg.det(q))


def test_selected_backend_is_importable():
    assert kernels.BACKEND in BACKENDS


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_segment_box_distance_matches_sampling(name, rng):
    mod = BACKENDS[name]
    for _ in range(30):
        rot = random_rot(rng)
        half = rng.uniform(0.01, 0.05, 3)
        centers = rng.normal(0, 0.1, (2, 3))
        a, b = rng.normal(0, 0.1, (3, 3)), rng.normal(0, 0.1, (3, 3))
        d = mod.segment_box_distance(centers, rot, half, a, b)
        for i in range(2):
            for j in range(3):
                assert d[i, j] == pytest.approx(brute_segment_box(centers[i], rot, half, a[j], b[j]), abs=2e-5)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_raycast_sphere_and_box_depths(name):
    mod = BACKENDS[name]
    dirs = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0], [-1.0, 0, 0]])
    caps = np.array([[2.0, 0, 0, 2.0, 0, 0, 0.5]])  # degenerate capsule: a sphere
    box = np.concatenate([[0.0, 3.0, 0.0], np.eye(3).ravel(), [0.5, 0.5, 0.5]])[None]
    depth, hit = mod.raycast(np.zeros(3), dirs, caps, box)
    np.testing.assert_allclose(depth[:2], [1.5, 2.5], atol=1e-12)
    assert list(hit) == [0, 1, -1, -1]
    assert np.isinf(depth[2:]).all()


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled backend not built")
def test_backends_agree(rng):
    py, cy = BACKENDS["python"], BACKENDS["cython"]
    pts = rng.normal(size=(200, 3))
    np.testing.assert_array_equal(py.fps(pts, 50), cy.fps(pts, 50))
    centers = np.arange(0, 200, 7, dtype=np.int64)
    for a, b in zip(py.ball_group(pts, centers, 0.6, 9), cy.ball_group(pts, centers, 0.6, 9)):
        np.testing.assert_array_equal(a, b)
    dirs = rng.normal(size=(500, 3))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    caps = np.hstack([rng.normal(0, 0.5, (6, 6)), rng.uniform(0.05, 0.3, (6, 1))])
    boxes = np.hstack([rng.normal(0, 0.5, (2, 3)), np.stack([random_rot(rng).ravel() for _ in range(2)]),
                       rng.uniform(0.05, 0.3, (2, 3))])
    origin = np.array([0.0, 0.0, 3.0])
    d1, h1 = py.raycast(origin, dirs, caps, boxes)
    d2, h2 = cy.raycast(origin, dirs, caps, boxes)
    np.testing.assert_array_equal(h1, h2)
    np.testing.assert_allclose(d1, d2, rtol=1e-12)
    rot = random_rot(rng)
    half = np.array([0.04, 0.01, 0.03])
    a, b = np.ascontiguousarray(caps[:, :3]), np.ascontiguousarray(caps[:, 3:6])
    s1 = py.segment_box_distance(a, rot, half, a + 0.1, b)
    s2 = cy.segment_box_distance(a, rot, half, a + 0.1, b)
    np.testing.assert_allclose(s1, s2, atol=1e-12)
