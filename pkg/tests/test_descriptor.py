import numpy as np
import pytest

from salbench.descriptor import (
    ANGLE_RANGES,
    DESCRIPTOR_SIZE,
    N_BINS,
    chi2_cross,
    chi2_distance,
    compute_fpfh_all,
    compute_spfh_all,
    darboux_angles,
    darboux_angles_batch,
    fpfh,
    spfh,
)
from salbench.geometry import PointCloud, SaliencyWarning, build_index
from helpers import fibonacci_sphere, grid_cloud


# ---- independent oracles (straight transcriptions of the defining formulas) ----

def oracle_angles(p_i, n_i, p_j, n_j):
    d = np.asarray(p_j, float) - np.asarray(p_i, float)
    d = d / np.linalg.norm(d)
    u = np.asarray(n_i, float)
    v = np.cross(u, d)
    v = v / np.linalg.norm(v)
    w = np.cross(u, v)
    alpha = abs(np.dot(v, n_j))
    phi = abs(np.dot(u, d))
    theta = abs(np.arctan2(np.dot(w, n_j), np.dot(u, n_j)))
    return alpha, phi, theta


def oracle_spfh(i, pts, nrm, r):
    hist = np.zeros(33)
    count = 0
    for j in range(len(pts)):
        if j == i or np.linalg.norm(pts[j] - pts[i]) >= r:
            continue
        a, p, t = oracle_angles(pts[i], nrm[i], pts[j], nrm[j])
        for c, (val, hi) in enumerate([(a, 1.0), (p, 1.0), (t, np.pi)]):
            b = min(int(val / hi * 11), 10)
            hist[c * 11 + b] += 1
        count += 1
    if count:
        for c in range(3):
            hist[c * 11:(c + 1) * 11] *= 100.0 / count
    return hist


def oracle_fpfh(i, pts, nrm, r):
    own = oracle_spfh(i, pts, nrm, r)
    nbrs = [j for j in range(len(pts)) if j != i and np.linalg.norm(pts[j] - pts[i]) < r]
    if not nbrs:
        return own
    acc = own.copy()
    for j in nbrs:
        acc += oracle_spfh(j, pts, nrm, r) / np.linalg.norm(pts[j] - pts[i]) / len(nbrs)
    return acc


def random_unit(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


# ---- darboux angles ----

def test_darboux_planar_pair_is_all_zero():
    a, p, t = darboux_angles((0, 0, 0), (0, 0, 1), (1, 0, 0), (0, 0, 1))
    assert (a, p, t) == (0.0, 0.0, 0.0)


def test_darboux_orthogonal_target_normal():
    a, p, t = darboux_angles((0, 0, 0), (0, 0, 1), (1, 0, 0), (1, 0, 0))
    assert a == 0.0
    assert p == 0.0
    assert t == pytest.approx(np.pi / 2)


def test_darboux_matches_formula_oracle():
    rng = np.random.default_rng(21)
    for _ in range(100):
        p_i, p_j = rng.normal(size=3), rng.normal(size=3)
        if np.linalg.norm(p_j - p_i) < 1e-6:
            continue
        n_i, n_j = random_unit(rng, 2)
        # skip near-parallel frames; the implementation perturbs those
        d = (p_j - p_i) / np.linalg.norm(p_j - p_i)
        if abs(abs(np.dot(n_i, d)) - 1.0) < 1e-6:
            continue
        got = darboux_angles(p_i, n_i, p_j, n_j)
        want = oracle_angles(p_i, n_i, p_j, n_j)
        assert got == pytest.approx(want, abs=1e-12)


def test_darboux_ranges():
    rng = np.random.default_rng(33)
    pts = rng.normal(size=(60, 3))
    nrm = random_unit(rng, 60)
    out = darboux_angles_batch(pts[0], nrm[0], pts[1:], nrm[1:])
    assert np.all(out[:, 0] >= 0) and np.all(out[:, 0] <= 1)
    assert np.all(out[:, 1] >= 0) and np.all(out[:, 1] <= 1)
    assert np.all(out[:, 2] >= 0) and np.all(out[:, 2] <= np.pi)


def test_darboux_zero_baseline_raises():
    with pytest.raises(ValueError):
        darboux_angles((1, 2, 3), (0, 0, 1), (1, 2, 3), (0, 0, 1))


def test_darboux_degenerate_frame_is_finite():
    # target straight along the normal: frame would collapse without the nudge
    out = darboux_angles((0, 0, 0), (0, 0, 1), (0, 0, 1), (0, 1, 0))
    assert np.all(np.isfinite(out))


# ---- spfh ----

def test_spfh_planar_cloud_single_bin():
    pts = grid_cloud(8, 8, 0.1)
    nrm = np.tile([0.0, 0.0, 1.0], (len(pts), 1))
    cloud = PointCloud(pts, nrm)
    index = build_index(pts)
    descs, _ = compute_spfh_all(cloud, index, 0.25)
    expected = np.zeros(DESCRIPTOR_SIZE)
    expected[[0, N_BINS, 2 * N_BINS]] = 100.0
    assert np.allclose(descs, expected)


def test_spfh_isolated_point_zero_with_warning():
    pts = np.array([[0.0, 0, 0], [10.0, 0, 0], [10.1, 0, 0]])
    nrm = np.tile([0.0, 0.0, 1.0], (3, 1))
    cloud = PointCloud(pts, nrm)
    index = build_index(pts)
    with pytest.warns(SaliencyWarning):
        descs, _ = compute_spfh_all(cloud, index, 0.5)
    assert np.all(descs[0] == 0.0)
    assert descs[1].sum() > 0


def test_spfh_matches_pairwise_oracle():
    rng = np.random.default_rng(8)
    pts = rng.uniform(-0.5, 0.5, size=(10, 3))
    nrm = random_unit(rng, 10)
    cloud = PointCloud(pts, nrm)
    index = build_index(pts)
    for i in range(10):
        got = spfh(i, cloud, index, 0.6)
        assert np.allclose(got, oracle_spfh(i, pts, nrm, 0.6), atol=1e-10)


def test_spfh_blocks_sum_to_100():
    rng = np.random.default_rng(12)
    pts = rng.uniform(-0.5, 0.5, size=(40, 3))
    cloud = PointCloud(pts, random_unit(rng, 40))
    index = build_index(pts)
    descs, _ = compute_spfh_all(cloud, index, 0.5)
    for c in range(3):
        block = descs[:, c * N_BINS:(c + 1) * N_BINS].sum(axis=1)
        assert np.allclose(block, 100.0)


def test_spfh_upper_edge_goes_to_last_bin():
    # phi = 1 exactly: neighbor straight along the normal direction would be
    # degenerate, so steer with a target normal that pins theta = pi instead
    pts = np.array([[0.0, 0, 0], [1.0, 0, 0]])
    nrm = np.array([[1.0, 0, 0], [1.0, 0, 0]])
    cloud = PointCloud(pts, nrm)
    index = build_index(pts)
    d = spfh(0, cloud, index, 2.0)
    # u parallel to baseline triggers the perturbation path; all mass stays finite
    assert d.sum() == pytest.approx(300.0)
    assert np.all(d >= 0)


# ---- fpfh ----

def test_fpfh_two_point_formula():
    rng = np.random.default_rng(4)
    pts = np.array([[0.0, 0, 0], [0.3, 0.1, -0.2]])
    nrm = random_unit(rng, 2)
    cloud = PointCloud(pts, nrm)
    index = build_index(pts)
    dist = np.linalg.norm(pts[1] - pts[0])
    s0 = spfh(0, cloud, index, 1.0)
    s1 = spfh(1, cloud, index, 1.0)
    assert np.allclose(fpfh(0, cloud, index, 1.0), s0 + s1 / dist)
    assert np.allclose(fpfh(1, cloud, index, 1.0), s1 + s0 / dist)


def test_fpfh_matches_bruteforce_oracle():
    rng = np.random.default_rng(17)
    pts = rng.uniform(-0.5, 0.5, size=(50, 3))
    nrm = random_unit(rng, 50)
    cloud = PointCloud(pts, nrm)
    got = compute_fpfh_all(cloud, 0.4)
    for i in range(50):
        assert np.allclose(got[i], oracle_fpfh(i, pts, nrm, 0.4), atol=1e-9)


def test_fpfh_equal_on_regular_polygon():
    # every vertex of a regular n-gon sees the same neighbor-distance multiset,
    # so both the SPFHs and the distance weights agree across points
    ang = 2 * np.pi * np.arange(12) / 12
    pts = np.stack([np.cos(ang), np.sin(ang), np.zeros(12)], axis=1)
    nrm = np.tile([0.0, 0.0, 1.0], (12, 1))
    cloud = PointCloud(pts, nrm)
    descs = compute_fpfh_all(cloud, 3.0)
    assert np.allclose(descs, descs[0], atol=1e-9)


def test_fpfh_isolated_point_keeps_own_spfh():
    pts = np.array([[0.0, 0, 0], [5.0, 0, 0], [5.2, 0, 0]])
    nrm = np.tile([0.0, 0.0, 1.0], (3, 1))
    cloud = PointCloud(pts, nrm)
    with pytest.warns(SaliencyWarning):
        descs = compute_fpfh_all(cloud, 0.5)
    assert np.all(descs[0] == 0.0)


def test_fpfh_rigid_motion_invariance():
    rng = np.random.default_rng(29)
    pts = fibonacci_sphere(200)
    nrm = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    base = compute_fpfh_all(PointCloud(pts, nrm), 0.5)
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    moved = PointCloud(pts @ q.T + np.array([3.0, -1.0, 2.0]), nrm @ q.T)
    rotated = compute_fpfh_all(moved, 0.5)
    assert np.max(np.abs(rotated - base)) < 1e-4


# ---- chi-squared distance ----

def test_chi2_identical_is_zero():
    rng = np.random.default_rng(1)
    a = rng.uniform(size=33)
    assert chi2_distance(a, a) == 0.0


def test_chi2_disjoint_unit_mass():
    a = np.zeros(33)
    b = np.zeros(33)
    a[0] = 1.0
    b[1] = 1.0
    assert chi2_distance(a, b) == pytest.approx(1.0)


def test_chi2_symmetric_nonnegative():
    rng = np.random.default_rng(2)
    for _ in range(50):
        a = rng.uniform(size=33)
        b = rng.uniform(size=33)
        d = chi2_distance(a, b)
        assert d >= 0
        assert d == chi2_distance(b, a)


def test_chi2_skips_zero_sum_bins():
    a = np.zeros(33)
    b = np.zeros(33)
    a[0] = b[0] = 2.0  # equal mass: zero term
    assert chi2_distance(a, b) == 0.0


def test_chi2_cross_matches_scalar_loop():
    rng = np.random.default_rng(6)
    a = rng.uniform(size=(13, 33))
    b = rng.uniform(size=(7, 33))
    a[3] = 0.0  # include an all-zero descriptor
    mat = chi2_cross(a, b, chunk=4)
    for i in range(13):
        for j in range(7):
            assert mat[i, j] == pytest.approx(chi2_distance(a[i], b[j]), abs=1e-12)
