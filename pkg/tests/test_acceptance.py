"""Release acceptance suite: one test per shipping criterion.

Every test here re-derives its expected values from scratch (pair counting,
full enumeration, dense eigendecomposition, hand geometry) rather than
trusting the library, and each asserts a wall-clock ceiling with a wide
margin over the measured runtime. Run with -v to get one pass/fail line
per criterion; the printed summaries show up under -rA.
"""

import itertools
import json
import os
import time
import warnings
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import rankdata

from helpers import dented_cube_cloud, icosphere, jitter, sphere_with_bump
from test_descriptor import oracle_angles, oracle_spfh, random_unit

from salbench.bench import (
    generate_scan_dataset,
    load_manifest,
    run_benchmark,
)
from salbench.descriptor import (
    compute_fpfh_all,
    compute_spfh_all,
    darboux_angles,
)
from salbench.evaluation import (
    GroundTruth,
    histogram_match,
    lcc,
    nss,
    reference_histogram,
    roc_auc,
    wilcoxon_rank_sum,
)
from salbench.geometry import (
    PointCloud,
    TriangleMesh,
    bounding_sphere,
    build_index,
    estimate_normals,
    gaussian_smooth_field,
    orient_normals_mst,
)
from salbench.meshio import save_ground_truth, save_mesh
from salbench.models import (
    ModelParams,
    SaliencyMap,
    compute_cs,
    compute_ls,
    compute_ps,
    compute_rs,
    minmax_normalize,
    principal_projection,
)
from salbench.scanner import CameraPose, ScanConfig, icosahedron_cameras, render_scan


def _done(label, t0, budget, detail):
    elapsed = time.monotonic() - t0
    print(f"{label}: PASS ({detail}; {elapsed:.1f}s of {budget:.0f}s budget)")
    assert elapsed < budget


# ------------------------------------------------------------- criterion 1 --

def test_criterion_01_random_baseline_close_to_chance():
    """Uniform-random maps score chance-level AUC on synthetic meshes."""
    t0 = time.monotonic()
    rng = np.random.default_rng(77)
    aucs = []
    for k in range(5):
        verts, _ = icosphere(3)
        pts = jitter(verts, 0.01, seed=k)
        assert len(pts) >= 500
        fix = rng.choice(len(pts), 30, replace=False)
        for seed in range(100):
            aucs.append(roc_auc(compute_rs(len(pts), seed=seed).values, fix))
    mean = float(np.mean(aucs))
    assert 0.48 <= mean <= 0.52
    _done("criterion 01", t0, 60, f"mean AUC {mean:.4f} over 500 runs")


# ------------------------------------------------------------- criterion 2 --

def _pair_auc(values, fixations):
    pos = np.zeros(len(values), dtype=bool)
    pos[fixations] = True
    p, n = values[pos], values[~pos]
    wins = 0.0
    for v in p:
        wins += np.sum(v > n) + 0.5 * np.sum(v == n)
    return wins / (len(p) * len(n))


def test_criterion_02_metric_reference_values():
    """AUC matches pair counting; NSS and LCC hit their hand-computed values."""
    t0 = time.monotonic()
    rng = np.random.default_rng(21)
    worst = 0.0
    for i in range(100):
        n = int(rng.integers(5, 61))
        values = rng.random(n)
        if i % 2:
            values = np.round(values, 1)  # force ties
        k = int(rng.integers(1, n))
        fix = rng.choice(n, k, replace=False)
        worst = max(worst, abs(roc_auc(values, fix) - _pair_auc(values, fix)))
    assert worst <= 1e-12

    got = nss(np.array([0.0, 1.0, 2.0, 3.0]), [np.array([3])])
    assert abs(got - 1.3416) <= 1e-4

    x = np.linspace(0.0, 1.0, 50)
    assert lcc(x, x) == pytest.approx(1.0, abs=1e-12)
    assert lcc(x, np.full(50, 0.3)) == 0.0
    assert lcc(x, 1.0 - x) == pytest.approx(1.0, abs=1e-12)
    _done("criterion 02", t0, 10, f"AUC pair-oracle gap {worst:.2e}")


# ------------------------------------------------------------- criterion 3 --

def _enum_two_sided_p(a, b):
    pooled = np.concatenate([a, b])
    ranks = rankdata(pooled)
    n = len(a)
    w_obs = ranks[:n].sum()
    stats = np.array([
        ranks[list(c)].sum()
        for c in itertools.combinations(range(len(pooled)), n)
    ])
    lo = np.mean(stats <= w_obs + 1e-9)
    hi = np.mean(stats >= w_obs - 1e-9)
    return min(1.0, 2.0 * min(lo, hi))


def test_criterion_03_exact_ranksum_matches_enumeration():
    """Small-sample rank-sum p-values agree with full enumeration."""
    t0 = time.monotonic()
    rng = np.random.default_rng(5)
    worst = 0.0
    for i in range(200):
        n = int(rng.integers(1, 10))
        m = int(rng.integers(1, 11 - n))
        if i % 3 == 0:
            a = rng.integers(0, 5, n).astype(float)
            b = rng.integers(0, 5, m).astype(float)
        else:
            a, b = rng.random(n), rng.random(m)
        _, p = wilcoxon_rank_sum(a, b)
        worst = max(worst, abs(p - _enum_two_sided_p(a, b)))
    assert worst <= 1e-10

    _, p = wilcoxon_rank_sum([1, 2, 3], [10, 11, 12])
    assert abs(p - 0.1) <= 1e-12
    _done("criterion 03", t0, 30, f"enumeration gap {worst:.2e} over 200 draws")


# ------------------------------------------------------------- criterion 4 --

def test_criterion_04_descriptor_matches_bruteforce():
    """Histograms agree bin for bin with a direct transcription of the formulas."""
    t0 = time.monotonic()
    rng = np.random.default_rng(13)
    worst_spfh = worst_fpfh = 0.0
    for _ in range(50):
        n = int(rng.integers(10, 101))
        pts = rng.random((n, 3))
        nrm = random_unit(rng, n)
        cloud = PointCloud(pts, normals=nrm)
        index = build_index(pts)
        r = 0.35
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            spfh_got, _ = compute_spfh_all(cloud, index, r)
            fpfh_got = compute_fpfh_all(cloud, r, index=index)
        spfh_ref = np.array([oracle_spfh(i, pts, nrm, r) for i in range(n)])
        worst_spfh = max(worst_spfh, np.abs(spfh_got - spfh_ref).max())
        for i in range(n):
            nbrs = [
                j for j in range(n)
                if j != i and np.linalg.norm(pts[j] - pts[i]) < r
            ]
            acc = spfh_ref[i].copy()
            for j in nbrs:
                acc += spfh_ref[j] / np.linalg.norm(pts[j] - pts[i]) / len(nbrs)
            worst_fpfh = max(worst_fpfh, np.abs(fpfh_got[i] - acc).max())
    assert worst_spfh <= 1e-9
    assert worst_fpfh <= 1e-9

    p_i, p_j = rng.random((1000, 3)), rng.random((1000, 3)) + 0.01
    n_i, n_j = random_unit(rng, 1000), random_unit(rng, 1000)
    got = np.array([
        darboux_angles(p_i[k], n_i[k], p_j[k], n_j[k]) for k in range(1000)
    ])
    ref = np.array([
        oracle_angles(p_i[k], n_i[k], p_j[k], n_j[k]) for k in range(1000)
    ])
    assert np.abs(got - ref).max() <= 1e-9
    _done(
        "criterion 04", t0, 30,
        f"spfh gap {worst_spfh:.2e}, fpfh gap {worst_fpfh:.2e}",
    )


# ------------------------------------------------------------- criterion 5 --

def test_criterion_05_axis_projection_matches_eigendecomposition():
    """First-axis projection magnitudes match a dense covariance eigensolve."""
    t0 = time.monotonic()
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(20):
        mat = rng.normal(size=(100, 33))
        centered = mat - mat.mean(axis=0)
        _, vecs = np.linalg.eigh(centered.T @ centered)
        ref = np.abs(centered @ vecs[:, -1])
        worst = max(worst, np.abs(principal_projection(mat) - ref).max())
    assert worst <= 1e-8

    flat = np.tile(rng.random(33), (100, 1))
    assert np.all(principal_projection(flat) == 0.0)
    _done("criterion 05", t0, 10, f"eigensolve gap {worst:.2e}")


# ------------------------------------------------------------- criterion 6 --

def test_criterion_06_scanner_geometry_and_coverage(tmp_path):
    """Scans land on the surface, respect occlusion, and cover all 12 views."""
    t0 = time.monotonic()
    verts, faces = icosphere(3)
    sphere = TriangleMesh(verts, faces)
    cfg = ScanConfig(image_width=48, image_height=48)
    cameras = icosahedron_cameras(bounding_sphere(verts), cfg)
    assert len(cameras) == 12
    worst_r = 0.0
    for view, cam in enumerate(cameras):
        scan = render_scan(sphere, cam, cfg, view_index=view)
        assert len(scan.cloud) > 0
        radii = np.linalg.norm(scan.cloud.points, axis=1)
        worst_r = max(worst_r, np.abs(radii - 1.0).max())
        prov = scan.cloud.provenance
        corners = sphere.vertices[sphere.faces[prov.triangles]]
        rebuilt = np.einsum("nck,nc->nk", corners, prov.bary)
        assert np.abs(rebuilt - scan.cloud.points).max() <= 1e-6
    assert worst_r <= 0.015

    # two stacked squares: every hit must be on the near one
    quads = np.array([
        [-1, -1, 0.5], [1, -1, 0.5], [1, 1, 0.5], [-1, 1, 0.5],
        [-1, -1, -0.5], [1, -1, -0.5], [1, 1, -0.5], [-1, 1, -0.5],
    ], dtype=float)
    planes = TriangleMesh(quads, [[0, 1, 2], [0, 2, 3], [4, 5, 6], [4, 6, 7]])
    cam = CameraPose((0.0, 0.0, 3.0), (0.0, 0.0, 0.0), (1.0, 0.0, 0.0))
    scan = render_scan(planes, cam, ScanConfig(image_width=32, image_height=32))
    assert len(scan.cloud) > 0
    assert set(scan.cloud.provenance.triangles.tolist()) <= {0, 1}
    assert np.allclose(scan.cloud.points[:, 2], 0.5)

    # one watertight mesh in, exactly twelve scans out
    bverts, bfaces, _ = sphere_with_bump(2, bump_height=0.25)
    save_mesh(str(tmp_path / "orb.off"), TriangleMesh(bverts, bfaces))
    rng = np.random.default_rng(3)
    parts = tuple(
        np.unique(rng.choice(len(bverts), 32, replace=False)) for _ in range(5)
    )
    counts = np.zeros(len(bverts))
    for sel in parts:
        counts[sel] += 1.0
    gt = GroundTruth("orb", minmax_normalize(counts), parts)
    save_ground_truth(str(tmp_path / "orb_gt.csv"), gt, str(tmp_path / "orb_field.txt"))
    (tmp_path / "manifest.json").write_text(json.dumps({
        "kind": "watertight",
        "shapes": [{
            "shape_id": "orb", "mesh": "orb.off",
            "ground_truth": "orb_gt.csv", "class": "orb",
            "field": "orb_field.txt",
        }],
    }))
    manifest = load_manifest(str(tmp_path / "manifest.json"))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        scans = generate_scan_dataset(
            manifest, ScanConfig(image_width=96, image_height=96),
            str(tmp_path / "scans"),
        )
    assert len(scans.shapes) == 12
    _done("criterion 06", t0, 60, f"radius error {worst_r:.4f}, 12/12 views kept")


# ------------------------------------------------------------- criterion 7 --

def test_criterion_07_histogram_match_quality():
    """Matching reshapes distributions without disturbing rank order or AUC."""
    t0 = time.monotonic()
    rng = np.random.default_rng(42)
    ref = reference_histogram([
        minmax_normalize(rng.beta(2, 5, 4096)) for _ in range(5)
    ])
    edges = np.linspace(0.0, 1.0, 257)
    worst_ks = worst_auc = 0.0
    for i in range(50):
        vals = minmax_normalize(rng.random(4096))
        assert len(np.unique(vals)) == len(vals)  # tie-free draw
        matched = histogram_match(SaliencyMap(f"m{i}", vals, "LS"), ref)
        empirical = (
            np.searchsorted(np.sort(matched.values), edges[1:], side="right") / 4096
        )
        worst_ks = max(worst_ks, np.abs(empirical - ref).max())
        assert np.array_equal(rankdata(matched.values), rankdata(vals))
        fix = rng.choice(4096, 200, replace=False)
        worst_auc = max(
            worst_auc, abs(roc_auc(matched.values, fix) - roc_auc(vals, fix))
        )
    assert worst_ks < 2.0 / 256
    assert worst_auc < 1e-9
    _done("criterion 07", t0, 30, f"KS {worst_ks:.2e}, AUC drift {worst_auc:.2e}")


# ------------------------------------------------------------- criterion 8 --

def _marked_shapes():
    """Ten synthetic shapes with a geometrically salient region each."""
    shapes = []
    for i in range(5):
        verts, _, mask = sphere_with_bump(
            3, bump_height=0.18 + 0.03 * i, bump_width=0.35
        )
        shapes.append((f"bump{i}", jitter(verts, 0.004, seed=100 + i), mask))
    for i in range(5):
        pts, mask = dented_cube_cloud(per_face=13, depth=0.45 + 0.03 * i, rho=0.75)
        shapes.append((f"dent{i}", jitter(pts, 0.01, seed=200 + i), mask))
    return shapes


def test_criterion_08_feature_models_beat_random():
    """LS, CS and PS clearly outrank the random baseline on marked shapes."""
    t0 = time.monotonic()
    params = ModelParams(r_low=0.2, r_high=0.4, r=0.25, K=16, sigma_f=0.15)
    fields, records = [], []
    for idx, (sid, pts, mask) in enumerate(_marked_shapes()):
        rng = np.random.default_rng(1000 + idx)
        feat, rest = np.flatnonzero(mask), np.flatnonzero(~mask)
        parts = tuple(
            np.unique(np.concatenate([
                rng.choice(feat, 6, replace=False),
                rng.choice(rest, 2, replace=False),
            ]))
            for _ in range(6)
        )
        counts = np.zeros(len(pts))
        for sel in parts:
            counts[sel] += 1.0
        scale = bounding_sphere(pts)
        field = minmax_normalize(
            gaussian_smooth_field(pts, counts, 0.03 * scale.radius)
        )
        cloud = PointCloud(pts)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cloud = orient_normals_mst(estimate_normals(cloud, k=10))
        fields.append(field)
        records.append((sid, cloud, GroundTruth(sid, field, parts), idx))

    ref = reference_histogram(fields)
    aucs = {m: [] for m in ("LS", "CS", "PS", "RS")}
    for sid, cloud, gt, idx in records:
        maps = {
            "LS": compute_ls(cloud, params, shape_id=sid),
            "CS": compute_cs(cloud, params, shape_id=sid),
            "PS": compute_ps(cloud, params, shape_id=sid),
            "RS": compute_rs(len(cloud), seed=11 + idx, shape_id=sid),
        }
        for tag, smap in maps.items():
            aucs[tag].append(roc_auc(histogram_match(smap, ref), gt.all_fixations()))

    rs_mean = float(np.mean(aucs["RS"]))
    summary = [f"RS {rs_mean:.3f}"]
    for tag in ("LS", "CS", "PS"):
        mean = float(np.mean(aucs[tag]))
        _, p = wilcoxon_rank_sum(aucs[tag], aucs["RS"])
        summary.append(f"{tag} {mean:.3f} (p={p:.4f})")
        assert mean > rs_mean + 0.1
        assert p < 0.05
    _done("criterion 08", t0, 600, ", ".join(summary))


# ------------------------------------------------------------- criterion 9 --

@pytest.mark.skipif(
    "SALBENCH_SHREC07_DIR" not in os.environ,
    reason="set SALBENCH_SHREC07_DIR to a prepared mesh corpus to enable",
)
def test_criterion_09_benchmark_corpus_sanity(tmp_path):
    """On a real scanned-mesh corpus every model beats chance and LS leads."""
    t0 = time.monotonic()
    root = Path(os.environ["SALBENCH_SHREC07_DIR"])
    manifest = load_manifest(str(root / "manifest.json"))
    entries = sorted(manifest.shapes, key=lambda s: s.shape_id)
    if len(entries) > 40:
        keep = np.unique(np.linspace(0, len(entries) - 1, 40).astype(int))
        entries = [entries[i] for i in keep]
    sub = type(manifest)(tuple(entries), manifest.kind)
    models = ["LS", "MS", "CS", "PS", "RS", "HS"]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = run_benchmark(sub, models, ModelParams(), str(tmp_path), seed=0)
    means = {}
    for tag in models:
        rows = [s["auc"] for s in report["scores"] if s["model"] == tag]
        assert rows, f"no successful scores for {tag}"
        means[tag] = float(np.mean(rows))
        assert means[tag] > 0.5
    for tag in ("MS", "CS", "PS"):
        assert means["LS"] >= means[tag] - 0.02
    detail = ", ".join(f"{t} {v:.3f}" for t, v in means.items())
    _done("criterion 09", t0, 7200, detail)


# ------------------------------------------------------------ criterion 10 --

def _write_bench_shape(root, sid, seed):
    verts, faces, mask = sphere_with_bump(2, bump_height=0.25)
    pts = jitter(verts, 0.003, seed=seed)
    save_mesh(str(root / f"{sid}.off"), TriangleMesh(pts, faces))
    rng = np.random.default_rng(seed)
    feat, rest = np.flatnonzero(mask), np.flatnonzero(~mask)
    parts = tuple(
        np.unique(np.concatenate([
            rng.choice(feat, 5, replace=False),
            rng.choice(rest, 3, replace=False),
        ]))
        for _ in range(6)
    )
    counts = np.zeros(len(pts))
    for sel in parts:
        counts[sel] += 1.0
    gt = GroundTruth(sid, minmax_normalize(counts), parts)
    save_ground_truth(
        str(root / f"{sid}_gt.csv"), gt, str(root / f"{sid}_field.txt")
    )
    return {
        "shape_id": sid, "mesh": f"{sid}.off",
        "ground_truth": f"{sid}_gt.csv", "class": "orb",
        "field": f"{sid}_field.txt",
    }


def test_criterion_10_reports_are_reproducible(tmp_path):
    """Two identical benchmark runs emit byte-identical reports."""
    t0 = time.monotonic()
    data = tmp_path / "data"
    data.mkdir()
    rows = [_write_bench_shape(data, f"orb{i}", seed=50 + i) for i in range(2)]
    (data / "manifest.json").write_text(
        json.dumps({"kind": "watertight", "shapes": rows})
    )
    manifest = load_manifest(str(data / "manifest.json"))
    models = ["LS", "MS", "CS", "PS", "RS", "HS"]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        run_benchmark(manifest, models, ModelParams(), str(tmp_path / "a"), seed=3)
        run_benchmark(manifest, models, ModelParams(), str(tmp_path / "b"), seed=3)
    first = (tmp_path / "a" / "report.json").read_bytes()
    second = (tmp_path / "b" / "report.json").read_bytes()
    assert first == second
    _done("criterion 10", t0, 300, f"{len(first)} byte report, identical twice")
