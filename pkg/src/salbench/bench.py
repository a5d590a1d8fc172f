"""Benchmark orchestration: manifests, the scoring pipeline, report artifacts.

A manifest lists shapes (mesh or scan files plus ground truth). The pipeline
computes each requested model's map, histogram-matches it against the average
ground-truth distribution, scores it with AUC/NSS/LCC and aggregates per
class. Reports are deterministic: the same manifest, config and seed yield a
byte-identical JSON file.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy

from . import __version__
from .evaluation import (
    GroundTruth,
    MetricScores,
    aggregate_by_class,
    histogram_match,
    human_performance_curve,
    lcc,
    nss,
    reference_histogram,
    roc_auc,
    wilcoxon_rank_sum,
)
from .geometry import (
    PointCloud,
    SaliencyWarning,
    bounding_sphere,
    estimate_normals,
    gaussian_smooth_field,
    orient_normals_mst,
)
from .meshio import (
    MeshParseError,
    export_colored_map,
    load_ground_truth,
    load_mesh,
    load_scan,
    save_ground_truth,
    save_scan,
)
from .models import (
    ModelParams,
    SaliencyMap,
    compute_cs,
    compute_hs,
    compute_ls,
    compute_ms,
    compute_ps,
    compute_rs,
    minmax_normalize,
)
from .scanner import ScanConfig, icosahedron_cameras, reconstruct_partial_mesh, render_scan

BENCH_MODELS = ("LS", "MS", "CS", "PS", "RS", "HS")
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ShapeEntry:
    shape_id: str
    mesh_path: str
    gt_path: str
    class_label: str
    field_path: Optional[str] = None


@dataclass(frozen=True)
class DatasetManifest:
    shapes: Tuple[ShapeEntry, ...]
    kind: str = "watertight"

    def __post_init__(self):
        if self.kind not in ("watertight", "scans"):
            raise ValueError("kind must be 'watertight' or 'scans'")
        ids = [s.shape_id for s in self.shapes]
        if len(set(ids)) != len(ids):
            raise ValueError("shape_ids must be unique")
        object.__setattr__(self, "shapes", tuple(self.shapes))


def load_manifest(path) -> DatasetManifest:
    """Read a manifest JSON and check that every referenced file exists."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise MeshParseError(f"{path}: invalid JSON: {exc}") from exc
    base = path.parent
    shapes = []
    for row in doc.get("shapes", []):
        entry = ShapeEntry(
            shape_id=row["shape_id"],
            mesh_path=str(base / row["mesh"]),
            gt_path=str(base / row["ground_truth"]),
            class_label=row.get("class", "unlabeled"),
            field_path=str(base / row["field"]) if row.get("field") else None,
        )
        for p in (entry.mesh_path, entry.gt_path, entry.field_path):
            if p is not None and not Path(p).exists():
                raise MeshParseError(f"{path}: referenced file missing: {p}")
        shapes.append(entry)
    if not shapes:
        raise MeshParseError(f"{path}: manifest lists no shapes")
    return DatasetManifest(tuple(shapes), doc.get("kind", "watertight"))


def save_manifest(path, manifest: DatasetManifest) -> None:
    path = Path(path)
    doc = {
        "kind": manifest.kind,
        "shapes": [
            {
                "shape_id": s.shape_id,
                "mesh": _relative_to(s.mesh_path, path.parent),
                "ground_truth": _relative_to(s.gt_path, path.parent),
                "class": s.class_label,
                **({"field": _relative_to(s.field_path, path.parent)} if s.field_path else {}),
            }
            for s in manifest.shapes
        ],
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _relative_to(p: str, base: Path) -> str:
    try:
        return str(Path(p).relative_to(base))
    except ValueError:
        return str(p)


# ---------------------------------------------------------------- pipeline --

def _prepare_shape(entry: ShapeEntry, kind: str):
    """Load one shape: oriented cloud, mesh for spectral work, ground truth."""
    if kind == "scans":
        scan = load_scan(entry.mesh_path)
        if len(scan) < 3:
            raise MeshParseError(f"{entry.mesh_path}: scan too small")
        cloud = scan.cloud
        mesh = None  # reconstructed lazily, only if MS runs
    else:
        mesh = load_mesh(entry.mesh_path)
        if mesh.n_vertices < 3:
            raise MeshParseError(f"{entry.mesh_path}: mesh too small")
        cloud = PointCloud(mesh.vertices)
        scan = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SaliencyWarning)
        cloud = orient_normals_mst(estimate_normals(cloud, k=min(10, len(cloud) - 1)))
    gt = load_ground_truth(entry.gt_path, cloud.points, field_path=entry.field_path,
                           shape_id=entry.shape_id)
    return cloud, mesh, scan, gt


def _compute_map(tag: str, cloud: PointCloud, mesh, scan,
                 params: ModelParams, shape_id: str, shape_seed: int) -> SaliencyMap:
    if tag == "LS":
        return compute_ls(cloud, params, shape_id)
    if tag == "CS":
        return compute_cs(cloud, params, shape_id)
    if tag == "PS":
        return compute_ps(cloud, params, shape_id)
    if tag == "RS":
        return compute_rs(len(cloud), seed=shape_seed, shape_id=shape_id)
    if tag == "MS":
        if mesh is None:
            mesh = reconstruct_partial_mesh(scan)
        return compute_ms(mesh, params, shape_id)
    if tag == "HS":
        raise RuntimeError("HS is dispatched separately")
    raise ValueError(f"unknown model tag {tag!r}")


def _score_hs(cloud: PointCloud, gt: GroundTruth, params: ModelParams,
              shape_seed: int, ref_cdf: np.ndarray) -> Tuple[SaliencyMap, MetricScores]:
    """HS is predictive: n_p seeded participants predict the complement."""
    total = gt.n_participants
    if total <= params.n_p:
        raise ValueError(f"{total} participants cannot support n_p={params.n_p} "
                         "plus a held-out evaluator pool")
    rng = np.random.default_rng(shape_seed)
    predictors = rng.choice(total, size=params.n_p, replace=False)
    held_out = [i for i in range(total) if i not in set(predictors.tolist())]
    radius = bounding_sphere(cloud.points).radius
    smap = compute_hs(list(gt.participants), predictors, cloud.points,
                      params.sigma_hs * radius, gt.shape_id)
    matched = histogram_match(smap, ref_cdf)
    eval_sets = [gt.participants[i] for i in held_out]
    fixations = np.unique(np.concatenate(eval_sets))
    if len(fixations) == 0 or len(fixations) >= len(cloud):
        raise ValueError("held-out participants give a degenerate fixation set")
    counts = np.zeros(len(cloud))
    for sel in eval_sets:
        counts[sel] += 1.0
    field = minmax_normalize(gaussian_smooth_field(cloud.points, counts,
                                                   params.sigma_hs * radius))
    scores = MetricScores(gt.shape_id, "HS",
                          auc=roc_auc(matched, fixations),
                          nss=nss(matched, eval_sets),
                          lcc=lcc(field, matched))
    return smap, scores


def run_benchmark(
    manifest: DatasetManifest,
    models: Sequence[str],
    params: ModelParams = ModelParams(),
    out_dir=None,
    seed: int = 0,
    export_maps: bool = False,
) -> dict:
    """Score every (shape, model) pair and assemble the report dict.

    Per-shape failures are recorded under status and the run continues. When
    out_dir is given, report.json, class_summary.csv and summary figures are
    written there.
    """
    models = list(models)
    for tag in models:
        if tag not in BENCH_MODELS:
            raise ValueError(f"model {tag!r} is not benchmarkable (pick from {BENCH_MODELS})")
    if len(set(models)) != len(models):
        raise ValueError("duplicate model tags")

    entries = sorted(manifest.shapes, key=lambda s: s.shape_id)
    prepared = {}
    status: Dict[str, Dict[str, str]] = {}
    for idx, entry in enumerate(entries):
        try:
            prepared[entry.shape_id] = (idx, _prepare_shape(entry, manifest.kind))
            status[entry.shape_id] = {}
        except Exception as exc:  # recorded, run continues
            status[entry.shape_id] = {tag: f"failed: {exc}" for tag in models}

    fields = [prep[1][3].field for prep in prepared.values()]
    ref_cdf = reference_histogram(fields) if fields else None

    scores: List[MetricScores] = []
    class_map = {e.shape_id: e.class_label for e in entries}
    maps_dir = None
    if export_maps and out_dir is not None:
        maps_dir = Path(out_dir) / "maps"
        maps_dir.mkdir(parents=True, exist_ok=True)

    for entry in entries:
        if entry.shape_id not in prepared:
            continue
        idx, (cloud, mesh, scan, gt) = prepared[entry.shape_id]
        shape_seed = seed + idx
        fixations = gt.all_fixations()
        degenerate = len(fixations) == 0 or len(fixations) >= len(cloud)
        for tag in models:
            if tag == "HS" and manifest.kind == "scans":
                warnings.warn("HS has no human baseline on scan datasets; skipped",
                              SaliencyWarning)
                status[entry.shape_id][tag] = "skipped: no human baseline on scans"
                continue
            try:
                if tag == "HS":
                    smap, row = _score_hs(cloud, gt, params, shape_seed, ref_cdf)
                else:
                    if degenerate:
                        raise ValueError("ground truth fixations cover none or all points")
                    smap = _compute_map(tag, cloud, mesh, scan, params,
                                        entry.shape_id, shape_seed)
                    matched = histogram_match(smap, ref_cdf)
                    row = MetricScores(entry.shape_id, tag,
                                       auc=roc_auc(matched, fixations),
                                       nss=nss(matched, gt.participants),
                                       lcc=lcc(gt.field, matched))
                scores.append(row)
                status[entry.shape_id][tag] = "ok"
                if maps_dir is not None:
                    export_colored_map(cloud.points, smap.values,
                                       maps_dir / f"{entry.shape_id}_{tag}.ply")
            except Exception as exc:
                status[entry.shape_id][tag] = f"failed: {exc}"

    report = _assemble_report(manifest, models, params, seed, scores, status, class_map)
    if out_dir is not None:
        write_report(report, out_dir)
    return report


def _assemble_report(manifest, models, params, seed, scores, status, class_map) -> dict:
    by_model: Dict[str, Dict[str, List[float]]] = {m: {"auc": [], "nss": [], "lcc": []}
                                                   for m in models}
    for s in scores:
        for metric in ("auc", "nss", "lcc"):
            by_model[s.model][metric].append(getattr(s, metric))

    ranking = {}
    pairwise = {}
    for metric in ("auc", "nss", "lcc"):
        means = {m: float(np.mean(v[metric])) for m, v in by_model.items() if v[metric]}
        ranking[metric] = sorted(means, key=lambda m: (-means[m], m))
        mat: Dict[str, Dict[str, float]] = {}
        for a in means:
            for b in means:
                if a == b:
                    continue
                if len(by_model[a][metric]) and len(by_model[b][metric]):
                    _, p = wilcoxon_rank_sum(by_model[a][metric], by_model[b][metric])
                    mat.setdefault(a, {})[b] = p
        pairwise[metric] = mat

    summaries = {}
    scored_shapes = {s.shape_id for s in scores}
    cmap = {sid: cls for sid, cls in class_map.items() if sid in scored_shapes}
    for metric in ("auc", "nss", "lcc"):
        if scores:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", SaliencyWarning)
                agg = aggregate_by_class(scores, cmap, metric=metric)
            summaries[metric] = [
                {"class": a.class_name, "means": a.means, "half_widths": a.half_widths}
                for a in agg
            ]
        else:
            summaries[metric] = []

    return {
        "schema_version": SCHEMA_VERSION,
        "config": {
            "models": list(models),
            "seed": seed,
            "dataset_kind": manifest.kind,
            "params": dataclasses.asdict(params),
            "versions": {
                "salbench": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
        },
        "n_shapes": len(manifest.shapes),
        "scores": [
            {"shape_id": s.shape_id, "model": s.model,
             "auc": s.auc, "nss": s.nss, "lcc": s.lcc}
            for s in sorted(scores, key=lambda r: (r.shape_id, r.model))
        ],
        "status": status,
        "ranking": ranking,
        "pairwise_p": pairwise,
        "class_summaries": summaries,
    }


def all_shapes_failed(report: dict) -> bool:
    return all(
        all(v.startswith("failed") for v in per_model.values()) if per_model else True
        for per_model in report["status"].values()
    )


# ----------------------------------------------------------------- artifacts --

def write_report(report: dict, out_dir) -> None:
    """report.json + Table-style CSV + summary figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n")
    _write_class_csv(report, out / "class_summary.csv")
    try:
        _render_figures(report, out / "figures")
    except Exception as exc:  # plotting must never break a run
        warnings.warn(f"figure rendering failed: {exc}", SaliencyWarning)


def _write_class_csv(report: dict, path: Path) -> None:
    models = report["ranking"].get("auc", [])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class"] + [f"{m}_{col}" for m in models
                                     for col in ("mean", "ci95")])
        for row in report["class_summaries"].get("auc", []):
            cells = [row["class"]]
            for m in models:
                if m in row["means"]:
                    cells += [f"{row['means'][m]:.4f}", f"{row['half_widths'][m]:.4f}"]
                else:
                    cells += ["", ""]
            writer.writerow(cells)


def _render_figures(report: dict, fig_dir: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig_dir.mkdir(parents=True, exist_ok=True)
    scores = report["scores"]
    if not scores:
        return
    for metric in ("auc", "nss", "lcc"):
        models = report["ranking"][metric]
        means, errs = [], []
        for m in models:
            vals = np.array([s[metric] for s in scores if s["model"] == m])
            means.append(vals.mean())
            if len(vals) > 1:
                from scipy.stats import t as student_t
                errs.append(float(student_t.ppf(0.975, len(vals) - 1)
                                  * vals.std(ddof=1) / np.sqrt(len(vals))))
            else:
                errs.append(0.0)
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.bar(range(len(models)), means, yerr=errs, capsize=4, color="#4878CF")
        ax.set_xticks(range(len(models)))
        ax.set_xticklabels(models)
        ax.set_ylabel(metric.upper())
        ax.set_title(f"Mean {metric.upper()} per model (95% CI)")
        if metric == "auc":
            ax.axhline(0.5, color="gray", linestyle="--", linewidth=1)
        fig.tight_layout()
        fig.savefig(fig_dir / f"{metric}.png", dpi=120)
        plt.close(fig)


def plot_human_curve(curve: dict, fig_path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
    for ax, metric in zip(axes, ("auc", "nss", "lcc")):
        ax.plot(curve["n_p"], curve[metric], marker="o")
        ax.set_xlabel("participants used as predictors")
        ax.set_ylabel(metric.upper())
        ax.grid(alpha=0.3)
    fig.tight_layout()
    Path(fig_path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)


# --------------------------------------------------------------- scan maker --

def generate_scan_dataset(
    manifest: DatasetManifest,
    config: ScanConfig,
    out_dir,
    fixation_radius_factor: float = 0.01,
) -> DatasetManifest:
    """Render 12 views per watertight shape and transfer its ground truth.

    Each selected vertex moves to the nearest scan point within 0.01R of it;
    selections with no nearby scan point are dropped. Views whose transferred
    ground truth keeps no participant are excluded from the new manifest.
    """
    from scipy.spatial import cKDTree

    from .scanner import transfer_ground_truth

    if manifest.kind != "watertight":
        raise ValueError("scan generation needs a watertight manifest")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    new_entries = []
    skipped = []
    for entry in sorted(manifest.shapes, key=lambda s: s.shape_id):
        try:
            mesh = load_mesh(entry.mesh_path)
            gt = load_ground_truth(entry.gt_path, mesh.vertices,
                                   field_path=entry.field_path, shape_id=entry.shape_id)
        except Exception as exc:
            skipped.append((entry.shape_id, str(exc)))
            continue
        scale = bounding_sphere(mesh.vertices)
        cameras = icosahedron_cameras(scale, config)
        rendered_any = False
        for view, camera in enumerate(cameras):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", SaliencyWarning)
                scan = render_scan(mesh, camera, config, entry.shape_id, view)
            if len(scan) == 0:
                continue
            rendered_any = True
            field = transfer_ground_truth(gt.field, scan, mesh)
            tree = cKDTree(scan.cloud.points)
            limit = fixation_radius_factor * scale.radius
            participants = []
            for sel in gt.participants:
                dist, nearest = tree.query(mesh.vertices[sel])
                kept = nearest[dist <= limit]
                if len(kept):
                    participants.append(np.unique(kept))
            if not participants:
                continue  # nothing to evaluate against on this view
            sid = f"{entry.shape_id}_view{view:02d}"
            scan_path = out / f"{sid}.ply"
            gt_path = out / f"{sid}_gt.csv"
            field_path = out / f"{sid}_field.txt"
            save_scan(scan_path, scan)
            save_ground_truth(gt_path,
                              GroundTruth(sid, field, tuple(participants)),
                              field_path)
            new_entries.append(ShapeEntry(sid, str(scan_path), str(gt_path),
                                          entry.class_label, str(field_path)))
        if not rendered_any:
            skipped.append((entry.shape_id, "no view produced any hits"))
    if not new_entries:
        raise ValueError("no scans could be generated from this manifest")
    scan_manifest = DatasetManifest(tuple(new_entries), "scans")
    save_manifest(out / "manifest.json", scan_manifest)
    if skipped:
        warnings.warn(f"skipped shapes: {skipped}", SaliencyWarning)
    return scan_manifest


def run_human_curve(manifest: DatasetManifest, np_max: int, trials: int,
                    seed: int, out_dir=None, sigma: float = 0.03) -> dict:
    """Load ground truth for every shape and trace the inter-participant curve."""
    entries = []
    for entry in sorted(manifest.shapes, key=lambda s: s.shape_id):
        if manifest.kind == "scans":
            points = load_scan(entry.mesh_path).cloud.points
        else:
            points = load_mesh(entry.mesh_path).vertices
        gt = load_ground_truth(entry.gt_path, points, field_path=entry.field_path,
                               shape_id=entry.shape_id)
        entries.append((points, gt))
    curve = human_performance_curve(entries, np_max=np_max, trials=trials, seed=seed,
                                    sigma=sigma)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "human_curve.json").write_text(json.dumps(curve, indent=2, sort_keys=True) + "\n")
        with open(out / "human_curve.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n_p", "auc", "nss", "lcc"])
            for i in range(len(curve["n_p"])):
                writer.writerow([curve["n_p"][i], f"{curve['auc'][i]:.6f}",
                                 f"{curve['nss'][i]:.6f}", f"{curve['lcc'][i]:.6f}"])
        plot_human_curve(curve, out / "figures" / "human_curve.png")
    return curve
