"""Command-line front end.

Subcommands: compute (one model on one mesh), scan (render a scan dataset),
bench (full scoring pipeline), human-curve (inter-participant baseline),
compare (pairwise significance from an existing report).

Exit codes: 0 success, 1 usage error, 2 data error, 3 every shape failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import warnings
from pathlib import Path

from .bench import (
    BENCH_MODELS,
    all_shapes_failed,
    generate_scan_dataset,
    load_manifest,
    run_benchmark,
    run_human_curve,
)
from .evaluation import wilcoxon_rank_sum
from .geometry import PointCloud, estimate_normals, orient_normals_mst
from .meshio import MeshParseError, export_colored_map, load_mesh
from .models import (
    ModelParams,
    compute_cs,
    compute_ls,
    compute_ms,
    compute_ps,
    compute_rs,
)
from .scanner import ScanConfig

USAGE_ERROR = 1
DATA_ERROR = 2
ALL_FAILED = 3

_MODEL_FIELDS = {f.name: f.type for f in dataclasses.fields(ModelParams)}
_SCAN_FIELDS = {f.name: f.type for f in dataclasses.fields(ScanConfig)}


class UsageError(Exception):
    pass


def _coerce(raw: str):
    raw = raw.strip().strip('"').strip("'")
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null"):
        return None
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def load_params_file(path) -> dict:
    """JSON object or flat key=value lines (a TOML-style subset)."""
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise UsageError(f"{path}: expected a JSON object")
        return doc
    out = {}
    for lineno, ln in enumerate(text.splitlines(), start=1):
        ln = ln.split("#", 1)[0].strip()
        if not ln or ln.startswith("["):
            continue
        if "=" not in ln:
            raise UsageError(f"{path}: line {lineno}: expected key = value")
        key, _, raw = ln.partition("=")
        out[key.strip()] = _coerce(raw)
    return out


def split_params(doc: dict):
    """Route config keys to ModelParams and ScanConfig; reject strangers."""
    model_kw, scan_kw = {}, {}
    for key, value in doc.items():
        if key in _MODEL_FIELDS:
            model_kw[key] = value
        elif key in _SCAN_FIELDS:
            scan_kw[key] = value
        else:
            raise UsageError(f"unknown config key {key!r}")
    try:
        return ModelParams(**model_kw), ScanConfig(**scan_kw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad config value: {exc}") from exc


def _load_config(args) -> tuple:
    doc = load_params_file(args.params) if getattr(args, "params", None) else {}
    return split_params(doc)


def _prepared_cloud(mesh) -> PointCloud:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cloud = PointCloud(mesh.vertices)
        return orient_normals_mst(estimate_normals(cloud, k=min(10, len(cloud) - 1)))


def _cmd_compute(args) -> int:
    tag = args.model.upper()
    if tag not in ("LS", "MS", "CS", "PS", "RS"):
        raise UsageError(f"compute supports LS, MS, CS, PS, RS (got {args.model!r})")
    params, _ = _load_config(args)
    mesh = load_mesh(args.mesh)
    if tag == "MS":
        smap = compute_ms(mesh, params, shape_id=Path(args.mesh).stem)
    elif tag in ("LS", "CS", "PS"):
        cloud = _prepared_cloud(mesh)
        fn = {"LS": compute_ls, "CS": compute_cs, "PS": compute_ps}[tag]
        smap = fn(cloud, params, shape_id=Path(args.mesh).stem)
    else:
        smap = compute_rs(mesh.n_vertices, seed=params.seed, shape_id=Path(args.mesh).stem)
    out = Path(args.out)
    if out.suffix.lower() == ".ply":
        export_colored_map(mesh, smap.values, out)
    else:
        out.write_text("".join(f"{v:.10g}\n" for v in smap.values))
    print(f"{tag} map for {args.mesh}: {len(smap)} values -> {out}")
    return 0


def _cmd_scan(args) -> int:
    _, scan_config = _load_config(args)
    manifest = load_manifest(args.manifest)
    out = generate_scan_dataset(manifest, scan_config, args.out)
    print(f"{len(out.shapes)} scans -> {Path(args.out) / 'manifest.json'}")
    return 0


def _cmd_bench(args) -> int:
    params, _ = _load_config(args)
    if args.exact_ls:
        params = dataclasses.replace(params, ls_exact=True)
    models = [m.strip().upper() for m in args.models.split(",") if m.strip()]
    if not models:
        raise UsageError("no models requested")
    for tag in models:
        if tag not in BENCH_MODELS:
            raise UsageError(f"unknown model {tag!r}; pick from {', '.join(BENCH_MODELS)}")
    manifest = load_manifest(args.manifest)
    report = run_benchmark(manifest, models, params, out_dir=args.out,
                           seed=args.seed, export_maps=args.export_maps)
    ok = sum(1 for per in report["status"].values()
             for v in per.values() if v == "ok")
    print(f"{ok} (shape, model) pairs scored -> {Path(args.out) / 'report.json'}")
    if all_shapes_failed(report):
        print("every shape failed", file=sys.stderr)
        return ALL_FAILED
    return 0


def _cmd_human_curve(args) -> int:
    manifest = load_manifest(args.manifest)
    curve = run_human_curve(manifest, np_max=args.np_max, trials=args.trials,
                            seed=args.seed, out_dir=args.out)
    for i, n_p in enumerate(curve["n_p"]):
        print(f"n_p={n_p}: auc={curve['auc'][i]:.4f} nss={curve['nss'][i]:.4f} "
              f"lcc={curve['lcc'][i]:.4f}")
    return 0


def _cmd_compare(args) -> int:
    if args.test != "wilcoxon":
        raise UsageError(f"unsupported test {args.test!r}")
    try:
        report = json.loads(Path(args.report).read_text())
    except json.JSONDecodeError as exc:
        raise MeshParseError(f"{args.report}: invalid JSON: {exc}") from exc
    scores = report.get("scores", [])
    if not scores:
        raise MeshParseError(f"{args.report}: report has no scores")
    metric = args.metric
    by_model = {}
    for row in scores:
        by_model.setdefault(row["model"], []).append(row[metric])
    models = sorted(by_model)
    print("model\t" + "\t".join(models))
    for a in models:
        cells = []
        for b in models:
            if a == b:
                cells.append("-")
            else:
                _, p = wilcoxon_rank_sum(by_model[a], by_model[b])
                cells.append(f"{p:.4f}")
        print(a + "\t" + "\t".join(cells))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="salbench",
        description="Benchmark saliency models on 3D surfaces.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute", help="run one model on one mesh")
    p.add_argument("--model", required=True)
    p.add_argument("--mesh", required=True)
    p.add_argument("--params", help="JSON or key=value config file")
    p.add_argument("--out", required=True, help=".ply for a colored map, else plain text")
    p.set_defaults(func=_cmd_compute)

    p = sub.add_parser("scan", help="render 12 views per mesh with transferred ground truth")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--params", help="JSON or key=value config file")
    p.set_defaults(func=_cmd_scan)

    p = sub.add_parser("bench", help="score models against ground truth")
    p.add_argument("--manifest", required=True)
    p.add_argument("--models", required=True, help="comma-separated tags, e.g. LS,CS,RS")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--exact-ls", action="store_true",
                   help="force the quadratic LS distinctiveness path")
    p.add_argument("--export-maps", action="store_true",
                   help="write colored PLY maps next to the report")
    p.add_argument("--params", help="JSON or key=value config file")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("human-curve", help="inter-participant prediction baseline")
    p.add_argument("--manifest", required=True)
    p.add_argument("--np-max", type=int, default=11)
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_human_curve)

    p = sub.add_parser("compare", help="pairwise significance from a report")
    p.add_argument("--report", required=True)
    p.add_argument("--test", default="wilcoxon")
    p.add_argument("--metric", default="auc", choices=("auc", "nss", "lcc"))
    p.set_defaults(func=_cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses exit code 2 for usage problems; route to our scheme
        return 0 if exc.code in (0, None) else USAGE_ERROR
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (MeshParseError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
