"""Command-line pipeline: ingest -> localize -> detect -> graph analyses.

Stages communicate only through files; each writes its outputs atomically
and embeds the config hash and tool version (JSONL header line, CSV comment
line, JSON meta object). Exit codes: 0 success, 2 input error, 3 missing
prerequisite artifact.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .detect import (
    build_crop_specs,
    oracle_detector,
    read_detections,
    run_detection,
    validate,
    write_crop_specs,
    write_detections,
)
from .errors import PrerequisiteError, VistagraphError
from .graph import (
    VisibilityGraph,
    add_landmarks,
    add_visibility,
    build_svi_graph,
    coexistence,
    corridor_stats,
    intervisibility,
    linking_strength,
    removal_impact,
    vav_walk,
    write_paths,
)
from .io import (
    ProjectConfig,
    ProjectStore,
    atomic_write_text,
    ingest,
    read_distances_csv,
    read_edge_tags_csv,
    read_labels_csv,
    read_points_csv,
    stage_seed,
)
from .metrics import HexGrid, SquareGrid, band_scores, cumulative_curves, dice_grid, scores
from .voxel import VoxelGrid, build_grid, load_scene, simulate_visibility

EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_PREREQUISITE = 3


def _meta(cfg: ProjectConfig) -> dict:
    return {"tool_version": __version__, "config_hash": cfg.config_hash}


def _csv_header(cfg: ProjectConfig) -> str:
    return f"# vistagraph={__version__} config={cfg.config_hash}\n"


def _require_file(path: str | Path, produced_by: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise PrerequisiteError(f"{path} not found: run `vistagraph {produced_by}` first")
    return path


def _write_csv(path: str | Path, cfg: ProjectConfig, header_cols: list[str], rows: list[list]) -> None:
    lines = [_csv_header(cfg).rstrip("\n"), ",".join(header_cols)]
    for row in rows:
        lines.append(",".join(str(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def cmd_ingest(args, cfg: ProjectConfig) -> int:
    store = ingest(args.landmarks, args.panos, args.roads, args.store, cfg)
    counts = store.manifest["counts"]
    print(
        f"ingested {counts['landmarks']} landmarks, {counts['panos']} panos, "
        f"{counts['road_edges']} road edges -> {store.root}"
    )
    if store.manifest["unusable_panos"]:
        print(f"  {len(store.manifest['unusable_panos'])} panos unusable (see manifest)")
    return EXIT_OK


def cmd_localize(args, cfg: ProjectConfig) -> int:
    store = ProjectStore.open(args.store)
    specs = build_crop_specs(
        store.panos,
        store.landmarks,
        padding=cfg.padding,
        observer_height=cfg.observer_height_m,
        max_distance=cfg.buffer_radius_m,
    )
    write_crop_specs(args.out, specs, meta=_meta(cfg))
    print(f"wrote {len(specs)} crop specs -> {args.out}")
    return EXIT_OK


def cmd_simulate3d(args, cfg: ProjectConfig) -> int:
    store = ProjectStore.open(args.store)
    scene = load_scene(_require_file(args.scene, "ingest (provide --scene)"))
    xs = [p.x for p in store.panos] + [l.x for l in store.landmarks]
    ys = [p.y for p in store.panos] + [l.y for l in store.landmarks]
    pad = 2 * cfg.cell_size_m
    bounds = (min(xs) - pad, min(ys) - pad, max(xs) + pad, max(ys) + pad)
    top = max(l.height for l in store.landmarks) + 4 * cfg.cell_size_m
    grid = build_grid(scene, cell_size=cfg.cell_size_m, bounds=bounds, z_range=(0.0, top))
    if args.grid_out:
        grid.save(args.grid_out)
        print(f"wrote voxel grid -> {args.grid_out}")
    rows = []
    for lm in sorted(store.landmarks, key=lambda l: l.landmark_id):
        result = simulate_visibility(
            grid,
            store.panos,
            lm,
            n_samples=cfg.axis_samples,
            eye_height=cfg.eye_height_m,
        )
        for pano_id in sorted(result):
            rows.append([pano_id, lm.landmark_id, "visible" if result[pano_id] else "invisible"])
    _write_csv(args.out, cfg, ["pano_id", "landmark_id", "label"], rows)
    print(f"wrote {len(rows)} simulated verdicts -> {args.out}")
    return EXIT_OK


def cmd_detect(args, cfg: ProjectConfig) -> int:
    store = ProjectStore.open(args.store)
    if args.detector == "oracle":
        grid_path = _require_file(args.grid, "simulate3d --grid-out")
        grid = VoxelGrid.load(grid_path)
        detector = oracle_detector(grid, n_samples=cfg.axis_samples, eye_height=cfg.eye_height_m)
        specs = build_crop_specs(
            store.panos,
            store.landmarks,
            padding=cfg.padding,
            observer_height=cfg.observer_height_m,
            max_distance=cfg.buffer_radius_m,
        )
        records = run_detection(specs, detector, tau=cfg.tau)
    else:  # jsonl: records produced out of process against the shared schema
        records_path = _require_file(args.records, "an external detector (see README)")
        _, records = read_detections(records_path)
    write_detections(args.out, records, meta=_meta(cfg))
    visible = sum(1 for r in records if r.visible)
    print(f"wrote {len(records)} detection records ({visible} visible) -> {args.out}")
    return EXIT_OK


def cmd_graph_build(args, cfg: ProjectConfig) -> int:
    store = ProjectStore.open(args.store)
    detections_path = _require_file(args.detections, "detect")
    _, records = read_detections(detections_path)
    graph = build_svi_graph(store.roads, store.panos, snap_radius=cfg.snap_radius_m)
    add_landmarks(graph, store.landmarks, radius=cfg.landmark_radius_m)
    known = {n.node_id for n in graph.svi_nodes()}
    usable = [r for r in records if r.pano_id in known]
    skipped = len(records) - len(usable)
    add_visibility(graph, usable)
    graph.save(args.out, meta=_meta(cfg))
    print(
        f"graph: {len(graph.nodes)} nodes, {len(graph.proximity_edges())} proximity edges, "
        f"{sum(len(v) for v in graph.visibility.values())} visibility edges -> {args.out}"
    )
    if graph.unsnapped:
        print(f"  {len(graph.unsnapped)} panos beyond snap radius (kept out of graph)")
    if skipped:
        print(f"  {skipped} detection records referenced unsnapped panos")
    return EXIT_OK


def _load_graph(path: str | Path) -> VisibilityGraph:
    return VisibilityGraph.load(_require_file(path, "graph-build"))


def cmd_intervis(args, cfg: ProjectConfig) -> int:
    graph = _load_graph(args.graph)
    result = intervisibility(graph)
    mutual = {tuple(sorted(p)) for p in result.intervisible_pairs()}
    rows = []
    for b in result.landmark_ids:
        for a in result.landmark_ids:
            if a == b:
                continue
            rows.append([b, a, result.weight(b, a), str(tuple(sorted((a, b))) in mutual).lower()])
    _write_csv(args.out, cfg, ["observing_landmark", "seen_landmark", "weight", "intervisible"], rows)
    print(f"wrote intervisibility for {len(result.landmark_ids)} landmarks -> {args.out}")
    return EXIT_OK


def cmd_coexist(args, cfg: ProjectConfig) -> int:
    graph = _load_graph(args.graph)
    edges = coexistence(graph, count_subsets=args.subsets)
    rows = [[";".join(e.landmark_ids), e.count] for e in edges]
    _write_csv(args.out, cfg, ["landmark_set", "count"], rows)
    print(f"wrote {len(edges)} co-existence hyperedges -> {args.out}")
    return EXIT_OK


def cmd_vav(args, cfg: ProjectConfig) -> int:
    graph = _load_graph(args.graph)
    seed = cfg.seed if args.seed is None else args.seed
    origins = (
        [args.origin]
        if args.origin
        else sorted(
            lm.node_id for lm in graph.landmark_nodes() if graph.nodes_seeing(lm.node_id)
        )
    )
    all_paths = []
    strength_rows = []
    for origin in origins:
        paths = vav_walk(
            graph,
            origin,
            rounds=cfg.walk_rounds,
            max_steps=cfg.walk_max_steps,
            seed=stage_seed(seed, f"vav:{origin}"),
            turn_policy=cfg.turn_policy,
        )
        all_paths.extend(paths)
        strengths = linking_strength(paths, cfg.walk_rounds)
        for (o, d), s in sorted(strengths.directional.items()):
            strength_rows.append([o, d, f"{s:.6f}"])
    write_paths(args.out_paths, all_paths, meta=_meta(cfg))
    _write_csv(args.out_strengths, cfg, ["origin", "destination", "strength"], strength_rows)
    valid = sum(1 for p in all_paths if p.valid)
    print(
        f"walked {len(all_paths)} rounds over {len(origins)} origins "
        f"({valid} valid paths) -> {args.out_paths}"
    )
    if args.tags:
        tags = read_edge_tags_csv(args.tags)
        stats = corridor_stats(all_paths, tags)
        by_tag_edges: dict[str, set[str]] = {}
        for edge_id, tag in tags.items():
            by_tag_edges.setdefault(tag, set()).add(edge_id)
        rows = []
        for stat in stats:
            cut_share = removal_impact(graph, all_paths, by_tag_edges[stat.tag])
            rows.append([stat.tag, stat.path_count, f"{stat.share:.6f}", f"{cut_share:.6f}"])
        _write_csv(args.out_corridors, cfg, ["tag", "path_count", "share", "removal_cut_share"], rows)
        print(f"wrote corridor stats for {len(stats)} tags -> {args.out_corridors}")
    return EXIT_OK


def cmd_validate(args, cfg: ProjectConfig) -> int:
    _, records = read_detections(_require_file(args.detections, "detect"))
    labels = read_labels_csv(_require_file(args.labels, "labelling (or simulate3d)"))
    cm = validate(records, labels)
    overall = scores(cm)

    def truth_for(rec):
        return labels.get((rec.pano_id, rec.landmark_id), labels.get(rec.pano_id))

    observations = [(rec.d_m, rec.visible, bool(truth_for(rec))) for rec in records]
    bands = band_scores(observations, cfg.bands())
    report = {
        "meta": _meta(cfg),
        "confusion": {"tp": cm.tp, "fp": cm.fp, "tn": cm.tn, "fn": cm.fn},
        "scores": overall,
        "bands": {
            label: {
                "confusion": {
                    "tp": entry["matrix"].tp,
                    "fp": entry["matrix"].fp,
                    "tn": entry["matrix"].tn,
                    "fn": entry["matrix"].fn,
                },
                "scores": entry["scores"],
            }
            for label, entry in bands.items()
        },
    }
    atomic_write_text(args.out, json.dumps(report, sort_keys=True, indent=1) + "\n")
    if args.csv_out:
        rows = []

        def emit(scope: str, block: dict | None):
            if block is None:
                return
            rows.append([scope, "accuracy", _fmt(block["accuracy"])])
            for cls in ("visible", "invisible"):
                for metric in ("precision", "recall", "f1"):
                    rows.append([scope, f"{cls}_{metric}", _fmt(block[cls][metric])])

        emit("overall", overall)
        for label, entry in bands.items():
            emit(label, entry["scores"])
        _write_csv(args.csv_out, cfg, ["scope", "metric", "value"], rows)
    acc = overall["accuracy"]
    print(f"accuracy {acc:.4f} on {cm.total} labelled records -> {args.out}")
    return EXIT_OK


def _fmt(v) -> str:
    return "" if v is None else f"{v:.6f}"


def _binning(cfg: ProjectConfig):
    if cfg.binning_scheme == "hex":
        return HexGrid(cell_size=cfg.binning_cell_m)
    return SquareGrid(cell_size=cfg.binning_cell_m)


def cmd_dice(args, cfg: ProjectConfig) -> int:
    svi_points = read_points_csv(args.svi_points, cfg.crs)
    interest_points = read_points_csv(args.interest_points, cfg.crs)
    cells = dice_grid(svi_points, interest_points, grid=_binning(cfg))
    rows = [
        [c.cell_id, f"{c.p_svi:.6f}", f"{c.p_interest:.6f}", f"{c.dice:.6f}", c.viewpoint_class]
        for c in cells
    ]
    _write_csv(args.out, cfg, ["cell_id", "p_svi", "p_flickr", "dice", "class"], rows)
    tourism = sum(1 for c in cells if c.viewpoint_class == "tourism")
    print(f"wrote {len(cells)} dice cells ({tourism} tourism) -> {args.out}")
    return EXIT_OK


def cmd_curves(args, cfg: ProjectConfig) -> int:
    visible_d = read_distances_csv(args.visible)
    interest_d = read_distances_csv(args.interest)
    out = cumulative_curves(visible_d, interest_d, step=cfg.curve_step_m)
    lines = [
        _csv_header(cfg).rstrip("\n"),
        f"# d50_visible={out.d50_visible:g} d50_interest={out.d50_interest:g} "
        f"cosine={out.cosine_similarity:.6f}",
        "d_m,cum_visible,cum_interest",
    ]
    for d, cv, ci in zip(out.distances_m, out.visible_cumulative, out.interest_cumulative):
        lines.append(f"{d:g},{cv:.6f},{ci:.6f}")
    atomic_write_text(args.out, "\n".join(lines) + "\n")
    print(
        f"curves: d50 visible {out.d50_visible:g} m, interest {out.d50_interest:g} m, "
        f"cosine {out.cosine_similarity:.4f} -> {args.out}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vistagraph",
        description="Street-level landmark visibility analysis pipeline",
    )
    parser.add_argument("--version", action="version", version=f"vistagraph {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, **flags):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="project config JSON")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        for flag, kwargs in flags.items():
            p.add_argument(flag, **kwargs)
        p.set_defaults(func=func)
        return p

    add(
        "ingest",
        cmd_ingest,
        **{
            "--landmarks": {"required": True},
            "--panos": {"required": True},
            "--roads": {"required": True},
            "--store": {"required": True},
        },
    )
    add("localize", cmd_localize, **{"--store": {"required": True}, "--out": {"required": True}})
    add(
        "simulate3d",
        cmd_simulate3d,
        **{
            "--store": {"required": True},
            "--scene": {"required": True},
            "--out": {"required": True},
            "--grid-out": {"default": None},
        },
    )
    add(
        "detect",
        cmd_detect,
        **{
            "--store": {"required": True},
            "--detector": {"choices": ["oracle", "jsonl"], "default": "oracle"},
            "--grid": {"default": None},
            "--records": {"default": None},
            "--out": {"required": True},
        },
    )
    add(
        "graph-build",
        cmd_graph_build,
        **{
            "--store": {"required": True},
            "--detections": {"required": True},
            "--out": {"required": True},
        },
    )
    add("intervis", cmd_intervis, **{"--graph": {"required": True}, "--out": {"required": True}})
    p = add(
        "coexist",
        cmd_coexist,
        **{"--graph": {"required": True}, "--out": {"required": True}},
    )
    p.add_argument("--subsets", action="store_true", help="roll hyperedge counts up to subsets")
    add(
        "vav",
        cmd_vav,
        **{
            "--graph": {"required": True},
            "--origin": {"default": None},
            "--out-paths": {"required": True},
            "--out-strengths": {"required": True},
            "--tags": {"default": None},
            "--out-corridors": {"default": "corridors.csv"},
        },
    )
    add(
        "validate",
        cmd_validate,
        **{
            "--detections": {"required": True},
            "--labels": {"required": True},
            "--out": {"required": True},
            "--csv-out": {"default": None},
        },
    )
    add(
        "dice",
        cmd_dice,
        **{
            "--svi-points": {"required": True},
            "--interest-points": {"required": True},
            "--out": {"required": True},
        },
    )
    add(
        "curves",
        cmd_curves,
        **{
            "--visible": {"required": True},
            "--interest": {"required": True},
            "--out": {"required": True},
        },
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = ProjectConfig.load(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        return args.func(args, cfg)
    except PrerequisiteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PREREQUISITE
    except (VistagraphError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
