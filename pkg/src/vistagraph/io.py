"""Project configuration, ingestion and file plumbing for the pipeline.

The core geometry kernels assume planar meter coordinates. Inputs in WGS84
longitude/latitude are projected on ingest with a spherical transverse
Mercator centered on the configured origin, which keeps everything after
ingestion CRS-agnostic. All randomness downstream derives from the single
project seed via stable per-stage hashes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .errors import InvalidArgumentError, PrerequisiteError
from .fsutil import atomic_write_text
from .geo import Landmark, PanoramaMeta
from .graph import RoadNetwork
from .metrics import DistanceBand

EARTH_RADIUS_M = 6371008.8


@dataclass
class ProjectConfig:
    crs: dict = field(default_factory=lambda: {"kind": "planar"})
    buffer_radius_m: float = 3000.0
    sample_interval_m: float = 30.0
    tau: float = 0.5
    padding: float = 0.0
    observer_height_m: float = 0.0
    cell_size_m: float = 5.0
    eye_height_m: float = 1.6
    axis_samples: int = 8
    band_edges_m: list[float] = field(default_factory=lambda: [500.0, 1000.0, 1500.0])
    walk_rounds: int = 2000
    walk_max_steps: int = 80
    turn_policy: str = "no_backtrack"
    binning_scheme: str = "square"
    binning_cell_m: float = 250.0
    landmark_radius_m: float = 50.0
    snap_radius_m: float = 25.0
    curve_step_m: float = 50.0
    seed: int = 0

    def to_json_obj(self) -> dict:
        return {
            "crs": self.crs,
            "buffer_radius_m": self.buffer_radius_m,
            "sample_interval_m": self.sample_interval_m,
            "tau": self.tau,
            "padding": self.padding,
            "observer_height_m": self.observer_height_m,
            "cell_size_m": self.cell_size_m,
            "eye_height_m": self.eye_height_m,
            "axis_samples": self.axis_samples,
            "band_edges_m": self.band_edges_m,
            "walk": {
                "rounds": self.walk_rounds,
                "max_steps": self.walk_max_steps,
                "turn_policy": self.turn_policy,
            },
            "grid_binning": {"scheme": self.binning_scheme, "cell_size_m": self.binning_cell_m},
            "landmark_radius_m": self.landmark_radius_m,
            "snap_radius_m": self.snap_radius_m,
            "curve_step_m": self.curve_step_m,
            "seed": self.seed,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ProjectConfig":
        cfg = cls()
        walk = obj.get("walk", {})
        binning = obj.get("grid_binning", {})
        cfg.crs = obj.get("crs", cfg.crs)
        cfg.buffer_radius_m = float(obj.get("buffer_radius_m", cfg.buffer_radius_m))
        cfg.sample_interval_m = float(obj.get("sample_interval_m", cfg.sample_interval_m))
        cfg.tau = float(obj.get("tau", cfg.tau))
        cfg.padding = float(obj.get("padding", cfg.padding))
        cfg.observer_height_m = float(obj.get("observer_height_m", cfg.observer_height_m))
        cfg.cell_size_m = float(obj.get("cell_size_m", cfg.cell_size_m))
        cfg.eye_height_m = float(obj.get("eye_height_m", cfg.eye_height_m))
        cfg.axis_samples = int(obj.get("axis_samples", cfg.axis_samples))
        cfg.band_edges_m = [float(v) for v in obj.get("band_edges_m", cfg.band_edges_m)]
        cfg.walk_rounds = int(walk.get("rounds", cfg.walk_rounds))
        cfg.walk_max_steps = int(walk.get("max_steps", cfg.walk_max_steps))
        cfg.turn_policy = walk.get("turn_policy", cfg.turn_policy)
        cfg.binning_scheme = binning.get("scheme", cfg.binning_scheme)
        cfg.binning_cell_m = float(binning.get("cell_size_m", cfg.binning_cell_m))
        cfg.landmark_radius_m = float(obj.get("landmark_radius_m", cfg.landmark_radius_m))
        cfg.snap_radius_m = float(obj.get("snap_radius_m", cfg.snap_radius_m))
        cfg.curve_step_m = float(obj.get("curve_step_m", cfg.curve_step_m))
        cfg.seed = int(obj.get("seed", cfg.seed))
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ProjectConfig":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise PrerequisiteError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise InvalidArgumentError(f"config {path}: invalid JSON ({exc})") from exc
        return cls.from_json_obj(obj)

    def save(self, path: str | Path) -> None:
        atomic_write_text(path, json.dumps(self.to_json_obj(), sort_keys=True, indent=1) + "\n")

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.to_json_obj(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]

    def bands(self) -> list[DistanceBand]:
        edges = [0.0, *self.band_edges_m, math.inf]
        return [DistanceBand(lo, hi) for lo, hi in zip(edges, edges[1:])]


def stage_seed(seed: int, stage: str) -> int:
    """Per-stage sub-seed: stable hash of (project seed, stage name)."""
    digest = hashlib.sha256(f"{seed}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def project_wgs84(lon: float, lat: float, lon0: float, lat0: float) -> tuple[float, float]:
    """Spherical transverse Mercator centered at (lon0, lat0), in meters."""
    lam = math.radians(lon - lon0)
    phi = math.radians(lat)
    b = math.cos(phi) * math.sin(lam)
    if abs(b) >= 1.0:
        raise InvalidArgumentError(f"point ({lon}, {lat}) projects to infinity from lon0={lon0}")
    x = 0.5 * EARTH_RADIUS_M * math.log((1 + b) / (1 - b))
    y = EARTH_RADIUS_M * (math.atan2(math.tan(phi), math.cos(lam)) - math.radians(lat0))
    return (x, y)


def _xy_from_row(row: dict, crs: dict, where: str) -> tuple[float, float]:
    if "x" in row and "y" in row:
        return float(row["x"]), float(row["y"])
    if "lon" in row and "lat" in row:
        if crs.get("kind") != "wgs84":
            raise InvalidArgumentError(
                f"{where}: lon/lat given but config crs.kind is {crs.get('kind')!r}"
            )
        return project_wgs84(float(row["lon"]), float(row["lat"]), crs["lon0"], crs["lat0"])
    raise InvalidArgumentError(f"{where}: need x/y or lon/lat coordinates")


@dataclass
class ProjectStore:
    """Validated, planar-projected inputs plus the ingest manifest."""

    root: Path
    landmarks: list[Landmark]
    panos: list[PanoramaMeta]
    roads: RoadNetwork
    manifest: dict

    @classmethod
    def open(cls, root: str | Path) -> "ProjectStore":
        root = Path(root)
        manifest_path = root / "manifest.json"
        if not manifest_path.exists():
            raise PrerequisiteError(
                f"no project store at {root}: run `vistagraph ingest` first"
            )
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        landmarks = [
            Landmark(
                landmark_id=o["landmark_id"],
                name=o.get("name", o["landmark_id"]),
                x=float(o["x"]),
                y=float(o["y"]),
                height=float(o["height_m"]),
                query_image_ref=o.get("query_image_ref", ""),
            )
            for o in json.loads((root / "landmarks.json").read_text(encoding="utf-8"))
        ]
        panos = []
        for line in (root / "panos.jsonl").read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            o = json.loads(line)
            panos.append(
                PanoramaMeta(
                    pano_id=o["pano_id"],
                    x=float(o["x"]),
                    y=float(o["y"]),
                    heading=float(o["heading"]),
                    width=int(o["width"]),
                    height=int(o["height"]),
                    vertical_fov=float(o.get("vertical_fov", 180.0)),
                )
            )
        roads_obj = json.loads((root / "roads.json").read_text(encoding="utf-8"))
        roads = RoadNetwork(
            nodes={n["node_id"]: (float(n["x"]), float(n["y"])) for n in roads_obj["nodes"]},
            edges=[(e["edge_id"], e["u"], e["v"]) for e in roads_obj["edges"]],
        )
        return cls(root=root, landmarks=landmarks, panos=panos, roads=roads, manifest=manifest)


def _read_landmarks_file(path: Path, crs: dict) -> list[dict]:
    doc = json.loads(path.read_text(encoding="utf-8"))
    items = doc["landmarks"] if isinstance(doc, dict) and "landmarks" in doc else doc
    if not isinstance(items, list) or not items:
        raise InvalidArgumentError(f"{path}: expected a non-empty landmark list")
    out = []
    for i, o in enumerate(items):
        where = f"{path}:landmark[{i}]"
        for key in ("landmark_id", "height_m"):
            if key not in o:
                raise InvalidArgumentError(f"{where}: missing field {key!r}")
        x, y = _xy_from_row(o, crs, where)
        out.append(
            {
                "landmark_id": o["landmark_id"],
                "name": o.get("name", o["landmark_id"]),
                "x": x,
                "y": y,
                "height_m": float(o["height_m"]),
                "query_image_ref": o.get("query_image_ref", ""),
            }
        )
    return out


_PANO_REQUIRED = ("pano_id", "width", "height")


def _read_pano_rows(path: Path) -> list[tuple[int, dict]]:
    rows: list[tuple[int, dict]] = []
    if path.suffix.lower() == ".csv":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            for i, row in enumerate(reader, start=2):  # header is line 1
                rows.append((i, {k: v for k, v in row.items() if v not in (None, "")}))
    else:
        with open(path, encoding="utf-8") as fh:
            for i, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rows.append((i, json.loads(line)))
                except json.JSONDecodeError as exc:
                    raise InvalidArgumentError(f"{path}:{i}: invalid JSON ({exc})") from exc
    return rows


def _read_roads_file(path: Path, crs: dict) -> tuple[dict, list]:
    if path.suffix.lower() == ".csv":
        nodes: dict[str, tuple[float, float]] = {}
        edges = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            required = {"edge_id", "u", "v", "ux", "uy", "vx", "vy"}
            if not required.issubset(set(reader.fieldnames or [])):
                raise InvalidArgumentError(
                    f"{path}: road CSV needs columns {sorted(required)}"
                )
            for i, row in enumerate(reader, start=2):
                try:
                    nodes.setdefault(row["u"], (float(row["ux"]), float(row["uy"])))
                    nodes.setdefault(row["v"], (float(row["vx"]), float(row["vy"])))
                    edges.append((row["edge_id"], row["u"], row["v"]))
                except (KeyError, ValueError) as exc:
                    raise InvalidArgumentError(f"{path}:{i}: malformed road row ({exc})") from exc
        return nodes, edges

    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("type") == "FeatureCollection":
        nodes = {}
        edges = []
        def node_for(coord):
            key = f"rn{len(nodes)}"
            for existing, loc in nodes.items():
                if loc == (coord[0], coord[1]):
                    return existing
            nodes[key] = (coord[0], coord[1])
            return key

        for i, feat in enumerate(doc.get("features", [])):
            geom = feat.get("geometry", {})
            if geom.get("type") != "LineString":
                raise InvalidArgumentError(f"{path}: feature {i} is not a LineString")
            coords = geom["coordinates"]
            if crs.get("kind") == "wgs84":
                coords = [project_wgs84(c[0], c[1], crs["lon0"], crs["lat0"]) for c in coords]
            edge_id = str((feat.get("properties") or {}).get("edge_id", f"e{i}"))
            # polyline becomes a chain of straight edges
            for j, (a, b) in enumerate(zip(coords, coords[1:])):
                u = node_for(a)
                v = node_for(b)
                suffix = f".{j}" if len(coords) > 2 else ""
                edges.append((edge_id + suffix, u, v))
        return nodes, edges

    nodes = {}
    for n in doc["nodes"]:
        x, y = _xy_from_row(n, crs, f"{path}:node {n.get('node_id')}")
        nodes[n["node_id"]] = (x, y)
    edges = [(e["edge_id"], e["u"], e["v"]) for e in doc["edges"]]
    return nodes, edges


def ingest(
    landmarks_path: str | Path,
    panos_path: str | Path,
    roads_path: str | Path,
    store_dir: str | Path,
    config: ProjectConfig,
) -> ProjectStore:
    """Validate raw inputs, project to planar meters, write the project store.

    Referential integrity enforced here: unique pano ids (duplicates are an
    error naming both lines), finite coordinates, headings present (panos
    without heading are excluded and listed in the manifest as unusable).
    """
    landmarks_path = Path(landmarks_path)
    panos_path = Path(panos_path)
    roads_path = Path(roads_path)
    store = Path(store_dir)
    warnings: list[str] = []

    crs = dict(config.crs)
    if crs.get("kind") == "wgs84" and ("lon0" not in crs or "lat0" not in crs):
        raise InvalidArgumentError("crs.kind=wgs84 requires lon0/lat0 in the config")

    landmark_rows = _read_landmarks_file(landmarks_path, crs)

    pano_rows = _read_pano_rows(panos_path)
    if not pano_rows:
        raise InvalidArgumentError(
            f"{panos_path}: no panorama rows found; at least one pano with "
            f"pano_id, coordinates, heading, width and height is required"
        )
    seen_lines: dict[str, int] = {}
    panos_out: list[dict] = []
    unusable: list[dict] = []
    for line_no, row in pano_rows:
        where = f"{panos_path}:{line_no}"
        for key in _PANO_REQUIRED:
            if key not in row:
                raise InvalidArgumentError(f"{where}: missing field {key!r}")
        pano_id = str(row["pano_id"])
        if pano_id in seen_lines:
            raise InvalidArgumentError(
                f"duplicate pano_id {pano_id!r} at {panos_path} lines "
                f"{seen_lines[pano_id]} and {line_no}"
            )
        seen_lines[pano_id] = line_no
        x, y = _xy_from_row(row, crs, where)
        if "heading" not in row:
            unusable.append({"pano_id": pano_id, "reason": "missing heading"})
            continue
        try:
            heading = float(row["heading"]) % 360.0
            obj = {
                "pano_id": pano_id,
                "x": x,
                "y": y,
                "heading": heading,
                "width": int(row["width"]),
                "height": int(row["height"]),
            }
            if "vertical_fov" in row:
                obj["vertical_fov"] = float(row["vertical_fov"])
            PanoramaMeta(
                pano_id=pano_id,
                x=x,
                y=y,
                heading=heading,
                width=obj["width"],
                height=obj["height"],
                vertical_fov=obj.get("vertical_fov", 180.0),
            )
        except (ValueError, InvalidArgumentError) as exc:
            raise InvalidArgumentError(f"{where}: {exc}") from exc
        panos_out.append(obj)
    if not panos_out:
        raise InvalidArgumentError(
            f"{panos_path}: no usable panoramas (all rows missing heading)"
        )

    road_nodes, road_edges = _read_roads_file(roads_path, crs)

    manifest = {
        "tool_version": __version__,
        "config_hash": config.config_hash,
        "counts": {
            "landmarks": len(landmark_rows),
            "panos": len(panos_out),
            "road_nodes": len(road_nodes),
            "road_edges": len(road_edges),
        },
        "unusable_panos": unusable,
        "warnings": warnings,
    }

    store.mkdir(parents=True, exist_ok=True)
    atomic_write_text(store / "landmarks.json", json.dumps(landmark_rows, sort_keys=True, indent=1) + "\n")
    atomic_write_text(
        store / "panos.jsonl",
        "\n".join(json.dumps(o, sort_keys=True) for o in panos_out) + "\n",
    )
    atomic_write_text(
        store / "roads.json",
        json.dumps(
            {
                "nodes": [
                    {"node_id": nid, "x": x, "y": y} for nid, (x, y) in sorted(road_nodes.items())
                ],
                "edges": [
                    {"edge_id": e, "u": u, "v": v} for e, u, v in sorted(road_edges)
                ],
            },
            sort_keys=True,
            indent=1,
        )
        + "\n",
    )
    atomic_write_text(store / "manifest.json", json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return ProjectStore.open(store)


def _csv_reader(fh) -> csv.DictReader:
    """DictReader that skips '#' comment lines (stage outputs carry one)."""
    return csv.DictReader(line for line in fh if not line.startswith("#"))


def read_labels_csv(path: str | Path) -> dict:
    """Ground truth: pano_id[,landmark_id],label with label in {visible, invisible, 1, 0}."""
    labels: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = _csv_reader(fh)
        if reader.fieldnames is None or "pano_id" not in reader.fieldnames or "label" not in reader.fieldnames:
            raise InvalidArgumentError(f"{path}: labels CSV needs pano_id and label columns")
        has_lm = "landmark_id" in reader.fieldnames
        for i, row in enumerate(reader, start=2):
            raw = (row["label"] or "").strip().lower()
            if raw in ("visible", "1", "true"):
                value = True
            elif raw in ("invisible", "0", "false"):
                value = False
            else:
                raise InvalidArgumentError(f"{path}:{i}: unknown label {row['label']!r}")
            key = (row["pano_id"], row["landmark_id"]) if has_lm and row.get("landmark_id") else row["pano_id"]
            labels[key] = value
    return labels


def read_points_csv(path: str | Path, crs: dict | None = None) -> list[tuple[float, float]]:
    """Geotagged points: x,y columns (or lon,lat with a wgs84 crs); optional d_m passthrough."""
    points = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = _csv_reader(fh)
        for i, row in enumerate(reader, start=2):
            try:
                points.append(_xy_from_row(row, crs or {"kind": "planar"}, f"{path}:{i}"))
            except (ValueError, KeyError) as exc:
                raise InvalidArgumentError(f"{path}:{i}: malformed point row ({exc})") from exc
    if not points:
        raise InvalidArgumentError(f"{path}: no point rows")
    return points


def read_distances_csv(path: str | Path) -> list[float]:
    """Distance sets for the cumulative curves: a d_m column."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = _csv_reader(fh)
        if reader.fieldnames is None or "d_m" not in reader.fieldnames:
            raise InvalidArgumentError(f"{path}: needs a d_m column")
        for i, row in enumerate(reader, start=2):
            try:
                out.append(float(row["d_m"]))
            except ValueError as exc:
                raise InvalidArgumentError(f"{path}:{i}: bad distance ({exc})") from exc
    if not out:
        raise InvalidArgumentError(f"{path}: no rows")
    return out


def read_edge_tags_csv(path: str | Path) -> dict[str, str]:
    tags = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = _csv_reader(fh)
        if reader.fieldnames is None or not {"edge_id", "tag"}.issubset(reader.fieldnames):
            raise InvalidArgumentError(f"{path}: tags CSV needs edge_id and tag columns")
        for row in reader:
            tags[row["edge_id"]] = row["tag"]
    return tags


__all__ = [
    "EARTH_RADIUS_M",
    "ProjectConfig",
    "ProjectStore",
    "atomic_write_text",
    "ingest",
    "project_wgs84",
    "read_distances_csv",
    "read_edge_tags_csv",
    "read_labels_csv",
    "read_points_csv",
    "stage_seed",
]
