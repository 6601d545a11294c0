"""Uniform voxel occupancy grid and line-of-sight queries.

The grid rasterizes building footprints, a canopy-height raster and a
terrain raster into cubic cells tagged with one occupancy class each.
Line-of-sight walks the exact set of cells a segment pierces; endpoint
cells never block, so an observer standing next to terrain and a target
inside its own cells do not occlude themselves.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import shapely
from shapely.geometry import shape as shapely_shape
from shapely.strtree import STRtree

from .errors import InvalidArgumentError, OutOfBoundsError
from .fsutil import atomic_write_bytes
from .geo import Landmark, PanoramaMeta

EMPTY = 0
BUILDING = 1
CANOPY = 2
TERRAIN = 3

CLASS_NAMES = {EMPTY: "empty", BUILDING: "building", CANOPY: "canopy", TERRAIN: "terrain"}
BLOCKING_DEFAULT = frozenset({BUILDING, CANOPY, TERRAIN})

DEFAULT_CELL_SIZE = 5.0
DEFAULT_EYE_HEIGHT = 1.6
DEFAULT_AXIS_SAMPLES = 8

_GRID_MAGIC = b"VXGD\n"


@dataclass
class Raster:
    """Row-major grid of values; row 0 is the northernmost row (ESRI ASCII order)."""

    xll: float
    yll: float
    cell_size: float
    values: np.ndarray
    nodata: float | None = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise InvalidArgumentError("raster values must be 2-D")
        if self.cell_size <= 0:
            raise InvalidArgumentError(f"raster cell_size must be > 0, got {self.cell_size}")

    @property
    def nrows(self) -> int:
        return self.values.shape[0]

    @property
    def ncols(self) -> int:
        return self.values.shape[1]

    def sample(self, x: np.ndarray, y: np.ndarray, default: float = 0.0) -> np.ndarray:
        """Nearest-cell values at planar points; outside/nodata yields `default`."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        col = np.floor((x - self.xll) / self.cell_size).astype(int)
        row_from_bottom = np.floor((y - self.yll) / self.cell_size).astype(int)
        row = self.nrows - 1 - row_from_bottom
        inside = (col >= 0) & (col < self.ncols) & (row >= 0) & (row < self.nrows)
        out = np.full(x.shape, default, dtype=float)
        vals = self.values[row[inside], col[inside]]
        if self.nodata is not None:
            vals = np.where(vals == self.nodata, default, vals)
        out[inside] = vals
        return out


def read_ascii_grid(path: str | Path) -> Raster:
    """Parse an ESRI ASCII grid (.asc)."""
    header: dict[str, float] = {}
    rows: list[list[float]] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if len(parts) == 2 and parts[0].lower() in {
                "ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value",
            }:
                header[parts[0].lower()] = float(parts[1])
            else:
                rows.append([float(v) for v in parts])
    for key in ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize"):
        if key not in header:
            raise InvalidArgumentError(f"ASCII grid {path}: missing header field {key!r}")
    values = np.array([v for row in rows for v in row], dtype=float)
    nrows, ncols = int(header["nrows"]), int(header["ncols"])
    if values.size != nrows * ncols:
        raise InvalidArgumentError(
            f"ASCII grid {path}: expected {nrows * ncols} values, got {values.size}"
        )
    return Raster(
        xll=header["xllcorner"],
        yll=header["yllcorner"],
        cell_size=header["cellsize"],
        values=values.reshape(nrows, ncols),
        nodata=header.get("nodata_value"),
    )


def write_ascii_grid(path: str | Path, raster: Raster) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"ncols {raster.ncols}\n")
        fh.write(f"nrows {raster.nrows}\n")
        fh.write(f"xllcorner {raster.xll}\n")
        fh.write(f"yllcorner {raster.yll}\n")
        fh.write(f"cellsize {raster.cell_size}\n")
        if raster.nodata is not None:
            fh.write(f"nodata_value {raster.nodata}\n")
        for row in raster.values:
            fh.write(" ".join(f"{v:g}" for v in row) + "\n")


@dataclass
class SceneInputs:
    """Building footprints plus optional canopy-height and terrain rasters."""

    buildings: list[tuple[shapely.Geometry, float]] = field(default_factory=list)
    canopy: Raster | None = None
    terrain: Raster | None = None
    crs: str | None = None
    canopy_crs: str | None = None
    terrain_crs: str | None = None

    def __post_init__(self) -> None:
        for _, h in self.buildings:
            if h < 0:
                raise InvalidArgumentError(f"building height must be >= 0, got {h}")
        tags = {t for t in (self.crs, self.canopy_crs, self.terrain_crs) if t is not None}
        if len(tags) > 1:
            raise InvalidArgumentError(f"scene layers disagree on CRS: {sorted(tags)}")


def load_scene(path: str | Path, height_key: str = "height") -> SceneInputs:
    """Read a scene description: footprint GeoJSON plus raster file references.

    The file is either a GeoJSON FeatureCollection of building footprints, or
    an object {"buildings": <FeatureCollection or path>, "canopy": <path.asc>,
    "terrain": <path.asc>} with paths relative to the scene file.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)

    canopy = terrain = None
    if doc.get("type") == "FeatureCollection":
        features = doc["features"]
    else:
        buildings_part = doc.get("buildings", {"type": "FeatureCollection", "features": []})
        if isinstance(buildings_part, str):
            with open(path.parent / buildings_part, encoding="utf-8") as fh:
                buildings_part = json.load(fh)
        features = buildings_part.get("features", [])
        if doc.get("canopy"):
            canopy = read_ascii_grid(path.parent / doc["canopy"])
        if doc.get("terrain"):
            terrain = read_ascii_grid(path.parent / doc["terrain"])

    buildings = []
    for i, feat in enumerate(features):
        props = feat.get("properties") or {}
        if height_key not in props:
            raise InvalidArgumentError(f"footprint feature {i}: missing {height_key!r} property")
        buildings.append((shapely_shape(feat["geometry"]), float(props[height_key])))
    return SceneInputs(buildings=buildings, canopy=canopy, terrain=terrain)


@dataclass
class VoxelGrid:
    """Dense occupancy grid; one uint8 class code per cubic cell."""

    origin: tuple[float, float, float]
    cell_size: float
    occupancy: np.ndarray  # shape (nx, ny, nz)

    def __post_init__(self) -> None:
        self.occupancy = np.ascontiguousarray(self.occupancy, dtype=np.uint8)
        if self.occupancy.ndim != 3 or min(self.occupancy.shape) < 1:
            raise InvalidArgumentError("occupancy must be a 3-D array with positive dims")
        if self.cell_size <= 0:
            raise InvalidArgumentError(f"cell_size must be > 0, got {self.cell_size}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.occupancy.shape

    @property
    def max_corner(self) -> tuple[float, float, float]:
        return tuple(o + n * self.cell_size for o, n in zip(self.origin, self.dims))

    def contains_xy(self, x: float, y: float) -> bool:
        return (
            self.origin[0] <= x <= self.max_corner[0]
            and self.origin[1] <= y <= self.max_corner[1]
        )

    def contains(self, p: tuple[float, float, float]) -> bool:
        return all(o <= v <= m for v, o, m in zip(p, self.origin, self.max_corner))

    def cell_of(self, p: tuple[float, float, float]) -> tuple[int, int, int]:
        """Cell index containing a point; boundary points snap inward."""
        idx = []
        for v, o, n in zip(p, self.origin, self.dims):
            i = int(math.floor((v - o) / self.cell_size))
            idx.append(min(max(i, 0), n - 1))
        return tuple(idx)

    def ground_elevation(self, x: float, y: float) -> float:
        """Top of the highest terrain cell in the column at (x, y); grid floor if none."""
        ix = min(max(int(math.floor((x - self.origin[0]) / self.cell_size)), 0), self.dims[0] - 1)
        iy = min(max(int(math.floor((y - self.origin[1]) / self.cell_size)), 0), self.dims[1] - 1)
        column = self.occupancy[ix, iy, :]
        terrain_layers = np.nonzero(column == TERRAIN)[0]
        if terrain_layers.size == 0:
            return self.origin[2]
        return self.origin[2] + (terrain_layers[-1] + 1) * self.cell_size

    def save(self, path: str | Path) -> None:
        header = {
            "dims": list(self.dims),
            "origin": list(self.origin),
            "cell_size": self.cell_size,
            "dtype": "uint8",
            "classes": {name: code for code, name in CLASS_NAMES.items()},
        }
        blob = json.dumps(header, sort_keys=True).encode("utf-8")
        payload = b"".join(
            [_GRID_MAGIC, len(blob).to_bytes(8, "little"), blob, self.occupancy.tobytes(order="C")]
        )
        atomic_write_bytes(path, payload)

    @classmethod
    def load(cls, path: str | Path) -> "VoxelGrid":
        with open(path, "rb") as fh:
            magic = fh.read(len(_GRID_MAGIC))
            if magic != _GRID_MAGIC:
                raise InvalidArgumentError(f"{path}: not a voxel grid dump")
            header_len = int.from_bytes(fh.read(8), "little")
            header = json.loads(fh.read(header_len).decode("utf-8"))
            dims = tuple(header["dims"])
            raw = fh.read()
        expected = dims[0] * dims[1] * dims[2]
        if len(raw) != expected:
            raise InvalidArgumentError(
                f"{path}: occupancy payload is {len(raw)} bytes, expected {expected}"
            )
        occupancy = np.frombuffer(raw, dtype=np.uint8).reshape(dims)
        return cls(
            origin=tuple(header["origin"]),
            cell_size=float(header["cell_size"]),
            occupancy=occupancy.copy(),
        )


def build_grid(
    scene: SceneInputs,
    cell_size: float = DEFAULT_CELL_SIZE,
    bounds: tuple[float, float, float, float] | None = None,
    z_range: tuple[float, float] | None = None,
) -> VoxelGrid:
    """Rasterize a scene into a voxel grid over the given (xmin, ymin, xmax, ymax).

    A cell is building-occupied iff its column center lies inside a footprint
    and its center height is below ground + building height; canopy works the
    same from the canopy raster; cells whose center lies below the terrain
    surface are terrain. Class priority where layers overlap:
    terrain > building > canopy.
    """
    if cell_size <= 0:
        raise InvalidArgumentError(f"cell_size must be > 0, got {cell_size}")
    if bounds is None:
        raise InvalidArgumentError("bounds are required")
    xmin, ymin, xmax, ymax = bounds
    if not (xmax > xmin and ymax > ymin):
        raise InvalidArgumentError(f"bounds must be non-empty, got {bounds}")

    nx = max(1, int(math.ceil((xmax - xmin) / cell_size)))
    ny = max(1, int(math.ceil((ymax - ymin) / cell_size)))
    cx = xmin + (np.arange(nx) + 0.5) * cell_size
    cy = ymin + (np.arange(ny) + 0.5) * cell_size
    gx, gy = np.meshgrid(cx, cy, indexing="ij")

    if scene.terrain is not None:
        ground = scene.terrain.sample(gx.ravel(), gy.ravel()).reshape(nx, ny)
    else:
        ground = np.zeros((nx, ny))

    building_top = np.full((nx, ny), -np.inf)
    if scene.buildings:
        polys = [p for p, _ in scene.buildings]
        heights = np.array([h for _, h in scene.buildings])
        tree = STRtree(polys)
        points = shapely.points(gx.ravel(), gy.ravel())
        pt_idx, poly_idx = tree.query(points, predicate="covered_by")
        flat_top = np.full(nx * ny, -np.inf)
        np.maximum.at(flat_top, pt_idx, heights[poly_idx])
        building_top = flat_top.reshape(nx, ny) + ground

    canopy_top = np.full((nx, ny), -np.inf)
    if scene.canopy is not None:
        ch = scene.canopy.sample(gx.ravel(), gy.ravel()).reshape(nx, ny)
        canopy_top = np.where(ch > 0, ground + ch, -np.inf)

    if z_range is not None:
        z0, z1 = z_range
        if not z1 > z0:
            raise InvalidArgumentError(f"z_range must be increasing, got {z_range}")
    else:
        if scene.terrain is not None:
            z0 = math.floor(ground.min() / cell_size) * cell_size - cell_size
        else:
            z0 = 0.0
        tops = [ground.max()]
        if np.isfinite(building_top).any():
            tops.append(building_top[np.isfinite(building_top)].max())
        if np.isfinite(canopy_top).any():
            tops.append(canopy_top[np.isfinite(canopy_top)].max())
        z1 = max(tops)
    nz = max(1, int(math.ceil((z1 - z0) / cell_size - 1e-9)))

    zc = z0 + (np.arange(nz) + 0.5) * cell_size  # cell-center heights

    occupancy = np.zeros((nx, ny, nz), dtype=np.uint8)
    zc3 = zc[np.newaxis, np.newaxis, :]
    if scene.terrain is not None:
        terrain_mask = zc3 < ground[:, :, np.newaxis]
        occupancy[terrain_mask] = TERRAIN
    free = occupancy == EMPTY
    building_mask = free & (zc3 < building_top[:, :, np.newaxis])
    occupancy[building_mask] = BUILDING
    free = occupancy == EMPTY
    canopy_mask = free & (zc3 < canopy_top[:, :, np.newaxis])
    occupancy[canopy_mask] = CANOPY

    return VoxelGrid(origin=(xmin, ymin, z0), cell_size=cell_size, occupancy=occupancy)


def _clip_segment(
    grid: VoxelGrid,
    a: np.ndarray,
    b: np.ndarray,
) -> tuple[float, float] | None:
    """Parameter range [t0, t1] of the segment inside grid bounds, or None."""
    lo = np.array(grid.origin)
    hi = np.array(grid.max_corner)
    d = b - a
    t0, t1 = 0.0, 1.0
    for axis in range(3):
        if d[axis] == 0.0:
            if a[axis] < lo[axis] or a[axis] > hi[axis]:
                return None
            continue
        ta = (lo[axis] - a[axis]) / d[axis]
        tb = (hi[axis] - a[axis]) / d[axis]
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
        if t0 > t1:
            return None
    return t0, t1


def _pierced_cells(grid: VoxelGrid, a_pt, b_pt) -> np.ndarray:
    """Indices (k, 3) of every cell whose interior the segment passes through.

    Enumerates the parametric crossings of the segment with all three plane
    families and takes the cell at each inter-crossing midpoint: the exact
    visit set of a 3-D grid walk, without a sequential loop.
    """
    a = np.asarray(a_pt, dtype=float)
    b = np.asarray(b_pt, dtype=float)
    if np.array_equal(a, b):
        return np.empty((0, 3), dtype=int)
    span = _clip_segment(grid, a, b)
    if span is None:
        return np.empty((0, 3), dtype=int)
    t0, t1 = span
    if t1 <= t0:
        return np.empty((0, 3), dtype=int)

    d = b - a
    origin = np.array(grid.origin)
    cs = grid.cell_size
    ts = [np.array([t0, t1])]
    for axis in range(3):
        if d[axis] == 0.0:
            continue
        c0 = (a[axis] + t0 * d[axis] - origin[axis]) / cs
        c1 = (a[axis] + t1 * d[axis] - origin[axis]) / cs
        k_lo = math.ceil(min(c0, c1))
        k_hi = math.floor(max(c0, c1))
        if k_hi < k_lo:
            continue
        planes = origin[axis] + np.arange(k_lo, k_hi + 1) * cs
        ts.append((planes - a[axis]) / d[axis])
    t_all = np.unique(np.concatenate(ts))
    t_all = t_all[(t_all >= t0) & (t_all <= t1)]
    if t_all.size < 2:
        t_all = np.array([t0, t1])
    widths = t_all[1:] - t_all[:-1]
    mids = ((t_all[:-1] + t_all[1:]) / 2.0)[widths > 1e-12]  # skip corner touches
    pts = a[np.newaxis, :] + mids[:, np.newaxis] * d[np.newaxis, :]
    idx = np.floor((pts - origin[np.newaxis, :]) / cs).astype(int)
    np.clip(idx, 0, np.array(grid.dims) - 1, out=idx)
    return idx


def los(
    grid: VoxelGrid,
    a: tuple[float, float, float],
    b: tuple[float, float, float],
    blocking: frozenset[int] | None = None,
) -> bool:
    """True iff no occupied cell strictly between the endpoints blocks the segment.

    Endpoint cells never block. Points outside the grid are clipped to the
    in-bounds part of the segment; an endpoint outside the grid has no cell
    to exclude.
    """
    blocking = BLOCKING_DEFAULT if blocking is None else blocking
    cells = _pierced_cells(grid, a, b)
    if cells.shape[0] == 0:
        return True
    excluded = []
    if grid.contains(a):
        excluded.append(grid.cell_of(a))
    if grid.contains(b):
        excluded.append(grid.cell_of(b))
    classes = grid.occupancy[cells[:, 0], cells[:, 1], cells[:, 2]]
    block_mask = np.isin(classes, list(blocking))
    if excluded:
        for cell in excluded:
            block_mask &= ~np.all(cells == np.array(cell), axis=1)
    return not bool(block_mask.any())


def landmark_visible_3d(
    grid: VoxelGrid,
    observer: tuple[float, ...],
    landmark: Landmark,
    n_samples: int = DEFAULT_AXIS_SAMPLES,
    eye_height: float = DEFAULT_EYE_HEIGHT,
    blocking: frozenset[int] | None = None,
) -> bool:
    """True iff any of n_samples points up the landmark's vertical axis is in LoS.

    Sample heights are the fractions k/n of the landmark height for k = 1..n,
    so n_samples=1 tests the apex alone. A 2-tuple observer is placed at
    local ground elevation plus `eye_height`; a 3-tuple is used as given.
    """
    if n_samples < 1:
        raise InvalidArgumentError(f"n_samples must be >= 1, got {n_samples}")
    lx, ly = landmark.location
    if not grid.contains_xy(lx, ly):
        raise OutOfBoundsError(
            f"landmark {landmark.landmark_id!r} at ({lx}, {ly}) is outside the grid"
        )
    if len(observer) == 2:
        ox, oy = observer
        oz = grid.ground_elevation(ox, oy) + eye_height
    else:
        ox, oy, oz = observer
    ground = grid.ground_elevation(lx, ly)
    for k in range(1, n_samples + 1):
        target = (lx, ly, ground + landmark.height * k / n_samples)
        if los(grid, (ox, oy, oz), target, blocking=blocking):
            return True
    return False


def simulate_visibility(
    grid: VoxelGrid,
    panos: list[PanoramaMeta],
    landmark: Landmark,
    n_samples: int = DEFAULT_AXIS_SAMPLES,
    eye_height: float = DEFAULT_EYE_HEIGHT,
    blocking: frozenset[int] | None = None,
) -> dict[str, bool]:
    """Per-panorama 3-D visibility verdicts, keyed by pano_id in input order."""
    return {
        pano.pano_id: landmark_visible_3d(
            grid,
            pano.location,
            landmark,
            n_samples=n_samples,
            eye_height=eye_height,
            blocking=blocking,
        )
        for pano in panos
    }


__all__ = [
    "BLOCKING_DEFAULT",
    "BUILDING",
    "CANOPY",
    "CLASS_NAMES",
    "DEFAULT_AXIS_SAMPLES",
    "DEFAULT_CELL_SIZE",
    "DEFAULT_EYE_HEIGHT",
    "EMPTY",
    "Raster",
    "SceneInputs",
    "TERRAIN",
    "VoxelGrid",
    "build_grid",
    "landmark_visible_3d",
    "load_scene",
    "los",
    "read_ascii_grid",
    "simulate_visibility",
    "write_ascii_grid",
]
