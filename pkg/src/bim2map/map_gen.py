"""Occupancy grid maps from the graph world model.

A localization map marks what a planar LIDAR at height ``h`` would see: the
footprint of every selected element cut by a thin horizontal slab around
``h``. A navigation map marks everything a robot of height ``h`` could bump
into: footprints of the cuboid between the floor clearance and ``h``.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import shapely
import yaml

from .geometry import SNAP_GRID, CrossSection, MeshNotWatertightError, Slab, slab_cross_section
from .world_model import ElementFilter, Graph, query

log = logging.getLogger(__name__)

LOCALIZATION = "localization"
NAVIGATION = "navigation"

OCCUPIED_PIXEL = 0
FREE_PIXEL = 254
OCCUPIED_THRESH = 0.65
FREE_THRESH = 0.196


class MapError(ValueError):
    pass


@dataclass(frozen=True)
class MapSpec:
    """Parameters of one map; lengths in meters."""

    kind: str
    height: float
    z_floor: float = 0.0
    lidar_slab_thickness: float = 0.01
    floor_clearance: float = 0.02
    resolution: float = 0.05
    margin: float = 0.5
    filter: ElementFilter = field(default_factory=ElementFilter)

    def __post_init__(self):
        if self.kind not in (LOCALIZATION, NAVIGATION):
            raise MapError(f"unknown map kind {self.kind!r}")
        for name in ("height", "resolution", "lidar_slab_thickness"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise MapError(f"{name} must be > 0, got {v}")
        if not (math.isfinite(self.margin) and self.margin >= 0):
            raise MapError(f"margin must be >= 0, got {self.margin}")
        if not (math.isfinite(self.floor_clearance) and self.floor_clearance >= 0):
            raise MapError(f"floor_clearance must be >= 0, got {self.floor_clearance}")
        if not math.isfinite(self.z_floor):
            raise MapError("z_floor must be finite")
        if self.kind == NAVIGATION and self.height <= self.floor_clearance:
            raise MapError(f"robot height {self.height} does not clear the floor clearance {self.floor_clearance}")

    def slab(self) -> Slab:
        if self.kind == LOCALIZATION:
            z = self.z_floor + self.height
            t = self.lidar_slab_thickness / 2.0
            return Slab(z - t, z + t)
        return Slab(self.z_floor + self.floor_clearance, self.z_floor + self.height)


_OFFICE_EXCLUDED = ("OpeningElement", "FurnishingElement", "BuildingElementProxy", "FlowTerminal")

PRESETS = {
    "office-loc": dict(
        kind=LOCALIZATION,
        height=0.5,
        filter=ElementFilter(exclude_types=frozenset(_OFFICE_EXCLUDED), exclude_materials=frozenset({"Glass"})),
    ),
    # openings are voids cut out of walls, never obstacles
    "office-nav": dict(kind=NAVIGATION, height=1.5, filter=ElementFilter(exclude_types=frozenset({"OpeningElement"}))),
    "lab-loc": dict(kind=LOCALIZATION, height=0.1, filter=ElementFilter(include_types=frozenset({"Wall"}))),
    "lab-nav": dict(kind=NAVIGATION, height=0.5, filter=ElementFilter(include_types=frozenset({"Wall"}))),
}


def preset(name: str, **overrides) -> MapSpec:
    if name not in PRESETS:
        raise MapError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")
    return MapSpec(**{**PRESETS[name], **overrides})


# ---------------------------------------------------------------------------
# grid


@dataclass(eq=False)
class OccupancyGrid:
    """Boolean raster; ``cells[row, col]`` with row 0 at the lowest y.

    ``origin`` is the world pose ``(x, y, yaw)`` of the lower-left corner of
    cell ``(0, 0)``.
    """

    cells: np.ndarray
    resolution: float
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=bool)
        if self.cells.ndim != 2:
            raise MapError("cells must be a 2D array")
        if not self.resolution > 0:
            raise MapError("resolution must be > 0")
        self.origin = tuple(float(v) for v in self.origin)
        if len(self.origin) != 3:
            raise MapError("origin must be (x, y, yaw)")

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def occupied_count(self) -> int:
        return int(self.cells.sum())

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """World x of every column and y of every row."""
        x = self.origin[0] + (np.arange(self.width) + 0.5) * self.resolution
        y = self.origin[1] + (np.arange(self.height) + 0.5) * self.resolution
        return x, y

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        """(row, col) of the cell containing world point ``(x, y)``."""
        col = int(math.floor((x - self.origin[0]) / self.resolution))
        row = int(math.floor((y - self.origin[1]) / self.resolution))
        if not (0 <= row < self.height and 0 <= col < self.width):
            raise MapError(f"point ({x}, {y}) is outside the map")
        return row, col

    def occupied_cells(self) -> set[tuple[int, int]]:
        return {(int(r), int(c)) for r, c in zip(*np.nonzero(self.cells))}

    def __eq__(self, other):
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return (
            self.resolution == other.resolution
            and self.origin == other.origin
            and self.cells.shape == other.cells.shape
            and bool(np.array_equal(self.cells, other.cells))
        )

    def __repr__(self):
        return (
            f"OccupancyGrid({self.width}x{self.height}, res={self.resolution}, "
            f"origin={self.origin}, occupied={self.occupied_count})"
        )


def _cells(extent: float, res: float) -> int:
    # tolerate float noise such as 4.0000000001 / 0.05
    return max(1, int(math.ceil(extent / res - 1e-9)))


def empty_grid(bounds_xy, resolution: float, margin: float) -> OccupancyGrid:
    """All-free grid covering ``bounds_xy = (xmin, ymin, xmax, ymax)`` plus margin."""
    xmin, ymin, xmax, ymax = (float(v) for v in bounds_xy)
    w = _cells(xmax - xmin + 2 * margin, resolution)
    h = _cells(ymax - ymin + 2 * margin, resolution)
    return OccupancyGrid(np.zeros((h, w), dtype=bool), resolution, (xmin - margin, ymin - margin, 0.0))


def grid_frame(graph: Graph, spec: MapSpec) -> OccupancyGrid:
    """Empty grid for ``graph``; the frame depends on all geometry, not the filter."""
    b = graph.bounds()
    if b is None:
        return empty_grid((0.0, 0.0, 0.0, 0.0), spec.resolution, spec.margin)
    return empty_grid((b[0, 0], b[0, 1], b[1, 0], b[1, 1]), spec.resolution, spec.margin)


def rasterize(grid: OccupancyGrid, footprint) -> np.ndarray:
    """Mask of cells whose center lies in or on ``footprint`` (a shapely geometry)."""
    mask = np.zeros(grid.cells.shape, dtype=bool)
    if footprint is None or footprint.is_empty:
        return mask
    res = grid.resolution
    ox, oy = grid.origin[0], grid.origin[1]
    for poly in getattr(footprint, "geoms", [footprint]):
        if poly.is_empty:
            continue
        x0, y0, x1, y1 = poly.bounds
        c0 = max(0, int(math.floor((x0 - ox) / res - 0.5)))
        c1 = min(grid.width - 1, int(math.ceil((x1 - ox) / res - 0.5)))
        r0 = max(0, int(math.floor((y0 - oy) / res - 0.5)))
        r1 = min(grid.height - 1, int(math.ceil((y1 - oy) / res - 0.5)))
        if c1 < c0 or r1 < r0:
            continue
        cols = np.arange(c0, c1 + 1)
        rows = np.arange(r0, r1 + 1)
        xx, yy = np.meshgrid(ox + (cols + 0.5) * res, oy + (rows + 0.5) * res)
        shapely.prepare(poly)
        hit = shapely.dwithin(poly, shapely.points(xx.ravel(), yy.ravel()), SNAP_GRID).reshape(xx.shape)
        mask[r0 : r1 + 1, c0 : c1 + 1] |= hit
    return mask


# ---------------------------------------------------------------------------
# map generation


def _check_storeys(spec: MapSpec, storeys) -> None:
    slab = spec.slab()
    lo, hi = min(spec.z_floor, slab.z_low), slab.z_high
    crossing = [z for z in storeys or () if lo < z < hi]
    if crossing:
        raise MapError(
            f"map volume z in [{lo:g}, {hi:g}] crosses storey elevation(s) {crossing}; "
            "generate one storey at a time with z_floor"
        )


def _section(item, slab: Slab) -> CrossSection:
    node_id, mesh = item
    try:
        return slab_cross_section(mesh, slab, node_id)
    except MeshNotWatertightError as exc:
        log.warning("%s: %s; slicing it anyway", node_id, exc)
        return slab_cross_section(mesh, slab, node_id, require_watertight=False)


def footprints(graph: Graph, spec: MapSpec, workers: int = 1) -> list[CrossSection]:
    """Per-element cross-sections of the map volume, in node id order."""
    slab = spec.slab()
    items = [(sel.id, sel.mesh) for sel in query(graph, spec.filter)]
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(lambda it: _section(it, slab), items))
    return [_section(it, slab) for it in items]


def generate_map(graph: Graph, spec: MapSpec, workers: int = 1) -> OccupancyGrid:
    """Rasterize the footprints of ``spec``'s volume over the selected elements."""
    _check_storeys(spec, getattr(graph, "storey_elevations", None))
    grid = grid_frame(graph, spec)
    sections = footprints(graph, spec, workers)
    if not sections:
        log.warning("no element with geometry matches the filter; the map is empty")
    for cs in sections:
        # OR-merge is commutative and idempotent, so order does not matter
        grid.cells |= rasterize(grid, cs.geometry)
    return grid


def gen_localization_map(graph: Graph, spec: MapSpec, workers: int = 1) -> OccupancyGrid:
    if spec.kind != LOCALIZATION:
        raise MapError("gen_localization_map needs a localization MapSpec")
    return generate_map(graph, spec, workers)


def gen_navigation_map(graph: Graph, spec: MapSpec, workers: int = 1) -> OccupancyGrid:
    if spec.kind != NAVIGATION:
        raise MapError("gen_navigation_map needs a navigation MapSpec")
    return generate_map(graph, spec, workers)


def free_connected(grid: OccupancyGrid, a, b) -> bool:
    """Whether world points ``a`` and ``b`` are joined by 4-connected free cells."""
    start, goal = grid.cell_of(*a), grid.cell_of(*b)
    free = ~grid.cells
    if not (free[start] and free[goal]):
        return False
    seen = np.zeros_like(free)
    seen[start] = True
    todo = deque([start])
    while todo:
        r, c = todo.popleft()
        if (r, c) == goal:
            return True
        for nr, nc in ((r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)):
            if 0 <= nr < grid.height and 0 <= nc < grid.width and free[nr, nc] and not seen[nr, nc]:
                seen[nr, nc] = True
                todo.append((nr, nc))
    return False


# ---------------------------------------------------------------------------
# map_server style files


def write_grid(grid: OccupancyGrid, basename) -> tuple[Path, Path]:
    """Write ``<basename>.pgm`` and ``<basename>.yaml``; returns both paths."""
    base = Path(basename)
    if base.suffix in (".pgm", ".yaml", ".yml"):
        base = base.with_suffix("")
    pgm, meta = base.with_name(base.name + ".pgm"), base.with_name(base.name + ".yaml")
    # image row 0 is the top of the map
    raster = np.where(grid.cells[::-1], OCCUPIED_PIXEL, FREE_PIXEL).astype(np.uint8)
    with open(pgm, "wb") as fh:
        fh.write(f"P5\n{grid.width} {grid.height}\n255\n".encode("ascii"))
        fh.write(raster.tobytes())
    ox, oy, yaw = grid.origin
    text = (
        f"image: {pgm.name}\n"
        f"resolution: {grid.resolution!r}\n"
        f"origin: [{ox!r}, {oy!r}, {yaw!r}]\n"
        "negate: 0\n"
        f"occupied_thresh: {OCCUPIED_THRESH}\n"
        f"free_thresh: {FREE_THRESH}\n"
    )
    with open(meta, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return pgm, meta


def _pgm_header(data: bytes) -> tuple[int, int, int, int]:
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MapError("truncated PGM header")
        fields.append(data[start:pos])
    if fields[0] != b"P5":
        raise MapError("only binary PGM (P5) is supported")
    w, h, maxval = (int(f) for f in fields[1:])
    return w, h, maxval, pos + 1


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    w, h, maxval, start = _pgm_header(data)
    if maxval > 255:
        raise MapError("16-bit PGM is not supported")
    body = data[start : start + w * h]
    if len(body) != w * h:
        raise MapError("PGM raster is truncated")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w)


def read_grid(yaml_path) -> OccupancyGrid:
    """Load a map written by :func:`write_grid` or any map_server map.

    Pixels below the occupied threshold count as occupied; unknown pixels are
    read as free.
    """
    yaml_path = Path(yaml_path)
    if yaml_path.suffix not in (".yaml", ".yml"):
        yaml_path = yaml_path.with_name(yaml_path.name + ".yaml")
    meta = yaml.safe_load(yaml_path.read_text(encoding="utf-8"))
    image = Path(meta["image"])
    if not image.is_absolute():
        image = yaml_path.parent / image
    pixels = read_pgm(image).astype(float)
    p = pixels / 255.0 if int(meta.get("negate", 0)) else (255.0 - pixels) / 255.0
    occupied = p > float(meta.get("occupied_thresh", OCCUPIED_THRESH))
    origin = tuple(float(v) for v in meta["origin"])
    return OccupancyGrid(occupied[::-1].copy(), float(meta["resolution"]), origin)


__all__ = [
    "LOCALIZATION",
    "NAVIGATION",
    "PRESETS",
    "MapError",
    "MapSpec",
    "OccupancyGrid",
    "empty_grid",
    "footprints",
    "free_connected",
    "gen_localization_map",
    "gen_navigation_map",
    "generate_map",
    "grid_frame",
    "preset",
    "rasterize",
    "read_grid",
    "read_pgm",
    "write_grid",
]
