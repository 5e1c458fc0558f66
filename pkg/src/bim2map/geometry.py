"""Meshes, tessellation of IFC solids, and slab cross-sections.

Coordinates are meters. A :class:`Mesh` keeps its vertices in a local frame
together with the homogeneous transform ``transform`` (local -> global).
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import shapely
from shapely.geometry import MultiPolygon, Polygon, box
from shapely.geometry.polygon import orient

from .ifc_model import ExtrudedAreaSolid, FacetedMesh, Placement

SNAP_GRID = 1e-7
ROTATION_TOL = 1e-9
MIN_PROFILE_AREA = 1e-12


class GeometryError(ValueError):
    pass


class MeshNotWatertightError(GeometryError):
    pass


# ---------------------------------------------------------------------------
# transforms

def placement_matrix(placement: Placement) -> np.ndarray:
    """4x4 matrix of one placement level, axes orthonormalized."""
    z = np.asarray(placement.axis, dtype=float)
    nz = np.linalg.norm(z)
    if nz < 1e-12:
        raise GeometryError("placement axis has zero length")
    z = z / nz
    x = np.asarray(placement.ref_direction, dtype=float)
    x = x - np.dot(x, z) * z
    nx = np.linalg.norm(x)
    if nx < 1e-9:
        raise GeometryError("placement ref_direction is parallel to its axis")
    x = x / nx
    y = np.cross(z, x)
    m = np.eye(4)
    m[:3, 0] = x
    m[:3, 1] = y
    m[:3, 2] = z
    m[:3, 3] = placement.origin
    return m


def compose_transform(chain: Sequence[Placement]) -> np.ndarray:
    """Multiply the placements of ``chain`` root-first into one local->global matrix."""
    m = np.eye(4)
    for placement in chain:
        m = m @ placement_matrix(placement)
    return m


def is_rigid(transform: np.ndarray, tol: float = ROTATION_TOL) -> bool:
    t = np.asarray(transform, dtype=float)
    if t.shape != (4, 4):
        return False
    r = t[:3, :3]
    return (
        np.allclose(r.T @ r, np.eye(3), atol=tol, rtol=0)
        and abs(np.linalg.det(r) - 1.0) <= tol
        and np.array_equal(t[3], [0.0, 0.0, 0.0, 1.0])
    )


def translation(dx: float, dy: float, dz: float = 0.0) -> np.ndarray:
    m = np.eye(4)
    m[:3, 3] = (dx, dy, dz)
    return m


def apply_transform(transform: np.ndarray, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    return points @ transform[:3, :3].T + transform[:3, 3]


# ---------------------------------------------------------------------------
# mesh

@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangle mesh ``(V, E, F, T)``; edges are derived from the faces."""

    vertices: np.ndarray
    faces: np.ndarray
    transform: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float).reshape(-1, 3)
        f = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        t = np.asarray(self.transform, dtype=float)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise GeometryError("face index out of range")
        if not is_rigid(t):
            raise GeometryError("mesh transform is not a rigid motion")
        v.flags.writeable = False
        f.flags.writeable = False
        t = t.copy()
        t.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "transform", t)

    @cached_property
    def edges(self) -> np.ndarray:
        """Sorted, de-duplicated directed edges ``(a, b)`` of all faces."""
        if not len(self.faces):
            return np.zeros((0, 2), dtype=np.int64)
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        return np.unique(e, axis=0)

    def global_vertices(self) -> np.ndarray:
        return apply_transform(self.transform, self.vertices)

    def to_global(self) -> "Mesh":
        return Mesh(self.global_vertices(), self.faces)

    def translated(self, dx: float, dy: float, dz: float = 0.0) -> "Mesh":
        return Mesh(self.vertices, self.faces, translation(dx, dy, dz) @ self.transform)

    def signed_volume(self) -> float:
        """Enclosed volume by the divergence theorem (positive for outward faces)."""
        if not len(self.faces):
            return 0.0
        tri = self.vertices[self.faces]
        return float(np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])).sum() / 6.0)

    def bounds(self) -> np.ndarray:
        """Global axis-aligned bounds as ``[[xmin, ymin, zmin], [xmax, ymax, zmax]]``."""
        g = self.global_vertices()
        if not len(g):
            return np.zeros((2, 3))
        return np.array([g.min(axis=0), g.max(axis=0)])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Mesh):
            return NotImplemented
        return (
            np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.faces, other.faces)
            and np.array_equal(self.transform, other.transform)
        )

    def __hash__(self):
        return hash((self.vertices.tobytes(), self.faces.tobytes(), self.transform.tobytes()))


def merge_meshes(meshes: Iterable[Mesh], transform: np.ndarray | None = None) -> Mesh:
    """Concatenate meshes into one, expressed in the frame of ``transform``."""
    transform = np.eye(4) if transform is None else np.asarray(transform, dtype=float)
    inv = np.linalg.inv(transform)
    verts, faces = [], []
    offset = 0
    for m in meshes:
        verts.append(apply_transform(inv @ m.transform, m.vertices))
        faces.append(m.faces + offset)
        offset += len(m.vertices)
    if not verts:
        return Mesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), transform)
    return Mesh(np.concatenate(verts), np.concatenate(faces), transform)


def check_watertight(mesh: Mesh) -> None:
    """Raise :class:`MeshNotWatertightError` unless every edge is shared by an even number of faces."""
    if not len(mesh.faces):
        return
    f = mesh.faces
    e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    e.sort(axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    bad = int((counts % 2 == 1).sum())
    if bad:
        raise MeshNotWatertightError(f"mesh has {bad} boundary edge(s)")


# ---------------------------------------------------------------------------
# polygons and tessellation

def polygon_area(points: np.ndarray) -> float:
    """Signed shoelace area (positive for counter-clockwise)."""
    p = np.asarray(points, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _cross2(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def triangulate_polygon(points: np.ndarray) -> list[tuple[int, int, int]]:
    """Ear-clip a simple polygon; triangles are counter-clockwise and use every vertex."""
    p = np.asarray(points, dtype=float)
    n = len(p)
    if n < 3:
        raise GeometryError("polygon needs at least 3 vertices")
    idx = list(range(n))
    if polygon_area(p) < 0:
        idx.reverse()
    scale = float(np.ptp(p, axis=0).max()) or 1.0
    eps = 1e-12 * scale * scale
    tris = []
    guard = 0
    while len(idx) > 3:
        m = len(idx)
        for k in range(m):
            a, b, c = idx[k - 1], idx[k], idx[(k + 1) % m]
            if _cross2(p[a], p[b], p[c]) <= eps:
                continue
            blocked = False
            for j in idx:
                if j in (a, b, c):
                    continue
                q = p[j]
                if (
                    _cross2(p[a], p[b], q) >= -eps
                    and _cross2(p[b], p[c], q) >= -eps
                    and _cross2(p[c], p[a], q) >= -eps
                ):
                    blocked = True
                    break
            if not blocked:
                tris.append((a, b, c))
                del idx[k]
                break
        else:
            # no proper ear: clip a collinear vertex as a zero-area triangle
            for k in range(m):
                a, b, c = idx[k - 1], idx[k], idx[(k + 1) % m]
                if abs(_cross2(p[a], p[b], p[c])) <= eps:
                    tris.append((a, b, c))
                    del idx[k]
                    break
            else:
                raise GeometryError("polygon could not be triangulated (self-intersecting or degenerate)")
        guard += 1
        if guard > 4 * n:
            raise GeometryError("ear clipping did not terminate")
    a, b, c = idx
    if _cross2(p[a], p[b], p[c]) < -eps:
        raise GeometryError("inverted final triangle")
    tris.append((a, b, c))
    return tris


def _face_frame(points: np.ndarray) -> np.ndarray:
    """Two in-plane axes for a planar 3D polygon via the Newell normal."""
    p = np.asarray(points, dtype=float)
    q = np.roll(p, -1, axis=0)
    normal = np.array([
        np.sum((p[:, 1] - q[:, 1]) * (p[:, 2] + q[:, 2])),
        np.sum((p[:, 2] - q[:, 2]) * (p[:, 0] + q[:, 0])),
        np.sum((p[:, 0] - q[:, 0]) * (p[:, 1] + q[:, 1])),
    ])
    nn = np.linalg.norm(normal)
    if nn < 1e-18:
        raise GeometryError("degenerate face")
    normal /= nn
    helper = np.array([1.0, 0.0, 0.0]) if abs(normal[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(normal, helper)
    u /= np.linalg.norm(u)
    v = np.cross(normal, u)
    return np.stack([u, v])


def triangulate_face(points: np.ndarray) -> list[tuple[int, int, int]]:
    """Triangulate a planar 3D polygon, keeping its winding."""
    if len(points) == 3:
        return [(0, 1, 2)]
    axes = _face_frame(points)
    flat = np.asarray(points, dtype=float) @ axes.T
    # the frame is built so the face is counter-clockwise in (u, v)
    return triangulate_polygon(flat)


def _extrusion_mesh(rep: ExtrudedAreaSolid) -> tuple[np.ndarray, np.ndarray]:
    profile = np.asarray(rep.profile, dtype=float)
    if len(profile) < 3:
        raise GeometryError("extrusion profile needs at least 3 vertices")
    area = polygon_area(profile)
    if abs(area) < MIN_PROFILE_AREA:
        raise GeometryError(f"degenerate profile (area {abs(area):.3g} m^2)")
    if area < 0:
        profile = profile[::-1]
    if not Polygon(profile).is_valid:
        raise GeometryError("extrusion profile is self-intersecting")
    direction = np.asarray(rep.direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    if rep.depth <= 0:
        raise GeometryError("extrusion depth must be positive")
    if abs(direction[2]) < 1e-12:
        raise GeometryError("extrusion direction lies in the profile plane")
    n = len(profile)
    base = np.column_stack([profile, np.zeros(n)])
    top = base + rep.depth * direction
    verts = np.vstack([base, top])
    cap = triangulate_polygon(profile)
    faces = [(c, b, a) for a, b, c in cap]
    faces += [(a + n, b + n, c + n) for a, b, c in cap]
    for i in range(n):
        j = (i + 1) % n
        faces.append((i, j, j + n))
        faces.append((i, j + n, i + n))
    faces = np.array(faces, dtype=np.int64)
    if direction[2] < 0:
        faces = faces[:, ::-1]
    return verts, faces


def _faceted_mesh(rep: FacetedMesh) -> tuple[np.ndarray, np.ndarray]:
    verts = np.asarray(rep.vertices, dtype=float).reshape(-1, 3)
    faces = []
    for face in rep.faces:
        if len(face) < 3:
            raise GeometryError("face with fewer than 3 vertices")
        if any(i < 0 or i >= len(verts) for i in face):
            raise GeometryError("face index out of range")
        local = triangulate_face(verts[list(face)])
        faces.extend((face[a], face[b], face[c]) for a, b, c in local)
    return verts, np.array(faces, dtype=np.int64).reshape(-1, 3)


def tessellate(rep) -> Mesh:
    """Triangulate a decoded IFC geometry item.

    The returned mesh has its vertices in the item's own frame and carries the
    item placement as its transform.
    """
    if isinstance(rep, ExtrudedAreaSolid):
        verts, faces = _extrusion_mesh(rep)
    elif isinstance(rep, FacetedMesh):
        verts, faces = _faceted_mesh(rep)
    else:
        raise GeometryError(f"unsupported geometry representation {type(rep).__name__}")
    return Mesh(verts, faces, placement_matrix(rep.position))


def element_mesh(reps: Sequence, chain: Sequence[Placement]) -> Mesh:
    """Tessellate every item of an element into one mesh in the element's local frame."""
    parts = [tessellate(r) for r in reps]
    merged = merge_meshes(parts)
    return Mesh(merged.vertices, merged.faces, compose_transform(chain))


def box_mesh(lo: Sequence[float], hi: Sequence[float]) -> Mesh:
    """Axis-aligned box with outward-facing triangles."""
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    v = np.array([
        [x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
        [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1],
    ], dtype=float)
    f = np.array([
        [0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7],
        [0, 1, 5], [0, 5, 4], [1, 2, 6], [1, 6, 5],
        [2, 3, 7], [2, 7, 6], [3, 0, 4], [3, 4, 7],
    ])
    return Mesh(v, f)


# ---------------------------------------------------------------------------
# point membership (the brute-force oracle)

_RAY_DIRECTIONS = np.random.default_rng(20240611).normal(size=(16, 3))
_RAY_DIRECTIONS /= np.linalg.norm(_RAY_DIRECTIONS, axis=1, keepdims=True)


def _ray_parity(tri: np.ndarray, points: np.ndarray, direction: np.ndarray, eps: float):
    """Crossing parity per point plus a mask of points whose ray hit was ambiguous."""
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    h = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, h)
    ok = np.abs(det) > 1e-15
    inv = np.zeros_like(det)
    inv[ok] = 1.0 / det[ok]
    s = points[:, None, :] - tri[None, :, 0, :]
    u = np.einsum("ptj,tj->pt", s, h) * inv
    q = np.cross(s, e1[None, :, :])
    v = np.einsum("pk,ptk->pt", np.broadcast_to(direction, (len(points), 3)), q) * inv
    t = np.einsum("ptj,tj->pt", q, e2) * inv
    ok = ok[None, :]
    inside_tri = ok & (u >= -eps) & (v >= -eps) & (u + v <= 1 + eps)
    hit = inside_tri & (t > eps)
    on_surface = (inside_tri & (np.abs(t) <= eps)).any(axis=1)
    edge = hit & ((u <= eps) | (v <= eps) | (u + v >= 1 - eps))
    ambiguous = edge.any(axis=1)
    parity = (hit.sum(axis=1) % 2) == 1
    return parity, ambiguous, on_surface


def points_in_mesh(mesh: Mesh, points: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Vectorised :func:`point_in_mesh` over an (n, 3) array of global points."""
    check_watertight(mesh)
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    result = np.zeros(len(pts), dtype=bool)
    if not len(mesh.faces) or not len(pts):
        return result
    verts = mesh.global_vertices()
    tri = verts[mesh.faces]
    scale = float(np.ptp(verts, axis=0).max()) or 1.0
    eps = 1e-10 * max(scale, 1.0)
    lo, hi = verts.min(axis=0), verts.max(axis=0)
    candidates = np.nonzero(np.all((pts >= lo - eps) & (pts <= hi + eps), axis=1))[0]
    for start in range(0, len(candidates), chunk):
        sel = candidates[start : start + chunk]
        todo = np.arange(len(sel))
        out = np.zeros(len(sel), dtype=bool)
        for direction in _RAY_DIRECTIONS:
            parity, ambiguous, on_surface = _ray_parity(tri, pts[sel[todo]], direction, 1e-9)
            settled = ~ambiguous | on_surface
            out[todo[settled]] = parity[settled] & ~on_surface[settled]
            todo = todo[~settled]
            if not len(todo):
                break
        else:
            raise GeometryError("point membership undecidable after all ray directions")
        result[sel] = out
    return result


def point_in_mesh(mesh: Mesh, x: Sequence[float]) -> bool:
    """True iff the global point ``x`` lies strictly inside the watertight ``mesh``.

    Ray-parity test; a ray grazing an edge or vertex is retried along another
    direction.
    """
    return bool(points_in_mesh(mesh, np.asarray(x, dtype=float).reshape(1, 3))[0])


# ---------------------------------------------------------------------------
# slab cross-sections

@dataclass(frozen=True)
class Slab:
    """Closed height interval ``[z_low, z_high]`` in the global frame, optionally bounded in xy."""

    z_low: float
    z_high: float
    xy_bounds: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        if not self.z_low <= self.z_high:
            raise ValueError(f"slab needs z_low <= z_high, got {self.z_low} > {self.z_high}")


@dataclass
class CrossSection:
    """Footprint of a slab/mesh intersection: polygons in global xy."""

    polygons: list[Polygon]
    source_element: str | None = None

    @classmethod
    def from_geometry(cls, geom, source_element: str | None = None) -> "CrossSection":
        polys = []
        for g in getattr(geom, "geoms", [geom]):
            if isinstance(g, Polygon) and not g.is_empty and g.area > 0:
                polys.append(orient(g, 1.0))
            elif hasattr(g, "geoms"):
                polys.extend(cls.from_geometry(g).polygons)
        polys.sort(key=lambda p: p.bounds)
        return cls(polys, source_element)

    @property
    def is_empty(self) -> bool:
        return not self.polygons

    @property
    def area(self) -> float:
        return float(sum(p.area for p in self.polygons))

    @property
    def geometry(self) -> MultiPolygon:
        return MultiPolygon(self.polygons)

    def translated(self, dx: float, dy: float) -> "CrossSection":
        return CrossSection(
            [shapely.transform(p, lambda c: c + (dx, dy)) for p in self.polygons],
            self.source_element,
        )


def _clip_polygon_z(poly: np.ndarray, z: float, keep_above: bool) -> np.ndarray:
    """Sutherland-Hodgman clip of a 3D polygon against a horizontal plane (closed side kept)."""
    out = []
    n = len(poly)
    for i in range(n):
        a = poly[i]
        b = poly[(i + 1) % n]
        ina = a[2] >= z if keep_above else a[2] <= z
        inb = b[2] >= z if keep_above else b[2] <= z
        if ina:
            out.append(a)
        if ina != inb:
            t = (z - a[2]) / (b[2] - a[2])
            p = a + t * (b - a)
            p[2] = z
            out.append(p)
    return np.array(out).reshape(-1, 3)


def _section_segments(verts: np.ndarray, faces: np.ndarray, z: float) -> np.ndarray:
    """Line segments where the plane at height ``z`` cuts the mesh.

    Vertices with height >= z count as above, which perturbs the plane
    consistently and keeps every cut point on a well-defined edge.
    """
    above = verts[:, 2] >= z
    fa = above[faces]
    count = fa.sum(axis=1)
    crossing = faces[(count == 1) | (count == 2)]
    if not len(crossing):
        return np.zeros((0, 2, 2))
    segs = []
    for tri in crossing:
        pts = []
        for k in range(3):
            a, b = tri[k], tri[(k + 1) % 3]
            if above[a] == above[b]:
                continue
            lo, hi = (a, b) if not above[a] else (b, a)
            vl, vh = verts[lo], verts[hi]
            t = (z - vl[2]) / (vh[2] - vl[2])
            pts.append(vl[:2] * (1.0 - t) + vh[:2] * t)
        if len(pts) == 2 and not np.array_equal(pts[0], pts[1]):
            segs.append(pts)
    return np.array(segs, dtype=float).reshape(-1, 2, 2)


def _even_odd(points: np.ndarray, segs: np.ndarray) -> np.ndarray:
    """Even-odd membership of 2D points with respect to a closed segment soup."""
    if not len(segs):
        return np.zeros(len(points), dtype=bool)
    x1, y1 = segs[:, 0, 0], segs[:, 0, 1]
    x2, y2 = segs[:, 1, 0], segs[:, 1, 1]
    px = points[:, 0:1]
    py = points[:, 1:2]
    straddle = (y1 > py) != (y2 > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xi = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
    crossings = straddle & (xi > px)
    return (crossings.sum(axis=1) % 2) == 1


def _ring_without_collinear(coords: np.ndarray, tol: float) -> np.ndarray:
    pts = coords[:-1] if len(coords) > 1 and np.array_equal(coords[0], coords[-1]) else coords
    changed = True
    while changed and len(pts) > 3:
        prev = np.roll(pts, 1, axis=0)
        nxt = np.roll(pts, -1, axis=0)
        chord = nxt - prev
        length = np.hypot(chord[:, 0], chord[:, 1])
        cross = chord[:, 0] * (pts[:, 1] - prev[:, 1]) - chord[:, 1] * (pts[:, 0] - prev[:, 0])
        # keep the vertex unless it lies on the chord between its neighbours
        along = np.einsum("ij,ij->i", pts - prev, chord)
        flat = (np.abs(cross) <= tol * np.maximum(length, 1e-300)) & (along >= 0) & (along <= length**2)
        changed = bool(flat.any())
        if changed:
            # remove every other candidate so neighbours are never dropped together
            drop = np.flatnonzero(flat)
            drop = drop[np.concatenate([[True], np.diff(drop) > 1])]
            if flat[0] and flat[-1] and len(drop) > 1 and drop[-1] == len(pts) - 1:
                drop = drop[:-1]
            pts = np.delete(pts, drop, axis=0)
    return pts if len(pts) >= 3 else pts[:0]


def _drop_collinear(geom, tol: float = 1e-10):
    """Remove ring vertices within ``tol`` of the segment joining their neighbours."""
    polys = []
    for poly in shapely.get_parts(geom):
        if not isinstance(poly, Polygon) or poly.is_empty:
            continue
        shell = _ring_without_collinear(np.asarray(poly.exterior.coords)[:, :2], tol)
        if not len(shell):
            continue
        holes = [_ring_without_collinear(np.asarray(r.coords)[:, :2], tol) for r in poly.interiors]
        polys.append(Polygon(shell, [h for h in holes if len(h) >= 3]))
    if len(polys) == 1:
        return polys[0]
    return MultiPolygon(polys) if polys else Polygon()


def plane_section(verts: np.ndarray, faces: np.ndarray, z: float):
    """Interior region of a closed mesh cut by the plane at height ``z`` (shapely geometry)."""
    segs = _section_segments(verts, faces, z)
    if not len(segs):
        return Polygon()
    noded = shapely.union_all(shapely.linestrings(segs))
    cells = list(shapely.get_parts(shapely.polygonize(shapely.get_parts(noded))))
    if not cells:
        return Polygon()
    reps = np.array([c.representative_point().coords[0] for c in cells])
    inside = _even_odd(reps, segs)
    kept = [c for c, keep in zip(cells, inside) if keep]
    return shapely.union_all(kept) if kept else Polygon()


def slab_cross_section(
    mesh: Mesh,
    slab: Slab,
    source_element: str | None = None,
    require_watertight: bool = True,
) -> CrossSection:
    """XY footprint of the intersection of ``slab`` with the solid bounded by ``mesh``.

    Every triangle is clipped to the closed height interval and projected to
    xy; together with the solid's sections just inside both slab planes these
    projections cover the footprint exactly, so their union is returned.
    Vertices are snap-rounded to a 1e-7 m grid.
    """
    if require_watertight:
        check_watertight(mesh)
    if not len(mesh.faces):
        return CrossSection([], source_element)
    verts = mesh.global_vertices()
    faces = mesh.faces
    zl, zh = slab.z_low, slab.z_high
    tri = verts[faces]
    zmin = tri[:, :, 2].min(axis=1)
    zmax = tri[:, :, 2].max(axis=1)
    touching = (zmax >= zl) & (zmin <= zh)
    if not touching.any():
        return CrossSection([], source_element)

    d1 = tri[:, 1, :2] - tri[:, 0, :2]
    d2 = tri[:, 2, :2] - tri[:, 0, :2]
    proj_area = np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) * 0.5
    flat_enough = proj_area > 1e-14
    whole = touching & flat_enough & (zmin >= zl) & (zmax <= zh)
    partial = touching & flat_enough & ~whole

    pieces = []
    if whole.any():
        pieces.extend(shapely.get_parts(shapely.polygons(tri[whole][:, :, :2])))
    for t in tri[partial]:
        clipped = _clip_polygon_z(t, zl, keep_above=True)
        if len(clipped) >= 3:
            clipped = _clip_polygon_z(clipped, zh, keep_above=False)
        if len(clipped) >= 3 and abs(polygon_area(clipped[:, :2])) > 1e-14:
            pieces.append(Polygon(clipped[:, :2]).buffer(0))

    thickness = zh - zl
    eps = min(1e-9, thickness / 4.0)
    cap_heights = [zl + eps, zh - eps] if thickness > 4e-9 else [0.5 * (zl + zh)]
    for zc in cap_heights:
        if zmin.min() <= zc <= zmax.max():
            cap = plane_section(verts, faces, zc)
            if not cap.is_empty:
                pieces.append(cap)

    if not pieces:
        return CrossSection([], source_element)
    # split points on an edge would be pushed off it by snapping; drop them first
    pieces = [_drop_collinear(p) for p in pieces]
    union = shapely.union_all(shapely.set_precision(np.array(pieces, dtype=object), SNAP_GRID))
    union = shapely.set_precision(union, SNAP_GRID).simplify(0.0)
    if slab.xy_bounds is not None:
        union = union.intersection(box(*slab.xy_bounds))
    return CrossSection.from_geometry(union, source_element)


# ---------------------------------------------------------------------------
# OBJ interchange

def write_obj(mesh: Mesh, target, global_frame: bool = True) -> None:
    verts = mesh.global_vertices() if global_frame else mesh.vertices
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in verts.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces.tolist()]
    text = "\n".join(lines) + "\n"
    if isinstance(target, io.TextIOBase):
        target.write(text)
    else:
        with open(target, "w", encoding="ascii") as fh:
            fh.write(text)


def read_obj(source) -> Mesh:
    """Read ``v``/``f`` records; polygonal faces are fan-triangulated."""
    if isinstance(source, io.TextIOBase):
        text = source.read()
    else:
        with open(source, encoding="ascii") as fh:
            text = fh.read()
    verts, faces = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "v":
                verts.append([float(c) for c in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) for p in parts[1:]]
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                faces.extend((idx[0], idx[k], idx[k + 1]) for k in range(1, len(idx) - 1))
        except ValueError as exc:
            raise GeometryError(f"OBJ line {lineno}: {exc}") from None
    return Mesh(np.array(verts, dtype=float).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))
