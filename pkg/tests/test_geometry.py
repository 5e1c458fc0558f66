import io
import math

import numpy as np
import pytest
import shapely
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from bim2map.geometry import (
    GeometryError,
    Mesh,
    MeshNotWatertightError,
    Slab,
    box_mesh,
    check_watertight,
    compose_transform,
    element_mesh,
    point_in_mesh,
    points_in_mesh,
    polygon_area,
    read_obj,
    slab_cross_section,
    tessellate,
    translation,
    triangulate_polygon,
    write_obj,
)
from bim2map.ifc_model import ExtrudedAreaSolid, FacetedMesh, Placement
from bim2map.map_gen import empty_grid, rasterize

from oracles import analytic_box_membership, boundary_distance, oracle_mask


def extrusion(profile, depth, direction=(0.0, 0.0, 1.0), position=Placement()):
    return ExtrudedAreaSolid(np.asarray(profile, float), np.asarray(direction, float), depth, position)


def arch_mesh(width=1.2, post=0.3, thickness=0.2, lintel=(0.8, 1.0)) -> Mesh:
    """Pi-shaped arch: profile drawn in the xz-plane, extruded along -y."""
    lo, hi = lintel
    prof = [(0, 0), (post, 0), (post, lo), (width - post, lo), (width - post, 0), (width, 0), (width, hi), (0, hi)]
    pos = Placement(axis=(0.0, -1.0, 0.0), ref_direction=(1.0, 0.0, 0.0))
    return tessellate(extrusion(prof, thickness, position=pos))


# -- transforms --------------------------------------------------------------


def test_compose_empty_chain_is_identity():
    np.testing.assert_array_equal(compose_transform([]), np.eye(4))


def test_compose_single_translation():
    t = compose_transform([Placement(origin=(1.0, 2.0, 0.0))])
    np.testing.assert_allclose(t, translation(1, 2, 0))


def test_compose_matches_step_by_step():
    # outer placement: origin (1,0,0) rotated 90 deg about z; inner: origin (0,1,0)
    chain = [Placement(origin=(1.0, 0.0, 0.0), ref_direction=(0.0, 1.0, 0.0)), Placement(origin=(0.0, 1.0, 0.0))]
    t = compose_transform(chain)
    for p in [(1.0, 0.0, 0.0), (0.0, 0.0, 2.0), (0.3, -0.7, 1.1)]:
        x, y, z = p
        x, y = x + 0.0, y + 1.0  # inner translation
        x, y = -y, x  # 90 deg about z
        x += 1.0  # outer translation
        np.testing.assert_allclose((t @ [*p, 1.0])[:3], (x, y, z), atol=1e-12)


def test_non_rigid_transform_rejected():
    with pytest.raises(GeometryError):
        Mesh(np.zeros((3, 3)), [[0, 1, 2]], np.diag([2.0, 1.0, 1.0, 1.0]))


def test_bad_axes_rejected():
    with pytest.raises(GeometryError):
        compose_transform([Placement(axis=(0.0, 0.0, 1.0), ref_direction=(0.0, 0.0, 2.0))])


# -- tessellation ------------------------------------------------------------


def test_box_extrusion():
    m = tessellate(extrusion([(0, 0), (1.0, 0), (1.0, 0.2), (0, 0.2)], 3.0))
    assert len(m.vertices) == 8 and len(m.faces) == 12
    assert m.signed_volume() == pytest.approx(0.6, rel=1e-12)
    check_watertight(m)


def test_triangle_prism():
    prof = [(0, 0), (2.0, 0), (0.5, 1.5)]
    m = tessellate(extrusion(prof, 2.0))
    assert len(m.faces) == 8
    assert m.signed_volume() == pytest.approx(abs(polygon_area(np.array(prof))) * 2.0, rel=1e-12)


def test_triangulated_faceted_input_is_kept():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], float)
    faces = ((0, 2, 1), (0, 1, 3), (1, 2, 3), (2, 0, 3))
    m = tessellate(FacetedMesh(v, faces))
    np.testing.assert_array_equal(m.vertices, v)
    assert {tuple(sorted(f)) for f in m.faces.tolist()} == {tuple(sorted(f)) for f in faces}
    assert m.signed_volume() == pytest.approx(1 / 6)


def test_quad_faces_are_triangulated():
    v = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], float)
    quads = ((0, 2, 6, 4), (1, 5, 7, 3), (0, 4, 5, 1), (2, 3, 7, 6), (0, 1, 3, 2), (4, 6, 7, 5))
    m = tessellate(FacetedMesh(v, quads))
    assert len(m.faces) == 12
    assert m.signed_volume() == pytest.approx(1.0)


@pytest.mark.parametrize(
    "profile,depth",
    [
        ([(0, 0), (1, 0), (2, 0)], 1.0),  # collinear
        ([(0, 0), (1e-7, 0), (0, 1e-7)], 1.0),  # area 5e-15 < 1e-12
        ([(0, 0), (1, 0), (1, 1), (0, 1)], 0.0),
        ([(0, 0), (1, 1), (1, 0), (0, 1)], 1.0),  # bow tie
    ],
)
def test_degenerate_extrusions(profile, depth):
    with pytest.raises(GeometryError):
        tessellate(extrusion(profile, depth))


def test_edges_are_derived_from_faces():
    m = box_mesh((0, 0, 0), (1, 1, 1))
    expected = set()
    for a, b, c in m.faces.tolist():
        expected |= {(a, b), (b, c), (c, a)}
    assert {tuple(e) for e in m.edges.tolist()} == expected


def test_ear_clipping_uses_all_vertices():
    l_shape = np.array([(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)], float)
    tris = triangulate_polygon(l_shape)
    assert len(tris) == 4
    area = sum(abs(polygon_area(l_shape[list(t)])) for t in tris)
    assert area == pytest.approx(3.0)


# -- point membership --------------------------------------------------------


def test_point_in_unit_cube():
    cube = box_mesh((0, 0, 0), (1, 1, 1))
    assert point_in_mesh(cube, (0.5, 0.5, 0.5))
    assert not point_in_mesh(cube, (2, 0, 0))
    assert not point_in_mesh(cube, (1.0, 0.5, 0.5))  # on the surface: not strictly inside


def test_point_in_box_grid_matches_analytic():
    m = tessellate(extrusion([(0, 0), (1.0, 0), (1.0, 0.2), (0, 0.2)], 3.0))
    g = np.linspace(-0.25, 3.25, 10)
    pts = np.array([(x, y, z) for x in g / 3 for y in g / 10 for z in g])
    # keep samples off the surface, where "strictly inside" is ambiguous
    pts = pts + 1e-4
    expected = analytic_box_membership((0, 0, 0), (1.0, 0.2, 3.0), pts)
    assert len(pts) == 1000
    assert (points_in_mesh(m, pts) == expected).all()


def test_point_in_mesh_needs_watertight():
    cube = box_mesh((0, 0, 0), (1, 1, 1))
    open_box = Mesh(cube.vertices, cube.faces[:-1])
    with pytest.raises(MeshNotWatertightError):
        point_in_mesh(open_box, (0.5, 0.5, 0.5))


def test_ray_through_vertex_is_retried():
    # grid points aligned with vertices and edges of a rotated box
    place = Placement(origin=(0.5, 0.5, 0.0), ref_direction=(1.0, 1.0, 0.0))
    m = tessellate(extrusion([(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)], 1.0, position=place))
    c, s = math.cos(math.pi / 4), math.sin(math.pi / 4)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-0.5, 1.5, size=(4000, 3))
    local_x = c * (pts[:, 0] - 0.5) + s * (pts[:, 1] - 0.5)
    local_y = -s * (pts[:, 0] - 0.5) + c * (pts[:, 1] - 0.5)
    expected = (np.abs(local_x) < 0.5) & (np.abs(local_y) < 0.5) & (pts[:, 2] > 0) & (pts[:, 2] < 1)
    assert (points_in_mesh(m, pts) == expected).all()


# -- slab cross-sections -----------------------------------------------------


def test_cube_cross_section():
    cube = box_mesh((0, 0, 0), (1, 1, 1))
    cs = slab_cross_section(cube, Slab(0.4, 0.6))
    assert len(cs.polygons) == 1
    assert cs.area == pytest.approx(1.0, abs=1e-6)
    assert cs.polygons[0].bounds == pytest.approx((0, 0, 1, 1))
    assert slab_cross_section(cube, Slab(2, 3)).is_empty


def test_cross_section_orientation():
    cs = slab_cross_section(arch_mesh(), Slab(0.5, 0.9))
    for p in cs.polygons:
        assert p.exterior.is_ccw
        assert p.is_valid
        for hole in p.interiors:
            assert not hole.is_ccw


def test_closed_slab_touching_top_face():
    cube = box_mesh((0, 0, 0), (1, 1, 1))
    # z_low on the top face: the closed interval still touches the solid
    cs = slab_cross_section(cube, Slab(1.0, 1.5))
    assert cs.area == pytest.approx(1.0)


def test_arch_low_slab_has_only_posts():
    cs = slab_cross_section(arch_mesh(), Slab(0.09, 0.11))
    assert len(cs.polygons) == 2
    assert cs.area == pytest.approx(2 * 0.3 * 0.2, rel=1e-9)
    xs = sorted(p.bounds[0] for p in cs.polygons)
    assert xs == pytest.approx([0.0, 0.9])


def test_arch_high_slab_includes_lintel():
    cs = slab_cross_section(arch_mesh(), Slab(0.0, 1.0))
    assert len(cs.polygons) == 1
    assert cs.area == pytest.approx(1.2 * 0.2, rel=1e-9)


@pytest.mark.parametrize("slab", [Slab(0.09, 0.11), Slab(0.0, 0.5), Slab(0.0, 1.0), Slab(0.85, 0.95)])
def test_arch_cells_match_point_oracle(slab):
    mesh = arch_mesh()
    grid = empty_grid((0, -0.2, 1.2, 0), 0.01, 0.05)
    cs = slab_cross_section(mesh, slab)
    raster = rasterize(grid, cs.geometry)
    oracle = oracle_mask([mesh], grid, slab)
    agree = (raster == oracle).mean()
    assert agree >= 0.995
    bad = np.argwhere(raster != oracle)
    assert (boundary_distance(grid, bad, cs.geometry) <= grid.resolution + 1e-12).all()


def test_cross_section_respects_transform():
    cube = box_mesh((0, 0, 0), (1, 1, 1))
    moved = cube.translated(3.0, -2.0, 0.5)
    cs = slab_cross_section(moved, Slab(0.2, 0.4))
    assert cs.is_empty
    cs = slab_cross_section(moved, Slab(0.6, 0.7))
    assert cs.polygons[0].bounds == pytest.approx((3, -2, 4, -1))


def test_non_watertight_slicing():
    cube = box_mesh((0, 0, 0), (1, 1, 1))
    top = np.flatnonzero((cube.vertices[cube.faces][:, :, 2] == 1.0).all(axis=1))[0]
    open_box = Mesh(cube.vertices, np.delete(cube.faces, top, axis=0))
    with pytest.raises(MeshNotWatertightError):
        slab_cross_section(open_box, Slab(0.4, 0.6))
    # side walls still close every horizontal ring, so the fallback recovers the square
    assert not slab_cross_section(open_box, Slab(0.4, 0.6), require_watertight=False).is_empty


def test_obj_round_trip():
    m = arch_mesh()
    buf = io.StringIO()
    write_obj(m, buf)
    buf.seek(0)
    back = read_obj(buf)
    np.testing.assert_allclose(back.vertices, m.global_vertices(), atol=1e-12)
    np.testing.assert_array_equal(back.faces, m.faces)


def test_element_mesh_merges_items():
    a = extrusion([(0, 0), (1, 0), (1, 1), (0, 1)], 1.0)
    b = extrusion([(0, 0), (1, 0), (1, 1), (0, 1)], 1.0, position=Placement(origin=(2.0, 0.0, 0.0)))
    m = element_mesh([a, b], [Placement(origin=(0.0, 0.0, 1.0))])
    assert m.signed_volume() == pytest.approx(2.0)
    lo, hi = m.bounds()
    np.testing.assert_allclose(lo, [0, 0, 1])
    np.testing.assert_allclose(hi, [3, 1, 2])


# -- properties --------------------------------------------------------------

GRID = 1.0 / 64  # dyadic and a multiple of the 1e-7 snap grid


@st.composite
def star_polygons(draw, grid_aligned=False):
    n = draw(st.integers(3, 9))
    angles = sorted(draw(st.lists(st.floats(0, 2 * math.pi, exclude_max=True), min_size=n, max_size=n, unique=True)))
    radii = draw(st.lists(st.floats(0.2, 2.0), min_size=n, max_size=n))
    pts = np.array([(r * math.cos(a), r * math.sin(a)) for r, a in zip(radii, angles)])
    if grid_aligned:
        pts = np.round(pts / GRID) * GRID
    poly = shapely.Polygon(pts)
    assume(poly.is_valid and poly.area > 0.05)
    assume(len({tuple(p) for p in pts.tolist()}) == n)
    return pts


@settings(max_examples=80, deadline=None)
@given(star_polygons(), st.floats(0.1, 5.0))
def test_extrusion_volume(profile, depth):
    m = tessellate(extrusion(profile, depth))
    expected = abs(polygon_area(profile)) * depth
    assert math.isclose(m.signed_volume(), expected, rel_tol=1e-9)


@settings(max_examples=40, deadline=None)
@given(star_polygons(), st.floats(0.5, 3.0), st.floats(-0.8, 0.8), st.floats(-0.8, 0.8))
def test_oblique_extrusion_volume(profile, depth, dx, dy):
    d = np.array([dx, dy, 1.0])
    d /= np.linalg.norm(d)
    m = tessellate(extrusion(profile, depth, direction=d))
    expected = abs(polygon_area(profile)) * depth * d[2]
    assert math.isclose(m.signed_volume(), expected, rel_tol=1e-9)


@settings(max_examples=60, deadline=None)
@given(star_polygons(grid_aligned=True), st.integers(1, 127))
def test_cross_section_area_equals_profile_area(profile, k):
    depth = 2.0
    z = k / 64.0
    m = tessellate(extrusion(profile, depth))
    cs = slab_cross_section(m, Slab(z, z))
    assert math.isclose(cs.area, abs(polygon_area(profile)), rel_tol=1e-9)


@settings(max_examples=60, deadline=None)
@given(star_polygons(grid_aligned=True), st.integers(-256, 256), st.integers(-256, 256), st.integers(0, 120))
def test_translation_equivariance(profile, i, j, k):
    dx, dy = i * GRID, j * GRID
    m = tessellate(extrusion(profile, 2.0))
    slab = Slab(k / 64.0, k / 64.0 + 0.25)
    a = slab_cross_section(m.translated(dx, dy), slab)
    b = slab_cross_section(m, slab).translated(dx, dy)
    assert len(a.polygons) == len(b.polygons)
    for pa, pb in zip(a.polygons, b.polygons):
        assert shapely.equals_exact(shapely.normalize(pa), shapely.normalize(pb), tolerance=1e-9)


@settings(max_examples=40, deadline=None)
@given(
    star_polygons(),
    st.floats(-0.6, 0.6),
    st.floats(-0.6, 0.6),
    st.floats(0.0, 1.0),
    st.floats(0.0, 0.5),
    st.floats(0.0, 0.5),
    st.floats(0.0, 0.5),
)
def test_slab_monotonicity(profile, dx, dy, z0, inner, below, above):
    d = np.array([dx, dy, 1.0])
    m = tessellate(extrusion(profile, 1.5, direction=d / np.linalg.norm(d)))
    small = Slab(z0, z0 + inner)
    big = Slab(z0 - below, z0 + inner + above)
    fa = slab_cross_section(m, small).geometry
    fb = slab_cross_section(m, big).geometry
    # snap rounding may leave slivers of the order of the snap grid
    assert fa.difference(fb).area <= 1e-6 * max(fa.area, 1e-3)
