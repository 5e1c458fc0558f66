import numpy as np
import pytest
import shapely
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from bim2map.geometry import box_mesh
from bim2map.map_gen import (
    LOCALIZATION,
    NAVIGATION,
    MapError,
    MapSpec,
    OccupancyGrid,
    footprints,
    free_connected,
    gen_localization_map,
    gen_navigation_map,
    generate_map,
    preset,
    read_grid,
    write_grid,
)
from bim2map.world_model import ElementFilter, Graph, build_graph, encode_mesh, parse_filter, query

from fixtures.make_fixtures import ROOM_A_CENTER, ROOM_B_CENTER
from generators import random_filter, random_grid, random_ifc_model, relaxations
from oracles import boundary_distance, oracle_mask

CORRIDOR_MID = (4.0, 1.5)  # under the arch


def cube_graph(lo=(0, 0, 0), hi=(1, 1, 1), name="Cube", type_name="Wall") -> Graph:
    g = Graph()
    g.add(name, "type", type_name)
    g.add(name, "isStatic", True)
    g.add(name, "hasGeometry", encode_mesh(box_mesh(lo, hi)))
    return g


def test_unit_cube_two_by_two():
    grid = gen_localization_map(cube_graph(), MapSpec(LOCALIZATION, 0.5, resolution=0.5))
    assert grid.origin == (-0.5, -0.5, 0.0)
    expected = np.zeros((4, 4), dtype=bool)
    expected[1:3, 1:3] = True
    np.testing.assert_array_equal(grid.cells, expected)


def test_origin_is_bounds_minus_margin():
    g = cube_graph((0, 0, 0), (4, 0.1, 2))
    grid = generate_map(g, MapSpec(NAVIGATION, 1.0, margin=0.5, resolution=0.1))
    assert grid.origin[0] == pytest.approx(-0.5)
    assert grid.origin[1] == pytest.approx(-0.5)
    assert grid.width == 50 and grid.height == 11


def test_glass_wall_excluded(room_graph):
    spec_all = MapSpec(LOCALIZATION, 0.5)
    spec_noglass = MapSpec(LOCALIZATION, 0.5, filter=parse_filter("minus material Glass"))
    full = gen_localization_map(room_graph, spec_all)
    cut = gen_localization_map(room_graph, spec_noglass)
    y_of_row = full.cell_centers()[1]
    diff_rows = {r for r, _ in full.occupied_cells() - cut.occupied_cells()}
    # every removed cell lies on Wall2 (y in [3, 3.1]); Wall1 cells are unchanged
    assert diff_rows and all(3.0 <= y_of_row[r] <= 3.1 for r in diff_rows)
    assert cut.occupied_cells() <= full.occupied_cells()
    assert all(0.0 <= y_of_row[r] <= 0.1 for r, _ in cut.occupied_cells())


def test_empty_graph_is_all_free(caplog):
    grid = gen_navigation_map(Graph(), MapSpec(NAVIGATION, 1.0))
    assert grid.occupied_count == 0 and grid.cells.size > 0
    assert "empty" in caplog.text


def test_filter_matching_nothing_is_all_free(room_graph):
    grid = generate_map(room_graph, MapSpec(NAVIGATION, 1.0, filter=parse_filter("type in (Door)")))
    assert grid.occupied_count == 0


def test_navigation_contains_localization(lab_graph):
    flt = ElementFilter(include_types={"Wall"})
    loc = gen_localization_map(lab_graph, MapSpec(LOCALIZATION, 0.3, filter=flt))
    nav = gen_navigation_map(lab_graph, MapSpec(NAVIGATION, 0.5, filter=flt))
    assert loc.occupied_cells() <= nav.occupied_cells()


def test_lab_arch_localization(lab_graph):
    grid = gen_localization_map(lab_graph, preset("lab-loc"))
    assert free_connected(grid, ROOM_A_CENTER, ROOM_B_CENTER)
    assert not grid.cells[grid.cell_of(*CORRIDOR_MID)]


def test_lab_arch_heights(lab04_graph):
    low = gen_navigation_map(lab04_graph, preset("lab-nav", height=0.25))
    high = gen_navigation_map(lab04_graph, preset("lab-nav", height=0.5))
    assert free_connected(low, ROOM_A_CENTER, ROOM_B_CENTER)
    assert not free_connected(high, ROOM_A_CENTER, ROOM_B_CENTER)
    assert high.cells[high.cell_of(*CORRIDOR_MID)]


def test_storey_crossing_rejected():
    g = cube_graph()
    g.storey_elevations = (0.0, 3.0)
    with pytest.raises(MapError, match="storey"):
        generate_map(g, MapSpec(NAVIGATION, 3.5))
    generate_map(g, MapSpec(NAVIGATION, 2.9))
    generate_map(g, MapSpec(NAVIGATION, 1.0, z_floor=3.0))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(kind="topological", height=1.0),
        dict(kind=LOCALIZATION, height=0.0),
        dict(kind=LOCALIZATION, height=1.0, resolution=0.0),
        dict(kind=LOCALIZATION, height=1.0, resolution=-0.1),
        dict(kind=LOCALIZATION, height=1.0, lidar_slab_thickness=0.0),
        dict(kind=NAVIGATION, height=0.01),
        dict(kind=NAVIGATION, height=1.0, margin=-1.0),
        dict(kind=NAVIGATION, height=float("nan")),
    ],
)
def test_invalid_specs(kwargs):
    with pytest.raises(MapError):
        MapSpec(**kwargs)


def test_kind_is_checked():
    with pytest.raises(MapError):
        gen_localization_map(Graph(), MapSpec(NAVIGATION, 1.0))
    with pytest.raises(MapError):
        gen_navigation_map(Graph(), MapSpec(LOCALIZATION, 1.0))


def test_slabs():
    loc = MapSpec(LOCALIZATION, 0.5, z_floor=1.0, lidar_slab_thickness=0.02).slab()
    nav = MapSpec(NAVIGATION, 1.5, z_floor=1.0, floor_clearance=0.05).slab()
    assert (loc.z_low, loc.z_high) == pytest.approx((1.49, 1.51))
    assert (nav.z_low, nav.z_high) == pytest.approx((1.05, 2.5))


def test_workers_do_not_change_the_map(lab_graph):
    spec = preset("lab-nav")
    assert generate_map(lab_graph, spec, workers=3) == generate_map(lab_graph, spec)


# -- files -------------------------------------------------------------------


def test_write_two_by_two(tmp_path):
    cells = np.array([[True, False], [False, False]])  # occupied cell at the lowest y
    pgm, meta = write_grid(OccupancyGrid(cells, 0.05, (-0.5, -0.25, 0.0)), tmp_path / "m")
    data = pgm.read_bytes()
    header = b"P5\n2 2\n255\n"
    assert data[: len(header)] == header
    raster = data[len(header):]
    assert raster == bytes([0xFE, 0xFE, 0x00, 0xFE])
    doc = yaml.safe_load(meta.read_text())
    assert doc == {
        "image": "m.pgm",
        "resolution": 0.05,
        "origin": [-0.5, -0.25, 0.0],
        "negate": 0,
        "occupied_thresh": 0.65,
        "free_thresh": 0.196,
    }


def test_grid_round_trip(tmp_path, lab_graph):
    grid = gen_navigation_map(lab_graph, preset("lab-nav"))
    _, meta = write_grid(grid, tmp_path / "lab")
    assert read_grid(meta) == grid
    assert read_grid(tmp_path / "lab") == grid


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_grid_round_trip(tmp_path_factory, seed):
    grid = random_grid(np.random.default_rng(seed))
    base = tmp_path_factory.mktemp("g") / "grid"
    write_grid(grid, base)
    assert read_grid(base) == grid


def test_bad_pgm(tmp_path):
    (tmp_path / "m.pgm").write_bytes(b"P2\n1 1\n255\n0\n")
    (tmp_path / "m.yaml").write_text("image: m.pgm\nresolution: 0.1\norigin: [0, 0, 0]\n")
    with pytest.raises(MapError):
        read_grid(tmp_path / "m.yaml")


# -- invariants --------------------------------------------------------------

HEIGHTS = (0.1, 0.25, 0.5, 1.0, 1.5)


@pytest.mark.parametrize("name", ["lab_graph", "lab04_graph", "room_graph"])
def test_height_monotonicity(request, name):
    g = request.getfixturevalue(name)
    prev = set()
    for h in HEIGHTS:
        cur = gen_navigation_map(g, MapSpec(NAVIGATION, h)).occupied_cells()
        assert prev <= cur
        prev = cur


@pytest.mark.parametrize("seed", range(4))
def test_filter_relaxation(seed):
    rng = np.random.default_rng(seed)
    g = build_graph(random_ifc_model(rng, max_elements=30))
    for _ in range(3):
        flt = random_filter(rng)
        strict = generate_map(g, MapSpec(NAVIGATION, 1.0, resolution=0.1, filter=flt)).occupied_cells()
        for loose in relaxations(flt):
            assert strict <= generate_map(g, MapSpec(NAVIGATION, 1.0, resolution=0.1, filter=loose)).occupied_cells()


@pytest.mark.parametrize("name", ["lab_graph", "lab04_graph", "room_graph"])
@pytest.mark.parametrize("spec", [MapSpec(LOCALIZATION, 0.1), MapSpec(LOCALIZATION, 0.9), MapSpec(NAVIGATION, 0.5), MapSpec(NAVIGATION, 1.5)],
                         ids=["loc0.1", "loc0.9", "nav0.5", "nav1.5"])
def test_oracle_agreement(request, name, spec):
    g = request.getfixturevalue(name)
    grid = generate_map(g, spec)
    meshes = [s.mesh for s in query(g, spec.filter)]
    oracle = oracle_mask(meshes, grid, spec.slab())
    assert (grid.cells == oracle).mean() >= 0.995
    union = shapely.union_all([cs.geometry for cs in footprints(g, spec)])
    bad = np.argwhere(grid.cells != oracle)
    assert (boundary_distance(grid, bad, union) <= grid.resolution).all()
