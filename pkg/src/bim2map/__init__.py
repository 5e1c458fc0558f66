"""Semantic graph world models from IFC files, and robot maps derived from them."""

from .geometry import CrossSection, Mesh, Slab, point_in_mesh, slab_cross_section, tessellate
from .ifc_model import IfcModel, decode_ifc
from .map_gen import MapSpec, OccupancyGrid, gen_localization_map, gen_navigation_map, read_grid, write_grid
from .step_parser import StepModel, parse_step, read_step, to_step
from .world_model import ElementFilter, Graph, build_graph, from_turtle, parse_filter, query, to_turtle

__version__ = "0.1.0"

__all__ = [
    "CrossSection",
    "ElementFilter",
    "Graph",
    "IfcModel",
    "MapSpec",
    "Mesh",
    "OccupancyGrid",
    "Slab",
    "StepModel",
    "build_graph",
    "decode_ifc",
    "from_turtle",
    "gen_localization_map",
    "gen_navigation_map",
    "parse_filter",
    "parse_step",
    "point_in_mesh",
    "query",
    "read_grid",
    "read_step",
    "slab_cross_section",
    "tessellate",
    "to_step",
    "to_turtle",
    "write_grid",
]
