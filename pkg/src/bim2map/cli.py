"""Command line entry point: IFC -> graph -> maps.

Exit codes: 0 success, 1 processing error, 2 usage or input error.
Set ``BIM2MAP_LOG`` (e.g. ``INFO`` or ``DEBUG``) for more output.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .geometry import GeometryError
from .ifc_model import IfcDecodeError, decode_ifc
from .map_gen import LOCALIZATION, NAVIGATION, PRESETS, MapError, MapSpec, footprints, generate_map, write_grid
from .step_parser import StepError, read_step
from .world_model import (
    DEFAULT_STATIC_TYPES,
    ElementFilter,
    FilterSyntaxError,
    Graph,
    GraphError,
    build_graph,
    parse_filter,
    query,
    read_graph,
    write_graph,
)

log = logging.getLogger("bim2map")


class UsageError(Exception):
    pass


def _setup_logging() -> None:
    level = os.environ.get("BIM2MAP_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _static_types(arg: str | None) -> list[str]:
    if arg is None:
        return list(DEFAULT_STATIC_TYPES)
    return [t.strip() for t in arg.split(",") if t.strip()]


def load_graph(path: str, static_types: str | None = None) -> Graph:
    """Read a graph from Turtle, or build it from an IFC file."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    if p.suffix.lower() in (".ifc", ".stp", ".step"):
        model = decode_ifc(read_step(p))
        for w in model.warnings:
            log.warning("%s", w)
        return build_graph(model, _static_types(static_types))
    if static_types is not None:
        log.warning("--static-types only applies to IFC input; ignored")
    return read_graph(p)


def _filter_arg(text: str | None) -> ElementFilter | None:
    if text is None:
        return None
    if text.startswith("@"):
        text = Path(text[1:]).read_text(encoding="utf-8")
    return parse_filter(text)


def _map_spec(args, kind: str) -> MapSpec:
    base: dict = {}
    if args.preset:
        base = dict(PRESETS[args.preset])
        if base["kind"] != kind:
            raise UsageError(f"preset {args.preset} makes a {base['kind']} map")
    base["kind"] = kind
    if args.height is not None:
        base["height"] = args.height
    if "height" not in base:
        raise UsageError("give --height or --preset")
    for flag, key in (
        ("z_floor", "z_floor"),
        ("resolution", "resolution"),
        ("margin", "margin"),
        ("slab_thickness", "lidar_slab_thickness"),
        ("clearance", "floor_clearance"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            base[key] = value
    flt = _filter_arg(args.filter)
    if flt is not None:
        base["filter"] = flt
    try:
        return MapSpec(**base)
    except MapError as exc:
        raise UsageError(str(exc)) from None


def _print_rows(rows) -> None:
    for row in rows:
        print("\t".join(str(v) for v in row))


# ---------------------------------------------------------------------------
# commands


def cmd_build_graph(args) -> int:
    g = load_graph(args.input, args.static_types)
    out = Path(args.output) if args.output else Path(args.input).with_suffix(".ttl")
    write_graph(g, out)
    print(f"{len(g.elements())} elements, {len(g)} triples -> {out}")
    return 0


def cmd_stats(args) -> int:
    g = load_graph(args.input, args.static_types)
    rows = [("statistic", "value")]
    rows += list(g.stats().items())
    _print_rows(rows)
    return 0


def _make_map(args, kind: str) -> int:
    spec = _map_spec(args, kind)
    g = load_graph(args.input, args.static_types)
    grid = generate_map(g, spec, workers=args.workers)
    suffix = "_loc" if kind == LOCALIZATION else "_nav"
    base = Path(args.output) if args.output else Path(args.input).with_suffix("")
    if not args.output:
        base = base.with_name(base.name + suffix)
    pgm, meta = write_grid(grid, base)
    print(f"{grid.width}x{grid.height} cells, {grid.occupied_count} occupied -> {pgm}, {meta}")
    if args.png:
        from .plotting import render_grid

        title = f"{kind} map, h={spec.height:g} m"
        render_grid(grid, args.png, title=title, sections=footprints(g, spec))
        print(f"preview -> {args.png}")
    return 0


def cmd_loc_map(args) -> int:
    return _make_map(args, LOCALIZATION)


def cmd_nav_map(args) -> int:
    return _make_map(args, NAVIGATION)


def cmd_query(args) -> int:
    flt = _filter_arg(args.expression) or ElementFilter()
    g = load_graph(args.input, args.static_types)
    mats = {s.subject.id: s.object for s in g.triples if s.predicate == "hasMaterial"}
    types = {s.subject.id: s.object for s in g.triples if s.predicate == "type"}
    rows = [("id", "type", "material")]
    rows += [(sel.id, types.get(sel.id, ""), mats.get(sel.id, "")) for sel in query(g, flt)]
    _print_rows(rows)
    return 0


def cmd_report(args) -> int:
    """Stats table plus a localization and a navigation map with previews."""
    from .plotting import render_grid

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    g = load_graph(args.input, args.static_types)
    rows = [("statistic", "value")] + list(g.stats().items())
    for name in (args.loc_preset, args.nav_preset):
        spec = MapSpec(**PRESETS[name])
        grid = generate_map(g, spec, workers=args.workers)
        stem = out / name
        write_grid(grid, stem)
        render_grid(grid, stem.with_suffix(".png"), title=name, sections=footprints(g, spec))
        rows.append((f"{name}_occupied_cells", grid.occupied_count))
    with open(out / "stats.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("".join("\t".join(str(v) for v in r) + "\n" for r in rows))
    _print_rows(rows)
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_input(p) -> None:
    p.add_argument("input", help="IFC (.ifc) or graph (.ttl) file")
    p.add_argument("--static-types", help="comma separated element types treated as static (IFC input only)")


def _add_map_flags(p) -> None:
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--height", type=float, help="sensor (localization) or robot (navigation) height [m]")
    p.add_argument("--z-floor", type=float, help="storey floor elevation [m]")
    p.add_argument("--resolution", type=float, help="cell size [m]")
    p.add_argument("--margin", type=float, help="padding around the content [m]")
    p.add_argument("--filter", help="filter expression, or @file")
    p.add_argument("-o", "--output", help="output basename (writes .pgm and .yaml)")
    p.add_argument("--png", help="also render a PNG preview here")
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bim2map", description="Semantic graph world model and maps from IFC.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-graph", help="convert IFC to a Turtle graph")
    _add_input(p)
    p.add_argument("-o", "--output", help="output .ttl (default: input with .ttl suffix)")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("stats", help="print line, triple, element and mesh counts")
    _add_input(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("loc-map", help="localization map (planar LIDAR view)")
    _add_input(p)
    _add_map_flags(p)
    p.add_argument("--slab-thickness", type=float, help="LIDAR slab thickness [m]")
    p.set_defaults(func=cmd_loc_map)

    p = sub.add_parser("nav-map", help="navigation map (robot body volume)")
    _add_input(p)
    _add_map_flags(p)
    p.add_argument("--clearance", type=float, help="floor clearance below the volume [m]")
    p.set_defaults(func=cmd_nav_map)

    p = sub.add_parser("query", help="list elements selected by a filter expression")
    _add_input(p)
    p.add_argument("expression", nargs="?", default="all", help="filter expression, or @file")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("report", help="stats plus one localization and one navigation map, with PNGs")
    _add_input(p)
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--loc-preset", default="lab-loc", choices=sorted(k for k in PRESETS if k.endswith("loc")))
    p.add_argument("--nav-preset", default="lab-nav", choices=sorted(k for k in PRESETS if k.endswith("nav")))
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, FilterSyntaxError) as exc:
        print(f"bim2map: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"bim2map: error: {exc}", file=sys.stderr)
        return 2
    except (StepError, IfcDecodeError, GraphError, GeometryError, MapError) as exc:
        print(f"bim2map: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
