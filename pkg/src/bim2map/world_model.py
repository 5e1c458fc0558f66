"""Semantic graph world model.

The graph is a set of ``(subject, predicate, object)`` triples over building
spaces and elements. It is built from a decoded IFC model, serialized as
Turtle, and queried with a small element filter language::

    filter  := "all" | clause (["and"] clause)*
    clause  := "type" ["not"] "in" "(" names ")"
             | "minus" "type" "(" names ")"
             | "minus" "material" (value | "(" values ")")
             | "static" | "dynamic"
    names   := name ("," name)*

Names may carry a ``beo:``/``bot:``/``props:`` prefix and the ``Ifc`` prefix
is optional, so ``beo:Wall``, ``IfcWall`` and ``wall`` are the same type.
Values may be quoted with ``"`` or ``'``. Keywords are case-insensitive.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Union

import numpy as np

from .geometry import GeometryError, Mesh, element_mesh
from .ifc_model import ELEMENT_CLASS_NAMES, IfcModel, class_name

log = logging.getLogger(__name__)

BOT = "https://w3id.org/bot#"
BEO = "https://pi.pauwel.be/voc/buildingelement#"
PROPS = "https://w3id.org/props#"
INST = "https://example.org/bim2map/inst#"
RDF_TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"
XSD = "http://www.w3.org/2001/XMLSchema#"

PREFIXES = {"bot": BOT, "beo": BEO, "props": PROPS, "inst": INST}

PREDICATES = ("type", "adjacent", "contains", "hasGeometry", "hasMaterial", "isStatic", "hasSubElement")
_PREDICATE_IRI = {
    "type": RDF_TYPE,
    "adjacent": BOT + "adjacentElement",
    "contains": BOT + "containsElement",
    "hasSubElement": BOT + "hasSubElement",
    "hasGeometry": PROPS + "hasGeometry",
    "hasMaterial": PROPS + "Material",
    "isStatic": PROPS + "isStatic",
}
_IRI_PREDICATE = {v: k for k, v in _PREDICATE_IRI.items()}
_PREDICATE_ALIASES = {
    "a": "type",
    "adjacentelement": "adjacent",
    "containselement": "contains",
    "material": "hasMaterial",
}

DEFAULT_STATIC_TYPES = ("Wall", "Column", "Slab", "Beam", "Door", "Window", "Covering", "Stair", "Railing")

# Subclass -> class, used for type matching and static classification.
SUPERTYPES = {
    "WallStandardCase": "Wall",
    "WallElementedCase": "Wall",
    "ColumnStandardCase": "Column",
    "BeamStandardCase": "Beam",
    "SlabStandardCase": "Slab",
    "SlabElementedCase": "Slab",
    "DoorStandardCase": "Door",
    "WindowStandardCase": "Window",
    "MemberStandardCase": "Member",
    "PlateStandardCase": "Plate",
    "OpeningStandardCase": "OpeningElement",
    "StairFlight": "Stair",
    "RampFlight": "Ramp",
    "Furniture": "FurnishingElement",
    "SystemFurnitureElement": "FurnishingElement",
    "AirTerminal": "FlowTerminal",
    "LightFixture": "FlowTerminal",
    "SanitaryTerminal": "FlowTerminal",
    "ElectricAppliance": "FlowTerminal",
    "FireSuppressionTerminal": "FlowTerminal",
    "Lamp": "FlowTerminal",
    "Outlet": "FlowTerminal",
    "SpaceHeater": "FlowTerminal",
    "StackTerminal": "FlowTerminal",
    "WasteTerminal": "FlowTerminal",
    "AudioVisualAppliance": "FlowTerminal",
    "CommunicationsAppliance": "FlowTerminal",
    "MedicalDevice": "FlowTerminal",
    "PipeSegment": "FlowSegment",
    "DuctSegment": "FlowSegment",
    "CableSegment": "FlowSegment",
    "CableCarrierSegment": "FlowSegment",
}


class GraphError(ValueError):
    pass


class TurtleError(GraphError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class FilterSyntaxError(GraphError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


# ---------------------------------------------------------------------------
# terms

_NODE_ID = re.compile(r"[A-Za-z0-9_][A-Za-z0-9_\-]*\Z")


@dataclass(frozen=True, order=True)
class Node:
    """A space or element of the model, written as ``inst:<id>``."""

    id: str

    def __post_init__(self):
        if not _NODE_ID.match(self.id):
            raise GraphError(f"invalid node id {self.id!r}")

    def __str__(self):
        return self.id


@dataclass(frozen=True, order=True)
class IRI:
    """A resource outside the model namespace, kept verbatim."""

    value: str


@dataclass(frozen=True, order=True)
class Literal:
    """A literal that is neither a plain string nor a boolean."""

    lexical: str
    datatype: str | None = None
    lang: str | None = None


Subject = Union[Node, IRI]
# Node, class name (object of ``type``), plain string, bool, IRI or Literal.
Object = Union[Node, str, bool, IRI, Literal]


class Triple(NamedTuple):
    subject: Subject
    predicate: str
    object: Object


def normalize_predicate(predicate: str) -> str:
    """Map a predicate name, prefixed name or IRI onto the closed vocabulary.

    Unknown predicates come back as ``<iri>`` so they survive round trips.
    """
    if predicate in _PREDICATE_IRI:
        return predicate
    if predicate.startswith("<") and predicate.endswith(">"):
        iri = predicate[1:-1]
        return _IRI_PREDICATE.get(iri, predicate)
    if predicate in _IRI_PREDICATE:
        return _IRI_PREDICATE[predicate]
    local = predicate
    if ":" in predicate:
        prefix, local = predicate.split(":", 1)
        if prefix in PREFIXES:
            iri = PREFIXES[prefix] + local
            if iri in _IRI_PREDICATE:
                return _IRI_PREDICATE[iri]
        else:
            return f"<{predicate}>"
    alias = _PREDICATE_ALIASES.get(local.lower())
    if alias:
        return alias
    for name in PREDICATES:
        if name.lower() == local.lower():
            return name
    raise GraphError(f"unknown predicate {predicate!r}")


def _object_key(o) -> tuple:
    # bool first: it is also an int, so test before anything numeric
    if isinstance(o, bool):
        return (1, str(o))
    if isinstance(o, Node):
        return (0, o.id)
    if isinstance(o, str):
        return (2, o)
    if isinstance(o, IRI):
        return (3, o.value)
    if isinstance(o, Literal):
        return (4, o.lexical, o.datatype or "", o.lang or "")
    raise GraphError(f"unsupported object {o!r}")


def _triple_key(t: Triple) -> tuple:
    s = (0, t.subject.id) if isinstance(t.subject, Node) else (1, t.subject.value)
    return (s, t.predicate, _object_key(t.object))


# ---------------------------------------------------------------------------
# mesh strings


def _floats(values: np.ndarray) -> str:
    return " ".join(repr(float(x)) for x in np.asarray(values, dtype=float).ravel())


def encode_mesh(mesh: Mesh) -> str:
    """Encode a mesh as ``V ...;F ...;E ...;T ...`` with exact float text."""
    f = " ".join(str(int(i)) for i in mesh.faces.ravel())
    e = " ".join(str(int(i)) for i in mesh.edges.ravel())
    return f"V {_floats(mesh.vertices)};F {f};E {e};T {_floats(mesh.transform)}"


def decode_mesh(text: str) -> Mesh:
    parts = {}
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        key, _, body = chunk.partition(" ")
        if key not in ("V", "F", "E", "T") or key in parts:
            raise GeometryError(f"bad mesh string section {key!r}")
        parts[key] = body.split()
    if set(parts) != {"V", "F", "E", "T"}:
        raise GeometryError("mesh string needs V, F, E and T sections")
    try:
        v = np.array([float(x) for x in parts["V"]], dtype=float)
        f = np.array([int(x) for x in parts["F"]], dtype=np.int64)
        e = np.array([int(x) for x in parts["E"]], dtype=np.int64)
        t = np.array([float(x) for x in parts["T"]], dtype=float)
    except ValueError as exc:
        raise GeometryError(f"bad number in mesh string: {exc}") from None
    if v.size % 3 or f.size % 3 or e.size % 2 or t.size != 16:
        raise GeometryError("mesh string section has the wrong length")
    mesh = Mesh(v.reshape(-1, 3), f.reshape(-1, 3), t.reshape(4, 4))
    if not np.array_equal(mesh.edges, e.reshape(-1, 2)):
        raise GeometryError("mesh string edges do not match its faces")
    return mesh


# ---------------------------------------------------------------------------
# graph


class Graph:
    """Set of triples plus a decoded view of element geometry.

    ``source_lines`` (line count of the IFC file the graph came from) and
    ``storey_elevations`` are metadata and do not take part in equality.
    """

    def __init__(self, triples: Iterable = (), source_lines: int | None = None, storey_elevations=()):
        self._triples: set[Triple] = set()
        self._meshes: dict[str, Mesh] = {}
        self.source_lines = source_lines
        self.storey_elevations = tuple(float(z) for z in storey_elevations)
        for t in triples:
            self.add(*t)

    def add(self, subject, predicate: str, obj) -> None:
        if isinstance(subject, str):
            subject = Node(subject)
        if not isinstance(subject, (Node, IRI)):
            raise GraphError(f"bad subject {subject!r}")
        predicate = normalize_predicate(predicate)
        _object_key(obj)
        if predicate == "isStatic" and not isinstance(obj, bool):
            raise GraphError("isStatic object must be a boolean")
        if predicate == "hasGeometry" and not isinstance(obj, str):
            raise GraphError("hasGeometry object must be a mesh string")
        if predicate == "type" and isinstance(obj, str) and not _PN_LOCAL.match(obj):
            raise GraphError(f"invalid class name {obj!r}")
        self._triples.add(Triple(subject, predicate, obj))

    def __len__(self):
        return len(self._triples)

    def __iter__(self) -> Iterator[Triple]:
        return iter(sorted(self._triples, key=_triple_key))

    def __contains__(self, triple) -> bool:
        return tuple(triple) in self._triples

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return self._triples == other._triples

    def __repr__(self):
        return f"Graph({len(self)} triples)"

    @property
    def triples(self) -> frozenset:
        return frozenset(self._triples)

    def objects(self, subject, predicate: str) -> list:
        if isinstance(subject, str):
            subject = Node(subject)
        predicate = normalize_predicate(predicate)
        out = [t.object for t in self._triples if t.subject == subject and t.predicate == predicate]
        return sorted(out, key=_object_key)

    def _index(self, predicate: str) -> dict:
        idx: dict = {}
        for t in self._triples:
            if t.predicate == predicate:
                idx.setdefault(t.subject, []).append(t.object)
        return idx

    def elements(self) -> list[Node]:
        """Element nodes, i.e. every subject that carries an ``isStatic`` triple."""
        return sorted(s for s in self._index("isStatic") if isinstance(s, Node))

    def spaces(self) -> list[Node]:
        return sorted(s for s, objs in self._index("type").items() if "Space" in objs and isinstance(s, Node))

    def meshes(self) -> dict[str, Mesh]:
        """Decoded geometry keyed by node id."""
        out = {}
        for s, objs in self._index("hasGeometry").items():
            if not isinstance(s, Node):
                continue
            if s.id not in self._meshes:
                self._meshes[s.id] = decode_mesh(objs[0])
            out[s.id] = self._meshes[s.id]
        return dict(sorted(out.items()))

    def geometry_store(self) -> dict[str, tuple[str, np.ndarray]]:
        """Node id -> (mesh string, local-to-global transform)."""
        strings = {s.id: objs[0] for s, objs in self._index("hasGeometry").items() if isinstance(s, Node)}
        meshes = self.meshes()
        return {k: (strings[k], meshes[k].transform) for k in sorted(strings)}

    def bounds(self) -> np.ndarray | None:
        """Global bounds of all geometry, or None when the graph has none."""
        boxes = [m.bounds() for m in self.meshes().values() if len(m.vertices)]
        if not boxes:
            return None
        b = np.array(boxes)
        return np.array([b[:, 0].min(axis=0), b[:, 1].max(axis=0)])

    def stats(self) -> dict[str, int]:
        return {
            "ifc_lines": int(self.source_lines or 0),
            "triples": len(self),
            "elements": len(self.elements()),
            "meshes": len(self.meshes()),
        }


# ---------------------------------------------------------------------------
# building from IFC

_UNSAFE = re.compile(r"[^A-Za-z0-9_\-]+")


def _sanitize(name: str) -> str:
    s = _UNSAFE.sub("_", name.strip()).strip("_")
    return s


def _node_ids(ifc: IfcModel) -> dict[int, str]:
    cands: dict[int, str] = {}
    for sp in ifc.spaces:
        cands[sp.id] = _sanitize(sp.name or "") or f"Space_{sp.id}"
    for el in ifc.elements:
        cands[el.id] = _sanitize(el.name or "") or f"{class_name(el.ifc_type)}_{el.id}"
    counts: dict[str, int] = {}
    for c in cands.values():
        counts[c] = counts.get(c, 0) + 1
    ids = {}
    for step_id, c in cands.items():
        ids[step_id] = c if counts[c] == 1 else f"{c}_{step_id}"
    # a renamed duplicate can still hit an existing name; fall back to a stable tag
    taken: dict[str, int] = {}
    for step_id in sorted(ids):
        if ids[step_id] in taken:
            ids[step_id] = f"{ids[step_id]}_n{step_id}"
        taken[ids[step_id]] = step_id
    return ids


def type_lineage(type_name: str) -> list[str]:
    """The type and all its known supertypes, most specific first."""
    out = [type_name]
    while out[-1] in SUPERTYPES:
        out.append(SUPERTYPES[out[-1]])
    return out


def normalize_type_name(name: str) -> str:
    """``beo:IfcWall``, ``IFCWALL`` and ``wall`` all become ``Wall``."""
    name = name.strip()
    if ":" in name:
        name = name.split(":", 1)[1]
    if name[:3].lower() == "ifc" and len(name) > 3:
        name = name[3:]
    known = _KNOWN_TYPES.get(name.lower())
    if known:
        return known
    return name[:1].upper() + name[1:]


_KNOWN_TYPES = {
    n.lower(): n for n in ELEMENT_CLASS_NAMES + ["Space"] + list(SUPERTYPES) + list(SUPERTYPES.values())
}


def _is_static(type_name: str, static: set[str]) -> bool:
    return any(t in static for t in type_lineage(type_name))


def build_graph(ifc: IfcModel, static_types: Iterable[str] = DEFAULT_STATIC_TYPES) -> Graph:
    """Turn a decoded IFC model into triples.

    Spaces get a type triple plus ``adjacent``/``contains`` links; elements get
    type, geometry (when it tessellates), material (when known), ``isStatic``
    and ``hasSubElement`` links.
    """
    static = {normalize_type_name(t) for t in static_types}
    ids = _node_ids(ifc)
    g = Graph(source_lines=ifc.line_count, storey_elevations=sorted(set(ifc.storey_elevations)))

    for sp in ifc.spaces:
        node = Node(ids[sp.id])
        g.add(node, "type", "Space")
        for e in sp.bounded_by:
            g.add(node, "adjacent", Node(ids[e]))
        for e in sp.contains:
            g.add(node, "contains", Node(ids[e]))

    for el in ifc.elements:
        node = Node(ids[el.id])
        tname = class_name(el.ifc_type)
        g.add(node, "type", tname)
        if el.geometry:
            try:
                mesh = element_mesh(el.geometry, el.placement)
            except GeometryError as exc:
                log.warning("element #%d (%s): geometry skipped: %s", el.id, node.id, exc)
            else:
                if len(mesh.faces):
                    g.add(node, "hasGeometry", encode_mesh(mesh))
                    g._meshes[node.id] = mesh
        else:
            log.warning("element #%d (%s) has no usable geometry", el.id, node.id)
        if el.material:
            g.add(node, "hasMaterial", el.material)
        g.add(node, "isStatic", _is_static(tname, static))
        for s in el.sub_elements:
            g.add(node, "hasSubElement", Node(ids[s]))
    return g


# ---------------------------------------------------------------------------
# filters

ALL = None


@dataclass(frozen=True)
class ElementFilter:
    """Element selection: type in/out sets, material exclusion, static flag.

    ``include_types`` of ``None`` means every type.
    """

    include_types: frozenset | None = ALL
    exclude_types: frozenset = frozenset()
    exclude_materials: frozenset = frozenset()
    require_static: bool | None = None

    def __post_init__(self):
        inc = None if self.include_types is None else frozenset(normalize_type_name(t) for t in self.include_types)
        exc = frozenset(normalize_type_name(t) for t in self.exclude_types)
        mats = frozenset(_material_key(m) for m in self.exclude_materials)
        if inc is not None and inc & exc:
            raise GraphError(f"types both included and excluded: {sorted(inc & exc)}")
        object.__setattr__(self, "include_types", inc)
        object.__setattr__(self, "exclude_types", exc)
        object.__setattr__(self, "exclude_materials", mats)

    @classmethod
    def parse(cls, text: str) -> "ElementFilter":
        return parse_filter(text)

    def accepts(self, type_name: str | None, material: str | None, is_static: bool | None) -> bool:
        lineage = set(type_lineage(type_name)) if type_name else set()
        if self.include_types is not None and not (lineage & self.include_types):
            return False
        if lineage & self.exclude_types:
            return False
        if material is not None and _material_key(material) in self.exclude_materials:
            return False
        if self.require_static is not None and is_static is not self.require_static:
            return False
        return True

    def to_expression(self) -> str:
        parts = []
        if self.include_types is not None:
            parts.append(f"type in ({', '.join(sorted(self.include_types))})")
        if self.exclude_types:
            parts.append(f"type not in ({', '.join(sorted(self.exclude_types))})")
        if self.exclude_materials:
            mats = ", ".join(_quote_value(m) for m in sorted(self.exclude_materials))
            parts.append(f"minus material ({mats})")
        if self.require_static is not None:
            parts.append("static" if self.require_static else "dynamic")
        return " and ".join(parts) or "all"


def _material_key(name: str) -> str:
    name = name.strip()
    if ":" in name and name.split(":", 1)[0] in PREFIXES:
        name = name.split(":", 1)[1]
    return name.casefold()


def _quote_value(v: str) -> str:
    if re.fullmatch(r"[A-Za-z_][\w\-]*", v):
        return v
    return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'


_FILTER_TOKEN = re.compile(
    r"""\s*(?:(?P<punct>[(),])|"(?P<dq>(?:[^"\\]|\\.)*)"|'(?P<sq>(?:[^'\\]|\\.)*)'|(?P<word>[A-Za-z_][\w\-.:]*))"""
)


def _filter_tokens(text: str) -> list[tuple[str, str, int]]:
    out = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _FILTER_TOKEN.match(text, pos)
        if not m:
            raise FilterSyntaxError(f"unexpected character {text[pos]!r}", pos)
        start = m.start(m.lastgroup)
        if m.lastgroup == "punct":
            out.append(("punct", m.group("punct"), start))
        elif m.lastgroup in ("dq", "sq"):
            raw = m.group(m.lastgroup)
            out.append(("value", re.sub(r"\\(.)", r"\1", raw), start - 1))
        else:
            out.append(("word", m.group("word"), start))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _FilterParser:
    def __init__(self, text: str):
        self.toks = _filter_tokens(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def keyword(self, *words) -> str:
        kind, val, pos = self.next()
        if kind != "word" or val.lower() not in words:
            shown = "end of input" if kind == "end" else repr(val)
            raise FilterSyntaxError(f"expected {' or '.join(repr(w) for w in words)}, got {shown}", pos)
        return val.lower()

    def punct(self, ch: str) -> None:
        kind, val, pos = self.next()
        if kind != "punct" or val != ch:
            shown = "end of input" if kind == "end" else repr(val)
            raise FilterSyntaxError(f"expected {ch!r}, got {shown}", pos)

    def value(self) -> str:
        kind, val, pos = self.next()
        if kind not in ("word", "value"):
            shown = "end of input" if kind == "end" else repr(val)
            raise FilterSyntaxError(f"expected a name, got {shown}", pos)
        return val

    def name_list(self) -> list[str]:
        self.punct("(")
        out = [self.value()]
        while self.peek()[1] == ",":
            self.next()
            out.append(self.value())
        self.punct(")")
        return out

    def parse(self) -> ElementFilter:
        include: set | None = None
        exclude: set = set()
        mats: set = set()
        static = None
        seen_clause = False
        while self.peek()[0] != "end":
            if seen_clause and self.peek()[0] == "word" and self.peek()[1].lower() == "and":
                self.next()
            kind, val, pos = self.peek()
            word = val.lower() if kind == "word" else ""
            if word == "all":
                self.next()
            elif word == "type":
                self.next()
                negate = self.keyword("in", "not") == "not"
                if negate:
                    self.keyword("in")
                names = {normalize_type_name(n) for n in self.name_list()}
                if negate:
                    exclude |= names
                else:
                    include = names if include is None else include & names
            elif word == "minus":
                self.next()
                what = self.keyword("type", "material")
                if what == "type":
                    exclude |= {normalize_type_name(n) for n in self.name_list()}
                elif self.peek()[1] == "(" and self.peek()[0] == "punct":
                    mats |= set(self.name_list())
                else:
                    mats.add(self.value())
            elif word in ("static", "dynamic"):
                self.next()
                want = word == "static"
                if static is not None and static != want:
                    raise FilterSyntaxError("conflicting static/dynamic clauses", pos)
                static = want
            else:
                shown = "end of input" if kind == "end" else repr(val)
                raise FilterSyntaxError(f"expected a clause, got {shown}", pos)
            seen_clause = True
        if include is not None:
            include -= exclude
        return ElementFilter(include, frozenset(exclude), frozenset(mats), static)


def parse_filter(text: str) -> ElementFilter:
    """Parse a filter expression; an empty expression selects everything."""
    return _FilterParser(text).parse()


class Selection(NamedTuple):
    id: str
    mesh: Mesh
    transform: np.ndarray


def select_elements(graph: Graph, flt: ElementFilter | None = None) -> list[Node]:
    """Element nodes passing ``flt``, with or without geometry, sorted by id."""
    flt = flt or ElementFilter()
    types = graph._index("type")
    mats = graph._index("hasMaterial")
    static = graph._index("isStatic")
    out = []
    for node in graph.elements():
        tname = min((t for t in types.get(node, []) if isinstance(t, str)), default=None)
        mat = min((m for m in mats.get(node, []) if isinstance(m, str)), default=None)
        st = static.get(node, [None])[0]
        if flt.accepts(tname, mat, st):
            out.append(node)
    return out


def query(graph: Graph, flt: ElementFilter | None = None) -> list[Selection]:
    """Meshes of the elements passing ``flt``, ordered by node id."""
    meshes = graph.meshes()
    return [
        Selection(n.id, meshes[n.id], meshes[n.id].transform)
        for n in select_elements(graph, flt)
        if n.id in meshes
    ]


# ---------------------------------------------------------------------------
# Turtle

_PN_LOCAL = re.compile(r"[A-Za-z_][A-Za-z0-9_\-]*\Z")


def _escape(s: str) -> str:
    out = []
    for ch in s:
        o = ord(ch)
        if ch == "\\":
            out.append("\\\\")
        elif ch == '"':
            out.append('\\"')
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\r":
            out.append("\\r")
        elif ch == "\t":
            out.append("\\t")
        elif o < 0x20 or o == 0x7F or 0xD800 <= o <= 0xDFFF:
            out.append(f"\\u{o:04X}")
        else:
            out.append(ch)
    return '"' + "".join(out) + '"'


def _iri(value: str) -> str:
    out = []
    for ch in value:
        if ch in '<>"{}|^`\\' or ord(ch) <= 0x20:
            out.append(f"\\u{ord(ch):04X}")
        else:
            out.append(ch)
    return "<" + "".join(out) + ">"


def _term(o, *, is_type: bool = False) -> str:
    if isinstance(o, bool):
        return "true" if o else "false"
    if isinstance(o, Node):
        return f"inst:{o.id}" if _PN_LOCAL.match(o.id) else _iri(INST + o.id)
    if isinstance(o, IRI):
        return _iri(o.value)
    if isinstance(o, Literal):
        s = _escape(o.lexical)
        if o.lang:
            return f"{s}@{o.lang}"
        if o.datatype:
            return f"{s}^^{_iri(o.datatype)}"
        return s
    if is_type:
        ns = "bot" if o == "Space" else "beo"
        if _PN_LOCAL.match(o):
            return f"{ns}:{o}"
        return _iri(PREFIXES[ns] + o)
    return _escape(o)


def _predicate_term(p: str) -> str:
    if p == "type":
        return "a"
    if p.startswith("<"):
        return _iri(p[1:-1])
    iri = _PREDICATE_IRI[p]
    for pfx, ns in PREFIXES.items():
        if iri.startswith(ns):
            return f"{pfx}:{iri[len(ns):]}"
    return _iri(iri)


def to_turtle(graph: Graph) -> str:
    """Serialize deterministically: fixed prefix block, subjects in id order."""
    lines = [f"@prefix {p}: <{ns}> ." for p, ns in PREFIXES.items()]
    if graph.source_lines is not None:
        lines.append(f"# source-lines: {int(graph.source_lines)}")
    if graph.storey_elevations:
        lines.append("# storey-elevations: " + " ".join(repr(z) for z in graph.storey_elevations))
    by_subject: dict = {}
    for t in graph:
        by_subject.setdefault(t.subject, []).append(t)
    for subject, triples in by_subject.items():
        lines.append("")
        head = _term(subject)
        preds: dict[str, list] = {}
        for t in triples:
            preds.setdefault(t.predicate, []).append(t.object)
        order = sorted(preds, key=lambda p: (p != "type", p))
        chunks = []
        for p in order:
            objs = ", ".join(_term(o, is_type=(p == "type")) for o in preds[p])
            chunks.append(f"{_predicate_term(p)} {objs}")
        lines.append(f"{head} " + " ;\n    ".join(chunks) + " .")
    return "\n".join(lines) + "\n"


_TTL_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<iri><[^<>"{}|^`\\\x00-\x20]*(?:\\u[0-9A-Fa-f]{4}[^<>"{}|^`\\\x00-\x20]*)*>)
  | (?P<long>\"\"\"(?:[^"\\]|\\.|"(?!""))*\"\"\"|'''(?:[^'\\]|\\.|'(?!''))*''')
  | (?P<string>"(?:[^"\\\n\r]|\\.)*"|'(?:[^'\\\n\r]|\\.)*')
  | (?P<lang>@[A-Za-z]+(?:-[A-Za-z0-9]+)*)
  | (?P<dt>\^\^)
  | (?P<number>[+-]?(?:\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+|\d+))
  | (?P<bnode>_:[A-Za-z0-9_][A-Za-z0-9_\-.]*)
  | (?P<pname>(?:[A-Za-z][\w\-.]*)?:(?:[\w\-]|\.(?=[\w\-]))*)
  | (?P<word>[A-Za-z@][\w]*)
  | (?P<punct>[.;,\[\]()])
    """,
    re.VERBOSE,
)

_ESCAPES = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}


def _unescape(body: str, line: int) -> str:
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch != "\\":
            out.append(ch)
            i += 1
            continue
        nxt = body[i + 1] if i + 1 < len(body) else ""
        if nxt in _ESCAPES:
            out.append(_ESCAPES[nxt])
            i += 2
        elif nxt in ("u", "U"):
            n = 4 if nxt == "u" else 8
            digits = body[i + 2 : i + 2 + n]
            if len(digits) != n or not all(c in "0123456789abcdefABCDEF" for c in digits):
                raise TurtleError("bad unicode escape", line)
            out.append(chr(int(digits, 16)))
            i += 2 + n
        else:
            raise TurtleError(f"bad escape \\{nxt}", line)
    return "".join(out)


def _tokenize_turtle(text: str) -> list[tuple[str, str, int]]:
    toks = []
    pos, line = 0, 1
    while pos < len(text):
        m = _TTL_TOKEN.match(text, pos)
        if not m:
            raise TurtleError(f"unexpected character {text[pos]!r}", line)
        kind = m.lastgroup
        if kind != "ws":
            toks.append((kind, m.group(), line))
        line += m.group().count("\n")
        pos = m.end()
    toks.append(("end", "", line))
    return toks


class _TurtleParser:
    def __init__(self, text: str):
        self.toks = _tokenize_turtle(text)
        self.i = 0
        self.prefixes: dict[str, str] = {}
        self.base = ""
        self.graph = Graph()
        m = re.search(r"^# source-lines: (\d+)\s*$", text, re.MULTILINE)
        if m:
            self.graph.source_lines = int(m.group(1))
        m = re.search(r"^# storey-elevations:([ \d.eE+\-]*)$", text, re.MULTILINE)
        if m:
            self.graph.storey_elevations = tuple(float(z) for z in m.group(1).split())

    def peek(self):
        return self.toks[self.i]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, kind: str, value: str | None = None):
        t = self.next()
        if t[0] != kind or (value is not None and t[1] != value):
            want = value or kind
            raise TurtleError(f"expected {want!r}, got {t[1] or 'end of input'!r}", t[2])
        return t

    def resolve_iri(self, tok: str, line: int) -> str:
        body = _unescape(tok[1:-1], line)
        if self.base and not re.match(r"[A-Za-z][A-Za-z0-9+.\-]*:", body):
            body = self.base + body
        return body

    def resolve_pname(self, tok: str, line: int) -> str:
        pfx, local = tok.split(":", 1)
        if pfx not in self.prefixes:
            raise TurtleError(f"undeclared prefix {pfx!r}", line)
        return self.prefixes[pfx] + local

    def iri_of(self, tok) -> str:
        kind, val, line = tok
        if kind == "iri":
            return self.resolve_iri(val, line)
        if kind == "pname":
            return self.resolve_pname(val, line)
        raise TurtleError(f"expected an IRI, got {val or 'end of input'!r}", line)

    def parse(self) -> Graph:
        while self.peek()[0] != "end":
            kind, val, line = self.peek()
            if kind == "lang" and val in ("@prefix", "@base"):
                self.next()
                self.directive(val[1:], line, dotted=True)
            elif kind == "word" and val.upper() in ("PREFIX", "BASE"):
                self.next()
                self.directive(val.lower(), line, dotted=False)
            else:
                self.statement()
        return self.graph

    def directive(self, which: str, line: int, dotted: bool) -> None:
        if which == "prefix":
            kind, val, ln = self.next()
            if kind != "pname" or not val.endswith(":"):
                raise TurtleError("expected a prefix name", ln)
            iri_tok = self.expect("iri")
            self.prefixes[val[:-1]] = self.resolve_iri(iri_tok[1], iri_tok[2])
        else:
            iri_tok = self.expect("iri")
            self.base = self.resolve_iri(iri_tok[1], iri_tok[2])
        if dotted:
            self.expect("punct", ".")

    def subject(self):
        tok = self.next()
        kind, val, line = tok
        if kind == "bnode":
            return IRI(val)
        if kind in ("iri", "pname"):
            return self.as_node(self.iri_of(tok), line)
        raise TurtleError(f"unsupported subject {val or 'end of input'!r}", line)

    def as_node(self, iri: str, line: int):
        if iri.startswith(INST):
            try:
                return Node(iri[len(INST):])
            except GraphError as exc:
                raise TurtleError(str(exc), line) from None
        return IRI(iri)

    def statement(self) -> None:
        subj = self.subject()
        while True:
            kind, val, line = self.next()
            if kind == "word" and val == "a":
                pred = "type"
            elif kind in ("iri", "pname"):
                pred = normalize_predicate("<" + self.iri_of((kind, val, line)) + ">")
            else:
                raise TurtleError(f"expected a predicate, got {val or 'end of input'!r}", line)
            while True:
                obj = self.object(pred)
                try:
                    self.graph.add(subj, pred, obj)
                except GraphError as exc:
                    raise TurtleError(str(exc), line) from None
                if self.peek()[1] == ",":
                    self.next()
                    continue
                break
            kind, val, line = self.next()
            if val == ";":
                # allow trailing ';' before '.'
                while self.peek()[1] == ";":
                    self.next()
                if self.peek()[1] == ".":
                    self.next()
                    return
                continue
            if val == ".":
                return
            raise TurtleError(f"expected ';' or '.', got {val or 'end of input'!r}", line)

    def object(self, pred: str):
        tok = self.next()
        kind, val, line = tok
        if kind in ("iri", "pname"):
            iri = self.iri_of(tok)
            if pred == "type":
                for ns in (BOT, BEO):
                    if iri.startswith(ns) and _PN_LOCAL.match(iri[len(ns):]):
                        local = iri[len(ns):]
                        if (ns == BOT) == (local == "Space"):
                            return local
            return self.as_node(iri, line)
        if kind == "bnode":
            return IRI(val)
        if kind == "word" and val in ("true", "false"):
            return val == "true"
        if kind in ("string", "long"):
            q = 3 if kind == "long" else 1
            lexical = _unescape(val[q:-q], line)
            nk, nv, nl = self.peek()
            if nk == "lang":
                self.next()
                return Literal(lexical, None, nv[1:])
            if nk == "dt":
                self.next()
                dt = self.iri_of(self.next())
                if dt == XSD + "boolean" and lexical in ("true", "false"):
                    return lexical == "true"
                return Literal(lexical, dt)
            return lexical
        if kind == "number":
            if re.fullmatch(r"[+-]?\d+", val):
                dt = "integer"
            elif "e" in val.lower():
                dt = "double"
            else:
                dt = "decimal"
            return Literal(val, XSD + dt)
        raise TurtleError(f"unsupported object {val or 'end of input'!r}", line)


def from_turtle(text: str) -> Graph:
    """Parse Turtle produced by :func:`to_turtle` or any compatible subset.

    Blank-node property lists and collections are not supported.
    """
    return _TurtleParser(text).parse()


def read_graph(path) -> Graph:
    with open(path, encoding="utf-8") as fh:
        return from_turtle(fh.read())


def write_graph(graph: Graph, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(to_turtle(graph))


__all__ = [
    "ALL",
    "DEFAULT_STATIC_TYPES",
    "ElementFilter",
    "FilterSyntaxError",
    "Graph",
    "GraphError",
    "IRI",
    "Literal",
    "Node",
    "Selection",
    "Triple",
    "TurtleError",
    "build_graph",
    "decode_mesh",
    "encode_mesh",
    "from_turtle",
    "normalize_predicate",
    "normalize_type_name",
    "parse_filter",
    "query",
    "read_graph",
    "select_elements",
    "to_turtle",
    "write_graph",
]
