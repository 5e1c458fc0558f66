"""Typed view over the subset of IFC needed to build a graph world model.

Attribute positions follow the IFC2X3/IFC4 EXPRESS definitions; both schemas
agree on every position read here. All lengths are converted to meters.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .step_parser import Enum, Ref, StepInstance, StepModel, Typed

logger = logging.getLogger(__name__)


# Concrete IfcElement subtypes across IFC2X3 and IFC4 that decode without a
# warning. Anything else that looks like a placed product is kept too, but
# flagged as ``unknown_type``.
ELEMENT_CLASS_NAMES = """
    Wall WallStandardCase WallElementedCase CurtainWall Column ColumnStandardCase
    Beam BeamStandardCase Slab SlabStandardCase SlabElementedCase Door DoorStandardCase
    Window WindowStandardCase Covering Roof Stair StairFlight Ramp RampFlight Railing
    Member MemberStandardCase Plate PlateStandardCase Footing Pile Chimney ShadingDevice
    BuildingElementProxy BuildingElementPart FurnishingElement Furniture
    SystemFurnitureElement OpeningElement OpeningStandardCase FlowTerminal FlowSegment
    FlowFitting FlowController FlowMovingDevice FlowStorageDevice FlowTreatmentDevice
    EnergyConversionDevice DistributionElement DistributionFlowElement
    DistributionControlElement AirTerminal LightFixture SanitaryTerminal ElectricAppliance
    FireSuppressionTerminal Lamp Outlet SpaceHeater StackTerminal WasteTerminal
    AudioVisualAppliance CommunicationsAppliance MedicalDevice PipeSegment DuctSegment
    CableSegment CableCarrierSegment VirtualElement ElementAssembly TransportElement
    DiscreteAccessory MechanicalFastener Fastener ReinforcingBar ReinforcingMesh Tendon
    GeographicElement CivilElement Sensor Actuator Alarm Controller UnitaryEquipment
    Valve Pump Fan Tank Boiler Chiller
""".split()
ELEMENT_TYPES = frozenset("IFC" + name.upper() for name in ELEMENT_CLASS_NAMES)
_CLASS_NAMES = {"IFC" + name.upper(): name for name in ELEMENT_CLASS_NAMES + ["Space"]}


def class_name(keyword: str) -> str:
    """CamelCase class name without the ``Ifc`` prefix, e.g. IFCWALL -> Wall."""
    keyword = keyword.upper()
    known = _CLASS_NAMES.get(keyword)
    if known:
        return known
    stem = keyword[3:] if keyword.startswith("IFC") and len(keyword) > 3 else keyword
    return stem.capitalize()


# Spatial structure and other placed products that are never elements.
NON_ELEMENT_PRODUCTS = frozenset(
    """
    IFCPROJECT IFCSITE IFCBUILDING IFCBUILDINGSTOREY IFCSPACE IFCZONE IFCGRID
    IFCANNOTATION IFCPROXY IFCSTRUCTURALCURVEMEMBER IFCSTRUCTURALSURFACEMEMBER
    IFCSTRUCTURALPOINTCONNECTION IFCSTRUCTURALCURVECONNECTION IFCFACILITY
    IFCFACILITYPART IFCBRIDGE IFCROAD IFCRAILWAY IFCEXTERNALSPATIALELEMENT
    IFCSPATIALZONE IFCALIGNMENT IFCPORT IFCMARINEFACILITY
    """.split()
)

SPACE_BOUNDARY_TYPES = ("IFCRELSPACEBOUNDARY", "IFCRELSPACEBOUNDARY1STLEVEL", "IFCRELSPACEBOUNDARY2NDLEVEL")
AGGREGATION_TYPES = ("IFCRELAGGREGATES", "IFCRELNESTS", "IFCRELDECOMPOSES")

_SI_PREFIX = {
    None: 1.0, "EXA": 1e18, "PETA": 1e15, "TERA": 1e12, "GIGA": 1e9, "MEGA": 1e6,
    "KILO": 1e3, "HECTO": 1e2, "DECA": 1e1, "DECI": 1e-1, "CENTI": 1e-2,
    "MILLI": 1e-3, "MICRO": 1e-6, "NANO": 1e-9, "PICO": 1e-12, "FEMTO": 1e-15, "ATTO": 1e-18,
}


class IfcDecodeError(ValueError):
    pass


@dataclass(frozen=True)
class Placement:
    """One level of an object placement: origin plus local z (axis) and x (ref_direction)."""

    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    ref_direction: tuple[float, float, float] = (1.0, 0.0, 0.0)


PlacementChain = tuple  # tuple[Placement, ...], root (outermost) first


@dataclass(frozen=True)
class ExtrudedAreaSolid:
    """A planar profile swept along ``direction`` by ``depth`` meters.

    ``profile`` is an (n, 2) array in the xy-plane of ``position``;
    ``direction`` is a unit vector in the same frame.
    """

    profile: np.ndarray
    direction: np.ndarray
    depth: float
    position: Placement = Placement()


@dataclass(frozen=True)
class FacetedMesh:
    """Polygonal boundary representation; faces index into ``vertices``."""

    vertices: np.ndarray
    faces: tuple[tuple[int, ...], ...]
    position: Placement = Placement()


GeomRep = Union[ExtrudedAreaSolid, FacetedMesh]


@dataclass
class IfcSpaceRec:
    id: int
    name: str | None = None
    bounded_by: list[int] = field(default_factory=list)
    contains: list[int] = field(default_factory=list)
    global_id: str | None = None


@dataclass
class IfcElementRec:
    id: int
    ifc_type: str
    name: str | None = None
    material: str | None = None
    geometry: list = field(default_factory=list)
    placement: PlacementChain = ()
    sub_elements: list[int] = field(default_factory=list)
    global_id: str | None = None
    geometry_unsupported: bool = False
    unknown_type: bool = False


@dataclass
class IfcModel:
    spaces: list[IfcSpaceRec] = field(default_factory=list)
    elements: list[IfcElementRec] = field(default_factory=list)
    storey_elevations: list[float] = field(default_factory=list)
    length_unit: float = 1.0
    warnings: list[str] = field(default_factory=list)
    line_count: int = 0

    def element(self, element_id: int) -> IfcElementRec:
        for el in self.elements:
            if el.id == element_id:
                return el
        raise KeyError(element_id)


def _unwrap(value):
    while isinstance(value, Typed):
        value = value.value
    return value


def _text(value) -> str | None:
    value = _unwrap(value)
    return value if isinstance(value, str) else None


def _number(value) -> float | None:
    value = _unwrap(value)
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    return None


class _Decoder:
    def __init__(self, step: StepModel):
        self.step = step
        self.warnings: list[str] = []
        self.scale = 1.0
        self._placements: dict[int, PlacementChain] = {}

    def warn(self, message: str) -> None:
        self.warnings.append(message)
        logger.warning(message)

    def get(self, value, *types: str) -> StepInstance | None:
        if not isinstance(value, Ref):
            return None
        inst = self.step.instances.get(value.id)
        if inst is None:
            return None
        if types and inst.type_name not in types:
            return None
        return inst

    # -- units -----------------------------------------------------------

    def length_unit(self) -> float:
        for ua in self.step.by_type("IFCUNITASSIGNMENT"):
            for ref in ua.get(0) or ():
                unit = self.get(ref)
                if unit is None:
                    continue
                if unit.type_name == "IFCSIUNIT" and unit.get(1) == Enum("LENGTHUNIT"):
                    prefix = unit.get(2)
                    tag = prefix.tag if isinstance(prefix, Enum) else None
                    if tag not in _SI_PREFIX:
                        self.warn(f"#{unit.id}: unknown SI prefix {tag!r}, assuming none")
                        tag = None
                    return _SI_PREFIX[tag]
                if unit.type_name == "IFCCONVERSIONBASEDUNIT" and unit.get(1) == Enum("LENGTHUNIT"):
                    measure = self.get(unit.get(3), "IFCMEASUREWITHUNIT")
                    factor = _number(measure.get(0)) if measure else None
                    base = self.get(measure.get(1)) if measure else None
                    base_scale = 1.0
                    if base is not None and base.type_name == "IFCSIUNIT":
                        p = base.get(2)
                        base_scale = _SI_PREFIX.get(p.tag if isinstance(p, Enum) else None, 1.0)
                    if factor is None:
                        self.warn(f"#{unit.id}: conversion unit without factor, assuming meters")
                        return 1.0
                    return factor * base_scale
        return 1.0

    # -- geometry primitives ---------------------------------------------

    def point(self, value, dims: int = 3) -> tuple[float, ...]:
        inst = self.get(value, "IFCCARTESIANPOINT")
        if inst is None:
            raise IfcDecodeError(f"expected IFCCARTESIANPOINT, got {value!r}")
        coords = [float(c) for c in (inst.get(0) or ())]
        coords = (coords + [0.0, 0.0, 0.0])[:dims]
        return tuple(c * self.scale for c in coords)

    def direction(self, value, default: tuple[float, ...]) -> tuple[float, ...]:
        inst = self.get(value, "IFCDIRECTION")
        if inst is None:
            return default
        ratios = [float(c) for c in (inst.get(0) or ())]
        ratios = (ratios + [0.0, 0.0, 0.0])[: len(default)]
        norm = float(np.linalg.norm(ratios))
        if norm == 0.0:
            raise IfcDecodeError(f"#{inst.id}: zero-length direction")
        return tuple(r / norm for r in ratios)

    def axis2placement3d(self, value) -> Placement:
        inst = self.get(value, "IFCAXIS2PLACEMENT3D")
        if inst is None:
            if value is None:
                return Placement()
            raise IfcDecodeError(f"unsupported placement {value!r}")
        return Placement(
            origin=self.point(inst.get(0)),
            axis=self.direction(inst.get(1), (0.0, 0.0, 1.0)),
            ref_direction=self.direction(inst.get(2), (1.0, 0.0, 0.0)),
        )

    def axis2placement2d(self, value) -> np.ndarray:
        """Return a 3x3 homogeneous 2D transform."""
        m = np.eye(3)
        inst = self.get(value, "IFCAXIS2PLACEMENT2D")
        if inst is None:
            return m
        origin = self.point(inst.get(0), 2)
        x = self.direction(inst.get(1), (1.0, 0.0))
        m[:2, 0] = x
        m[:2, 1] = (-x[1], x[0])
        m[:2, 2] = origin
        return m

    def object_placement(self, value) -> PlacementChain:
        inst = self.get(value, "IFCLOCALPLACEMENT")
        if inst is None:
            if value is not None:
                self.warn(f"unsupported object placement {value!r}; using global frame")
            return ()
        cached = self._placements.get(inst.id)
        if cached is not None:
            return cached
        chain = []
        seen = set()
        cur = inst
        while cur is not None:
            if cur.id in seen:
                raise IfcDecodeError(f"#{cur.id}: cyclic placement chain")
            seen.add(cur.id)
            chain.append(self.axis2placement3d(cur.get(1)))
            cur = self.get(cur.get(0), "IFCLOCALPLACEMENT")
        result = tuple(reversed(chain))
        self._placements[inst.id] = result
        return result

    # -- profiles and solids ---------------------------------------------

    def profile(self, value) -> np.ndarray:
        inst = self.get(value)
        if inst is None:
            raise IfcDecodeError(f"missing profile {value!r}")
        if inst.type_name == "IFCRECTANGLEPROFILEDEF":
            xdim = _number(inst.get(3))
            ydim = _number(inst.get(4))
            if xdim is None or ydim is None:
                raise IfcDecodeError(f"#{inst.id}: rectangle profile without dimensions")
            hx, hy = xdim * self.scale / 2, ydim * self.scale / 2
            pts = np.array([[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]])
            m = self.axis2placement2d(inst.get(2))
            return pts @ m[:2, :2].T + m[:2, 2]
        if inst.type_name == "IFCARBITRARYCLOSEDPROFILEDEF":
            curve = self.get(inst.get(2), "IFCPOLYLINE")
            if curve is None:
                raise _Unsupported(f"#{inst.id}: outer curve is not an IFCPOLYLINE")
            pts = np.array([self.point(p, 2) for p in curve.get(0) or ()], dtype=float)
            if len(pts) > 1 and np.allclose(pts[0], pts[-1]):
                pts = pts[:-1]
            return pts
        raise _Unsupported(f"#{inst.id}: profile type {inst.type_name} not supported")

    def item(self, inst: StepInstance) -> GeomRep:
        t = inst.type_name
        if t == "IFCEXTRUDEDAREASOLID":
            depth = _number(inst.get(3))
            if depth is None:
                raise IfcDecodeError(f"#{inst.id}: extrusion without depth")
            return ExtrudedAreaSolid(
                profile=self.profile(inst.get(0)),
                direction=np.array(self.direction(inst.get(2), (0.0, 0.0, 1.0))),
                depth=depth * self.scale,
                position=self.axis2placement3d(inst.get(1)),
            )
        if t in ("IFCFACETEDBREP", "IFCFACETEDBREPWITHVOIDS"):
            shell = self.get(inst.get(0), "IFCCLOSEDSHELL")
            if shell is None:
                raise IfcDecodeError(f"#{inst.id}: brep without closed shell")
            return self.shell(shell)
        if t == "IFCTRIANGULATEDFACESET":
            coords = self.get(inst.get(0), "IFCCARTESIANPOINTLIST3D")
            if coords is None:
                raise IfcDecodeError(f"#{inst.id}: face set without coordinates")
            verts = np.array(coords.get(0), dtype=float).reshape(-1, 3) * self.scale
            index = inst.get(3) or ()
            faces = tuple(tuple(int(i) - 1 for i in tri) for tri in index)
            pn = inst.get(4)
            if isinstance(pn, tuple) and pn:
                # PnIndex remaps CoordIndex into the point list
                remap = [int(i) - 1 for i in pn]
                faces = tuple(tuple(remap[i] for i in f) for f in faces)
            return FacetedMesh(verts, faces)
        raise _Unsupported(f"#{inst.id}: geometry item {t} not supported")

    def shell(self, shell: StepInstance) -> FacetedMesh:
        index: dict[tuple[float, ...], int] = {}
        verts: list[tuple[float, ...]] = []
        faces = []
        for face_ref in shell.get(0) or ():
            face = self.get(face_ref, "IFCFACE")
            if face is None:
                raise IfcDecodeError(f"#{shell.id}: shell face {face_ref!r} is not an IFCFACE")
            bounds = [self.get(b, "IFCFACEOUTERBOUND", "IFCFACEBOUND") for b in face.get(0) or ()]
            if len(bounds) != 1 or bounds[0] is None:
                raise _Unsupported(f"#{face.id}: faces with inner bounds are not supported")
            bound = bounds[0]
            loop = self.get(bound.get(0), "IFCPOLYLOOP")
            if loop is None:
                raise _Unsupported(f"#{bound.id}: face bound is not an IFCPOLYLOOP")
            idx = []
            for p in loop.get(0) or ():
                xyz = self.point(p)
                if xyz not in index:
                    index[xyz] = len(verts)
                    verts.append(xyz)
                idx.append(index[xyz])
            if bound.get(1) == Enum("F"):
                idx.reverse()
            faces.append(tuple(idx))
        return FacetedMesh(np.array(verts, dtype=float).reshape(-1, 3), tuple(faces))

    def representation(self, value, owner: StepInstance) -> tuple[list[GeomRep], bool]:
        """Decode the body representation of a product.

        Returns (items, unsupported). The first representation labelled
        'Body' wins; otherwise the first one with any decodable item.
        """
        pds = self.get(value, "IFCPRODUCTDEFINITIONSHAPE")
        if pds is None:
            return [], False
        reps = [self.get(r, "IFCSHAPEREPRESENTATION") for r in pds.get(2) or ()]
        reps = [r for r in reps if r is not None]
        reps.sort(key=lambda r: 0 if _text(r.get(1)) == "Body" else 1)
        if len([r for r in reps if _text(r.get(1)) == "Body"]) > 1:
            self.warn(f"#{owner.id}: several Body representations, using the first")
        unsupported = False
        for rep in reps:
            ident = _text(rep.get(1))
            if ident not in (None, "Body"):
                continue
            items = []
            for ref in rep.get(3) or ():
                inst = self.get(ref)
                if inst is None:
                    continue
                try:
                    items.append(self.item(inst))
                except _Unsupported as exc:
                    self.warn(f"#{owner.id} {owner.type_name}: {exc}")
                    unsupported = True
                    items = []
                    break
            if items:
                return items, False
        return [], unsupported


class _Unsupported(IfcDecodeError):
    pass


def _material_name(dec: _Decoder, value) -> str | None:
    inst = dec.get(value)
    if inst is None:
        return None
    t = inst.type_name
    if t == "IFCMATERIAL":
        return _text(inst.get(0))
    if t == "IFCMATERIALLAYERSETUSAGE":
        return _material_name(dec, inst.get(0))
    if t == "IFCMATERIALLAYERSET":
        layers = inst.get(0) or ()
        return _material_name(dec, layers[0]) if layers else _text(inst.get(1))
    if t == "IFCMATERIALLAYER":
        return _material_name(dec, inst.get(0))
    if t == "IFCMATERIALLIST":
        mats = inst.get(0) or ()
        return _material_name(dec, mats[0]) if mats else None
    if t == "IFCMATERIALCONSTITUENTSET":
        parts = inst.get(2) or ()
        return _material_name(dec, parts[0]) if parts else _text(inst.get(0))
    if t == "IFCMATERIALCONSTITUENT":
        return _material_name(dec, inst.get(2))
    if t == "IFCMATERIALPROFILESETUSAGE":
        return _material_name(dec, inst.get(0))
    if t == "IFCMATERIALPROFILESET":
        profiles = inst.get(2) or ()
        return _material_name(dec, profiles[0]) if profiles else _text(inst.get(0))
    if t == "IFCMATERIALPROFILE":
        return _material_name(dec, inst.get(2))
    dec.warn(f"#{inst.id}: material definition {t} not supported")
    return None


def _is_element(inst: StepInstance, step: StepModel) -> tuple[bool, bool]:
    """Return (is_element, is_unknown_type)."""
    t = inst.type_name
    if t in ELEMENT_TYPES:
        return True, False
    if t in NON_ELEMENT_PRODUCTS or not t.startswith("IFC") or t.startswith("IFCREL"):
        return False, False
    # element-like: GlobalId string, object placement and product shape slots
    attrs = inst.attributes
    if len(attrs) < 8 or not isinstance(attrs[0], str):
        return False, False
    placement = step.instances.get(attrs[5].id) if isinstance(attrs[5], Ref) else None
    shape = step.instances.get(attrs[6].id) if isinstance(attrs[6], Ref) else None
    if placement is None or placement.type_name != "IFCLOCALPLACEMENT":
        return False, False
    if shape is not None and shape.type_name != "IFCPRODUCTDEFINITIONSHAPE":
        return False, False
    return True, True


def decode_ifc(step: StepModel) -> IfcModel:
    """Build the typed :class:`IfcModel` from a parsed STEP file.

    Spaces and elements are returned ordered by instance id. Relationships that
    point at missing or unexpected instances are skipped with a warning.
    """
    dec = _Decoder(step)
    dec.scale = dec.length_unit()
    model = IfcModel(length_unit=dec.scale, line_count=step.line_count)

    spaces: dict[int, IfcSpaceRec] = {}
    elements: dict[int, IfcElementRec] = {}
    for inst_id in sorted(step.instances):
        inst = step.instances[inst_id]
        if inst.type_name == "IFCSPACE":
            spaces[inst_id] = IfcSpaceRec(inst_id, _text(inst.get(2)), global_id=_text(inst.get(0)))
            continue
        if inst.type_name == "IFCBUILDINGSTOREY":
            elev = _number(inst.get(9))
            if elev is not None:
                model.storey_elevations.append(elev * dec.scale)
            continue
        is_el, unknown = _is_element(inst, step)
        if not is_el:
            continue
        if unknown:
            dec.warn(f"#{inst_id}: unknown element-like type {inst.type_name}")
        rec = IfcElementRec(
            inst_id,
            inst.type_name,
            name=_text(inst.get(2)),
            global_id=_text(inst.get(0)),
            unknown_type=unknown,
        )
        try:
            rec.placement = dec.object_placement(inst.get(5))
            rec.geometry, rec.geometry_unsupported = dec.representation(inst.get(6), inst)
        except IfcDecodeError as exc:
            dec.warn(f"#{inst_id} {inst.type_name}: {exc}")
            rec.geometry, rec.geometry_unsupported = [], True
        elements[inst_id] = rec

    def rel_targets(rel: StepInstance, index: int) -> list[Ref]:
        value = rel.get(index)
        if isinstance(value, Ref):
            return [value]
        if isinstance(value, tuple):
            return [v for v in value if isinstance(v, Ref)]
        return []

    def check(rel: StepInstance, ref, pool: dict, what: str) -> int | None:
        if not isinstance(ref, Ref):
            dec.warn(f"#{rel.id} {rel.type_name}: missing {what}, relationship skipped")
            return None
        if ref.id not in step.instances:
            dec.warn(f"#{rel.id} {rel.type_name}: {what} #{ref.id} does not exist, relationship skipped")
            return None
        if ref.id not in pool:
            return None
        return ref.id

    for rel_id in sorted(step.instances):
        rel = step.instances[rel_id]
        t = rel.type_name
        if t in SPACE_BOUNDARY_TYPES:
            space = check(rel, rel.get(4), spaces, "RelatingSpace")
            el = check(rel, rel.get(5), elements, "RelatedBuildingElement")
            if space is not None and el is not None and el not in spaces[space].bounded_by:
                spaces[space].bounded_by.append(el)
        elif t == "IFCRELCONTAINEDINSPATIALSTRUCTURE":
            space = check(rel, rel.get(5), spaces, "RelatingStructure")
            if space is None:
                continue
            for ref in rel_targets(rel, 4):
                el = check(rel, ref, elements, "RelatedElement")
                if el is not None and el not in spaces[space].contains:
                    spaces[space].contains.append(el)
        elif t in AGGREGATION_TYPES:
            parent = check(rel, rel.get(4), elements, "RelatingObject")
            if parent is None:
                continue
            for ref in rel_targets(rel, 5):
                child = check(rel, ref, elements, "RelatedObject")
                if child is not None and child != parent and child not in elements[parent].sub_elements:
                    elements[parent].sub_elements.append(child)
        elif t == "IFCRELASSOCIATESMATERIAL":
            targets = [
                check(rel, ref, elements, "RelatedObject") for ref in rel_targets(rel, 4)
            ]
            targets = [x for x in targets if x is not None]
            if not targets:
                continue
            if not isinstance(rel.get(5), Ref) or rel.get(5).id not in step.instances:
                dec.warn(f"#{rel.id}: RelatingMaterial missing, relationship skipped")
                continue
            name = _material_name(dec, rel.get(5))
            for el in targets:
                if elements[el].material is not None and elements[el].material != name:
                    dec.warn(f"#{el}: several material associations, keeping {elements[el].material!r}")
                    continue
                elements[el].material = name

    _break_cycles(elements, dec)
    model.spaces = [spaces[k] for k in sorted(spaces)]
    model.elements = [elements[k] for k in sorted(elements)]
    model.warnings = list(step.warnings) + dec.warnings
    return model


def _break_cycles(elements: dict[int, IfcElementRec], dec: _Decoder) -> None:
    """Drop aggregation links that would make an element its own sub-element."""
    state: dict[int, int] = {}
    for root in sorted(elements):
        if state.get(root, 0):
            continue
        # explicit stack: deep aggregation chains must not hit the recursion limit
        state[root] = 1
        stack = [(root, iter(elements[root].sub_elements), [])]
        while stack:
            node, children, keep = stack[-1]
            for child in children:
                s = state.get(child, 0)
                if s == 1:
                    dec.warn(f"#{node}: decomposition cycle through #{child}, link dropped")
                    continue
                keep.append(child)
                if s == 0:
                    state[child] = 1
                    stack.append((child, iter(elements[child].sub_elements), []))
                    break
            else:
                elements[node].sub_elements = keep
                state[node] = 2
                stack.pop()


__all__ = [
    "ELEMENT_TYPES",
    "class_name",
    "ExtrudedAreaSolid",
    "FacetedMesh",
    "GeomRep",
    "IfcDecodeError",
    "IfcElementRec",
    "IfcModel",
    "IfcSpaceRec",
    "Placement",
    "PlacementChain",
    "decode_ifc",
]
