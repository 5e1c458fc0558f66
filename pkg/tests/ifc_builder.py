"""Tiny IFC writer used to generate test fixtures and synthetic models."""

from __future__ import annotations

from bim2map.step_parser import Enum, Ref, format_value


class IfcBuilder:
    def __init__(self, schema: str = "IFC4", length_prefix: str | None = None, storey_elevation: float = 0.0):
        self.schema = schema
        self.lines: list[str] = []
        self.next_id = 1
        self._gid = 0
        self.unit = self.add("IFCSIUNIT", "*", Enum("LENGTHUNIT"), Enum(length_prefix) if length_prefix else None, Enum("METRE"))
        units = self.add("IFCUNITASSIGNMENT", (self.unit,))
        wcs = self.axis3d((0.0, 0.0, 0.0))
        self.context = self.add("IFCGEOMETRICREPRESENTATIONCONTEXT", None, "Model", 3, 1.0e-5, wcs, None)
        self.project = self.add("IFCPROJECT", self.gid(), None, "Project", None, None, None, None, (self.context,), units)
        self.root_placement = self.add("IFCLOCALPLACEMENT", None, self.axis3d((0.0, 0.0, 0.0)))
        self.storey = self.add(
            "IFCBUILDINGSTOREY", self.gid(), None, "Level 0", None, None, self.root_placement, None, None,
            Enum("ELEMENT"), float(storey_elevation),
        )
        self.add("IFCRELAGGREGATES", self.gid(), None, None, None, self.project, (self.storey,))

    # -- low level -------------------------------------------------------

    def gid(self) -> str:
        self._gid += 1
        return f"0{self._gid:021d}"

    def add(self, type_name: str, *attrs) -> Ref:
        ref = Ref(self.next_id)
        body = ",".join("*" if a == "*" else format_value(a) for a in attrs)
        self.lines.append(f"#{ref.id}={type_name}({body});")
        self.next_id += 1
        return ref

    def text(self) -> str:
        head = [
            "ISO-10303-21;",
            "HEADER;",
            "FILE_DESCRIPTION(('ViewDefinition [CoordinationView]'),'2;1');",
            "FILE_NAME('model.ifc','2024-01-01T00:00:00',(''),(''),'','','');",
            f"FILE_SCHEMA(('{self.schema}'));",
            "ENDSEC;",
            "DATA;",
        ]
        return "\n".join(head + self.lines + ["ENDSEC;", "END-ISO-10303-21;"]) + "\n"

    # -- geometry --------------------------------------------------------

    def point(self, *coords) -> Ref:
        return self.add("IFCCARTESIANPOINT", tuple(float(c) for c in coords))

    def direction(self, *ratios) -> Ref:
        return self.add("IFCDIRECTION", tuple(float(r) for r in ratios))

    def axis3d(self, origin, axis=None, ref=None) -> Ref:
        return self.add(
            "IFCAXIS2PLACEMENT3D",
            self.point(*origin),
            self.direction(*axis) if axis else None,
            self.direction(*ref) if ref else None,
        )

    def placement(self, origin=(0.0, 0.0, 0.0), axis=None, ref=None, relative_to=None) -> Ref:
        return self.add("IFCLOCALPLACEMENT", relative_to or self.root_placement, self.axis3d(origin, axis, ref))

    def rect_profile(self, xdim: float, ydim: float, center=(0.0, 0.0)) -> Ref:
        pos = self.add("IFCAXIS2PLACEMENT2D", self.point(*center), None)
        return self.add("IFCRECTANGLEPROFILEDEF", Enum("AREA"), None, pos, float(xdim), float(ydim))

    def poly_profile(self, points) -> Ref:
        pts = [self.point(*p) for p in points]
        curve = self.add("IFCPOLYLINE", tuple(pts + pts[:1]))
        return self.add("IFCARBITRARYCLOSEDPROFILEDEF", Enum("AREA"), None, curve)

    def extrusion(self, profile: Ref, depth: float, position=None, direction=(0.0, 0.0, 1.0)) -> Ref:
        pos = position or self.axis3d((0.0, 0.0, 0.0))
        return self.add("IFCEXTRUDEDAREASOLID", profile, pos, self.direction(*direction), float(depth))

    def brep_box(self, lo, hi) -> Ref:
        (x0, y0, z0), (x1, y1, z1) = lo, hi
        c = {
            (i, j, k): self.point((x0, x1)[i], (y0, y1)[j], (z0, z1)[k])
            for i in (0, 1) for j in (0, 1) for k in (0, 1)
        }
        quads = [
            [(0, 0, 0), (0, 1, 0), (1, 1, 0), (1, 0, 0)],
            [(0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)],
            [(0, 0, 0), (1, 0, 0), (1, 0, 1), (0, 0, 1)],
            [(1, 0, 0), (1, 1, 0), (1, 1, 1), (1, 0, 1)],
            [(1, 1, 0), (0, 1, 0), (0, 1, 1), (1, 1, 1)],
            [(0, 1, 0), (0, 0, 0), (0, 0, 1), (0, 1, 1)],
        ]
        faces = []
        for q in quads:
            loop = self.add("IFCPOLYLOOP", tuple(c[v] for v in q))
            bound = self.add("IFCFACEOUTERBOUND", loop, Enum("T"))
            faces.append(self.add("IFCFACE", (bound,)))
        shell = self.add("IFCCLOSEDSHELL", tuple(faces))
        return self.add("IFCFACETEDBREP", shell)

    def shape(self, *items, kind: str = "SweptSolid") -> Ref:
        rep = self.add("IFCSHAPEREPRESENTATION", self.context, "Body", kind, tuple(items))
        return self.add("IFCPRODUCTDEFINITIONSHAPE", None, None, (rep,))

    # -- products --------------------------------------------------------

    def element(self, type_name: str, name: str | None, shape: Ref | None, placement: Ref | None = None) -> Ref:
        return self.add(type_name, self.gid(), None, name, None, None, placement or self.placement(), shape, None)

    def box_element(self, name, lo, hi, type_name: str = "IFCWALL") -> Ref:
        """Axis-aligned box as a rectangle extrusion placed at its base center."""
        (x0, y0, z0), (x1, y1, z1) = lo, hi
        profile = self.rect_profile(x1 - x0, y1 - y0)
        solid = self.extrusion(profile, z1 - z0)
        place = self.placement(((x0 + x1) / 2, (y0 + y1) / 2, z0))
        return self.element(type_name, name, self.shape(solid), place)

    def space(self, name: str) -> Ref:
        return self.add(
            "IFCSPACE", self.gid(), None, name, None, None, self.placement(), None, None, Enum("ELEMENT"), None
        )

    # -- relationships ---------------------------------------------------

    def bounds(self, space: Ref, element: Ref) -> Ref:
        return self.add(
            "IFCRELSPACEBOUNDARY", self.gid(), None, None, None, space, element, None,
            Enum("PHYSICAL"), Enum("INTERNAL"),
        )

    def contains(self, structure: Ref, elements) -> Ref:
        return self.add("IFCRELCONTAINEDINSPATIALSTRUCTURE", self.gid(), None, None, None, tuple(elements), structure)

    def aggregates(self, parent: Ref, children) -> Ref:
        return self.add("IFCRELAGGREGATES", self.gid(), None, None, None, parent, tuple(children))

    def material(self, elements, name: str, encoding: str = "material") -> Ref:
        mat = self.add("IFCMATERIAL", name, None, None) if self.schema != "IFC2X3" else self.add("IFCMATERIAL", name)
        if encoding == "layers":
            layer = self.add("IFCMATERIALLAYER", mat, 0.1, None)
            lset = self.add("IFCMATERIALLAYERSET", (layer,), None)
            mat = self.add("IFCMATERIALLAYERSETUSAGE", lset, Enum("AXIS2"), Enum("POSITIVE"), 0.0)
        elif encoding == "constituents":
            part = self.add("IFCMATERIALCONSTITUENT", None, None, mat, None, None)
            mat = self.add("IFCMATERIALCONSTITUENTSET", None, None, (part,))
        elif encoding == "list":
            mat = self.add("IFCMATERIALLIST", (mat,))
        return self.add("IFCRELASSOCIATESMATERIAL", self.gid(), None, None, None, tuple(elements), mat)
