"""Reader for ISO 10303-21 ("STEP physical file") exchange files.

Only the DATA section is interpreted. Entity types are not validated against
any EXPRESS schema; every instance is kept generically so that downstream
decoders can pick the subset they understand.

Attribute values map onto Python as follows:

=================  ==========================
STEP               Python
=================  ==========================
integer            ``int``
real               ``float``
string             ``str`` (escapes decoded)
``.TAG.``          :class:`Enum`
``#12``            :class:`Ref`
``IFCLABEL('x')``  :class:`Typed`
``"0AF"``          :class:`Binary`
list               ``tuple``
``$``              ``None``
``*``              :data:`DERIVED`
=================  ==========================
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Union

logger = logging.getLogger(__name__)

KNOWN_SCHEMAS = ("IFC2X3", "IFC4", "IFC4X1", "IFC4X2", "IFC4X3", "IFC4X3_ADD2")


class StepError(ValueError):
    """Base class for every failure raised while reading a STEP file."""

    def __init__(self, message: str, line: int | None = None, instance_id: int | None = None):
        self.line = line
        self.instance_id = instance_id
        where = []
        if instance_id is not None:
            where.append(f"#{instance_id}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class StepLexicalError(StepError):
    pass


class StepSyntaxError(StepError):
    pass


class StepFormatError(StepError):
    pass


@dataclass(frozen=True, slots=True)
class Ref:
    id: int

    def __repr__(self) -> str:
        return f"#{self.id}"


@dataclass(frozen=True, slots=True)
class Enum:
    tag: str

    def __repr__(self) -> str:
        return f".{self.tag}."

    def as_bool(self) -> bool | None:
        return {"T": True, "F": False}.get(self.tag)


@dataclass(frozen=True, slots=True)
class Typed:
    type_name: str
    value: "StepValue"


@dataclass(frozen=True, slots=True)
class Binary:
    hex: str


class _Derived:
    __slots__ = ()

    def __repr__(self) -> str:
        return "*"

    def __reduce__(self):
        return "DERIVED"


DERIVED = _Derived()

StepValue = Union[int, float, str, Enum, Ref, Typed, Binary, tuple, None, _Derived]


@dataclass(frozen=True, slots=True)
class StepInstance:
    id: int
    type_name: str
    attributes: tuple

    def __getitem__(self, index: int) -> StepValue:
        return self.attributes[index]

    def get(self, index: int, default=None):
        if index < len(self.attributes):
            return self.attributes[index]
        return default


@dataclass
class StepModel:
    header: dict[str, tuple] = field(default_factory=dict)
    instances: dict[int, StepInstance] = field(default_factory=dict)
    header_text: str = ""
    dangling: dict[int, tuple[int, ...]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    line_count: int = 0

    @property
    def schema(self) -> str | None:
        schemas = self.header.get("FILE_SCHEMA")
        if not schemas:
            return None
        first = schemas[0]
        if isinstance(first, tuple) and first:
            return str(first[0])
        return None

    def __len__(self) -> int:
        return len(self.instances)

    def __getitem__(self, instance_id: int) -> StepInstance:
        return self.instances[instance_id]

    def by_type(self, *type_names: str) -> list[StepInstance]:
        wanted = {t.upper() for t in type_names}
        return [inst for inst in self.instances.values() if inst.type_name in wanted]

    def resolve(self, value: StepValue) -> StepInstance | None:
        if isinstance(value, Ref):
            return self.instances.get(value.id)
        return None


class Token(NamedTuple):
    kind: str
    value: object
    line: int


# Alternatives ordered by frequency in IFC files; REAL must precede INTEGER.
_PUNCT, _ID, _REAL, _STRING, _INTEGER, _ENUM, _KEYWORD, _BINARY, _MAGIC, _WS, _COMMENT = range(1, 12)
_MASTER = re.compile(
    r"""([(),$*;=])"""
    r"""|(#[0-9]+)"""
    r"""|([+-]?[0-9]+\.[0-9]*(?:[eE][+-]?[0-9]+)?)"""
    r"""|('[^']*(?:''[^']*)*')"""
    r"""|([+-]?[0-9]+)"""
    r"""|(\.[A-Za-z_][A-Za-z0-9_]*\.)"""
    r"""|(!?[A-Za-z_][A-Za-z0-9_]*)"""
    r"""|("[0-9A-Fa-f]*")"""
    r"""|((?:END-)?ISO-10303-21)"""
    r"""|([ \t\r\n]+)"""
    r"""|(/\*.*?\*/)""",
    re.DOTALL,
)
_MAGIC_RX = re.compile(r"(?:END-)?ISO-10303-21")


def _decode_string(raw: str) -> str:
    """Decode the body of a STEP string literal (quotes already stripped)."""
    text = raw.replace("''", "'")
    if "\\" not in text:
        return text
    out = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch != "\\":
            out.append(ch)
            i += 1
            continue
        if text.startswith("\\\\", i):
            out.append("\\")
            i += 2
        elif text.startswith("\\X2\\", i) or text.startswith("\\X4\\", i):
            width = 4 if text[i + 2] == "2" else 8
            end = text.find("\\X0\\", i + 4)
            if end < 0:
                raise StepLexicalError("unterminated \\X2\\/\\X4\\ string escape")
            body = text[i + 4 : end]
            if len(body) % width:
                raise StepLexicalError("bad \\X2\\/\\X4\\ escape length")
            try:
                out.extend(chr(int(body[k : k + width], 16)) for k in range(0, len(body), width))
            except ValueError as exc:
                raise StepLexicalError(f"bad hex in string escape: {body!r}") from exc
            i = end + 4
        elif text.startswith("\\X\\", i):
            hexpair = text[i + 3 : i + 5]
            try:
                out.append(chr(int(hexpair, 16)))
            except ValueError as exc:
                raise StepLexicalError(f"bad \\X\\ escape: {hexpair!r}") from exc
            i += 5
        elif text.startswith("\\S\\", i) and i + 3 < n:
            out.append(chr(ord(text[i + 3]) + 128))
            i += 4
        elif text.startswith("\\P", i) and i + 3 < n and text[i + 3] == "\\":
            # code page switch, affects only \S\ which we map onto latin-1
            i += 4
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _encode_string(value: str) -> str:
    out = ["'"]
    pending: list[str] = []

    def flush():
        if pending:
            wide = any(ord(c) > 0xFFFF for c in pending)
            width, tag = (8, "\\X4\\") if wide else (4, "\\X2\\")
            out.append(tag + "".join(f"{ord(c):0{width}X}" for c in pending) + "\\X0\\")
            pending.clear()

    for ch in value:
        code = ord(ch)
        if 0x20 <= code < 0x7F:
            flush()
            if ch == "'":
                out.append("''")
            elif ch == "\\":
                out.append("\\\\")
            else:
                out.append(ch)
        else:
            pending.append(ch)
    flush()
    out.append("'")
    return "".join(out)


def _line_at(text: str, pos: int) -> int:
    return text.count("\n", 0, pos) + 1


def _lex_failure(text: str, pos: int, instance_id: int | None = None) -> StepLexicalError:
    line = _line_at(text, pos)
    if text.startswith("/*", pos):
        return StepLexicalError("unterminated comment", line, instance_id)
    if text[pos] == "'":
        return StepLexicalError("unterminated string", line, instance_id)
    if text[pos] == '"':
        return StepLexicalError("unterminated binary literal", line, instance_id)
    return StepLexicalError(f"unexpected character {text[pos]!r}", line, instance_id)


def tokenize(text: str) -> Iterator[Token]:
    """Yield the tokens of ``text``; whitespace and comments are dropped.

    Punctuation tokens use the character itself as their kind.
    """
    if isinstance(text, (bytes, bytearray)):
        text = bytes(text).decode("latin-1")
    pos = 0
    line = 1
    n = len(text)
    while pos < n:
        m = _MAGIC_RX.match(text, pos)
        if m is not None:
            kind = _MAGIC
        else:
            m = _MASTER.match(text, pos)
            if m is None:
                raise _lex_failure(text, pos)
            kind = m.lastindex
        raw = m.group()
        if kind == _PUNCT:
            yield Token(raw, raw, line)
        elif kind == _ID:
            yield Token("ID", int(raw[1:]), line)
        elif kind == _STRING:
            yield Token("STRING", _decode_string(raw[1:-1]), line)
        elif kind == _REAL:
            yield Token("REAL", float(raw), line)
        elif kind == _INTEGER:
            yield Token("INTEGER", int(raw), line)
        elif kind == _ENUM:
            yield Token("ENUM", raw[1:-1].upper(), line)
        elif kind == _KEYWORD:
            yield Token("KEYWORD", raw.upper(), line)
        elif kind == _BINARY:
            yield Token("BINARY", raw[1:-1], line)
        elif kind == _MAGIC:
            yield Token("MAGIC", raw, line)
        line += raw.count("\n")
        pos = m.end()


# ---------------------------------------------------------------------------
# parsing

_INSTANCE_HEAD = re.compile(r"#([0-9]+)\s*=\s*")
_KEYWORD_OPEN = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\s*\(")
_WS_COMMENTS = re.compile(r"(?:\s+|/\*.*?\*/)*", re.DOTALL)


def _syntax(text: str, pos: int, message: str, instance_id: int | None) -> StepSyntaxError:
    return StepSyntaxError(message, _line_at(text, pos), instance_id)


def _read_aggregate(
    text: str, pos: int, instance_id: int | None = None, refs: list[int] | None = None
) -> tuple[tuple, int]:
    """Parse the values following an opening ``(`` up to its matching ``)``.

    Returns the values and the position just past the closing parenthesis.
    Referenced ids are appended to ``refs`` when given. This is the parser's
    hot loop: a single pass over ``finditer`` with an explicit stack.
    """
    items: list = []
    typed: str | None = None
    stack: list = []
    pending_type: str | None = None
    expect_value = True
    last = pos
    for m in _MASTER.finditer(text, pos):
        start = m.start()
        if start != last:
            raise _lex_failure(text, last, instance_id)
        last = m.end()
        kind = m.lastindex
        if kind == _PUNCT:
            c = m.group()
            if c == ",":
                if expect_value:
                    raise _syntax(text, start, "expected a value before ','", instance_id)
                expect_value = True
                continue
            if pending_type is not None and c != "(":
                raise _syntax(text, start, f"expected '(' after {pending_type}", instance_id)
            if c == ")":
                if expect_value and items:
                    raise _syntax(text, start, "expected a value before ')'", instance_id)
                value = tuple(items)
                if typed is not None:
                    if len(value) != 1:
                        raise _syntax(text, start, f"typed value {typed} must wrap one value", instance_id)
                    value = Typed(typed, value[0])
                if not stack:
                    return value, last
                items, typed = stack.pop()
                items.append(value)
                expect_value = False
                continue
            if not expect_value:
                raise _syntax(text, start, f"expected ',' or ')' but found {c!r}", instance_id)
            if c == "(":
                stack.append((items, typed))
                items, typed, pending_type = [], pending_type, None
                continue
            if c == "$":
                items.append(None)
            elif c == "*":
                items.append(DERIVED)
            else:
                raise _syntax(text, start, f"unexpected {c!r}", instance_id)
            expect_value = False
            continue
        if kind >= _WS:
            continue
        if pending_type is not None:
            raise _syntax(text, start, f"expected '(' after {pending_type}", instance_id)
        if not expect_value:
            raise _syntax(text, start, f"expected ',' or ')' but found {m.group()!r}", instance_id)
        if kind == _ID:
            ref = int(m.group()[1:])
            if refs is not None:
                refs.append(ref)
            items.append(Ref(ref))
        elif kind == _REAL:
            items.append(float(m.group()))
        elif kind == _STRING:
            raw = m.group()[1:-1]
            if "'" in raw or "\\" in raw:
                try:
                    raw = _decode_string(raw)
                except StepLexicalError as exc:
                    raise _syntax(text, start, str(exc), instance_id) from None
            items.append(raw)
        elif kind == _INTEGER:
            items.append(int(m.group()))
        elif kind == _ENUM:
            items.append(Enum(m.group()[1:-1].upper()))
        elif kind == _KEYWORD:
            pending_type = m.group().upper()
            continue
        elif kind == _BINARY:
            items.append(Binary(m.group()[1:-1].upper()))
        else:
            raise _syntax(text, start, f"unexpected {m.group()!r}", instance_id)
        expect_value = False
    if last < len(text):
        raise _lex_failure(text, last, instance_id)
    raise _syntax(text, last, "unexpected end of input inside an aggregate", instance_id)


def _expect(text: str, pos: int, char: str, instance_id: int | None) -> int:
    pos = _WS_COMMENTS.match(text, pos).end()
    if not text.startswith(char, pos):
        found = text[pos : pos + 10] or "end of input"
        raise _syntax(text, pos, f"expected {char!r} but found {found!r}", instance_id)
    return pos + 1


def _parse_instance(
    text: str, start: int, instance_id: int, refs: list[int] | None = None
) -> tuple[StepInstance, int]:
    """Parse ``TYPE(...);`` or a complex ``(A(...)B(...));`` starting at ``start``."""
    head = _KEYWORD_OPEN.match(text, start)
    if head:
        attributes, pos = _read_aggregate(text, head.end(), instance_id, refs)
        type_name = head.group(1).upper()
    else:
        pos = _expect(text, start, "(", instance_id)
        parts = []
        while True:
            pos = _WS_COMMENTS.match(text, pos).end()
            if text.startswith(")", pos):
                pos += 1
                break
            part = _KEYWORD_OPEN.match(text, pos)
            if part is None:
                raise _syntax(text, pos, "expected entity keyword in complex instance", instance_id)
            value, pos = _read_aggregate(text, part.end(), instance_id, refs)
            parts.append(Typed(part.group(1).upper(), value))
        if not parts:
            raise _syntax(text, pos, "empty complex instance", instance_id)
        attributes = tuple(parts)
        type_name = ""
    pos = _expect(text, pos, ";", instance_id)
    return StepInstance(instance_id, type_name, attributes), pos


_SECTION = re.compile(r"\b(HEADER|DATA|ENDSEC)\b\s*(\([^;]*\))?\s*;")


def _skip_ws_comments(text: str, pos: int) -> int:
    return _WS_COMMENTS.match(text, pos).end()


def _parse_header(text: str, start: int, end: int) -> dict[str, tuple]:
    header = {}
    body = text[:end]
    pos = start
    while True:
        pos = _WS_COMMENTS.match(body, pos).end()
        if pos >= end:
            return header
        head = _KEYWORD_OPEN.match(body, pos)
        if head is None:
            raise _syntax(text, pos, "expected header entity", None)
        header[head.group(1).upper()], pos = _read_aggregate(body, head.end())
        pos = _expect(body, pos, ";", None)


def parse_step(text: str | bytes) -> StepModel:
    """Parse a STEP physical file into a :class:`StepModel`.

    Raises :class:`StepFormatError` when the ``ISO-10303-21;`` sentinel or the
    DATA section is missing, and :class:`StepSyntaxError` (carrying the
    instance id and line) for malformed instances. References to ids that do
    not exist are recorded in ``model.dangling`` and reported as warnings.
    """
    if isinstance(text, (bytes, bytearray)):
        text = bytes(text).decode("latin-1")
    pos = _skip_ws_comments(text, 0)
    m = re.compile(r"ISO-10303-21\s*;").match(text, pos)
    if m is None:
        raise StepFormatError("missing 'ISO-10303-21;' sentinel", _line_at(text, pos))
    pos = m.end()

    model = StepModel(line_count=text.count("\n") + (0 if text.endswith("\n") else 1))

    sec = _SECTION.search(text, pos)
    if sec is None or sec.group(1) != "HEADER":
        raise StepFormatError("missing HEADER section", _line_at(text, pos))
    hdr_end = _SECTION.search(text, sec.end())
    if hdr_end is None or hdr_end.group(1) != "ENDSEC":
        raise StepFormatError("HEADER section not terminated", _line_at(text, sec.end()))
    model.header_text = text[sec.end() : hdr_end.start()].strip()
    model.header = _parse_header(text, sec.end(), hdr_end.start())
    schema = model.schema
    if schema is not None and schema.upper() not in KNOWN_SCHEMAS:
        model.warnings.append(f"unrecognised schema {schema!r}; decoding as IFC anyway")

    data = _SECTION.search(text, hdr_end.end())
    if data is None or data.group(1) != "DATA":
        raise StepFormatError("missing DATA section", _line_at(text, hdr_end.end()))

    instances = model.instances
    pos = data.end()
    n = len(text)
    instance_head = _INSTANCE_HEAD.match
    pending_refs: list[tuple[int, list[int]]] = []
    while True:
        pos = _skip_ws_comments(text, pos)
        if pos >= n:
            raise StepFormatError("DATA section not terminated by ENDSEC", _line_at(text, pos))
        if text.startswith("ENDSEC", pos):
            break
        if text.startswith("/*", pos):
            raise StepLexicalError("unterminated comment", _line_at(text, pos))
        head = instance_head(text, pos)
        if head is None:
            raise StepSyntaxError("expected '#id =' at start of instance", _line_at(text, pos))
        instance_id = int(head.group(1))
        if instance_id < 1:
            raise StepSyntaxError("instance id must be positive", _line_at(text, pos), instance_id)
        if instance_id in instances:
            raise StepSyntaxError("duplicate instance id", _line_at(text, pos), instance_id)
        refs: list[int] = []
        instances[instance_id], pos = _parse_instance(text, head.end(), instance_id, refs)
        if refs:
            pending_refs.append((instance_id, refs))

    for instance_id, refs in pending_refs:
        missing = tuple(r for r in refs if r not in instances)
        if missing:
            model.dangling[instance_id] = missing
            model.warnings.append(
                f"#{instance_id} {instances[instance_id].type_name} references missing instance(s) "
                + ", ".join(f"#{r}" for r in missing)
            )
    for w in model.warnings:
        logger.warning(w)
    return model


# ---------------------------------------------------------------------------
# writing

def _format_real(value: float) -> str:
    if value != value or value in (float("inf"), float("-inf")):
        raise ValueError(f"STEP cannot encode non-finite real {value!r}")
    text = repr(float(value))
    mantissa, _, exponent = text.partition("e")
    if "." not in mantissa:
        mantissa += "."
    elif mantissa.endswith(".0"):
        mantissa = mantissa[:-1]
    return f"{mantissa}E{exponent}" if exponent else mantissa


def format_value(value: StepValue) -> str:
    if value is None:
        return "$"
    if value is DERIVED:
        return "*"
    if isinstance(value, bool):
        raise TypeError("booleans must be written as Enum('T') / Enum('F')")
    if isinstance(value, Ref):
        return f"#{value.id}"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return _format_real(value)
    if isinstance(value, str):
        return _encode_string(value)
    if isinstance(value, Enum):
        return f".{value.tag}."
    if isinstance(value, Typed):
        inner = value.value
        # nested aggregates already carry their own parentheses
        return f"{value.type_name}({format_value(inner)})"
    if isinstance(value, Binary):
        return f'"{value.hex}"'
    if isinstance(value, (tuple, list)):
        return "(" + ",".join(format_value(v) for v in value) + ")"
    raise TypeError(f"cannot encode {type(value).__name__} as STEP")


def format_instance(inst: StepInstance) -> str:
    if inst.type_name == "":
        body = "".join(f"{part.type_name}{format_value(part.value)}" for part in inst.attributes)
        return f"#{inst.id}=({body});"
    return f"#{inst.id}={inst.type_name}{format_value(inst.attributes)};"


def to_step(model: StepModel) -> str:
    """Serialize ``model`` as canonical STEP text (one instance per line, ids ascending)."""
    lines = ["ISO-10303-21;", "HEADER;"]
    for name, attrs in model.header.items():
        lines.append(f"{name}{format_value(attrs)};")
    lines += ["ENDSEC;", "DATA;"]
    lines += [format_instance(model.instances[i]) for i in sorted(model.instances)]
    lines += ["ENDSEC;", "END-ISO-10303-21;", ""]
    return "\n".join(lines)


def read_step(path) -> StepModel:
    with open(path, "rb") as fh:
        return parse_step(fh.read())
