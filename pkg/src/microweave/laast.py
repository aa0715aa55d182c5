"""Language-agnostic syntax tree: node model, interchange format, validation.

Every frontend produces this tree shape and every matcher consumes it, so
parsers for different platforms can feed the same pipeline.  The interchange
format is UTF-8 JSON with a fixed field order per node: ``kind``, ``name``
(omitted when absent), ``attributes`` (omitted when empty), ``span`` (omitted
when synthetic), ``children`` (omitted when empty).  File extension:
``.laast.json``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from microweave.errors import MalformedDocument, SchemaViolation


class NodeKind(str, Enum):
    """Closed inventory of tree node kinds.

    Extension happens through node attributes, never through new kinds.
    ``UNKNOWN`` is a passthrough for constructs no matcher consumes; matchers
    must never match on it.
    """

    COMPILATION_UNIT = "CompilationUnit"
    TYPE_DECL = "TypeDecl"
    FIELD_DECL = "FieldDecl"
    METHOD_DECL = "MethodDecl"
    PARAM = "Param"
    ANNOTATION = "Annotation"
    CALL = "Call"
    LITERAL = "Literal"
    TYPE_REF = "TypeRef"
    BLOCK = "Block"
    UNKNOWN = "Unknown"


#: Kinds that may never carry children.
LEAF_KINDS = frozenset({NodeKind.LITERAL, NodeKind.TYPE_REF})

_KIND_BY_VALUE = {k.value: k for k in NodeKind}


@dataclass(frozen=True)
class SourceSpan:
    """Location of a node in its originating source file.

    ``file`` is a relative path from the service root using forward slashes;
    line numbers are 1-based and inclusive.
    """

    file: str
    line_start: int
    line_end: int


@dataclass(eq=False)
class LaastNode:
    """One tree node.  Immutable by convention after construction.

    ``attributes`` is an ordered string-to-string map; insertion order is
    significant and preserved by the interchange format.  ``span`` is ``None``
    for synthetic nodes that have no source location.
    """

    kind: NodeKind
    name: str | None = None
    attributes: dict[str, str] = field(default_factory=dict)
    children: list[LaastNode] = field(default_factory=list)
    span: SourceSpan | None = None

    def __eq__(self, other: object) -> bool:
        # Attribute order is significant, so plain dict equality is too weak.
        if not isinstance(other, LaastNode):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.name == other.name
            and list(self.attributes.items()) == list(other.attributes.items())
            and self.span == other.span
            and self.children == other.children
        )

    __hash__ = None  # type: ignore[assignment]


def _fail(message: str, path: str) -> SchemaViolation:
    return SchemaViolation(message, path=path)


def _validate_span(obj: object, path: str) -> SourceSpan:
    if not isinstance(obj, dict):
        raise _fail("span must be an object", path)
    extra = set(obj) - {"file", "line_start", "line_end"}
    if extra:
        raise _fail(f"unexpected span field(s) {sorted(extra)}", path)
    file = obj.get("file")
    if not isinstance(file, str) or not file:
        raise _fail("span.file must be a non-empty string", path)
    if "\\" in file:
        raise _fail("span.file must use forward slashes", path)
    start, end = obj.get("line_start"), obj.get("line_end")
    if not isinstance(start, int) or isinstance(start, bool) or start < 1:
        raise _fail("span.line_start must be an integer >= 1", path)
    if not isinstance(end, int) or isinstance(end, bool) or end < start:
        raise _fail("span.line_end must be an integer >= line_start", path)
    return SourceSpan(file=file, line_start=start, line_end=end)


_NODE_FIELDS = ("kind", "name", "attributes", "span", "children")


def _validate_node(obj: object, path: str) -> LaastNode:
    if not isinstance(obj, dict):
        raise _fail("node must be a JSON object", path)
    extra = set(obj) - set(_NODE_FIELDS)
    if extra:
        raise _fail(f"unexpected field(s) {sorted(extra)}", path)

    raw_kind = obj.get("kind")
    if not isinstance(raw_kind, str):
        raise _fail("missing or non-string 'kind'", path)
    kind = _KIND_BY_VALUE.get(raw_kind)
    if kind is None:
        raise _fail(f"unknown node kind {raw_kind!r}", path)

    name = obj.get("name")
    if name is not None and not isinstance(name, str):
        raise _fail("'name' must be a string when present", path)

    attributes: dict[str, str] = {}
    if "attributes" in obj:
        raw_attrs = obj["attributes"]
        if not isinstance(raw_attrs, dict):
            raise _fail("'attributes' must be an object", path)
        for key, value in raw_attrs.items():
            if not isinstance(value, str):
                raise _fail(f"attribute {key!r} must map to a string", path)
            attributes[key] = value

    span = _validate_span(obj["span"], path) if "span" in obj else None

    children: list[LaastNode] = []
    if "children" in obj:
        raw_children = obj["children"]
        if not isinstance(raw_children, list):
            raise _fail("'children' must be an array", path)
        if kind in LEAF_KINDS and raw_children:
            raise _fail(f"leaf kind {kind.value} must not have children", path)
        for i, child in enumerate(raw_children):
            children.append(_validate_node(child, f"{path}.children[{i}]"))

    return LaastNode(kind=kind, name=name, attributes=attributes, children=children, span=span)


def validate_tree(root: LaastNode, path: str = "$") -> None:
    """Check all node invariants on an in-memory tree.

    Raises :class:`SchemaViolation` naming the offending path.  Loading
    always validates; call this directly when a tree is built by hand.
    """
    if not isinstance(root.kind, NodeKind):
        raise _fail(f"unknown node kind {root.kind!r}", path)
    if root.name is not None and not isinstance(root.name, str):
        raise _fail("'name' must be a string when present", path)
    for key, value in root.attributes.items():
        if not isinstance(key, str) or not isinstance(value, str):
            raise _fail(f"attribute {key!r} must map string to string", path)
    if root.span is not None:
        _validate_span(
            {"file": root.span.file, "line_start": root.span.line_start, "line_end": root.span.line_end},
            path,
        )
    if root.kind in LEAF_KINDS and root.children:
        raise _fail(f"leaf kind {root.kind.value} must not have children", path)
    for i, child in enumerate(root.children):
        validate_tree(child, f"{path}.children[{i}]")


def load_laast(document: bytes | str) -> LaastNode:
    """Parse and validate an interchange-format document into a tree.

    Raises :class:`MalformedDocument` for syntax errors and
    :class:`SchemaViolation` for schema errors; both name where the problem
    is.  Attribute and child order are preserved exactly.
    """
    if isinstance(document, bytes):
        try:
            text = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedDocument(f"document is not valid UTF-8: {exc}") from exc
    else:
        text = document
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"document is not valid JSON: {exc}") from exc
    return _validate_node(obj, "$")


def _node_to_obj(node: LaastNode) -> dict:
    obj: dict = {"kind": node.kind.value}
    if node.name is not None:
        obj["name"] = node.name
    if node.attributes:
        obj["attributes"] = dict(node.attributes)
    if node.span is not None:
        obj["span"] = {
            "file": node.span.file,
            "line_start": node.span.line_start,
            "line_end": node.span.line_end,
        }
    if node.children:
        obj["children"] = [_node_to_obj(c) for c in node.children]
    return obj


def save_laast(root: LaastNode) -> bytes:
    """Serialize a valid tree to its canonical interchange form.

    Canonical means: fixed field order, attributes in insertion order, no
    insignificant whitespace.  ``load_laast(save_laast(t))`` reproduces ``t``
    exactly, and structurally equal trees serialize identically.
    """
    return json.dumps(_node_to_obj(root), ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def walk(root: LaastNode, visitor: Callable[[LaastNode, tuple[LaastNode, ...]], None]) -> int:
    """Pre-order depth-first traversal.

    ``visitor`` receives each node with its ancestor path (root to parent).
    Returns the number of nodes visited.
    """
    count = 0
    stack: list[tuple[LaastNode, tuple[LaastNode, ...]]] = [(root, ())]
    while stack:
        node, path = stack.pop()
        visitor(node, path)
        count += 1
        child_path = path + (node,)
        for child in reversed(node.children):
            stack.append((child, child_path))
    return count


def iter_nodes(root: LaastNode):
    """Yield ``(node, ancestor_path)`` pairs in pre-order."""
    out: list[tuple[LaastNode, tuple[LaastNode, ...]]] = []
    walk(root, lambda n, p: out.append((n, p)))
    return iter(out)
