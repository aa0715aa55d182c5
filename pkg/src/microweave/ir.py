"""Per-service intermediate representation and its canonical serialization.

A ServiceIr bundles one service's matcher output with the internal call
graph (name-resolved, unique-match-only) and the extraction report.  The
``.ir.json`` format round-trips exactly: load(save(x)) == x, and two equal
values serialize to identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from microweave.errors import DuplicateServiceError, MalformedDocument, SchemaViolation
from microweave.frontend import ExtractionReport
from microweave.jsonio import canonical_bytes
from microweave.laast import SourceSpan
from microweave.matchers import (
    ROLE_ENTITY,
    Component,
    Endpoint,
    EventOp,
    MatcherOutput,
    MethodSig,
    PlainType,
    RemoteCall,
)

IR_FILE_SUFFIX = ".ir.json"

#: Collection shells unwrapped when a field's declared type is examined.
_COLLECTION_SHELLS = ("List", "Set", "Collection", "Optional")


@dataclass
class ServiceIr:
    service_name: str
    components: list[Component] = field(default_factory=list)
    endpoints: list[Endpoint] = field(default_factory=list)
    remote_calls: list[RemoteCall] = field(default_factory=list)
    event_ops: list[EventOp] = field(default_factory=list)
    #: ((caller component, caller method), (callee component, callee method))
    internal_calls: list[tuple[tuple[str, str], tuple[str, str]]] = field(default_factory=list)
    plain_types: list[PlainType] = field(default_factory=list)
    extraction_report: ExtractionReport = field(default_factory=ExtractionReport)
    warnings: list[tuple[str, int, str]] = field(default_factory=list)


@dataclass
class DataModel:
    service_name: str
    entities: list[Component] = field(default_factory=list)
    #: (entity name, field name, entity name)
    relations: list[tuple[str, str, str]] = field(default_factory=list)


def unwrap_collection(declared_type: str) -> str:
    """Strip one recognized collection shell (qualified or not) or an array
    suffix; otherwise the type comes back unchanged (whitespace-normalized)."""
    t = " ".join(declared_type.split())
    if t.endswith("[]"):
        return t[:-2].strip()
    head, sep, rest = t.partition("<")
    if sep and t.endswith(">") and head.rsplit(".", 1)[-1] in _COLLECTION_SHELLS:
        return rest[:-1].strip()
    return t


def build_service_ir(
    output: MatcherOutput, report: ExtractionReport, service: str
) -> ServiceIr:
    """Assemble the IR for one service from its matcher output.

    Internal call edges are name-resolved: a local call produces an edge only
    when exactly one method with that name exists across the service's
    components; ambiguous names produce a warning instead of a guess.
    """
    for component in output.components:
        if component.service != service:
            raise DuplicateServiceError(
                f"component {component.name} claims service "
                f"{component.service!r}, expected {service!r}"
            )

    owners: dict[str, list[tuple[str, str]]] = {}
    for component in output.components:
        for sig in component.methods:
            owners.setdefault(sig.name, []).append((component.name, sig.name))

    warnings = list(output.warnings)
    edges: set[tuple[tuple[str, str], tuple[str, str]]] = set()
    ambiguous_seen: set[str] = set()
    for call in output.local_calls:
        targets = owners.get(call.callee, [])
        if len(targets) == 1:
            edges.add(((call.component, call.method), targets[0]))
        elif len(targets) > 1 and call.callee not in ambiguous_seen:
            ambiguous_seen.add(call.callee)
            warnings.append(
                (
                    call.span.file,
                    call.span.line_start,
                    f"ambiguous internal call {call.callee!r}: defined on "
                    + ", ".join(sorted(c for c, _m in targets)),
                )
            )

    return ServiceIr(
        service_name=service,
        components=list(output.components),
        endpoints=list(output.endpoints),
        remote_calls=list(output.remote_calls),
        event_ops=list(output.event_ops),
        internal_calls=sorted(edges),
        plain_types=list(output.plain_types),
        extraction_report=report,
        warnings=warnings,
    )


def derive_data_model(ir: ServiceIr) -> DataModel:
    """Entities plus the relations implied by fields whose declared type
    names another entity of the same service, directly or through one
    collection shell."""
    entities = [c for c in ir.components if c.role == ROLE_ENTITY]
    names = {e.name for e in entities}
    relations: set[tuple[str, str, str]] = set()
    for entity in entities:
        for field_name, declared in entity.fields:
            target = unwrap_collection(declared)
            if target in names:
                relations.add((entity.name, field_name, target))
    return DataModel(
        service_name=ir.service_name,
        entities=list(entities),
        relations=sorted(relations),
    )


# --------------------------------------------------------------------------
# serialization


def _span_obj(span: SourceSpan) -> dict:
    return {"file": span.file, "line_start": span.line_start, "line_end": span.line_end}


def _sig_obj(sig: MethodSig) -> dict:
    return {
        "name": sig.name,
        "params": [{"name": n, "declared_type": t} for n, t in sig.params],
        "return_type": sig.return_type,
        "annotations": [{"name": n, "args": dict(a)} for n, a in sig.annotations],
    }


def _component_obj(c: Component) -> dict:
    return {
        "role": c.role,
        "name": c.name,
        "service": c.service,
        "fields": [{"name": n, "declared_type": t} for n, t in c.fields],
        "methods": [_sig_obj(m) for m in c.methods],
        "annotations": [{"name": n, "args": dict(a)} for n, a in c.annotations],
        "span": _span_obj(c.span),
    }


def _endpoint_obj(e: Endpoint) -> dict:
    return {
        "owner": e.owner,
        "service": e.service,
        "http_method": e.http_method,
        "url_templates": list(e.url_templates),
        "params": [{"name": n, "kind": k, "declared_type": t} for n, k, t in e.params],
        "handler": _sig_obj(e.handler),
        "span": _span_obj(e.span),
    }


def _remote_call_obj(c: RemoteCall) -> dict:
    return {
        "caller_service": c.caller_service,
        "caller_component": c.caller_component,
        "caller_method": c.caller_method,
        "http_method": c.http_method,
        "url_template": c.url_template,
        "arg_count": c.arg_count,
        "span": _span_obj(c.span),
    }


def _event_op_obj(e: EventOp) -> dict:
    return {
        "direction": e.direction,
        "topic": e.topic,
        "service": e.service,
        "component": e.component,
        "method": e.method,
        "span": _span_obj(e.span),
    }


def ir_to_json_obj(ir: ServiceIr) -> dict:
    return {
        "service_name": ir.service_name,
        "components": [_component_obj(c) for c in ir.components],
        "endpoints": [_endpoint_obj(e) for e in ir.endpoints],
        "remote_calls": [_remote_call_obj(c) for c in ir.remote_calls],
        "event_ops": [_event_op_obj(e) for e in ir.event_ops],
        "internal_calls": [
            {
                "caller": {"component": cc, "method": cm},
                "callee": {"component": ec, "method": em},
            }
            for (cc, cm), (ec, em) in ir.internal_calls
        ],
        "plain_types": [
            {"name": t.name, "service": t.service, "span": _span_obj(t.span)}
            for t in ir.plain_types
        ],
        "extraction_report": ir.extraction_report.to_json_obj(),
        "warnings": [{"file": f, "line": n, "message": m} for f, n, m in ir.warnings],
    }


def save_service_ir(ir: ServiceIr) -> bytes:
    """Canonical `.ir.json` bytes: equal IRs always give identical bytes."""
    return canonical_bytes(ir_to_json_obj(ir))


class _Reader:
    """Strict JSON unpacking that names the offending path on violation."""

    def __init__(self, obj, path: str = "$"):
        self.obj = obj
        self.path = path

    def fail(self, message: str):
        raise SchemaViolation(message, path=self.path)

    def child(self, key):
        return _Reader(self.obj[key], f"{self.path}.{key}")

    def item(self, idx):
        return _Reader(self.obj[idx], f"{self.path}[{idx}]")

    def require(self, keys: tuple[str, ...]) -> None:
        if not isinstance(self.obj, dict):
            self.fail("expected an object")
        missing = [k for k in keys if k not in self.obj]
        if missing:
            self.fail(f"missing key {missing[0]!r}")
        extra = [k for k in self.obj if k not in keys]
        if extra:
            self.fail(f"unknown key {extra[0]!r}")

    def string(self, key: str) -> str:
        value = self.obj.get(key)
        if not isinstance(value, str):
            _Reader(value, f"{self.path}.{key}").fail("expected a string")
        return value

    def integer(self, key: str) -> int:
        value = self.obj.get(key)
        if not isinstance(value, int) or isinstance(value, bool):
            _Reader(value, f"{self.path}.{key}").fail("expected an integer")
        return value

    def array(self, key: str) -> "_Reader":
        value = self.obj.get(key)
        if not isinstance(value, list):
            _Reader(value, f"{self.path}.{key}").fail("expected an array")
        return _Reader(value, f"{self.path}.{key}")


def _read_span(r: _Reader) -> SourceSpan:
    r.require(("file", "line_start", "line_end"))
    return SourceSpan(
        file=r.string("file"),
        line_start=r.integer("line_start"),
        line_end=r.integer("line_end"),
    )


def _read_str_map(r: _Reader) -> dict[str, str]:
    if not isinstance(r.obj, dict):
        r.fail("expected an object")
    for k, v in r.obj.items():
        if not isinstance(v, str):
            _Reader(v, f"{r.path}.{k}").fail("expected a string")
    return dict(r.obj)


def _read_annotations(r: _Reader) -> list[tuple[str, dict[str, str]]]:
    out = []
    for i in range(len(r.obj)):
        item = r.item(i)
        item.require(("name", "args"))
        out.append((item.string("name"), _read_str_map(item.child("args"))))
    return out


def _read_sig(r: _Reader) -> MethodSig:
    r.require(("name", "params", "return_type", "annotations"))
    params = []
    params_r = r.array("params")
    for i in range(len(params_r.obj)):
        item = params_r.item(i)
        item.require(("name", "declared_type"))
        params.append((item.string("name"), item.string("declared_type")))
    return MethodSig(
        name=r.string("name"),
        params=params,
        return_type=r.string("return_type"),
        annotations=_read_annotations(r.array("annotations")),
    )


def load_service_ir(data: bytes | str) -> ServiceIr:
    """Parse and validate `.ir.json` bytes back into a ServiceIr."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedDocument(f"not valid UTF-8: {exc}") from None
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"not valid JSON: {exc}") from None

    root = _Reader(obj)
    root.require(
        (
            "service_name",
            "components",
            "endpoints",
            "remote_calls",
            "event_ops",
            "internal_calls",
            "plain_types",
            "extraction_report",
            "warnings",
        )
    )
    ir = ServiceIr(service_name=root.string("service_name"))

    comps = root.array("components")
    for i in range(len(comps.obj)):
        r = comps.item(i)
        r.require(("role", "name", "service", "fields", "methods", "annotations", "span"))
        fields = []
        fields_r = r.array("fields")
        for j in range(len(fields_r.obj)):
            item = fields_r.item(j)
            item.require(("name", "declared_type"))
            fields.append((item.string("name"), item.string("declared_type")))
        methods_r = r.array("methods")
        ir.components.append(
            Component(
                role=r.string("role"),
                name=r.string("name"),
                service=r.string("service"),
                fields=fields,
                methods=[_read_sig(methods_r.item(j)) for j in range(len(methods_r.obj))],
                annotations=_read_annotations(r.array("annotations")),
                span=_read_span(r.child("span")),
            )
        )

    eps = root.array("endpoints")
    for i in range(len(eps.obj)):
        r = eps.item(i)
        r.require(("owner", "service", "http_method", "url_templates", "params", "handler", "span"))
        templates_r = r.array("url_templates")
        templates = []
        for j in range(len(templates_r.obj)):
            value = templates_r.obj[j]
            if not isinstance(value, str):
                templates_r.item(j).fail("expected a string")
            templates.append(value)
        params = []
        params_r = r.array("params")
        for j in range(len(params_r.obj)):
            item = params_r.item(j)
            item.require(("name", "kind", "declared_type"))
            params.append(
                (item.string("name"), item.string("kind"), item.string("declared_type"))
            )
        ir.endpoints.append(
            Endpoint(
                owner=r.string("owner"),
                service=r.string("service"),
                http_method=r.string("http_method"),
                url_templates=templates,
                params=params,
                handler=_read_sig(r.child("handler")),
                span=_read_span(r.child("span")),
            )
        )

    calls = root.array("remote_calls")
    for i in range(len(calls.obj)):
        r = calls.item(i)
        r.require(
            (
                "caller_service",
                "caller_component",
                "caller_method",
                "http_method",
                "url_template",
                "arg_count",
                "span",
            )
        )
        ir.remote_calls.append(
            RemoteCall(
                caller_service=r.string("caller_service"),
                caller_component=r.string("caller_component"),
                caller_method=r.string("caller_method"),
                http_method=r.string("http_method"),
                url_template=r.string("url_template"),
                arg_count=r.integer("arg_count"),
                span=_read_span(r.child("span")),
            )
        )

    events = root.array("event_ops")
    for i in range(len(events.obj)):
        r = events.item(i)
        r.require(("direction", "topic", "service", "component", "method", "span"))
        ir.event_ops.append(
            EventOp(
                direction=r.string("direction"),
                topic=r.string("topic"),
                service=r.string("service"),
                component=r.string("component"),
                method=r.string("method"),
                span=_read_span(r.child("span")),
            )
        )

    internal = root.array("internal_calls")
    for i in range(len(internal.obj)):
        r = internal.item(i)
        r.require(("caller", "callee"))
        caller = r.child("caller")
        caller.require(("component", "method"))
        callee = r.child("callee")
        callee.require(("component", "method"))
        ir.internal_calls.append(
            (
                (caller.string("component"), caller.string("method")),
                (callee.string("component"), callee.string("method")),
            )
        )

    plains = root.array("plain_types")
    for i in range(len(plains.obj)):
        r = plains.item(i)
        r.require(("name", "service", "span"))
        ir.plain_types.append(
            PlainType(
                name=r.string("name"),
                service=r.string("service"),
                span=_read_span(r.child("span")),
            )
        )

    report = root.child("extraction_report")
    report.require(("files_scanned", "files_skipped", "nodes_emitted", "warnings"))
    skipped = []
    skipped_r = report.array("files_skipped")
    for i in range(len(skipped_r.obj)):
        item = skipped_r.item(i)
        item.require(("file", "reason"))
        skipped.append((item.string("file"), item.string("reason")))
    report_warnings = []
    rw = report.array("warnings")
    for i in range(len(rw.obj)):
        item = rw.item(i)
        item.require(("file", "line", "message"))
        report_warnings.append(
            (item.string("file"), item.integer("line"), item.string("message"))
        )
    ir.extraction_report = ExtractionReport(
        files_scanned=report.integer("files_scanned"),
        files_skipped=skipped,
        nodes_emitted=report.integer("nodes_emitted"),
        warnings=report_warnings,
    )

    warns = root.array("warnings")
    for i in range(len(warns.obj)):
        item = warns.item(i)
        item.require(("file", "line", "message"))
        ir.warnings.append(
            (item.string("file"), item.integer("line"), item.string("message"))
        )
    return ir
