"""Cross-service weaving: entity matching, call/endpoint matching, events.

This module takes the per-service IRs and produces the system-level view:
a context map of shared entities, communication edges recovered from URL
templates, event edges recovered from topic names, and the declared
topology filtered down to analyzed services.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from itertools import combinations

from microweave import __version__
from microweave.errors import DuplicateServiceError
from microweave.frontend import HTTP_UNKNOWN, URL_WILDCARD
from microweave.ir import DataModel, ServiceIr, derive_data_model, unwrap_collection
from microweave.matchers import DIRECTION_PUBLISH, DIRECTION_SUBSCRIBE, Endpoint, RemoteCall
from microweave.similarity import DEFAULT_STRIP_TOKENS, Taxonomy, entity_similarity
from microweave.topology import Inventory, TopologyModel, build_inventory

DEFAULT_ENTITY_THRESHOLD = 0.65
DEFAULT_FIELD_THRESHOLD = 0.6
DEFAULT_PATH_THRESHOLD = 0.8

_PRIMITIVE_CANON = {
    "int": "int",
    "integer": "int",
    "long": "long",
    "short": "short",
    "byte": "byte",
    "float": "float",
    "double": "double",
    "boolean": "boolean",
    "char": "char",
    "character": "char",
}

_URL_RE = re.compile(r"^(https?)://([^/]*)(/.*)?$")


@dataclass(frozen=True)
class WeaveConfig:
    entity_threshold: float = DEFAULT_ENTITY_THRESHOLD
    field_threshold: float = DEFAULT_FIELD_THRESHOLD
    path_threshold: float = DEFAULT_PATH_THRESHOLD
    strip_tokens: tuple[str, ...] = DEFAULT_STRIP_TOKENS
    tool_version: str = __version__
    config_digest: str = ""


@dataclass(frozen=True)
class FieldMatch:
    field_a: str
    field_b: str
    score: float
    type_compatible: bool


@dataclass(frozen=True)
class EntityMatch:
    service_a: str
    entity_a: str
    service_b: str
    entity_b: str
    score: float
    strategy: str
    field_matches: tuple[FieldMatch, ...]


@dataclass
class ContextMap:
    #: one per-service data model, sorted by service name
    bounded_contexts: list[DataModel]
    matches: list[EntityMatch]


@dataclass(frozen=True)
class CallRef:
    service: str
    component: str
    method: str
    http_method: str
    url_template: str
    file: str
    line: int


@dataclass(frozen=True)
class EndpointRef:
    service: str
    owner: str
    handler: str
    http_method: str
    file: str
    line: int


@dataclass(frozen=True)
class CommEdge:
    from_service: str
    to_service: str
    call: CallRef
    endpoint: EndpointRef
    matched_url_template: str
    score: float
    confidence: float
    ambiguous: bool


@dataclass
class SystemIr:
    services: list[ServiceIr]
    context_map: ContextMap
    comm_edges: list[CommEdge]
    #: (publisher service, subscriber service, topic)
    event_edges: list[tuple[str, str, str]]
    #: (from service, to service, origin), analyzed services only
    topology_edges: list[tuple[str, str, str]]
    metadata: dict = field(default_factory=dict)


def canonical_type(declared_type: str) -> str:
    """Unwrap one collection shell, drop any package qualifier, and fold
    primitive wrapper spellings."""
    base = unwrap_collection(declared_type)
    if "<" not in base:
        base = base.rsplit(".", 1)[-1]
    return _PRIMITIVE_CANON.get(base.lower(), base)


def type_compatible(type_a: str, type_b: str) -> bool:
    return canonical_type(type_a) == canonical_type(type_b)


def match_fields(
    fields_a: list[tuple[str, str]],
    fields_b: list[tuple[str, str]],
    taxonomy: Taxonomy | None,
    config: WeaveConfig,
) -> tuple[FieldMatch, ...]:
    """Greedy one-to-one field pairing by descending name similarity."""
    scored = []
    for ia, (name_a, _) in enumerate(fields_a):
        for ib, (name_b, _) in enumerate(fields_b):
            score, _strategy = entity_similarity(
                name_a, name_b, taxonomy=taxonomy, strip_tokens=config.strip_tokens
            )
            if score >= config.field_threshold:
                scored.append((score, ia, ib))
    scored.sort(key=lambda row: (-row[0], row[1], row[2]))
    used_a: set[int] = set()
    used_b: set[int] = set()
    matches = []
    for score, ia, ib in scored:
        if ia in used_a or ib in used_b:
            continue
        used_a.add(ia)
        used_b.add(ib)
        matches.append(
            FieldMatch(
                field_a=fields_a[ia][0],
                field_b=fields_b[ib][0],
                score=score,
                type_compatible=type_compatible(fields_a[ia][1], fields_b[ib][1]),
            )
        )
    matches.sort(key=lambda m: (m.field_a, m.field_b))
    return tuple(matches)


def build_context_map(
    models: list[DataModel],
    taxonomy: Taxonomy | None,
    config: WeaveConfig,
) -> ContextMap:
    """Compare every cross-service entity pair; keep pairs at or above the
    entity threshold along with their field alignment."""
    ordered = sorted(models, key=lambda m: m.service_name)
    matches: list[EntityMatch] = []
    for model_a, model_b in combinations(ordered, 2):
        for ent_a in model_a.entities:
            for ent_b in model_b.entities:
                score, strategy = entity_similarity(
                    ent_a.name,
                    ent_b.name,
                    taxonomy=taxonomy,
                    strip_tokens=config.strip_tokens,
                )
                if score < config.entity_threshold:
                    continue
                matches.append(
                    EntityMatch(
                        service_a=model_a.service_name,
                        entity_a=ent_a.name,
                        service_b=model_b.service_name,
                        entity_b=ent_b.name,
                        score=score,
                        strategy=strategy,
                        field_matches=match_fields(
                            ent_a.fields, ent_b.fields, taxonomy, config
                        ),
                    )
                )
    matches.sort(key=lambda m: (m.service_a, m.entity_a, m.service_b, m.entity_b))
    return ContextMap(bounded_contexts=ordered, matches=matches)


def split_host(url_template: str) -> tuple[str | None, str]:
    """Split an absolute URL template into (host token, path); relative
    templates return (None, template)."""
    matched = _URL_RE.match(url_template)
    if not matched:
        return None, url_template
    hostport = matched.group(2)
    path = matched.group(3) or "/"
    return hostport.split(":")[0], path


def _segments(path: str) -> list[str]:
    trimmed = path.strip("/")
    return trimmed.split("/") if trimmed else []


def _is_template(segment: str) -> bool:
    return segment.startswith("{") and segment.endswith("}")


def path_score(call_path: str, endpoint_path: str) -> float:
    """Segment-aligned similarity between a call path and an endpoint path.

    Literal pairs score 1, pairs with a template on either side score 0.5,
    and a literal mismatch zeroes the whole comparison.  Unequal lengths are
    tolerated only when the shorter path is a prefix and every unmatched
    segment of the longer one is a template; those extras still count in
    the denominator.
    """
    call_segs = _segments(call_path)
    ep_segs = _segments(endpoint_path)
    if not call_segs and not ep_segs:
        return 1.0
    strong = 0
    weak = 0
    overlap = min(len(call_segs), len(ep_segs))
    for left, right in zip(call_segs, ep_segs):
        if _is_template(left) or _is_template(right):
            weak += 1
        elif left == right:
            strong += 1
        else:
            return 0.0
    longer = call_segs if len(call_segs) > len(ep_segs) else ep_segs
    if any(not _is_template(seg) for seg in longer[overlap:]):
        return 0.0
    return (strong + 0.5 * weak) / max(len(call_segs), len(ep_segs))


def _method_factor(call_method: str, endpoint_method: str) -> float | None:
    if call_method == endpoint_method:
        return 1.0
    if call_method == HTTP_UNKNOWN or endpoint_method == "ANY":
        return 0.9
    return None


def match_call_to_endpoints(
    call: RemoteCall,
    endpoints: list[Endpoint],
    inventory: Inventory,
    config: WeaveConfig,
) -> list[CommEdge]:
    """Match one remote call against the endpoint inventory.

    A resolvable host restricts candidates to that service; an unresolvable
    one widens to all services at half confidence.  Each endpoint scores by
    its best URL template; every endpoint tied at the best overall score
    gets an edge, splitting confidence k ways.
    """
    host, path = split_host(call.url_template)
    host_penalty = 1.0
    if host is None:
        candidates = endpoints
    else:
        target = inventory.get(host)
        if target is None:
            candidates = endpoints
            host_penalty = 0.5
        else:
            candidates = [ep for ep in endpoints if ep.service == target]

    scored: list[tuple[float, Endpoint, str]] = []
    for endpoint in candidates:
        factor = _method_factor(call.http_method, endpoint.http_method)
        if factor is None:
            continue
        best_template = None
        best = 0.0
        for template in endpoint.url_templates:
            _host, ep_path = split_host(template)
            score = path_score(path, ep_path)
            if score > best:
                best = score
                best_template = template
        total = best * factor
        if total > 0.0 and best_template is not None:
            scored.append((total, endpoint, best_template))

    if not scored:
        return []
    top = max(score for score, _, _ in scored)
    if top < config.path_threshold:
        return []
    ties = [(endpoint, template) for score, endpoint, template in scored if score == top]
    confidence = host_penalty / len(ties)
    ambiguous = len(ties) > 1
    edges = [
        CommEdge(
            from_service=call.caller_service,
            to_service=endpoint.service,
            call=CallRef(
                service=call.caller_service,
                component=call.caller_component,
                method=call.caller_method,
                http_method=call.http_method,
                url_template=call.url_template,
                file=call.span.file,
                line=call.span.line_start,
            ),
            endpoint=EndpointRef(
                service=endpoint.service,
                owner=endpoint.owner,
                handler=endpoint.handler.name,
                http_method=endpoint.http_method,
                file=endpoint.span.file,
                line=endpoint.span.line_start,
            ),
            matched_url_template=template,
            score=top,
            confidence=confidence,
            ambiguous=ambiguous,
        )
        for endpoint, template in ties
    ]
    edges.sort(key=_edge_key)
    return edges


def _edge_key(edge: CommEdge):
    return (
        edge.from_service,
        edge.to_service,
        edge.call.file,
        edge.call.line,
        edge.endpoint.file,
        edge.endpoint.line,
        edge.matched_url_template,
    )


def match_events(irs: list[ServiceIr]) -> tuple[list[tuple[str, str, str]], list[str]]:
    """Pair publishes with subscribes on equal literal topics."""
    publishes = []
    subscribes = []
    for ir in irs:
        for op in ir.event_ops:
            if op.direction == DIRECTION_PUBLISH:
                publishes.append(op)
            elif op.direction == DIRECTION_SUBSCRIBE:
                subscribes.append(op)
    edges: set[tuple[str, str, str]] = set()
    warnings: list[str] = []
    for op in publishes:
        if op.topic == URL_WILDCARD:
            warnings.append(
                f"{op.service}: publish with non-literal topic at "
                f"{op.span.file}:{op.span.line_start} cannot be matched"
            )
            continue
        hit = False
        for sub in subscribes:
            if sub.topic == op.topic:
                edges.add((op.service, sub.service, op.topic))
                hit = True
        if not hit:
            warnings.append(
                f"{op.service}: topic {op.topic!r} is published but never "
                f"subscribed by an analyzed service"
            )
    for sub in subscribes:
        if sub.topic == URL_WILDCARD:
            warnings.append(
                f"{sub.service}: subscribe with non-literal topic at "
                f"{sub.span.file}:{sub.span.line_start} cannot be matched"
            )
    return sorted(edges), warnings


def weave(
    irs: list[ServiceIr],
    taxonomy: Taxonomy | None = None,
    topology: TopologyModel | None = None,
    config: WeaveConfig | None = None,
) -> SystemIr:
    """Assemble the system-level IR from per-service IRs."""
    config = config or WeaveConfig()
    seen: set[str] = set()
    for ir in irs:
        if ir.service_name in seen:
            raise DuplicateServiceError(
                f"duplicate service name {ir.service_name!r}"
            )
        seen.add(ir.service_name)
    ordered = sorted(irs, key=lambda ir: ir.service_name)
    names = {ir.service_name for ir in ordered}

    inventory = build_inventory(topology, [ir.service_name for ir in ordered])
    models = [derive_data_model(ir) for ir in ordered]
    context_map = build_context_map(models, taxonomy, config)

    all_endpoints = [ep for ir in ordered for ep in ir.endpoints]
    comm_edges: list[CommEdge] = []
    for ir in ordered:
        for call in ir.remote_calls:
            comm_edges.extend(
                match_call_to_endpoints(call, all_endpoints, inventory, config)
            )
    comm_edges.sort(key=_edge_key)

    event_edges, event_warnings = match_events(ordered)

    topology_edges: list[tuple[str, str, str]] = []
    if topology is not None:
        topology_edges = sorted(
            {
                (src, dst, origin)
                for src, dst, origin in topology.declared_edges
                if src in names and dst in names
            }
        )

    warnings = list(inventory.warnings)
    if topology is not None:
        warnings.extend(topology.warnings)
    warnings.extend(event_warnings)

    metadata = {
        "tool_version": config.tool_version,
        "config_digest": config.config_digest,
        "inventory": {token: inventory[token] for token in sorted(inventory)},
        "warnings": warnings,
    }
    return SystemIr(
        services=ordered,
        context_map=context_map,
        comm_edges=comm_edges,
        event_edges=event_edges,
        topology_edges=topology_edges,
        metadata=metadata,
    )


def field_match_to_json_obj(match: FieldMatch) -> dict:
    return {
        "field_a": match.field_a,
        "field_b": match.field_b,
        "score": match.score,
        "type_compatible": match.type_compatible,
    }


def entity_match_to_json_obj(match: EntityMatch) -> dict:
    return {
        "service_a": match.service_a,
        "entity_a": match.entity_a,
        "service_b": match.service_b,
        "entity_b": match.entity_b,
        "score": match.score,
        "strategy": match.strategy,
        "field_matches": [field_match_to_json_obj(f) for f in match.field_matches],
    }


def context_map_to_json_obj(context_map: ContextMap) -> dict:
    return {
        "bounded_contexts": [
            {
                "service": model.service_name,
                "entities": [
                    {
                        "name": entity.name,
                        "fields": [
                            {"name": name, "declared_type": declared}
                            for name, declared in entity.fields
                        ],
                    }
                    for entity in model.entities
                ],
                "relations": [
                    {"from_entity": src, "field": field_name, "to_entity": dst}
                    for src, field_name, dst in model.relations
                ],
            }
            for model in context_map.bounded_contexts
        ],
        "matches": [entity_match_to_json_obj(m) for m in context_map.matches],
    }


def comm_edge_to_json_obj(edge: CommEdge) -> dict:
    return {
        "from_service": edge.from_service,
        "to_service": edge.to_service,
        "call": {
            "service": edge.call.service,
            "component": edge.call.component,
            "method": edge.call.method,
            "http_method": edge.call.http_method,
            "url_template": edge.call.url_template,
            "file": edge.call.file,
            "line": edge.call.line,
        },
        "endpoint": {
            "service": edge.endpoint.service,
            "owner": edge.endpoint.owner,
            "handler": edge.endpoint.handler,
            "http_method": edge.endpoint.http_method,
            "file": edge.endpoint.file,
            "line": edge.endpoint.line,
        },
        "matched_url_template": edge.matched_url_template,
        "score": edge.score,
        "confidence": edge.confidence,
        "ambiguous": edge.ambiguous,
    }


def system_to_json_obj(system: SystemIr) -> dict:
    from microweave.ir import ir_to_json_obj

    return {
        "services": [ir_to_json_obj(ir) for ir in system.services],
        "context_map": context_map_to_json_obj(system.context_map),
        "comm_edges": [comm_edge_to_json_obj(e) for e in system.comm_edges],
        "event_edges": [
            {"publisher": pub, "subscriber": sub, "topic": topic}
            for pub, sub, topic in system.event_edges
        ],
        "topology_edges": [
            {"from_service": src, "to_service": dst, "origin": origin}
            for src, dst, origin in system.topology_edges
        ],
        "metadata": system.metadata,
    }
