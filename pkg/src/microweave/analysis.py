"""Consistency checks, dependency-smell detection, and coupling metrics.

The rule catalog is closed: E01 dangling call, E02 signature mismatch,
W01 entity drift, W02 ambiguous edge, W03 unreachable endpoint, W04
topology mismatch, S01 cyclic dependency.  Rules can be disabled or have
their severity overridden through the run configuration, but new rule ids
cannot be introduced from outside.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from microweave.matchers import PARAM_BODY, PARAM_PATH, Endpoint, RemoteCall
from microweave.weave import (
    CommEdge,
    SystemIr,
    _method_factor,
    path_score,
    split_host,
)

SEV_ERROR = "error"
SEV_WARNING = "warning"
SEV_INFO = "info"

RULE_DANGLING_CALL = "E01"
RULE_SIGNATURE_MISMATCH = "E02"
RULE_ENTITY_DRIFT = "W01"
RULE_AMBIGUOUS_EDGE = "W02"
RULE_UNREACHABLE_ENDPOINT = "W03"
RULE_TOPOLOGY_MISMATCH = "W04"
RULE_CYCLIC_DEPENDENCY = "S01"

DEFAULT_SEVERITIES = {
    RULE_DANGLING_CALL: SEV_ERROR,
    RULE_SIGNATURE_MISMATCH: SEV_ERROR,
    RULE_ENTITY_DRIFT: SEV_WARNING,
    RULE_AMBIGUOUS_EDGE: SEV_WARNING,
    RULE_UNREACHABLE_ENDPOINT: SEV_INFO,
    RULE_TOPOLOGY_MISMATCH: SEV_WARNING,
    RULE_CYCLIC_DEPENDENCY: SEV_WARNING,
}

RULE_IDS = tuple(sorted(DEFAULT_SEVERITIES))

#: E02 arg-count tolerance; one extra client-side argument (typically the
#: response-type parameter) is never a mismatch.
ARG_COUNT_TOLERANCE = 1


@dataclass(frozen=True)
class Subject:
    service: str
    ref: str
    file: str = ""
    line: int = 0

    def sort_key(self):
        return (self.service, self.ref, self.file, self.line)


@dataclass(frozen=True)
class Finding:
    rule_id: str
    severity: str
    message: str
    subjects: tuple[Subject, ...]

    def sort_key(self):
        return (self.rule_id, tuple(s.sort_key() for s in self.subjects))


@dataclass
class ServiceCoupling:
    service: str
    ais: int
    ads: int
    instability: float


@dataclass
class CouplingReport:
    services: list[ServiceCoupling]
    total_services: int
    total_pairs: int
    mean_instability: float


@dataclass
class CheckSettings:
    disabled_rules: frozenset[str] = frozenset()
    severity_overrides: dict[str, str] = field(default_factory=dict)
    #: same threshold the matcher uses for comm edges
    path_threshold: float = 0.8

    def severity(self, rule_id: str) -> str:
        return self.severity_overrides.get(rule_id, DEFAULT_SEVERITIES[rule_id])


def _call_key(service: str, call: RemoteCall):
    return (
        service,
        call.span.file,
        call.span.line_start,
        call.http_method,
        call.url_template,
        call.caller_component,
        call.caller_method,
    )


def _edge_call_key(edge: CommEdge):
    return (
        edge.call.service,
        edge.call.file,
        edge.call.line,
        edge.call.http_method,
        edge.call.url_template,
        edge.call.component,
        edge.call.method,
    )


def _endpoint_candidates(
    call: RemoteCall, endpoints: list[Endpoint], inventory: dict
) -> list[Endpoint]:
    host, _path = split_host(call.url_template)
    if host is None:
        return endpoints
    target = inventory.get(host)
    if target is None:
        return endpoints
    return [ep for ep in endpoints if ep.service == target]


def _best_path_score(call: RemoteCall, endpoint: Endpoint) -> float:
    _host, call_path = split_host(call.url_template)
    best = 0.0
    for template in endpoint.url_templates:
        _ep_host, ep_path = split_host(template)
        best = max(best, path_score(call_path, ep_path))
    return best


def _check_calls(system: SystemIr, settings: CheckSettings, findings: list[Finding]):
    """E01 and the method-mismatch arm of E02.

    A call with zero edges is E02 when some candidate endpoint's path
    matches at or above the threshold and only the HTTP method blocked it;
    it is E01 only when no such near-miss exists.
    """
    matched = {_edge_call_key(edge) for edge in system.comm_edges}
    all_endpoints = [ep for ir in system.services for ep in ir.endpoints]
    inventory = system.metadata.get("inventory", {})

    for ir in system.services:
        for call in ir.remote_calls:
            if _call_key(ir.service_name, call) in matched:
                continue
            near_misses = []
            for endpoint in _endpoint_candidates(call, all_endpoints, inventory):
                if _method_factor(call.http_method, endpoint.http_method) is not None:
                    continue
                score = _best_path_score(call, endpoint)
                if score >= settings.path_threshold:
                    near_misses.append((-score, endpoint.service, endpoint.span.file,
                                        endpoint.span.line_start, endpoint))
            site = Subject(
                service=ir.service_name,
                ref=f"{call.caller_component}.{call.caller_method}",
                file=call.span.file,
                line=call.span.line_start,
            )
            if near_misses:
                near_misses.sort(key=lambda row: row[:4])
                endpoint = near_misses[0][4]
                findings.append(
                    Finding(
                        rule_id=RULE_SIGNATURE_MISMATCH,
                        severity=settings.severity(RULE_SIGNATURE_MISMATCH),
                        message=(
                            f"{call.http_method} {call.url_template} matches the "
                            f"path of {endpoint.service} "
                            f"{' '.join(endpoint.url_templates)} but that endpoint "
                            f"only accepts {endpoint.http_method}"
                        ),
                        subjects=(
                            site,
                            Subject(
                                service=endpoint.service,
                                ref=f"{endpoint.owner}.{endpoint.handler.name}",
                                file=endpoint.span.file,
                                line=endpoint.span.line_start,
                            ),
                        ),
                    )
                )
            else:
                findings.append(
                    Finding(
                        rule_id=RULE_DANGLING_CALL,
                        severity=settings.severity(RULE_DANGLING_CALL),
                        message=(
                            f"{call.http_method} {call.url_template} from "
                            f"{call.caller_component}.{call.caller_method} matches "
                            f"no endpoint of any analyzed service"
                        ),
                        subjects=(site,),
                    )
                )


def _endpoint_by_ref(system: SystemIr, edge: CommEdge) -> Endpoint | None:
    for ir in system.services:
        if ir.service_name != edge.to_service:
            continue
        for endpoint in ir.endpoints:
            if (
                endpoint.span.file == edge.endpoint.file
                and endpoint.span.line_start == edge.endpoint.line
                and endpoint.http_method == edge.endpoint.http_method
                and endpoint.handler.name == edge.endpoint.handler
            ):
                return endpoint
    return None


def _check_arg_counts(system: SystemIr, settings: CheckSettings, findings: list[Finding]):
    """Arg-count arm of E02 over matched edges."""
    for edge in system.comm_edges:
        endpoint = _endpoint_by_ref(system, edge)
        if endpoint is None:
            continue
        expected = sum(1 for _n, kind, _t in endpoint.params if kind in (PARAM_PATH, PARAM_BODY))
        call_key = _edge_call_key(edge)
        arg_count = None
        for ir in system.services:
            for call in ir.remote_calls:
                if _call_key(ir.service_name, call) == call_key:
                    arg_count = call.arg_count
        if arg_count is None:
            continue
        if abs(arg_count - expected) > ARG_COUNT_TOLERANCE:
            findings.append(
                Finding(
                    rule_id=RULE_SIGNATURE_MISMATCH,
                    severity=settings.severity(RULE_SIGNATURE_MISMATCH),
                    message=(
                        f"call {edge.call.component}.{edge.call.method} passes "
                        f"{arg_count} argument(s) but endpoint "
                        f"{edge.endpoint.owner}.{edge.endpoint.handler} declares "
                        f"{expected} path/body parameter(s)"
                    ),
                    subjects=(
                        Subject(
                            service=edge.from_service,
                            ref=f"{edge.call.component}.{edge.call.method}",
                            file=edge.call.file,
                            line=edge.call.line,
                        ),
                        Subject(
                            service=edge.to_service,
                            ref=f"{edge.endpoint.owner}.{edge.endpoint.handler}",
                            file=edge.endpoint.file,
                            line=edge.endpoint.line,
                        ),
                    ),
                )
            )


def _check_entity_drift(system: SystemIr, settings: CheckSettings, findings: list[Finding]):
    fields_by_entity: dict[tuple[str, str], list[str]] = {}
    for model in system.context_map.bounded_contexts:
        for entity in model.entities:
            fields_by_entity[(model.service_name, entity.name)] = [
                name for name, _t in entity.fields
            ]
    for match in system.context_map.matches:
        matched_a = {f.field_a for f in match.field_matches}
        matched_b = {f.field_b for f in match.field_matches}
        extra_a = sorted(
            set(fields_by_entity.get((match.service_a, match.entity_a), [])) - matched_a
        )
        extra_b = sorted(
            set(fields_by_entity.get((match.service_b, match.entity_b), [])) - matched_b
        )
        incompatible = sorted(
            (f.field_a, f.field_b) for f in match.field_matches if not f.type_compatible
        )
        if not extra_a and not extra_b and not incompatible:
            continue
        parts = []
        if extra_a:
            parts.append(
                f"{match.service_a}.{match.entity_a} has unmatched field(s) "
                + ", ".join(extra_a)
            )
        if extra_b:
            parts.append(
                f"{match.service_b}.{match.entity_b} has unmatched field(s) "
                + ", ".join(extra_b)
            )
        if incompatible:
            parts.append(
                "type-incompatible pair(s) "
                + ", ".join(f"{a}~{b}" for a, b in incompatible)
            )
        findings.append(
            Finding(
                rule_id=RULE_ENTITY_DRIFT,
                severity=settings.severity(RULE_ENTITY_DRIFT),
                message=(
                    f"entities {match.service_a}.{match.entity_a} and "
                    f"{match.service_b}.{match.entity_b} match at score "
                    f"{match.score:.3f} but their fields drift: " + "; ".join(parts)
                ),
                subjects=(
                    Subject(service=match.service_a, ref=match.entity_a),
                    Subject(service=match.service_b, ref=match.entity_b),
                ),
            )
        )


def _check_ambiguous_edges(system: SystemIr, settings: CheckSettings, findings: list[Finding]):
    groups: dict[tuple, list[CommEdge]] = {}
    for edge in system.comm_edges:
        if edge.ambiguous:
            groups.setdefault(_edge_call_key(edge), []).append(edge)
    for key in sorted(groups):
        edges = groups[key]
        first = edges[0]
        targets = ", ".join(
            f"{e.to_service} {e.matched_url_template} "
            f"({e.endpoint.owner}.{e.endpoint.handler})"
            for e in edges
        )
        findings.append(
            Finding(
                rule_id=RULE_AMBIGUOUS_EDGE,
                severity=settings.severity(RULE_AMBIGUOUS_EDGE),
                message=(
                    f"{first.call.http_method} {first.call.url_template} from "
                    f"{first.call.component}.{first.call.method} ties between "
                    f"{len(edges)} endpoints: {targets}"
                ),
                subjects=(
                    Subject(
                        service=first.from_service,
                        ref=f"{first.call.component}.{first.call.method}",
                        file=first.call.file,
                        line=first.call.line,
                    ),
                ),
            )
        )


def _check_unreachable_endpoints(
    system: SystemIr, settings: CheckSettings, findings: list[Finding]
):
    reached = {
        (
            edge.to_service,
            edge.endpoint.file,
            edge.endpoint.line,
            edge.endpoint.http_method,
            edge.endpoint.handler,
        )
        for edge in system.comm_edges
    }
    for ir in system.services:
        for endpoint in ir.endpoints:
            key = (
                ir.service_name,
                endpoint.span.file,
                endpoint.span.line_start,
                endpoint.http_method,
                endpoint.handler.name,
            )
            if key in reached:
                continue
            findings.append(
                Finding(
                    rule_id=RULE_UNREACHABLE_ENDPOINT,
                    severity=settings.severity(RULE_UNREACHABLE_ENDPOINT),
                    message=(
                        f"endpoint {endpoint.http_method} "
                        f"{' '.join(endpoint.url_templates)} "
                        f"({endpoint.owner}.{endpoint.handler.name}) receives no "
                        f"call from any analyzed service"
                    ),
                    subjects=(
                        Subject(
                            service=ir.service_name,
                            ref=f"{endpoint.owner}.{endpoint.handler.name}",
                            file=endpoint.span.file,
                            line=endpoint.span.line_start,
                        ),
                    ),
                )
            )


def _check_topology(system: SystemIr, settings: CheckSettings, findings: list[Finding]):
    """W04 both ways, only when topology data exists."""
    if not system.topology_edges:
        return
    declared_pairs = {(src, dst) for src, dst, _origin in system.topology_edges}
    comm_pairs = {
        (e.from_service, e.to_service)
        for e in system.comm_edges
        if e.from_service != e.to_service
    }
    event_pairs = {(pub, sub) for pub, sub, _topic in system.event_edges if pub != sub}

    for src, dst in sorted(comm_pairs - declared_pairs):
        findings.append(
            Finding(
                rule_id=RULE_TOPOLOGY_MISMATCH,
                severity=settings.severity(RULE_TOPOLOGY_MISMATCH),
                message=(
                    f"calls from {src} to {dst} were observed but the "
                    f"deployment declares no dependency between them"
                ),
                subjects=(
                    Subject(service=src, ref=f"{src}->{dst}"),
                    Subject(service=dst, ref=f"{src}->{dst}"),
                ),
            )
        )
    for src, dst in sorted(declared_pairs - comm_pairs - event_pairs):
        findings.append(
            Finding(
                rule_id=RULE_TOPOLOGY_MISMATCH,
                severity=settings.severity(RULE_TOPOLOGY_MISMATCH),
                message=(
                    f"the deployment declares {src} -> {dst} but no call or "
                    f"event between them was observed"
                ),
                subjects=(
                    Subject(service=src, ref=f"{src}->{dst}"),
                    Subject(service=dst, ref=f"{src}->{dst}"),
                ),
            )
        )


def detect_cycles(edges: set[tuple[str, str]]) -> list[tuple[str, ...]]:
    """All elementary cycles of a digraph, each rotated so its
    lexicographically smallest node comes first, sorted and deduplicated.

    Every elementary cycle has a unique smallest node; enumerating simple
    paths that start at that node and only visit larger nodes finds each
    cycle exactly once.
    """
    nodes = sorted({a for a, _b in edges} | {b for _a, b in edges})
    adjacency: dict[str, list[str]] = {node: [] for node in nodes}
    for src, dst in sorted(edges):
        adjacency[src].append(dst)

    cycles: list[tuple[str, ...]] = []

    def explore(start: str, current: str, stack: list[str], on_path: set[str]):
        for nxt in adjacency[current]:
            if nxt == start:
                cycles.append(tuple(stack))
            elif nxt > start and nxt not in on_path:
                stack.append(nxt)
                on_path.add(nxt)
                explore(start, nxt, stack, on_path)
                on_path.discard(nxt)
                stack.pop()

    for start in nodes:
        explore(start, start, [start], {start})
    return sorted(cycles)


def _check_cycles(system: SystemIr, settings: CheckSettings, findings: list[Finding]):
    edges = {
        (e.from_service, e.to_service)
        for e in system.comm_edges
        if e.from_service != e.to_service
    }
    for cycle in detect_cycles(edges):
        route = " -> ".join(cycle + (cycle[0],))
        findings.append(
            Finding(
                rule_id=RULE_CYCLIC_DEPENDENCY,
                severity=settings.severity(RULE_CYCLIC_DEPENDENCY),
                message=f"services call each other in a cycle: {route}",
                subjects=tuple(Subject(service=s, ref=route) for s in cycle),
            )
        )


_CHECKS = (
    _check_calls,
    _check_arg_counts,
    _check_entity_drift,
    _check_ambiguous_edges,
    _check_unreachable_endpoints,
    _check_topology,
    _check_cycles,
)


def run_checks(system: SystemIr, settings: CheckSettings | None = None) -> list[Finding]:
    """Evaluate the whole catalog and return findings sorted by
    (rule_id, subjects).

    E01 and the method arm of E02 share one pass (_check_calls) because
    E02 takes precedence on the same call site.
    """
    settings = settings or CheckSettings()
    findings: list[Finding] = []
    for check in _CHECKS:
        check(system, settings, findings)
    findings = [f for f in findings if f.rule_id not in settings.disabled_rules]
    findings.sort(key=Finding.sort_key)
    return findings


def coupling_metrics(system: SystemIr) -> CouplingReport:
    """Afferent/efferent coupling over distinct service pairs from comm and
    event edges; instability = ads/(ais+ads) with 0/0 defined as 0."""
    pairs = {
        (e.from_service, e.to_service)
        for e in system.comm_edges
        if e.from_service != e.to_service
    }
    pairs |= {(pub, sub) for pub, sub, _topic in system.event_edges if pub != sub}

    rows = []
    total = 0.0
    for ir in system.services:
        name = ir.service_name
        ais = sum(1 for src, dst in pairs if dst == name)
        ads = sum(1 for src, dst in pairs if src == name)
        instability = ads / (ais + ads) if (ais + ads) else 0.0
        rows.append(ServiceCoupling(service=name, ais=ais, ads=ads, instability=instability))
        total += instability
    rows.sort(key=lambda r: r.service)
    return CouplingReport(
        services=rows,
        total_services=len(rows),
        total_pairs=len(pairs),
        mean_instability=total / len(rows) if rows else 0.0,
    )


def finding_to_json_obj(finding: Finding) -> dict:
    return {
        "rule_id": finding.rule_id,
        "severity": finding.severity,
        "message": finding.message,
        "subjects": [
            {"service": s.service, "ref": s.ref, "file": s.file, "line": s.line}
            for s in finding.subjects
        ],
    }


def coupling_to_json_obj(report: CouplingReport) -> dict:
    return {
        "services": [
            {
                "service": row.service,
                "ais": row.ais,
                "ads": row.ads,
                "instability": row.instability,
            }
            for row in report.services
        ],
        "total_services": report.total_services,
        "total_pairs": report.total_pairs,
        "mean_instability": report.mean_instability,
    }
