"""Minimal parser for the graph-description files the exporter writes.

Strict on purpose: it accepts exactly the canonical layout (one statement
per line, quoted identifiers, a bracketed attribute list) and raises on
anything else, so a formatting regression in the exporter cannot slip
through as a silently-empty parse.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

_NODE_RE = re.compile(r'^\s*"((?:[^"\\]|\\.)*)";$')
_EDGE_RE = re.compile(
    r'^\s*"((?:[^"\\]|\\.)*)"\s*->\s*"((?:[^"\\]|\\.)*)"\s*(?:\[(.*)\])?;$'
)
_SUBGRAPH_RE = re.compile(r'^\s*subgraph\s+"((?:[^"\\]|\\.)*)"\s*\{$')
_ATTR_RE = re.compile(r'(\w+)=("(?:[^"\\]|\\.)*"|[\w.]+)')


def _unescape(text: str) -> str:
    return text.replace('\\"', '"').replace("\\\\", "\\")


def _parse_attrs(body: str | None) -> dict[str, str]:
    if not body:
        return {}
    attrs: dict[str, str] = {}
    for key, value in _ATTR_RE.findall(body):
        if value.startswith('"'):
            value = _unescape(value[1:-1])
        attrs[key] = value
    return attrs


@dataclass
class DotGraph:
    name: str = ""
    nodes: set[str] = field(default_factory=set)
    edges: list[tuple[str, str, dict[str, str]]] = field(default_factory=list)
    clusters: dict[str, set[str]] = field(default_factory=dict)


def parse_dot(text: str) -> DotGraph:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("digraph ") or not lines[0].endswith("{"):
        raise ValueError("missing digraph header")
    if lines[-1] != "}":
        raise ValueError("missing closing brace")
    graph = DotGraph(name=lines[0][len("digraph "):].rstrip(" {"))
    cluster: str | None = None
    for raw in lines[1:]:
        line = raw.strip()
        if not line:
            continue
        if line == "}":
            cluster = None
            continue
        sub = _SUBGRAPH_RE.match(raw.strip())
        if sub:
            cluster = _unescape(sub.group(1))
            graph.clusters[cluster] = set()
            continue
        if line.startswith(("rankdir=", "node [", "label=")):
            continue
        edge = _EDGE_RE.match(line)
        if edge:
            src, dst = _unescape(edge.group(1)), _unescape(edge.group(2))
            graph.edges.append((src, dst, _parse_attrs(edge.group(3))))
            graph.nodes.add(src)
            graph.nodes.add(dst)
            continue
        node = _NODE_RE.match(line)
        if node:
            name = _unescape(node.group(1))
            graph.nodes.add(name)
            if cluster is not None:
                graph.clusters[cluster].add(name)
            continue
        raise ValueError(f"unparseable statement: {line!r}")
    return graph
