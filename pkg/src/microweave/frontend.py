"""Frontends that produce the language-agnostic tree from service codebases.

Two heuristic, annotation-driven extractors cover Spring-style and
JAX-RS-style codebases; a passthrough frontend accepts pre-built
``.laast.json`` files from external parsers.  Extraction is deliberately
component-level: declarations, annotations, parameters, and calls.  It never
aborts on a bad input file; every anomaly becomes a warning or a skip.
"""

from __future__ import annotations

import re
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path

from microweave.errors import MicroweaveError
from microweave.laast import LaastNode, NodeKind, SourceSpan, load_laast, walk

SPRING_LIKE = "SpringLike"
JAXRS_LIKE = "JaxRsLike"
LAAST_PASSTHROUGH = "LaastPassthrough"
CONVENTIONS = (SPRING_LIKE, JAXRS_LIKE, LAAST_PASSTHROUGH)

DEFAULT_INCLUDE_GLOBS = ("**/*.java",)
PASSTHROUGH_INCLUDE_GLOBS = ("**/*.laast.json",)

#: Call-node attribute telling later stages what a Call represents.
CALL_KIND_ATTR = "call_kind"
CALL_KIND_REMOTE = "remote"
CALL_KIND_EVENT_PUBLISH = "event_publish"
CALL_KIND_LOCAL = "local"

#: Single-segment wildcard standing in for a URL fragment that is not a
#: string literal in the source.
URL_WILDCARD = "{*}"

HTTP_UNKNOWN = "UNKNOWN"


@dataclass
class SourceTree:
    """One microservice codebase to extract."""

    service_name: str
    root_dir: str | Path
    include_globs: tuple[str, ...] = DEFAULT_INCLUDE_GLOBS
    convention: str = SPRING_LIKE


@dataclass
class CallIdioms:
    """Client-call spellings the extractor recognizes.

    ``template_receivers`` maps a receiver identifier (e.g. ``restTemplate``)
    to its method-name -> HTTP-method table, where the special value
    ``EXCHANGE`` means the HTTP method is read from the second argument.
    ``fluent_receivers`` are builder-style clients (``webClient.get().uri(..)``)
    and ``target_receivers`` JAX-RS style clients (``client.target(..)``).
    """

    template_receivers: dict[str, dict[str, str]]
    fluent_receivers: frozenset[str]
    target_receivers: frozenset[str]
    publish_receivers: dict[str, frozenset[str]]
    subscribe_annotations: dict[str, str]

    def all_client_receivers(self) -> frozenset[str]:
        return frozenset(
            set(self.template_receivers)
            | self.fluent_receivers
            | self.target_receivers
            | set(self.publish_receivers)
        )


_REST_TEMPLATE_METHODS = {
    "getForObject": "GET",
    "getForEntity": "GET",
    "postForObject": "POST",
    "postForEntity": "POST",
    "put": "PUT",
    "delete": "DELETE",
    "exchange": "EXCHANGE",
}


def default_idioms() -> CallIdioms:
    return CallIdioms(
        template_receivers={"restTemplate": dict(_REST_TEMPLATE_METHODS)},
        fluent_receivers=frozenset({"webClient"}),
        target_receivers=frozenset({"client"}),
        publish_receivers={
            "kafkaTemplate": frozenset({"send"}),
            "rabbitTemplate": frozenset({"convertAndSend"}),
        },
        subscribe_annotations={"KafkaListener": "topics", "RabbitListener": "queues"},
    )


def extend_idioms(
    base: CallIdioms,
    rest_template_like: list[str] | tuple[str, ...] = (),
    web_client_like: list[str] | tuple[str, ...] = (),
    jaxrs_client_like: list[str] | tuple[str, ...] = (),
    publishers: dict[str, list[str]] | None = None,
    subscribe_annotations: dict[str, str] | None = None,
) -> CallIdioms:
    """Add extra receiver names / annotations from the run configuration."""
    templates = dict(base.template_receivers)
    for name in rest_template_like:
        templates[name] = dict(_REST_TEMPLATE_METHODS)
    publish = dict(base.publish_receivers)
    for name, methods in (publishers or {}).items():
        publish[name] = frozenset(methods)
    subs = dict(base.subscribe_annotations)
    subs.update(subscribe_annotations or {})
    return CallIdioms(
        template_receivers=templates,
        fluent_receivers=base.fluent_receivers | frozenset(web_client_like),
        target_receivers=base.target_receivers | frozenset(jaxrs_client_like),
        publish_receivers=publish,
        subscribe_annotations=subs,
    )


@dataclass
class ExtractionReport:
    """What the extractor did for one service tree."""

    files_scanned: int = 0
    files_skipped: list[tuple[str, str]] = field(default_factory=list)
    nodes_emitted: int = 0
    warnings: list[tuple[str, int, str]] = field(default_factory=list)

    def to_json_obj(self) -> dict:
        return {
            "files_scanned": self.files_scanned,
            "files_skipped": [{"file": f, "reason": r} for f, r in self.files_skipped],
            "nodes_emitted": self.nodes_emitted,
            "warnings": [{"file": f, "line": n, "message": m} for f, n, m in self.warnings],
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ExtractionReport":
        return cls(
            files_scanned=obj.get("files_scanned", 0),
            files_skipped=[(s["file"], s["reason"]) for s in obj.get("files_skipped", [])],
            nodes_emitted=obj.get("nodes_emitted", 0),
            warnings=[(w["file"], w["line"], w["message"]) for w in obj.get("warnings", [])],
        )


# --------------------------------------------------------------------------
# text preparation


def _mask_comments(text: str) -> str:
    """Blank out // and /* */ comments, preserving length and newlines."""
    out = list(text)
    i, n = 0, len(text)
    state = "code"  # code | line | block | str | char
    while i < n:
        c = text[i]
        nxt = text[i + 1] if i + 1 < n else ""
        if state == "code":
            if c == "/" and nxt == "/":
                state = "line"
                out[i] = out[i + 1] = " "
                i += 2
                continue
            if c == "/" and nxt == "*":
                state = "block"
                out[i] = out[i + 1] = " "
                i += 2
                continue
            if c == '"':
                state = "str"
            elif c == "'":
                state = "char"
            i += 1
        elif state == "line":
            if c == "\n":
                state = "code"
            else:
                out[i] = " "
            i += 1
        elif state == "block":
            if c == "*" and nxt == "/":
                out[i] = out[i + 1] = " "
                state = "code"
                i += 2
                continue
            if c != "\n":
                out[i] = " "
            i += 1
        elif state == "str":
            if c == "\\":
                i += 2
                continue
            if c == '"' or c == "\n":
                state = "code"
            i += 1
        else:  # char literal
            if c == "\\":
                i += 2
                continue
            if c == "'" or c == "\n":
                state = "code"
            i += 1
    return "".join(out)


def _mask_strings(text: str) -> str:
    """Blank out string/char literal contents (quotes kept), preserving length."""
    out = list(text)
    i, n = 0, len(text)
    state = "code"
    while i < n:
        c = text[i]
        if state == "code":
            if c == '"':
                state = "str"
            elif c == "'":
                state = "char"
            i += 1
        elif state == "str":
            if c == "\\" and i + 1 < n:
                out[i] = out[i + 1] = " "
                i += 2
                continue
            if c in ('"', "\n"):
                state = "code"
            else:
                out[i] = " "
            i += 1
        else:
            if c == "\\" and i + 1 < n:
                out[i] = out[i + 1] = " "
                i += 2
                continue
            if c in ("'", "\n"):
                state = "code"
            else:
                out[i] = " "
            i += 1
    return "".join(out)


def _split_top_level(text: str, sep: str) -> list[str]:
    """Split on a separator character, ignoring separators nested inside
    brackets or string literals."""
    parts: list[str] = []
    depth = 0
    in_str = False
    cur: list[str] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if in_str:
            if c == "\\":
                cur.append(text[i : i + 2])
                i += 2
                continue
            if c == '"':
                in_str = False
            cur.append(c)
        elif c == '"':
            in_str = True
            cur.append(c)
        elif c in "([{":
            depth += 1
            cur.append(c)
        elif c in ")]}":
            depth -= 1
            cur.append(c)
        elif c == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(c)
        i += 1
    parts.append("".join(cur))
    return parts


def _balanced_parens(text: str, open_idx: int) -> int | None:
    """Given the index of ``(`` in ``text``, return the index just past the
    matching ``)``, honoring nested parens and string literals."""
    depth = 0
    in_str = False
    i, n = open_idx, len(text)
    while i < n:
        c = text[i]
        if in_str:
            if c == "\\":
                i += 2
                continue
            if c == '"':
                in_str = False
        elif c == '"':
            in_str = True
        elif c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
            if depth == 0:
                return i + 1
        i += 1
    return None


_STRING_LIT_RE = re.compile(r'^"((?:[^"\\]|\\.)*)"$')


def _unquote(text: str) -> str | None:
    m = _STRING_LIT_RE.match(text.strip())
    if m is None:
        return None
    return m.group(1).replace('\\"', '"').replace("\\\\", "\\")


def _split_args(body: str) -> list[str]:
    return [a.strip() for a in _split_top_level(body, ",") if a.strip()] if body.strip() else []


def _encode_annotation_value(text: str) -> str:
    """Render one annotation argument value as its flat string form.

    String literals lose their quotes; ``{a, b}`` arrays join with ``|``;
    dotted enum references keep only the last segment (``RequestMethod.GET``
    becomes ``GET``); class literals and anything else stay verbatim.
    """
    text = text.strip()
    lit = _unquote(text)
    if lit is not None:
        return lit
    if text.startswith("{") and text.endswith("}"):
        inner = text[1:-1]
        return "|".join(
            _encode_annotation_value(p) for p in _split_top_level(inner, ",") if p.strip()
        )
    if text.endswith(".class"):
        return text
    if re.fullmatch(r"[\w$]+(?:\.[\w$]+)+", text):
        return text.rsplit(".", 1)[1]
    return text


_ANNOTATION_RE = re.compile(r"@\s*([A-Za-z_][\w$]*)")


def _annotation_extents(window: str) -> list[tuple[int, int, str, str | None]]:
    """``(start, end, name, args text or None)`` for each top-level
    annotation occurrence; nested ones are folded into their parent."""
    extents: list[tuple[int, int, str, str | None]] = []
    for m in _ANNOTATION_RE.finditer(window):
        if m.group(1) == "interface":
            continue
        if extents and m.start() < extents[-1][1]:
            continue
        rest = window[m.end() :]
        stripped = rest.lstrip()
        if not stripped.startswith("("):
            extents.append((m.start(), m.end(), m.group(1), None))
            continue
        open_idx = m.end() + (len(rest) - len(stripped))
        close = _balanced_parens(window, open_idx)
        if close is None:
            continue  # reported separately as an error
        extents.append((m.start(), close, m.group(1), window[open_idx + 1 : close - 1].strip()))
    return extents


def _annotation_errors(window: str) -> list[tuple[str, str]]:
    """Annotations whose argument list never closes inside the window."""
    errors: list[tuple[str, str]] = []
    for m in _ANNOTATION_RE.finditer(window):
        if m.group(1) == "interface":
            continue
        rest = window[m.end() :]
        stripped = rest.lstrip()
        if stripped.startswith("("):
            open_idx = m.end() + (len(rest) - len(stripped))
            if _balanced_parens(window, open_idx) is None:
                errors.append((m.group(1), f"unparseable arguments for @{m.group(1)}"))
    return errors


def recognize_annotation(window: str) -> tuple[list[tuple[str, dict[str, str]]], list[str]]:
    """Recognize every ``@Name``/``@Name(...)`` occurrence in a text window.

    Returns the recognized ``(name, argument map)`` pairs plus warning
    messages; an annotation whose argument body cannot be parsed still
    yields its name, with empty arguments.
    """
    found: list[tuple[str, dict[str, str]]] = []
    warnings: list[str] = []
    for _start, _end, name, args_text in _annotation_extents(window):
        args: dict[str, str] = {}
        ok = True
        for part in _split_top_level(args_text or "", ","):
            part = part.strip()
            if not part:
                continue
            kv = _split_top_level(part, "=")
            if len(kv) == 2 and re.fullmatch(r"[\w$]+", kv[0].strip()):
                args[kv[0].strip()] = _encode_annotation_value(kv[1])
            elif len(kv) == 1:
                args["value"] = _encode_annotation_value(part)
            else:
                warnings.append(f"unparseable arguments for @{name}")
                args = {}
                ok = False
                break
        found.append((name, args if ok else {}))
    for name, msg in _annotation_errors(window):
        warnings.append(msg)
        found.append((name, {}))
    return found, warnings


# --------------------------------------------------------------------------
# remote-call / event recognition


def _url_template_from_expr(expr: str) -> tuple[str, bool]:
    """Build a URL template from a (possibly concatenated) argument expression.

    Literal fragments keep their text; every non-literal operand becomes the
    single-segment wildcard.  Returns ``(template, had_literal)``.
    """
    fragments: list[str] = []
    had_literal = False
    for part in _split_top_level(expr, "+"):
        part = part.strip()
        if not part:
            continue
        lit = _unquote(part)
        if lit is not None:
            fragments.append(lit)
            had_literal = True
        else:
            fragments.append(URL_WILDCARD)
    if not fragments or not had_literal:
        return URL_WILDCARD, False
    return "".join(fragments), True


def _call_node(name: str, attrs: dict[str, str], span: SourceSpan) -> LaastNode:
    return LaastNode(kind=NodeKind.CALL, name=name, attributes=attrs, span=span)


_CHAIN_LINK_RE = re.compile(r"\s*\.\s*([A-Za-z_][\w$]*)\s*")


def _read_chain(text: str, start: int) -> list[tuple[str, list[str], int]]:
    """Read a fluent chain ``.a(args).b(args)...`` starting at ``start``.

    Returns ``(method, argument list, end offset)`` per link.
    """
    links: list[tuple[str, list[str], int]] = []
    pos = start
    while True:
        m = _CHAIN_LINK_RE.match(text, pos)
        if m is None or m.end() >= len(text) or text[m.end()] != "(":
            break
        close = _balanced_parens(text, m.end())
        if close is None:
            break
        links.append((m.group(1), _split_args(text[m.end() + 1 : close - 1]), close))
        pos = close
    return links


_HTTP_ENUM_RE = re.compile(r"(?:[\w$]+\.)*(GET|POST|PUT|DELETE|PATCH|HEAD)")


class _RemoteCallScanner:
    """Finds client-idiom calls in prepared (comment-masked) text."""

    def __init__(self, idioms: CallIdioms):
        self.idioms = idioms
        recv = sorted(
            set(idioms.template_receivers)
            | set(idioms.fluent_receivers)
            | set(idioms.target_receivers)
        )
        self._head_re = (
            re.compile(
                r"(?<![\w.$])(?:this\s*\.\s*)?("
                + "|".join(re.escape(r) for r in recv)
                + r")\s*\.\s*([A-Za-z_][\w$]*)\s*\("
            )
            if recv
            else None
        )
        pub = sorted(idioms.publish_receivers)
        self._pub_re = (
            re.compile(
                r"(?<![\w.$])(?:this\s*\.\s*)?("
                + "|".join(re.escape(r) for r in pub)
                + r")\s*\.\s*([A-Za-z_][\w$]*)\s*\("
            )
            if pub
            else None
        )

    def find_remote(self, text: str, line_of) -> tuple[list[LaastNode], list[tuple[int, str]]]:
        """All remote calls in ``text``; warnings as ``(offset, message)``."""
        calls: list[LaastNode] = []
        warnings: list[tuple[int, str]] = []
        if self._head_re is None:
            return calls, warnings
        for m in self._head_re.finditer(text):
            receiver, method = m.group(1), m.group(2)
            open_idx = m.end() - 1
            close = _balanced_parens(text, open_idx)
            if close is None:
                continue
            args = _split_args(text[open_idx + 1 : close - 1])

            if receiver in self.idioms.template_receivers:
                table = self.idioms.template_receivers[receiver]
                if method not in table or not args:
                    continue
                http = table[method]
                template, clean = _url_template_from_expr(args[0])
                if http == "EXCHANGE":
                    http = HTTP_UNKNOWN
                    if len(args) >= 2:
                        enum = _HTTP_ENUM_RE.fullmatch(args[1])
                        if enum:
                            http = enum.group(1)
                if not clean:
                    warnings.append(
                        (m.start(), f"unparseable URL expression in {receiver}.{method}(...)")
                    )
                calls.append(
                    _call_node(
                        method,
                        {
                            CALL_KIND_ATTR: CALL_KIND_REMOTE,
                            "http_method": http,
                            "url_template": template,
                            "arg_count": str(len(args)),
                        },
                        SourceSpan("<input>", line_of(m.start()), line_of(close - 1)),
                    )
                )
            elif receiver in self.idioms.fluent_receivers:
                if method not in ("get", "post", "put", "delete", "patch", "head", "method"):
                    continue
                http = method.upper() if method != "method" else HTTP_UNKNOWN
                if method == "method" and args:
                    enum = _HTTP_ENUM_RE.fullmatch(args[0])
                    if enum:
                        http = enum.group(1)
                uri_args: list[str] = []
                body_args: list[str] = []
                end = close
                for link, largs, link_end in _read_chain(text, close):
                    end = link_end
                    if link == "uri" and not uri_args:
                        uri_args = largs
                    elif link in ("body", "bodyValue"):
                        body_args.extend(largs)
                if uri_args:
                    template, clean = _url_template_from_expr(uri_args[0])
                else:
                    template, clean = URL_WILDCARD, False
                if not clean:
                    warnings.append(
                        (m.start(), f"unparseable URL expression in {receiver}.{method}() chain")
                    )
                calls.append(
                    _call_node(
                        method,
                        {
                            CALL_KIND_ATTR: CALL_KIND_REMOTE,
                            "http_method": http,
                            "url_template": template,
                            "arg_count": str(len(uri_args) + len(body_args)),
                        },
                        SourceSpan("<input>", line_of(m.start()), line_of(end - 1)),
                    )
                )
            elif receiver in self.idioms.target_receivers:
                if method != "target" or not args:
                    continue
                template, clean = _url_template_from_expr(args[0])
                arg_count = len(args)
                http = HTTP_UNKNOWN
                end = close
                for link, largs, link_end in _read_chain(text, close):
                    end = link_end
                    if link == "path" and largs:
                        part, part_clean = _url_template_from_expr(largs[0])
                        template = template.rstrip("/") + "/" + part.lstrip("/")
                        clean = clean and part_clean
                    elif link in ("get", "post", "put", "delete", "patch"):
                        http = link.upper()
                        arg_count += len(largs)
                if not clean:
                    warnings.append(
                        (m.start(), f"unparseable URL expression in {receiver}.target(...) chain")
                    )
                calls.append(
                    _call_node(
                        "target",
                        {
                            CALL_KIND_ATTR: CALL_KIND_REMOTE,
                            "http_method": http,
                            "url_template": template,
                            "arg_count": str(arg_count),
                        },
                        SourceSpan("<input>", line_of(m.start()), line_of(end - 1)),
                    )
                )
        return calls, warnings

    def find_publish(self, text: str, line_of) -> tuple[list[LaastNode], list[tuple[int, str]]]:
        """Event-publish calls (broker client idioms) in ``text``."""
        calls: list[LaastNode] = []
        warnings: list[tuple[int, str]] = []
        if self._pub_re is None:
            return calls, warnings
        for m in self._pub_re.finditer(text):
            receiver, method = m.group(1), m.group(2)
            if method not in self.idioms.publish_receivers[receiver]:
                continue
            open_idx = m.end() - 1
            close = _balanced_parens(text, open_idx)
            if close is None:
                continue
            args = _split_args(text[open_idx + 1 : close - 1])
            topic = _unquote(args[0]) if args else None
            if topic is None:
                topic = URL_WILDCARD
                warnings.append((m.start(), f"non-literal topic in {receiver}.{method}(...)"))
            calls.append(
                _call_node(
                    method,
                    {
                        CALL_KIND_ATTR: CALL_KIND_EVENT_PUBLISH,
                        "topic": topic,
                        "arg_count": str(len(args)),
                    },
                    SourceSpan("<input>", line_of(m.start()), line_of(close - 1)),
                )
            )
        return calls, warnings


def recognize_remote_call(statement: str, idioms: CallIdioms | None = None) -> LaastNode | None:
    """Recognize the first conventional remote-call idiom in a statement.

    Returns a Call node carrying ``http_method``, ``url_template`` and
    ``arg_count`` attributes, or None when the statement holds no recognized
    client idiom (plain local calls are not remote).
    """
    scanner = _RemoteCallScanner(idioms or default_idioms())
    masked = _mask_comments(statement)
    calls, _ = scanner.find_remote(masked, lambda pos: 1 + masked.count("\n", 0, pos))
    return calls[0] if calls else None


# --------------------------------------------------------------------------
# declaration scanning

_JAVA_KEYWORDS = {
    "if", "for", "while", "switch", "catch", "return", "new", "synchronized",
    "throw", "throws", "assert", "this", "super", "do", "else", "try",
    "finally", "break", "continue", "instanceof", "case", "package", "import",
}

_MODIFIER_WORDS = {
    "public", "private", "protected", "static", "final", "abstract", "default",
    "native", "synchronized", "transient", "volatile", "strictfp",
}
_MODIFIER = "(?:" + "|".join(sorted(_MODIFIER_WORDS)) + ")"
_TYPE_PAT = r"[A-Za-z_][\w$]*(?:\s*\.\s*[\w$]+)*(?:\s*<[^;{}()]*>)?(?:\s*\[\s*\])*"

_TYPE_DECL_RE = re.compile(
    rf"^\s*(?:{_MODIFIER}\s+)*(class|interface|enum|record)\s+([A-Za-z_][\w$]*)"
)
_METHOD_HEAD_RE = re.compile(
    rf"^\s*(?:{_MODIFIER}\s+)*(?:<[^>]*>\s*)?({_TYPE_PAT})\s+([A-Za-z_][\w$]*)\s*\("
)
_FIELD_RE = re.compile(rf"^\s*(?:{_MODIFIER}\s+)*({_TYPE_PAT})\s+([A-Za-z_][\w$]*)\s*(?:=|;)")
_LOCAL_CALL_RE = re.compile(
    r"(?<![\w.$@])(?:([A-Za-z_][\w$]*)\s*\.\s*)?([A-Za-z_][\w$]*)\s*\("
)


class _JavaLikeParser:
    """Heuristic declaration scanner for one source file.

    Works on two aligned views of the file: comment-masked text (string
    literals intact, for value extraction) and additionally string-masked
    text (for structural scans, so braces or parens inside literals never
    confuse depth tracking).  Both preserve offsets and line breaks.
    Consumed annotations are blanked out of both views so a declaration
    sharing their line is still seen.
    """

    def __init__(self, text: str, relpath: str, idioms: CallIdioms):
        self.relpath = relpath
        self.text = _mask_comments(text)
        self.struct = _mask_strings(self.text)
        self.warnings: list[tuple[str, int, str]] = []
        self.scanner = _RemoteCallScanner(idioms)
        self._line_starts = [0]
        for i, ch in enumerate(self.text):
            if ch == "\n":
                self._line_starts.append(i + 1)
        self._refresh_lines()

    def _refresh_lines(self) -> None:
        self.lines = self.struct.split("\n")
        self._depth_at = []
        depth = 0
        for line in self.lines:
            self._depth_at.append(depth)
            depth += line.count("{") - line.count("}")

    def _line_of(self, offset: int) -> int:
        return bisect_right(self._line_starts, offset)

    def _offset_of_line(self, lineno: int) -> int:
        return self._line_starts[lineno - 1]

    def _warn(self, line: int, message: str) -> None:
        self.warnings.append((self.relpath, line, message))

    def _mask_range(self, start: int, end: int) -> None:
        """Blank chars [start, end) in both views, keeping newlines."""
        masked = "".join(c if c == "\n" else " " for c in self.text[start:end])
        self.text = self.text[:start] + masked + self.text[end:]
        self.struct = self.struct[:start] + masked + self.struct[end:]
        self._refresh_lines()

    def _find_close_brace(self, open_offset: int) -> int | None:
        depth = 0
        for i in range(open_offset, len(self.struct)):
            c = self.struct[i]
            if c == "{":
                depth += 1
            elif c == "}":
                depth -= 1
                if depth == 0:
                    return i
        return None

    def _span(self, line_start: int, line_end: int) -> SourceSpan:
        return SourceSpan(
            file=self.relpath, line_start=line_start, line_end=max(line_start, line_end)
        )

    def parse(self) -> LaastNode:
        n_lines = len(self.lines)
        unit = LaastNode(
            kind=NodeKind.COMPILATION_UNIT,
            name=self.relpath,
            span=self._span(1, max(1, n_lines)),
        )
        i = 1
        pending: list[LaastNode] = []
        while i <= n_lines:
            if self._depth_at[i - 1] != 0:
                i += 1
                continue
            if self._consume_annotations(i, pending):
                continue
            m = _TYPE_DECL_RE.match(self.lines[i - 1])
            if m:
                i = self._parse_type(i, m, pending, unit)
                pending = []
                continue
            i += 1
        return unit

    def _consume_annotations(self, lineno: int, pending: list[LaastNode]) -> bool:
        """If the line begins with an annotation, parse the (possibly
        multi-line) window into ``pending``, blank those characters out of
        the working text, and return True so the caller re-examines the
        line (now annotation-free)."""
        struct_line = self.lines[lineno - 1]
        if not struct_line.lstrip().startswith("@"):
            return False
        end = lineno
        window_struct = struct_line
        while (
            end < len(self.lines)
            and window_struct.count("(") > window_struct.count(")")
            and end - lineno < 20
        ):
            end += 1
            window_struct += "\n" + self.lines[end - 1]
        extents = _annotation_extents(window_struct)
        start_off = self._offset_of_line(lineno)
        window_text = self.text[start_off : start_off + len(window_struct)]
        if not extents:
            errors = _annotation_errors(window_struct)
            if not errors:
                return False
            for name, msg in errors:
                self._warn(lineno, msg)
                pending.append(
                    LaastNode(kind=NodeKind.ANNOTATION, name=name, span=self._span(lineno, end))
                )
            self._mask_range(start_off, start_off + len(window_struct))
            return True
        for ext_start, ext_end, _name, _args in extents:
            found, warns = recognize_annotation(window_text[ext_start:ext_end])
            for msg in warns:
                self._warn(lineno, msg)
            for name, args in found[:1]:
                pending.append(
                    LaastNode(
                        kind=NodeKind.ANNOTATION,
                        name=name,
                        attributes=dict(args),
                        span=self._span(
                            self._line_of(start_off + ext_start),
                            self._line_of(start_off + max(ext_start, ext_end - 1)),
                        ),
                    )
                )
        last_end = max(e for _s, e, _n, _a in extents)
        self._mask_range(start_off, start_off + last_end)
        return True

    def _parse_type(
        self, lineno: int, m: re.Match, pending: list[LaastNode], unit: LaastNode
    ) -> int:
        type_kind, name = m.group(1), m.group(2)
        head_off = self._offset_of_line(lineno)
        open_off = self.struct.find("{", head_off)
        if open_off == -1:
            self._warn(lineno, f"type {name} has no body")
            return lineno + 1
        close_off = self._find_close_brace(open_off)
        if close_off is None:
            self._warn(lineno, f"unbalanced braces in type {name}")
            close_off = len(self.struct) - 1
        head_struct = self.struct[head_off:open_off]
        attrs = {"type_kind": type_kind}
        em = re.search(r"\bextends\s+(.+?)(?:\bimplements\b|$)", head_struct, re.S)
        if em and em.group(1).strip():
            attrs["extends"] = " ".join(em.group(1).split()).strip(" ,")
        im = re.search(r"\bimplements\s+(.+)$", head_struct, re.S)
        if im and im.group(1).strip():
            attrs["implements"] = " ".join(im.group(1).split()).strip(" ,")
        node = LaastNode(
            kind=NodeKind.TYPE_DECL,
            name=name,
            attributes=attrs,
            children=list(pending),
            span=self._span(lineno, self._line_of(close_off)),
        )
        self._parse_members(node, self._line_of(open_off), self._line_of(close_off), name)
        self._resolve_local_calls(node)
        unit.children.append(node)
        return self._line_of(close_off) + 1

    @staticmethod
    def _resolve_local_calls(type_node: LaastNode) -> None:
        """Keep a local Call only when it resolves within this type: a bare
        name defined as a method here, or a receiver that is a field here."""
        field_names = {c.name for c in type_node.children if c.kind == NodeKind.FIELD_DECL}
        method_names = {c.name for c in type_node.children if c.kind == NodeKind.METHOD_DECL}

        def keep(node: LaastNode) -> bool:
            if node.kind != NodeKind.CALL:
                return True
            if node.attributes.get(CALL_KIND_ATTR) != CALL_KIND_LOCAL:
                return True
            receiver = node.attributes.get("receiver")
            if receiver is None:
                return node.name in method_names
            return receiver in field_names

        for member in type_node.children:
            if member.kind == NodeKind.METHOD_DECL:
                member.children = [c for c in member.children if keep(c)]

    def _parse_members(
        self, type_node: LaastNode, open_line: int, close_line: int, type_name: str
    ) -> None:
        open_off = self.struct.find("{", self._offset_of_line(open_line))
        body_depth = (
            self._depth_at[open_line - 1]
            + self.struct[self._offset_of_line(open_line) : open_off + 1].count("{")
        )
        i = open_line + 1
        pending: list[LaastNode] = []
        while i < close_line:
            if self._depth_at[i - 1] != body_depth:
                i += 1
                continue
            struct_line = self.lines[i - 1]
            if not struct_line.strip():
                i += 1
                continue
            if self._consume_annotations(i, pending):
                continue
            sig_end = self._signature_extent(i, close_line)
            if sig_end is not None:
                sig_struct = "\n".join(self.lines[i - 1 : sig_end])
                mm = _METHOD_HEAD_RE.match(sig_struct)
                if mm is not None:
                    head_type = mm.group(1).split("<")[0].strip()
                    if (
                        head_type in _MODIFIER_WORDS
                        or head_type in _JAVA_KEYWORDS
                        or mm.group(2) in _JAVA_KEYWORDS
                    ):
                        mm = None
                if mm is not None:
                    i = self._parse_method(i, mm, pending, type_node)
                    pending = []
                    continue
                if re.match(rf"^\s*(?:{_MODIFIER}\s+)*{re.escape(type_name)}\s*\(", sig_struct):
                    # constructor: no endpoint semantics, skip its body
                    i = self._skip_past(sig_end)
                    pending = []
                    continue
            fm = _FIELD_RE.match(struct_line)
            if (
                fm
                and fm.group(2) not in _JAVA_KEYWORDS
                and fm.group(1).split("<")[0].strip() not in _JAVA_KEYWORDS
            ):
                type_node.children.append(
                    LaastNode(
                        kind=NodeKind.FIELD_DECL,
                        name=fm.group(2),
                        attributes={"declared_type": " ".join(fm.group(1).split())},
                        children=list(pending),
                        span=self._span(i, i),
                    )
                )
                pending = []
                i += 1
                continue
            pending = []
            i += 1

    def _signature_extent(self, lineno: int, limit: int) -> int | None:
        """Last line of a declaration head starting at ``lineno``: the line
        carrying ``{`` or ``;`` at paren depth 0.  None when the line has no
        call-shaped head."""
        if "(" not in self.lines[lineno - 1]:
            return None
        depth = 0
        for j in range(lineno, min(limit, lineno + 30) + 1):
            for ch in self.lines[j - 1]:
                if ch == "(":
                    depth += 1
                elif ch == ")":
                    depth -= 1
                elif depth == 0 and ch in "{;":
                    return j
        return None

    def _skip_past(self, sig_end: int) -> int:
        """Next line after the body (or bare terminator) ending a head whose
        last signature line is ``sig_end``."""
        off = self._offset_of_line(sig_end)
        for k in range(off, len(self.struct)):
            c = self.struct[k]
            if c == ";":
                return self._line_of(k) + 1
            if c == "{":
                close = self._find_close_brace(k)
                if close is None:
                    return len(self.lines) + 1
                return self._line_of(close) + 1
        return sig_end + 1

    def _parse_method(
        self, start_line: int, mm: re.Match, pending: list[LaastNode], type_node: LaastNode
    ) -> int:
        return_type = " ".join(mm.group(1).split())
        name = mm.group(2)
        sig_off = self._offset_of_line(start_line)
        paren_off = self.struct.find("(", sig_off)
        paren_close = _balanced_parens(self.struct, paren_off)
        params_raw = self.text[paren_off + 1 : paren_close - 1] if paren_close else ""

        method = LaastNode(
            kind=NodeKind.METHOD_DECL,
            name=name,
            attributes={"return_type": return_type},
            children=list(pending),
            span=self._span(start_line, start_line),
        )
        for param in _split_top_level(params_raw, ","):
            param = param.strip()
            if not param:
                continue
            anns, warns = recognize_annotation(param)
            for msg in warns:
                self._warn(start_line, msg)
            bare = param
            for ext_start, ext_end, _n, _a in reversed(_annotation_extents(param)):
                bare = bare[:ext_start] + bare[ext_end:]
            bare = " ".join(bare.split())
            pm = re.match(rf"^(?:final\s+)?({_TYPE_PAT})\s+([A-Za-z_][\w$]*)$", bare)
            if pm is None:
                self._warn(start_line, f"unparseable parameter {param!r} in {name}")
                continue
            method.children.append(
                LaastNode(
                    kind=NodeKind.PARAM,
                    name=pm.group(2),
                    attributes={"declared_type": " ".join(pm.group(1).split())},
                    children=[
                        LaastNode(
                            kind=NodeKind.ANNOTATION,
                            name=an,
                            attributes=dict(aa),
                            span=self._span(start_line, start_line),
                        )
                        for an, aa in anns
                    ],
                    span=self._span(start_line, start_line),
                )
            )

        # find the character ending the head: `{` opens a body, `;` does not
        end_line = start_line
        term_off = None
        search_from = paren_close if paren_close else sig_off
        for k in range(search_from, len(self.struct)):
            if self.struct[k] in "{;":
                term_off = k
                break
        if term_off is not None:
            end_line = self._line_of(term_off)
            if self.struct[term_off] == "{":
                close_off = self._find_close_brace(term_off)
                if close_off is None:
                    close_off = len(self.struct) - 1
                end_line = self._line_of(close_off)
                self._scan_body(method, term_off + 1, close_off)
        method.span = self._span(start_line, end_line)
        type_node.children.append(method)
        return end_line + 1

    def _scan_body(self, method: LaastNode, start_off: int, end_off: int) -> None:
        body_text = self.text[start_off:end_off]
        body_struct = self.struct[start_off:end_off]

        def line_of(pos: int) -> int:
            return self._line_of(start_off + pos)

        remote, warns = self.scanner.find_remote(body_text, line_of)
        for pos, msg in warns:
            self._warn(line_of(pos), msg)
        publish, warns = self.scanner.find_publish(body_text, line_of)
        for pos, msg in warns:
            self._warn(line_of(pos), msg)
        calls = list(remote) + list(publish)

        client_receivers = self.scanner.idioms.all_client_receivers()
        for m in _LOCAL_CALL_RE.finditer(body_struct):
            receiver, callee = m.group(1), m.group(2)
            if receiver == "this":
                receiver = None
            if callee in _JAVA_KEYWORDS or (receiver and receiver in _JAVA_KEYWORDS):
                continue
            if receiver in client_receivers:
                continue
            if body_struct[: m.start()].rstrip().endswith("new"):
                continue
            lineno = line_of(m.start())
            attrs = {CALL_KIND_ATTR: CALL_KIND_LOCAL}
            if receiver:
                attrs["receiver"] = receiver
            calls.append(_call_node(callee, attrs, SourceSpan("<input>", lineno, lineno)))
        calls.sort(key=lambda c: (c.span.line_start, c.span.line_end, c.name or ""))
        for call in calls:
            call.span = SourceSpan(self.relpath, call.span.line_start, call.span.line_end)
            method.children.append(call)


# --------------------------------------------------------------------------
# whole-tree extraction


def _matched_files(root: Path, include_globs: tuple[str, ...]) -> list[Path]:
    seen: set[Path] = set()
    for pattern in include_globs:
        for path in root.glob(pattern):
            if path.is_file():
                seen.add(path)
    return sorted(seen, key=lambda p: p.relative_to(root).as_posix())


def extract(tree: SourceTree, idioms: CallIdioms | None = None) -> tuple[LaastNode, ExtractionReport]:
    """Extract one service tree into a language-agnostic tree.

    The root is a synthetic CompilationUnit named after the service, holding
    one CompilationUnit child per scanned file in sorted path order, so the
    result is deterministic for a given tree.  Bad files are skipped with a
    warning; extraction itself never fails on file content.
    """
    if not tree.service_name:
        raise MicroweaveError("service_name must be non-empty")
    root_dir = Path(tree.root_dir)
    if not root_dir.is_dir():
        raise MicroweaveError(f"root_dir {root_dir} does not exist")
    if tree.convention not in CONVENTIONS:
        raise MicroweaveError(f"unknown convention {tree.convention!r}")
    idioms = idioms or default_idioms()
    globs = tuple(tree.include_globs)
    if tree.convention == LAAST_PASSTHROUGH and globs == DEFAULT_INCLUDE_GLOBS:
        globs = PASSTHROUGH_INCLUDE_GLOBS

    report = ExtractionReport()
    root = LaastNode(kind=NodeKind.COMPILATION_UNIT, name=tree.service_name)
    for path in _matched_files(root_dir, globs):
        rel = path.relative_to(root_dir).as_posix()
        try:
            data = path.read_bytes()
        except OSError as exc:
            report.files_skipped.append((rel, f"io error: {exc}"))
            report.warnings.append((rel, 0, f"skipped: io error: {exc}"))
            continue
        if tree.convention == LAAST_PASSTHROUGH:
            try:
                root.children.append(load_laast(data))
            except MicroweaveError as exc:
                report.files_skipped.append((rel, f"invalid document: {exc}"))
                report.warnings.append((rel, 0, f"skipped: invalid document: {exc}"))
                continue
        else:
            try:
                text = data.decode("utf-8")
            except UnicodeDecodeError as exc:
                report.files_skipped.append((rel, f"not utf-8: {exc}"))
                report.warnings.append((rel, 0, f"skipped: not utf-8: {exc}"))
                continue
            parser = _JavaLikeParser(text, rel, idioms)
            root.children.append(parser.parse())
            report.warnings.extend(parser.warnings)
        report.files_scanned += 1
    report.nodes_emitted = walk(root, lambda node, ancestors: None)
    return root, report
