"""Pipeline orchestration: configuration loading and the end-to-end run.

The run configuration is a UTF-8 JSON file.  Relative paths resolve
against the config file's directory.  ``run`` executes extraction and
matching per service (in a worker pool), weaves the system model,
analyzes it, and writes every output atomically into the output
directory.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from microweave.analysis import (
    CheckSettings,
    DEFAULT_SEVERITIES,
    RULE_IDS,
    SEV_ERROR,
    SEV_INFO,
    SEV_WARNING,
    coupling_metrics,
    run_checks,
)
from microweave.errors import ConfigError, MicroweaveError
from microweave.export import export_dot, export_report
from microweave.frontend import (
    CONVENTIONS,
    DEFAULT_INCLUDE_GLOBS,
    LAAST_PASSTHROUGH,
    PASSTHROUGH_INCLUDE_GLOBS,
    SPRING_LIKE,
    SourceTree,
    extract,
)
from microweave.ir import build_service_ir, save_service_ir
from microweave.jsonio import atomic_write, canonical_bytes
from microweave.laast import save_laast
from microweave.matchers import MatcherRule, default_ruleset, run_matchers, validate_ruleset
from microweave.similarity import load_taxonomy_file
from microweave.topology import load_compose_file, merge_topologies
from microweave.weave import (
    SystemIr,
    WeaveConfig,
    context_map_to_json_obj,
    system_to_json_obj,
    weave,
)

OUTPUT_FORMATS = ("dot", "json", "text")
_SEVERITY_VALUES = (SEV_ERROR, SEV_WARNING, SEV_INFO)


@dataclass
class ServiceSpec:
    name: str
    root_dir: Path
    include_globs: tuple[str, ...] = DEFAULT_INCLUDE_GLOBS
    convention: str = SPRING_LIKE


@dataclass
class RunConfig:
    services: list[ServiceSpec]
    taxonomy_path: Path | None = None
    compose_paths: list[Path] = field(default_factory=list)
    entity_threshold: float = 0.65
    field_threshold: float = 0.6
    path_threshold: float = 0.8
    ruleset: list[MatcherRule] | None = None
    disabled_rules: frozenset[str] = frozenset()
    severity_overrides: dict[str, str] = field(default_factory=dict)
    output_dir: Path = Path("out")
    digest: str = ""


def _require_type(value, types, field_name: str, what: str):
    if not isinstance(value, types):
        raise ConfigError(f"{field_name} must be {what}", field=field_name)
    return value


def _discover_services(root: Path) -> list[dict]:
    """Auto discovery: each immediate subdirectory containing at least one
    source file becomes one service named after the directory."""
    specs = []
    if not root.is_dir():
        raise ConfigError(f"services auto-discovery root {root} is not a directory",
                          field="services")
    for child in sorted(root.iterdir()):
        if not child.is_dir() or child.name.startswith("."):
            continue
        patterns = DEFAULT_INCLUDE_GLOBS + PASSTHROUGH_INCLUDE_GLOBS
        if any(next(child.glob(pattern), None) is not None for pattern in patterns):
            specs.append({"name": child.name, "root_dir": child.name})
    return specs


def _parse_service(entry, index: int, base: Path) -> ServiceSpec:
    field_name = f"services[{index}]"
    _require_type(entry, dict, field_name, "an object")
    name = entry.get("name")
    if not isinstance(name, str) or not name:
        raise ConfigError(f"{field_name}.name must be a non-empty string",
                          field=f"{field_name}.name")
    root_raw = entry.get("root_dir")
    if not isinstance(root_raw, str) or not root_raw:
        raise ConfigError(f"{field_name}.root_dir must be a non-empty string",
                          field=f"{field_name}.root_dir")
    globs = entry.get("include_globs", list(DEFAULT_INCLUDE_GLOBS))
    _require_type(globs, list, f"{field_name}.include_globs", "an array of strings")
    for i, g in enumerate(globs):
        if not isinstance(g, str):
            raise ConfigError(f"{field_name}.include_globs[{i}] must be a string",
                              field=f"{field_name}.include_globs")
    convention = entry.get("convention", SPRING_LIKE)
    if convention not in CONVENTIONS:
        raise ConfigError(
            f"{field_name}.convention must be one of {', '.join(CONVENTIONS)}",
            field=f"{field_name}.convention",
        )
    if convention == LAAST_PASSTHROUGH and "include_globs" not in entry:
        globs = list(PASSTHROUGH_INCLUDE_GLOBS)
    return ServiceSpec(
        name=name,
        root_dir=(base / root_raw).resolve() if not Path(root_raw).is_absolute()
        else Path(root_raw),
        include_globs=tuple(globs),
        convention=convention,
    )


def _parse_threshold(raw: dict, key: str, default: float) -> float:
    value = raw.get(key, default)
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"thresholds.{key} must be a number", field=f"thresholds.{key}")
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"thresholds.{key} must be within [0, 1]",
                          field=f"thresholds.{key}")
    return value


def _parse_checks(raw) -> tuple[frozenset[str], dict[str, str]]:
    _require_type(raw, dict, "checks", "an object")
    disabled = raw.get("disable", [])
    _require_type(disabled, list, "checks.disable", "an array of rule ids")
    for i, rule_id in enumerate(disabled):
        if rule_id not in RULE_IDS:
            raise ConfigError(
                f"checks.disable[{i}]: unknown rule id {rule_id!r}",
                field=f"checks.disable[{i}]",
            )
    overrides = raw.get("severity", {})
    _require_type(overrides, dict, "checks.severity", "an object")
    for rule_id, severity in overrides.items():
        if rule_id not in RULE_IDS:
            raise ConfigError(
                f"checks.severity: unknown rule id {rule_id!r}",
                field=f"checks.severity.{rule_id}",
            )
        if severity not in _SEVERITY_VALUES:
            raise ConfigError(
                f"checks.severity.{rule_id} must be one of "
                + ", ".join(_SEVERITY_VALUES),
                field=f"checks.severity.{rule_id}",
            )
    return frozenset(disabled), dict(overrides)


def _parse_ruleset(raw) -> list[MatcherRule]:
    _require_type(raw, list, "ruleset", "an array of rule objects")
    rules = []
    for i, entry in enumerate(raw):
        field_name = f"ruleset[{i}]"
        _require_type(entry, dict, field_name, "an object")
        try:
            rules.append(
                MatcherRule(
                    component_role=entry.get("component_role", ""),
                    annotation_names=tuple(entry.get("annotation_names", [])),
                    name_suffixes=tuple(entry.get("name_suffixes", [])),
                    priority=int(entry.get("priority", 0)),
                )
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{field_name}: {exc}", field=field_name) from None
    try:
        validate_ruleset(rules)
    except MicroweaveError as exc:
        raise ConfigError(f"ruleset: {exc}", field="ruleset") from None
    return rules


def config_digest(raw: dict, services_filter: list[str] | None) -> str:
    """Stable digest over the normalized config document plus the service
    filter; paths stay as written so the digest is machine-independent."""
    normal = dict(raw)
    services = normal.get("services")
    if isinstance(services, list):
        normal["services"] = sorted(
            services, key=lambda s: s.get("name", "") if isinstance(s, dict) else ""
        )
    payload = {"config": normal, "filter": sorted(services_filter or [])}
    encoded = json.dumps(payload, sort_keys=True, ensure_ascii=False,
                         separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(encoded).hexdigest()


def load_config(
    path: str | Path,
    services_filter: list[str] | None = None,
    output_override: str | Path | None = None,
) -> RunConfig:
    """Load and validate a run configuration.

    With a service filter, only the selected services are validated (and
    later read); the filter itself must name configured services.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}", field="config") from None
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}", field="config") from None
    _require_type(raw, dict, "config", "a JSON object")
    base = path.parent.resolve()

    raw_services = raw.get("services", "auto")
    if raw_services == "auto":
        root_raw = raw.get("root", ".")
        _require_type(root_raw, str, "root", "a string")
        entries = _discover_services((base / root_raw).resolve())
    else:
        _require_type(raw_services, list, "services", "an array or \"auto\"")
        entries = raw_services

    specs = [_parse_service(entry, i, base) for i, entry in enumerate(entries)]
    names = [spec.name for spec in specs]
    if len(set(names)) != len(names):
        dupe = sorted({n for n in names if names.count(n) > 1})[0]
        raise ConfigError(f"services: duplicate service name {dupe!r}", field="services")

    if services_filter:
        unknown = sorted(set(services_filter) - set(names))
        if unknown:
            raise ConfigError(
                f"--services names unknown service {unknown[0]!r}", field="--services"
            )
        specs = [spec for spec in specs if spec.name in set(services_filter)]

    for spec in specs:
        if not spec.root_dir.is_dir():
            index = names.index(spec.name)
            raise ConfigError(
                f"services[{index}].root_dir: {spec.root_dir} is not a directory",
                field=f"services[{index}].root_dir",
            )

    taxonomy_path = None
    if raw.get("taxonomy_path") is not None:
        tp = _require_type(raw["taxonomy_path"], str, "taxonomy_path", "a string")
        taxonomy_path = (base / tp).resolve() if not Path(tp).is_absolute() else Path(tp)
        if not taxonomy_path.is_file():
            raise ConfigError(f"taxonomy_path: {taxonomy_path} is not a file",
                              field="taxonomy_path")

    compose_paths = []
    raw_compose = raw.get("compose_paths", [])
    _require_type(raw_compose, list, "compose_paths", "an array of paths")
    for i, cp in enumerate(raw_compose):
        if not isinstance(cp, str):
            raise ConfigError(f"compose_paths[{i}] must be a string",
                              field=f"compose_paths[{i}]")
        resolved = (base / cp).resolve() if not Path(cp).is_absolute() else Path(cp)
        if not resolved.is_file():
            raise ConfigError(f"compose_paths[{i}]: {resolved} is not a file",
                              field=f"compose_paths[{i}]")
        compose_paths.append(resolved)

    thresholds = raw.get("thresholds", {})
    _require_type(thresholds, dict, "thresholds", "an object")

    disabled, overrides = _parse_checks(raw.get("checks", {}))
    ruleset = _parse_ruleset(raw["ruleset"]) if raw.get("ruleset") is not None else None

    if output_override is not None:
        output_dir = Path(output_override)
        if not output_dir.is_absolute():
            output_dir = Path.cwd() / output_dir
    else:
        out_raw = raw.get("output_dir", "out")
        _require_type(out_raw, str, "output_dir", "a string")
        output_dir = (base / out_raw).resolve() if not Path(out_raw).is_absolute() \
            else Path(out_raw)

    return RunConfig(
        services=specs,
        taxonomy_path=taxonomy_path,
        compose_paths=compose_paths,
        entity_threshold=_parse_threshold(thresholds, "tau", 0.65),
        field_threshold=_parse_threshold(thresholds, "tau_f", 0.6),
        path_threshold=_parse_threshold(thresholds, "theta", 0.8),
        ruleset=ruleset,
        disabled_rules=disabled,
        severity_overrides=overrides,
        output_dir=output_dir,
        digest=config_digest(raw, services_filter),
    )


def _extract_one(spec: ServiceSpec):
    tree = SourceTree(
        service_name=spec.name,
        root_dir=spec.root_dir,
        include_globs=spec.include_globs,
        convention=spec.convention,
    )
    root, report = extract(tree)
    return spec, root, report


def build_system(
    config: RunConfig, jobs: int | None = None, log=None
) -> tuple[SystemIr, dict[str, bytes]]:
    """Extract, match, and weave per ``config``; no files are written.

    Returns the woven system plus each service's serialized syntax tree
    (the latter so callers can persist exactly what was analyzed)."""
    log = log if log is not None else sys.stderr

    def progress(message: str):
        print(f"[analyze] {message}", file=log)

    workers = jobs or os.cpu_count() or 1
    progress(f"extracting {len(config.services)} service(s) with {workers} worker(s)")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        extracted = list(pool.map(_extract_one, config.services))

    irs = []
    laast_blobs = {}
    for spec, root, report in extracted:
        progress(
            f"{spec.name}: {report.files_scanned} file(s) scanned, "
            f"{len(report.warnings)} extraction warning(s)"
        )
        ruleset = config.ruleset if config.ruleset is not None \
            else default_ruleset(spec.convention)
        output = run_matchers(root, ruleset, spec.name, convention=spec.convention)
        irs.append(build_service_ir(output, report, spec.name))
        laast_blobs[spec.name] = save_laast(root)

    taxonomy = None
    if config.taxonomy_path is not None:
        taxonomy = load_taxonomy_file(config.taxonomy_path)
    topology = None
    if config.compose_paths:
        topology = merge_topologies(
            [load_compose_file(p) for p in config.compose_paths]
        )

    progress("weaving system model")
    system = weave(
        irs,
        taxonomy=taxonomy,
        topology=topology,
        config=WeaveConfig(
            entity_threshold=config.entity_threshold,
            field_threshold=config.field_threshold,
            path_threshold=config.path_threshold,
            config_digest=config.digest,
        ),
    )
    return system, laast_blobs


def run(
    config: RunConfig,
    jobs: int | None = None,
    formats: set[str] | None = None,
    log=None,
) -> int:
    """Execute the pipeline and return the exit status: 0 no findings,
    1 findings without errors, 2 errors present (3, tool failure, is
    raised as an exception and mapped by the command-line wrapper)."""
    formats = set(OUTPUT_FORMATS) if formats is None else formats
    log = log if log is not None else sys.stderr

    def progress(message: str):
        print(f"[analyze] {message}", file=log)

    system, laast_blobs = build_system(config, jobs=jobs, log=log)
    settings = CheckSettings(
        disabled_rules=config.disabled_rules,
        severity_overrides=config.severity_overrides,
        path_threshold=config.path_threshold,
    )
    findings = run_checks(system, settings)
    metrics = coupling_metrics(system)
    progress(f"analysis: {len(findings)} finding(s)")

    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    if "json" in formats:
        for ir in system.services:
            atomic_write(out / f"{ir.service_name}.laast.json",
                         laast_blobs[ir.service_name])
            atomic_write(out / f"{ir.service_name}.ir.json", save_service_ir(ir))
        atomic_write(out / "system.json", canonical_bytes(system_to_json_obj(system)))
        atomic_write(
            out / "context-map.json",
            canonical_bytes(context_map_to_json_obj(system.context_map)),
        )
        atomic_write(out / "report.json", export_report(findings, metrics, "json"))
    if "dot" in formats:
        for view in ("services", "context", "full"):
            atomic_write(
                out / f"graph-{view}.dot", export_dot(system, view).encode("utf-8")
            )
    if "text" in formats:
        atomic_write(out / "report.txt", export_report(findings, metrics, "text"))
    progress(f"outputs written to {out}")

    if any(f.severity == SEV_ERROR for f in findings):
        return 2
    if findings:
        return 1
    return 0
