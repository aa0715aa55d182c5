from __future__ import annotations

import json

from microweave import __version__
from microweave.cli import main

from conftest import GOLDEN_DIR

GOLDEN_FILES = (
    "system.json",
    "context-map.json",
    "report.json",
    "report.txt",
    "graph-services.dot",
    "graph-context.dot",
    "graph-full.dot",
)


def _run(*argv):
    return main(list(argv))


def test_fixture_run_matches_goldens(shop, capsys):
    code = _run("--config", str(shop / "config.json"))
    capsys.readouterr()
    assert code == 2
    out = shop / "out"
    for name in GOLDEN_FILES:
        generated = (out / name).read_bytes()
        golden = (GOLDEN_DIR / name).read_bytes()
        assert generated == golden, f"{name} drifted from golden"
    generated_ir = (out / "orders.ir.json").read_bytes()
    assert generated_ir == (GOLDEN_DIR / "orders.ir.json").read_bytes()


def test_rerun_is_byte_identical(shop, capsys):
    assert _run("--config", str(shop / "config.json")) == 2
    first = {name: (shop / "out" / name).read_bytes() for name in GOLDEN_FILES}
    assert _run("--config", str(shop / "config.json")) == 2
    capsys.readouterr()
    second = {name: (shop / "out" / name).read_bytes() for name in GOLDEN_FILES}
    assert first == second


def test_variant_run_exits_with_errors(shop_variant, capsys):
    code = _run("--config", str(shop_variant / "config.json"))
    capsys.readouterr()
    assert code == 2


def test_fixing_the_dangling_call_downgrades_exit(shop, capsys):
    (shop / "orders" / "src" / "main" / "java" / "shop" / "orders"
     / "LegacyUserClient.java").unlink()
    code = _run("--config", str(shop / "config.json"))
    capsys.readouterr()
    assert code == 1
    report = json.loads((shop / "out" / "report.json").read_bytes())
    rules = sorted({f["rule_id"] for f in report["findings"]})
    assert rules == ["W01"]


def test_clean_pair_exits_zero(tmp_path, capsys):
    for name, files in {
        "alpha": {
            "src/Client.java": """
@Service
public class SyncService {
    private final RestTemplate restTemplate;

    public void pull(long id) {
        restTemplate.getForObject("http://beta/api/items/" + id, String.class);
    }
}
"""
        },
        "beta": {
            "src/Ctl.java": """
@RestController
@RequestMapping("/api/items")
public class ItemController {
    @GetMapping("/{id}")
    public String get(@PathVariable("id") long id) {
        return "";
    }
}
"""
        },
    }.items():
        for rel, text in files.items():
            path = tmp_path / name / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
    config = tmp_path / "config.json"
    config.write_text(
        json.dumps(
            {
                "services": [
                    {"name": "alpha", "root_dir": "alpha"},
                    {"name": "beta", "root_dir": "beta"},
                ]
            }
        ),
        encoding="utf-8",
    )
    code = _run("--config", str(config))
    capsys.readouterr()
    assert code == 0


def test_missing_config_flag_is_tool_failure(capsys):
    code = _run()
    captured = capsys.readouterr()
    assert code == 3
    assert "configuration error" in captured.err


def test_bad_root_dir_names_the_field(shop, capsys):
    config = json.loads((shop / "config.json").read_text(encoding="utf-8"))
    config["services"][0]["root_dir"] = "no-such-dir"
    (shop / "config.json").write_text(json.dumps(config), encoding="utf-8")
    code = _run("--config", str(shop / "config.json"))
    captured = capsys.readouterr()
    assert code == 3
    assert "services[0].root_dir" in captured.err


def test_invalid_config_json_is_tool_failure(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text("{broken", encoding="utf-8")
    code = _run("--config", str(config))
    captured = capsys.readouterr()
    assert code == 3
    assert "configuration error" in captured.err


def test_services_filter_limits_scope(shop, capsys):
    code = _run("--config", str(shop / "config.json"), "--services", "users")
    capsys.readouterr()
    assert code == 1
    system = json.loads((shop / "out" / "system.json").read_bytes())
    assert [s["service_name"] for s in system["services"]] == ["users"]
    assert system["comm_edges"] == []


def test_unknown_service_filter_is_tool_failure(shop, capsys):
    code = _run("--config", str(shop / "config.json"), "--services", "nope")
    captured = capsys.readouterr()
    assert code == 3
    assert "--services" in captured.err


def test_format_filter_controls_outputs(shop, capsys):
    code = _run("--config", str(shop / "config.json"), "--format", "text")
    capsys.readouterr()
    assert code == 2
    out = shop / "out"
    assert (out / "report.txt").exists()
    assert not (out / "system.json").exists()
    assert not (out / "graph-services.dot").exists()


def test_unknown_format_is_tool_failure(shop, capsys):
    code = _run("--config", str(shop / "config.json"), "--format", "pdf")
    captured = capsys.readouterr()
    assert code == 3
    assert "format" in captured.err


def test_jobs_must_be_positive(shop, capsys):
    code = _run("--config", str(shop / "config.json"), "--jobs", "0")
    captured = capsys.readouterr()
    assert code == 3
    assert "--jobs" in captured.err


def test_out_override_redirects_outputs(shop, tmp_path, capsys):
    target = tmp_path / "elsewhere"
    code = _run("--config", str(shop / "config.json"), "--out", str(target))
    capsys.readouterr()
    assert code == 2
    assert (target / "system.json").exists()
    assert not (shop / "out").exists()


def test_auto_discovery_finds_service_dirs(shop, capsys):
    config = shop / "auto-config.json"
    config.write_text(
        json.dumps(
            {
                "services": "auto",
                "taxonomy_path": "taxonomy.txt",
                "compose_paths": ["docker-compose.yml"],
                "output_dir": "out-auto",
            }
        ),
        encoding="utf-8",
    )
    code = _run("--config", str(config))
    capsys.readouterr()
    assert code == 2
    system = json.loads((shop / "out-auto" / "system.json").read_bytes())
    assert [s["service_name"] for s in system["services"]] == [
        "orders",
        "shipping",
        "users",
    ]


def test_version_flag(capsys):
    import pytest

    with pytest.raises(SystemExit) as excinfo:
        _run("--version")
    assert excinfo.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_progress_goes_to_stderr(shop, capsys):
    _run("--config", str(shop / "config.json"))
    captured = capsys.readouterr()
    assert "[analyze]" in captured.err
    assert captured.out == ""
