import json
import math

import pytest

from shearflow_ldp import cli, harness
from shearflow_ldp.config import OUT_ENV, ConfigError, ExperimentConfig, from_dict, load_config

SMALL_RATE = {"alphas": [0.0, 0.5, 1.0, 2.0, 4.0], "y_grid": [-0.5, 0.0, 0.5], "rungs": [4, 8],
              "points_per_width": 8}


def _write(tmp_path, data):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(data))
    return p


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        from_dict({"sed": 3})
    with pytest.raises(ConfigError):
        from_dict({"mc": {"exit": {"T": 10, "paths": 3}}})
    with pytest.raises(ConfigError):
        from_dict({"stages": ["field", "plot"]})


def test_hash_ignores_output_location():
    a = from_dict({"seed": 4, "out": "/tmp/a", "workers": 2})
    b = from_dict({"seed": 4, "out": "/tmp/b"})
    assert a.hash == b.hash
    assert a.hash != from_dict({"seed": 5}).hash
    assert a.section_hash("field") == from_dict({"seed": 5}).section_hash("field")


def test_flags_override_file(tmp_path):
    cfg = load_config(_write(tmp_path, {"seed": 1}), {"seed": 9, "out": None})
    assert cfg.seed == 9


def test_env_sets_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
    assert ExperimentConfig().output_root() == tmp_path / "env"
    assert ExperimentConfig(out=str(tmp_path / "flag")).output_root() == tmp_path / "flag"


def test_empty_stage_list(tmp_path):
    man = harness.run_experiment(from_dict({"out": str(tmp_path)}), [])
    assert man.stages == [] and man.artifacts == {}


@pytest.fixture(scope="module")
def rate_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    cfg = from_dict({"out": str(root), "rate": SMALL_RATE})
    return cfg, harness.run_experiment(cfg, ["rate"])


def test_rate_stage_writes_listed_csvs(rate_run):
    cfg, man = rate_run
    assert man.complete
    assert set(man.artifacts) == {"rate/lambda.csv", "rate/J.csv"}
    assert man.verify_checksums()
    written = json.loads((cfg.output_root() / "manifest.json").read_text())
    assert written["artifacts"] == man.artifacts


def test_rerun_is_cached(rate_run):
    cfg, man = rate_run
    again = harness.run_experiment(cfg, ["rate"])
    assert again.cached and again.artifacts == man.artifacts
    forced = harness.run_experiment(cfg, ["rate"], force=True)
    assert forced.stage("rate").status == "ran"


def test_eigen_pulls_in_field(tmp_path):
    cfg = from_dict({"out": str(tmp_path), "field": {"half_width": 10, "n_samples": 1},
                     "eigen": {"n_grid": 60, "r_values": [2.0], "R": 4.0}})
    man = harness.run_experiment(cfg, ["eigen"])
    assert [s.name for s in man.stages] == ["field", "eigen"]
    assert man.complete


def test_corrupted_table_fails_verify(rate_run, tmp_path, capsys):
    cfg, _ = rate_run
    src = cfg.output_root() / "rate"
    dst = tmp_path / "rate"
    dst.mkdir()
    (dst / "J.csv").write_text((src / "J.csv").read_text())
    lines = (src / "lambda.csv").read_text().splitlines()
    # bump the limit of the most negative multiplier so the table is no longer even
    i = next(k for k, ln in enumerate(lines) if ln.startswith("-4.0,inf,"))
    a, r, v, c = lines[i].split(",")
    lines[i] = ",".join([a, r, repr(float(v) + 0.01), c])
    (dst / "lambda.csv").write_text("\n".join(lines) + "\n")
    rc = cli.main(["verify", "--criteria", "3", "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert rc == 1
    assert out.count("criterion  3 (") == 1 and "[FAIL]" in out
    rep = json.loads((tmp_path / "verify" / "report.json").read_text())
    assert [c["number"] for c in rep["criteria"]] == [3]
    assert rep["criteria"][0]["metrics"]["lambda_even"] is False


def test_verify_report_lists_each_criterion_once(tmp_path):
    cfg = from_dict({"out": str(tmp_path), "verify": {"criteria": [1, 9, 12]}})
    rep = harness.verify(cfg, None, tmp_path / "verify")
    assert rep["passed"]
    ids = [c["number"] for c in json.loads((tmp_path / "verify" / "report.json").read_text())["criteria"]]
    assert ids == [1, 9, 12]
    text = (tmp_path / "verify" / "report.txt").read_text()
    assert all(text.count(f"criterion {k:2d} (") == 1 for k in (1, 9, 12))


@pytest.mark.parametrize("argv", [[], ["plot"], ["field", "--seed", "x"], ["verify", "--criteria", "a,b"]])
def test_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as exc:
        cli.main(argv)
    assert exc.value.code == 2


def test_bad_config_exit_2(tmp_path, capsys):
    assert cli.main(["field", "--config", str(_write(tmp_path, {"feild": {}}))]) == 2
    assert cli.main(["field", "--config", str(tmp_path / "missing.json")]) == 2
    assert cli.main(["verify", "--criteria", "13", "--out", str(tmp_path)]) == 2


def test_report_needs_artifacts(tmp_path):
    assert cli.main(["report", "--out", str(tmp_path / "nothing")]) == 2


def test_report_renders(rate_run, capsys):
    cfg, _ = rate_run
    assert cli.main(["report", "--out", str(cfg.output_root())]) == 0
    pngs = list(cfg.output_root().rglob("*.png"))
    assert pngs and all(p.stat().st_size > 0 for p in pngs)


def test_field_stage_via_cli(tmp_path, capsys):
    cfg = _write(tmp_path, {"field": {"half_width": 10, "n_samples": 2}})
    out = tmp_path / "o"
    assert cli.main(["field", "--config", str(cfg), "--out", str(out), "--seed", "3"]) == 0
    assert cli.main(["field", "--config", str(cfg), "--out", str(out), "--seed", "3"]) == 0
    assert "cached" in capsys.readouterr().out
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 3 and man["cached"]
    assert math.isfinite(man["stages"][0]["seconds"])
