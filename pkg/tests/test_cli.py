import hashlib
import json
import shutil

import pytest

from gravitykg.cli import build_parser, load_config, main, parse_years
from gravitykg.pipeline import RunConfig

SMALL = ["--countries", "10", "--commodities", "4", "--months", "24", "--epochs", "60", "--gnn-epochs", "80"]


def _digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("small")
    assert main(["pipeline", "--out", str(out), *SMALL]) == 0
    return out


def test_parse_years():
    assert parse_years("2015,2017") == [2015, 2017]
    assert parse_years("2015-2017,2019") == [2015, 2016, 2017, 2019]
    with pytest.raises(Exception):
        parse_years("abc")


def test_synth_repeatable(tmp_path):
    for d in ("a", "b"):
        assert main(["synth", "--out", str(tmp_path / d), "--seed", "3", "--countries", "6", "--months", "12"]) == 0
    for f in ("trade.csv", "gravity.csv", "provenance.json"):
        assert _digest(tmp_path / "a" / f) == _digest(tmp_path / "b" / f)


def test_synth_seed_changes_data(tmp_path):
    main(["synth", "--out", str(tmp_path / "a"), "--seed", "3", "--countries", "6", "--months", "12"])
    main(["synth", "--out", str(tmp_path / "b"), "--seed", "4", "--countries", "6", "--months", "12"])
    assert _digest(tmp_path / "a" / "trade.csv") != _digest(tmp_path / "b" / "trade.csv")


def test_bad_config_exit_2(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path), "--countries", "1"]) == 2
    assert "config error" in capsys.readouterr().err


def test_unknown_config_key_exit_2(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"no_such_key": 1}))
    assert main(["synth", "--out", str(tmp_path), "--config", str(cfg)]) == 2


def test_missing_input_exit_1(tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    assert main(["ingest", "--out", str(tmp_path), "--trade", str(missing), "--gravity", str(missing)]) == 1
    assert str(missing) in capsys.readouterr().err


def test_missing_upstream_artifact_exit_1(tmp_path, capsys):
    assert main(["gravity", "--out", str(tmp_path)]) == 1
    assert "records.csv" in capsys.readouterr().err


def test_bad_flag_exit_2(tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["train", "--out", str(tmp_path), "--norm", "L3"])
    assert e.value.code == 2


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 11, "transe": {"dimension": 8, "epochs": 5}}))
    args = build_parser().parse_args(["train", "--config", str(cfg), "--dim", "12"])
    rc = load_config(args)
    assert (rc.seed, rc.transe.dimension, rc.transe.epochs) == (11, 12, 5)


def test_dbscan_params_routed():
    args = build_parser().parse_args(["cluster", "--method", "dbscan", "--eps", "0.5", "--min-pts", "3"])
    rc = load_config(args)
    assert rc.method == "dbscan" and rc.cluster_params == {"eps": 0.5, "min_pts": 3}


def test_dbscan_cluster_stage(small_run, tmp_path):
    out = tmp_path / "r"
    shutil.copytree(small_run, out)
    assert main(["cluster", "--out", str(out), "--method", "dbscan", "--eps", "0.5"]) == 0
    bands = json.loads((out / "bands.json").read_text())
    assert bands["method"] == "DBSCAN" and bands["params"]["eps"] == 0.5


def test_metrics_shape(small_run):
    m = json.loads((small_run / "metrics.json").read_text())
    assert [r["model"] for r in m["regression"]] == ["basic", "basic+log", "embedding", "embedding+log"]
    assert [r["features"] for r in m["gnn"]] == ["basic", "embedding"]
    for row in m["regression"]:
        assert set(row["raw_scale"]) >= {"mae", "mape", "mpe", "r_square"}
        assert set(row["log_scale"]) >= {"mae", "mape", "mpe", "r_square"}
    assert set(m) >= {"ingest", "clustering", "kg", "link_prediction", "regression", "gnn"}


def test_manifest_digests(small_run):
    man = json.loads((small_run / "manifest.json").read_text())
    assert man["seed"] == 7 and man["config_digest"] == RunConfig.from_dict(man["config"]).digest()
    assert man["artifacts"]["metrics.json"] == _digest(small_run / "metrics.json")
    for rel, dig in man["artifacts"].items():
        assert _digest(small_run / rel) == dig, rel
    assert man["runs"][0]["command"][0] == "pipeline"


def test_resume_rebuilds_identically(small_run, tmp_path):
    out = tmp_path / "r"
    shutil.copytree(small_run, out)
    before = _digest(out / "embeddings.csv")
    (out / "embeddings.csv").unlink()
    assert main(["train", "--out", str(out), "--epochs", "60"]) == 0
    assert _digest(out / "embeddings.csv") == before
    man = json.loads((out / "manifest.json").read_text())
    assert [r["command"][0] for r in man["runs"]] == ["pipeline", "train"]


def test_standalone_stage_refreshes_metrics(small_run, tmp_path):
    out = tmp_path / "r"
    shutil.copytree(small_run, out)
    before = _digest(out / "metrics.json")
    (out / "metrics.json").unlink()
    assert main(["project", "--out", str(out)]) == 0
    assert _digest(out / "metrics.json") == before


def test_stage_failure_exit_3(small_run, tmp_path, capsys):
    out = tmp_path / "r"
    shutil.copytree(small_run, out)
    (out / "bands.json").write_text("{ not json")
    assert main(["build-kg", "--out", str(out)]) == 3
    assert "build-kg" in capsys.readouterr().err


def test_threads_match_serial(small_run, tmp_path, monkeypatch):
    out = tmp_path / "r"
    shutil.copytree(small_run, out)
    monkeypatch.setenv("GRAVITYKG_THREADS", "4")
    assert main(["dtree", "--out", str(out), "--epochs", "60"]) == 0
    assert main(["gnn", "--out", str(out), "--epochs", "60", "--gnn-epochs", "80"]) == 0
    for f in ("dtree-metrics.json", "gnn-metrics.json", "metrics.json"):
        assert _digest(out / f) == _digest(small_run / f), f


def test_bad_thread_count_exit_2(small_run, tmp_path, monkeypatch):
    out = tmp_path / "r"
    shutil.copytree(small_run, out)
    monkeypatch.setenv("GRAVITYKG_THREADS", "many")
    assert main(["dtree", "--out", str(out)]) == 2


def test_pipeline_on_external_files(small_run, tmp_path):
    out = tmp_path / "ext"
    assert main(["pipeline", "--out", str(out), "--trade", str(small_run / "trade.csv"),
                 "--gravity", str(small_run / "gravity.csv"), "--years", "2015-2016", *SMALL]) == 0
    assert not (out / "trade.csv").exists()
    assert json.loads((out / "ingest.json").read_text())["years"] == [2015, 2016]
    man = json.loads((out / "manifest.json").read_text())
    assert man["inputs"][str(small_run / "trade.csv")] == _digest(small_run / "trade.csv")
