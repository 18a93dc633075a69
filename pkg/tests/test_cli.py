import json

import numpy as np
import pytest

from graphcondense import cli
from graphcondense import condense as cd
from graphcondense import graph_core as gc


@pytest.fixture()
def toy_dir(tmp_path, toy_community_dataset):
    ds = toy_community_dataset
    src = np.repeat(np.arange(ds.num_nodes), np.diff(ds.graph.row_ptr))
    directory = tmp_path / "toyds"
    gc.write_dataset_dir(
        directory, features=ds.features, src=src, dst=ds.graph.col_idx,
        weights=ds.graph.weights, labels=ds.labels,
        splits={k: list(v) for k, v in ds.splits.items()},
        num_classes=ds.num_classes)
    return directory


def quick_config(tmp_path, toy_dir, **kw):
    cfg = {
        "dataset_dir": str(toy_dir),
        "out_dir": str(tmp_path / "out"),
        "reduction_rate": 0.2,
        "steps": 8,
        "teacher_epochs": 40,
        "teacher_k": 2,
        "gen_hidden": 8,
        "eval_archs": ["gcn"],
        "eval_trials": 2,
        "eval_epochs": 30,
        "eval_hidden": 16,
        "eval_check_every": 5,
    }
    cfg.update(kw)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path, cfg


def test_pipeline_produces_all_artifacts(tmp_path, toy_dir):
    config_path, cfg = quick_config(tmp_path, toy_dir)
    assert cli.main(["pipeline", "--config", str(config_path)]) == 0
    out = tmp_path / "out"
    for name in ("resolved_config.json", "teacher.bin", "report.json"):
        assert (out / name).exists(), name
    for name in ("meta.json", "features.bin", "edges.bin", "labels.bin",
                 "splits.json", "trace.csv", "condense_meta.json", "generator.bin"):
        assert (out / "condensed" / name).exists(), name
    report = json.loads((out / "report.json").read_text())
    assert "gcn" in report and len(report["gcn"]["trials"]) == 2
    assert report["condensed_stats"]["nodes"] > 0
    resolved = json.loads((out / "resolved_config.json").read_text())
    assert set(cli.DEFAULTS) == set(resolved)  # no hidden defaults


def test_condense_with_zero_steps_equals_initialization(tmp_path, toy_dir):
    config_path, cfg = quick_config(tmp_path, toy_dir, steps=0)
    assert cli.main(["pretrain", "--config", str(config_path)]) == 0
    assert cli.main(["condense", "--config", str(config_path)]) == 0
    cond = cd.load_condensed(tmp_path / "out" / "condensed")
    ds = gc.load_dataset(toy_dir)
    rng = np.random.default_rng(0)
    y_ref = cd.sample_labels(ds.labels, ds.splits["train"], 0.2, ds.num_nodes)
    x_ref = cd.init_features(ds.features, ds.labels, y_ref, ds.splits["train"], rng)
    np.testing.assert_array_equal(cond.labels, y_ref)
    np.testing.assert_array_equal(cond.features, x_ref.astype(np.float32))


def test_unknown_config_key_exits_2(tmp_path, toy_dir):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"dataset_dir": str(toy_dir), "not_a_key": 1}))
    assert cli.main(["pipeline", "--config", str(path)]) == 2


def test_malformed_config_exits_2(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{nope")
    assert cli.main(["pretrain", "--config", str(path)]) == 2


def test_missing_dataset_exits_3(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"dataset_dir": str(tmp_path / "nowhere")}))
    assert cli.main(["pretrain", "--config", str(path)]) == 3


def test_corrupt_dataset_exits_3(tmp_path, toy_dir):
    (toy_dir / "features.bin").write_bytes(b"XXXXgarbage")
    config_path, _ = quick_config(tmp_path, toy_dir)
    assert cli.main(["pretrain", "--config", str(config_path)]) == 3


@pytest.mark.filterwarnings("ignore:overflow encountered", "ignore:invalid value")
def test_numeric_abort_exits_4(tmp_path, toy_dir):
    config_path, _ = quick_config(tmp_path, toy_dir, steps=60, eta_x=1e30)
    assert cli.main(["pretrain", "--config", str(config_path)]) == 0
    code = cli.main(["condense", "--config", str(config_path)])
    assert code == 4


def test_validate_dataset_command(tmp_path, toy_dir, capsys):
    assert cli.main(["validate-dataset", str(toy_dir)]) == 0
    out = capsys.readouterr().out
    assert "60 nodes" in out
    assert cli.main(["validate-dataset", str(tmp_path / "missing")]) == 3


def test_stats_on_dataset_and_condensed(tmp_path, toy_dir, capsys):
    assert cli.main(["stats", str(toy_dir)]) == 0
    out = capsys.readouterr().out
    assert "nodes     60" in out

    config_path, _ = quick_config(tmp_path, toy_dir)
    cli.main(["pretrain", "--config", str(config_path)])
    cli.main(["condense", "--config", str(config_path)])
    assert cli.main(["stats", str(tmp_path / "out" / "condensed")]) == 0
    out = capsys.readouterr().out
    assert "per-class" in out


def test_cli_flags_override_file_keys(tmp_path, toy_dir):
    config_path, _ = quick_config(tmp_path, toy_dir, seed=1)
    out2 = tmp_path / "other"
    assert cli.main(["pretrain", "--config", str(config_path),
                     "--seed", "42", "--out", str(out2)]) == 0
    resolved = json.loads((out2 / "resolved_config.json").read_text())
    assert resolved["seed"] == 42
    assert resolved["out_dir"] == str(out2)


def test_deterministic_runs_are_byte_identical(tmp_path, toy_dir):
    results = []
    for run in ("r1", "r2"):
        config_path, _ = quick_config(tmp_path, toy_dir, steps=6)
        out = tmp_path / run
        assert cli.main(["pipeline", "--config", str(config_path),
                         "--deterministic", "--out", str(out)]) == 0
        results.append(out)
    a, b = results
    for name in ("meta.json", "features.bin", "edges.bin", "labels.bin",
                 "splits.json", "trace.csv", "condense_meta.json", "generator.bin"):
        assert (a / "condensed" / name).read_bytes() == \
               (b / "condensed" / name).read_bytes(), name
    ra = json.loads((a / "report.json").read_text())
    rb = json.loads((b / "report.json").read_text())
    assert ra["gcn"]["trials"] == rb["gcn"]["trials"]
