import gzip
import json

import numpy as np
import pytest

from dsexport import cli, sources
from dsexport.export import ExportError, canonical_edges, export

from conftest import needs_raw


def test_canonical_edges_symmetrize_dedup_dropself():
    src = np.array([0, 1, 0, 2, 3])
    dst = np.array([1, 0, 1, 2, 4])  # dup (0,1) both ways, self-loop (2,2)
    s, d = canonical_edges(src, dst)
    pairs = set(zip(s.tolist(), d.tolist()))
    assert pairs == {(0, 1), (1, 0), (3, 4), (4, 3)}
    order = list(zip(s.tolist(), d.tolist()))
    assert order == sorted(order)


@needs_raw
def test_export_cora_matches_published_counts(raw_dir, tmp_path):
    manifest = export("cora", tmp_path / "cora", raw_dir=raw_dir, verify_after=True)
    assert manifest.counts["nodes"] == 2708
    assert manifest.counts["stored_entries"] == 10556
    assert manifest.counts["classes"] == 7
    assert (manifest.counts["train"], manifest.counts["val"],
            manifest.counts["test"]) == (140, 500, 1000)
    assert manifest.expected["edge_convention"] == "stored_entries"


@needs_raw
def test_export_citeseer_matches_published_counts(raw_dir, tmp_path):
    manifest = export("citeseer", tmp_path / "cs", raw_dir=raw_dir, verify_after=True)
    assert manifest.counts["nodes"] == 3327
    assert manifest.counts["raw_pairs"] == 4732  # the published edge figure
    assert manifest.counts["stored_entries"] == 9104
    assert manifest.counts["classes"] == 6
    assert (manifest.counts["train"], manifest.counts["val"],
            manifest.counts["test"]) == (120, 500, 1000)


@needs_raw
def test_reexport_identical_checksums(raw_dir, tmp_path):
    m1 = export("cora", tmp_path / "a", raw_dir=raw_dir)
    m2 = export("cora", tmp_path / "b", raw_dir=raw_dir)
    assert m1.checksums == m2.checksums


@needs_raw
def test_manifest_written(raw_dir, tmp_path):
    export("cora", tmp_path / "cora", raw_dir=raw_dir)
    manifest = json.loads((tmp_path / "cora" / "manifest.json").read_text())
    assert manifest["dataset"] == "cora"
    assert set(manifest["checksums"]) == {"meta.json", "features.bin", "edges.bin",
                                          "labels.bin", "splits.json"}


@needs_raw
def test_consumer_loads_exported_dataset(raw_dir, tmp_path):
    gc = pytest.importorskip(
        "graphcondense.graph_core",
        reason="consumer package not installed; cross-load check skipped")
    export("cora", tmp_path / "cora", raw_dir=raw_dir)
    ds = gc.load_dataset(tmp_path / "cora")
    assert ds.num_nodes == 2708
    assert ds.graph.num_entries == 10556
    assert ds.num_classes == 7


@needs_raw
def test_cli_export_and_verify(raw_dir, tmp_path, capsys):
    code = cli.main(["export", "cora", "--out", str(tmp_path / "cora"),
                     "--raw-dir", str(raw_dir), "--verify"])
    assert code == 0
    out = capsys.readouterr().out
    assert "2708 nodes" in out
    assert cli.main(["verify", str(tmp_path / "cora")]) == 0


def test_cli_verify_rejects_garbage(tmp_path):
    (tmp_path / "meta.json").write_text("{}")
    assert cli.main(["verify", str(tmp_path)]) == 1


def test_unknown_dataset_rejected(tmp_path):
    with pytest.raises(ExportError, match="unknown dataset"):
        export("karate", tmp_path)


def test_count_mismatch_fails_with_expected_vs_actual(raw_dir, tmp_path, monkeypatch):
    from dsexport import export as export_mod
    monkeypatch.setitem(export_mod.EXPECTED["cora"], "nodes", 9999)
    with pytest.raises(ExportError, match="expected 9999, got 2708"):
        export("cora", tmp_path / "cora", raw_dir=raw_dir)


# --- other-source readers on synthetic fixtures -------------------------------

def test_graphsaint_reader(tmp_path):
    from scipy.sparse import coo_matrix, save_npz
    rng = np.random.default_rng(0)
    n = 8
    adj = coo_matrix((np.ones(4), ([0, 1, 2, 3], [1, 0, 3, 2])), shape=(n, n))
    save_npz(tmp_path / "adj_full.npz", adj.tocsr())
    np.save(tmp_path / "feats.npy", rng.normal(size=(n, 3)))
    (tmp_path / "class_map.json").write_text(
        json.dumps({str(i): int(i % 2) for i in range(n)}))
    (tmp_path / "role.json").write_text(
        json.dumps({"tr": [0, 1, 2, 3], "va": [4, 5], "te": [6, 7]}))
    raw = sources.load_graphsaint(tmp_path)
    assert raw.mode == "inductive"
    assert raw.features.shape == (8, 3)
    assert raw.num_classes == 2
    assert raw.train == [0, 1, 2, 3]
    assert raw.edges_src.shape[0] == 4


def test_ogb_reader(tmp_path):
    (tmp_path / "raw").mkdir()
    split = tmp_path / "split" / "time"
    split.mkdir(parents=True)

    def gz_write(path, text):
        with gzip.open(path, "wt") as f:
            f.write(text)

    gz_write(tmp_path / "raw" / "edge.csv.gz", "0,1\n1,2\n2,3\n")
    gz_write(tmp_path / "raw" / "node-feat.csv.gz",
             "\n".join(",".join(str(float(i + j)) for j in range(3))
                       for i in range(4)) + "\n")
    gz_write(tmp_path / "raw" / "node-label.csv.gz", "0\n1\n0\n1\n")
    gz_write(split / "train.csv.gz", "0\n1\n")
    gz_write(split / "valid.csv.gz", "2\n")
    gz_write(split / "test.csv.gz", "3\n")
    raw = sources.load_ogb_raw(tmp_path)
    assert raw.features.shape == (4, 3)
    assert raw.raw_pair_count == 3
    assert raw.edges_src.shape[0] == 6  # both directions
    assert raw.train == [0, 1] and raw.val == [2] and raw.test == [3]
    assert raw.source_version == "ogb-raw-time"
