import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphcondense import graph_core as gc


def random_graph(rng, n, edge_prob=0.2, weighted=False):
    """Random symmetric-by-construction edge list (single direction given)."""
    src, dst, w = [], [], []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < edge_prob:
                src.append(i)
                dst.append(j)
                w.append(rng.uniform(0.1, 2.0) if weighted else 1.0)
    return (np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64),
            np.array(w, dtype=np.float64))


def dense_normalize_oracle(adj: np.ndarray) -> np.ndarray:
    """Brute-force d^{-1/2} (A+I) d^{-1/2} on a dense adjacency."""
    a = adj + np.eye(adj.shape[0])
    d = a.sum(axis=1)
    dinv = np.diag(1.0 / np.sqrt(d))
    return dinv @ a @ dinv


# --- build_graph -----------------------------------------------------------

def test_duplicate_edges_merged_by_max_weight():
    g = gc.build_graph(8, np.array([3, 3]), np.array([7, 7]), np.array([1.0, 1.0]))
    assert g.num_entries == 2  # (3,7) and (7,3)
    cols, w = g.row(3)
    assert list(cols) == [7] and w[0] == 1.0

    g2 = gc.build_graph(8, np.array([3, 7]), np.array([7, 3]), np.array([1.0, 2.5]))
    _, w37 = g2.row(3)
    _, w73 = g2.row(7)
    assert w37[0] == 2.5 and w73[0] == 2.5


def test_self_loops_dropped_on_build():
    g = gc.build_graph(3, np.array([0, 1]), np.array([0, 2]), np.array([1.0, 1.0]))
    assert g.num_entries == 2
    cols, _ = g.row(0)
    assert cols.size == 0


def test_build_rejects_out_of_range():
    with pytest.raises(gc.ValidationError):
        gc.build_graph(3, np.array([0]), np.array([3]), np.array([1.0]))


@given(st.integers(2, 12), st.integers(0, 30), st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_build_graph_invariants(n, m, seed):
    rng = np.random.default_rng(seed)
    src = rng.integers(0, n, size=m)
    dst = rng.integers(0, n, size=m)
    w = rng.uniform(0.1, 3.0, size=m)
    g = gc.build_graph(n, src, dst, w)
    assert np.all(np.diff(g.row_ptr) >= 0)
    assert g.row_ptr[-1] == g.num_entries
    if g.num_entries:
        assert g.col_idx.max() < n
    dense = g.to_dense()
    np.testing.assert_array_equal(dense, dense.T)  # symmetric, same weights
    assert np.all(np.diag(dense) == 0)
    # no duplicates: CSR stores each (i, j) once
    for i in range(n):
        cols, _ = g.row(i)
        assert np.unique(cols).size == cols.size


# --- normalize --------------------------------------------------------------

def test_normalize_two_node_single_edge():
    g = gc.build_graph(2, np.array([0]), np.array([1]), np.array([1.0]))
    norm = gc.normalize(g)
    np.testing.assert_allclose(norm.to_dense(), np.full((2, 2), 0.5), atol=1e-15)


def test_normalize_edgeless_graph_is_identity():
    g = gc.build_graph(3, np.array([], dtype=np.int64),
                       np.array([], dtype=np.int64), np.array([]))
    norm = gc.normalize(g)
    np.testing.assert_array_equal(norm.to_dense(), np.eye(3))


def test_normalize_matches_dense_oracle_on_random_graph():
    rng = np.random.default_rng(0)
    src, dst, w = random_graph(rng, 10, weighted=True)
    g = gc.build_graph(10, src, dst, w)
    norm = gc.normalize(g)
    np.testing.assert_allclose(norm.to_dense(), dense_normalize_oracle(g.to_dense()),
                               atol=1e-12)


def test_normalize_adds_exactly_n_entries():
    rng = np.random.default_rng(1)
    src, dst, w = random_graph(rng, 15)
    g = gc.build_graph(15, src, dst, w)
    norm = gc.normalize(g)
    assert norm.num_entries == g.num_entries + 15


@given(st.integers(1, 10), st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_normalize_symmetric_with_weights_in_unit_interval(n, seed):
    rng = np.random.default_rng(seed)
    src, dst, w = random_graph(rng, n, edge_prob=0.4, weighted=True)
    norm = gc.normalize(gc.build_graph(n, src, dst, w))
    dense = norm.to_dense()
    np.testing.assert_allclose(dense, dense.T, atol=1e-15)
    assert np.all(norm.weights > 0) and np.all(norm.weights <= 1.0)
    assert np.all(np.diag(dense) > 0)  # every node has a self-loop


def test_isolated_node_self_loop_weight_is_one():
    g = gc.build_graph(3, np.array([0]), np.array([1]), np.array([1.0]))
    dense = gc.normalize(g).to_dense()
    assert dense[2, 2] == 1.0


# --- propagate ---------------------------------------------------------------

def test_propagate_identity_on_edgeless_graph():
    g = gc.build_graph(4, np.array([], dtype=np.int64),
                       np.array([], dtype=np.int64), np.array([]))
    x = np.random.default_rng(2).normal(size=(4, 3))
    stack = gc.propagate(gc.normalize(g), x, K=3)
    for k in range(4):
        np.testing.assert_allclose(stack.layers[k], x, atol=1e-15)


def test_propagate_two_node_half_weights():
    g = gc.build_graph(2, np.array([0]), np.array([1]), np.array([1.0]))
    stack = gc.propagate(gc.normalize(g), np.eye(2), K=1)
    np.testing.assert_allclose(stack.layers[1], np.full((2, 2), 0.5), atol=1e-15)


def test_propagate_matches_dense_oracle():
    rng = np.random.default_rng(3)
    src, dst, w = random_graph(rng, 20, weighted=True)
    norm = gc.normalize(gc.build_graph(20, src, dst, w))
    x = rng.normal(size=(20, 5))
    stack = gc.propagate(norm, x, K=2)
    ahat = norm.to_dense()
    np.testing.assert_allclose(stack.layers[2], ahat @ (ahat @ x), atol=1e-10)


def test_propagate_prefix_consistency():
    rng = np.random.default_rng(4)
    src, dst, w = random_graph(rng, 12)
    norm = gc.normalize(gc.build_graph(12, src, dst, w))
    x = rng.normal(size=(12, 4))
    s3 = gc.propagate(norm, x, K=3)
    s2 = gc.propagate(norm, x, K=2)
    for k in range(3):
        np.testing.assert_array_equal(s3.layers[k], s2.layers[k])


def test_propagate_preserves_shape_and_layer_zero_identity():
    rng = np.random.default_rng(5)
    src, dst, w = random_graph(rng, 9)
    norm = gc.normalize(gc.build_graph(9, src, dst, w))
    x = rng.normal(size=(9, 7))
    stack = gc.propagate(norm, x, K=2)
    assert stack.layers[0] is x
    assert all(layer.shape == (9, 7) for layer in stack.layers)


def test_propagate_dimension_mismatch():
    g = gc.normalize(gc.build_graph(3, np.array([0]), np.array([1]), np.array([1.0])))
    with pytest.raises(gc.ValidationError):
        gc.propagate(g, np.zeros((4, 2)), K=1)


# --- class_statistics ---------------------------------------------------------

def make_stack(z):
    return gc.PropagationStack(0, [np.asarray(z, dtype=np.float64)])


def test_single_member_class_zero_std():
    z = np.array([[1.0, 2.0], [5.0, 5.0], [9.0, 1.0]])
    labels = np.array([0, 1, 1])
    stats = gc.class_statistics(make_stack(z), labels, np.array([0, 1, 2]))
    np.testing.assert_array_equal(stats.std[0], [0.0, 0.0])
    np.testing.assert_array_equal(stats.mean[0], [1.0, 2.0])


def test_identical_rows_zero_std():
    z = np.array([[2.0, 3.0], [2.0, 3.0]])
    stats = gc.class_statistics(make_stack(z), np.array([4, 4]), np.array([0, 1]))
    np.testing.assert_array_equal(stats.std[-1], [0.0, 0.0])
    np.testing.assert_array_equal(stats.mean[-1], [2.0, 3.0])
    assert stats.skipped == [0, 1, 2, 3]


def test_class_weight_ratio():
    labels = np.array([0] * 20 + [1] * 5)
    z = np.zeros((25, 2))
    stats = gc.class_statistics(make_stack(z), labels, np.arange(25))
    assert stats.weight[0] == 1.0
    assert stats.weight[1] == pytest.approx(0.25)


def test_statistics_match_bruteforce():
    rng = np.random.default_rng(6)
    z = rng.normal(size=(30, 4))
    labels = rng.integers(0, 3, size=30)
    mask = np.arange(0, 30, 2)
    stats = gc.class_statistics(make_stack(z), labels, mask)
    for idx, c in enumerate(stats.classes):
        rows = [z[i] for i in mask if labels[i] == c]
        np.testing.assert_allclose(stats.mean[idx], np.mean(rows, axis=0), atol=1e-12)
        np.testing.assert_allclose(stats.std[idx], np.std(rows, axis=0), atol=1e-12)


def test_statistics_permutation_invariance():
    rng = np.random.default_rng(7)
    z = rng.normal(size=(20, 3))
    labels = rng.integers(0, 2, size=20)
    perm = rng.permutation(20)
    s1 = gc.class_statistics(make_stack(z), labels, np.arange(20))
    s2 = gc.class_statistics(make_stack(z[perm]), labels[perm], np.arange(20))
    np.testing.assert_allclose(s1.mean, s2.mean, atol=1e-12)
    np.testing.assert_allclose(s1.std, s2.std, atol=1e-12)
    np.testing.assert_array_equal(s1.weight, s2.weight)


def test_sample_std_flag():
    z = np.array([[0.0], [2.0]])
    pop = gc.class_statistics(make_stack(z), np.array([0, 0]), np.array([0, 1]))
    samp = gc.class_statistics(make_stack(z), np.array([0, 0]), np.array([0, 1]),
                               sample_std=True)
    assert pop.std[0, 0] == pytest.approx(1.0)
    assert samp.std[0, 0] == pytest.approx(np.sqrt(2.0))


def test_statistics_reject_unlabeled_mask():
    with pytest.raises(gc.ValidationError):
        gc.class_statistics(make_stack(np.zeros((2, 2))),
                            np.array([0, gc.UNLABELED]), np.array([0, 1]))


# --- dataset directory I/O -----------------------------------------------------

def write_tiny_dataset(directory, mode="transductive"):
    rng = np.random.default_rng(8)
    features = rng.normal(size=(6, 3)).astype(np.float32)
    labels = np.array([0, 0, 1, 1, 2, gc.UNLABELED])
    gc.write_dataset_dir(
        directory,
        features=features,
        src=np.array([0, 1, 2, 4, 1, 0]),
        dst=np.array([1, 0, 3, 5, 2, 2]),
        weights=np.array([1.0, 1.0, 2.0, 0.5, 1.0, 1.0], dtype=np.float32),
        labels=labels,
        splits={"train": [0, 2, 4], "val": [1, 3], "test": [5]},
        num_classes=3,
        mode=mode,
    )
    return features, labels


def test_roundtrip_tiny_dataset(tmp_path):
    features, labels = write_tiny_dataset(tmp_path)
    ds = gc.load_dataset(tmp_path)
    assert ds.num_nodes == 6 and ds.num_features == 3 and ds.num_classes == 3
    np.testing.assert_array_equal(ds.features, features)
    np.testing.assert_array_equal(ds.labels, labels)
    np.testing.assert_array_equal(ds.splits["train"], [0, 2, 4])
    # 5 unique undirected pairs stored both directions; (0,1) deduplicated
    assert ds.graph.num_entries == 10


def test_empty_edges_dataset_is_valid(tmp_path):
    gc.write_dataset_dir(
        tmp_path,
        features=np.zeros((3, 2), dtype=np.float32),
        src=np.array([], dtype=np.int64), dst=np.array([], dtype=np.int64),
        weights=np.array([], dtype=np.float32),
        labels=np.array([0, 1, 0]),
        splits={"train": [0, 1], "val": [], "test": [2]},
        num_classes=2,
    )
    ds = gc.load_dataset(tmp_path)
    assert ds.graph.num_entries == 0
    norm = gc.normalize(ds.graph)
    np.testing.assert_array_equal(norm.to_dense(), np.eye(3))


def test_bad_magic_reports_file_and_offset(tmp_path):
    write_tiny_dataset(tmp_path)
    raw = (tmp_path / "features.bin").read_bytes()
    (tmp_path / "features.bin").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(gc.FormatError) as exc:
        gc.load_dataset(tmp_path)
    assert "features.bin" in str(exc.value)
    assert "byte 0" in str(exc.value)


def test_truncated_edges_reports_offset(tmp_path):
    write_tiny_dataset(tmp_path)
    raw = (tmp_path / "edges.bin").read_bytes()
    (tmp_path / "edges.bin").write_bytes(raw[:-5])
    with pytest.raises(gc.FormatError) as exc:
        gc.load_dataset(tmp_path)
    assert "edges.bin" in str(exc.value)


def test_out_of_range_split_rejected(tmp_path):
    write_tiny_dataset(tmp_path)
    splits = json.loads((tmp_path / "splits.json").read_text())
    splits["test"] = [99]
    (tmp_path / "splits.json").write_text(json.dumps(splits))
    with pytest.raises(gc.ValidationError):
        gc.load_dataset(tmp_path)


def test_overlapping_splits_rejected(tmp_path):
    write_tiny_dataset(tmp_path)
    splits = json.loads((tmp_path / "splits.json").read_text())
    splits["val"] = [0, 3]
    (tmp_path / "splits.json").write_text(json.dumps(splits))
    with pytest.raises(gc.ValidationError):
        gc.load_dataset(tmp_path)


def test_unlabeled_train_node_rejected(tmp_path):
    write_tiny_dataset(tmp_path)
    splits = json.loads((tmp_path / "splits.json").read_text())
    splits["train"] = [0, 5]
    splits["test"] = []
    (tmp_path / "splits.json").write_text(json.dumps(splits))
    with pytest.raises(gc.ValidationError):
        gc.load_dataset(tmp_path)


def test_missing_file_reported(tmp_path):
    write_tiny_dataset(tmp_path)
    (tmp_path / "labels.bin").unlink()
    with pytest.raises(gc.FormatError) as exc:
        gc.load_dataset(tmp_path)
    assert "labels.bin" in str(exc.value)


# --- inductive view -------------------------------------------------------------

def test_condensation_view_transductive_is_identity(tmp_path):
    write_tiny_dataset(tmp_path)
    ds = gc.load_dataset(tmp_path)
    assert gc.condensation_view(ds) is ds


def test_condensation_view_inductive_induces_train_subgraph(tmp_path):
    write_tiny_dataset(tmp_path, mode="inductive")
    ds = gc.load_dataset(tmp_path)
    view = gc.condensation_view(ds)
    assert view.num_nodes == 3
    np.testing.assert_array_equal(view.labels, [0, 1, 2])
    # original edges among train nodes {0,2,4}: only (0,2) survives
    dense = view.graph.to_dense()
    assert dense[0, 1] == 1.0 and dense[1, 0] == 1.0
    assert dense.sum() == 2.0
    np.testing.assert_array_equal(view.features, ds.features[[0, 2, 4]])
