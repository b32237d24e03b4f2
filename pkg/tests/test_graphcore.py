import numpy as np
import pytest

from imbalgraph.graphcore import (TEST, TRAIN, UNLABELED, VAL, CsrBlock, Dataset,
                                  FeatureMatrix, GraphConstructionError, LabelSet,
                                  SparseGraph, build_graph, graph_from_relations,
                                  imbalance_ratio)


def test_path_graph_symmetrized():
    g = build_graph(3, [(0, 1, 0), (1, 2, 0)])
    assert list(g.neighbors(1)) == [0, 2]
    assert list(g.neighbors(0)) == [1]
    assert list(g.neighbors(2)) == [1]


def test_empty_graph_valid():
    g = build_graph(4, [])
    assert g.num_relations == 1
    assert np.array_equal(g.relations[0].indptr, np.zeros(5, dtype=np.int64))
    assert g.relations[0].num_entries == 0


def test_duplicate_edges_collapse():
    g = build_graph(2, [(0, 1, 0), (0, 1, 0)])
    assert g.relations[0].num_entries == 2  # one per direction
    assert list(g.neighbors(0)) == [1]


def test_self_loops_dropped():
    g = build_graph(3, [(0, 0, 0), (0, 1, 0)])
    assert list(g.neighbors(0)) == [1]


def test_directed_storage():
    g = build_graph(3, [(0, 1, 0)], symmetrize=False)
    assert list(g.neighbors(0)) == [1]
    assert list(g.neighbors(1)) == []


def test_out_of_range_edge_named():
    with pytest.raises(GraphConstructionError, match=r"\(0, 5, relation 0\)"):
        build_graph(3, [(0, 5, 0)])


def test_relation_ids_must_be_contiguous():
    with pytest.raises(GraphConstructionError, match="contiguous"):
        build_graph(3, [(0, 1, 0), (1, 2, 2)])


def test_multi_relation_blocks_are_separate():
    g = build_graph(3, [(0, 1, 0), (1, 2, 1)])
    assert g.num_relations == 2
    assert list(g.neighbors(1, relation=0)) == [0]
    assert list(g.neighbors(1, relation=1)) == [2]


def test_round_trip_closure_order_independent():
    rng = np.random.default_rng(7)
    n = 30
    edges = [(int(a), int(b), 0) for a, b in rng.integers(0, n, size=(200, 2))]
    expected = set()
    for a, b, _ in edges:
        if a != b:
            expected.add((a, b))
            expected.add((b, a))
    for perm_seed in (0, 1):
        order = np.random.default_rng(perm_seed).permutation(len(edges))
        g = build_graph(n, [edges[i] for i in order])
        assert set(g.edges(0)) == expected


def test_csr_block_rejects_bad_offsets():
    with pytest.raises(GraphConstructionError):
        CsrBlock(indptr=np.array([0, 2, 1]), indices=np.array([0, 1]))
    with pytest.raises(GraphConstructionError):
        CsrBlock(indptr=np.array([0, 1]), indices=np.array([0, 1]))


def test_csr_block_requires_sorted_rows():
    with pytest.raises(GraphConstructionError, match="strictly increasing"):
        CsrBlock(indptr=np.array([0, 2, 2]), indices=np.array([1, 0]))


def test_sparse_graph_rejects_explicit_self_loop():
    block = CsrBlock(indptr=np.array([0, 1, 1]), indices=np.array([0]))
    with pytest.raises(GraphConstructionError, match="self-loop"):
        SparseGraph(num_nodes=2, relations=(block,))


def test_graph_from_relations_preserves_relation_count():
    g = graph_from_relations(3, [np.array([[0, 1], [1, 0]]), np.empty((0, 2), np.int64)])
    assert g.num_relations == 2
    assert g.relations[1].num_entries == 0


def test_feature_matrix_rejects_nan():
    with pytest.raises(GraphConstructionError, match="non-finite"):
        FeatureMatrix(np.array([[1.0, np.nan]]))


def test_feature_matrix_immutable():
    fm = FeatureMatrix(np.ones((2, 2)))
    with pytest.raises(ValueError):
        fm.data[0, 0] = 5.0


def test_labelset_validation():
    LabelSet(labels=[0, 1, -1], split=[TRAIN, TEST, UNLABELED], num_classes=2)
    with pytest.raises(GraphConstructionError, match="sentinel"):
        LabelSet(labels=[0, 1, 1], split=[TRAIN, TEST, UNLABELED], num_classes=2)
    with pytest.raises(GraphConstructionError, match="outside"):
        LabelSet(labels=[0, 5], split=[TRAIN, TEST], num_classes=2)
    with pytest.raises(GraphConstructionError, match="tagged train"):
        LabelSet(labels=[0, 1], split=[TRAIN, VAL], synthetic=[False, True], num_classes=2)
    with pytest.raises(GraphConstructionError, match="2 classes"):
        LabelSet(labels=[0, 0], split=[TRAIN, TRAIN], num_classes=1)


# Label counts from public bot-detection corpora; ratios are known to
# three decimals.
KNOWN_RATIOS = [
    (139943, 860057, 0.163),
    (42446, 8092, 0.191),
    (10894, 3474, 0.319),
    (2830, 7554, 0.375),
    (875, 499, 0.570),
    (3351, 1950, 0.582),
    (1090, 1394, 0.782),
    (6589, 5237, 0.795),
]


def labelset_from_counts(count_a: int, count_b: int) -> LabelSet:
    labels = np.concatenate([np.zeros(count_a, np.int64), np.ones(count_b, np.int64)])
    return LabelSet(labels=labels, split=np.full(len(labels), TRAIN, np.int8), num_classes=2)


@pytest.mark.parametrize("bots,humans,expected", KNOWN_RATIOS)
def test_imbalance_ratio_known_datasets(bots, humans, expected):
    labels = labelset_from_counts(bots, humans)
    assert imbalance_ratio(labels, 0, 1) == pytest.approx(expected, abs=5e-4)


def test_imbalance_ratio_balanced():
    labels = labelset_from_counts(10, 10)
    assert imbalance_ratio(labels, 0, 1) == 1.0


def test_imbalance_ratio_symmetric_and_permutation_invariant():
    rng = np.random.default_rng(3)
    labels_arr = rng.integers(0, 2, size=50)
    labels_arr[0], labels_arr[1] = 0, 1
    split = np.full(50, TRAIN, np.int8)
    base = LabelSet(labels=labels_arr, split=split, num_classes=2)
    assert imbalance_ratio(base, 0, 1) == imbalance_ratio(base, 1, 0)
    perm = rng.permutation(50)
    shuffled = LabelSet(labels=labels_arr[perm], split=split, num_classes=2)
    assert imbalance_ratio(base, 0, 1) == imbalance_ratio(shuffled, 0, 1)


def test_imbalance_ratio_ignores_synthetic_and_unlabeled():
    labels = LabelSet(
        labels=[0, 0, 1, 1, -1],
        split=[TRAIN, TRAIN, TRAIN, TRAIN, UNLABELED],
        synthetic=[False, True, False, False, False],
        num_classes=2,
    )
    # real labeled counts: one of class 0, two of class 1
    assert imbalance_ratio(labels, 0, 1) == pytest.approx(0.5)


def test_imbalance_ratio_empty_class_errors():
    labels = LabelSet(labels=[0, 0], split=[TRAIN, TRAIN], num_classes=2)
    with pytest.raises(ValueError, match="class 1"):
        imbalance_ratio(labels, 0, 1)


def test_dataset_size_mismatch():
    g = build_graph(3, [(0, 1, 0)])
    fm = FeatureMatrix(np.ones((2, 2)))
    labels = LabelSet(labels=[0, 1, 1], split=[TRAIN] * 3, num_classes=2)
    with pytest.raises(GraphConstructionError, match="mismatch"):
        Dataset(graph=g, features=fm, labels=labels)
