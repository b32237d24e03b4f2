import numpy as np
import pytest

from imbalgraph.classifier import TrainConfig
from imbalgraph.edgegen import (EdgeGenerator, edge_score, noise_experiment, ranking_auc,
                                split_nodes, synthesize_adjacency, train_edge_generator)
from imbalgraph.graphcore import Dataset, FeatureMatrix, LabelSet, build_graph
from imbalgraph.harness import SynthSpec, generate_synth


def test_zero_weight_scores_half():
    gen = EdgeGenerator(weight=np.zeros((3, 3)))
    assert edge_score(gen, np.ones(3), np.ones(3)) == pytest.approx(0.5)


def test_identity_weight_unit_vectors():
    gen = EdgeGenerator(weight=np.eye(4))
    e0 = np.array([1.0, 0.0, 0.0, 0.0])
    assert edge_score(gen, e0, e0) == pytest.approx(1.0 / (1.0 + np.exp(-1.0)), abs=1e-12)


def test_symmetric_weight_symmetric_scores():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(4, 4))
    gen = EdgeGenerator(weight=w + w.T)
    a, b = rng.normal(size=4), rng.normal(size=4)
    assert edge_score(gen, a, b) == pytest.approx(edge_score(gen, b, a), abs=1e-12)


def test_scores_bounded():
    gen = EdgeGenerator(weight=np.full((2, 2), 50.0))
    hi = edge_score(gen, np.full(2, 10.0), np.full(2, 10.0))
    lo = edge_score(gen, np.full(2, 10.0), np.full(2, -10.0))
    assert 0.0 < lo < hi < 1.0


def test_edge_score_dim_mismatch():
    gen = EdgeGenerator(weight=np.eye(3))
    with pytest.raises(ValueError, match="length 3"):
        edge_score(gen, np.ones(2), np.ones(3))


def test_ranking_auc_against_bruteforce():
    rng = np.random.default_rng(1)
    for _ in range(10):
        pos = rng.normal(size=rng.integers(2, 20))
        neg = rng.normal(size=rng.integers(2, 20))
        wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
        assert ranking_auc(pos, neg) == pytest.approx(wins / (len(pos) * len(neg)), abs=1e-12)


def test_ranking_auc_with_ties():
    assert ranking_auc([1.0, 1.0], [1.0, 0.0]) == pytest.approx(0.75)


def test_split_nodes_fraction_arithmetic():
    train, test = split_nodes(107, 0.1, seed=0)
    assert len(train) == 10 and len(test) == 10
    assert not set(train) & set(test)


def planted_dataset(num_groups=10, group_size=6):
    """Nodes share a one-hot feature within a group; edges only inside groups."""
    n = num_groups * group_size
    features = np.zeros((n, num_groups))
    edges = []
    for g in range(num_groups):
        members = list(range(g * group_size, (g + 1) * group_size))
        for m in members:
            features[m, g] = 1.0
        for i, a in enumerate(members):
            for b in members[i + 1:]:
                edges.append((a, b, 0))
    return build_graph(n, edges), FeatureMatrix(features)


def test_generator_learns_planted_structure():
    graph, features = planted_dataset()
    gen = train_edge_generator(features, graph, train_fraction=0.5, seed=0)
    pairs, scores_pos, scores_neg = [], [], []
    for i in range(features.rows):
        for j in range(i + 1, features.rows):
            s = edge_score(gen, features.data[i], features.data[j])
            same = np.argmax(features.data[i]) == np.argmax(features.data[j])
            (scores_pos if same else scores_neg).append(s)
    assert ranking_auc(scores_pos, scores_neg) > 0.9


def test_generator_deterministic():
    graph, features = planted_dataset(num_groups=5)
    a = train_edge_generator(features, graph, train_fraction=0.5, seed=3)
    b = train_edge_generator(features, graph, train_fraction=0.5, seed=3)
    assert np.array_equal(a.weight, b.weight)
    c = train_edge_generator(features, graph, train_fraction=0.5, seed=4)
    assert not np.array_equal(a.weight, c.weight)


def test_generator_needs_edges_among_train_nodes():
    graph = build_graph(30, [(0, 1, 0)])
    features = FeatureMatrix(np.random.default_rng(0).normal(size=(30, 3)))
    with pytest.raises(ValueError, match="no edges"):
        train_edge_generator(features, graph, train_fraction=0.1, seed=1)


def test_synthesize_threshold_one_rejected():
    with pytest.raises(ValueError, match="threshold"):
        EdgeGenerator(weight=np.eye(2), threshold=1.0)


def test_synthesize_high_threshold_empty_graph():
    gen = EdgeGenerator(weight=np.zeros((2, 2)), threshold=0.9)
    graph = synthesize_adjacency(gen, FeatureMatrix(np.random.default_rng(0).normal(size=(6, 2))))
    assert graph.relations[0].num_entries == 0


def test_synthesize_zero_weight_keeps_pairs_up_to_cap():
    gen = EdgeGenerator(weight=np.zeros((2, 2)), threshold=0.5, degree_cap=3)
    graph = synthesize_adjacency(gen, FeatureMatrix(np.random.default_rng(0).normal(size=(8, 2))))
    degrees = graph.degrees(0)
    assert degrees.max() <= 3
    assert degrees.sum() > 0  # boundary inclusive: score 0.5 >= threshold


def test_synthesize_zero_weight_uncapped_is_complete():
    gen = EdgeGenerator(weight=np.zeros((2, 2)), threshold=0.5)
    graph = synthesize_adjacency(gen, FeatureMatrix(np.ones((5, 2))))
    assert all(len(graph.neighbors(i)) == 4 for i in range(5))


def test_synthesize_planted_clusters_intra_dominated():
    rng = np.random.default_rng(2)
    half = 20
    features = np.concatenate([
        rng.normal(loc=+2.0, size=(half, 3)),
        rng.normal(loc=-2.0, size=(half, 3)),
    ])
    gen = EdgeGenerator(weight=np.eye(3), degree_cap=10)
    graph = synthesize_adjacency(gen, FeatureMatrix(features))
    intra = inter = 0
    for u, v in graph.edges(0):
        if (u < half) == (v < half):
            intra += 1
        else:
            inter += 1
    assert intra > inter


def test_synthesized_graph_is_canonical():
    rng = np.random.default_rng(3)
    gen = EdgeGenerator(weight=rng.normal(size=(3, 3)), degree_cap=4)
    graph = synthesize_adjacency(gen, FeatureMatrix(rng.normal(size=(15, 3))))
    block = graph.relations[0]
    rows = block.row_ids()
    dense = np.zeros((15, 15))
    dense[rows, block.indices] = 1.0
    assert np.array_equal(dense, dense.T)  # symmetric storage
    assert not np.any(rows == block.indices)  # no self loops


def quick_cfg():
    return TrainConfig(max_epochs=40, hidden=16, dropout=0.0, early_stop_patience=10)


def test_noise_experiment_oracle_injection_is_fixed_point():
    dataset = generate_synth(SynthSpec(num_nodes=300, intra_p=0.06), seed=0)
    report = noise_experiment(dataset, quick_cfg(), seed=0, synthetic_graph=dataset.graph)
    assert report["acc_original_edges"] == report["acc_synthetic_edges"]
    assert 0.0 < report["edge_auc"] < 1.0


def test_noise_experiment_random_features_auc_near_half():
    rng = np.random.default_rng(4)
    n = 400
    edges = [(int(a), int(b), 0) for a, b in rng.integers(0, n, size=(1500, 2)) if a != b]
    graph = build_graph(n, edges)
    features = FeatureMatrix(rng.normal(size=(n, 8)))
    labels_arr = rng.integers(0, 2, size=n)
    from imbalgraph.harness import draw_split
    split = draw_split(labels_arr, (0.1, 0.1, 0.8), np.random.default_rng(0))
    dataset = Dataset(graph=graph, features=features,
                      labels=LabelSet(labels=labels_arr, split=split, num_classes=2))
    report = noise_experiment(dataset, quick_cfg(), seed=1)
    assert report["edge_auc"] == pytest.approx(0.5, abs=0.05)
