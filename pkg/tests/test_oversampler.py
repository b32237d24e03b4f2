import numpy as np
import pytest

from imbalgraph.graphcore import TEST, TRAIN, VAL, FeatureMatrix, LabelSet
from imbalgraph.oversampler import (LonelyClassError, OversampleConfig, SmotePlan,
                                    apply_plan, knn_same_class, make_plan,
                                    read_plan_csv, write_plan_csv)


def simple_labels(class_counts, split=None):
    labels = np.concatenate([np.full(c, k, np.int64) for k, c in enumerate(class_counts)])
    split_arr = np.full(len(labels), TRAIN, np.int8) if split is None else np.asarray(split, np.int8)
    return LabelSet(labels=labels, split=split_arr, num_classes=len(class_counts))


def test_knn_nearest_on_a_line():
    features = FeatureMatrix(np.array([[0.0], [1.0], [10.0]]))
    labels = LabelSet(labels=[0, 0, 0], split=[TRAIN] * 3, num_classes=2)
    assert list(knn_same_class(features, labels, 0, k=1)) == [1]


def test_knn_tie_breaks_to_lower_index():
    features = FeatureMatrix(np.array([[0.0], [1.0], [-1.0]]))
    labels = LabelSet(labels=[0, 0, 0], split=[TRAIN] * 3, num_classes=2)
    assert list(knn_same_class(features, labels, 0, k=1)) == [1]
    assert list(knn_same_class(features, labels, 0, k=2)) == [1, 2]


def test_knn_truncates_to_peer_count():
    features = FeatureMatrix(np.arange(4, dtype=np.float64).reshape(-1, 1))
    labels = LabelSet(labels=[0] * 4, split=[TRAIN] * 4, num_classes=2)
    assert len(knn_same_class(features, labels, 0, k=99)) == 3


def test_knn_excludes_other_splits_and_classes():
    features = FeatureMatrix(np.array([[0.0], [0.1], [0.2], [0.3]]))
    labels = LabelSet(labels=[0, 0, 0, 1], split=[TRAIN, VAL, TRAIN, TRAIN], num_classes=2)
    assert list(knn_same_class(features, labels, 0, k=3)) == [2]


def test_knn_lonely_class_errors():
    features = FeatureMatrix(np.zeros((2, 1)))
    labels = LabelSet(labels=[0, 1], split=[TRAIN, TRAIN], num_classes=2)
    with pytest.raises(LonelyClassError):
        knn_same_class(features, labels, 0, k=1)


def test_plan_balances_each_deficit_class():
    rng = np.random.default_rng(0)
    labels = simple_labels([9, 3])
    features = FeatureMatrix(rng.normal(size=(12, 4)))
    plan = make_plan(features, labels, OversampleConfig(), seed=1)
    assert len(plan) == 6
    assert np.all(plan.classes == 1)
    assert np.all(plan.deltas >= 0) and np.all(plan.deltas < 1)


def test_plan_empty_when_balanced():
    labels = simple_labels([4, 4])
    features = FeatureMatrix(np.random.default_rng(0).normal(size=(8, 2)))
    assert len(make_plan(features, labels, seed=3)) == 0


def test_plan_deterministic_bit_exact():
    rng = np.random.default_rng(5)
    labels = simple_labels([10, 4, 2])
    features = FeatureMatrix(rng.normal(size=(16, 3)))
    a = make_plan(features, labels, OversampleConfig(k=3), seed=42)
    b = make_plan(features, labels, OversampleConfig(k=3), seed=42)
    for field in ("sources", "neighbors", "deltas", "classes"):
        assert np.array_equal(getattr(a, field), getattr(b, field))
    c = make_plan(features, labels, OversampleConfig(k=3), seed=43)
    assert not (np.array_equal(a.deltas, c.deltas) and np.array_equal(a.sources, c.sources))


def test_plan_neighbor_is_knn_of_source():
    rng = np.random.default_rng(8)
    labels = simple_labels([12, 5])
    features = FeatureMatrix(rng.normal(size=(17, 4)))
    cfg = OversampleConfig(k=3)
    plan = make_plan(features, labels, cfg, seed=0)
    for src, nbr in zip(plan.sources, plan.neighbors):
        assert nbr in knn_same_class(features, labels, int(src), cfg.k)


def test_plan_respects_explicit_target():
    labels = simple_labels([5, 3])
    features = FeatureMatrix(np.random.default_rng(1).normal(size=(8, 2)))
    plan = make_plan(features, labels, OversampleConfig(target=10), seed=0)
    assert int((plan.classes == 0).sum()) == 5
    assert int((plan.classes == 1).sum()) == 7


def test_apply_plan_endpoints_and_midpoint():
    features = FeatureMatrix(np.array([[0.0, 0.0], [2.0, 4.0]]))
    labels = LabelSet(labels=[0, 0], split=[TRAIN, TRAIN], num_classes=2)
    for delta, expected in ((0.0, [0.0, 0.0]), (1.0, [2.0, 4.0]), (0.5, [1.0, 2.0])):
        plan = SmotePlan(sources=[0], neighbors=[1], deltas=[delta], classes=[0], seed=0)
        out, aug = apply_plan(features, labels, plan)
        assert out.data[2] == pytest.approx(expected)
        assert aug.labels[2] == 0
        assert aug.split[2] == TRAIN
        assert bool(aug.synthetic[2])
    assert np.array_equal(features.data, np.array([[0.0, 0.0], [2.0, 4.0]]))


def test_apply_plan_rejects_out_of_range_and_leaky_indices():
    features = FeatureMatrix(np.zeros((3, 2)))
    labels = LabelSet(labels=[0, 0, 0], split=[TRAIN, TRAIN, TEST], num_classes=2)
    with pytest.raises(ValueError, match="out of range"):
        apply_plan(features, labels, SmotePlan([0], [9], [0.5], [0], seed=0))
    with pytest.raises(ValueError, match="real train"):
        apply_plan(features, labels, SmotePlan([0], [2], [0.5], [0], seed=0))


def random_instance(rng):
    num_classes = int(rng.integers(2, 4))
    counts = rng.integers(2, 12, size=num_classes)
    labels_arr = np.concatenate([np.full(c, k, np.int64) for k, c in enumerate(counts)])
    n = len(labels_arr)
    perm = rng.permutation(n)
    labels_arr = labels_arr[perm]
    split = np.full(n, TRAIN, np.int8)
    # sprinkle some val/test nodes while keeping >= 2 train nodes per class
    for cls in range(num_classes):
        members = np.nonzero(labels_arr == cls)[0]
        extra = members[2:]
        for node in extra:
            r = rng.random()
            if r < 0.2:
                split[node] = VAL
            elif r < 0.4:
                split[node] = TEST
    labels = LabelSet(labels=labels_arr, split=split, num_classes=num_classes)
    features = FeatureMatrix(rng.normal(size=(n, int(rng.integers(1, 6)))))
    return features, labels


@pytest.mark.parametrize("chunk", range(4))
def test_smote_property_suite(chunk):
    """Convexity, exact balance, train-only provenance, determinism."""
    rng = np.random.default_rng(1000 + chunk)
    for _ in range(250):
        features, labels = random_instance(rng)
        seed = int(rng.integers(0, 2**63 - 1))
        plan = make_plan(features, labels, OversampleConfig(), seed=seed)
        again = make_plan(features, labels, OversampleConfig(), seed=seed)
        assert np.array_equal(plan.sources, again.sources)
        assert np.array_equal(plan.deltas, again.deltas)

        out, aug = apply_plan(features, labels, plan)
        counts = aug.train_class_counts(include_synthetic=True)
        assert np.all(counts == counts.max())  # exact balance

        train_real = labels.train_mask & labels.real_mask
        assert train_real[plan.sources].all() and train_real[plan.neighbors].all()

        lo = np.minimum(features.data[plan.sources], features.data[plan.neighbors])
        hi = np.maximum(features.data[plan.sources], features.data[plan.neighbors])
        synth_rows = out.data[len(labels):]
        assert np.all(synth_rows >= lo - 1e-12) and np.all(synth_rows <= hi + 1e-12)

        assert not aug.synthetic[: len(labels)].any()
        assert aug.synthetic[len(labels):].all()


def test_same_plan_aligns_across_channels():
    rng = np.random.default_rng(77)
    labels = simple_labels([8, 3])
    base = FeatureMatrix(rng.normal(size=(11, 4)))
    other = FeatureMatrix(rng.normal(size=(11, 6)))
    plan = make_plan(base, labels, seed=5)
    out_a, aug_a = apply_plan(base, labels, plan)
    out_b, aug_b = apply_plan(other, labels, plan)
    assert np.array_equal(aug_a.labels, aug_b.labels)
    coeff = plan.deltas[:, None]
    assert out_b.data[11:] == pytest.approx(
        (1 - coeff) * other.data[plan.sources] + coeff * other.data[plan.neighbors]
    )


def test_lonely_class_fallback_duplicates_with_jitter(caplog):
    rng = np.random.default_rng(2)
    labels = simple_labels([6, 1])
    features = FeatureMatrix(rng.normal(size=(7, 3)))
    with caplog.at_level("WARNING"):
        plan = make_plan(features, labels, seed=9)
    assert "single train node" in caplog.text
    assert len(plan) == 5
    assert np.all(plan.sources == 6) and np.all(plan.neighbors == 6)
    out, aug = apply_plan(features, labels, plan)
    synth = out.data[7:]
    assert not np.allclose(synth, features.data[6])  # jitter moved the copies
    spread = np.abs(synth - features.data[6]).max()
    assert spread < 0.2  # jitter is 1% of the train std
    out2, _ = apply_plan(features, labels, plan)
    assert np.array_equal(out.data, out2.data)


def test_empty_train_set_errors():
    features = FeatureMatrix(np.zeros((2, 1)))
    labels = LabelSet(labels=[0, 1], split=[TEST, TEST], num_classes=2)
    with pytest.raises(ValueError, match="train"):
        make_plan(features, labels, seed=0)


def test_plan_csv_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    labels = simple_labels([7, 2])
    features = FeatureMatrix(rng.normal(size=(9, 2)))
    plan = make_plan(features, labels, seed=11)
    path = tmp_path / "plan.csv"
    write_plan_csv(path, plan)
    loaded = read_plan_csv(path, seed=11)
    assert np.array_equal(loaded.sources, plan.sources)
    assert np.array_equal(loaded.neighbors, plan.neighbors)
    assert np.array_equal(loaded.deltas, plan.deltas)
    assert np.array_equal(loaded.classes, plan.classes)


def test_config_validation():
    with pytest.raises(ValueError):
        OversampleConfig(k=0)
    with pytest.raises(ValueError):
        SmotePlan([0], [1], [1.5], [0], seed=0)
