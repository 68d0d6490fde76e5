from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_dictionary
from gprsparse.classify import (ClassifierModel, ClassifierParams, HaloSpec, confusion, extract_features,
                                halo_scores, map_grid, palette, predict, read_halos, read_map_csv,
                                render_map, restrict_dictionary, sample_rows, subsample_experiment,
                                train_classifier, write_halos)
from gprsparse.sparse_coding import StopRule


def toy(seed=0, n=40, K=6):
    """Two linearly separable classes in the positive orthant."""
    rng = np.random.default_rng(seed)
    F = rng.uniform(0, 1, (K, n))
    labels = np.arange(n) % 2
    F[0, labels == 0] += 3
    F[1, labels == 1] += 3
    return F, labels


# --- features ---


def test_features_of_scaled_atom_and_duplicates():
    rng = np.random.default_rng(0)
    D = random_dictionary(rng, 20, 30)
    Y = np.column_stack([3 * D[:, 7], rng.standard_normal(20), rng.standard_normal(20)])
    Y[:, 2] = Y[:, 1]
    X = extract_features(Y, D, StopRule(max_sparsity=4)).X
    assert np.flatnonzero(X[:, 0]).tolist() == [7] and X[7, 0] == pytest.approx(3)
    assert np.array_equal(X[:, 1], X[:, 2])
    assert np.all(np.count_nonzero(X, axis=0) <= 4)
    with pytest.raises(ValueError, match="samples"):
        extract_features(Y[:10], D)


# --- training and prediction ---


def test_separable_toy_fits_exactly():
    F, labels = toy()
    model = train_classifier(F, labels)
    assert model.training_accuracy == 1.0
    assert np.array_equal(predict(model, F), labels)
    assert model.W.shape == (2, 6)


def test_single_class_rejected():
    with pytest.raises(ValueError, match="class"):
        train_classifier(np.ones((3, 4)), np.zeros(4, dtype=int))


def test_training_order_does_not_matter():
    F, labels = toy(1, n=30)
    perm = np.random.default_rng(2).permutation(30)
    a = train_classifier(F, labels, ClassifierParams(seed=5))
    b = train_classifier(F[:, perm], labels[perm], ClassifierParams(seed=5))
    assert np.array_equal(a.W, b.W) and np.array_equal(a.b, b.b)


def test_zero_feature_goes_to_largest_bias():
    model = ClassifierModel(np.ones((3, 4)), np.array([0.1, 0.7, 0.3]), ("a", "b", "c"))
    assert predict(model, np.zeros(4)).tolist() == [1]


def test_ties_go_to_lowest_index():
    model = ClassifierModel(np.zeros((3, 2)), np.array([0.5, 0.5, 0.5]), ("a", "b", "c"))
    assert predict(model, np.ones(2)).tolist() == [0]


def test_batch_prediction_equals_per_item():
    F, labels = toy(3)
    model = train_classifier(F, labels)
    batch = predict(model, F)
    single = [int(predict(model, F[:, j])[0]) for j in range(F.shape[1])]
    assert batch.tolist() == single


def test_model_round_trip_and_shape_check():
    F, labels = toy(4)
    model = train_classifier(F, labels, class_names=("x", "y"))
    back = ClassifierModel.from_dict(model.to_dict())
    assert np.array_equal(back.W, model.W) and back.class_names == ("x", "y")
    with pytest.raises(ValueError, match="length"):
        predict(model, np.ones(5))


def test_params_validation():
    with pytest.raises(ValueError):
        ClassifierParams(C=0)
    with pytest.raises(ValueError):
        ClassifierParams(epochs=0)


def test_prediction_invariant_to_profile_rescaling(dataset):
    rng = np.random.default_rng(6)
    cols = rng.choice(dataset.L, 80, replace=False)
    D = dataset.Y[:, cols] / np.linalg.norm(dataset.Y[:, cols], axis=0)
    feats = extract_features(dataset.Y, D)
    model = train_classifier(feats, dataset.labels, ClassifierParams(epochs=5))
    Y = dataset.Y[:, :100]
    base = predict(model, extract_features(Y, D))
    for c in (0.01, 3.7, 250.0):
        assert np.array_equal(predict(model, extract_features(c * Y, D)), base)


# --- confusion ---


def test_confusion_examples():
    truth = np.array([0, 1, 2, 1, 0, 2])
    cm = confusion(truth, truth, ("a", "b", "c"))
    assert np.array_equal(cm.matrix, np.eye(3)) and cm.accuracy == 1.0
    cm0 = confusion(np.zeros(6, dtype=int), truth, ("a", "b", "c"))
    assert np.array_equal(cm0.matrix[0], np.ones(3)) and np.all(cm0.matrix[1:] == 0)
    with pytest.raises(ValueError):
        confusion([0, 1], [0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=60))
def test_confusion_matches_tally(pairs):
    pred, truth = map(np.array, zip(*pairs))
    cm = confusion(pred, truth, ("a", "b", "c"))
    for r in range(3):
        for c in range(3):
            assert cm.counts[r, c] == sum(1 for p, t in pairs if p == r and t == c)
    sums = cm.matrix.sum(axis=0)
    present = np.isin(np.arange(3), truth)
    np.testing.assert_allclose(sums[present], 1.0, atol=1e-9)
    assert np.array_equal(cm.pcc, np.diag(cm.matrix))


# --- halos ---


def test_halo_perfect_map():
    grid = np.zeros((10, 4), dtype=int)
    h1 = HaloSpec.rectangle("T1", 1, 1, 0, 2, 1)
    h2 = HaloSpec.rectangle("T2", 2, 6, 1, 8, 3)
    for h in (h1, h2):
        for i, j in h.pixels:
            grid[i, j] = h.label
    s = halo_scores(grid, [h1, h2])
    assert s.pcc_mines == {1: 1.0, 2: 1.0} and s.pcc_clutter == 1.0
    assert s.p_d == 1.0 and s.p_fa == 0.0


def test_halo_two_thirds_boundary():
    halo = HaloSpec.rectangle("T", 1, 0, 0, 2, 0)  # three pixels
    grid = np.zeros((5, 1), dtype=int)
    grid[0, 0] = grid[1, 0] = 3  # two of three labelled as some mine class
    assert halo_scores(grid, [halo]).detected == {"T": True}
    grid[1, 0] = 0
    assert halo_scores(grid, [halo]).detected == {"T": False}
    assert halo_scores(grid, [halo], threshold=Fraction(1, 3)).detected == {"T": True}


def test_single_false_alarm_pixel():
    halo = HaloSpec.rectangle("T", 1, 0, 0, 1, 1)
    grid = np.zeros((6, 5), dtype=int)
    grid[4, 4] = 2
    s = halo_scores(grid, [halo])
    assert s.p_fa == pytest.approx(1 / 26)
    assert s.pcc_clutter == pytest.approx(25 / 26)


def test_halo_validation():
    with pytest.raises(ValueError):
        HaloSpec("T", 1, ())
    with pytest.raises(ValueError, match="outside"):
        halo_scores(np.zeros((3, 3)), [HaloSpec.rectangle("T", 1, 2, 2, 3, 3)])
    a, b = HaloSpec.rectangle("A", 1, 0, 0, 1, 1), HaloSpec.rectangle("B", 1, 1, 1, 2, 2)
    with pytest.raises(ValueError, match="overlaps"):
        halo_scores(np.zeros((4, 4)), [a, b])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_detection_monotone_under_mine_flips(seed):
    rng = np.random.default_rng(seed)
    halos = [HaloSpec.rectangle("A", 1, 0, 0, 2, 2), HaloSpec.rectangle("B", 2, 5, 0, 7, 1)]
    grid = rng.choice([0, 1, 2], size=(9, 3), p=[0.6, 0.2, 0.2])
    prev = halo_scores(grid, halos).p_d
    px = [p for h in halos for p in h.pixels]
    for k in rng.permutation(len(px)):
        i, j = px[k]
        grid[i, j] = 1
        s = halo_scores(grid, halos)
        assert s.p_d >= prev and 0 <= s.p_fa <= 1
        prev = s.p_d


def test_halo_file_round_trip(tmp_path):
    names = ("clutter", "large", "medium")
    halos = [HaloSpec.rectangle("T1", 1, 0, 0, 2, 3), HaloSpec.rectangle("T2", 2, 5, 1, 5, 4)]
    write_halos(tmp_path / "h.csv", halos, names)
    assert read_halos(tmp_path / "h.csv", names) == halos
    (tmp_path / "bad.csv").write_text("T,tiny,0,0,1,1\n")
    with pytest.raises(ValueError, match="unknown class"):
        read_halos(tmp_path / "bad.csv", names)


# --- reduced sampling ---


def test_sample_rows():
    a = sample_rows(211, 0.5, 3)
    assert a.size == 106 and np.array_equal(a, sample_rows(211, 0.5, 3))
    assert np.all(np.diff(a) > 0)
    assert np.array_equal(sample_rows(10, 1.0, 0), np.arange(10))
    for bad in (0.0, 1.5):
        with pytest.raises(ValueError):
            sample_rows(10, bad, 0)


def test_restrict_dictionary():
    D = random_dictionary(np.random.default_rng(7), 12, 5)
    assert restrict_dictionary(D, np.arange(12)) is D
    sub = restrict_dictionary(D, [0, 3, 4, 9])
    assert sub.shape == (4, 5)
    np.testing.assert_allclose(np.linalg.norm(sub, axis=0), 1.0, atol=1e-12)


def test_subsample_rate_one_reproduces_baseline(dataset):
    rng = np.random.default_rng(8)
    D = random_dictionary(rng, dataset.M, 60)
    model = train_classifier(extract_features(dataset.Y, D), dataset.labels, ClassifierParams(epochs=3))
    base = predict(model, extract_features(dataset.Y, D))
    res = subsample_experiment(dataset.Y, dataset.labels, D, lambda rows, Ds: model, 1.0)
    assert np.array_equal(res.predictions, base)
    assert np.array_equal(res.confusion.counts, confusion(base, dataset.labels, model.class_names).counts)


# --- maps ---


def test_map_layout_and_round_trip(tmp_path):
    nx, ny = 7, 3
    pred = np.random.default_rng(9).integers(0, 4, nx * ny)
    grid = render_map(pred, nx, ny, tmp_path / "map", 4)
    assert grid.shape == (nx, ny)
    assert grid[2, 1] == pred[1 * nx + 2]
    assert np.array_equal(read_map_csv(tmp_path / "map.csv"), grid)
    raw = (tmp_path / "map.pgm").read_bytes()
    header = b"P5\n7 3\n255\n"
    assert raw.startswith(header) and len(raw) == len(header) + nx * ny
    pix = np.frombuffer(raw[len(header):], dtype=np.uint8).reshape(ny, nx)
    assert np.array_equal(pix, palette(4)[grid.T])


def test_uniform_map_and_errors(tmp_path):
    grid = render_map(np.zeros(12, dtype=int), 4, 3, tmp_path / "m", 4)
    assert np.all(grid == 0)
    assert set((tmp_path / "m.pgm").read_bytes()[len(b"P5\n4 3\n255\n"):]) == {0}
    with pytest.raises(ValueError):
        map_grid(np.zeros(5), 2, 3)
    with pytest.raises(ValueError):
        render_map(np.full(6, 4), 2, 3, tmp_path / "x", 4)
    assert palette(4).tolist() == [0, 85, 170, 255]
