"""Sparse-code features, a linear one-vs-rest classifier and map scoring."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .data import Dictionary, LabeledDataset, SparseCodeMatrix, normalize_columns
from .sparse_coding import StopRule, batch_omp

DEFAULT_STOP = StopRule(max_sparsity=4)
TWO_THIRDS = Fraction(2, 3)


def extract_features(Y, D, stop: StopRule = DEFAULT_STOP) -> SparseCodeMatrix:
    """Batch-OMP codes of the columns of ``Y``; column ``j`` is the feature of profile ``j``.

    The full length-``K`` coefficient vector, zeros included, is the
    feature.
    """
    Y = Y.Y if isinstance(Y, LabeledDataset) else np.asarray(Y, dtype=np.float64)
    D = D.D if isinstance(D, Dictionary) else np.asarray(D, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != D.shape[0]:
        raise ValueError(f"profiles have {Y.shape[0]} samples but atoms have {D.shape[0]}")
    return batch_omp(Y, D, stop)


def _feature_matrix(features):
    F = features.X if isinstance(features, SparseCodeMatrix) else np.asarray(features, dtype=np.float64)
    if F.ndim == 1:
        F = F[:, None]
    return F


def _unit(F):
    """Columns scaled to unit norm; zero columns stay zero."""
    return normalize_columns(F)[0]


@dataclass(frozen=True)
class ClassifierParams:
    """Hyper-parameters of :func:`train_classifier`.

    ``C`` plays the role of the SVM box constraint: the L2 penalty is
    ``1 / (C n)`` for ``n`` training samples.
    """

    C: float = 10.0
    epochs: int = 30
    seed: int = 0

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass
class ClassifierModel:
    """One weight row and one bias per class.

    Feature vectors are scaled to unit norm before scoring, so a class
    decision depends on the direction of a code, not on its magnitude.
    """

    W: np.ndarray
    b: np.ndarray
    class_names: tuple[str, ...]
    params: ClassifierParams = field(default_factory=ClassifierParams)
    training_accuracy: float = float("nan")

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ValueError("W must be (classes, K) and b (classes,)")
        if len(self.class_names) != self.W.shape[0]:
            raise ValueError("one class name per weight row is required")

    @property
    def K(self):
        return self.W.shape[1]

    def scores(self, features):
        F = _feature_matrix(features)
        if F.shape[0] != self.K:
            raise ValueError(f"features have length {F.shape[0]}, model expects {self.K}")
        return self.W @ _unit(F) + self.b[:, None]

    def to_dict(self):
        return {"W": self.W.tolist(), "b": self.b.tolist(), "class_names": list(self.class_names),
                "params": {"C": self.params.C, "epochs": self.params.epochs, "seed": self.params.seed},
                "training_accuracy": self.training_accuracy}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["W"], dtype=np.float64), np.array(d["b"], dtype=np.float64),
                   tuple(d["class_names"]), ClassifierParams(**d["params"]),
                   float(d["training_accuracy"]))


def _canonical_order(F, labels):
    """A sample order that depends only on the multiset of (feature, label) pairs."""
    keys = [F[i] for i in range(F.shape[0] - 1, -1, -1)]
    return np.lexsort(keys + [labels]) if keys else np.argsort(labels, kind="stable")


def train_classifier(features, labels, params: ClassifierParams | None = None,
                     class_names=None) -> ClassifierModel:
    """One-vs-rest L2-regularised hinge-loss model fitted by stochastic subgradient descent.

    Every class is fitted against the rest with the Pegasos schedule
    ``eta_t = 1 / (lambda t)`` and ``lambda = 1 / (C n)``. The bias is an
    extra constant feature and is regularised with the weights. Samples
    are first put in a canonical order and then visited in a seeded
    permutation per epoch, so the model does not depend on how the
    training set was ordered.

    Parameters
    ----------
    features : SparseCodeMatrix or (K, n) array
    labels : (n,) integer array
    params : ClassifierParams, optional
    class_names : sequence of str, optional
        Defaults to ``"0", "1", ...`` for ``max(labels) + 1`` classes.
    """
    params = params or ClassifierParams()
    F = _unit(_feature_matrix(features))
    y = np.asarray(labels, dtype=np.int64)
    K, n = F.shape
    if y.shape != (n,):
        raise ValueError(f"{n} feature vectors but {y.size} labels")
    n_cls = int(y.max()) + 1 if class_names is None else len(class_names)
    names = tuple(class_names) if class_names is not None else tuple(str(c) for c in range(n_cls))
    present = np.unique(y)
    if present.size < 2:
        raise ValueError("training needs at least two classes; got "
                         f"{present.size} ({', '.join(names[c] for c in present)})")
    if y.min() < 0 or y.max() >= n_cls:
        raise ValueError("label index outside the class table")

    order = _canonical_order(F, y)
    X = np.vstack([F[:, order], np.ones((1, n))]).T  # (n, K + 1), bias last
    T = np.where(y[order][None, :] == np.arange(n_cls)[:, None], 1.0, -1.0)  # (classes, n)
    lam = 1.0 / (params.C * n)
    rng = np.random.default_rng(params.seed)

    # W = a * V keeps the shrink step O(1)
    V = np.zeros((n_cls, K + 1))
    a = 1.0
    t = 0
    for _ in range(params.epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            x = X[i]
            margin = T[:, i] * (a * (V @ x))
            a *= 1.0 - eta * lam
            if a == 0.0:  # first step: 1 - eta * lam == 0
                V[:] = 0.0
                a = 1.0
            viol = margin < 1.0
            if np.any(viol):
                V[viol] += (eta / a) * T[viol, i][:, None] * x[None, :]
    Wb = a * V
    model = ClassifierModel(Wb[:, :K], Wb[:, K], names, params)
    model.training_accuracy = float(np.mean(predict(model, features) == y))
    return model


def predict(model: ClassifierModel, features) -> np.ndarray:
    """Index of the highest-scoring class; ties go to the lowest index."""
    return np.argmax(model.scores(features), axis=0).astype(np.int64)


# --- scoring -------------------------------------------------------------------


@dataclass
class ConfusionMatrix:
    """Rows are predicted classes, columns are ground-truth classes."""

    counts: np.ndarray
    class_names: tuple[str, ...]

    @property
    def matrix(self):
        """Column-normalised counts; empty ground-truth columns stay zero."""
        tot = self.counts.sum(axis=0)
        return np.divide(self.counts, tot, out=np.zeros(self.counts.shape), where=tot > 0)

    @property
    def pcc(self):
        return np.diag(self.matrix).copy()

    @property
    def accuracy(self):
        n = self.counts.sum()
        return float(np.trace(self.counts) / n) if n else float("nan")


def confusion(pred, truth, class_names=None) -> ConfusionMatrix:
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise ValueError(f"{pred.size} predictions but {truth.size} ground-truth labels")
    n = len(class_names) if class_names is not None else int(max(pred.max(initial=-1),
                                                                  truth.max(initial=-1))) + 1
    names = tuple(class_names) if class_names is not None else tuple(str(c) for c in range(n))
    counts = np.zeros((n, n), dtype=np.int64)
    np.add.at(counts, (pred, truth), 1)
    return ConfusionMatrix(counts, names)


@dataclass(frozen=True)
class HaloSpec:
    """Ground-truth pixel region of one buried target."""

    target_id: str
    label: int
    pixels: tuple[tuple[int, int], ...]

    def __post_init__(self):
        px = tuple(sorted({(int(i), int(j)) for i, j in self.pixels}))
        if not px:
            raise ValueError(f"halo {self.target_id!r} has no pixels")
        object.__setattr__(self, "pixels", px)

    @classmethod
    def rectangle(cls, target_id, label, x0, y0, x1, y1):
        """Inclusive pixel rectangle ``[x0, x1] x [y0, y1]``."""
        if x1 < x0 or y1 < y0:
            raise ValueError(f"halo {target_id!r}: empty rectangle")
        return cls(str(target_id), int(label),
                   tuple((i, j) for i in range(x0, x1 + 1) for j in range(y0, y1 + 1)))


def read_halos(path, class_names):
    """Halo CSV rows: ``target_id, class, x0, y0, x1, y1`` (inclusive)."""
    halos = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#") or row[0] == "target_id":
                continue
            tid, cls, *box = (c.strip() for c in row)
            if cls not in class_names:
                raise ValueError(f"{path}: unknown class {cls!r}")
            halos.append(HaloSpec.rectangle(tid, list(class_names).index(cls), *map(int, box)))
    return halos


def write_halos(path, halos, class_names):
    """Write rectangular halos (the bounding box of each pixel set)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["target_id", "class", "x0", "y0", "x1", "y1"])
        for h in halos:
            px = np.array(h.pixels)
            w.writerow([h.target_id, class_names[h.label], *px.min(axis=0), *px.max(axis=0)])


@dataclass
class HaloScores:
    pcc_mines: dict[int, float]
    pcc_clutter: float
    p_d: float
    p_fa: float
    detected: dict[str, bool]


def halo_scores(grid, halos, clutter_label=0, threshold=TWO_THIRDS) -> HaloScores:
    """Per-pixel and per-target scores of a predicted class map.

    ``P_CC`` of a target class is the fraction of its halo pixels declared
    as that class. Clutter ``P_CC`` and ``P_fa`` are counted over the pixels
    outside every halo. A target is detected when at least ``threshold``
    of its halo pixels carry any non-clutter label.
    """
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise ValueError("class map must be two-dimensional")
    thr = Fraction(threshold).limit_denominator(10**6)
    inside = np.zeros(grid.shape, dtype=bool)
    n_t, n_m, detected = {}, {}, {}
    for h in halos:
        idx = np.array(h.pixels)
        if idx.min() < 0 or np.any(idx.max(axis=0) >= grid.shape):
            raise ValueError(f"halo {h.target_id!r} lies outside the {grid.shape} map")
        ii, jj = idx[:, 0], idx[:, 1]
        if np.any(inside[ii, jj]):
            raise ValueError(f"halo {h.target_id!r} overlaps another halo")
        inside[ii, jj] = True
        vals = grid[ii, jj]
        n_t[h.label] = n_t.get(h.label, 0) + vals.size
        n_m[h.label] = n_m.get(h.label, 0) + int(np.sum(vals == h.label))
        mines = int(np.sum(vals != clutter_label))
        detected[h.target_id] = mines * thr.denominator >= thr.numerator * vals.size
    outside = grid[~inside]
    n_c = outside.size
    pcc_clutter = float(np.mean(outside == clutter_label)) if n_c else float("nan")
    p_fa = float(np.mean(outside != clutter_label)) if n_c else float("nan")
    p_d = float(np.mean(list(detected.values()))) if detected else float("nan")
    return HaloScores({c: n_m[c] / n_t[c] for c in sorted(n_t)}, pcc_clutter, p_d, p_fa, detected)


# --- reduced sampling ----------------------------------------------------------------


def sample_rows(M, rate, seed):
    """``ceil(rate * M)`` distinct row indices, seeded and sorted."""
    if not 0 < rate <= 1:
        raise ValueError("rate must lie in (0, 1]")
    n = math.ceil(rate * M)
    if n < 1:
        raise ValueError("rate * M must be at least 1")
    rows = np.random.default_rng(seed).choice(M, size=n, replace=False)
    return np.sort(rows)


def restrict_dictionary(D, rows):
    """Dictionary rows ``rows``; atoms are renormalised unless every row is kept."""
    D = D.D if isinstance(D, Dictionary) else np.asarray(D, dtype=np.float64)
    rows = np.asarray(rows)
    if rows.size == D.shape[0] and np.array_equal(rows, np.arange(D.shape[0])):
        return D
    sub, norms = normalize_columns(D[rows])
    if np.any(norms == 0):
        raise ValueError("an atom vanishes on the selected rows; use a higher rate")
    return sub


@dataclass
class SubsampleResult:
    rows: np.ndarray
    model: ClassifierModel
    predictions: np.ndarray
    confusion: ConfusionMatrix

    @property
    def accuracy(self):
        return self.confusion.accuracy


def subsample_experiment(Y_test, truth, D, retrain, rate, seed=0, stop: StopRule = DEFAULT_STOP):
    """Classify with a random subset of range samples.

    The same rows are kept in the test profiles and in the dictionary.
    ``retrain(rows, D_sub)`` must return a model trained on features coded
    with the restricted dictionary. At ``rate == 1`` every row is kept and
    the unrestricted path is reproduced exactly.
    """
    Y_test = Y_test.Y if isinstance(Y_test, LabeledDataset) else np.asarray(Y_test, dtype=np.float64)
    D = D.D if isinstance(D, Dictionary) else np.asarray(D, dtype=np.float64)
    rows = sample_rows(Y_test.shape[0], rate, seed)
    D_sub = restrict_dictionary(D, rows)
    Y_sub = Y_test if D_sub is D else Y_test[rows]
    model = retrain(rows, D_sub)
    pred = predict(model, extract_features(Y_sub, D_sub, stop))
    return SubsampleResult(rows, model, pred, confusion(pred, truth, model.class_names))


# --- classification maps ------------------------------------------------------------


def map_grid(predictions, nx, ny):
    """Arrange survey-ordered predictions into an ``(nx, ny)`` grid.

    Profiles are ordered line by line: profile ``iy * nx + ix`` sits at
    column ``ix`` of survey line ``iy``.
    """
    p = np.asarray(predictions, dtype=np.int64)
    if p.size != nx * ny:
        raise ValueError(f"{p.size} predictions do not fill a {nx} x {ny} grid")
    return p.reshape(ny, nx).T.copy()


def palette(n_classes):
    """Gray level of each class: evenly spaced from 0 (class 0) to 255."""
    if n_classes < 1:
        raise ValueError("need at least one class")
    if n_classes == 1:
        return np.array([0])
    return np.round(np.arange(n_classes) * 255 / (n_classes - 1)).astype(np.int64)


def render_map(predictions, nx, ny, path, n_classes):
    """Write ``<path>.pgm`` (binary graymap) and ``<path>.csv`` (class indices).

    Both files hold ``ny`` rows (survey lines) of ``nx`` pixels. Returns the
    ``(nx, ny)`` grid.
    """
    grid = map_grid(predictions, nx, ny)
    if grid.size and (grid.min() < 0 or grid.max() >= n_classes):
        raise ValueError("prediction outside the class table")
    base = Path(path)
    pgm = base.with_suffix(".pgm")
    gray = palette(n_classes)[grid.T].astype(np.uint8)
    pgm.write_bytes(f"P5\n{nx} {ny}\n255\n".encode("ascii") + gray.tobytes())
    with open(base.with_suffix(".csv"), "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(grid.T.tolist())
    return grid


def read_map_csv(path):
    """Inverse of the CSV written by :func:`render_map`; returns the ``(nx, ny)`` grid."""
    with open(path, newline="") as fh:
        rows = [list(map(int, r)) for r in csv.reader(fh) if r]
    return np.array(rows, dtype=np.int64).T
