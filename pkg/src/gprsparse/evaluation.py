"""Similarity distributions and the CV / K-S / DKW metrics used to compare them."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dictionary, SparseCodeMatrix
from .dictionary_learning import LEARNERS, LearnConfig, prepare


def similarity(y, y_hat):
    """Peak absolute normalised cross-correlation over all lags.

    Both inputs are zero-padded, so lags run from ``-(M-1)`` to ``M-1``.
    Returns 0 if either input is identically zero.
    """
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape or y.ndim != 1:
        raise ValueError(f"length mismatch: {y.shape} vs {y_hat.shape}")
    norm = np.sqrt((y @ y) * (y_hat @ y_hat))
    if norm == 0:
        return 0.0
    r = np.correlate(y, y_hat, mode="full")
    return float(min(np.max(np.abs(r)) / norm, 1.0))


def batch_similarity(Y, Y_hat):
    """Column-wise :func:`similarity`, computed with one FFT per matrix."""
    Y = np.asarray(Y, dtype=np.float64)
    Y_hat = np.asarray(Y_hat, dtype=np.float64)
    if Y.shape != Y_hat.shape:
        raise ValueError(f"shape mismatch: {Y.shape} vs {Y_hat.shape}")
    M = Y.shape[0]
    n = 1 << int(np.ceil(np.log2(max(2 * M - 1, 1))))
    F = np.fft.rfft(Y, n, axis=0) * np.conj(np.fft.rfft(Y_hat, n, axis=0))
    r = np.fft.irfft(F, n, axis=0)
    peak = np.max(np.abs(r), axis=0)
    norm = np.sqrt(np.einsum("ij,ij->j", Y, Y) * np.einsum("ij,ij->j", Y_hat, Y_hat))
    out = np.zeros(Y.shape[1])
    ok = norm > 0
    out[ok] = np.minimum(peak[ok] / norm[ok], 1.0)
    return out


def reconstruction_similarities(Y, D, codes):
    D = D.D if isinstance(D, Dictionary) else np.asarray(D)
    X = codes.X if isinstance(codes, SparseCodeMatrix) else np.asarray(codes)
    Y = np.asarray(Y, dtype=np.float64)
    if D.shape[0] != Y.shape[0] or X.shape != (D.shape[1], Y.shape[1]):
        raise ValueError("Y, D and codes have inconsistent shapes")
    return batch_similarity(Y, D @ X)


def coefficient_of_variation(samples):
    s = np.asarray(samples, dtype=np.float64)
    if s.size < 2:
        raise ValueError("need at least two samples")
    mu = s.mean()
    if mu == 0:
        raise ValueError("coefficient of variation undefined for zero mean")
    return float(s.std(ddof=1) / mu)


class Ecdf:
    """Right-continuous empirical CDF of a sample."""

    def __init__(self, samples):
        v = np.sort(np.asarray(samples, dtype=np.float64).ravel())
        if v.size == 0:
            raise ValueError("an ECDF needs at least one sample")
        self.values = v

    @property
    def n(self):
        return self.values.size

    def __call__(self, x):
        return np.searchsorted(self.values, x, side="right") / self.n


def _as_ecdf(a):
    return a if isinstance(a, Ecdf) else Ecdf(a)


def ks_distance(a, b):
    """Two-sample Kolmogorov-Smirnov statistic ``sup |F - G|``.

    Both step functions only jump at sample points, so the supremum is
    attained on the pooled sample.
    """
    a, b = _as_ecdf(a), _as_ecdf(b)
    z = np.concatenate([a.values, b.values])
    return float(np.max(np.abs(a(z) - b(z))))


def dkw_bound(L, alpha):
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if L < 1:
        raise ValueError("L must be >= 1")
    return float(np.sqrt(-(2.0 / L) * np.log(alpha / 2.0)))


def dkw_metric(a, b, L=None, alpha=0.05):
    """DKW bound minus the K-S distance; negative means the ECDFs differ.

    ``L`` defaults to the smaller of the two sample sizes.
    """
    a, b = _as_ecdf(a), _as_ecdf(b)
    L = min(a.n, b.n) if L is None else L
    return dkw_bound(L, alpha) - ks_distance(a, b)


def histogram(samples, width=0.01):
    """Normalised histogram (EPDF) of similarities on ``[0, 1]``."""
    nbins = int(round(1.0 / width))
    edges = np.linspace(0.0, 1.0, nbins + 1)
    counts, _ = np.histogram(np.clip(samples, 0.0, 1.0), bins=edges)
    return edges, counts / max(len(samples), 1)


@dataclass
class MetricReport:
    params: dict
    mean: float
    std: float
    cv: float
    d_ks: float
    d_dkw: float
    alpha: float
    samples: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))

    FIELDS = ("mean", "std", "cv", "d_ks", "d_dkw", "alpha")

    def row(self):
        return [self.params, *(getattr(self, f) for f in self.FIELDS)]


# the reference combination used for d_ks / d_DKW
REFERENCE = {"n_iter": 1, "K": 300, "batch_new": 30, "batch_prev": 10, "drop_age": 10}

_ALIASES = {"N_t": "n_iter", "N_b": "batch_new", "N_r": "batch_prev", "N_u": "drop_age",
            "lambda": "lam", "S": "max_sparsity"}
_INTS = {"K", "n_iter", "batch_new", "batch_prev", "drop_age", "seed", "max_sparsity"}


def parse_grid(text):
    """One ``key=value,...`` combination per non-empty, non-comment line."""
    grid = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        point = {}
        for tok in line.split(","):
            key, sep, val = tok.strip().partition("=")
            if not sep:
                raise ValueError(f"bad grid entry {tok!r}; expected key=value")
            key = _ALIASES.get(key, key)
            if key not in LearnConfig.__dataclass_fields__:
                raise ValueError(f"unknown parameter {key!r}")
            point[key] = int(val) if key in _INTS else float(val)
        grid.append(point)
    return grid


def learned_similarities(algo, Y, config):
    D, codes, _ = LEARNERS[algo](Y, config)
    Yn, _ = prepare(Y, config)
    return reconstruction_similarities(Yn, D, codes)


def parameter_sweep(algo, grid, Y, reference=None, base=None, alpha=0.05):
    """Learn, reconstruct and summarise every grid point.

    Each point is compared with the similarity sample of the reference
    combination (``REFERENCE`` applied on top of ``base`` by default).
    Reports come back in grid order.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("parameter grid is empty")
    if algo not in LEARNERS:
        raise ValueError(f"unknown algorithm {algo!r}")
    base = base or LearnConfig()
    ref_cfg = base.with_(**(REFERENCE if reference is None else reference))
    ref = Ecdf(learned_similarities(algo, Y, ref_cfg))
    out = []
    for point in grid:
        cfg = base.with_(**point)
        s = ref.values if cfg == ref_cfg else learned_similarities(algo, Y, cfg)
        e = Ecdf(s)
        mu, sd = float(np.mean(s)), float(np.std(s, ddof=1))
        out.append(MetricReport(dict(point), mu, sd, sd / mu if mu else float("nan"),
                                ks_distance(e, ref), dkw_metric(e, ref, alpha=alpha), alpha,
                                np.asarray(s)))
    return out
