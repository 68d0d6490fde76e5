"""Configuration, reports and building blocks shared by all learners."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from typing import Any

import numpy as np

from ..data import Dictionary, LabeledDataset, normalize_columns
from ..sparse_coding import StopRule, batch_omp


@dataclass(frozen=True)
class LearnConfig:
    """Parameters shared by the four learners.

    ``delta`` is the batch-OMP residual threshold in units of the
    unit-normalised training columns; ``None`` means ``0.1`` times their
    median norm (i.e. 0.1). ``max_sparsity`` caps the atoms per code so a
    poorly matched column cannot absorb the whole dictionary.

    ``prox`` is the ridge weight used by the CBWLSU/DOMINODL refits, which
    pull the refitted atoms toward their current values; ``odl_prox`` is
    the equivalent prior weight for ODL, anchored at the initial atoms.
    """

    K: int = 640
    n_iter: int = 100
    batch_new: int = 30
    batch_prev: int = 10
    drop_age: int = 10
    delta: float | None = None
    chi: float = 0.2
    lam: float = 0.1
    seed: int = 0
    max_sparsity: int | None = 4
    prox: float = 1.0
    odl_prox: float = 1.0

    def __post_init__(self):
        checks = [
            (self.K >= 1, "K must be >= 1"),
            (self.n_iter >= 1, "n_iter must be >= 1"),
            (self.batch_new >= 1, "batch_new must be >= 1"),
            (self.batch_prev >= 1, "batch_prev must be >= 1"),
            (self.drop_age >= 1, "drop_age must be >= 1"),
            (self.delta is None or self.delta >= 0, "delta must be >= 0"),
            (self.chi > 0, "chi must be > 0"),
            (self.lam > 0, "lam must be > 0"),
            (self.max_sparsity is None or self.max_sparsity >= 1, "max_sparsity must be >= 1"),
            (self.prox >= 0, "prox must be >= 0"),
            (self.odl_prox >= 0, "odl_prox must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)

    def with_(self, **kw) -> "LearnConfig":
        return replace(self, **kw)

    def to_dict(self):
        return asdict(self)

    def digest(self):
        raw = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(raw).hexdigest()[:16]


@dataclass
class LearnReport:
    """What a learner did.

    ``error_trace[i]`` is the reconstruction error after iteration ``i``;
    ``error_scope`` says over which columns it is measured (``"all"`` for
    K-SVD, the columns touched in that iteration for the online learners).
    """

    algorithm: str
    iterations: int = 0
    wall_time: float = 0.0
    error_trace: list[float] = field(default_factory=list)
    error_scope: str = "all"
    pool_trace: list[int] = field(default_factory=list)
    combined_trace: list[int] = field(default_factory=list)
    dropped_trace: list[int] = field(default_factory=list)
    weighted_error_trace: list[float] = field(default_factory=list)
    stop_reason: str = ""
    extras: dict[str, Any] = field(default_factory=dict)

    def rows(self):
        """One row per iteration, for CSV export (wall time excluded)."""
        n = self.iterations
        cols = {"error": self.error_trace, "pool": self.pool_trace,
                "combined": self.combined_trace, "dropped": self.dropped_trace,
                "weighted_error": self.weighted_error_trace}
        head = ["iteration"] + [k for k, v in cols.items() if len(v) == n]
        out = [head]
        for i in range(n):
            out.append([i + 1] + [cols[k][i] for k in head[1:]])
        return out


def training_matrix(Y):
    if isinstance(Y, LabeledDataset):
        return Y.Y
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2:
        raise ValueError("training data must be an (M, L) matrix")
    return Y


def prepare(Y, config: LearnConfig):
    """Unit-normalise the columns of ``Y`` and resolve the coding stop rule.

    All-zero columns are left at zero; they code to the empty code.
    """
    Y = training_matrix(Y)
    Yn, norms = normalize_columns(Y)
    if config.delta is None:
        med = np.median(np.linalg.norm(Yn, axis=0))
        delta = 0.1 * med
    else:
        delta = float(config.delta)
    cap = config.max_sparsity
    if cap is not None:
        cap = min(cap, config.K)
    return Yn, StopRule(max_sparsity=cap, residual_threshold=delta)


def init_dictionary(Y, K, seed=0) -> Dictionary:
    """``K`` distinct training columns chosen at random and normalised.

    If ``K`` exceeds the column count the remainder is filled with seeded
    Gaussian directions. Zero columns are never selected while non-zero
    ones remain.
    """
    Y = training_matrix(Y)
    M, L = Y.shape
    rng = np.random.default_rng(seed)
    norms = np.linalg.norm(Y, axis=0)
    valid = np.flatnonzero(norms > 0)
    take = min(K, valid.size)
    cols = valid[rng.permutation(valid.size)[:take]]
    D = Y[:, cols] / norms[cols]
    if take < K:
        G = rng.standard_normal((M, K - take))
        D = np.hstack([D, G / np.linalg.norm(G, axis=0)])
    return Dictionary(D, {"algorithm": "init", "seed": int(seed), "columns": cols.tolist()})


def renormalize(D):
    n = np.linalg.norm(D, axis=0)
    return D / np.where(n > 0, n, 1.0)


def wls_update(Y_sel, X_sel, W, D_prev=None, ridge=1e-8):
    """Weighted least-squares atom block.

    Minimises ``||(Y_sel - D X_sel) W^{1/2}||_F^2`` over ``D`` with a small
    Tikhonov term ``eps ||D - D_prev||_F^2``, ``eps = ridge * trace / K_sel``
    of ``X W X^T``. Without ``D_prev`` the term pulls toward zero. Pulling
    toward the current atoms instead leaves directions that the selected
    codes do not excite unchanged, which matters when fewer signals than
    atoms are involved.

    Parameters
    ----------
    Y_sel : (M, P) array
    X_sel : (K_sel, P) array
    W : (P,) weights or (P, P) diagonal matrix, all positive
    D_prev : (M, K_sel) array, optional

    Returns
    -------
    D_hat : (M, K_sel) array with unit-norm columns
    scale : (K_sel,) array
        Column norms before normalisation, so that
        ``D_hat @ (scale[:, None] * X_sel)`` is the unnormalised fit.
    """
    Y_sel = np.asarray(Y_sel, dtype=np.float64)
    X_sel = np.asarray(X_sel, dtype=np.float64)
    w = np.asarray(W, dtype=np.float64)
    if w.ndim == 2:
        if np.any(w - np.diag(np.diag(w))):
            raise ValueError("W must be diagonal")
        w = np.diag(w)
    P = Y_sel.shape[1]
    if P < 1 or X_sel.shape[1] != P or w.shape != (P,):
        raise ValueError("Y_sel, X_sel and W disagree on the number of signals")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    k = X_sel.shape[0]
    XW = X_sel * w
    gram = XW @ X_sel.T
    eps = ridge * np.trace(gram) / k
    if eps <= 0:
        eps = ridge
    rhs = Y_sel @ XW.T
    if D_prev is not None:
        rhs = rhs + eps * np.asarray(D_prev, dtype=np.float64)
    # gram + eps I is symmetric positive definite
    D_hat = np.linalg.solve(gram + eps * np.eye(k), rhs.T).T
    scale = np.linalg.norm(D_hat, axis=0)
    dead = scale == 0
    if np.any(dead):
        fill = D_prev[:, dead] if D_prev is not None else np.eye(Y_sel.shape[0], k)[:, dead]
        D_hat[:, dead] = fill
        scale[dead] = np.linalg.norm(D_hat[:, dead], axis=0)
    return D_hat / scale, scale


def weights_from_errors(E, floor):
    """Inverse squared error weights, with errors floored at ``floor``."""
    e2 = np.einsum("ij,ij->j", E, E)
    return 1.0 / np.maximum(e2, max(floor, 1e-12) ** 2)


def support_mask(X):
    return X != 0


def finish(name, D, Yn, stop, config: LearnConfig, report: LearnReport, extra_prov=None):
    """Export: renormalise, code the whole training set, attach provenance."""
    D = renormalize(D)
    codes = batch_omp(Yn, D, stop)
    prov = {"algorithm": name, "config": config.to_dict(), "config_hash": config.digest(),
            "seed": config.seed, "delta": stop.residual_threshold}
    if extra_prov:
        prov.update(extra_prov)
    return Dictionary(D, prov), codes, report


def frob(A):
    return float(np.linalg.norm(A))

