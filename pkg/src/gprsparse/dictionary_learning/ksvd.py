"""K-SVD: batch alternation of OMP coding and rank-1 atom refits."""
from __future__ import annotations

import time

import numpy as np

from ..sparse_coding import batch_omp
from .common import LearnConfig, LearnReport, finish, frob, init_dictionary, prepare


def ksvd_sweep(Y, D, X, replace_unused=True):
    """One dictionary-update sweep with the supports of ``X`` held fixed.

    Updates ``D`` and ``X`` in place. For each atom the representation
    error restricted to the signals that use it is replaced by its best
    rank-1 approximation. An atom nobody uses is re-seeded with the
    currently worst-represented signal.

    Returns the list of replaced atom indices.
    """
    R = Y - D @ X
    replaced = []
    taken = set()
    for k in range(D.shape[1]):
        omega = np.flatnonzero(X[k])
        if omega.size == 0:
            if not replace_unused:
                continue
            err = np.einsum("ij,ij->j", R, R)
            for j in np.argsort(-err, kind="stable"):
                if j not in taken and err[j] > 0:
                    taken.add(int(j))
                    D[:, k] = R[:, j] / np.sqrt(err[j])
                    replaced.append(k)
                    break
            continue
        E = R[:, omega] + np.outer(D[:, k], X[k, omega])
        u, s, vt = np.linalg.svd(E, full_matrices=False)
        D[:, k] = u[:, 0]
        X[k, omega] = s[0] * vt[0]
        R[:, omega] = E - np.outer(D[:, k], X[k, omega])
    return replaced


def ksvd(Y, config: LearnConfig = LearnConfig(), D0=None):
    """Learn a dictionary with ``config.n_iter`` K-SVD iterations.

    Parameters
    ----------
    Y : LabeledDataset or (M, L) array
        Training columns; normalised internally.
    config : LearnConfig
    D0 : (M, K) array, optional
        Starting dictionary instead of random training columns.

    Returns
    -------
    (Dictionary, SparseCodeMatrix, LearnReport)
    """
    t0 = time.perf_counter()
    Yn, stop = prepare(Y, config)
    D = (init_dictionary(Yn, config.K, config.seed).D if D0 is None
         else np.array(D0, dtype=np.float64))
    report = LearnReport("ksvd", error_scope="all")
    n_replaced = 0
    for _ in range(config.n_iter):
        X = batch_omp(Yn, D, stop).X
        n_replaced += len(ksvd_sweep(Yn, D, X))
        report.error_trace.append(frob(Yn - D @ X))
        report.iterations += 1
    report.extras["replaced_atoms"] = n_replaced
    out = finish("ksvd", D, Yn, stop, config, report)
    report.wall_time = time.perf_counter() - t0
    return out
