"""Online dictionary learning with accumulator matrices and column BCD."""
from __future__ import annotations

import time

import numpy as np

from ..sparse_coding import lars_lasso
from .common import LearnConfig, LearnReport, finish, init_dictionary, prepare


def draw_order(L, n, rng):
    """``n`` indices taken consecutively from fresh random permutations."""
    out = []
    while len(out) < n:
        out.extend(rng.permutation(L).tolist())
    return np.asarray(out[:n], dtype=np.int64)


def odl_column_sweep(D, A, B, prior=0.0, D0=None):
    """Block-coordinate sweep over the dictionary columns, in place.

    ``u_j = (b_j - D a_j) / A_jj + d_j`` followed by projection onto the
    unit ball. Columns with ``A_jj == 0`` have never been used and are
    skipped. Returns the indices that were updated.

    A positive ``prior`` runs the same sweep on ``A + prior I`` and
    ``B + prior D0``, which damps the first updates toward ``D0``.
    """
    used = np.flatnonzero(np.diag(A) > 0)
    for j in used:
        if prior > 0:
            num = B[:, j] + prior * D0[:, j] - D @ A[:, j] - prior * D[:, j]
            u = num / (A[j, j] + prior) + D[:, j]
        else:
            u = (B[:, j] - D @ A[:, j]) / A[j, j] + D[:, j]
        D[:, j] = u / max(np.linalg.norm(u), 1.0)
    return used


def odl(Y, config: LearnConfig = LearnConfig(), D0=None, keep_history=False):
    """Learn a dictionary from ``config.n_iter`` single-signal draws.

    Each drawn signal is coded by LARS-lasso with ``config.lam``; the
    accumulators ``A += x x^T`` and ``B += y x^T`` summarise the past and
    one column sweep warm-starts from the previous dictionary.

    With ``keep_history`` the draw order, per-draw codes and final
    accumulators are stored in ``report.extras``.
    """
    t0 = time.perf_counter()
    Yn, stop = prepare(Y, config)
    M, L = Yn.shape
    D = (init_dictionary(Yn, config.K, config.seed).D if D0 is None
         else np.array(D0, dtype=np.float64))
    K = D.shape[1]
    D_start = D.copy()
    A = np.zeros((K, K))
    B = np.zeros((M, K))
    order = draw_order(L, config.n_iter, np.random.default_rng([config.seed, 1]))
    report = LearnReport("odl", error_scope="drawn signal")
    codes = []
    for t in order:
        y = Yn[:, t]
        x = lars_lasso(y, D, config.lam).x
        A += np.outer(x, x)
        B += np.outer(y, x)
        odl_column_sweep(D, A, B, config.odl_prox, D_start)
        report.error_trace.append(float(np.linalg.norm(y - D @ x)))
        report.iterations += 1
        if keep_history:
            codes.append(x)
    if keep_history:
        report.extras.update(order=order, codes=np.array(codes).T, A=A.copy(), B=B.copy())
    out = finish("odl", D, Yn, stop, config, report)
    report.wall_time = time.perf_counter() - t0
    return out
