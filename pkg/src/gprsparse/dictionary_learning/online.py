"""Correlation-based weighted least-squares learners: CBWLSU and DOMINODL.

Both process the training set as a stream and refit only the atoms used by
the newest signals, from a selection of earlier signals that share atoms
with them. CBWLSU takes one signal at a time and every correlated
predecessor; DOMINODL takes mini-batches, samples a few predecessors, and
forgets those that stay unused for ``drop_age`` iterations.
"""
from __future__ import annotations

import time

import numpy as np

from ..sparse_coding import batch_omp
from .common import (LearnConfig, LearnReport, finish, frob, init_dictionary, prepare,
                     weights_from_errors, wls_update)


class _GramCache:
    """``G = D^T D`` kept in sync with in-place atom replacements."""

    def __init__(self, D):
        self.D = D
        self.G = D.T @ D

    def replace(self, cols, atoms):
        self.D[:, cols] = atoms
        g = self.D.T @ atoms
        self.G[:, cols] = g
        self.G[cols, :] = g.T


def refit_atoms(Y_C, X_C, D, atoms, floor, prox):
    """Weighted least-squares refit of ``D[:, atoms]`` on the signals ``Y_C``.

    The contribution of the other atoms is held fixed, so the target is
    ``Y_C - D_rest X_rest``. Weights are inverse squared representation
    errors, floored at ``floor``. ``prox`` sets the pull toward the current
    atoms relative to the mean weighted code energy (see :func:`wls_update`).
    """
    E = Y_C - D @ X_C
    w = weights_from_errors(E, floor)
    R = E + D[:, atoms] @ X_C[atoms]
    D_new, _ = wls_update(R, X_C[atoms], w, D_prev=D[:, atoms], ridge=prox)
    return D_new, w


def cbwlsu(Y, config: LearnConfig = LearnConfig(), D0=None):
    """One pass over a random ordering of the training set."""
    t0 = time.perf_counter()
    Yn, stop = prepare(Y, config)
    M, L = Yn.shape
    D = (init_dictionary(Yn, config.K, config.seed).D if D0 is None
         else np.array(D0, dtype=np.float64))
    cache = _GramCache(D)
    K = D.shape[1]
    X = np.zeros((K, L))
    done = np.zeros(L, dtype=bool)
    order = np.random.default_rng([config.seed, 2]).permutation(L)
    report = LearnReport("cbwlsu", error_scope="correlated set")
    delta = stop.residual_threshold

    for t in order:
        x = batch_omp(Yn[:, t], D, stop, G=cache.G).X[:, 0]
        atoms = np.flatnonzero(x)
        if atoms.size == 0:
            done[t] = True
            continue
        prev = np.flatnonzero(done & np.any(X[atoms] != 0, axis=0))
        X[:, t] = x
        C = np.append(prev, t)
        D_new, _ = refit_atoms(Yn[:, C], X[:, C], D, atoms, delta, config.prox)
        cache.replace(atoms, D_new)
        X[:, C] = batch_omp(Yn[:, C], D, stop, G=cache.G).X
        done[t] = True
        report.iterations += 1
        report.pool_trace.append(int(done.sum() - 1))
        report.combined_trace.append(int(C.size))
        report.error_trace.append(frob(Yn[:, C] - D @ X[:, C]))
    report.stop_reason = "data exhausted"
    out = finish("cbwlsu", D, Yn, stop, config, report)
    report.wall_time = time.perf_counter() - t0
    return out


def _draw_previous(pool, last_batch, n, rng):
    """Random previous mini-batch, disjoint from the last one when possible.

    With at least ``2 n`` candidates the draw excludes the previous
    mini-batch; with fewer it is taken from the whole pool.
    """
    pool = np.asarray(pool, dtype=np.int64)
    if pool.size >= 2 * n:
        cand = np.setdiff1d(pool, last_batch, assume_unique=True)
        if cand.size < n:
            cand = pool
    else:
        cand = pool
    if cand.size <= n:
        return np.sort(cand)
    return np.sort(rng.choice(cand, size=n, replace=False))


def dominodl(Y, config: LearnConfig = LearnConfig(), D0=None):
    """Drop-off mini-batch online dictionary learning.

    Per iteration: code ``batch_new`` new signals; sample ``batch_prev``
    earlier ones and keep those sharing an atom with the new batch; refit
    the atoms used by the new batch by weighted least squares on the
    combined set; re-code it; forget earlier signals unused for
    ``drop_age`` iterations. Stops when the weighted error of the combined
    set falls below ``chi`` or the data run out.

    The weighted error is ``mean_p w_p ||e_p||^2`` over the combined set,
    with ``e_p`` the residual after re-coding and ``w_p`` the weight used
    in the refit.
    """
    t0 = time.perf_counter()
    Yn, stop = prepare(Y, config)
    M, L = Yn.shape
    D = (init_dictionary(Yn, config.K, config.seed).D if D0 is None
         else np.array(D0, dtype=np.float64))
    cache = _GramCache(D)
    X = batch_omp(Yn, D, stop, G=cache.G).X
    order = np.random.default_rng([config.seed, 3]).permutation(L)
    rng = np.random.default_rng([config.seed, 4])
    delta = stop.residual_threshold
    Nb, Nr, Nu = config.batch_new, config.batch_prev, config.drop_age

    report = LearnReport("dominodl", error_scope="combined set")
    pool: list[int] = []  # earlier signals still eligible
    last_used = np.full(L, -1, dtype=np.int64)
    last_batch = np.zeros(0, dtype=np.int64)
    max_age = 0
    pos = 0
    t = 0
    while True:
        if pos >= L:
            report.stop_reason = "data exhausted"
            break
        t += 1
        Bt = order[pos:pos + Nb]
        pos += Bt.size
        X[:, Bt] = batch_omp(Yn[:, Bt], D, stop, G=cache.G).X
        used = np.any(X[:, Bt] != 0, axis=1)
        atoms = np.flatnonzero(used)

        Mt = _draw_previous(pool, last_batch, Nr, rng)
        last_batch = Mt
        At = Mt[np.any(X[np.ix_(atoms, Mt)] != 0, axis=0)] if Mt.size and atoms.size else Mt[:0]
        Ct = np.concatenate([At, Bt])

        werr = 0.0
        if atoms.size:
            D_new, w = refit_atoms(Yn[:, Ct], X[:, Ct], D, atoms, delta, config.prox)
            cache.replace(atoms, D_new)
            X[:, Ct] = batch_omp(Yn[:, Ct], D, stop, G=cache.G).X
            E = Yn[:, Ct] - D @ X[:, Ct]
            werr = float(np.mean(w * np.einsum("ij,ij->j", E, E)))
        else:
            E = Yn[:, Ct] - D @ X[:, Ct]

        last_used[Ct] = t
        report.pool_trace.append(len(pool))
        pool.extend(Bt.tolist())
        ages = t - last_used[pool]
        keep = ages < Nu
        if not np.all(keep):
            max_age = max(max_age, int(ages[~keep].max()))
        dropped = int((~keep).sum())
        pool = [p for p, k in zip(pool, keep) if k]

        report.iterations += 1
        report.combined_trace.append(int(Ct.size))
        report.dropped_trace.append(dropped)
        report.error_trace.append(frob(E))
        report.weighted_error_trace.append(werr)
        if atoms.size and werr < config.chi:
            report.stop_reason = "converged"
            break

    report.extras["max_drop_age"] = max_age
    report.extras["signals_seen"] = int(pos)
    out = finish("dominodl", D, Yn, stop, config, report)
    report.wall_time = time.perf_counter() - t0
    return out
