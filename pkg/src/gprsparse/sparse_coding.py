"""Greedy and homotopy sparse solvers.

``omp`` is the Gram-Schmidt ("fast") orthogonal matching pursuit,
``batch_omp`` codes many signals at once from the Gram matrix, and the LARS
homotopy (``lars_lasso``, ``lars_path``, ``bpdn_solve``) solves the
l1-penalised least-squares problem ``0.5 ||y - Dx||^2 + lam ||x||_1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .data import Dictionary, SparseCode, SparseCodeMatrix

# correlations below this fraction of ||y|| mean the residual is already zero
_ZERO_CORR = 1e-10


@dataclass(frozen=True)
class StopRule:
    """Stop after ``max_sparsity`` atoms or once ``||r|| <= residual_threshold``.

    Whichever is met first wins; at least one must be given.
    """

    max_sparsity: int | None = None
    residual_threshold: float | None = None

    def __post_init__(self):
        if self.max_sparsity is None and self.residual_threshold is None:
            raise ValueError("stop rule needs a sparsity, a residual threshold, or both")
        if self.max_sparsity is not None and self.max_sparsity < 1:
            raise ValueError("max_sparsity must be >= 1")
        if self.residual_threshold is not None and self.residual_threshold < 0:
            raise ValueError("residual_threshold must be >= 0")

    @classmethod
    def parse(cls, text: str) -> "StopRule":
        """Parse ``"s=4"``, ``"delta=0.1"`` or ``"s=4,delta=0.1"``."""
        kw = {}
        for tok in filter(None, (t.strip() for t in text.split(","))):
            key, _, val = tok.partition("=")
            if key == "s":
                kw["max_sparsity"] = int(val)
            elif key == "delta":
                kw["residual_threshold"] = float(val)
            else:
                raise ValueError(f"unknown stop-rule key {key!r} (use s= or delta=)")
        return cls(**kw)

    def limit(self, M, K):
        cap = min(M, K)
        return cap if self.max_sparsity is None else min(self.max_sparsity, cap)

    @property
    def delta(self):
        return -1.0 if self.residual_threshold is None else self.residual_threshold


def _matrix(D):
    return D.D if isinstance(D, Dictionary) else np.asarray(D, dtype=np.float64)


def _check(D, M, stop: StopRule | None = None):
    if D.ndim != 2:
        raise ValueError("dictionary must be a matrix")
    if D.shape[0] != M:
        raise ValueError(f"signal length {M} does not match dictionary rows {D.shape[0]}")
    if stop is not None and stop.max_sparsity is not None and stop.max_sparsity > D.shape[1]:
        raise ValueError(f"sparsity {stop.max_sparsity} exceeds atom count {D.shape[1]}")
    norms = np.linalg.norm(D, axis=0)
    if np.any(norms == 0):
        raise ValueError(f"dictionary has zero-norm atoms: {np.flatnonzero(norms == 0)[:5].tolist()}")


def _lstsq_refit(D, y, support):
    x = np.zeros(D.shape[1])
    if support:
        sol, *_ = np.linalg.lstsq(D[:, support], y, rcond=None)
        x[support] = sol
    return x


def omp(y, D, stop: StopRule, return_path=False):
    """Orthogonal matching pursuit with explicit Gram-Schmidt.

    Each selected atom is orthogonalised against the previously selected
    ones, so the residual update is a single projection. The coefficients
    returned refer to the original atoms: they come from a final
    least-squares fit on the selected support.

    Parameters
    ----------
    y : (M,) array
    D : Dictionary or (M, K) array
    stop : StopRule
    return_path : bool
        Also return the residual norm after every iteration.

    Returns
    -------
    SparseCode, and the list of residual norms if ``return_path``.
    """
    D = _matrix(D)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise ValueError("y must be a vector")
    _check(D, y.shape[0], stop)
    M, K = D.shape
    limit = stop.limit(M, K)
    delta = stop.delta

    r = y.copy()
    ynorm = np.linalg.norm(y)
    Q = np.zeros((M, limit))
    support: list[int] = []
    path = [ynorm]
    rnorm = ynorm
    while len(support) < limit and rnorm > delta:
        c = D.T @ r
        i = int(np.argmax(np.abs(c)))  # first maximum = lowest index
        if abs(c[i]) <= _ZERO_CORR * ynorm:
            break
        n = len(support)
        q = D[:, i].copy()
        # two Gram-Schmidt passes keep Q orthonormal to working precision
        for _ in range(2):
            q -= Q[:, :n] @ (Q[:, :n].T @ q)
        qn = np.linalg.norm(q)
        if qn <= 1e-12 * np.linalg.norm(D[:, i]):
            break
        q /= qn
        Q[:, n] = q
        support.append(i)
        r -= (q @ r) * q
        rnorm = np.linalg.norm(r)
        path.append(rnorm)

    x = _lstsq_refit(D, y, support)
    code = SparseCode(x, tuple(sorted(support)), float(np.linalg.norm(y - D @ x)))
    return (code, path) if return_path else code


def batch_omp(Y, D, stop: StopRule, G=None) -> SparseCodeMatrix:
    """OMP for every column of ``Y`` using only ``G = D^T D`` and ``D^T Y``.

    A progressive Cholesky factor of ``G[I, I]`` gives the coefficients, and
    the residual energy is tracked as ``||y||^2 - (D^T y)_I . x_I`` so the
    residual itself is never formed. Columns advance in lockstep, so the
    per-iteration work is vectorised across all signals still running.
    """
    D = _matrix(D)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    _check(D, Y.shape[0], stop)
    M, K = D.shape
    L = Y.shape[1]
    limit = stop.limit(M, K)
    delta = stop.delta
    if G is None:
        G = D.T @ D

    alpha0 = D.T @ Y  # (K, L)
    ynorm2 = np.einsum("ij,ij->j", Y, Y)
    ynorm = np.sqrt(ynorm2)
    alpha = alpha0.copy()
    idx = np.zeros((L, limit), dtype=np.int64)
    # inverse of the progressive Cholesky factor of G[I, I], one per column
    linv = np.zeros((L, limit, limit))
    coef = np.zeros((L, limit))
    nsel = np.zeros(L, dtype=np.int64)
    res2 = ynorm2.copy()
    active = ynorm > 0
    stop2 = delta * delta if delta >= 0 else -1.0

    for n in range(limit):
        active &= res2 > stop2
        cols = np.flatnonzero(active)
        if cols.size == 0:
            break
        a = np.abs(alpha[:, cols])
        k = np.argmax(a, axis=0)  # first maximum = lowest index
        kmax = a[k, np.arange(cols.size)]
        ok = kmax > _ZERO_CORR * ynorm[cols]

        Li = linv[cols, :n, :n]
        if n:
            g = G[idx[cols, :n], k[:, None]]  # G[I, k], shape (c, n)
            w = np.einsum("cij,cj->ci", Li, g)
            diag = G[k, k] - np.einsum("ci,ci->c", w, w)
        else:
            w = np.zeros((cols.size, 0))
            diag = G[k, k].copy()
        ok &= diag > 1e-12 * G[k, k]
        active[cols[~ok]] = False
        cols, k, w, diag, Li = cols[ok], k[ok], w[ok], diag[ok], Li[ok]
        if cols.size == 0:
            break

        d = np.sqrt(diag)
        linv[cols, n, :n] = -np.einsum("ci,cij->cj", w, Li) / d[:, None]
        linv[cols, n, n] = 1.0 / d
        idx[cols, n] = k
        nsel[cols] = n + 1
        m = n + 1
        I = idx[cols, :m]
        Li = linv[cols, :m, :m]
        rhs = alpha0[I, cols[:, None]]  # (D^T y)_I, shape (c, m)
        z = np.einsum("cij,cj->ci", Li, rhs)
        xc = np.einsum("cji,cj->ci", Li, z)
        coef[cols, :m] = xc
        res2[cols] = ynorm2[cols] - np.einsum("ci,ci->c", rhs, xc)
        # alpha = D^T r = alpha0 - G[:, I] x_I
        xs = sparse.csr_matrix((xc.ravel(), (np.repeat(np.arange(cols.size), m), I.ravel())),
                               shape=(cols.size, K))
        alpha[:, cols] = alpha0[:, cols] - (xs @ G).T

    X = np.zeros((K, L))
    for j in range(L):
        m = nsel[j]
        if m:
            X[idx[j, :m], j] = coef[j, :m]
    R = Y - D @ X
    return SparseCodeMatrix(X, np.linalg.norm(R, axis=0))


# --- LARS homotopy ---------------------------------------------------------


@dataclass(frozen=True)
class LarsBreakpoint:
    lam: float
    x: np.ndarray
    active: tuple[int, ...]


def _lars(y, D, lam_target, G=None, Dty=None, on_breakpoint=None, max_steps=None):
    """Follow the lasso path from ``lam = max|D^T y|`` down to ``lam_target``.

    ``on_breakpoint(lam, x)`` is called at the start point and after every
    join or drop event; returning True stops the walk at that breakpoint.
    """
    M, K = D.shape
    if G is None:
        # Gram columns are only needed for atoms that enter the active set
        cache: dict[int, np.ndarray] = {}

        def gram_cols(A):
            for j in A:
                if j not in cache:
                    cache[j] = D.T @ D[:, j]
            return np.column_stack([cache[j] for j in A])
    else:
        def gram_cols(A):
            return G[:, A]
    c0 = D.T @ y if Dty is None else Dty
    x = np.zeros(K)
    lam = float(np.max(np.abs(c0))) if K else 0.0
    if on_breakpoint is not None and on_breakpoint(lam, x):
        return x, lam
    if lam <= lam_target or lam == 0.0:
        return x, max(lam_target, 0.0)

    active: list[int] = [int(np.argmax(np.abs(c0)))]
    signs: list[float] = [float(np.sign(c0[active[0]]))]
    tiny = 1e-14 * lam
    max_steps = max_steps or 8 * (min(M, K) + 1)
    just_dropped = -1
    for _ in range(max_steps):
        A = np.asarray(active)
        s = np.asarray(signs)
        GcA = gram_cols(active)
        try:
            u = np.linalg.solve(GcA[A], s)
        except np.linalg.LinAlgError:
            break
        # correlations recomputed from the current iterate
        c = c0 - GcA @ x[A]
        a = GcA @ u

        inactive = np.ones(K, dtype=bool)
        inactive[A] = False
        gam_join = np.inf
        j_join = -1
        if len(active) < min(M, K):
            ci, ai = c[inactive], a[inactive]
            with np.errstate(divide="ignore", invalid="ignore"):
                g1 = (lam - ci) / (1.0 - ai)
                g2 = (lam + ci) / (1.0 + ai)
            g1[~(g1 > tiny)] = np.inf
            g2[~(g2 > tiny)] = np.inf
            g = np.minimum(g1, g2)
            if just_dropped >= 0:
                # an atom that just left sits exactly on the boundary; it may
                # only re-enter after a genuine step along the new direction
                p = np.searchsorted(np.flatnonzero(inactive), just_dropped)
                if g[p] <= 1e-9 * lam:
                    g[p] = np.inf
            if g.size:
                p = int(np.argmin(g))
                gam_join = g[p]
                j_join = int(np.flatnonzero(inactive)[p])

        with np.errstate(divide="ignore", invalid="ignore"):
            gd = -x[A] / u
        gd[~(gd > tiny)] = np.inf
        p_drop = int(np.argmin(gd))
        gam_drop = gd[p_drop]

        gam_end = lam - lam_target
        gam = min(gam_join, gam_drop, gam_end)
        x[A] += gam * u
        lam -= gam
        just_dropped = -1
        if gam == gam_end:
            lam = lam_target
            break
        if gam == gam_drop:
            j = active.pop(p_drop)
            signs.pop(p_drop)
            x[j] = 0.0
            just_dropped = j
        else:
            cj = c0[j_join] - GcA[j_join] @ x[A]
            active.append(j_join)
            signs.append(float(np.sign(cj)) or 1.0)
        if on_breakpoint is not None and on_breakpoint(lam, x):
            return x, lam
        if not active:
            break

    # polish: exact solution for the final active set and signs
    if active:
        A = np.asarray(active)
        s = np.asarray(signs)
        try:
            xa = np.linalg.solve(gram_cols(active)[A], c0[A] - lam * s)
            if np.all(np.sign(xa) == s) or lam == 0:
                x = np.zeros(K)
                x[A] = xa
        except np.linalg.LinAlgError:
            pass
    return x, lam


def _prep(y, D):
    D = _matrix(D)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise ValueError("y must be a vector")
    _check(D, y.shape[0])
    return y, D


def _code(D, y, x):
    x = np.where(np.abs(x) > 0, x, 0.0)
    return SparseCode(x, tuple(np.flatnonzero(x).tolist()), float(np.linalg.norm(y - D @ x)))


def lars_lasso(y, D, lam, G=None) -> SparseCode:
    """Minimise ``0.5 ||y - Dx||^2 + lam ||x||_1`` by the LARS homotopy."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    y, D = _prep(y, D)
    x, _ = _lars(y, D, float(lam), G=G)
    return _code(D, y, x)


def lars_path(y, D, lam_min=0.0, G=None) -> list[LarsBreakpoint]:
    """All breakpoints of the lasso path from ``max|D^T y|`` to ``lam_min``."""
    y, D = _prep(y, D)
    pts: list[LarsBreakpoint] = []

    def record(lam, x):
        pts.append(LarsBreakpoint(lam, x.copy(), tuple(np.flatnonzero(x).tolist())))
        return False

    x, lam = _lars(y, D, float(lam_min), G=G, on_breakpoint=record)
    if not pts or pts[-1].lam != lam:
        pts.append(LarsBreakpoint(lam, x.copy(), tuple(np.flatnonzero(x).tolist())))
    return pts


def bpdn_solve(y, D, delta, G=None) -> SparseCode:
    """First lasso-path breakpoint whose residual is within ``delta``.

    Walks the path from large to small lambda. If no breakpoint reaches the
    threshold the end of the path (lambda = 0) is returned.
    """
    y, D = _prep(y, D)
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if delta > np.linalg.norm(y) * (1 + 1e-12):
        raise ValueError("delta exceeds ||y||; the zero code already satisfies it")
    tol = delta * (1 + 1e-9) + 1e-12 * np.linalg.norm(y)

    def good(lam, x):
        return np.linalg.norm(y - D @ x) <= tol

    x, lam = _lars(y, D, 0.0, G=G, on_breakpoint=good)
    if np.linalg.norm(y - D @ x) > tol and lam == 0.0:
        # end of the path; finish with a least-squares refit of the support
        sup = np.flatnonzero(x).tolist()
        x = _lstsq_refit(D, y, sup)
    return _code(D, y, x)


def kkt_violation(y, D, x, lam):
    """Largest violation of the lasso optimality conditions at ``x``."""
    D = _matrix(D)
    c = D.T @ (np.asarray(y) - D @ x)
    on = x != 0
    v_on = np.abs(c[on] - lam * np.sign(x[on])).max(initial=0.0)
    v_off = np.maximum(np.abs(c[~on]) - lam, 0.0).max(initial=0.0)
    return max(v_on, v_off)


def encode(Y, D, stop: StopRule) -> SparseCodeMatrix:
    """Code every column of ``Y``; the common coder used for evaluation."""
    return batch_omp(Y, D, stop)
