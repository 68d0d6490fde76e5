"""Value types shared across the pipeline."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np


@dataclass(frozen=True)
class RangeProfile:
    """One A-scan: ``M`` real samples taken every ``dt`` seconds."""

    samples: np.ndarray
    dt: float
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1:
            raise ValueError("range profile must be one-dimensional")
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.shape[0]

    def replace(self, samples):
        return RangeProfile(samples, self.dt, dict(self.meta))


@dataclass(frozen=True)
class BScan:
    """Profiles stacked column-wise along a survey line.

    ``data`` has shape ``(M, L)``: one column per antenna position.
    """

    data: np.ndarray
    dt: float
    dx: float
    positions: np.ndarray | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 2:
            raise ValueError("B-scan data must be an (M, L) matrix")
        object.__setattr__(self, "data", d)
        if self.positions is None:
            object.__setattr__(self, "positions", np.arange(d.shape[1]) * self.dx)
        else:
            object.__setattr__(self, "positions", np.asarray(self.positions, dtype=np.float64))

    @property
    def shape(self):
        return self.data.shape

    def profile(self, j):
        return RangeProfile(self.data[:, j], self.dt, {"position": float(self.positions[j])})

    def replace(self, data):
        return BScan(data, self.dt, self.dx, self.positions.copy(), dict(self.meta))


@dataclass(frozen=True)
class LabeledDataset:
    """Training matrix ``Y`` (M x L) with one integer label per column."""

    Y: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]
    dt: float = 25e-12

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if Y.ndim != 2:
            raise ValueError("Y must be an (M, L) matrix")
        if labels.shape != (Y.shape[1],):
            raise ValueError(f"expected {Y.shape[1]} labels, got {labels.shape}")
        if labels.size and (labels.min() < 0 or labels.max() >= len(self.class_names)):
            raise ValueError("label index outside the class-name table")
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", tuple(self.class_names))

    @property
    def M(self):
        return self.Y.shape[0]

    @property
    def L(self):
        return self.Y.shape[1]

    def subset(self, columns):
        columns = np.asarray(columns)
        return LabeledDataset(self.Y[:, columns], self.labels[columns], self.class_names, self.dt)

    def counts(self):
        return np.bincount(self.labels, minlength=len(self.class_names))


@dataclass(frozen=True)
class Dictionary:
    """Dictionary matrix ``D`` (M x K) with unit-norm atoms and provenance."""

    D: np.ndarray
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        D = np.asarray(self.D, dtype=np.float64)
        if D.ndim != 2:
            raise ValueError("dictionary must be an (M, K) matrix")
        if not np.all(np.isfinite(D)):
            raise ValueError("dictionary contains NaN or Inf")
        object.__setattr__(self, "D", D)

    @property
    def M(self):
        return self.D.shape[0]

    @property
    def K(self):
        return self.D.shape[1]


@dataclass(frozen=True)
class SparseCode:
    """Sparse code of a single signal."""

    x: np.ndarray
    support: tuple[int, ...]
    residual_norm: float


@dataclass
class SparseCodeMatrix:
    """Codes ``X`` (K x L) of a signal matrix, one column per signal."""

    X: np.ndarray
    residual_norms: np.ndarray

    @property
    def K(self):
        return self.X.shape[0]

    @property
    def L(self):
        return self.X.shape[1]

    def support(self, j):
        return tuple(np.flatnonzero(self.X[:, j]).tolist())

    def sparsity(self):
        return np.count_nonzero(self.X, axis=0)

    def column(self, j):
        return SparseCode(self.X[:, j].copy(), self.support(j), float(self.residual_norms[j]))


def normalize_columns(A, eps=0.0):
    """Return ``A`` with unit-l2 columns and the original norms.

    Columns with norm ``<= eps`` are left untouched.
    """
    A = np.asarray(A, dtype=np.float64)
    norms = np.linalg.norm(A, axis=0)
    scale = np.where(norms > eps, norms, 1.0)
    return A / scale, norms
