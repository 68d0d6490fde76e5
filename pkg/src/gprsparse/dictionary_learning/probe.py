"""Wall-time measurements of the learners over a grid of settings."""
from __future__ import annotations

import numpy as np

from .common import LearnConfig


def complexity_probe(algorithms, sizes, Y, base: LearnConfig | None = None, repeats=1):
    """Time each learner on each grid point.

    Parameters
    ----------
    algorithms : sequence of str
        Learner names (keys of ``LEARNERS``).
    sizes : sequence of dict
        ``LearnConfig`` overrides, e.g. ``[{"K": 320}, {"K": 640}]``.
    Y : (M, L) array or LabeledDataset
    base : LearnConfig, optional
    repeats : int
        Runs per point; the minimum wall time is kept.

    Returns
    -------
    list of dict with keys ``algorithm``, the override keys, ``wall_time``
    and ``iterations``.
    """
    from . import LEARNERS

    sizes = list(sizes)
    if not sizes:
        raise ValueError("the size grid is empty")
    base = base or LearnConfig()
    rows = []
    for point in sizes:
        cfg = base.with_(**point)
        for algo in algorithms:
            times, iters = [], None
            for _ in range(repeats):
                _, _, rep = LEARNERS[algo](Y, cfg)
                times.append(rep.wall_time)
                iters = rep.iterations
            rows.append({"algorithm": algo, **point, "wall_time": float(np.min(times)),
                         "iterations": iters})
    return rows
