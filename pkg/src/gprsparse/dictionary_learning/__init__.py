"""Dictionary learners sharing one calling convention.

Every learner takes ``(Y, config)`` and returns
``(Dictionary, SparseCodeMatrix, LearnReport)``. Training columns are
normalised to unit length first; the returned codes refer to those
normalised columns.
"""
from .common import LearnConfig, LearnReport, init_dictionary, prepare, wls_update
from .ksvd import ksvd, ksvd_sweep
from .odl import odl, odl_column_sweep
from .online import cbwlsu, dominodl
from .probe import complexity_probe

LEARNERS = {"ksvd": ksvd, "odl": odl, "cbwlsu": cbwlsu, "dominodl": dominodl}


def learn(algo, Y, config=None, **kw):
    if algo not in LEARNERS:
        raise ValueError(f"unknown algorithm {algo!r}; choose from {', '.join(LEARNERS)}")
    return LEARNERS[algo](Y, config or LearnConfig(), **kw)


__all__ = ["LearnConfig", "LearnReport", "LEARNERS", "learn", "init_dictionary", "prepare",
           "wls_update", "ksvd", "ksvd_sweep", "odl", "odl_column_sweep", "cbwlsu", "dominodl",
           "complexity_probe"]
