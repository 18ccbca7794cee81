"""Split measurements from several radial feeders into one group per feeder."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..moments import VoltageSamples
from .mst import DisjointSet


def partition_by_substation(
    data: VoltageSamples | tuple[Sequence[int], np.ndarray], eps: float = 0.05
) -> list[list[int]]:
    """Connected components of the graph joining nodes with |voltage correlation| > ``eps``.

    Nodes fed from different substations have independent voltages, so their
    correlation vanishes; each returned group can be learned separately.

    Parameters
    ----------
    data
        Voltage samples, or a pair ``(nodes, covariance)``.
    eps
        Correlation magnitude below which a pair is treated as independent.

    Returns
    -------
    list of list of int
        Sorted groups, ordered by their smallest node id.
    """
    if isinstance(data, VoltageSamples):
        nodes = sorted(data.observed)
        cols = [data.column(a) for a in nodes]
        cov = np.cov(data.v[:, cols], rowvar=False, ddof=1)
    else:
        nodes, cov = list(data[0]), np.asarray(data[1], dtype=float)
    cov = np.atleast_2d(cov)
    d = np.sqrt(np.clip(np.diag(cov), 0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = np.where(np.outer(d, d) > 0, cov / np.outer(d, d), 0.0)
    ds = DisjointSet(range(len(nodes)))
    ii, jj = np.nonzero(np.triu(np.abs(corr) > eps, k=1))
    for i, j in zip(ii, jj):
        ds.union(int(i), int(j))
    groups: dict[int, list[int]] = {}
    for i, a in enumerate(nodes):
        groups.setdefault(ds.find(i), []).append(a)
    return sorted((sorted(g) for g in groups.values()), key=lambda g: g[0])
