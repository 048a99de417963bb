"""Frequency clusters of the truncated lattice and their super-actions.

Two sites are linked when they are close both in position and in frequency,
``|n1 - n2| + |lambda^2_n1 - lambda^2_n2| <= (|n1| + |n2|)^delta``.  Clusters
are the connected components of that graph, with every component touching
``|n| < 2`` merged into one bounded class.  Distinct clusters are then
separated by construction; dyadicity (``max |n| <= 2 min |n|``) is checked.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .lattice import LatticeBall, TorusMetric

__all__ = [
    "ClusterPartition",
    "PartitionReport",
    "build_partition",
    "verify_partition",
    "super_actions",
    "largest_valid_delta",
]


@dataclass
class ClusterPartition:
    """Partition of a lattice ball into frequency clusters.

    Attributes
    ----------
    classes : list of ndarray
        Site indices of each class; class 0 is the bounded class.
    class_of : ndarray of int
        Class id of each site.
    m_of : ndarray of float
        Smallest ``|n|`` in each class.
    valid : bool
        True iff every class other than the bounded one is dyadic.
    """

    ball: LatticeBall
    delta: float
    classes: list
    class_of: np.ndarray
    m_of: np.ndarray
    valid: bool = field(default=False)

    @property
    def bounded_radius(self) -> float:
        """Largest ``|n|`` inside the bounded class."""
        return float(self.ball.norms[self.classes[0]].max())

    def to_dict(self) -> dict:
        S = self.ball.sites
        return {
            "delta": self.delta,
            "M": self.ball.M,
            "valid": self.valid,
            "bounded_radius": self.bounded_radius,
            "classes": [[S[i].tolist() for i in c] for c in self.classes],
            "m": self.m_of.tolist(),
        }


def _gap_matrix(metric: TorusMetric, ball: LatticeBall):
    """Pairwise separation ``|n1 - n2| + |lambda diff|`` and threshold ``(|n1|+|n2|)^delta`` base."""
    S = ball.sites.astype(float)
    lam2 = ball.frequencies(metric)
    dist = np.sqrt(((S[:, None, :] - S[None, :, :]) ** 2).sum(axis=2))
    gap = dist + np.abs(lam2[:, None] - lam2[None, :])
    norms = ball.norms
    return gap, norms[:, None] + norms[None, :]


def _is_dyadic(norms: np.ndarray, members: np.ndarray) -> bool:
    vals = norms[members]
    return bool(vals.max() <= 2.0 * vals.min())


def build_partition(metric: TorusMetric, ball: LatticeBall, delta: float) -> ClusterPartition:
    """Components of the proximity graph with the bounded class merged.

    Parameters
    ----------
    metric : TorusMetric
    ball : LatticeBall
    delta : float
        Separation exponent in ``(0, 1)``.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    gap, radius = _gap_matrix(metric, ball)
    adj = gap <= radius**delta
    rows, cols = np.nonzero(np.triu(adj, 1))
    n = len(ball)
    graph = coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    norms = ball.norms
    bounded = set(labels[norms < 2].tolist())
    merged = np.where(np.isin(labels, list(bounded)), -1, labels)
    # relabel: bounded class first, the rest by first appearance in site order
    order = {-1: 0}
    for lab in merged:
        if lab not in order:
            order[int(lab)] = len(order)
    class_of = np.array([order[int(lab)] for lab in merged], dtype=np.int64)
    classes = [np.nonzero(class_of == c)[0] for c in range(len(order))]
    m_of = np.array([norms[c].min() for c in classes])
    valid = all(_is_dyadic(norms, c) for c in classes[1:])
    return ClusterPartition(ball, delta, classes, class_of, m_of, valid)


@dataclass
class PartitionReport:
    dyadic_ok: bool
    separation_ok: bool
    worst_pair: tuple
    worst_margin: float


def verify_partition(p: ClusterPartition, metric: TorusMetric) -> PartitionReport:
    """Exhaustive check of dyadicity and strict separation between classes.

    ``worst_margin`` is the smallest ``gap - (|n1|+|n2|)^delta`` over pairs in
    distinct classes, attained at ``worst_pair`` (site vectors).
    """
    gap, radius = _gap_matrix(metric, p.ball)
    margin = gap - radius**p.delta
    cross = p.class_of[:, None] != p.class_of[None, :]
    S = p.ball.sites
    if cross.any():
        masked = np.where(cross, margin, np.inf)
        flat = int(np.argmin(masked))
        i, j = divmod(flat, masked.shape[1])
        worst = (tuple(S[i].tolist()), tuple(S[j].tolist()))
        worst_margin = float(masked[i, j])
    else:
        worst, worst_margin = (), float("inf")
    norms = p.ball.norms
    dyadic = all(_is_dyadic(norms, c) for c in p.classes[1:])
    return PartitionReport(dyadic, worst_margin > 0, worst, worst_margin)


def super_actions(amps, p: ClusterPartition) -> np.ndarray:
    """``S_c = sum_{n in c} |u_n|^2`` for every class ``c``.

    Parameters
    ----------
    amps : array_like of complex or FourierState
        Amplitudes over the partition's ball.
    """
    ball = getattr(amps, "ball", None)
    if ball is not None and ball != p.ball:
        raise ValueError("state and partition live on different balls")
    u = np.asarray(getattr(amps, "amps", amps))
    if u.shape != (len(p.ball),):
        raise ValueError("amplitude vector does not match the partition's ball")
    return np.bincount(p.class_of, weights=np.abs(u) ** 2, minlength=len(p.classes))


def largest_valid_delta(metric: TorusMetric, ball: LatticeBall, deltas) -> float | None:
    """Largest delta from a sweep whose partition is dyadic, or None."""
    best = None
    for delta in sorted(deltas):
        if build_partition(metric, ball, delta).valid:
            best = delta
    return best
