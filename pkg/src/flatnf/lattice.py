"""Torus geometry: the quadratic form, linear frequencies and lattice balls.

A flat torus is described by a symmetric positive-definite matrix ``G``.
The bilinear form ``g(a, b) = a^T G b`` evaluated on integer vectors gives
the linear frequencies ``lambda_n^2 = g(n, n)`` of the Laplacian.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "TorusMetric",
    "LatticeBall",
    "ScanReport",
    "g_form",
    "frequency",
    "admissibility_scan",
    "admissible_example",
    "square_torus",
    "load_metric",
]


@dataclass(frozen=True)
class TorusMetric:
    """Symmetric positive-definite metric on a flat torus.

    Parameters
    ----------
    G : array_like
        ``d x d`` real matrix.
    tau_star : float
        Diophantine exponent used by the admissibility scan.
    c_lower : float
        Empirical lower constant, 0 when unknown.
    """

    G: np.ndarray
    tau_star: float = 4.0
    c_lower: float = 0.0

    def __post_init__(self):
        G = np.array(self.G, dtype=float)
        if G.ndim != 2 or G.shape[0] != G.shape[1] or G.shape[0] == 0:
            raise ValueError(f"metric must be a non-empty square matrix, got shape {G.shape}")
        if not np.array_equal(G, G.T):
            raise ValueError("metric matrix is not symmetric")
        for k in range(1, G.shape[0] + 1):
            if np.linalg.det(G[:k, :k]) <= 0:
                raise ValueError("metric matrix is not positive definite")
        if self.tau_star <= 0:
            raise ValueError("tau_star must be positive")
        if self.c_lower < 0:
            raise ValueError("c_lower must be non-negative")
        G.setflags(write=False)
        object.__setattr__(self, "G", G)

    @property
    def dim(self) -> int:
        return self.G.shape[0]

    def to_dict(self) -> dict:
        return {"G": self.G.tolist(), "tau_star": self.tau_star, "c_lower": self.c_lower}


def admissible_example() -> TorusMetric:
    """The metric ``[[1, sqrt 2], [sqrt 2, 3]]``, free of rational relations."""
    r2 = math.sqrt(2.0)
    return TorusMetric(np.array([[1.0, r2], [r2, 3.0]]), tau_star=4.0)


def square_torus(d: int = 2) -> TorusMetric:
    """Identity metric, the fully resonant square torus."""
    return TorusMetric(np.eye(d), tau_star=4.0)


def load_metric(source) -> TorusMetric:
    """Build a metric from a JSON file path or an already parsed mapping.

    The mapping holds ``"G"`` and optionally ``"tau_star"`` and ``"c_lower"``.
    """
    if isinstance(source, (str, Path)):
        data = json.loads(Path(source).read_text())
    else:
        data = dict(source)
    unknown = set(data) - {"G", "tau_star", "c_lower"}
    if unknown:
        raise ValueError(f"unknown metric keys: {sorted(unknown)}")
    if "G" not in data:
        raise ValueError("metric is missing 'G'")
    return TorusMetric(
        np.array(data["G"], dtype=float),
        tau_star=float(data.get("tau_star", 4.0)),
        c_lower=float(data.get("c_lower", 0.0)),
    )


def _vec(metric: TorusMetric, a) -> np.ndarray:
    v = np.asarray(a)
    if v.shape != (metric.dim,):
        raise ValueError(f"expected a vector of length {metric.dim}, got shape {v.shape}")
    return v.astype(float)


def g_form(metric: TorusMetric, a, b) -> float:
    """Evaluate ``a^T G b``."""
    return float(_vec(metric, a) @ metric.G @ _vec(metric, b))


def frequency(metric: TorusMetric, n) -> float:
    """Linear frequency ``lambda_n^2 = g(n, n)``."""
    v = _vec(metric, n)
    return float(v @ metric.G @ v)


@dataclass(frozen=True)
class LatticeBall:
    """Integer points of Euclidean norm at most ``M`` in lexicographic order.

    Attributes
    ----------
    sites : ndarray of int, shape (count, dim)
    """

    dim: int
    M: float
    sites: np.ndarray = field(init=False, repr=False)
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.M < 0:
            raise ValueError("M must be non-negative")
        R = int(math.floor(self.M))
        pts = [
            p
            for p in itertools.product(range(-R, R + 1), repeat=self.dim)
            if sum(x * x for x in p) <= self.M * self.M + 1e-9
        ]
        sites = np.array(pts, dtype=np.int64).reshape(-1, self.dim)
        sites.setflags(write=False)
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "_index", {tuple(p): i for i, p in enumerate(pts)})

    def __len__(self) -> int:
        return self.sites.shape[0]

    def __eq__(self, other):
        return isinstance(other, LatticeBall) and self.dim == other.dim and self.M == other.M

    def __hash__(self):
        return hash((self.dim, self.M))

    def index(self, n) -> int:
        """Position of site ``n``; raises ``KeyError`` outside the ball."""
        return self._index[tuple(int(x) for x in n)]

    def contains(self, n) -> bool:
        return tuple(int(x) for x in n) in self._index

    @property
    def norms(self) -> np.ndarray:
        """Euclidean norms ``|n|`` of the sites."""
        return np.sqrt((self.sites.astype(float) ** 2).sum(axis=1))

    @property
    def brackets(self) -> np.ndarray:
        """Japanese brackets ``<n> = max(1, |n|)``."""
        return np.maximum(1.0, self.norms)

    def frequencies(self, metric: TorusMetric) -> np.ndarray:
        """All ``lambda_n^2`` over the ball, in site order."""
        if metric.dim != self.dim:
            raise ValueError("metric and ball dimensions differ")
        S = self.sites.astype(float)
        return np.einsum("ij,jk,ik->i", S, metric.G, S)

    def zero_index(self) -> int:
        return self.index((0,) * self.dim)


@dataclass
class ScanReport:
    """Outcome of a finite-range admissibility scan (empirical, not a proof)."""

    M: float
    min_value: float
    argmin_a: tuple
    argmin_b: tuple
    zero_hits: list

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "min_value": self.min_value,
            "argmin_a": list(self.argmin_a),
            "argmin_b": list(self.argmin_b),
            "zero_hits": [[list(a), list(b)] for a, b in self.zero_hits],
            "note": "empirical finite-range scan; not a certificate of admissibility",
        }


def admissibility_scan(metric: TorusMetric, M: float) -> ScanReport:
    """Scan ``|g(a,b)| |a|^tau |b|^tau`` over nonzero ``|a|, |b| <= M``.

    Exact zeros are detected with the relative tolerance
    ``1e-14 * ||G||_inf * |a| * |b|``; they are listed in ``zero_hits`` and
    force ``min_value`` to 0.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    ball = LatticeBall(metric.dim, M)
    S = ball.sites[np.any(ball.sites != 0, axis=1)]
    Sf = S.astype(float)
    norms = np.sqrt((Sf**2).sum(axis=1))
    gmat = Sf @ metric.G @ Sf.T
    tol = 1e-14 * np.abs(metric.G).sum(axis=1).max() * np.outer(norms, norms)
    zero = np.abs(gmat) <= tol
    weighted = np.abs(gmat) * np.outer(norms, norms) ** metric.tau_star
    weighted[zero] = 0.0
    flat = int(np.argmin(weighted))
    i, j = divmod(flat, weighted.shape[1])
    hits = [
        (tuple(int(x) for x in S[a]), tuple(int(x) for x in S[b]))
        for a, b in zip(*np.nonzero(zero))
    ]
    return ScanReport(
        M=M,
        min_value=float(weighted[i, j]),
        argmin_a=tuple(int(x) for x in S[i]),
        argmin_b=tuple(int(x) for x in S[j]),
        zero_hits=hits,
    )
