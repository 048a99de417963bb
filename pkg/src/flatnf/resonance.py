"""Zero-momentum multi-vectors, resonance functions and kappa-filtering.

A multi-vector of half-degree ``q`` is a tuple ``(n_1, ..., n_2q)`` of lattice
sites with alternating sum ``sum_i (-1)^i n_i = 0``.  Odd slots carry ``u``,
even slots carry ``conj(u)``, so the monomial is
``u_{n_1} conj(u_{n_2}) u_{n_3} ...``.  Multi-vectors are stored as rows of
site indices into a :class:`~flatnf.lattice.LatticeBall`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import LatticeBall, TorusMetric, g_form

__all__ = [
    "EnumerationCapError",
    "HomogeneousPoly",
    "FourWaveRecord",
    "enumerate_multivectors",
    "resonance_value",
    "resonance_values",
    "four_wave_check",
    "kappa_filter",
    "quartet_scan",
    "trivial_mask",
    "rectangle_quartets",
    "QuartetScan",
    "PatternSet",
    "unpaired_patterns",
    "DEFAULT_ENUM_CAP",
]

DEFAULT_ENUM_CAP = 2 * 10**8


class EnumerationCapError(RuntimeError):
    """Raised when an enumeration would exceed the configured work cap."""

    def __init__(self, estimate: int, cap: int):
        super().__init__(f"enumeration would visit about {estimate} candidates, cap is {cap}")
        self.estimate = estimate
        self.cap = cap


def _site_lookup(ball: LatticeBall, reach: int):
    """Dense grid mapping integer vectors in ``[-reach, reach]^d`` to site ids (-1 outside)."""
    width = 2 * reach + 1
    grid = -np.ones((width,) * ball.dim, dtype=np.int64)
    grid[tuple((ball.sites + reach).T)] = np.arange(len(ball))
    return grid


def enumerate_multivectors(q: int, ball: LatticeBall, cap: int = DEFAULT_ENUM_CAP) -> np.ndarray:
    """All zero-momentum ``2q``-tuples of ball sites.

    The first ``2q - 1`` slots range freely and the last one is solved from
    the momentum constraint, then tested for membership in the ball.

    Parameters
    ----------
    q : int
        Half-degree, at least 1.
    ball : LatticeBall
    cap : int
        Upper bound on the number of candidate tuples visited.

    Returns
    -------
    ndarray of int64, shape (count, 2q)
        Site indices, rows in lexicographic order of the first ``2q - 1`` slots.
    """
    if q < 1:
        raise ValueError("q must be at least 1")
    nb = len(ball)
    work = nb ** (2 * q - 1)
    if work > cap:
        raise EnumerationCapError(work, cap)
    R = int(math.floor(ball.M))
    reach = (2 * q - 1) * R
    grid = _site_lookup(ball, reach)
    sites = ball.sites
    free = 2 * q - 1
    inner = free - 1
    inner_idx = (
        np.stack(np.unravel_index(np.arange(nb**inner), (nb,) * inner), axis=1)
        if inner
        else np.zeros((1, 0), dtype=np.int64)
    )
    inner_mom = np.zeros((inner_idx.shape[0], ball.dim), dtype=np.int64)
    for slot in range(inner):
        sign = -1 if slot % 2 == 0 else 1  # slots 2, 3, ... (1-based) carry signs -, +, ...
        inner_mom += sign * sites[inner_idx[:, slot]]
    out = []
    for first in range(nb):
        last = sites[first] + inner_mom
        ids = grid[tuple((last + reach).T)]
        keep = ids >= 0
        if not keep.any():
            continue
        block = np.empty((int(keep.sum()), 2 * q), dtype=np.int64)
        block[:, 0] = first
        block[:, 1:free] = inner_idx[keep]
        block[:, free] = ids[keep]
        out.append(block)
    if not out:
        return np.zeros((0, 2 * q), dtype=np.int64)
    return np.concatenate(out)


def resonance_values(lam2: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Vectorised ``Omega = sum_i (-1)^(i+1) lambda^2_{n_i}`` over rows of ``idx``.

    Odd and even slots are summed separately after sorting, so a row whose
    odd and even slots agree as multisets gives exactly 0.
    """
    idx = np.atleast_2d(idx)
    odd = np.sort(lam2[idx[:, 0::2]], axis=1).sum(axis=1)
    even = np.sort(lam2[idx[:, 1::2]], axis=1).sum(axis=1)
    return odd - even


def _as_array(metric: TorusMetric, v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != metric.dim or arr.shape[0] % 2:
        raise ValueError("multi-vector must be an even-length sequence of vectors of the metric dimension")
    return arr


def resonance_value(metric: TorusMetric, v) -> float:
    """``Omega_v`` for one multi-vector given as a sequence of integer vectors."""
    arr = _as_array(metric, v).astype(float)
    lam2 = np.einsum("ij,jk,ik->i", arr, metric.G, arr)
    return float(np.sort(lam2[0::2]).sum() - np.sort(lam2[1::2]).sum())


@dataclass(frozen=True)
class FourWaveRecord:
    omega: float
    identity_residual: float
    trivial: bool


def four_wave_check(metric: TorusMetric, v) -> FourWaveRecord:
    """Compare ``Omega`` with ``2 g(n1 - n2, n1 - n4)`` for one quartet."""
    arr = _as_array(metric, v)
    if arr.shape[0] != 4:
        raise ValueError("four_wave_check needs exactly four vectors")
    n1, n2, n3, n4 = (tuple(int(x) for x in row) for row in arr)
    if any(a - b + c - d for a, b, c, d in zip(n1, n2, n3, n4)):
        raise ValueError("quartet does not have zero momentum")
    omega = resonance_value(metric, arr)
    ident = 2.0 * g_form(metric, arr[0] - arr[1], arr[0] - arr[3])
    trivial = sorted([n1, n3]) == sorted([n2, n4])
    return FourWaveRecord(omega, abs(omega - ident), trivial)


def trivial_mask(idx: np.ndarray) -> np.ndarray:
    """Rows of an index array of quartets with ``{n1, n3} = {n2, n4}``."""
    a, b, c, d = idx.T
    return ((a == b) & (c == d)) | ((a == d) & (c == b))


class HomogeneousPoly:
    """Sparse homogeneous polynomial of degree ``2q`` on a lattice ball.

    Coefficients ``P_v`` multiply ``u_{n_1} conj(u_{n_2}) ... conj(u_{n_2q})``
    and the polynomial is ``sum_v P_v u^v``.  Absent rows are exactly zero.

    Parameters
    ----------
    q : int
    ball : LatticeBall
    idx : ndarray of int, shape (count, 2q)
        Site indices of the stored multi-vectors.
    coeffs : ndarray of complex, shape (count,)
    """

    def __init__(self, q: int, ball: LatticeBall, idx, coeffs):
        idx = np.asarray(idx, dtype=np.int64).reshape(-1, 2 * q)
        coeffs = np.asarray(coeffs, dtype=complex).reshape(-1)
        if idx.shape[0] != coeffs.shape[0]:
            raise ValueError("index and coefficient counts differ")
        if idx.size and (idx.min() < 0 or idx.max() >= len(ball)):
            raise ValueError("multi-vector outside the support ball")
        self.q = q
        self.ball = ball
        self.idx = idx
        self.coeffs = coeffs

    @classmethod
    def constant(cls, q: int, ball: LatticeBall, value: complex = 1.0, cap: int = DEFAULT_ENUM_CAP):
        """The polynomial equal to ``value`` on every zero-momentum multi-vector."""
        idx = enumerate_multivectors(q, ball, cap)
        return cls(q, ball, idx, np.full(idx.shape[0], value, dtype=complex))

    @property
    def degree(self) -> int:
        return 2 * self.q

    def __len__(self) -> int:
        return self.idx.shape[0]

    def as_dict(self) -> dict:
        return {tuple(int(x) for x in row): complex(c) for row, c in zip(self.idx, self.coeffs)}

    def vectors(self):
        """Stored multi-vectors as tuples of lattice points."""
        S = self.ball.sites
        return [tuple(tuple(int(x) for x in S[i]) for i in row) for row in self.idx]

    def omegas(self, metric: TorusMetric) -> np.ndarray:
        return resonance_values(self.ball.frequencies(metric), self.idx)

    def evaluate(self, u: np.ndarray) -> complex:
        """``sum_v P_v u^v`` at a vector of amplitudes over the ball."""
        u = np.asarray(u, dtype=complex)
        f = np.where(np.arange(2 * self.q) % 2 == 0, 0, 1)
        vals = np.where(f[None, :] == 0, u[self.idx], np.conj(u[self.idx]))
        return complex((self.coeffs * vals.prod(axis=1)).sum())

    def check_invariants(self, tol: float = 1e-12) -> bool:
        """Symmetry under odd/even slot permutations and the reality condition."""
        table = self.as_dict()
        q = self.q
        canon = {}
        for key, c in table.items():
            odd, even = key[0::2], key[1::2]
            # symmetry: the value depends only on the odd and even multisets
            ck = (tuple(sorted(odd)), tuple(sorted(even)))
            if ck in canon and abs(canon[ck] - c) > tol * max(1.0, abs(c)):
                return False
            canon.setdefault(ck, c)
            # reality: cyclic shift by one slot exchanges odd and even roles
            swapped = [None] * (2 * q)
            swapped[0::2] = even
            swapped[1::2] = odd
            if abs(table.get(tuple(swapped), 0.0) - np.conj(c)) > tol * max(1.0, abs(c)):
                return False
        return True

    def filtered(self, keep: np.ndarray) -> "HomogeneousPoly":
        return HomogeneousPoly(self.q, self.ball, self.idx[keep], self.coeffs[keep])


def kappa_filter(p: HomogeneousPoly, metric: TorusMetric, kappa: float) -> HomogeneousPoly:
    """Keep exactly the coefficients with ``|Omega_v| <= kappa``."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    return p.filtered(np.abs(p.omegas(metric)) <= kappa)


@dataclass
class QuartetScan:
    idx: np.ndarray
    omega: np.ndarray
    trivial: np.ndarray

    @property
    def min_nonzero(self) -> float:
        nz = np.abs(self.omega[~self.trivial])
        nz = nz[nz > 0]
        return float(nz.min()) if nz.size else math.inf


def quartet_scan(metric: TorusMetric, ball: LatticeBall, cap: int = DEFAULT_ENUM_CAP) -> QuartetScan:
    """Every zero-momentum quartet of the ball with its ``Omega`` and triviality flag."""
    idx = enumerate_multivectors(2, ball, cap)
    return QuartetScan(idx, resonance_values(ball.frequencies(metric), idx), trivial_mask(idx))


def rectangle_quartets(ball: LatticeBall) -> set:
    """Nontrivial resonant quartets of the square torus, found geometrically.

    Uses Thales: ``n2`` is a vertex of a rectangle with diagonal ``n1 n3``
    iff it lies on the circle with that diameter.  Returns index 4-tuples.
    """
    S = ball.sites
    out = set()
    for i in range(len(ball)):
        for k in range(len(ball)):
            if i == k:
                continue
            centre2 = S[i] + S[k]
            diam2 = int(((S[i] - S[k]) ** 2).sum())
            on_circle = ((2 * S - centre2) ** 2).sum(axis=1) == diam2
            for j in np.nonzero(on_circle)[0]:
                if j in (i, k):
                    continue
                n4 = S[i] + S[k] - S[j]
                if ball.contains(n4):
                    out.add((i, int(j), k, ball.index(n4)))
    return out


@dataclass
class PatternSet:
    """Distinct exponent differences ``v = k - l`` of non-integrable multi-indices.

    Attributes
    ----------
    V : ndarray of int, shape (count, sites)
        One pattern per row; supports of ``k`` and ``l`` are disjoint.
    order : ndarray of int
        ``sum |v_n|``, the smallest degree carrying the pattern.
    n_minus : ndarray of float
        Smallest ``|n|`` over the support of each pattern.
    """

    V: np.ndarray
    order: np.ndarray
    n_minus: np.ndarray

    def __len__(self) -> int:
        return self.V.shape[0]

    def subset(self, keep: np.ndarray) -> "PatternSet":
        return PatternSet(self.V[keep], self.order[keep], self.n_minus[keep])


def unpaired_patterns(ball: LatticeBall, max_degree: int, cap: int = DEFAULT_ENUM_CAP) -> PatternSet:
    """All zero-momentum patterns ``v = k - l`` with ``sum |v| <= max_degree``.

    Integrable multi-indices (``v = 0``) are excluded.  Multi-indices that
    only differ by extra actions ``y_n`` share a pattern, so resonance values
    and ``n_minus`` are functions of the pattern alone.
    """
    nb = len(ball)
    rows = []
    for t in range(1, max_degree // 2 + 1):
        idx = enumerate_multivectors(t, ball, cap)
        odd = np.sort(idx[:, 0::2], axis=1)
        even = np.sort(idx[:, 1::2], axis=1)
        disjoint = ~(odd[:, :, None] == even[:, None, :]).any(axis=(1, 2))
        canon = np.unique(np.hstack([odd, even])[disjoint], axis=0)
        V = np.zeros((canon.shape[0], nb), dtype=np.int64)
        r = np.arange(canon.shape[0])
        for j in range(t):
            np.add.at(V, (r, canon[:, j]), 1)
            np.add.at(V, (r, canon[:, t + j]), -1)
        rows.append(V)
    V = np.concatenate(rows) if rows else np.zeros((0, nb), dtype=np.int64)
    norms = ball.norms
    nm = np.where(V != 0, norms[None, :], np.inf).min(axis=1) if V.size else np.zeros(0)
    return PatternSet(V, np.abs(V).sum(axis=1), nm)
