"""Multi-indices ``(k, l, m)`` of re-centered monomials.

A monomial is ``prod_n u_n^{k_n} conj(u_n)^{l_n} y_n^{m_n}`` with
``y_n = |u_n|^2 - xi_n`` and the non-pairing rule ``k_n l_n = 0``.  Internally
a multi-index is a *key*: a tuple of ``(site, k, l, m)`` entries sorted by
site index with all-zero entries omitted.  :class:`MultiIndex` is a thin
readable wrapper around a key.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["MultiIndex", "make_key", "key_degree", "key_conj", "key_n_minus", "key_is_integrable"]


def make_key(k=None, l=None, m=None) -> tuple:
    """Canonical key from site-indexed mappings ``k``, ``l``, ``m``."""
    k, l, m = dict(k or {}), dict(l or {}), dict(m or {})
    out = []
    for site in sorted(set(k) | set(l) | set(m)):
        a, b, c = int(k.get(site, 0)), int(l.get(site, 0)), int(m.get(site, 0))
        if min(a, b, c) < 0:
            raise ValueError("exponents must be non-negative")
        if a and b:
            raise ValueError(f"non-pairing violated at site {site}")
        if a or b or c:
            out.append((int(site), a, b, c))
    return tuple(out)


def key_degree(key: tuple) -> int:
    return sum(k + l + 2 * m for _, k, l, m in key)


def key_conj(key: tuple) -> tuple:
    """Swap the roles of ``u`` and ``conj(u)``."""
    return tuple((s, l, k, m) for s, k, l, m in key)


def key_is_integrable(key: tuple) -> bool:
    return all(k == 0 and l == 0 for _, k, l, _ in key)


def key_n_minus(key: tuple, norms: np.ndarray) -> float:
    """Smallest ``|n|`` over unpaired sites, ``inf`` for integrable keys."""
    vals = [norms[s] for s, k, l, _ in key if k + l]
    return float(min(vals)) if vals else math.inf


@dataclass(frozen=True)
class MultiIndex:
    """Readable view of a key.  Sites are indices into a lattice ball."""

    key: tuple

    @classmethod
    def build(cls, k=None, l=None, m=None) -> "MultiIndex":
        return cls(make_key(k, l, m))

    @property
    def k(self) -> dict:
        return {s: a for s, a, _, _ in self.key if a}

    @property
    def l(self) -> dict:
        return {s: b for s, _, b, _ in self.key if b}

    @property
    def m(self) -> dict:
        return {s: c for s, _, _, c in self.key if c}

    @property
    def degree(self) -> int:
        return key_degree(self.key)

    def conj(self) -> "MultiIndex":
        return MultiIndex(key_conj(self.key))

    def is_integrable(self) -> bool:
        return key_is_integrable(self.key)

    def n_minus(self, ball) -> float:
        return key_n_minus(self.key, ball.norms)

    def momentum(self, ball) -> tuple:
        """``(sum (k - l), sum n (k - l))``; both vanish on the constrained class."""
        total = 0
        vec = np.zeros(ball.dim, dtype=np.int64)
        for s, k, l, _ in self.key:
            total += k - l
            vec += (k - l) * ball.sites[s]
        return total, tuple(int(x) for x in vec)

    def to_json(self, ball) -> dict:
        S = ball.sites

        def pack(d):
            return {",".join(str(int(x)) for x in S[s]): v for s, v in d.items()}

        return {"k": pack(self.k), "l": pack(self.l), "m": pack(self.m)}
