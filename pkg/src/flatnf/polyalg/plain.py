"""Fully expanded polynomials in ``u`` and ``conj(u)``.

A :class:`PlainPoly` maps exponent keys ``((site, K, L), ...)`` to complex
coefficients of ``prod u_n^K conj(u_n)^L``.  Its Poisson bracket is computed
from partial derivatives alone, which makes it an independent check on the
re-centered algebra.
"""

from __future__ import annotations

import math
from collections import defaultdict
from itertools import product

import numpy as np

__all__ = ["PlainPoly", "random_real_plain"]


def _merge(a: tuple, b: tuple) -> dict:
    out = {s: [K, L] for s, K, L in a}
    for s, K, L in b:
        e = out.setdefault(s, [0, 0])
        e[0] += K
        e[1] += L
    return out


def _freeze(d: dict) -> tuple:
    return tuple((s, K, L) for s, (K, L) in sorted(d.items()) if K or L)


class PlainPoly:
    """Sparse polynomial ``sum_key c_key u^K conj(u)^L`` over a lattice ball."""

    def __init__(self, ball, terms=None):
        self.ball = ball
        self.terms = defaultdict(complex)
        if terms:
            for key, c in terms.items():
                self.terms[key] += c

    # construction -----------------------------------------------------
    @classmethod
    def from_homogeneous(cls, hp) -> "PlainPoly":
        """Aggregate a :class:`HomogeneousPoly` by exponent pattern."""
        out = cls(hp.ball)
        for row, c in zip(hp.idx, hp.coeffs):
            exps = {}
            for slot, s in enumerate(row):
                e = exps.setdefault(int(s), [0, 0])
                e[slot % 2] += 1
            out.terms[_freeze(exps)] += complex(c)
        return out

    def to_homogeneous(self, q: int, enumerate_fn=None):
        """Spread each exponent pattern of degree ``2q`` evenly over its orderings."""
        from ..resonance import HomogeneousPoly, enumerate_multivectors

        rows, coeffs = [], []
        idx = (enumerate_fn or enumerate_multivectors)(q, self.ball)
        for row in idx:
            exps = {}
            for slot, s in enumerate(row):
                e = exps.setdefault(int(s), [0, 0])
                e[slot % 2] += 1
            key = _freeze(exps)
            c = self.terms.get(key, 0.0)
            if c != 0:
                count = math.factorial(q) ** 2
                for _, K, L in key:
                    count //= math.factorial(K) * math.factorial(L)
                rows.append(row)
                coeffs.append(c / count)
        return HomogeneousPoly(q, self.ball, np.array(rows, dtype=np.int64).reshape(-1, 2 * q), coeffs)

    # arithmetic -------------------------------------------------------
    def copy(self) -> "PlainPoly":
        return PlainPoly(self.ball, dict(self.terms))

    def __add__(self, other: "PlainPoly") -> "PlainPoly":
        out = self.copy()
        for key, c in other.terms.items():
            out.terms[key] += c
        return out

    def __sub__(self, other: "PlainPoly") -> "PlainPoly":
        return self + other.scale(-1.0)

    def scale(self, factor: complex) -> "PlainPoly":
        return PlainPoly(self.ball, {k: factor * c for k, c in self.terms.items()})

    def __mul__(self, other: "PlainPoly") -> "PlainPoly":
        out = PlainPoly(self.ball)
        for ka, ca in self.terms.items():
            for kb, cb in other.terms.items():
                out.terms[_freeze(_merge(ka, kb))] += ca * cb
        return out

    def degree_part(self, degree: int) -> "PlainPoly":
        return PlainPoly(self.ball, {k: c for k, c in self.terms.items() if _deg(k) == degree})

    def degrees(self) -> set:
        return {_deg(k) for k, c in self.terms.items() if c != 0}

    def pruned(self, tol: float = 0.0) -> "PlainPoly":
        return PlainPoly(self.ball, {k: c for k, c in self.terms.items() if abs(c) > tol})

    # calculus ---------------------------------------------------------
    def bracket(self, other: "PlainPoly", max_degree: int | None = None) -> "PlainPoly":
        """``2i sum_n (d_conj(u_n) P d_u_n Q - d_u_n P d_conj(u_n) Q)``."""
        out = PlainPoly(self.ball)
        for ka, ca in self.terms.items():
            da = {s: (K, L) for s, K, L in ka}
            dega = _deg(ka)
            for kb, cb in other.terms.items():
                if max_degree is not None and dega + _deg(kb) - 2 > max_degree:
                    continue
                for s, Kb, Lb in kb:
                    if s not in da:
                        continue
                    Ka, La = da[s]
                    f = La * Kb - Ka * Lb
                    if f == 0:
                        continue
                    merged = _merge(ka, kb)
                    merged[s][0] -= 1
                    merged[s][1] -= 1
                    out.terms[_freeze(merged)] += 2j * f * ca * cb
        return out

    def evaluate(self, u) -> complex:
        u = np.asarray(u, dtype=complex)
        cu = np.conj(u)
        total = 0.0 + 0.0j
        for key, c in self.terms.items():
            term = c
            for s, K, L in key:
                term *= u[s] ** K * cu[s] ** L
            total += term
        return complex(total)

    # re-centering -----------------------------------------------------
    def recenter(self, xi, track_grad: bool = False):
        """Rewrite in the variables ``u, conj(u), y = |u|^2 - xi`` with non-pairing."""
        from .poly import RecenteredPoly

        xi = np.asarray(xi, dtype=float)
        out = RecenteredPoly(self.ball, xi, track_grad=track_grad)
        nb = len(self.ball)
        for key, c in self.terms.items():
            paired = [(s, min(K, L)) for s, K, L in key if min(K, L)]
            base = {s: (K - min(K, L), L - min(K, L)) for s, K, L in key}
            ranges = [range(a + 1) for _, a in paired]
            for bs in product(*ranges):
                factor = 1.0
                grad = np.zeros(nb) if track_grad else None
                parts = []
                for (s, a), b in zip(paired, bs):
                    parts.append((s, math.comb(a, b), a - b))
                for s, cb, p in parts:
                    factor *= cb * xi[s] ** p
                if track_grad:
                    for s, cb, p in parts:
                        if p:
                            g = cb * p * xi[s] ** (p - 1)
                            for s2, cb2, p2 in parts:
                                if s2 != s:
                                    g *= cb2 * xi[s2] ** p2
                            grad[s] += g
                mexp = {s: b for (s, _), b in zip(paired, bs)}
                rkey = tuple(
                    (s, base[s][0], base[s][1], mexp.get(s, 0))
                    for s in sorted(base)
                    if base[s][0] or base[s][1] or mexp.get(s, 0)
                )
                out.add(rkey, c * factor, c * grad if track_grad else None)
        return out


def _deg(key: tuple) -> int:
    return sum(K + L for _, K, L in key)


def random_real_plain(ball, rng, max_degree: int = 6, n_terms: int = 4, min_degree: int = 2) -> PlainPoly:
    """Random real polynomial: each drawn monomial comes with its conjugate.

    Degrees are even and lie in ``[min_degree, max_degree]``; coefficients are
    complex normal.
    """
    out = PlainPoly(ball)
    nb = len(ball)
    for _ in range(n_terms):
        deg = 2 * int(rng.integers(min_degree // 2, max_degree // 2 + 1))
        exps = {}
        for slot in range(deg):
            e = exps.setdefault(int(rng.integers(nb)), [0, 0])
            e[slot % 2] += 1
        key = _freeze(exps)
        ckey = tuple((s_, L, K) for s_, K, L in key)
        c = complex(rng.standard_normal(), rng.standard_normal())
        out.terms[key] += c
        out.terms[ckey] += c.conjugate()
    return out
