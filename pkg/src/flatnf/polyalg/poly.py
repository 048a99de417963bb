"""Re-centered polynomials and their Poisson calculus.

A :class:`RecenteredPoly` stores, at a fixed numeric modulation vector ``xi``,
coefficients of monomials ``u^k conj(u)^l y^m`` with ``y = |u|^2 - xi``.
Each coefficient may carry its gradient with respect to ``xi`` so that
derivatives can be pushed forward through centering, brackets and divisions.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from itertools import product

import numpy as np

from .multiindex import key_conj, key_degree, key_is_integrable, key_n_minus

__all__ = [
    "Coefficient",
    "RecenteredPoly",
    "center",
    "evaluate",
    "gradient_eval",
    "poisson_bracket",
    "y_monomial",
]


@dataclass
class Coefficient:
    """A coefficient value and, optionally, its gradient in ``xi``."""

    value: complex
    grad: np.ndarray | None = None


def _amps(u):
    return np.asarray(getattr(u, "amps", u), dtype=complex)


class RecenteredPoly:
    """Sparse map from multi-index keys to coefficients at a fixed ``xi``.

    Parameters
    ----------
    ball : LatticeBall
    xi : array_like
        Modulation parameters over the ball sites.
    terms : dict, optional
        Key to complex value.
    grads : dict, optional
        Key to gradient vector; implies ``track_grad``.
    track_grad : bool
        Carry gradients with respect to ``xi``.
    """

    def __init__(self, ball, xi, terms=None, grads=None, track_grad=False):
        self.ball = ball
        self.xi = np.asarray(xi, dtype=float)
        if self.xi.shape != (len(ball),):
            raise ValueError("xi must have one entry per ball site")
        self.track_grad = bool(track_grad or grads is not None)
        self.terms = defaultdict(complex)
        self.grads = {} if self.track_grad else None
        if terms:
            for key, c in terms.items():
                g = grads.get(key) if grads is not None else None
                self.add(key, c, g)

    # bookkeeping ------------------------------------------------------
    def add(self, key: tuple, value: complex, grad=None) -> None:
        self.terms[key] += value
        if self.track_grad:
            if key not in self.grads:
                self.grads[key] = np.zeros(len(self.ball), dtype=complex)
            if grad is not None:
                self.grads[key] += grad

    def empty_like(self, track_grad=None) -> "RecenteredPoly":
        tg = self.track_grad if track_grad is None else track_grad
        return RecenteredPoly(self.ball, self.xi, track_grad=tg)

    def coefficient(self, key: tuple) -> Coefficient:
        g = None
        if self.track_grad:
            g = self.grads.get(key, np.zeros(len(self.ball), dtype=complex))
        return Coefficient(complex(self.terms.get(key, 0.0)), g)

    def grad_of(self, key: tuple) -> np.ndarray:
        if not self.track_grad:
            raise ValueError("polynomial does not carry gradients")
        return self.grads.get(key, np.zeros(len(self.ball), dtype=complex))

    def keys(self):
        return list(self.terms.keys())

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms.items())

    def copy(self) -> "RecenteredPoly":
        out = self.empty_like()
        for key, c in self.terms.items():
            out.add(key, c, self.grads[key] if self.track_grad else None)
        return out

    def _check_compatible(self, other: "RecenteredPoly") -> None:
        if other.ball != self.ball:
            raise ValueError("polynomials live on different balls")
        if not np.array_equal(other.xi, self.xi):
            raise ValueError("polynomials are centered at different xi")

    def __add__(self, other: "RecenteredPoly") -> "RecenteredPoly":
        self._check_compatible(other)
        out = self.empty_like(self.track_grad or other.track_grad)
        for src in (self, other):
            for key, c in src.terms.items():
                out.add(key, c, src.grads[key] if src.track_grad else None)
        return out

    def __neg__(self) -> "RecenteredPoly":
        return self.scale(-1.0)

    def __sub__(self, other: "RecenteredPoly") -> "RecenteredPoly":
        return self + (-other)

    def scale(self, factor: complex, factor_grad=None) -> "RecenteredPoly":
        """Multiply by a scalar, optionally itself carrying a ``xi``-gradient."""
        tg = self.track_grad or factor_grad is not None
        out = self.empty_like(tg)
        for key, c in self.terms.items():
            g = None
            if tg:
                g = np.zeros(len(self.ball), dtype=complex)
                if self.track_grad:
                    g = g + factor * self.grads[key]
                if factor_grad is not None:
                    g = g + c * np.asarray(factor_grad)
            out.add(key, factor * c, g)
        return out

    def filter(self, predicate) -> "RecenteredPoly":
        """Keep terms whose key satisfies ``predicate(key)``."""
        out = self.empty_like()
        for key, c in self.terms.items():
            if predicate(key):
                out.add(key, c, self.grads[key] if self.track_grad else None)
        return out

    def pruned(self, tol: float = 0.0) -> "RecenteredPoly":
        """Drop terms whose value and gradient are both at most ``tol`` in size."""

        def keep(key):
            if abs(self.terms[key]) > tol:
                return True
            return self.track_grad and np.abs(self.grads[key]).max(initial=0.0) > tol

        return self.filter(keep)

    def with_grad(self, on: bool = True) -> "RecenteredPoly":
        out = self.empty_like(on)
        for key, c in self.terms.items():
            g = self.grads[key] if (self.track_grad and on) else None
            out.add(key, c, g)
        return out

    # structure --------------------------------------------------------
    def max_degree(self) -> int:
        return max((key_degree(k) for k in self.terms), default=0)

    def degree_part(self, lo: int, hi: int | None = None) -> "RecenteredPoly":
        hi = lo if hi is None else hi
        return self.filter(lambda k: lo <= key_degree(k) <= hi)

    def integrable_part(self) -> "RecenteredPoly":
        return self.filter(key_is_integrable)

    def is_integrable(self) -> bool:
        return all(key_is_integrable(k) for k, c in self.terms.items() if c != 0)

    def is_real(self, tol: float = 1e-12) -> bool:
        """Coefficient of ``(k, l, m)`` is the conjugate of that of ``(l, k, m)``."""
        for key, c in self.terms.items():
            other = self.terms.get(key_conj(key), 0.0)
            if abs(other - np.conj(c)) > tol * max(1.0, abs(c)):
                return False
        return True

    def max_abs(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def n_minus(self, key: tuple) -> float:
        return key_n_minus(key, self.ball.norms)

    # conversions ------------------------------------------------------
    def expand(self):
        """The same function written as a :class:`PlainPoly` in ``u, conj(u)``."""
        from .plain import PlainPoly

        out = PlainPoly(self.ball)
        xi = self.xi
        for key, c in self.terms.items():
            ranges = [range(m + 1) for _, _, _, m in key]
            for js in product(*ranges):
                factor = c
                exps = []
                for (s, k, l, m), j in zip(key, js):
                    factor *= math.comb(m, j) * (-xi[s]) ** (m - j)
                    if k + j or l + j:
                        exps.append((s, k + j, l + j))
                out.terms[tuple(exps)] += factor
        return out

    def to_json(self) -> list:
        S = self.ball.sites
        rows = []
        for key, c in sorted(self.terms.items()):
            row = {
                "k": {_site(S, s): k for s, k, _, _ in key if k},
                "l": {_site(S, s): l for s, _, l, _ in key if l},
                "m": {_site(S, s): m for s, _, _, m in key if m},
                "re": float(np.real(c)),
                "im": float(np.imag(c)),
            }
            if self.track_grad:
                g = self.grads[key]
                row["grad"] = {"re": np.real(g).tolist(), "im": np.imag(g).tolist()}
            rows.append(row)
        return rows

    @classmethod
    def from_json(cls, rows, ball, xi) -> "RecenteredPoly":
        track = any("grad" in r for r in rows)
        out = cls(ball, xi, track_grad=track)
        for r in rows:
            k = {ball.index(_parse(s)): v for s, v in r.get("k", {}).items()}
            l = {ball.index(_parse(s)): v for s, v in r.get("l", {}).items()}
            m = {ball.index(_parse(s)): v for s, v in r.get("m", {}).items()}
            from .multiindex import make_key

            g = None
            if "grad" in r:
                g = np.array(r["grad"]["re"]) + 1j * np.array(r["grad"]["im"])
            out.add(make_key(k, l, m), complex(r["re"], r["im"]), g)
        return out

    # evaluation -------------------------------------------------------
    def compiled(self):
        """Dense exponent arrays ``(K, L, M, coeffs)`` for vectorised evaluation."""
        keys = list(self.terms.keys())
        nb = len(self.ball)
        K = np.zeros((len(keys), nb), dtype=np.int64)
        L = np.zeros_like(K)
        Mx = np.zeros_like(K)
        for i, key in enumerate(keys):
            for s, k, l, m in key:
                K[i, s], L[i, s], Mx[i, s] = k, l, m
        coeffs = np.array([self.terms[k] for k in keys], dtype=complex)
        return CompiledPoly(K, L, Mx, coeffs, self.xi.copy())


def _site(S, s) -> str:
    return ",".join(str(int(x)) for x in S[s])


def _parse(text: str) -> tuple:
    return tuple(int(x) for x in text.split(","))


class CompiledPoly:
    """Array form of a re-centered polynomial for repeated evaluation."""

    def __init__(self, K, L, Mx, coeffs, xi):
        self.K, self.L, self.Mx, self.coeffs, self.xi = K, L, Mx, coeffs, xi

    def _factors(self, u):
        y = np.abs(u) ** 2 - self.xi
        A = u[None, :] ** self.K
        B = np.conj(u)[None, :] ** self.L
        C = y[None, :] ** self.Mx
        return y, A, B, C

    def value(self, u) -> complex:
        u = _amps(u)
        if not self.coeffs.size:
            return 0.0 + 0.0j
        _, A, B, C = self._factors(u)
        return complex((self.coeffs * (A * B * C).prod(axis=1)).sum())

    def gradient(self, u) -> np.ndarray:
        """``2 d/d conj(u_n)`` at ``u`` by product assembly, without divisions."""
        u = _amps(u)
        nb = u.shape[0]
        if not self.coeffs.size:
            return np.zeros(nb, dtype=complex)
        y, A, B, C = self._factors(u)
        E = A * B * C
        # product over all sites except n, via prefix and suffix products
        ones = np.ones((E.shape[0], 1), dtype=complex)
        prefix = np.cumprod(np.hstack([ones, E[:, :-1]]), axis=1)
        suffix = np.cumprod(np.hstack([ones, E[:, :0:-1]]), axis=1)[:, ::-1]
        excl = prefix * suffix
        ub = np.conj(u)[None, :]
        Lm1 = np.maximum(self.L - 1, 0)
        Mm1 = np.maximum(self.Mx - 1, 0)
        d_conj = self.L * ub**Lm1 * C + self.Mx * B * u[None, :] * y[None, :] ** Mm1
        local = A * d_conj
        return 2.0 * (self.coeffs[:, None] * excl * local).sum(axis=0)


def evaluate(p: RecenteredPoly, u) -> complex:
    """``sum c_key u^k conj(u)^l (|u|^2 - xi)^m``."""
    _check_state(p, u)
    return p.compiled().value(u)


def gradient_eval(p: RecenteredPoly, u) -> np.ndarray:
    """Vector field ``(grad p)_n = 2 d p / d conj(u_n)``."""
    _check_state(p, u)
    return p.compiled().gradient(u)


def _check_state(p, u):
    ball = getattr(u, "ball", None)
    if ball is not None and ball != p.ball:
        raise ValueError("state and polynomial live on different balls")
    if _amps(u).shape != (len(p.ball),):
        raise ValueError("amplitude vector does not match the polynomial's ball")


def y_monomial(ball, xi, site: int, coeff: complex = 1.0, track_grad=False) -> RecenteredPoly:
    """The polynomial ``coeff * y_site``."""
    p = RecenteredPoly(ball, xi, track_grad=track_grad)
    p.add(((site, 0, 0, 1),), coeff)
    return p


# centering ---------------------------------------------------------------


def center(p, xi, track_grad: bool = False) -> RecenteredPoly:
    """Re-center a homogeneous polynomial (or a list of them) at ``xi``.

    Every paired factor ``|u_n|^{2a}`` becomes ``(y_n + xi_n)^a`` and is
    expanded binomially, so the result satisfies the non-pairing rule and
    evaluates to ``p(u)`` when ``y = |u|^2 - xi``.

    Parameters
    ----------
    p : HomogeneousPoly, PlainPoly or sequence of HomogeneousPoly
    xi : array_like
    track_grad : bool
        Attach gradients of the coefficients with respect to ``xi``.
    """
    from .plain import PlainPoly

    if isinstance(p, PlainPoly):
        return p.recenter(xi, track_grad)
    parts = p if isinstance(p, (list, tuple)) else [p]
    if not parts:
        raise ValueError("nothing to center")
    total = PlainPoly(parts[0].ball)
    for hp in parts:
        total = total + PlainPoly.from_homogeneous(hp)
    return total.recenter(xi, track_grad)


# Poisson bracket -----------------------------------------------------------


class _BinomCache:
    """Expansions ``(y + xi)^a = sum_b C(a, b) xi^(a - b) y^b`` with xi-derivatives."""

    def __init__(self, xi):
        self.xi = xi
        self.cache = {}

    def get(self, s: int, a: int):
        key = (s, a)
        if key not in self.cache:
            x = self.xi[s]
            vals = [math.comb(a, b) * x ** (a - b) for b in range(a + 1)]
            ders = [math.comb(a, b) * (a - b) * x ** (a - b - 1) if a > b else 0.0 for b in range(a + 1)]
            self.cache[key] = (vals, ders)
        return self.cache[key]


def _emit(out, exps: dict, c: complex, g, binom: _BinomCache, nb: int, mass: dict):
    """Add ``c * prod u^K conj(u)^L y^M`` to ``out`` after resolving pairings.

    ``mass`` accumulates ``(sum |c|, sum |g|)`` per key for cancellation checks.
    """
    paired = [(s, min(K, L)) for s, (K, L, _) in exps.items() if K and L]
    if not paired:
        key = tuple((s, K, L, M) for s, (K, L, M) in sorted(exps.items()) if K or L or M)
        out.add(key, c, g)
        _tally(mass, key, c, g)
        return
    tables = [binom.get(s, a) for s, a in paired]
    for bs in product(*[range(a + 1) for _, a in paired]):
        factor = 1.0
        for (vals, _), b in zip(tables, bs):
            factor *= vals[b]
        grad = None
        if out.track_grad:
            grad = np.zeros(nb, dtype=complex) if g is None else g * factor
            for j, ((s, _), (vals, ders), b) in enumerate(zip(paired, tables, bs)):
                if ders[b] == 0.0:
                    continue
                rest = ders[b]
                for i, ((_, _), (v2, _), b2) in enumerate(zip(paired, tables, bs)):
                    if i != j:
                        rest *= v2[b2]
                grad[s] += c * rest
        shift = {s: (a, b) for (s, a), b in zip(paired, bs)}
        key = []
        for s, (K, L, M) in sorted(exps.items()):
            if s in shift:
                a, b = shift[s]
                K, L, M = K - a, L - a, M + b
            if K or L or M:
                key.append((s, K, L, M))
        key = tuple(key)
        out.add(key, c * factor, grad)
        _tally(mass, key, c * factor, grad)


def _tally(mass: dict, key, c, g):
    a, b = mass.get(key, (0.0, 0.0))
    mass[key] = (a + abs(c), b + (float(np.abs(g).max(initial=0.0)) if g is not None else 0.0))


# coefficients below this multiple of the summed contribution sizes are
# treated as exact cancellations
_CANCEL = 64 * np.finfo(float).eps


def _drop_cancelled(out, mass: dict):
    for key, (a, b) in mass.items():
        c = out.terms.get(key)
        if c is None or abs(c) > _CANCEL * a:
            continue
        if out.track_grad and float(np.abs(out.grads[key]).max(initial=0.0)) > _CANCEL * b:
            continue
        del out.terms[key]
        if out.track_grad:
            del out.grads[key]


def poisson_bracket(p: RecenteredPoly, q: RecenteredPoly, degree_cap: int | None = None, overflow=None):
    """``{p, q} = 2i sum_n (d_conj(u_n) p d_u_n q - d_u_n p d_conj(u_n) q)``.

    For each pair of monomials and each shared site ``n`` two terms arise:
    a pair-kill term with factor ``2i (k'_n l_n - k_n l'_n)`` that removes one
    ``u_n conj(u_n)``, and an action-kill term with factor
    ``2i (m_n (k'_n - l'_n) + m'_n (l_n - k_n))`` that lowers ``m_n`` by one.
    Pairings created by the product are resolved binomially in ``xi``.

    Parameters
    ----------
    p, q : RecenteredPoly
        Same ball and same ``xi``.
    degree_cap : int, optional
        Terms of degree above the cap are routed to ``overflow`` (or dropped
        if ``overflow`` is None) instead of the result.
    overflow : RecenteredPoly, optional
        Accumulator for the above-cap terms.
    """
    p._check_compatible(q)
    out = p.empty_like(p.track_grad or q.track_grad)
    nb = len(p.ball)
    binom = _BinomCache(p.xi)
    tg = out.track_grad
    zero = np.zeros(nb, dtype=complex)
    mass = {}
    qitems = []
    for kb, cb in q.terms.items():
        qitems.append((dict((s, (k, l, m)) for s, k, l, m in kb), cb, q.grads[kb] if q.track_grad else zero))
    for ka, ca in p.terms.items():
        da = {s: (k, l, m) for s, k, l, m in ka}
        ga = p.grads[ka] if p.track_grad else zero
        for db, cb, gb in qitems:
            shared = [s for s in db if s in da]
            if not shared:
                continue
            cc = ca * cb
            gc = ga * cb + ca * gb if tg else None
            for s in shared:
                k, l, m = da[s]
                k2, l2, m2 = db[s]
                f_pair = k2 * l - k * l2
                f_act = m * (k2 - l2) + m2 * (l - k)
                if not (f_pair or f_act):
                    continue
                merged = {t: (e[0], e[1], e[2]) for t, e in da.items()}
                for t, (a, b, c) in db.items():
                    e = merged.get(t, (0, 0, 0))
                    merged[t] = (e[0] + a, e[1] + b, e[2] + c)
                K, L, M = merged[s]
                if f_pair:
                    exps = dict(merged)
                    exps[s] = (K - 1, L - 1, M)
                    f = 2j * f_pair
                    _emit(out, exps, f * cc, f * gc if tg else None, binom, nb, mass)
                if f_act:
                    exps = dict(merged)
                    exps[s] = (K, L, M - 1)
                    f = 2j * f_act
                    _emit(out, exps, f * cc, f * gc if tg else None, binom, nb, mass)
    _drop_cancelled(out, mass)
    if degree_cap is not None:
        high = out.filter(lambda key: key_degree(key) > degree_cap)
        if overflow is not None:
            for key, c in high.terms.items():
                overflow.add(key, c, high.grads[key] if high.track_grad else None)
        out = out.filter(lambda key: key_degree(key) <= degree_cap)
    return out
