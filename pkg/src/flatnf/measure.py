"""Ball volumes, uniform sampling on weighted balls and non-resonance tests.

The weighted ball of radius ``rho`` is the ellipsoid
``sum <n>^{2s} |u_n|^2 < rho^2`` in ``C^N = R^{2N}``.  The actions
``xi_n = |u_n|^2`` of a uniform sample feed the non-resonance test, which
checks ``|Omega_v(omega)| max(n_minus, 1)^{2s} > gamma eps^2`` over a family
of exponent patterns ``v``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln
from statsmodels.stats.proportion import proportion_confint

from .lattice import LatticeBall, TorusMetric
from .resonance import PatternSet, unpaired_patterns
from .state import FourierState

__all__ = [
    "BallVolume",
    "ball_volume",
    "make_rng",
    "sample_ball",
    "sample_actions",
    "NonResonanceSpec",
    "NonResonanceResult",
    "nonresonance_test",
    "modulated_frequencies",
    "FractionReport",
    "nonresonant_fraction",
    "gamma_ladder",
    "monte_carlo_volume",
]


@dataclass(frozen=True)
class BallVolume:
    """Volume of the weighted ball in two normalisations.

    ``formula_value`` divides by ``(N+1)!``; ``standard_value`` divides by
    ``N!``, the volume of an ellipsoid in ``R^{2N}``.
    """

    N: int
    formula_value: float
    log_value: float
    standard_value: float
    log_standard: float

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "formula_value": self.formula_value,
            "log_value": self.log_value,
            "standard_value": self.standard_value,
            "log_standard": self.log_standard,
        }


def _site_brackets(ball) -> np.ndarray:
    if isinstance(ball, LatticeBall):
        return ball.brackets
    sites = np.atleast_2d(np.asarray(ball, dtype=float))
    return np.maximum(1.0, np.linalg.norm(sites, axis=1))


def ball_volume(ball, s: float, rho: float) -> BallVolume:
    """Lebesgue measure of ``{sum <n>^{2s} |u_n|^2 < rho^2}``.

    Parameters
    ----------
    ball : LatticeBall or array_like
        Either a lattice ball or an explicit list of sites.
    s : float
        Sobolev exponent.
    rho : float
        Radius, positive.

    Returns
    -------
    BallVolume
        Both normalisations, with logarithms for large ``N``.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    br = _site_brackets(ball)
    N = len(br)
    log_common = N * math.log(math.pi) + 2 * N * math.log(rho) - 2 * s * float(np.log(br).sum())
    log_formula = log_common - float(gammaln(N + 2))
    log_standard = log_common - float(gammaln(N + 1))
    return BallVolume(N, _safe_exp(log_formula), log_formula, _safe_exp(log_standard), log_standard)


def _safe_exp(x: float) -> float:
    return math.exp(x) if x < 700 else math.inf


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator seeded with a 64-bit integer."""
    return np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))


def monte_carlo_volume(N: int, count: int, seed: int, rho: float = 1.0, chunk: int = 200_000) -> tuple[float, float]:
    """Hit-or-miss estimate of the volume of the radius-``rho`` ball in ``R^{2N}``.

    Returns
    -------
    estimate, sigma : float
        Binomial standard error propagated to the volume.
    """
    rng = make_rng(seed)
    box = (2 * rho) ** (2 * N)
    hits = 0
    left = count
    while left > 0:
        n = min(chunk, left)
        x = rng.uniform(-rho, rho, size=(n, 2 * N))
        hits += int(((x * x).sum(axis=1) < rho * rho).sum())
        left -= n
    p = hits / count
    return box * p, box * math.sqrt(p * (1 - p) / count)


def _uniform_unit_ball(rng, count: int, dim: int) -> np.ndarray:
    g = rng.standard_normal((count, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = rng.uniform(size=(count, 1)) ** (1.0 / dim)
    return g * r


def sample_ball(ball: LatticeBall, s: float, rho: float, count: int, seed: int):
    """I.i.d. uniform states on the weighted ball of radius ``rho``.

    Parameters
    ----------
    ball : LatticeBall
    s, rho : float
    count : int
        Number of samples, at least one.
    seed : int
        64-bit seed for the Philox generator.

    Returns
    -------
    list of FourierState
    """
    amps = _sample_amplitudes(ball, s, rho, count, seed)
    return [FourierState(ball, a) for a in amps]


def _sample_amplitudes(ball: LatticeBall, s: float, rho: float, count: int, seed: int) -> np.ndarray:
    if count < 1:
        raise ValueError("count must be at least 1")
    N = len(ball)
    rng = make_rng(seed)
    x = _uniform_unit_ball(rng, count, 2 * N)
    # uniform radius can hit exactly 1 only with probability zero; guard anyway
    x[np.linalg.norm(x, axis=1) >= 1.0] *= 1.0 - 1e-15
    z = x[:, :N] + 1j * x[:, N:]
    return z * (rho * ball.brackets ** (-s))[None, :]


def sample_actions(ball: LatticeBall, s: float, rho: float, count: int, seed: int) -> np.ndarray:
    """Actions ``|u_n|^2`` of :func:`sample_ball` draws, shape ``(count, N)``."""
    return np.abs(_sample_amplitudes(ball, s, rho, count, seed)) ** 2


@dataclass(frozen=True)
class NonResonanceSpec:
    """Parameters of the small-divisor test.

    Parameters
    ----------
    gamma : float
        Threshold constant in ``(0, 1)``.
    epsilon : float
    s : float
    degree_cap : int
        Largest degree of the tested multi-indices.
    lambda_set : {"all", "lambda"}
        ``"lambda"`` keeps only patterns with ``n_minus < N(alpha + 1)``.
    alpha : int
        Scale used by ``lambda_set="lambda"``.
    """

    gamma: float
    epsilon: float
    s: float
    degree_cap: int = 6
    lambda_set: str = "all"
    alpha: int = 0

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.epsilon <= 0 or self.gamma * self.epsilon**2 <= 0:
            raise ValueError("gamma * epsilon^2 must be positive")
        if self.lambda_set not in ("all", "lambda"):
            raise ValueError("lambda_set must be 'all' or 'lambda'")

    @property
    def threshold(self) -> float:
        return self.gamma * self.epsilon**2

    def patterns(self, ball: LatticeBall) -> PatternSet:
        ps = unpaired_patterns(ball, self.degree_cap)
        if self.lambda_set == "lambda":
            n_cut = self.epsilon ** (-(self.alpha + 1) / (200 * self.s))
            ps = ps.subset(ps.n_minus < n_cut)
        return ps


@dataclass
class NonResonanceResult:
    passed: bool
    worst_pattern: np.ndarray | None
    margin: float

    def to_dict(self, ball: LatticeBall | None = None) -> dict:
        out = {"pass": self.passed, "margin": self.margin}
        if self.worst_pattern is not None:
            v = self.worst_pattern
            if ball is not None:
                out["worst"] = {",".join(str(int(c)) for c in ball.sites[i]): int(v[i]) for i in np.flatnonzero(v)}
            else:
                out["worst"] = v.tolist()
        return out


def _weights(ps: PatternSet, s: float) -> np.ndarray:
    return np.maximum(ps.n_minus, 1.0) ** (2 * s)


def _as_modulated(omega) -> np.ndarray:
    if hasattr(omega, "modulated"):
        return omega.modulated()
    return np.asarray(omega, dtype=float)


def nonresonance_test(xi, omega, spec: NonResonanceSpec, ball: LatticeBall, patterns: PatternSet | None = None) -> NonResonanceResult:
    """Check ``min_v |Omega_v(omega)| max(n_minus, 1)^{2s} > gamma eps^2``.

    Parameters
    ----------
    xi : array_like
        Actions at which ``omega`` was evaluated; kept for the record.
    omega : FrequencyVector or array_like
        Either a normal-form frequency vector or the modulated frequencies
        ``lambda_n^2 + xi_n + ...`` themselves.
    spec : NonResonanceSpec
    ball : LatticeBall
    patterns : PatternSet, optional
        Precomputed family; built from ``spec`` when omitted.

    Returns
    -------
    NonResonanceResult
        ``margin`` is the smallest weighted divisor minus the threshold.
    """
    ps = spec.patterns(ball) if patterns is None else patterns
    if len(ps) == 0:
        return NonResonanceResult(True, None, math.inf)
    w = _as_modulated(omega)
    vals = np.abs(ps.V @ w) * _weights(ps, spec.s)
    i = int(np.argmin(vals))
    return NonResonanceResult(bool(vals[i] > spec.threshold), ps.V[i].copy(), float(vals[i] - spec.threshold))


def modulated_frequencies(metric: TorusMetric, ball: LatticeBall, xi: np.ndarray) -> np.ndarray:
    """``lambda_n^2 + xi_n`` row by row; ``xi`` may be a batch."""
    return ball.frequencies(metric)[None, :] + np.atleast_2d(xi)


@dataclass
class FractionReport:
    """Monte Carlo pass fraction with a 95% Wilson interval."""

    fraction: float
    wilson_interval: tuple[float, float]
    predicted_bound: float
    count: int
    passes: int
    seed: int
    gamma: float
    vacuous: bool
    extra: dict = field(default_factory=dict)

    @property
    def half_width(self) -> float:
        lo, hi = self.wilson_interval
        return 0.5 * (hi - lo)

    def to_dict(self) -> dict:
        return {
            "fraction": self.fraction,
            "wilson_lo": self.wilson_interval[0],
            "wilson_hi": self.wilson_interval[1],
            "predicted_bound": self.predicted_bound,
            "bound_vacuous": self.vacuous,
            "count": self.count,
            "passes": self.passes,
            "gamma": self.gamma,
            "seed": self.seed,
            **self.extra,
        }


def _pass_matrix(actions: np.ndarray, metric, ball, spec: NonResonanceSpec, ps: PatternSet, frequency_fn=None, chunk: int = 4096):
    lam2 = ball.frequencies(metric)
    w = _weights(ps, spec.s)
    Vt = ps.V.T.astype(float)
    mins = np.empty(actions.shape[0])
    for start in range(0, actions.shape[0], chunk):
        xi = actions[start : start + chunk]
        om = frequency_fn(xi) if frequency_fn is not None else lam2[None, :] + xi
        mins[start : start + chunk] = (np.abs(om @ Vt) * w[None, :]).min(axis=1) if len(ps) else np.inf
    return mins


def nonresonant_fraction(
    metric: TorusMetric,
    ball: LatticeBall,
    s: float,
    epsilon: float,
    spec: NonResonanceSpec,
    count: int,
    seed: int,
    frequency_fn=None,
) -> FractionReport:
    """Fraction of uniform draws on the radius-``epsilon`` ball whose actions pass the test.

    Parameters
    ----------
    frequency_fn : callable, optional
        Maps a batch of actions to modulated frequencies; defaults to
        ``lambda_n^2 + xi_n``.
    """
    actions = sample_actions(ball, s, epsilon, count, seed)
    ps = spec.patterns(ball)
    mins = _pass_matrix(actions, metric, ball, spec, ps, frequency_fn)
    passes = int((mins > spec.threshold).sum())
    return _report(passes, count, seed, spec, extra={"patterns": len(ps)})


def _report(passes: int, count: int, seed: int, spec: NonResonanceSpec, extra=None) -> FractionReport:
    lo, hi = proportion_confint(passes, count, alpha=0.05, method="wilson")
    bound = 1.0 - spec.gamma * spec.epsilon ** (-1e-4)
    return FractionReport(passes / count, (float(lo), float(hi)), bound, count, passes, int(seed), spec.gamma, bound <= 0, extra or {})


def gamma_ladder(metric, ball, s: float, epsilon: float, spec: NonResonanceSpec, gammas, count: int, seed: int, frequency_fn=None) -> list[FractionReport]:
    """Pass fractions for several ``gamma`` on one fixed set of samples."""
    actions = sample_actions(ball, s, epsilon, count, seed)
    ps = spec.patterns(ball)
    mins = _pass_matrix(actions, metric, ball, spec, ps, frequency_fn)
    out = []
    for g in gammas:
        sp = NonResonanceSpec(g, spec.epsilon, spec.s, spec.degree_cap, spec.lambda_set, spec.alpha)
        out.append(_report(int((mins > sp.threshold).sum()), count, seed, sp, extra={"patterns": len(ps)}))
    return out
