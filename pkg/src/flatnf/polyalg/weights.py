"""Parameter schedule, coefficient weights, sampled norms and scale projections."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .multiindex import key_degree, key_is_integrable, key_n_minus
from .poly import RecenteredPoly, gradient_eval

__all__ = [
    "ParamSchedule",
    "WeightSystem",
    "NormRecord",
    "weight_of",
    "norms",
    "project_scale",
    "in_lambda",
    "hs_norm",
    "annulus_gap",
    "in_annulus",
    "annulus_samples",
    "vector_field_diagnostic",
]


@dataclass(frozen=True)
class ParamSchedule:
    """Scale-dependent parameters of the iteration.

    Parameters
    ----------
    epsilon : float
        Size of the data, in ``(0, 1)``.
    s : float
        Sobolev exponent.
    r : int
        Order of the stability time ``epsilon^{-r}``.
    c : float
        Constant in ``eps_alpha = 10 eps - c alpha r eps^{3/2}``.
    rbar_cap : int
        Degree cap used in place of the astronomically large nominal one.
    """

    epsilon: float
    s: float
    r: int = 1
    c: float = 40.0
    rbar_cap: int = 8

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.s <= 0:
            raise ValueError("s must be positive")
        if self.r < 1:
            raise ValueError("r must be a positive integer")

    @property
    def eta(self) -> float:
        return self.epsilon ** (1 - 1 / 100)

    @property
    def beta(self) -> int:
        return 100 * self.r

    @property
    def tau(self) -> float:
        return self.s / (1e3 * self.r)

    @property
    def gamma(self) -> float:
        return self.epsilon ** (1 / 30)

    def log_N(self, alpha: float) -> float:
        return -alpha / (200 * self.s) * math.log(self.epsilon)

    def N(self, alpha: float) -> float:
        return math.exp(self.log_N(alpha))

    def gamma_of(self, alpha: float) -> float:
        return 4.0**alpha * self.gamma

    def eps_alpha(self, alpha: float) -> float:
        return 10 * self.epsilon - self.c * alpha * self.r * self.epsilon**1.5

    def eta_tau_holds(self, alpha: float) -> bool:
        """``(eps / eta) N(alpha)^{5 tau} <= eps^{1/200}``."""
        lhs = math.log(self.epsilon / self.eta) + 5 * self.tau * self.log_N(alpha)
        return lhs <= math.log(self.epsilon) / 200 + 1e-12

    def par_holds(self, alpha: float) -> bool:
        """``gamma(alpha)^{-1} (eta / eps)^2 (N(alpha+1)/N(alpha))^{2s} <= eps^{-1/15}``."""
        lhs = (
            -math.log(self.gamma_of(alpha))
            + 2 * math.log(self.eta / self.epsilon)
            + 2 * self.s * (self.log_N(alpha + 1) - self.log_N(alpha))
        )
        return lhs <= -math.log(self.epsilon) / 15 + 1e-12

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(eta=self.eta, beta=self.beta, tau=self.tau, gamma=self.gamma)
        return d


@dataclass(frozen=True)
class WeightSystem:
    """Weights ``D(alpha)`` and ``C_n(alpha)`` built on a schedule.

    ``C_n`` uses ``max(|n|, 1)`` in place of ``|n|`` so the zero mode gets a
    finite, positive weight.
    """

    schedule: ParamSchedule

    def log_D(self, alpha: float) -> float:
        sc = self.schedule
        return -(2 + 1 / 5) * math.log(sc.eta) + 2 * sc.s * sc.log_N(alpha)

    def log_C(self, norm: float, alpha: float) -> float:
        sc = self.schedule
        logN = sc.log_N(alpha)
        return -math.log(sc.eta) + sc.s * min(math.log(max(norm, 1.0)), logN) + sc.tau * logN

    def D(self, alpha: float) -> float:
        return math.exp(self.log_D(alpha))

    def C(self, norm: float, alpha: float) -> float:
        return math.exp(self.log_C(norm, alpha))

    def log_weight(self, key: tuple, norms_arr: np.ndarray, alpha: float, order: int) -> float:
        sc = self.schedule
        if order == 0:
            pre = -6 * sc.s * sc.log_N(alpha) + 6 * math.log(sc.eta)
        elif order == 1:
            pre = -4 * sc.s * sc.log_N(alpha) + 4 * math.log(sc.eta)
        else:
            raise ValueError("order must be 0 or 1")
        logD = self.log_D(alpha)
        total = pre
        for s, k, l, m in key:
            total += m * logD + (k + l) * self.log_C(norms_arr[s], alpha)
        return total


def weight_of(ws: WeightSystem, key, ball, alpha: int, order: int = 0) -> float:
    """Weight ``w^0`` or ``w^1`` of a multi-index, summed in log-space."""
    if not 0 <= alpha <= ws.schedule.beta:
        raise ValueError("alpha out of range")
    key = getattr(key, "key", key)
    return math.exp(ws.log_weight(key, ball.norms, alpha, order))


@dataclass
class NormRecord:
    """Sampled norms; ``None`` marks a norm that could not be evaluated."""

    Ysup: float
    Ylip: float | None
    Zsup: float
    Zlip: float | None
    log_Ysup: float
    argmax: tuple | None = None

    def to_dict(self) -> dict:
        return {
            "Ysup": self.Ysup,
            "Ylip": self.Ylip,
            "Zsup": self.Zsup,
            "Zlip": self.Zlip,
            "log_Ysup": self.log_Ysup,
            "sampled": True,
        }


def norms(p, ws: WeightSystem, alpha: int, xi_samples=None) -> NormRecord:
    """Weighted and plain sup norms, maximised over the supplied samples.

    Parameters
    ----------
    p : RecenteredPoly or callable
        Either a fixed polynomial or a map ``xi -> RecenteredPoly``.
    ws : WeightSystem
    alpha : int
    xi_samples : sequence of arrays, optional
        Required when ``p`` is callable.
    """
    polys = [p] if isinstance(p, RecenteredPoly) else [p(x) for x in xi_samples]
    log_ysup = -math.inf
    arg = None
    ylip = zlip = 0.0
    zsup = 0.0
    have_grad = all(q.track_grad for q in polys)
    for q in polys:
        nrm = q.ball.norms
        for key, c in q.terms.items():
            a = abs(c)
            zsup = max(zsup, a)
            if a > 0:
                lv = math.log(a) - ws.log_weight(key, nrm, alpha, 0)
                if lv > log_ysup:
                    log_ysup, arg = lv, key
            if have_grad:
                ga = float(np.abs(q.grads[key]).max(initial=0.0))
                zlip = max(zlip, ga)
                if ga > 0:
                    ylip = max(ylip, ga * math.exp(-ws.log_weight(key, nrm, alpha, 1)))
    ysup = math.exp(log_ysup) if log_ysup > -math.inf else 0.0
    return NormRecord(ysup, ylip if have_grad else None, zsup, zlip if have_grad else None, log_ysup, arg)


def in_lambda(key: tuple, norms_arr: np.ndarray, schedule: ParamSchedule, alpha: float) -> bool:
    """``n_minus < N(alpha)``; integrable keys never belong."""
    return key_n_minus(key, norms_arr) < schedule.N(alpha)


def project_scale(p: RecenteredPoly, ws, alpha: int, mode: str, q: int | None = None) -> RecenteredPoly:
    """Projection on ``Lambda_alpha``, its complement, or a degree range.

    Parameters
    ----------
    mode : {"inside_Lambda", "outside_Lambda", "degree_eq", "degree_le"}
    q : int
        Degree for the degree modes.
    """
    sched = getattr(ws, "schedule", ws)
    nrm = p.ball.norms
    if mode == "inside_Lambda":
        return p.filter(lambda k: in_lambda(k, nrm, sched, alpha))
    if mode == "outside_Lambda":
        return p.filter(lambda k: not in_lambda(k, nrm, sched, alpha))
    if mode == "degree_eq":
        return p.filter(lambda k: key_degree(k) == q)
    if mode == "degree_le":
        return p.filter(lambda k: key_degree(k) <= q)
    raise ValueError(f"unknown projection mode {mode!r}")


def hs_norm(u, ball, s: float) -> float:
    """``(sum <n>^{2s} |u_n|^2)^{1/2}``."""
    u = np.asarray(getattr(u, "amps", u))
    return float(np.sqrt((ball.brackets ** (2 * s) * np.abs(u) ** 2).sum()))


def annulus_gap(u, xi, ball, s: float) -> float:
    """``sum <n>^{2s} | |u_n|^2 - xi_n |``."""
    u = np.asarray(getattr(u, "amps", u))
    return float((ball.brackets ** (2 * s) * np.abs(np.abs(u) ** 2 - xi)).sum())


def annulus_radius(schedule: ParamSchedule, alpha: float) -> float:
    return schedule.epsilon ** (2 + 1 / 5) * schedule.N(alpha) ** (-2 * schedule.s)


def in_annulus(u, xi, ball, schedule: ParamSchedule, alpha: float) -> bool:
    ok_gap = annulus_gap(u, xi, ball, schedule.s) <= annulus_radius(schedule, alpha)
    return ok_gap and hs_norm(u, ball, schedule.s) <= 20 * schedule.epsilon


def annulus_samples(ball, xi, schedule: ParamSchedule, alpha: float, count: int, rng, fill: float = 0.9):
    """Random states whose actions sit within ``fill`` times the annulus radius of ``xi``."""
    xi = np.asarray(xi, dtype=float)
    w = ball.brackets ** (2 * schedule.s)
    radius = fill * annulus_radius(schedule, alpha)
    out = []
    while len(out) < count:
        dirs = rng.dirichlet(np.ones(len(ball))) * rng.uniform(0, 1)
        signs = rng.choice([-1.0, 1.0], size=len(ball))
        delta = signs * dirs * radius / w
        act = xi + delta
        if np.any(act < 0):
            act = xi + np.abs(delta)
        phases = rng.uniform(0, 2 * np.pi, size=len(ball))
        out.append(np.sqrt(act) * np.exp(1j * phases))
    return out


@dataclass
class VectorFieldReport:
    max_ratio: float | None
    accepted: int
    rejected: int


def vector_field_diagnostic(p: RecenteredPoly, ws: WeightSystem, alpha: int, u_samples) -> VectorFieldReport:
    """Compare ``||grad p||_{h^s}`` with ``Ysup N^{-4s} eps^{4-1/4} ||u||_{h^s}`` on annulus samples."""
    sc = ws.schedule
    ball = p.ball
    accepted = [u for u in u_samples if in_annulus(u, p.xi, ball, sc, alpha)]
    rejected = len(u_samples) - len(accepted)
    if not accepted:
        return VectorFieldReport(None, 0, rejected)
    ysup = norms(p, ws, alpha).Ysup
    if ysup == 0.0:
        return VectorFieldReport(0.0, len(accepted), rejected)
    scale = ysup * sc.N(alpha) ** (-4 * sc.s) * sc.epsilon ** (4 - 1 / 4)
    ratios = [hs_norm(gradient_eval(p, u), ball, sc.s) / (scale * hs_norm(u, ball, sc.s)) for u in accepted]
    return VectorFieldReport(float(max(ratios)), len(accepted), rejected)
