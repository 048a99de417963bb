"""Quasi-resonant Birkhoff normal form and the modulated two-scale iteration.

Conventions
-----------
* Brackets: ``{H, K} = 2i sum_n (d_conj(u_n) H d_u_n K - d_u_n H d_conj(u_n) K)``
  and ``ad_chi H = {H, chi}``, so ``H o Phi^1_chi = sum_l ad_chi^l H / l!``
  where ``Phi^t_chi`` solves ``i du/dt = grad chi(u)``.
* :class:`FrequencyVector` stores the coefficients of ``Z2 = sum_n omega_n y_n``.
  Small-divisor thresholds are stated for the modulated frequencies
  ``2 omega``, which reduce to ``lambda_n^2 - f'(0) xi_n`` for the truncated
  cubic Hamiltonian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp

from .lattice import LatticeBall, TorusMetric
from .polyalg.multiindex import key_degree, key_is_integrable, key_n_minus
from .polyalg.plain import PlainPoly
from .polyalg.poly import RecenteredPoly, gradient_eval, poisson_bracket
from .polyalg.weights import ParamSchedule, WeightSystem, in_lambda, norms
from .resonance import HomogeneousPoly, PatternSet, unpaired_patterns

__all__ = [
    "AmbiguousThresholdError",
    "NormBlowupError",
    "FlowFailure",
    "BirkhoffResult",
    "FrequencyVector",
    "CutoffRecord",
    "NormalFormState",
    "RemainderEntry",
    "bump",
    "bump_derivative",
    "birkhoff_truncated",
    "cutoff_eval",
    "solve_cohomological",
    "initial_state",
    "lie_step",
    "scale_advance",
    "poly_flow",
    "flow_differential_check",
    "z2_poly",
    "key_omega",
    "generator",
    "hamiltonian_consistency",
    "draw_nonresonant_xi",
]


class AmbiguousThresholdError(ValueError):
    """A resonance value sits on the kappa threshold within rounding."""


class NormBlowupError(RuntimeError):
    """A sampled norm left its budget during the iteration."""


class FlowFailure(RuntimeError):
    """The polynomial flow integrator gave up; ``partial`` holds the last state."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


# quasi-resonant Birkhoff normal form ------------------------------------------


@dataclass
class BirkhoffResult:
    """Generators and normal-form terms by degree.

    ``chi[d]`` and ``Q[d]`` are :class:`PlainPoly`; ``Q_homogeneous[d]`` the same
    terms spread symmetrically over multi-vectors.  ``remainder`` records what
    was cut at the degree cap.
    """

    chi: dict
    Q: dict
    Q_homogeneous: dict
    remainder: dict
    kappa: float


def _plain_omega(key: tuple, lam2: np.ndarray) -> float:
    pos = sorted(lam2[s] for s, K, L in key for _ in range(K))
    neg = sorted(lam2[s] for s, K, L in key for _ in range(L))
    return float(sum(pos) - sum(neg))


def birkhoff_truncated(polys, metric: TorusMetric, kappa: float, degree_cap: int) -> BirkhoffResult:
    """Remove non-resonant terms degree by degree.

    Parameters
    ----------
    polys : sequence of HomogeneousPoly
        Terms of degrees 4, 6, ... on one ball.
    metric : TorusMetric
    kappa : float
        Resonance threshold; ``math.inf`` keeps everything.
    degree_cap : int
        Highest degree kept in the transformed Hamiltonian.

    Notes
    -----
    With ``Z2 = 1/2 sum lambda_n^2 |u_n|^2`` one has ``{Z2, z} = i Omega z`` for
    a monomial ``z``, so the generator is ``chi = i P / Omega`` on
    ``|Omega| > kappa`` and ``P + {Z2, chi}`` keeps exactly the terms with
    ``|Omega| <= kappa``.  The whole Hamiltonian ``Z2 + sum P`` is carried
    through each Lie transform, so higher brackets of ``Z2`` with the
    generator land in the degrees above the one being normalised.  Composing
    the flows of the returned generators maps the input Hamiltonian to
    ``Z2 + sum Q`` up to terms of degree ``degree_cap + 2``.
    """
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    polys = list(polys)
    if not polys:
        raise ValueError("no polynomial given")
    ball = polys[0].ball
    lam2 = ball.frequencies(metric)
    H = PlainPoly(ball)
    by_degree = {}
    for hp in polys:
        if hp.ball != ball:
            raise ValueError("polynomials live on different balls")
        H = H + PlainPoly.from_homogeneous(hp)
        by_degree.setdefault(hp.degree, []).append(hp)
    H = H.pruned()
    # the quadratic part takes part in the transform: its higher brackets
    # feed every degree above the one being normalised
    for n in range(len(ball)):
        H.terms[((n, 1, 1),)] += 0.5 * lam2[n]
    chi_out, Q_out, Qh_out, remainder = {}, {}, {}, {}
    for d in range(4, degree_cap + 1, 2):
        Pd = H.degree_part(d).pruned()
        chi = PlainPoly(ball)
        Qd = PlainPoly(ball)
        for key, c in Pd.terms.items():
            om = _plain_omega(key, lam2)
            if math.isfinite(kappa) and abs(abs(om) - kappa) <= 1e-12:
                raise AmbiguousThresholdError(f"|Omega| = {abs(om)!r} is within 1e-12 of kappa for exponents {key}")
            if abs(om) <= kappa:
                Qd.terms[key] += c
            else:
                chi.terms[key] += 1j * c / om
        chi_out[d] = chi
        Q_out[d] = Qd
        if d == 4 and 4 in by_degree:
            parts = [hp.filtered(np.abs(hp.omegas(metric)) <= kappa) for hp in by_degree[4]]
            if len(parts) == 1:
                Qh_out[4] = parts[0]
            else:
                Qh_out[4] = Qd.to_homogeneous(2)
        else:
            Qh_out[d] = Qd.to_homogeneous(d // 2)
        if chi.terms:
            H = _lie_transform_plain(H, chi, degree_cap, remainder)
            # P_d + {Z2, chi_d} equals Q_d exactly; drop the rounding residue
            H = PlainPoly(ball, {k: c for k, c in H.terms.items() if _plain_degree(k) != d}) + Qd
    return BirkhoffResult(chi_out, Q_out, Qh_out, remainder, kappa)


def _plain_degree(key: tuple) -> int:
    return sum(K + L for _, K, L in key)


def _lie_transform_plain(H: PlainPoly, chi: PlainPoly, cap: int, remainder: dict) -> PlainPoly:
    out = H.copy()
    term = H
    ell = 1
    while True:
        term = term.bracket(chi).scale(1.0 / ell)
        high = PlainPoly(term.ball, {k: c for k, c in term.terms.items() if sum(K + L for _, K, L in k) > cap})
        for k, c in high.terms.items():
            d = sum(K + L for _, K, L in k)
            rec = remainder.setdefault(d, {"terms": 0, "max_abs": 0.0})
            rec["terms"] += 1
            rec["max_abs"] = max(rec["max_abs"], abs(c))
        term = PlainPoly(term.ball, {k: c for k, c in term.terms.items() if sum(K + L for _, K, L in k) <= cap})
        term = term.pruned()
        if not term.terms:
            break
        out = out + term
        ell += 1
    return out.pruned()


# frequencies and cutoff ---------------------------------------------------------


@dataclass
class FrequencyVector:
    """Coefficients ``omega_n`` of ``Z2 = sum omega_n y_n`` and their ``xi``-Jacobian.

    ``grad[n, k]`` is ``d omega_n / d xi_k``.
    """

    omega: np.ndarray
    grad: np.ndarray | None = None

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        if self.grad is not None:
            self.grad = np.asarray(self.grad, dtype=float)

    def modulated(self) -> np.ndarray:
        """Frequencies in the normalisation of the small-divisor thresholds."""
        return 2.0 * self.omega

    def budget_flags(self, alpha: int, epsilon: float) -> np.ndarray | None:
        """Sites where ``|d(2 omega_n - xi_n)/d xi_k|`` exceeds ``(alpha + 1) eps``."""
        if self.grad is None:
            return None
        dev = np.abs(2.0 * self.grad - np.eye(len(self.omega)))
        return dev.max(axis=1) > (alpha + 1) * epsilon


def key_omega(key: tuple, omega: np.ndarray) -> float:
    """``Omega_n(omega) = sum (k_n - l_n) omega_n``."""
    return float(sum((k - l) * omega[s] for s, k, l, _ in key))


def _key_omega_grad(key: tuple, freq: FrequencyVector):
    if freq.grad is None:
        return None
    g = np.zeros(freq.grad.shape[1])
    for s, k, l, _ in key:
        if k - l:
            g += (k - l) * freq.grad[s]
    return g


def bump(x):
    """Smooth even bump: 1 on ``|x| <= 1/2``, 0 on ``|x| >= 1``."""
    x = np.abs(np.asarray(x, dtype=float))
    out = np.zeros_like(x)
    out[x <= 0.5] = 1.0
    mid = (x > 0.5) & (x < 1.0)
    t = 2.0 * x[mid] - 1.0
    out[mid] = np.exp(1.0 - 1.0 / (1.0 - t**2))
    return out if out.ndim else float(out)


def bump_derivative(x):
    """Derivative of :func:`bump`."""
    xa = np.asarray(x, dtype=float)
    ax = np.abs(xa)
    out = np.zeros_like(xa)
    mid = (ax > 0.5) & (ax < 1.0)
    t = 2.0 * ax[mid] - 1.0
    val = np.exp(1.0 - 1.0 / (1.0 - t**2))
    # d/dx exp(1 - 1/(1 - t^2)) with t = 2|x| - 1
    out[mid] = val * (-2.0 * t / (1.0 - t**2) ** 2) * 2.0 * np.sign(xa[mid])
    return out if out.ndim else float(out)


@dataclass
class CutoffRecord:
    """Value of the truncation function and its ``xi``-gradient."""

    h: float
    grad: np.ndarray | None = None
    worst_argument: float = math.inf
    factors: int = 0


_PATTERN_CACHE: dict = {}


def _patterns(ball: LatticeBall, cap: int) -> PatternSet:
    key = (ball.dim, ball.M, cap)
    if key not in _PATTERN_CACHE:
        _PATTERN_CACHE[key] = unpaired_patterns(ball, cap)
    return _PATTERN_CACHE[key]


def _pattern_multiplicity(order: np.ndarray, nsites: int, cap: int) -> np.ndarray:
    """Number of multi-indices sharing a pattern: choices of actions with total degree <= cap."""
    t = (cap - order) // 2
    return np.array([math.comb(nsites + int(k), int(k)) for k in t], dtype=float)


def cutoff_eval(schedule: ParamSchedule, omega: FrequencyVector, alpha: int, xi, degree_cap: int, ball: LatticeBall) -> CutoffRecord:
    """Truncation ``h = prod (1 - phi(x_n))`` over ``Lambda_{alpha+1}`` up to the degree cap.

    ``x_n = gamma(alpha)^{-1} max(n_minus, 1)^{2s} eps^{-2} Omega_n(2 omega)``.
    Multi-indices that differ only by actions give identical factors, so each
    pattern contributes its factor raised to its multiplicity.
    """
    pats = _patterns(ball, degree_cap)
    inside = pats.n_minus < schedule.N(alpha + 1)
    pats = pats.subset(inside)
    if len(pats) == 0:
        return CutoffRecord(1.0, np.zeros(len(ball)) if omega.grad is not None else None, math.inf, 0)
    mod = omega.modulated()
    scale = np.maximum(pats.n_minus, 1.0) ** (2 * schedule.s) / (schedule.gamma_of(alpha) * schedule.epsilon**2)
    x = scale * (pats.V @ mod)
    mult = _pattern_multiplicity(pats.order, len(ball), degree_cap)
    phi = bump(x)
    one_minus = 1.0 - phi
    worst = float(np.abs(x).min())
    if np.all(np.abs(x) >= 1.0):
        grad = np.zeros(len(ball)) if omega.grad is not None else None
        return CutoffRecord(1.0, grad, worst, int(mult.sum()))
    if np.any(one_minus == 0.0):
        grad = np.zeros(len(ball)) if omega.grad is not None else None
        return CutoffRecord(0.0, grad, worst, int(mult.sum()))
    log_h = float((mult * np.log(one_minus)).sum())
    h = math.exp(log_h)
    grad = None
    if omega.grad is not None:
        dx = scale[:, None] * (pats.V @ (2.0 * omega.grad))
        coef = mult * (-bump_derivative(x)) / one_minus
        grad = h * (coef @ dx)
    return CutoffRecord(h, grad, worst, int(mult.sum()))


# cohomological equation -------------------------------------------------------------


def solve_cohomological(Q: RecenteredPoly, omega: FrequencyVector, schedule: ParamSchedule, alpha: int, h: CutoffRecord) -> RecenteredPoly:
    """Generator ``chi_n = (i/2) h Q_n / Omega_n(omega)`` on ``Lambda_{alpha+1}``.

    With ``Z2 = sum omega_n y_n`` the identity
    ``Q + {Z2, chi} = (Id - h Pi_Lambda) Q`` holds term by term.  Gradients in
    ``xi`` follow the quotient rule whenever ``Q``, ``omega`` or ``h`` carry them.
    """
    tg = Q.track_grad or omega.grad is not None or h.grad is not None
    out = Q.empty_like(tg)
    nrm = Q.ball.norms
    nb = len(Q.ball)
    zero = np.zeros(nb, dtype=complex)
    for key, c in Q.terms.items():
        if not in_lambda(key, nrm, schedule, alpha + 1):
            continue
        if h.h == 0.0:
            continue
        om = key_omega(key, omega.omega)
        if om == 0.0:
            raise ZeroDivisionError(f"Omega vanishes on {key} while the cutoff is {h.h}")
        val = 0.5j * h.h * c / om
        grad = None
        if tg:
            gq = Q.grads[key] if Q.track_grad else zero
            gh = h.grad if h.grad is not None else zero
            gom = _key_omega_grad(key, omega)
            grad = 0.5j * ((gh * c + h.h * gq) / om)
            if gom is not None:
                grad = grad - 0.5j * h.h * c * gom / om**2
        out.add(key, val, grad)
    return out


def z2_poly(ball: LatticeBall, xi, omega: FrequencyVector) -> RecenteredPoly:
    """``Z2 = sum omega_n y_n`` with gradients taken from ``omega.grad``."""
    tg = omega.grad is not None
    p = RecenteredPoly(ball, xi, track_grad=tg)
    for n in range(len(ball)):
        p.add(((n, 0, 0, 1),), complex(omega.omega[n]), omega.grad[n].astype(complex) if tg else None)
    return p


# iteration state --------------------------------------------------------------------


@dataclass
class RemainderEntry:
    """A polynomial moved out of the normal form, with its sampled size."""

    kind: str
    step: tuple
    poly: RecenteredPoly
    Ysup: float
    Zsup: float
    degree: int

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "step": list(self.step),
            "Ysup": self.Ysup,
            "Zsup": self.Zsup,
            "degree": self.degree,
            "terms": len(self.poly),
        }


@dataclass
class NormalFormState:
    """Snapshot ``Z2(omega) + Z4 + Q`` at scale ``alpha`` after ``j`` steps."""

    alpha: int
    j: int
    omega: FrequencyVector
    Z4: RecenteredPoly
    Q: RecenteredPoly
    schedule: ParamSchedule
    xi: np.ndarray
    ball: LatticeBall
    remainder_log: list = field(default_factory=list)
    omega_scale_start: np.ndarray | None = None
    q_budget: float = 1.0
    history: list = field(default_factory=list)

    @property
    def weights(self) -> WeightSystem:
        return WeightSystem(self.schedule)

    def Z2(self) -> RecenteredPoly:
        return z2_poly(self.ball, self.xi, self.omega)

    def hamiltonian(self) -> RecenteredPoly:
        return self.Z2() + self.Z4 + self.Q

    def lambda_part(self, alpha: int | None = None) -> RecenteredPoly:
        a = self.alpha if alpha is None else alpha
        nrm = self.ball.norms
        return self.Q.filter(lambda k: in_lambda(k, nrm, self.schedule, a + 1))

    def remainder_poly(self, since: int = 0) -> RecenteredPoly:
        total = RecenteredPoly(self.ball, self.xi)
        for entry in self.remainder_log[since:]:
            total = total + entry.poly.with_grad(False)
        return total


def _log(state_like, kind, step, poly, alpha):
    ws = WeightSystem(state_like.schedule)
    rec = norms(poly, ws, alpha)
    return RemainderEntry(kind, step, poly, rec.Ysup, rec.Zsup, poly.max_degree())


def initial_state(
    metric: TorusMetric,
    ball: LatticeBall,
    fprime0: float,
    xi,
    schedule: ParamSchedule,
    extras=(),
    track_grad: bool = True,
) -> NormalFormState:
    """Center the truncated Hamiltonian at ``xi`` and split it by degree.

    ``H = 1/2 sum lambda^2 |u|^2 - f'(0)/4 sum |u|^4 + extras`` becomes
    ``Z2(omega) + Z4 + Q`` plus a constant.  Degree-4 terms that are not
    integrable have no place in this splitting and are rejected.
    """
    lam2 = ball.frequencies(metric)
    H = PlainPoly(ball)
    for n in range(len(ball)):
        H.terms[((n, 1, 1),)] += 0.5 * lam2[n]
        H.terms[((n, 2, 2),)] += -fprime0 / 4.0
    for hp in extras:
        if hp.ball != ball:
            raise ValueError("extra polynomial lives on another ball")
        H = H + PlainPoly.from_homogeneous(hp)
    C = H.recenter(xi, track_grad=track_grad)
    bad = C.filter(lambda k: key_degree(k) <= 4 and not key_is_integrable(k)).pruned(1e-300)
    if len(bad):
        raise ValueError(f"degree <= 4 non-integrable terms after centering, e.g. {next(iter(bad.terms))}")
    nb = len(ball)
    omega = np.zeros(nb)
    grad = np.zeros((nb, nb)) if track_grad else None
    for n in range(nb):
        key = ((n, 0, 0, 1),)
        omega[n] = C.terms.get(key, 0.0).real
        if track_grad:
            grad[n] = C.grad_of(key).real
    freq = FrequencyVector(omega, grad)
    Z4 = C.filter(lambda k: key_degree(k) == 4)
    Q = C.filter(lambda k: key_degree(k) >= 6)
    state = NormalFormState(0, 0, freq, Z4, Q, schedule, np.asarray(xi, float), ball, omega_scale_start=omega.copy())
    const = C.filter(lambda k: key_degree(k) == 0)
    if len(const):
        state.remainder_log.append(_log(state, "constant", (0, 0), const, 0))
    ysup0 = norms(Q, state.weights, 0).Ysup
    state.q_budget = max(1.0, ysup0)
    return state


def lie_step(state: NormalFormState, j: int | None = None, kappa_steps: int = 6, degree_cap: int | None = None) -> NormalFormState:
    """One Lie transform removing ``Pi_Lambda Q`` at the current scale.

    Returns a new state whose total Hamiltonian, composed with ``Phi^1_chi``,
    equals the old one up to the remainder terms logged during this step and
    the untruncated tail of the Lie series.
    """
    j = state.j if j is None else j
    if j >= kappa_steps:
        raise ValueError("step index must be below kappa_steps")
    cap = degree_cap if degree_cap is not None else state.schedule.rbar_cap
    sched, ball, xi, alpha = state.schedule, state.ball, state.xi, state.alpha
    ws = state.weights
    h = cutoff_eval(sched, state.omega, alpha, xi, cap, ball)
    chi = solve_cohomological(state.Q, state.omega, sched, alpha, h)
    step = (alpha, j)
    overflow = RecenteredPoly(ball, xi, track_grad=state.Q.track_grad or chi.track_grad)
    Z2 = state.Z2()
    if not len(chi):
        new = replace(state, j=j + 1, remainder_log=list(state.remainder_log), history=list(state.history))
        new.history.append({"alpha": alpha, "j": j, "h": h.h, "chi_terms": 0})
        return new
    # P = {Z4 + Q, chi} + sum_{l >= 2} ad^l (Z2 + Z4 + Q) / l!
    first_rest = poisson_bracket(state.Z4 + state.Q, chi, cap, overflow)
    first_z2 = poisson_bracket(Z2, chi, cap, overflow)
    P = first_rest.copy()
    term = first_z2 + first_rest
    fact = 1.0
    for ell in range(2, kappa_steps):
        fact *= ell
        level = overflow.empty_like()
        term = poisson_bracket(term, chi, cap, level)
        if len(level):
            overflow = overflow + level.scale(1.0 / fact)
        if not len(term):
            break
        P = P + term.scale(1.0 / fact)
    nrm = ball.norms
    lam = lambda k: in_lambda(k, nrm, sched, alpha + 1)  # noqa: E731
    kept = state.Q.filter(lambda k: not lam(k)) + state.Q.filter(lam).scale(1.0 - h.h, -h.grad if h.grad is not None else None)
    new_Q = (kept + P.filter(lambda k: 6 <= key_degree(k) <= cap)).pruned(0.0)
    new_Z4 = state.Z4 + P.filter(lambda k: key_degree(k) == 4 and key_is_integrable(k))
    omega = state.omega.omega.copy()
    grad = None if state.omega.grad is None else state.omega.grad.copy()
    for n in range(len(ball)):
        key = ((n, 0, 0, 1),)
        if key in P.terms:
            omega[n] += P.terms[key].real
            if grad is not None and P.track_grad:
                grad[n] += P.grads[key].real
    log = list(state.remainder_log)
    parts = [
        ("constant", P.filter(lambda k: key_degree(k) == 0)),
        ("low_degree_nonintegrable", P.filter(lambda k: 0 < key_degree(k) <= 4 and not key_is_integrable(k))),
        ("above_cap", overflow),
    ]
    for kind, poly in parts:
        poly = poly.pruned(0.0)
        if len(poly):
            log.append(_log(state, kind, step, poly, alpha))
    new = NormalFormState(
        alpha,
        j + 1,
        FrequencyVector(omega, grad),
        new_Z4,
        new_Q,
        sched,
        xi,
        ball,
        log,
        state.omega_scale_start,
        state.q_budget,
        list(state.history),
    )
    old_lam = norms(state.lambda_part(), ws, alpha)
    new_lam = norms(new.lambda_part(), ws, alpha)
    q_norm = norms(new_Q, ws, alpha)
    budget = 10.0 * sched.epsilon ** (-1e-4) * state.q_budget
    new.history.append(
        {
            "alpha": alpha,
            "j": j,
            "h": h.h,
            "chi_terms": len(chi),
            "lambda_Ysup_before": old_lam.Ysup,
            "lambda_Ysup_after": new_lam.Ysup,
            "Q_Ysup": q_norm.Ysup,
            "omega_shift": float(np.abs(omega - state.omega.omega).max()),
        }
    )
    if q_norm.Ysup > budget:
        raise NormBlowupError(f"sampled Ysup {q_norm.Ysup:.3e} exceeds budget {budget:.3e}; dominant multi-index {q_norm.argmax}")
    return new


def scale_advance(state: NormalFormState) -> NormalFormState:
    """Move to scale ``alpha + 1``: drop what is left of ``Pi_Lambda Q`` into the remainder."""
    inside = state.lambda_part()
    log = list(state.remainder_log)
    if len(inside):
        log.append(_log(state, "scale_residue", (state.alpha, state.j), inside, state.alpha))
    nrm = state.ball.norms
    sched = state.schedule
    Q = state.Q.filter(lambda k: not in_lambda(k, nrm, sched, state.alpha + 1))
    start = state.omega_scale_start if state.omega_scale_start is not None else state.omega.omega
    drift = float(np.abs(2.0 * (state.omega.omega - start)).max())
    budget = sched.N(state.alpha) ** (-4 * sched.s) * sched.epsilon**3
    history = list(state.history)
    history.append({"advance_to": state.alpha + 1, "frequency_drift": drift, "drift_budget": budget, "within_budget": drift <= budget})
    return NormalFormState(
        state.alpha + 1,
        0,
        state.omega,
        state.Z4,
        Q,
        sched,
        state.xi,
        state.ball,
        log,
        state.omega.omega.copy(),
        state.q_budget,
        history,
    )


# flows ---------------------------------------------------------------------------------


def poly_flow(chi: RecenteredPoly, u0, t: float = 1.0, tol: float = 1e-12):
    """Integrate ``i du/dt = grad chi(u)`` from 0 to ``t`` with an adaptive 8th-order pair.

    Raises :class:`FlowFailure` (carrying the last computed state) when the
    step size collapses.
    """
    if abs(t) > 1.0 + 1e-15:
        raise ValueError("flow time must satisfy |t| <= 1")
    u0 = np.asarray(getattr(u0, "amps", u0), dtype=complex)
    if t == 0.0 or not len(chi):
        return u0.copy()
    comp = chi.compiled()
    nb = u0.shape[0]

    def rhs(_, x):
        u = x[:nb] + 1j * x[nb:]
        du = -1j * comp.gradient(u)
        return np.concatenate([du.real, du.imag])

    scale = max(float(np.abs(u0).max()), 1e-300)
    # DOP853 refuses relative tolerances below 100 machine epsilons
    rtol = max(tol, 100 * np.finfo(float).eps)
    sol = solve_ivp(rhs, (0.0, t), np.concatenate([u0.real, u0.imag]), method="DOP853", rtol=rtol, atol=tol * scale)
    last = sol.y[:nb, -1] + 1j * sol.y[nb:, -1]
    if not sol.success:
        raise FlowFailure(sol.message, last)
    return last


def flow_differential_check(chi: RecenteredPoly, u, t: float, probes, step: float = 1e-6, tol: float = 1e-13) -> float:
    """Largest ``||dPhi^t(u) v - v||`` over unit probe directions, by central differences."""
    u = np.asarray(getattr(u, "amps", u), dtype=complex)
    worst = 0.0
    for v in probes:
        v = np.asarray(v, dtype=complex)
        v = v / np.linalg.norm(v)
        plus = poly_flow(chi, u + step * v, t, tol)
        minus = poly_flow(chi, u - step * v, t, tol)
        dv = (plus - minus) / (2 * step)
        worst = max(worst, float(np.linalg.norm(dv - v)))
    return worst


def hamiltonian_consistency(old: NormalFormState, new: NormalFormState, chi: RecenteredPoly, samples, tol: float = 1e-13):
    """Largest ``|H_old(Phi^1 u) - H_new(u) - R(u)| / |H_old(Phi^1 u)|`` over samples."""
    from .polyalg.poly import evaluate

    H_old = old.hamiltonian().with_grad(False)
    H_new = new.hamiltonian().with_grad(False)
    R = new.remainder_poly(len(old.remainder_log))
    worst = 0.0
    for u in samples:
        v = poly_flow(chi.with_grad(False), u, 1.0, tol)
        lhs = evaluate(H_old, v)
        rhs = evaluate(H_new, u) + (evaluate(R, u) if len(R) else 0.0)
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-300))
    return worst


def generator(state: NormalFormState, degree_cap: int | None = None) -> RecenteredPoly:
    """The generator ``chi`` the next :func:`lie_step` would use."""
    cap = degree_cap if degree_cap is not None else state.schedule.rbar_cap
    h = cutoff_eval(state.schedule, state.omega, state.alpha, state.xi, cap, state.ball)
    return solve_cohomological(state.Q, state.omega, state.schedule, state.alpha, h)


def draw_nonresonant_xi(
    metric: TorusMetric,
    ball: LatticeBall,
    fprime0: float,
    schedule: ParamSchedule,
    radius: float = 2.0,
    seed: int = 0,
    extras=(),
    max_tries: int = 1000,
):
    """Draw actions uniformly from ``{xi >= 0, sum <n>^{2s} xi_n < radius eps^2}`` until the cutoff is 1.

    Returns
    -------
    xi : ndarray
    tries : int
        Number of draws used, starting at 1.

    Raises
    ------
    RuntimeError
        When no draw within ``max_tries`` has a cutoff of exactly one.
    """
    rng = np.random.default_rng(seed)
    w = ball.brackets ** (2 * schedule.s)
    scale = radius * schedule.epsilon**2
    for k in range(1, max_tries + 1):
        xi = scale * rng.dirichlet(np.ones(len(ball) + 1))[:-1] / w
        state = initial_state(metric, ball, fprime0, xi, schedule, extras, track_grad=False)
        if cutoff_eval(schedule, state.omega, 0, xi, schedule.rbar_cap, ball).h == 1.0:
            return xi, k
    raise RuntimeError(f"no non-resonant draw in {max_tries} tries")
