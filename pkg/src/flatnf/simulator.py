"""Symplectic integration of truncated NLS Hamiltonians with observable tracking.

The flow is ``i du/dt = grad H(u)`` with ``grad = 2 d/d conj(u)``.  Every
Hamiltonian here splits as ``H = H_lin + H_nl`` where
``H_lin = 1/2 sum lambda_n^2 |u_n|^2`` has the exact flow
``u_n -> exp(-i lambda_n^2 t) u_n``.  The default stepper is the symmetric
composition: half a linear step, one implicit-midpoint step of ``H_nl``,
half a linear step.  A plain implicit-midpoint step of the whole ``H`` is
also available.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .clusters import ClusterPartition, super_actions
from .lattice import LatticeBall, TorusMetric
from .polyalg.poly import center
from .state import FourierState

__all__ = [
    "FourierState",
    "ObservableSeries",
    "LowHamiltonian",
    "TruncatedNLS",
    "build_hlo",
    "StepFailure",
    "integrate",
    "step",
    "observables",
    "annulus_membership",
    "rectangle_seed",
    "stability_experiment",
    "StabilityReport",
]


class StepFailure(RuntimeError):
    """Fixed-point iteration did not converge; ``state`` holds the last accepted point."""

    def __init__(self, message: str, state: FourierState):
        super().__init__(message)
        self.state = state


class _Hamiltonian:
    """Shared evaluation of ``H_lin + H_nl``."""

    ball: LatticeBall
    lam2: np.ndarray

    def linear_energy(self, u) -> float:
        return 0.5 * float((self.lam2 * np.abs(u) ** 2).sum())

    def energy(self, u) -> float:
        return self.linear_energy(u) + self.nonlinear_energy(u)

    def gradient(self, u) -> np.ndarray:
        return self.lam2 * u + self.nonlinear_gradient(u)

    def linear_flow(self, u, t: float) -> np.ndarray:
        return np.exp(-1j * self.lam2 * t) * u


class LowHamiltonian(_Hamiltonian):
    """``1/2 sum (lambda_n^2 - f'(0)/2 |u_n|^2) |u_n|^2`` plus polynomial tails."""

    def __init__(self, metric: TorusMetric, ball: LatticeBall, fprime0: float, extras=()):
        self.metric = metric
        self.ball = ball
        self.fprime0 = float(fprime0)
        self.lam2 = ball.frequencies(metric)
        self.extras = list(extras)
        zero = np.zeros(len(ball))
        self._compiled = [center(p, zero).compiled() for p in self.extras]

    def nonlinear_energy(self, u) -> float:
        u = np.asarray(u)
        val = -0.25 * self.fprime0 * float((np.abs(u) ** 4).sum())
        for c in self._compiled:
            val += float(np.real(c.value(u)))
        return val

    def nonlinear_gradient(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=complex)
        g = -self.fprime0 * np.abs(u) ** 2 * u
        for c in self._compiled:
            g = g + c.gradient(u)
        return g

    @property
    def integrable(self) -> bool:
        """True when every term depends on the actions alone."""
        return not self.extras


class TruncatedNLS(_Hamiltonian):
    """Full quartic ``1/2 sum lambda^2 |u|^2 - f'(0)/4 sum_{n1-n2+n3-n4=0} u1 conj(u2) u3 conj(u4)``.

    The quartic sum is evaluated as ``mean |psi|^4`` on a grid of
    ``4M+1`` points per axis, fine enough that no product aliases back into
    the ball.
    """

    def __init__(self, metric: TorusMetric, ball: LatticeBall, fprime0: float):
        self.metric = metric
        self.ball = ball
        self.fprime0 = float(fprime0)
        self.lam2 = ball.frequencies(metric)
        M = int(math.floor(ball.M))
        self.K = 4 * M + 1
        self._grid_index = tuple((ball.sites % self.K).T)
        self._shape = (self.K,) * ball.dim

    def _to_grid(self, u) -> np.ndarray:
        a = np.zeros(self._shape, dtype=complex)
        a[self._grid_index] = u
        return np.fft.ifftn(a, norm="forward")

    def nonlinear_energy(self, u) -> float:
        psi = self._to_grid(u)
        return -0.25 * self.fprime0 * float(np.mean(np.abs(psi) ** 4))

    def nonlinear_gradient(self, u) -> np.ndarray:
        psi = self._to_grid(u)
        coef = np.fft.fftn(np.abs(psi) ** 2 * psi, norm="forward")
        return -self.fprime0 * coef[self._grid_index]

    integrable = False


def build_hlo(metric: TorusMetric, ball: LatticeBall, fprime0: float, extras=(), kappa: float | None = None) -> LowHamiltonian:
    """Assemble the truncated low-mode Hamiltonian.

    Parameters
    ----------
    metric, ball
        Torus and truncation.
    fprime0 : float
        Derivative of the nonlinearity at zero.
    extras : sequence of HomogeneousPoly
        Tails of degree at least six; each must be ``kappa``-resonant.
    kappa : float, optional
        Resonance threshold used to validate ``extras``.
    """
    for p in extras:
        if p.degree < 6:
            raise ValueError("extra terms must have degree at least 6")
        if kappa is not None:
            live = np.abs(p.coeffs) > 0
            if np.any(np.abs(p.omegas(metric)[live]) > kappa):
                raise ValueError("extra polynomial is not kappa-resonant")
    return LowHamiltonian(metric, ball, fprime0, extras)


def _solve_midpoint(u, dt, grad_fn, tol, max_iter):
    # a diverging iteration overflows to inf/nan and is reported as failure
    with np.errstate(over="ignore", invalid="ignore"):
        new = u - 1j * dt * grad_fn(u)
        for _ in range(max_iter):
            nxt = u - 1j * dt * grad_fn(0.5 * (u + new))
            err = np.abs(nxt - new).max()
            new = nxt
            if err <= tol * max(1.0, float(np.abs(new).max())):
                return new, True
    return new, False


def step(H, u, dt: float, method: str = "split", tol: float = 1e-13, max_iter: int = 100):
    """Advance amplitudes ``u`` by ``dt``.

    Parameters
    ----------
    method : {"split", "midpoint"}
        ``"split"`` wraps a midpoint step of the nonlinear part between two
        exact linear half-steps; ``"midpoint"`` applies the implicit midpoint
        rule to the whole Hamiltonian.

    Returns
    -------
    ndarray or None
        ``None`` when the fixed point does not converge.
    """
    if method == "split":
        v = H.linear_flow(u, 0.5 * dt)
        v, ok = _solve_midpoint(v, dt, H.nonlinear_gradient, tol, max_iter)
        return H.linear_flow(v, 0.5 * dt) if ok else None
    if method == "midpoint":
        v, ok = _solve_midpoint(u, dt, H.gradient, tol, max_iter)
        return v if ok else None
    raise ValueError(f"unknown method {method!r}")


@dataclass
class ObservableSeries:
    """Time series of conserved and drifting quantities.

    ``annulus`` holds, per sample, whether ``recentered_sum`` sits below the
    threshold of each scale ``alpha`` in ``alphas``.
    """

    times: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    hs_norm: list = field(default_factory=list)
    action_dev: list = field(default_factory=list)
    superaction_dev: list = field(default_factory=list)
    recentered_sum: list = field(default_factory=list)
    annulus: list = field(default_factory=list)
    final: FourierState | None = None

    COLUMNS = ("t", "mass", "energy", "hs_norm", "action_dev", "superaction_dev", "recentered_sum")

    def append(self, t: float, row: dict) -> None:
        if self.times and t <= self.times[-1]:
            raise ValueError("times must increase strictly")
        self.times.append(float(t))
        for name in self.COLUMNS[1:]:
            getattr(self, name).append(float(row[name]))
        self.annulus.append(row.get("annulus"))

    def __len__(self) -> int:
        return len(self.times)

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.times if name == "t" else getattr(self, name))

    def relative_drift(self, name: str) -> float:
        x = self.column(name)
        return float(np.abs(x - x[0]).max() / abs(x[0])) if abs(x[0]) > 0 else float(np.abs(x).max())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for i in range(len(self)):
                w.writerow([repr(float(self.column(c)[i])) for c in self.COLUMNS])

    def to_dict(self) -> dict:
        return {c: self.column(c).tolist() for c in self.COLUMNS}


def annulus_membership(recentered: float, epsilon: float, s: float, alphas) -> list[bool]:
    """``recentered <= eps^{2+1/5} N(alpha)^{-2s}`` with ``N(alpha) = eps^{-alpha/(200 s)}``."""
    out = []
    for a in alphas:
        log_n = -a / (200 * s) * math.log(epsilon)
        out.append(bool(recentered <= epsilon ** 2.2 * math.exp(-2 * s * log_n)))
    return out


def observables(u_t, u_0, xi, partition: ClusterPartition | None, s: float, H=None, epsilon: float | None = None, alphas=()) -> dict:
    """One row of observables.

    Parameters
    ----------
    u_t, u_0 : array_like or FourierState
        Current and initial amplitudes on the same ball.
    xi : array_like
        Reference actions for the re-centered sum.
    partition : ClusterPartition, optional
        Needed for the super-action deviation; zero without it.
    s : float
        Sobolev exponent of all weights.
    H : Hamiltonian, optional
        Adds the energy column.
    """
    ball = getattr(u_t, "ball", None) or getattr(u_0, "ball", None) or (partition.ball if partition else None)
    ball = ball or getattr(H, "ball", None)
    if ball is None:
        raise ValueError("pass a FourierState, a partition or a Hamiltonian to fix the ball")
    ut = np.asarray(getattr(u_t, "amps", u_t), dtype=complex)
    u0 = np.asarray(getattr(u_0, "amps", u_0), dtype=complex)
    if ut.shape != u0.shape:
        raise ValueError("states live on different balls")
    w = ball.brackets ** (2 * s)
    a_t, a_0 = np.abs(ut) ** 2, np.abs(u0) ** 2
    row = {
        "mass": float(a_t.sum()),
        "energy": float(H.energy(ut)) if H is not None else float("nan"),
        "hs_norm": float(np.sqrt((w * a_t).sum())),
        "action_dev": float((w * np.abs(a_t - a_0)).sum()),
        "recentered_sum": float((w * np.abs(a_t - np.asarray(xi, dtype=float))).sum()),
    }
    if partition is not None:
        diff = super_actions(np.sqrt(w) * ut, partition) - super_actions(np.sqrt(w) * u0, partition)
        row["superaction_dev"] = float(np.abs(diff).sum())
    else:
        row["superaction_dev"] = 0.0
    if epsilon is not None and alphas:
        row["annulus"] = annulus_membership(row["recentered_sum"], epsilon, s, alphas)
    return row


def integrate(
    H,
    u0: FourierState,
    T: float,
    dt: float,
    stride: int = 1,
    method: str = "split",
    tol: float = 1e-13,
    s: float = 1.0,
    xi=None,
    partition: ClusterPartition | None = None,
    epsilon: float | None = None,
    alphas=(),
) -> ObservableSeries:
    """Integrate ``i du/dt = grad H(u)`` from ``u0`` up to time ``T``.

    Parameters
    ----------
    H : LowHamiltonian or TruncatedNLS
    u0 : FourierState
    T, dt : float
        Horizon and step; the last step is shortened to land on ``T``.
    stride : int
        Record observables every ``stride`` steps (and at ``T``).
    method : {"split", "midpoint"}
    tol : float
        Fixed-point tolerance per step.
    s : float
        Weight exponent of the observables.
    xi : array_like, optional
        Reference actions; the initial actions by default.

    Returns
    -------
    ObservableSeries
        ``final`` holds the state at ``T``.

    Raises
    ------
    StepFailure
        When a fixed-point solve does not converge.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if T < 0:
        raise ValueError("T must be non-negative")
    u = u0.amps.copy()
    xi = np.abs(u) ** 2 if xi is None else np.asarray(xi, dtype=float)
    series = ObservableSeries()
    series.append(u0.t, observables(u, u0.amps, xi, partition, s, H, epsilon, alphas))
    nsteps = int(math.ceil(T / dt - 1e-9))
    t = u0.t
    for k in range(1, nsteps + 1):
        h = min(dt, u0.t + T - t)
        nxt = step(H, u, h, method, tol)
        if nxt is None:
            raise StepFailure(f"fixed point failed at t={t:.6g}", FourierState(u0.ball, u, t))
        u = nxt
        t = u0.t + min(k * dt, T)
        if k % stride == 0 or k == nsteps:
            series.append(t, observables(u, u0.amps, xi, partition, s, H, epsilon, alphas))
    series.final = FourierState(u0.ball, u, t)
    return series


def rectangle_seed(ball: LatticeBall, epsilon: float, s: float, corners, phases=None) -> FourierState:
    """State supported on ``corners`` with equal weighted actions and ``h^s`` norm ``epsilon``."""
    idx = [ball.index(tuple(c)) for c in corners]
    amps = np.zeros(len(ball), dtype=complex)
    w = ball.brackets[idx] ** s
    phases = np.zeros(len(idx)) if phases is None else np.asarray(phases, dtype=float)
    amps[idx] = epsilon / math.sqrt(len(idx)) / w * np.exp(1j * phases)
    return FourierState(ball, amps)


@dataclass
class StabilityReport:
    """Action deviations of the same data on two tori."""

    times: np.ndarray
    action_dev_a: np.ndarray
    action_dev_b: np.ndarray
    hs_a: np.ndarray
    hs_b: np.ndarray
    epsilon: float
    T: float

    @property
    def ratio(self) -> float:
        """Peak deviation on the second torus over the peak on the first."""
        a = float(self.action_dev_a.max())
        b = float(self.action_dev_b.max())
        return math.inf if a == 0 and b > 0 else (b / a if a > 0 else 1.0)

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "T": self.T,
            "ratio": self.ratio,
            "times": self.times.tolist(),
            "action_dev_a": self.action_dev_a.tolist(),
            "action_dev_b": self.action_dev_b.tolist(),
            "hs_norm_a": self.hs_a.tolist(),
            "hs_norm_b": self.hs_b.tolist(),
            "horizon_note": "desk horizon O(eps^-2); long-time horizons out of reach",
        }


def stability_experiment(
    metric_a: TorusMetric,
    metric_b: TorusMetric,
    ball: LatticeBall,
    s: float,
    epsilon: float,
    u0: FourierState,
    T: float,
    dt: float,
    fprime0: float = -1.0,
    stride: int = 100,
) -> StabilityReport:
    """Evolve identical data under the full quartic on two tori and compare.

    ``metric_a`` is meant to be admissible and ``metric_b`` the square torus.
    The amplitudes are mapped site by site, which is valid because both runs
    share the ball.
    """
    runs = []
    for metric in (metric_a, metric_b):
        H = TruncatedNLS(metric, ball, fprime0)
        runs.append(integrate(H, u0, T, dt, stride=stride, s=s))
    a, b = runs
    return StabilityReport(
        a.column("t"),
        a.column("action_dev"),
        b.column("action_dev"),
        a.column("hs_norm"),
        b.column("hs_norm"),
        epsilon,
        T,
    )


def write_manifest(path, config: dict, extra: dict | None = None) -> None:
    with open(path, "w") as fh:
        json.dump({"config": config, **(extra or {})}, fh, indent=2, sort_keys=True)
