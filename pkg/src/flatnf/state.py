"""Phase-space points of the truncated system."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import LatticeBall

__all__ = ["FourierState"]


@dataclass
class FourierState:
    """Complex amplitudes ``u_n`` over a lattice ball at time ``t``."""

    ball: LatticeBall
    amps: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.amps = np.asarray(self.amps, dtype=complex)
        if self.amps.shape != (len(self.ball),):
            raise ValueError("amplitude vector does not match the ball")
        if not np.all(np.isfinite(self.amps)):
            raise ValueError("amplitudes must be finite")

    @property
    def actions(self) -> np.ndarray:
        return np.abs(self.amps) ** 2

    @property
    def mass(self) -> float:
        return float(self.actions.sum())

    def copy(self) -> "FourierState":
        return FourierState(self.ball, self.amps.copy(), self.t)
