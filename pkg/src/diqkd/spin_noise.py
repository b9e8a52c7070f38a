"""Spin decoherence, herald-dependent phase correction and timing."""
from __future__ import annotations

from dataclasses import dataclass
from math import exp, isfinite
from typing import Hashable

from .numkernel import PAULIS, SIGMA_Z, DensityOperator

C_FIBER_KM_S = 2.0e5

STRATEGIES = ("communication_free", "adaptive")


@dataclass(frozen=True)
class TimingParams:
    """Readout time ``t_m`` and coherence time ``tau`` in seconds, distance
    ``L`` in km, signal velocity ``c_signal`` in km/s."""

    t_m: float = 1e-5
    tau: float = 1e-3
    L: float = 0.0
    c_signal: float = C_FIBER_KM_S

    def __post_init__(self):
        if not (self.t_m > 0 and self.tau > 0 and self.c_signal > 0):
            raise ValueError("t_m, tau and c_signal must be strictly positive")
        if self.L < 0:
            raise ValueError(f"distance must be non-negative, got {self.L}")
        if not isfinite(self.t_m / self.tau):
            raise ValueError("t_m/tau is not finite")


def depolarizing_weights(t_over_tau: float) -> tuple:
    decay = exp(-t_over_tau)
    g0 = (1 + 3 * decay) / 4
    gi = (1 - decay) / 4
    return g0, gi, gi, gi


def depolarize(rho: DensityOperator, spin: Hashable, t_over_tau: float) -> DensityOperator:
    """Depolarise ``spin`` for a time ``t`` with coherence time ``tau``.

    Bloch vector components shrink by ``exp(-t/tau)``.
    """
    if t_over_tau < 0:
        raise ValueError(f"t_over_tau must be non-negative, got {t_over_tau}")
    if t_over_tau == 0:
        rho.index(spin)
        return rho
    weights = depolarizing_weights(t_over_tau)
    return rho.apply_kraus([w**0.5 * s for w, s in zip(weights, PAULIS)], [spin])


def phase_correct(rho: DensityOperator, spin: Hashable) -> DensityOperator:
    """Apply a pi phase shift (sigma_z) to ``spin``."""
    return rho.apply(SIGMA_Z, [spin])


def decoherence_time(strategy: str, t: TimingParams) -> float:
    """Time in seconds the spins decohere before readout completes."""
    if strategy == "communication_free":
        return t.t_m
    if strategy == "adaptive":
        return t.t_m + t.L / t.c_signal
    raise ValueError(f"unknown strategy {strategy!r}")
