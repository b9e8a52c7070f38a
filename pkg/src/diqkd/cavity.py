"""Single-sided spin-cavity reflection.

A photon reflected off the cavity picks up an amplitude that depends on its
circular polarisation and on the spin: ``r_d`` for ``|R,up>`` and
``|L,down>`` (dipole coupled), ``r_c`` for ``|R,down>`` and ``|L,up>``
(effectively empty cavity).  Whatever is not reflected is scattered into loss
modes.

Bell-state convention, also for photon-spin pairs with up <-> R, down <-> L::

    |Phi+-> = (|RR> +- |LL>)/sqrt(2),   |Psi+-> = (|RL> +- |LR>)/sqrt(2)
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb, sqrt
from typing import Hashable, Optional

import numpy as np

from .numkernel import SIGMA_Z, DensityOperator

SQ2 = sqrt(2.0)
PHI_PLUS = np.array([1, 0, 0, 1], dtype=complex) / SQ2
PHI_MINUS = np.array([1, 0, 0, -1], dtype=complex) / SQ2
PSI_PLUS = np.array([0, 1, 1, 0], dtype=complex) / SQ2
PSI_MINUS = np.array([0, 1, -1, 0], dtype=complex) / SQ2

UP, DOWN = 0, 1
SPIN_PLUS = np.array([1, 1], dtype=complex) / SQ2


@dataclass(frozen=True)
class CavityParams:
    """Cavity described by the outcoupling-to-loss ratio ``kappa/kappa_s``.

    Raw rates (same energy units) may be given instead through
    :meth:`from_rates`; they must satisfy ``g^2 = gamma (kappa + kappa_s)/4``
    to within 1 %.
    """

    kappa_ratio: float
    kappa: Optional[float] = None
    kappa_s: Optional[float] = None
    g: Optional[float] = None
    gamma: Optional[float] = None

    def __post_init__(self):
        if not self.kappa_ratio > 0 or not np.isfinite(self.kappa_ratio):
            raise ValueError(f"kappa_ratio must be positive and finite, got {self.kappa_ratio}")
        raw = (self.kappa, self.kappa_s, self.g, self.gamma)
        if any(x is not None for x in raw):
            if any(x is None for x in raw):
                raise ValueError("raw rates need all of kappa, kappa_s, g, gamma")
            if min(raw) <= 0:
                raise ValueError("raw rates must be positive")
            target = self.gamma * (self.kappa + self.kappa_s) / 4
            if abs(self.g**2 - target) > 0.01 * target:
                raise ValueError(
                    f"resonance condition violated: g^2={self.g**2:g}, gamma(kappa+kappa_s)/4={target:g}"
                )
            if abs(self.kappa / self.kappa_s - self.kappa_ratio) > 1e-9 * self.kappa_ratio:
                raise ValueError("kappa_ratio inconsistent with kappa/kappa_s")

    @classmethod
    def from_rates(cls, kappa: float, kappa_s: float, g: float, gamma: float) -> "CavityParams":
        return cls(kappa / kappa_s, kappa=kappa, kappa_s=kappa_s, g=g, gamma=gamma)

    @property
    def r_c(self) -> float:
        k = self.kappa_ratio
        return abs(1.0 - k) / (1.0 + k)

    @property
    def r_d(self) -> float:
        return 1.0 / (1.0 + self.kappa_ratio)


def reflection_coefficients(c: CavityParams) -> tuple:
    """``(r_c, r_d)`` for an empty and a resonantly coupled cavity."""
    return c.r_c, c.r_d


def reflection_kraus(r_up: float, r_down: float, cutoff: int) -> list:
    """Kraus operators on (mode, spin) for spin-conditioned reflection.

    ``K_0`` reflects all photons coherently, scaling ``n`` photons by
    ``r_s**n``.  Each ``K_{k,s}`` with ``k >= 1`` loses ``k`` photons and
    leaves a record of the spin ``s`` in the scattering environment.
    """
    d = cutoff + 1
    rs = (r_up, r_down)
    k0 = np.zeros((d * 2, d * 2), dtype=complex)
    ops = []
    for s, r in enumerate(rs):
        for n in range(d):
            k0[n * 2 + s, n * 2 + s] = r**n
    ops.append(k0)
    for k in range(1, d):
        for s, r in enumerate(rs):
            a = np.zeros((d * 2, d * 2), dtype=complex)
            for n in range(k, d):
                a[(n - k) * 2 + s, n * 2 + s] = sqrt(comb(n, k) * r ** (2 * (n - k)) * (1 - r * r) ** k)
            ops.append(a)
    return ops


def spin_reflection(rho: DensityOperator, location: Hashable, spin: Hashable, c: CavityParams) -> DensityOperator:
    """Reflect the photons of ``location`` off the cavity holding ``spin``."""
    rc, rd = reflection_coefficients(c)
    rho.index(spin)
    if rho.local_dim(spin) != 2:
        raise ValueError(f"{spin!r} is not a qubit")
    for pol, (r_up, r_down) in (("R", (rd, rc)), ("L", (rc, rd))):
        mode = (location, pol)
        rho.index(mode)
        rho = rho.apply_kraus(reflection_kraus(r_up, r_down, rho.local_dim(mode) - 1), [mode, spin])
    return rho


@dataclass(frozen=True)
class HeraldBranch:
    """One heralding outcome of the single-pair, lossless closed form.

    ``amplitude`` is the unnormalised branch vector (its squared norm is the
    probability); ``state`` is the normalised vector or ``None``.
    """

    pattern: str
    probability: float
    amplitude: np.ndarray
    labels: tuple

    @property
    def state(self) -> Optional[np.ndarray]:
        if self.probability <= 0:
            return None
        return self.amplitude / sqrt(self.probability)


def analytic_heralded(variant: str, c: CavityParams) -> list:
    """Closed-form herald branches for a single ``|Phi+>`` pair and spins in
    ``(|up> + |down>)/sqrt(2)``.

    asymmetric: patterns ``H``, ``V``; the remaining state lives on
    (Alice's photon, Bob's spin).  symmetric: patterns ``HH, HV, VH, VV`` on
    (Alice's spin, Bob's spin).
    """
    rc, rd = reflection_coefficients(c)
    if variant == "asymmetric":
        branches = {
            "H": 0.5 * (rc * PSI_PLUS + rd * PHI_PLUS),
            "V": 0.5j * (rc * PSI_MINUS + rd * PHI_MINUS),
        }
        labels = ("photon_A", "spin_B")
    elif variant == "symmetric":
        same = (rc**2 + rd**2) * PHI_PLUS + 2 * rc * rd * PSI_PLUS
        mixed = 1j * (rc**2 - rd**2) * PHI_MINUS
        branches = {"HH": same / 4, "HV": mixed / 4, "VH": mixed / 4, "VV": -same / 4}
        labels = ("spin_A", "spin_B")
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return [
        HeraldBranch(pat, float(np.vdot(v, v).real), v, labels) for pat, v in branches.items()
    ]


def phase_corrected_branches(variant: str, c: CavityParams) -> list:
    """:func:`analytic_heralded` branches after a sigma_z on each spin whose
    local herald was V."""
    z_b = np.kron(np.eye(2), SIGMA_Z)
    z_a = np.kron(SIGMA_Z, np.eye(2))
    out = []
    for br in analytic_heralded(variant, c):
        v = br.amplitude
        if variant == "asymmetric":
            if br.pattern == "V":
                v = z_b @ v
        else:
            if br.pattern[0] == "V":
                v = z_a @ v
            if br.pattern[1] == "V":
                v = z_b @ v
        out.append(HeraldBranch(br.pattern, br.probability, v, br.labels))
    return out


def asymmetric_total_herald(c: CavityParams) -> float:
    """Total single-pair herald probability of the asymmetric protocol,
    ``(r_c^2 + r_d^2)/2`` (sum of the two branch norms)."""
    rc, rd = reflection_coefficients(c)
    return (rc**2 + rd**2) / 2
