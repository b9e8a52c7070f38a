"""Truncated multi-photon polarisation modes.

Each optical mode is a subsystem of a :class:`~diqkd.numkernel.DensityOperator`
labelled ``(location, polarisation)`` with local dimension ``cutoff + 1``
(Fock states ``|0>..|cutoff>``).  The source, channel loss, polarisation basis
changes and threshold detection all act on these labelled modes.

Polarisation convention (fixed once, used everywhere)::

    |H> = (|R> + |L>)/sqrt(2),   |V> = -i(|R> - |L>)/sqrt(2)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from math import comb, factorial, sqrt
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .numkernel import DensityOperator

CIRCULAR = ("R", "L")
LINEAR = ("H", "V")
POLARISATIONS = CIRCULAR + LINEAR

# columns: |H>, |V> written in the (R, L) basis
HV_IN_RL = np.array([[1, -1j], [1, 1j]], dtype=complex) / sqrt(2)


@dataclass(frozen=True)
class ModeRegister:
    """Ordered optical modes with a photon-number truncation.

    ``truncation`` caps the total photon number of any occupation vector;
    ``cutoff`` caps the number in a single mode and fixes the local Fock
    dimension.
    """

    modes: tuple
    truncation: int = 4
    cutoff: int = 2

    def __post_init__(self):
        modes = tuple(tuple(m) for m in self.modes)
        if len(set(modes)) != len(modes):
            raise ValueError(f"duplicate mode labels: {modes}")
        for m in modes:
            if len(m) != 2 or m[1] not in POLARISATIONS:
                raise ValueError(f"mode label must be (location, polarisation), got {m!r}")
        if self.truncation < 0 or self.cutoff < 0:
            raise ValueError("truncation and cutoff must be non-negative")
        object.__setattr__(self, "modes", modes)

    @property
    def dims(self) -> tuple:
        return (self.cutoff + 1,) * len(self.modes)

    def occupations(self):
        """All occupation vectors allowed by the cutoff and truncation."""
        for occ in product(range(self.cutoff + 1), repeat=len(self.modes)):
            if sum(occ) <= self.truncation:
                yield occ

    def flat_index(self, occ: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(occ), self.dims))


@dataclass(frozen=True)
class PhotonicState:
    """Pure photonic state: occupation vector -> amplitude."""

    register: ModeRegister
    amplitudes: Mapping[tuple, complex] = field(default_factory=dict)

    def __post_init__(self):
        amps = {}
        for occ, a in self.amplitudes.items():
            occ = tuple(int(n) for n in occ)
            if len(occ) != len(self.register.modes):
                raise ValueError(f"occupation {occ} does not match register")
            if sum(occ) > self.register.truncation or max(occ, default=0) > self.register.cutoff:
                raise ValueError(f"occupation {occ} exceeds truncation")
            if a != 0:
                amps[occ] = complex(a)
        if sum(abs(a) ** 2 for a in amps.values()) > 1 + 1e-12:
            raise ValueError("state norm exceeds one")
        object.__setattr__(self, "amplitudes", amps)

    def norm_squared(self) -> float:
        return float(sum(abs(a) ** 2 for a in self.amplitudes.values()))

    def ket(self) -> np.ndarray:
        vec = np.zeros(int(np.prod(self.register.dims)), dtype=complex)
        for occ, a in self.amplitudes.items():
            vec[self.register.flat_index(occ)] = a
        return vec

    def to_operator(self) -> DensityOperator:
        return DensityOperator.from_ket(self.ket(), self.register.modes, self.register.dims)

    def weight(self, total: int) -> float:
        """Probability of finding exactly ``total`` photons."""
        return float(sum(abs(a) ** 2 for occ, a in self.amplitudes.items() if sum(occ) == total))


@dataclass(frozen=True)
class SourceParams:
    """SPDC source: pair probability ``p`` and number of pairs kept (1 or 2)."""

    p: float
    order: int = 2

    def __post_init__(self):
        if not 0.0 <= self.p <= 0.5:
            raise ValueError(f"pair probability p must lie in [0, 0.5], got {self.p}")
        if self.order not in (1, 2):
            raise ValueError(f"order must be 1 or 2, got {self.order}")


def pair_register(loc_a: Hashable = "A", loc_b: Hashable = "B", order: int = 2) -> ModeRegister:
    return ModeRegister(
        modes=((loc_a, "R"), (loc_a, "L"), (loc_b, "R"), (loc_b, "L")),
        truncation=2 * order,
        cutoff=order,
    )


def _pair_excitation(n: int, cutoff: int) -> dict:
    """Unnormalised ``K^n |vac>`` with ``K = (a_R b_R + a_L b_L)/sqrt(2)`` (creation ops).

    Returned as {(aR, aL, bR, bL): amplitude}.  The creation-operator
    polynomial is expanded binomially and converted to Fock amplitudes.
    """
    out: dict = {}
    for k in range(n + 1):
        # k factors of a_R b_R, n-k of a_L b_L
        coeff = comb(n, k) / 2 ** (n / 2)
        occ = (k, n - k, k, n - k)
        if max(occ) > cutoff:
            continue
        fock = sqrt(factorial(k) * factorial(n - k)) ** 2
        out[occ] = out.get(occ, 0.0) + coeff * fock
    return out


def spdc_state(src: SourceParams, reg: ModeRegister | None = None) -> PhotonicState:
    """Polarisation-entangled pair source truncated at ``src.order`` pairs.

    The state is proportional to ``sum_n p^(n/2) K^n |vac>`` with the pair
    creation operator ``K = (a_R b_R + a_L b_L)/sqrt(2)``, so the one-pair
    term is ``sqrt(p)|Phi+>`` and the two-pair term carries the bosonic
    weight ``||K^2|vac>||^2 = 3``.
    """
    if reg is None:
        reg = pair_register(order=src.order)
    if len(reg.modes) != 4:
        raise ValueError("spdc_state needs exactly four modes (two locations x {R, L})")
    locs = [reg.modes[0][0], reg.modes[2][0]]
    expected = ((locs[0], "R"), (locs[0], "L"), (locs[1], "R"), (locs[1], "L"))
    if reg.modes != expected or locs[0] == locs[1]:
        raise ValueError(f"register modes must be ordered as {expected}")
    if reg.cutoff < src.order or reg.truncation < 2 * src.order:
        raise ValueError("register truncation too small for the requested source order")

    amps: dict = {}
    for n in range(src.order + 1):
        for occ, a in _pair_excitation(n, reg.cutoff).items():
            amps[occ] = amps.get(occ, 0.0) + src.p ** (n / 2) * a
    norm = sqrt(sum(abs(a) ** 2 for a in amps.values()))
    return PhotonicState(reg, {occ: a / norm for occ, a in amps.items()})


def sector_states(order: int, reg: ModeRegister | None = None) -> list:
    """Normalised n-pair states ``K^n|vac>/||.||`` for n = 0..order, plus their
    unnormalised weights ``||K^n|vac>||^2``."""
    reg = reg or pair_register(order=order)
    out = []
    for n in range(order + 1):
        amps = _pair_excitation(n, reg.cutoff)
        w = sum(abs(a) ** 2 for a in amps.values())
        out.append((w, PhotonicState(reg, {o: a / sqrt(w) for o, a in amps.items()})))
    return out


def sector_weights(p: float, order: int) -> np.ndarray:
    """Probabilities of 0..order pairs in :func:`spdc_state`."""
    raw = np.array([p ** n * w for n, (w, _) in enumerate(sector_states(order))])
    return raw / raw.sum()


# -- channels -------------------------------------------------------------

def _check_eta(eta: float, name: str = "eta") -> None:
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {eta}")


def attenuation_kraus(eta: float, cutoff: int) -> list:
    """Kraus operators of a pure-loss beamsplitter of transmissivity ``eta``,
    one per number of lost photons."""
    d = cutoff + 1
    ops = []
    for k in range(d):
        a = np.zeros((d, d), dtype=complex)
        for n in range(k, d):
            a[n - k, n] = sqrt(comb(n, k) * eta ** (n - k) * (1 - eta) ** k)
        ops.append(a)
    return ops


def loss_channel(rho: DensityOperator, modes: Iterable[Hashable], eta: float) -> DensityOperator:
    """Send each listed mode through a beamsplitter of transmissivity ``eta``
    and discard the reflected port."""
    _check_eta(eta)
    for m in modes:
        if eta == 1.0:
            rho.index(m)
            continue
        rho = rho.apply_kraus(attenuation_kraus(eta, rho.local_dim(m) - 1), [m])
    return rho


def fock_transform(u: np.ndarray, cutoff: int) -> np.ndarray:
    """Fock-space matrix of a two-mode passive transformation.

    ``u[j, k]`` is the amplitude of output mode ``j`` in input mode ``k``, i.e.
    ``a_k^dag -> sum_j u[j, k] a_j^dag``.  Accepts a stack ``(..., 2, 2)``.
    Occupations with more than ``cutoff`` photons in total cannot be
    represented after mixing and are mapped by the identity.
    """
    u = np.asarray(u, dtype=complex)
    batch = u.shape[:-2]
    d = cutoff + 1
    out = np.zeros(batch + (d * d, d * d), dtype=complex)
    fact = np.array([sqrt(factorial(i)) for i in range(d)])
    for n1 in range(d):
        for n2 in range(d):
            col = n1 * d + n2
            if n1 + n2 > cutoff:
                out[..., col, col] = 1.0
                continue
            poly = np.zeros(batch + (d, d), dtype=complex)
            poly[..., 0, 0] = 1.0
            for k, count in ((0, n1), (1, n2)):
                for _ in range(count):
                    nxt = np.zeros_like(poly)
                    nxt[..., 1:, :] += u[..., 0, k, None, None] * poly[..., :-1, :]
                    nxt[..., :, 1:] += u[..., 1, k, None, None] * poly[..., :, :-1]
                    poly = nxt
            amp = poly * fact[:, None] * fact[None, :] / (fact[n1] * fact[n2])
            out[..., :, col] = amp.reshape(batch + (d * d,))
    return out


def _location_pair(rho: DensityOperator, modes: Iterable[Hashable], pols: tuple) -> tuple:
    modes = [tuple(m) for m in modes]
    locs = {m[0] for m in modes}
    if len(modes) != 2 or len(locs) != 1:
        raise ValueError(f"expected one (R, L) pair at a single location, got {modes}")
    loc = locs.pop()
    pair = ((loc, pols[0]), (loc, pols[1]))
    if set(pair) != set(modes):
        raise ValueError(f"modes {modes} are not a {pols} pair")
    for m in pair:
        rho.index(m)
    return pair


def to_linear_basis(rho: DensityOperator, modes: Iterable[Hashable]) -> DensityOperator:
    """Rewrite the ``(loc, R), (loc, L)`` pair as ``(loc, H), (loc, V)``."""
    pair = _location_pair(rho, modes, CIRCULAR)
    d = rho.local_dim(pair[0])
    if rho.local_dim(pair[1]) != d:
        raise ValueError("paired modes need equal cutoffs")
    _check_pair_population(rho, pair, d - 1)
    u = fock_transform(HV_IN_RL.conj().T, d - 1)
    loc = pair[0][0]
    return rho.apply(u, pair).relabel({pair[0]: (loc, "H"), pair[1]: (loc, "V")})


def to_circular_basis(rho: DensityOperator, modes: Iterable[Hashable]) -> DensityOperator:
    """Inverse of :func:`to_linear_basis`."""
    pair = _location_pair(rho, modes, LINEAR)
    d = rho.local_dim(pair[0])
    _check_pair_population(rho, pair, d - 1)
    u = fock_transform(HV_IN_RL, d - 1)
    loc = pair[0][0]
    return rho.apply(u, pair).relabel({pair[0]: (loc, "R"), pair[1]: (loc, "L")})


def _check_pair_population(rho: DensityOperator, pair: tuple, cutoff: int, tol: float = 1e-12) -> None:
    reduced = rho.partial_trace(pair).reordered(pair)
    diag = np.real(np.diag(reduced.data)).reshape(cutoff + 1, cutoff + 1)
    n1, n2 = np.indices(diag.shape)
    if np.sum(np.abs(diag[n1 + n2 > cutoff])) > tol:
        raise ValueError(f"population above cutoff {cutoff} at {pair}; raise the mode cutoff")


# -- detection ------------------------------------------------------------

def click_weights(eta: float, cutoff: int) -> np.ndarray:
    """Threshold-detector click probability for 0..cutoff photons."""
    n = np.arange(cutoff + 1)
    return 1.0 - (1.0 - eta) ** n


def detect_branches(rho: DensityOperator, mode: Hashable, eta: float) -> tuple:
    """Unnormalised (click, no-click) operators with the detected mode removed."""
    _check_eta(eta)
    d = rho.local_dim(mode)
    keep = [lab for lab in rho.labels if lab != mode]
    w_click = click_weights(eta, d - 1)
    click = rho.apply(np.diag(w_click), [mode], right=np.eye(d)).partial_trace(keep)
    noclick = rho.apply(np.diag(1.0 - w_click), [mode], right=np.eye(d)).partial_trace(keep)
    return click, noclick


def threshold_detect(rho: DensityOperator, mode: Hashable, eta: float) -> dict:
    """Non-number-resolving detection of ``mode`` with efficiency ``eta``.

    Returns ``{"click": (prob, state), "noclick": (prob, state)}``; states are
    renormalised (``None`` for a zero-probability branch) and no longer carry
    the detected mode.
    """
    tr = rho.trace()
    click, noclick = detect_branches(rho, mode, eta)
    out = {}
    for name, op in (("click", click), ("noclick", noclick)):
        prob = op.trace() / tr if tr > 0 else 0.0
        out[name] = (prob, op.normalized() if op.trace() > 0 else None)
    return out
