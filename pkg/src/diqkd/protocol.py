"""End-to-end symmetric and asymmetric protocol pipelines.

Pipeline per source use::

    source -> channel loss -> cavity reflection -> H/V heralding
           -> sigma_z on V heralds -> spin depolarisation -> Bell analysis

Conditional operators are carried unnormalised, so the trace of a herald
branch is its probability per source use.

Everything upstream of the spin noise is linear in the source state and the
source is diagonal in the number of pairs once photons are traced or
detected, so the heralded operators are computed once per pair sector and
recombined for each pair probability ``p``.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from functools import lru_cache
from math import exp, log, sqrt
from typing import Optional

import numpy as np

from . import bell_keyrate as bk
from .cavity import SPIN_PLUS, CavityParams, spin_reflection
from .numkernel import DensityOperator
from .photonics import (
    detect_branches,
    loss_channel,
    pair_register,
    sector_states,
    sector_weights,
    to_linear_basis,
)
from .spin_noise import C_FIBER_KM_S, TimingParams, decoherence_time, depolarize, phase_correct

log_ = logging.getLogger(__name__)

VARIANTS = ("symmetric", "asymmetric")
STRATEGIES = ("communication_free", "adaptive")
STRATEGY_CHOICES = STRATEGIES + ("auto",)

ALICE_MODES = (("A", "R"), ("A", "L"))
BOB_MODES = (("B", "R"), ("B", "L"))
SPIN_A, SPIN_B = "spin_A", "spin_B"

P_MIN, P_MAX = 1e-6, 0.2
HERALD_FLOOR = 1e-300


@dataclass(frozen=True)
class ProtocolConfig:
    """Physical and operational parameters of one protocol run.

    Distances in km, times in seconds, rates in Hz.  ``p=None`` means the
    pair probability is optimised.
    """

    variant: str = "symmetric"
    strategy: str = "communication_free"
    cavity: CavityParams = CavityParams(6.0)
    p: Optional[float] = None
    order: int = 2
    L: float = 0.0
    L_att: float = 22.0
    eta_her: float = 1.0
    eta_d: float = 1.0
    t_m: float = 1e-5
    tau: float = 1e-3
    c_signal: float = C_FIBER_KM_S
    rep_rate: float = 1e8
    noclick_mode: str = "assign_plus"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.strategy not in STRATEGY_CHOICES:
            raise ValueError(f"strategy must be one of {STRATEGY_CHOICES}, got {self.strategy!r}")
        if self.noclick_mode not in bk.NOCLICK_MODES:
            raise ValueError(f"noclick_mode must be one of {bk.NOCLICK_MODES}")
        if self.L < 0:
            raise ValueError(f"L must be non-negative, got {self.L}")
        if not self.L_att > 0:
            raise ValueError(f"L_att must be positive, got {self.L_att}")
        for name in ("eta_her", "eta_d"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.p is not None and not 0 <= self.p <= 0.5:
            raise ValueError(f"p must lie in [0, 0.5], got {self.p}")
        if self.order not in (1, 2):
            raise ValueError(f"order must be 1 or 2, got {self.order}")
        if self.t_m < 0 or not self.tau > 0 or not self.c_signal > 0:
            raise ValueError("need t_m >= 0, tau > 0 and c_signal > 0")
        if self.rep_rate < 0:
            raise ValueError("rep_rate must be non-negative")

    @property
    def timing(self) -> TimingParams:
        # TimingParams wants t_m > 0; a zero readout time is the noiseless limit
        return TimingParams(t_m=self.t_m or 1e-300, tau=self.tau, L=self.L, c_signal=self.c_signal)

    @property
    def t_over_tau(self) -> float:
        return self.t_m / self.tau

    def replace(self, **changes) -> "ProtocolConfig":
        if "kappa_ratio" in changes:
            changes["cavity"] = CavityParams(changes.pop("kappa_ratio"))
        if "t_over_tau" in changes:
            changes["t_m"] = changes.pop("t_over_tau") * changes.get("tau", self.tau)
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class HeraldRecord:
    """One herald outcome: pattern, probability per source use and the
    unnormalised conditional operator after correction and noise."""

    pattern: str
    probability: float
    state: DensityOperator


def transmissivity(variant: str, L: float, L_att: float) -> float:
    """Channel survival probability of each travelling photon."""
    if L < 0:
        raise ValueError("L must be non-negative")
    if variant == "symmetric":
        return exp(-L / (2 * L_att))
    if variant == "asymmetric":
        return exp(-L / L_att)
    raise ValueError(f"unknown variant {variant!r}")


# -- heralding pipeline ---------------------------------------------------

def _spin_plus() -> DensityOperator:
    return DensityOperator.from_ket(SPIN_PLUS, ("s",), (2,))


def initial_operator(variant: str, photons: DensityOperator) -> DensityOperator:
    """Photonic operator tensored with the spins in ``(|up> + |down>)/sqrt 2``."""
    spins = [SPIN_B] if variant == "asymmetric" else [SPIN_A, SPIN_B]
    ops = [photons] + [_spin_plus().relabel({"s": s}) for s in spins]
    return DensityOperator.product(*ops)


def _herald_site(branches: dict, loc: str, eta_her: float) -> dict:
    """Split every branch by the H/V threshold detectors at ``loc``.

    A site heralds H (V) when only its H (V) detector clicks.
    """
    out = {}
    for pattern, rho in branches.items():
        rho = to_linear_basis(rho, [(loc, "R"), (loc, "L")])
        h_click, h_none = detect_branches(rho, (loc, "H"), eta_her)
        _, hv = detect_branches(h_click, (loc, "V"), eta_her)
        v_click, _ = detect_branches(h_none, (loc, "V"), eta_her)
        out[pattern + "H"] = hv
        out[pattern + "V"] = v_click
    return out


def herald_pipeline(rho0: DensityOperator, variant: str, cavity: CavityParams,
                    eta_t: float, eta_her: float) -> dict:
    """Loss, reflection and heralding; returns {pattern: unnormalised operator}.

    Symmetric: all photonic modes are consumed, leaving (spin_A, spin_B).
    Asymmetric: Alice's modes remain next to spin_B.
    """
    if variant == "symmetric":
        rho = loss_channel(rho0, ALICE_MODES + BOB_MODES, eta_t)
        rho = spin_reflection(rho, "A", SPIN_A, cavity)
        rho = spin_reflection(rho, "B", SPIN_B, cavity)
        branches = _herald_site({"": rho}, "A", eta_her)
        return _herald_site(branches, "B", eta_her)
    rho = loss_channel(rho0, BOB_MODES, eta_t)
    rho = spin_reflection(rho, "B", SPIN_B, cavity)
    return _herald_site({"": rho}, "B", eta_her)


@lru_cache(maxsize=4096)
def _sector_heralds(variant: str, kappa_ratio: float, eta_t: float, eta_her: float, order: int) -> tuple:
    """Heralded operators for each normalised n-pair input, n = 1..order."""
    cavity = CavityParams(kappa_ratio)
    reg = pair_register(order=order)
    sectors = []
    for n, (_, state) in enumerate(sector_states(order, reg)):
        if n == 0:
            continue  # no photons, no herald
        rho0 = initial_operator(variant, state.to_operator())
        sectors.append((n, herald_pipeline(rho0, variant, cavity, eta_t, eta_her)))
    return tuple(sectors)


def _combine_sectors(variant: str, kappa_ratio: float, eta_t: float, eta_her: float,
                     order: int, p: float) -> dict:
    weights = sector_weights(p, order)
    out: dict = {}
    for n, ops in _sector_heralds(variant, kappa_ratio, eta_t, eta_her, order):
        for pattern, op in ops.items():
            term = op.scaled(weights[n])
            out[pattern] = term if pattern not in out else out[pattern] + term
    return out


def raw_heralds(cfg: ProtocolConfig, p: Optional[float] = None) -> dict:
    """Unnormalised heralded operators (before correction and noise)."""
    eta_t = transmissivity(cfg.variant, cfg.L, cfg.L_att)
    return _combine_sectors(cfg.variant, cfg.cavity.kappa_ratio, eta_t, cfg.eta_her, cfg.order,
                            cfg.p if p is None else p)


def correct_and_decohere(pattern: str, rho: DensityOperator, variant: str, t_over_tau: float) -> DensityOperator:
    spins = [SPIN_B] if variant == "asymmetric" else [SPIN_A, SPIN_B]
    for herald, spin in zip(pattern, spins):
        if herald == "V":
            rho = phase_correct(rho, spin)
    for spin in spins:
        rho = depolarize(rho, spin, t_over_tau)
    return rho


def resolve_strategy(cfg: ProtocolConfig) -> str:
    if cfg.variant == "asymmetric":
        return "communication_free"
    if cfg.strategy == "auto":
        return select_strategy(cfg)
    return cfg.strategy


def herald_records(cfg: ProtocolConfig, strategy: Optional[str] = None) -> list:
    strategy = strategy or resolve_strategy(cfg)
    t_over_tau = decoherence_time(strategy, cfg.timing) / cfg.tau
    if cfg.t_m == 0 and strategy == "communication_free":
        t_over_tau = 0.0
    records = []
    for pattern, op in raw_heralds(cfg).items():
        state = correct_and_decohere(pattern, op, cfg.variant, t_over_tau)
        records.append(HeraldRecord(pattern, op.trace(), state))
    return records


# -- Bell analysis --------------------------------------------------------

def _two_qubit_stats(rho: DensityOperator) -> tuple:
    state = bk.TwoQubitState(rho.normalized().reordered((SPIN_A, SPIN_B)))
    t = bk.correlation_matrix(state)
    return bk.chsh_horodecki(t), bk.qber_min(t)


@lru_cache(maxsize=8192)
def _asymmetric_noiseless(kappa_ratio: float, eta_t: float, eta_her: float, eta_d: float,
                          order: int, p: float, noclick_mode: str) -> tuple:
    """(S, max correlation, mu, definite fraction) before spin noise.

    Depolarising Bob's spin for ``t`` multiplies every Bob correlator by
    ``exp(-t/tau)`` and leaves Alice's marginal alone, so S and the best
    correlation scale by that factor while mu is unchanged.
    """
    raw = _combine_sectors("asymmetric", kappa_ratio, eta_t, eta_her, order, p)
    mix = None
    for pattern, op in raw.items():
        op = correct_and_decohere(pattern, op, "asymmetric", 0.0)
        mix = op if mix is None else mix + op
    return asymmetric_bell_stats(mix, eta_d, noclick_mode)


def asymmetric_bell_stats(rho: DensityOperator, eta_d: float, noclick_mode: str) -> tuple:
    """(S on definite events, best correlation for Q, mu, definite fraction)."""
    stats = bk.AliceStatistics(rho, ALICE_MODES, SPIN_B, bk.AlicePOVM(eta_d))
    p_def = stats.definite_probability()
    if p_def <= 0:
        return 0.0, 0.0, float("inf"), 0.0
    chsh = bk.chsh_povm(rho, ALICE_MODES, SPIN_B, eta_d, stats=stats)
    q = bk.qber_povm(stats, noclick_mode)
    return chsh.S, 1.0 - 2.0 * q, bk.noclick_ratio(stats), p_def


def run_protocol(cfg: ProtocolConfig) -> bk.KeyRateResult:
    """Key rate of ``cfg`` at its fixed pair probability."""
    if cfg.p is None:
        raise ValueError("run_protocol needs a fixed p; use optimize_p for p='auto'")
    strategy = resolve_strategy(cfg)
    meta = dict(p=cfg.p, variant=cfg.variant, strategy=strategy, noclick_mode=cfg.noclick_mode)
    records = herald_records(cfg, strategy)
    p_her = sum(r.probability for r in records)
    if p_her < HERALD_FLOOR:
        return bk.KeyRateResult.zero("herald probability vanishes", cfg.rep_rate, **meta)

    if cfg.variant == "symmetric":
        live = [r for r in records if r.probability > 0]
        if strategy == "communication_free":
            mix = live[0].state
            for r in live[1:]:
                mix = mix + r.state
            s, q = _two_qubit_stats(mix)
            r_val = bk.keyrate_factor(0.0, q, s)
        else:
            s = q = r_val = 0.0
            for r in live:
                si, qi = _two_qubit_stats(r.state)
                w = r.probability / p_her
                s += w * si
                q += w * qi
                r_val += w * bk.keyrate_factor(0.0, qi, si)
        return bk.KeyRateResult.assemble(s, q, 0.0, r_val, p_her, cfg.rep_rate, **meta)

    eta_t = transmissivity(cfg.variant, cfg.L, cfg.L_att)
    s0, corr0, mu, p_def = _asymmetric_noiseless(
        cfg.cavity.kappa_ratio, eta_t, cfg.eta_her, cfg.eta_d, cfg.order, cfg.p, cfg.noclick_mode
    )
    v = exp(-decoherence_time("communication_free", cfg.timing) / cfg.tau) if cfg.t_m > 0 else 1.0
    s, q = v * s0, (1.0 - v * corr0) / 2.0
    success = p_her * p_def if cfg.noclick_mode == "discard" else p_her
    if not mu < 1:
        return bk.KeyRateResult(
            S=s, Q=q, mu=mu, R=float("nan"), p_herald=p_her, key_per_use=0.0, key_per_second=0.0,
            rep_rate=cfg.rep_rate, success_probability=success,
            diagnostic="no-click ratio mu >= 1, rate bound undefined", **meta,
        )
    r_val = bk.keyrate_factor(mu, q, min(s, bk.TSIRELSON))
    return bk.KeyRateResult.assemble(s, q, mu, r_val, p_her, cfg.rep_rate, success, **meta)


# -- optimisation ---------------------------------------------------------

INV_PHI = (sqrt(5) - 1) / 2


def _golden_max(f, lo: float, hi: float, rel_tol: float = 1e-3) -> tuple:
    """Golden-section maximisation of ``f`` over ``log p`` in ``[lo, hi]``."""
    a, b = log(lo), log(hi)
    c, d = b - INV_PHI * (b - a), a + INV_PHI * (b - a)
    fc, fd = f(exp(c)), f(exp(d))
    while b - a > rel_tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(exp(c))
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(exp(d))
    return (exp(c), fc) if fc >= fd else (exp(d), fd)


def p_grid(n: int = 41) -> np.ndarray:
    return np.logspace(np.log10(P_MIN), np.log10(P_MAX), n)


def optimize_p(cfg: ProtocolConfig, n_grid: int = 41) -> tuple:
    """Pair probability maximising ``key_per_use`` over ``[1e-6, 0.2]``.

    Logarithmic grid followed by golden-section refinement between the
    neighbours of the best grid point.  With ``strategy='auto'`` both
    strategies are optimised and the better one is returned.
    """
    if cfg.strategy == "auto" and cfg.variant == "symmetric":
        return _best_strategy(optimize_p(cfg.replace(strategy=s), n_grid) for s in STRATEGIES)
    cache: dict = {}

    def result(p):
        if p not in cache:
            cache[p] = run_protocol(cfg.replace(p=float(p)))
        return cache[p]

    grid = p_grid(n_grid)
    values = np.array([result(p).key_per_use for p in grid])
    best = float(np.max(values))
    if best <= 0:
        res = dataclasses.replace(result(grid[0]), diagnostic="no positive key rate for p in [1e-6, 0.2]")
        return float(grid[0]), res
    i = int(np.flatnonzero(values >= best - 1e-12 * best)[0])
    if 0 < i < len(grid) - 1:
        p_ref, v_ref = _golden_max(lambda p: result(p).key_per_use, grid[i - 1], grid[i + 1])
        if v_ref > best:
            return float(p_ref), result(p_ref)
    return float(grid[i]), result(grid[i])


def _best_strategy(candidates) -> tuple:
    """Pick the ``(p, result)`` with the larger key per use; the first
    candidate (communication_free) wins ties."""
    best = None
    for cand in candidates:
        if best is None or cand[1].key_per_use > best[1].key_per_use:
            best = cand
    return best


def evaluate(cfg: ProtocolConfig) -> tuple:
    """``(p, result)``; optimises p when ``cfg.p`` is None."""
    if cfg.p is None:
        return optimize_p(cfg)
    if cfg.strategy == "auto" and cfg.variant == "symmetric":
        return _best_strategy((cfg.p, run_protocol(cfg.replace(strategy=s))) for s in STRATEGIES)
    return cfg.p, run_protocol(cfg)


def select_strategy(cfg: ProtocolConfig) -> str:
    """Strategy with the larger key per use; ties go to communication_free."""
    if cfg.variant == "asymmetric":
        return "communication_free"
    return evaluate(cfg.replace(strategy="auto"))[1].strategy


# -- positivity and the decoherence boundary -------------------------------

def has_positive_rate(cfg: ProtocolConfig, n_grid: int = 41) -> bool:
    """Whether some pair probability gives ``key_per_use > 0``.

    Equivalent to a positive rate at the optimised p, but stops at the first
    positive grid point (scanning from small p, where rates are usually
    best protected against multi-pair noise).
    """
    if cfg.strategy == "auto" and cfg.variant == "symmetric":
        return any(has_positive_rate(cfg.replace(strategy=s), n_grid) for s in STRATEGIES)
    ps = [cfg.p] if cfg.p is not None else p_grid(n_grid)
    return any(run_protocol(cfg.replace(p=float(p))).key_per_use > 0 for p in ps)


T_BOUNDARY_RANGE = (1e-6, 10.0)


def decoherence_boundary(cfg: ProtocolConfig, lo: float = T_BOUNDARY_RANGE[0], hi: float = T_BOUNDARY_RANGE[1],
                         rel_tol: float = 1e-3) -> Optional[float]:
    """Largest ``t_m/tau`` in ``[lo, hi]`` with a positive key rate.

    Bisection in ``log(t/tau)`` to ``rel_tol``; returns ``None`` if even
    ``lo`` gives no key.
    """
    def positive(x):
        return has_positive_rate(cfg.replace(t_over_tau=x))

    if not positive(lo):
        return None
    if positive(hi):
        return hi
    while hi / lo - 1 > rel_tol:
        mid = sqrt(lo * hi)
        if positive(mid):
            lo = mid
        else:
            hi = mid
    return lo
