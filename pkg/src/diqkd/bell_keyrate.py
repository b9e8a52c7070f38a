"""CHSH value, bit-error rate, no-click ratio and the collective-attack rate.

Two routes to the Bell value are provided:

* :func:`chsh_horodecki` -- closed form for a two-qubit state from its
  correlation matrix ``T``.
* :func:`chsh_povm` -- numerical optimisation when Alice measures a
  truncated photonic polarisation state with inefficient threshold
  detectors and Bob reads out a spin.  Bob's correlators are linear in his
  Bloch vector, so his optimum is closed form; Alice's directions are found
  by a sphere grid followed by Nelder-Mead refinement.

Alice's polarisation measurement along Bloch direction ``a`` is a function
of the two-mode Schwinger spin ``a.J`` only: ``n`` photons split as
``n+ = n/2 + m`` and ``n- = n/2 - m`` between the two detectors, ``m`` being
the ``a.J`` eigenvalue.  Expectation values are therefore polynomials of
degree ``<= n`` in ``a`` and are evaluated from precomputed moment tensors.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import log2, sqrt
from typing import Hashable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .numkernel import PAULIS, DensityOperator, singvals3
from .photonics import fock_transform

TSIRELSON = 2.0 * sqrt(2.0)
NOCLICK_MODES = ("assign_plus", "discard")


# -- two-qubit closed forms ----------------------------------------------

@dataclass(frozen=True)
class TwoQubitState:
    """Normalised two-qubit density operator over labels (A, B)."""

    rho: DensityOperator

    def __post_init__(self):
        if self.rho.dims != (2, 2):
            raise ValueError(f"expected a two-qubit operator, got dims {self.rho.dims}")
        if abs(self.rho.trace() - 1.0) > 1e-10:
            raise ValueError(f"trace {self.rho.trace()} is not 1")
        if not self.rho.is_hermitian(1e-10):
            raise ValueError("operator is not Hermitian")
        if self.rho.min_eigenvalue() < -1e-10:
            raise ValueError("operator is not positive semidefinite")

    @classmethod
    def from_matrix(cls, m: np.ndarray, labels=("A", "B")) -> "TwoQubitState":
        return cls(DensityOperator(m, labels, (2, 2)))

    def _pauli_expect(self, i: int, j: int) -> float:
        return float(np.real(np.trace(self.rho.data @ np.kron(PAULIS[i], PAULIS[j]))))

    @property
    def bloch_a(self) -> np.ndarray:
        return np.array([self._pauli_expect(i, 0) for i in (1, 2, 3)])

    @property
    def bloch_b(self) -> np.ndarray:
        return np.array([self._pauli_expect(0, j) for j in (1, 2, 3)])


def correlation_matrix(s: TwoQubitState | np.ndarray) -> np.ndarray:
    """``T_ij = Tr[rho sigma_i (x) sigma_j]`` for i, j in x, y, z."""
    rho = s.rho.data if isinstance(s, TwoQubitState) else np.asarray(s)
    t = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            t[i, j] = np.real(np.trace(rho @ np.kron(PAULIS[i + 1], PAULIS[j + 1])))
    return t


def chsh_horodecki(t: np.ndarray) -> float:
    """Maximal CHSH value ``2 sqrt(u1 + u2)`` from the two largest
    eigenvalues of ``T^T T``."""
    s = singvals3(t)
    return 2.0 * sqrt(s[0] ** 2 + s[1] ** 2)


def qber_min(t: np.ndarray) -> float:
    """Smallest bit-error rate over measurement directions, ``(1 - s1)/2``."""
    return (1.0 - singvals3(t)[0]) / 2.0


# -- entropy and rate ------------------------------------------------------

def binary_entropy(x: float) -> float:
    if not -1e-12 <= x <= 1 + 1e-12:
        raise ValueError(f"binary entropy argument must lie in [0, 1], got {x}")
    x = min(max(x, 0.0), 1.0)
    if x in (0.0, 1.0):
        return 0.0
    return -x * log2(x) - (1 - x) * log2(1 - x)


def chi(s: float) -> float:
    """Eve's Holevo bound from the CHSH value; 1 at or below the local bound."""
    if s <= 2.0:
        return 1.0
    s = min(s, TSIRELSON)
    return binary_entropy((1 + sqrt(max((s / 2) ** 2 - 1, 0.0))) / 2)


def keyrate_factor(mu: float, q: float, s: float) -> float:
    """``1 - h(Q) - [(1 - mu) chi((S - 4 mu)/(1 - mu)) + mu]``; may be negative."""
    if mu < 0:
        raise ValueError(f"mu must be non-negative, got {mu}")
    if mu >= 1:
        raise ValueError(f"mu must be below 1, got {mu}")
    if not 0 <= q <= 1:
        raise ValueError(f"Q must lie in [0, 1], got {q}")
    if not 0 <= s <= TSIRELSON + 1e-9:
        raise ValueError(f"S must lie in [0, 2 sqrt 2], got {s}")
    s_eff = (s - 4 * mu) / (1 - mu)
    return 1.0 - binary_entropy(q) - ((1 - mu) * chi(s_eff) + mu)


@dataclass(frozen=True)
class KeyRateResult:
    """Bell statistics and key yield of one protocol configuration.

    ``key_per_use`` is secret bits per source use; ``success_probability``
    is the probability per source use that a round enters the key (herald
    success, times the definite fraction when no-clicks are discarded).
    """

    S: float
    Q: float
    mu: float
    R: float
    p_herald: float
    key_per_use: float
    key_per_second: float
    p: float = float("nan")
    rep_rate: float = 0.0
    success_probability: float = float("nan")
    variant: str = ""
    strategy: str = ""
    noclick_mode: str = "assign_plus"
    diagnostic: str = ""

    @classmethod
    def assemble(cls, S, Q, mu, R, p_herald, rep_rate, success_probability=None, **extra):
        success = p_herald if success_probability is None else success_probability
        per_use = success * max(R, 0.0) if np.isfinite(R) else 0.0
        return cls(
            S=S, Q=Q, mu=mu, R=R, p_herald=p_herald, key_per_use=per_use,
            key_per_second=rep_rate * per_use, rep_rate=rep_rate,
            success_probability=success, **extra,
        )

    @classmethod
    def zero(cls, diagnostic: str, rep_rate: float = 0.0, **extra):
        nan = float("nan")
        return cls(S=nan, Q=nan, mu=nan, R=nan, p_herald=0.0, key_per_use=0.0,
                   key_per_second=0.0, rep_rate=rep_rate, success_probability=0.0,
                   diagnostic=diagnostic, **extra)


# -- photonic measurement on Alice's side -------------------------------

def schwinger_ops(cutoff: int) -> tuple:
    """``(N, Jx, Jy, Jz)`` on two modes (R, L) with per-mode cutoff."""
    d = cutoff + 1
    a = np.diag(np.sqrt(np.arange(1, d)), 1).astype(complex)
    eye = np.eye(d)
    a_r, a_l = np.kron(a, eye), np.kron(eye, a)
    ad_r, ad_l = a_r.conj().T, a_l.conj().T
    jx = (ad_r @ a_l + ad_l @ a_r) / 2
    jy = (ad_r @ a_l - ad_l @ a_r) / 2j
    jz = (ad_r @ a_r - ad_l @ a_l) / 2
    n = ad_r @ a_r + ad_l @ a_l
    return n, jx, jy, jz


def bloch_to_polarisation_unitary(direction: np.ndarray) -> np.ndarray:
    """``u`` for :func:`fock_transform` mapping (R, L) onto (+a, -a) modes.

    ``|+a> = cos(theta/2)|R> + e^{i phi} sin(theta/2)|L>`` with R at the
    north pole.  Accepts a stack of directions ``(..., 3)``.
    """
    a = np.asarray(direction, dtype=float)
    a = a / np.linalg.norm(a, axis=-1, keepdims=True)
    theta = np.arccos(np.clip(a[..., 2], -1, 1))
    phi = np.arctan2(a[..., 1], a[..., 0])
    c, s, e = np.cos(theta / 2), np.sin(theta / 2), np.exp(1j * phi)
    w = np.empty(a.shape[:-1] + (2, 2), dtype=complex)
    w[..., 0, 0], w[..., 1, 0] = c, e * s
    w[..., 0, 1], w[..., 1, 1] = -np.conj(e) * s, c
    return np.conj(np.swapaxes(w, -1, -2))


@dataclass(frozen=True)
class AlicePOVM:
    """Two-detector polarisation measurement with threshold detectors.

    Outcomes: ``+`` (the +a detector clicks; double clicks also count as
    ``+``), ``-`` (only the -a detector clicks) and no-click.
    """

    eta: float
    cutoff: int = 2

    def __post_init__(self):
        if not 0 <= self.eta <= 1:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")

    def outcome_weights(self, n_plus, n_minus) -> dict:
        q = 1.0 - self.eta
        n_plus, n_minus = np.asarray(n_plus), np.asarray(n_minus)
        plus = 1 - q**n_plus
        minus = q**n_plus * (1 - q**n_minus)
        none = q ** (n_plus + n_minus)
        return {"+": plus, "-": minus, "0": none}

    def elements(self, direction: np.ndarray) -> dict:
        """Explicit POVM matrices on the (R, L) Fock space for one direction."""
        d = self.cutoff + 1
        u = fock_transform(bloch_to_polarisation_unitary(direction), self.cutoff)
        n_plus, n_minus = np.divmod(np.arange(d * d), d)
        out = {}
        for key, w in self.outcome_weights(n_plus, n_minus).items():
            out[key] = u.conj().T @ np.diag(w.astype(complex)) @ u
        return out


# observable weight functions of (n+, n-), named by what they feed
def _obs_weights(povm: AlicePOVM, kind: str, n_plus, n_minus):
    w = povm.outcome_weights(n_plus, n_minus)
    if kind == "definite_sign":
        return w["+"] - w["-"]
    if kind == "assigned_sign":
        return w["+"] + w["0"] - w["-"]
    if kind == "definite":
        return w["+"] + w["-"]
    if kind == "none":
        return w["0"]
    raise ValueError(kind)


class AliceStatistics:
    """Correlations between Alice's photonic outcomes and Bob's spin.

    Built from a (normalised) operator over Alice's two modes and Bob's
    spin.  ``bob_vector(directions, kind)`` returns, for each Alice
    direction, the vector ``Tr[rho O_a (x) sigma_k]`` (k = x, y, z) and the
    scalar ``Tr[rho O_a (x) 1]``.
    """

    def __init__(self, rho: DensityOperator, alice_modes: Sequence[Hashable], bob_spin: Hashable,
                 povm: AlicePOVM):
        alice_modes = tuple(alice_modes)
        rho = rho.partial_trace(alice_modes + (bob_spin,)).reordered(alice_modes + (bob_spin,))
        dims = rho.dims
        if dims[0] != dims[1] or dims[2] != 2:
            raise ValueError(f"unexpected subsystem dims {dims}")
        self.cutoff = dims[0] - 1
        if povm.cutoff != self.cutoff:
            povm = AlicePOVM(povm.eta, self.cutoff)
        self.povm = povm
        tr = rho.trace()
        if tr <= 0:
            raise ValueError("operator has zero trace")
        self.rho = rho.scaled(1.0 / tr)
        da = dims[0] * dims[1]
        t = self.rho.data.reshape(da, 2, da, 2)
        # Alice-side operators paired with sigma_k on Bob
        self.m = np.stack([np.einsum("ajbk,kj->ab", t, s) for s in PAULIS])
        self._moments = self._build_moments()
        self._poly_cache: dict = {}

    def _build_moments(self):
        c = self.cutoff
        n_op, jx, jy, jz = schwinger_ops(c)
        js = np.stack([jx, jy, jz])
        n_diag = np.real(np.diag(n_op)).round().astype(int)
        moments = {}
        for n in range(c + 1):
            proj = np.diag((n_diag == n).astype(complex))
            # G[d] has shape (4, 3, ..., 3): Tr[M_k P_n J_i1 ... J_id]
            ops = proj[None]  # products P_n J_i1..J_id, flattened over i's
            per_degree = []
            for deg in range(n + 1):
                if deg > 0:
                    ops = np.einsum("xab,ibc->xiac", ops, js).reshape(-1, *proj.shape)
                g = np.einsum("kba,xab->kx", self.m, ops)
                per_degree.append(np.real(g).reshape((4,) + (3,) * deg))
            moments[n] = per_degree
        return moments

    def _poly_coeffs(self, kind: str, n: int) -> np.ndarray:
        ms = np.arange(n + 1) - n / 2
        vals = _obs_weights(self.povm, kind, n / 2 + ms, n / 2 - ms).astype(float)
        if n == 0:
            return np.array([vals[0]])
        # power-basis coefficients c_0..c_n with f(m) = sum c_d m^d
        return np.linalg.solve(np.vander(ms, n + 1, increasing=True), vals)

    def polynomial(self, kind: str) -> list:
        """Tensors ``P[d]`` of shape (4, 3, .., 3) with
        ``Tr[rho O_a (x) sigma_k] = sum_d P[d][k] . a^(x)d``."""
        if kind not in self._poly_cache:
            terms: list = []
            for n, per_degree in self._moments.items():
                coeffs = self._poly_coeffs(kind, n)
                for deg, g in enumerate(per_degree):
                    if deg == len(terms):
                        terms.append(np.zeros_like(g))
                    terms[deg] = terms[deg] + coeffs[deg] * g
            self._poly_cache[kind] = terms
        return self._poly_cache[kind]

    def bob_vector(self, directions: np.ndarray, kind: str) -> tuple:
        a = np.atleast_2d(np.asarray(directions, dtype=float))
        a = a / np.linalg.norm(a, axis=1, keepdims=True)
        poly = self.polynomial(kind)
        out = np.tile(poly[0], (a.shape[0], 1))
        if len(poly) > 1:
            out += a @ poly[1].T
        if len(poly) > 2:
            out += np.einsum("kij,ni,nj->nk", poly[2], a, a, optimize=False)
        for deg in range(3, len(poly)):
            term = np.broadcast_to(poly[deg], (a.shape[0],) + poly[deg].shape)
            for _ in range(deg):
                term = np.einsum("nk...i,ni->nk...", term, a)
            out += term
        return out[:, 1:], out[:, 0]

    def definite_probability(self) -> float:
        _, p = self.bob_vector(np.array([[0.0, 0.0, 1.0]]), "definite")
        return float(p[0])

    def noclick_probability(self) -> float:
        _, p = self.bob_vector(np.array([[0.0, 0.0, 1.0]]), "none")
        return float(p[0])


def sphere_grid(n_theta: int = 12, n_phi: int = 24) -> np.ndarray:
    """Unit vectors on a (theta, phi) grid with both poles added."""
    th = (np.arange(n_theta) + 0.5) * np.pi / n_theta
    ph = np.arange(n_phi) * 2 * np.pi / n_phi
    t, p = np.meshgrid(th, ph, indexing="ij")
    pts = np.stack([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)], axis=-1).reshape(-1, 3)
    return np.vstack([[0.0, 0.0, 1.0], pts, [0.0, 0.0, -1.0]])


def _simplex(x0: np.ndarray, step: float = 0.1) -> np.ndarray:
    """Nelder-Mead start simplex with equal steps along every axis.

    scipy's default barely moves zero coordinates, which stalls the search
    when a seed direction lies on a coordinate plane.
    """
    x0 = np.asarray(x0, dtype=float)
    return np.vstack([x0, x0 + step * np.eye(x0.size)])


def _first_argmax(values: np.ndarray, tol: float = 1e-12) -> int:
    best = np.max(values)
    return int(np.flatnonzero(values >= best - tol)[0])


@dataclass(frozen=True)
class ChshResult:
    S: float
    alice: tuple
    bob: tuple
    p_definite: float


def _chsh_from_vectors(w0: np.ndarray, w1: np.ndarray) -> np.ndarray:
    return np.linalg.norm(w0 + w1, axis=-1) + np.linalg.norm(w0 - w1, axis=-1)


def chsh_povm(rho: DensityOperator, alice_modes: Sequence[Hashable], bob_spin: Hashable,
              eta_d: float, grid: tuple = (12, 24), n_seeds: int = 2,
              stats: Optional[AliceStatistics] = None) -> ChshResult:
    """CHSH value on Alice's definite-outcome events, maximised over settings.

    Correlators are conditioned on Alice obtaining a definite outcome.  Bob's
    optimal directions are ``(W0 + W1)/|.|`` and ``(W0 - W1)/|.|`` for
    Alice's conditional correlation vectors ``W0, W1``.
    """
    st = stats or AliceStatistics(rho, alice_modes, bob_spin, AlicePOVM(eta_d))
    p_def = st.definite_probability()
    if p_def <= 1e-300:
        raise ValueError("Alice never obtains a definite outcome")

    def vectors(dirs):
        w, _ = st.bob_vector(dirs, "definite_sign")
        return w / p_def

    pts = sphere_grid(*grid)
    w = vectors(pts)
    table = _chsh_from_vectors(w[:, None, :], w[None, :, :])
    flat = table.ravel()
    order = np.argsort(-flat, kind="stable")
    seeds = []
    for idx in order:
        i, j = divmod(int(idx), len(pts))
        if all(np.linalg.norm(pts[i] - s[0]) + np.linalg.norm(pts[j] - s[1]) > 0.5 for s in seeds):
            seeds.append((pts[i], pts[j]))
        if len(seeds) >= n_seeds:
            break

    def objective(x):
        ww = vectors(x.reshape(2, 3))
        return -float(_chsh_from_vectors(ww[0], ww[1]))

    best_val, best_x = -np.inf, None
    for a0, a1 in seeds:
        x0 = np.concatenate([a0, a1])
        res = minimize(objective, x0, method="Nelder-Mead",
                       options={"initial_simplex": _simplex(x0), "xatol": 1e-8, "fatol": 1e-14, "maxiter": 20000, "maxfev": 20000})
        if -res.fun > best_val + 1e-12:
            best_val, best_x = -res.fun, res.x
    a = best_x.reshape(2, 3)
    a = a / np.linalg.norm(a, axis=1, keepdims=True)
    ww = vectors(a)
    b0, b1 = ww[0] + ww[1], ww[0] - ww[1]
    b0 = b0 / (np.linalg.norm(b0) or 1.0)
    b1 = b1 / (np.linalg.norm(b1) or 1.0)
    return ChshResult(S=float(best_val), alice=(a[0], a[1]), bob=(b0, b1), p_definite=p_def)


def max_correlation(stats: AliceStatistics, kind: str, normalise: float = 1.0,
                    grid: tuple = (12, 24)) -> tuple:
    """Maximise ``|Tr[rho O_a (x) b.sigma]| / normalise`` over directions."""
    pts = sphere_grid(*grid)
    w, _ = stats.bob_vector(pts, kind)
    vals = np.linalg.norm(w, axis=1) / normalise
    i0 = _first_argmax(vals)

    def objective(x):
        ww, _ = stats.bob_vector(x[None, :], kind)
        return -float(np.linalg.norm(ww[0])) / normalise

    res = minimize(objective, pts[i0], method="Nelder-Mead",
                   options={"initial_simplex": _simplex(pts[i0]), "xatol": 1e-8, "fatol": 1e-15, "maxiter": 10000})
    best = max(-res.fun, vals[i0])
    a = res.x / np.linalg.norm(res.x) if -res.fun >= vals[i0] else pts[i0]
    return float(best), a


def qber_povm(stats: AliceStatistics, noclick_mode: str = "assign_plus") -> float:
    """Minimal QBER with Alice's photonic measurement.

    ``assign_plus``: no-click rounds are kept with outcome ``+``.
    ``discard``: only Alice's definite rounds count.
    """
    if noclick_mode == "assign_plus":
        corr, _ = max_correlation(stats, "assigned_sign")
    elif noclick_mode == "discard":
        p_def = stats.definite_probability()
        if p_def <= 0:
            raise ValueError("Alice never obtains a definite outcome")
        corr, _ = max_correlation(stats, "definite_sign", normalise=p_def)
    else:
        raise ValueError(f"unknown noclick mode {noclick_mode!r}")
    return float(min(max((1.0 - corr) / 2.0, 0.0), 1.0))


def noclick_ratio(stats: AliceStatistics) -> float:
    """Indefinite-to-definite event ratio ``mu``."""
    p_def = stats.definite_probability()
    if p_def <= 0:
        return float("inf")
    return stats.noclick_probability() / p_def
