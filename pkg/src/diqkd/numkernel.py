"""Dense complex-matrix utilities and a labelled density-operator carrier.

Every state in the package is a :class:`DensityOperator`: a square complex
array together with an ordered tuple of subsystem labels and their local
dimensions.  Subsystems are addressed by label, never by position, so a
partial trace or a local channel cannot silently hit the wrong factor.

Operators may be sub-normalised; the trace of a conditional branch is its
probability.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np

HERMITIAN_TOL = 1e-12

SIGMA_0 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SIGMA_0, SIGMA_X, SIGMA_Y, SIGMA_Z)


class LabelError(KeyError):
    """Raised when a subsystem label is unknown or duplicated."""


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product of two matrices; dimensions multiply."""
    return np.kron(np.asarray(a), np.asarray(b))


def kron_all(mats: Iterable[np.ndarray]) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


def is_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= tol)


def singvals3(t: np.ndarray) -> np.ndarray:
    """Singular values of a real 3x3 matrix, in descending order."""
    t = np.asarray(t, dtype=float)
    if t.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {t.shape}")
    if not np.all(np.isfinite(t)):
        raise ValueError("matrix has non-finite entries")
    return np.linalg.svd(t, compute_uv=False)


@dataclass(frozen=True)
class DensityOperator:
    """A (possibly sub-normalised) operator on a labelled tensor-product space.

    Parameters
    ----------
    data : ndarray
        Square complex matrix of size ``prod(dims)``.  Factor ordering follows
        ``labels`` (first label is the most significant index).
    labels : tuple
        Unique hashable subsystem labels.
    dims : tuple of int
        Local dimension of each subsystem.
    """

    data: np.ndarray
    labels: tuple
    dims: tuple

    def __post_init__(self):
        labels = tuple(self.labels)
        dims = tuple(int(d) for d in self.dims)
        if len(labels) != len(dims):
            raise ValueError("labels and dims differ in length")
        if len(set(labels)) != len(labels):
            raise LabelError(f"duplicate labels in {labels}")
        if any(d < 1 for d in dims):
            raise ValueError(f"local dimensions must be positive, got {dims}")
        data = np.array(self.data, dtype=complex)
        total = int(np.prod(dims, dtype=np.int64)) if dims else 1
        if data.shape != (total, total):
            raise ValueError(f"data shape {data.shape} does not match dims {dims}")
        data.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "data", data)

    # -- construction -----------------------------------------------------
    @classmethod
    def from_ket(cls, ket: np.ndarray, labels: Sequence[Hashable], dims: Sequence[int]):
        ket = np.asarray(ket, dtype=complex).reshape(-1)
        return cls(np.outer(ket, ket.conj()), tuple(labels), tuple(dims))

    @classmethod
    def product(cls, *ops: "DensityOperator") -> "DensityOperator":
        data = kron_all(op.data for op in ops)
        labels = sum((op.labels for op in ops), ())
        dims = sum((op.dims for op in ops), ())
        return cls(data, labels, dims)

    # -- basic queries ----------------------------------------------------
    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def trace(self) -> float:
        return float(np.real(np.trace(self.data)))

    def index(self, label: Hashable) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LabelError(f"unknown subsystem label {label!r}; have {self.labels}") from None

    def local_dim(self, label: Hashable) -> int:
        return self.dims[self.index(label)]

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return is_hermitian(self.data, tol)

    def min_eigenvalue(self) -> float:
        herm = 0.5 * (self.data + self.data.conj().T)
        return float(np.linalg.eigvalsh(herm)[0])

    def normalized(self) -> "DensityOperator":
        tr = self.trace()
        if tr <= 0:
            raise ZeroDivisionError("cannot normalise an operator with zero trace")
        return self.scaled(1.0 / tr)

    def scaled(self, factor: float) -> "DensityOperator":
        return DensityOperator(self.data * factor, self.labels, self.dims)

    def __add__(self, other: "DensityOperator") -> "DensityOperator":
        other = other.reordered(self.labels)
        if other.dims != self.dims:
            raise ValueError("dimension mismatch in sum")
        return DensityOperator(self.data + other.data, self.labels, self.dims)

    # -- tensor plumbing --------------------------------------------------
    def _tensor(self) -> np.ndarray:
        return self.data.reshape(self.dims + self.dims)

    @classmethod
    def _from_tensor(cls, tensor: np.ndarray, labels: tuple, dims: tuple) -> "DensityOperator":
        total = int(np.prod(dims, dtype=np.int64)) if dims else 1
        return cls(tensor.reshape(total, total), labels, dims)

    def reordered(self, labels: Sequence[Hashable]) -> "DensityOperator":
        labels = tuple(labels)
        if labels == self.labels:
            return self
        if sorted(map(repr, labels)) != sorted(map(repr, self.labels)):
            raise LabelError(f"cannot reorder {self.labels} into {labels}")
        perm = [self.index(lab) for lab in labels]
        n = len(perm)
        t = self._tensor().transpose(perm + [p + n for p in perm])
        dims = tuple(self.dims[p] for p in perm)
        return self._from_tensor(t, labels, dims)

    def relabel(self, mapping: dict) -> "DensityOperator":
        labels = tuple(mapping.get(lab, lab) for lab in self.labels)
        return DensityOperator(self.data, labels, self.dims)

    def apply(self, left: np.ndarray, targets: Sequence[Hashable], right: np.ndarray | None = None):
        """Return ``L rho R`` with ``L`` and ``R`` acting on ``targets``.

        ``right`` defaults to ``left^dagger``, i.e. conjugation.
        """
        targets = tuple(targets)
        axes = [self.index(t) for t in targets]
        tdims = [self.dims[a] for a in axes]
        dloc = int(np.prod(tdims))
        left = np.asarray(left, dtype=complex)
        if left.shape != (dloc, dloc):
            raise ValueError(f"operator shape {left.shape} does not match targets {targets} ({dloc})")
        right = left.conj().T if right is None else np.asarray(right, dtype=complex)
        n = len(self.dims)
        k = len(axes)
        t = self._tensor()
        lt = left.reshape(tdims + tdims)
        rt = right.reshape(tdims + tdims)
        # contract left operator into the ket axes
        t = np.tensordot(lt, t, axes=(list(range(k, 2 * k)), axes))
        rest = [i for i in range(2 * n) if i not in axes]
        order = np.empty(2 * n, dtype=int)
        order[axes] = range(k)
        order[rest] = range(k, 2 * n)
        t = t.transpose(order)
        # contract right operator into the bra axes
        bra_axes = [a + n for a in axes]
        t = np.tensordot(t, rt, axes=(bra_axes, list(range(k))))
        rest = [i for i in range(2 * n) if i not in bra_axes]
        order = np.empty(2 * n, dtype=int)
        order[rest] = range(2 * n - k)
        order[bra_axes] = range(2 * n - k, 2 * n)
        t = t.transpose(order)
        return self._from_tensor(t, self.labels, self.dims)

    def apply_kraus(self, kraus: Iterable[np.ndarray], targets: Sequence[Hashable]) -> "DensityOperator":
        out = None
        for k in kraus:
            term = self.apply(k, targets)
            out = term if out is None else DensityOperator(out.data + term.data, out.labels, out.dims)
        if out is None:
            raise ValueError("empty Kraus list")
        return out

    def partial_trace(self, keep: Iterable[Hashable]) -> "DensityOperator":
        return partial_trace(self, keep)

    def expect(self, op: np.ndarray, targets: Sequence[Hashable]) -> complex:
        """``Tr[rho (op on targets)]``."""
        targets = tuple(targets)
        reduced = self.partial_trace(targets).reordered(targets)
        return complex(np.trace(reduced.data @ np.asarray(op)))

    def embed(self, op: np.ndarray, targets: Sequence[Hashable]) -> np.ndarray:
        """Full-space matrix of ``op`` acting on ``targets`` (identity elsewhere)."""
        ident = DensityOperator(np.eye(self.dim), self.labels, self.dims)
        return ident.apply(op, targets, right=np.eye(op.shape[0])).data


def partial_trace(rho: DensityOperator, keep: Iterable[Hashable]) -> DensityOperator:
    """Trace out every subsystem whose label is not in ``keep``.

    The remaining subsystems keep their original relative order.
    """
    keep = set(keep)
    for lab in keep:
        rho.index(lab)
    kept = [i for i, lab in enumerate(rho.labels) if lab in keep]
    traced = [i for i, lab in enumerate(rho.labels) if lab not in keep]
    if not traced:
        return rho
    n = len(rho.dims)
    t = rho._tensor()
    letters = [chr(ord("a") + i) for i in range(2 * n)]
    for i in traced:
        letters[i + n] = letters[i]
    out = [letters[i] for i in kept] + [letters[i + n] for i in kept]
    t = np.einsum("".join(letters) + "->" + "".join(out), t)
    labels = tuple(rho.labels[i] for i in kept)
    dims = tuple(rho.dims[i] for i in kept)
    return DensityOperator._from_tensor(t, labels, dims)
