"""Liouville-space algebra: vectorization, Lindblad generators, adjoints.

Vectorization is column stacking, ``vec(X)[j*d + i] = X[i, j]``, so that
``vec(A X B) = (B.T kron A) vec(X)``. Superoperators carry this convention
as a tag and refuse to combine with anything else.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .model import JumpChannel, UnitSystem

__all__ = [
    "COLUMN_STACKING",
    "SuperOperator",
    "vectorize",
    "devectorize",
    "hs_inner",
    "hamiltonian_superop",
    "dissipator",
    "liouvillian",
    "adjoint",
    "hermitian_basis",
    "RealForm",
    "real_form",
    "density_defects",
    "check_density",
]

COLUMN_STACKING = "column-stacking"


def vectorize(op: np.ndarray) -> np.ndarray:
    op = np.asarray(op)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise ValueError(f"expected a square operator, got shape {op.shape}")
    return op.reshape(-1, order="F")


def devectorize(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec)
    d = int(round(np.sqrt(vec.size)))
    if d * d != vec.size:
        raise ValueError(f"vector of length {vec.size} is not a vectorized square matrix")
    return vec.reshape(d, d, order="F")


def hs_inner(a: np.ndarray, b: np.ndarray) -> complex:
    """Hilbert-Schmidt scalar product ``Tr[a^dagger b]``."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return complex(np.vdot(a, b))


@dataclass(frozen=True)
class SuperOperator:
    """Linear map on ``d x d`` operators stored as a ``d**2 x d**2`` matrix."""

    matrix: np.ndarray
    convention: str = COLUMN_STACKING
    dim: int = field(init=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"superoperator must be square, got {m.shape}")
        d = int(round(np.sqrt(m.shape[0])))
        if d * d != m.shape[0]:
            raise ValueError(f"size {m.shape[0]} is not a square of a Hilbert dimension")
        if self.convention != COLUMN_STACKING:
            raise ValueError(f"unsupported vectorization convention {self.convention!r}")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "dim", d)

    def _check(self, other: "SuperOperator"):
        if not isinstance(other, SuperOperator):
            return NotImplemented
        if other.convention != self.convention:
            raise ValueError("cannot combine superoperators with different vectorization conventions")
        if other.dim != self.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")
        return None

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return SuperOperator(self.matrix + other.matrix, self.convention)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return SuperOperator(self.matrix - other.matrix, self.convention)

    def __neg__(self):
        return SuperOperator(-self.matrix, self.convention)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return SuperOperator(scalar * self.matrix, self.convention)

    __rmul__ = __mul__

    def apply(self, op: np.ndarray) -> np.ndarray:
        """Act on an operator and return the resulting operator."""
        op = np.asarray(op)
        if op.shape != (self.dim, self.dim):
            raise ValueError(f"operator shape {op.shape} does not match dim {self.dim}")
        return devectorize(self.matrix @ vectorize(op))

    @classmethod
    def zeros(cls, dim: int) -> "SuperOperator":
        return cls(np.zeros((dim * dim, dim * dim), dtype=complex))


def _is_hermitian(h: np.ndarray, tol: float = 1e-10) -> bool:
    scale = max(1.0, float(np.abs(h).max(initial=0.0)))
    return bool(np.abs(h - h.conj().T).max(initial=0.0) <= tol * scale)


def hamiltonian_superop(h: np.ndarray) -> SuperOperator:
    """Generator ``rho -> -i [h, rho]``; ``h`` must already be in rad/ns."""
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"expected a square Hamiltonian, got shape {h.shape}")
    if not _is_hermitian(h):
        raise ValueError("Hamiltonian is not Hermitian")
    eye = np.eye(h.shape[0])
    return SuperOperator(-1j * (np.kron(eye, h) - np.kron(h.T, eye)))


def dissipator(channel: JumpChannel, units: UnitSystem | None = None) -> SuperOperator:
    """Lindblad dissipator ``rate * (L rho L^dagger - {L^dagger L, rho}/2)``."""
    units = units or UnitSystem()
    op = np.asarray(channel.operator, dtype=complex)
    d = op.shape[0]
    if channel.rate == 0:
        return SuperOperator.zeros(d)
    rate = units.to_internal(channel.rate)
    eye = np.eye(d)
    ldl = op.conj().T @ op
    m = np.kron(op.conj(), op) - 0.5 * np.kron(eye, ldl) - 0.5 * np.kron(ldl.T, eye)
    return SuperOperator(rate * m)


def liouvillian(
    h_mk: np.ndarray, channels: Iterable[JumpChannel] = (), units: UnitSystem | None = None
) -> SuperOperator:
    """Full Lindblad generator in rad/ns from a Hamiltonian and channels in mK."""
    units = units or UnitSystem()
    total = hamiltonian_superop(units.to_internal(np.asarray(h_mk, dtype=complex)))
    for ch in channels:
        total = total + dissipator(ch, units)
    return total


def adjoint(sup: SuperOperator) -> SuperOperator:
    """Adjoint with respect to the Hilbert-Schmidt product (conjugate transpose)."""
    return SuperOperator(sup.matrix.conj().T, sup.convention)


def hermitian_basis(d: int) -> np.ndarray:
    """Unitary whose columns are vectorized Hermitian operators orthonormal under ``Tr[A^dagger B]``.

    Coordinates ``T^dagger vec(rho)`` of a Hermitian ``rho`` are real and a
    Hermiticity-preserving superoperator becomes a real matrix in this basis.
    """
    cols = []
    for i in range(d):
        for j in range(d):
            g = np.zeros((d, d), dtype=complex)
            if i == j:
                g[i, i] = 1.0
            elif i < j:
                g[i, j] = g[j, i] = 1 / np.sqrt(2)
            else:
                g[j, i] = -1j / np.sqrt(2)
                g[i, j] = 1j / np.sqrt(2)
            cols.append(vectorize(g))
    return np.array(cols).T


@lru_cache(maxsize=8)
def _sparse_hermitian_basis(d: int):
    return sp.csr_matrix(hermitian_basis(d))


@dataclass(frozen=True)
class RealForm:
    """A Hermiticity-preserving superoperator as a real matrix in the Hermitian basis.

    ``coords(vec)`` splits ``vec(X)`` into the real coordinates of the
    Hermitian and anti-Hermitian parts of ``X``; ``vector`` inverts it.
    """

    matrix: np.ndarray
    basis: object = field(repr=False)

    def coords(self, vec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        c = self.basis.conj().T @ vec
        return c.real.copy(), c.imag.copy()

    def vector(self, re: np.ndarray, im: np.ndarray | None = None) -> np.ndarray:
        c = re if im is None else re + 1j * im
        return self.basis @ c


def real_form(sup: SuperOperator, tol: float = 1e-9) -> RealForm | None:
    """Real representation of ``sup``, or ``None`` if it does not preserve Hermiticity."""
    t = _sparse_hermitian_basis(sup.dim)
    lt = (t.T @ sup.matrix.T).T
    m = t.conj().T @ lt
    if np.abs(m.imag).max(initial=0.0) > tol * max(1.0, np.abs(m).max(initial=0.0)):
        return None
    return RealForm(np.ascontiguousarray(m.real), t)


def density_defects(rho: np.ndarray) -> tuple[float, float, float]:
    """(|trace - 1|, max Hermiticity defect, smallest eigenvalue) of ``rho``."""
    rho = np.asarray(rho)
    herm = float(np.abs(rho - rho.conj().T).max())
    min_eig = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
    return abs(complex(np.trace(rho)) - 1.0), herm, min_eig


def check_density(rho: np.ndarray, trace_tol=1e-10, herm_tol=1e-10, eig_tol=1e-9) -> np.ndarray:
    """Raise ``ValueError`` unless ``rho`` is a valid density matrix."""
    tr, herm, min_eig = density_defects(rho)
    if tr > trace_tol or herm > herm_tol or min_eig < -eig_tol:
        raise ValueError(
            f"not a density operator: trace error {tr:.2e}, Hermiticity defect {herm:.2e}, "
            f"min eigenvalue {min_eig:.2e}"
        )
    return rho
