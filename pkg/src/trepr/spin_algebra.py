"""Spin operators, block-structured Hilbert spaces and total-spin coupling.

Operators are plain complex ``numpy`` arrays. Spin matrices use the
``|s, m>`` basis ordered from ``m = +s`` down to ``m = -s`` and the
product basis of several spins follows ``numpy.kron`` ordering (first spin
is the slowest index).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence

import numpy as np
from scipy.linalg import null_space

__all__ = [
    "SpinOps",
    "Manifold",
    "StructuredSpace",
    "CoupledBasis",
    "spin_matrices",
    "kron_all",
    "factor_operator",
    "total_spin_operators",
    "embed",
    "couple_to_total_spin",
]


def _check_spin(s) -> float:
    two_s = 2 * float(s)
    if not np.isfinite(two_s) or two_s <= 0 or abs(two_s - round(two_s)) > 1e-12:
        raise ValueError(f"spin quantum number must be a positive half-integer, got {s!r}")
    return round(two_s) / 2


@dataclass(frozen=True)
class SpinOps:
    """Cartesian and ladder matrices of a single spin ``s`` (hbar = 1)."""

    s: float
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray
    s_plus: np.ndarray
    s_minus: np.ndarray

    @property
    def dim(self) -> int:
        return self.sz.shape[0]

    @property
    def identity(self) -> np.ndarray:
        return np.eye(self.dim, dtype=complex)


def spin_matrices(s) -> SpinOps:
    """Return the spin matrices for spin quantum number ``s``.

    >>> spin_matrices(0.5).sz.real.diagonal()
    array([ 0.5, -0.5])
    """
    s = _check_spin(s)
    m = np.arange(s, -s - 1, -1)
    d = m.size
    s_plus = np.zeros((d, d), dtype=complex)
    # <m+1| S+ |m> = sqrt(s(s+1) - m(m+1))
    s_plus[np.arange(d - 1), np.arange(1, d)] = np.sqrt(s * (s + 1) - m[1:] * (m[1:] + 1))
    s_minus = s_plus.conj().T.copy()
    sx = 0.5 * (s_plus + s_minus)
    sy = -0.5j * (s_plus - s_minus)
    sz = np.diag(m).astype(complex)
    for arr in (sx, sy, sz, s_plus, s_minus):
        arr.setflags(write=False)
    return SpinOps(s, sx, sy, sz, s_plus, s_minus)


def kron_all(*ops: np.ndarray) -> np.ndarray:
    return reduce(np.kron, ops, np.eye(1, dtype=complex))


def factor_operator(op: np.ndarray, spins: Sequence[float], factor: int) -> np.ndarray:
    """Place ``op`` on one factor of the product space of ``spins``."""
    dims = [int(round(2 * s)) + 1 for s in spins]
    if not 0 <= factor < len(dims):
        raise IndexError(f"factor {factor} out of range for {len(dims)} spins")
    if op.shape != (dims[factor], dims[factor]):
        raise ValueError(
            f"operator of shape {op.shape} does not fit spin {spins[factor]} (dim {dims[factor]})"
        )
    parts = [np.eye(d, dtype=complex) for d in dims]
    parts[factor] = np.asarray(op, dtype=complex)
    return kron_all(*parts)


def total_spin_operators(spins: Sequence[float]):
    """Total ``(Sx, Sy, Sz, S^2)`` on the product space of ``spins``."""
    comps = []
    for attr in ("sx", "sy", "sz"):
        comps.append(
            sum(factor_operator(getattr(spin_matrices(s), attr), spins, k) for k, s in enumerate(spins))
        )
    sx, sy, sz = comps
    return sx, sy, sz, sx @ sx + sy @ sy + sz @ sz


@dataclass(frozen=True)
class Manifold:
    label: str
    spins: tuple[float, ...]

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(int(round(2 * s)) + 1 for s in self.spins)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))


@dataclass(frozen=True)
class StructuredSpace:
    """Direct sum of electronic manifolds, each a product of spins.

    Global indices run through the manifolds in order; inside a manifold
    the product basis is in ``kron`` order.
    """

    manifolds: tuple[Manifold, ...]
    offsets: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        labels = [m.label for m in self.manifolds]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate manifold labels in {labels}")
        offsets, pos = {}, 0
        for m in self.manifolds:
            offsets[m.label] = pos
            pos += m.dim
        object.__setattr__(self, "offsets", offsets)

    @classmethod
    def from_spec(cls, spec: Sequence[tuple[str, Sequence[float]]]) -> "StructuredSpace":
        return cls(tuple(Manifold(label, tuple(_check_spin(s) for s in spins)) for label, spins in spec))

    @property
    def total_dim(self) -> int:
        return sum(m.dim for m in self.manifolds)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(m.label for m in self.manifolds)

    def manifold(self, label: str) -> Manifold:
        for m in self.manifolds:
            if m.label == label:
                return m
        raise KeyError(f"unknown manifold {label!r}; have {self.labels}")

    def index_of(self, label: str, local: int) -> int:
        m = self.manifold(label)
        if not 0 <= local < m.dim:
            raise IndexError(f"local index {local} outside manifold {label!r} of dim {m.dim}")
        return self.offsets[label] + local

    def block(self, label: str) -> slice:
        m = self.manifold(label)
        start = self.offsets[label]
        return slice(start, start + m.dim)

    def projector(self, label: str) -> np.ndarray:
        p = np.zeros((self.total_dim, self.total_dim), dtype=complex)
        sl = self.block(label)
        p[sl, sl] = np.eye(self.manifold(label).dim)
        return p

    def transition(self, target: str, source: str, block: np.ndarray) -> np.ndarray:
        """Full-space operator ``|target>[block]<source|``."""
        t, s = self.manifold(target), self.manifold(source)
        block = np.asarray(block, dtype=complex)
        if block.shape != (t.dim, s.dim):
            raise ValueError(f"block shape {block.shape} does not match ({t.dim}, {s.dim})")
        out = np.zeros((self.total_dim, self.total_dim), dtype=complex)
        out[self.block(target), self.block(source)] = block
        return out


def embed(op: np.ndarray, space: StructuredSpace, manifold: str, factor: int | None = None) -> np.ndarray:
    """Lift an operator on one manifold (or on one spin factor of it) into ``space``.

    If ``op`` already has the manifold's dimension it is placed as the whole
    block. Otherwise it acts on spin ``factor`` of that manifold; ``factor``
    may be omitted when exactly one factor has a matching dimension.
    """
    m = space.manifold(manifold)
    op = np.asarray(op, dtype=complex)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise ValueError(f"expected a square operator, got shape {op.shape}")
    if factor is None and op.shape[0] == m.dim:
        block = op
    else:
        if factor is None:
            matches = [k for k, d in enumerate(m.dims) if d == op.shape[0]]
            if len(matches) != 1:
                raise ValueError(
                    f"cannot place dim-{op.shape[0]} operator on manifold {manifold!r} "
                    f"with factor dims {m.dims}; pass factor explicitly"
                )
            factor = matches[0]
        block = factor_operator(op, m.spins, factor)
    return space.transition(manifold, manifold, block)


@dataclass(frozen=True)
class CoupledBasis:
    """Total-spin eigenbasis of a product of spins.

    ``transform`` holds the coupled states as columns, expressed in the
    product basis, so ``transform.conj().T @ v`` converts product
    coordinates to coupled ones. ``labels[k] = (S, M, multiplet)`` labels
    column ``k``; ``paths[k]`` lists the intermediate spins of the
    left-to-right coupling scheme that produced it.
    """

    spins: tuple[float, ...]
    transform: np.ndarray
    labels: tuple[tuple[float, float, int], ...]
    paths: tuple[tuple[float, ...], ...]

    def index(self, S, M, multiplet: int = 0) -> int:
        for k, (s_, m_, i_) in enumerate(self.labels):
            if abs(s_ - S) < 1e-9 and abs(m_ - M) < 1e-9 and i_ == multiplet:
                return k
        raise KeyError(f"no coupled state with S={S}, M={M}, multiplet={multiplet}")

    def state(self, S, M, multiplet: int = 0) -> np.ndarray:
        return self.transform[:, self.index(S, M, multiplet)]

    def multiplicity(self, S) -> int:
        return len({i for s_, _, i in self.labels if abs(s_ - S) < 1e-9})

    def total_spins(self) -> list[float]:
        return sorted({s_ for s_, _, _ in self.labels}, reverse=True)


def _lowering(j: float) -> np.ndarray:
    # also defined for j = 0, which appears as an intermediate coupled spin
    return spin_matrices(j).s_minus if j > 0 else np.zeros((1, 1))


def _couple_pair(j1: float, j2: float) -> list[tuple[float, float, np.ndarray]]:
    """Coupled states of ``j1 x j2`` as vectors in the ``kron`` product basis.

    Highest-weight states are taken orthogonal to all higher-J states of
    the same M, phased so the coefficient with ``m1 = j1`` is positive,
    then lowered with the total ``J-``.
    """
    m1 = np.arange(j1, -j1 - 1, -1)
    m2 = np.arange(j2, -j2 - 1, -1)
    mtot = np.add.outer(m1, m2).ravel()
    lower = np.kron(_lowering(j1), np.eye(m2.size)) + np.kron(np.eye(m1.size), _lowering(j2))
    found: dict[float, list[np.ndarray]] = {}
    out = []
    J = j1 + j2
    while J >= abs(j1 - j2) - 1e-9:
        idx = np.flatnonzero(np.abs(mtot - J) < 1e-9)
        prev = found.get(J, [])
        if prev:
            constraint = np.array([v[idx].conj() for v in prev])
            hw_local = null_space(constraint)[:, 0]
        else:
            hw_local = np.ones(1, dtype=complex)
        hw = np.zeros(mtot.size, dtype=complex)
        hw[idx] = hw_local
        # Condon-Shortley: <j1 j1; j2 J-j1 | J J> > 0
        lead = np.flatnonzero(np.abs(hw) > 1e-12)[0]
        hw *= np.exp(-1j * np.angle(hw[lead]))
        hw /= np.linalg.norm(hw)
        vec = hw
        M = J
        while M >= -J - 1e-9:
            found.setdefault(M, []).append(vec)
            out.append((J, M, vec))
            if M > -J + 1e-9:
                vec = lower @ vec
                vec = vec / np.sqrt(J * (J + 1) - M * (M - 1))
            M -= 1
        J -= 1
    return out


def couple_to_total_spin(spins: Sequence[float]) -> CoupledBasis:
    """Build the total-spin basis by coupling ``spins`` left to right.

    Degenerate multiplets (same total S) are ordered by their chain of
    intermediate spins, highest first; for ``(1, 1/2, 1/2)`` the S=1
    multiplet 0 comes through ``1 x 1/2 -> 3/2`` and multiplet 1 through
    ``1/2``.
    """
    if len(spins) == 0:
        raise ValueError("need at least one spin")
    spins = tuple(_check_spin(s) for s in spins)
    first = spin_matrices(spins[0])
    # current coupled states: (S, M, path, vector in product basis so far)
    current = [(spins[0], m, (), first.identity[:, k]) for k, m in enumerate(np.diag(first.sz).real)]
    for s_b in spins[1:]:
        d_b = int(round(2 * s_b)) + 1
        groups: dict[tuple, list] = {}
        for S, M, path, vec in current:
            groups.setdefault((path, S), []).append((M, vec))
        nxt = []
        for (path, S_a), members in groups.items():
            members.sort(key=lambda t: -t[0])
            basis_a = np.array([v for _, v in members]).T  # columns |S_a, M_a>, M descending
            for J, M, c in _couple_pair(S_a, s_b):
                coeffs = c.reshape(basis_a.shape[1], d_b)
                vec = np.einsum("pa,ab->pb", basis_a, coeffs).reshape(-1)
                nxt.append((J, M, path + (S_a,), vec))
        current = nxt

    def order(item):
        S, M, path, _ = item
        return (-S, tuple(-p for p in path), -M)

    current.sort(key=order)
    labels, paths, cols = [], [], []
    multiplet_of: dict[tuple, int] = {}
    for S, M, path, vec in current:
        key = (S, path)
        if key not in multiplet_of:
            multiplet_of[key] = sum(1 for (s_, _) in multiplet_of if s_ == S)
        labels.append((S, M, multiplet_of[key]))
        paths.append(path)
        cols.append(vec)
    transform = np.array(cols).T
    transform.setflags(write=False)
    return CoupledBasis(spins, transform, tuple(labels), tuple(paths))
