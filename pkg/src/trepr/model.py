"""Radical-triplet spin models: Hilbert spaces, Hamiltonians, jump channels.

All energies and rates are in mK (``k_B * 1 mK``); conversion to angular
frequency happens through :class:`UnitSystem` when a Liouvillian is built.

Layout of the Hilbert space (``SRTS``: one radical, ``DRTS``: two):

===========  =======================  ======
manifold     spin content             dim
===========  =======================  ======
``gs``       radical(s)               2 / 4
``es``       radical(s)               2 / 4
``t``        triplet x radical(s)     6 / 12
===========  =======================  ======
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy import constants

from .spin_algebra import (
    StructuredSpace,
    couple_to_total_spin,
    embed,
    factor_operator,
    spin_matrices,
)

__all__ = [
    "KINDS",
    "ModelParams",
    "UnitSystem",
    "JumpChannel",
    "build_space",
    "radical_operator",
    "triplet_operator",
    "build_spin_hamiltonian",
    "build_hamiltonian",
    "build_jump_channels",
    "initial_state",
]

KINDS = ("SRTS", "DRTS")
MANIFOLDS = ("gs", "es", "t")
_RATE_FIELDS = (
    "gamma_radical_flip",
    "gamma_radical_dephase",
    "gamma_radical2_flip",
    "gamma_radical2_dephase",
    "gamma_triplet_flip",
    "gamma_triplet_dephase",
    "gamma_isc",
    "gamma_decay",
)
DRTS_ONLY = ("gamma_radical2_flip", "gamma_radical2_dephase")


def _mk_to_rad_per_ns() -> float:
    return constants.k * 1e-3 / constants.hbar * 1e-9


@dataclass(frozen=True)
class UnitSystem:
    """Conversion of mK energies/rates to the internal rad/ns (hbar = 1)."""

    mk_to_rad_per_ns: float = field(default_factory=_mk_to_rad_per_ns)

    def __post_init__(self):
        if not (math.isfinite(self.mk_to_rad_per_ns) and self.mk_to_rad_per_ns > 0):
            raise ValueError(f"mk_to_rad_per_ns must be positive, got {self.mk_to_rad_per_ns}")

    def to_internal(self, value_mk):
        return value_mk * self.mk_to_rad_per_ns


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters in mK. Defaults are the baseline parameter set.

    ``zeeman`` is ``mu_B * |B|`` with the field along z. ``gamma_*_flip``
    is the common rate of the raising and lowering channels,
    ``gamma_*_dephase`` the rate of the ``s_z`` channel. The second-radical
    rates apply to DRTS only; ``None`` means "same as radical 1".
    """

    kind: str = "SRTS"
    g_t: float = 2.0
    g_r: float = 2.0
    zeeman: float = 200.0
    j_exchange: float = -10.0
    d_zfs: float = 20.0
    e_zfs: float = 3.0
    v_laser: float = 0.67
    gamma_radical_flip: float = 0.067
    gamma_radical_dephase: float = 0.0
    gamma_radical2_flip: float | None = None
    gamma_radical2_dephase: float | None = None
    gamma_triplet_flip: float = 67.0
    gamma_triplet_dephase: float = 0.0
    gamma_isc: float = 33.0
    gamma_decay: float = 0.035

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind: expected one of {KINDS}, got {self.kind!r}")
        for f in fields(self):
            if f.name == "kind":
                continue
            value = getattr(self, f.name)
            if value is None and f.name in DRTS_ONLY:
                continue
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError(f"{f.name}: expected a number, got {value!r}")
            if not math.isfinite(value):
                raise ValueError(f"{f.name}: must be finite, got {value}")
            if f.name in _RATE_FIELDS and value < 0:
                raise ValueError(f"{f.name}: rates must be >= 0, got {value}")
        if self.kind == "SRTS":
            for name in DRTS_ONLY:
                if getattr(self, name):
                    raise ValueError(f"{name}: only meaningful for kind DRTS")

    @property
    def n_radicals(self) -> int:
        return 1 if self.kind == "SRTS" else 2

    def radical_rates(self, index: int) -> tuple[float, float]:
        """(flip, dephase) rates of radical ``index`` (0-based)."""
        if index == 0:
            return self.gamma_radical_flip, self.gamma_radical_dephase
        flip = self.gamma_radical_flip if self.gamma_radical2_flip is None else self.gamma_radical2_flip
        deph = self.gamma_radical_dephase if self.gamma_radical2_dephase is None else self.gamma_radical2_dephase
        return flip, deph

    def replace(self, **changes) -> "ModelParams":
        data = asdict(self)
        data.update(changes)
        return ModelParams(**data)


@dataclass(frozen=True)
class JumpChannel:
    label: str
    rate: float
    operator: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.rate >= 0:
            raise ValueError(f"{self.label}: rate must be >= 0, got {self.rate}")


def build_space(kind: str) -> StructuredSpace:
    if kind not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    radicals = (0.5,) if kind == "SRTS" else (0.5, 0.5)
    return StructuredSpace.from_spec([("gs", radicals), ("es", radicals), ("t", (1.0,) + radicals)])


def radical_operator(space: StructuredSpace, index: int, attr: str, manifolds=MANIFOLDS) -> np.ndarray:
    """Spin operator ``attr`` of radical ``index`` acting in the given manifolds.

    The radicals are the trailing factors of every manifold, so radical
    ``index`` is factor ``index`` in gs/es and ``index + 1`` in t.
    """
    op = getattr(spin_matrices(0.5), attr)
    total = np.zeros((space.total_dim, space.total_dim), dtype=complex)
    for label in manifolds:
        factor = index + 1 if label == "t" else index
        total += embed(op, space, label, factor=factor)
    return total


def triplet_operator(space: StructuredSpace, attr: str) -> np.ndarray:
    return embed(getattr(spin_matrices(1.0), attr), space, "t", factor=0)


def build_spin_hamiltonian(params: ModelParams) -> np.ndarray:
    """Spin Hamiltonian of the triplet manifold (mK), on triplet x radicals."""
    S = spin_matrices(1.0)
    s = spin_matrices(0.5)
    spins = (1.0,) + (0.5,) * params.n_radicals

    def T(op):
        return factor_operator(op, spins, 0)

    def R(op, k):
        return factor_operator(op, spins, k + 1)

    h = params.g_t * params.zeeman * T(S.sz)
    h = h + params.d_zfs * T(S.sz @ S.sz) + params.e_zfs * T(S.sx @ S.sx - S.sy @ S.sy)
    for k in range(params.n_radicals):
        h = h + params.g_r * params.zeeman * R(s.sz, k)
        for a in ("sx", "sy", "sz"):
            h = h + params.j_exchange * T(getattr(S, a)) @ R(getattr(s, a), k)
    return h


def build_hamiltonian(params: ModelParams, laser_on: bool) -> np.ndarray:
    """Full block Hamiltonian (mK) in the resonant rotating frame."""
    space = build_space(params.kind)
    h = space.transition("t", "t", build_spin_hamiltonian(params))
    for k in range(params.n_radicals):
        h += params.g_r * params.zeeman * radical_operator(space, k, "sz", manifolds=("gs", "es"))
    if laser_on:
        eye = np.eye(space.manifold("gs").dim)
        h += params.v_laser * (space.transition("es", "gs", eye) + space.transition("gs", "es", eye))
    return h


_M_NAMES = {1.0: "plus", 0.5: "up", 0.0: "zero", -0.5: "down", -1.0: "minus"}


def _isc_pairs(kind: str):
    """Spin-conserving (radical state, triplet-manifold state, weight, name) links.

    Each entry links a coupled state of the radicals in gs/es with the
    coupled state of the same (S, M) in the triplet manifold.
    """
    radicals = (0.5,) if kind == "SRTS" else (0.5, 0.5)
    rad = couple_to_total_spin(radicals)
    trip = couple_to_total_spin((1.0,) + radicals)
    pairs = []
    for k, (S, M, _) in enumerate(rad.labels):
        targets = [j for j, (S2, M2, _) in enumerate(trip.labels) if S2 == S and M2 == M]
        for j in targets:
            mult = trip.labels[j][2]
            base = {0.5: "doublet", 1.0: "triplet", 0.0: "singlet"}[S]
            name = base if trip.multiplicity(S) == 1 else f"{base}{mult + 1}"
            if S > 0:
                name += "_" + _M_NAMES[M]
            pairs.append((rad.transform[:, k], trip.transform[:, j], 1.0 / len(targets), name))
    return pairs


def build_jump_channels(params: ModelParams) -> list[JumpChannel]:
    """All Lindblad channels of the model with their rates (mK).

    Every es state leaves at the ISC rate: when one radical state feeds
    several triplet-manifold multiplets, the rate is split evenly.
    """
    space = build_space(params.kind)
    channels = []
    for k in range(params.n_radicals):
        flip, deph = params.radical_rates(k)
        name = f"radical{k + 1}"
        channels.append(JumpChannel(f"{name}.s_plus", flip, radical_operator(space, k, "s_plus")))
        channels.append(JumpChannel(f"{name}.s_minus", flip, radical_operator(space, k, "s_minus")))
        channels.append(JumpChannel(f"{name}.s_z", deph, radical_operator(space, k, "sz")))
    channels.append(JumpChannel("triplet.S_plus", params.gamma_triplet_flip, triplet_operator(space, "s_plus")))
    channels.append(JumpChannel("triplet.S_minus", params.gamma_triplet_flip, triplet_operator(space, "s_minus")))
    channels.append(JumpChannel("triplet.S_z", params.gamma_triplet_dephase, triplet_operator(space, "sz")))
    pairs = _isc_pairs(params.kind)
    for rad_state, trip_state, weight, name in pairs:
        op = space.transition("t", "es", np.outer(trip_state, rad_state.conj()))
        channels.append(JumpChannel(f"isc.{name}", params.gamma_isc * weight, op))
    for rad_state, trip_state, _, name in pairs:
        op = space.transition("gs", "t", np.outer(rad_state, trip_state.conj()))
        channels.append(JumpChannel(f"decay.{name}", params.gamma_decay, op))
    return channels


def initial_state(params: ModelParams) -> np.ndarray:
    """Maximally mixed radical spin(s) in the electronic ground state."""
    space = build_space(params.kind)
    return space.projector("gs") / space.manifold("gs").dim
