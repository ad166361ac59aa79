"""Time evolution under piecewise-constant Liouvillians."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp

from functools import lru_cache

from .liouville import SuperOperator, devectorize, dissipator, hamiltonian_superop, real_form, vectorize
from .model import (
    ModelParams,
    UnitSystem,
    build_hamiltonian,
    build_jump_channels,
    build_space,
    initial_state,
    radical_operator,
)
from .spin_algebra import StructuredSpace

__all__ = [
    "NumericalFailure",
    "IllConditionedError",
    "Protocol",
    "Trajectory",
    "SpectralDecomposition",
    "default_sample_times",
    "matrix_exponential_apply",
    "expm_apply",
    "spectral_decompose",
    "SegmentPropagator",
    "model_liouvillians",
    "evolve_protocol",
    "manifold_population",
    "spin_correlation",
    "interaction_picture_propagate",
]

TRACE_FAILURE = 1e-6


class NumericalFailure(RuntimeError):
    """Propagation or linear algebra produced an unusable result."""


class IllConditionedError(NumericalFailure):
    pass


def default_sample_times(t_on_end: float, t_total: float, n: int = 200, t_min: float = 0.1) -> np.ndarray:
    times = np.geomspace(min(t_min, t_total), t_total, n)
    return np.unique(np.append(times, t_on_end))


@dataclass(frozen=True)
class Protocol:
    """Laser on during ``[0, t_on_end]``, off until ``t_total`` (times in ns)."""

    t_on_end: float = 8.0
    t_total: float = 4000.0
    sample_times: tuple = None

    def __post_init__(self):
        if not 0 < self.t_on_end <= self.t_total:
            raise ValueError(f"t_on_end: need 0 < t_on_end <= t_total, got {self.t_on_end}, {self.t_total}")
        if self.sample_times is None:
            times = default_sample_times(self.t_on_end, self.t_total)
        else:
            times = np.asarray(self.sample_times, dtype=float)
        if times.ndim != 1 or times.size == 0:
            raise ValueError("sample_times: must be a nonempty 1-d sequence")
        if np.any(np.diff(times) <= 0):
            raise ValueError("sample_times: must be strictly increasing")
        if times[0] < 0 or times[-1] > self.t_total:
            raise ValueError(f"sample_times: must lie in [0, {self.t_total}]")
        object.__setattr__(self, "sample_times", tuple(float(t) for t in times))


def _trace_check(vec: np.ndarray, t: float):
    d = int(round(np.sqrt(vec.size)))
    drift = abs(vec[:: d + 1].sum() - 1.0)
    if not np.isfinite(drift) or drift > TRACE_FAILURE:
        raise NumericalFailure(f"trace drift {drift:.3e} at t = {t} ns")


def matrix_exponential_apply(l: SuperOperator, rho: np.ndarray, t: float) -> np.ndarray:
    """``devec(expm(L t) vec(rho))``; the result is checked, never renormalized."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    vec = expm_apply(l, vectorize(rho).astype(complex), t)
    _trace_check(vec, t)
    return devectorize(vec)


def expm_apply(l: SuperOperator, vec: np.ndarray, t: float, form=None) -> np.ndarray:
    """``expm(L t) @ vec``, in the real Hermitian-basis form of ``L`` when it exists.

    The real form keeps propagated density matrices Hermitian to rounding
    and makes the exponential about three times cheaper. ``form`` may pass a
    precomputed :func:`~trepr.liouville.real_form` (``False`` forces the
    complex route).
    """
    if t == 0:
        return np.array(vec, dtype=complex)
    form = real_form(l) if form is None else form
    if not form:
        return sla.expm(l.matrix * t) @ vec
    prop = sla.expm(form.matrix * t)
    re, im = form.coords(vec)
    return form.vector(prop @ re, prop @ im if np.any(im) else None)


@dataclass(frozen=True)
class SpectralDecomposition:
    """``L = sum_i v_R[:, i] lambda_i v_L[:, i]^T`` with ``v_L^T v_R = 1``."""

    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray
    condition: float

    def propagator(self, t: float) -> np.ndarray:
        return (self.right * np.exp(self.eigenvalues * t)) @ self.left.T

    def apply(self, vec: np.ndarray, t: float) -> np.ndarray:
        return self.right @ (np.exp(self.eigenvalues * t) * (self.left.T @ vec))


def spectral_decompose(l: SuperOperator, max_condition: float = 1e8) -> SpectralDecomposition:
    """Right/left eigenvectors of a (non-Hermitian) superoperator.

    Left vectors are taken from the inverse of the right-eigenvector
    matrix, which makes them biorthonormal even inside degenerate
    eigenspaces. Raises :class:`IllConditionedError` when the eigenvector
    matrix is (numerically) singular.
    """
    evals, right = sla.eig(l.matrix)
    right = right / np.linalg.norm(right, axis=0)
    cond = float(np.linalg.cond(right))
    if not np.isfinite(cond) or cond > max_condition:
        raise IllConditionedError(f"eigenvector matrix condition number {cond:.3e}")
    left = np.linalg.inv(right).T
    return SpectralDecomposition(evals, right, left, cond)


class SegmentPropagator:
    """``exp(L t)`` on one constant-Liouvillian segment.

    ``L`` is written in an orthonormal basis of Hermitian operators, where
    it is a real matrix, and diagonalized there; eigenvalues then come in
    exact conjugate pairs and propagated density matrices stay Hermitian to
    rounding. The decomposition is used only if it reproduces ``expm`` at
    the reference time ``t_ref`` to ``tol``; otherwise every call is an
    ``expm``. The choice depends on ``L`` only, never on the sample times.
    """

    def __init__(self, l: SuperOperator, t_ref: float, tol: float = 1e-10):
        self.l = l
        self.decomposition = None
        self.form = real_form(l)
        if self.form is None:
            return
        try:
            dec = spectral_decompose(SuperOperator(self.form.matrix))
        except (IllConditionedError, np.linalg.LinAlgError):
            return
        ref = sla.expm(self.form.matrix * t_ref)
        err = np.abs(dec.propagator(t_ref) - ref).max()
        if err <= tol * max(1.0, np.abs(ref).max()):
            self.decomposition = dec

    def apply(self, vec: np.ndarray, t: float) -> np.ndarray:
        if t == 0:
            return np.array(vec, dtype=complex)
        if self.decomposition is None:
            return expm_apply(self.l, vec, t, self.form or False)
        re, im = self.form.coords(vec)
        out_re = self.decomposition.apply(re, t).real
        out_im = self.decomposition.apply(im, t).real if np.any(im) else None
        return self.form.vector(out_re, out_im)


@lru_cache(maxsize=4)
def _dissipative_part(params: ModelParams, units: UnitSystem) -> np.ndarray:
    # channels do not depend on the field; cached across field points
    total = None
    for ch in build_jump_channels(params):
        d = dissipator(ch, units).matrix
        total = d if total is None else total + d
    return total


def model_liouvillians(params: ModelParams, units: UnitSystem | None = None):
    """(L with laser on, L with laser off) for ``params``."""
    units = units or UnitSystem()
    diss = _dissipative_part(params.replace(zeeman=0.0), units)
    out = []
    for laser in (True, False):
        h = units.to_internal(build_hamiltonian(params, laser_on=laser))
        out.append(SuperOperator(hamiltonian_superop(h).matrix + diss))
    return tuple(out)


def manifold_population(rho: np.ndarray, space: StructuredSpace, manifold: str) -> float:
    sl = space.block(manifold)
    return float(np.trace(rho[sl, sl]).real)


def _radical_dot(space: StructuredSpace) -> np.ndarray:
    return sum(
        radical_operator(space, 0, a) @ radical_operator(space, 1, a) for a in ("sx", "sy", "sz")
    )


def spin_correlation(rho: np.ndarray, space: StructuredSpace) -> float:
    """``<s1 . s2>`` of the two radicals, summed over all manifolds (DRTS only)."""
    if space.manifold("gs").dim != 4:
        raise ValueError("radical-radical correlation needs a two-radical (DRTS) space")
    return float(np.trace(_radical_dot(space) @ rho).real)


@dataclass
class Trajectory:
    times: np.ndarray
    states: list
    space: StructuredSpace
    populations: dict = field(default_factory=dict)
    correlation: np.ndarray | None = None

    def population(self, manifold: str) -> np.ndarray:
        return self.populations[manifold]


def evolve_protocol(
    params: ModelParams, protocol: Protocol | None = None, units: UnitSystem | None = None
) -> Trajectory:
    """Pump with the laser until ``t_on_end``, then evolve freely; sample the state."""
    protocol = protocol or Protocol()
    space = build_space(params.kind)
    l_on, l_off = model_liouvillians(params, units)
    v0 = vectorize(initial_state(params)).astype(complex)
    t1 = protocol.t_on_end
    seg_on = SegmentPropagator(l_on, t1)
    v1 = expm_apply(l_on, v0, t1, seg_on.form or False)
    _trace_check(v1, t1)
    seg_off = SegmentPropagator(l_off, protocol.t_total - t1) if protocol.t_total > t1 else None

    times = np.asarray(protocol.sample_times)
    states = []
    for t in times:
        if t <= t1:
            vec = v1 if t == t1 else seg_on.apply(v0, t)
        else:
            vec = seg_off.apply(v1, t - t1)
        _trace_check(vec, t)
        states.append(devectorize(vec))

    pops = {m: np.array([manifold_population(r, space, m) for r in states]) for m in space.labels}
    corr = None
    if params.kind == "DRTS":
        dot = _radical_dot(space)
        corr = np.array([np.trace(dot @ r).real for r in states])
    return Trajectory(times, states, space, pops, corr)


def interaction_picture_propagate(
    l0: SuperOperator,
    l1: SuperOperator,
    rho0: np.ndarray,
    t: float,
    rtol: float = 1e-12,
    atol: float = 1e-14,
    max_growth: float = 2.0,
) -> np.ndarray:
    """Propagate with ``L0 + L1`` by integrating the interaction-picture equation.

    ``d rho_I/dt = exp(-L0 s) L1 exp(L0 s) rho_I`` is integrated in the
    eigenbasis of ``L0`` and mapped back with ``rho = exp(L0 s) rho_I``.
    With dissipation ``exp(-L0 s)`` grows, so the frame is restarted on
    sub-intervals over which the modal rates span at most ``max_growth``
    e-foldings.
    """
    dec = spectral_decompose(l0)
    lam = dec.eigenvalues
    coupling = dec.left.T @ l1.matrix @ dec.right
    spread = float(lam.real.max() - lam.real.min())
    n_seg = max(1, int(np.ceil(t * spread / max_growth)))
    h = t / n_seg
    n = lam.size

    def real_rhs(s, z):
        phase = np.exp(lam * s)
        dy = (coupling @ (phase * (z[:n] + 1j * z[n:]))) / phase
        return np.concatenate([dy.real, dy.imag])

    x = dec.left.T @ vectorize(rho0).astype(complex)
    for _ in range(n_seg):
        sol = solve_ivp(real_rhs, (0.0, h), np.concatenate([x.real, x.imag]), method="DOP853", rtol=rtol, atol=atol)
        if not sol.success:
            raise NumericalFailure(f"interaction-picture integration failed: {sol.message}")
        x = np.exp(lam * h) * (sol.y[:n, -1] + 1j * sol.y[n:, -1])
    vec = dec.right @ x
    _trace_check(vec, t)
    return devectorize(vec)
