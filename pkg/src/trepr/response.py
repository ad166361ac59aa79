"""Linear response of open spin systems and EPR field sweeps.

Conventions (frequencies in rad/ns inside, mK at the interface):

* perturbation generator ``Bsup rho = -i [B, rho]``
* ``chi(omega + i eps, t) = -Tr[A (L0 + i omega - eps)^-1 Bsup rho_t]``, i.e.
  the Fourier-Laplace transform ``int_0^inf dtau exp(i omega tau - eps tau)
  phi(tau)`` of ``phi(tau) = Tr[A exp(L0 tau) Bsup rho_t]``. In Heisenberg
  form this is ``-((L0^dagger - i omega - eps)^-1 A^dagger, Bsup rho_t)``.
* the EPR signal is ``-Im chi`` (positive for absorption).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.optimize import curve_fit
from scipy.signal import find_peaks, medfilt

from .liouville import SuperOperator, devectorize, hamiltonian_superop, real_form, vectorize
from .model import (
    ModelParams,
    UnitSystem,
    build_space,
    initial_state,
    radical_operator,
    triplet_operator,
)
from .propagate import NumericalFailure, Protocol, SegmentPropagator, _trace_check, expm_apply, model_liouvillians
from .spin_algebra import StructuredSpace

__all__ = [
    "SIGN_CONVENTION",
    "Probe",
    "Susceptibility",
    "SpectrumConfig",
    "SpectrumResult",
    "epr_probe",
    "chi_stationary",
    "chi_nonstationary",
    "kubo_closed",
    "phi_time_domain",
    "field_response",
    "epr_sweep",
    "trepr_surface",
    "line_width",
    "count_extrema",
    "spectral_segments",
    "dominant_lines",
    "decay_time",
    "fit_lorentzian",
]

SIGN_CONVENTION = (
    "chi = -Tr[A (L0 + i*omega - eps)^-1 Bsup rho_t], Bsup = -i[B, .]; "
    "equivalently -((L0^dag - i*omega - eps)^-1 A^dag, Bsup rho_t); signal = -Im chi"
)
RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class Probe:
    """Observable ``A = sum(components)`` and Hermitian perturbation ``B``."""

    components: tuple[tuple[str, np.ndarray], ...]
    perturbation: np.ndarray
    observable: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.components:
            raise ValueError("probe needs at least one component operator")
        total = np.zeros_like(np.asarray(self.components[0][1], dtype=complex))
        for _, op in self.components:
            total = total + op
        b = np.asarray(self.perturbation, dtype=complex)
        if np.abs(b - b.conj().T).max() > 1e-12:
            raise ValueError("perturbation B must be Hermitian")
        object.__setattr__(self, "observable", total)

    @classmethod
    def simple(cls, a: np.ndarray, b: np.ndarray | None = None, label: str = "A") -> "Probe":
        a = np.asarray(a, dtype=complex)
        return cls(((label, a),), a if b is None else b)

    @property
    def labels(self) -> list[str]:
        return [label for label, _ in self.components]

    @property
    def generator(self) -> SuperOperator:
        return hamiltonian_superop(self.perturbation)


def epr_probe(space: StructuredSpace) -> Probe:
    """Transverse-field probe ``S_x + sum_k s_kx`` split by manifold and spin.

    A = B; the components are each radical's ``s_x`` inside gs, es and t,
    and the triplet ``S_x``.
    """
    n_rad = 1 if space.manifold("gs").dim == 2 else 2
    comps = []
    for m in space.labels:
        if m == "t":
            comps.append(("t.Sx", triplet_operator(space, "sx")))
        for k in range(n_rad):
            name = "sx" if n_rad == 1 else f"s{k + 1}x"
            comps.append((f"{m}.{name}", radical_operator(space, k, "sx", manifolds=(m,))))
    probe = Probe(tuple(comps), np.zeros((space.total_dim,) * 2, dtype=complex))
    return Probe(probe.components, probe.observable)


@dataclass(frozen=True)
class Susceptibility:
    value: complex
    components: dict


def _trace_product(a: np.ndarray, x: np.ndarray) -> complex:
    return complex(np.sum(a.T * x))


def _decompose(probe: Probe, x: np.ndarray) -> Susceptibility:
    comps = {label: -_trace_product(op, x) for label, op in probe.components}
    total = 0j
    for v in comps.values():
        total += v
    return Susceptibility(total, comps)


def _check_residual(matrix, sol, rhs):
    res = np.linalg.norm(matrix @ sol - rhs)
    scale = np.linalg.norm(matrix, 1) * np.linalg.norm(sol) + np.linalg.norm(rhs)
    if not np.isfinite(res) or res > RESIDUAL_TOL * max(scale, 1e-300):
        raise NumericalFailure(f"resolvent solve residual {res:.3e} (relative to {scale:.3e})")


class _Resolvent:
    """LU-factored ``L0 + (i omega - eps)`` reused across right-hand sides."""

    def __init__(self, l0: SuperOperator, omega: float, eps: float):
        self.matrix = l0.matrix + (1j * omega - eps) * np.eye(l0.matrix.shape[0])
        if not np.all(np.isfinite(self.matrix)):
            raise NumericalFailure("Liouvillian has non-finite entries")
        with np.errstate(all="ignore"):
            self.lu = sla.lu_factor(self.matrix, check_finite=True)
        if not np.all(np.isfinite(self.lu[0])) or np.min(np.abs(np.diag(self.lu[0]))) == 0:
            raise NumericalFailure("shifted Liouvillian is singular; increase epsilon")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        sol = sla.lu_solve(self.lu, rhs)
        _check_residual(self.matrix, sol, rhs)
        return sol


def _internal(units: UnitSystem | None, omega: float, epsilon: float):
    units = units or UnitSystem()
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    return units.to_internal(omega), units.to_internal(epsilon)


def chi_stationary(
    l0: SuperOperator,
    probe: Probe,
    rho0: np.ndarray,
    omega: float,
    epsilon: float,
    units: UnitSystem | None = None,
) -> complex:
    """Susceptibility around a stationary state, from the Heisenberg-side resolvent.

    ``chi = i [ (B Y, rho0) - (Y B, rho0) ]`` with
    ``Y = (L0^dagger - i omega - eps)^-1 A``.
    """
    w, e = _internal(units, omega, epsilon)
    drift = np.linalg.norm(l0.matrix @ vectorize(rho0))
    if drift > 1e-8:
        raise ValueError(f"reference state is not stationary: |L0 rho0| = {drift:.3e}")
    shifted = l0.matrix.conj().T - (1j * w + e) * np.eye(l0.matrix.shape[0])
    rhs = vectorize(probe.observable.conj().T)
    y_vec = sla.solve(shifted, rhs)
    _check_residual(shifted, y_vec, rhs)
    y = devectorize(y_vec)
    b = probe.perturbation
    # (X, rho) = Tr[X^dagger rho]
    term1 = np.trace((b @ y).conj().T @ rho0)
    term2 = np.trace((y @ b).conj().T @ rho0)
    return complex(1j * (term1 - term2))


def chi_nonstationary(
    l0: SuperOperator,
    probe: Probe,
    rho_t: np.ndarray,
    omega: float,
    epsilon: float,
    units: UnitSystem | None = None,
) -> Susceptibility:
    """Susceptibility of a (possibly non-stationary) state ``rho_t``, with per-component values."""
    w, e = _internal(units, omega, epsilon)
    rhs = probe.generator.matrix @ vectorize(rho_t)
    x = devectorize(_Resolvent(l0, w, e).solve(rhs))
    return _decompose(probe, x)


def kubo_closed(
    h_mk: np.ndarray,
    probe: Probe,
    rho0: np.ndarray,
    omega: float,
    epsilon: float,
    units: UnitSystem | None = None,
) -> complex:
    """Closed-system Kubo susceptibility from the eigenstates of ``h``.

    ``chi = -sum_{l,m} [rho0, B]_{ml} A_{lm} / (omega + E_l - E_m + i eps)``
    in the energy eigenbasis; no superoperators are involved.
    """
    units = units or UnitSystem()
    w, e = _internal(units, omega, epsilon)
    h = np.asarray(h_mk, dtype=complex)
    comm = h @ rho0 - rho0 @ h
    if np.abs(comm).max() > 1e-10 * max(1.0, np.abs(h).max()):
        raise ValueError("reference state does not commute with the Hamiltonian")
    energies, vecs = np.linalg.eigh(h)
    energies = units.to_internal(energies)
    rot = lambda op: vecs.conj().T @ op @ vecs  # noqa: E731
    c = rot(rho0 @ probe.perturbation - probe.perturbation @ rho0)
    a = rot(probe.observable)
    denom = w + energies[:, None] - energies[None, :] + 1j * e  # [l, m]
    return complex(-np.sum(c.T * a / denom))


def phi_time_domain(
    l0: SuperOperator, probe: Probe, rho_t: np.ndarray, tau_grid: Sequence[float]
) -> np.ndarray:
    """``phi(tau) = Tr[A exp(L0 tau) Bsup rho_t]`` for ``tau >= 0`` (ns).

    The perturbed state is stepped through the sorted grid with matrix
    exponentials of the step lengths; equal steps share one exponential.
    """
    taus = np.asarray(tau_grid, dtype=float)
    if np.any(taus < 0):
        raise ValueError("response function is defined for tau >= 0 only")
    order = np.argsort(taus, kind="stable")
    a_t = probe.observable.T.reshape(-1, order="F")
    vec = probe.generator.matrix @ vectorize(rho_t)
    cache: dict[float, np.ndarray] = {}
    out = np.empty(taus.size, dtype=complex)
    now = 0.0
    for i in order:
        step = taus[i] - now
        if step > 0:
            key = round(step, 12)
            if key not in cache:
                cache[key] = sla.expm(l0.matrix * step)
            vec = cache[key] @ vec
            now = taus[i]
        out[i] = np.dot(a_t, vec)
    return out


@dataclass(frozen=True)
class SpectrumConfig:
    """Microwave frequency and broadening (mK), field grid (mK), observation time (ns).

    ``propagation`` selects how states are carried to the observation
    times: ``"expm"`` (one matrix exponential per time) or ``"spectral"``
    (one eigendecomposition per Liouvillian, cheaper for many times).
    """

    omega: float = 200.0
    epsilon: float = 0.1
    field_grid: tuple = tuple(np.linspace(0.0, 400.0, 201))
    observe_time: float = 8.0
    propagation: str = "expm"

    def __post_init__(self):
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValueError(f"epsilon: must be > 0, got {self.epsilon}")
        if not np.isfinite(self.omega):
            raise ValueError(f"omega: must be finite, got {self.omega}")
        grid = np.asarray(self.field_grid, dtype=float)
        if grid.ndim != 1 or grid.size == 0 or not np.all(np.isfinite(grid)):
            raise ValueError("field_grid: must be a nonempty list of finite values")
        if not self.observe_time >= 0:
            raise ValueError(f"observe_time: must be >= 0, got {self.observe_time}")
        if self.propagation not in ("expm", "spectral"):
            raise ValueError(f"propagation: expected 'expm' or 'spectral', got {self.propagation!r}")
        object.__setattr__(self, "field_grid", tuple(float(x) for x in grid))


@dataclass
class SpectrumResult:
    fields: np.ndarray
    chi: np.ndarray
    components: dict
    metadata: dict = field(default_factory=dict)

    @property
    def signal(self) -> np.ndarray:
        return -self.chi.imag

    def normalized(self) -> "SpectrumResult":
        """Divide chi and all components by ``max |signal|`` over the sweep."""
        scale = np.abs(self.signal).max()
        if scale == 0:
            return self
        meta = dict(self.metadata, normalized_by=float(scale))
        comps = {k: v / scale for k, v in self.components.items()}
        return SpectrumResult(self.fields, self.chi / scale, comps, meta)


def field_response(
    params: ModelParams,
    zeeman: float,
    config: SpectrumConfig,
    protocol: Protocol,
    times: Sequence[float],
    units: UnitSystem | None = None,
) -> list[Susceptibility]:
    """chi at one field value for each observation time.

    The state at each time is computed independently of the other
    requested times, so a single-time call reproduces any entry of a
    multi-time call bit for bit. The unperturbed Liouvillian is the one
    active at the observation time (laser on strictly before ``t_on_end``).
    """
    units = units or UnitSystem()
    p = params.replace(zeeman=float(zeeman))
    l_on, l_off = model_liouvillians(p, units)
    probe = epr_probe(build_space(p.kind))
    w, e = _internal(units, config.omega, config.epsilon)
    v0 = vectorize(initial_state(p)).astype(complex)
    t1 = protocol.t_on_end
    if config.propagation == "spectral":
        seg_on = SegmentPropagator(l_on, t1)
        v1 = expm_apply(l_on, v0, t1, seg_on.form or False)
        seg_off = None
        evolve_on = lambda t: seg_on.apply(v0, t)  # noqa: E731

        def evolve_off(dt):
            nonlocal seg_off
            if seg_off is None:
                seg_off = SegmentPropagator(l_off, max(protocol.t_total - t1, dt))
            return seg_off.apply(v1, dt)
    else:
        form_on, form_off = real_form(l_on) or False, None
        v1 = expm_apply(l_on, v0, t1, form_on)
        evolve_on = lambda t: expm_apply(l_on, v0, t, form_on)  # noqa: E731

        def evolve_off(dt):
            nonlocal form_off
            if form_off is None:
                form_off = real_form(l_off) or False
            return expm_apply(l_off, v1, dt, form_off)

    resolvents: dict[bool, _Resolvent] = {}
    out = []
    for t in times:
        if t < 0:
            raise ValueError(f"observation time must be >= 0, got {t}")
        laser = t < t1
        if t == t1:
            vec = v1
        elif laser:
            vec = evolve_on(t)
        else:
            vec = evolve_off(t - t1)
        _trace_check(vec, t)
        if laser not in resolvents:
            resolvents[laser] = _Resolvent(l_on if laser else l_off, w, e)
        x = devectorize(resolvents[laser].solve(probe.generator.matrix @ vec))
        out.append(_decompose(probe, x))
    return out


def _metadata(params, config, protocol, units, **extra):
    from dataclasses import asdict

    meta = {
        "model": asdict(params),
        "spectrum": {k: v for k, v in asdict(config).items() if k != "field_grid"},
        "protocol": {"t_on_end": protocol.t_on_end, "t_total": protocol.t_total},
        "mk_to_rad_per_ns": (units or UnitSystem()).mk_to_rad_per_ns,
        "sign_convention": SIGN_CONVENTION,
    }
    meta.update(extra)
    return meta


def _assemble(fields, per_field, labels, index, metadata):
    chi = np.array([col[index].value for col in per_field], dtype=complex)
    comps = {lab: np.array([col[index].components[lab] for col in per_field]) for lab in labels}
    return SpectrumResult(np.asarray(fields, dtype=float), chi, comps, metadata)


def _field_task(args):
    return field_response(*args)


def epr_sweep(
    params: ModelParams,
    config: SpectrumConfig | None = None,
    protocol: Protocol | None = None,
    observe_time: float | None = None,
    units: UnitSystem | None = None,
    normalize: bool = False,
    map_fn: Callable = map,
) -> SpectrumResult:
    """EPR spectrum over ``config.field_grid`` at one observation time.

    ``map_fn`` distributes field points (e.g. ``executor.map``); results
    are assembled in grid order.
    """
    config = config or SpectrumConfig()
    protocol = protocol or Protocol()
    t_obs = config.observe_time if observe_time is None else observe_time
    tasks = [(params, f, config, protocol, (t_obs,), units) for f in config.field_grid]
    per_field = list(map_fn(_field_task, tasks))
    labels = epr_probe(build_space(params.kind)).labels
    meta = _metadata(params, config, protocol, units, observe_time=t_obs)
    result = _assemble(config.field_grid, per_field, labels, 0, meta)
    return result.normalized() if normalize else result


def trepr_surface(
    params: ModelParams,
    config: SpectrumConfig | None = None,
    protocol: Protocol | None = None,
    time_grid: Sequence[float] = (),
    units: UnitSystem | None = None,
    map_fn: Callable = map,
) -> np.ndarray:
    """Complex chi on a (time x field) grid.

    Each field point is one work item that reuses its Liouvillians,
    propagators and factorizations across all times.
    """
    config = config or SpectrumConfig()
    protocol = protocol or Protocol()
    times = tuple(float(t) for t in time_grid)
    if not times:
        raise ValueError("time_grid must be nonempty")
    tasks = [(params, f, config, protocol, times, units) for f in config.field_grid]
    per_field = list(map_fn(_field_task, tasks))
    return np.array([[col[i].value for col in per_field] for i in range(len(times))], dtype=complex)


# Line-shape analysis --------------------------------------------------------


def line_width(fields: np.ndarray, signal: np.ndarray) -> float:
    """RMS width of the spectrum about its centroid (field units).

    The weights are ``signal**2``, so emissive and absorptive lobes count
    alike and a weak broad background does not dominate a strong narrow line.
    """
    weights = np.asarray(signal, dtype=float) ** 2
    total = weights.sum()
    if total == 0:
        return 0.0
    w = weights / total
    center = np.sum(w * fields)
    return float(np.sqrt(np.sum(w * (fields - center) ** 2)))


def count_extrema(signal: np.ndarray, prominence: float = 0.05, despike: bool = True) -> np.ndarray:
    """Indices of resolved maxima and minima of a spectrum.

    Features narrower than the grid (single-sample spikes) are removed with
    a 3-point median filter before searching; extrema need a prominence of
    at least ``prominence * max |signal|``.
    """
    s = np.asarray(signal, dtype=float)
    if despike and s.size >= 3:
        s = medfilt(s, 3)
    scale = np.abs(s).max()
    if scale == 0:
        return np.array([], dtype=int)
    s = s / scale
    peaks, _ = find_peaks(s, prominence=prominence)
    troughs, _ = find_peaks(-s, prominence=prominence)
    return np.sort(np.concatenate([peaks, troughs]))


def spectral_segments(
    signal: np.ndarray, baseline: float = 0.05, gap: int = 3, despike: bool = True
) -> list[tuple[int, int, float]]:
    """Contiguous features of a spectrum separated by baseline.

    A feature is a run of samples with ``|signal| >= baseline * max|signal|``;
    it ends once ``gap`` consecutive samples fall below that level. Returns
    ``(first, last, peak)`` with ``peak`` relative to the global maximum.
    """
    s = np.asarray(signal, dtype=float)
    if despike and s.size >= 3:
        s = medfilt(s, 3)
    a = np.abs(s)
    if a.max() == 0:
        return []
    a = a / a.max()
    segs, start, below, end = [], None, 0, 0
    for i, on in enumerate(a >= baseline):
        if on:
            if start is None:
                start = i
            below, end = 0, i
        elif start is not None:
            below += 1
            if below >= gap:
                segs.append((start, end))
                start, below = None, 0
    if start is not None:
        segs.append((start, end))
    return [(i, j, float(a[i : j + 1].max())) for i, j in segs]


def dominant_lines(signal: np.ndarray, level: float = 0.5, **kwargs) -> list[tuple[int, int, float]]:
    """Spectral features whose peak reaches ``level`` of the strongest one.

    An emissive/absorptive pair with no baseline between the lobes is one
    line (see :func:`spectral_segments`).
    """
    return [seg for seg in spectral_segments(signal, **kwargs) if seg[2] >= level]


def decay_time(times: np.ndarray, values: np.ndarray, after: float = 0.0) -> float:
    """Time from the peak of ``values`` (at ``t >= after``) to its 1/e point.

    The level is taken relative to the final value, so a slow return to a
    non-zero baseline is measured correctly. Linear interpolation between
    samples; ``inf`` if the trace never falls that far.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    sel = t >= after
    t, y = t[sel], y[sel]
    k = int(np.argmax(y))
    base = y[-1]
    target = base + (y[k] - base) / np.e
    below = np.nonzero(y[k:] <= target)[0]
    if below.size == 0:
        return float("inf")
    j = k + int(below[0])
    if j == k:
        return 0.0
    t0, t1, y0, y1 = t[j - 1], t[j], y[j - 1], y[j]
    return float(t0 + (target - y0) * (t1 - t0) / (y1 - y0) - t[k])


def _lorentzian(x, amp, center, hwhm, offset):
    return amp * hwhm**2 / ((x - center) ** 2 + hwhm**2) + offset


def fit_lorentzian(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Least-squares Lorentzian; returns ``(center, half-width, amplitude)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    k = int(np.argmax(np.abs(y)))
    amp0 = y[k]
    above = np.abs(y) >= abs(amp0) / 2
    width0 = max((x[above].max() - x[above].min()) / 2, np.min(np.diff(np.sort(x))))
    popt, _ = curve_fit(_lorentzian, x, y, p0=(amp0, x[k], width0, 0.0), maxfev=20000)
    return float(popt[1]), float(abs(popt[2])), float(popt[0])
