import numpy as np
import pytest
import scipy.linalg as sla
from scipy.integrate import simpson

from trepr.liouville import liouvillian
from trepr.model import JumpChannel, ModelParams, UnitSystem, build_hamiltonian, build_space
from trepr.propagate import NumericalFailure, Protocol, evolve_protocol, model_liouvillians
from trepr.response import (
    Probe,
    SpectrumConfig,
    chi_nonstationary,
    chi_stationary,
    count_extrema,
    decay_time,
    dominant_lines,
    epr_probe,
    epr_sweep,
    field_response,
    fit_lorentzian,
    kubo_closed,
    line_width,
    phi_time_domain,
    spectral_segments,
    trepr_surface,
)
from trepr.spin_algebra import spin_matrices

UNITS = UnitSystem()
CLOSED = ModelParams(
    gamma_radical_flip=0.0, gamma_triplet_flip=0.0, gamma_isc=0.0, gamma_decay=0.0, v_laser=0.0
)


def random_hermitian(rng, d):
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (m + m.conj().T) / 2


def closed_setup():
    h = build_hamiltonian(CLOSED, laser_on=False)
    _, l0 = model_liouvillians(CLOSED)
    # a stationary, non-trivial state: Gibbs-like in h
    rho = sla.expm(-h / 150.0)
    return h, l0, rho / np.trace(rho)


def test_three_susceptibility_routes_agree_for_closed_system():
    rng = np.random.default_rng(3)
    h, l0, rho = closed_setup()
    for _ in range(2):
        probe = Probe.simple(random_hermitian(rng, 10), random_hermitian(rng, 10))
        for omega in (-150.0, 3.0, 200.0):
            a = chi_nonstationary(l0, probe, rho, omega, 0.5).value
            b = chi_stationary(l0, probe, rho, omega, 0.5)
            c = kubo_closed(h, probe, rho, omega, 0.5)
            assert abs(a - c) <= 1e-8 * abs(c) and abs(b - c) <= 1e-8 * abs(c)


def test_commuting_perturbation_gives_zero():
    _, l0, rho = closed_setup()
    probe = Probe.simple(np.eye(10))
    assert chi_nonstationary(l0, probe, rho, 10.0, 0.1).value == 0


def test_reality_symmetry_for_hermitian_probe():
    # chi(-omega) = conj(chi(omega)) for Hermitian A, B and a Hermiticity-preserving L0
    params = ModelParams()
    l_on, _ = model_liouvillians(params)
    rho = evolve_protocol(params, Protocol(sample_times=(4.0,))).states[0]
    probe = epr_probe(build_space("SRTS"))
    for omega in (5.0, 120.0):
        plus = chi_nonstationary(l_on, probe, rho, omega, 0.3).value
        minus = chi_nonstationary(l_on, probe, rho, -omega, 0.3).value
        assert minus == pytest.approx(plus.conjugate(), rel=1e-10, abs=1e-15)


def test_stationary_route_rejects_non_stationary_state():
    params = ModelParams()
    l_on, _ = model_liouvillians(params)
    probe = epr_probe(build_space("SRTS"))
    with pytest.raises(ValueError, match="stationary"):
        chi_stationary(l_on, probe, np.eye(10) / 10, 10.0, 0.1)


def test_epsilon_must_be_positive():
    _, l0, rho = closed_setup()
    with pytest.raises(ValueError):
        chi_nonstationary(l0, Probe.simple(np.eye(10)), rho, 1.0, 0.0)


def test_singular_resolvent_is_a_numerical_failure():
    l0 = liouvillian(np.zeros((2, 2)))
    l0.matrix[0, 0] = np.nan
    with pytest.raises(NumericalFailure):
        chi_nonstationary(l0, Probe.simple(spin_matrices(0.5).sx), np.diag([1.0, 0]), 1.0, 0.1)


def test_phi_at_zero_and_closed_system_commutator():
    rng = np.random.default_rng(5)
    h, l0, rho = closed_setup()
    a, b = random_hermitian(rng, 10), random_hermitian(rng, 10)
    probe = Probe.simple(a, b)
    taus = [0.0, 0.7, 2.5]
    phi = phi_time_domain(l0, probe, rho, taus)
    hi = UNITS.to_internal(h)
    for tau, value in zip(taus, phi):
        u = sla.expm(-1j * hi * tau)
        a_tau = u.conj().T @ a @ u
        assert value == pytest.approx(-1j * np.trace(a_tau @ (b @ rho - rho @ b)), abs=1e-10)
    with pytest.raises(ValueError):
        phi_time_domain(l0, probe, rho, [-1.0])


def test_fourier_transform_of_phi_matches_resolvent_on_qubit():
    s = spin_matrices(0.5)
    l0 = liouvillian(5.0 * s.sz, [JumpChannel("d", 0.4, s.s_minus)])
    rho = np.diag([0.8, 0.2]).astype(complex)
    probe = Probe.simple(s.sx)
    omega, eps = 5.0, 1.0
    w, e = UNITS.to_internal(omega), UNITS.to_internal(eps)
    taus = np.linspace(0, 60 / e, 30001)
    phi = phi_time_domain(l0, probe, rho, taus)
    ft = simpson(phi * np.exp((1j * w - e) * taus), x=taus)
    chi = chi_nonstationary(l0, probe, rho, omega, eps).value
    assert abs(ft - chi) <= 1e-6 * abs(chi)


def test_components_sum_to_total_and_labels():
    params = ModelParams(kind="DRTS")
    res = field_response(params, 100.0, SpectrumConfig(), Protocol(), (8.0,))[0]
    assert list(res.components) == ["gs.s1x", "gs.s2x", "es.s1x", "es.s2x", "t.Sx", "t.s1x", "t.s2x"]
    total = 0j
    for v in res.components.values():
        total += v
    assert total == res.value


def test_linearity_in_the_observable():
    params = ModelParams()
    l_on, _ = model_liouvillians(params)
    rho = evolve_protocol(params, Protocol(sample_times=(3.0,))).states[0]
    full = epr_probe(build_space("SRTS"))
    chi = chi_nonstationary(l_on, full, rho, 200.0, 0.1)
    for label, op in full.components:
        single = chi_nonstationary(l_on, Probe(((label, op),), full.perturbation), rho, 200.0, 0.1)
        assert single.value == pytest.approx(chi.components[label], rel=1e-12, abs=1e-18)


def test_trepr_surface_rows_equal_single_time_sweeps():
    params = ModelParams()
    config = SpectrumConfig(field_grid=tuple(np.linspace(80, 120, 5)))
    times = (2.0, 8.0, 50.0)
    surface = trepr_surface(params, config, time_grid=times)
    for row, t in zip(surface, times):
        assert np.array_equal(row, epr_sweep(params, config, observe_time=t).chi)
    spectral = trepr_surface(params, SpectrumConfig(field_grid=config.field_grid, propagation="spectral"),
                             time_grid=times)
    assert np.abs(spectral - surface).max() <= 1e-6 * np.abs(surface).max()


def test_late_time_signal_vanishes():
    config = SpectrumConfig(field_grid=(100.0,))
    late = epr_sweep(ModelParams(), config, observe_time=4000.0).chi[0]
    early = epr_sweep(ModelParams(), config, observe_time=8.0).chi[0]
    assert abs(late) < 1e-3 * abs(early)


def test_normalized_spectrum():
    res = epr_sweep(ModelParams(), SpectrumConfig(field_grid=tuple(np.linspace(60, 140, 9))), normalize=True)
    assert np.abs(res.signal).max() == pytest.approx(1.0)
    assert "normalized_by" in res.metadata
    assert res.metadata["sign_convention"].startswith("chi = -Tr")


def test_lorentzian_fit_recovers_parameters():
    x = np.linspace(-5, 5, 201)
    y = 3.0 * 0.4**2 / ((x - 0.7) ** 2 + 0.4**2)
    center, hwhm, amp = fit_lorentzian(x, y)
    assert (center, hwhm, amp) == pytest.approx((0.7, 0.4, 3.0), rel=1e-6)


def test_line_width_and_line_counting_helpers():
    x = np.linspace(-50, 50, 1001)
    narrow = np.exp(-(x**2) / 2)
    wide = np.exp(-(x**2) / 50)
    assert line_width(x, narrow) < line_width(x, wide)
    assert line_width(x, np.zeros_like(x)) == 0.0
    pair = np.exp(-((x - 20) ** 2) / 4) + 0.8 * np.exp(-((x + 20) ** 2) / 4)
    assert len(count_extrema(pair)) == 3
    assert len(spectral_segments(pair)) == 2
    assert len(dominant_lines(pair)) == 2
    assert len(dominant_lines(pair + 0.3 * np.exp(-((x - 0) ** 2) / 4), level=0.5)) == 2
    # an emissive/absorptive pair without baseline between the lobes is one line
    ea = -x * np.exp(-(x**2) / 20)
    assert len(count_extrema(ea)) == 2 and len(dominant_lines(ea)) == 1
    # isolated single-sample spikes are not features
    spiky = wide.copy()
    spiky[100] = 5.0
    assert len(count_extrema(spiky)) == 1


def test_decay_time_of_exponential():
    t = np.linspace(0, 200, 20001)
    y = np.where(t < 5, t / 5, np.exp(-(t - 5) / 7.0))
    assert decay_time(t, y) == pytest.approx(7.0, rel=1e-4)
    assert decay_time(t, y, after=5.0) == pytest.approx(7.0, rel=1e-4)
