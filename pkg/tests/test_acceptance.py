"""Acceptance suite: one test per criterion, each reporting a single pass/fail line.

Run ``pytest tests/test_acceptance.py -v``; the lines are repeated in the
"acceptance criteria" section of the terminal summary.
"""

import time
from dataclasses import replace

import numpy as np
import pytest
import scipy.linalg as sla
from scipy.integrate import simpson

from trepr.cli import build_table, run_sweep
from trepr.config import config_from_dict
from trepr.liouville import adjoint, density_defects, devectorize, hs_inner, liouvillian, vectorize
from trepr.model import JumpChannel, ModelParams, UnitSystem, build_hamiltonian, build_space, initial_state
from trepr.presets import preset_config
from trepr.propagate import (
    Protocol,
    evolve_protocol,
    interaction_picture_propagate,
    matrix_exponential_apply,
    model_liouvillians,
)
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
    fit_lorentzian,
    kubo_closed,
    line_width,
    phi_time_domain,
)
from trepr.spin_algebra import spin_matrices

UNITS = UnitSystem()
KINDS = ("SRTS", "DRTS")


def random_hermitian(rng, d):
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (m + m.conj().T) / 2


def populations(preset):
    """(swept value, times, pop_t) for each series of a population preset."""
    cfg = preset_config(preset)
    rows = np.array(build_table(cfg).rows)
    out = []
    for v in cfg.sweep.values:
        sel = rows[rows[:, 0] == v]
        out.append((v, sel[:, 1], sel[:, 4]))
    return out


def spectra(preset):
    """(swept value, fields, signal) for each series of a spectrum preset."""
    cfg = preset_config(preset)
    rows = np.array(build_table(cfg).rows)
    return [(v, rows[rows[:, 0] == v, 1], -rows[rows[:, 0] == v, 3]) for v in cfg.sweep.values]


def strictly(values, decreasing=False):
    d = np.diff(values)
    return bool(np.all(d < 0) if decreasing else np.all(d > 0))


def fmt(values):
    return ", ".join(f"{v:.4g}" for v in values)


# 1 -----------------------------------------------------------------------------


@pytest.mark.parametrize("kind", KINDS)
def test_c01_lindblad_trajectory_is_a_density_matrix(kind, report):
    protocol = Protocol()
    assert len(protocol.sample_times) >= 200 and protocol.t_total == 4000.0
    start = time.perf_counter()
    tr = evolve_protocol(ModelParams(kind=kind), protocol)
    elapsed = time.perf_counter() - start
    defects = np.array([density_defects(rho) for rho in tr.states])
    drift, herm, min_eig = defects[:, 0].max(), defects[:, 1].max(), defects[:, 2].min()
    ok = drift <= 1e-9 and herm <= 1e-10 and min_eig >= -1e-9 and elapsed <= 10.0
    report(1, f"Lindblad correctness {kind}", ok,
           f"trace drift {drift:.2e}, Hermiticity {herm:.2e}, min eig {min_eig:.2e}, {elapsed:.2f} s")


# 2 -----------------------------------------------------------------------------


@pytest.mark.parametrize("kind", KINDS)
def test_c02_adjoint_identity(kind, report):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for l in model_liouvillians(ModelParams(kind=kind)):
        la = adjoint(l)
        norm = np.linalg.norm(l.matrix, 2)
        d = l.dim
        for _ in range(100):
            a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
            b = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
            err = abs(hs_inner(a, l.apply(b)) - hs_inner(la.apply(a), b))
            worst = max(worst, err / (np.linalg.norm(a) * np.linalg.norm(b) * norm))
    report(2, f"adjoint identity {kind}", worst <= 1e-12, f"max scaled defect {worst:.2e}")


# 3 -----------------------------------------------------------------------------


@pytest.mark.parametrize("kind", KINDS)
def test_c03_kubo_limit_equivalence(kind, report):
    closed = ModelParams(
        kind=kind, gamma_radical_flip=0.0, gamma_triplet_flip=0.0, gamma_isc=0.0, gamma_decay=0.0
    )
    h = build_hamiltonian(closed, laser_on=False)
    _, l0 = model_liouvillians(closed)
    rho = sla.expm(-h / 150.0)
    rho /= np.trace(rho)
    d = h.shape[0]
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(3):
        probe = Probe.simple(random_hermitian(rng, d), random_hermitian(rng, d))
        for omega in np.linspace(-300.0, 300.0, 20):
            ref = kubo_closed(h, probe, rho, omega, 0.5)
            a = chi_nonstationary(l0, probe, rho, omega, 0.5).value
            b = chi_stationary(l0, probe, rho, omega, 0.5)
            worst = max(worst, abs(a - ref) / abs(ref), abs(b - ref) / abs(ref))
    report(3, f"Kubo-limit equivalence {kind}", worst <= 1e-8, f"max relative difference {worst:.2e}")


# 4 -----------------------------------------------------------------------------


def test_c04_two_level_oracles(report):
    s = spin_matrices(0.5)
    gamma = 0.7
    damp = liouvillian(np.zeros((2, 2)), [JumpChannel("down", gamma, s.s_minus)])
    g = UNITS.to_internal(gamma)
    err_damp = max(
        abs(matrix_exponential_apply(damp, np.diag([1.0, 0.0]), t)[0, 0].real - np.exp(-g * t))
        for t in np.linspace(0, 10 / g, 201)
    )
    field = 5.0
    larmor = liouvillian(field * s.sz, [])
    w0 = UNITS.to_internal(field)
    plus_x = np.full((2, 2), 0.5, dtype=complex)
    err_larmor = max(
        abs(np.trace(s.sx @ matrix_exponential_apply(larmor, plus_x, t)).real - 0.5 * np.cos(w0 * t))
        for t in np.linspace(0, 10 * 2 * np.pi / w0, 401)
    )
    ok = err_damp <= 1e-9 and err_larmor <= 1e-9
    report(4, "two-level oracles", ok, f"damping {err_damp:.2e}, Larmor {err_larmor:.2e}")


# 5 -----------------------------------------------------------------------------


def test_c05_free_spin_line(report):
    config = SpectrumConfig(omega=200.0)
    free = ModelParams(j_exchange=0.0, zeeman=100.0, g_r=2.0)
    res = epr_sweep(free, config)
    peak = res.fields[np.argmax(res.signal)]
    step = config.field_grid[1] - config.field_grid[0]
    resonance = config.omega / free.g_r
    # vanishing radical relaxation: the half-width in energy units tends to epsilon
    fine = SpectrumConfig(omega=200.0, epsilon=0.1, field_grid=tuple(np.linspace(99.0, 101.0, 161)))
    widths = []
    for gamma in (1e-2, 1e-3):
        r = epr_sweep(replace(free, gamma_radical_flip=gamma), fine)
        _, hwhm, _ = fit_lorentzian(r.fields, r.signal)
        widths.append(hwhm * free.g_r)
    ok = abs(peak - resonance) <= step and abs(widths[-1] - fine.epsilon) <= 0.05 * fine.epsilon
    report(5, "free-spin EPR line", ok,
           f"peak {peak} mK vs {resonance} mK, half-width {fmt(widths)} mK -> eps {fine.epsilon}")


# 6 -----------------------------------------------------------------------------


@pytest.mark.parametrize("kind", KINDS)
def test_c06_isc_rate_ordering_during_pumping(kind, report):
    # ordering of pop_t over R_ISC at every fixed sample time inside the pumping window
    cfg = preset_config("fig2a" if kind == "SRTS" else "fig2b")
    window = Protocol(sample_times=tuple(np.linspace(0.1, cfg.protocol.t_on_end, 80)))
    pops = np.array([
        evolve_protocol(cfg.model.replace(gamma_isc=rate), window).population("t") for rate in cfg.sweep.values
    ])
    ordered = np.all(np.diff(pops, axis=0) < 0, axis=0)
    end = pops[:, -1]
    report(6, f"triplet population falls with ISC rate while pumping {kind}", bool(ordered.all()),
           f"ordered at {ordered.sum()}/{ordered.size} times in (0, 8] ns; pop_t(8 ns) for R_ISC "
           f"{fmt(cfg.sweep.values)}: {fmt(end)}")


@pytest.mark.parametrize("kind", KINDS)
def test_c06_companion_ordering_after_pumping(kind):
    # diagnostic, not a criterion: the same ordering checked once pumping has ended
    rows = populations("fig2a" if kind == "SRTS" else "fig2b")
    late = [np.interp(50.0, t, p) for _, t, p in rows]
    assert strictly(late, decreasing=True), late


# 7 -----------------------------------------------------------------------------


@pytest.mark.parametrize("kind", KINDS)
def test_c07_laser_strength(kind, report):
    rows = populations("fig3a" if kind == "SRTS" else "fig3b")
    peaks = [p.max() for _, _, p in rows]
    report(7, f"triplet population rises with laser coupling {kind}", strictly(peaks),
           f"peak pop_t for V {fmt([v for v, _, _ in rows])}: {fmt(peaks)}")


# 8 -----------------------------------------------------------------------------


@pytest.mark.parametrize("kind", KINDS)
def test_c08_decay_rate(kind, report):
    cfg = preset_config("fig4a" if kind == "SRTS" else "fig4b")
    rows = populations("fig4a" if kind == "SRTS" else "fig4b")
    taus = [decay_time(t, p, after=cfg.protocol.t_on_end) for _, t, p in rows]
    report(8, f"triplet decay time falls with decay rate {kind}", strictly(taus, decreasing=True),
           f"1/e decay time (ns) for R_d {fmt([v for v, _, _ in rows])}: {fmt(taus)}")


# 9 -----------------------------------------------------------------------------


@pytest.mark.parametrize("kind", KINDS)
def test_c09_exchange_broadening_and_saturation(kind, report):
    rows = spectra("fig5a" if kind == "SRTS" else "fig5b")
    js = [v for v, _, _ in rows]
    widths = np.array([line_width(f, s) for _, f, s in rows])
    w = dict(zip(js, widths))
    nondecreasing = bool(np.all(np.diff(widths) >= 0))
    saturating = w[500.0] / w[200.0] < w[100.0] / w[0.0]
    report(9, f"line width grows with J and saturates {kind}", nondecreasing and saturating,
           f"RMS widths (mK) for J {fmt(js)}: {fmt(widths)}; nondecreasing={nondecreasing}, "
           f"saturation={saturating}")


# 10 ----------------------------------------------------------------------------


@pytest.mark.parametrize("kind", KINDS)
def test_c10_triplet_lifetime_splitting(kind, report):
    rows = dict((v, s) for v, _, s in spectra("fig6a" if kind == "SRTS" else "fig6b"))
    counts = {r: len(count_extrema(s)) for r, s in rows.items()}
    lines = len(dominant_lines(rows[50.0]))
    ok = counts[1.0] > counts[50.0] and lines == 1
    report(10, f"long-lived triplet splits the spectrum {kind}", ok,
           f"extrema for R_t {fmt(counts)}: {fmt(counts.values())}; dominant lines at 50 mK: {lines}")


# 11 ----------------------------------------------------------------------------


def test_c11_interaction_picture(report):
    params = ModelParams()
    l_on, l_off = model_liouvillians(params)
    rho0 = initial_state(params)
    worst = 0.0
    for t in (0.5, 2.0, 8.0):
        direct = devectorize(sla.expm(l_on.matrix * t) @ vectorize(rho0))
        split = interaction_picture_propagate(l_off, l_on - l_off, rho0, t)
        worst = max(worst, np.abs(split - direct).max())
    report(11, "interaction-picture consistency SRTS", worst <= 1e-8, f"max deviation {worst:.2e}")


# 12 ----------------------------------------------------------------------------


def test_c12_determinism_across_workers(tmp_path, report):
    cfg = config_from_dict(
        {
            "experiment": "sweep",
            "model": {"j_exchange": -50.0},
            "spectrum": {"field_grid": {"start": 60, "stop": 140, "num": 17}},
            "sweep": {"parameter": "gamma_triplet_flip", "values": [1.0, 10.0, 50.0]},
        }
    )
    one = run_sweep(replace(cfg, workers=1), tmp_path / "w1")[0].read_bytes()
    eight = run_sweep(replace(cfg, workers=8), tmp_path / "w8")[0].read_bytes()
    report(12, "determinism workers 1 vs 8", one == eight, f"{len(one)} bytes each")


# 13 ----------------------------------------------------------------------------


def test_c13_time_frequency_consistency(report):
    params = ModelParams(zeeman=100.0)
    space = build_space(params.kind)
    assert space.total_dim == 10
    _, l_off = model_liouvillians(params)
    rho = evolve_protocol(params, Protocol(sample_times=(8.0,))).states[0]
    probe = epr_probe(space)
    eps = 2.0
    e = UNITS.to_internal(eps)
    taus = np.linspace(0.0, 32.0 / e, 100001)
    phi = phi_time_domain(l_off, probe, rho, taus)
    worst = 0.0
    for omega in (150.0, 200.0, 250.0):
        w = UNITS.to_internal(omega)
        ft = simpson(phi * np.exp((1j * w - e) * taus), x=taus)
        chi = chi_nonstationary(l_off, probe, rho, omega, eps).value
        worst = max(worst, abs(ft - chi) / abs(chi))
    report(13, "Fourier transform of phi vs chi", worst <= 1e-6, f"max relative difference {worst:.2e}")
