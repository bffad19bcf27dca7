import io
import math

import numpy as np
import pytest
from scipy import stats

from rabisense import model, spectrum
from rabisense.errors import ValidationError
from rabisense.model import ProtocolConfig


def slow_trap(gamma=1.5, **kw):
    return ProtocolConfig.from_khz(
        g_khz=25.0, omega_khz=45.0, omega_y0_khz=225.0, gamma_khz=gamma, angular_convention="plain", **kw
    )


def test_slices_are_ordered_and_consistent():
    cfg = slow_trap()
    slices = spectrum.spectrum_along_ramp(cfg, k=5, sample_count=25)
    assert len(slices) == 25
    assert slices[0].t == 0.0 and slices[-1].t == pytest.approx(cfg.t_final)
    for s in slices:
        assert list(s.eigenvalues) == sorted(s.eigenvalues)
        assert s.delta_gap == pytest.approx(s.eigenvalues[1] - s.eigenvalues[0], abs=1e-12)
        assert s.delta_ge == pytest.approx(s.eigenvalues[2] - s.eigenvalues[0])
        assert s.epsilon >= 0
        assert s.epsilon == s.epsilon_levels[1]


def test_uncoupled_gap_equals_field():
    cfg = ProtocolConfig.from_khz(g_khz=0.0, angular_convention="plain", fock_dim=10)
    times = np.linspace(1.0, cfg.t_final, 20)  # field already below omega
    for s in spectrum.spectrum_along_ramp(cfg, times=times):
        assert s.delta_gap == pytest.approx(225.0 * math.exp(-s.t), rel=1e-9, abs=1e-12)
        assert s.epsilon == pytest.approx(0.0, abs=1e-15)


def test_doublet_closes_at_end_of_ramp():
    cfg = ProtocolConfig.from_khz(angular_convention="plain")
    end = spectrum.spectrum_along_ramp(cfg, times=[cfg.t_final])[0]
    assert end.delta_gap < 1e-4 * cfg.omega


def test_doublet_splitting_decays_with_ramp_rate():
    cfg = ProtocolConfig.from_khz(angular_convention="plain")
    times = np.linspace(4.0, 10.0, 30)
    gaps = [spectrum.ground_gap(cfg, t) for t in times]
    fit = stats.linregress(times, np.log(gaps))
    assert fit.rvalue**2 > 0.95
    assert fit.slope == pytest.approx(-cfg.schedule.gamma, rel=0.02)


def test_adiabatic_parameter_small_for_slow_ramps():
    for gamma in (0.5, 1.0, 1.5):
        cfg = slow_trap(gamma)
        eps = [s.epsilon for s in spectrum.spectrum_along_ramp(cfg, sample_count=150)]
        assert max(eps) < 0.1


def test_halving_rate_halves_early_adiabatic_parameter():
    fast, slow = slow_trap(1.5), slow_trap(0.75)
    for t in (0.05, 0.1, 0.2):
        ratio = spectrum.adiabatic_parameter(slow, t) / spectrum.adiabatic_parameter(fast, t)
        assert 0.4 < ratio < 0.6


def test_opposite_parity_levels_decouple():
    cfg = slow_trap()
    s = spectrum.spectrum_along_ramp(cfg, times=[0.5, 2.0])
    for sl in s:
        assert sl.epsilon_levels[0] < 1e-12  # level 1
        assert sl.epsilon_levels[2] < 1e-12  # level 3
        assert sl.epsilon_levels[1] > 0


def test_reference_level_selection():
    cfg = slow_trap()
    s3 = spectrum.spectrum_along_ramp(cfg, times=[1.0], reference_level=3)[0]
    s2 = spectrum.spectrum_along_ramp(cfg, times=[1.0])[0]
    assert s3.delta_ge == pytest.approx(s3.eigenvalues[3] - s3.eigenvalues[0])
    assert s3.epsilon == pytest.approx(s2.epsilon_levels[2])
    with pytest.raises(ValidationError):
        spectrum.spectrum_along_ramp(cfg, k=3)
    with pytest.raises(ValidationError):
        spectrum.spectrum_along_ramp(cfg, k=4, reference_level=4)
    with pytest.raises(ValidationError):
        spectrum.adiabatic_parameter(cfg, 1.0, reference_level=0)


def test_eigen_residuals():
    cfg = slow_trap()
    h = model.hamiltonian_at(cfg, 1.0).entries
    evals, evecs = spectrum._eigensystem(cfg, 1.0, 4)
    resid = np.linalg.norm(h @ evecs - evecs * evals, axis=0)
    assert resid.max() <= 1e-9 * np.linalg.norm(h, 2)


def test_eigenvector_phases_continuous():
    cfg = slow_trap()
    times = np.linspace(0.0, 3.0, 40)
    vecs = spectrum.eigenvectors_along_ramp(cfg, times)
    for a, b in zip(vecs[:-1], vecs[1:]):
        ov = np.einsum("ij,ij->j", a.conj(), b)
        assert np.all(ov.real > 0)
        np.testing.assert_allclose(ov.imag, 0, atol=1e-10)


def test_force_lowers_ground_energy_at_zero_field():
    cfg = ProtocolConfig.from_khz(angular_convention="plain", fock_dim=20)
    forced = cfg.replace(force_yN=2.0)
    e0 = np.linalg.eigvalsh(model.hamiltonian_for_field(cfg, 0.0).entries)[0]
    e0f = np.linalg.eigvalsh(model.hamiltonian_for_field(forced, 0.0).entries)[0]
    assert e0f <= e0
    c = model.force_term_coefficient(cfg.trap, 2.0)
    assert e0f - e0 == pytest.approx(-model.effective_bias(forced), abs=c * c / cfg.omega * 1.01)


def test_doublet_gap_prefactor():
    cfg = ProtocolConfig.from_khz(angular_convention="plain")
    pref = spectrum.doublet_gap_prefactor(cfg)
    assert pref == pytest.approx(225.0 * math.exp(-2 * (25 / 150) ** 2), rel=2e-3)
    # the t = 0 splitting is a phonon sideband here, not the doublet
    assert spectrum.ground_gap(cfg, 0.0) < 0.7 * pref


def test_csv_layout():
    cfg = ProtocolConfig.from_khz(angular_convention="plain", fock_dim=12)
    buf = io.StringIO()
    spectrum.write_csv(spectrum.spectrum_along_ramp(cfg, sample_count=5), buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t_ms,E0,E1,E2,E3,delta_gap,delta_ge,epsilon"
    assert len(lines) == 6
    assert all(len(line.split(",")) == 8 for line in lines)
    assert float(lines[1].split(",")[0]) == 0.0
