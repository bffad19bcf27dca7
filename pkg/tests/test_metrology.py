import io
import math

import numpy as np
import pytest

from rabisense import demkov, metrology, model
from rabisense.errors import ValidationError, ZeroVariance
from rabisense.metrology import SweepSpec
from rabisense.model import ProtocolConfig


def quick(**kw):
    base = dict(gamma_khz=5.0, angular_convention="plain", fock_dim=16)
    base.update(kw)
    return ProtocolConfig.from_khz(**base)


def at_kappa(cfg, kappa):
    return cfg.replace(force_yN=model.force_for_argument(cfg, kappa))


@pytest.mark.parametrize(
    "mean, var, expected",
    [
        (0.0, 1.0, 0.0),
        (math.tanh(0.8), 1 - math.tanh(0.8) ** 2, math.sinh(0.8)),
        (1 / math.sqrt(2), 0.5, 1.0),
        (-1 / math.sqrt(2), 0.5, -1.0),
    ],
)
def test_snr_examples(mean, var, expected):
    assert metrology.snr(mean, var) == pytest.approx(expected, rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("var", [0.0, -1e-3, math.nan])
def test_snr_requires_positive_variance(var):
    with pytest.raises(ZeroVariance):
        metrology.snr(0.3, var)


@pytest.fixture(scope="module")
def unforced():
    return metrology.run_protocol(quick())


@pytest.fixture(scope="module")
def forced():
    return metrology.run_protocol(at_kappa(quick(), 1.0))


def test_unforced_run_has_no_signal(unforced):
    assert abs(unforced.snr_sx) <= 1e-4
    assert unforced.sx_var == pytest.approx(1.0, abs=1e-8)
    assert unforced.fmin_yN == pytest.approx(demkov.min_force_sigma_x(quick()))


def test_variances_of_pure_final_state(forced):
    # sigma_x squares to one, so its variance is fixed by the mean
    assert forced.sx_var == pytest.approx(1 - forced.sx_mean**2, abs=1e-10)
    assert forced.Z_var > 0


def test_analytic_counterparts(forced):
    kappa = forced.kappa
    assert kappa == pytest.approx(1.0)
    assert forced.sx_mean_analytic == pytest.approx(math.tanh(1.0))
    assert forced.sx_var_analytic == pytest.approx(1 / math.cosh(1.0) ** 2)
    assert forced.Z_mean_analytic == pytest.approx(-2 * (25 / 150) * math.tanh(1.0))
    assert forced.snr_analytic == pytest.approx(math.sinh(1.0))
    d = forced.discrepancies
    assert all(math.isfinite(v) for v in d.values())
    assert d["sx_mean"] == pytest.approx(forced.sx_mean - forced.sx_mean_analytic)
    assert abs(d["sx_mean"]) < 0.05
    assert forced.snr_relative_error < 0.1


def test_sigma_x_beats_quadrature_above_twice_coupling(forced, unforced):
    assert abs(forced.snr_sx) > abs(forced.snr_Z)
    assert abs(unforced.snr_Z) <= 1e-4


def test_scaled_min_force_close_to_two_level(forced):
    assert forced.fmin_yN == pytest.approx(demkov.min_force_sigma_x(quick()), rel=0.02)
    assert forced.sensitivity_yN_rtHz == pytest.approx(forced.fmin_yN * math.sqrt(quick().t_final * 1e-3))


def test_discrepancy_shrinks_for_slower_ramp():
    fast = metrology.run_protocol(at_kappa(quick(gamma_khz=5.0), 1.0))
    slow = metrology.run_protocol(at_kappa(quick(gamma_khz=2.5), 1.0))
    assert abs(slow.discrepancies["snr_sx"]) < abs(fast.discrepancies["snr_sx"])


def test_engine_resolution():
    cfg = quick()
    assert metrology.resolve_engine(cfg, None) == "pure"
    assert metrology.resolve_engine(cfg.with_heating(0.1), None) == "lindblad"
    with pytest.raises(ValidationError):
        metrology.resolve_engine(cfg.with_heating(0.1), "pure")
    with pytest.raises(ValidationError):
        metrology.resolve_engine(cfg, "stochastic")


def test_min_force_numeric_hits_unit_snr():
    cfg = quick(fock_dim=14)
    f = metrology.min_force_numeric(cfg)
    assert abs(metrology.run_protocol(cfg.replace(force_yN=f)).snr_sx) == pytest.approx(1.0, abs=1e-3)
    assert f == pytest.approx(demkov.min_force_sigma_x(cfg), rel=0.02)


def test_sweep_spec_validation():
    cfg = quick()
    with pytest.raises(ValidationError):
        SweepSpec("temperature", (1.0,), cfg)
    with pytest.raises(ValidationError):
        SweepSpec("force", (), cfg)
    with pytest.raises(ValidationError):
        SweepSpec("heating_rate", (0.1,), cfg, engine="pure")
    assert SweepSpec("gamma", [1, 2], cfg).values == (1.0, 2.0)


def test_sweep_records_failures_in_order():
    cfg = quick(fock_dim=12)
    spec = SweepSpec("force", (0.0, 1e4, 5.0), cfg)
    res = metrology.sweep(spec)
    assert [p.axis_value for p in res.points] == [0.0, 1e4, 5.0]
    assert [p.ok for p in res.points] == [True, False, True]
    assert "TruncationError" in res.points[1].error
    buf = io.StringIO()
    res.write_csv(buf)
    rows = buf.getvalue().splitlines()
    assert rows[0] == ",".join(metrology.SWEEP_COLUMNS)
    assert rows[2].split(",")[1] == "nan"
    assert rows[2].split(",")[-1].startswith("TruncationError")
    assert rows[1].split(",")[-1] == ""


def test_sweep_is_deterministic_and_parallel_safe():
    cfg = quick(fock_dim=12)
    spec = SweepSpec("force", (2.0, 8.0, 4.0), cfg)
    texts = []
    for workers in (1, 1, 2):
        buf = io.StringIO()
        metrology.sweep(spec, workers=workers).write_csv(buf)
        texts.append(buf.getvalue())
    assert texts[0] == texts[1] == texts[2]


def test_gamma_sweep_sensitivity_grows_with_rate():
    cfg = quick(fock_dim=12, force_yN=5.0)
    res = metrology.sweep(SweepSpec("gamma", (2.5, 5.0, 10.0), cfg))
    sens = [p.result.sensitivity_yN_rtHz for p in res.points]
    assert np.all(np.diff(sens) > 0)


def test_unforced_gamma_sweep_has_zero_signal():
    res = metrology.sweep(SweepSpec("gamma", (4.0, 6.0), quick(fock_dim=12)))
    for p in res.points:
        assert abs(p.result.snr_sx) <= 1e-4


def test_omega_sweep_changes_config():
    spec = SweepSpec("omega", (120.0,), quick())
    assert spec.config_at(120.0).omega == 120.0
    assert spec.engine_at() == "pure"
    assert SweepSpec("heating_rate", (0.1,), quick()).engine_at() == "lindblad"


@pytest.mark.slow
def test_heated_sensitivity_estimate():
    # reference parameters, t_final = 14 ms, heating 0.1 per ms, quoted kHz read without 2 pi
    cfg = ProtocolConfig.from_khz(angular_convention="plain", heating_rate=0.1)
    assert cfg.t_final == pytest.approx(14.0)
    res = metrology.run_protocol(cfg.replace(force_yN=demkov.min_force_sigma_x(cfg)))
    assert res.metadata["engine"] == "lindblad"
    assert abs(res.snr_sx) < 1.0
    assert res.sensitivity_yN_rtHz == pytest.approx(1.9, rel=0.3)
