"""
Signal-to-noise, minimum detectable force and sensitivity from full runs,
together with parameter sweeps.

Run results always carry the closed-form two-level prediction next to the
simulated numbers so the two can be compared directly.
"""

from __future__ import annotations

import concurrent.futures
import math
from dataclasses import dataclass, field
from typing import Optional, TextIO

import numpy as np
from scipy.optimize import root_scalar

from . import demkov, hilbert
from .csvio import write_table
from .dynamics import IntegratorSettings, Trajectory, evolve_lindblad, evolve_pure
from .errors import NUMERICAL_ERRORS, ToleranceNotMet, ValidationError, ZeroVariance
from .hilbert import DensityMatrix, StateVector
from .model import HeatingSpec, ProtocolConfig, force_for_argument

ENGINES = ("pure", "lindblad")
SWEEP_AXES = ("gamma", "force", "heating_rate", "omega")
SWEEP_COLUMNS = (
    "axis_value",
    "sx_mean",
    "sx_var",
    "Z_mean",
    "Z_var",
    "snr_sx",
    "snr_Z",
    "snr_analytic",
    "fmin_yN",
    "sensitivity_yN_rtHz",
    "error",
)


def snr(mean: float, variance: float) -> float:
    """Signed ratio mean / sqrt(variance).

    Raises
    ------
    ZeroVariance
        If the variance is not strictly positive.
    """
    if not variance > 0:
        raise ZeroVariance(f"variance {variance!r} is not positive")
    return mean / math.sqrt(variance)


@dataclass(frozen=True)
class RunResult:
    """Final-time statistics of one protocol run and their two-level counterparts."""

    force_yN: float
    kappa: float
    sx_mean: float
    sx_var: float
    Z_mean: float
    Z_var: float
    p_plus: float
    p_minus: float
    sx_mean_analytic: float
    sx_var_analytic: float
    Z_mean_analytic: float
    Z_var_analytic: float
    t_final: float
    repetition_ms: float
    fmin_analytic_yN: float = math.nan
    metadata: dict = field(default_factory=dict, compare=False)
    trajectory: Optional[Trajectory] = field(default=None, compare=False, repr=False)

    @property
    def snr_sx(self) -> float:
        return _safe_snr(self.sx_mean, self.sx_var)

    @property
    def snr_Z(self) -> float:
        return _safe_snr(self.Z_mean, self.Z_var)

    @property
    def snr_analytic(self) -> float:
        return math.sinh(self.kappa)

    @property
    def snr_relative_error(self) -> float:
        ref = self.snr_analytic
        return abs(self.snr_sx - ref) / abs(ref) if ref else abs(self.snr_sx)

    @property
    def discrepancies(self) -> dict:
        """Simulated minus two-level value for each reported statistic."""
        return {
            "sx_mean": self.sx_mean - self.sx_mean_analytic,
            "sx_var": self.sx_var - self.sx_var_analytic,
            "Z_mean": self.Z_mean - self.Z_mean_analytic,
            "Z_var": self.Z_var - self.Z_var_analytic,
            "snr_sx": self.snr_sx - self.snr_analytic,
        }

    @property
    def fmin_yN(self) -> float:
        """Force giving SNR = 1, scaled from this run through the sinh law.

        Uses F * asinh(1) / asinh(|SNR|), which reproduces the numerical
        threshold whenever the SNR grows as sinh of a quantity linear in the
        force, including under heating. A run without force carries no
        calibration, so the two-level value is returned instead.
        """
        s = self.snr_sx
        if self.force_yN == 0 or not math.isfinite(s) or s == 0:
            return self.fmin_analytic_yN
        return abs(self.force_yN) * demkov.MIN_SNR_ARGUMENT / math.asinh(abs(s))

    @property
    def sensitivity_yN_rtHz(self) -> float:
        return demkov.sensitivity_from_force(self.fmin_yN, self.repetition_ms)

    def csv_row(self, axis_value: float) -> tuple:
        return (
            axis_value,
            self.sx_mean,
            self.sx_var,
            self.Z_mean,
            self.Z_var,
            self.snr_sx,
            self.snr_Z,
            self.snr_analytic,
            self.fmin_yN,
            self.sensitivity_yN_rtHz,
            "",
        )


def _safe_snr(mean: float, var: float) -> float:
    try:
        return snr(mean, var)
    except ZeroVariance:
        return math.copysign(math.inf, mean) if mean else math.nan


def _moments(state, ops: dict) -> dict:
    """Mean and variance <A^2> - <A>^2 of each operator, for a pure or mixed state."""
    out = {}
    if isinstance(state, StateVector):
        psi = state.amplitudes
        for name, m in ops.items():
            v = m @ psi
            mean = float(np.vdot(psi, v).real)
            out[name] = (mean, float(np.vdot(v, v).real) - mean * mean)
    elif isinstance(state, DensityMatrix):
        rho = state.entries
        for name, m in ops.items():
            rm = rho @ m
            mean = float(np.trace(rm).real)
            out[name] = (mean, float(np.einsum("ij,ji->", rm, m).real) - mean * mean)
    else:
        raise ValidationError(f"unsupported state type {type(state).__name__}")
    return out


def resolve_engine(cfg: ProtocolConfig, engine: Optional[str]) -> str:
    if engine is None:
        return "lindblad" if cfg.heating is not None and cfg.heating.rate > 0 else "pure"
    if engine not in ENGINES:
        raise ValidationError(f"engine must be one of {ENGINES}, got {engine!r}")
    if engine == "pure" and cfg.heating is not None and cfg.heating.rate > 0:
        raise ValidationError("a heated config needs the lindblad engine")
    return engine


def run_protocol(
    cfg: ProtocolConfig,
    settings: Optional[IntegratorSettings] = None,
    engine: Optional[str] = None,
    sample_count: int = 2,
    keep_trajectory: bool = False,
) -> RunResult:
    """Run the full ramp and evaluate sigma_x and Z statistics at the end.

    ``engine`` defaults to ``"lindblad"`` when ``cfg`` has a positive heating
    rate and ``"pure"`` otherwise. Forcing ``"lindblad"`` on an unheated
    config integrates the master equation with a zero rate.
    """
    engine = resolve_engine(cfg, engine)
    if engine == "lindblad":
        if cfg.heating is None:
            cfg = cfg.replace(heating=HeatingSpec(0.0))
        traj = evolve_lindblad(cfg, settings, sample_count=sample_count)
    else:
        traj = evolve_pure(cfg, settings, sample_count=sample_count)
    spec = cfg.hilbert
    stats = _moments(
        traj.final_state,
        {"sx": hilbert.pauli("x", spec).entries, "Z": hilbert.quadrature(spec).entries},
    )
    params = demkov.DemkovParams.from_kappa(traj.metadata["kappa"], cfg.schedule.gamma, delta_i=0.0)
    sx_a, sx_var_a = demkov.signal_sigma_x(params)
    z_a, z_var_a = demkov.signal_quadrature(params, cfg.g, cfg.omega)
    return RunResult(
        force_yN=cfg.force_yN,
        kappa=params.kappa,
        sx_mean=stats["sx"][0],
        sx_var=stats["sx"][1],
        Z_mean=stats["Z"][0],
        Z_var=stats["Z"][1],
        p_plus=traj.final("p_plus"),
        p_minus=traj.final("p_minus"),
        sx_mean_analytic=sx_a,
        sx_var_analytic=sx_var_a,
        Z_mean_analytic=z_a,
        Z_var_analytic=z_var_a,
        t_final=cfg.t_final,
        repetition_ms=demkov.repetition_time(cfg),
        fmin_analytic_yN=demkov.min_force_sigma_x(cfg),
        metadata=dict(traj.metadata),
        trajectory=traj if keep_trajectory else None,
    )


def min_force_numeric(
    cfg: ProtocolConfig,
    settings: Optional[IntegratorSettings] = None,
    engine: Optional[str] = None,
    rel_tol: float = 1e-4,
    max_runs: int = 12,
) -> float:
    """Force (yN) at which the simulated sigma_x SNR equals one.

    Secant iteration started from the two-level estimate and its sinh-law
    correction after one run.
    """
    f0 = demkov.min_force_sigma_x(cfg)
    if not math.isfinite(f0):
        return math.inf
    first = run_protocol(cfg.replace(force_yN=f0), settings, engine)
    f1 = first.fmin_yN
    if not math.isfinite(f1):
        raise ZeroVariance("no signal at the two-level threshold force")

    def excess(force):
        return abs(run_protocol(cfg.replace(force_yN=force), settings, engine).snr_sx) - 1.0

    if abs(f1 - f0) <= rel_tol * f0:
        return f1
    sol = root_scalar(excess, method="secant", x0=f1, x1=f0, rtol=rel_tol, maxiter=max_runs)
    if not sol.converged:
        raise ToleranceNotMet(f"threshold search did not converge: {sol.flag}")
    return float(sol.root)


@dataclass(frozen=True)
class SweepSpec:
    """One-dimensional parameter sweep.

    ``values`` are in internal units: rad/ms for ``gamma`` and ``omega``,
    yN for ``force`` and 1/ms for ``heating_rate``. A gamma sweep keeps the
    base product gamma * t_final.
    """

    axis: str
    values: tuple
    base: ProtocolConfig
    engine: Optional[str] = None

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ValidationError(f"axis must be one of {SWEEP_AXES}, got {self.axis!r}")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not self.values:
            raise ValidationError("sweep needs at least one value")
        if self.engine is not None and self.engine not in ENGINES:
            raise ValidationError(f"engine must be one of {ENGINES}")
        if self.axis == "heating_rate" and self.engine == "pure":
            raise ValidationError("a heating sweep needs the lindblad engine")

    def config_at(self, value: float) -> ProtocolConfig:
        if self.axis == "gamma":
            return self.base.with_gamma(value)
        if self.axis == "force":
            return self.base.replace(force_yN=value)
        if self.axis == "omega":
            return self.base.replace(omega=value)
        return self.base.with_heating(value)

    def engine_at(self) -> str:
        if self.axis == "heating_rate":
            return "lindblad"
        return self.engine or ("lindblad" if self.base.heating is not None else "pure")


@dataclass(frozen=True)
class SweepPoint:
    axis_value: float
    result: Optional[RunResult]
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.result is not None

    def csv_row(self) -> tuple:
        if self.result is None:
            return (self.axis_value,) + (math.nan,) * (len(SWEEP_COLUMNS) - 2) + (self.error,)
        return self.result.csv_row(self.axis_value)


@dataclass(frozen=True)
class SweepResult:
    axis: str
    points: tuple

    @property
    def failed(self) -> list:
        return [p for p in self.points if not p.ok]

    def write_csv(self, stream: TextIO) -> None:
        write_table(stream, SWEEP_COLUMNS, (p.csv_row() for p in self.points))


def _run_point(args) -> SweepPoint:
    spec, value, settings = args
    try:
        cfg = spec.config_at(value)
        return SweepPoint(value, run_protocol(cfg, settings, spec.engine_at()))
    except NUMERICAL_ERRORS as exc:
        return SweepPoint(value, None, f"{type(exc).__name__}: {exc}")


def sweep(spec: SweepSpec, settings: Optional[IntegratorSettings] = None, workers: int = 1) -> SweepResult:
    """Run every point of ``spec``; output order follows ``spec.values``.

    Numerical failures are recorded per point and do not stop the sweep.
    Invalid parameters at a point raise immediately. ``workers > 1`` runs
    points in separate processes.
    """
    for v in spec.values:
        spec.config_at(v)  # validate up front
    jobs = [(spec, v, settings) for v in spec.values]
    if workers > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(_run_point, jobs))
    else:
        points = [_run_point(j) for j in jobs]
    return SweepResult(spec.axis, tuple(points))


def with_force_for_argument(cfg: ProtocolConfig, kappa: float) -> ProtocolConfig:
    """Copy of ``cfg`` whose force gives the signal argument ``kappa``."""
    return cfg.replace(force_yN=force_for_argument(cfg, kappa))


__all__ = [
    "ENGINES",
    "SWEEP_AXES",
    "SWEEP_COLUMNS",
    "RunResult",
    "SweepPoint",
    "SweepResult",
    "SweepSpec",
    "min_force_numeric",
    "resolve_engine",
    "run_protocol",
    "snr",
    "sweep",
    "with_force_for_argument",
]
