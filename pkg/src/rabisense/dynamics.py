"""
Schrodinger and Lindblad evolution along the transverse-field ramp.

Both solvers integrate in the interaction picture with respect to
``omega a^dag a`` by default. That removes the largest frequencies from the
right-hand side (the explicit integrator is otherwise stability-limited by
``omega * N``) and leaves the heating dissipators unchanged. States are
rotated back before any observable is sampled, so trajectories are always
reported in the frame of the model Hamiltonian. ``frame="direct"``
integrates the model Hamiltonian as is and serves as a cross-check.

Operator actions use slicing on the (spin, fock) tensor layout instead of
dense matrix products; this keeps a density-matrix right-hand side at
roughly the cost of a handful of elementwise passes.
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, TextIO, Union

import numpy as np
from scipy.integrate import DOP853, RK45

from . import hilbert
from .csvio import write_table
from .spectrum import doublet_gap_prefactor
from .errors import PositivityViolation, ToleranceNotMet, TruncationError, ValidationError
from .hilbert import DensityMatrix, StateVector
from .model import (
    ProtocolConfig,
    cat_components,
    force_term_coefficient,
    initial_ground_state,
    signal_argument,
    static_part,
)

log = logging.getLogger(__name__)

DEFAULT_SAMPLE_COUNT = 400
TRAJECTORY_COLUMNS = ("t_ms", "sx", "sy", "sz", "Z", "nbar_phonon", "norm", "p_plus", "p_minus")

NORM_DRIFT_LIMIT = 1e-8
TRACE_DRIFT_LIMIT = 1e-6
POSITIVITY_LIMIT = -1e-6
TRUNCATION_LIMIT = 1e-6

_METHODS = {"DOP853": (DOP853, 8), "RK45": (RK45, 5)}


@dataclass(frozen=True)
class IntegratorSettings:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = 1.0  # ms
    method: str = "DOP853"
    frame: str = "interaction"
    check_invariants: bool = True

    def __post_init__(self):
        if not (0 < self.rel_tol <= 1e-2 and 0 < self.abs_tol <= 1e-2):
            raise ValidationError("tolerances must lie in (0, 1e-2]")
        if not self.max_step > 0:
            raise ValidationError("max_step must be positive")
        if self.method not in _METHODS:
            raise ValidationError(f"method must be one of {sorted(_METHODS)}")
        if self.frame not in ("interaction", "direct"):
            raise ValidationError("frame must be 'interaction' or 'direct'")

    @property
    def method_order(self) -> int:
        return _METHODS[self.method][1]

    @classmethod
    def from_config(cls, cfg: ProtocolConfig, **overrides) -> IntegratorSettings:
        return cls(rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol, max_step=cfg.max_step, **overrides)

    def refined(self) -> IntegratorSettings:
        """Half the step cap and a tenth of the tolerances."""
        return replace(self, rel_tol=self.rel_tol * 0.1, abs_tol=self.abs_tol * 0.1, max_step=self.max_step / 2)


@dataclass
class Trajectory:
    times: np.ndarray
    records: dict[str, np.ndarray]
    final_state: Union[StateVector, DensityMatrix]
    metadata: dict = field(default_factory=dict)

    def __getitem__(self, key: str) -> np.ndarray:
        return self.records[key]

    def final(self, key: str) -> float:
        return float(self.records[key][-1])

    def write_csv(self, stream: TextIO) -> None:
        cols = [self.times] + [self.records[k] for k in TRAJECTORY_COLUMNS[1:]]
        write_table(stream, TRAJECTORY_COLUMNS, zip(*cols))

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


class _FrameOps:
    """Precomputed slicing kernels for one config."""

    def __init__(self, cfg: ProtocolConfig):
        n_f = cfg.hilbert.fock_dim
        self.N = n_f
        self.dim = 2 * n_f
        self.omega = cfg.omega
        self.g = cfg.g
        self.c = force_term_coefficient(cfg.trap, cfg.force_yN)
        self.schedule = cfg.schedule
        self.sq = np.sqrt(np.arange(1, n_f, dtype=float))
        self.number = np.tile(np.arange(n_f, dtype=float), 2)
        heating = cfg.heating
        if heating is not None and heating.rate > 0:
            k_down = heating.gamma_dec * (heating.nbar + 1)
            k_up = heating.gamma_dec * heating.nbar
            n = np.arange(n_f, dtype=float)
            aad = np.append(n[1:], 0.0)  # truncated a a^dag
            self.k_down, self.k_up = k_down, k_up
            self.jump_w = np.outer(self.sq, self.sq)[None, :, None, :]
            self.anti = -0.5 * (
                k_down * (n[None, :, None, None] + n[None, None, None, :])
                + k_up * (aad[None, :, None, None] + aad[None, None, None, :])
            )
        else:
            self.k_down = self.k_up = 0.0

    def apply_h(self, x: np.ndarray, t: float) -> np.ndarray:
        """Interaction-picture Hamiltonian acting on axes (0, 1) of ``x``."""
        em = np.exp(-1j * self.omega * t)
        ep = em.conjugate()
        hw = 0.5 * self.schedule.omega_y0 * math.exp(-self.schedule.gamma * t)
        sq = self.sq.reshape((-1,) + (1,) * (x.ndim - 2))
        bx = np.empty_like(x)
        bx[:, :-1] = (em * sq) * x[:, 1:]
        bx[:, -1] = 0
        bx[:, 1:] += (ep * sq) * x[:, :-1]
        out = np.empty_like(x)
        out[0] = self.c * bx[0] + self.g * bx[1] - 1j * hw * x[1]
        out[1] = self.g * bx[0] + self.c * bx[1] + 1j * hw * x[0]
        return out

    def pure_rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        return (-1j * self.apply_h(y.reshape(2, self.N), t)).ravel()

    def lindblad_rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        n_f = self.N
        r = y.reshape(2, n_f, 2, n_f)
        # -i H rho + h.c.; the result is Hermitian by construction, so
        # rounding-level anti-Hermitian parts of rho are never amplified
        k = -1j * self.apply_h(r, t)
        if self.k_down or self.k_up:
            k += (0.5 * self.anti) * r
            k[:, :-1, :, :-1] += (0.5 * self.k_down * self.jump_w) * r[:, 1:, :, 1:]
            k[:, 1:, :, 1:] += (0.5 * self.k_up * self.jump_w) * r[:, :-1, :, :-1]
        return (k + k.conj().transpose(2, 3, 0, 1)).ravel()

    def to_model_frame(self, t: float) -> np.ndarray:
        """Diagonal of exp(-i omega n t), mapping interaction-picture states back."""
        return np.exp(-1j * self.omega * self.number * t)


class _DirectOps:
    def __init__(self, cfg: ProtocolConfig):
        self.h0 = static_part(cfg)
        self.sy = hilbert.pauli("y", cfg.hilbert).entries
        self.schedule = cfg.schedule
        self.dim = cfg.hilbert.total_dim
        heating = cfg.heating
        a = hilbert.annihilation(cfg.hilbert).entries
        self.a, self.ad = a, a.conj().T
        if heating is not None and heating.rate > 0:
            self.k_down = heating.gamma_dec * (heating.nbar + 1)
            self.k_up = heating.gamma_dec * heating.nbar
        else:
            self.k_down = self.k_up = 0.0
        self.ada = self.ad @ a
        self.aad = a @ self.ad

    def h(self, t):
        return self.h0 + (0.5 * self.schedule.omega_y0 * math.exp(-self.schedule.gamma * t)) * self.sy

    def pure_rhs(self, t, y):
        return -1j * (self.h(t) @ y)

    def lindblad_rhs(self, t, y):
        r = y.reshape(self.dim, self.dim)
        h = self.h(t)
        out = -1j * (h @ r - r @ h)
        if self.k_down or self.k_up:
            a, ad = self.a, self.ad
            out += self.k_down * (a @ r @ ad - 0.5 * (self.ada @ r + r @ self.ada))
            out += self.k_up * (ad @ r @ a - 0.5 * (self.aad @ r + r @ self.aad))
        return out.ravel()

    def to_model_frame(self, t):
        return np.ones(self.dim, dtype=complex)


def _integrate(
    rhs: Callable,
    y0: np.ndarray,
    times: np.ndarray,
    settings: IntegratorSettings,
    on_sample: Callable[[int, float, np.ndarray], None],
) -> int:
    """Step through ``times`` segment by segment so every sample is a true step end."""
    solver_cls = _METHODS[settings.method][0]
    y = y0
    on_sample(0, float(times[0]), y)
    h_next = None
    nfev = 0
    for k in range(1, len(times)):
        t0, t1 = float(times[k - 1]), float(times[k])
        solver = solver_cls(
            rhs,
            t0,
            y,
            t1,
            max_step=settings.max_step,
            rtol=settings.rel_tol,
            atol=settings.abs_tol,
            first_step=None if h_next is None else min(h_next, t1 - t0),
        )
        h_seg = 0.0
        while solver.status == "running":
            msg = solver.step()
            if solver.status == "failed":
                raise ToleranceNotMet(f"integrator failed near t = {solver.t:.6g} ms: {msg}")
            h_seg = max(h_seg, solver.step_size or 0.0)
        nfev += solver.nfev
        h_next = h_seg if h_seg > 0 else None
        y = solver.y
        on_sample(k, t1, y)
    return nfev


def _sample_times(cfg: ProtocolConfig, sample_count: int) -> np.ndarray:
    if sample_count < 2:
        raise ValidationError("sample_count must be >= 2")
    return np.linspace(0.0, cfg.t_final, int(sample_count))


class _Observables:
    def __init__(self, cfg: ProtocolConfig, project: bool = True):
        spec = cfg.hilbert
        self.ops = {
            "sx": hilbert.pauli("x", spec).entries,
            "sy": hilbert.pauli("y", spec).entries,
            "sz": hilbert.pauli("z", spec).entries,
        }
        self.a = hilbert.annihilation(spec).entries
        self.number = np.tile(np.arange(spec.fock_dim, dtype=float), 2)
        self.top = np.tile(np.arange(spec.fock_dim) >= spec.fock_dim - 2, 2)
        if project:
            plus, minus = cat_components(cfg)
            self.cats = (plus.amplitudes, minus.amplitudes)
        else:
            self.cats = None

    def pure(self, psi: np.ndarray) -> dict:
        out = {k: float(np.vdot(psi, m @ psi).real) for k, m in self.ops.items()}
        a_mean = np.vdot(psi, self.a @ psi)
        out["Z"] = float(2 * a_mean.real)
        probs = np.abs(psi) ** 2
        out["nbar_phonon"] = float(probs @ self.number)
        out["norm"] = float(probs.sum())
        out["top"] = float(probs[self.top].sum())
        if self.cats:
            out["p_plus"] = float(abs(np.vdot(self.cats[0], psi)) ** 2)
            out["p_minus"] = float(abs(np.vdot(self.cats[1], psi)) ** 2)
        else:
            out["p_plus"] = out["p_minus"] = math.nan
        return out

    def mixed(self, rho: np.ndarray) -> dict:
        out = {k: float(np.einsum("ij,ji->", rho, m).real) for k, m in self.ops.items()}
        a_mean = np.einsum("ij,ji->", rho, self.a)
        out["Z"] = float(2 * a_mean.real)
        diag = np.diag(rho).real
        out["nbar_phonon"] = float(diag @ self.number)
        out["norm"] = float(diag.sum())
        out["top"] = float(diag[self.top].sum())
        if self.cats:
            out["p_plus"] = float(np.vdot(self.cats[0], rho @ self.cats[0]).real)
            out["p_minus"] = float(np.vdot(self.cats[1], rho @ self.cats[1]).real)
        else:
            out["p_plus"] = out["p_minus"] = math.nan
        return out


def _ops_for(cfg: ProtocolConfig, settings: IntegratorSettings):
    return _FrameOps(cfg) if settings.frame == "interaction" else _DirectOps(cfg)


def _base_metadata(cfg: ProtocolConfig, settings: IntegratorSettings, engine: str) -> dict:
    return {
        "engine": engine,
        "method": settings.method,
        "method_order": settings.method_order,
        "frame": settings.frame,
        "kappa": signal_argument(cfg),
        "omega_y0": cfg.schedule.omega_y0,
    }


def evolve_pure(
    cfg: ProtocolConfig,
    settings: Optional[IntegratorSettings] = None,
    sample_count: int = DEFAULT_SAMPLE_COUNT,
    initial: Optional[StateVector] = None,
    project: bool = True,
) -> Trajectory:
    """Integrate i d|psi>/dt = H(t)|psi> from the t = 0 ground state."""
    if cfg.heating is not None and cfg.heating.rate > 0:
        raise ValidationError("evolve_pure requires a config without heating; use evolve_lindblad")
    settings = settings or IntegratorSettings.from_config(cfg)
    metadata = _base_metadata(cfg, settings, "pure")
    if initial is None:
        prep = initial_ground_state(cfg)
        initial = prep.state
        metadata.update(delta_i=prep.gap, delta_i_doublet=doublet_gap_prefactor(cfg), ground_overlap=prep.overlap)
    if initial.dim != cfg.hilbert.total_dim:
        raise ValidationError("initial state dimension does not match the Hilbert space")
    ops = _ops_for(cfg, settings)
    obs = _Observables(cfg, project)
    times = _sample_times(cfg, sample_count)
    rows: list[dict] = [None] * len(times)
    final = {}

    def on_sample(k, t, y):
        psi = ops.to_model_frame(t) * y
        rows[k] = obs.pure(psi)
        if rows[k]["top"] > TRUNCATION_LIMIT:
            raise TruncationError(f"top-two Fock population {rows[k]['top']:.2e} at t = {t:.4g} ms")
        final["psi"] = psi

    nfev = _integrate(ops.pure_rhs, np.array(initial.amplitudes, dtype=complex), times, settings, on_sample)
    traj = _assemble(times, rows, StateVector(final["psi"]), metadata)
    drift = float(np.max(np.abs(traj.records["norm"] - traj.records["norm"][0])))
    traj.metadata.update(nfev=nfev, max_norm_drift=drift)
    if settings.check_invariants and drift > NORM_DRIFT_LIMIT:
        raise ToleranceNotMet(f"norm drift {drift:.2e} exceeds {NORM_DRIFT_LIMIT:g}; tighten tolerances")
    log.debug("evolve_pure: %d rhs evaluations, norm drift %.2e", nfev, drift)
    return traj


def evolve_lindblad(
    cfg: ProtocolConfig,
    settings: Optional[IntegratorSettings] = None,
    sample_count: int = DEFAULT_SAMPLE_COUNT,
    initial: Union[StateVector, DensityMatrix, None] = None,
    project: bool = True,
) -> Trajectory:
    """Integrate the heating master equation for the density matrix.

    Dissipators are (gamma_dec/2)(nbar+1) D[a] and (gamma_dec/2) nbar D[a^dag]
    with gamma_dec = rate / nbar.
    """
    if cfg.heating is None:
        raise ValidationError("evolve_lindblad requires cfg.heating (rate may be 0)")
    settings = settings or IntegratorSettings.from_config(cfg)
    metadata = _base_metadata(cfg, settings, "lindblad")
    metadata.update(heating_rate=cfg.heating.rate, nbar=cfg.heating.nbar, gamma_dec=cfg.heating.gamma_dec)
    if initial is None:
        prep = initial_ground_state(cfg)
        initial = prep.state
        metadata.update(delta_i=prep.gap, delta_i_doublet=doublet_gap_prefactor(cfg), ground_overlap=prep.overlap)
    rho0 = initial.to_density() if isinstance(initial, StateVector) else initial
    if rho0.dim != cfg.hilbert.total_dim:
        raise ValidationError("initial state dimension does not match the Hilbert space")
    ops = _ops_for(cfg, settings)
    obs = _Observables(cfg, project)
    times = _sample_times(cfg, sample_count)
    rows: list[dict] = [None] * len(times)
    final = {}
    worst = {"min_eig": math.inf, "herm": 0.0}
    d = cfg.hilbert.total_dim

    def on_sample(k, t, y):
        ph = ops.to_model_frame(t)
        rho = (ph[:, None] * y.reshape(d, d)) * ph.conj()[None, :]
        rows[k] = obs.mixed(rho)
        if rows[k]["top"] > TRUNCATION_LIMIT:
            raise TruncationError(f"top-two Fock population {rows[k]['top']:.2e} at t = {t:.4g} ms")
        dm = DensityMatrix(rho)
        worst["herm"] = max(worst["herm"], dm.hermiticity_defect())
        if settings.check_invariants:
            lam = dm.min_eigenvalue()
            worst["min_eig"] = min(worst["min_eig"], lam)
            if lam < POSITIVITY_LIMIT:
                raise PositivityViolation(f"min eigenvalue {lam:.2e} at t = {t:.4g} ms")
        final["rho"] = rho

    nfev = _integrate(ops.lindblad_rhs, np.array(rho0.entries, dtype=complex).ravel(), times, settings, on_sample)
    traj = _assemble(times, rows, DensityMatrix(final["rho"]), metadata)
    drift = float(np.max(np.abs(traj.records["norm"] - traj.records["norm"][0])))
    traj.metadata.update(
        nfev=nfev, max_trace_drift=drift, min_eigenvalue=worst["min_eig"], max_hermiticity_defect=worst["herm"]
    )
    if settings.check_invariants and drift > TRACE_DRIFT_LIMIT:
        raise ToleranceNotMet(f"trace drift {drift:.2e} exceeds {TRACE_DRIFT_LIMIT:g}")
    log.debug("evolve_lindblad: %d rhs evaluations, trace drift %.2e", nfev, drift)
    return traj


def _assemble(times, rows, final_state, metadata) -> Trajectory:
    records = {k: np.array([r[k] for r in rows]) for k in TRAJECTORY_COLUMNS[1:]}
    records["top_population"] = np.array([r["top"] for r in rows])
    return Trajectory(times, records, final_state, metadata)
