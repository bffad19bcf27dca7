"""
Time-dependent Rabi Hamiltonian with a force perturbation.

All Hamiltonians are returned divided by hbar, in rad/ms:

    H(t) = w a^dag a + (W(t)/2) sigma_y + g sigma_x (a + a^dag) + c (a + a^dag)

with ``W(t) = W0 exp(-gamma t)`` the transverse-field ramp and
``c = z0 F / (2 hbar)`` the force coefficient.
"""

from __future__ import annotations

import dataclasses
import functools
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import hilbert
from .errors import DegenerateGroundState, ValidationError
from .hilbert import DEFAULT_FOCK_DIM, HilbertSpec, OperatorMatrix, StateVector
from .units import (
    AMU,
    HBAR,
    MU_B,
    YOCTO,
    convention_factor,
    ground_state_spread,
    khz_to_rad_per_ms,
    mhz_to_rad_per_s,
)

DEFAULT_T_FINAL_FACTOR = 14.0
DEFAULT_NBAR = 1000.0
# slack on the [0, t_final] check so sample grids built with linspace pass
_T_SLACK = 1e-9


@dataclass(frozen=True)
class RampSchedule:
    """Exponential ramp W(t) = omega_y0 * exp(-gamma t) on [0, t_final]."""

    omega_y0: float  # rad/ms
    gamma: float  # 1/ms
    t_final: float  # ms

    def __post_init__(self):
        for name in ("omega_y0", "gamma", "t_final"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValidationError(f"RampSchedule.{name} must be positive and finite, got {v!r}")

    @classmethod
    def with_factor(cls, omega_y0: float, gamma: float, factor: float = DEFAULT_T_FINAL_FACTOR):
        return cls(omega_y0, gamma, factor / gamma)

    def value(self, t):
        return self.omega_y0 * np.exp(-self.gamma * t)

    def derivative(self, t):
        return -self.gamma * self.value(t)


@dataclass(frozen=True)
class TrapPhysics:
    ion_mass: float  # kg
    trap_freq: float  # rad/s
    z0: float = field(init=False)  # m

    def __post_init__(self):
        if not (self.ion_mass > 0 and self.trap_freq > 0):
            raise ValidationError("ion mass and trap frequency must be positive")
        object.__setattr__(self, "z0", ground_state_spread(self.ion_mass, self.trap_freq))

    @classmethod
    def from_lab_units(cls, mass_amu: float = 24.0, trap_freq_mhz: float = 6.3, convention: str = "two_pi"):
        return cls(mass_amu * AMU, mhz_to_rad_per_s(trap_freq_mhz, convention))


@dataclass(frozen=True)
class HeatingSpec:
    """Motional heating at rate ``rate`` phonons/ms into a bath of ``nbar`` quanta."""

    rate: float  # 1/ms
    nbar: float = DEFAULT_NBAR

    def __post_init__(self):
        if not (self.rate >= 0 and math.isfinite(self.rate)):
            raise ValidationError(f"heating rate must be >= 0, got {self.rate!r}")
        if not self.nbar > 0:
            raise ValidationError(f"nbar must be positive, got {self.nbar!r}")

    @property
    def gamma_dec(self) -> float:
        # heating rate = nbar * gamma_dec
        return self.rate / self.nbar


@dataclass(frozen=True)
class ProtocolConfig:
    """Physical and numerical parameters of one sensing run (internal units)."""

    g: float  # rad/ms
    omega: float  # rad/ms
    schedule: RampSchedule
    force_yN: float = 0.0
    trap: TrapPhysics = field(default_factory=TrapPhysics.from_lab_units)
    hilbert: HilbertSpec = field(default_factory=HilbertSpec)
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = 1.0  # ms
    heating: Optional[HeatingSpec] = None
    angular_convention: str = "two_pi"
    tau_overhead: float = 0.0  # ms, preparation + readout per repetition

    def __post_init__(self):
        convention_factor(self.angular_convention)
        for name in ("g", "omega"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValidationError(f"{name} must be non-negative, got {v!r}")
        if not self.omega > 0:
            raise ValidationError("omega must be positive")
        if not math.isfinite(self.force_yN):
            raise ValidationError("force_yN must be finite")
        if not self.g < self.schedule.omega_y0:
            raise ValidationError("protocol requires g < omega_y0")
        if self.g > 0 and self.schedule.omega_y0 / self.g < 5:
            warnings.warn(
                f"omega_y0/g = {self.schedule.omega_y0 / self.g:.2f} < 5; the initial state is "
                "far from |-y>|0>",
                stacklevel=2,
            )
        if not (0 < self.rel_tol <= 1e-2 and 0 < self.abs_tol <= 1e-2):
            raise ValidationError("tolerances must lie in (0, 1e-2]")
        if not self.max_step > 0:
            raise ValidationError("max_step must be positive")
        if self.tau_overhead < 0:
            raise ValidationError("tau_overhead must be >= 0")

    @classmethod
    def from_khz(
        cls,
        g_khz: float = 25.0,
        omega_khz: float = 150.0,
        omega_y0_khz: float = 225.0,
        gamma_khz: float = 1.0,
        force_yN: float = 0.0,
        ion_mass_amu: float = 24.0,
        trap_freq_mhz: float = 6.3,
        angular_convention: str = "two_pi",
        fock_dim: int = DEFAULT_FOCK_DIM,
        t_final_factor: float = DEFAULT_T_FINAL_FACTOR,
        heating_rate: Optional[float] = None,
        nbar: float = DEFAULT_NBAR,
        **numerics,
    ) -> ProtocolConfig:
        """Build a config from quoted lab values (kHz, MHz, amu, yN, 1/ms).

        Every kHz value, including the slope gamma, goes through the same
        angular convention.
        """
        conv = angular_convention
        gamma = khz_to_rad_per_ms(gamma_khz, conv)
        return cls(
            g=khz_to_rad_per_ms(g_khz, conv),
            omega=khz_to_rad_per_ms(omega_khz, conv),
            schedule=RampSchedule.with_factor(khz_to_rad_per_ms(omega_y0_khz, conv), gamma, t_final_factor),
            force_yN=force_yN,
            trap=TrapPhysics.from_lab_units(ion_mass_amu, trap_freq_mhz, conv),
            hilbert=HilbertSpec(fock_dim),
            heating=None if heating_rate is None else HeatingSpec(heating_rate, nbar),
            angular_convention=conv,
            **numerics,
        )

    def replace(self, **changes) -> ProtocolConfig:
        return dataclasses.replace(self, **changes)

    def with_gamma(self, gamma: float, t_final_factor: float | None = None) -> ProtocolConfig:
        """New slope; t_final keeps the same gamma * t_final unless a factor is given."""
        factor = self.schedule.gamma * self.schedule.t_final if t_final_factor is None else t_final_factor
        return self.replace(schedule=RampSchedule.with_factor(self.schedule.omega_y0, gamma, factor))

    def with_heating(self, rate: Optional[float], nbar: float | None = None) -> ProtocolConfig:
        if rate is None:
            return self.replace(heating=None)
        if nbar is None:
            nbar = self.heating.nbar if self.heating else DEFAULT_NBAR
        return self.replace(heating=HeatingSpec(rate, nbar))

    @property
    def t_final(self) -> float:
        return self.schedule.t_final

    @property
    def alpha(self) -> float:
        """Coherent amplitude of the cat components, -g/omega."""
        return -self.g / self.omega


@dataclass(frozen=True)
class SpinForceInput:
    gradient_T_per_m: float
    lande_g: float
    com_freq: float  # rad/s
    ion_mass: float  # kg

    def __post_init__(self):
        if self.gradient_T_per_m < 0 or not math.isfinite(self.gradient_T_per_m):
            raise ValidationError("gradient must be non-negative and finite")
        if not (self.com_freq > 0 and self.ion_mass > 0):
            raise ValidationError("centre-of-mass frequency and ion mass must be positive")


@dataclass(frozen=True)
class SpinForceResult:
    force_yN: float
    z_com: float  # m
    coefficient: float  # rad/ms, multiplies (a + a^dag)

    def equivalent_force_yN(self, trap: TrapPhysics) -> float:
        """Force amplitude giving the same (a + a^dag) coefficient in the single-mode model."""
        unit = force_term_coefficient(trap, 1.0)
        return self.coefficient / unit

    def apply(self, cfg: ProtocolConfig) -> ProtocolConfig:
        return cfg.replace(force_yN=self.equivalent_force_yN(cfg.trap))


def force_term_coefficient(trap: TrapPhysics, force_yN: float) -> float:
    """z0 F / (2 hbar) in rad/ms."""
    return trap.z0 * force_yN * YOCTO / (2.0 * HBAR) / 1e3


def effective_bias(cfg: ProtocolConfig) -> float:
    """Diagonal splitting of the cat two-level model, z0 F g / (hbar omega), rad/ms."""
    return 2.0 * force_term_coefficient(cfg.trap, cfg.force_yN) * cfg.g / cfg.omega


def signal_argument(cfg: ProtocolConfig) -> float:
    """Dimensionless kappa = pi g z0 F / (hbar gamma omega)."""
    return math.pi * effective_bias(cfg) / cfg.schedule.gamma


def force_for_argument(cfg: ProtocolConfig, kappa: float) -> float:
    """Inverse of signal_argument: the force in yN giving ``kappa``."""
    per_yN = math.pi * 2.0 * force_term_coefficient(cfg.trap, 1.0) * cfg.g / (cfg.omega * cfg.schedule.gamma)
    return kappa / per_yN


def map_spin_force(inp: SpinForceInput) -> SpinForceResult:
    """Force g_J mu_B B0 / 2 on the auxiliary ion and its (a + a^dag) coefficient z_cm F / sqrt(2)."""
    force_N = inp.lande_g * MU_B * inp.gradient_T_per_m / 2.0
    z_com = ground_state_spread(inp.ion_mass, inp.com_freq)
    coefficient = z_com * force_N / math.sqrt(2.0) / HBAR / 1e3
    return SpinForceResult(force_N / YOCTO, z_com, coefficient)


@functools.lru_cache(maxsize=16)
def _operators(spec: HilbertSpec):
    ops = {
        "n": hilbert.number(spec).entries,
        "X": hilbert.quadrature(spec).entries,
        "sx": hilbert.pauli("x", spec).entries,
        "sy": hilbert.pauli("y", spec).entries,
    }
    ops["sxX"] = ops["sx"] @ ops["X"]
    return ops


def static_part(cfg: ProtocolConfig) -> np.ndarray:
    """Time-independent part w n + g sx X + c X."""
    ops = _operators(cfg.hilbert)
    c = force_term_coefficient(cfg.trap, cfg.force_yN)
    return cfg.omega * ops["n"] + cfg.g * ops["sxX"] + c * ops["X"]


def hamiltonian_for_field(cfg: ProtocolConfig, omega_y: float) -> OperatorMatrix:
    """Hamiltonian with the transverse field frozen at ``omega_y``."""
    h = static_part(cfg) + (omega_y / 2.0) * _operators(cfg.hilbert)["sy"]
    # symmetrize away round-off so the Hermitian flag holds exactly
    return OperatorMatrix(0.5 * (h + h.conj().T), hermitian=True)


def hamiltonian_at(cfg: ProtocolConfig, t: float) -> OperatorMatrix:
    if not (-_T_SLACK <= t <= cfg.t_final * (1 + _T_SLACK)):
        raise ValidationError(f"t = {t!r} outside [0, {cfg.t_final!r}] ms")
    return hamiltonian_for_field(cfg, float(cfg.schedule.value(t)))


def force_derivative(cfg: ProtocolConfig) -> OperatorMatrix:
    """dH/dF_d per yN."""
    return OperatorMatrix(force_term_coefficient(cfg.trap, 1.0) * _operators(cfg.hilbert)["X"], hermitian=True)


@dataclass(frozen=True)
class PreparedState:
    state: StateVector
    energy: float
    gap: float  # E1 - E0 at t = 0
    overlap: float  # |<psi_g(0)| (|-y>|0>)|^2


def reference_state(spec: HilbertSpec) -> StateVector:
    """|-y>|0>, the Omega_y >> g limit of the ground state."""
    return hilbert.product_state(hilbert.spin_state("-y"), hilbert.fock_state(0, spec))


def fix_phase(vec: np.ndarray) -> np.ndarray:
    """Rotate the global phase so the |up, 0> amplitude is real positive."""
    pivot = vec[0] if abs(vec[0]) > 1e-12 else vec[np.argmax(np.abs(vec))]
    return vec * np.exp(-1j * np.angle(pivot))


def initial_ground_state(cfg: ProtocolConfig) -> PreparedState:
    h = hamiltonian_at(cfg, 0.0).entries
    evals, evecs = np.linalg.eigh(h)
    gap = float(evals[1] - evals[0])
    if gap < 1e-9 * cfg.omega:
        raise DegenerateGroundState(f"E1 - E0 = {gap:.3e} at t = 0")
    psi = fix_phase(evecs[:, 0])
    psi /= np.linalg.norm(psi)
    ref = reference_state(cfg.hilbert).amplitudes
    overlap = float(abs(np.vdot(ref, psi)) ** 2)
    return PreparedState(StateVector(psi), float(evals[0]), gap, overlap)


def cat_components(cfg: ProtocolConfig) -> tuple[StateVector, StateVector]:
    """|psi_+> = |+x>|alpha> and |psi_-> = |-x>|-alpha> with alpha = -g/omega."""
    a = cfg.alpha
    plus = hilbert.product_state(hilbert.spin_state("+x"), hilbert.coherent_state(a, cfg.hilbert))
    minus = hilbert.product_state(hilbert.spin_state("-x"), hilbert.coherent_state(-a, cfg.hilbert))
    return plus, minus
