"""
Effective two-level (Demkov) description of the symmetry-breaking ramp.

Within the cat doublet {|psi_+>, |psi_->} the Hamiltonian is

    [[-b, D(t)/2], [D(t)/2, b]],   D(t) = D_i exp(-gamma t)

with the bias b = z0 F g / (hbar omega). Starting from (1, -1)/sqrt(2) the
population of |psi_+> tends to (1 + tanh(kappa))/2 with kappa = pi b / gamma.
This module carries both the ODE and the closed forms so each can check
the other. Unit conversions are never redone here: bias and kappa come
from :mod:`rabisense.model`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from . import model
from .errors import ToleranceNotMet, ValidationError
from .hilbert import OperatorMatrix
from .model import ProtocolConfig

MIN_SNR_ARGUMENT = math.asinh(1.0)


@dataclass(frozen=True)
class DemkovParams:
    kappa: float
    delta_i: float  # rad/ms
    gamma: float  # 1/ms
    bias: float  # rad/ms

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValidationError("gamma must be positive")
        if not self.delta_i >= 0:
            raise ValidationError("delta_i must be non-negative")
        expected = math.pi * self.bias / self.gamma
        if not math.isclose(self.kappa, expected, rel_tol=1e-9, abs_tol=1e-12):
            raise ValidationError(f"kappa {self.kappa!r} inconsistent with pi*bias/gamma = {expected!r}")

    @classmethod
    def from_bias(cls, bias: float, gamma: float, delta_i: float) -> DemkovParams:
        return cls(math.pi * bias / gamma, delta_i, gamma, bias)

    @classmethod
    def from_kappa(cls, kappa: float, gamma: float, delta_i: float) -> DemkovParams:
        return cls(kappa, delta_i, gamma, kappa * gamma / math.pi)

    @classmethod
    def from_config(cls, cfg: ProtocolConfig, delta_i: float | None = None) -> DemkovParams:
        """Two-level parameters for ``cfg``.

        ``delta_i`` defaults to the late-ramp doublet prefactor of the full
        model (see :func:`rabisense.spectrum.doublet_gap_prefactor`).
        """
        if delta_i is None:
            from .spectrum import doublet_gap_prefactor

            delta_i = doublet_gap_prefactor(cfg)
        return cls(model.signal_argument(cfg), delta_i, cfg.schedule.gamma, model.effective_bias(cfg))

    def gap(self, t):
        return self.delta_i * np.exp(-self.gamma * t)


def effective_hamiltonian(params: DemkovParams, t: float) -> OperatorMatrix:
    if t < 0:
        raise ValidationError("t must be >= 0")
    half = 0.5 * float(params.gap(t))
    return OperatorMatrix(np.array([[-params.bias, half], [half, params.bias]], dtype=complex), hermitian=True)


def integrate_demkov(
    params: DemkovParams,
    t_final: float | None = None,
    rel_tol: float = 1e-12,
    abs_tol: float = 1e-14,
) -> tuple[complex, complex]:
    """Integrate the two coupled amplitude equations from c = (1, -1)/sqrt(2).

    ``t_final`` defaults to 20/gamma and must be at least 10/gamma.
    """
    if t_final is None:
        t_final = 20.0 / params.gamma
    if t_final < 10.0 / params.gamma * (1 - 1e-12):
        raise ValidationError("t_final must be >= 10/gamma for the asymptotic regime")
    b, d_i, gam = params.bias, params.delta_i, params.gamma

    def rhs(t, c):
        half = 0.5 * d_i * math.exp(-gam * t)
        return np.array([1j * b * c[0] - 1j * half * c[1], -1j * b * c[1] - 1j * half * c[0]])

    c0 = np.array([1.0, -1.0], dtype=complex) / math.sqrt(2.0)
    sol = solve_ivp(rhs, (0.0, t_final), c0, method="DOP853", rtol=rel_tol, atol=abs_tol)
    if not sol.success:
        raise ToleranceNotMet(f"two-level integration failed: {sol.message}")
    c_plus, c_minus = complex(sol.y[0, -1]), complex(sol.y[1, -1])
    norm = abs(c_plus) ** 2 + abs(c_minus) ** 2
    if abs(norm - 1.0) > 1e-10:
        raise ToleranceNotMet(f"two-level norm drift {abs(norm - 1):.2e}")
    return c_plus, c_minus


def asymptotic_population(params: DemkovParams) -> float:
    """|c_+|^2 for t_final >> 1/gamma."""
    return 0.5 + 0.5 * math.tanh(params.kappa)


def signal_sigma_x(params: DemkovParams) -> tuple[float, float]:
    """Mean tanh(kappa) and variance 1 - tanh(kappa)^2 of sigma_x."""
    mean = math.tanh(params.kappa)
    # sech^2 keeps precision where 1 - tanh^2 would cancel
    var = 1.0 / math.cosh(params.kappa) ** 2 if abs(params.kappa) < 350 else 0.0
    return mean, var


def sigma_x_from_populations(p_plus: float) -> tuple[float, float]:
    p_minus = 1.0 - p_plus
    return 2.0 * p_plus - 1.0, 4.0 * p_plus * p_minus


def signal_quadrature(params: DemkovParams, g: float, omega: float) -> tuple[float, float]:
    """Mean and variance of Z = a + a^dag at the end of the ramp."""
    r = g / omega
    mean = -2.0 * r * math.tanh(params.kappa)
    var = 1.0 + 4.0 * r * r - mean * mean
    return mean, var


def quadrature_from_populations(p_plus: float, alpha: float) -> tuple[float, float]:
    """Z mean 2 alpha (2 p_+ - 1) and variance 1 + 16 alpha^2 p_+ p_-."""
    p_minus = 1.0 - p_plus
    return 2.0 * alpha * (2.0 * p_plus - 1.0), 1.0 + 16.0 * alpha * alpha * p_plus * p_minus


def snr_sigma_x(params: DemkovParams) -> float:
    return math.sinh(params.kappa)


def min_force_sigma_x(cfg: ProtocolConfig) -> float:
    """Force (yN) at which the sigma_x signal-to-noise ratio equals one."""
    if cfg.g == 0:
        return math.inf
    return model.force_for_argument(cfg, MIN_SNR_ARGUMENT)


def quadrature_threshold_argument(g: float, omega: float) -> float:
    """kappa at which the quadrature SNR reaches one; inf when omega >= 2g."""
    if g == 0 or omega >= 2.0 * g:
        return math.inf
    return math.atanh(math.sqrt(0.5 + omega * omega / (8.0 * g * g)))


def min_force_quadrature(cfg: ProtocolConfig) -> float:
    """Minimum detectable force from the quadrature; ``math.inf`` means unmeasurable (omega >= 2g)."""
    kappa = quadrature_threshold_argument(cfg.g, cfg.omega)
    if math.isinf(kappa):
        return math.inf
    return model.force_for_argument(cfg, kappa)


def repetition_time(cfg: ProtocolConfig) -> float:
    """Duration of one repetition in ms (ramp plus configured overhead)."""
    return cfg.t_final + cfg.tau_overhead


def sensitivity_from_force(force_yN: float, tau_ms: float) -> float:
    """F_min * sqrt(tau) in yN/sqrt(Hz)."""
    return force_yN * math.sqrt(tau_ms * 1e-3)


def sensitivity(cfg: ProtocolConfig) -> float:
    return sensitivity_from_force(min_force_sigma_x(cfg), repetition_time(cfg))
