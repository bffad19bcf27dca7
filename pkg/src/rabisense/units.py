"""Physical constants and unit conversions.

Internal units: time in ms, angular frequencies in rad/ms, forces in yN
at the API boundary and N inside formulas.
"""

import math

HBAR = 1.054571817e-34  # J s
MU_B = 9.2740100783e-24  # J / T
AMU = 1.66053906660e-27  # kg
YOCTO = 1e-24

CONSTANTS = {
    "hbar_J_s": HBAR,
    "mu_B_J_per_T": MU_B,
    "amu_kg": AMU,
    "yN_in_N": YOCTO,
}

ANGULAR_CONVENTIONS = ("two_pi", "plain")


def convention_factor(convention: str) -> float:
    """Multiplier turning a quoted frequency into an angular frequency.

    ``two_pi`` reads "25 kHz" as 2*pi*25e3 rad/s; ``plain`` reads it as
    25e3 rad/s.
    """
    if convention == "two_pi":
        return 2 * math.pi
    if convention == "plain":
        return 1.0
    raise ValueError(f"angular_convention must be one of {ANGULAR_CONVENTIONS}, got {convention!r}")


def khz_to_rad_per_ms(value_khz: float, convention: str) -> float:
    # 1 kHz = 1 cycle/ms
    return value_khz * convention_factor(convention)


def mhz_to_rad_per_s(value_mhz: float, convention: str) -> float:
    return value_mhz * 1e6 * convention_factor(convention)


def ground_state_spread(mass_kg: float, angular_freq_rad_s: float) -> float:
    """Oscillator ground-state spread sqrt(hbar / (2 m w)) in metres."""
    return math.sqrt(HBAR / (2.0 * mass_kg * angular_freq_rad_s))
