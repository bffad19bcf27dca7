"""
INI run configuration: parsing, validation, serialization and manifests.

Sections and keys (all optional, defaults shown by ``RunConfig()``):

``[physics]``
    g_khz, omega_khz, omega_y0_khz, gamma_khz, force_yN, ion_mass_amu,
    trap_freq_mhz, angular_convention, tau_overhead_ms
``[numerics]``
    fock_dim, rel_tol, abs_tol, max_step_ms, sample_count, t_final_factor
``[heating]``
    rate_per_ms, nbar, enabled
``[spin_force]``
    gradient_T_per_m, lande_g

Manifests add ``[derived]``, ``[constants]`` and ``[run]`` sections. The
parser accepts them so a manifest can be fed back as a config, but their
contents are informational and never read back.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import math
import platform
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
import scipy

from . import __version__, demkov, model
from .dynamics import DEFAULT_SAMPLE_COUNT, IntegratorSettings
from .errors import ValidationError
from .hilbert import DEFAULT_FOCK_DIM
from .model import DEFAULT_NBAR, DEFAULT_T_FINAL_FACTOR, ProtocolConfig, SpinForceInput
from .units import AMU, ANGULAR_CONVENTIONS, CONSTANTS, convention_factor, mhz_to_rad_per_s

INFORMATIONAL_SECTIONS = ("derived", "constants", "run")

# section -> key -> (field name, type)
_SCHEMA = {
    "physics": {
        "g_khz": ("g_khz", float),
        "omega_khz": ("omega_khz", float),
        "omega_y0_khz": ("omega_y0_khz", float),
        "gamma_khz": ("gamma_khz", float),
        "force_yN": ("force_yN", float),
        "ion_mass_amu": ("ion_mass_amu", float),
        "trap_freq_mhz": ("trap_freq_mhz", float),
        "angular_convention": ("angular_convention", str),
        "tau_overhead_ms": ("tau_overhead_ms", float),
    },
    "numerics": {
        "fock_dim": ("fock_dim", int),
        "rel_tol": ("rel_tol", float),
        "abs_tol": ("abs_tol", float),
        "max_step_ms": ("max_step_ms", float),
        "sample_count": ("sample_count", int),
        "t_final_factor": ("t_final_factor", float),
    },
    "heating": {
        "rate_per_ms": ("heating_rate", float),
        "nbar": ("nbar", float),
        "enabled": ("heating_enabled", bool),
    },
    "spin_force": {
        "gradient_T_per_m": ("gradient_T_per_m", float),
        "lande_g": ("lande_g", float),
    },
}

_POSITIVE = (
    "omega_khz",
    "omega_y0_khz",
    "gamma_khz",
    "ion_mass_amu",
    "trap_freq_mhz",
    "rel_tol",
    "abs_tol",
    "max_step_ms",
    "t_final_factor",
    "nbar",
    "lande_g",
)
_NON_NEGATIVE = ("g_khz", "tau_overhead_ms", "heating_rate", "gradient_T_per_m")


@dataclass(frozen=True)
class RunConfig:
    """Flat view of a config file in lab units."""

    g_khz: float = 25.0
    omega_khz: float = 150.0
    omega_y0_khz: float = 225.0
    gamma_khz: float = 1.0
    force_yN: float = 0.0
    ion_mass_amu: float = 24.0
    trap_freq_mhz: float = 6.3
    angular_convention: str = "two_pi"
    tau_overhead_ms: float = 0.0
    fock_dim: int = DEFAULT_FOCK_DIM
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step_ms: float = 1.0
    sample_count: int = DEFAULT_SAMPLE_COUNT
    t_final_factor: float = DEFAULT_T_FINAL_FACTOR
    heating_rate: float = 0.1
    nbar: float = DEFAULT_NBAR
    heating_enabled: bool = False
    gradient_T_per_m: float = 1.0
    lande_g: float = 2.0

    def __post_init__(self):
        if self.angular_convention not in ANGULAR_CONVENTIONS:
            raise ValidationError(f"angular_convention must be one of {ANGULAR_CONVENTIONS}")
        for name in _POSITIVE + _NON_NEGATIVE + ("force_yN",):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValidationError(f"{name} must be finite, got {v!r}")
        for name in _POSITIVE:
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in _NON_NEGATIVE:
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative, got {getattr(self, name)!r}")
        if self.fock_dim < 2:
            raise ValidationError("fock_dim must be >= 2")
        if self.sample_count < 2:
            raise ValidationError("sample_count must be >= 2")

    def replace(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **changes)

    def protocol(self) -> ProtocolConfig:
        return ProtocolConfig.from_khz(
            g_khz=self.g_khz,
            omega_khz=self.omega_khz,
            omega_y0_khz=self.omega_y0_khz,
            gamma_khz=self.gamma_khz,
            force_yN=self.force_yN,
            ion_mass_amu=self.ion_mass_amu,
            trap_freq_mhz=self.trap_freq_mhz,
            angular_convention=self.angular_convention,
            fock_dim=self.fock_dim,
            t_final_factor=self.t_final_factor,
            heating_rate=self.heating_rate if self.heating_enabled else None,
            nbar=self.nbar,
            rel_tol=self.rel_tol,
            abs_tol=self.abs_tol,
            max_step=self.max_step_ms,
            tau_overhead=self.tau_overhead_ms,
        )

    def settings(self) -> IntegratorSettings:
        return IntegratorSettings(rel_tol=self.rel_tol, abs_tol=self.abs_tol, max_step=self.max_step_ms)

    def spin_force_input(self) -> SpinForceInput:
        return SpinForceInput(
            gradient_T_per_m=self.gradient_T_per_m,
            lande_g=self.lande_g,
            com_freq=mhz_to_rad_per_s(self.trap_freq_mhz, self.angular_convention),
            ion_mass=self.ion_mass_amu * AMU,
        )

    def kilohertz(self, value_khz: float) -> float:
        """Quoted kHz value in rad/ms under this config's convention."""
        return value_khz * convention_factor(self.angular_convention)

    def to_parser(self) -> configparser.ConfigParser:
        cp = _new_parser()
        for section, keys in _SCHEMA.items():
            cp[section] = {key: _format(getattr(self, name)) for key, (name, _) in keys.items()}
        return cp

    def to_ini(self) -> str:
        return _dump(self.to_parser())


def _new_parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    cp.optionxform = str  # keys are case-sensitive (force_yN)
    return cp


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _dump(cp: configparser.ConfigParser) -> str:
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _convert(section: str, key: str, raw: str, kind):
    try:
        if kind is bool:
            value = raw.strip().lower()
            if value in ("1", "true", "yes", "on"):
                return True
            if value in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw.strip())
    except ValueError:
        raise ValidationError(f"[{section}] {key}: cannot parse {raw!r} as {kind.__name__}") from None


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse INI text into a validated :class:`RunConfig`.

    Raises
    ------
    ValidationError
        On unknown sections or keys, unparsable values, or values outside
        their allowed range. The message names the offending key.
    """
    cp = _new_parser()
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ValidationError(f"{source}: {exc}") from None
    values = {}
    for section in cp.sections():
        if section in INFORMATIONAL_SECTIONS:
            continue
        if section not in _SCHEMA:
            raise ValidationError(f"{source}: unknown section [{section}]")
        for key, raw in cp[section].items():
            if key not in _SCHEMA[section]:
                raise ValidationError(f"{source}: unknown key {key!r} in [{section}]")
            name, kind = _SCHEMA[section][key]
            values[name] = _convert(section, key, raw, kind)
    return RunConfig(**values)


def load_config(path: Optional[str | Path]) -> RunConfig:
    """Read a config file; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config(text, source=str(p))


def manifest(run: RunConfig, command: str, argv: Sequence[str], extra: Optional[Mapping[str, object]] = None) -> str:
    """Manifest text: every resolved input plus derived values, constants and run info.

    The text is itself a valid config, so ``--config <manifest>`` with the
    recorded arguments reproduces the run.
    """
    cp = run.to_parser()
    cfg = run.protocol()
    derived = {
        "z0_m": cfg.trap.z0,
        "g_rad_per_ms": cfg.g,
        "omega_rad_per_ms": cfg.omega,
        "omega_y0_rad_per_ms": cfg.schedule.omega_y0,
        "gamma_per_ms": cfg.schedule.gamma,
        "t_final_ms": cfg.t_final,
        "kappa": model.signal_argument(cfg),
        "fmin_sigma_x_yN": demkov.min_force_sigma_x(cfg),
        "sensitivity_yN_rtHz": demkov.sensitivity(cfg),
    }
    cp["derived"] = {k: _format(float(v)) for k, v in derived.items()}
    cp["constants"] = {k: _format(v) for k, v in CONSTANTS.items()}
    info = {
        "command": command,
        "argv": " ".join(argv),
        "software_version": __version__,
        "python_version": platform.python_version(),
        "numpy_version": np.__version__,
        "scipy_version": scipy.__version__,
    }
    if extra:
        info.update({k: _format(v) for k, v in extra.items()})
    cp["run"] = info
    return _dump(cp)
