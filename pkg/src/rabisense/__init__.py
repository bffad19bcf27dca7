"""Force sensing with the symmetry-breaking ground state of a quantum Rabi model."""

__version__ = "0.1.0"

from .demkov import DemkovParams, integrate_demkov, min_force_sigma_x, sensitivity
from .dynamics import IntegratorSettings, Trajectory, evolve_lindblad, evolve_pure
from .errors import RabiSenseError, ValidationError
from .hilbert import DensityMatrix, HilbertSpec, OperatorMatrix, StateVector
from .metrology import RunResult, SweepResult, SweepSpec, run_protocol, snr, sweep
from .model import HeatingSpec, ProtocolConfig, RampSchedule, TrapPhysics
from .spectrum import adiabatic_parameter, spectrum_along_ramp

__all__ = [
    "DemkovParams",
    "DensityMatrix",
    "HeatingSpec",
    "HilbertSpec",
    "IntegratorSettings",
    "OperatorMatrix",
    "ProtocolConfig",
    "RabiSenseError",
    "RampSchedule",
    "RunResult",
    "StateVector",
    "SweepResult",
    "SweepSpec",
    "Trajectory",
    "TrapPhysics",
    "ValidationError",
    "adiabatic_parameter",
    "evolve_lindblad",
    "evolve_pure",
    "integrate_demkov",
    "min_force_sigma_x",
    "run_protocol",
    "sensitivity",
    "snr",
    "spectrum_along_ramp",
    "sweep",
]
