"""
Instantaneous spectrum along the ramp: low-lying levels, the ground-doublet
splitting, and the adiabatic parameter.

The adiabatic parameter uses the matrix-element identity

    <g| d/dt |e> = <g| dH/dt |e> / (E_e - E_g)

with dH/dt = -gamma (W(t)/2) sigma_y, so no eigenvector is differentiated
numerically.

Level indices count from the ground state (``0``). The Hamiltonian
conserves parity, and along the whole ramp levels 1 and 3 have the
opposite parity to the ground state, so sigma_y cannot couple them to it.
The default reference level is therefore 2, the lowest level above the
ground doublet that shares the ground-state parity. ``epsilon_levels`` keeps
the value for every computed level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np

from . import hilbert
from .csvio import write_table
from .errors import DegenerateLevels, EigensolverFailure, ValidationError
from .model import ProtocolConfig, hamiltonian_at

DEFAULT_LEVELS = 4
DEFAULT_REFERENCE_LEVEL = 2
RESIDUAL_LIMIT = 1e-9


@dataclass(frozen=True)
class SpectrumSlice:
    t: float
    eigenvalues: tuple[float, ...]
    delta_gap: float
    delta_ge: float
    epsilon: float
    reference_level: int = DEFAULT_REFERENCE_LEVEL
    epsilon_levels: tuple[float, ...] = ()  # index j - 1 holds the value for level j


def _eigensystem(cfg: ProtocolConfig, t: float, k: int):
    h = hamiltonian_at(cfg, t).entries
    evals, evecs = np.linalg.eigh(h)
    evals, evecs = evals[:k], evecs[:, :k]
    scale = max(np.abs(h).sum(axis=1).max(), 1e-300)
    resid = np.linalg.norm(h @ evecs - evecs * evals, axis=0)
    if not np.all(np.isfinite(evals)) or resid.max() > RESIDUAL_LIMIT * scale:
        raise EigensolverFailure(f"eigen-residual {resid.max():.2e} at t = {t:.6g} ms")
    return evals, evecs


def _epsilons(cfg: ProtocolConfig, t: float, evals, evecs) -> np.ndarray:
    sy = hilbert.pauli("y", cfg.hilbert).entries
    dh = float(cfg.schedule.derivative(t)) / 2.0
    couple = np.abs(evecs.conj().T @ (sy @ evecs[:, 0])) * abs(dh)
    gaps = evals - evals[0]
    out = np.full(len(evals), np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[1:] = couple[1:] / gaps[1:] ** 2
    return out


def adiabatic_parameter(cfg: ProtocolConfig, t: float, reference_level: int = DEFAULT_REFERENCE_LEVEL) -> float:
    """|<e| dH/dt |g>| / (E_e - E_g)^2 for the reference level ``e``."""
    if reference_level < 1:
        raise ValidationError("reference_level must be >= 1")
    evals, evecs = _eigensystem(cfg, t, reference_level + 1)
    gap = evals[reference_level] - evals[0]
    if gap < 1e-9 * cfg.omega:
        raise DegenerateLevels(f"E{reference_level} - E0 = {gap:.3e} at t = {t:.6g} ms")
    return float(_epsilons(cfg, t, evals, evecs)[reference_level])


def spectrum_along_ramp(
    cfg: ProtocolConfig,
    k: int = DEFAULT_LEVELS,
    times: Optional[Iterable[float]] = None,
    reference_level: int = DEFAULT_REFERENCE_LEVEL,
    sample_count: int = 200,
) -> list[SpectrumSlice]:
    if k < 4:
        raise ValidationError("k must be >= 4")
    if not 1 <= reference_level < k:
        raise ValidationError(f"reference_level must lie in [1, {k - 1}]")
    if times is None:
        times = np.linspace(0.0, cfg.t_final, sample_count)
    slices = []
    for t in times:
        t = float(t)
        evals, evecs = _eigensystem(cfg, t, k)
        delta_ge = float(evals[reference_level] - evals[0])
        if delta_ge < 1e-9 * cfg.omega:
            raise DegenerateLevels(f"E{reference_level} - E0 = {delta_ge:.3e} at t = {t:.6g} ms")
        eps = _epsilons(cfg, t, evals, evecs)
        slices.append(
            SpectrumSlice(
                t=t,
                eigenvalues=tuple(float(e) for e in evals),
                delta_gap=float(max(evals[1] - evals[0], 0.0)),
                delta_ge=delta_ge,
                epsilon=float(eps[reference_level]),
                reference_level=reference_level,
                epsilon_levels=tuple(float(e) for e in eps[1:]),
            )
        )
    return slices


def eigenvectors_along_ramp(cfg: ProtocolConfig, times: Sequence[float], k: int = DEFAULT_LEVELS) -> np.ndarray:
    """Low-lying eigenvectors, phase-aligned so consecutive overlaps are real positive.

    Returns an array of shape (len(times), dim, k).
    """
    out = []
    prev = None
    for t in times:
        _, vecs = _eigensystem(cfg, float(t), k)
        vecs = vecs.copy()
        if prev is not None:
            ov = np.einsum("ij,ij->j", prev.conj(), vecs)
            phase = np.where(np.abs(ov) > 1e-12, ov / np.maximum(np.abs(ov), 1e-300), 1.0)
            vecs = vecs * phase.conj()
        out.append(vecs)
        prev = vecs
    return np.array(out)


def ground_gap(cfg: ProtocolConfig, t: float = 0.0) -> float:
    """E1 - E0 at time t."""
    evals, _ = _eigensystem(cfg, t, 2)
    return float(evals[1] - evals[0])


def doublet_gap_prefactor(cfg: ProtocolConfig, field_ratio: float = 1e-3) -> float:
    """D_i such that the ground-doublet splitting follows D_i exp(-gamma t) late in the ramp.

    Evaluated as splitting * exp(gamma t) once the transverse field has
    fallen to ``field_ratio * omega``. Early in the ramp E1 - E0 can belong
    to a phonon sideband instead of the doublet (whenever omega_y0 > omega),
    so the t = 0 splitting is not a good prefactor.
    """
    sched = cfg.schedule
    t_star = math.log(sched.omega_y0 / (field_ratio * cfg.omega)) / sched.gamma
    t_star = min(max(t_star, 0.0), cfg.t_final)
    return ground_gap(cfg, t_star) * math.exp(sched.gamma * t_star)


def write_csv(slices: Sequence[SpectrumSlice], stream: TextIO) -> None:
    k = len(slices[0].eigenvalues) if slices else DEFAULT_LEVELS
    header = ["t_ms"] + [f"E{i}" for i in range(k)] + ["delta_gap", "delta_ge", "epsilon"]
    write_table(stream, header, ((s.t, *s.eigenvalues, s.delta_gap, s.delta_ge, s.epsilon) for s in slices))
