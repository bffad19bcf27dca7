"""
Command-line entry point.

Every subcommand writes one CSV table to ``--out`` (a path, or ``-`` for
stdout) and a manifest to ``--manifest``. The manifest defaults to
``<out>.manifest.ini`` when ``--out`` is a path and is skipped for stdout
unless requested. Diagnostics go to stderr only.

Exit codes: 0 success, 1 invalid input, 2 numerical failure. A sweep with
failed points still writes every row, with the failure in ``error``.
"""

from __future__ import annotations

import argparse
import io
import logging
import math
import sys
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import demkov, dynamics, metrology, model, spectrum
from .config import RunConfig, load_config, manifest
from .csvio import write_table
from .errors import NUMERICAL_ERRORS, ValidationError

log = logging.getLogger("rabisense")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2
DEFAULT_SWEEP_POINTS = 5

SENSITIVITY_COLUMNS = (
    "gamma_per_ms",
    "t_final_ms",
    "kappa_per_yN",
    "fmin_sigma_x_yN",
    "fmin_quadrature_yN",
    "fmin_numeric_yN",
    "sensitivity_yN_rtHz",
)
DEMKOV_COLUMNS = (
    "kappa",
    "delta_i",
    "gamma_per_ms",
    "bias",
    "p_plus",
    "p_plus_asymptotic",
    "sx_mean",
    "sx_var",
    "snr_sx",
    "fmin_yN",
    "sensitivity_yN_rtHz",
)
SPIN_FORCE_COLUMNS = (
    "gradient_T_per_m",
    "lande_g",
    "force_yN",
    "z_com_m",
    "coefficient_rad_per_ms",
    "equivalent_force_yN",
)


class PartialFailure(Exception):
    """Output was written but some points failed."""


def _axis_values(args, unit: Callable[[float], float]) -> np.ndarray:
    if args.start is None or args.stop is None:
        raise ValidationError("--from and --to are required")
    points = DEFAULT_SWEEP_POINTS if args.points is None else args.points
    if points < 1:
        raise ValidationError("--points must be >= 1")
    vals = np.linspace(args.start, args.stop, points)
    return np.array([unit(v) for v in vals])


def _cmd_spectrum(run: RunConfig, args, out) -> dict:
    cfg = run.protocol()
    slices = spectrum.spectrum_along_ramp(
        cfg, k=args.levels, reference_level=args.ref_level, sample_count=args.points or 200
    )
    spectrum.write_csv(slices, out)
    return {"levels": args.levels, "reference_level": args.ref_level, "rows": len(slices)}


def _cmd_evolve(run: RunConfig, args, out) -> dict:
    cfg = run.protocol()
    engine = metrology.resolve_engine(cfg, args.engine)
    count = args.points or run.sample_count
    if engine == "lindblad":
        if cfg.heating is None:
            cfg = cfg.with_heating(0.0, run.nbar)
        traj = dynamics.evolve_lindblad(cfg, run.settings(), sample_count=count)
    else:
        traj = dynamics.evolve_pure(cfg, run.settings(), sample_count=count)
    traj.write_csv(out)
    return {"engine": engine, **{k: v for k, v in traj.metadata.items() if k != "engine"}}


def _sweep(run: RunConfig, args, out, axis: str, unit: Callable[[float], float], engine) -> dict:
    base = run.protocol()
    spec = metrology.SweepSpec(axis, tuple(_axis_values(args, unit)), base, engine)
    result = metrology.sweep(spec, run.settings(), workers=args.workers)
    result.write_csv(out)
    info = {"axis": axis, "engine": spec.engine_at(), "failed_points": len(result.failed)}
    if result.failed:
        raise PartialFailure(info, "; ".join(f"{p.axis_value!r}: {p.error}" for p in result.failed))
    return info


def _cmd_sweep_gamma(run, args, out):
    return _sweep(run, args, out, "gamma", run.kilohertz, args.engine)


def _cmd_sweep_force(run, args, out):
    return _sweep(run, args, out, "force", float, args.engine)


def _cmd_sweep_heating(run, args, out):
    if args.engine == "pure":
        raise ValidationError("sweep-heating needs the lindblad engine")
    return _sweep(run, args, out, "heating_rate", float, "lindblad")


def _cmd_demkov(run: RunConfig, args, out) -> dict:
    cfg = run.protocol()
    params = demkov.DemkovParams.from_config(cfg)
    c_plus, _ = demkov.integrate_demkov(params)
    p_plus = abs(c_plus) ** 2
    sx_mean, sx_var = demkov.sigma_x_from_populations(p_plus)
    snr = metrology.snr(sx_mean, sx_var) if sx_var > 0 else math.copysign(math.inf, sx_mean)
    row = (
        params.kappa,
        params.delta_i,
        params.gamma,
        params.bias,
        p_plus,
        demkov.asymptotic_population(params),
        sx_mean,
        sx_var,
        snr,
        demkov.min_force_sigma_x(cfg),
        demkov.sensitivity(cfg),
    )
    write_table(out, DEMKOV_COLUMNS, [row])
    return {"delta_i": params.delta_i}


def _sensitivity_row(cfg: model.ProtocolConfig, run: RunConfig, engine: Optional[str]) -> tuple:
    f_sx = demkov.min_force_sigma_x(cfg)
    f_num = math.nan
    if engine is not None:
        f_num = metrology.min_force_numeric(cfg, run.settings(), engine)
    f_report = f_sx if engine is None else f_num
    per_yN = model.signal_argument(cfg.replace(force_yN=1.0))
    return (
        cfg.schedule.gamma,
        cfg.t_final,
        per_yN,
        f_sx,
        demkov.min_force_quadrature(cfg),
        f_num,
        demkov.sensitivity_from_force(f_report, demkov.repetition_time(cfg)),
    )


def _cmd_sensitivity(run: RunConfig, args, out) -> dict:
    base = run.protocol()
    if args.start is None and args.stop is None:
        configs = [base]
    else:
        configs = [base.with_gamma(v) for v in _axis_values(args, run.kilohertz)]
    rows = [_sensitivity_row(c, run, args.engine) for c in configs]
    write_table(out, SENSITIVITY_COLUMNS, rows)
    return {"mode": "two-level" if args.engine is None else f"numeric ({args.engine})"}


def _cmd_spin_force(run: RunConfig, args, out) -> dict:
    res = model.map_spin_force(run.spin_force_input())
    trap = run.protocol().trap
    row = (run.gradient_T_per_m, run.lande_g, res.force_yN, res.z_com, res.coefficient, res.equivalent_force_yN(trap))
    write_table(out, SPIN_FORCE_COLUMNS, [row])
    return {}


COMMANDS = {
    "spectrum": (_cmd_spectrum, "low-lying levels, doublet splitting and adiabatic parameter along the ramp"),
    "evolve": (_cmd_evolve, "time trace of spin and phonon observables"),
    "sweep-gamma": (_cmd_sweep_gamma, "full runs over the ramp slope (kHz, same convention as the config)"),
    "sweep-force": (_cmd_sweep_force, "full runs over the force (yN)"),
    "sweep-heating": (_cmd_sweep_heating, "master-equation runs over the heating rate (1/ms)"),
    "demkov": (_cmd_demkov, "effective two-level prediction for the configured force"),
    "sensitivity": (_cmd_sensitivity, "minimum force and sensitivity, optionally over the ramp slope (kHz)"),
    "spin-force": (_cmd_spin_force, "force from a magnetic gradient on a spin dipole"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file (defaults apply when omitted)")
    common.add_argument("--out", default="-", help="CSV destination path, or - for stdout (default)")
    common.add_argument("--manifest", help="manifest path (default: <out>.manifest.ini when --out is a file)")
    common.add_argument("--engine", choices=metrology.ENGINES, help="dynamics engine")
    common.add_argument("--from", dest="start", type=float, help="first axis value")
    common.add_argument("--to", dest="stop", type=float, help="last axis value")
    common.add_argument("--points", type=int, help="number of axis values or time samples")
    common.add_argument("--workers", type=int, default=1, help="parallel processes for sweeps")
    common.add_argument("--levels", type=int, default=spectrum.DEFAULT_LEVELS, help="levels kept by spectrum")
    common.add_argument(
        "--ref-level", type=int, default=spectrum.DEFAULT_REFERENCE_LEVEL, help="level used for the adiabatic parameter"
    )
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")

    parser = argparse.ArgumentParser(prog="rabisense", description="Rabi-model force sensing simulations.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def _manifest_path(args) -> Optional[Path]:
    if args.manifest:
        return Path(args.manifest)
    if args.out != "-":
        return Path(args.out + ".manifest.ini")
    return None


def _emit(target: str, text: str) -> None:
    if target == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with open(target, "w", newline="") as fh:
            fh.write(text)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage or help
        return EXIT_OK if not exc.code else EXIT_INVALID

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr)
    handler, _ = COMMANDS[args.command]
    code = EXIT_OK
    buf = io.StringIO()
    try:
        if args.workers < 1:
            raise ValidationError("--workers must be >= 1")
        run = load_config(args.config)
        run.protocol()
        try:
            info = handler(run, args, buf)
        except PartialFailure as exc:
            info, message = exc.args
            print(f"rabisense: some points failed: {message}", file=sys.stderr)
            code = EXIT_NUMERICAL
        _emit(args.out, buf.getvalue())
        mpath = _manifest_path(args)
        if mpath is not None:
            mpath.write_text(manifest(run, args.command, argv, info))
    except (ValidationError, ValueError) as exc:
        print(f"rabisense: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NUMERICAL_ERRORS as exc:
        print(f"rabisense: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"rabisense: cannot write output: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return code


if __name__ == "__main__":
    sys.exit(main())
