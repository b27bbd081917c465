"""
Command-line entry point for capfem.

Subcommands:
    mesh      generate, inspect or validate an interface-fitted mesh
    solve     run the fully discrete scheme from a JSON run configuration
    converge  certify convergence rates on a manufactured case
    pulse     list the available pulse shapes
"""
import argparse
import logging
import sys
from pathlib import Path

from .core.config import ConfigManager
from .core.convergence import MIN_LEVELS, StudyMode, convergence_study
from .core.errors import (
    CapfemError,
    CaseGateError,
    ConfigError,
    GeometryError,
    InterfaceResolutionError,
    MeshFormatError,
    MeshQualityError,
    SnappingError,
    StepFailure,
)
from .core.export import write_report
from .core.manufactured import CASES
from .core.mesh import GeometrySpec, generate_mesh, mesh_statistics, validate_mesh
from .core.mesh_io import read_mesh, write_mesh
from .core.pulses import pulse_catalog
from .core.simulation import resolve_output_dir, run_simulation
from .core.validator import Validator
from .utils.constants import (
    APP_NAME,
    APP_VERSION,
    CONVERGENCE_MODES,
    DEFAULT_MIN_ANGLE,
    EXIT_CERTIFICATION_FAILURE,
    EXIT_INVALID,
    EXIT_IO_ERROR,
    EXIT_OK,
    EXIT_RUN_FAILURE,
)

logger = logging.getLogger(__name__)


def _configure_logging(verbose: bool, quiet: bool):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)


def _levels(text: str):
    try:
        return [int(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"levels must be comma-separated integers, got {text!r}")


def _print_statistics(mesh):
    stats = mesh_statistics(mesh)
    resolution = "n/a" if stats.interface_resolution is None else f"{stats.interface_resolution:.6e}"
    print(f"h:                {stats.h:.6e}")
    print(f"lambda:           {resolution}")
    print(f"min angle:        {stats.min_angle:.2f} deg")
    print(f"vertices:         {stats.n_vertices} ({stats.n_boundary_vertices} on the boundary)")
    print(f"elements:         {stats.n_elements} (inner {stats.n_inner_elements}, outer {stats.n_outer_elements})")
    print(f"interface edges:  {stats.n_interface_edges}")


def cmd_mesh(args) -> int:
    if args.validate:
        try:
            mesh = read_mesh(args.validate)
        except OSError as e:
            print(f"error: cannot read {args.validate}: {e}", file=sys.stderr)
            return EXIT_IO_ERROR
        except MeshFormatError as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_INVALID
        report = validate_mesh(mesh, min_angle=args.min_angle)
        _print_statistics(mesh)
        print(f"violations:       {len(report.violations)}")
        for message in report.messages():
            print(f"  {message}")
        return EXIT_OK if report.is_valid else EXIT_INVALID

    try:
        geometry = GeometrySpec(args.half_width, args.radius)
        mesh = generate_mesh(geometry, args.n, min_angle=args.min_angle)
    except (GeometryError, MeshQualityError, SnappingError, InterfaceResolutionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    _print_statistics(mesh)
    if args.out:
        try:
            write_mesh(mesh, resolve_output_dir(args.out))
        except OSError as e:
            print(f"error: cannot write {args.out}: {e}", file=sys.stderr)
            return EXIT_IO_ERROR
        print(f"written:          {resolve_output_dir(args.out)}")
    return EXIT_OK


def cmd_solve(args) -> int:
    config = ConfigManager()
    try:
        config.load(args.config)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"error: cannot read configuration {args.config}: {e}", file=sys.stderr)
        return EXIT_IO_ERROR

    is_valid, messages = Validator.validate_config(config)
    if not is_valid:
        for message in messages:
            print(f"error: {message}", file=sys.stderr)
        return EXIT_INVALID
    for message in messages:
        logger.warning(message)

    output_dir = resolve_output_dir(args.out or config.get("output.directory"))
    try:
        result = run_simulation(config, output_dir)
    except StepFailure as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUN_FAILURE
    except (GeometryError, MeshFormatError, MeshQualityError, SnappingError,
            InterfaceResolutionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO_ERROR
    except CapfemError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUN_FAILURE

    residual = result.trajectory.manifest["energy_identity_max_residual"]
    print(f"steps:            {config.get('time.steps')}")
    print(f"snapshots:        {len(result.snapshots)}")
    print(f"energy identity:  {residual:.3e}")
    print(f"manifest:         {result.manifest_path}")
    return EXIT_OK


def cmd_converge(args) -> int:
    if len(set(args.levels)) < MIN_LEVELS:
        print(f"error: --levels needs at least {MIN_LEVELS} distinct values", file=sys.stderr)
        return EXIT_INVALID
    try:
        case = CASES[args.case](final_time=args.final_time)
    except (ValueError, GeometryError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID

    try:
        report = convergence_study(
            case, args.levels, mode=args.mode, parallel=args.parallel, mesh_n=args.mesh_n,
        )
    except CaseGateError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUN_FAILURE
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID

    out = resolve_output_dir(args.out or Path("output") / f"converge-{args.case}-{args.mode}")
    try:
        text_path, _ = write_report(report, out)
    except OSError as e:
        print(f"error: cannot write report: {e}", file=sys.stderr)
        return EXIT_IO_ERROR
    with open(text_path, "r", encoding="utf-8") as f:
        print(f.read(), end="")

    if report.failed_levels:
        return EXIT_RUN_FAILURE
    if not report.certified:
        return EXIT_CERTIFICATION_FAILURE
    return EXIT_OK


def cmd_pulse_list(args) -> int:
    for entry in pulse_catalog():
        marker = "" if entry["h1_in_time"] else "  (not H1 in time)"
        print(f"{entry['kind']:<22} {entry['description']}{marker}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=APP_NAME,
        description="P1 finite elements for the capacitive interface problem.",
    )
    parser.add_argument("--version", action="version", version=f"{APP_NAME} {APP_VERSION}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    verbosity.add_argument("--quiet", "-q", action="store_true", help="warnings and errors only")
    commands = parser.add_subparsers(dest="command", required=True)

    mesh = commands.add_parser("mesh", help="generate or validate a mesh")
    mesh.add_argument("--n", type=int, default=16, help="grid subdivisions per side")
    mesh.add_argument("--radius", type=float, default=0.5, help="interface radius r0")
    mesh.add_argument("--half-width", type=float, default=1.0, help="square half-width a")
    mesh.add_argument("--min-angle", type=float, default=DEFAULT_MIN_ANGLE, help="quality threshold (deg)")
    mesh.add_argument("--out", help="write the mesh to this file")
    mesh.add_argument("--validate", metavar="FILE", help="validate an existing mesh file")
    mesh.set_defaults(handler=cmd_mesh)

    solve = commands.add_parser("solve", help="run a simulation from a JSON configuration")
    solve.add_argument("config", help="run configuration file")
    solve.add_argument("--out", help="output directory (overrides output.directory)")
    solve.set_defaults(handler=cmd_solve)

    converge = commands.add_parser("converge", help="certify convergence rates")
    converge.add_argument("--case", choices=sorted(CASES), default="A")
    converge.add_argument("--mode", choices=CONVERGENCE_MODES, default=StudyMode.L2.value)
    converge.add_argument("--levels", type=_levels, default=[8, 16, 32],
                          help="comma-separated n (space modes) or N (time mode)")
    converge.add_argument("--final-time", type=float, default=0.5)
    converge.add_argument("--mesh-n", type=int, default=32, help="fixed mesh for time mode")
    converge.add_argument("--parallel", action="store_true", help="run levels in worker threads")
    converge.add_argument("--out", help="report directory")
    converge.set_defaults(handler=cmd_converge)

    pulse = commands.add_parser("pulse", help="pulse shapes")
    pulse_commands = pulse.add_subparsers(dest="pulse_command", required=True)
    pulse_list = pulse_commands.add_parser("list", help="list pulse kinds")
    pulse_list.set_defaults(handler=cmd_pulse_list)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits with 2 on usage errors, 0 on --help/--version
        return int(e.code or 0)
    _configure_logging(args.verbose, args.quiet)
    return args.handler(args)
