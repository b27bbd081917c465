"""
Build and run a simulation from a run configuration.
"""
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

from ..utils.constants import OUTPUT_ENV_VAR
from .assembly import CoefficientField, DofMap
from .config import ConfigManager
from .errors import StepFailure
from .export import ProbeRecorder, write_manifest, write_vtk_snapshot
from .manufactured import case_A, case_B, compile_spatial_expression
from .mesh import GeometrySpec, Mesh, generate_mesh
from .mesh_io import read_mesh
from .projection import InitialDatum, zero_datum
from .pulses import PulseShape, SeparableForcing, gaussian_spot, uniform_profile
from .sparse_solver import SolverConfig
from .timestepping import BoundaryData, TimeGrid, Trajectory, run_fully_discrete

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.txt"
PROBES_NAME = "probes.csv"
RESOLVED_CONFIG_NAME = "config.json"

_PULSE_KEYS = ("amplitude", "onset", "duration", "rise_time", "decay", "center", "width")


@dataclass
class SimulationResult:
    trajectory: Optional[Trajectory]
    manifest_path: Path
    snapshots: List[Path] = field(default_factory=list)
    probes_path: Optional[Path] = None


def resolve_output_dir(directory) -> Path:
    """Relative output directories live under $CAPFEM_OUT when it is set."""
    directory = Path(directory)
    root = os.environ.get(OUTPUT_ENV_VAR)
    if root and not directory.is_absolute():
        return Path(root) / directory
    return directory


def build_geometry(config: ConfigManager) -> GeometrySpec:
    return GeometrySpec(config.get("geometry.half_width"), config.get("geometry.interface_radius"))


def build_mesh(config: ConfigManager) -> Mesh:
    if config.get("mesh.file"):
        return read_mesh(config.get("mesh.file"))
    return generate_mesh(build_geometry(config), config.get("mesh.n"), min_angle=config.get("mesh.min_angle"))


def build_coefficients(config: ConfigManager) -> CoefficientField:
    return CoefficientField(**{name: config.get(f"coefficients.{name}")
                               for name in ("sigma1", "sigma2", "eps1", "eps2")})


def build_forcing(config: ConfigManager) -> SeparableForcing:
    pulse = PulseShape(config.get("pulse.kind"), **{k: config.get(f"pulse.{k}") for k in _PULSE_KEYS})
    if config.get("pulse.profile") == "gaussian-spot":
        profile = gaussian_spot(config.get("pulse.profile_center"), config.get("pulse.profile_width"))
    else:
        profile = uniform_profile()
    return SeparableForcing(pulse, profile, config.get("time.final_time"), name=pulse.kind.value)


def build_datum(config: ConfigManager, geometry: GeometrySpec,
                coefficients: CoefficientField) -> Tuple[InitialDatum, Optional[BoundaryData]]:
    """Initial datum and, for case-B, its Dirichlet data."""
    selector = config.get("initial.datum")
    if selector == "zero":
        return zero_datum(), None
    if selector == "case-A":
        case = case_A(coefficients=coefficients, geometry=geometry,
                      final_time=config.get("time.final_time"))
        return case.initial_datum(), None
    if selector == "case-B":
        case = case_B(eps=(coefficients.eps1, coefficients.eps2), geometry=geometry,
                      final_time=config.get("time.final_time"))
        return case.initial_datum(), case.boundary_data()
    expression = selector.split(":", 1)[1]
    u0 = compile_spatial_expression(expression)
    return InitialDatum(u0=u0, name=f"interpolate:{expression}"), None


def build_solver_config(config: ConfigManager) -> SolverConfig:
    return SolverConfig(
        tol=config.get("solver.tol"),
        max_iter=config.get("solver.maxit"),
        preconditioner=config.get("solver.preconditioner"),
    )


def run_simulation(config: ConfigManager, output_dir) -> SimulationResult:
    """
    Run the fully discrete scheme described by config.

    Writes a VTK snapshot every output.stride steps (and at the last step),
    a probe CSV when probes are configured, the resolved configuration
    (config.json, written before the first step) and the run manifest.

    Raises:
        StepFailure: a step failed; the manifest is still written
        OSError: an output file cannot be written
    """
    output_dir = Path(output_dir)
    mesh = build_mesh(config)
    geometry = mesh.geometry or build_geometry(config)
    dofs = DofMap.from_mesh(mesh)
    coefficients = build_coefficients(config)
    forcing = build_forcing(config)
    datum, boundary = build_datum(config, geometry, coefficients)
    grid = TimeGrid(config.get("time.final_time"), config.get("time.steps"))
    solver = build_solver_config(config)
    stride = config.get("output.stride")

    snapshots: List[Path] = []
    probes = None
    if config.get("output.probes"):
        probes = ProbeRecorder(output_dir / PROBES_NAME, mesh, config.get("output.probes"))

    def on_step(n, values):
        t = grid.time(n)
        if n % stride == 0 or n == grid.steps:
            snapshots.append(write_vtk_snapshot(output_dir / f"snapshot_{n:05d}.vtk", mesh, values, t))
        if probes is not None:
            probes.record(t, values)

    config_path = output_dir / RESOLVED_CONFIG_NAME
    if not config.save(config_path):
        raise OSError(f"cannot write the resolved configuration {config_path}")
    manifest = {"config": config.to_dict(), "config_file": config_path.name}
    manifest_path = output_dir / MANIFEST_NAME
    try:
        trajectory = run_fully_discrete(
            mesh, dofs, coefficients, forcing, datum, grid, solver,
            boundary_data=boundary, load_sampling=config.get("time.load_sampling"),
            step_callback=on_step,
        )
    except StepFailure as e:
        partial = e.partial.manifest if e.partial is not None else {}
        manifest.update(run=partial, failed_step=e.step, error=str(e.cause))
        manifest["files"] = [p.name for p in snapshots]
        write_manifest(manifest_path, manifest)
        raise

    manifest["run"] = trajectory.manifest
    manifest["files"] = [p.name for p in snapshots]
    probes_path = None
    if probes is not None:
        probes_path = probes.write()
        manifest["files"].append(probes_path.name)
    write_manifest(manifest_path, manifest)
    for warning in trajectory.manifest["warnings"]:
        logger.warning(warning)
    logger.info(f"Run finished: {len(snapshots)} snapshots in {output_dir}")
    return SimulationResult(trajectory, manifest_path, snapshots, probes_path)
