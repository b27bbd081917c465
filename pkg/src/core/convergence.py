"""
Space-time error norms and convergence-rate certification.

A study runs a case on a sequence of refinement levels, fits the slope of
log(error) against log(h) (or log(tau) in time mode) by least squares over
all successful levels, and certifies each banded quantity.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..utils.constants import (
    DEGENERATE_ERROR_FLOOR,
    H1_TAU_FACTOR,
    L2_RATIO_BAND,
    L2_TAU_FACTOR,
    RATE_BANDS,
    REFERENCE_SUBSTEPS,
)
from .assembly import CoefficientField, DofMap, boundary_vector, error_norms
from .executor import LevelOutcome, LevelStatus, StudyExecutor
from .manufactured import ManufacturedCase, gate_case
from .mesh import GeometrySpec, generate_mesh, interface_resolution
from .projection import InitialDatum, galerkin_orthogonality_residual, qh_project
from .pulses import SeparableForcing, h1_warning
from .sparse_solver import SolverConfig
from .timestepping import (
    TimeGrid,
    Trajectory,
    discrete_gap,
    run_fully_discrete,
    run_semidiscrete_reference,
)

logger = logging.getLogger(__name__)

MIN_LEVELS = 3


class StudyMode(Enum):
    H1 = "h1"
    L2 = "l2"
    TIME = "time"
    QH = "qh"
    INTERFACE = "interface"


@dataclass
class LevelResult:
    """One row of a convergence table; scale is the refinement variable (h or tau)."""

    n: int
    h: float
    scale: float
    steps: Optional[int] = None
    tau: Optional[float] = None
    errors: Dict[str, float] = field(default_factory=dict)
    diagnostics: Dict[str, float] = field(default_factory=dict)
    ok: bool = True
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "n": self.n, "h": self.h, "steps": self.steps, "tau": self.tau,
            "errors": dict(self.errors), "diagnostics": dict(self.diagnostics),
            "status": "ok" if self.ok else "failed", "message": self.message,
        }


@dataclass
class ConvergenceReport:
    case: str
    mode: StudyMode
    levels: List[LevelResult]
    bands: Dict[str, Tuple[float, float]]
    slopes: Dict[str, Optional[float]] = field(default_factory=dict)
    passed: Dict[str, bool] = field(default_factory=dict)
    flags: List[str] = field(default_factory=list)
    coupling: Dict[str, object] = field(default_factory=dict)
    label: str = "primary"
    notes: List[str] = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return bool(self.passed) and all(self.passed.values()) and "refused" not in self.flags

    @property
    def failed_levels(self) -> List[LevelResult]:
        return [level for level in self.levels if not level.ok]

    def to_dict(self) -> dict:
        return {
            "case": self.case,
            "mode": self.mode.value,
            "label": self.label,
            "coupling": dict(self.coupling),
            "levels": [level.to_dict() for level in self.levels],
            "bands": {k: list(v) for k, v in self.bands.items()},
            "slopes": dict(self.slopes),
            "passed": dict(self.passed),
            "certified": self.certified,
            "flags": list(self.flags),
            "notes": list(self.notes),
        }


# ---------------------------------------------------------------------------
# Error measures
# ---------------------------------------------------------------------------

def spacetime_errors(case: ManufacturedCase, trajectory: Trajectory, mesh, dofs: DofMap) -> Tuple[float, float]:
    """
    (L2(I;H), L2(I;V)) errors by the right-endpoint rule over t^1..t^N.

    Spatial norms use the degree-4 rule; V is measured by the H1 seminorm.
    """
    grid = trajectory.grid
    l2h = l2v = 0.0
    for n in range(1, grid.steps + 1):
        t = grid.time(n)
        lifting = None if trajectory.boundary is None else trajectory.boundary[n]
        e_h, e_v = error_norms(mesh, dofs, trajectory.states[n], case.u_at(t), case.grad_at(t), lifting)
        l2h += grid.tau * e_h ** 2
        l2v += grid.tau * e_v ** 2
    return math.sqrt(l2h), math.sqrt(l2v)


def fit_slope(scales: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(scale)."""
    return float(np.polyfit(np.log(scales), np.log(errors), 1)[0])


def nominal_h(geometry: GeometrySpec, n: int) -> float:
    """Side of the background grid cell, 2a / n."""
    return 2.0 * geometry.half_width / n


# ---------------------------------------------------------------------------
# Certification
# ---------------------------------------------------------------------------

def assess(
    case: str,
    mode: StudyMode,
    levels: Sequence[LevelResult],
    label: str = "primary",
    coupling: Optional[dict] = None,
    notes: Optional[List[str]] = None,
) -> ConvergenceReport:
    """Fit slopes and decide pass/fail for every banded quantity."""
    mode = StudyMode(mode)
    ordered = sorted(levels, key=lambda level: -level.scale)
    bands = dict(RATE_BANDS[mode.value])
    report = ConvergenceReport(
        case=case, mode=mode, levels=ordered, bands=bands, label=label,
        coupling=dict(coupling or {}), notes=list(notes or []),
    )
    if label != "primary":
        report.flags.append(label)

    ok = [level for level in ordered if level.ok]
    if len(ok) < MIN_LEVELS:
        report.flags.append("insufficient-levels")
        report.passed = {quantity: False for quantity in bands}
        report.slopes = {quantity: None for quantity in bands}
        return report

    scales = np.array([level.scale for level in ok])
    quantities = sorted(set().union(*(level.errors for level in ok)))
    for quantity in quantities:
        errors = np.array([level.errors[quantity] for level in ok])
        if np.all(errors <= DEGENERATE_ERROR_FLOOR) or np.any(errors <= 0):
            report.slopes[quantity] = None
            if quantity in bands:
                report.flags.append(f"degenerate:{quantity}")
                report.passed[quantity] = False
            continue
        slope = fit_slope(scales, errors)
        report.slopes[quantity] = slope
        if quantity not in bands:
            continue
        low, high = bands[quantity]
        passed = low <= slope <= high
        if np.any(np.diff(errors) >= 0):
            report.flags.append(f"non-monotone:{quantity}")
            passed = False
        if mode is StudyMode.L2 and quantity == "L2H":
            ratios = errors[:-1] / errors[1:]
            lo, hi = L2_RATIO_BAND
            if np.any((ratios < lo) | (ratios > hi)):
                report.flags.append(f"ratio:{quantity}")
                passed = False
        report.passed[quantity] = passed
    if any(flag.startswith("degenerate") for flag in report.flags):
        report.flags.append("degenerate")
    return report


def refused_report(case: str, mode: StudyMode, reason: str, label: str = "primary") -> ConvergenceReport:
    report = ConvergenceReport(
        case=case, mode=StudyMode(mode), levels=[], bands=dict(RATE_BANDS[StudyMode(mode).value]),
        label=label, flags=["refused"], notes=[reason],
    )
    report.passed = {quantity: False for quantity in report.bands}
    return report


def _log_level(outcome: LevelOutcome):
    logger.info(f"Level {outcome.key}: {outcome.status.value} after {outcome.elapsed:.2f} s")


def _collect(jobs, parallel: bool, make_failed) -> List[LevelResult]:
    executor = StudyExecutor(jobs, parallel=parallel, progress_callback=_log_level)
    outcomes = executor.run()
    logger.info(f"{len(outcomes)} levels finished in {executor.get_elapsed_time():.2f} s")
    levels = []
    for outcome in outcomes:
        if outcome.status is LevelStatus.SUCCESS:
            levels.append(outcome.value)
        else:
            levels.append(make_failed(outcome.key, outcome.error or outcome.status.value))
    return levels


# ---------------------------------------------------------------------------
# Studies
# ---------------------------------------------------------------------------

def _space_level(case: ManufacturedCase, n: int, mode: StudyMode, config) -> LevelResult:
    mesh = generate_mesh(case.geometry, n)
    dofs = DofMap.from_mesh(mesh)
    h = nominal_h(case.geometry, n)
    target = H1_TAU_FACTOR * h if mode is StudyMode.H1 else L2_TAU_FACTOR * h ** 2
    steps = max(1, math.ceil(case.final_time / target - 1e-9))
    grid = TimeGrid(case.final_time, steps)
    trajectory = run_fully_discrete(
        mesh, dofs, case.coefficients, case.forcing(), case.initial_datum(), grid, config,
        boundary_data=case.boundary_data(),
    )
    l2h, l2v = spacetime_errors(case, trajectory, mesh, dofs)
    logger.info(f"Level n={n}, N={steps}: L2(H)={l2h:.3e}, L2(V)={l2v:.3e}")
    return LevelResult(
        n=n, h=h, scale=h, steps=steps, tau=grid.tau,
        errors={"L2H": l2h, "L2V": l2v},
        diagnostics={
            "mesh_h": mesh.mesh_size_h,
            "energy_identity": trajectory.manifest["energy_identity_max_residual"],
        },
    )


def convergence_study(
    case: ManufacturedCase,
    levels: Sequence[int],
    mode="l2",
    config: Optional[SolverConfig] = None,
    parallel: bool = False,
    mesh_n: int = 32,
    forcing: Optional[SeparableForcing] = None,
) -> ConvergenceReport:
    """
    Run a refinement study of a manufactured case.

    Args:
        levels: mesh parameters n (space modes) or step counts N (time mode)
        mode: h1 (tau = h/4), l2 (tau = h^2/2), time (fixed mesh_n, N varies),
            qh (projection rates) or interface (lambda rate)
        forcing: replaces the case forcing in time mode, where errors are
            measured against the semi-discrete reference instead of u

    Raises:
        ValueError: fewer than three levels, or a forcing override outside time mode
        CaseGateError: the case failed its jump or strong-form gate
    """
    mode = StudyMode(mode)
    levels = sorted(set(int(level) for level in levels))
    if len(levels) < MIN_LEVELS:
        raise ValueError(f"A convergence study needs at least {MIN_LEVELS} distinct levels, got {len(levels)}")
    if forcing is not None and mode is not StudyMode.TIME:
        raise ValueError("A forcing override is only meaningful in time mode")

    if mode is StudyMode.INTERFACE:
        return interface_study(case.geometry, levels, parallel=parallel)

    forcing = forcing or case.forcing()
    if not forcing.is_h1_in_time:
        reason = h1_warning(forcing.pulse) or "forcing is not H1 in time"
        logger.warning(f"Refusing rate certification: {reason}")
        return refused_report(case.name, mode, reason, case.label)

    gates = gate_case(case)
    notes = case.notes + [f"gates: {', '.join(f'{k}={v:.2e}' for k, v in gates.items())}"]

    if mode is StudyMode.QH:
        report = projection_study(
            case.initial_datum(), case.coefficients, case.geometry, levels,
            name=case.name, config=config, parallel=parallel,
        )
        report.label = case.label
        report.notes = notes + report.notes
        if case.label != "primary":
            report.flags.insert(0, case.label)
        return report

    if mode is StudyMode.TIME:
        level_results = _time_levels(case, levels, mesh_n, forcing, config, parallel)
        coupling = {"mesh_n": mesh_n, "reference": "rk4", "substeps": REFERENCE_SUBSTEPS,
                    "final_time": case.final_time}
    else:
        factor = H1_TAU_FACTOR if mode is StudyMode.H1 else L2_TAU_FACTOR
        coupling = {"tau": "c*h" if mode is StudyMode.H1 else "c*h^2", "c": factor,
                    "final_time": case.final_time}
        jobs = [(n, lambda n=n: _space_level(case, n, mode, config)) for n in levels]
        level_results = _collect(
            jobs, parallel,
            lambda n, msg: LevelResult(n=n, h=nominal_h(case.geometry, n),
                                       scale=nominal_h(case.geometry, n), ok=False, message=msg),
        )
    return assess(case.name, mode, level_results, case.label, coupling, notes)


def _time_levels(case, steps_list, mesh_n, forcing, config, parallel) -> List[LevelResult]:
    mesh = generate_mesh(case.geometry, mesh_n)
    dofs = DofMap.from_mesh(mesh)
    datum = case.initial_datum()
    boundary = case.boundary_data()
    finest = TimeGrid(case.final_time, max(steps_list))
    for steps in steps_list:
        if finest.steps % steps:
            raise ValueError(f"Time levels must divide the finest step count {finest.steps}, got {steps}")
    reference = run_semidiscrete_reference(
        mesh, dofs, case.coefficients, forcing, datum, finest,
        substeps=REFERENCE_SUBSTEPS, config=config, boundary_data=boundary,
    )
    h = nominal_h(case.geometry, mesh_n)

    def level(steps: int) -> LevelResult:
        grid = TimeGrid(case.final_time, steps)
        trajectory = run_fully_discrete(
            mesh, dofs, case.coefficients, forcing, datum, grid, config, boundary_data=boundary,
        )
        gap_h, gap_v = discrete_gap(trajectory, reference, mesh, dofs)
        logger.info(f"Level N={steps}: L2(H) gap={gap_h:.3e}")
        return LevelResult(
            n=mesh_n, h=h, scale=grid.tau, steps=steps, tau=grid.tau,
            errors={"L2H": gap_h, "L2V": gap_v},
            diagnostics={"energy_identity": trajectory.manifest["energy_identity_max_residual"]},
        )

    jobs = [(steps, lambda steps=steps: level(steps)) for steps in steps_list]
    return _collect(
        jobs, parallel,
        lambda steps, msg: LevelResult(n=mesh_n, h=h, scale=case.final_time / steps, steps=steps,
                                       tau=case.final_time / steps, ok=False, message=msg),
    )


def projection_study(
    datum: InitialDatum,
    coefficients: CoefficientField,
    geometry: GeometrySpec,
    ns: Sequence[int],
    name: str = "custom",
    config: Optional[SolverConfig] = None,
    parallel: bool = False,
) -> ConvergenceReport:
    """L2 and H1 errors of Q_h u0 over a mesh family."""

    def level(n: int) -> LevelResult:
        mesh = generate_mesh(geometry, n)
        dofs = DofMap.from_mesh(mesh)
        q = qh_project(mesh, dofs, coefficients, datum, config)
        lifting = None
        if datum.boundary is not None:
            lifting = boundary_vector(mesh, dofs, datum.boundary)
        l2, h1 = error_norms(mesh, dofs, q, datum.u0, datum.grad_u0, lifting)
        residual = galerkin_orthogonality_residual(mesh, dofs, coefficients, datum, q)
        h = nominal_h(geometry, n)
        return LevelResult(
            n=n, h=h, scale=h, errors={"L2": l2, "H1": h1},
            diagnostics={"galerkin_residual": residual, "lambda": interface_resolution(mesh)},
        )

    jobs = [(n, lambda n=n: level(n)) for n in ns]
    levels = _collect(
        jobs, parallel,
        lambda n, msg: LevelResult(n=n, h=nominal_h(geometry, n), scale=nominal_h(geometry, n),
                                   ok=False, message=msg),
    )
    return assess(name, StudyMode.QH, levels, coupling={"datum": datum.name})


def interface_study(geometry: GeometrySpec, ns: Sequence[int], parallel: bool = False) -> ConvergenceReport:
    """Rate of the interface resolution lambda against h."""

    def level(n: int) -> LevelResult:
        mesh = generate_mesh(geometry, n)
        h = nominal_h(geometry, n)
        return LevelResult(n=n, h=h, scale=h, errors={"lambda": interface_resolution(mesh)},
                           diagnostics={"mesh_h": mesh.mesh_size_h})

    jobs = [(n, lambda n=n: level(n)) for n in ns]
    levels = _collect(
        jobs, parallel,
        lambda n, msg: LevelResult(n=n, h=nominal_h(geometry, n), scale=nominal_h(geometry, n),
                                   ok=False, message=msg),
    )
    return assess("geometry", StudyMode.INTERFACE, levels,
                  coupling={"half_width": geometry.half_width,
                            "interface_radius": geometry.interface_radius})
