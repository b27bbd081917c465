"""
Time integration of the capacitive interface problem.

The fully discrete scheme is backward Euler in time with P1 elements in
space: for n = 1..N

    (A_sigma + A_eps / tau) u^n = F^n + (A_eps / tau) u^{n-1},

starting from the Q_h projection of the initial datum. A classical
fourth-order Runge-Kutta integration of the semi-discrete system
A_eps u' = F(t) - A_sigma u serves as a reference in time.
"""
import hashlib
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from ..utils.constants import REFERENCE_SUBSTEPS
from .assembly import (
    CoefficientField,
    DofMap,
    Form,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    boundary_vector,
    split_blocks,
)
from .errors import SolverError, StepFailure
from .mesh import Mesh
from .projection import InitialDatum, nodal_interpolate, qh_project
from .pulses import SeparableForcing, h1_warning
from .quadrature import segment_rule
from .sparse_solver import PreparedOperator, SolveResult, SolverConfig, prepare_operator

logger = logging.getLogger(__name__)

LOAD_SAMPLING_MODES = ("nodal", "average")


@dataclass(frozen=True)
class TimeGrid:
    """Equally spaced nodes t^n = n * tau on [0, T]."""

    final_time: float
    steps: int

    def __post_init__(self):
        T = float(self.final_time)
        if not np.isfinite(T) or T <= 0:
            raise ValueError(f"Final time must be positive, got {self.final_time!r}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"Step count must be an integer >= 1, got {self.steps!r}")
        object.__setattr__(self, "final_time", T)
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def tau(self) -> float:
        return self.final_time / self.steps

    @property
    def nodes(self) -> np.ndarray:
        nodes = np.arange(self.steps + 1) * self.tau
        nodes[-1] = self.final_time
        return nodes

    def time(self, n: int) -> float:
        # the last node is T exactly, not N * (T / N)
        return self.final_time if n == self.steps else n * self.tau

    def to_dict(self) -> dict:
        return {"final_time": self.final_time, "steps": self.steps, "tau": self.tau}


@dataclass(frozen=True)
class BoundaryData:
    """Time-dependent Dirichlet data g(t, x, y) and its time derivative."""

    value: Callable
    rate: Callable

    def at(self, t: float):
        return lambda x, y: self.value(t, x, y)

    def rate_at(self, t: float):
        return lambda x, y: self.rate(t, x, y)


@dataclass
class Trajectory:
    """
    States u^0..u^N on the free dofs.

    boundary holds the Dirichlet lifting (full vertex vectors) at every node
    when the run had nonhomogeneous boundary data. loads are the effective
    free-dof load vectors used at steps 1..N.
    """

    grid: TimeGrid
    states: List[np.ndarray] = field(default_factory=list)
    boundary: Optional[List[np.ndarray]] = None
    loads: List[np.ndarray] = field(default_factory=list)
    records: List[dict] = field(default_factory=list)
    manifest: dict = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return len(self.states) == self.grid.steps + 1

    def full_state(self, n: int, dofs: DofMap) -> np.ndarray:
        lifting = None if self.boundary is None else self.boundary[n]
        return dofs.expand(self.states[n], lifting)

    def freeze(self) -> "Trajectory":
        for array in self.states + self.loads + (self.boundary or []):
            array.setflags(write=False)
        return self

    def subsample(self, grid: TimeGrid) -> "Trajectory":
        """The states at the nodes of a coarser grid whose step divides this one."""
        if grid.final_time != self.grid.final_time or self.grid.steps % grid.steps:
            raise ValueError(
                f"Cannot sample a {self.grid.steps}-step trajectory on a {grid.steps}-step grid"
            )
        stride = self.grid.steps // grid.steps
        return Trajectory(
            grid=grid,
            states=self.states[::stride],
            boundary=None if self.boundary is None else self.boundary[::stride],
            manifest=dict(self.manifest, subsampled_from=self.grid.steps),
        )

    def energies(self, matrix) -> np.ndarray:
        """u^n . (matrix u^n) for every state."""
        return np.array([u @ (matrix @ u) for u in self.states])


def mesh_fingerprint(mesh: Mesh) -> str:
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(mesh.vertices).tobytes())
    digest.update(np.ascontiguousarray(mesh.elements).tobytes())
    digest.update(np.ascontiguousarray(mesh.tags).tobytes())
    return digest.hexdigest()[:16]


# ---------------------------------------------------------------------------
# Backward Euler
# ---------------------------------------------------------------------------

class BackwardEulerStepper:
    """Step operator A_sigma + A_eps / tau, preconditioned once per run."""

    def __init__(self, a_sigma, a_eps, grid: TimeGrid, config: Optional[SolverConfig] = None):
        self.a_sigma = a_sigma
        self.a_eps = a_eps
        self.grid = grid
        self.operator: PreparedOperator = prepare_operator(a_sigma + a_eps / grid.tau, config)

    def step(self, u_prev: np.ndarray, load: np.ndarray) -> SolveResult:
        rhs = load + (self.a_eps @ u_prev) / self.grid.tau
        return self.operator.solve(rhs, x0=u_prev)


def backward_euler_step(a_sigma, a_eps, grid: TimeGrid, u_prev, load, config: Optional[SolverConfig] = None):
    """One backward Euler step; returns u^n."""
    return BackwardEulerStepper(a_sigma, a_eps, grid, config).step(u_prev, load).x


class _LoadSampler:
    """Full-vertex load vectors F(t); separable forcings are assembled once."""

    def __init__(self, mesh: Mesh, forcing: SeparableForcing):
        self.mesh = mesh
        self.forcing = forcing
        self._profile_load = None
        if forcing.closure is None:
            self._profile_load = assemble_load(mesh, forcing.profile)

    def at(self, t: float) -> np.ndarray:
        if self._profile_load is not None:
            self.forcing.check_time(t)
            return float(self.forcing.pulse(t)) * self._profile_load
        return assemble_load(self.mesh, self.forcing.at_time(t))

    def average(self, t0: float, t1: float) -> np.ndarray:
        rule = segment_rule(3)
        total = np.zeros(self.mesh.n_vertices)
        for s, w in zip(rule.points, rule.weights):
            total += w * self.at(t0 + s * (t1 - t0))
        return total


class _Discretization:
    """Assembled blocks shared by both integrators."""

    def __init__(self, mesh: Mesh, dofs: DofMap, coeff: CoefficientField):
        sigma = assemble_stiffness(mesh, coeff, Form.SIGMA)
        eps = assemble_stiffness(mesh, coeff, Form.EPS)
        self.sigma_ff, self.sigma_fb = split_blocks(sigma, dofs)
        self.eps_ff, self.eps_fb = split_blocks(eps, dofs)


def _initial_state(mesh, dofs, coeff, datum: InitialDatum, config):
    if datum.projectable:
        return qh_project(mesh, dofs, coeff, datum, config), "qh"
    logger.warning(f"Initial datum '{datum.name}' has no strong form; falling back to nodal interpolation")
    return nodal_interpolate(mesh, dofs, datum.u0), "nodal-interpolation"


def _base_manifest(mesh, coeff, forcing, datum, grid, config, initial_method) -> dict:
    manifest = {
        "mesh": {
            "id": mesh_fingerprint(mesh),
            "n_vertices": mesh.n_vertices,
            "n_elements": mesh.n_elements,
            "h": mesh.mesh_size_h,
        },
        "coefficients": coeff.to_dict(),
        "pulse": forcing.pulse.describe() if forcing.closure is None else {"kind": forcing.name},
        "initial": {"datum": datum.name, "method": initial_method},
        "time": grid.to_dict(),
        "solver": (config or SolverConfig()).to_dict(),
        "warnings": [],
    }
    if initial_method != "qh":
        manifest["warnings"].append("initial datum interpolated at vertices (no Q_h projection)")
    if forcing.closure is None:
        warning = h1_warning(forcing.pulse)
        if warning:
            manifest["warnings"].append(warning)
    return manifest


def run_fully_discrete(
    mesh: Mesh,
    dofs: DofMap,
    coeff: CoefficientField,
    forcing: SeparableForcing,
    datum: InitialDatum,
    grid: TimeGrid,
    config: Optional[SolverConfig] = None,
    boundary_data: Optional[BoundaryData] = None,
    load_sampling: str = "nodal",
    step_callback: Optional[Callable[[int, np.ndarray], None]] = None,
) -> Trajectory:
    """
    Backward Euler run from u^0 = Q_h u0 (or the interpolation fallback).

    Raises:
        StepFailure: a step's solve failed; .partial holds the states so far
    """
    if load_sampling not in LOAD_SAMPLING_MODES:
        raise ValueError(f"load_sampling must be one of {LOAD_SAMPLING_MODES}, got {load_sampling!r}")
    if forcing.final_time < grid.final_time:
        raise ValueError(f"Forcing defined up to {forcing.final_time}, grid runs to {grid.final_time}")

    blocks = _Discretization(mesh, dofs, coeff)
    loads = _LoadSampler(mesh, forcing)
    stepper = BackwardEulerStepper(blocks.sigma_ff, blocks.eps_ff, grid, config)
    tau = grid.tau

    u0, method = _initial_state(mesh, dofs, coeff, datum, config)
    trajectory = Trajectory(grid=grid, states=[np.array(u0, dtype=float)])
    trajectory.manifest = _base_manifest(mesh, coeff, forcing, datum, grid, config, method)
    trajectory.manifest["load_sampling"] = load_sampling
    if boundary_data is not None:
        trajectory.boundary = [boundary_vector(mesh, dofs, boundary_data.at(0.0))]
    if step_callback is not None:
        step_callback(0, trajectory.full_state(0, dofs))

    logger.info(f"Backward Euler: {grid.steps} steps of tau={tau:.4g} on {dofs.n_free} dofs")
    for n in range(1, grid.steps + 1):
        t = grid.time(n)
        try:
            if load_sampling == "nodal":
                full_load = loads.at(t)
            else:
                full_load = loads.average(grid.time(n - 1), t)
            load = dofs.restrict(full_load)
            if boundary_data is not None:
                g_now = boundary_vector(mesh, dofs, boundary_data.at(t))
                g_prev = trajectory.boundary[-1]
                fixed = dofs.fixed
                load = (
                    load
                    - blocks.sigma_fb @ g_now[fixed]
                    - blocks.eps_fb @ (g_now[fixed] - g_prev[fixed]) / tau
                )
                trajectory.boundary.append(g_now)
            result = stepper.step(trajectory.states[-1], load)
        except SolverError as e:
            logger.error(f"Step {n} failed: {e}")
            if trajectory.boundary is not None:
                trajectory.boundary = trajectory.boundary[:len(trajectory.states)]
            raise StepFailure(n, e, trajectory) from e
        trajectory.states.append(result.x)
        trajectory.loads.append(load)
        trajectory.records.append(dict(step=n, **result.record()))
        logger.debug(f"step {n}: {result.iterations} CG iterations, residual {result.residual:.2e}")
        if step_callback is not None:
            step_callback(n, trajectory.full_state(n, dofs))

    trajectory.manifest["steps"] = trajectory.records
    residuals = energy_identity_residual(blocks.sigma_ff, blocks.eps_ff, grid, trajectory, trajectory.loads)
    trajectory.manifest["energy_identity_max_residual"] = float(residuals.max()) if residuals.size else 0.0
    return trajectory.freeze()


def energy_identity_residual(a_sigma, a_eps, grid: TimeGrid, trajectory: Trajectory, loads) -> np.ndarray:
    """
    Relative residual per step of

        a1(u^n, u^n) - a1(u^{n-1}, u^{n-1}) + tau^2 a1(d u^n, d u^n)
            + 2 tau a2(d u^n, d u^n) = 2 tau (F^n, d u^n),

    d u^n = (u^n - u^{n-1}) / tau, which every backward Euler step satisfies
    up to solver tolerance.
    """
    tau = grid.tau
    residuals = np.zeros(len(loads))
    for n, load in enumerate(loads, start=1):
        u, u_prev = trajectory.states[n], trajectory.states[n - 1]
        du = (u - u_prev) / tau
        terms = np.array([
            u @ (a_sigma @ u),
            -(u_prev @ (a_sigma @ u_prev)),
            tau ** 2 * (du @ (a_sigma @ du)),
            2.0 * tau * (du @ (a_eps @ du)),
            -2.0 * tau * (load @ du),
        ])
        scale = np.sum(np.abs(terms))
        residuals[n - 1] = abs(terms.sum()) / scale if scale > 0 else 0.0
    return residuals


# ---------------------------------------------------------------------------
# Semi-discrete reference
# ---------------------------------------------------------------------------

def run_semidiscrete_reference(
    mesh: Mesh,
    dofs: DofMap,
    coeff: CoefficientField,
    forcing: SeparableForcing,
    datum: InitialDatum,
    grid: TimeGrid,
    substeps: int = REFERENCE_SUBSTEPS,
    config: Optional[SolverConfig] = None,
    boundary_data: Optional[BoundaryData] = None,
) -> Trajectory:
    """
    Classical RK4 on A_eps u' = F(t) - A_sigma u, sampled at the grid nodes.

    Each grid interval is split into `substeps` RK4 steps; every stage is
    one CG solve with A_eps.
    """
    if substeps < 1:
        raise ValueError(f"substeps must be at least 1, got {substeps}")
    blocks = _Discretization(mesh, dofs, coeff)
    loads = _LoadSampler(mesh, forcing)
    mass = prepare_operator(blocks.eps_ff, config)
    fixed = dofs.fixed

    def derivative(t: float, u: np.ndarray, guess: np.ndarray) -> np.ndarray:
        rhs = dofs.restrict(loads.at(t)) - blocks.sigma_ff @ u
        if boundary_data is not None:
            g = boundary_vector(mesh, dofs, boundary_data.at(t))[fixed]
            dg = boundary_vector(mesh, dofs, boundary_data.rate_at(t))[fixed]
            rhs = rhs - blocks.sigma_fb @ g - blocks.eps_fb @ dg
        return mass.solve(rhs, x0=guess).x

    u0, method = _initial_state(mesh, dofs, coeff, datum, config)
    trajectory = Trajectory(grid=grid, states=[np.array(u0, dtype=float)])
    trajectory.manifest = _base_manifest(mesh, coeff, forcing, datum, grid, config, method)
    trajectory.manifest["integrator"] = {"method": "rk4", "substeps": substeps}
    if boundary_data is not None:
        trajectory.boundary = [boundary_vector(mesh, dofs, boundary_data.at(0.0))]

    h = grid.tau / substeps
    u = trajectory.states[0].copy()
    k1 = np.zeros_like(u)
    logger.info(f"RK4 reference: {grid.steps * substeps} substeps of h={h:.4g}")
    for n in range(1, grid.steps + 1):
        t0 = grid.time(n - 1)
        for m in range(substeps):
            t = t0 + m * h
            k1 = derivative(t, u, k1)
            k2 = derivative(t + 0.5 * h, u + 0.5 * h * k1, k1)
            k3 = derivative(t + 0.5 * h, u + 0.5 * h * k2, k2)
            k4 = derivative(min(t + h, grid.final_time), u + h * k3, k3)
            u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        trajectory.states.append(u.copy())
        if boundary_data is not None:
            trajectory.boundary.append(boundary_vector(mesh, dofs, boundary_data.at(grid.time(n))))
    return trajectory.freeze()


def discrete_gap(traj_a: Trajectory, traj_b: Trajectory, mesh: Mesh, dofs: DofMap):
    """
    (L2(I;H), L2(I;V)) distance between two trajectories on the same mesh.

    Right-endpoint rule over the nodes of traj_a; traj_b may live on a
    finer grid whose step count is a multiple.
    """
    if traj_b.grid.steps != traj_a.grid.steps:
        traj_b = traj_b.subsample(traj_a.grid)
    mass = assemble_mass(mesh)
    laplace = assemble_stiffness(mesh, 1.0, Form.EPS)
    tau = traj_a.grid.tau
    l2h = l2v = 0.0
    for n in range(1, traj_a.grid.steps + 1):
        d = traj_a.full_state(n, dofs) - traj_b.full_state(n, dofs)
        l2h += tau * (d @ (mass @ d))
        l2v += tau * (d @ (laplace @ d))
    return float(np.sqrt(l2h)), float(np.sqrt(l2v))
