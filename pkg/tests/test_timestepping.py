"""Tests for backward Euler time stepping and the RK4 reference."""
import numpy as np
import pytest

from src.core.assembly import CoefficientField, DofMap, assemble_load, assemble_stiffness
from src.core.errors import ConvergenceError, StepFailure
from src.core.manufactured import case_A, case_B
from src.core.mesh import generate_mesh
from src.core.projection import InitialDatum, zero_datum
from src.core.pulses import SeparableForcing, gaussian_spot, rectangular, trapezoidal, uniform_profile, zero_pulse
from src.core.sparse_solver import SolverConfig, dense_solve
from src.core.timestepping import (
    BackwardEulerStepper,
    TimeGrid,
    Trajectory,
    backward_euler_step,
    discrete_gap,
    energy_identity_residual,
    mesh_fingerprint,
    run_fully_discrete,
    run_semidiscrete_reference,
)
from src.core.convergence import spacetime_errors


@pytest.fixture
def pulse_forcing():
    return SeparableForcing(trapezoidal(1.0, 0.0, 0.25, 0.0625), uniform_profile(), 0.25)


class TestTimeGrid:
    """Test suite for TimeGrid."""

    def test_step(self):
        """Test tau and the node count."""
        grid = TimeGrid(1.0, 8)
        assert grid.tau == 0.125
        assert grid.nodes.shape == (9,)
        assert grid.time(3) == 0.375

    def test_last_node_is_final_time(self):
        """Test that rounding never moves the last node off T."""
        grid = TimeGrid(0.3, 7)
        assert grid.nodes[-1] == 0.3
        assert grid.time(7) == 0.3

    @pytest.mark.parametrize("T, N", [(0.0, 4), (-1.0, 4), (1.0, 0), (1.0, 2.5)])
    def test_rejects_invalid(self, T, N):
        """Test that T must be positive and N a positive integer."""
        with pytest.raises(ValueError):
            TimeGrid(T, N)


class TestBackwardEuler:
    """Test suite for the fully discrete scheme."""

    def test_single_step_matches_dense(self, mesh8, dofs8, coefficients):
        """Test one step against a dense solve of the step system."""
        a_sigma = assemble_stiffness(mesh8, coefficients, "sigma", dofs=dofs8)
        a_eps = assemble_stiffness(mesh8, coefficients, "eps", dofs=dofs8)
        grid = TimeGrid(1.0, 10)
        rng = np.random.default_rng(3)
        u_prev = rng.standard_normal(dofs8.n_free)
        load = rng.standard_normal(dofs8.n_free)
        u = backward_euler_step(a_sigma, a_eps, grid, u_prev, load)
        expected = dense_solve(a_sigma + a_eps / grid.tau, load + a_eps @ u_prev / grid.tau)
        np.testing.assert_allclose(u, expected, rtol=1e-9, atol=1e-12)

    def test_zero_data_stay_zero(self, mesh8, dofs8, coefficients):
        """Test that zero forcing from a zero datum gives an identically zero trajectory."""
        forcing = SeparableForcing(zero_pulse(), uniform_profile(), 1.0)
        trajectory = run_fully_discrete(mesh8, dofs8, coefficients, forcing, zero_datum(), TimeGrid(1.0, 4))
        assert trajectory.complete
        assert all(not state.any() for state in trajectory.states)

    def test_energy_identity(self, mesh8, dofs8, coefficients, pulse_forcing):
        """Test that every step satisfies the discrete energy identity."""
        trajectory = run_fully_discrete(
            mesh8, dofs8, coefficients, pulse_forcing, zero_datum(), TimeGrid(0.25, 8),
            SolverConfig(tol=1e-12),
        )
        assert trajectory.manifest["energy_identity_max_residual"] < 1e-8

    def test_manifest(self, mesh8, dofs8, coefficients, pulse_forcing):
        """Test the run manifest contents."""
        trajectory = run_fully_discrete(mesh8, dofs8, coefficients, pulse_forcing, zero_datum(),
                                        TimeGrid(0.25, 4))
        manifest = trajectory.manifest
        assert manifest["mesh"]["id"] == mesh_fingerprint(mesh8)
        assert manifest["initial"] == {"datum": "zero", "method": "qh"}
        assert manifest["time"] == {"final_time": 0.25, "steps": 4, "tau": 0.0625}
        assert len(manifest["steps"]) == 4
        assert all(record["converged"] for record in manifest["steps"])
        assert manifest["warnings"] == []

    def test_rectangular_pulse_warns(self, mesh8, dofs8, coefficients):
        """Test that a rectangular pulse records the regularity warning."""
        forcing = SeparableForcing(rectangular(1.0, 0.0, 0.125), uniform_profile(), 0.25)
        trajectory = run_fully_discrete(mesh8, dofs8, coefficients, forcing, zero_datum(), TimeGrid(0.25, 4))
        assert any("not in H1" in warning for warning in trajectory.manifest["warnings"])

    def test_interpolation_fallback(self, mesh8, dofs8, coefficients):
        """Test that a datum without strong form is interpolated and flagged."""
        datum = InitialDatum(u0=lambda x, y: (1 - x ** 2) * (1 - y ** 2), name="raw")
        forcing = SeparableForcing(zero_pulse(), uniform_profile(), 1.0)
        trajectory = run_fully_discrete(mesh8, dofs8, coefficients, forcing, datum, TimeGrid(1.0, 2))
        assert trajectory.manifest["initial"]["method"] == "nodal-interpolation"
        assert trajectory.manifest["warnings"]
        v = mesh8.vertices[dofs8.free]
        np.testing.assert_array_equal(trajectory.states[0], (1 - v[:, 0] ** 2) * (1 - v[:, 1] ** 2))

    def test_decay_without_forcing(self, mesh8, dofs8, coefficients):
        """Test that the sigma energy never grows without forcing."""
        datum = case_A().initial_datum()
        forcing = SeparableForcing(zero_pulse(), uniform_profile(), 1.0)
        trajectory = run_fully_discrete(mesh8, dofs8, coefficients, forcing, datum, TimeGrid(1.0, 8))
        energies = trajectory.energies(assemble_stiffness(mesh8, coefficients, "sigma", dofs=dofs8))
        assert energies[0] > 0
        assert np.all(np.diff(energies) <= 1e-10 * energies[0])

    def test_stepper_matches_single_step(self, mesh8, dofs8, coefficients):
        """Test that a prepared stepper reproduces backward_euler_step on every call."""
        a_sigma = assemble_stiffness(mesh8, coefficients, "sigma", dofs=dofs8)
        a_eps = assemble_stiffness(mesh8, coefficients, "eps", dofs=dofs8)
        grid = TimeGrid(0.5, 4)
        stepper = BackwardEulerStepper(a_sigma, a_eps, grid, SolverConfig(tol=1e-12))
        rng = np.random.default_rng(11)
        u = np.zeros(dofs8.n_free)
        for _ in range(3):
            load = rng.standard_normal(dofs8.n_free)
            expected = backward_euler_step(a_sigma, a_eps, grid, u, load, SolverConfig(tol=1e-12))
            u = stepper.step(u, load).x
            np.testing.assert_allclose(u, expected, rtol=1e-8, atol=1e-12)

    def test_energy_identity_residual_detects_perturbation(self, mesh8, dofs8, coefficients, pulse_forcing):
        """Test the per-step residual on a computed and on a perturbed trajectory."""
        a_sigma = assemble_stiffness(mesh8, coefficients, "sigma", dofs=dofs8)
        a_eps = assemble_stiffness(mesh8, coefficients, "eps", dofs=dofs8)
        grid = TimeGrid(0.25, 4)
        trajectory = run_fully_discrete(mesh8, dofs8, coefficients, pulse_forcing, zero_datum(), grid,
                                        SolverConfig(tol=1e-12))
        residuals = energy_identity_residual(a_sigma, a_eps, grid, trajectory, trajectory.loads)
        assert residuals.shape == (4,)
        assert np.all(residuals < 1e-8)

        states = [state.copy() for state in trajectory.states]
        states[2] = 1.5 * states[2]
        perturbed = Trajectory(grid=grid, states=states)
        residuals = energy_identity_residual(a_sigma, a_eps, grid, perturbed, trajectory.loads)
        assert residuals[1] > 1e-4
        assert residuals[0] < 1e-8

    def test_step_callback(self, mesh8, dofs8, coefficients, pulse_forcing):
        """Test that the callback sees every full vertex state."""
        seen = []
        run_fully_discrete(mesh8, dofs8, coefficients, pulse_forcing, zero_datum(), TimeGrid(0.25, 4),
                           step_callback=lambda n, values: seen.append((n, values.shape)))
        assert seen == [(n, (mesh8.n_vertices,)) for n in range(5)]

    def test_average_load_sampling(self, mesh8, dofs8, coefficients, pulse_forcing):
        """Test that averaged loads differ from nodal ones on a ramp."""
        grid = TimeGrid(0.25, 4)
        nodal = run_fully_discrete(mesh8, dofs8, coefficients, pulse_forcing, zero_datum(), grid)
        average = run_fully_discrete(mesh8, dofs8, coefficients, pulse_forcing, zero_datum(), grid,
                                     load_sampling="average")
        assert average.manifest["load_sampling"] == "average"
        assert not np.array_equal(nodal.states[1], average.states[1])
        assert average.manifest["energy_identity_max_residual"] < 1e-8

    def test_rejects_unknown_sampling(self, mesh8, dofs8, coefficients, pulse_forcing):
        """Test that load sampling must be nodal or average."""
        with pytest.raises(ValueError):
            run_fully_discrete(mesh8, dofs8, coefficients, pulse_forcing, zero_datum(), TimeGrid(0.25, 4),
                               load_sampling="midpoint")

    def test_forcing_horizon(self, mesh8, dofs8, coefficients, pulse_forcing):
        """Test that the grid may not outrun the forcing."""
        with pytest.raises(ValueError):
            run_fully_discrete(mesh8, dofs8, coefficients, pulse_forcing, zero_datum(), TimeGrid(1.0, 4))

    def test_step_failure_keeps_partial(self, mesh8, dofs8, coefficients, pulse_forcing):
        """Test that a failed solve reports its step and the states so far."""
        with pytest.raises(StepFailure) as info:
            run_fully_discrete(mesh8, dofs8, coefficients, pulse_forcing, zero_datum(), TimeGrid(0.25, 4),
                               SolverConfig(max_iter=1))
        assert info.value.step == 1
        assert isinstance(info.value.cause, ConvergenceError)
        assert len(info.value.partial.states) == 1

    def test_deterministic(self, mesh8, dofs8, coefficients, pulse_forcing):
        """Test that identical runs give bit-identical states."""
        grid = TimeGrid(0.25, 4)
        a = run_fully_discrete(mesh8, dofs8, coefficients, pulse_forcing, zero_datum(), grid)
        b = run_fully_discrete(mesh8, dofs8, coefficients, pulse_forcing, zero_datum(), grid)
        for u, v in zip(a.states, b.states):
            assert np.array_equal(u, v)

    def test_trajectory_is_frozen(self, mesh8, dofs8, coefficients, pulse_forcing):
        """Test that finished trajectories are read-only."""
        trajectory = run_fully_discrete(mesh8, dofs8, coefficients, pulse_forcing, zero_datum(),
                                        TimeGrid(0.25, 2))
        with pytest.raises(ValueError):
            trajectory.states[1][0] = 1.0

    def test_vanishing_conductivity_keeps_state(self, mesh8, dofs8):
        """Test that sigma = 0 and f = 0 leave the projected datum unchanged."""
        field = CoefficientField(0.0, 0.0, 1.0, 0.1)
        forcing = SeparableForcing(zero_pulse(), uniform_profile(), 0.5)
        trajectory = run_fully_discrete(mesh8, dofs8, field, forcing, case_A().initial_datum(),
                                        TimeGrid(0.5, 8), SolverConfig(tol=1e-12))
        u0 = trajectory.states[0]
        assert np.linalg.norm(u0) > 0
        drift = max(np.linalg.norm(u - u0) for u in trajectory.states) / np.linalg.norm(u0)
        assert drift < 1e-8

    def test_sixteen_steps_match_dense_oracle(self):
        """Test every step of a 16-step run on the n = 4 mesh against dense direct solves."""
        case = case_A()
        mesh = generate_mesh(case.geometry, 4)
        dofs = DofMap.from_mesh(mesh)
        grid = TimeGrid(case.final_time, 16)
        trajectory = run_fully_discrete(mesh, dofs, case.coefficients, case.forcing(), case.initial_datum(),
                                        grid, SolverConfig(tol=1e-13))
        a_sigma = assemble_stiffness(mesh, case.coefficients, "sigma", dofs=dofs)
        a_eps = assemble_stiffness(mesh, case.coefficients, "eps", dofs=dofs)
        u = trajectory.states[0]
        for n, load in enumerate(trajectory.loads, start=1):
            u = dense_solve(a_sigma + a_eps / grid.tau, load + a_eps @ u / grid.tau)
            scale = max(1.0, np.abs(u).max())
            np.testing.assert_allclose(trajectory.states[n], u, rtol=0, atol=1e-10 * scale)
        assert len(trajectory.loads) == 16

    def test_scheme_is_linear(self, mesh8, dofs8, coefficients, pulse_forcing):
        """Test that combined data give the combined trajectory."""
        datum_a = case_A().initial_datum()
        datum_b = InitialDatum(u0=lambda x, y: np.ones_like(x), fstar=lambda x, y: np.ones_like(x),
                               name="flat")
        spot = SeparableForcing(trapezoidal(2.0, 0.05, 0.1, 0.05), gaussian_spot((0.3, -0.2), 0.2), 0.25)
        alpha, beta = 2.0, -0.5
        mixed = SeparableForcing(
            zero_pulse(), uniform_profile(), 0.25,
            closure=lambda t, x, y: alpha * pulse_forcing.evaluate(t, x, y) + beta * spot.evaluate(t, x, y),
        )
        grid = TimeGrid(0.25, 4)
        config = SolverConfig(tol=1e-13)
        run_a = run_fully_discrete(mesh8, dofs8, coefficients, pulse_forcing, datum_a, grid, config)
        run_b = run_fully_discrete(mesh8, dofs8, coefficients, spot, datum_b, grid, config)
        combined = run_fully_discrete(mesh8, dofs8, coefficients, mixed,
                                      datum_a.combine(alpha, datum_b, beta), grid, config)
        for n in range(grid.steps + 1):
            expected = alpha * run_a.states[n] + beta * run_b.states[n]
            np.testing.assert_allclose(combined.states[n], expected, rtol=0,
                                       atol=1e-9 * max(1.0, np.abs(expected).max()))

    def test_case_B_boundary_lifting(self, mesh8):
        """Test that nonhomogeneous Dirichlet data are carried at every node."""
        case = case_B()
        dofs = DofMap.from_mesh(mesh8)
        grid = TimeGrid(case.final_time, 8)
        trajectory = run_fully_discrete(
            mesh8, dofs, case.coefficients, case.forcing(), case.initial_datum(), grid,
            boundary_data=case.boundary_data(),
        )
        assert len(trajectory.boundary) == grid.steps + 1
        full = trajectory.full_state(grid.steps, dofs)
        b = mesh8.vertices[mesh8.boundary]
        np.testing.assert_allclose(full[mesh8.boundary], case.u(grid.final_time, b[:, 0], b[:, 1]))
        l2h, _ = spacetime_errors(case, trajectory, mesh8, dofs)
        assert l2h < 0.1


class TestSemidiscreteReference:
    """Test suite for the RK4 reference and discrete gaps."""

    def test_backward_euler_is_first_order(self, mesh8, dofs8):
        """Test that halving tau roughly halves the gap to the reference."""
        case = case_A()
        reference = run_semidiscrete_reference(
            mesh8, dofs8, case.coefficients, case.forcing(), case.initial_datum(), TimeGrid(case.final_time, 16),
        )
        gaps = []
        for steps in (4, 8, 16):
            trajectory = run_fully_discrete(mesh8, dofs8, case.coefficients, case.forcing(),
                                            case.initial_datum(), TimeGrid(case.final_time, steps))
            gaps.append(discrete_gap(trajectory, reference, mesh8, dofs8)[0])
        assert gaps[0] > gaps[1] > gaps[2] > 0
        assert 1.5 < gaps[1] / gaps[2] < 2.6

    def test_reference_starts_from_projection(self, mesh8, dofs8, coefficients, pulse_forcing):
        """Test that both integrators share u^0."""
        grid = TimeGrid(0.25, 2)
        reference = run_semidiscrete_reference(mesh8, dofs8, coefficients, pulse_forcing, zero_datum(), grid,
                                               substeps=2)
        assert reference.manifest["integrator"] == {"method": "rk4", "substeps": 2}
        assert not reference.states[0].any()
        assert reference.complete

    def test_gap_to_itself_is_zero(self, mesh8, dofs8, coefficients, pulse_forcing):
        """Test that a trajectory has zero gap to itself."""
        trajectory = run_fully_discrete(mesh8, dofs8, coefficients, pulse_forcing, zero_datum(),
                                        TimeGrid(0.25, 4))
        assert discrete_gap(trajectory, trajectory, mesh8, dofs8) == (0.0, 0.0)

    def test_subsample(self, mesh8, dofs8, coefficients, pulse_forcing):
        """Test sampling a fine trajectory on a coarser grid."""
        fine = run_fully_discrete(mesh8, dofs8, coefficients, pulse_forcing, zero_datum(), TimeGrid(0.25, 8))
        coarse = fine.subsample(TimeGrid(0.25, 4))
        assert len(coarse.states) == 5
        assert coarse.states[2] is fine.states[4]
        with pytest.raises(ValueError):
            fine.subsample(TimeGrid(0.25, 3))

    def test_rejects_bad_substeps(self, mesh8, dofs8, coefficients, pulse_forcing):
        """Test that the reference needs at least one substep."""
        with pytest.raises(ValueError):
            run_semidiscrete_reference(mesh8, dofs8, coefficients, pulse_forcing, zero_datum(),
                                       TimeGrid(0.25, 2), substeps=0)

    def test_rk4_integrates_cubic_forcing_exactly(self, mesh8, dofs8):
        """Test that with sigma = 0 the reference satisfies A_eps (u(T) - u(0)) = (int p) G for cubic p."""
        field = CoefficientField(0.0, 0.0, 1.0, 0.1)
        profile = gaussian_spot((0.2, 0.1), 0.3)

        def p(t):
            return 1.0 + 2.0 * t - 3.0 * t ** 2 + 4.0 * t ** 3

        forcing = SeparableForcing(zero_pulse(), uniform_profile(), 0.5,
                                   closure=lambda t, x, y: p(t) * profile(x, y))
        reference = run_semidiscrete_reference(mesh8, dofs8, field, forcing, zero_datum(), TimeGrid(0.5, 2),
                                               substeps=3, config=SolverConfig(tol=1e-13))
        a_eps = assemble_stiffness(mesh8, field, "eps", dofs=dofs8)
        integral = 0.5 + 0.5 ** 2 - 0.5 ** 3 + 0.5 ** 4
        expected = integral * dofs8.restrict(assemble_load(mesh8, profile))
        np.testing.assert_allclose(a_eps @ (reference.states[-1] - reference.states[0]), expected,
                                   rtol=0, atol=1e-9 * np.abs(expected).max())
