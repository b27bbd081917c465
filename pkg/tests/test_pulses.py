"""Tests for pulse shapes and separable forcings."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.core.errors import TimeRangeError
from src.core.pulses import (
    PulseKind,
    PulseShape,
    SeparableForcing,
    biphasic_exponential,
    gaussian,
    gaussian_spot,
    h1_warning,
    pulse_catalog,
    rectangular,
    time_samples,
    trapezoidal,
    uniform_profile,
    zero_pulse,
)
from src.core.timestepping import TimeGrid

amplitudes = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False)
times = st.floats(min_value=-1.0, max_value=3.0, allow_nan=False)


class TestPulseShape:
    """Test suite for PulseShape."""

    def test_rectangular_values(self):
        """Test the half-open support of the rectangular pulse."""
        pulse = rectangular(2.0, 0.25, 0.5)
        np.testing.assert_array_equal(pulse([0.0, 0.25, 0.5, 0.75, 1.0]), [0.0, 2.0, 2.0, 0.0, 0.0])

    def test_trapezoidal_values(self):
        """Test ramps and plateau of the trapezoidal pulse."""
        pulse = trapezoidal(1.0, 0.0, 1.0, 0.25)
        np.testing.assert_allclose(pulse([0.0, 0.125, 0.25, 0.5, 0.875, 1.0, 1.5]),
                                   [0.0, 0.5, 1.0, 1.0, 0.5, 0.0, 0.0])

    def test_gaussian_peak(self):
        """Test that the gaussian pulse peaks at its center."""
        pulse = gaussian(3.0, 0.5, 0.1)
        assert pulse(0.5) == pytest.approx(3.0)
        assert pulse(0.6) == pytest.approx(3.0 * np.exp(-0.5))

    def test_biphasic_values(self):
        """Test the damped sine cycle."""
        pulse = biphasic_exponential(1.0, 0.5, 1.0, 0.5)
        assert pulse(0.5) == 0.0
        assert pulse(0.75) == pytest.approx(np.exp(-0.5))
        assert pulse(1.25) < 0.0
        assert pulse(2.0) == 0.0

    def test_zero_pulse(self):
        """Test that the zero pulse vanishes everywhere."""
        assert not np.any(zero_pulse()(np.linspace(0, 2, 9)))

    def test_kind_from_string(self):
        """Test that kinds accept their config names."""
        assert PulseShape("biphasic-exponential").kind is PulseKind.BIPHASIC_EXPONENTIAL

    @pytest.mark.parametrize("kwargs", [
        {"kind": "trapezoidal", "duration": 1.0, "rise_time": 0.0},
        {"kind": "trapezoidal", "duration": 1.0, "rise_time": 0.75},
        {"kind": "rectangular", "duration": 0.0},
        {"kind": "gaussian", "width": 0.0},
        {"kind": "biphasic-exponential", "decay": -1.0},
        {"kind": "rectangular", "amplitude": float("inf")},
        {"kind": "square"},
    ])
    def test_rejects_invalid(self, kwargs):
        """Test parameter validation."""
        with pytest.raises(ValueError):
            PulseShape(**kwargs)

    def test_regularity_flags(self):
        """Test that only the rectangular pulse fails the H1 hypothesis."""
        assert not rectangular(1.0, 0.0, 0.5).is_h1_in_time
        assert trapezoidal(1.0, 0.0, 0.5, 0.125).is_h1_in_time
        assert gaussian(1.0, 0.5, 0.1).is_h1_in_time

    def test_h1_warning(self):
        """Test that the warning names the pulse and vanishes for zero amplitude."""
        assert "rectangular" in h1_warning(rectangular(1.0, 0.0, 0.5))
        assert h1_warning(zero_pulse()) is None
        assert h1_warning(trapezoidal(1.0, 0.0, 0.5, 0.125)) is None

    def test_compact_support(self):
        """Test the support interval."""
        assert biphasic_exponential(1.0, 0.25, 0.5, 1.0).compact_support == (0.25, 0.75)
        assert gaussian(1.0, 0.5, 0.1).compact_support is None

    def test_describe(self):
        """Test the manifest description of a pulse."""
        description = trapezoidal(1.0, 0.0, 0.5, 0.125).describe()
        assert description == {"kind": "trapezoidal", "amplitude": 1.0, "onset": 0.0,
                               "duration": 0.5, "rise_time": 0.125}

    @given(amplitude=amplitudes, t=times)
    def test_rectangular_takes_two_values(self, amplitude, t):
        """Test that a rectangular pulse is either zero or its amplitude."""
        value = float(rectangular(amplitude, 0.5, 1.0)(t))
        assert value in (0.0, amplitude)

    @given(amplitude=amplitudes, t=times, dt=st.floats(min_value=0.0, max_value=0.5))
    @settings(max_examples=200)
    def test_trapezoidal_is_lipschitz(self, amplitude, t, dt):
        """Test that the trapezoid is bounded and Lipschitz with constant |A| / rise_time."""
        pulse = trapezoidal(amplitude, 0.25, 1.0, 0.25)
        a, b = float(pulse(t)), float(pulse(t + dt))
        assert abs(a) <= abs(amplitude) + 1e-12
        assert abs(b - a) <= abs(amplitude) * dt / 0.25 + 1e-9

    @given(amplitude=amplitudes, factor=st.floats(min_value=-4.0, max_value=4.0), t=times)
    def test_scaling_is_linear(self, amplitude, factor, t):
        """Test that scaled pulses scale their values."""
        pulse = gaussian(amplitude, 0.5, 0.2)
        assert float(pulse.scaled(factor)(t)) == pytest.approx(factor * float(pulse(t)), abs=1e-12)


class TestSeparableForcing:
    """Test suite for SeparableForcing."""

    def test_product(self):
        """Test f(t, x, y) = p(t) g(x, y)."""
        forcing = SeparableForcing(trapezoidal(2.0, 0.0, 1.0, 0.25), gaussian_spot((0.0, 0.0), 0.5), 1.0)
        x = np.array([0.0, 0.5])
        y = np.zeros(2)
        np.testing.assert_allclose(forcing.evaluate(0.5, x, y), [2.0, 2.0 * np.exp(-0.5)])

    def test_closure_overrides_product(self):
        """Test that a closure replaces the separable product."""
        forcing = SeparableForcing(zero_pulse(), uniform_profile(), 1.0,
                                   closure=lambda t, x, y: t + x + y)
        np.testing.assert_allclose(forcing.evaluate(0.5, np.array([1.0]), np.array([2.0])), [3.5])
        assert forcing.is_h1_in_time

    def test_outside_time_interval(self):
        """Test that evaluation outside [0, T] raises TimeRangeError."""
        forcing = SeparableForcing(gaussian(1.0, 0.5, 0.1), uniform_profile(), 1.0)
        with pytest.raises(TimeRangeError) as info:
            forcing.evaluate(1.5, np.zeros(1), np.zeros(1))
        assert info.value.t == 1.5
        with pytest.raises(TimeRangeError):
            forcing.at_time(-0.1)

    def test_final_time_must_be_positive(self):
        """Test that a forcing needs a positive horizon."""
        with pytest.raises(ValueError):
            SeparableForcing(zero_pulse(), uniform_profile(), 0.0)

    def test_scaled(self):
        """Test scaling a closure forcing."""
        forcing = SeparableForcing(zero_pulse(), uniform_profile(), 1.0, closure=lambda t, x, y: x)
        np.testing.assert_allclose(forcing.scaled(3.0).evaluate(0.0, np.array([2.0]), np.zeros(1)), [6.0])

    def test_time_samples(self):
        """Test sampling a pulse at the grid nodes t^1..t^N."""
        samples = time_samples(trapezoidal(1.0, 0.0, 1.0, 0.25), TimeGrid(1.0, 8))
        np.testing.assert_allclose(samples, [0.5, 1.0, 1.0, 1.0, 1.0, 1.0, 0.5, 0.0])


class TestProfiles:
    """Test suite for spatial profiles."""

    def test_uniform(self):
        """Test the constant profile."""
        np.testing.assert_array_equal(uniform_profile(2.0)(np.zeros(3), np.zeros(3)), [2.0, 2.0, 2.0])

    def test_gaussian_spot(self):
        """Test the spot peak and its width validation."""
        spot = gaussian_spot((0.25, -0.25), 0.1)
        assert spot(0.25, -0.25) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            gaussian_spot((0.0, 0.0), 0.0)


class TestCatalog:
    """Test suite for the pulse catalog."""

    def test_lists_every_kind(self):
        """Test that the catalog covers every pulse kind."""
        catalog = pulse_catalog()
        assert {entry["kind"] for entry in catalog} == {kind.value for kind in PulseKind}
        flags = {entry["kind"]: entry["h1_in_time"] for entry in catalog}
        assert flags["rectangular"] is False
        assert flags["trapezoidal"] is True
