"""
Input validation utilities for capfem run configurations.
"""
import math
from numbers import Integral, Real
from pathlib import Path

from ..utils.constants import LOAD_SAMPLING, PRECONDITIONERS, SPATIAL_PROFILES
from .manufactured import compile_spatial_expression
from .pulses import PulseKind, PulseShape, h1_warning


class Validator:
    """Validates run configurations."""

    @staticmethod
    def validate_file_exists(path):
        """
        Validate that a file exists.

        Args:
            path: Path to validate

        Returns:
            tuple: (is_valid, error_message)
        """
        if not path:
            return False, "File path is required"
        if not isinstance(path, str):
            return False, f"must be a path string, got {path!r}"

        p = Path(path)
        if not p.exists():
            return False, f"File does not exist: {path}"

        if not p.is_file():
            return False, f"Path is not a file: {path}"

        return True, ""

    @staticmethod
    def validate_number(value, positive=False, nonnegative=False):
        """
        Validate a finite real number.

        Returns:
            tuple: (is_valid, error_message)
        """
        if isinstance(value, bool) or not isinstance(value, Real):
            return False, f"must be a number, got {value!r}"
        if not math.isfinite(value):
            return False, f"must be finite, got {value!r}"
        if positive and value <= 0:
            return False, f"must be positive, got {value!r}"
        if nonnegative and value < 0:
            return False, f"must be nonnegative, got {value!r}"
        return True, ""

    @staticmethod
    def validate_integer(value, minimum):
        """
        Validate an integer bound from below.

        Returns:
            tuple: (is_valid, error_message)
        """
        if isinstance(value, bool) or not isinstance(value, Integral):
            return False, f"must be an integer, got {value!r}"
        if value < minimum:
            return False, f"must be at least {minimum}, got {value!r}"
        return True, ""

    @staticmethod
    def validate_choice(value, choices):
        if value not in choices:
            return False, f"must be one of {', '.join(choices)}, got {value!r}"
        return True, ""

    @staticmethod
    def validate_datum(datum):
        """
        Validate an initial datum selector.

        Returns:
            tuple: (is_valid, error_message)
        """
        if datum in ("zero", "case-A", "case-B"):
            return True, ""
        if isinstance(datum, str) and datum.startswith("interpolate:"):
            try:
                compile_spatial_expression(datum.split(":", 1)[1])
            except ValueError as e:
                return False, str(e)
            return True, ""
        return False, f"must be zero, case-A, case-B or interpolate:<expression>, got {datum!r}"

    @staticmethod
    def validate_point(point, half_width):
        """A probe point inside the closed square."""
        if not isinstance(point, (list, tuple)) or len(point) != 2:
            return False, f"must be an [x, y] pair, got {point!r}"
        for coordinate in point:
            is_valid, message = Validator.validate_number(coordinate)
            if not is_valid:
                return False, message
        if max(abs(point[0]), abs(point[1])) > half_width:
            return False, f"point {list(point)} lies outside the domain"
        return True, ""

    @staticmethod
    def validate_config(config):
        """
        Validate entire configuration.

        Args:
            config: ConfigManager instance

        Returns:
            tuple: (is_valid, list_of_messages), each message prefixed with its key path
        """
        errors = []
        warnings = []

        def check(key, result):
            is_valid, message = result
            if not is_valid:
                errors.append(f"{key}: {message}")
            return is_valid

        # Geometry
        a_ok = check("geometry.half_width", Validator.validate_number(config.get("geometry.half_width"), positive=True))
        r_ok = check("geometry.interface_radius",
                     Validator.validate_number(config.get("geometry.interface_radius"), positive=True))
        half_width = config.get("geometry.half_width") if a_ok else 1.0
        if a_ok and r_ok and config.get("geometry.interface_radius") >= half_width:
            errors.append("geometry.interface_radius: must be smaller than geometry.half_width")

        # Mesh
        mesh_file = config.get("mesh.file")
        if mesh_file:
            check("mesh.file", Validator.validate_file_exists(mesh_file))
        else:
            check("mesh.n", Validator.validate_integer(config.get("mesh.n"), 2))
        min_angle = config.get("mesh.min_angle")
        if check("mesh.min_angle", Validator.validate_number(min_angle, positive=True)) and min_angle >= 60:
            errors.append("mesh.min_angle: must be below 60 degrees")

        # Coefficients
        coefficients_ok = all([
            check(f"coefficients.{name}",
                  Validator.validate_number(config.get(f"coefficients.{name}"), nonnegative=True))
            for name in ("sigma1", "sigma2")
        ] + [
            check(f"coefficients.{name}",
                  Validator.validate_number(config.get(f"coefficients.{name}"), positive=True))
            for name in ("eps1", "eps2")
        ])

        # Time
        check("time.final_time", Validator.validate_number(config.get("time.final_time"), positive=True))
        check("time.steps", Validator.validate_integer(config.get("time.steps"), 1))
        check("time.load_sampling", Validator.validate_choice(config.get("time.load_sampling"), LOAD_SAMPLING))

        # Pulse
        kind = config.get("pulse.kind")
        if check("pulse.kind", Validator.validate_choice(kind, [k.value for k in PulseKind])):
            numbers_ok = all(
                check(f"pulse.{name}", Validator.validate_number(config.get(f"pulse.{name}")))
                for name in ("amplitude", "onset", "duration", "rise_time", "decay", "center", "width")
            )
            if numbers_ok:
                try:
                    pulse = PulseShape(
                        kind, **{name: config.get(f"pulse.{name}") for name in (
                            "amplitude", "onset", "duration", "rise_time", "decay", "center", "width")}
                    )
                except ValueError as e:
                    errors.append(f"pulse: {e}")
                else:
                    warning = h1_warning(pulse)
                    if warning:
                        warnings.append(f"pulse.kind: {warning}")
        profile = config.get("pulse.profile")
        if check("pulse.profile", Validator.validate_choice(profile, SPATIAL_PROFILES)) and profile == "gaussian-spot":
            check("pulse.profile_center", Validator.validate_point(config.get("pulse.profile_center"), half_width))
            check("pulse.profile_width",
                  Validator.validate_number(config.get("pulse.profile_width"), positive=True))

        # Initial datum
        datum = config.get("initial.datum")
        if check("initial.datum", Validator.validate_datum(datum)):
            if datum == "case-A" and a_ok and half_width != 1.0:
                errors.append("initial.datum: case-A is defined on (-1, 1)^2 (geometry.half_width must be 1)")
            if datum == "case-B" and coefficients_ok:
                kappa1 = config.get("coefficients.sigma1") / config.get("coefficients.eps1")
                kappa2 = config.get("coefficients.sigma2") / config.get("coefficients.eps2")
                if not (math.isclose(kappa1, 2.0) and math.isclose(kappa2, 2.0)):
                    warnings.append(
                        "initial.datum: case-B boundary data assumes sigma = 2 eps in both subdomains"
                    )

        # Solver
        tol = config.get("solver.tol")
        if check("solver.tol", Validator.validate_number(tol, positive=True)) and tol >= 1:
            errors.append("solver.tol: must be below 1")
        maxit = config.get("solver.maxit")
        if maxit is not None:
            check("solver.maxit", Validator.validate_integer(maxit, 1))
        check("solver.preconditioner",
              Validator.validate_choice(config.get("solver.preconditioner"), PRECONDITIONERS))

        # Output
        check("output.stride", Validator.validate_integer(config.get("output.stride"), 1))
        probes = config.get("output.probes")
        if not isinstance(probes, list):
            errors.append(f"output.probes: must be a list of [x, y] pairs, got {probes!r}")
        else:
            for k, point in enumerate(probes):
                check(f"output.probes[{k}]", Validator.validate_point(point, half_width))
        output_dir = config.get("output.directory")
        if output_dir is None or output_dir == "":
            errors.append("output.directory: is required")
        elif not isinstance(output_dir, str):
            errors.append(f"output.directory: must be a path string, got {output_dir!r}")
        elif not Path(output_dir).exists():
            warnings.append(f"output.directory: '{output_dir}' will be created")

        return len(errors) == 0, errors + warnings
