"""
Constants for the capfem application.
"""

APP_NAME = "capfem"
APP_VERSION = "1.0.0"

# Format-version lines; every file the tool writes starts with one of these
MESH_FORMAT_HEADER = "cfm-mesh 1"
MANIFEST_HEADER = "# capfem-manifest 1"
REPORT_HEADER = "# capfem-report 1"
PROBES_HEADER = "# capfem-probes 1"
VTK_HEADER = "# vtk DataFile Version 3.0"

# Environment variable overriding the output root
OUTPUT_ENV_VAR = "CAPFEM_OUT"

# Mesh generation
DEFAULT_MIN_ANGLE = 15.0
INTERFACE_TOLERANCE = 1e-12
MIN_INTERFACE_NODES = 4
AREA_TOLERANCE = 1e-10

# Solver
DEFAULT_TOLERANCE = 1e-12
DENSE_SOLVE_LIMIT = 2000

# Time stepping
REFERENCE_SUBSTEPS = 20

# Convergence study couplings: tau = c * h (h1 mode) and tau = c * h**2 (l2 mode)
H1_TAU_FACTOR = 0.25
L2_TAU_FACTOR = 0.5

# Certification bands (low, high) per reported quantity
RATE_BANDS = {
    "h1": {"L2V": (0.85, 1.15)},
    "l2": {"L2H": (1.8, 2.2)},
    "time": {"L2H": (0.9, 1.1)},
    "qh": {"L2": (1.85, 2.15), "H1": (0.9, 1.1)},
    "interface": {"lambda": (1.85, 2.15)},
}
L2_RATIO_BAND = (3.2, 4.8)
DEGENERATE_ERROR_FLOOR = 1e-13

# Exit codes
EXIT_OK = 0
EXIT_IO_ERROR = 1
EXIT_INVALID = 2
EXIT_RUN_FAILURE = 3
EXIT_CERTIFICATION_FAILURE = 4

# Choices exposed on the command line and in run configs
PULSE_KINDS = [
    ("rectangular", "Square pulse, jump at both ends (not H1 in time)"),
    ("trapezoidal", "Linear rise and fall, recommended H1 surrogate"),
    ("gaussian", "Gaussian bump around a center time"),
    ("biphasic-exponential", "Damped single sine cycle with exponential decay"),
]
SPATIAL_PROFILES = ["uniform", "gaussian-spot"]
INITIAL_DATA = ["zero", "case-A", "case-B", "interpolate:<expression>"]
PRECONDITIONERS = ["none", "diagonal"]
LOAD_SAMPLING = ["nodal", "average"]
CONVERGENCE_MODES = ["h1", "l2", "time", "qh", "interface"]
