"""
Configuration management for the cohesive crack evolution simulator
"""

import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Parallelism (0 = one worker per CPU)
COHEVO_THREADS = int(os.getenv("COHEVO_THREADS", "0"))

# Logging
COHEVO_LOG_LEVEL = os.getenv("COHEVO_LOG_LEVEL", "WARNING").upper()
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# Output
DEFAULT_OUTPUT_DIR = os.getenv("COHEVO_OUTPUT_DIR", "runs")
FLOAT_FORMAT = "%.17g"
TRACE_FILE = "trace.csv"
BALANCE_FILE = "balance.csv"
CONFIG_FILE = "config.json"
MESH_FILE = "mesh.json"
SNAPSHOTS_FILE = "snapshots.json"
HISTORY_FILE = "interface_history.json"
STABILITY_FILE = "stability.json"
EULER_FILE = "euler.json"
STUDY_FILE = "study.csv"
SNAPSHOT_SCHEMA = "cohevo.snapshots/1"

# Numerical tolerances
ADMISSIBILITY_TOLERANCE = 1e-10
ESSSUP_TOLERANCE = 1e-12
REGION_TOLERANCE = 1e-9
STABILITY_TOLERANCE = 1e-9
EULER_TOLERANCE = 1e-6
BALANCE_RELATIVE_TOLERANCE = 0.02
TIE_TOLERANCE = 1e-12
STUDY_GAP_FLOOR = 1e-12
ORACLE_TOLERANCE = 1e-8

# Exit codes
EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_NOT_CONVERGED = 2
EXIT_INVARIANT_FAILED = 3

VALID_LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]


def validate_config():
    """Validate environment-driven configuration"""
    if COHEVO_THREADS < 0:
        raise ValueError("COHEVO_THREADS must be >= 0 (0 means one worker per CPU)")
    if COHEVO_LOG_LEVEL not in VALID_LOG_LEVELS:
        raise ValueError(
            f"COHEVO_LOG_LEVEL must be one of {', '.join(VALID_LOG_LEVELS)}, got {COHEVO_LOG_LEVEL!r}"
        )
    return True

# Chart colors
ENERGY_COLORS = {
    "total": "#1f77b4",
    "bulk": "#2ca02c",
    "load_work": "#ff7f0e",
    "crack_term": "#d62728",
    "cumulative_dissipation": "#9467bd",
    "balance_residual": "#7f7f7f",
}
