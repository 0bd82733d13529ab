# config.py - numeric defaults for the Allee switching toolkit
import os

# Fixed points
TOL_FP = 1e-9
ROOT_GRID_N = 4096
BISECT_TOL = 1e-12
VALIDATE_GRID_N = 4096

# Set scans and derivative checks
SET_GRID_N = 8192
BOUNDARY_TOL = 1e-10
TOL_DERIV = 1e-6
BAND_GRID_N = 2048
M_MAX = 12

# Outcome classification
WINDOW = 50
EXTINCT_FRACTION = 0.01  # eps_extinct = min(A_f, A_g) * EXTINCT_FRACTION

# Monte Carlo
START_HORIZON = 1000
MAX_HORIZON = 2**20
UNDECIDED_TOL = 1e-3
N_TRIALS_PROPORTION = 10_000
N_TRIALS_SWEEP = 2_000
HITTING_CAP = 100_000
CHUNK_STEPS = 1024
TRIALS_PER_BLOCK = 2_000
CONFIDENCE = 0.95
DEFAULT_SEED = 20240601

# Output
OUTPUT_DIR = "data/processed"
THREADS_ENV = "ALLEE_RDS_THREADS"


def threads() -> int:
    """joblib n_jobs from ALLEE_RDS_THREADS (0 or unset means all cores)."""
    raw = os.getenv(THREADS_ENV, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        return -1
    return -1 if n <= 0 else n
