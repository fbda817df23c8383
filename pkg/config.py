"""
Configuration file for the adaptive solver.
Contains algorithm defaults, solver tolerances, output locations and logging settings.
Run-specific overrides come from a JSON config file (see cli.RunConfig), never from the environment.
"""
from typing import List, Optional

# ==================== ADAPTIVE ALGORITHM DEFAULTS ====================
# Values used throughout the published benchmark runs
THETA = 0.5  # Doerfler bulk parameter, 0 < theta <= 1
LAMBDA_LIN = 0.9  # Linearization stopping parameter, > 0
RHO = 0.5  # Decay factor for alpha_min when J_max grows
ALPHA_MIN_INIT = 100.0  # Initial lower bound for the energy/norm quotient
J_MAX_INIT = 1  # Initial cap on algebraic steps
TAU = 0.0  # Overall tolerance of the three-term stopping test
C_MARK = 1.0  # Sort-based marking always achieves the minimal cardinality
DOERFLER_RTOL = 1e-12  # Relative slack when comparing cumulative sums with theta * eta^2
MAX_TOTAL_STEPS = 10**6  # Safety cap on inner (algebraic) steps
DEFAULT_METHOD = "kacanov"

# Stop once eta(u^{k,j}) at the end of a mesh level drops below this; None leaves only the tau test
ETA_STOP: Optional[float] = 1e-2

# ==================== FLOATING POINT GUARDS ====================
EQUALITY_TOL = 2.0**-48  # Relative tolerance for "u^{k,j} = u^{k-1,j}"
DL2_ROUNDOFF = 1e-12  # Negative energy increments above -DL2_ROUNDOFF*|E| are clamped to zero
OVERSOLVE_TOL = 1e-14  # Relative dl2 increment at which a reference solve is considered converged
OVERSOLVE_MAX_STEPS = 200

# ==================== NONLINEARITY CHECKS ====================
GROWTH_SAMPLES = 100  # Grid points per axis for the sampled growth condition (100 x 100 pairs)
GROWTH_SAMPLE_MAX = 10.0  # Largest gradient modulus sampled
ANTIDERIVATIVE_SAMPLES: List[float] = [0.25, 1.0, 4.0, 16.0]
ANTIDERIVATIVE_RTOL = 1e-9

# ==================== NEWTON DAMPING ====================
NEWTON_DEFAULT_DELTA = 1.0
NEWTON_WINDOW_SAFETY = 0.9  # Requested damping above the window edge is clamped to this fraction of it
SPECTRAL_SAMPLES = 4000  # Samples of |g|^2 for the Jacobian spectral bounds

# ==================== ALGEBRAIC SOLVER ====================
MEASURE_CONTRACTION = True  # Direct reference solve per linear system to measure q_alg
MEASURE_CONTRACTION_MAX_DOFS = 200000
SOLVER = "multigrid"  # "multigrid" (one V-cycle per step) or "direct" (exact solve per step)
CONTRACTION_FLOOR = 1e-10  # Ratios are only recorded while the a-norm error exceeds this fraction of the solution norm

# ==================== REPORTING ====================
PRE_ASYMPTOTIC_CUTOFF = 0.25  # Fraction of mesh levels excluded from rate fits
CSV_FLOAT_FORMAT = "%.17g"
OUTPUT_DIR = "results"
HISTORY_FILE = "history.csv"
SUMMARY_FILE = "summary.json"
SWEEP_FILE = "sweep.csv"
SWEEP_SUMMARY_FILE = "sweep_summary.json"
MESH_DUMP_DIR = "meshes"

# Parameter grid of the published parameter study
SWEEP_THETAS: List[float] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
SWEEP_LAMBDAS: List[float] = [1e-4, 1e-3, 1e-2, 1e-1, 0.3, 0.5, 0.7, 0.9, 1.0]
SWEEP_WORKERS = 1

# ==================== DATABASE ====================
DB_PATH = "ailfem_runs.db"
ENABLE_RUN_RECORDING = True  # Store every run and its step history in sqlite
ENABLE_STEP_RECORDING = True  # Record every (l,k,j) row (uses more storage)

# ==================== LOGGING ====================
LOG_LEVEL = "INFO"  # DEBUG, INFO, WARNING, ERROR
LOG_FILE = "ailfem.log"
