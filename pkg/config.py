import logging
import os
from dotenv import load_dotenv

logger = logging.getLogger(__name__)

# Load environment variables
load_dotenv()

BASE_DIR = os.path.dirname(os.path.abspath(__file__))


def env_int(name, default, minimum=1):
    """Integer setting from the environment; falls back to default on a malformed value."""
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        logger.warning(f"{name}={raw!r} is not an integer, using {default}")
        return default
    return max(minimum, value)


# Parallel processing
_default_threads = min(os.cpu_count() or 1, 8)
MAX_WORKERS = env_int("HANDSOFF_THREADS", _default_threads)

# Logging
LOG_LEVEL = os.getenv("HANDSOFF_LOG_LEVEL", "INFO")

# Data directory settings
CACHE_DIR = os.getenv("HANDSOFF_CACHE_DIR", "cache")
SOLUTION_CACHE_DIR = os.path.join(CACHE_DIR, "solutions")
USE_SOLUTION_CACHE = os.getenv("HANDSOFF_USE_CACHE", "0").lower() in ("1", "true", "yes")
CATALOG_PATH = os.path.join(BASE_DIR, "src", "catalog.json")

# Discretization and analysis
DEFAULT_N = 2000
DEFAULT_LAMBDA = 0.1
SPARSITY_THRESHOLD = 1e-4  # Magnitudes at or below this count as zero
CONTINUITY_DIVISORS = (250, 500, 1000, 2000, 4000)  # h = T / divisor

# Solver defaults
MAX_ITERS = 200000
EPS_ABS = 1e-7
EPS_REL = 1e-6
CHECK_EVERY = 50
INFEASIBILITY_WINDOW = 2000  # Iterations between stagnation checks
OVER_RELAXATION = 1.8
POWER_ITERATIONS = 100
SEED = 0

# Certificates
CERTIFY_TOL = 1e-4

# Output
FLOAT_DIGITS = 10
