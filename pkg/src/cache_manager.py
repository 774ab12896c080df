import os
import json
import logging
from typing import Optional

from src.utils import hash_arrays, hash_text, ensure_directory_exists
from src.solver import Solution

from config import SOLUTION_CACHE_DIR

logger = logging.getLogger(__name__)


class CacheManager:
    """Manager for the on-disk caches."""

    @staticmethod
    def initialize():
        """Initialize cache directories."""
        ensure_directory_exists(SOLUTION_CACHE_DIR)
        logger.info("Cache directories initialized")


def solution_key(discrete, kind, lam, theta, cfg):
    """Cache key covering every input that changes a solve's result."""
    plant = discrete.plant
    data = hash_arrays(plant.A, plant.B, plant.xi)
    parts = [data, f"T={plant.T!r}", f"u_max={plant.u_max!r}", f"N={discrete.N}",
             f"kind={kind.value}", f"lam={lam!r}", f"theta={theta!r}", f"cfg={cfg!r}"]
    return hash_text("|".join(parts))


class SolutionCache:
    """Cache for solver results."""

    @staticmethod
    def _path(key):
        return os.path.join(SOLUTION_CACHE_DIR, f"{key}.json")

    @staticmethod
    def save(key, solution: Solution):
        """Save a solution to cache."""
        try:
            ensure_directory_exists(SOLUTION_CACHE_DIR)
            with open(SolutionCache._path(key), "w", encoding="utf-8") as f:
                json.dump(solution.to_dict(), f)
            logger.debug(f"Saved solution cache for {key}")
        except Exception as e:
            logger.error(f"Failed to save solution cache for {key}: {e}")

    @staticmethod
    def load(key) -> Optional[Solution]:
        """Load a solution from cache."""
        try:
            path = SolutionCache._path(key)
            if os.path.exists(path):
                with open(path, "r", encoding="utf-8") as f:
                    logger.debug(f"Loaded solution cache for {key}")
                    return Solution.from_dict(json.load(f))
        except Exception as e:
            logger.error(f"Failed to load solution cache for {key}: {e}")
        return None
