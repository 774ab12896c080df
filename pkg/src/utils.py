import os
import hashlib
import logging

import numpy as np

from config import FLOAT_DIGITS

LOG_FORMAT = '(%(levelname)s) - [%(funcName)s] - %(message)s'

logger = logging.getLogger(__name__)


def setup_logging(level="INFO"):
    """Configure root logging once for the whole process."""
    logging.basicConfig(level=level, format=LOG_FORMAT)


def hash_text(text):
    """Create a hash of text content."""
    return hashlib.md5(text.encode()).hexdigest()


def hash_arrays(*arrays):
    """Create a hash of the raw bytes of several arrays (shape included)."""
    digest = hashlib.md5()
    for arr in arrays:
        arr = np.ascontiguousarray(arr, dtype=float)
        digest.update(str(arr.shape).encode())
        digest.update(arr.tobytes())
    return digest.hexdigest()


def ensure_directory_exists(directory):
    """Ensure a directory exists, creating it if necessary."""
    if os.path.exists(directory):
        if not os.path.isdir(directory):
            logger.warning(f"Removing file {directory} to create directory")
            os.remove(directory)

    os.makedirs(directory, exist_ok=True)
    logger.debug(f"Ensured directory exists: {directory}")


def format_float(value, digits=FLOAT_DIGITS):
    """Locale-independent fixed-significance formatting used in every output file."""
    value = float(value)
    if np.isnan(value):
        return "nan"
    return f"{value:.{digits}g}"
