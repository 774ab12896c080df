"""
Main entry point for the hands-off control toolkit.

    python main.py solve --plant catalog:P1 --method clot --lambda 0.1 --N 2000 --out u.csv
"""
import sys
import logging

from config import LOG_LEVEL
from src.utils import setup_logging
from src.cli import main

# Set up logging
setup_logging(LOG_LEVEL)
logger = logging.getLogger(__name__)


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
