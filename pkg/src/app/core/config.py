"""
Runtime configuration for RelGrad
"""

import logging
import os
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

PROJECT_ROOT = Path(__file__).resolve().parents[3]

# Bundled fixtures (iris.csv)
DATA_DIR = Path(os.getenv("RELGRAD_DATA_DIR", str(PROJECT_ROOT / "data")))
OUT_DIR = Path(os.getenv("RELGRAD_OUT_DIR", "out"))

# The API only reads data files below this directory
API_DATA_DIR = Path(os.getenv("RELGRAD_API_DATA_DIR", str(DATA_DIR)))

# Training defaults
DEFAULT_LEARNING_RATE = float(os.getenv("RELGRAD_LEARNING_RATE", "0.01"))
DEFAULT_SEED = int(os.getenv("RELGRAD_SEED", "1"))

# Cells whose estimated peak exceeds this many entries are skipped
ENTRY_BUDGET = int(os.getenv("RELGRAD_ENTRY_BUDGET", "50000000"))

# Conformance adapter; unset disables the sqlalchemy adapter
DATABASE_URL = os.getenv("DATABASE_URL")

LOG_LEVEL = os.getenv("RELGRAD_LOG_LEVEL", "INFO")
LOG_FORMAT = "%(levelname)-5.5s [%(name)s] %(message)s"


def iris_path() -> Path:
    """Path of the bundled Iris fixture"""
    return DATA_DIR / "iris.csv"


def configure_logging(level: str = LOG_LEVEL) -> None:
    """Configure root logging for entry points"""
    logging.basicConfig(level=level.upper(), format=LOG_FORMAT)
