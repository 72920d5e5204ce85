import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

load_dotenv()

TOOL_VERSION = "0.4.0"

# Physical constants
SPEED_OF_LIGHT = 299792458.0

# Paths
PROJECT_ROOT = Path(__file__).parent.parent
CONFIGS_DIR = PROJECT_ROOT / "configs"
DEFAULT_OUT_DIR = Path(os.getenv("SARCTL_OUT_DIR", "runs"))

# Logging
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
_log_file = os.getenv("SARCTL_LOG_FILE")
LOG_FILE: Optional[Path] = Path(_log_file) if _log_file else None

# Worker cap for row-parallel stages; results never depend on it
MAX_WORKERS = max(1, int(os.getenv("SARCTL_THREADS", str(os.cpu_count() or 1))))
ROW_BLOCK = int(os.getenv("SARCTL_ROW_BLOCK", "64"))

# PGM display floor
DB_FLOOR = float(os.getenv("SARCTL_DB_FLOOR", "-40"))

# Numerical defaults
FIT_TOL = 1e-9
FIT_MAX_ITER = 200
KL_EPS = 1e-12
KL_ROUNDING = 1e-12
AZIMUTH_LINES = 2048
INTERP_TAPS = 8
KAISER_BETA = 2.5
APERTURE_BANDWIDTH_FRACTION = 0.8
