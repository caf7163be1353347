"""Configuration settings for gbmap"""

import os
from pathlib import Path

# Base directory
BASE_DIR = Path(__file__).resolve().parent.parent

# Data settings
DATA_DIR = Path(os.getenv("GBMAP_DATA_DIR", str(BASE_DIR / "data")))

# Logging
LOG_LEVEL = os.getenv("GBMAP_LOG_LEVEL", "INFO").upper()

# Fitting defaults (drift experiment settings: m=20, beta=5, lambda=1e-3, maxiter=200)
DEFAULT_M = int(os.getenv("GBMAP_DEFAULT_M", "20"))
DEFAULT_BETA = float(os.getenv("GBMAP_DEFAULT_BETA", "5.0"))
DEFAULT_LAMBDA = float(os.getenv("GBMAP_DEFAULT_LAMBDA", "1e-3"))
DEFAULT_MAXITER = int(os.getenv("GBMAP_DEFAULT_MAXITER", "200"))
DEFAULT_SEED = int(os.getenv("GBMAP_DEFAULT_SEED", "0"))

# Optimizer settings
LBFGS_MEMORY = 10
GRADIENT_TOLERANCE = 1e-6
LINE_SEARCH_MAX_STEPS = 30
ARMIJO_C1 = 1e-4
CURVATURE_EPS = 1e-10

# Boosting settings
INIT_SCALE = 1e-2
RETRIES_PER_STAGE = 3
MONOTONE_TOLERANCE = 1e-12

# Neighbor and drift settings
KNN_K = 10
DRIFT_K = 5
DRIFT_QUANTILE = 0.95

# Inference settings
PATH_GRID = 1000

# Synthetic data settings
SYNTH_ALPHA = 5.0
RNG_ALGORITHM = "numpy PCG64"

# Model file settings
MODEL_FORMAT_VERSION = 1
