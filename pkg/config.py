# =====================================================
# CONSENSUS CF TRACKER - CONFIGURATION
# =====================================================
#
# This file contains all the default settings for the tracker.
# Having everything in one place makes it easy to adjust.
#
# The typed config models in src/run_config.py read their
# defaults from here, and a run-config file (key=value lines,
# see README.md) can override any of them per run.
#
# =====================================================

import os
from dotenv import load_dotenv

# Load environment variables from .env file
# This reads your .env file and makes variables available via os.getenv()
load_dotenv()

# =====================================================
# ENVIRONMENT SETTINGS
# =====================================================

# Logging level for library modules (DEBUG, INFO, WARNING, ERROR)
LOG_LEVEL = os.getenv("CFTRACK_LOG_LEVEL", "WARNING")

# Where `python main.py track` and `synth` write when --out is not given
OUTPUT_DIR = os.getenv("CFTRACK_OUTPUT_DIR", "output")

# Largest feature grid (cells per side) the search window is resampled to.
# Keeps the per-pixel ADMM loops fast.
MAX_CELLS = int(os.getenv("CFTRACK_MAX_CELLS", "64"))

# =====================================================
# FEATURE SETTINGS
# =====================================================

# Feature backend: "grayscale", "gradient_cells" or "external"
FEATURE_BACKEND = "gradient_cells"

# Image pixels per feature cell
CELL_SIZE = 4

# Orientation bins of the gradient-cell descriptor (unsigned, 0..pi)
GRADIENT_BINS = 9

# Taper applied to every channel: "none" or "cosine"
FEATURE_WINDOW = "cosine"

# Per-cell L2 normalization of gradient histograms
FEATURE_NORMALIZE = True

# =====================================================
# SOLVER SETTINGS (ADMM)
# =====================================================
#
# None of these are fixed by the method itself; they are
# engineering choices. Warm-started ADMM converges in very
# few steps, so tracking uses fewer iterations than init.
#
# =====================================================

ADMM_ITERATIONS = 4          # iterations when learning the first filter
TRACKING_ITERATIONS = 2      # iterations per frame when re-training (warm-started)
MU_INIT = 1.0                # initial penalty factor
MU_SCALE = 10.0              # penalty growth per iteration
MU_MAX = 1.0e4               # penalty cap
TOLERANCE = 1.0e-6           # stop when ||g - w|| / ||w|| drops below this

# Bowl-shaped penalization: p = floor + slope * (normalized squared distance)
PENALTY_FLOOR = 0.1
PENALTY_SLOPE = 3.0

# "elementwise" (diagonal p) or "scalar" (single divisor, literal form)
PENALTY_MODE = "elementwise"

# Desired response: sigma = factor * sqrt(inner_height * inner_width) cells
SIGMA_FACTOR = 1.0 / 16.0

# Keep the Lagrange multipliers across training calls
CARRY_MULTIPLIERS = False

# =====================================================
# MODEL UPDATE SETTINGS
# =====================================================

THRESHOLD_HIGH = 0.6         # consensus above this -> boosted learning rate
THRESHOLD_LOW = 0.2          # consensus above this -> normal learning rate
ETA_HIGH = 0.045             # boosted appearance learning rate
ETA_LOW = 0.015              # normal appearance learning rate
GAMMA = 0.02                 # ideal-response learning rate

# =====================================================
# SCALE SEARCH SETTINGS
# =====================================================

NUM_SCALES = 5               # odd number of search scales
SCALE_STEP = 1.02            # ratio between neighbouring scales
SEARCH_PADDING = 4.0         # search-window area / target area
SCALE_PENALTY = 0.99         # peak multiplier for every non-unit scale

# =====================================================
# SYNTHETIC SEQUENCE SETTINGS
# =====================================================
#
# Defaults for `python main.py synth` and the test bed:
# a textured blob moving over a noise background.
#
# =====================================================

SYNTH_FRAMES = 50
SYNTH_FRAME_WIDTH = 240
SYNTH_FRAME_HEIGHT = 160
SYNTH_BLOB_SIZE = 32.0       # blob side length in pixels at frame 1
SYNTH_START_X = 60.0         # blob center at frame 1
SYNTH_START_Y = 80.0
SYNTH_VELOCITY_X = 2.0       # pixels per frame
SYNTH_VELOCITY_Y = 0.0
SYNTH_SCALE_RAMP = 1.0       # blob size multiplier per frame
SYNTH_NOISE_LEVEL = 0.15     # background noise amplitude (0..1 intensity)

# =====================================================
# RUN SETTINGS
# =====================================================

SEED = 0

# =====================================================
# WEB API SETTINGS
# =====================================================

# Backend server settings
API_HOST = os.getenv("CFTRACK_API_HOST", "0.0.0.0")
API_PORT = int(os.getenv("CFTRACK_API_PORT", "8000"))
