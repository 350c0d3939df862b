"""
Model sizes, geometric tolerances and fixed conventions.
"""
from enum import Enum


class ViewConfiguration(Enum):
    HEMISPHERE = "hemisphere"
    FRONTO_PARALLEL = "fronto-parallel"


class ViewSelection(Enum):
    DELAUNAY = "delaunay"
    PROXIMITY = "proximity"


# Network sizes
FEATURE_DIM = 64
UNET_CHANNELS = (32, 64, 128)
UNET_DEPTH = 3
RECURRENT_HIDDEN = 32
REFINED_DIM = 64
BLEND_HIDDEN = 64
BLEND_FEATURE_DIM = 64
COLOR_SAMPLE_DIM = 3 + FEATURE_DIM
DEFAULT_NUM_FREQUENCIES = 10

# Geometry tolerances
Z_EPS = 1e-5
PLANE_TOLERANCE = 0.05  # fraction of constellation diameter
INCIRCLE_TOLERANCE = 1e-9
BARYCENTRIC_TOLERANCE = 1e-12
ROTATION_TOLERANCE = 1e-4

# Ray marching (fractions of the scene far bound)
T_INIT_FACTOR = 0.05
T_MAX_FACTOR = 1.2
DEFAULT_SCHEDULE = ((4, 10), (2, 5), (1, 3))
FEWER_STEPS_SCHEDULE = ((4, 5), (2, 3), (1, 1))

# Rendering / loss
BLEND_EPS = 1e-6
DEFAULT_LAMBDA = 0.1
DEFAULT_LEARNING_RATE = 5e-4
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2

# Scene I/O
PAD_MULTIPLE = 8
TEST_EVERY = 8  # every 8th view is held out when split=auto
BACKGROUND_COLOR = (0.2, 0.2, 0.2)
TOY_CAMERA_DISTANCE = 3.0
TOY_SCENE_RADIUS = 1.5
TOY_FOV_DEGREES = 50.0
NERF_SYNTHETIC_NEAR = 2.0
NERF_SYNTHETIC_FAR = 6.0

CHECKPOINT_VERSION = "neuralmvs-ckpt-1"

# Table of ablation variants: name -> TrainConfig overrides
ABLATION_VARIANTS = {
    "complete": {},
    "no_posenc": {"toggles": {"use_posenc": False}},
    "no_delaunay": {"toggles": {"view_selection": "proximity"}},
    "fewer_steps": {"schedule": [list(level) for level in FEWER_STEPS_SCHEDULE]},
    "conv1x1": {"toggles": {"conv_kernel": 1}},
}
