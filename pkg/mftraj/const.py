"""MFTraj constants."""

DOMAIN = "mftraj"
VERSION = "0.1.0"
MIN_NUMPY_VERSION = "1.24.0"

# Checkpoint container
CHECKPOINT_MAGIC = b"MFTRAJCK"
CHECKPOINT_FORMAT_VERSION = "1.0.0"
MIN_CHECKPOINT_FORMAT_VERSION = "1.0.0"

# Scene CSV
COL_SCENE_ID = "scene_id"
COL_FRAME = "frame"
COL_AGENT_ID = "agent_id"
COL_ROLE = "role"
COL_X = "x"
COL_Y = "y"
SCENE_COLUMNS = [COL_SCENE_ID, COL_FRAME, COL_AGENT_ID, COL_ROLE, COL_X, COL_Y]
ROLE_TARGET = "target"
ROLE_AGENT = "agent"
ROLES = {ROLE_TARGET, ROLE_AGENT}
MASK_COLUMNS = [COL_SCENE_ID, COL_AGENT_ID, COL_FRAME, "observed"]
PREDICTION_COLUMNS = [COL_SCENE_ID, "step", COL_X, COL_Y]
LOSS_CURVE_COLUMNS = ["epoch", "train_loss", "val_loss", "lr"]
ADJACENCY_COLUMNS = [COL_SCENE_ID, COL_FRAME, "i", "j", "weight"]
FLOAT_FORMAT = "%.17g"
MIN_VALID_AGENT_FRAMES = 2

# Segmentation presets: (observed frames, predicted frames, sample rate)
SEGMENT_PRESETS = {
    "argoverse": {"obs_frames": 20, "pred_frames": 30, "sample_rate_hz": 10.0},
    "highway": {"obs_frames": 10, "pred_frames": 20, "sample_rate_hz": 5.0},
}
DEFAULT_SAMPLE_RATE_HZ = 10.0

# Synthetic scenarios
KIND_CONSTANT_VELOCITY = "constant_velocity"
KIND_LANE_CHANGE = "lane_change"
KIND_CAR_FOLLOW = "car_follow"
KIND_MERGE = "merge"
SCENARIO_KINDS = [
    KIND_CONSTANT_VELOCITY,
    KIND_LANE_CHANGE,
    KIND_CAR_FOLLOW,
    KIND_MERGE,
]
DEFAULT_NOISE_STD_M = 0.05
LANE_WIDTH_M = 3.5

# Proximity graph
DEFAULT_RADIUS_M = 30.0
COINCIDENT_WEIGHT_FLOOR_M = 1e-6

# Centralities
CENTRALITY_NAMES = ["degree", "closeness", "eigenvector", "betweenness", "power", "katz"]
CRITERIA_NAMES = ["bmi", "bti", "bci"]
BEHAVIOR_FEATURES = [
    f"{criterion}_{name}" for criterion in CRITERIA_NAMES for name in CENTRALITY_NAMES
]
DEFAULT_K_MAX = 6
DEFAULT_ALPHA_FRAC = 0.9
DEFAULT_KATZ_BETA = 0.5
EIGEN_TOLERANCE = 1e-10
EIGEN_MAX_ITERATIONS = 500
EMPTY_GRAPH_EIGENVALUE = 1e-9
STANDARDIZER_STD_FLOOR = 1e-6

# Network defaults
DEFAULT_BEHAVIOR_HIDDEN = 64
DEFAULT_POSITION_HIDDEN = 64
DEFAULT_VRNN_LATENT = 32
DEFAULT_ATTENTION_HEADS = 4
DEFAULT_PROJ_DIM = 32
DEFAULT_MAX_AGENTS = 64
DEFAULT_GN_GROUPS = 8
DEFAULT_DECODER_HIDDEN = 1152
DEFAULT_GCN_LAYERS = 3
DEFAULT_LSTM_LAYERS = 2
GN_EPSILON = 1e-5
POSITION_FEATURES = 4
EDGE_FEATURES = 2

# Training
DEFAULT_LEARNING_RATE = 1e-3
DEFAULT_LEARNING_RATE_FINAL = 1e-4
DEFAULT_LR_DECAY_FRACTION = 0.75
DEFAULT_BATCH_SIZE = 32
DEFAULT_EPOCHS = 50
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8
SMOOTH_L1_BETA = 1.0

# Evaluation
DEFAULT_MISS_THRESHOLD_M = 2.0
DEFAULT_HORIZONS_S = [1.0, 2.0, 3.0, 4.0, 5.0]
DEFAULT_DROPS = [0, 3, 5, 8, 10]
DEFAULT_SWEEP_SEEDS = [0, 1, 2]
DEFAULT_TRAIN_FRACTION = 0.8
REPORT_COLUMNS = [
    "label",
    "min_ade",
    "min_fde",
    "miss_rate",
    "rmse_1s",
    "rmse_2s",
    "rmse_3s",
    "rmse_4s",
    "rmse_5s",
    "scene_count",
]

# Ablation models; each maps to the ModelConfig flags it switches on.
ABLATION_MODELS = {
    "A": {"disable_behavior": True},
    "B": {"absolute_coords": True},
    "C": {"disable_interaction": True, "disable_linformer": True},
    "D": {"disable_linformer": True},
    "E": {"plain_gcn": True},
    "F": {},
}
ABLATION_FLAGS = [
    "disable_behavior",
    "absolute_coords",
    "disable_interaction",
    "disable_linformer",
    "plain_gcn",
]

# Seed streams split from the root seed
SEED_STREAMS = {"data": 0, "init": 1, "train": 2, "drops": 3}

# CLI
ENV_LOG_LEVEL = "MFTRAJ_LOG"
LOG_LEVELS = {"error": "ERROR", "info": "INFO", "debug": "DEBUG"}
EXIT_OK = 0
EXIT_RUNTIME_ERROR = 1
EXIT_CONFIG_ERROR = 2
