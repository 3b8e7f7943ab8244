"""Application-wide constants."""

APP_NAME = "livewire"

CHECKPOINT_FORMAT_VERSION = 1

# Batch normalization.
NORM_MOMENTUM = 0.9
NORM_EPS = 1e-5

# Fan-in scaled initialization: uniform in [-c/sqrt(fan_in), +c/sqrt(fan_in)].
FAN_IN_GAIN = 1.0

# Information metrics.
DEFAULT_EVENT_THRESHOLD = 1.0
MI_MIN_OBSERVATIONS = 100

# Coincidence task generation.
STRONG_GROUP_MEAN = 3.0
STRONG_GROUP_STD = 0.3
STRONG_GROUP_TRUNCATION = 2.0  # in standard deviations
NOISE_TRUNCATION = 1.0

# Few-shot control arm.
FEWSHOT_NOVEL_ACC_RATIO = 0.7

# Output directory layout.
CHECKPOINT_FILENAME = "checkpoint.json"
EPOCH_CHECKPOINT_TEMPLATE = "checkpoint-epoch-{epoch:04d}.json"
METRICS_FILENAME = "metrics.jsonl"
EVENTS_FILENAME = "events.json"
CONFIG_SNAPSHOT_FILENAME = "config.json"
FEWSHOT_REPORT_FILENAME = "fewshot_report.json"
FEWSHOT_SUMMARY_FILENAME = "fewshot_summary.json"
DATA_SPEC_FILENAME = "data.json"

# CLI exit codes.
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
