"""
Error message constants for command-line diagnostics.

The harness prints exactly one line per failure on standard error; these
prefixes keep the wording consistent. Full tracebacks go to the log file.

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

# Configuration errors
CONFIG_INVALID = "Invalid configuration"
CONFIG_UNKNOWN_KEY = "Unknown config key"

# File errors
FILE_NOT_FOUND = "File not found"
FILE_FORMAT_INVALID = "Invalid file format"

# Runtime errors
TRAINING_FAILED = "Training failed"
ESTIMATION_FAILED = "Estimation failed"
METRIC_UNDEFINED = "Metric undefined"

# Generic errors
INPUT_INVALID = "Invalid input"
UNEXPECTED_ERROR = "An unexpected error occurred"
