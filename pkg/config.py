"""Configuration module for runtime settings of the fabrics engine."""

import os

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class Config:
    """
    Configuration class for engine-wide runtime settings.

    Loads settings from environment variables to allow dynamic configuration.
    Experiment parameters themselves live in YAML experiment configs; this class
    only holds process-level knobs such as paths, worker caps and solver limits.

    Attributes:
        CONFIG_DIR (str): Directory holding the shipped experiment configs.
        OUTPUT_DIR (str): Default directory for run outputs.
        LOG_FILE (str): Path of the warning-level log file.
        THREADS (int): Maximum number of worker threads used to fan out rollouts.
        BATCHED (bool): Integrates rollouts sharing a system together in one batch.
        COND_CAP (float): Condition number above which metric solves are regularized.
        DEBUG (bool): Enables debug logging based on the "DEBUG" environment variable.
    """

    CONFIG_DIR = os.getenv("FABRIC_CONFIG_DIR", "configs")
    OUTPUT_DIR = os.getenv("FABRIC_OUTPUT_DIR", "runs")
    LOG_FILE = os.getenv("FABRIC_LOG_FILE", "logs/fabrics.log")
    THREADS = int(os.getenv("FABRIC_THREADS", str(os.cpu_count() or 1)))
    BATCHED = os.getenv("FABRIC_BATCHED", "True").lower() in ("1", "true", "yes")
    COND_CAP = float(os.getenv("FABRIC_COND_CAP", "1e12"))
    DEBUG = os.getenv("DEBUG", "False").lower() in ("1", "true", "yes")
