"""Logging configuration for the fabrics engine.

This module defines a logging configuration class used to set up package-wide logging.
It configures both console and file logging, including the log level, format, and the
file log's destination.
"""

import logging
import os

from config import Config


class LogConfig:
    """Configures package logging.

    Sets up logging to the console and to a log file, with predefined formats and
    levels for each. Rollout lifecycle messages go to the console at INFO; numerical
    anomalies (regularized solves, barrier violations) are also kept in the file.

    Attributes:
        LOG_FORMAT (str): The format for log messages.
        DATE_FORMAT (str): The date format for log messages.
        LOG_FILE (str): The path to the log file.
        LOG_LEVEL_CONSOLE (int): The logging level for console output.
        LOG_LEVEL_FILE (int): The logging level for file output.
    """

    LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"
    DATE_FORMAT = "%Y-%m-%d %H:%M:%S"
    LOG_FILE = Config.LOG_FILE
    LOG_LEVEL_CONSOLE = logging.DEBUG if Config.DEBUG else logging.INFO
    LOG_LEVEL_FILE = logging.WARNING

    @staticmethod
    def setup_logging():
        """Sets up the package-wide logging configuration.

        Configures the root logger to output messages to the console and to
        `logs/fabrics.log` by default. The log directory is created when missing.

        Exception Handling:
            Handles any IOError exceptions (e.g., file access permissions) that might
            occur when setting up the file handler; console logging keeps working.
        """
        logging.basicConfig(
            level=LogConfig.LOG_LEVEL_CONSOLE,
            format=LogConfig.LOG_FORMAT,
            datefmt=LogConfig.DATE_FORMAT,
        )

        try:
            log_dir = os.path.dirname(LogConfig.LOG_FILE)
            if log_dir:
                os.makedirs(log_dir, exist_ok=True)
            file_handler = logging.FileHandler(LogConfig.LOG_FILE)
            file_handler.setLevel(LogConfig.LOG_LEVEL_FILE)
            file_handler.setFormatter(logging.Formatter(LogConfig.LOG_FORMAT))
            logging.getLogger("").addHandler(file_handler)
        except IOError as e:
            logging.error("Failed to configure file handler for logging: %s", e)


LogConfig.setup_logging()
