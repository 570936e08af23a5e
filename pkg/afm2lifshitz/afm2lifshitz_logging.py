"""
afm2lifshitz.afm2lifshitz_logging - Logging setup and log rotation

Configures the root logger with a (optionally size-rotating) file handler
and an optional stderr console handler, so data written to stdout or
report files is never mixed with diagnostics. Until the configuration is
loaded, warnings and errors go to stderr only.
"""

import logging
import logging.handlers
import sys
from pathlib import Path
from typing import Dict


class LogRotationManager:
    """Log handler creation from the rotation configuration"""

    @staticmethod
    def create_rotating_handler(log_file: Path, rotation_config: dict) -> logging.Handler:
        """
        Create the file handler for the run log.

        Args:
            log_file: Path to log file
            rotation_config: Rotation settings from the config manager

        Returns:
            RotatingFileHandler when rotation is enabled, FileHandler otherwise
        """
        if not rotation_config.get("enabled", False):
            handler = logging.FileHandler(log_file, mode="a", encoding="utf-8")
            logging.debug("Log rotation disabled - using standard FileHandler")
            return handler

        max_bytes = int(rotation_config.get("max_bytes", 5 * 1024 * 1024))
        backups = int(rotation_config.get("backup_count", 5))
        handler = logging.handlers.RotatingFileHandler(
            log_file, maxBytes=max_bytes, backupCount=backups, encoding="utf-8"
        )
        logging.debug("Log rotation enabled: %d bytes, %d backup files", max_bytes, backups)
        return handler

    @staticmethod
    def get_rotation_status(log_file: Path, rotation_config: dict) -> Dict:
        """Current log size and number of rotated backups"""
        if not rotation_config.get("enabled", False):
            return {"enabled": False}

        status = {
            "enabled": True,
            "max_bytes": rotation_config.get("max_bytes"),
            "backup_count": rotation_config.get("backup_count"),
            "current_log_size": log_file.stat().st_size if log_file.exists() else 0,
            "backup_files_count": 0,
        }
        try:
            status["backup_files_count"] = sum(
                1 for p in log_file.parent.glob(f"{log_file.name}.*") if p != log_file
            )
        except OSError:
            pass
        return status


def setup_console_logging(logging_config: dict) -> logging.Handler:
    """Stderr handler for messages emitted before the run configuration is loaded

    setup_logging() replaces it once the log file is known.
    """
    if logging_config["level"] == "debug":
        level = logging.DEBUG
    elif logging_config["quiet"]:
        level = logging.ERROR
    else:
        level = logging.WARNING

    handler = logging.StreamHandler(sys.stderr)
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    root_logger.addHandler(handler)
    return handler


def setup_logging(logging_config: dict, log_file: Path, rotation_config: dict) -> logging.Handler:
    """Setup root logger handlers, returns the file handler"""
    log_file.parent.mkdir(parents=True, exist_ok=True)

    if logging_config["level"] == "warning":
        file_level = logging.WARNING
    elif logging_config["level"] == "debug":
        file_level = logging.DEBUG
    else:
        file_level = logging.INFO

    file_handler = LogRotationManager.create_rotating_handler(log_file, rotation_config)
    file_handler.setLevel(file_level)
    file_handler.setFormatter(
        logging.Formatter("%(asctime)s %(levelname)-8s %(message)s", datefmt="%Y/%m/%d %H:%M:%S")
    )

    root_logger = logging.getLogger()
    root_logger.setLevel(file_level)
    for handler in list(root_logger.handlers):
        root_logger.removeHandler(handler)
        handler.close()
    root_logger.addHandler(file_handler)

    # stderr only: stdout stays clean for data
    if logging_config["console"] and not logging_config["quiet"]:
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(file_level)
        console_handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
        root_logger.addHandler(console_handler)

    if rotation_config.get("enabled", False):
        status = LogRotationManager.get_rotation_status(log_file, rotation_config)
        logging.debug(
            "  Current log size: %d bytes, backup files: %d",
            status.get("current_log_size", 0),
            status.get("backup_files_count", 0),
        )

    return file_handler
