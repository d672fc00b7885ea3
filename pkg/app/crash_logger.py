from __future__ import annotations

import logging
import sys
import traceback
from datetime import datetime
from pathlib import Path
from typing import Optional

LOGGER_NAME = "bedflow"


def _ensure_logs_dir(log_dir: Optional[str | Path] = None) -> Path:
    if log_dir is None:
        log_dir = Path(__file__).resolve().parent.parent / "logs"
    path = Path(log_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def get_logger(logger: Optional[logging.Logger] = None) -> logging.Logger:
    # library code accepts an optional logger; fall back to the package logger.
    return logger if logger is not None else logging.getLogger(LOGGER_NAME)


def init_logging(log_dir: Optional[str | Path] = None, verbose: bool = False) -> logging.Logger:
    logs_dir = _ensure_logs_dir(log_dir)
    ts = datetime.now().strftime("%Y%m%d_%H%M%S")
    log_path = logs_dir / f"{LOGGER_NAME}_{ts}.log"

    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(logging.DEBUG)

    fmt = logging.Formatter("%(asctime)s | %(levelname)s | %(message)s")

    fh = logging.FileHandler(log_path, encoding="utf-8")
    fh.setLevel(logging.DEBUG)
    fh.setFormatter(fmt)

    sh = logging.StreamHandler(stream=sys.stdout)
    sh.setLevel(logging.DEBUG if verbose else logging.INFO)
    sh.setFormatter(fmt)

    for h in list(logger.handlers):
        h.close()
    logger.handlers.clear()
    logger.addHandler(fh)
    logger.addHandler(sh)

    logger.debug("logging initialized")
    logger.debug("log file: %s", str(log_path))
    return logger


def install_excepthook(logger: logging.Logger) -> None:
    def _hook(exc_type, exc_value, exc_tb):
        try:
            tb = "".join(traceback.format_exception(exc_type, exc_value, exc_tb))
            logger.critical("unhandled exception:\n%s", tb)
        finally:
            sys.__excepthook__(exc_type, exc_value, exc_tb)

    sys.excepthook = _hook
