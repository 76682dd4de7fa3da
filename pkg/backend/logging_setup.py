import logging
import sys

from pythonjsonlogger import jsonlogger

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def configure_logging(level: str = "INFO", json_output: bool = False) -> None:
    """Install one stream handler on the root logger (idempotent)"""
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_boundary_dynamics", False):
            root.removeHandler(handler)

    handler = logging.StreamHandler(sys.stderr)
    handler._boundary_dynamics = True  # type: ignore[attr-defined]
    if json_output:
        handler.setFormatter(jsonlogger.JsonFormatter(LOG_FORMAT))
    else:
        handler.setFormatter(logging.Formatter(LOG_FORMAT))

    root.addHandler(handler)
    root.setLevel(getattr(logging, level.upper(), logging.INFO))
