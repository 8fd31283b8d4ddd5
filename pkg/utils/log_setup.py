# utils/log_setup.py
"""
Logging setup for graft commands.
Library modules only call logging.getLogger(__name__); this configures the root once.
"""

import logging
from pathlib import Path
from typing import Optional, Union

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'

_configured = False


def setup_logging(level: Union[str, int] = 'INFO', log_file: Optional[Path] = None) -> None:
    """
    Configure root logging for a CLI run

    Args:
        level: Level name ('DEBUG', 'INFO', ...) or numeric level
        log_file: Optional file that receives a copy of every record
    """
    global _configured

    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
        if not isinstance(level, int):
            level = logging.INFO

    root = logging.getLogger()
    if not _configured:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(handler)
        _configured = True

    if log_file is not None:
        log_file = Path(log_file)
        log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(file_handler)

    root.setLevel(level)
