import logging

from rich.logging import RichHandler

LOG_FORMAT = "%(name)s: %(message)s"


def setup_logging(level: str | int = "INFO") -> logging.Logger:
    """Install a single RichHandler on the root logger (safe to call twice)."""
    root = logging.getLogger()
    root.setLevel(level.upper() if isinstance(level, str) else level)
    if not any(isinstance(h, RichHandler) for h in root.handlers):
        handler = RichHandler(rich_tracebacks=True, show_path=False, markup=False)
        handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt="[%X]"))
        root.addHandler(handler)
    return root
