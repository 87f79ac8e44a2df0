"""Logging setup: stdlib loggers rendered through rich on stderr."""
import logging
import os

from rich.console import Console
from rich.logging import RichHandler

_ROOT = "creakbench"
_configured = False

# Human-facing output for commands; stderr keeps stdout clean for CSV output.
console = Console(stderr=True)


def configure(level: str | int | None = None) -> None:
    """Attach the rich handler to the package root logger (idempotent)."""
    global _configured
    root = logging.getLogger(_ROOT)
    if level is not None:
        root.setLevel(level.upper() if isinstance(level, str) else level)
    if _configured:
        return
    if level is None:
        root.setLevel(os.environ.get("CREAKBENCH_LOG_LEVEL", "INFO").upper())
    handler = RichHandler(console=console, show_path=False, rich_tracebacks=False)
    handler.setFormatter(logging.Formatter("%(message)s"))
    root.addHandler(handler)
    root.propagate = False
    _configured = True


def get_logger(name: str) -> logging.Logger:
    """Get a logger under the package namespace."""
    configure()
    if not name.startswith(_ROOT):
        name = f"{_ROOT}.{name}"
    return logging.getLogger(name)
