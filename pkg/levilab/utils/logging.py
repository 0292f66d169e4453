"""
Logging utility for the application
"""
import logging
import sys

import structlog

from levilab.config import settings


def setup_logging():
    """Configure structured logging for the application"""
    logging.basicConfig(
        format="%(message)s",
        stream=sys.stderr,
        level=getattr(logging, settings.LOG_LEVEL.upper(), logging.WARNING),
    )
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.JSONRenderer()
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    return structlog.get_logger("levilab")


def set_level(level):
    """Change the stdlib level behind the structlog logger (used by the CLI)"""
    logging.getLogger().setLevel(getattr(logging, str(level).upper(), logging.WARNING))


# Create a global logger instance
logger = setup_logging()
