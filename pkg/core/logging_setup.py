# core/logging_setup.py - Omega Provisioner logging
import logging
import os
import re
import sys


class RedactingFilter(logging.Filter):
    """Redacts credentials that may end up in config dumps or env listings."""

    PATTERNS = [
        (re.compile(r'(token[=:]\s*)([^\s&",]+)', re.IGNORECASE), r'\1[REDACTED]'),
        (re.compile(r'(password[=:]\s*)([^\s&",]+)', re.IGNORECASE), r'\1[REDACTED]'),
        (re.compile(r'(secret[=:]\s*)([^\s&",]+)', re.IGNORECASE), r'\1[REDACTED]'),
    ]

    def filter(self, record):
        if isinstance(record.msg, str):
            for pattern, replacement in self.PATTERNS:
                record.msg = pattern.sub(replacement, record.msg)
        return True


def setup_logging(level: str = None):
    """Log to stderr; stdout carries command output. Safe to call more than once."""
    root = logging.getLogger()
    level_name = (level or os.getenv("OMEGA_LOG_LEVEL", "INFO")).upper()
    root.setLevel(getattr(logging, level_name, logging.INFO))

    if any(getattr(h, "_omega_handler", False) for h in root.handlers):
        return

    handler = logging.StreamHandler(sys.stderr)
    handler._omega_handler = True
    handler.addFilter(RedactingFilter())
    handler.setFormatter(logging.Formatter(
        "%(asctime)s [%(levelname)s] %(message)s",
        datefmt="%H:%M:%S"
    ))
    root.addHandler(handler)
