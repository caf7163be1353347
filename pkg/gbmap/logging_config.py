"""Logging configuration for gbmap

Log lines carry their context as key-value pairs taken from the record's
`extra` fields, e.g. `Stage fitted [stage=3 sign=-1 loss=0.412]`. Records are
written to standard error so command output on standard out stays clean.
"""

import logging
import sys

import numpy as np


class ExtraFormatter(logging.Formatter):
    """Appends extra fields to the message as [key=value ...]"""

    # LogRecord attributes that are not user context
    STANDARD_ATTRS = {
        'name', 'msg', 'args', 'created', 'filename', 'funcName', 'levelname',
        'levelno', 'lineno', 'module', 'msecs', 'message', 'pathname', 'process',
        'processName', 'relativeCreated', 'thread', 'threadName', 'exc_info',
        'exc_text', 'stack_info', 'asctime', 'taskName'
    }

    @staticmethod
    def _render(value):
        if isinstance(value, (float, np.floating)):
            return f'{float(value):.6g}'
        if isinstance(value, np.integer):
            return int(value)
        return value

    def format(self, record):
        message = super().format(record)
        context = {
            key: value for key, value in record.__dict__.items()
            if key not in self.STANDARD_ATTRS and not key.startswith('_')
        }
        if not context:
            return message
        pairs = ' '.join(f'{k}={self._render(v)}' for k, v in context.items())
        return f'{message} [{pairs}]'


class StderrHandler(logging.StreamHandler):
    """Stream handler bound to the current sys.stderr at emit time"""

    def __init__(self):
        super().__init__(sys.stderr)

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, value):
        pass


def setup_logging(level=logging.INFO):
    """Install the gbmap handler on the root logger and set its level.

    Calling it again only changes the level.

    Args:
        level: A logging level number or name such as "DEBUG"
    """
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())

    logging.root.setLevel(level)
    if any(isinstance(h, StderrHandler) for h in logging.root.handlers):
        return

    handler = StderrHandler()
    handler.setFormatter(ExtraFormatter(
        fmt='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    ))
    logging.root.addHandler(handler)
