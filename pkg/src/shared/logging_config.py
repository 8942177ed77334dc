"""
Centralized Logging Configuration for the NRPS simulation lab

This module provides structured JSON logging for the command line surface
and the simulation engine. Records go to stderr so that stdout stays free
for command output.
"""

import json
import logging
import sys
from datetime import datetime, timezone
from typing import Any, Dict, Optional


class StructuredFormatter(logging.Formatter):
    """Custom formatter for structured JSON logging."""

    def __init__(self, service_name: str, component: str = None):
        super().__init__()
        self.service_name = service_name
        self.component = component or 'engine'

    def format(self, record: logging.LogRecord) -> str:
        """Format log record as structured JSON."""
        log_entry = {
            'timestamp': datetime.now(timezone.utc).isoformat(),
            'level': record.levelname,
            'service': self.service_name,
            'component': self.component,
            'message': record.getMessage(),
            'logger': record.name,
            'module': record.module,
            'line': record.lineno
        }

        if hasattr(record, 'run_id'):
            log_entry['run_id'] = record.run_id

        if hasattr(record, 'extra_fields'):
            log_entry.update(record.extra_fields)

        if record.exc_info:
            log_entry['exception'] = {
                'type': record.exc_info[0].__name__ if record.exc_info[0] else None,
                'message': str(record.exc_info[1]) if record.exc_info[1] else None,
                'traceback': self.formatException(record.exc_info)
            }

        return json.dumps(log_entry, default=str)


class LabLogger:
    """Structured logger for lab components."""

    def __init__(self, service_name: str, component: str = None, log_level: str = None):
        from .settings import get_settings

        self.service_name = service_name
        self.component = component or 'engine'
        self.log_level = log_level or get_settings().log_level

        self.logger = logging.getLogger(f"{service_name}.{self.component}")
        self.logger.setLevel(getattr(logging, self.log_level.upper()))

        for handler in self.logger.handlers[:]:
            self.logger.removeHandler(handler)

        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(StructuredFormatter(service_name, self.component))
        self.logger.addHandler(handler)

        self.logger.propagate = False

    def info(self, message: str, extra_fields: Dict[str, Any] = None, run_id: str = None):
        """Log info message with optional extra fields."""
        self._log(logging.INFO, message, extra_fields, run_id)

    def warning(self, message: str, extra_fields: Dict[str, Any] = None, run_id: str = None):
        """Log warning message with optional extra fields."""
        self._log(logging.WARNING, message, extra_fields, run_id)

    def error(self, message: str, extra_fields: Dict[str, Any] = None, run_id: str = None,
              exc_info: bool = False):
        """Log error message with optional extra fields."""
        self._log(logging.ERROR, message, extra_fields, run_id, exc_info)

    def debug(self, message: str, extra_fields: Dict[str, Any] = None, run_id: str = None):
        """Log debug message with optional extra fields."""
        self._log(logging.DEBUG, message, extra_fields, run_id)

    def _log(self, level: int, message: str, extra_fields: Dict[str, Any] = None,
             run_id: str = None, exc_info: bool = False):
        if not self.logger.isEnabledFor(level):
            return
        record = self.logger.makeRecord(
            name=self.logger.name,
            level=level,
            fn='',
            lno=0,
            msg=message,
            args=(),
            exc_info=sys.exc_info() if exc_info else None
        )

        if extra_fields:
            record.extra_fields = extra_fields

        if run_id:
            record.run_id = run_id

        self.logger.handle(record)

    def log_processing_step(self, step: str, details: Dict[str, Any] = None, run_id: str = None):
        """Log processing step."""
        extra_fields = {
            'event_type': 'processing_step',
            'step': step
        }

        if details:
            extra_fields.update(details)

        self.info(f"Processing step: {step}", extra_fields=extra_fields, run_id=run_id)

    def log_run_start(self, horizon: int, replications: int, policies, run_id: str = None):
        """Log the start of an experiment."""
        self.info(
            f"Run started: D={horizon}, replications={replications}",
            extra_fields={
                'event_type': 'run_start',
                'horizon': horizon,
                'replications': replications,
                'policies': list(policies)
            },
            run_id=run_id
        )

    def log_replication_end(self, replication: int, duration: float,
                            summary: Optional[Dict[str, Any]] = None, run_id: str = None):
        """Log replication completion with duration."""
        extra_fields = {
            'event_type': 'replication_end',
            'replication': replication,
            'duration_ms': round(duration * 1000, 2)
        }
        if summary:
            extra_fields.update(summary)
        self.info(
            f"Replication {replication} completed",
            extra_fields=extra_fields,
            run_id=run_id
        )

    def log_solver_path(self, policy: str, counts: Dict[str, int], run_id: str = None):
        """Log how many days each pricing solver path handled."""
        self.debug(
            f"Solver paths for {policy}",
            extra_fields={'event_type': 'solver_paths', 'policy': policy, 'counts': counts},
            run_id=run_id
        )


ENGINE_LOGGER = 'src'


def attach_engine_handler(service_name: str, log_level: str) -> logging.Logger:
    """Route module loggers of the engine package through the structured formatter."""
    engine = logging.getLogger(ENGINE_LOGGER)
    engine.setLevel(getattr(logging, log_level.upper()))
    for handler in engine.handlers[:]:
        engine.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(StructuredFormatter(service_name, 'engine'))
    engine.addHandler(handler)
    engine.propagate = False
    return engine


def setup_logging(service_name: str, component: str = None, log_level: str = None) -> LabLogger:
    """
    Set up logging for lab components.

    Args:
        service_name: Name of the service
        component: Name of the component (optional)
        log_level: Log level (optional, defaults to the configured level)

    Returns:
        Configured logger instance
    """
    lab_logger = LabLogger(service_name, component, log_level)
    attach_engine_handler(service_name, lab_logger.log_level)
    return lab_logger
