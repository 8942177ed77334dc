"""
Error Handling Utilities for the NRPS simulation lab

This module provides the exception hierarchy raised by the engine modules,
centralized error formatting for the command line surface, and small
validation helpers for configuration dictionaries.
"""

import json
import logging
import sys
import time
import traceback
from datetime import datetime, timezone
from enum import Enum
from functools import wraps
from typing import Any, Callable, Dict, List, Optional

logger = logging.getLogger(__name__)


class ErrorSeverity(Enum):
    """Error severity levels."""
    LOW = "LOW"
    MEDIUM = "MEDIUM"
    HIGH = "HIGH"
    CRITICAL = "CRITICAL"


class ErrorCategory(Enum):
    """Error categories for classification and handling."""
    VALIDATION = "VALIDATION"
    SCENARIO = "SCENARIO"
    ESTIMATION = "ESTIMATION"
    NUMERICAL = "NUMERICAL"
    SIMULATION = "SIMULATION"
    CONFIGURATION = "CONFIGURATION"
    IO = "IO"
    UNKNOWN = "UNKNOWN"


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


class NrpsLabError(Exception):
    """Base exception class for simulation lab errors."""

    def __init__(
        self,
        message: str,
        error_code: str = "UNKNOWN_ERROR",
        severity: ErrorSeverity = ErrorSeverity.MEDIUM,
        category: ErrorCategory = ErrorCategory.UNKNOWN,
        details: Optional[Dict[str, Any]] = None,
        recoverable: bool = True
    ):
        super().__init__(message)
        self.message = message
        self.error_code = error_code
        self.severity = severity
        self.category = category
        self.details = details or {}
        self.recoverable = recoverable
        self.timestamp = _utc_now()


class ValidationError(NrpsLabError):
    """Malformed input: wrong shapes, non-positive parameters, bad values."""

    def __init__(self, message: str, field: str = None, **kwargs):
        details = kwargs.pop('details', None) or {}
        if field:
            details['field'] = field
        super().__init__(
            message,
            error_code="VALIDATION_ERROR",
            severity=ErrorSeverity.LOW,
            category=ErrorCategory.VALIDATION,
            details=details,
            **kwargs
        )


class ScenarioInvariantError(NrpsLabError):
    """A scenario-level inequality does not hold (reported by name)."""

    def __init__(self, message: str, inequality: str = None, **kwargs):
        details = kwargs.pop('details', None) or {}
        if inequality:
            details['inequality'] = inequality
        super().__init__(
            message,
            error_code="SCENARIO_INVARIANT_VIOLATION",
            severity=ErrorSeverity.HIGH,
            category=ErrorCategory.SCENARIO,
            details=details,
            recoverable=False,
            **kwargs
        )


class DegenerateHistoryError(NrpsLabError):
    """Least-squares normal equations are singular (no price dispersion)."""

    def __init__(self, message: str, determinant: float = None, **kwargs):
        details = kwargs.pop('details', None) or {}
        if determinant is not None:
            details['determinant'] = determinant
        super().__init__(
            message,
            error_code="DEGENERATE_HISTORY",
            severity=ErrorSeverity.MEDIUM,
            category=ErrorCategory.ESTIMATION,
            details=details,
            **kwargs
        )


class SingularMatrixError(NrpsLabError):
    """A dense linear solve met a singular matrix."""

    def __init__(self, message: str, **kwargs):
        super().__init__(
            message,
            error_code="SINGULAR_MATRIX",
            severity=ErrorSeverity.HIGH,
            category=ErrorCategory.NUMERICAL,
            **kwargs
        )


class SolverError(NrpsLabError):
    """The active-set QP solver did not converge."""

    def __init__(self, message: str, residual: float = None, iterations: int = None, **kwargs):
        details = kwargs.pop('details', None) or {}
        if residual is not None:
            details['residual'] = residual
        if iterations is not None:
            details['iterations'] = iterations
        super().__init__(
            message,
            error_code="SOLVER_FAILURE",
            severity=ErrorSeverity.HIGH,
            category=ErrorCategory.NUMERICAL,
            details=details,
            recoverable=False,
            **kwargs
        )


class StreamMismatchError(NrpsLabError):
    """Regret requested for trajectories drawn from different shock streams."""

    def __init__(self, message: str, **kwargs):
        super().__init__(
            message,
            error_code="STREAM_MISMATCH",
            severity=ErrorSeverity.HIGH,
            category=ErrorCategory.SIMULATION,
            recoverable=False,
            **kwargs
        )


class ConfigurationError(NrpsLabError):
    """Scenario file, CSV or command line flags are unusable."""

    def __init__(self, message: str, source: str = None, **kwargs):
        details = kwargs.pop('details', None) or {}
        if source:
            details['source'] = source
        super().__init__(
            message,
            error_code="CONFIGURATION_ERROR",
            severity=ErrorSeverity.MEDIUM,
            category=ErrorCategory.CONFIGURATION,
            details=details,
            **kwargs
        )


class SimulationError(NrpsLabError):
    """Wraps a module error with the policy, replication and day it hit."""

    def __init__(
        self,
        message: str,
        policy: str = None,
        replication: int = None,
        day: int = None,
        cause: Exception = None,
        **kwargs
    ):
        details = kwargs.pop('details', None) or {}
        details.update({'policy': policy, 'replication': replication, 'day': day})
        if isinstance(cause, NrpsLabError):
            details['cause_code'] = cause.error_code
            details.update({k: v for k, v in cause.details.items() if k not in details})
        super().__init__(
            message,
            error_code="SIMULATION_ERROR",
            severity=ErrorSeverity.HIGH,
            category=ErrorCategory.SIMULATION,
            details=details,
            recoverable=False,
            **kwargs
        )
        self.cause = cause


class ErrorHandler:
    """Centralized error formatting and logging."""

    def __init__(self, service_name: str, component: str = None):
        self.service_name = service_name
        self.component = component or 'cli'
        self.logger = logging.getLogger(f"{service_name}.{self.component}")

    def handle_error(
        self,
        error: Exception,
        context: Optional[Dict[str, Any]] = None,
        run_id: Optional[str] = None
    ) -> Dict[str, Any]:
        """
        Log an error and build its machine-readable description.

        Args:
            error: The exception that occurred
            context: Additional context information
            run_id: Run identifier for tracing

        Returns:
            Formatted error dictionary
        """
        context = context or {}

        if isinstance(error, NrpsLabError):
            error_details = {
                'error_code': error.error_code,
                'severity': error.severity.value,
                'category': error.category.value,
                'recoverable': error.recoverable,
                'details': error.details,
                'timestamp': error.timestamp
            }
        else:
            error_details = {
                'error_code': 'UNEXPECTED_ERROR',
                'severity': ErrorSeverity.HIGH.value,
                'category': ErrorCategory.UNKNOWN.value,
                'recoverable': False,
                'details': {},
                'timestamp': _utc_now()
            }

        self._log_error(error, error_details, context, run_id)

        return {
            'error': True,
            'type': type(error).__name__,
            'message': str(error),
            'error_code': error_details['error_code'],
            'severity': error_details['severity'],
            'recoverable': error_details['recoverable'],
            'run_id': run_id,
            'timestamp': error_details['timestamp'],
            'details': error_details['details']
        }

    def format_error_line(self, error: Exception, context: Optional[Dict[str, Any]] = None,
                          run_id: Optional[str] = None) -> str:
        """Render an error as a single compact JSON line."""
        response = self.handle_error(error, context, run_id)
        return json.dumps(response, default=str, separators=(',', ':'), sort_keys=True)

    def _log_error(self, error: Exception, error_details: Dict[str, Any],
                   context: Dict[str, Any], run_id: Optional[str]):
        log_entry = {
            'service': self.service_name,
            'component': self.component,
            'run_id': run_id,
            'error_message': str(error),
            'error_type': type(error).__name__,
            'error_details': error_details,
            'context': context,
        }
        if not isinstance(error, NrpsLabError):
            log_entry['traceback'] = traceback.format_exc()
        self.logger.error(json.dumps(log_entry, default=str))


def exit_code_for(error: Exception) -> int:
    """Process exit status for a failed command."""
    if isinstance(error, ConfigurationError):
        return 2
    return 1


def error_handler_decorator(service_name: str, component: str = None):
    """
    Decorator for command functions: logs start and end, and turns any
    exception into one JSON line on stderr plus a nonzero exit.

    Args:
        service_name: Name of the service
        component: Name of the component (optional)

    Returns:
        Decorated function with error handling
    """
    def decorator(func: Callable) -> Callable:
        @wraps(func)
        def wrapper(*args, **kwargs):
            handler = ErrorHandler(service_name, component or func.__name__)
            start_time = time.time()
            handler.logger.info(f"Command {func.__name__} started")
            try:
                result = func(*args, **kwargs)
            except SystemExit:
                raise
            except Exception as e:
                line = handler.format_error_line(e, context={'command': func.__name__})
                sys.stderr.write(line + "\n")
                sys.exit(exit_code_for(e))
            duration = time.time() - start_time
            handler.logger.info(
                f"Command {func.__name__} completed in {round(duration * 1000, 2)} ms"
            )
            return result
        return wrapper
    return decorator


def validate_required_fields(data: Dict[str, Any], required_fields: List[str]):
    """Validate that required fields are present in data."""
    missing_fields = [field for field in required_fields if field not in data or data[field] is None]

    if missing_fields:
        raise ConfigurationError(
            f"Missing required fields: {', '.join(missing_fields)}",
            details={'missing_fields': missing_fields}
        )
