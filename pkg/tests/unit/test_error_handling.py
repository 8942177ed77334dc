"""
Unit tests for error handling utilities.

Covers the exception hierarchy, the JSON error line and the command
decorator used by the command line surface.
"""

import json

import pytest

from src.shared.error_handler import (
    ConfigurationError,
    DegenerateHistoryError,
    ErrorCategory,
    ErrorHandler,
    ErrorSeverity,
    NrpsLabError,
    ScenarioInvariantError,
    SimulationError,
    SingularMatrixError,
    SolverError,
    StreamMismatchError,
    ValidationError,
    error_handler_decorator,
    exit_code_for,
    validate_required_fields,
)

pytestmark = pytest.mark.unit


class TestLabErrors:
    """Test custom exception classes."""

    def test_base_error_creation(self):
        error = NrpsLabError(
            "Test error message",
            error_code="TEST_ERROR",
            severity=ErrorSeverity.HIGH,
            category=ErrorCategory.NUMERICAL,
            details={'key': 'value'},
            recoverable=False
        )
        assert str(error) == "Test error message"
        assert error.error_code == "TEST_ERROR"
        assert error.severity is ErrorSeverity.HIGH
        assert error.details == {'key': 'value'}
        assert not error.recoverable
        assert isinstance(error.timestamp, str)

    def test_validation_error(self):
        error = ValidationError("Invalid field", field="beta")
        assert error.error_code == "VALIDATION_ERROR"
        assert error.severity is ErrorSeverity.LOW
        assert error.category is ErrorCategory.VALIDATION
        assert error.details['field'] == "beta"

    def test_invariant_error_names_inequality(self):
        error = ScenarioInvariantError("floor violated", inequality="alpha_min - beta_max*p_max + eps_lo >= 0")
        assert error.details['inequality'].endswith(">= 0")
        assert not error.recoverable

    @pytest.mark.parametrize("error,code", [
        (DegenerateHistoryError("flat", determinant=0.0), "DEGENERATE_HISTORY"),
        (SingularMatrixError("singular"), "SINGULAR_MATRIX"),
        (SolverError("stuck", residual=1e-3, iterations=40), "SOLVER_FAILURE"),
        (StreamMismatchError("streams"), "STREAM_MISMATCH"),
        (ConfigurationError("bad file", source="x.json"), "CONFIGURATION_ERROR"),
    ])
    def test_error_codes(self, error, code):
        assert error.error_code == code

    def test_solver_error_details(self):
        error = SolverError("stuck", residual=1e-3, iterations=40)
        assert error.details['iterations'] == 40
        assert error.details['residual'] == 1e-3

    def test_simulation_error_wraps_cause(self):
        cause = SolverError("stuck")
        error = SimulationError("nrps failed", policy="nrps", replication=2, day=17, cause=cause)
        assert error.details == {'policy': 'nrps', 'replication': 2, 'day': 17, 'cause_code': 'SOLVER_FAILURE'}
        assert error.cause is cause


class TestErrorHandler:
    """Test the ErrorHandler class."""

    def test_handle_lab_error(self):
        handler = ErrorHandler("nrps-lab", "run")
        response = handler.handle_error(ValidationError("Bad horizon", field="horizon"), run_id="r1")
        assert response['error'] is True
        assert response['type'] == "ValidationError"
        assert response['error_code'] == "VALIDATION_ERROR"
        assert response['run_id'] == "r1"
        assert response['details'] == {'field': 'horizon'}

    def test_handle_unexpected_error(self):
        response = ErrorHandler("nrps-lab").handle_error(KeyError("missing"))
        assert response['error_code'] == "UNEXPECTED_ERROR"
        assert response['recoverable'] is False

    def test_error_line_is_single_json_object(self):
        line = ErrorHandler("nrps-lab").format_error_line(ConfigurationError("bad file", source="x.json"))
        assert "\n" not in line
        assert json.loads(line)['details'] == {'source': 'x.json'}

    def test_exit_codes(self):
        assert exit_code_for(ConfigurationError("bad")) == 2
        assert exit_code_for(SolverError("stuck")) == 1
        assert exit_code_for(RuntimeError("boom")) == 1


class TestErrorHandlerDecorator:
    """Test the command decorator."""

    def test_success_passes_result_through(self):
        @error_handler_decorator("nrps-lab", "test")
        def command(x):
            return x * 2

        assert command(21) == 42

    def test_failure_writes_json_line_and_exits(self, capsys):
        @error_handler_decorator("nrps-lab", "test")
        def command():
            raise ConfigurationError("Scenario file not found: x.json", source="x.json")

        with pytest.raises(SystemExit) as exc:
            command()
        assert exc.value.code == 2
        payload = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert payload['error_code'] == "CONFIGURATION_ERROR"
        assert "x.json" in payload['message']


class TestValidationHelpers:
    """Test validation helper functions."""

    def test_required_fields_present(self):
        validate_required_fields({'run_id': 'a', 'seeds': {}}, ['run_id', 'seeds'])

    def test_required_fields_missing(self):
        with pytest.raises(ConfigurationError) as exc:
            validate_required_fields({'run_id': 'a', 'seeds': None}, ['run_id', 'seeds', 'd_th'])
        assert exc.value.details['missing_fields'] == ['seeds', 'd_th']
