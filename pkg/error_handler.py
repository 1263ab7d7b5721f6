"""
Error handling and structured logging for the Dynamic Prior toolkit.
Provides the exception hierarchy, error categorization, structured log entries
and user-facing messages shared by the solver, the harnesses and the CLI.

Copyright (c) 2025 Ohrner IT GmbH
Licensed under the MIT License
"""

import logging
from typing import Dict, Any, Optional
from enum import Enum
from dataclasses import dataclass
from datetime import datetime


class ErrorCategory(Enum):
    """Error categories for systematic error handling."""
    INVALID_PARAMETER = "invalid_parameter"
    INSUFFICIENT_DATA = "insufficient_data"
    DOMAIN = "domain"
    EMPTY_INPUT = "empty_input"
    CONFIGURATION = "configuration"
    MISSING_INPUT = "missing_input"
    SOLVER_FALLBACK = "solver_fallback"
    THRESHOLD = "threshold"
    SYSTEM = "system"


class ErrorSeverity(Enum):
    """Error severity levels."""
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    CRITICAL = "critical"


class BanditToolkitError(Exception):
    """Base exception for all toolkit errors."""

    category = ErrorCategory.SYSTEM

    def __init__(self, message: str, technical_message: Optional[str] = None,
                 parameters: Optional[Dict[str, Any]] = None):
        self.message = message
        self.technical_message = technical_message or message
        self.parameters = dict(parameters or {})
        super().__init__(self.message)

    def get_user_message(self) -> str:
        """Get the user-friendly error message."""
        return self.message

    def get_technical_message(self) -> str:
        """Get the technical error message for debugging."""
        return self.technical_message


class InvalidParameterError(BanditToolkitError, ValueError):
    """A distribution or policy parameter is non-finite or out of range."""
    category = ErrorCategory.INVALID_PARAMETER


class InsufficientDataError(BanditToolkitError, ValueError):
    """The incumbent arm has no observations to anchor a prior on."""
    category = ErrorCategory.INSUFFICIENT_DATA


class DomainError(BanditToolkitError, ValueError):
    """An argument lies outside the mathematical domain of a function."""
    category = ErrorCategory.DOMAIN


class EmptyInputError(BanditToolkitError, ValueError):
    """A collection that must be non-empty was empty."""
    category = ErrorCategory.EMPTY_INPUT


class ConfigError(BanditToolkitError, ValueError):
    """A run configuration is malformed or inconsistent."""
    category = ErrorCategory.CONFIGURATION


class MissingInputError(BanditToolkitError):
    """Harness outputs required by a command are absent."""
    category = ErrorCategory.MISSING_INPUT

    def __init__(self, message: str, missing: Optional[list] = None):
        super().__init__(message, parameters={"missing": list(missing or [])})
        self.missing = list(missing or [])


@dataclass
class ErrorContext:
    """Context information for enhanced error logging."""
    category: ErrorCategory
    severity: ErrorSeverity
    operation: str
    parameters: Optional[Dict[str, Any]] = None
    replication: Optional[int] = None
    row_index: Optional[int] = None
    timestamp: Optional[str] = None

    def __post_init__(self):
        if self.timestamp is None:
            self.timestamp = datetime.now().isoformat()


class EnhancedErrorHandler:
    """Enhanced error handler with structured logging and categorization."""

    def __init__(self, logger_name: str):
        self.logger = logging.getLogger(logger_name)

        self.user_messages = {
            ErrorCategory.INVALID_PARAMETER: "A distribution parameter is invalid. Shapes must be finite and positive.",
            ErrorCategory.INSUFFICIENT_DATA: "The incumbent arm has no observations; use the default Beta(1,1) prior.",
            ErrorCategory.DOMAIN: "An argument is outside the allowed range.",
            ErrorCategory.EMPTY_INPUT: "The input collection is empty.",
            ErrorCategory.CONFIGURATION: "The configuration is invalid. Please check the config file and --set overrides.",
            ErrorCategory.MISSING_INPUT: "Required input files are missing.",
            ErrorCategory.SOLVER_FALLBACK: "The closed-form prior was rejected; a fallback prior was used.",
            ErrorCategory.THRESHOLD: "Calibration thresholds were not met.",
        }

    def log_error(self, error: Exception, context: ErrorContext,
                  include_stacktrace: Optional[bool] = None) -> str:
        """
        Log an error with enhanced context and return a user-friendly message.

        Args:
            error: The exception that occurred
            context: Error context information
            include_stacktrace: Whether to include the full stacktrace in logs.
                               If None, determined from severity and category.

        Returns:
            str: User-friendly error message
        """
        log_entry = {
            "error_category": context.category.value,
            "error_severity": context.severity.value,
            "operation": context.operation,
            "error_message": str(error),
            "error_type": type(error).__name__,
            "timestamp": context.timestamp
        }
        if context.parameters:
            log_entry["parameters"] = dict(context.parameters)
        if context.replication is not None:
            log_entry["replication"] = context.replication
        if context.row_index is not None:
            log_entry["row_index"] = context.row_index

        log_message = f"[{context.category.value.upper()}] {context.operation}: {str(error)}"

        context_details = []
        if context.parameters:
            context_details.extend(f"{key}={value}" for key, value in context.parameters.items())
        if context.replication is not None:
            context_details.append(f"replication={context.replication}")
        if context.row_index is not None:
            context_details.append(f"row={context.row_index}")
        if context_details:
            log_message += f" [{', '.join(context_details)}]"

        if include_stacktrace is None:
            include_stacktrace = self._should_include_stacktrace(context)

        if context.severity == ErrorSeverity.CRITICAL:
            self.logger.critical(log_message, extra=log_entry, exc_info=include_stacktrace)
        elif context.severity == ErrorSeverity.HIGH:
            self.logger.error(log_message, extra=log_entry, exc_info=include_stacktrace)
        elif context.severity == ErrorSeverity.MEDIUM:
            self.logger.warning(log_message, extra=log_entry, exc_info=include_stacktrace)
        else:
            self.logger.info(log_message, extra=log_entry, exc_info=False)

        return self._get_user_message(context, error)

    def log_solver_fallback(self, reason: str, n_k: int, p_hat_k: float,
                            epsilon: float, r: float, source: str) -> str:
        """
        Log a rejected closed-form root and the prior that replaced it.

        Args:
            reason: Why the closed-form root was rejected
            n_k: Incumbent observation count
            p_hat_k: Incumbent observed success rate
            epsilon: Target exploration probability
            r: Prior strength
            source: Provenance of the prior that was emitted instead

        Returns:
            str: User-friendly message
        """
        context = ErrorContext(
            category=ErrorCategory.SOLVER_FALLBACK,
            severity=ErrorSeverity.MEDIUM,
            operation=f"solve_prior_mean_{source.lower()}",
            parameters={"n_k": n_k, "p_hat_k": p_hat_k, "epsilon": epsilon, "r": r}
        )
        return self.log_error(ValueError(reason), context, include_stacktrace=False)

    def log_row_failure(self, error: Exception, operation: str,
                        parameters: Dict[str, Any],
                        replication: Optional[int] = None,
                        row_index: Optional[int] = None) -> str:
        """
        Log a failure of a single grid row or replication that does not abort the run.

        Args:
            error: The exception raised for the row
            operation: Harness operation that failed
            parameters: Configuration of the failed row
            replication: Replication index, when applicable
            row_index: Grid row index, when applicable

        Returns:
            str: User-friendly error message
        """
        category = getattr(error, "category", ErrorCategory.SYSTEM)
        severity = ErrorSeverity.HIGH if category == ErrorCategory.SYSTEM else ErrorSeverity.MEDIUM
        context = ErrorContext(
            category=category,
            severity=severity,
            operation=operation,
            parameters=parameters,
            replication=replication,
            row_index=row_index
        )
        return self.log_error(error, context)

    def log_validation_error(self, field: str, value: Any, reason: str) -> str:
        """
        Log a configuration validation error.

        Args:
            field: Field name that failed validation
            value: The invalid value
            reason: Reason for validation failure

        Returns:
            str: User-friendly error message
        """
        context = ErrorContext(
            category=ErrorCategory.CONFIGURATION,
            severity=ErrorSeverity.LOW,
            operation=f"validate_{field}",
            parameters={"field": field, "value": str(value), "reason": reason}
        )
        error = ValueError(f"Validation failed for {field}: {reason}")
        return self.log_error(error, context)

    def log_threshold_miss(self, metric: str, value: float, threshold: float,
                           strict: bool) -> str:
        """Log a calibration metric that missed its threshold."""
        context = ErrorContext(
            category=ErrorCategory.THRESHOLD,
            severity=ErrorSeverity.HIGH if strict else ErrorSeverity.MEDIUM,
            operation=f"check_{metric}",
            parameters={"value": value, "threshold": threshold}
        )
        error = ValueError(f"{metric}={value:.6g} misses threshold {threshold:.6g}")
        return self.log_error(error, context, include_stacktrace=False)

    def _get_user_message(self, context: ErrorContext, error: Exception) -> str:
        """Get user-friendly error message based on context."""
        if isinstance(error, BanditToolkitError):
            return error.get_user_message()

        message = self.user_messages.get(context.category)
        if message:
            return message

        return "An unexpected error occurred. Re-run with --verbose for details."

    def _should_include_stacktrace(self, context: ErrorContext) -> bool:
        """
        Determine whether to include a stacktrace based on error context.

        Stacktraces are included for CRITICAL/HIGH severity and for SYSTEM
        errors. Expected conditions (fallbacks, bad input, bad config,
        missing files) are logged without one.

        Args:
            context: Error context information

        Returns:
            bool: True if stacktrace should be included
        """
        if context.severity in [ErrorSeverity.CRITICAL, ErrorSeverity.HIGH]:
            return True

        if context.category == ErrorCategory.SYSTEM:
            return True

        if context.category in [ErrorCategory.SOLVER_FALLBACK, ErrorCategory.CONFIGURATION,
                                ErrorCategory.MISSING_INPUT, ErrorCategory.THRESHOLD,
                                ErrorCategory.EMPTY_INPUT]:
            return False

        return context.severity != ErrorSeverity.LOW


# Global error handler instances
solver_error_handler = EnhancedErrorHandler("prior_solver")
harness_error_handler = EnhancedErrorHandler("harness")
cli_error_handler = EnhancedErrorHandler("cli")
config_error_handler = EnhancedErrorHandler("config")
