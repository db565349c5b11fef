# ccrec.exceptions
"""
Exception system for ccrec.

Every error raised by the package derives from :class:`CcrecError` and
carries enough context (operation, file, line, offending tensor) plus a
list of suggestions to fix the problem without reading the source.
"""

import logging
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Dict, List, Optional, Union

logger = logging.getLogger(__name__)


class ErrorCode(Enum):
    """Stable error codes used across the package."""
    # Input data
    DATA_PARSE = "DATA_PARSE"
    DATA_VALIDATION = "DATA_VALIDATION"
    EMPTY_INPUT = "EMPTY_INPUT"

    # Configuration
    CONFIG_MISSING = "CONFIG_MISSING"
    CONFIG_INVALID = "CONFIG_INVALID"

    # Artifacts
    CHECKPOINT_FORMAT = "CHECKPOINT_FORMAT"

    # Optimisation
    NON_FINITE = "NON_FINITE"
    TRAINING_FAILED = "TRAINING_FAILED"

    # Evaluation / generation
    EVALUATION_FAILED = "EVALUATION_FAILED"
    GENERATION_INFEASIBLE = "GENERATION_INFEASIBLE"

    # Execution
    BATCH_FAILED = "BATCH_FAILED"


class CcrecError(Exception):
    """
    Base exception for all ccrec errors.

    Provides:
    - An error code
    - The operation and file involved, when known
    - Suggestions for fixing the error
    - Timestamp and free-form context
    """

    def __init__(
        self,
        message: str,
        error_code: Optional[Union[ErrorCode, str]] = None,
        operation: Optional[str] = None,
        path: Optional[str] = None,
        suggestions: Optional[List[str]] = None,
        **kwargs
    ):
        """
        Initialize CcrecError with context.

        Args:
            message: Primary error message
            error_code: ErrorCode enum or string code
            operation: Operation being performed (e.g. "split", "train")
            path: File involved, if any
            suggestions: List of suggestions for fixing the error
            **kwargs: Additional context data
        """
        super().__init__(message)
        self.message = message
        if isinstance(error_code, ErrorCode):
            self.error_code = error_code
        elif error_code:
            try:
                self.error_code = ErrorCode(error_code)
            except ValueError:
                self.error_code = error_code
        else:
            self.error_code = None
        self.operation = operation
        self.path = str(path) if path is not None else None
        self.suggestions = suggestions or []
        self.timestamp = datetime.now(timezone.utc)
        self.context = kwargs

        # Callers decide whether a failure is worth reporting.
        logger.debug(self.get_detailed_message())

    @property
    def code_value(self) -> Optional[str]:
        if isinstance(self.error_code, ErrorCode):
            return self.error_code.value
        return self.error_code

    def get_detailed_message(self) -> str:
        """Get a detailed, formatted error message."""
        parts = [f"[{self.timestamp.isoformat()}] {self.message}"]

        if self.error_code:
            parts.append(f"Error Code: {self.code_value}")

        if self.operation:
            parts.append(f"Operation: {self.operation}")

        if self.path:
            parts.append(f"File: {self.path}")

        if self.suggestions:
            parts.append("\nSuggestions:")
            for i, suggestion in enumerate(self.suggestions, 1):
                parts.append(f"  {i}. {suggestion}")

        if self.context:
            parts.append(f"\nAdditional Context: {self.context}")

        return "\n".join(parts)

    def __str__(self) -> str:
        if self.error_code:
            return f"[{self.code_value}] {self.message}"
        return self.message

    def __repr__(self) -> str:
        return f"{type(self).__name__}(message={self.message!r}, error_code={self.error_code})"


class CcrecDataError(CcrecError):
    """Malformed input files (CSV rows that do not parse)."""

    def __init__(
        self,
        message: str,
        line_number: Optional[int] = None,
        **kwargs
    ):
        self.line_number = line_number
        if line_number is not None and f"line {line_number}" not in message:
            message = f"{message} (line {line_number})"

        suggestions = kwargs.pop('suggestions', [])
        suggestions.extend([
            "Check that the file has the header user_id,item_id,channel",
            "Make sure every row has exactly three comma-separated fields",
        ])
        kwargs.setdefault('error_code', ErrorCode.DATA_PARSE)
        super().__init__(message, suggestions=suggestions, **kwargs)


class CcrecValidationError(CcrecError):
    """Input values that parse but violate a domain rule."""

    def __init__(
        self,
        message: str,
        field_errors: Optional[Dict[str, Union[str, List[str]]]] = None,
        **kwargs
    ):
        self.field_errors = field_errors or {}

        if self.field_errors and not message:
            message = "Invalid values:\n" + "\n".join(
                f"{name}: {problem}"
                for name, problems in self.field_errors.items()
                for problem in (problems if isinstance(problems, list) else [problems])
            )

        suggestions = kwargs.pop('suggestions', [])
        suggestions.extend(f"Review the value for: {name}" for name in self.field_errors)

        kwargs.setdefault('error_code', ErrorCode.DATA_VALIDATION)
        super().__init__(message, suggestions=suggestions, **kwargs)


class CcrecConfigError(CcrecError):
    """Missing or invalid configuration."""

    def __init__(self, message: str, missing_field: Optional[str] = None, **kwargs):
        self.missing_field = missing_field

        suggestions = kwargs.pop('suggestions', [])
        if missing_field:
            suggestions.append(f"Set the '{missing_field}' configuration value")
        suggestions.append("Compare your config file with `ccrec <command> --help` defaults")

        kwargs.setdefault(
            'error_code',
            ErrorCode.CONFIG_MISSING if missing_field else ErrorCode.CONFIG_INVALID,
        )
        super().__init__(message, suggestions=suggestions, **kwargs)


class CcrecCheckpointError(CcrecError):
    """Checkpoint or sidecar files that cannot be read back."""

    def __init__(self, message: str, **kwargs):
        suggestions = kwargs.pop('suggestions', [])
        suggestions.extend([
            "Make sure the file was written by `ccrec train` or `ccrec generate`",
            "Check that the checkpoint matches the split it is evaluated on",
        ])
        kwargs.setdefault('error_code', ErrorCode.CHECKPOINT_FORMAT)
        super().__init__(message, suggestions=suggestions, **kwargs)


class CcrecTrainingError(CcrecError):
    """Optimisation failures."""

    def __init__(self, message: str, tensor: Optional[str] = None, **kwargs):
        self.tensor = tensor
        suggestions = kwargs.pop('suggestions', [])
        if tensor:
            suggestions.extend([
                f"Inspect the gradient of '{tensor}'",
                "Lower the learning rate",
            ])
            kwargs.setdefault('error_code', ErrorCode.NON_FINITE)
        else:
            kwargs.setdefault('error_code', ErrorCode.TRAINING_FAILED)
        super().__init__(message, suggestions=suggestions, **kwargs)


class CcrecEvaluationError(CcrecError):
    """Ranking evaluation that cannot be carried out."""

    def __init__(self, message: str, **kwargs):
        kwargs.setdefault('error_code', ErrorCode.EVALUATION_FAILED)
        super().__init__(message, **kwargs)


class CcrecGenerationError(CcrecError):
    """Synthetic generator settings that cannot be satisfied."""

    def __init__(self, message: str, **kwargs):
        suggestions = kwargs.pop('suggestions', [])
        suggestions.extend([
            "Lower interactions_per_user_channel",
            "Raise n_items or overlap_item_frac",
        ])
        kwargs.setdefault('error_code', ErrorCode.GENERATION_INFEASIBLE)
        super().__init__(message, suggestions=suggestions, **kwargs)


class CcrecBatchError(CcrecError):
    """Failures inside an :class:`~ccrec.batch.OrderedBatch`."""

    def __init__(
        self,
        message: str,
        failed_operations: Optional[List[Dict[str, Any]]] = None,
        **kwargs
    ):
        self.failed_operations = failed_operations or []
        kwargs.setdefault('error_code', ErrorCode.BATCH_FAILED)
        super().__init__(message, **kwargs)

    def get_detailed_message(self) -> str:
        detail = super().get_detailed_message()
        if self.failed_operations:
            lines = [f"  call {op.get('index')}: {op.get('error')}" for op in self.failed_operations]
            detail += "\nFailed calls:\n" + "\n".join(lines)
        return detail
