import functools
import logging

from marshmallow import ValidationError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_TIMED_OUT = 2


class TransitVeilError(Exception):
    """Base error; carries the process exit code used by the CLI."""
    exit_code = EXIT_ERROR

    def __init__(self, message, payload=None):
        super().__init__(message)
        self.message = message
        self.payload = payload

    def to_dict(self):
        rv = dict(self.payload or ())
        rv['message'] = self.message
        rv['type'] = type(self).__name__
        return rv


class MapParseError(TransitVeilError):
    """Malformed map, fixture or partition text."""

    def __init__(self, message, line=None, column=None, row=None):
        location = []
        if row is not None:
            location.append(f"row {row}")
        if line is not None:
            location.append(f"line {line}")
        if column is not None:
            location.append(f"column {column}")
        text = f"{message} ({', '.join(location)})" if location else message
        super().__init__(text, payload={'line': line, 'column': column, 'row': row})
        self.line = line
        self.column = column
        self.row = row


class DomainError(TransitVeilError):
    """Invalid domain construction, path or problem tuple."""


class UndecidedError(DomainError):
    """Question has no decision procedure on this kind of domain."""


class AuditError(TransitVeilError):
    """Planner outputs disagree with the partition they were reported against."""


class ConfigurationError(TransitVeilError):
    """Invalid run configuration."""


class ScenarioExhaustedError(ConfigurationError):
    """Not enough feasible scenarios could be sampled."""


def handle_errors(f):
    """Wrap a CLI command so that errors become logged exit codes."""
    @functools.wraps(f)
    def wrapped(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except TransitVeilError as e:
            logger.error(f"{type(e).__name__}: {e.message}", exc_info=logger.isEnabledFor(logging.DEBUG))
            return e.exit_code
        except ValidationError as e:
            logger.error(f"Configuration Error: {e.messages}")
            return EXIT_ERROR
        except Exception as e:
            logger.error(f"Unexpected Error: {str(e)}", exc_info=True)
            return EXIT_ERROR
    return wrapped
