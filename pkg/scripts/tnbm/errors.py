#!/usr/bin/env python3
"""
Exception hierarchy for the TNBM library.

Library code raises these; scripts catch them in main() and map them to exit codes
(1 for configuration problems, 2 for runtime failures).
"""

from typing import List, Optional, Sequence


class TnbmError(Exception):
    """Base class for all library errors."""


class DimensionError(TnbmError, ValueError):
    """Shapes, lengths or extents do not agree."""


class BoundaryError(TnbmError, IndexError):
    """Orthogonality center moved past the end of the chain."""


class CacheConsistencyError(TnbmError, RuntimeError):
    """Environment cache is not positioned where the caller expects it."""


class SingularityError(TnbmError, ArithmeticError):
    """A (shifted) overlap is exactly zero where the loss has a logarithmic pole."""

    def __init__(self, message: str, sample_index: Optional[int] = None):
        super().__init__(message)
        self.sample_index = sample_index


class DegenerateError(TnbmError, ValueError):
    """Zero base vector or vanishing retraction argument."""


class NormalizationError(TnbmError, ValueError):
    """A tensor that must lie on the unit sphere does not."""


class FormatError(TnbmError, ValueError):
    """Binary container is malformed (bad magic, truncated payload)."""

    def __init__(
        self,
        message: str,
        offset: Optional[int] = None,
        expected: Optional[int] = None,
        actual: Optional[int] = None
    ):
        super().__init__(message)
        self.offset = offset
        self.expected = expected
        self.actual = actual


class ParseError(TnbmError, ValueError):
    """Text record could not be parsed."""

    def __init__(self, message: str, row: int, column: int):
        super().__init__(f"{message} (row {row}, column {column})")
        self.row = row
        self.column = column


class ConfigError(TnbmError, ValueError):
    """Experiment configuration failed validation."""

    def __init__(self, problems: Sequence[str]):
        self.problems: List[str] = list(problems)
        self.keys: List[str] = [p.split(':', 1)[0] for p in self.problems]
        super().__init__(
            "Invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems)
        )


class AlignmentError(TnbmError, ValueError):
    """Run summaries do not share an iteration axis."""
