"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures to distinct
process exit statuses without a lookup table.
"""

from __future__ import annotations


class RescuError(Exception):
    exit_code = 1


class MissingInputError(RescuError):
    exit_code = 3


class ParseError(RescuError):
    exit_code = 4


class InvariantViolation(RescuError):
    exit_code = 5


class ImageTooSmall(RescuError):
    exit_code = 6


class UnsupportedFormat(RescuError):
    exit_code = 6


class DegenerateInstance(RescuError):
    """Two features of one instance coincide, so the size ratio is undefined."""

    exit_code = 7


class InsufficientPoints(RescuError):
    exit_code = 7


class DegenerateGeometry(RescuError):
    exit_code = 7


class NonColinear(RescuError):
    exit_code = 7


class InsufficientLines(RescuError):
    exit_code = 8


class NoConsensus(RescuError):
    exit_code = 8


class VpInsidePattern(RescuError):
    exit_code = 8


class ZeroAreaDetection(RescuError):
    exit_code = 9


class UnpairedRecords(RescuError):
    exit_code = 9


class EmptyInput(RescuError):
    exit_code = 9


class NoInsertionPoint(RescuError):
    exit_code = 10


class OutOfRange(RescuError):
    exit_code = 10


class InstanceOutOfBounds(RescuError):
    exit_code = 11


class ZeroInputs(RescuError):
    exit_code = 12
