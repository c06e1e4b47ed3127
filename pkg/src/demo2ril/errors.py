"""Exception hierarchy shared across the pipeline.

Every failure a caller may want to catch programmatically derives from
Demo2RilError.  Simulation-step failures are *outcomes*, not exceptions,
and live in sim.py; the classes here signal misuse or unsatisfiable
requests discovered while building or refining a plan.
"""

from __future__ import annotations


class Demo2RilError(Exception):
    """Base class for all package-specific errors."""


class TaxonomyError(Demo2RilError):
    """Unknown class name or malformed taxonomy definition."""


class RuleSyntaxError(Demo2RilError):
    """A task definition file failed to parse."""


class RangeRestrictionViolation(RuleSyntaxError):
    """A negated or universally quantified literal uses a variable that no
    preceding positive literal can bind."""


class OutOfRange(Demo2RilError):
    """A timestamp or index falls outside the valid span."""


class EmptyCloud(Demo2RilError):
    """A point cloud operation received no usable points."""


class DegenerateCloud(Demo2RilError):
    """Point cloud has no full-rank covariance; axes are undefined."""


class NoMatch(Demo2RilError):
    """An object designator matched nothing in the world model."""


class Unreachable(Demo2RilError):
    """A location designator resolved outside the robot workspace."""


class PlanningFailure(Demo2RilError):
    """Motion planning could not find a collision-free path."""

    def __init__(self, message: str, pair: tuple[str, str] | None = None):
        super().__init__(message)
        self.pair = pair


class UnmappedBinding(Demo2RilError):
    """A demonstration-time object binding has no counterpart in the
    execution world."""


class ProgramSyntaxError(Demo2RilError):
    """A robot instruction program failed to parse."""


class ConfigError(Demo2RilError):
    """Malformed configuration file or unknown option."""
