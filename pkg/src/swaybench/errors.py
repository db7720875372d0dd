"""Exception types shared across the toolkit.

Each error carries the CLI exit code it maps to: 2 for configuration and
schema problems, 4 for numerical / degenerate-input failures. Fall events
are not exceptions (they are reported in trial results, exit code 3).
"""


class SwayBenchError(Exception):
    exit_code = 4


class ConfigError(SwayBenchError):
    """Invalid configuration value or inconsistent config combination."""

    exit_code = 2


class SchemaError(SwayBenchError):
    """Malformed manifest, config file, or artifact schema."""

    exit_code = 2


class NonMaximalTapsError(ConfigError):
    """Feedback taps do not produce a maximal-length register cycle."""


class DegenerateStimulusError(SwayBenchError):
    """Stimulus spectrum has no usable power where the pipeline needs it."""


class BandCoverageError(SwayBenchError):
    """Peak grid too short to realize the requested band centers."""


class SingularReferenceError(SwayBenchError):
    """Cohort covariance is not positive definite (try shrinkage > 0)."""


class InvalidReferenceError(SwayBenchError):
    """Reference model violates its own invariants."""


class DecompositionError(SwayBenchError):
    """Generalized eigenproblem failed (non-physical plant parameters)."""
