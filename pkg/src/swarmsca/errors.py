"""Exception types raised across the package."""


class SwarmScaError(Exception):
    pass


class DatasetError(SwarmScaError):
    pass


class LayoutError(DatasetError, ValueError):
    """HDF5 file does not follow the expected group/dataset layout."""


class ShapeMismatchError(DatasetError, ValueError):
    pass


class InvalidSpecError(SwarmScaError, ValueError):
    pass


class DegenerateClassesError(SwarmScaError, ValueError):
    pass


class DegenerateReferenceError(SwarmScaError, ValueError):
    pass


class ConstantTraceError(SwarmScaError, ValueError):
    pass


class LengthMismatchError(SwarmScaError, ValueError):
    pass


class NonPositiveError(SwarmScaError, ValueError):
    pass


class ExcessiveShiftError(SwarmScaError, ValueError):
    pass


class PilotAbsentError(SwarmScaError):
    pass


class EmptyPOIError(SwarmScaError, ValueError):
    pass


class CheckpointRangeError(SwarmScaError, ValueError):
    pass


class TopologyError(SwarmScaError, ValueError):
    pass


class NoConsensusError(SwarmScaError):
    pass


class DegenerateGeometryError(SwarmScaError, ValueError):
    pass


class ConvergenceError(SwarmScaError):
    pass


class DatasetUnavailableError(SwarmScaError):
    pass


class ConfigError(SwarmScaError, ValueError):
    pass


class SegmentTooLongError(SwarmScaError, ValueError):
    pass


class ScenarioError(SwarmScaError, ValueError):
    """Malformed scenario file."""
