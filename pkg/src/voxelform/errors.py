"""Exception taxonomy shared across the toolkit.

Everything raised on purpose derives from VoxelformError so the CLI can map
domain failures to exit code 1 and leave genuine I/O failures (OSError) to
exit code 2.
"""


class VoxelformError(Exception):
    """Base class for all domain errors raised by this package."""


class MeshParseError(VoxelformError):
    """Malformed mesh file; message carries a line or byte offset."""


class EmptyMeshError(VoxelformError):
    """Parsed file contains no triangles."""


class BadIndexError(VoxelformError):
    """Face references a vertex index outside the vertex table."""


class DegenerateGeometryError(VoxelformError):
    """Geometry has no usable extent (e.g. all vertices coincident)."""


class WatertightError(VoxelformError):
    """Solid fill requested on a mesh whose inside/outside test is inconsistent."""


class FormatError(VoxelformError):
    """Binary container (VXG1 / ASN1) violates its format contract."""


class ShapeError(VoxelformError):
    """Tensor shapes incompatible with the requested operation."""


class ArgumentError(VoxelformError):
    """Caller-supplied value outside the documented domain."""


class StateError(VoxelformError):
    """Operation requires state that has not been initialized yet."""


class ContractError(VoxelformError):
    """Forward/backward context mismatch."""


class ConfigError(VoxelformError):
    """Invalid model or CLI configuration."""


class DivergenceError(VoxelformError):
    """Training produced a non-finite loss."""


class GenerationError(VoxelformError):
    """Procedural generator failed to produce a valid form within its retry bound."""


class EmptyFormError(VoxelformError):
    """Operation requires at least one occupied voxel."""


class UndefinedMetricError(VoxelformError):
    """Metric denominator is zero; message names the metric."""
