"""voxelform: voxel-based 3D building-form classification and saliency toolkit."""

__version__ = "0.1.0"

from .errors import VoxelformError  # noqa: F401
