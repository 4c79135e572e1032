"""Voxel grids and the VXG1 file format.

A grid is a dense D x H x W field stored in C order, so the linear offset of
cell (i, j, k) is (i * H + j) * W + k.  Occupancy grids hold uint8 values in
{0, 1}; scalar grids hold float32 (the payload width VXG1 declares).

VXG1 layout: 4 ASCII bytes "VXG1", three little-endian uint32 dims D, H, W,
one value-kind byte (0 = occupancy u8, 1 = float32 LE), then the payload in
linear order.  Origin and voxel size are not part of the file: every grid in
this toolkit lives on the standardized unit domain [-0.5, 0.5]^3.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, FormatError

MAGIC = b"VXG1"
KIND_OCCUPANCY = 0
KIND_SCALAR = 1

_HEADER = struct.Struct("<4sIIIB")


def _canonical_voxel_size(dims) -> float:
    return 1.0 / max(dims)


@dataclass
class VoxelGrid:
    """Dense voxel field over the standardized unit domain."""

    data: np.ndarray  # (D, H, W), uint8 for occupancy, float32 for scalar
    value_kind: int = KIND_OCCUPANCY
    origin: tuple = (-0.5, -0.5, -0.5)
    voxel_size: float = field(default=0.0)

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ArgumentError(f"grid data must be 3-d, got shape {self.data.shape}")
        if self.value_kind == KIND_OCCUPANCY:
            self.data = np.ascontiguousarray(self.data, dtype=np.uint8)
            bad = (self.data > 1).any()
            if bad:
                raise ArgumentError("occupancy grid may only contain 0 and 1")
        elif self.value_kind == KIND_SCALAR:
            self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        else:
            raise ArgumentError(f"unknown value kind {self.value_kind}")
        if self.voxel_size == 0.0:
            self.voxel_size = _canonical_voxel_size(self.data.shape)
        if self.voxel_size <= 0.0:
            raise ArgumentError("voxel_size must be positive")

    @property
    def dims(self):
        return self.data.shape

    def occupied_count(self) -> int:
        if self.value_kind != KIND_OCCUPANCY:
            raise ArgumentError("occupied_count is only defined for occupancy grids")
        return int(self.data.sum())

    def occupancy_fraction(self) -> float:
        return self.occupied_count() / self.data.size

    def __eq__(self, other):
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        return (
            self.dims == other.dims
            and self.value_kind == other.value_kind
            and self.origin == other.origin
            and self.voxel_size == other.voxel_size
            and np.array_equal(self.data, other.data)
        )


def write_voxel_file(grid: VoxelGrid) -> bytes:
    d, h, w = grid.dims
    header = _HEADER.pack(MAGIC, d, h, w, grid.value_kind)
    if grid.value_kind == KIND_OCCUPANCY:
        payload = grid.data.tobytes()
    else:
        payload = grid.data.astype("<f4", copy=False).tobytes()
    return header + payload


def read_voxel_file(raw: bytes) -> VoxelGrid:
    if len(raw) < _HEADER.size:
        raise FormatError(f"file too short for a VXG1 header ({len(raw)} bytes)")
    magic, d, h, w, kind = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if d == 0 or h == 0 or w == 0:
        raise FormatError(f"non-positive dims {(d, h, w)}")
    payload = raw[_HEADER.size:]
    count = d * h * w
    if kind == KIND_OCCUPANCY:
        expected = count
        dtype = np.uint8
    elif kind == KIND_SCALAR:
        expected = 4 * count
        dtype = np.dtype("<f4")
    else:
        raise FormatError(f"unknown value-kind code {kind}")
    if len(payload) != expected:
        raise FormatError(
            f"payload is {len(payload)} bytes but dims {(d, h, w)} require {expected}"
        )
    data = np.frombuffer(payload, dtype=dtype).reshape(d, h, w)
    if kind == KIND_OCCUPANCY and (data > 1).any():
        raise FormatError("occupancy payload contains values other than 0 and 1")
    return VoxelGrid(data=data.copy(), value_kind=kind)


def save_voxel_file(grid: VoxelGrid, path) -> None:
    from .fileio import atomic_write_bytes

    atomic_write_bytes(path, write_voxel_file(grid))


def load_voxel_file(path) -> VoxelGrid:
    with open(path, "rb") as fh:
        return read_voxel_file(fh.read())
