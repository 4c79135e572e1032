"""Triangle meshes: OBJ / STL parsing and scale standardization.

Parsing covers the three interchange layouts that matter in practice:
Wavefront OBJ (v and f records, everything else skipped), ASCII STL, and
binary STL (80-byte header, uint32 facet count, 50-byte facets).  STL stores
one vertex record per corner, so both STL readers deduplicate vertices by
exact bit equality of the coordinates.

standardize() recenters the axis-aligned bounding box on the origin and
uniformly rescales so the longest box edge is 1.0, dropping degenerate
triangles (repeated index or near-zero area) along the way.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ArgumentError,
    BadIndexError,
    DegenerateGeometryError,
    EmptyMeshError,
    MeshParseError,
)

FORMAT_OBJ = "obj"
FORMAT_STL_ASCII = "stl_ascii"
FORMAT_STL_BINARY = "stl_binary"

_AREA_EPS = 1e-12


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (n, 3) float64
    triangles: np.ndarray  # (m, 3) int64 indices into vertices
    name: str = ""

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ArgumentError(f"vertices must be (n, 3), got {self.vertices.shape}")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ArgumentError(f"triangles must be (m, 3), got {self.triangles.shape}")
        if self.triangles.size:
            lo = int(self.triangles.min())
            hi = int(self.triangles.max())
            if lo < 0 or hi >= len(self.vertices):
                raise BadIndexError(
                    f"triangle index out of range: saw {lo}..{hi} with "
                    f"{len(self.vertices)} vertices"
                )

    def triangle_corners(self) -> np.ndarray:
        """(m, 3, 3) array of the corner coordinates of every triangle."""
        return self.vertices[self.triangles]

    def bounds(self):
        if not len(self.vertices):
            raise EmptyMeshError("mesh has no vertices")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


@dataclass
class StandardizationReport:
    applied_scale: float
    applied_translation: np.ndarray  # translation added after scaling
    dropped_elements: int = 0


def parse_mesh(raw: bytes, fmt: str, name: str = "") -> TriangleMesh:
    if not raw:
        raise MeshParseError("empty input")
    if fmt == FORMAT_OBJ:
        return _parse_obj(raw, name)
    if fmt == FORMAT_STL_ASCII:
        return _parse_stl_ascii(raw, name)
    if fmt == FORMAT_STL_BINARY:
        return _parse_stl_binary(raw, name)
    raise ArgumentError(f"unknown mesh format {fmt!r}")


def detect_format(path: str, raw: bytes) -> str:
    """Choose a parser from the file extension, sniffing STL flavor."""
    lowered = path.lower()
    if lowered.endswith(".obj"):
        return FORMAT_OBJ
    if lowered.endswith(".stl"):
        head = raw[:512]
        if head.lstrip()[:5] == b"solid" and b"facet" in raw[:4096]:
            return FORMAT_STL_ASCII
        return FORMAT_STL_BINARY
    raise ArgumentError(f"cannot infer mesh format from path {path!r}")


def _parse_obj(raw: bytes, name: str) -> TriangleMesh:
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MeshParseError(f"OBJ is not valid UTF-8 at byte {exc.start}") from None
    vertices = []
    triangles = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise MeshParseError(f"line {lineno}: vertex needs 3 coordinates")
            try:
                vertices.append((float(parts[1]), float(parts[2]), float(parts[3])))
            except ValueError:
                raise MeshParseError(f"line {lineno}: bad vertex coordinate") from None
        elif tag == "f":
            if len(parts) < 4:
                raise MeshParseError(f"line {lineno}: face needs at least 3 vertices")
            idx = []
            for token in parts[1:]:
                head = token.split("/", 1)[0]
                try:
                    i = int(head)
                except ValueError:
                    raise MeshParseError(
                        f"line {lineno}: bad face index {token!r}"
                    ) from None
                if i == 0:
                    raise MeshParseError(f"line {lineno}: face index 0 is not allowed")
                # OBJ counts from 1; negatives reference backwards from the end
                idx.append(i - 1 if i > 0 else len(vertices) + i)
            for a, b in zip(idx[1:], idx[2:]):
                triangles.append((idx[0], a, b))
        # any other record type is ignored
    if not triangles:
        raise EmptyMeshError("OBJ contains no faces")
    verts = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    tris = np.asarray(triangles, dtype=np.int64)
    if tris.min() < 0 or tris.max() >= len(verts):
        raise BadIndexError(
            f"OBJ face references vertex {int(tris.max()) + 1} of {len(verts)}"
        )
    return TriangleMesh(verts, tris, name=name)


def _dedup_vertices(corners: np.ndarray, name: str) -> TriangleMesh:
    """Build an indexed mesh from per-corner coordinates, merging exact repeats."""
    seen = {}
    vertices = []
    index = np.empty(len(corners), dtype=np.int64)
    for n, point in enumerate(corners):
        key = point.tobytes()
        slot = seen.get(key)
        if slot is None:
            slot = len(vertices)
            seen[key] = slot
            vertices.append(point)
        index[n] = slot
    verts = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    tris = index.reshape(-1, 3)
    return TriangleMesh(verts, tris, name=name)


def _parse_stl_ascii(raw: bytes, name: str) -> TriangleMesh:
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MeshParseError(f"STL is not valid UTF-8 at byte {exc.start}") from None
    corners = []
    solid_name = name
    in_loop = False
    loop_count = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        tag = parts[0].lower()
        if tag == "solid":
            if len(parts) > 1 and not solid_name:
                solid_name = parts[1]
        elif tag == "facet" or tag == "endsolid":
            pass
        elif tag == "outer":
            in_loop = True
            loop_count = 0
        elif tag == "vertex":
            if not in_loop:
                raise MeshParseError(f"line {lineno}: vertex outside outer loop")
            if len(parts) < 4:
                raise MeshParseError(f"line {lineno}: vertex needs 3 coordinates")
            try:
                corners.append((float(parts[1]), float(parts[2]), float(parts[3])))
            except ValueError:
                raise MeshParseError(f"line {lineno}: bad vertex coordinate") from None
            loop_count += 1
            if loop_count > 3:
                raise MeshParseError(f"line {lineno}: facet loop has more than 3 vertices")
        elif tag == "endloop":
            if loop_count != 3:
                raise MeshParseError(f"line {lineno}: facet loop has {loop_count} vertices")
            in_loop = False
        elif tag == "endfacet":
            pass
        else:
            raise MeshParseError(f"line {lineno}: unexpected token {parts[0]!r}")
    if not corners:
        raise EmptyMeshError("ASCII STL contains no facets")
    if len(corners) % 3:
        raise MeshParseError("ASCII STL ends mid-facet")
    return _dedup_vertices(np.asarray(corners, dtype=np.float64), solid_name)


def _parse_stl_binary(raw: bytes, name: str) -> TriangleMesh:
    if len(raw) < 84:
        raise MeshParseError(f"binary STL shorter than an 84-byte prologue ({len(raw)})")
    (count,) = struct.unpack_from("<I", raw, 80)
    expected = 84 + 50 * count
    if len(raw) != expected:
        raise MeshParseError(
            f"binary STL declares {count} facets ({expected} bytes) but file holds "
            f"{len(raw)} bytes; mismatch at byte offset 80"
        )
    if count == 0:
        raise EmptyMeshError("binary STL declares zero facets")
    # each 50-byte facet: normal f32x3, three vertices f32x3 each, u16 attribute
    body = np.frombuffer(raw, dtype=np.uint8, offset=84).reshape(count, 50)
    floats = body[:, :48].copy().view("<f4").reshape(count, 4, 3)
    corners = floats[:, 1:4, :].reshape(-1, 3).astype(np.float64)
    return _dedup_vertices(corners, name)


def load_mesh(path) -> TriangleMesh:
    with open(path, "rb") as fh:
        raw = fh.read()
    fmt = detect_format(str(path), raw)
    import os

    return parse_mesh(raw, fmt, name=os.path.basename(str(path)))


def _triangle_areas(corners: np.ndarray) -> np.ndarray:
    ab = corners[:, 1] - corners[:, 0]
    ac = corners[:, 2] - corners[:, 0]
    return 0.5 * np.linalg.norm(np.cross(ab, ac), axis=1)


def standardize(mesh: TriangleMesh):
    """Center the bounding box on the origin and scale the longest edge to 1.

    Returns (standardized mesh, report).  Triangles that collapse (repeated
    vertex index, or area below 1e-12 after rescaling) are dropped and
    counted in the report.
    """
    if not len(mesh.triangles):
        raise EmptyMeshError("cannot standardize a mesh with no triangles")
    lo, hi = mesh.bounds()
    extent = hi - lo
    longest = float(extent.max())
    if longest <= 0.0:
        raise DegenerateGeometryError("mesh bounding box has zero extent on every axis")
    scale = 1.0 / longest
    center = (lo + hi) / 2.0
    vertices = (mesh.vertices - center) * scale
    translation = -center * scale

    tris = mesh.triangles
    repeated = (
        (tris[:, 0] == tris[:, 1])
        | (tris[:, 1] == tris[:, 2])
        | (tris[:, 0] == tris[:, 2])
    )
    areas = _triangle_areas(vertices[tris])
    keep = ~repeated & (areas >= _AREA_EPS)
    dropped = int((~keep).sum())
    kept = tris[keep]
    if not len(kept):
        raise EmptyMeshError("all triangles degenerate after standardization")
    out = TriangleMesh(vertices, kept, name=mesh.name)
    report = StandardizationReport(
        applied_scale=scale,
        applied_translation=translation,
        dropped_elements=dropped,
    )
    return out, report
