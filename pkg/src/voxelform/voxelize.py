"""Mesh voxelization on the standardized unit domain [-0.5, 0.5]^3.

Surface mode marks every cell whose box meets a triangle, tested with the
13-axis separating-axis routine against closed boxes.  Geometry that lands
exactly on the plane between two cells is attributed to the lower cell, so
an axis-aligned face at a cell boundary marks one layer of voxels, not two.

Solid mode adds interior cells found by voxel-center ray parity: a center is
inside when the count of triangle crossings strictly beyond it along +x is
odd.  The same test runs along +y and +z and the three votes are combined by
majority; if more than 0.5% of all cells get a split vote the mesh is not
watertight enough to fill and a watertight error is raised.  Crossing tests
on an exact edge or vertex are resolved by a lexicographic nudge of the ray
(+eps, +eps^2) so a crossing on a shared edge is counted by exactly one of
the two triangles.
"""

from __future__ import annotations

import numpy as np

from .errors import ArgumentError, EmptyMeshError, WatertightError
from .mesh import TriangleMesh
from .voxel import KIND_OCCUPANCY, VoxelGrid

ORIGIN = -0.5

FILL_SURFACE = "surface"
FILL_SOLID = "solid"

_EYE = np.eye(3)


def _cell_of(t: float, resolution: int) -> int:
    """Index of the cell owning coordinate t, boundaries going to the lower cell."""
    s = (t - ORIGIN) * resolution
    return int(min(max(np.ceil(s) - 1, 0), resolution - 1))


def _sat_triangle_boxes(corners: np.ndarray, centers: np.ndarray, half: float) -> np.ndarray:
    """Closed-box separating-axis test of one triangle against many cube cells.

    corners: (3, 3) triangle vertices.  centers: (n, 3) box centers.  half:
    half edge length.  Returns a boolean mask; touching counts as overlap.
    """
    # pad the half extent by a relative epsilon so geometry exactly on a cell
    # boundary survives rounding: candidate ranges already assign a boundary
    # plane to one owning cell, and that cell's test must not miss by an ulp
    half = half * (1.0 + 1e-12) + 1e-15
    v = corners[None, :, :] - centers[:, None, :]  # (n, 3, 3)
    edges = corners[[1, 2, 0]] - corners  # e0 = B-A, e1 = C-B, e2 = A-C
    ok = np.ones(len(centers), dtype=bool)

    for ax in range(3):
        coords = v[:, :, ax]
        ok &= (coords.min(axis=1) <= half) & (coords.max(axis=1) >= -half)

    normal = np.cross(edges[0], edges[1])
    dist = v[:, 0, :] @ normal
    rad = half * np.abs(normal).sum()
    ok &= np.abs(dist) <= rad

    for e in range(3):
        for ax in range(3):
            axis = np.cross(_EYE[ax], edges[e])
            rad = half * np.abs(axis).sum()
            if rad == 0.0:
                continue
            proj = v @ axis
            ok &= (proj.min(axis=1) <= rad) & (proj.max(axis=1) >= -rad)
    return ok


def _mark_surface(corners_all: np.ndarray, resolution: int) -> np.ndarray:
    h = 1.0 / resolution
    half = h / 2.0
    occ = np.zeros((resolution,) * 3, dtype=bool)
    for tri in corners_all:
        lo = tri.min(axis=0)
        hi = tri.max(axis=0)
        ranges = []
        for ax in range(3):
            a = _cell_of(lo[ax], resolution)
            b = _cell_of(hi[ax], resolution)
            ranges.append((a, b))
        (i0, i1), (j0, j1), (k0, k1) = ranges
        ii, jj, kk = np.meshgrid(
            np.arange(i0, i1 + 1),
            np.arange(j0, j1 + 1),
            np.arange(k0, k1 + 1),
            indexing="ij",
        )
        idx = np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1)
        centers = ORIGIN + (idx + 0.5) * h
        hit = _sat_triangle_boxes(tri, centers, half)
        sub = occ[i0 : i1 + 1, j0 : j1 + 1, k0 : k1 + 1]
        occ[i0 : i1 + 1, j0 : j1 + 1, k0 : k1 + 1] = sub | hit.reshape(sub.shape)
    return occ


def _nudged_sign(e: np.ndarray, du: float, dv: float) -> np.ndarray:
    """Sign of an edge function after the (+eps, +eps^2) ray nudge breaks ties."""
    if dv != 0.0:
        tie = -np.sign(dv)
    else:
        tie = np.sign(du)
    s = np.sign(e)
    return np.where(s == 0.0, tie, s)


def _parity_along_axis(corners_all: np.ndarray, resolution: int, axis: int) -> np.ndarray:
    """Boolean inside-mask for all voxel centers from +axis ray crossings."""
    r = resolution
    h = 1.0 / r
    u = (axis + 1) % 3
    v = (axis + 2) % 3
    # flip counts as a difference array over the axis dimension
    diff = np.zeros((r, r, r + 1), dtype=np.int64)
    for tri in corners_all:
        pu = tri[:, u]
        pv = tri[:, v]
        pax = tri[:, axis]
        area2 = (pu[1] - pu[0]) * (pv[2] - pv[0]) - (pv[1] - pv[0]) * (pu[2] - pu[0])
        if area2 == 0.0:
            continue  # projects to a segment; rays along this axis graze it
        mu_lo = int(max(np.ceil((pu.min() - ORIGIN) / h - 0.5), 0))
        mu_hi = int(min(np.floor((pu.max() - ORIGIN) / h - 0.5), r - 1))
        mv_lo = int(max(np.ceil((pv.min() - ORIGIN) / h - 0.5), 0))
        mv_hi = int(min(np.floor((pv.max() - ORIGIN) / h - 0.5), r - 1))
        if mu_lo > mu_hi or mv_lo > mv_hi:
            continue
        cu = ORIGIN + (np.arange(mu_lo, mu_hi + 1) + 0.5) * h
        cv = ORIGIN + (np.arange(mv_lo, mv_hi + 1) + 0.5) * h
        gu, gv = np.meshgrid(cu, cv, indexing="ij")

        def edge(i0, i1):
            return (pu[i1] - pu[i0]) * (gv - pv[i0]) - (pv[i1] - pv[i0]) * (gu - pu[i0])

        e01 = edge(0, 1)
        e12 = edge(1, 2)
        e20 = edge(2, 0)
        s01 = _nudged_sign(e01, pu[1] - pu[0], pv[1] - pv[0])
        s12 = _nudged_sign(e12, pu[2] - pu[1], pv[2] - pv[1])
        s20 = _nudged_sign(e20, pu[0] - pu[2], pv[0] - pv[2])
        inside = (s01 == s12) & (s12 == s20)
        if not inside.any():
            continue
        t = (e12 * pax[0] + e20 * pax[1] + e01 * pax[2]) / area2
        # number of centers strictly below the crossing along the ray axis
        flips = np.clip(np.ceil((t - ORIGIN) / h - 0.5), 0, r).astype(np.int64)
        mu_idx, mv_idx = np.nonzero(inside)
        mu_idx = mu_idx + mu_lo
        mv_idx = mv_idx + mv_lo
        np.add.at(diff, (mu_idx, mv_idx, np.zeros(len(mu_idx), dtype=np.int64)), 1)
        np.add.at(diff, (mu_idx, mv_idx, flips[inside]), -1)
    counts = diff.cumsum(axis=2)[:, :, :r]
    parity = (counts & 1).astype(bool)
    # current dims are (u, v, axis); put them back in (i, j, k) order
    return np.moveaxis(parity, [0, 1, 2], [u, v, axis])


def voxelize(mesh: TriangleMesh, resolution: int, fill: str = FILL_SURFACE) -> VoxelGrid:
    if resolution < 2:
        raise ArgumentError(f"resolution must be at least 2, got {resolution}")
    if fill not in (FILL_SURFACE, FILL_SOLID):
        raise ArgumentError(f"fill must be 'surface' or 'solid', got {fill!r}")
    if not len(mesh.triangles):
        raise EmptyMeshError("cannot voxelize a mesh with no triangles")
    corners = mesh.triangle_corners()
    occ = _mark_surface(corners, resolution)
    if fill == FILL_SOLID:
        votes = [_parity_along_axis(corners, resolution, ax) for ax in range(3)]
        agree = (votes[0] == votes[1]) & (votes[1] == votes[2])
        split = int((~agree).sum())
        total = resolution**3
        if split > 0.005 * total:
            raise WatertightError(
                f"parity votes disagree on {split} of {total} voxels "
                f"({split / total:.2%}); mesh is not watertight"
            )
        majority = (
            votes[0].astype(np.int8) + votes[1].astype(np.int8) + votes[2].astype(np.int8)
        ) >= 2
        occ = occ | majority
    return VoxelGrid(data=occ.astype(np.uint8), value_kind=KIND_OCCUPANCY)
