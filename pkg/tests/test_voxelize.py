"""Voxelization tests: surface marking, solid fill, watertightness."""

import numpy as np
import pytest

from voxelform.errors import ArgumentError, EmptyMeshError, WatertightError
from voxelform.mesh import TriangleMesh, standardize
from voxelform.voxel import write_voxel_file
from voxelform.voxelize import FILL_SOLID, FILL_SURFACE, voxelize

from oracles import box_mesh, centers_in_box_oracle


def _standardized_cube():
    v, t = box_mesh((0, 0, 0), (1, 1, 1))
    mesh, _ = standardize(TriangleMesh(v, t))
    return mesh


def _box_trimesh(lo, hi):
    v, t = box_mesh(lo, hi)
    return TriangleMesh(v, t)


def test_unit_cube_solid_res8_fully_occupied():
    grid = voxelize(_standardized_cube(), 8, FILL_SOLID)
    assert grid.occupied_count() == 512


def test_unit_cube_surface_res8_shell_only():
    grid = voxelize(_standardized_cube(), 8, FILL_SURFACE)
    assert grid.occupied_count() == 8**3 - 6**3  # 296


def test_half_domain_box_res4_half_occupied():
    # box covering x in [-0.5, 0], full extent in y and z
    mesh = _box_trimesh((-0.5, -0.5, -0.5), (0.0, 0.5, 0.5))
    grid = voxelize(mesh, 4, FILL_SOLID)
    assert grid.occupied_count() == 32
    occupied = grid.data.astype(bool)
    # exactly the two lower-x layers: cells whose closed cell box meets the
    # solid, since the x = 0 face lies on the boundary owned by layer 1
    assert occupied[:2].all() and not occupied[2:].any()
    # every center strictly inside the open box is occupied
    centers = centers_in_box_oracle(4, (-0.5, -0.5, -0.5), (0.0, 0.5, 0.5))
    assert occupied[centers].all()


def test_random_boxes_match_interval_oracle():
    """Solid fill equals (surface oracle | strict-interior-centers oracle).

    Boxes are drawn in generic position (faces never on a cell boundary),
    where closed/half-open ownership conventions cannot matter, so the
    oracle can use plain interval arithmetic.
    """
    rng = np.random.default_rng(21)
    res = 8
    for trial in range(12):
        lo = rng.uniform(-0.45, 0.05, size=3)
        hi = lo + rng.uniform(0.2, 0.42, size=3)
        mesh = _box_trimesh(lo, hi)
        surface = voxelize(mesh, res, FILL_SURFACE).data.astype(bool)
        solid = voxelize(mesh, res, FILL_SOLID).data.astype(bool)

        edges = np.linspace(-0.5, 0.5, res + 1)
        surf_oracle = np.zeros((res, res, res), dtype=bool)
        for i in range(res):
            for j in range(res):
                for k in range(res):
                    c_lo = np.array([edges[i], edges[j], edges[k]])
                    c_hi = np.array([edges[i + 1], edges[j + 1], edges[k + 1]])
                    overlaps = bool(
                        (np.maximum(c_lo, lo) <= np.minimum(c_hi, hi)).all()
                    )
                    strictly_inside = bool((lo < c_lo).all() and (c_hi < hi).all())
                    surf_oracle[i, j, k] = overlaps and not strictly_inside
        centers = centers_in_box_oracle(res, lo, hi)
        assert np.array_equal(surface, surf_oracle), f"surface trial {trial}"
        assert np.array_equal(solid, surf_oracle | centers), f"solid trial {trial}"


def test_tetrahedron_solid_matches_center_oracle():
    v = np.array([
        [-0.40, -0.40, -0.40],
        [0.45, -0.35, -0.30],
        [-0.30, 0.45, -0.35],
        [-0.35, -0.30, 0.45],
    ])
    t = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    mesh = TriangleMesh(v, t)
    res = 9
    surface = voxelize(mesh, res, FILL_SURFACE).data.astype(bool)
    solid = voxelize(mesh, res, FILL_SOLID).data.astype(bool)

    # point-in-tetrahedron by barycentric coordinates
    mat = np.column_stack([v[1] - v[0], v[2] - v[0], v[3] - v[0]])
    inv = np.linalg.inv(mat)
    inside = np.zeros((res, res, res), dtype=bool)
    h = 1.0 / res
    for i in range(res):
        for j in range(res):
            for k in range(res):
                c = np.array([-0.5 + (i + 0.5) * h,
                              -0.5 + (j + 0.5) * h,
                              -0.5 + (k + 0.5) * h])
                bary = inv @ (c - v[0])
                if (bary > 1e-12).all() and bary.sum() < 1.0 - 1e-12:
                    inside[i, j, k] = True
    assert np.array_equal(solid, surface | inside)


def test_solid_superset_of_surface():
    rng = np.random.default_rng(33)
    for _ in range(6):
        lo = rng.uniform(-0.45, 0.0, size=3)
        hi = lo + rng.uniform(0.15, 0.4, size=3)
        mesh = _box_trimesh(lo, hi)
        surface = voxelize(mesh, 7, FILL_SURFACE).data
        solid = voxelize(mesh, 7, FILL_SOLID).data
        assert (solid >= surface).all()
        assert solid.sum() >= surface.sum()


def test_volume_fraction_convergence():
    # half-volume box: x in [-0.25, 0.25], full in y and z
    mesh = _box_trimesh((-0.25, -0.5, -0.5), (0.25, 0.5, 0.5))
    for res in (8, 16, 32):
        grid = voxelize(mesh, res, FILL_SOLID)
        assert abs(grid.occupancy_fraction() - 0.5) <= 2.0 / res, res


def test_surface_marks_every_sampled_triangle_cell():
    """Cells containing points of a triangle must be marked (sampling oracle)."""
    v = np.array([[-0.42, -0.38, -0.11], [0.47, -0.05, 0.22], [-0.1, 0.44, 0.38]])
    t = np.array([[0, 1, 2]])
    mesh = TriangleMesh(v, t)
    res = 10
    surface = voxelize(mesh, res, FILL_SURFACE).data.astype(bool)
    rng = np.random.default_rng(3)
    for _ in range(4000):
        a, b = rng.random(2)
        if a + b > 1:
            a, b = 1 - a, 1 - b
        p = v[0] + a * (v[1] - v[0]) + b * (v[2] - v[0])
        cell = np.clip(np.ceil((p + 0.5) * res).astype(int) - 1, 0, res - 1)
        assert surface[tuple(cell)], p


def test_voxelize_deterministic():
    mesh = _standardized_cube()
    a = write_voxel_file(voxelize(mesh, 8, FILL_SOLID))
    b = write_voxel_file(voxelize(mesh, 8, FILL_SOLID))
    assert a == b


def test_open_mesh_solid_raises_watertight_error():
    v, t = box_mesh((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5))
    open_tris = t[:-2]  # drop the two x = +0.5 triangles
    mesh = TriangleMesh(v, open_tris)
    with pytest.raises(WatertightError) as err:
        voxelize(mesh, 8, FILL_SOLID)
    assert "voxel" in str(err.value) or "%" in str(err.value)


def test_open_mesh_surface_mode_is_fine():
    v = np.array([[-0.4, -0.4, 0.0], [0.4, -0.4, 0.0], [0.0, 0.4, 0.0]])
    mesh = TriangleMesh(v, np.array([[0, 1, 2]]))
    grid = voxelize(mesh, 6, FILL_SURFACE)
    assert grid.occupied_count() > 0


def test_resolution_lower_bound():
    with pytest.raises(ArgumentError):
        voxelize(_standardized_cube(), 1, FILL_SOLID)
    grid = voxelize(_standardized_cube(), 2, FILL_SOLID)
    assert grid.dims == (2, 2, 2)


def test_unknown_fill_mode():
    with pytest.raises(ArgumentError):
        voxelize(_standardized_cube(), 4, "wireframe")


def test_empty_mesh_rejected():
    mesh = TriangleMesh(np.zeros((3, 3)), np.zeros((0, 3), dtype=np.int64))
    with pytest.raises(EmptyMeshError):
        voxelize(mesh, 4, FILL_SURFACE)
