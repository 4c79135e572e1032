"""Seeded procedural voxel forms for two building-massing families.

The machine family is a regular parametric massing: a centered rectangular
footprint sized by a fill coefficient, extruded as a stack of identical
units, optionally stepped or jogged per unit, sheared sideways by an integer
voxel offset per level, with a rectangular service core carved out of the
middle.  The human family is an articulated composite: a union of several
boxes, minus full-depth shafts and courts, with progressive top setbacks,
constrained to stay one 6-connected component.

Both generators are pure functions of (form spec, resolution) with all
randomness drawn from the seed field of the form spec, so dataset builds
are reproducible byte for byte.  The two families differ strongly in per-level footprint
variance, which is what makes the classification task learnable at small
scale.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .classes import LABEL_HUMAN, LABEL_MACHINE
from .errors import ArgumentError, EmptyFormError, FormatError, GenerationError
from .fileio import atomic_write_text
from .voxel import VoxelGrid, load_voxel_file, save_voxel_file

FACADE_FLAT = "flat"
FACADE_STEPPED = "stepped"
FACADE_SHEARED = "sheared"

_CONNECT_RETRIES = 32


def _iround(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass
class MachineFormSpec:
    unit_count: int
    fill_coefficient: float
    facade_type: str
    core_fraction: float
    rotation_shear_deg: float
    seed: int

    def __post_init__(self):
        if self.unit_count < 1:
            raise ArgumentError("unit_count must be >= 1")
        if not (0 < self.fill_coefficient <= 1):
            raise ArgumentError("fill_coefficient must be in (0, 1]")
        if self.facade_type not in (FACADE_FLAT, FACADE_STEPPED, FACADE_SHEARED):
            raise ArgumentError(f"unknown facade_type {self.facade_type!r}")
        if not (0 <= self.core_fraction <= 0.5):
            raise ArgumentError("core_fraction must be in [0, 0.5]")
        if not (-45 <= self.rotation_shear_deg <= 45):
            raise ArgumentError("rotation_shear_deg must be in [-45, 45]")


@dataclass
class HumanFormSpec:
    base_masses: int
    subtraction_count: int
    setback_levels: int
    asymmetry: float
    seed: int

    def __post_init__(self):
        if not (2 <= self.base_masses <= 6):
            raise ArgumentError("base_masses must be in [2, 6]")
        if self.subtraction_count < 0:
            raise ArgumentError("subtraction_count must be >= 0")
        if self.setback_levels < 0:
            raise ArgumentError("setback_levels must be >= 0")
        if not (0 <= self.asymmetry <= 1):
            raise ArgumentError("asymmetry must be in [0, 1]")


def _clipped_rect(plane: np.ndarray, j0: int, k0: int, wj: int, wk: int, value: bool):
    r = plane.shape[0]
    j1 = min(max(j0, 0), r)
    k1 = min(max(k0, 0), r)
    j2 = min(max(j0 + wj, 0), r)
    k2 = min(max(k0 + wk, 0), r)
    if j2 > j1 and k2 > k1:
        plane[j1:j2, k1:k2] = value


def gen_machine_form(spec: MachineFormSpec, resolution: int) -> VoxelGrid:
    if resolution < 2:
        raise ArgumentError("resolution must be at least 2")
    r = resolution
    rng = np.random.default_rng(spec.seed)
    slab_h = max(1, r // (spec.unit_count + 1))
    levels = min(r, slab_h * spec.unit_count)
    side = math.sqrt(spec.fill_coefficient) * r
    stretch = 1.0 + rng.uniform(-0.1, 0.1)
    wj = min(_iround(side * stretch), r)
    wk = min(_iround(side / stretch), r)
    if wj < 1 or wk < 1:
        raise EmptyFormError("machine-form parameters produced zero occupied voxels")
    core_wj = _iround(math.sqrt(spec.core_fraction) * wj)
    core_wk = _iround(math.sqrt(spec.core_fraction) * wk)
    drift = math.tan(math.radians(spec.rotation_shear_deg))
    jog_size = max(1, r // 16)
    grid = np.zeros((r, r, r), dtype=bool)
    for i in range(levels):
        unit = i // slab_h
        cur_wj, cur_wk = wj, wk
        if spec.facade_type == FACADE_STEPPED:
            cur_wj = max(2, wj - 2 * unit)
            cur_wk = max(2, wk - 2 * unit)
        jog = jog_size * (unit % 2) if spec.facade_type == FACADE_SHEARED else 0
        j0 = (r - cur_wj) // 2 + _iround(drift * i)
        k0 = (r - cur_wk) // 2 + jog
        plane = np.zeros((r, r), dtype=bool)
        _clipped_rect(plane, j0, k0, cur_wj, cur_wk, True)
        if core_wj > 0 and core_wk > 0:
            cj = j0 + (cur_wj - core_wj) // 2
            ck = k0 + (cur_wk - core_wk) // 2
            _clipped_rect(plane, cj, ck, core_wj, core_wk, False)
        grid[i] = plane
    if not grid.any():
        raise EmptyFormError("machine-form parameters produced zero occupied voxels")
    return VoxelGrid(data=grid.astype(np.uint8))


def _erode_plane(plane: np.ndarray) -> np.ndarray:
    out = plane.copy()
    out[1:] &= plane[:-1]
    out[:-1] &= plane[1:]
    out[:, 1:] &= plane[:, :-1]
    out[:, :-1] &= plane[:, 1:]
    out[0] = False
    out[-1] = False
    out[:, 0] = False
    out[:, -1] = False
    return out


def _connected_6(grid: np.ndarray) -> bool:
    total = int(grid.sum())
    if total == 0:
        return False
    seed_flat = int(np.flatnonzero(grid.ravel())[0])
    region = np.zeros_like(grid)
    region.ravel()[seed_flat] = True
    reach = 0
    while True:
        grown = region.copy()
        grown[1:] |= region[:-1]
        grown[:-1] |= region[1:]
        grown[:, 1:] |= region[:, :-1]
        grown[:, :-1] |= region[:, 1:]
        grown[:, :, 1:] |= region[:, :, :-1]
        grown[:, :, :-1] |= region[:, :, 1:]
        grown &= grid
        count = int(grown.sum())
        if count == reach:
            break
        reach = count
        region = grown
    return reach == total


def _sample_human_boxes(rng, spec: HumanFormSpec, r: int):
    """Draw additive mass boxes and full-depth cut boxes as (pos, size) pairs."""
    masses = []
    for b in range(spec.base_masses):
        size = rng.integers(max(2, r // 4), max(3, r // 2) + 1, size=3)
        centered = (r - size) // 2
        spread = np.maximum(1, (spec.asymmetry * (r - size) / 2).astype(np.int64) + 1)
        pos = np.clip(centered + rng.integers(-spread, spread + 1), 0, r - size)
        if b == 0:
            pos[0] = 0  # ground the first mass
        masses.append((pos.copy(), size.copy()))
    cuts = []
    for _ in range(spec.subtraction_count):
        axis = int(rng.integers(0, 3))
        size = rng.integers(max(1, r // 8), max(2, r // 4) + 1, size=3)
        pos = rng.integers(0, r - size + 1)
        size[axis] = r
        pos[axis] = 0
        cuts.append((pos.copy(), size.copy()))
    return masses, cuts


def _rasterize_human(r: int, masses, cuts, setback_levels: int) -> np.ndarray:
    grid = np.zeros((r, r, r), dtype=bool)
    for pos, size in masses:
        grid[pos[0]:pos[0] + size[0], pos[1]:pos[1] + size[1], pos[2]:pos[2] + size[2]] = True
    for pos, size in cuts:
        grid[pos[0]:pos[0] + size[0], pos[1]:pos[1] + size[1], pos[2]:pos[2] + size[2]] = False
    if setback_levels > 0 and grid.any():
        top = int(np.max(np.nonzero(grid.any(axis=(1, 2)))[0]))
        for t in range(setback_levels):
            level = top - setback_levels + 1 + t
            if level < 0 or level > top:
                continue
            plane = grid[level]
            for _ in range(t + 1):
                plane = _erode_plane(plane)
            grid[level] = plane
    return grid


def gen_human_form(spec: HumanFormSpec, resolution: int) -> VoxelGrid:
    if resolution < 4:
        raise ArgumentError("resolution must be at least 4")
    r = resolution
    for attempt in range(_CONNECT_RETRIES):
        rng = np.random.default_rng([spec.seed, attempt])
        masses, cuts = _sample_human_boxes(rng, spec, r)
        grid = _rasterize_human(r, masses, cuts, spec.setback_levels)
        if grid.any() and _connected_6(grid):
            return VoxelGrid(data=grid.astype(np.uint8))
    raise GenerationError(
        f"could not produce a connected form within {_CONNECT_RETRIES} attempts"
    )


def per_level_footprint_variance(grid: VoxelGrid) -> float:
    """Variance of the occupied-cell count per level, over occupied levels."""
    areas = grid.data.sum(axis=(1, 2)).astype(np.float64)
    areas = areas[areas > 0]
    if len(areas) == 0:
        return 0.0
    return float(areas.var())


@dataclass
class DatasetManifest:
    rows: list  # (relative path, label, split)
    root: str  # directory the paths resolve against

    def items(self, split: str):
        return [
            (os.path.join(self.root, path), label)
            for path, label, s in self.rows
            if s == split
        ]


def _sample_machine_spec(rng) -> MachineFormSpec:
    return MachineFormSpec(
        unit_count=int(rng.integers(2, 6)),
        fill_coefficient=float(rng.uniform(0.45, 0.85)),
        facade_type=(FACADE_FLAT, FACADE_STEPPED, FACADE_SHEARED)[int(rng.integers(0, 3))],
        core_fraction=float(rng.uniform(0.0, 0.25)),
        rotation_shear_deg=float(rng.uniform(-20.0, 20.0)),
        seed=int(rng.integers(0, 2**63)),
    )


def _sample_human_spec(rng) -> HumanFormSpec:
    return HumanFormSpec(
        base_masses=int(rng.integers(2, 7)),
        subtraction_count=int(rng.integers(1, 4)),
        setback_levels=int(rng.integers(0, 5)),
        asymmetry=float(rng.uniform(0.3, 1.0)),
        seed=int(rng.integers(0, 2**63)),
    )


def gen_dataset(train_per_class: int, test_per_class: int, resolution: int,
                master_seed: int, out_dir) -> DatasetManifest:
    if train_per_class < 1 or test_per_class < 1:
        raise ArgumentError("need at least one sample per class and split")
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(master_seed)
    rows = []
    for split, per_class in (("train", train_per_class), ("test", test_per_class)):
        for label in (LABEL_HUMAN, LABEL_MACHINE):
            for idx in range(per_class):
                if label == LABEL_MACHINE:
                    grid = gen_machine_form(_sample_machine_spec(rng), resolution)
                else:
                    grid = gen_human_form(_sample_human_spec(rng), resolution)
                name = f"{split}_{label}_{idx:04d}.vxg"
                save_voxel_file(grid, os.path.join(out_dir, name))
                rows.append((name, label, split))
    manifest = DatasetManifest(rows=rows, root=os.fspath(out_dir))
    write_manifest(manifest, os.path.join(out_dir, "manifest.tsv"))
    return manifest


def write_manifest(manifest: DatasetManifest, path) -> None:
    lines = [f"{p}\t{label}\t{split}" for p, label, split in manifest.rows]
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_manifest(path) -> DatasetManifest:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    rows = []
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise FormatError(f"manifest line {lineno}: expected 3 tab-separated fields")
        p, label, split = parts
        if label not in (LABEL_HUMAN, LABEL_MACHINE):
            raise FormatError(f"manifest line {lineno}: unknown label {label!r}")
        if split not in ("train", "val", "test"):
            raise FormatError(f"manifest line {lineno}: unknown split {split!r}")
        if p in seen:
            raise FormatError(f"manifest line {lineno}: duplicate path {p!r}")
        seen.add(p)
        rows.append((p, label, split))
    if not rows:
        raise FormatError("manifest has no rows")
    return DatasetManifest(rows=rows, root=os.path.dirname(os.path.abspath(path)))


def load_split_arrays(manifest: DatasetManifest, split: str):
    """Stack a split's grids and labels in manifest order."""
    items = manifest.items(split)
    if not items:
        raise ArgumentError(f"manifest has no rows for split {split!r}")
    grids = []
    labels = []
    for path, label in items:
        grids.append(load_voxel_file(path).data.astype(np.float64))
        labels.append(0 if label == LABEL_HUMAN else 1)
    return np.stack(grids), np.asarray(labels, dtype=np.int64)
