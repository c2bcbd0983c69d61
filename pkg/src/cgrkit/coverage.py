"""Geometry coverage analysis.

Local geometries are surface patches cropped by a grasp-sized box around
antipodally graspable poses, expressed in the box frame and resampled to a
fixed point count. A test patch is "covered" when some training patch lies
within a chamfer-distance threshold (default 1 mm).

Direction presets are nested (sparse directions are a strided subset of the
dense ones), so denser sampling provably produces a superset patch pool.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .cgr import CgrGridParams, antipodal_rep, compute_cgrs
from .geometry import (
    RigidTransform,
    TriangleMesh,
    fibonacci_sphere,
    frame_from_z,
    rotation_z,
    sample_surface_points,
)

MASTER_DIRECTIONS = 300  # master spiral; presets take strided subsets
MASTER_INPLANE = 12  # master in-plane angle count; presets take strided subsets

DEFAULT_BOX_DIMS = (0.04, 0.04, 0.08)  # closing (x), width (y), approach (z)


class CoverageError(ValueError):
    pass


@dataclass(frozen=True)
class SamplingParams:
    approach_directions: int = 100  # V
    inplane_angles: int = 12  # A
    box_dims: tuple = DEFAULT_BOX_DIMS
    points_per_patch: int = 512
    grasp_point_resolution: float = 0.03
    surface_samples: int = 20000

    def __post_init__(self):
        if self.approach_directions < 1 or self.inplane_angles < 1:
            raise CoverageError("V and A must be positive")
        if self.points_per_patch < 1:
            raise CoverageError("points_per_patch must be positive")
        if any(d <= 0 for d in self.box_dims) or len(self.box_dims) != 3:
            raise CoverageError("box_dims must be three positive lengths")
        if MASTER_DIRECTIONS % self.approach_directions != 0:
            raise CoverageError(
                f"approach_directions must divide {MASTER_DIRECTIONS} so presets nest"
            )
        if MASTER_INPLANE % self.inplane_angles != 0:
            raise CoverageError(
                f"inplane_angles must divide {MASTER_INPLANE} so presets nest"
            )


def dense_params(**kw) -> SamplingParams:
    return SamplingParams(approach_directions=100, inplane_angles=12, **kw)


def sparse_params(**kw) -> SamplingParams:
    return SamplingParams(approach_directions=50, inplane_angles=6, **kw)


@dataclass
class LocalGeometry:
    points: np.ndarray  # (points_per_patch, 3), box frame
    source_object: str
    source_pose: RigidTransform

    _tree: cKDTree = None

    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.points)
        return self._tree


def preset_directions(v: int) -> np.ndarray:
    stride = MASTER_DIRECTIONS // v
    return fibonacci_sphere(MASTER_DIRECTIONS)[::stride]


def _grasp_points(mesh: TriangleMesh, params: SamplingParams, seed: int) -> np.ndarray:
    """Voxel-downsampled surface samples: one mean point per occupied cell."""
    cloud = sample_surface_points(mesh, params.surface_samples, seed)
    res = params.grasp_point_resolution
    cells = np.floor(cloud.points / res).astype(np.int64)
    sums: dict = {}
    counts: dict = {}
    for cell, p in zip(map(tuple, cells), cloud.points):
        if cell in sums:
            sums[cell] += p
            counts[cell] += 1
        else:
            sums[cell] = p.copy()
            counts[cell] = 1
    return np.array([sums[c] / counts[c] for c in sorted(sums)])


def sample_local_geometries(
    obj: TriangleMesh,
    params: SamplingParams | None = None,
    seed: int = 0,
    object_id: str = "",
) -> list[LocalGeometry]:
    """Patches around antipodally graspable poses.

    A pose is kept when a single-section CGR at the grasp point has a
    positive antipodal score for the pose's in-plane angle.
    """
    params = params or SamplingParams()
    surface = sample_surface_points(obj, params.surface_samples, seed)
    if len(surface) == 0:
        raise CoverageError("empty object")
    grasp_points = _grasp_points(obj, params, seed)
    dirs = preset_directions(params.approach_directions)
    bx, by, bz = params.box_dims
    half = np.array([bx / 2.0, by / 2.0, bz / 2.0])
    # single section at half the box depth; reach bounded by the box
    grid = CgrGridParams(
        n_angles=max(4, 2 * params.inplane_angles),
        n_sections=1,
        section_depths=(bz / 2.0,),
        d_max=float(np.linalg.norm(half)),
    )
    frames = [
        RigidTransform(frame_from_z(d), p) for p in grasp_points for d in dirs
    ]
    cgrs = compute_cgrs(obj, frames, grid)
    patches: list[LocalGeometry] = []
    angle_stride = grid.n_angles // 2 // params.inplane_angles
    dir_stride = MASTER_DIRECTIONS // params.approach_directions
    master_angle_stride = MASTER_INPLANE // params.inplane_angles
    for k, cgr in enumerate(cgrs):
        point_idx, dir_idx = divmod(k, len(dirs))
        rep = antipodal_rep(cgr)
        for a in range(params.inplane_angles):
            idx = a * angle_stride
            if rep.score[0, idx] <= 0.0:
                continue
            alpha = 2 * np.pi * idx / grid.n_angles
            R_box = cgr.frame.rotation @ rotation_z(alpha)
            box_tf = RigidTransform(R_box, cgr.frame.translation)
            local = box_tf.inverse().apply(surface.points)
            inside = np.all(np.abs(local - [0.0, 0.0, half[2]]) <= half, axis=1)
            pts = local[inside]
            if len(pts) == 0:
                continue
            # per-patch rng keyed on master-grid indices: the same pose
            # yields an identical patch under any preset, so denser presets
            # produce strict supersets of sparser ones
            rng = np.random.default_rng(
                (seed, point_idx, dir_idx * dir_stride, a * master_angle_stride)
            )
            sel = rng.integers(0, len(pts), size=params.points_per_patch)
            patches.append(
                LocalGeometry(pts[sel], object_id, box_tf)
            )
    return patches


def is_covered(
    test_patch: LocalGeometry, training_pool: list[LocalGeometry], tau: float = 0.001
) -> bool:
    """True iff some pool patch is within chamfer distance tau."""
    if not training_pool:
        raise CoverageError("empty pool")
    if tau <= 0:
        raise CoverageError("tau must be positive")
    return min_chamfer(test_patch, training_pool, stop_below=tau) < tau


def min_chamfer(
    test_patch: LocalGeometry, pool: list[LocalGeometry], stop_below: float | None = None
) -> float:
    best = np.inf
    t_tree = test_patch.tree()
    for patch in pool:
        da, _ = patch.tree().query(test_patch.points)
        fwd = float(np.mean(da))
        if 0.5 * fwd >= best:  # symmetric chamfer >= fwd/2
            continue
        db, _ = t_tree.query(patch.points)
        d = 0.5 * (fwd + float(np.mean(db)))
        if d < best:
            best = d
            if stop_below is not None and best < stop_below:
                return best
    return best


@dataclass
class CoverageRow:
    object_id: str
    patch_count: int
    covered_count: int


def coverage_curve(
    train_objects: dict,
    test_objects: dict,
    train_params: SamplingParams | None = None,
    test_params: SamplingParams | None = None,
    tau: float = 0.001,
    seed: int = 0,
) -> list[CoverageRow]:
    """Covered-patch counts per test object, sorted ascending by count.

    train_objects / test_objects: mapping id -> TriangleMesh.
    """
    if not train_objects or not test_objects:
        raise CoverageError("train and test sets must be non-empty")
    train_params = train_params or dense_params()
    test_params = test_params or dense_params()
    pool: list[LocalGeometry] = []
    for oid in sorted(train_objects):
        pool.extend(sample_local_geometries(train_objects[oid], train_params, seed, oid))
    if not pool:
        raise CoverageError("training pool is empty")
    rows = []
    for oid in sorted(test_objects):
        patches = sample_local_geometries(test_objects[oid], test_params, seed, oid)
        covered = sum(1 for p in patches if is_covered(p, pool, tau))
        rows.append(CoverageRow(oid, len(patches), covered))
    rows.sort(key=lambda r: (r.covered_count, r.object_id))
    return rows


def write_coverage_csv(rows: list[CoverageRow], path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["test_object_id", "patch_count", "covered_count"])
        for r in rows:
            writer.writerow([r.object_id, r.patch_count, r.covered_count])
