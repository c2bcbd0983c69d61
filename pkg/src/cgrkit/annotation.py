"""Scene composition and dense CGR annotation.

Scenes are posed object-mesh instances above a table plane. Annotation
voxelizes each object surface, spawns approach frames on every surface
voxel, computes CGRs against the object's complete mesh, projects them into
the scene and invalidates any whose backward approach cylinder collides
with the rest of the scene or the table.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .cgr import Cgr, CgrGridParams, compute_cgrs
from .geometry import (
    GeometryError,
    PointCloud,
    RigidTransform,
    TriangleMesh,
    fibonacci_sphere,
    frame_from_z,
    load_mesh,
    merge_meshes,
    sample_surface_points,
    voxelize_mesh,
)

DATASET_MAGIC = b"CGRKDS1\0"


class AnnotationError(ValueError):
    pass


@dataclass
class SceneInstance:
    mesh_id: str
    pose: RigidTransform


@dataclass
class Scene:
    instances: list[SceneInstance]
    table_point: np.ndarray
    table_normal: np.ndarray
    meshes: dict  # mesh_id -> TriangleMesh (object frame)

    def __post_init__(self):
        self.table_point = np.asarray(self.table_point, dtype=float).reshape(3)
        n = np.asarray(self.table_normal, dtype=float).reshape(3)
        self.table_normal = n / np.linalg.norm(n)
        for inst in self.instances:
            if inst.mesh_id not in self.meshes:
                raise AnnotationError(f"unresolved mesh id '{inst.mesh_id}'")

    def instance_mesh(self, index: int) -> TriangleMesh:
        inst = self.instances[index]
        return self.meshes[inst.mesh_id].transformed(inst.pose)

    def merged_mesh(self) -> TriangleMesh:
        return merge_meshes([self.instance_mesh(i) for i in range(len(self.instances))])

    def surface_cloud(self, count_per_instance: int = 2000, seed: int = 0) -> PointCloud:
        clouds = []
        for i in range(len(self.instances)):
            clouds.append(sample_surface_points(self.instance_mesh(i), count_per_instance, seed + i))
        if not clouds:
            return PointCloud(np.zeros((0, 3)))
        return PointCloud(
            np.vstack([c.points for c in clouds]),
            np.vstack([c.normals for c in clouds]),
        )

    def without_instance(self, index: int) -> "Scene":
        rest = [inst for i, inst in enumerate(self.instances) if i != index]
        return Scene(rest, self.table_point, self.table_normal, self.meshes)


def _quat_to_rotation(w, x, y, z) -> np.ndarray:
    q = np.array([w, x, y, z], dtype=float)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def compose_scene(path) -> Scene:
    """Parse a .scene file:

        mesh <id> <relative mesh path>
        instance <mesh id> <qw qx qy qz> <tx ty tz>
        table <px py pz> <nx ny nz>
    """
    base = os.path.dirname(os.path.abspath(path))
    meshes: dict = {}
    instances: list[SceneInstance] = []
    table_point = np.zeros(3)
    table_normal = np.array([0.0, 0.0, 1.0])
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                if parts[0] == "mesh":
                    mesh_path = os.path.join(base, parts[2])
                    if not os.path.exists(mesh_path):
                        raise AnnotationError(f"mesh file not found for '{parts[1]}': {mesh_path}")
                    meshes[parts[1]] = load_mesh(mesh_path, watertight=True)
                elif parts[0] == "instance":
                    vals = [float(x) for x in parts[2:9]]
                    pose = RigidTransform(_quat_to_rotation(*vals[:4]), vals[4:7])
                    if parts[1] not in meshes:
                        raise AnnotationError(f"instance references unknown mesh '{parts[1]}'")
                    instances.append(SceneInstance(parts[1], pose))
                elif parts[0] == "table":
                    vals = [float(x) for x in parts[1:7]]
                    table_point = np.array(vals[:3])
                    table_normal = np.array(vals[3:6])
                else:
                    raise AnnotationError(f"unknown directive '{parts[0]}'")
            except (ValueError, IndexError) as exc:
                raise AnnotationError(f"{path}:{lineno}: parse error") from exc
    return Scene(instances, table_point, table_normal, meshes)


@dataclass(frozen=True)
class AnnotationParams:
    surface_resolution: float = 0.005
    approach_directions: int = 300
    cylinder_radius: float = 0.06
    cylinder_length: float = 0.25
    grid: CgrGridParams = field(default_factory=CgrGridParams)

    def __post_init__(self):
        for name in ("surface_resolution", "cylinder_radius", "cylinder_length"):
            if getattr(self, name) <= 0:
                raise AnnotationError(f"{name} must be positive")
        if self.approach_directions < 1:
            raise AnnotationError("approach_directions must be positive")


@dataclass
class CgrRecord:
    cgr: Cgr
    scene_id: int
    valid: bool
    instance_index: int = -1  # runtime-only convenience; not serialized


@dataclass
class CgrDataset:
    records: list[CgrRecord]
    params: AnnotationParams

    def valid_records(self) -> list[CgrRecord]:
        return [r for r in self.records if r.valid]


def surface_voxel_points(mesh: TriangleMesh, resolution: float, samples_per_area: int = 200_000) -> np.ndarray:
    """One representative surface point per occupied surface voxel: the mean
    of dense surface samples binned to the voxel grid, in occupancy order."""
    grid = voxelize_mesh(mesh, resolution)
    if not grid.occupied:
        raise AnnotationError("empty surface")
    n_samples = max(1000, min(samples_per_area, 64 * len(grid.occupied)))
    cloud = sample_surface_points(mesh, n_samples, seed=0)
    cells = np.floor((cloud.points - grid.origin) / resolution).astype(np.int64)
    sums: dict = {}
    counts: dict = {}
    for cell, p in zip(map(tuple, cells), cloud.points):
        if cell in sums:
            sums[cell] += p
            counts[cell] += 1
        else:
            sums[cell] = p.copy()
            counts[cell] = 1
    points = []
    for cell in sorted(grid.occupied):
        if cell in sums:
            points.append(sums[cell] / counts[cell])
        else:
            points.append(grid.origin + (np.array(cell, dtype=float) + 0.5) * resolution)
    return np.array(points)


def candidate_frames(obj: TriangleMesh, params: AnnotationParams, seed: int = 0) -> list[RigidTransform]:
    """Approach frames: surface-voxel representative points crossed with a
    deterministic spiral of approach directions (frame z-axis)."""
    points = surface_voxel_points(obj, params.surface_resolution)
    dirs = fibonacci_sphere(params.approach_directions)
    frames = []
    for p in points:
        for d in dirs:
            frames.append(RigidTransform(frame_from_z(d), p))
    return frames


def approach_collision_filter(
    frame: RigidTransform,
    scene: Scene,
    radius: float,
    length: float,
    scene_points: np.ndarray | None = None,
    ignore_instance: int = -1,
    clearance: float = 0.0,
) -> bool:
    """True iff the cylinder extending backward (-z) from the frame origin
    hits sampled scene surfaces or the table halfspace."""
    if radius <= 0 or length <= 0:
        raise AnnotationError("radius and length must be positive")
    axis = -frame.rotation[:, 2]
    origin = frame.translation + clearance * frame.rotation[:, 2]
    # table: does any point of the cylinder fall below the table plane?
    n = scene.table_normal
    # most-negative plane offset over the cylinder: center line end plus radius slack
    h_origin = np.dot(origin - scene.table_point, n)
    h_end = np.dot(origin + length * axis - scene.table_point, n)
    axial = abs(np.dot(axis, n))
    radial_slack = radius * np.sqrt(max(0.0, 1.0 - axial * axial))
    if min(h_origin, h_end) - radial_slack < 0.0:
        return True
    if scene_points is None:
        clouds = []
        for i in range(len(scene.instances)):
            if i == ignore_instance:
                continue
            clouds.append(sample_surface_points(scene.instance_mesh(i), 2000, seed=1 + i).points)
        scene_points = np.vstack(clouds) if clouds else np.zeros((0, 3))
    if len(scene_points):
        rel = scene_points - origin
        along = rel @ axis
        in_span = (along >= 0.0) & (along <= length)
        if in_span.any():
            perp = rel[in_span] - np.outer(along[in_span], axis)
            if (np.einsum("ij,ij->i", perp, perp) <= radius * radius).any():
                return True
    return False


def annotate_scene(
    scene: Scene,
    params: AnnotationParams | None = None,
    scene_id: int = 0,
    seed: int = 0,
    cache: dict | None = None,
) -> CgrDataset:
    """Dense CGR annotation: per instance, frames on the object surface,
    CGRs against the object's own complete mesh, projected to world, then
    cylinder-filtered against the whole scene.

    `cache` (mesh_id -> object-frame CGR list) skips recomputation when the
    same object appears in many scenes; grids are pose-independent.
    """
    params = params or AnnotationParams()
    records: list[CgrRecord] = []
    scene_points_per_instance = [
        sample_surface_points(scene.instance_mesh(i), 2000, seed=1 + i).points
        for i in range(len(scene.instances))
    ]
    for idx, inst in enumerate(scene.instances):
        obj = scene.meshes[inst.mesh_id]
        if cache is not None and inst.mesh_id in cache:
            cgrs_obj = cache[inst.mesh_id]
        else:
            frames_obj = candidate_frames(obj, params, seed)
            cgrs_obj = compute_cgrs(obj, frames_obj, params.grid)
            if cache is not None:
                cache[inst.mesh_id] = cgrs_obj
        others = [pts for i, pts in enumerate(scene_points_per_instance) if i != idx]
        other_points = np.vstack(others) if others else np.zeros((0, 3))
        for cgr in cgrs_obj:
            world_frame = inst.pose.compose(cgr.frame)
            colliding = approach_collision_filter(
                world_frame,
                scene,
                params.cylinder_radius,
                params.cylinder_length,
                scene_points=other_points,
                clearance=0.0,
            )
            world_cgr = Cgr(world_frame, cgr.grid.copy(), params.grid)
            records.append(CgrRecord(world_cgr, scene_id, valid=not colliding, instance_index=idx))
    return CgrDataset(records, params)


# ---------------------------------------------------------------------------
# Dataset persistence


def _pack_params(params: AnnotationParams) -> bytes:
    g = params.grid
    out = struct.pack("<IIff", g.n_angles, g.n_sections, g.d_max, g.theta_sentinel)
    out += np.asarray(g.section_depths, dtype="<f4").tobytes()
    out += struct.pack(
        "<fIff",
        params.surface_resolution,
        params.approach_directions,
        params.cylinder_radius,
        params.cylinder_length,
    )
    return out


def _unpack_params(f) -> AnnotationParams:
    n, m, d_max, sentinel = struct.unpack("<IIff", f.read(16))
    depths = np.frombuffer(f.read(4 * m), dtype="<f4").astype(float)
    res, v, rad, length = struct.unpack("<fIff", f.read(16))
    grid = CgrGridParams(n, m, tuple(depths), float(d_max), float(sentinel))
    return AnnotationParams(float(res), int(v), float(rad), float(length), grid)


def write_dataset(ds: CgrDataset, path) -> None:
    """Invalidated records are stored with all-zero grids."""
    with open(path, "wb") as f:
        f.write(DATASET_MAGIC)
        f.write(_pack_params(ds.params))
        f.write(struct.pack("<Q", len(ds.records)))
        zeros = np.zeros(ds.params.grid.flat_size, dtype="<f4").tobytes()
        for rec in ds.records:
            blob = rec.cgr.to_bytes()
            if rec.valid:
                f.write(blob)
            else:
                f.write(blob[:48])
                f.write(zeros)
            f.write(struct.pack("<IB", rec.scene_id, 1 if rec.valid else 0))


def read_dataset(path) -> CgrDataset:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != DATASET_MAGIC:
            raise AnnotationError("bad magic")
        params = _unpack_params(f)
        (count,) = struct.unpack("<Q", f.read(8))
        rec_size = Cgr.record_size(params.grid)
        records = []
        for _ in range(count):
            blob = f.read(rec_size)
            tail = f.read(5)
            if len(blob) < rec_size or len(tail) < 5:
                raise AnnotationError("truncated file")
            scene_id, valid = struct.unpack("<IB", tail)
            cgr = Cgr.from_bytes(blob, params.grid)
            records.append(CgrRecord(cgr, scene_id, bool(valid)))
        return CgrDataset(records, params)
