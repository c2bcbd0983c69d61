"""Geometric primitives: meshes, rigid transforms, ray casting, voxel grids,
surface sampling, virtual depth rendering and chamfer distance.

All lengths are meters. Everything here is pure: objects are immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

_EPS = 1e-12
RAY_T_MIN = 1e-9

POINTCLOUD_MAGIC = b"CGRKPC1\0"


class GeometryError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Rigid transforms


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) transform: x_world = R @ x_local + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-9):
            raise GeometryError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise GeometryError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def apply_vector(self, vectors: np.ndarray) -> np.ndarray:
        return np.asarray(vectors, dtype=float) @ self.rotation.T

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self ∘ other: apply `other` first, then `self`."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.rotation.T, -self.rotation.T @ self.translation)


def rotation_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def orthonormal_tangents(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic (u, v) with (u, v, n) right-handed orthonormal."""
    n = np.asarray(n, dtype=float)
    nn = np.linalg.norm(n)
    if nn < 1e-12:
        raise GeometryError("degenerate direction")
    n = n / nn
    ref = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(ref, n)
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    return u, v


def frame_from_z(z: np.ndarray) -> np.ndarray:
    """Rotation whose third column is z, with a deterministic in-plane choice."""
    u, v = orthonormal_tangents(z)
    z = np.asarray(z, dtype=float)
    z = z / np.linalg.norm(z)
    return np.column_stack([u, v, z])


def fibonacci_sphere(count: int) -> np.ndarray:
    """Deterministic spiral covering of the unit sphere, shape (count, 3)."""
    if count < 1:
        raise GeometryError("count must be positive")
    i = np.arange(count, dtype=float)
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    z = 1.0 - 2.0 * (i + 0.5) / count
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


# ---------------------------------------------------------------------------
# Point clouds


@dataclass
class PointCloud:
    points: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=float).reshape(-1, 3)
            if len(self.normals) != len(self.points):
                raise GeometryError("normals/points length mismatch")
            lens = np.linalg.norm(self.normals, axis=1)
            if len(lens) and np.max(np.abs(lens - 1.0)) > 1e-6:
                raise GeometryError("normals must be unit length")

    def __len__(self) -> int:
        return len(self.points)

    def transformed(self, tf: RigidTransform) -> "PointCloud":
        normals = tf.apply_vector(self.normals) if self.normals is not None else None
        return PointCloud(tf.apply(self.points), normals)

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(POINTCLOUD_MAGIC)
            f.write(struct.pack("<Q", len(self.points)))
            f.write(self.points.astype("<f4").tobytes())
            if self.normals is not None:
                f.write(b"\x01")
                f.write(self.normals.astype("<f4").tobytes())
            else:
                f.write(b"\x00")

    @staticmethod
    def load(path) -> "PointCloud":
        with open(path, "rb") as f:
            magic = f.read(8)
            if magic != POINTCLOUD_MAGIC:
                raise GeometryError("bad magic")
            (n,) = struct.unpack("<Q", f.read(8))
            pts = np.frombuffer(f.read(12 * n), dtype="<f4").reshape(n, 3)
            flag = f.read(1)
            normals = None
            if flag == b"\x01":
                normals = np.frombuffer(f.read(12 * n), dtype="<f4").reshape(n, 3)
                normals = normals.astype(float)
                lens = np.linalg.norm(normals, axis=1)
                lens[lens < 1e-12] = 1.0
                normals = normals / lens[:, None]
            return PointCloud(pts.astype(float), normals)


def chamfer_distance(a: PointCloud, b: PointCloud) -> float:
    """Symmetric chamfer: mean of the two directed mean-NN distances."""
    if len(a) == 0 or len(b) == 0:
        raise GeometryError("empty cloud")
    da, _ = cKDTree(b.points).query(a.points)
    db, _ = cKDTree(a.points).query(b.points)
    return 0.5 * (float(np.mean(da)) + float(np.mean(db)))


# ---------------------------------------------------------------------------
# Triangle meshes


def _triangle_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    n = np.cross(b - a, c - a)
    lens = np.linalg.norm(n, axis=1)
    safe = np.where(lens > _EPS, lens, 1.0)
    return n / safe[:, None]


class TriangleMesh:
    """Indexed triangle mesh. Normals are recomputed from winding order;
    any normals present in input files are ignored."""

    def __init__(self, vertices, triangles, watertight: bool = False):
        self.vertices = np.asarray(vertices, dtype=float).reshape(-1, 3)
        self.triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
        if len(self.triangles) and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise GeometryError("triangle index out of range")
        self.normals = _triangle_normals(self.vertices, self.triangles)
        self.watertight = watertight
        self._bvh = None
        # cached per-triangle corner arrays for vectorized intersection
        self._v0 = self.vertices[self.triangles[:, 0]] if len(self.triangles) else np.zeros((0, 3))
        e1 = self.vertices[self.triangles[:, 1]] - self._v0 if len(self.triangles) else np.zeros((0, 3))
        e2 = self.vertices[self.triangles[:, 2]] - self._v0 if len(self.triangles) else np.zeros((0, 3))
        self._e1, self._e2 = e1, e2

    def __len__(self) -> int:
        return len(self.triangles)

    def triangle_areas(self) -> np.ndarray:
        cross = np.cross(self._e1, self._e2)
        return 0.5 * np.linalg.norm(cross, axis=1)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if len(self.vertices) == 0:
            return np.zeros(3), np.zeros(3)
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def transformed(self, tf: RigidTransform) -> "TriangleMesh":
        return TriangleMesh(tf.apply(self.vertices), self.triangles, self.watertight)

    # -- ray casting ----------------------------------------------------

    def _ensure_bvh(self):
        if self._bvh is None and len(self.triangles):
            self._bvh = _Bvh(self)
        return self._bvh

    def ray_intersect(self, origin, direction, t_max: float):
        """Nearest intersection along a single ray.

        Returns (t, normal) or None. Hits with t <= RAY_T_MIN are ignored.
        """
        if t_max <= 0:
            raise GeometryError("t_max must be positive")
        origin = np.asarray(origin, dtype=float).reshape(3)
        direction = np.asarray(direction, dtype=float).reshape(3)
        bvh = self._ensure_bvh()
        if bvh is None:
            return None
        t, tri = bvh.intersect(origin, direction, t_max)
        if tri < 0:
            return None
        return t, self.normals[tri].copy()

    def ray_intersect_brute(self, origin, direction, t_max: float):
        """Exhaustive every-triangle reference path; same semantics."""
        origin = np.asarray(origin, dtype=float).reshape(3)
        direction = np.asarray(direction, dtype=float).reshape(3)
        t, tri = _intersect_triangles(
            origin, direction, self._v0, self._e1, self._e2, t_max
        )
        if tri < 0:
            return None
        return t, self.normals[tri].copy()

    def ray_intersect_batch(self, origins: np.ndarray, directions: np.ndarray, t_max: float):
        """Vectorized nearest-hit query for many rays at once.

        Returns (t, tri_index): t = t_max-sentinel np.inf and tri = -1 for misses.
        """
        origins = np.asarray(origins, dtype=float).reshape(-1, 3)
        directions = np.asarray(directions, dtype=float).reshape(-1, 3)
        n_rays = len(origins)
        t_out = np.full(n_rays, np.inf)
        tri_out = np.full(n_rays, -1, dtype=np.int64)
        n_tri = len(self.triangles)
        if n_tri == 0 or n_rays == 0:
            return t_out, tri_out
        # chunk rays so the (rays x triangles) broadcast stays in cache-friendly range
        chunk = max(1, int(500_000 // max(n_tri, 1)))
        for s in range(0, n_rays, chunk):
            e = min(n_rays, s + chunk)
            t_c, tri_c = _intersect_triangles_batch(
                origins[s:e], directions[s:e], self._v0, self._e1, self._e2, t_max
            )
            t_out[s:e] = t_c
            tri_out[s:e] = tri_c
        return t_out, tri_out


def _intersect_triangles(origin, direction, v0, e1, e2, t_max):
    """Moller-Trumbore over all triangles for one ray; returns (t, tri) or (inf, -1).

    Ties on t resolved by lowest triangle index so that BVH and brute force
    are bit-identical.
    """
    t, tri = _intersect_triangles_batch(
        origin[None, :], direction[None, :], v0, e1, e2, t_max
    )
    return float(t[0]), int(tri[0])


def _intersect_triangles_batch(origins, directions, v0, e1, e2, t_max):
    pvec = np.cross(directions[:, None, :], e2[None, :, :])
    det = np.einsum("tj,rtj->rt", e1, pvec)
    valid = np.abs(det) > _EPS
    inv_det = np.where(valid, 1.0 / np.where(valid, det, 1.0), 0.0)
    tvec = origins[:, None, :] - v0[None, :, :]
    u = np.einsum("rtj,rtj->rt", tvec, pvec) * inv_det
    qvec = np.cross(tvec, e1[None, :, :])
    v = np.einsum("rj,rtj->rt", directions, qvec) * inv_det
    t = np.einsum("tj,rtj->rt", e2, qvec) * inv_det
    hit = (
        valid
        & (u >= -1e-12)
        & (v >= -1e-12)
        & (u + v <= 1.0 + 1e-12)
        & (t > RAY_T_MIN)
        & (t <= t_max)
    )
    t = np.where(hit, t, np.inf)
    tri = np.argmin(t, axis=1)
    best = t[np.arange(len(t)), tri]
    tri = np.where(np.isfinite(best), tri, -1)
    return best, tri


class _Bvh:
    """Median-split AABB tree. Leaf intersection reuses the exact same
    triangle test as the brute-force path, and nearest hits break ties by
    lowest triangle index, so results are bit-identical to brute force."""

    _LEAF_SIZE = 8

    def __init__(self, mesh: TriangleMesh):
        self._v0 = mesh._v0
        self._e1 = mesh._e1
        self._e2 = mesh._e2
        tris = np.arange(len(mesh.triangles))
        corners = mesh.vertices[mesh.triangles]  # (T, 3, 3)
        self._tri_min = corners.min(axis=1)
        self._tri_max = corners.max(axis=1)
        self._centroid = corners.mean(axis=1)
        self._nodes = []  # (min, max, left, right, tri_indices or None)
        self._build(tris)

    def _build(self, tris) -> int:
        lo = self._tri_min[tris].min(axis=0)
        hi = self._tri_max[tris].max(axis=0)
        idx = len(self._nodes)
        if len(tris) <= self._LEAF_SIZE:
            self._nodes.append((lo, hi, -1, -1, np.sort(tris)))
            return idx
        self._nodes.append(None)  # placeholder
        axis = int(np.argmax(hi - lo))
        order = np.argsort(self._centroid[tris, axis], kind="stable")
        half = len(tris) // 2
        left = self._build(tris[order[:half]])
        right = self._build(tris[order[half:]])
        self._nodes[idx] = (lo, hi, left, right, None)
        return idx

    @staticmethod
    def _slab_hit(lo, hi, origin, inv_dir, t_best) -> bool:
        t0 = (lo - origin) * inv_dir
        t1 = (hi - origin) * inv_dir
        tmin = np.minimum(t0, t1).max()
        tmax = np.maximum(t0, t1).min()
        return tmax >= max(tmin, 0.0) and tmin <= t_best

    def intersect(self, origin, direction, t_max):
        with np.errstate(divide="ignore"):
            inv_dir = np.where(np.abs(direction) > _EPS, 1.0 / direction, np.inf)
        best_t = t_max
        best_tri = -1
        stack = [0]
        while stack:
            lo, hi, left, right, leaf = self._nodes[stack.pop()]
            if not self._slab_hit(lo, hi, origin, inv_dir, best_t):
                continue
            if leaf is not None:
                t, local = _intersect_triangles(
                    origin, direction, self._v0[leaf], self._e1[leaf], self._e2[leaf], t_max
                )
                if local >= 0:
                    tri = int(leaf[local])
                    if t < best_t or (t == best_t and (best_tri < 0 or tri < best_tri)):
                        best_t, best_tri = t, tri
            else:
                stack.append(right)
                stack.append(left)
        if best_tri < 0:
            return np.inf, -1
        return best_t, best_tri


def ray_mesh_intersect(mesh: TriangleMesh, origin, direction, t_max: float):
    """Nearest intersection of a ray with a mesh; None on miss."""
    return mesh.ray_intersect(origin, direction, t_max)


def merge_meshes(meshes: list[TriangleMesh]) -> TriangleMesh:
    if not meshes:
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    verts, tris, offset = [], [], 0
    watertight = all(m.watertight for m in meshes)
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + offset)
        offset += len(m.vertices)
    return TriangleMesh(np.vstack(verts), np.vstack(tris), watertight)


# ---------------------------------------------------------------------------
# Voxel grids


@dataclass
class VoxelGrid:
    origin: np.ndarray
    voxel_size: float
    occupied: set = field(default_factory=set)

    def __post_init__(self):
        if self.voxel_size <= 0:
            raise GeometryError("voxel_size must be positive")
        self.origin = np.asarray(self.origin, dtype=float).reshape(3)

    def __len__(self) -> int:
        return len(self.occupied)

    def contains_points(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask: which points fall inside occupied voxels."""
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        if not len(points) or not self.occupied:
            return np.zeros(len(points), dtype=bool)
        cells = np.floor((points - self.origin) / self.voxel_size).astype(np.int64)
        return np.fromiter(
            (tuple(c) in self.occupied for c in cells), dtype=bool, count=len(cells)
        )

    def filled(self) -> "VoxelGrid":
        """Solid occupancy: cells not 6-connected to the outside of the
        bounding box through free space are marked occupied."""
        if not self.occupied:
            return VoxelGrid(self.origin.copy(), self.voxel_size, set())
        cells = np.array(sorted(self.occupied))
        lo = cells.min(axis=0) - 1
        hi = cells.max(axis=0) + 1
        shape = tuple(hi - lo + 1)
        solid = np.zeros(shape, dtype=bool)
        solid[tuple((cells - lo).T)] = True
        outside = np.zeros(shape, dtype=bool)
        stack = [(0, 0, 0)]
        outside[0, 0, 0] = True
        while stack:
            i, j, k = stack.pop()
            for di, dj, dk in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)):
                ni, nj, nk = i + di, j + dj, k + dk
                if 0 <= ni < shape[0] and 0 <= nj < shape[1] and 0 <= nk < shape[2]:
                    if not outside[ni, nj, nk] and not solid[ni, nj, nk]:
                        outside[ni, nj, nk] = True
                        stack.append((ni, nj, nk))
        inner = ~outside
        occ = {tuple(c) for c in (np.argwhere(inner) + lo)}
        return VoxelGrid(self.origin.copy(), self.voxel_size, occ)


def _tri_box_overlap(tri: np.ndarray, box_center: np.ndarray, half: float) -> bool:
    """Separating-axis test between a triangle and an axis-aligned cube."""
    v = tri - box_center
    # box face normals
    if np.any(v.min(axis=0) > half) or np.any(v.max(axis=0) < -half):
        return False
    e = np.array([v[1] - v[0], v[2] - v[1], v[0] - v[2]])
    # triangle plane
    n = np.cross(e[0], e[1])
    d = np.dot(n, v[0])
    r = half * np.sum(np.abs(n))
    if abs(d) > r + 1e-12:
        return False
    # 9 cross-product axes
    for i in range(3):
        for ax in range(3):
            axis = np.zeros(3)
            axis[ax] = 1.0
            a = np.cross(e[i], axis)
            if np.linalg.norm(a) < _EPS:
                continue
            p = v @ a
            r = half * np.sum(np.abs(a))
            if p.min() > r + 1e-12 or p.max() < -r - 1e-12:
                return False
    return True


def _tri_box_overlap_cells(tri: np.ndarray, centers: np.ndarray, half: float) -> np.ndarray:
    """Vectorized separating-axis test of one triangle vs many cubes."""
    keep = np.ones(len(centers), dtype=bool)
    # box face normals (AABB vs AABB)
    lo, hi = tri.min(axis=0), tri.max(axis=0)
    keep &= np.all(centers - half <= hi + 1e-12, axis=1)
    keep &= np.all(centers + half >= lo - 1e-12, axis=1)
    e = np.array([tri[1] - tri[0], tri[2] - tri[1], tri[0] - tri[2]])
    # triangle plane
    n = np.cross(e[0], e[1])
    r = half * np.sum(np.abs(n))
    d = centers @ n - np.dot(n, tri[0])
    keep &= np.abs(d) <= r + 1e-12
    # 9 edge-cross axes
    for i in range(3):
        for ax in range(3):
            axis = np.zeros(3)
            axis[ax] = 1.0
            a = np.cross(e[i], axis)
            if np.linalg.norm(a) < _EPS:
                continue
            p = tri @ a
            r = half * np.sum(np.abs(a))
            c = centers @ a
            keep &= (p.min() - c <= r + 1e-12) & (p.max() - c >= -r - 1e-12)
    return keep


def voxelize_mesh(mesh: TriangleMesh, voxel_size: float) -> VoxelGrid:
    """Conservative surface voxelization: a voxel is occupied iff some
    triangle overlaps it."""
    if voxel_size <= 0:
        raise GeometryError("voxel_size must be positive")
    if len(mesh) == 0:
        return VoxelGrid(np.zeros(3), voxel_size, set())
    # center the grid on the mesh so that symmetric meshes voxelize symmetrically
    mn, mx = mesh.bounds()
    origin = (mn + mx) / 2.0 - voxel_size / 2.0
    grid = VoxelGrid(origin, voxel_size, set())
    half = voxel_size / 2.0
    corners = mesh.vertices[mesh.triangles]
    for tri in corners:
        local = tri - origin
        lo = np.floor(local.min(axis=0) / voxel_size - 1e-9).astype(np.int64)
        hi = np.floor(local.max(axis=0) / voxel_size + 1e-9).astype(np.int64)
        ii, jj, kk = np.meshgrid(
            np.arange(lo[0], hi[0] + 1),
            np.arange(lo[1], hi[1] + 1),
            np.arange(lo[2], hi[2] + 1),
            indexing="ij",
        )
        cells = np.column_stack([ii.ravel(), jj.ravel(), kk.ravel()])
        centers = origin + (cells + 0.5) * voxel_size
        hit = _tri_box_overlap_cells(tri, centers, half)
        grid.occupied.update(map(tuple, cells[hit]))
    return grid


# ---------------------------------------------------------------------------
# Surface sampling and rendering


def sample_surface_points(mesh: TriangleMesh, count: int, seed: int) -> PointCloud:
    """Area-weighted uniform surface samples with triangle normals."""
    if count <= 0:
        raise GeometryError("count must be positive")
    areas = mesh.triangle_areas()
    total = areas.sum()
    if total <= 0:
        raise GeometryError("zero-area mesh")
    rng = np.random.default_rng(seed)
    tri_idx = rng.choice(len(areas), size=count, p=areas / total)
    u = rng.random(count)
    v = rng.random(count)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    pts = mesh._v0[tri_idx] + u[:, None] * mesh._e1[tri_idx] + v[:, None] * mesh._e2[tri_idx]
    return PointCloud(pts, mesh.normals[tri_idx])


@dataclass(frozen=True)
class CameraIntrinsics:
    width: int
    height: int
    focal: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.width < 16 or self.height < 16:
            raise GeometryError("resolution must be at least 16x16")


def render_partial_cloud(
    scene_mesh: TriangleMesh, camera: RigidTransform, intrinsics: CameraIntrinsics
) -> PointCloud:
    """One ray per pixel through a pinhole camera looking along camera +z.

    Returns hit points (scene frame) with the hit triangles' normals.
    """
    w, h = intrinsics.width, intrinsics.height
    px, py = np.meshgrid(np.arange(w) + 0.5, np.arange(h) + 0.5)
    dirs_cam = np.stack(
        [
            (px.ravel() - intrinsics.cx) / intrinsics.focal,
            (py.ravel() - intrinsics.cy) / intrinsics.focal,
            np.ones(w * h),
        ],
        axis=1,
    )
    dirs_cam /= np.linalg.norm(dirs_cam, axis=1)[:, None]
    dirs = camera.apply_vector(dirs_cam)
    origins = np.broadcast_to(camera.translation, dirs.shape)
    t, tri = scene_mesh.ray_intersect_batch(origins, dirs, t_max=1e6)
    hit = tri >= 0
    pts = origins[hit] + t[hit, None] * dirs[hit]
    return PointCloud(pts, scene_mesh.normals[tri[hit]] if hit.any() else None)


# ---------------------------------------------------------------------------
# Mesh file ingestion (ASCII OBJ, binary STL) and primitives


def load_mesh(path, watertight: bool = False) -> TriangleMesh:
    path = str(path)
    if path.lower().endswith(".obj"):
        return load_obj(path, watertight)
    if path.lower().endswith(".stl"):
        return load_stl(path, watertight)
    raise GeometryError(f"unsupported mesh format: {path}")


def load_obj(path, watertight: bool = False) -> TriangleMesh:
    verts, tris = [], []
    with open(path) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
                for k in range(1, len(idx) - 1):  # fan-triangulate
                    tris.append([idx[0], idx[k], idx[k + 1]])
    return TriangleMesh(np.array(verts), np.array(tris, dtype=np.int64), watertight)


def save_obj(mesh: TriangleMesh, path) -> None:
    with open(path, "w") as f:
        for v in mesh.vertices:
            f.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for t in mesh.triangles:
            f.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def load_stl(path, watertight: bool = False) -> TriangleMesh:
    with open(path, "rb") as f:
        f.read(80)
        (n,) = struct.unpack("<I", f.read(4))
        data = np.frombuffer(f.read(n * 50), dtype=np.uint8).reshape(n, 50)
    tris = data[:, 12:48].copy().view("<f4").reshape(n, 3, 3).astype(float)
    verts = tris.reshape(-1, 3)
    faces = np.arange(3 * n, dtype=np.int64).reshape(n, 3)
    return TriangleMesh(verts, faces, watertight)


def make_box(extents, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Axis-aligned box with outward-facing triangles."""
    ex, ey, ez = np.asarray(extents, dtype=float) / 2.0
    c = np.asarray(center, dtype=float)
    corners = np.array(
        [
            [-ex, -ey, -ez], [ex, -ey, -ez], [ex, ey, -ez], [-ex, ey, -ez],
            [-ex, -ey, ez], [ex, -ey, ez], [ex, ey, ez], [-ex, ey, ez],
        ]
    ) + c
    faces = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # -z
            [4, 5, 6], [4, 6, 7],  # +z
            [0, 1, 5], [0, 5, 4],  # -y
            [2, 3, 7], [2, 7, 6],  # +y
            [1, 2, 6], [1, 6, 5],  # +x
            [3, 0, 4], [3, 4, 7],  # -x
        ],
        dtype=np.int64,
    )
    return TriangleMesh(corners, faces, watertight=True)


def make_icosphere(radius: float = 1.0, subdivisions: int = 3, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Subdivided icosahedron with outward normals."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=float,
    )
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [tuple(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}
        new_faces = []
        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = (np.array(verts[i]) + np.array(verts[j])) / 2.0
                m /= np.linalg.norm(m)
                verts.append(tuple(m))
                cache[key] = len(verts) - 1
            return cache[key]
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    v = np.array(verts) * radius + np.asarray(center, dtype=float)
    return TriangleMesh(v, np.array(faces, dtype=np.int64), watertight=True)


def make_cylinder(radius: float, height: float, segments: int = 32, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Closed cylinder along z, outward normals."""
    ang = 2 * np.pi * np.arange(segments) / segments
    ring = np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])
    h = height / 2.0
    bot = np.column_stack([ring, np.full(segments, -h)])
    top = np.column_stack([ring, np.full(segments, h)])
    verts = np.vstack([bot, top, [[0, 0, -h]], [[0, 0, h]]])
    cb, ct = 2 * segments, 2 * segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces += [
            [i, j, segments + j], [i, segments + j, segments + i],  # side
            [cb, j, i],  # bottom cap (normal -z)
            [ct, segments + i, segments + j],  # top cap (+z)
        ]
    verts = verts + np.asarray(center, dtype=float)
    return TriangleMesh(verts, np.array(faces, dtype=np.int64), watertight=True)
