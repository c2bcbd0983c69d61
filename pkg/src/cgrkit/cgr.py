"""Contact-centric grasp representation (CGR).

A CGR anchors a local frame on an object surface with its z-axis as the
approach direction. At each of M depths along z, N rays are cast radially
inside the section plane; each ray stores (distance, normal angle). From the
grid we derive the antipodal opening widths / required-friction table, a
graspness heuristic, and a 6-DoF grasp pose.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .geometry import RigidTransform, TriangleMesh, rotation_z

CGR_DEFAULT_DEPTHS = (0.005, 0.01, 0.02, 0.03, 0.04)


class CgrError(ValueError):
    pass


@dataclass(frozen=True)
class CgrGridParams:
    n_angles: int = 48
    n_sections: int = 5
    section_depths: tuple = CGR_DEFAULT_DEPTHS
    d_max: float = 0.05
    theta_sentinel: float = np.pi / 2

    def __post_init__(self):
        if self.n_angles < 4 or self.n_angles % 2 != 0:
            raise CgrError("n_angles must be even and >= 4")
        if self.n_sections < 1:
            raise CgrError("n_sections must be >= 1")
        depths = tuple(float(d) for d in self.section_depths)
        if len(depths) != self.n_sections:
            raise CgrError("section_depths length must equal n_sections")
        if any(b <= a for a, b in zip(depths, depths[1:])):
            raise CgrError("section_depths must be strictly increasing")
        if self.d_max <= 0:
            raise CgrError("d_max must be positive")
        object.__setattr__(self, "section_depths", depths)

    @property
    def alphas(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_angles) / self.n_angles

    @property
    def flat_size(self) -> int:
        return 2 * self.n_sections * self.n_angles


@dataclass
class Cgr:
    frame: RigidTransform
    grid: np.ndarray  # (M, N, 2): [:, :, 0] = distance, [:, :, 1] = normal angle
    params: CgrGridParams

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        expect = (self.params.n_sections, self.params.n_angles, 2)
        if self.grid.shape != expect:
            raise CgrError(f"grid shape {self.grid.shape} != {expect}")

    @property
    def hits(self) -> np.ndarray:
        """Boolean (M, N): entries where the ray hit geometry."""
        return self.grid[:, :, 0] < self.params.d_max

    def flatten(self) -> np.ndarray:
        """Section-major, (d, theta)-interleaved flattening; length 2*M*N."""
        return self.grid.reshape(-1)

    @staticmethod
    def unflatten(values: np.ndarray, frame: RigidTransform, params: CgrGridParams) -> "Cgr":
        grid = np.asarray(values, dtype=float).reshape(params.n_sections, params.n_angles, 2)
        return Cgr(frame, grid, params)

    def to_bytes(self) -> bytes:
        # _raw_frame preserves the exact stored float32 frame across a
        # read/write cycle (orthonormalization would otherwise perturb it)
        raw = getattr(self, "_raw_frame", None)
        if raw is None:
            raw = np.concatenate(
                [self.frame.rotation.reshape(9), self.frame.translation]
            ).astype("<f4")
        return raw.tobytes() + self.grid.astype("<f4").tobytes()

    @staticmethod
    def record_size(params: CgrGridParams) -> int:
        return 4 * (12 + params.flat_size)

    @staticmethod
    def from_bytes(data: bytes, params: CgrGridParams) -> "Cgr":
        vals = np.frombuffer(data, dtype="<f4").astype(float)
        R = vals[:9].reshape(3, 3)
        # re-orthonormalize: float32 storage degrades orthogonality
        u, _, vt = np.linalg.svd(R)
        R = u @ vt
        if np.linalg.det(R) < 0:
            u[:, -1] *= -1
            R = u @ vt
        frame = RigidTransform(R, vals[9:12])
        grid = vals[12:].reshape(params.n_sections, params.n_angles, 2)
        cgr = Cgr(frame, grid, params)
        cgr._raw_frame = np.frombuffer(data[:48], dtype="<f4").copy()
        return cgr


@dataclass
class AntipodalRep:
    """Per half-angle and section: opening width w, required friction mu and
    a higher-is-better score s = clamp(1 - mu, 0, 1); s = 0 when either of
    the paired rays missed."""

    width: np.ndarray  # (M, N/2)
    friction: np.ndarray  # (M, N/2)
    score: np.ndarray  # (M, N/2)

    def best(self) -> tuple[int, int, float]:
        """(alpha_index, section_index, score) of the best entry;
        ties broken by lowest section then lowest angle index."""
        m, half = self.score.shape
        flat = self.score.reshape(-1)  # section-major: index = j * half + i
        order = np.argmax(flat)
        # argmax returns the first maximum in section-major order, which is
        # exactly lowest-section-then-lowest-angle tie-breaking
        j, i = divmod(int(order), half)
        return i, j, float(flat[order])


@dataclass
class Pose6D:
    rotation: np.ndarray
    translation: np.ndarray
    source_alpha: float = 0.0
    source_section: int = 0

    def __post_init__(self):
        tf = RigidTransform(self.rotation, self.translation)  # validates
        self.rotation = tf.rotation
        self.translation = tf.translation

    def as_transform(self) -> RigidTransform:
        return RigidTransform(self.rotation, self.translation)


def _section_rays(frame: RigidTransform, params: CgrGridParams):
    """World-frame ray origins/directions for all (section, angle) pairs,
    flattened section-major."""
    alphas = params.alphas
    dirs_local = np.column_stack([np.cos(alphas), np.sin(alphas), np.zeros(len(alphas))])
    dirs_world = frame.apply_vector(dirs_local)  # (N, 3)
    z_world = frame.rotation[:, 2]
    origins = frame.translation[None, :] + np.asarray(params.section_depths)[:, None] * z_world[None, :]
    origins = np.repeat(origins, params.n_angles, axis=0)  # (M*N, 3)
    dirs = np.tile(dirs_world, (params.n_sections, 1))  # (M*N, 3)
    return origins, dirs


def compute_cgr(scene_mesh: TriangleMesh, frame: RigidTransform, params: CgrGridParams | None = None) -> Cgr:
    params = params or CgrGridParams()
    return compute_cgrs(scene_mesh, [frame], params)[0]


def compute_cgrs(scene_mesh: TriangleMesh, frames, params: CgrGridParams | None = None) -> list[Cgr]:
    """Batched CGR computation for many frames against one mesh."""
    params = params or CgrGridParams()
    m, n = params.n_sections, params.n_angles
    all_origins, all_dirs = [], []
    for frame in frames:
        o, d = _section_rays(frame, params)
        all_origins.append(o)
        all_dirs.append(d)
    if not frames:
        return []
    origins = np.vstack(all_origins)
    dirs = np.vstack(all_dirs)
    t, tri = scene_mesh.ray_intersect_batch(origins, dirs, params.d_max)
    hit = tri >= 0
    dist = np.where(hit, t, params.d_max)
    theta = np.full(len(t), params.theta_sentinel)
    if hit.any():
        normals = scene_mesh.normals[tri[hit]]
        cosang = np.einsum("ij,ij->i", dirs[hit], normals)
        theta[hit] = np.arccos(np.clip(cosang, -1.0, 1.0))
    out = []
    per = m * n
    for k, frame in enumerate(frames):
        grid = np.stack(
            [dist[k * per:(k + 1) * per].reshape(m, n), theta[k * per:(k + 1) * per].reshape(m, n)],
            axis=2,
        )
        out.append(Cgr(frame, grid, params))
    return out


def antipodal_rep(cgr: Cgr) -> AntipodalRep:
    """Opening width / required friction per opposing ray pair.

    w = 2 * max(d_a, d_{a+pi}); mu = max(tan th_a, tan th_{a+pi}).
    Score is 0 when either side missed, else clamp(1 - mu, 0, 1).
    """
    p = cgr.params
    half = p.n_angles // 2
    d = cgr.grid[:, :, 0]
    th = cgr.grid[:, :, 1]
    hit = cgr.hits
    d_a, d_b = d[:, :half], d[:, half:]
    th_a, th_b = th[:, :half], th[:, half:]
    width = 2.0 * np.maximum(d_a, d_b)
    friction = np.maximum(np.tan(th_a), np.tan(th_b))
    both = hit[:, :half] & hit[:, half:]
    score = np.where(both, np.clip(1.0 - friction, 0.0, 1.0), 0.0)
    return AntipodalRep(width, friction, score)


def graspness(cgr: Cgr, theta_threshold: float = 0.3, score_threshold: float = 0.9) -> float:
    """Heuristic promise score: fraction of low-normal-angle hits plus the
    fraction of high-score antipodal entries."""
    if not (0.0 < theta_threshold <= np.pi / 2):
        raise CgrError("theta_threshold out of range")
    if not (0.0 < score_threshold <= 1.0):
        raise CgrError("score_threshold out of range")
    p = cgr.params
    nm = p.n_sections * p.n_angles
    low_theta = int(np.count_nonzero(cgr.hits & (cgr.grid[:, :, 1] < theta_threshold)))
    rep = antipodal_rep(cgr)
    good_pairs = int(np.count_nonzero(rep.score >= score_threshold))
    return low_theta / nm + good_pairs / (nm / 2)


def query_grasp_pose(cgr: Cgr) -> Pose6D:
    """6-DoF pose of the best antipodal entry: rotate the frame about its own
    z by the winning angle and advance to the winning section depth."""
    rep = antipodal_rep(cgr)
    i, j, s = rep.best()
    if s <= 0.0:
        raise CgrError("no antipodal contact")
    alpha = 2 * np.pi * i / cgr.params.n_angles
    Rz = rotation_z(alpha)
    R_g = cgr.frame.rotation @ Rz
    z = np.array([0.0, 0.0, 1.0])
    t_g = cgr.frame.translation + cgr.params.section_depths[j] * (cgr.frame.rotation @ Rz @ z)
    return Pose6D(R_g, t_g, source_alpha=alpha, source_section=j)
