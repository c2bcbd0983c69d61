"""Hand specifications and candidate generation.

A hand is abstracted as a set of discrete grasp types. Each type carries a
principal closing axis, an approach axis, per-finger closing rays used to
generate simulated contacts, and a pre-shaped collision mesh. Spec files are
a line-based key/value format with nested grasp-type blocks; collision
meshes are referenced by relative path.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .cgr import Cgr, Pose6D, antipodal_rep, query_grasp_pose
from .contacts import Contact
from .geometry import (
    PointCloud,
    RigidTransform,
    TriangleMesh,
    load_mesh,
    voxelize_mesh,
)


class HandError(ValueError):
    pass


@dataclass
class FingertipRay:
    origin: np.ndarray  # hand frame
    direction: np.ndarray  # hand frame, unit

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float).reshape(3)
        d = np.asarray(self.direction, dtype=float).reshape(3)
        ln = np.linalg.norm(d)
        if ln < 1e-12:
            raise HandError("fingertip ray direction is zero")
        self.direction = d / ln


@dataclass
class GraspTypeSpec:
    id: int
    name: str
    principal_closing_axis: np.ndarray
    approach_axis: np.ndarray
    fingertip_rays: list[FingertipRay]
    collision_mesh: TriangleMesh
    max_close_travel: float

    def __post_init__(self):
        for attr in ("principal_closing_axis", "approach_axis"):
            v = np.asarray(getattr(self, attr), dtype=float).reshape(3)
            ln = np.linalg.norm(v)
            if ln < 1e-12:
                raise HandError(f"{attr} is zero")
            setattr(self, attr, v / ln)
        if abs(np.dot(self.principal_closing_axis, self.approach_axis)) >= 0.999:
            raise HandError("axes parallel")
        if len(self.fingertip_rays) < 2:
            raise HandError("need at least 2 fingertip rays")
        if self.max_close_travel <= 0:
            raise HandError("max_close_travel must be positive")


@dataclass
class HandSpec:
    name: str
    grasp_types: list[GraspTypeSpec]

    def __post_init__(self):
        if not self.grasp_types:
            raise HandError("grasp_types empty")
        ids = [gt.id for gt in self.grasp_types]
        if ids != list(range(len(ids))):
            raise HandError("grasp type ids must be dense from 0")

    def type(self, type_id: int) -> GraspTypeSpec:
        return self.grasp_types[type_id]


@dataclass
class GraspCandidate:
    pose: Pose6D
    grasp_type_id: int
    source_cgr: Cgr
    antipodal_score: float
    decision_score: float | None = None

    def __post_init__(self):
        if not (0.0 <= self.antipodal_score <= 1.0):
            raise HandError("antipodal_score out of [0,1]")
        if self.decision_score is not None and not (0.0 <= self.decision_score <= 1.0):
            raise HandError("decision_score out of [0,1]")


def load_hand_spec(path) -> HandSpec:
    """Parse a .hand file. Grammar:

        name <hand name>
        grasp_type <id>
          name <type name>
          approach x y z
          closing x y z
          max_close_travel <m>
          collision_mesh <relative path>
          fingertip ox oy oz dx dy dz   (one line per finger)
        end
    """
    base = os.path.dirname(os.path.abspath(path))
    hand_name = None
    types: list[GraspTypeSpec] = []
    cur: dict | None = None

    def finish(block):
        for key in ("name", "approach", "closing", "max_close_travel", "collision_mesh"):
            if key not in block:
                raise HandError(f"grasp_type {block['id']}: missing field '{key}'")
        mesh_path = os.path.join(base, block["collision_mesh"])
        if not os.path.exists(mesh_path):
            raise HandError(f"grasp_type {block['id']}: collision mesh not found: {mesh_path}")
        return GraspTypeSpec(
            id=block["id"],
            name=block["name"],
            principal_closing_axis=block["closing"],
            approach_axis=block["approach"],
            fingertip_rays=block.get("fingertips", []),
            collision_mesh=load_mesh(mesh_path),
            max_close_travel=block["max_close_travel"],
        )

    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            key, args = parts[0], parts[1:]
            try:
                if key == "name" and cur is None:
                    hand_name = " ".join(args)
                elif key == "grasp_type":
                    if cur is not None:
                        raise HandError("nested grasp_type block")
                    cur = {"id": int(args[0]), "fingertips": []}
                elif key == "end":
                    if cur is None:
                        raise HandError("'end' outside grasp_type block")
                    types.append(finish(cur))
                    cur = None
                elif cur is not None:
                    if key == "name":
                        cur["name"] = " ".join(args)
                    elif key in ("approach", "closing"):
                        cur[key] = [float(x) for x in args[:3]]
                    elif key == "max_close_travel":
                        cur["max_close_travel"] = float(args[0])
                    elif key == "collision_mesh":
                        cur["collision_mesh"] = args[0]
                    elif key == "fingertip":
                        vals = [float(x) for x in args[:6]]
                        cur["fingertips"].append(FingertipRay(vals[:3], vals[3:]))
                    else:
                        raise HandError(f"unknown field '{key}'")
                else:
                    raise HandError(f"unknown directive '{key}'")
            except (ValueError, IndexError) as exc:
                if isinstance(exc, HandError):
                    raise HandError(f"{path}:{lineno}: {exc}") from None
                raise HandError(f"{path}:{lineno}: bad value for '{key}'") from exc
    if cur is not None:
        raise HandError("unterminated grasp_type block")
    return HandSpec(name=hand_name or os.path.basename(path), grasp_types=types)


def align_to_antipodal(antipodal_pose: Pose6D, gt: GraspTypeSpec) -> Pose6D:
    """Hand pose whose approach axis maps to the antipodal frame's z and
    whose principal closing axis maps to its x. Translation unchanged."""
    # hand-frame basis built from the two designated axes
    a = gt.approach_axis
    c = gt.principal_closing_axis
    c_perp = c - np.dot(c, a) * a
    c_perp /= np.linalg.norm(c_perp)
    y = np.cross(a, c_perp)
    B_hand = np.column_stack([c_perp, y, a])  # maps e_x->closing, e_z->approach
    R = antipodal_pose.rotation @ B_hand.T
    return Pose6D(
        R,
        antipodal_pose.translation.copy(),
        source_alpha=antipodal_pose.source_alpha,
        source_section=antipodal_pose.source_section,
    )


def candidates_from_cgr(cgr: Cgr, hand: HandSpec) -> list[GraspCandidate]:
    """One candidate per grasp type, all anchored at the CGR's best
    antipodal pose and sharing its score."""
    pose = query_grasp_pose(cgr)  # raises CgrError("no antipodal contact")
    _, _, score = antipodal_rep(cgr).best()
    return [
        GraspCandidate(
            pose=align_to_antipodal(pose, gt),
            grasp_type_id=gt.id,
            source_cgr=cgr,
            antipodal_score=score,
        )
        for gt in hand.grasp_types
    ]


_collision_grid_cache: dict = {}


def _hand_voxel_grid(gt: GraspTypeSpec, voxel_size: float):
    key = (id(gt.collision_mesh), voxel_size)
    if key not in _collision_grid_cache:
        # filled: the hand is a solid; points fully inside must collide too
        _collision_grid_cache[key] = voxelize_mesh(gt.collision_mesh, voxel_size).filled()
    return _collision_grid_cache[key]


def hand_scene_collision(
    candidate: GraspCandidate,
    gt: GraspTypeSpec,
    scene_cloud: PointCloud,
    voxel_size: float = 0.005,
) -> bool:
    """True iff any scene point lands inside an occupied voxel of the posed
    collision mesh. The mesh is voxelized once in the hand frame and scene
    points are mapped into that frame; rigid motion preserves the test."""
    if voxel_size <= 0:
        raise HandError("voxel_size must be positive")
    if len(scene_cloud) == 0:
        return False
    tf = candidate.pose.as_transform()
    local = tf.inverse().apply(scene_cloud.points)
    lo, hi = gt.collision_mesh.bounds()
    near = np.all((local >= lo - voxel_size) & (local <= hi + voxel_size), axis=1)
    if not near.any():
        return False
    grid = _hand_voxel_grid(gt, voxel_size)
    return bool(grid.contains_points(local[near]).any())


def fingertip_contacts(
    candidate: GraspCandidate, gt: GraspTypeSpec, scene_mesh: TriangleMesh
) -> list[Contact]:
    """Simulated finger closing: each fingertip ray's first hit within
    max_close_travel becomes a contact. Contact normals follow the push
    direction (into the object); fingers that miss produce no contact."""
    tf = candidate.pose.as_transform()
    contacts = []
    for ray in gt.fingertip_rays:
        origin = tf.apply(ray.origin)
        direction = tf.apply_vector(ray.direction)
        hit = scene_mesh.ray_intersect(origin, direction, gt.max_close_travel)
        if hit is None:
            continue
        t, normal = hit
        # orient into the object: oppose the outward surface normal facing the ray
        n = -normal if np.dot(normal, direction) < 0 else normal
        contacts.append(Contact(origin + t * direction, n))
    return contacts
