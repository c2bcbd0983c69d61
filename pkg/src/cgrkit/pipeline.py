"""End-to-end orchestration: simulated trial-and-error data collection with
a force-closure oracle, grasp detection with and without the decision
model, and simulated scene-clearing evaluation.

Real-robot execution is replaced throughout by a contact oracle: close the
selected grasp type's fingertip rays against the scene mesh and test force
balance inside linearized friction cones. During collection the friction
coefficient is drawn per trial; evaluation uses a fixed held-out value.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .annotation import (
    AnnotationParams,
    CgrDataset,
    CgrRecord,
    Scene,
    SceneInstance,
    annotate_scene,
)
from .cgr import Cgr, CgrError, antipodal_rep
from .contacts import ForceClosureParams, force_closure
from .geometry import PointCloud, RigidTransform, rotation_z
from .hand import (
    GraspCandidate,
    HandSpec,
    candidates_from_cgr,
    fingertip_contacts,
    hand_scene_collision,
)
from .model import DecisionBank, forward

TRIALS_MAGIC = b"CGRKTR1\0"


class PipelineError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Oracle


def grasp_oracle(
    candidate: GraspCandidate, hand: HandSpec, scene: Scene, friction: float
) -> tuple[bool, object]:
    """Simulated grasp outcome: success iff the closed fingertips yield at
    least two contacts whose cone-edge wrenches can balance to zero."""
    gt = hand.type(candidate.grasp_type_id)
    contacts = fingertip_contacts(candidate, gt, scene.merged_mesh())
    if len(contacts) < 2:
        return False, None
    result = force_closure(contacts, ForceClosureParams(friction=friction))
    return result.feasible, result


# ---------------------------------------------------------------------------
# Scene generation


@dataclass(frozen=True)
class SceneGenParams:
    instances_per_scene: int = 3
    workspace_radius: float = 0.15
    min_separation: float = 0.08
    random_yaw: bool = True


def generate_scene(mesh_pool: dict, params: SceneGenParams, seed: int = 0) -> Scene:
    """Random cluttered scene: objects from the pool dropped upright at
    non-overlapping positions on the table plane z = 0."""
    if not mesh_pool:
        raise PipelineError("empty mesh pool")
    rng = np.random.default_rng(seed)
    ids = sorted(mesh_pool)
    placed = []
    instances = []
    for _ in range(params.instances_per_scene):
        mesh_id = ids[rng.integers(0, len(ids))]
        mesh = mesh_pool[mesh_id]
        lo, _hi = mesh.bounds()
        for _attempt in range(100):
            xy = rng.uniform(-params.workspace_radius, params.workspace_radius, size=2)
            if all(np.linalg.norm(xy - p) >= params.min_separation for p in placed):
                break
        placed.append(xy)
        yaw = rng.uniform(0, 2 * np.pi) if params.random_yaw else 0.0
        pose = RigidTransform(rotation_z(yaw), [xy[0], xy[1], -lo[2]])
        instances.append(SceneInstance(mesh_id, pose))
    return Scene(instances, np.zeros(3), np.array([0.0, 0.0, 1.0]), dict(mesh_pool))


# ---------------------------------------------------------------------------
# Data collection (simulated trial-and-error loop)


@dataclass(frozen=True)
class CollectionConfig:
    target_size: int = 400
    friction_range: tuple = (0.2, 0.8)
    seed: int = 0
    balance_types: bool = True
    collision_voxel: float = 0.005
    max_attempts_factor: int = 50

    def __post_init__(self):
        if self.target_size < 1:
            raise PipelineError("target_size must be positive")
        lo, hi = self.friction_range
        if not (0.0 < lo <= hi <= 2.0):
            raise PipelineError("friction range must lie within (0, 2]")


@dataclass
class TrialRecord:
    cgr: Cgr
    pose: "Pose6D"
    grasp_type_id: int
    outcome: int  # 1 success, 0 failure
    friction: float
    closure: object = None  # diagnostics, not serialized


def collect(
    config: CollectionConfig, annotated_scenes: list, hand: HandSpec
) -> list[TrialRecord]:
    """Trial-and-error loop over pre-annotated scenes.

    annotated_scenes: list of (Scene, CgrDataset) pairs. Each iteration
    samples a valid CGR and a grasp type, skips colliding poses, executes
    the oracle at a per-trial friction and records the outcome.
    """
    if not annotated_scenes:
        raise PipelineError("no annotated scenes")
    rng = np.random.default_rng(config.seed)
    records: list[TrialRecord] = []
    type_counts = {gt.id: 0 for gt in hand.grasp_types}
    per_type = -(-config.target_size // len(hand.grasp_types))  # ceil
    # pre-extract graspable records and scene clouds
    prepared = []
    for scene, ds in annotated_scenes:
        usable = []
        for rec in ds.valid_records():
            if antipodal_rep(rec.cgr).best()[2] > 0.0:
                usable.append(rec)
        cloud = scene.surface_cloud(1500, seed=config.seed)
        prepared.append((scene, usable, cloud))
    if all(not usable for _, usable, _ in prepared):
        raise PipelineError("no valid CGR in any scene")
    attempts = 0
    max_attempts = config.max_attempts_factor * config.target_size
    while len(records) < config.target_size:
        attempts += 1
        if attempts > max_attempts:
            raise PipelineError(
                f"collection stalled: {len(records)}/{config.target_size} after {attempts} attempts"
            )
        scene, usable, cloud = prepared[rng.integers(0, len(prepared))]
        if not usable:
            continue
        rec = usable[rng.integers(0, len(usable))]
        if config.balance_types:
            open_types = [t for t, c in sorted(type_counts.items()) if c < per_type]
            type_id = open_types[rng.integers(0, len(open_types))]
        else:
            type_id = int(rng.integers(0, len(hand.grasp_types)))
        try:
            candidates = candidates_from_cgr(rec.cgr, hand)
        except CgrError:
            continue
        candidate = candidates[type_id]
        gt = hand.type(type_id)
        if hand_scene_collision(candidate, gt, cloud, config.collision_voxel):
            continue
        friction = float(rng.uniform(*config.friction_range))
        success, diag = grasp_oracle(candidate, hand, scene, friction)
        records.append(
            TrialRecord(rec.cgr, candidate.pose, type_id, int(success), friction, diag)
        )
        type_counts[type_id] += 1
    return records


# ---------------------------------------------------------------------------
# Detection


@dataclass(frozen=True)
class DetectionConfig:
    top_cgr: int = 100
    top_candidates: int = 200
    decision_threshold: float = 0.9
    collision_voxel: float = 0.005
    scene_cloud_points: int = 1500

    def __post_init__(self):
        if self.top_cgr < 1 or self.top_candidates < 1:
            raise PipelineError("top_cgr and top_candidates must be positive")


def _ranked_cgrs(dataset: CgrDataset, k: int) -> list[tuple[CgrRecord, float]]:
    scored = []
    for rec in dataset.valid_records():
        s = antipodal_rep(rec.cgr).best()[2]
        if s > 0.0:
            scored.append((rec, s))
    scored.sort(key=lambda t: -t[1])
    return scored[:k]


def _expand_candidates(dataset: CgrDataset, hand: HandSpec, k: int) -> list[GraspCandidate]:
    candidates = []
    for rec, _s in _ranked_cgrs(dataset, k):
        candidates.extend(candidates_from_cgr(rec.cgr, hand))
    return candidates


def _batch_decide(bank: DecisionBank, candidates: list[GraspCandidate]) -> None:
    """Score candidates in per-type batches (single inference pass each)."""
    by_type: dict = {}
    for i, c in enumerate(candidates):
        by_type.setdefault(c.grasp_type_id, []).append(i)
    for type_id, idxs in by_type.items():
        model = bank.models.get(type_id)
        if model is None:
            raise PipelineError(f"decision bank missing grasp type {type_id}")
        feats = np.stack([candidates[i].source_cgr.flatten() for i in idxs])
        probs = forward(model, feats, training=False)
        for i, p in zip(idxs, probs):
            candidates[i].decision_score = float(p)


def _collision_filter_sorted(
    ordered: list[GraspCandidate],
    hand: HandSpec,
    cloud: PointCloud,
    voxel: float,
    max_results: int | None,
) -> list[GraspCandidate]:
    out = []
    for c in ordered:
        if not hand_scene_collision(c, hand.type(c.grasp_type_id), cloud, voxel):
            out.append(c)
            if max_results is not None and len(out) >= max_results:
                break
    return out


def detect(
    scene: Scene,
    hand: HandSpec,
    bank: DecisionBank,
    config: DetectionConfig | None = None,
    dataset: CgrDataset | None = None,
    annotation: AnnotationParams | None = None,
    cache: dict | None = None,
    max_results: int | None = None,
) -> list[GraspCandidate]:
    """Decision-model pipeline: top-K1 CGRs by antipodal score, one
    candidate per grasp type, top-K2 by decision score, collision filter,
    sorted by decision score (ties: antipodal score, then generation
    order). Candidates at or above the decision threshold are preferred;
    when none reach it the remaining survivors are still returned."""
    config = config or DetectionConfig()
    if dataset is None:
        dataset = annotate_scene(scene, annotation, cache=cache)
    candidates = _expand_candidates(dataset, hand, config.top_cgr)
    if not candidates:
        return []
    _batch_decide(bank, candidates)
    order = sorted(
        range(len(candidates)),
        key=lambda i: (-candidates[i].decision_score, -candidates[i].antipodal_score, i),
    )
    shortlist = [candidates[i] for i in order[: config.top_candidates]]
    above = [c for c in shortlist if c.decision_score >= config.decision_threshold]
    below = [c for c in shortlist if c.decision_score < config.decision_threshold]
    cloud = scene.surface_cloud(config.scene_cloud_points, seed=0)
    survivors = _collision_filter_sorted(above, hand, cloud, config.collision_voxel, max_results)
    if max_results is None or len(survivors) < max_results:
        remaining = None if max_results is None else max_results - len(survivors)
        survivors += _collision_filter_sorted(below, hand, cloud, config.collision_voxel, remaining)
    return survivors


def detect_baseline(
    scene: Scene,
    hand: HandSpec,
    config: DetectionConfig | None = None,
    dataset: CgrDataset | None = None,
    annotation: AnnotationParams | None = None,
    cache: dict | None = None,
    seed: int = 0,
    max_results: int | None = None,
) -> list[GraspCandidate]:
    """Principal-closing-axis baseline: same candidate generation, ranked by
    antipodal score only with a seeded random tie-break, collision
    filtered."""
    config = config or DetectionConfig()
    if dataset is None:
        dataset = annotate_scene(scene, annotation, cache=cache)
    candidates = _expand_candidates(dataset, hand, config.top_cgr)
    if not candidates:
        return []
    rng = np.random.default_rng(seed)
    jitter = rng.random(len(candidates))
    order = sorted(
        range(len(candidates)),
        key=lambda i: (-candidates[i].antipodal_score, jitter[i]),
    )
    shortlist = [candidates[i] for i in order[: config.top_candidates]]
    cloud = scene.surface_cloud(config.scene_cloud_points, seed=0)
    return _collision_filter_sorted(shortlist, hand, cloud, config.collision_voxel, max_results)


# ---------------------------------------------------------------------------
# Evaluation (simulated table clearing)


@dataclass
class EvalStats:
    attempts: int = 0
    successes: int = 0
    per_type_attempts: dict = field(default_factory=dict)
    per_type_successes: dict = field(default_factory=dict)

    @property
    def success_rate(self):
        """successes / attempts; None when no attempts were made."""
        if self.attempts == 0:
            return None
        return self.successes / self.attempts

    def type_frequencies(self) -> dict:
        total = sum(self.per_type_attempts.values())
        if total == 0:
            return {}
        return {t: c / total for t, c in sorted(self.per_type_attempts.items())}

    def merge(self, other: "EvalStats") -> None:
        self.attempts += other.attempts
        self.successes += other.successes
        for t, c in other.per_type_attempts.items():
            self.per_type_attempts[t] = self.per_type_attempts.get(t, 0) + c
        for t, c in other.per_type_successes.items():
            self.per_type_successes[t] = self.per_type_successes.get(t, 0) + c


def _nearest_instance(scene: Scene, point: np.ndarray) -> int:
    best, best_d = -1, np.inf
    for i in range(len(scene.instances)):
        mesh = scene.instance_mesh(i)
        d = np.min(np.linalg.norm(mesh.vertices - point, axis=1))
        if d < best_d:
            best, best_d = i, d
    return best


def evaluate(
    policy: str,
    scenes: list[Scene],
    hand: HandSpec,
    bank: DecisionBank | None,
    config: DetectionConfig | None = None,
    annotation: AnnotationParams | None = None,
    eval_friction: float = 0.5,
    seed: int = 0,
    cache: dict | None = None,
) -> EvalStats:
    """Simulated clearing: per scene, repeatedly execute the top detected
    grasp with the force-closure oracle at a fixed friction, removing the
    grasped object on success, until the scene is cleared or the attempt
    budget (2x object count) is spent."""
    if policy not in ("detect", "baseline"):
        raise PipelineError(f"unknown policy '{policy}'")
    if policy == "detect" and bank is None:
        raise PipelineError("detect policy requires a decision bank")
    stats = EvalStats()
    cache = {} if cache is None else cache
    for scene_idx, scene in enumerate(scenes):
        state = scene
        max_attempts = 2 * len(scene.instances)
        attempt = 0
        while len(state.instances) > 0 and attempt < max_attempts:
            ds = annotate_scene(state, annotation, scene_id=scene_idx, cache=cache)
            if policy == "detect":
                ranked = detect(state, hand, bank, config, dataset=ds, max_results=1)
            else:
                ranked = detect_baseline(
                    state, hand, config, dataset=ds, seed=seed + attempt, max_results=1
                )
            if not ranked:
                break
            attempt += 1
            top = ranked[0]
            success, _diag = grasp_oracle(top, hand, state, eval_friction)
            stats.attempts += 1
            stats.per_type_attempts[top.grasp_type_id] = (
                stats.per_type_attempts.get(top.grasp_type_id, 0) + 1
            )
            if success:
                stats.successes += 1
                stats.per_type_successes[top.grasp_type_id] = (
                    stats.per_type_successes.get(top.grasp_type_id, 0) + 1
                )
                idx = _nearest_instance(state, top.pose.translation)
                state = state.without_instance(idx)
    return stats


# ---------------------------------------------------------------------------
# Trial record persistence


def write_trials(records: list[TrialRecord], grid_params, path) -> None:
    with open(path, "wb") as f:
        f.write(TRIALS_MAGIC)
        f.write(struct.pack("<Q", len(records)))
        for rec in records:
            f.write(rec.cgr.to_bytes())
            raw = getattr(rec, "_raw_pose", None)
            if raw is None:
                raw = np.concatenate(
                    [rec.pose.rotation.reshape(9), rec.pose.translation]
                ).astype("<f4")
            f.write(raw.tobytes())
            f.write(struct.pack("<HBf", rec.grasp_type_id, rec.outcome, rec.friction))


def read_trials(grid_params, path) -> list[TrialRecord]:
    from .cgr import Cgr, Pose6D

    with open(path, "rb") as f:
        if f.read(8) != TRIALS_MAGIC:
            raise PipelineError("bad magic")
        (count,) = struct.unpack("<Q", f.read(8))
        rec_size = Cgr.record_size(grid_params)
        out = []
        for _ in range(count):
            cgr = Cgr.from_bytes(f.read(rec_size), grid_params)
            pose_vals = np.frombuffer(f.read(48), dtype="<f4").astype(float)
            R = pose_vals[:9].reshape(3, 3)
            u, _, vt = np.linalg.svd(R)
            R = u @ vt if np.linalg.det(u @ vt) > 0 else (u * [1, 1, -1]) @ vt
            type_id, outcome, friction = struct.unpack("<HBf", f.read(7))
            rec = TrialRecord(cgr, Pose6D(R, pose_vals[9:12]), type_id, outcome, friction)
            rec._raw_pose = pose_vals.astype("<f4")
            out.append(rec)
        return out


def trials_to_training_data(records: list[TrialRecord]):
    """Per-type (features, labels) arrays for decision-model training."""
    by_type: dict = {}
    for rec in records:
        by_type.setdefault(rec.grasp_type_id, ([], []))
        by_type[rec.grasp_type_id][0].append(rec.cgr.flatten())
        by_type[rec.grasp_type_id][1].append(rec.outcome)
    return {
        t: (np.stack(feats), np.array(labels, dtype=float))
        for t, (feats, labels) in sorted(by_type.items())
    }
