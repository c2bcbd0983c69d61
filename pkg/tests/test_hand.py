import numpy as np
import pytest

from cgrkit import bundled_hand_path
from cgrkit.cgr import CgrGridParams, Cgr, Pose6D, compute_cgr, query_grasp_pose
from cgrkit.geometry import (
    PointCloud,
    RigidTransform,
    make_box,
    rotation_z,
    save_obj,
)
from cgrkit.hand import (
    FingertipRay,
    GraspCandidate,
    GraspTypeSpec,
    HandError,
    HandSpec,
    align_to_antipodal,
    candidates_from_cgr,
    fingertip_contacts,
    hand_scene_collision,
    load_hand_spec,
)

from conftest import random_transform


# ---------------------------------------------------------------------------
# Spec parsing


def test_bundled_archetype3_parses(hand3):
    assert len(hand3.grasp_types) == 4
    assert [gt.id for gt in hand3.grasp_types] == [0, 1, 2, 3]
    names = [gt.name for gt in hand3.grasp_types]
    assert names == ["pinch", "tripod", "deep-pinch", "wide-span"]
    for gt in hand3.grasp_types:
        assert len(gt.fingertip_rays) >= 2
        assert len(gt.collision_mesh) > 0
        assert abs(np.linalg.norm(gt.approach_axis) - 1) < 1e-12
        assert abs(np.linalg.norm(gt.principal_closing_axis) - 1) < 1e-12


def test_bundled_hand_path_missing():
    with pytest.raises(FileNotFoundError):
        bundled_hand_path("no-such-hand")


def _write_hand(tmp_path, body):
    save_obj(make_box((0.02, 0.02, 0.02)), tmp_path / "palm.obj")
    path = tmp_path / "test.hand"
    path.write_text(body)
    return path


def test_parse_minimal_hand(tmp_path):
    path = _write_hand(
        tmp_path,
        """
name test hand
grasp_type 0
  name pinch
  approach 0 0 1
  closing 1 0 0
  max_close_travel 0.1
  collision_mesh palm.obj
  fingertip 0.05 0 0  -1 0 0
  fingertip -0.05 0 0  1 0 0
end
""",
    )
    hand = load_hand_spec(path)
    assert hand.name == "test hand"
    assert len(hand.grasp_types) == 1
    gt = hand.type(0)
    assert np.allclose(gt.fingertip_rays[0].origin, [0.05, 0, 0])
    assert np.allclose(gt.fingertip_rays[0].direction, [-1, 0, 0])
    assert gt.max_close_travel == 0.1


def test_parse_errors(tmp_path):
    with pytest.raises(HandError):  # missing closing axis
        load_hand_spec(
            _write_hand(
                tmp_path,
                "grasp_type 0\n name x\n approach 0 0 1\n max_close_travel 0.1\n"
                " collision_mesh palm.obj\n fingertip 0 0 0 1 0 0\n"
                " fingertip 1 0 0 -1 0 0\nend\n",
            )
        )
    with pytest.raises(HandError):  # unterminated block
        load_hand_spec(_write_hand(tmp_path, "grasp_type 0\n name x\n"))
    with pytest.raises(HandError):  # unknown directive
        load_hand_spec(_write_hand(tmp_path, "swivel 3\n"))


def test_spec_validation():
    ray = FingertipRay([0.05, 0, 0], [-1, 0, 0])
    mesh = make_box((0.01, 0.01, 0.01))
    with pytest.raises(HandError):  # parallel axes
        GraspTypeSpec(0, "x", [0, 0, 1], [0, 0, 1], [ray, ray], mesh, 0.1)
    with pytest.raises(HandError):  # single finger
        GraspTypeSpec(0, "x", [1, 0, 0], [0, 0, 1], [ray], mesh, 0.1)
    with pytest.raises(HandError):  # non-dense ids
        gt = GraspTypeSpec(1, "x", [1, 0, 0], [0, 0, 1], [ray, ray], mesh, 0.1)
        HandSpec("h", [gt])
    with pytest.raises(HandError):
        HandSpec("h", [])


# ---------------------------------------------------------------------------
# Candidate generation


def test_align_to_antipodal_axis_mapping(hand3):
    rng = np.random.default_rng(0)
    for _ in range(20):
        tf = random_transform(rng)
        pose = Pose6D(tf.rotation, tf.translation)
        for gt in hand3.grasp_types:
            aligned = align_to_antipodal(pose, gt)
            R = aligned.rotation
            # approach axis lands on the antipodal frame's z
            assert np.allclose(R @ gt.approach_axis, pose.rotation[:, 2], atol=1e-9)
            # closing axis (component orthogonal to approach) lands on x
            c = gt.principal_closing_axis
            c_perp = c - np.dot(c, gt.approach_axis) * gt.approach_axis
            c_perp /= np.linalg.norm(c_perp)
            assert np.allclose(R @ c_perp, pose.rotation[:, 0], atol=1e-9)
            assert np.allclose(aligned.translation, pose.translation)


def test_candidates_from_cgr(slab, hand3):
    cgr = compute_cgr(slab, RigidTransform(rotation_z(0.06), np.zeros(3)))
    candidates = candidates_from_cgr(cgr, hand3)
    assert len(candidates) == len(hand3.grasp_types)
    assert [c.grasp_type_id for c in candidates] == [0, 1, 2, 3]
    scores = {c.antipodal_score for c in candidates}
    assert len(scores) == 1  # all types share the CGR's best antipodal score
    pose = query_grasp_pose(cgr)
    for c in candidates:
        assert np.allclose(c.pose.translation, pose.translation, atol=1e-12)
        assert c.source_cgr is cgr


def test_candidate_score_validation(slab, hand3):
    cgr = compute_cgr(slab, RigidTransform.identity())
    pose = query_grasp_pose(cgr)
    with pytest.raises(HandError):
        GraspCandidate(pose, 0, cgr, antipodal_score=1.5)
    with pytest.raises(HandError):
        GraspCandidate(pose, 0, cgr, antipodal_score=0.5, decision_score=-0.1)


# ---------------------------------------------------------------------------
# Collision checking


def _pinch_candidate(hand3, rotation=None, translation=(0, 0, 0)):
    p = CgrGridParams()
    grid = np.zeros((p.n_sections, p.n_angles, 2))
    grid[:, :, 0] = 0.01
    cgr = Cgr(RigidTransform.identity(), grid, p)
    pose = Pose6D(rotation if rotation is not None else np.eye(3), np.asarray(translation, float))
    return GraspCandidate(pose, 0, cgr, antipodal_score=1.0)


def test_collision_detects_points_in_palm(hand3):
    gt = hand3.type(0)
    cand = _pinch_candidate(hand3)
    lo, hi = gt.collision_mesh.bounds()
    inside = PointCloud(((lo + hi) / 2)[None, :])
    assert hand_scene_collision(cand, gt, inside, voxel_size=0.005)
    far = PointCloud(np.array([[0.5, 0.5, 0.5]]))
    assert not hand_scene_collision(cand, gt, far, voxel_size=0.005)
    assert not hand_scene_collision(cand, gt, PointCloud(np.zeros((0, 3))), 0.005)


def test_collision_equivariant_under_pose(hand3):
    gt = hand3.type(0)
    rng = np.random.default_rng(1)
    lo, hi = gt.collision_mesh.bounds()
    pts = rng.uniform(lo - 0.02, hi + 0.02, (200, 3))
    base = _pinch_candidate(hand3)
    want = [
        hand_scene_collision(base, gt, PointCloud(p[None, :]), 0.005) for p in pts
    ]
    tf = random_transform(rng)
    moved = _pinch_candidate(hand3, rotation=tf.rotation, translation=tf.translation)
    got = [
        hand_scene_collision(moved, gt, PointCloud(tf.apply(p)[None, :]), 0.005)
        for p in pts
    ]
    assert got == want


# ---------------------------------------------------------------------------
# Fingertip contacts


def test_fingertip_contacts_on_cube(cube, hand3):
    # pinch centered in the cube: fingers close along +-x onto the side faces
    cand = _pinch_candidate(hand3)
    contacts = fingertip_contacts(cand, hand3.type(0), cube)
    assert len(contacts) == 2
    by_x = sorted(contacts, key=lambda c: c.position[0])
    assert np.allclose(by_x[0].position, [-0.025, 0, 0], atol=1e-9)
    assert np.allclose(by_x[1].position, [0.025, 0, 0], atol=1e-9)
    # normals point into the object, along each finger's push
    assert np.allclose(by_x[0].normal, [1, 0, 0], atol=1e-12)
    assert np.allclose(by_x[1].normal, [-1, 0, 0], atol=1e-12)


def test_fingertip_misses_produce_no_contact(cube, hand3):
    cand = _pinch_candidate(hand3, translation=(0, 0, 0.2))  # far above the cube
    assert fingertip_contacts(cand, hand3.type(0), cube) == []


def test_fingertip_respects_travel_limit(cube, hand3):
    gt = hand3.type(0)
    short = GraspTypeSpec(
        0,
        "short",
        gt.principal_closing_axis,
        gt.approach_axis,
        gt.fingertip_rays,
        gt.collision_mesh,
        max_close_travel=0.01,  # fingers stop before reaching the cube
    )
    cand = _pinch_candidate(hand3)
    assert fingertip_contacts(cand, short, cube) == []
