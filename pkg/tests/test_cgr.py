import numpy as np
import pytest

from cgrkit.cgr import (
    Cgr,
    CgrError,
    CgrGridParams,
    antipodal_rep,
    compute_cgr,
    compute_cgrs,
    graspness,
    query_grasp_pose,
)
from cgrkit.geometry import RigidTransform, rotation_z

from conftest import random_transform


# ---------------------------------------------------------------------------
# Grid parameters


def test_default_grid_shape_and_flat_size():
    p = CgrGridParams()
    assert p.n_angles == 48
    assert p.n_sections == 5
    assert p.section_depths == (0.005, 0.01, 0.02, 0.03, 0.04)
    assert p.flat_size == 480


def test_grid_params_validation():
    with pytest.raises(CgrError):
        CgrGridParams(n_angles=7)
    with pytest.raises(CgrError):
        CgrGridParams(n_sections=2, section_depths=(0.02, 0.01))
    with pytest.raises(CgrError):
        CgrGridParams(section_depths=(0.01,))  # length mismatch
    with pytest.raises(CgrError):
        CgrGridParams(d_max=0.0)


def _random_cgr(rng, params=None):
    params = params or CgrGridParams()
    d = rng.uniform(0.0, params.d_max * 1.2, (params.n_sections, params.n_angles))
    th = np.where(
        d < params.d_max,
        rng.uniform(0.0, np.pi / 2, d.shape),
        params.theta_sentinel,
    )
    return Cgr(RigidTransform.identity(), np.stack([d, th], axis=2), params)


def test_flatten_unflatten_roundtrip():
    rng = np.random.default_rng(0)
    cgr = _random_cgr(rng)
    flat = cgr.flatten()
    assert flat.shape == (480,)
    back = Cgr.unflatten(flat, cgr.frame, cgr.params)
    assert np.array_equal(back.grid, cgr.grid)


def test_flatten_is_section_major_interleaved():
    rng = np.random.default_rng(1)
    cgr = _random_cgr(rng)
    flat = cgr.flatten()
    p = cgr.params
    for j in (0, 2, 4):
        for i in (0, 13, 47):
            base = 2 * (j * p.n_angles + i)
            assert flat[base] == cgr.grid[j, i, 0]
            assert flat[base + 1] == cgr.grid[j, i, 1]


# ---------------------------------------------------------------------------
# Analytic CGR oracles


def test_cgr_slab_analytic(slab):
    """Frame at the slab center: rays exit through 0.02 m of material on the
    +-x sides; distance 0.02/|cos a|, normal angle arccos|cos a|."""
    p = CgrGridParams()
    cgr = compute_cgr(slab, RigidTransform.identity(), p)
    for j in range(p.n_sections):
        for i, alpha in enumerate(p.alphas):
            c = abs(np.cos(alpha))
            if c > 1e-12 and 0.02 / c <= p.d_max:
                assert abs(cgr.grid[j, i, 0] - 0.02 / c) < 1e-6
                assert abs(cgr.grid[j, i, 1] - np.arccos(c)) < 1e-6
            else:
                assert cgr.grid[j, i, 0] == p.d_max
                assert cgr.grid[j, i, 1] == p.theta_sentinel


def test_cgr_cube_analytic(cube):
    """Frame on a cube face with z pointing inward: square-section distances
    0.025/max(|cos a|, |sin a|)."""
    p = CgrGridParams()
    frame = RigidTransform(np.eye(3), [0.0, 0.0, -0.025])
    cgr = compute_cgr(cube, frame, p)
    for j in range(p.n_sections):
        for i, alpha in enumerate(p.alphas):
            m = max(abs(np.cos(alpha)), abs(np.sin(alpha)))
            assert abs(cgr.grid[j, i, 0] - 0.025 / m) < 1e-6
            assert abs(cgr.grid[j, i, 1] - np.arccos(m)) < 1e-6


def test_cgr_sphere_analytic(sphere):
    """Frame at the sphere's south pole, z toward the center: section at
    depth d has circle radius sqrt(r^2 - (d - r)^2); normal angle has
    cos(theta) = rho / r."""
    r = 0.03
    p = CgrGridParams()
    frame = RigidTransform(np.eye(3), [0.0, 0.0, -r])
    cgr = compute_cgr(sphere, frame, p)
    for j, d in enumerate(p.section_depths):
        rho = np.sqrt(r**2 - (d - r) ** 2)
        got = cgr.grid[j, :, 0]
        assert np.all(np.abs(got - rho) / rho < 1e-2)
        # facet normals wobble; allow a few degrees
        assert np.all(np.abs(cgr.grid[j, :, 1] - np.arccos(rho / r)) < 0.1)


def test_cgr_plates_analytic(plates):
    """Frame centered in the gap between two walls 0.02 m away: distances
    0.02/|cos a|; rays enter the material from outside so the outward hit
    normal opposes them (theta = pi - arccos|cos a|)."""
    p = CgrGridParams()
    cgr = compute_cgr(plates, RigidTransform.identity(), p)
    for j in range(p.n_sections):
        for i, alpha in enumerate(p.alphas):
            c = abs(np.cos(alpha))
            if c > 1e-12 and 0.02 / c <= p.d_max:
                assert abs(cgr.grid[j, i, 0] - 0.02 / c) < 1e-6
                assert abs(cgr.grid[j, i, 1] - (np.pi - np.arccos(c))) < 1e-6
            else:
                assert cgr.grid[j, i, 0] == p.d_max


def test_cgr_miss_everything(cube):
    frame = RigidTransform(np.eye(3), [1.0, 1.0, 1.0])
    cgr = compute_cgr(cube, frame)
    assert np.all(cgr.grid[:, :, 0] == cgr.params.d_max)
    assert np.all(cgr.grid[:, :, 1] == cgr.params.theta_sentinel)
    assert not cgr.hits.any()


def test_compute_cgrs_matches_single(cube, slab):
    rng = np.random.default_rng(2)
    frames = [random_transform(rng, t_scale=0.03) for _ in range(5)]
    batch = compute_cgrs(cube, frames)
    for frame, cgr in zip(frames, batch):
        single = compute_cgr(cube, frame)
        assert np.array_equal(cgr.grid, single.grid)


# ---------------------------------------------------------------------------
# SE(3) equivariance


def test_cgr_se3_equivariance(cube, slab, sphere):
    # base frames twisted off the fixtures' symmetry axes so that no ray is
    # exactly perpendicular to a face (arccos is ill-conditioned there)
    from conftest import random_rotation

    rng = np.random.default_rng(3)
    # a generic pose on the sphere keeps rays away from tessellation edges,
    # where the chosen facet (and its normal) could flip under the transform
    generic = random_rotation(np.random.default_rng(99)) @ rotation_z(0.06)
    base_frames = {
        id(cube): RigidTransform(rotation_z(0.06), [0.0, 0.0, -0.025]),
        id(slab): RigidTransform(rotation_z(0.06), np.zeros(3)),
        id(sphere): RigidTransform(generic, [0.0011, -0.0007, -0.0293]),
    }
    for mesh in (cube, slab, sphere):
        frame = base_frames[id(mesh)]
        ref = compute_cgr(mesh, frame)
        for _ in range(10):
            tf = random_transform(rng)
            moved = compute_cgr(mesh.transformed(tf), tf.compose(frame))
            assert np.max(np.abs(moved.grid - ref.grid)) < 1e-6


def test_query_pose_commutes_with_transform(slab):
    # slab + twisted frame: the best antipodal pair is unique, so the winner
    # cannot flip between symmetric ties under the transform
    rng = np.random.default_rng(4)
    frame = RigidTransform(rotation_z(0.06), np.zeros(3))
    cgr = compute_cgr(slab, frame)
    pose = query_grasp_pose(cgr)
    for _ in range(10):
        tf = random_transform(rng)
        moved = compute_cgr(slab.transformed(tf), tf.compose(frame))
        pose_t = query_grasp_pose(moved)
        assert np.max(np.abs(pose_t.rotation - tf.rotation @ pose.rotation)) < 1e-9
        assert np.max(np.abs(pose_t.translation - tf.apply(pose.translation))) < 1e-9


# ---------------------------------------------------------------------------
# Antipodal representation (brute-force oracle)


def _oracle_antipodal(cgr):
    p = cgr.params
    half = p.n_angles // 2
    m = p.n_sections
    width = np.zeros((m, half))
    friction = np.zeros((m, half))
    score = np.zeros((m, half))
    for j in range(m):
        for i in range(half):
            d1, th1 = cgr.grid[j, i]
            d2, th2 = cgr.grid[j, i + half]
            width[j, i] = 2.0 * max(d1, d2)
            friction[j, i] = max(np.tan(th1), np.tan(th2))
            if d1 < p.d_max and d2 < p.d_max:
                score[j, i] = min(max(1.0 - friction[j, i], 0.0), 1.0)
    return width, friction, score


def test_antipodal_matches_bruteforce_oracle():
    rng = np.random.default_rng(5)
    for _ in range(50):
        cgr = _random_cgr(rng)
        rep = antipodal_rep(cgr)
        w, f, s = _oracle_antipodal(cgr)
        assert np.max(np.abs(rep.width - w)) < 1e-12
        assert np.max(np.abs(rep.friction - f)) < 1e-12
        assert np.max(np.abs(rep.score - s)) < 1e-12


def test_antipodal_slab_perfect_score(slab):
    cgr = compute_cgr(slab, RigidTransform.identity())
    rep = antipodal_rep(cgr)
    # the 0/180-degree pair: width is the full slab thickness, flat-on contact
    assert abs(rep.width[0, 0] - 0.04) < 1e-9
    assert abs(rep.friction[0, 0]) < 1e-9
    assert abs(rep.score[0, 0] - 1.0) < 1e-9


def test_best_tie_break_lowest_section_then_angle():
    p = CgrGridParams()
    grid = np.zeros((p.n_sections, p.n_angles, 2))
    grid[:, :, 0] = 0.01  # all hit
    grid[:, :, 1] = 0.0  # all perfect -> every entry scores 1.0
    cgr = Cgr(RigidTransform.identity(), grid, p)
    i, j, s = antipodal_rep(cgr).best()
    assert (i, j, s) == (0, 0, 1.0)
    # degrade everything except a single interior winner
    grid[:, :, 1] = 1.0
    grid[2, 5, 1] = 0.0
    grid[2, 5 + p.n_angles // 2, 1] = 0.0
    cgr = Cgr(RigidTransform.identity(), grid, p)
    i, j, s = antipodal_rep(cgr).best()
    assert (i, j) == (5, 2)
    assert s == 1.0


# ---------------------------------------------------------------------------
# Graspness


def _oracle_graspness(cgr, theta_threshold, score_threshold):
    p = cgr.params
    nm = p.n_sections * p.n_angles
    low = 0
    for j in range(p.n_sections):
        for i in range(p.n_angles):
            if cgr.grid[j, i, 0] < p.d_max and cgr.grid[j, i, 1] < theta_threshold:
                low += 1
    _w, _f, score = _oracle_antipodal(cgr)
    good = int((score >= score_threshold).sum())
    return low / nm + good / (nm / 2)


def test_graspness_matches_count_oracle():
    rng = np.random.default_rng(6)
    for _ in range(20):
        cgr = _random_cgr(rng)
        got = graspness(cgr, theta_threshold=0.3, score_threshold=0.9)
        want = _oracle_graspness(cgr, 0.3, 0.9)
        assert abs(got - want) < 1e-12


def test_graspness_extremes(slab, cube):
    empty = compute_cgr(cube, RigidTransform(np.eye(3), [1.0, 1.0, 1.0]))
    assert graspness(empty) == 0.0
    flat = compute_cgr(slab, RigidTransform.identity())
    assert graspness(flat) > 0.0


def test_graspness_validates_thresholds(slab):
    cgr = compute_cgr(slab, RigidTransform.identity())
    with pytest.raises(CgrError):
        graspness(cgr, theta_threshold=0.0)
    with pytest.raises(CgrError):
        graspness(cgr, score_threshold=1.5)


# ---------------------------------------------------------------------------
# Pose query


def test_query_pose_formula():
    p = CgrGridParams()
    grid = np.zeros((p.n_sections, p.n_angles, 2))
    grid[:, :, 0] = p.d_max  # all miss
    grid[:, :, 1] = p.theta_sentinel
    # single antipodal winner at angle 7, section 3
    i_win, j_win = 7, 3
    for i in (i_win, i_win + p.n_angles // 2):
        grid[j_win, i, 0] = 0.01
        grid[j_win, i, 1] = 0.1
    rng = np.random.default_rng(7)
    frame = random_transform(rng)
    cgr = Cgr(frame, grid, p)
    pose = query_grasp_pose(cgr)
    alpha = 2 * np.pi * i_win / p.n_angles
    R_expect = frame.rotation @ rotation_z(alpha)
    t_expect = frame.translation + p.section_depths[j_win] * R_expect[:, 2]
    assert np.allclose(pose.rotation, R_expect, atol=1e-12)
    assert np.allclose(pose.translation, t_expect, atol=1e-12)
    assert pose.source_section == j_win
    assert abs(pose.source_alpha - alpha) < 1e-12


def test_query_pose_raises_without_contact(cube):
    empty = compute_cgr(cube, RigidTransform(np.eye(3), [1.0, 1.0, 1.0]))
    with pytest.raises(CgrError):
        query_grasp_pose(empty)


# ---------------------------------------------------------------------------
# Serialization


def test_cgr_bytes_roundtrip_bitwise():
    rng = np.random.default_rng(8)
    p = CgrGridParams()
    cgr = _random_cgr(rng)
    blob = cgr.to_bytes()
    assert len(blob) == Cgr.record_size(p)
    back = Cgr.from_bytes(blob, p)
    assert back.to_bytes() == blob
    # values survive at float32 precision
    assert np.array_equal(back.grid.astype(np.float32), cgr.grid.astype(np.float32))
    assert np.max(np.abs(back.frame.rotation - cgr.frame.rotation)) < 1e-6


def test_cgr_from_bytes_reorthonormalizes():
    rng = np.random.default_rng(9)
    cgr = _random_cgr(rng)
    back = Cgr.from_bytes(cgr.to_bytes(), cgr.params)
    R = back.frame.rotation
    assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) > 0
