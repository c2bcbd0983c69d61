import numpy as np
import pytest

from cgrkit import bundled_hand_path
from cgrkit.annotation import Scene, SceneInstance
from cgrkit.geometry import (
    RigidTransform,
    make_box,
    make_cylinder,
    make_icosphere,
    rotation_z,
)
from cgrkit.hand import load_hand_spec


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation via QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def random_transform(rng: np.random.Generator, t_scale: float = 0.3) -> RigidTransform:
    return RigidTransform(random_rotation(rng), rng.uniform(-t_scale, t_scale, 3))


@pytest.fixture(scope="session")
def cube():
    """Unit-scale test cube, 0.05 m on a side, centered at the origin."""
    return make_box((0.05, 0.05, 0.05))


@pytest.fixture(scope="session")
def sphere():
    return make_icosphere(0.03, subdivisions=4)


@pytest.fixture(scope="session")
def slab():
    """Thin slab: 0.04 m along x, wide in y/z."""
    return make_box((0.04, 0.2, 0.2))


@pytest.fixture(scope="session")
def plates():
    """Two parallel walls with a 0.04 m gap along x."""
    from cgrkit.geometry import merge_meshes

    left = make_box((0.01, 0.2, 0.2), center=(-0.025, 0.0, 0.0))
    right = make_box((0.01, 0.2, 0.2), center=(0.025, 0.0, 0.0))
    return merge_meshes([left, right])


@pytest.fixture(scope="session")
def hand3():
    return load_hand_spec(bundled_hand_path("archetype3"))


def simple_scene(meshes=None, positions=None) -> Scene:
    """One-to-three boxes resting on the table plane z = 0."""
    if meshes is None:
        meshes = {"box": make_box((0.05, 0.05, 0.05))}
    if positions is None:
        positions = {"box": (0.0, 0.0)}
    instances = []
    for i, (mesh_id, xy) in enumerate(positions.items()):
        lo, _ = meshes[mesh_id].bounds()
        pose = RigidTransform(rotation_z(0.0), [xy[0], xy[1], -lo[2]])
        instances.append(SceneInstance(mesh_id, pose))
    return Scene(instances, np.zeros(3), np.array([0.0, 0.0, 1.0]), meshes)


@pytest.fixture()
def box_scene():
    return simple_scene()
