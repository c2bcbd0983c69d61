"""cgrkit: contact-centric grasp representation toolkit.

Computes grid-based grasp representations from meshes, scores antipodal
grasps, generates multi-finger candidates for parameterized hands, tests
force closure, simulates trial-and-error data collection, trains the grasp
decision classifier and runs geometry-coverage analysis.
"""

import os

from . import annotation, cgr, contacts, coverage, geometry, hand, model, pipeline

__version__ = "0.1.0"


def bundled_hand_path(name: str) -> str:
    """Path to a bundled hand fixture: 'archetype3', 'archetype4' or 'archetype5'."""
    path = os.path.join(os.path.dirname(__file__), "data", "hands", f"{name}.hand")
    if not os.path.exists(path):
        raise FileNotFoundError(f"no bundled hand '{name}'")
    return path
