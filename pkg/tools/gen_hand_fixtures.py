"""Regenerate the bundled synthetic hand fixtures.

Three archetypes (3-, 4- and 5-finger) with 4/10/8 grasp types. Fingertip
layouts are hand-designed so grasp types have genuinely different contact
behavior on desk-scale objects; collision meshes are simple palm boxes.

Run from the repo root:  python3 tools/gen_hand_fixtures.py
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from cgrkit.geometry import make_box, save_obj  # noqa: E402

DATA = os.path.join(os.path.dirname(__file__), "..", "src", "cgrkit", "data", "hands")

REACH = 0.08  # fingertip start distance from the grasp line
TRAVEL = 0.15


def palm(name, extents=(0.06, 0.06, 0.05), center=(0.0, 0.0, -0.055)):
    path = os.path.join(DATA, name)
    save_obj(make_box(extents, center), path)
    return name


def ray(ox, oy, oz, dx, dy, dz):
    return f"  fingertip {ox:g} {oy:g} {oz:g}  {dx:g} {dy:g} {dz:g}\n"


def block(out, tid, name, rays, mesh, approach="0 0 1", closing="1 0 0", travel=TRAVEL):
    out.append(f"grasp_type {tid}\n")
    out.append(f"  name {name}\n")
    out.append(f"  approach {approach}\n")
    out.append(f"  closing {closing}\n")
    out.append(f"  max_close_travel {travel:g}\n")
    out.append(f"  collision_mesh {mesh}\n")
    out.extend(rays)
    out.append("end\n")


def write_hand(filename, name, blocks):
    out = [f"name {name}\n\n"]
    for b in blocks:
        out.extend(b)
        out.append("\n")
    with open(os.path.join(DATA, filename), "w") as f:
        f.write("".join(out))


def three_finger():
    mesh = palm("palm3.obj")
    blocks = []

    def make(tid, name, rays):
        b = []
        block(b, tid, name, rays, mesh)
        blocks.append(b)

    r = REACH
    # 0: clean opposing pinch at the grasp plane
    make(0, "pinch", [ray(r, 0, 0, -1, 0, 0), ray(-r, 0, 0, 1, 0, 0)])
    # 1: tripod, two fingers on one side
    make(1, "tripod", [
        ray(r, 0.025, 0, -1, 0, 0),
        ray(r, -0.025, 0, -1, 0, 0),
        ray(-r, 0, 0, 1, 0, 0),
    ])
    # 2: pinch displaced past the grasp plane (deeper along approach)
    make(2, "deep-pinch", [ray(r, 0, 0.03, -1, 0, 0), ray(-r, 0, 0.03, 1, 0, 0)])
    # 3: wide lateral pinch, fingers offset far along the width axis
    make(3, "wide-span", [ray(r, 0.045, 0, -1, 0, 0), ray(-r, -0.045, 0, 1, 0, 0)])

    write_hand("archetype3.hand", "three-finger archetype", blocks)


def four_finger():
    mesh = palm("palm4.obj", extents=(0.07, 0.07, 0.05))
    blocks = []
    r = REACH
    layouts = [
        ("pad-pinch", [ray(r, 0, 0, -1, 0, 0), ray(-r, 0, 0, 1, 0, 0)]),
        ("tripod", [ray(r, 0.02, 0, -1, 0, 0), ray(r, -0.02, 0, -1, 0, 0), ray(-r, 0, 0, 1, 0, 0)]),
        ("quad", [
            ray(r, 0.03, 0, -1, 0, 0), ray(r, -0.03, 0, -1, 0, 0),
            ray(-r, 0.03, 0, 1, 0, 0), ray(-r, -0.03, 0, 1, 0, 0),
        ]),
        ("deep-pinch", [ray(r, 0, 0.025, -1, 0, 0), ray(-r, 0, 0.025, 1, 0, 0)]),
        ("shallow-pinch", [ray(r, 0, -0.02, -1, 0, 0), ray(-r, 0, -0.02, 1, 0, 0)]),
        ("wide-span", [ray(r, 0.05, 0, -1, 0, 0), ray(-r, -0.05, 0, 1, 0, 0)]),
        ("cross", [ray(0, r, 0, 0, -1, 0), ray(0, -r, 0, 0, 1, 0)]),
        ("claw", [ray(r, 0, -0.03, -1, 0, 0.3), ray(-r, 0, -0.03, 1, 0, 0.3)]),
        ("hook", [ray(r, 0.02, 0.02, -1, 0, 0), ray(-r, 0.02, 0.02, 1, 0, 0)]),
        ("power", [
            ray(r, 0.04, 0.01, -1, 0, 0), ray(r, -0.04, 0.01, -1, 0, 0),
            ray(-r, 0.04, 0.01, 1, 0, 0), ray(-r, -0.04, 0.01, 1, 0, 0),
        ]),
    ]
    for tid, (name, rays) in enumerate(layouts):
        b = []
        block(b, tid, name, rays, mesh)
        blocks.append(b)
    write_hand("archetype4.hand", "four-finger archetype", blocks)


def five_finger():
    mesh = palm("palm5.obj", extents=(0.08, 0.07, 0.05))
    blocks = []
    r = REACH
    layouts = [
        ("pinch", [ray(r, 0, 0, -1, 0, 0), ray(-r, 0, 0, 1, 0, 0)]),
        ("tripod", [ray(r, 0.02, 0, -1, 0, 0), ray(r, -0.02, 0, -1, 0, 0), ray(-r, 0, 0, 1, 0, 0)]),
        ("four-jaw", [
            ray(r, 0.025, 0, -1, 0, 0), ray(r, -0.025, 0, -1, 0, 0),
            ray(-r, 0.025, 0, 1, 0, 0), ray(-r, -0.025, 0, 1, 0, 0),
        ]),
        ("five-wrap", [
            ray(r, 0.035, 0, -1, 0, 0), ray(r, 0, 0, -1, 0, 0), ray(r, -0.035, 0, -1, 0, 0),
            ray(-r, 0.02, 0, 1, 0, 0), ray(-r, -0.02, 0, 1, 0, 0),
        ]),
        ("deep-pinch", [ray(r, 0, 0.03, -1, 0, 0), ray(-r, 0, 0.03, 1, 0, 0)]),
        ("lateral", [ray(0, r, 0, 0, -1, 0), ray(0, -r, 0, 0, 1, 0)]),
        ("wide-span", [ray(r, 0.05, 0, -1, 0, 0), ray(-r, -0.05, 0, 1, 0, 0)]),
        ("angled", [ray(r, 0, -0.04, -1, 0, 0.4), ray(-r, 0, -0.04, 1, 0, 0.4)]),
    ]
    for tid, (name, rays) in enumerate(layouts):
        b = []
        block(b, tid, name, rays, mesh)
        blocks.append(b)
    write_hand("archetype5.hand", "five-finger archetype", blocks)


if __name__ == "__main__":
    os.makedirs(DATA, exist_ok=True)
    three_finger()
    four_finger()
    five_finger()
    print("wrote fixtures to", DATA)
