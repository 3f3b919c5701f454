#!/usr/bin/env python3
"""Generates the benchmark scenario suite (TOML files in this directory)."""

import math
import os

HERE = os.path.dirname(os.path.abspath(__file__))

POINT_ROBOT = """
[robot]
kind = "point"
radius = 0.05
limits_min = [-1.5, -1.5]
limits_max = [1.5, 1.5]
"""

def arm_robot(n=3):
    return """
[robot]
kind = "planar_arm"
base = [0.0, 0.0]
link_lengths = [0.45, 0.35, 0.25]
link_radii = [0.05, 0.045, 0.04]
ccbs_per_link = 2
masses = [1.2, 0.8, 0.5]
izz = [0.02, 0.012, 0.006]
limits_min = [-3.141592653589793, -2.9, -2.9]
limits_max = [3.141592653589793, 2.9, 2.9]
"""

def header(sid, hint, repeats=5):
    return f"""schema_version = 1
id = "{sid}"
class_hint = "{hint}"
repeats = {repeats}
"""

def world(eps, obstacles, bounds=((-1.5, -1.5), (1.5, 1.5)), cell=0.01):
    out = f"""
[world]
bounds = [[{bounds[0][0]}, {bounds[0][1]}], [{bounds[1][0]}, {bounds[1][1]}]]
cell = {cell}
eps = {eps}
eps_d = 0.01
"""
    for ob in obstacles:
        out += "\n[[world.obstacles]]\n"
        for k, v in ob.items():
            if isinstance(v, (list, tuple)):
                out += f"{k} = [{', '.join(str(x) for x in v)}]\n"
            else:
                out += f'{k} = "{v}"\n' if isinstance(v, str) else f"{k} = {v}\n"
    return out

def task(start, goal):
    s = ", ".join(str(x) for x in start)
    g = ", ".join(str(x) for x in goal)
    return f"""
[task]
start = [{s}]
goal = [{g}]
"""

def disc(c, r):
    return {"kind": "disc", "center": list(c), "radius": r}

def box(c, h):
    return {"kind": "box", "center": list(c), "half": list(h)}

def capsule(a, b, r):
    return {"kind": "capsule", "a": list(a), "b": list(b), "radius": r}

SCENARIOS = {}

# ---------------------------------------------------------------- class A
SCENARIOS["a1_open_point"] = (
    header("a1_open_point", "A") + world(0.05, [disc((0.0, 0.8), 0.25), disc((-0.5, -0.9), 0.3)])
    + POINT_ROBOT + task((-1.2, 0.0), (1.2, 0.0))
)
SCENARIOS["a2_graze_point"] = (
    header("a2_graze_point", "A")
    + world(0.05, [disc((0.0, 0.12), 0.06), disc((0.6, -0.14), 0.07)])
    + POINT_ROBOT + task((-1.2, 0.0), (1.2, 0.0))
)
SCENARIOS["a3_clip_point"] = (
    header("a3_clip_point", "A") + world(0.05, [disc((-0.2, 0.05), 0.09)])
    + POINT_ROBOT + task((-1.2, 0.0), (1.2, 0.0))
)
SCENARIOS["a4_arm_reach"] = (
    header("a4_arm_reach", "A") + world(0.05, [disc((0.55, 0.62), 0.1)])
    + arm_robot() + task((0.1, 0.2, 0.1), (1.1, 0.4, 0.3))
)
SCENARIOS["a5_corner_point"] = (
    header("a5_corner_point", "A")
    + world(0.05, [box((0.35, 0.3), (0.12, 0.12))])
    + POINT_ROBOT + task((-1.2, -0.2), (1.2, 0.1))
)
SCENARIOS["a6_arm_clear"] = (
    header("a6_arm_clear", "A")
    + world(0.05, [box((-0.7, 0.55), (0.12, 0.1)), disc((0.9, -0.85), 0.12)])
    + arm_robot() + task((-0.4, -0.3, 0.2), (0.7, 0.3, -0.2))
)

# ---------------------------------------------------------------- class B
SCENARIOS["b1_disc_block_point"] = (
    header("b1_disc_block_point", "B") + world(0.05, [disc((0.0, 0.0), 0.5)])
    + POINT_ROBOT + task((-1.2, 0.0), (1.2, 0.0))
)
SCENARIOS["b2_double_disc_point"] = (
    header("b2_double_disc_point", "B")
    + world(0.05, [disc((-0.45, 0.03), 0.3), disc((0.45, -0.05), 0.32)])
    + POINT_ROBOT + task((-1.2, 0.0), (1.2, 0.0))
)
SCENARIOS["b3_wall_gap_point"] = (
    header("b3_wall_gap_point", "B")
    + world(0.05, [box((0.0, -0.45), (0.45, 0.75)), box((0.0, 1.0), (0.45, 0.45))])
    + POINT_ROBOT + task((-1.2, 0.0), (1.2, 0.0))
)
SCENARIOS["b4_arm_block"] = (
    header("b4_arm_block", "B") + world(0.05, [capsule((1.02, 0.02), (0.55, 0.82), 0.11)])
    + arm_robot() + task((-0.2, -0.2, 0.0), (1.3, 0.3, 0.4))
)
SCENARIOS["b5_capsule_point"] = (
    header("b5_capsule_point", "B")
    + world(0.05, [capsule((-0.25, -0.55), (0.25, 0.6), 0.45)])
    + POINT_ROBOT + task((-1.2, 0.0), (1.2, 0.0))
)
SCENARIOS["b6_arm_two_obstacles"] = (
    header("b6_arm_two_obstacles", "B")
    + world(0.05, [capsule((1.0, -0.05), (0.7, 0.45), 0.1), box((-0.2, 0.82), (0.2, 0.12))])
    + arm_robot() + task((-0.6, 0.4, 0.3), (1.0, -0.3, -0.2))
)

# ---------------------------------------------------------------- class C
SCENARIOS["c1_corridor_point"] = (
    header("c1_corridor_point", "C")
    + world(0.05, [
        box((0.0, 0.0), (0.95, 0.7)),       # deep block on the line
    ])
    + POINT_ROBOT + task((-1.25, 0.0), (1.25, 0.0))
)
SCENARIOS["c2_cshape_point"] = (
    header("c2_cshape_point", "C")
    + world(0.05, [
        box((0.75, 0.0), (0.12, 0.75)),     # C back
        box((0.0, 0.7), (0.85, 0.12)),      # C top
        box((0.0, -0.7), (0.85, 0.12)),     # C bottom
        box((0.0, 0.0), (0.95, 0.6)),       # pocket filler
    ])
    + POINT_ROBOT + task((-1.25, 0.0), (1.25, 0.0))
)
SCENARIOS["b7_slot_point"] = (
    header("b7_slot_point", "B")
    + world(0.05, [
        box((-0.62, -0.28), (0.42, 0.44)),  # flank block on the approach
        box((0.72, -0.28), (0.38, 0.44)),   # flank block on the exit
        box((0.0, -0.65), (0.2, 0.85)),
        box((0.0, 1.2), (0.2, 0.3)),
        box((0.0, 0.55), (0.2, 0.08)),      # shelf lip splitting the opening
    ])
    + POINT_ROBOT + task((-1.25, -0.3), (1.25, -0.3))
)
SCENARIOS["c4_wall_long_point"] = (
    header("c4_wall_long_point", "C")
    + world(0.05, [box((0.0, -0.25), (0.9, 1.1))])
    + POINT_ROBOT + task((-1.25, -0.2), (1.25, -0.2))
)
SCENARIOS["b9_arm_trap"] = (
    header("b9_arm_trap", "B")
    + world(0.05, [
        box((0.65, 0.45), (0.6, 0.2)),      # shelf above
        box((0.65, -0.45), (0.6, 0.2)),     # shelf below
        box((1.3, 0.0), (0.1, 0.65)),       # shelf back
        capsule((-0.9, 0.9), (-0.3, 1.3), 0.12),      # clutter across the swing

    ])
    + arm_robot() + task((1.85, 0.42, 0.35), (0.05, -0.05, 0.0))
)
SCENARIOS["b8_arm_fold"] = (
    header("b8_arm_fold", "B")
    + world(0.05, [disc((0.08, 0.98), 0.3), capsule((0.62, 0.85), (0.3, 1.1), 0.1)])
    + arm_robot() + task((0.3, 0.5, 0.5), (2.6, -0.6, -0.5))
)
SCENARIOS["c7_pocket_point"] = (
    header("c7_pocket_point", "C")
    + world(0.05, [
        box((0.0, 0.62), (0.9, 0.14)),
        box((0.0, -0.62), (0.9, 0.14)),
        box((0.85, 0.0), (0.14, 0.72)),
        box((0.0, 0.0), (0.95, 0.55)),      # meat of the pocket
    ])
    + POINT_ROBOT + task((-1.25, 0.0), (1.25, 0.0))
)
SCENARIOS["c8_double_wall_point"] = (
    header("c8_double_wall_point", "C")
    + world(0.05, [
        box((-0.45, -0.35), (0.62, 1.0)),
        box((0.45, 0.35), (0.62, 1.0)),
    ])
    + POINT_ROBOT + task((-1.25, 0.0), (1.25, 0.0))
)

SCENARIOS["c5_bay_point"] = (
    header("c5_bay_point", "C")
    + world(0.05, [
        box((0.1, -0.05), (0.9, 0.72)),     # deep bay block
        box((-0.75, -0.7), (0.3, 0.35)),    # side spur
    ])
    + POINT_ROBOT + task((-1.25, -0.25), (1.25, 0.2))
)
SCENARIOS["c9_plate_point"] = (
    header("c9_plate_point", "C")
    + world(0.05, [
        box((0.05, 0.1), (0.9, 0.6)),       # broad plate across the diagonal
        box((-0.9, 0.55), (0.25, 0.15)),
    ])
    + POINT_ROBOT + task((-1.25, 0.35), (1.25, -0.15))
)
SCENARIOS["c10_hook_point"] = (
    header("c10_hook_point", "C")
    + world(0.05, [
        box((0.0, 0.0), (1.0, 0.75)),       # deep slab
        box((-0.75, 1.1), (0.14, 0.38)),    # hook wall over the short way
    ])
    + POINT_ROBOT + task((-1.25, 0.1), (1.25, 0.1))
)

def main():
    for sid, text in SCENARIOS.items():
        path = os.path.join(HERE, f"{sid}.toml")
        with open(path, "w") as f:
            f.write(text)
    print(f"wrote {len(SCENARIOS)} scenarios")

if __name__ == "__main__":
    main()
