"""Automated demonstration collection with retry and rollback.

Candidate waypoint sequences come from grasp annotations crossed with place
samples; a reachability shell and swept-path collision filter rank them; the
executor tries them best-first, rolling the world back bit-exactly after a
failed attempt. Here the first attempt is deliberately sabotaged (grasp
offset 10 cm) so the retry machinery is visible.
"""

import numpy as np

from sceneforge.assets import AssetRecord, Catalog, box_hull
from sceneforge.collect import (
    SkillRequest,
    default_phase_evaluator,
    enumerate_candidates,
    execute_with_rollback,
    filter_feasible,
)
from sceneforge.geometry import GraspAnnotation, Pose
from sceneforge.scenegraph import SceneEdge, SceneNode, solve_placement
from sceneforge.world import make_world

top = GraspAnnotation(Pose(np.array([0.0, 0.0, 0.02])), np.array([0.0, 0.0, -1.0]),
                      width=0.06, label="top")
side = GraspAnnotation(Pose(np.array([0.0, 0.0, 0.01])), np.array([0.0, -1.0, 0.0]),
                       width=0.06, label="side")
catalog = Catalog([
    AssetRecord("a.cube", "cube", "demo cube", "/assets/cube.usd",
                np.array([0.05, 0.05, 0.05]), box_hull([0.05, 0.05, 0.05]), 0.1,
                grasp_annotations=(top, side)),
    AssetRecord("a.tray", "tray", "demo tray", "/assets/tray.usd",
                np.array([0.25, 0.18, 0.04]), box_hull([0.25, 0.18, 0.04]), 0.3),
    AssetRecord("a.table", "table", "demo table", "/assets/table.usd",
                np.array([0.5, 0.44, 0.74]), box_hull([0.5, 0.44, 0.74]), 20.0),
])

table = SceneNode("table", "a.table", "table", np.array([0.5, 0.44, 0.74]),
                  Pose(np.array([0.0, -0.05, 0.37])))
nodes = [table,
         SceneNode("cube", "a.cube", "cube", np.array([0.05, 0.05, 0.05])),
         SceneNode("tray", "a.tray", "tray", np.array([0.25, 0.18, 0.04]))]
edges = [SceneEdge("on", "cube", "table", {}), SceneEdge("on", "tray", "table", {})]
scene = solve_placement(nodes, edges, seed=17)

request = SkillRequest(skill="place", subject="cube", target="tray", seed=17)
world = make_world(scene, seed=17)

candidates = enumerate_candidates(request, scene, catalog)
print(f"enumerated {len(candidates)} candidate sequences "
      f"(2 grasp annotations x 3 place samples)")

feasible = filter_feasible(candidates, world)
print(f"feasible after shell/pitch/sweep filtering: {len(feasible)}")
for seq in feasible[:3]:
    print(f"  annotation={seq.provenance['annotation_label']:<5} "
          f"place_sample={seq.provenance['place_sample']} "
          f"clearance={seq.score * 1000:.1f} mm")

ranked = sorted(feasible, key=lambda s: -s.score)
result = execute_with_rollback(
    ranked, world, default_phase_evaluator(request),
    failure_injector=lambda attempt: attempt == 0,  # sabotage the first try
)
print(f"\nsucceeded on attempt {result.attempts}")
for before, after in result.rollback_digests:
    print(f"  pre-attempt digest == post-rollback digest: {before == after}")
cube = result.final_state.node("cube")
tray = result.final_state.node("tray")
print(f"cube bottom vs tray top: {abs(cube.box.bottom - tray.box.top) * 1000:.2f} mm")
print(f"trajectory length: {len(result.trajectory['steps'])} steps")
