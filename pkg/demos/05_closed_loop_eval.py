"""Closed-loop policy evaluation over the HTTP wire.

The simulator and the policy are separate processes in production; here the
reference expert policy is served over HTTP on a local port and the harness
talks to it through the same wire contract a learned model would use. A noop
policy demonstrates the timeout path, and injected transport faults show the
policy_error path (distinct from task failure).
"""

import numpy as np

from sceneforge.episodes import (
    HttpPolicyTransport,
    LocalPolicyTransport,
    NoopPolicy,
    expert_for_scene,
    run_episode,
    serve_policy,
)
from sceneforge.evaluation import generate_eval_config
from sceneforge.scenegraph import SceneEdge, SceneNode, solve_placement
from sceneforge.world import make_world


def build_scene(seed):
    nodes = [
        SceneNode("table", "a.table", "table", np.array([0.8, 0.6, 0.74])),
        SceneNode("cube", "a.cube", "cube", np.array([0.05, 0.05, 0.05]),
                  task_tag="subject"),
        SceneNode("tray", "a.tray", "tray", np.array([0.25, 0.18, 0.04]),
                  task_tag="target"),
    ]
    edges = [SceneEdge("on", "cube", "table", {}), SceneEdge("on", "tray", "table", {})]
    return solve_placement(nodes, edges, seed=seed)


scene = build_scene(seed=5)
cfg = generate_eval_config(scene, "place")
print(f"task: {cfg.instruction!r}")
print(f"stages: {[s.name for s in cfg.stages]}, timeout={cfg.timeout_steps} steps")

server = serve_policy(expert_for_scene(scene, "cube", "tray"))
try:
    transport = HttpPolicyTransport(server.base_url)
    print(f"\npolicy service healthy: {transport.health()} at {server.base_url}")
    record = run_episode(make_world(scene, seed=5), cfg, transport,
                         episode_id="expert-demo", record=False)
    print(f"expert over the wire: {record.status} at step "
          f"{record.timing['final_step']} ({record.timing['policy_calls']} calls)")
    for stage in record.result.stage_results:
        print(f"  {stage.name}: satisfied={stage.satisfied} "
              f"step={stage.first_satisfied_step}")
finally:
    server.stop()

record = run_episode(make_world(scene, seed=5), cfg,
                     LocalPolicyTransport(NoopPolicy()), record=False)
print(f"\nnoop policy: {record.status} at exactly step {record.timing['final_step']} "
      f"(justification: {record.result.justification!r})")

flaky = LocalPolicyTransport(expert_for_scene(scene, "cube", "tray"), drop_every=40)
record = run_episode(make_world(scene, seed=5), cfg, flaky, record=False)
print(f"flaky transport: {record.status} "
      f"(never misreported as a task failure)")
