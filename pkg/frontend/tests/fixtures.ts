// Shared payload fixtures mirroring real backend responses.

import type {
  EpisodeRecordView,
  JobView,
  ScenePayload,
  SceneGraph,
} from "../src/types.js";

export function makeScene(): SceneGraph {
  return {
    seed: 3,
    metadata: { generator: "sceneforge-0.1" },
    nodes: [
      {
        id: "workspace",
        asset_id: "region.workspace",
        semantic: "workspace",
        task_tag: null,
        size: [3.0, 3.0, 0.02],
        pose: { position: [0, 0, -0.01], orientation: [1, 0, 0, 0] },
      },
      {
        id: "tray",
        asset_id: "tray_00",
        semantic: "tray",
        task_tag: "target",
        size: [0.25, 0.18, 0.04],
        pose: { position: [0.1, 0.05, 0.02], orientation: [1, 0, 0, 0] },
      },
      {
        id: "cube_1",
        asset_id: "cube_00",
        semantic: "yellow cube",
        task_tag: "subject",
        size: [0.05, 0.05, 0.05],
        pose: {
          position: [0.12, 0.08, 0.065],
          orientation: [0.924, 0, 0, 0.383],
        },
      },
      {
        id: "cube_2",
        asset_id: "cube_00",
        semantic: "yellow cube",
        task_tag: null,
        size: [0.05, 0.05, 0.05],
        pose: { position: [0.05, 0.0, 0.065], orientation: [1, 0, 0, 0] },
      },
    ],
    edges: [
      { relation: "on", src: "cube_1", dst: "tray", params: {} },
      { relation: "on", src: "cube_2", dst: "tray", params: {} },
      { relation: "on", src: "tray", dst: "workspace", params: {} },
    ],
  };
}

export function makeScenePayload(version = 1): ScenePayload {
  return {
    version,
    scene: makeScene(),
    program_source: 'asset cube_1 = retrieve("yellow cube", k=1);\n',
    statement_diff: { added: [], removed: [] },
    node_diff: { added: [], removed: [], changed: [] },
    validation: { ok: true, violated_edges: [], colliding_pairs: [] },
  };
}

export function makeJob(overrides: Partial<JobView> = {}): JobView {
  return {
    job_id: "job123",
    kind: "episodes",
    status: "running",
    progress: { episode: 0, total: 1, current_step: 40 },
    ...overrides,
  };
}

export function makeRecord(
  status: EpisodeRecordView["status"],
  finalStep: number,
): EpisodeRecordView {
  return {
    episode_id: "ep0",
    instruction: "move the cube onto the tray",
    status,
    result: {
      success: status === "success",
      score: status === "success" ? 1.0 : 0.0,
      justification:
        status === "success"
          ? "all stages satisfied in order: grasp_subject@40, subject_at_target@90"
          : status === "timeout"
            ? "timeout"
            : "policy_error: request dropped",
      evidence: status === "success" ? [40, 90] : [],
      stage_results: [
        {
          name: "grasp_subject",
          satisfied: status === "success",
          first_satisfied_step: status === "success" ? 40 : null,
        },
        {
          name: "subject_at_target",
          satisfied: status === "success",
          first_satisfied_step: status === "success" ? 90 : null,
        },
      ],
    },
    timing: { final_step: finalStep },
  };
}

export type RouteHandler = (
  url: string,
  init: RequestInit | undefined,
) => { status: number; body: unknown } | undefined;

export function fakeFetch(handler: RouteHandler): typeof fetch {
  return (async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    const result = handler(url, init);
    if (!result) {
      return new Response(
        JSON.stringify({ error: { message: `no route for ${url}` } }),
        { status: 404, headers: { "Content-Type": "application/json" } },
      );
    }
    return new Response(JSON.stringify(result.body), {
      status: result.status,
      headers: { "Content-Type": "application/json" },
    });
  }) as typeof fetch;
}
