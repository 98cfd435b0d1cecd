// Payload shapes mirroring the /api/v1 wire formats.

export interface Pose {
  position: [number, number, number];
  orientation: [number, number, number, number];
}

export interface SceneNode {
  id: string;
  asset_id: string;
  semantic: string;
  task_tag: string | null;
  size: [number, number, number];
  pose: Pose | null;
}

export interface SceneEdge {
  relation: "on" | "in" | "adjacent" | "aligned" | "stacked";
  src: string;
  dst: string;
  params: Record<string, unknown>;
}

export interface SceneGraph {
  seed: number;
  metadata: Record<string, string>;
  nodes: SceneNode[];
  edges: SceneEdge[];
}

export interface ValidationSummary {
  ok: boolean;
  violated_edges: { relation: string; src: string; dst: string }[];
  colliding_pairs: [string, string][];
}

export interface NodeDiff {
  added: string[];
  removed: string[];
  changed: string[];
}

export interface ScenePayload {
  version: number;
  scene: SceneGraph;
  program_source: string;
  statement_diff: { added: string[]; removed: string[] };
  node_diff: NodeDiff;
  validation: ValidationSummary;
}

export interface SessionView {
  session_id: string;
  messages: { role: string; content: string }[];
  versions: number[];
  pending_clarification: string | null;
}

export interface MessageResponse {
  clarification?: string;
  conflicts?: string[];
  version?: number;
  node_diff?: NodeDiff;
  node_count?: number;
  error?: { message: string };
}

export interface StageResult {
  name: string;
  satisfied: boolean;
  first_satisfied_step: number | null;
}

export interface Verdict {
  success: boolean;
  stage_results: StageResult[];
  score: number;
  justification: string;
  evidence: number[];
}

export type EpisodeStatus = "success" | "timeout" | "policy_error";

export interface EpisodeRecordView {
  episode_id: string;
  instruction: string;
  status: EpisodeStatus;
  result: Verdict;
  timing: { final_step?: number };
}

export type JobStatus = "queued" | "running" | "done" | "error" | "aborted";

export interface JobView {
  job_id: string;
  kind: string;
  status: JobStatus;
  progress: {
    episode?: number;
    total?: number;
    current_step?: number;
    success?: number;
    timeout?: number;
    policy_error?: number;
    done?: number;
  };
  result?: Record<string, unknown>;
  error?: string;
}
