"""Closed-loop policy evaluation: simulator and policy talk over HTTP.

Per step, the harness sends the observation to the policy service
(POST {endpoint}/v1/act) and applies the returned command. Task stages are
checked every ``check_interval_steps``; an episode terminates in exactly one
of three states: ``success``, ``timeout`` (at exactly ``timeout_steps``), or
``policy_error`` (transport or contract failure, distinct from task failure).

Scripted reference policies (expert, noop) plus transport-level fault
injection ("flaky") exercise the protocol without any learned model.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import requests

from .errors import ContractViolationError, PreconditionError, TransportError
from .evaluation import EvalConfig, Verdict, evaluate_trajectory
from .httpbase import JsonHttpServer, drop_connection
from .world import ActionCommand, WorldState, build_observation, step_world

POLICY_TIMEOUT_S = 5.0


# --- Policies ------------------------------------------------------------------

class NoopPolicy:
    """Returns zero motion with an open gripper."""

    def act(self, request: dict) -> dict:
        return {"action": {"ee_delta": [0.0] * 6, "gripper": 1.0}}


class ExpertPolicy:
    """Scripted pick-and-place from privileged object poses.

    Stateless per request: the phase is inferred from the observed geometry,
    so the policy works identically in-process and behind the wire.
    """

    def __init__(self, subject_id: str, target_id: str,
                 subject_size, target_size, transit_z: float,
                 gain: float = 1.0):
        self.subject_id = subject_id
        self.target_id = target_id
        self.subject_size = np.asarray(subject_size, dtype=float)
        self.target_size = np.asarray(target_size, dtype=float)
        self.transit_z = float(transit_z)
        self.gain = gain
        self.grasp_clearance = 0.02   # EE hovers this far above the subject center
        self.place_gap = 0.006        # subject bottom above target top at release

    def _poses(self, request: dict) -> dict[str, np.ndarray]:
        return {o["id"]: np.asarray(o["pose"][:3], dtype=float)
                for o in request.get("objects", [])}

    def act(self, request: dict) -> dict:
        poses = self._poses(request)
        if self.subject_id not in poses or self.target_id not in poses:
            return {"action": {"ee_delta": [0.0] * 6, "gripper": 1.0}}
        ee = np.asarray(request["proprio"][:3], dtype=float)
        gripper = float(request["proprio"][7])
        subject = poses[self.subject_id]
        target = poses[self.target_id]
        h = float(self.subject_size[2])

        target_top = target[2] + self.target_size[2] / 2.0
        on_target = (abs((subject[2] - h / 2.0) - target_top) <= 0.003
                     and abs(subject[0] - target[0]) <= self.target_size[0] / 2.0
                     and abs(subject[1] - target[1]) <= self.target_size[1] / 2.0)
        held = gripper < 0.5 and float(np.linalg.norm(subject - ee)) < 0.06

        if on_target and not held:
            return {"action": {"ee_delta": [0.0] * 6, "gripper": 1.0}}

        if not held:
            grasp_point = subject + np.array([0.0, 0.0, self.grasp_clearance])
            if float(np.linalg.norm(ee - grasp_point)) <= 0.008:
                return {"action": {"ee_delta": [0.0] * 6, "gripper": 0.0}}
            return {"action": {"ee_delta": self._go(ee, grasp_point), "gripper": 1.0}}

        # Carrying: lift, traverse, lower, release.
        place_center_z = target_top + self.place_gap + h / 2.0
        place_ee = np.array([target[0], target[1],
                             place_center_z + self.grasp_clearance])
        xy_err = float(np.hypot(ee[0] - place_ee[0], ee[1] - place_ee[1]))
        if float(np.linalg.norm(ee - place_ee)) <= 0.004:
            return {"action": {"ee_delta": [0.0] * 6, "gripper": 1.0}}
        if xy_err > 0.01 and ee[2] < self.transit_z - 0.005:
            goal = np.array([ee[0], ee[1], self.transit_z])
        elif xy_err > 0.01:
            goal = np.array([place_ee[0], place_ee[1], max(self.transit_z, place_ee[2])])
        else:
            goal = place_ee
        return {"action": {"ee_delta": self._go(ee, goal), "gripper": 0.0}}

    def _go(self, ee: np.ndarray, goal: np.ndarray) -> list[float]:
        err = (goal - ee) * self.gain
        return [float(err[0]), float(err[1]), float(err[2]), 0.0, 0.0, 0.0]


def expert_for_scene(graph, subject_id: str, target_id: str) -> ExpertPolicy:
    """Expert wired to a scene: transit height clears every non-held obstacle."""
    subject = graph.node(subject_id)
    target = graph.node(target_id)
    tops = [n.box.top for n in graph.nodes
            if n.pose is not None and n.node_id != subject_id]
    transit_z = max(tops) + float(subject.size[2]) + 0.06
    return ExpertPolicy(subject_id, target_id, subject.size, target.size, transit_z)


def scripted_policy(kind: str, graph=None, subject_id: str | None = None,
                    target_id: str | None = None):
    """Reference policies by name: "expert", "noop"."""
    if kind == "noop":
        return NoopPolicy()
    if kind == "expert":
        if graph is None or subject_id is None or target_id is None:
            raise PreconditionError("expert policy needs graph, subject_id, target_id")
        return expert_for_scene(graph, subject_id, target_id)
    raise PreconditionError(f"unknown scripted policy kind {kind!r}")


# --- Transports ------------------------------------------------------------------

class LocalPolicyTransport:
    """In-process transport with optional fault injection.

    ``drop_every=N`` simulates a connection-level fault at every Nth request:
    the fault persists for ``burst`` consecutive calls, so the harness's
    single retry fails too and the episode aborts as policy_error.
    """

    def __init__(self, policy, drop_every: int | None = None, burst: int = 2):
        self.policy = policy
        self.drop_every = drop_every
        self.burst = burst
        self.calls = 0

    def health(self) -> bool:
        return True

    def act(self, request: dict) -> dict:
        self.calls += 1
        if self.drop_every and self.calls % self.drop_every < self.burst \
                and self.calls >= self.drop_every:
            raise TransportError(f"request {self.calls} dropped (injected fault)")
        return self.policy.act(request)


class HttpPolicyTransport:
    """Client side of the policy wire contract."""

    def __init__(self, endpoint: str, timeout: float = POLICY_TIMEOUT_S,
                 session: requests.Session | None = None):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self._session = session or requests.Session()

    def health(self) -> bool:
        try:
            resp = self._session.get(f"{self.endpoint}/v1/health", timeout=self.timeout)
        except (requests.ConnectionError, requests.Timeout):
            return False
        return resp.status_code == 200 and resp.json().get("status") == "ok"

    def act(self, request: dict) -> dict:
        try:
            resp = self._session.post(f"{self.endpoint}/v1/act", json=request,
                                      timeout=self.timeout)
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise TransportError(f"policy unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(f"policy returned HTTP {resp.status_code}")
        return resp.json()


def serve_policy(policy, host: str = "127.0.0.1", port: int = 0,
                 drop_every: int | None = None, burst: int = 2) -> JsonHttpServer:
    """Reference policy service implementing the wire contract."""
    server = JsonHttpServer(host, port)
    state = {"calls": 0}

    def health(match, body, query):
        return 200, {"status": "ok"}

    def act(match, body, query):
        state["calls"] += 1
        if drop_every and state["calls"] % drop_every < burst \
                and state["calls"] >= drop_every:
            drop_connection()
        return 200, policy.act(body or {})

    server.route("GET", r"/v1/health", health)
    server.route("POST", r"/v1/act", act)
    server.start()
    return server


# --- Episode records ----------------------------------------------------------------

@dataclass
class EpisodeRecord:
    episode_id: str
    instruction: str
    status: str                      # success | timeout | policy_error
    result: Verdict
    steps: list[dict] = field(default_factory=list)
    initial_state: dict | None = None
    timing: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "episode_id": self.episode_id,
            "instruction": self.instruction,
            "status": self.status,
            "result": self.result.to_dict(),
            "steps": self.steps,
            "initial_state": self.initial_state,
            "timing": self.timing,
            "metadata": self.metadata,
        }

    @staticmethod
    def from_dict(d: dict) -> "EpisodeRecord":
        return EpisodeRecord(
            episode_id=d["episode_id"],
            instruction=d["instruction"],
            status=d["status"],
            result=Verdict.from_dict(d["result"]),
            steps=list(d.get("steps", [])),
            initial_state=d.get("initial_state"),
            timing=dict(d.get("timing", {})),
            metadata=dict(d.get("metadata", {})),
        )


def parse_action(payload: dict) -> ActionCommand:
    """Validate a policy response against the wire contract."""
    if not isinstance(payload, dict) or "action" not in payload:
        raise ContractViolationError("policy response missing 'action'")
    action = payload["action"]
    try:
        delta = [float(v) for v in action["ee_delta"]]
        gripper = float(action["gripper"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ContractViolationError(f"malformed action: {exc}") from exc
    if len(delta) != 6:
        raise ContractViolationError(f"ee_delta has length {len(delta)}, expected 6")
    if not all(math.isfinite(v) for v in delta) or not math.isfinite(gripper):
        raise ContractViolationError("action has non-finite components")
    return ActionCommand(np.asarray(delta), gripper)


def _act_with_retry(transport, request: dict) -> dict:
    try:
        return transport.act(request)
    except TransportError:
        return transport.act(request)  # one retry, then give up


def run_episode(
    world: WorldState,
    cfg: EvalConfig,
    transport,
    episode_id: str = "episode",
    record: bool = True,
    privileged: bool = True,
    camera: bool = False,
    metadata: dict | None = None,
    on_step=None,
) -> EpisodeRecord:
    """Drive one episode to success, timeout, or policy_error."""
    cfg.validate()
    if not transport.health():
        raise TransportError("policy endpoint failed its health probe")

    started = time.time()
    t0 = time.perf_counter()
    initial_state = world.to_full_dict() if record else None
    snapshots: list[dict] = []
    steps: list[dict] = []
    status: str | None = None
    verdict: Verdict | None = None
    policy_calls = 0

    while world.step < cfg.timeout_steps:
        obs = build_observation(world, privileged=privileged, camera=camera)
        request = {
            "episode_id": episode_id,
            "step": int(world.step),
            "instruction": cfg.instruction,
            "proprio": obs["proprio"],
        }
        if privileged:
            request["objects"] = obs["objects"]
        if camera:
            request["camera"] = obs.get("camera")
        try:
            policy_calls += 1
            payload = _act_with_retry(transport, request)
            action = parse_action(payload)
        except (TransportError, ContractViolationError) as exc:
            status = "policy_error"
            verdict = Verdict(success=False, stage_results=[], score=0.0,
                              justification=f"policy_error: {exc}")
            break

        step_world(world, action)
        if on_step is not None:
            on_step(int(world.step))
        if record:
            steps.append({
                "step": int(world.step),
                "observation": obs,
                "action": action.to_dict(),
                "state_digest": world.digest(),
            })
        if world.step % cfg.check_interval_steps == 0:
            snapshots.append(world.snapshot())
            current = evaluate_trajectory(cfg, snapshots)
            if current.success:
                status = "success"
                verdict = current
                break

    if status is None:
        if not snapshots or snapshots[-1]["step"] != world.step:
            snapshots.append(world.snapshot())
        verdict = evaluate_trajectory(cfg, snapshots)
        status = "success" if verdict.success else "timeout"

    assert verdict is not None
    return EpisodeRecord(
        episode_id=episode_id,
        instruction=cfg.instruction,
        status=status,
        result=verdict,
        steps=steps,
        initial_state=initial_state,
        timing={
            "started_unix": started,
            "wall_s": time.perf_counter() - t0,
            "policy_calls": policy_calls,
            "final_step": int(world.step),
        },
        metadata=dict(metadata or {}),
    )


def run_batch(world_factory, cfg: EvalConfig, transport_factory, episode_ids,
              concurrency: int = 1, record: bool = False,
              metadata: dict | None = None) -> list[EpisodeRecord]:
    """Run independent episodes, each over its own world and transport."""
    def one(eid):
        return run_episode(world_factory(eid), cfg, transport_factory(eid),
                           episode_id=str(eid), record=record, metadata=metadata)

    ids = list(episode_ids)
    if concurrency <= 1:
        return [one(eid) for eid in ids]
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        return list(pool.map(one, ids))


def write_episode_jsonl(record: EpisodeRecord, path: str | Path) -> None:
    """One JSON-lines file per episode: a header line, then one line per step."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = record.to_dict()
    steps = header.pop("steps")
    header["kind"] = "episode"
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for step in steps:
            fh.write(json.dumps({"kind": "step", **step}, sort_keys=True) + "\n")


def read_episode_jsonl(path: str | Path) -> EpisodeRecord:
    with Path(path).open("r", encoding="utf-8") as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or lines[0].get("kind") != "episode":
        raise PreconditionError(f"{path} is not an episode log")
    header = dict(lines[0])
    header.pop("kind")
    steps = []
    for entry in lines[1:]:
        step = dict(entry)
        step.pop("kind", None)
        steps.append(step)
    header["steps"] = steps
    return EpisodeRecord.from_dict(header)


def write_episode_batch(records: list[EpisodeRecord], out_dir: str | Path) -> Path:
    """Per-episode JSONL files plus a batch manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    counts = {"success": 0, "timeout": 0, "policy_error": 0}
    for record in records:
        filename = f"{record.episode_id}.jsonl"
        write_episode_jsonl(record, out / filename)
        counts[record.status] += 1
        entries.append({"episode_id": record.episode_id, "file": filename,
                        "status": record.status,
                        "final_step": record.timing.get("final_step")})
    manifest_path = out / "manifest.json"
    manifest_path.write_text(
        json.dumps({"episodes": entries, **counts}, indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    return manifest_path


def read_episode_batch(out_dir: str | Path) -> list[EpisodeRecord]:
    out = Path(out_dir)
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    return [read_episode_jsonl(out / entry["file"]) for entry in manifest["episodes"]]


def replay_actions(initial_state: dict, actions: list[dict]) -> list[str]:
    """Replay logged actions from a logged state; return the digest sequence."""
    from .world import world_from_full_dict

    world = world_from_full_dict(initial_state)
    digests = []
    for action_dict in actions:
        step_world(world, ActionCommand.from_dict(action_dict))
        digests.append(world.digest())
    return digests
