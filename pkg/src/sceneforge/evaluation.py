"""Staged success evaluation: predicates, configs, trajectory scoring, judges.

An evaluation config is an ordered list of stages, each a predicate over a
world snapshot. Stages must be satisfied in order: stage i+1 only counts at
steps at or after the first satisfaction of stage i. Predicate thresholds
default to the scene-graph relation tolerances so there is a single source
of geometric truth.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import requests

from .errors import (
    ContractViolationError,
    EvaluationError,
    GenerationError,
    PreconditionError,
    TransportError,
)
from .geometry import Pose
from .scenegraph import SceneEdge, SceneGraph, SceneNode, relation_holds

PREDICATE_KINDS = ("on_surface", "in_container", "held", "within_region",
                   "relation_holds", "joint_above", "ordered")

DEFAULT_CHECK_INTERVAL = 10
DEFAULT_TIMEOUT_STEPS = 600


@dataclass(frozen=True)
class EvalPredicate:
    kind: str
    subject: str | None = None
    reference: str | None = None
    params: dict = field(default_factory=dict)
    children: tuple["EvalPredicate", ...] = ()

    def __post_init__(self):
        if self.kind not in PREDICATE_KINDS:
            raise PreconditionError(f"unknown predicate kind {self.kind!r}")
        if self.kind == "ordered" and not self.children:
            raise PreconditionError("ordered predicate needs at least one child")

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.subject is not None:
            d["subject"] = self.subject
        if self.reference is not None:
            d["reference"] = self.reference
        if self.params:
            d["params"] = dict(self.params)
        if self.children:
            d["children"] = [c.to_dict() for c in self.children]
        return d

    @staticmethod
    def from_dict(d: dict) -> "EvalPredicate":
        return EvalPredicate(
            kind=d["kind"],
            subject=d.get("subject"),
            reference=d.get("reference"),
            params=dict(d.get("params") or {}),
            children=tuple(EvalPredicate.from_dict(c) for c in d.get("children", [])),
        )


@dataclass(frozen=True)
class EvalStage:
    name: str
    predicate: EvalPredicate
    weight: float = 1.0

    def to_dict(self) -> dict:
        return {"name": self.name, "predicate": self.predicate.to_dict(),
                "weight": float(self.weight)}

    @staticmethod
    def from_dict(d: dict) -> "EvalStage":
        return EvalStage(d["name"], EvalPredicate.from_dict(d["predicate"]),
                         float(d.get("weight", 1.0)))


@dataclass(frozen=True)
class EvalConfig:
    task_id: str
    instruction: str
    stages: tuple[EvalStage, ...]
    success_rule: str = "all_stages"     # or "weighted"
    threshold: float = 1.0               # for the weighted rule
    timeout_steps: int = DEFAULT_TIMEOUT_STEPS
    check_interval_steps: int = DEFAULT_CHECK_INTERVAL

    def validate(self) -> None:
        if self.timeout_steps <= 0:
            raise PreconditionError("timeout_steps must be positive")
        if self.check_interval_steps < 1:
            raise PreconditionError("check_interval_steps must be >= 1")
        if self.success_rule not in ("all_stages", "weighted"):
            raise PreconditionError(f"unknown success rule {self.success_rule!r}")
        if not self.stages:
            raise PreconditionError("config needs at least one stage")
        if self.success_rule == "weighted":
            total = sum(s.weight for s in self.stages)
            if abs(total - 1.0) > 1e-9:
                raise PreconditionError("stage weights must sum to 1 under the weighted rule")

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "instruction": self.instruction,
            "stages": [s.to_dict() for s in self.stages],
            "success_rule": self.success_rule,
            "threshold": float(self.threshold),
            "timeout_steps": int(self.timeout_steps),
            "check_interval_steps": int(self.check_interval_steps),
        }

    @staticmethod
    def from_dict(d: dict) -> "EvalConfig":
        cfg = EvalConfig(
            task_id=d["task_id"],
            instruction=d["instruction"],
            stages=tuple(EvalStage.from_dict(s) for s in d["stages"]),
            success_rule=d.get("success_rule", "all_stages"),
            threshold=float(d.get("threshold", 1.0)),
            timeout_steps=int(d.get("timeout_steps", DEFAULT_TIMEOUT_STEPS)),
            check_interval_steps=int(d.get("check_interval_steps", DEFAULT_CHECK_INTERVAL)),
        )
        cfg.validate()
        return cfg


@dataclass
class StageResult:
    name: str
    satisfied: bool
    first_satisfied_step: int | None

    def to_dict(self) -> dict:
        return {"name": self.name, "satisfied": self.satisfied,
                "first_satisfied_step": self.first_satisfied_step}


@dataclass
class Verdict:
    success: bool
    stage_results: list[StageResult]
    score: float
    justification: str
    evidence: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "stage_results": [s.to_dict() for s in self.stage_results],
            "score": float(self.score),
            "justification": self.justification,
            "evidence": [int(e) for e in self.evidence],
        }

    @staticmethod
    def from_dict(d: dict) -> "Verdict":
        try:
            return Verdict(
                success=bool(d["success"]),
                stage_results=[
                    StageResult(s["name"], bool(s["satisfied"]), s.get("first_satisfied_step"))
                    for s in d.get("stage_results", [])
                ],
                score=float(d["score"]),
                justification=str(d.get("justification", "")),
                evidence=[int(e) for e in d.get("evidence", [])],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ContractViolationError(f"malformed verdict: {exc}") from exc


# --- Snapshot predicate evaluation ---------------------------------------------

def _snapshot_nodes(snapshot: dict) -> dict[str, SceneNode]:
    nodes = {}
    for nid, entry in snapshot["nodes"].items():
        nodes[nid] = SceneNode(
            node_id=nid, asset_id=nid, semantic=nid,
            size=np.asarray(entry["size"], dtype=float),
            pose=Pose.from_dict(entry["pose"]),
        )
    return nodes


def _require_node(snapshot: dict, node_id: str | None, kind: str) -> None:
    if node_id is None:
        raise EvaluationError(f"predicate {kind!r} needs a subject")
    if node_id not in snapshot["nodes"]:
        raise EvaluationError(f"predicate {kind!r} references missing node {node_id!r}")


def predicate_satisfied(pred: EvalPredicate, snapshot: dict) -> bool:
    """Truth of a (non-ordered) predicate at one snapshot. Pure."""
    kind = pred.kind
    if kind == "held":
        _require_node(snapshot, pred.subject, kind)
        return snapshot.get("attachment") == pred.subject
    if kind == "joint_above":
        if pred.subject is None:
            raise EvaluationError("joint_above needs a subject")
        if pred.subject not in snapshot.get("articulations", {}):
            raise EvaluationError(f"no articulation state for {pred.subject!r}")
        threshold = float(pred.params.get("threshold", 0.9))
        value = float(snapshot["articulations"][pred.subject])
        if pred.params.get("mode", "above") == "below":
            return value <= threshold
        return value >= threshold
    if kind == "within_region":
        _require_node(snapshot, pred.subject, kind)
        lo = np.asarray(pred.params["lo"], dtype=float)
        hi = np.asarray(pred.params["hi"], dtype=float)
        pos = np.asarray(snapshot["nodes"][pred.subject]["pose"]["position"], dtype=float)
        return bool(np.all(pos >= lo) and np.all(pos <= hi))
    if kind in ("on_surface", "in_container", "relation_holds"):
        _require_node(snapshot, pred.subject, kind)
        _require_node(snapshot, pred.reference, kind)
        relation = {"on_surface": "on", "in_container": "in"}.get(
            kind, pred.params.get("relation", "on"))
        nodes = _snapshot_nodes(snapshot)
        edge = SceneEdge(relation=relation, src=pred.subject, dst=pred.reference,
                         params=dict(pred.params.get("edge_params", {})))
        return relation_holds(nodes, edge)
    if kind == "ordered":
        raise EvaluationError("ordered predicates are evaluated over trajectories")
    raise EvaluationError(f"unknown predicate kind {kind!r}")


def _stage_satisfied_over(pred: EvalPredicate, snapshots: list[dict],
                          start_index: int) -> int | None:
    """First snapshot index >= start_index satisfying the predicate, or None.

    Ordered predicates consume their children sequentially within the scan.
    """
    if pred.kind == "ordered":
        idx = start_index
        for child in pred.children:
            found = _stage_satisfied_over(child, snapshots, idx)
            if found is None:
                return None
            idx = found
        return idx
    for i in range(start_index, len(snapshots)):
        if predicate_satisfied(pred, snapshots[i]):
            return i
    return None


def evaluate_trajectory(cfg: EvalConfig, trajectory: list[dict]) -> Verdict:
    """Score an ordered snapshot sequence against the staged config. Pure."""
    cfg.validate()
    if not trajectory:
        raise PreconditionError("trajectory must be non-empty")

    stage_results: list[StageResult] = []
    evidence: list[int] = []
    cursor = 0
    satisfied_weight = 0.0
    all_satisfied = True
    for stage in cfg.stages:
        # A stage after an unsatisfied one can never count: ordering is strict.
        found = None if not all_satisfied else \
            _stage_satisfied_over(stage.predicate, trajectory, cursor)
        if found is None:
            stage_results.append(StageResult(stage.name, False, None))
            all_satisfied = False
        else:
            step = int(trajectory[found]["step"])
            stage_results.append(StageResult(stage.name, True, step))
            evidence.append(step)
            satisfied_weight += stage.weight
            cursor = found

    total_weight = sum(s.weight for s in cfg.stages)
    score = satisfied_weight / total_weight if total_weight > 0 else 0.0
    if cfg.success_rule == "all_stages":
        success = all_satisfied
        if success:
            score = 1.0
    else:
        success = satisfied_weight >= cfg.threshold - 1e-12

    last_step = int(trajectory[-1]["step"])
    if success:
        justification = "all stages satisfied in order: " + ", ".join(
            f"{r.name}@{r.first_satisfied_step}" for r in stage_results if r.satisfied
        )
    elif last_step >= cfg.timeout_steps:
        justification = "timeout"
    else:
        missing = [r.name for r in stage_results if not r.satisfied]
        justification = "unsatisfied stages: " + ", ".join(missing)
    return Verdict(success=success, stage_results=stage_results, score=score,
                   justification=justification, evidence=evidence)


# --- Config generation -----------------------------------------------------------

def _tagged(g: SceneGraph, tag: str) -> str | None:
    for node in g.nodes:
        if node.task_tag == tag:
            return node.node_id
    return None


def generate_eval_config(
    g: SceneGraph,
    intent_tag: str,
    subject: str | None = None,
    target: str | None = None,
    instruction: str | None = None,
    timeout_steps: int = DEFAULT_TIMEOUT_STEPS,
    check_interval_steps: int = DEFAULT_CHECK_INTERVAL,
) -> EvalConfig:
    """Deterministic template-table config for a known intent tag."""
    subject = subject or _tagged(g, "subject")
    target = target or _tagged(g, "target")
    for name, node_id in (("subject", subject), ("target", target)):
        if node_id is not None and not g.has_node(node_id):
            raise GenerationError(f"{name} node {node_id!r} does not exist in the scene")

    templates = {"place", "pick-place", "stack-up", "tidy", "open", "close"}
    if intent_tag not in templates:
        raise GenerationError(f"intent {intent_tag!r} not in the template table")
    if subject is None:
        raise GenerationError("no subject node: tag one or pass subject=")

    if intent_tag in ("place", "pick-place", "stack-up", "tidy"):
        if target is None:
            raise GenerationError("no target node: tag one or pass target=")
        contain = intent_tag == "tidy"
        stages = (
            EvalStage("grasp_subject", EvalPredicate("held", subject=subject), 0.5),
            EvalStage(
                "subject_at_target",
                EvalPredicate("in_container" if contain else "on_surface",
                              subject=subject, reference=target),
                0.5,
            ),
        )
        instruction = instruction or f"move the {subject} onto the {target}"
    else:
        threshold = 0.9 if intent_tag == "open" else 0.1
        mode = "above" if intent_tag == "open" else "below"
        stages = (
            EvalStage(
                f"{intent_tag}_subject",
                EvalPredicate("joint_above", subject=subject,
                              params={"threshold": threshold, "mode": mode}),
                1.0,
            ),
        )
        instruction = instruction or f"{intent_tag} the {subject}"

    cfg = EvalConfig(
        task_id=f"{intent_tag}:{subject}",
        instruction=instruction,
        stages=stages,
        success_rule="all_stages",
        timeout_steps=timeout_steps,
        check_interval_steps=check_interval_steps,
    )
    cfg.validate()
    return cfg


# --- Judges -----------------------------------------------------------------------

def frames_from_trajectory(trajectory: list[dict], privileged: bool = True) -> list[dict]:
    """Judge-wire frames. Privileged frames carry the full state snapshot."""
    frames = []
    for snap in trajectory:
        frame = {
            "step": int(snap["step"]),
            "objects": [
                {"id": nid, "pose": list(entry["pose"]["position"]) + list(entry["pose"]["orientation"])}
                for nid, entry in sorted(snap["nodes"].items())
            ],
            "image_ref": None,
        }
        if privileged:
            frame["state"] = snap
        frames.append(frame)
    return frames


class OracleJudge:
    """Privileged judge: re-runs the rule engine on the states inside frames."""

    def judge(self, cfg: EvalConfig, frames: list[dict]) -> Verdict:
        states = [f["state"] for f in frames if "state" in f]
        if not states:
            raise EvaluationError("oracle judge needs privileged frames")
        return evaluate_trajectory(cfg, states)


class AdversarialJudge:
    """Inverts the oracle verdict; exists to exercise disagreement reporting."""

    def __init__(self):
        self._oracle = OracleJudge()

    def judge(self, cfg: EvalConfig, frames: list[dict]) -> Verdict:
        verdict = self._oracle.judge(cfg, frames)
        return Verdict(
            success=not verdict.success,
            stage_results=verdict.stage_results,
            score=1.0 - verdict.score,
            justification=f"inverted: {verdict.justification}",
            evidence=verdict.evidence,
        )


class HttpJudge:
    """Client for the judge wire contract: POST {endpoint}/v1/judge."""

    def __init__(self, endpoint: str, timeout: float = 30.0,
                 session: requests.Session | None = None):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self._session = session or requests.Session()

    def judge(self, cfg: EvalConfig, frames: list[dict]) -> Verdict:
        payload = {"config": cfg.to_dict(), "frames": frames}
        try:
            resp = self._session.post(f"{self.endpoint}/v1/judge", json=payload,
                                      timeout=self.timeout)
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise TransportError(f"judge unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(f"judge returned HTTP {resp.status_code}")
        return Verdict.from_dict(resp.json())


def judge_episode(cfg: EvalConfig, frames: list[dict], judge) -> tuple[Verdict, dict]:
    """Run a judge with one retry on transport failure; report attempt metadata."""
    attempts = 0
    start = time.perf_counter()
    last_exc: Exception | None = None
    while attempts < 2:
        attempts += 1
        try:
            verdict = judge.judge(cfg, frames)
            meta = {"attempts": attempts,
                    "latency_s": time.perf_counter() - start}
            return verdict, meta
        except TransportError as exc:
            last_exc = exc
    raise TransportError(f"judge failed after {attempts} attempts: {last_exc}")
