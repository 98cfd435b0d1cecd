"""Automated demonstration collection: enumerate, filter, execute, roll back.

For each atomic-skill request the collector derives candidate waypoint
sequences from the subject's grasp annotations (one sequence per annotation
and place-pose sample), filters them by a reachability shell, a pitch bound,
and swept-path collision against box proxies, then executes the survivors
best-first. Every attempt runs against a bit-exact copy of the pre-attempt
state, so a failed attempt rolls back perfectly before the next candidate.

There is no motion planner here: straight-line Cartesian interpolation plus
candidate multiplicity plus retry stands in for one, which is a documented
fidelity reduction relative to planned trajectories.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assets import Catalog
from .errors import CollectionError, PreconditionError
from .geometry import (
    PENETRATION_TOL,
    OrientedBox,
    Pose,
    penetration_depth,
    point_box_distance,
    quat_multiply,
    quat_normalize,
    quat_rotate,
    simplify_hull,  # noqa: F401  (re-exported: hull work belongs to collection)
)
from .scenegraph import SceneGraph, relation_holds, SceneEdge
from .rng import substream
from .world import ActionCommand, WorldState, step_world

SKILLS = ("pick", "place", "pull", "push", "open", "close")
PHASE_ORDER = ("approach", "grasp", "transit", "place", "release", "retreat")

R_MAX = 3                  # candidate sequences tried per task
PLACE_SAMPLES = 3          # place poses sampled per target
APPROACH_STANDOFF = 0.08   # meters back along the approach axis
EE_HALF_WIDTH = 0.02       # collision proxy for the gripper body
WAYPOINT_TOL = 0.004
MAX_STEPS_PER_WAYPOINT = 400


@dataclass(frozen=True)
class SkillRequest:
    skill: str
    subject: str
    target: str | None
    seed: int

    def __post_init__(self):
        if self.skill not in SKILLS:
            raise PreconditionError(f"unknown skill {self.skill!r}")

    @property
    def task_id(self) -> str:
        target = self.target or "none"
        return f"{self.skill}_{self.subject}_{target}"

    def to_dict(self) -> dict:
        return {"skill": self.skill, "subject": self.subject,
                "target": self.target, "seed": int(self.seed)}

    @staticmethod
    def from_dict(d: dict) -> "SkillRequest":
        return SkillRequest(d["skill"], d["subject"], d.get("target"), int(d["seed"]))


def load_skill_request(path: str | Path) -> SkillRequest:
    return SkillRequest.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class Waypoint:
    pose: Pose
    gripper_cmd: float
    phase: str

    def __post_init__(self):
        if self.phase not in PHASE_ORDER:
            raise PreconditionError(f"unknown phase {self.phase!r}")


@dataclass
class CandidateSequence:
    waypoints: tuple[Waypoint, ...]
    score: float
    provenance: dict = field(default_factory=dict)

    def validate_phase_order(self) -> None:
        ranks = [PHASE_ORDER.index(w.phase) for w in self.waypoints]
        if ranks != sorted(ranks):
            raise PreconditionError(f"phases out of order: {[w.phase for w in self.waypoints]}")


@dataclass(frozen=True)
class FeasibilityLimits:
    radius_min: float = 0.25
    radius_max: float = 0.85
    pitch_limit_deg: float = 120.0
    interp_resolution: float = 0.01


# --- Candidate enumeration ------------------------------------------------------

def _grasp_pose_world(node, annotation) -> Pose:
    pos = node.pose.position + quat_rotate(node.pose.orientation, annotation.pose.position)
    quat = quat_normalize(quat_multiply(node.pose.orientation, annotation.pose.orientation))
    return Pose(pos, quat)


def _transit_height(g: SceneGraph, subject_id: str) -> float:
    subject = g.node(subject_id)
    tops = [n.box.top for n in g.nodes if n.pose is not None and n.node_id != subject_id]
    return max(tops) + float(subject.size[2]) + 0.06


def enumerate_candidates(request: SkillRequest, g: SceneGraph,
                         catalog: Catalog) -> list[CandidateSequence]:
    """One sequence per (grasp annotation x place sample), deterministic."""
    if not g.has_node(request.subject):
        raise PreconditionError(f"subject {request.subject!r} not in scene")
    if request.target is not None and not g.has_node(request.target):
        raise PreconditionError(f"target {request.target!r} not in scene")
    subject = g.node(request.subject)
    if subject.asset_id not in catalog:
        raise CollectionError(f"asset {subject.asset_id!r} not in catalog")
    annotations = catalog.get(subject.asset_id).grasp_annotations
    if not annotations:
        raise CollectionError(
            f"asset {subject.asset_id!r} has no grasp annotations"
        )

    transit_z = _transit_height(g, request.subject)
    sequences: list[CandidateSequence] = []

    if request.skill in ("pick", "place"):
        place_goals: list[np.ndarray | None]
        if request.skill == "place":
            if request.target is None:
                raise PreconditionError("place skill needs a target")
            target = g.node(request.target)
            tbox = target.box
            place_goals = []
            for j in range(PLACE_SAMPLES):
                rng = substream(request.seed, "place", j)
                half_diag = float(np.hypot(subject.size[0], subject.size[1])) / 2.0
                hu = max(tbox.extents[0] / 2.0 - half_diag, 0.0)
                hv = max(tbox.extents[1] / 2.0 - half_diag, 0.0)
                u = float(rng.uniform(-hu, hu))
                v = float(rng.uniform(-hv, hv))
                c, s = math.cos(tbox.yaw), math.sin(tbox.yaw)
                place_goals.append(np.array([
                    tbox.center[0] + c * u - s * v,
                    tbox.center[1] + s * u + c * v,
                    tbox.top + 0.006 + subject.size[2] / 2.0,
                ]))
        else:
            place_goals = [None]

        for ann_index, ann in enumerate(annotations):
            grasp = _grasp_pose_world(subject, ann)
            axis_world = quat_rotate(subject.pose.orientation, ann.approach_axis)
            standoff = Pose(grasp.position - axis_world * APPROACH_STANDOFF,
                            grasp.orientation)
            lift = Pose(np.array([grasp.position[0], grasp.position[1], transit_z]),
                        grasp.orientation)
            ee_rel = grasp.position - subject.pose.position
            for goal_index, goal in enumerate(place_goals):
                waypoints = [
                    Waypoint(standoff, 1.0, "approach"),
                    Waypoint(grasp, 0.0, "grasp"),
                    Waypoint(lift, 0.0, "transit"),
                ]
                if goal is not None:
                    hover = Pose(np.array([goal[0], goal[1], transit_z]) + ee_rel * [1, 1, 0],
                                 grasp.orientation)
                    lower = Pose(goal + ee_rel, grasp.orientation)
                    retreat = Pose(np.array([lower.position[0], lower.position[1], transit_z]),
                                   grasp.orientation)
                    waypoints += [
                        Waypoint(hover, 0.0, "transit"),
                        Waypoint(lower, 0.0, "place"),
                        Waypoint(lower, 1.0, "release"),
                        Waypoint(retreat, 1.0, "retreat"),
                    ]
                seq = CandidateSequence(
                    waypoints=tuple(waypoints),
                    score=0.0,
                    provenance={"annotation": ann_index, "annotation_label": ann.label,
                                "place_sample": goal_index, "skill": request.skill},
                )
                seq.validate_phase_order()
                sequences.append(seq)
    else:
        # Articulation skills: drag the handle along its axis.
        opening_goal = 1.0 if request.skill in ("pull", "open") else 0.0
        for ann_index, ann in enumerate(annotations):
            grasp = _grasp_pose_world(subject, ann)
            axis_world = quat_rotate(subject.pose.orientation, ann.approach_axis)
            standoff = Pose(grasp.position - axis_world * APPROACH_STANDOFF, grasp.orientation)
            # Drag direction comes from the node's articulation axis at runtime;
            # the waypoint just encodes a far point along +-x of the node frame.
            drag_dir = quat_rotate(subject.pose.orientation,
                                   np.array([1.0, 0.0, 0.0]))
            sign = 1.0 if opening_goal > 0.5 else -1.0
            drag = Pose(grasp.position + sign * drag_dir * 0.35, grasp.orientation)
            waypoints = (
                Waypoint(standoff, 1.0, "approach"),
                Waypoint(grasp, 0.0, "grasp"),
                Waypoint(drag, 0.0, "transit"),
                Waypoint(drag, 1.0, "release"),
                Waypoint(Pose(drag.position + np.array([0, 0, 0.08]), drag.orientation),
                         1.0, "retreat"),
            )
            seq = CandidateSequence(
                waypoints=waypoints, score=0.0,
                provenance={"annotation": ann_index, "annotation_label": ann.label,
                            "skill": request.skill},
            )
            seq.validate_phase_order()
            sequences.append(seq)
    return sequences


# --- Feasibility filtering -------------------------------------------------------

def _held_span(sequence: CandidateSequence) -> tuple[int, int]:
    """(first index holding, first index released) over waypoints."""
    start = end = len(sequence.waypoints)
    for i, wp in enumerate(sequence.waypoints):
        if wp.phase == "grasp":
            start = i
        if wp.phase == "release":
            end = i
            break
    return start, end


def filter_feasible(candidates: list[CandidateSequence], w: WorldState,
                    limits: FeasibilityLimits = FeasibilityLimits()) -> list[CandidateSequence]:
    """Keep sequences whose waypoints and swept paths are reachable and clear.

    Order is preserved; each survivor's score becomes its minimum clearance
    margin along the interpolated path. Resting contact (margin ~ 0 at
    lift-off and set-down) is tolerated and excluded from the score, which
    ranks free-space clearance only. The anthropomorphic bound limits the
    tool-axis angle from vertical.
    """
    pitch_limit = math.radians(limits.pitch_limit_deg)
    down = np.array([0.0, 0.0, -1.0])
    out: list[CandidateSequence] = []
    for seq in candidates:
        subject_id = None
        # The grasped node is excluded from its own swept-collision checks.
        for wp in seq.waypoints:
            if wp.phase == "grasp":
                subject_id = _nearest_node_id(w, wp.pose.position)
                break
        obstacles = [
            n.box for n in w.graph.nodes
            if n.pose is not None and n.node_id != subject_id
        ]
        held_start, held_end = _held_span(seq)
        subject = w.graph.node(subject_id) if subject_id is not None else None

        feasible = True
        clearance = math.inf
        for i, wp in enumerate(seq.waypoints):
            radius = float(np.linalg.norm(wp.pose.position - w.base_anchor))
            if not limits.radius_min <= radius <= limits.radius_max:
                feasible = False
                break
            tool = quat_rotate(wp.pose.orientation, down)
            tilt = math.acos(max(-1.0, min(1.0, float(np.dot(tool, down)))))
            if tilt > pitch_limit:
                feasible = False
                break
            if i == 0:
                continue
            prev = seq.waypoints[i - 1].pose.position
            cur = wp.pose.position
            span = float(np.linalg.norm(cur - prev))
            samples = max(2, int(math.ceil(span / limits.interp_resolution)) + 1)
            holding = held_start < i <= held_end
            rel = None
            if holding and subject is not None:
                grasp_pos = seq.waypoints[held_start].pose.position
                rel = subject.pose.position - grasp_pos
            for t in np.linspace(0.0, 1.0, samples):
                point = prev + (cur - prev) * t
                margin = min(
                    (point_box_distance(point, box) for box in obstacles),
                    default=math.inf,
                ) - EE_HALF_WIDTH
                if holding and rel is not None:
                    # Swept box of the carried object at its grasp-relative
                    # offset: resting contact at lift-off measures zero, any
                    # real interpenetration measures negative.
                    swept = OrientedBox(center=point + rel,
                                        extents=subject.size,
                                        yaw=subject.pose.yaw)
                    obj_margin = min(
                        (-penetration_depth(swept, box) for box in obstacles),
                        default=math.inf,
                    )
                    margin = min(margin, obj_margin)
                if margin < -PENETRATION_TOL:
                    feasible = False
                    break
                if margin > 1e-6:  # contact samples carry no ranking signal
                    clearance = min(clearance, margin)
            if not feasible:
                break
        if feasible:
            score = float(min(clearance, 1e3))
            out.append(CandidateSequence(seq.waypoints, score, dict(seq.provenance)))
    return out


def _nearest_node_id(w: WorldState, point: np.ndarray) -> str | None:
    best, best_dist = None, math.inf
    for node in w.graph.nodes:
        if node.is_region or node.pose is None:
            continue
        d = float(np.linalg.norm(node.pose.position - point))
        if d < best_dist:
            best, best_dist = node.node_id, d
    return best


# --- Execution with rollback -------------------------------------------------------

def default_phase_evaluator(request: SkillRequest):
    """Postconditions per phase: grasp attaches, release lands, joints hit marks."""

    def check(phase: str, w: WorldState) -> bool:
        if phase == "grasp":
            return w.attachment == request.subject
        if phase == "release":
            if request.skill == "place":
                nodes = w.graph.nodes_by_id()
                edge = SceneEdge("on", request.subject, request.target, {})
                return relation_holds(nodes, edge)
            if request.skill in ("pull", "open"):
                return w.articulations.get(request.subject, 0.0) >= 0.9
            if request.skill in ("push", "close"):
                return w.articulations.get(request.subject, 1.0) <= 0.1
            return w.attachment is None
        if phase == "retreat" and request.skill == "pick":
            return w.attachment == request.subject
        return True

    return check


def _drive_to(w: WorldState, waypoint: Waypoint, log: list[dict] | None) -> bool:
    """Proportional motion to the waypoint, then its gripper command."""
    hold = w.gripper
    for _ in range(MAX_STEPS_PER_WAYPOINT):
        err = waypoint.pose.position - w.ee_pose.position
        if float(np.linalg.norm(err)) <= WAYPOINT_TOL:
            break
        before = w.ee_pose.position.copy()
        action = ActionCommand(np.array([err[0], err[1], err[2], 0.0, 0.0, 0.0]), hold)
        step_world(w, action)
        if log is not None:
            log.append({"step": int(w.step), "action": action.to_dict(),
                        "state_digest": w.digest()})
        if float(np.linalg.norm(w.ee_pose.position - before)) < 1e-9:
            break  # motion rejected or articulated track pinned; stop pushing
    action = ActionCommand(np.zeros(6), waypoint.gripper_cmd)
    step_world(w, action)
    if log is not None:
        log.append({"step": int(w.step), "action": action.to_dict(),
                    "state_digest": w.digest()})
    return float(np.linalg.norm(waypoint.pose.position - w.ee_pose.position)) <= WAYPOINT_TOL * 2


@dataclass
class CollectionResult:
    trajectory: dict
    attempts: int
    final_state: WorldState
    rollback_digests: list[tuple[str, str]]  # (pre-attempt, post-rollback) pairs
    failed_attempts: list[dict] = field(default_factory=list)


def execute_with_rollback(
    sequences: list[CandidateSequence],
    w: WorldState,
    evaluator,
    r_max: int = R_MAX,
    failure_injector=None,
) -> CollectionResult:
    """Try candidate sequences best-first with bit-exact rollback between tries.

    ``failure_injector(attempt_index) -> bool`` optionally sabotages the grasp
    approach of an attempt (offsetting it 10 cm), standing in for the stochastic
    grasp failures a physics engine would produce.
    """
    if not sequences:
        raise CollectionError("no candidate sequences to execute")
    snapshot = w.copy()
    digest_before = snapshot.digest()
    diagnostics: list[dict] = []
    rollback_digests: list[tuple[str, str]] = []

    for attempt, seq in enumerate(sequences[:r_max]):
        work = snapshot.copy()
        rollback_digests.append((digest_before, work.digest()))
        sabotaged = bool(failure_injector(attempt)) if failure_injector else False
        log: list[dict] = []
        initial_state = work.to_full_dict()
        failed_phase = None
        for wp in seq.waypoints:
            target = wp
            if sabotaged and wp.phase in ("approach", "grasp"):
                shifted = Pose(wp.pose.position + np.array([0.10, 0.0, 0.0]),
                               wp.pose.orientation)
                target = Waypoint(shifted, wp.gripper_cmd, wp.phase)
            _drive_to(work, target, log)
            if not evaluator(wp.phase, work):
                failed_phase = wp.phase
                break
        if failed_phase is None:
            return CollectionResult(
                trajectory={
                    "initial_state": initial_state,
                    "steps": log,
                    "provenance": dict(seq.provenance),
                },
                attempts=attempt + 1,
                final_state=work,
                rollback_digests=rollback_digests,
                failed_attempts=diagnostics,
            )
        diagnostics.append({
            "attempt": attempt + 1,
            "failed_phase": failed_phase,
            "provenance": dict(seq.provenance),
            "sabotaged": sabotaged,
        })
    raise CollectionError(
        f"all {min(len(sequences), r_max)} candidate sequences failed",
        attempts=diagnostics,
    )


# --- Task pipeline --------------------------------------------------------------------

def read_trajectory_jsonl(path: str | Path) -> dict:
    """Inverse of the dataset layout written by collect_task."""
    with Path(path).open("r", encoding="utf-8") as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or lines[0].get("kind") != "trajectory":
        raise PreconditionError(f"{path} is not a trajectory log")
    header = lines[0]
    steps = []
    for entry in lines[1:]:
        step = dict(entry)
        step.pop("kind", None)
        steps.append(step)
    return {"initial_state": header["initial_state"],
            "provenance": header["provenance"], "steps": steps}


def collect_task(
    request: SkillRequest,
    w: WorldState,
    catalog: Catalog,
    out_dir: str | Path | None = None,
    limits: FeasibilityLimits = FeasibilityLimits(),
    r_max: int = R_MAX,
    failure_injector=None,
) -> CollectionResult:
    """enumerate -> filter -> execute; optionally persist the dataset layout."""
    candidates = enumerate_candidates(request, w.graph, catalog)
    feasible = filter_feasible(candidates, w, limits)
    if not feasible:
        raise CollectionError("no feasible candidate sequences after filtering")
    ranked = sorted(feasible, key=lambda s: -s.score)
    result = execute_with_rollback(ranked, w, default_phase_evaluator(request),
                                   r_max=r_max, failure_injector=failure_injector)
    if out_dir is not None:
        root = Path(out_dir) / "episodes" / request.task_id
        root.mkdir(parents=True, exist_ok=True)
        header = {"kind": "trajectory",
                  "initial_state": result.trajectory["initial_state"],
                  "provenance": result.trajectory["provenance"]}
        with (root / f"{request.seed}.jsonl").open("w", encoding="utf-8") as fh:
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for step in result.trajectory["steps"]:
                fh.write(json.dumps({"kind": "step", **step}, sort_keys=True) + "\n")
        manifest = {"task_id": request.task_id, "seed": request.seed,
                    "attempts": result.attempts,
                    "failed_attempts": result.failed_attempts}
        (root / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return result
