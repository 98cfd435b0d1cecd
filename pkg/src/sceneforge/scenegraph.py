"""Hierarchical scene representation and constraint-satisfying placement.

Nodes are object instances with sizes and poses; edges are spatial relations.
Relation semantics are normative here and shared by the placement solver, the
scene validator, and the evaluation predicates:

    on(A, B)       |bottom(A) - top(B)| <= 2 mm and A's footprint center lies
                   inside B's (yaw-rotated) top face.
    in(A, B)       A fits inside B's cavity: B's footprint shrunk by 5 mm
                   walls, floor raised 5 mm, contact with the floor +- 2 mm,
                   and A does not poke above B's rim.
    adjacent(A, B) footprint AABBs disjoint, Euclidean gap <= 50 mm, and both
                   objects are supported.
    aligned(A, B)  centers match along the edge's axis within tolerance
                   (default 5 mm); with no axis given, either axis counts.
    stacked(A, B)  a chain of geometric "on" contacts leads from A down to B.

Collision is the separating-axis test on yaw-only boxes with a 0.5 mm
penetration allowance, so resting contact never reads as collision. Pairs
joined by an "in" edge are exempt (contents sit inside the container's box).
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ExportError, LayoutError, PreconditionError
from .geometry import (
    ADJACENT_GAP_MAX,
    ALIGNED_TOL,
    CONTACT_TOL,
    PENETRATION_TOL,
    WALL_THICKNESS,
    OrientedBox,
    Pose,
    boxes_collide,
    footprint_gap,
    footprints_overlap,
    penetration_depth,
    quat_from_yaw,
)
from .rng import substream

RELATIONS = ("on", "in", "adjacent", "aligned", "stacked")
SUPPORT_RELATIONS = ("on", "in", "stacked")

WORKSPACE_ID = "workspace"
WORKSPACE_ASSET = "region.workspace"
DEFAULT_WORKSPACE_EXTENTS = (3.0, 3.0, 0.02)

A_MAX = 1000   # pose samples per node per placement round
B_MAX = 20     # chronological backtracks per solve


@dataclass
class SceneNode:
    node_id: str
    asset_id: str
    semantic: str
    size: np.ndarray
    pose: Pose | None = None
    task_tag: str | None = None

    def __post_init__(self):
        self.size = np.asarray(self.size, dtype=float).reshape(3)

    @property
    def box(self) -> OrientedBox:
        if self.pose is None:
            raise PreconditionError(f"node {self.node_id!r} has no pose")
        return OrientedBox(center=self.pose.position, extents=self.size, yaw=self.pose.yaw)

    @property
    def is_region(self) -> bool:
        return self.asset_id.startswith("region.")

    def to_dict(self) -> dict:
        return {
            "id": self.node_id,
            "asset_id": self.asset_id,
            "semantic": self.semantic,
            "task_tag": self.task_tag,
            "size": [float(v) for v in self.size],
            "pose": self.pose.to_dict() if self.pose is not None else None,
        }

    @staticmethod
    def from_dict(d: dict) -> "SceneNode":
        return SceneNode(
            node_id=d["id"],
            asset_id=d["asset_id"],
            semantic=d["semantic"],
            size=np.asarray(d["size"], dtype=float),
            pose=Pose.from_dict(d["pose"]) if d.get("pose") is not None else None,
            task_tag=d.get("task_tag"),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, SceneNode):
            return NotImplemented
        return self.to_dict() == other.to_dict()


@dataclass(frozen=True)
class SceneEdge:
    relation: str
    src: str
    dst: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.relation not in RELATIONS:
            raise PreconditionError(f"unknown relation {self.relation!r}")
        if self.src == self.dst:
            raise PreconditionError(f"edge endpoints must differ ({self.src!r})")

    def to_dict(self) -> dict:
        return {"relation": self.relation, "src": self.src, "dst": self.dst,
                "params": dict(self.params)}

    @staticmethod
    def from_dict(d: dict) -> "SceneEdge":
        return SceneEdge(relation=d["relation"], src=d["src"], dst=d["dst"],
                         params=dict(d.get("params") or {}))


@dataclass
class SceneGraph:
    seed: int
    nodes: list[SceneNode]
    edges: list[SceneEdge]
    metadata: dict[str, str] = field(default_factory=dict)

    def node(self, node_id: str) -> SceneNode:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise KeyError(node_id)

    def has_node(self, node_id: str) -> bool:
        return any(n.node_id == node_id for n in self.nodes)

    def nodes_by_id(self) -> dict[str, SceneNode]:
        return {n.node_id: n for n in self.nodes}

    def copy(self) -> "SceneGraph":
        return copy.deepcopy(self)

    def to_dict(self) -> dict:
        return {
            "seed": int(self.seed),
            "metadata": {str(k): str(v) for k, v in self.metadata.items()},
            "nodes": [n.to_dict() for n in self.nodes],
            "edges": [e.to_dict() for e in self.edges],
        }

    @staticmethod
    def from_dict(d: dict) -> "SceneGraph":
        return SceneGraph(
            seed=int(d["seed"]),
            nodes=[SceneNode.from_dict(n) for n in d["nodes"]],
            edges=[SceneEdge.from_dict(e) for e in d["edges"]],
            metadata=dict(d.get("metadata") or {}),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, SceneGraph):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def make_workspace_node(extents=DEFAULT_WORKSPACE_EXTENTS) -> SceneNode:
    ex = np.asarray(extents, dtype=float)
    return SceneNode(
        node_id=WORKSPACE_ID,
        asset_id=WORKSPACE_ASSET,
        semantic="workspace",
        size=ex,
        # Slab top sits at z = 0.
        pose=Pose(np.array([0.0, 0.0, -ex[2] / 2.0]), np.array([1.0, 0.0, 0.0, 0.0])),
    )


# --- Relation semantics -------------------------------------------------------

def _on_geometric(a: SceneNode, b: SceneNode) -> bool:
    if a.pose is None or b.pose is None:
        return False
    box_a, box_b = a.box, b.box
    if abs(box_a.bottom - box_b.top) > CONTACT_TOL:
        return False
    return box_b.contains_xy(box_a.center[:2])


def _in_geometric(a: SceneNode, b: SceneNode) -> bool:
    box_a, box_b = a.box, b.box
    floor = box_b.bottom + WALL_THICKNESS
    if abs(box_a.bottom - floor) > CONTACT_TOL:
        return False
    if box_a.top > box_b.top + 1e-9:
        return False
    corners = box_a.footprint_corners()
    shrunk = OrientedBox(
        center=box_b.center,
        extents=np.array([box_b.extents[0] - 2 * WALL_THICKNESS,
                          box_b.extents[1] - 2 * WALL_THICKNESS,
                          box_b.extents[2]]),
        yaw=box_b.yaw,
    )
    return all(shrunk.contains_xy(c, slack=1e-9) for c in corners)


def _supported(node: SceneNode, nodes: dict[str, SceneNode]) -> bool:
    if node.is_region:
        return True
    return any(
        other.node_id != node.node_id and _on_geometric(node, other)
        for other in nodes.values()
    ) or any(
        other.node_id != node.node_id and _in_geometric(node, other)
        for other in nodes.values()
    )


def _adjacent_geometric(a: SceneNode, b: SceneNode, nodes: dict[str, SceneNode]) -> bool:
    box_a, box_b = a.box, b.box
    if footprints_overlap(box_a, box_b):
        return False
    if footprint_gap(box_a, box_b) > ADJACENT_GAP_MAX:
        return False
    return _supported(a, nodes) and _supported(b, nodes)


def _aligned_geometric(a: SceneNode, b: SceneNode, axis: str | None, tol: float) -> bool:
    dx = abs(float(a.pose.position[0] - b.pose.position[0]))
    dy = abs(float(a.pose.position[1] - b.pose.position[1]))
    if axis == "x":
        return dx <= tol
    if axis == "y":
        return dy <= tol
    return min(dx, dy) <= tol


def _stacked_geometric(a: SceneNode, b: SceneNode, nodes: dict[str, SceneNode]) -> bool:
    # Depth-first search over geometric "on" contacts, from a down to b.
    seen: set[str] = set()
    frontier = [a.node_id]
    while frontier:
        cur_id = frontier.pop()
        if cur_id in seen:
            continue
        seen.add(cur_id)
        cur = nodes[cur_id]
        for other in nodes.values():
            if other.node_id == cur_id:
                continue
            if _on_geometric(cur, other):
                if other.node_id == b.node_id:
                    return True
                if other.node_id not in seen:
                    frontier.append(other.node_id)
    return False


def relation_holds(nodes: dict[str, SceneNode], edge: SceneEdge) -> bool:
    """Truth of one relation edge under the normative semantics. Pure."""
    if edge.src not in nodes or edge.dst not in nodes:
        raise PreconditionError(f"edge references missing node {edge.src!r}/{edge.dst!r}")
    a, b = nodes[edge.src], nodes[edge.dst]
    if a.pose is None or b.pose is None:
        return False
    if edge.relation == "on":
        return _on_geometric(a, b)
    if edge.relation == "in":
        return _in_geometric(a, b)
    if edge.relation == "adjacent":
        return _adjacent_geometric(a, b, nodes)
    if edge.relation == "aligned":
        tol = float(edge.params.get("tolerance", ALIGNED_TOL))
        return _aligned_geometric(a, b, edge.params.get("axis"), tol)
    if edge.relation == "stacked":
        return _stacked_geometric(a, b, nodes)
    raise PreconditionError(f"unknown relation {edge.relation!r}")


def check_relation(g: SceneGraph, e: SceneEdge) -> bool:
    return relation_holds(g.nodes_by_id(), e)


# --- Validation ---------------------------------------------------------------

@dataclass
class ValidationReport:
    violated_edges: list[tuple[SceneEdge, str]] = field(default_factory=list)
    colliding_pairs: list[tuple[str, str, float]] = field(default_factory=list)
    breaches: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.violated_edges or self.colliding_pairs or self.breaches)

    def summary(self) -> str:
        if self.ok:
            return "scene valid"
        lines = []
        for edge, reason in self.violated_edges:
            lines.append(f"violated {edge.relation}({edge.src}, {edge.dst}): {reason}")
        for a, b, depth in self.colliding_pairs:
            lines.append(f"collision {a} / {b}: penetration {depth * 1000:.2f} mm")
        lines.extend(self.breaches)
        return "\n".join(lines)


def validate_scene(g: SceneGraph) -> ValidationReport:
    """Re-derive scene validity from geometry alone. Independent of the solver."""
    report = ValidationReport()
    seen_ids = set()
    for node in g.nodes:
        if node.node_id in seen_ids:
            report.breaches.append(f"duplicate node id {node.node_id!r}")
        seen_ids.add(node.node_id)
        if not np.all(node.size > 0):
            report.breaches.append(f"node {node.node_id!r}: size must be positive")
        if node.pose is None:
            report.breaches.append(f"node {node.node_id!r}: pose unresolved")
            continue
        try:
            node.pose.validate()
        except PreconditionError as exc:
            report.breaches.append(f"node {node.node_id!r}: {exc}")

    nodes = g.nodes_by_id()
    in_pairs = set()
    support_edges = []
    for edge in g.edges:
        if edge.src not in nodes or edge.dst not in nodes:
            report.breaches.append(
                f"edge {edge.relation}({edge.src}, {edge.dst}) references a missing node"
            )
            continue
        if edge.relation == "in":
            in_pairs.add(frozenset((edge.src, edge.dst)))
        if edge.relation in SUPPORT_RELATIONS:
            support_edges.append((edge.src, edge.dst))
        if nodes[edge.src].pose is None or nodes[edge.dst].pose is None:
            continue
        if not relation_holds(nodes, edge):
            report.violated_edges.append((edge, "relation does not hold geometrically"))

    if _support_cycle(support_edges):
        report.breaches.append("support edges form a cycle")

    posed = [n for n in g.nodes if n.pose is not None]
    for i in range(len(posed)):
        for j in range(i + 1, len(posed)):
            a, b = posed[i], posed[j]
            if frozenset((a.node_id, b.node_id)) in in_pairs:
                continue
            depth = penetration_depth(a.box, b.box)
            if depth > PENETRATION_TOL:
                report.colliding_pairs.append((a.node_id, b.node_id, float(depth)))
    return report


def _support_cycle(edges: list[tuple[str, str]]) -> bool:
    graph: dict[str, list[str]] = {}
    for src, dst in edges:
        graph.setdefault(src, []).append(dst)
    state: dict[str, int] = {}

    def visit(node: str) -> bool:
        state[node] = 1
        for nxt in graph.get(node, []):
            s = state.get(nxt, 0)
            if s == 1:
                return True
            if s == 0 and visit(nxt):
                return True
        state[node] = 2
        return False

    return any(state.get(n, 0) == 0 and visit(n) for n in list(graph))


# --- Placement solver -----------------------------------------------------------

@dataclass
class PlacementDirective:
    """Sampled placement overrides for one node (from DSL place parameters)."""

    offset_x: float | None = None
    offset_y: float | None = None
    yaw: float | None = None
    tag: str | None = None


def _topological_order(node_ids: list[str], parents: dict[str, str | None]) -> list[str]:
    order: list[str] = []
    placed: set[str] = set()
    pending = list(node_ids)
    while pending:
        progressed = False
        remaining = []
        for nid in pending:
            parent = parents.get(nid)
            if parent is None or parent in placed:
                order.append(nid)
                placed.add(nid)
                progressed = True
            else:
                remaining.append(nid)
        if not progressed:
            raise PreconditionError(f"support relations are cyclic or dangling: {remaining}")
        pending = remaining
    return order


def _fit_bounds(parent: OrientedBox, child_extents, rel_yaw: float,
                lateral_shrink: float) -> tuple[float, float] | None:
    """Half-ranges for the child's center inside the parent footprint, or None."""
    hu = parent.extents[0] / 2.0 - lateral_shrink
    hv = parent.extents[1] / 2.0 - lateral_shrink
    if lateral_shrink > 0.0:
        c, s = abs(math.cos(rel_yaw)), abs(math.sin(rel_yaw))
        half_u = (child_extents[0] / 2.0) * c + (child_extents[1] / 2.0) * s
        half_v = (child_extents[0] / 2.0) * s + (child_extents[1] / 2.0) * c
        hu -= half_u
        hv -= half_v
    if hu < 0.0 or hv < 0.0:
        return None
    return hu, hv


def solve_placement(
    nodes: list[SceneNode],
    edges: list[SceneEdge],
    seed: int,
    stream_for_node=None,
    directives: dict[str, PlacementDirective] | None = None,
    metadata: dict[str, str] | None = None,
    workspace_extents=DEFAULT_WORKSPACE_EXTENTS,
    a_max: int = A_MAX,
    b_max: int = B_MAX,
    sample_margin: float = 0.008,
) -> SceneGraph:
    """Assign poses so every edge holds and no pair collides.

    Nodes are placed in topological order of their support edges; each node
    samples (x, y, yaw) in its support region and rejects candidates that
    violate constraint edges or collide with already-placed nodes. Exhausting
    ``a_max`` samples pops the most recently placed node (chronological
    backtracking); more than ``b_max`` pops raises LayoutError.

    ``sample_margin`` inflates boxes during collision rejection only, so
    sampled layouts keep a little clearance; explicitly pinned placements are
    accepted at the true penetration tolerance.
    """
    directives = directives or {}
    graph_nodes = [copy.deepcopy(n) for n in nodes]
    ids = [n.node_id for n in graph_nodes]
    if WORKSPACE_ID not in ids:
        graph_nodes.insert(0, make_workspace_node(workspace_extents))
        ids.insert(0, WORKSPACE_ID)
    by_id = {n.node_id: n for n in graph_nodes}

    for node_id, directive in directives.items():
        if directive.tag and node_id in by_id:
            by_id[node_id].task_tag = directive.tag

    support_parent: dict[str, str | None] = {nid: None for nid in ids}
    for edge in edges:
        if edge.src not in by_id or edge.dst not in by_id:
            raise PreconditionError(
                f"edge references missing node {edge.src!r}/{edge.dst!r}"
            )
        if edge.relation in SUPPORT_RELATIONS:
            support_parent[edge.src] = edge.dst
    # Nodes without explicit support rest on the workspace region.
    for nid in ids:
        if support_parent[nid] is None and by_id[nid].pose is None and nid != WORKSPACE_ID:
            support_parent[nid] = WORKSPACE_ID

    order = _topological_order(ids, support_parent)
    to_solve = [nid for nid in order if by_id[nid].pose is None]
    support_edge_of: dict[str, SceneEdge | None] = {nid: None for nid in ids}
    for edge in edges:
        if edge.relation in SUPPORT_RELATIONS:
            support_edge_of[edge.src] = edge

    constraint_edges: dict[str, list[SceneEdge]] = {nid: [] for nid in ids}
    for edge in edges:
        if edge.relation not in SUPPORT_RELATIONS:
            constraint_edges.setdefault(edge.src, []).append(edge)
            constraint_edges.setdefault(edge.dst, []).append(edge)

    streams: dict[str, np.random.Generator] = {}

    def stream(nid: str) -> np.random.Generator:
        if nid not in streams:
            streams[nid] = (stream_for_node(nid) if stream_for_node is not None
                            else substream(seed, "solve", nid))
        return streams[nid]

    placed: list[str] = [nid for nid in order if by_id[nid].pose is not None]
    attempts: dict[str, int] = {nid: 0 for nid in to_solve}
    backtracks = 0
    idx = 0

    while idx < len(to_solve):
        nid = to_solve[idx]
        node = by_id[nid]
        parent = by_id[support_parent[nid]]  # type: ignore[index]
        edge = support_edge_of.get(nid)
        relation = edge.relation if edge is not None else "on"
        directive = directives.get(nid, PlacementDirective())
        rng = stream(nid)

        pose = _place_node(node, parent, relation, directive, constraint_edges.get(nid, []),
                           by_id, placed, rng, a_max, attempts, sample_margin)
        if pose is not None:
            node.pose = pose
            placed.append(nid)
            idx += 1
            continue

        # Budget exhausted: pop the most recent solver-placed node and retry it.
        backtracks += 1
        if backtracks > b_max or idx == 0:
            raise LayoutError(
                f"unsatisfiable layout: node {nid!r} exhausted its sampling budget "
                f"after {backtracks - 1} backtracks",
                attempts=attempts,
            )
        prev = to_solve[idx - 1]
        by_id[prev].pose = None
        placed.remove(prev)
        idx -= 1

    graph = SceneGraph(
        seed=int(seed),
        nodes=graph_nodes,
        edges=list(edges),
        metadata=dict(metadata or {}),
    )
    return graph


def _place_node(
    node: SceneNode,
    parent: SceneNode,
    relation: str,
    directive: PlacementDirective,
    constraints: list[SceneEdge],
    by_id: dict[str, SceneNode],
    placed: list[str],
    rng: np.random.Generator,
    a_max: int,
    attempts: dict[str, int],
    sample_margin: float = 0.0,
) -> Pose | None:
    parent_box = parent.box
    h = float(node.size[2])
    if relation == "in":
        z = parent_box.bottom + WALL_THICKNESS + h / 2.0
        lateral_shrink = WALL_THICKNESS
        if z + h / 2.0 > parent_box.top + 1e-9:
            return None  # taller than the cavity; no sample can help
    else:
        z = parent_box.top + h / 2.0
        lateral_shrink = 0.0

    aligned = [e for e in constraints if e.relation == "aligned"]
    adjacent = [e for e in constraints if e.relation == "adjacent"]
    fully_pinned = (directive.offset_x is not None and directive.offset_y is not None
                    and directive.yaw is not None and not aligned and not adjacent)
    budget = 1 if fully_pinned else a_max
    margin = 0.0 if fully_pinned else sample_margin

    placed_set = set(placed)

    for _ in range(budget):
        attempts[node.node_id] = attempts.get(node.node_id, 0) + 1
        yaw = directive.yaw if directive.yaw is not None else float(rng.uniform(-math.pi, math.pi))
        bounds = _fit_bounds(parent_box, node.size, yaw - parent_box.yaw, lateral_shrink)
        if bounds is None:
            return None  # cannot fit at any position
        hu, hv = bounds
        u = directive.offset_x if directive.offset_x is not None else float(rng.uniform(-hu, hu))
        v = directive.offset_y if directive.offset_y is not None else float(rng.uniform(-hv, hv))
        c, s = math.cos(parent_box.yaw), math.sin(parent_box.yaw)
        x = parent_box.center[0] + c * u - s * v
        y = parent_box.center[1] + s * u + c * v

        # Constructive sampling for adjacency: sit beside the counterpart's
        # footprint with the gap drawn inside the allowed band.
        for e in adjacent:
            other_id = e.dst if e.src == node.node_id else e.src
            if other_id not in placed_set:
                continue
            obox = by_id[other_id].box
            omin, omax = obox.footprint_aabb()
            cy, sy_ = abs(math.cos(yaw)), abs(math.sin(yaw))
            half_w = (node.size[0] * cy + node.size[1] * sy_) / 2.0
            half_h = (node.size[0] * sy_ + node.size[1] * cy) / 2.0
            side = int(rng.integers(4))
            gap = float(rng.uniform(0.004, ADJACENT_GAP_MAX - 0.004))
            if side in (0, 1):
                x = (omax[0] + gap + half_w) if side == 0 else (omin[0] - gap - half_w)
                y = float(rng.uniform(omin[1] - half_h + 0.001, omax[1] + half_h - 0.001))
            else:
                y = (omax[1] + gap + half_h) if side == 2 else (omin[1] - gap - half_h)
                x = float(rng.uniform(omin[0] - half_w + 0.001, omax[0] + half_w - 0.001))
            break

        # Constructive override for aligned edges against placed counterparts.
        for e in aligned:
            other_id = e.dst if e.src == node.node_id else e.src
            if other_id not in placed_set:
                continue
            other = by_id[other_id]
            tol = float(e.params.get("tolerance", ALIGNED_TOL))
            jitter = float(rng.uniform(-tol, tol)) * 0.5
            if e.params.get("axis", "x") == "y":
                y = float(other.pose.position[1]) + jitter
            else:
                x = float(other.pose.position[0]) + jitter

        candidate_pose = Pose(np.array([x, y, z]), quat_from_yaw(yaw))
        candidate = SceneNode(node.node_id, node.asset_id, node.semantic,
                              node.size, candidate_pose, node.task_tag)
        box = candidate.box

        # Verify the support relation geometrically (overrides may have moved
        # the center off the face).
        if relation == "in":
            if not _in_geometric(candidate, parent):
                continue
        else:
            if not _on_geometric(candidate, parent):
                continue

        probe = dict(by_id)
        probe[node.node_id] = candidate
        ok = True
        for e in aligned + adjacent:
            other_id = e.dst if e.src == node.node_id else e.src
            if other_id not in placed_set:
                continue
            if not relation_holds(probe, e):
                ok = False
                break
        if not ok:
            continue

        # Inflate laterally only: vertical contact with supports is exact by
        # construction and must not read as collision.
        probe_box = box if margin == 0.0 else OrientedBox(
            center=box.center,
            extents=box.extents + np.array([2.0 * margin, 2.0 * margin, 0.0]),
            yaw=box.yaw)
        collided = False
        for pid in placed:
            if pid == node.node_id:
                continue
            if pid == parent.node_id:
                if relation == "in":
                    continue  # contents sit inside the container's solid box
                if margin > 0.0:
                    # The inflated box always overlaps the support it rests on;
                    # check the true box against the parent instead.
                    if boxes_collide(box, parent_box):
                        collided = True
                        break
                    continue
            if boxes_collide(probe_box, by_id[pid].box):
                collided = True
                break
        if collided:
            continue
        return candidate_pose
    return None


# --- Serialization --------------------------------------------------------------

def scene_to_json(g: SceneGraph) -> str:
    """Canonical graph-json: stable key order, byte-stable for equal graphs."""
    return json.dumps(g.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"


def scene_from_json(text: str) -> SceneGraph:
    return SceneGraph.from_dict(json.loads(text))


def scene_digest(g: SceneGraph) -> str:
    return hashlib.sha256(scene_to_json(g).encode("utf-8")).hexdigest()


def _usda_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def scene_to_usda(g: SceneGraph, scene_paths: dict[str, str] | None = None) -> str:
    """USD-ASCII skeleton: one Xform prim per node with transform and tags.

    ``scene_paths`` maps asset_id to an asset file reference; region nodes
    need no reference. Missing references for non-region nodes are an error.
    """
    lines = [
        "#usda 1.0",
        "(",
        '    doc = "sceneforge scene export"',
        "    metersPerUnit = 1",
        '    upAxis = "Z"',
        ")",
        "",
    ]
    for node in g.nodes:
        if node.pose is None:
            raise ExportError(f"node {node.node_id!r} has no pose")
        path = None
        if not node.is_region:
            path = (scene_paths or {}).get(node.asset_id)
            if path is None:
                raise ExportError(
                    f"node {node.node_id!r}: no scene_path known for asset {node.asset_id!r}"
                )
        p = [float(v) for v in node.pose.position]
        q = [float(v) for v in node.pose.orientation]
        size = [float(v) for v in node.size]
        header = f'def Xform "{node.node_id}"'
        if path is not None:
            header += " (\n    prepend references = @" + path + "@\n)"
        lines.append(header)
        lines.append("{")
        lines.append(
            f"    double3 xformOp:translate = ({p[0]!r}, {p[1]!r}, {p[2]!r})"
        )
        lines.append(
            f"    quatd xformOp:orient = ({q[0]!r}, {q[1]!r}, {q[2]!r}, {q[3]!r})"
        )
        lines.append(
            '    uniform token[] xformOpOrder = ["xformOp:translate", "xformOp:orient"]'
        )
        lines.append(f'    custom string semantic = "{_usda_escape(node.semantic)}"')
        if node.task_tag:
            lines.append(f'    custom string task_tag = "{_usda_escape(node.task_tag)}"')
        lines.append(
            f"    custom double3 extent_hint = ({size[0]!r}, {size[1]!r}, {size[2]!r})"
        )
        lines.append("}")
        lines.append("")
    return "\n".join(lines)


def serialize_scene(g: SceneGraph, format: str = "graph-json",
                    scene_paths: dict[str, str] | None = None) -> str:
    if format == "graph-json":
        return scene_to_json(g)
    if format == "usda-text":
        return scene_to_usda(g, scene_paths)
    raise PreconditionError(f"unknown serialization format {format!r}")
