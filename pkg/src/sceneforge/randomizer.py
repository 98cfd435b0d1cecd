"""Domain randomization: many scene variants and phrasings from one base.

Variant i draws everything from substream (master_seed, "variant", i), so
batches are reproducible and order-independent. Layout jitter re-settles
children onto their (possibly moved) supports in topological order, then the
variant is re-validated in full; an unsolvable draw is resampled up to ten
times before the index is reported as dropped, never silently missing.

Lighting, camera noise, robot initialization, and background choices ride in
the scene metadata: the toy world consumes the camera sigma, everything else
annotates downstream exporters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .assets import Catalog
from .errors import PreconditionError
from .geometry import Pose, boxes_collide, quat_from_yaw
from .rng import substream
from .scenegraph import (
    SceneGraph,
    SceneNode,
    scene_to_json,
    validate_scene,
)

RESAMPLE_LIMIT = 10


@dataclass(frozen=True)
class RandomizationSpec:
    intensity_range: tuple[float, float] = (0.5, 1.5)
    color_temp_range: tuple[float, float] = (3000.0, 6500.0)
    layout_xy_range: float = 0.05
    layout_yaw_range_deg: float = 15.0
    robot_xy_range: float = 0.03
    robot_yaw_range_deg: float = 5.0
    camera_sigma_range: tuple[float, float] = (0.0, 0.02)
    texture_policy: str = "keep"              # keep | shuffle
    instruction_source: str = "lexicon"       # lexicon | provider
    backgrounds: tuple[str, ...] = ("default",)

    def validate(self) -> None:
        for name, (lo, hi) in (("intensity_range", self.intensity_range),
                               ("color_temp_range", self.color_temp_range),
                               ("camera_sigma_range", self.camera_sigma_range)):
            if lo > hi:
                raise PreconditionError(f"{name}: lo must be <= hi")
        if self.camera_sigma_range[0] < 0:
            raise PreconditionError("camera sigma must be >= 0")
        if self.layout_xy_range < 0 or self.robot_xy_range < 0:
            raise PreconditionError("jitter ranges must be >= 0")
        if self.texture_policy not in ("keep", "shuffle"):
            raise PreconditionError(f"unknown texture policy {self.texture_policy!r}")
        if not self.backgrounds:
            raise PreconditionError("backgrounds must be non-empty")

    def to_dict(self) -> dict:
        return {
            "lighting": {"intensity_range": list(self.intensity_range),
                         "color_temp_range": list(self.color_temp_range)},
            "layout_jitter": {"xy_range": self.layout_xy_range,
                              "yaw_range_deg": self.layout_yaw_range_deg},
            "robot_init": {"base_xy_range": self.robot_xy_range,
                           "base_yaw_range_deg": self.robot_yaw_range_deg},
            "camera_noise": {"sigma_range": list(self.camera_sigma_range)},
            "texture": {"policy": self.texture_policy},
            "instruction": {"source": self.instruction_source},
            "background": {"choices": list(self.backgrounds)},
        }

    @staticmethod
    def from_dict(d: dict) -> "RandomizationSpec":
        lighting = d.get("lighting", {})
        layout = d.get("layout_jitter", {})
        robot = d.get("robot_init", {})
        camera = d.get("camera_noise", {})
        spec = RandomizationSpec(
            intensity_range=tuple(lighting.get("intensity_range", (0.5, 1.5))),
            color_temp_range=tuple(lighting.get("color_temp_range", (3000.0, 6500.0))),
            layout_xy_range=float(layout.get("xy_range", 0.05)),
            layout_yaw_range_deg=float(layout.get("yaw_range_deg", 15.0)),
            robot_xy_range=float(robot.get("base_xy_range", 0.03)),
            robot_yaw_range_deg=float(robot.get("base_yaw_range_deg", 5.0)),
            camera_sigma_range=tuple(camera.get("sigma_range", (0.0, 0.02))),
            texture_policy=d.get("texture", {}).get("policy", "keep"),
            instruction_source=d.get("instruction", {}).get("source", "lexicon"),
            backgrounds=tuple(d.get("background", {}).get("choices", ("default",))),
        )
        spec.validate()
        return spec


@dataclass
class VariantBatch:
    variants: list[tuple[int, SceneGraph]]
    dropped: list[int]
    params: dict[int, dict]

    @property
    def produced(self) -> int:
        return len(self.variants)


def _support_parents(g: SceneGraph) -> dict[str, str | None]:
    parents: dict[str, str | None] = {n.node_id: None for n in g.nodes}
    for edge in g.edges:
        if edge.relation in ("on", "in", "stacked"):
            parents[edge.src] = edge.dst
    return parents


def _topo_ids(g: SceneGraph) -> list[str]:
    parents = _support_parents(g)
    order: list[str] = []
    placed: set[str] = set()
    pending = [n.node_id for n in g.nodes]
    while pending:
        rest = []
        progressed = False
        for nid in pending:
            parent = parents.get(nid)
            if parent is None or parent in placed:
                order.append(nid)
                placed.add(nid)
                progressed = True
            else:
                rest.append(nid)
        if not progressed:
            raise PreconditionError("base scene has cyclic supports")
        pending = rest
    return order


JITTER_NODE_TRIES = 20


def _jitter_layout(base: SceneGraph, g: SceneGraph, spec: RandomizationSpec,
                   rng: np.random.Generator) -> None:
    """Jitter poses in support order; children re-settle on moved parents.

    Each node rejection-samples its jitter against the nodes already
    processed; if no draw clears, it falls back to its base placement
    relative to the (possibly moved) parent, which preserves the base
    layout's clearances.
    """
    parents = _support_parents(g)
    relation_of = {e.src: e.relation for e in g.edges
                   if e.relation in ("on", "in", "stacked")}
    in_pairs = {frozenset((e.src, e.dst)) for e in g.edges if e.relation == "in"}
    nodes = g.nodes_by_id()
    base_nodes = base.nodes_by_id()
    moved: set[str] = set()
    processed: list[str] = []
    yaw_range = math.radians(spec.layout_yaw_range_deg)

    def settle(nid: str, x: float, y: float, yaw: float) -> Pose:
        node = nodes[nid]
        parent_id = parents.get(nid)
        z = float(node.pose.position[2])
        if parent_id is not None:
            pbox = nodes[parent_id].box
            if relation_of.get(nid, "on") == "in":
                z = pbox.bottom + 0.005 + float(node.size[2]) / 2.0
            else:
                z = pbox.top + float(node.size[2]) / 2.0
            # Keep the footprint center on the support face.
            c, s = math.cos(pbox.yaw), math.sin(pbox.yaw)
            du = c * (x - pbox.center[0]) + s * (y - pbox.center[1])
            dv = -s * (x - pbox.center[0]) + c * (y - pbox.center[1])
            hu = max(pbox.extents[0] / 2.0 - 1e-6, 0.0)
            hv = max(pbox.extents[1] / 2.0 - 1e-6, 0.0)
            du = min(max(du, -hu), hu)
            dv = min(max(dv, -hv), hv)
            x = pbox.center[0] + c * du - s * dv
            y = pbox.center[1] + s * du + c * dv
        return Pose(np.array([x, y, z]), quat_from_yaw(yaw))

    def collides(nid: str, pose: Pose) -> bool:
        node = nodes[nid]
        box = SceneNode(nid, node.asset_id, node.semantic, node.size, pose).box
        for other_id in processed:
            if frozenset((nid, other_id)) in in_pairs:
                continue
            other = nodes[other_id]
            if other.pose is None:
                continue
            if boxes_collide(box, other.box):
                return True
        return False

    def base_relative_pose(nid: str) -> Pose:
        """Base placement re-expressed in the parent's current frame."""
        node_base = base_nodes[nid]
        parent_id = parents.get(nid)
        if parent_id is None:
            return Pose(node_base.pose.position.copy(),
                        node_base.pose.orientation.copy())
        pbase = base_nodes[parent_id].box
        pnow = nodes[parent_id].box
        d = node_base.pose.position[:2] - pbase.center[:2]
        cb, sb = math.cos(pbase.yaw), math.sin(pbase.yaw)
        u = cb * d[0] + sb * d[1]
        v = -sb * d[0] + cb * d[1]
        cn, sn = math.cos(pnow.yaw), math.sin(pnow.yaw)
        x = pnow.center[0] + cn * u - sn * v
        y = pnow.center[1] + sn * u + cn * v
        yaw = node_base.pose.yaw - pbase.yaw + pnow.yaw
        return settle(nid, float(x), float(y), float(yaw))

    for nid in _topo_ids(g):
        node = nodes[nid]
        if node.is_region or node.pose is None:
            continue
        parent_id = parents.get(nid)
        parent_moved = parent_id in moved if parent_id else False
        placed = False
        for _ in range(JITTER_NODE_TRIES):
            dx = float(rng.uniform(-spec.layout_xy_range, spec.layout_xy_range))
            dy = float(rng.uniform(-spec.layout_xy_range, spec.layout_xy_range))
            dyaw = float(rng.uniform(-yaw_range, yaw_range))
            if dx == 0.0 and dy == 0.0 and dyaw == 0.0 and not parent_moved:
                placed = True  # degenerate ranges: keep the base pose bit-exactly
                break
            pose = settle(nid,
                          float(node.pose.position[0]) + dx,
                          float(node.pose.position[1]) + dy,
                          node.pose.yaw + dyaw)
            if not collides(nid, pose):
                node.pose = pose
                moved.add(nid)
                placed = True
                break
        if not placed:
            pose = base_relative_pose(nid)
            if parent_moved:
                node.pose = pose
                moved.add(nid)
            # If the parent never moved, the base pose is already in place.
        processed.append(nid)


def _sample_globals(spec: RandomizationSpec, rng: np.random.Generator) -> dict:
    return {
        "light_intensity": float(rng.uniform(*spec.intensity_range)),
        "color_temp_k": float(rng.uniform(*spec.color_temp_range)),
        "camera_sigma": float(rng.uniform(*spec.camera_sigma_range)),
        "robot_base_dx": float(rng.uniform(-spec.robot_xy_range, spec.robot_xy_range)),
        "robot_base_dy": float(rng.uniform(-spec.robot_xy_range, spec.robot_xy_range)),
        "robot_base_dyaw_deg": float(rng.uniform(-spec.robot_yaw_range_deg,
                                                 spec.robot_yaw_range_deg)),
        "background": spec.backgrounds[int(rng.integers(len(spec.backgrounds)))],
    }


def derive_variants(
    base: SceneGraph,
    spec: RandomizationSpec,
    n: int,
    master_seed: int,
    catalog: Catalog | None = None,
) -> VariantBatch:
    """n re-validated variants of a base scene (dropped indices reported)."""
    spec.validate()
    if n < 1:
        raise PreconditionError("n must be >= 1")
    base_report = validate_scene(base)
    if not base_report.ok:
        raise PreconditionError(f"base scene is invalid: {base_report.summary()}")

    variants: list[tuple[int, SceneGraph]] = []
    dropped: list[int] = []
    params: dict[int, dict] = {}
    for index in range(n):
        rng = substream(master_seed, "variant", index)
        produced = None
        sampled = None
        for _ in range(RESAMPLE_LIMIT):
            candidate = base.copy()
            sampled = _sample_globals(spec, rng)
            _jitter_layout(base, candidate, spec, rng)
            if spec.texture_policy == "shuffle" and catalog is not None:
                for node in candidate.nodes:
                    if node.is_region or node.asset_id not in catalog:
                        continue
                    options = catalog.get(node.asset_id).texture_variants
                    if options:
                        choice = options[int(rng.integers(len(options)))]
                        candidate.metadata[f"texture.{node.node_id}"] = choice
            report = validate_scene(candidate)
            if report.ok:
                produced = candidate
                break
        if produced is None:
            dropped.append(index)
            continue
        produced.metadata["variant_id"] = str(index)
        produced.metadata["camera_sigma"] = repr(sampled["camera_sigma"])
        produced.metadata["randomization"] = json.dumps(sampled, sort_keys=True)
        variants.append((index, produced))
        params[index] = sampled
    return VariantBatch(variants=variants, dropped=dropped, params=params)


def write_variant_batch(batch: VariantBatch, out_dir: str | Path) -> Path:
    """variant_{index}.json files plus a manifest with drops and parameters."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for index, graph in batch.variants:
        (out / f"variant_{index}.json").write_text(scene_to_json(graph), encoding="utf-8")
    manifest = {
        "produced": [index for index, _ in batch.variants],
        "dropped": batch.dropped,
        "params": {str(k): v for k, v in sorted(batch.params.items())},
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                             encoding="utf-8")
    return manifest_path


# --- Instruction paraphrasing ---------------------------------------------------

@dataclass
class ParaphraseResult:
    texts: list[str]
    shortfall: bool


def _find_slots(instruction: str, classes: dict[str, list[str]]) -> list[tuple[int, int, str]]:
    """Non-overlapping (start, end, class) matches, longest phrases first."""
    lowered = instruction.lower()
    phrases = sorted(
        ((phrase.lower(), cls) for cls, members in classes.items() for phrase in members),
        key=lambda t: -len(t[0]),
    )
    taken: list[tuple[int, int, str]] = []
    for phrase, cls in phrases:
        start = 0
        while True:
            at = lowered.find(phrase, start)
            if at < 0:
                break
            end = at + len(phrase)
            boundary_ok = (at == 0 or not lowered[at - 1].isalnum()) and \
                          (end == len(lowered) or not lowered[end].isalnum())
            overlaps = any(not (end <= s or at >= e) for s, e, _ in taken)
            if boundary_ok and not overlaps:
                taken.append((at, end, cls))
            start = at + 1
    return sorted(taken)


def paraphrase_instruction(
    instruction: str,
    source: str,
    count: int,
    seed: int,
    lexicon: dict[str, list[str]] | None = None,
    provider=None,
) -> ParaphraseResult:
    """Distinct paraphrases; rank 0 is always the unchanged instruction."""
    if not instruction:
        raise PreconditionError("instruction must be non-empty")
    if count < 1:
        raise PreconditionError("count must be >= 1")

    if source == "provider":
        if provider is None:
            raise PreconditionError("provider mode needs a chat provider")
        content = provider.complete([
            {"role": "system",
             "content": f"Rewrite the instruction {count} ways, one per line."},
            {"role": "user", "content": instruction},
        ])
        seen = {instruction}
        texts = [instruction]
        for line in content.splitlines():
            line = line.strip().strip("-* ")
            if line and line not in seen:
                seen.add(line)
                texts.append(line)
            if len(texts) >= count:
                break
        return ParaphraseResult(texts[:count], shortfall=len(texts) < count)

    if source != "lexicon":
        raise PreconditionError(f"unknown paraphrase source {source!r}")
    if lexicon is None:
        lexicon = load_default_lexicon()

    slots = _find_slots(instruction, lexicon)
    alternates: list[list[str]] = []
    for start, end, cls in slots:
        original = instruction[start:end]
        members = [m for m in lexicon[cls]]
        ordered = [original] + [m for m in members if m.lower() != original.lower()]
        alternates.append(ordered)

    candidates: list[str] = []
    seen = {instruction}
    # Breadth-first over substitution depth keeps single-word rewrites first.
    for depth in range(1, len(slots) + 1):
        for combo in _depth_combos(len(slots), depth, [len(a) - 1 for a in alternates]):
            text = instruction
            for slot_index in sorted(range(len(slots)), reverse=True):
                choice = combo[slot_index]
                if choice == 0:
                    continue
                start, end, _ = slots[slot_index]
                text = text[:start] + alternates[slot_index][choice] + text[end:]
            if text not in seen:
                seen.add(text)
                candidates.append(text)

    rng = substream(seed, "paraphrase")
    order = rng.permutation(len(candidates)) if candidates else []
    shuffled = [candidates[int(i)] for i in order]
    texts = [instruction] + shuffled
    return ParaphraseResult(texts[:count], shortfall=len(texts) < count)


def _depth_combos(n_slots: int, depth: int, max_choice: list[int]):
    """All choice vectors touching exactly ``depth`` slots, deterministic order."""
    import itertools

    for positions in itertools.combinations(range(n_slots), depth):
        skip = False
        ranges = []
        for p in positions:
            if max_choice[p] < 1:
                skip = True
                break
            ranges.append(range(1, max_choice[p] + 1))
        if skip:
            continue
        for choices in itertools.product(*ranges):
            combo = [0] * n_slots
            for p, c in zip(positions, choices):
                combo[p] = c
            yield combo


def load_default_lexicon() -> dict[str, list[str]]:
    from importlib.resources import files

    path = files("sceneforge.fixtures").joinpath("paraphrase_lexicon.json")
    return json.loads(path.read_text(encoding="utf-8"))["classes"]
