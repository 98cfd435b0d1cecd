import json

import numpy as np
import pytest

from sceneforge.assets import MockEmbeddingProvider, load_catalog
from sceneforge.cli import fixture_path
from sceneforge.scenegraph import SceneEdge, SceneNode, solve_placement


@pytest.fixture(scope="session")
def desk_catalog():
    catalog = load_catalog(fixture_path("desk_catalog.json"))
    catalog.build_index(MockEmbeddingProvider(seed=0))
    return catalog


@pytest.fixture(scope="session")
def transcripts():
    return json.loads(fixture_path("chat_transcripts.json").read_text(encoding="utf-8"))


def make_node(node_id, size, tag=None, asset_id=None):
    return SceneNode(
        node_id=node_id,
        asset_id=asset_id or f"a.{node_id}",
        semantic=node_id,
        size=np.asarray(size, dtype=float),
        task_tag=tag,
    )


def pick_place_scene(seed, cube_asset="a.cube", tray_asset="a.tray"):
    """Table with one cube (subject) and one tray (target), solved."""
    nodes = [
        make_node("table", [0.8, 0.6, 0.74]),
        make_node("cube", [0.05, 0.05, 0.05], tag="subject", asset_id=cube_asset),
        make_node("tray", [0.25, 0.18, 0.04], tag="target", asset_id=tray_asset),
    ]
    edges = [SceneEdge("on", "cube", "table", {}),
             SceneEdge("on", "tray", "table", {})]
    return solve_placement(nodes, edges, seed=seed)


@pytest.fixture
def pick_place():
    return pick_place_scene


@pytest.fixture(scope="session")
def tabletop_scene(desk_catalog):
    from sceneforge.dsl import evaluate_program, parse_program, validate_program

    source = fixture_path("tabletop_12.dsl").read_text(encoding="utf-8")
    resolved = validate_program(parse_program(source), desk_catalog)
    return evaluate_program(resolved, 7, desk_catalog)
