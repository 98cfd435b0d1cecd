import math

import numpy as np
import pytest

from sceneforge.errors import PreconditionError
from sceneforge.world import (
    ActionCommand,
    ArticulationSpec,
    MAX_STEP_POS,
    build_observation,
    make_world,
    step_world,
    world_from_full_dict,
)

from .conftest import pick_place_scene


@pytest.fixture
def world():
    return make_world(pick_place_scene(0), seed=0)


def ee_to(world, target, max_steps=400, gripper=1.0):
    target = np.asarray(target, dtype=float)
    for _ in range(max_steps):
        err = target - world.ee_pose.position
        if float(np.linalg.norm(err)) < 1e-6:
            break
        step_world(world, ActionCommand(np.array([*err, 0.0, 0.0, 0.0]), gripper))
    return world


def test_zero_action_only_advances_step(world):
    before = world.to_canonical_dict()
    step_world(world, ActionCommand(np.zeros(6), world.gripper))
    after = world.to_canonical_dict()
    assert after["step"] == before["step"] + 1
    before.pop("step"), after.pop("step")
    assert before == after


def test_translation_clamped_to_step_limit(world):
    start = world.ee_pose.position.copy()
    step_world(world, ActionCommand(np.array([1.0, 0.0, 0.0, 0, 0, 0]), 1.0))
    assert np.linalg.norm(world.ee_pose.position - start) == pytest.approx(MAX_STEP_POS)


def test_rotation_clamped_per_component(world):
    step_world(world, ActionCommand(np.array([0, 0, 0, 0.0, 0.0, 1.0]), 1.0))
    from sceneforge.geometry import quat_yaw
    assert quat_yaw(world.ee_pose.orientation) == pytest.approx(math.radians(5.0), abs=1e-9)


def test_non_finite_action_rejected(world):
    with pytest.raises(PreconditionError):
        step_world(world, ActionCommand(np.array([np.nan, 0, 0, 0, 0, 0]), 1.0))


def test_grasp_within_range_and_cone(world):
    cube = world.node("cube")
    ee_to(world, cube.pose.position + [0, 0, 0.02])
    step_world(world, ActionCommand(np.zeros(6), 0.0))
    assert world.attachment == "cube"


def test_no_grasp_beyond_range(world):
    cube = world.node("cube")
    ee_to(world, cube.pose.position + [0, 0, 0.06])
    step_world(world, ActionCommand(np.zeros(6), 0.0))
    assert world.attachment is None


def test_no_grasp_with_tilted_tool(world):
    cube = world.node("cube")
    ee_to(world, cube.pose.position + [0, 0, 0.02])
    # Pitch the tool 40 degrees off vertical, then close.
    for _ in range(8):
        step_world(world, ActionCommand(np.array([0, 0, 0, 0.0, math.radians(5), 0.0]), 1.0))
    step_world(world, ActionCommand(np.zeros(6), 0.0))
    assert world.attachment is None


def test_no_grasp_of_loaded_support(world):
    # The table supports the cube and tray: it must never be graspable.
    table = world.node("table")
    top_center = table.pose.position + [0, 0, table.size[2] / 2 - 0.01]
    ee_to(world, top_center)
    step_world(world, ActionCommand(np.zeros(6), 0.0))
    assert world.attachment != "table"


def test_held_object_tracks_ee_and_releases_settling(world):
    cube = world.node("cube")
    tray = world.node("tray")
    ee_to(world, cube.pose.position + [0, 0, 0.02])
    step_world(world, ActionCommand(np.zeros(6), 0.0))
    assert world.attachment == "cube"
    lift = world.ee_pose.position + [0, 0, 0.15]
    ee_to(world, lift, gripper=0.0)
    assert world.node("cube").pose.position[2] > cube.size[2]
    above_tray = np.array([tray.pose.position[0], tray.pose.position[1],
                           tray.box.top + 0.02 + 0.025 + 0.008])
    ee_to(world, above_tray, gripper=0.0)
    step_world(world, ActionCommand(np.zeros(6), 1.0))
    assert world.attachment is None
    settled = world.node("cube")
    assert settled.box.bottom == pytest.approx(tray.box.top, abs=1e-9)
    assert tray.box.contains_xy(settled.pose.position[:2])


def test_release_settles_through_to_table(world):
    cube = world.node("cube")
    table = world.node("table")
    ee_to(world, cube.pose.position + [0, 0, 0.02])
    step_world(world, ActionCommand(np.zeros(6), 0.0))
    high = np.array([cube.pose.position[0], cube.pose.position[1], 1.0])
    ee_to(world, high, gripper=0.0)
    step_world(world, ActionCommand(np.zeros(6), 1.0))
    assert world.node("cube").box.bottom == pytest.approx(table.box.top, abs=1e-9)


def test_attachment_exclusivity(world):
    ee_to(world, world.node("cube").pose.position + [0, 0, 0.02])
    step_world(world, ActionCommand(np.zeros(6), 0.0))
    assert world.attachment == "cube"
    # Trying to grasp again near the tray must not steal the attachment.
    ee_to(world, world.node("tray").pose.position + [0, 0, 0.1], gripper=0.0)
    assert world.attachment == "cube"


def test_held_interpenetration_rejects_motion(world):
    cube = world.node("cube")
    table = world.node("table")
    ee_to(world, cube.pose.position + [0, 0, 0.02])
    step_world(world, ActionCommand(np.zeros(6), 0.0))
    # Try to drive the held cube into the table: it must stop short.
    goal = np.array([cube.pose.position[0], cube.pose.position[1], 0.3])
    ee_to(world, goal, gripper=0.0, max_steps=120)
    held = world.node("cube")
    assert held.box.bottom >= table.box.top - 0.002
    assert world.attachment == "cube"


def test_digest_stable_across_copies(world):
    assert world.copy().digest() == world.digest()
    step_world(world, ActionCommand(np.zeros(6), 1.0))
    copied = world.copy()
    assert copied.digest() == world.digest()


def test_full_dict_roundtrip(world):
    ee_to(world, world.node("cube").pose.position + [0, 0, 0.02])
    step_world(world, ActionCommand(np.zeros(6), 0.0))
    rebuilt = world_from_full_dict(world.to_full_dict())
    assert rebuilt.digest() == world.digest()


def test_articulation_drag_opens_drawer():
    from sceneforge.geometry import quat_rotate

    scene = pick_place_scene(4)
    spec = ArticulationSpec(handle_offset=np.array([0.0, -0.09, 0.0]),
                            axis=np.array([0.0, -1.0, 0.0]), stroke=0.3)
    world = make_world(scene, seed=0, articulation_specs={"tray": spec})
    tray = world.node("tray")
    handle = tray.pose.position + quat_rotate(tray.pose.orientation, spec.handle_offset)
    axis_world = quat_rotate(tray.pose.orientation, spec.axis)
    ee_to(world, handle)
    step_world(world, ActionCommand(np.zeros(6), 0.0))
    assert world.attachment == "tray"
    for _ in range(40):
        delta = axis_world * 0.02
        step_world(world, ActionCommand(np.array([*delta, 0, 0, 0]), 0.0))
    assert world.articulations["tray"] == pytest.approx(1.0)
    assert np.allclose(world.node("tray").pose.position, tray.pose.position)
    step_world(world, ActionCommand(np.zeros(6), 1.0))
    assert world.attachment is None


def test_observation_shapes_and_privilege(world):
    obs = build_observation(world, privileged=True, camera=True)
    assert len(obs["proprio"]) == 8
    ids = {o["id"] for o in obs["objects"]}
    assert {"table", "cube", "tray"} <= ids
    assert all(len(o["pose"]) == 7 for o in obs["objects"])
    blind = build_observation(world, privileged=False)
    assert "objects" not in blind


def test_camera_noise_deterministic_per_step():
    scene = pick_place_scene(1)
    scene.metadata["camera_sigma"] = "0.01"
    w1 = make_world(scene, seed=9)
    w2 = make_world(scene, seed=9)
    a = build_observation(w1, camera=True)["camera"]
    b = build_observation(w2, camera=True)["camera"]
    assert a == b
    step_world(w1, ActionCommand(np.zeros(6), 1.0))
    c = build_observation(w1, camera=True)["camera"]
    assert c != a
