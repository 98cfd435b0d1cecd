import json

import pytest

from sceneforge.cli import fixture_path, main
from sceneforge.scenegraph import scene_from_json, validate_scene


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture
def scene_file(tmp_path):
    out = tmp_path / "scene.json"
    code = main(["generate", "--program", str(fixture_path("tabletop_12.dsl")),
                 "--seed", "7", "--out", str(out)])
    assert code == 0
    return out


def test_generate_from_program_produces_valid_scene(scene_file):
    scene = scene_from_json(scene_file.read_text())
    assert validate_scene(scene).ok
    assert len(scene.nodes) == 14


def test_generate_from_prompt_with_transcript(tmp_path, transcripts, capsys):
    responses = tmp_path / "responses.json"
    responses.write_text(json.dumps(transcripts["three_yellow_cubes"]["responses"]))
    out = tmp_path / "scene.json"
    code, stdout, _ = run(
        capsys, "generate", "--prompt", transcripts["three_yellow_cubes"]["prompt"],
        "--transcript", str(responses), "--seed", "3", "--out", str(out), "--json")
    assert code == 0
    summary = json.loads(stdout)
    assert summary["valid"] is True
    scene = scene_from_json(out.read_text())
    assert sum(1 for n in scene.nodes if not n.is_region) == 4


def test_generate_deterministic_bytes(tmp_path):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    for out in (a, b):
        assert main(["generate", "--program", str(fixture_path("tabletop_12.dsl")),
                     "--seed", "9", "--out", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_randomize_writes_variants(scene_file, tmp_path, capsys):
    out = tmp_path / "variants"
    code, stdout, _ = run(capsys, "randomize", "--scene", str(scene_file),
                          "-n", "5", "--seed", "3", "--out", str(out), "--json")
    assert code == 0
    summary = json.loads(stdout)
    assert summary["produced"] == 5
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["dropped"] == []
    assert (out / "variant_0.json").exists()


def test_evaluate_noop_all_timeouts(scene_file, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    from sceneforge.evaluation import generate_eval_config
    scene = scene_from_json(scene_file.read_text())
    config = generate_eval_config(scene, "place", timeout_steps=40,
                                  check_interval_steps=10)
    cfg.write_text(json.dumps(config.to_dict()))
    code, stdout, _ = run(
        capsys, "evaluate", "--scene", str(scene_file), "--policy", "noop",
        "--episodes", "3", "--seed", "1", "--config", str(cfg), "--json")
    assert code == 0
    summary = json.loads(stdout)
    assert summary == {"episodes": 3, "success": 0, "timeout": 3, "policy_error": 0}


def test_evaluate_expert_succeeds(tmp_path, capsys):
    # A compact pick-place scene written through the DSL pipeline.
    program = tmp_path / "scene.dsl"
    program.write_text(
        'asset table = retrieve("wooden table", k=1);\n'
        "place table on workspace with (offset_x=0.0, offset_y=0.0, yaw_deg=0.0);\n"
        'asset cube = retrieve("yellow cube", k=1);\n'
        'asset tray = retrieve("shallow serving tray", k=1);\n'
        'place cube on table with (tag="subject");\n'
        'place tray on table with (tag="target");\n'
    )
    scene_path = tmp_path / "scene.json"
    assert main(["generate", "--program", str(program), "--seed", "2",
                 "--out", str(scene_path)]) == 0
    capsys.readouterr()  # drop the generate call's human-format output
    out_dir = tmp_path / "episodes"
    code, stdout, _ = run(
        capsys, "evaluate", "--scene", str(scene_path), "--policy", "expert",
        "--episodes", "2", "--seed", "0", "--out", str(out_dir), "--json")
    assert code == 0
    summary = json.loads(stdout)
    assert summary["success"] == 2
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert len(manifest["episodes"]) == 2
    for entry in manifest["episodes"]:
        assert (out_dir / entry["file"]).exists()


def test_analyze_aggregates_episode_records(scene_file, tmp_path, capsys):
    out_dir = tmp_path / "runs"
    assert main(["evaluate", "--scene", str(scene_file), "--policy", "noop",
                 "--episodes", "2", "--seed", "1", "--out", str(out_dir),
                 "--config", str(_short_noop_config(scene_file, tmp_path))]) == 0
    capsys.readouterr()
    code, stdout, _ = run(capsys, "analyze", "--records", str(tmp_path), "--json")
    assert code == 0
    summary = json.loads(stdout)
    assert summary["aggregated_rows"] == 1


def _short_noop_config(scene_file, tmp_path):
    from sceneforge.evaluation import generate_eval_config
    scene = scene_from_json(scene_file.read_text())
    config = generate_eval_config(scene, "place", timeout_steps=30,
                                  check_interval_steps=10)
    path = tmp_path / "short.json"
    path.write_text(json.dumps(config.to_dict()))
    return path


def test_analyze_fixture_slope(capsys):
    code, stdout, _ = run(capsys, "analyze", "--json")
    assert code == 0
    summary = json.loads(stdout)
    assert abs(summary["slope"] - 1.045) <= 0.005
    assert abs(summary["r_squared"] - 0.924) <= 0.005
    assert summary["convention"] == "sim_on_real"
    assert summary["best_setup_trend_1500_eps_sim"] is True


def test_analyze_export_bundle(tmp_path, capsys):
    out = tmp_path / "report"
    code, stdout, _ = run(capsys, "analyze", "--out", str(out), "--json")
    assert code == 0
    assert (out / "heatmap_real.csv").exists()
    assert (out / "scatter.csv").exists()


def test_collect_cli(tmp_path, capsys):
    # Scene pinned near the robot so feasibility passes.
    import numpy as np
    from sceneforge.geometry import Pose
    from sceneforge.scenegraph import SceneEdge, scene_to_json, solve_placement
    from .conftest import make_node

    table = make_node("table", [0.55, 0.5, 0.74], asset_id="table_00")
    table.pose = Pose(np.array([0.0, -0.07, 0.37]), np.array([1.0, 0.0, 0.0, 0.0]))
    nodes = [table,
             make_node("cube", [0.05, 0.05, 0.05], tag="subject", asset_id="cube_00"),
             make_node("tray", [0.25, 0.18, 0.04], tag="target", asset_id="tray_00")]
    edges = [SceneEdge("on", "cube", "table", {}), SceneEdge("on", "tray", "table", {})]
    scene = solve_placement(nodes, edges, seed=21)
    scene_path = tmp_path / "scene.json"
    scene_path.write_text(scene_to_json(scene))
    task = tmp_path / "task.json"
    task.write_text(json.dumps({"skill": "place", "subject": "cube",
                                "target": "tray", "seed": 21}))
    out = tmp_path / "data"
    code, stdout, _ = run(capsys, "collect", "--scene", str(scene_path),
                          "--task", str(task), "--out", str(out), "--json")
    assert code == 0
    summary = json.loads(stdout)
    assert summary["attempts"] >= 1
    assert (out / "episodes" / "place_cube_tray" / "21.jsonl").exists()


def test_unknown_flag_exits_2():
    with pytest.raises(SystemExit) as err:
        main(["analyze", "--nonsense"])
    assert err.value.code == 2


def test_missing_subcommand_exits_2():
    with pytest.raises(SystemExit) as err:
        main([])
    assert err.value.code == 2


def test_operation_failure_exits_1(tmp_path, capsys):
    code, _, stderr = run(capsys, "randomize", "--scene",
                          str(tmp_path / "missing.json"), "--out", str(tmp_path / "o"))
    assert code == 1
    assert "randomize" in stderr
