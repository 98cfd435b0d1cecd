import numpy as np
import pytest

from sceneforge.errors import (
    ContractViolationError,
    EvaluationError,
    GenerationError,
    PreconditionError,
    TransportError,
)
from sceneforge.evaluation import (
    AdversarialJudge,
    EvalConfig,
    EvalPredicate,
    EvalStage,
    HttpJudge,
    OracleJudge,
    Verdict,
    evaluate_trajectory,
    frames_from_trajectory,
    generate_eval_config,
    judge_episode,
    predicate_satisfied,
)
from sceneforge.httpbase import JsonHttpServer
from sceneforge.reference_services import serve_judge

from .oracles import oracle_staged_success


def snapshot(step, cube_z=0.025, attachment=None, cube_xy=(0.0, 0.0),
             articulations=None):
    return {
        "step": step,
        "ee": {"position": [0, 0, 1.0], "orientation": [1, 0, 0, 0]},
        "gripper": 1.0 if attachment is None else 0.0,
        "attachment": attachment,
        "articulations": dict(articulations or {}),
        "nodes": {
            "cube": {"pose": {"position": [cube_xy[0], cube_xy[1], cube_z],
                              "orientation": [1, 0, 0, 0]},
                     "size": [0.05, 0.05, 0.05]},
            "tray": {"pose": {"position": [0.0, 0.0, 0.02],
                              "orientation": [1, 0, 0, 0]},
                     "size": [0.25, 0.18, 0.04]},
        },
    }


ON_TRAY_Z = 0.04 + 0.025  # tray top + half cube


def pick_place_config(timeout=100, interval=10):
    return EvalConfig(
        task_id="t", instruction="put the cube on the tray",
        stages=(
            EvalStage("grasp", EvalPredicate("held", subject="cube"), 0.5),
            EvalStage("place", EvalPredicate("on_surface", subject="cube",
                                             reference="tray"), 0.5),
        ),
        timeout_steps=timeout, check_interval_steps=interval,
    )


def test_config_validation():
    cfg = pick_place_config()
    cfg.validate()
    with pytest.raises(PreconditionError):
        EvalConfig("t", "i", (), timeout_steps=100).validate()
    bad_weights = EvalConfig(
        "t", "i",
        (EvalStage("a", EvalPredicate("held", subject="x"), 0.9),
         EvalStage("b", EvalPredicate("held", subject="x"), 0.9)),
        success_rule="weighted",
    )
    with pytest.raises(PreconditionError):
        bad_weights.validate()


def test_config_roundtrip():
    cfg = pick_place_config()
    assert EvalConfig.from_dict(cfg.to_dict()) == cfg


def test_predicates_held_and_on_surface():
    assert predicate_satisfied(EvalPredicate("held", subject="cube"),
                               snapshot(0, attachment="cube"))
    assert not predicate_satisfied(EvalPredicate("held", subject="cube"), snapshot(0))
    on = EvalPredicate("on_surface", subject="cube", reference="tray")
    assert predicate_satisfied(on, snapshot(0, cube_z=ON_TRAY_Z))
    assert not predicate_satisfied(on, snapshot(0, cube_z=0.4))


def test_predicate_missing_node_is_error():
    with pytest.raises(EvaluationError, match="ghost"):
        predicate_satisfied(EvalPredicate("held", subject="ghost"), snapshot(0))


def test_joint_above_modes():
    above = EvalPredicate("joint_above", subject="drawer", params={"threshold": 0.9})
    below = EvalPredicate("joint_above", subject="drawer",
                          params={"threshold": 0.1, "mode": "below"})
    assert predicate_satisfied(above, snapshot(0, articulations={"drawer": 0.95}))
    assert not predicate_satisfied(above, snapshot(0, articulations={"drawer": 0.5}))
    assert predicate_satisfied(below, snapshot(0, articulations={"drawer": 0.05}))


def test_within_region_bounds():
    pred = EvalPredicate("within_region", subject="cube",
                         params={"lo": [-0.1, -0.1, 0.0], "hi": [0.1, 0.1, 0.1]})
    assert predicate_satisfied(pred, snapshot(0))
    assert not predicate_satisfied(pred, snapshot(0, cube_xy=(0.5, 0.0)))


def test_staged_ordering_gates_early_satisfaction():
    cfg = pick_place_config()
    # The cube starts on the tray (stage 2's predicate holds first), is then
    # picked up, and finally placed back: stage 2 may only count after stage 1.
    traj = [
        snapshot(10, cube_z=ON_TRAY_Z),
        snapshot(20, cube_z=0.3, attachment="cube"),
        snapshot(30, cube_z=ON_TRAY_Z),
    ]
    verdict = evaluate_trajectory(cfg, traj)
    assert verdict.success
    firsts = [r.first_satisfied_step for r in verdict.stage_results]
    assert firsts == [20, 30]
    truth = [[s["attachment"] == "cube" for s in traj],
             [abs((s["nodes"]["cube"]["pose"]["position"][2] - 0.025) - 0.04) <= 0.002
              for s in traj]]
    ok, oracle_firsts = oracle_staged_success(truth)
    assert ok
    assert [traj[i]["step"] for i in oracle_firsts] == firsts


def test_unsatisfied_first_stage_blocks_later_stages():
    cfg = pick_place_config()
    traj = [snapshot(10, cube_z=ON_TRAY_Z), snapshot(20, cube_z=ON_TRAY_Z)]
    verdict = evaluate_trajectory(cfg, traj)
    assert not verdict.success
    assert [r.satisfied for r in verdict.stage_results] == [False, False]


def test_same_snapshot_can_satisfy_consecutive_stages():
    cfg = pick_place_config()
    traj = [snapshot(10, cube_z=ON_TRAY_Z, attachment="cube")]
    verdict = evaluate_trajectory(cfg, traj)
    assert verdict.success
    assert [r.first_satisfied_step for r in verdict.stage_results] == [10, 10]


def test_timeout_justification():
    cfg = pick_place_config(timeout=50)
    traj = [snapshot(step) for step in range(10, 60, 10)]
    verdict = evaluate_trajectory(cfg, traj)
    assert not verdict.success
    assert verdict.justification == "timeout"
    assert verdict.score == 0.0


def test_success_score_is_one_under_all_stages():
    cfg = pick_place_config()
    verdict = evaluate_trajectory(cfg, [snapshot(10, cube_z=ON_TRAY_Z, attachment="cube")])
    assert verdict.success and verdict.score == 1.0


def test_weighted_rule_partial_credit():
    cfg = EvalConfig(
        "t", "i",
        stages=(EvalStage("grasp", EvalPredicate("held", subject="cube"), 0.6),
                EvalStage("place", EvalPredicate("on_surface", subject="cube",
                                                 reference="tray"), 0.4)),
        success_rule="weighted", threshold=0.5, timeout_steps=100,
    )
    verdict = evaluate_trajectory(cfg, [snapshot(10, attachment="cube")])
    assert verdict.success
    assert verdict.score == pytest.approx(0.6)


def test_ordered_predicate_consumes_children_in_order():
    cfg = EvalConfig(
        "t", "i",
        stages=(EvalStage("both", EvalPredicate(
            "ordered",
            children=(EvalPredicate("held", subject="cube"),
                      EvalPredicate("on_surface", subject="cube", reference="tray")),
        ), 1.0),),
        timeout_steps=100,
    )
    good = [snapshot(10, attachment="cube", cube_z=0.3), snapshot(20, cube_z=ON_TRAY_Z)]
    assert evaluate_trajectory(cfg, good).success
    reordered = [snapshot(10, cube_z=ON_TRAY_Z), snapshot(20, attachment="cube", cube_z=0.3)]
    assert not evaluate_trajectory(cfg, reordered).success


def test_extension_monotonicity_randomized():
    cfg = pick_place_config(timeout=10_000)
    rng = np.random.default_rng(0)
    for _ in range(300):
        length = int(rng.integers(1, 12))
        traj = []
        for i in range(length):
            kind = rng.integers(3)
            traj.append(snapshot(
                10 * (i + 1),
                cube_z=ON_TRAY_Z if kind == 2 else 0.3,
                attachment="cube" if kind == 1 else None,
            ))
        base = evaluate_trajectory(cfg, traj)
        if not base.success:
            continue
        extended = traj + [snapshot(10 * (length + 1), cube_z=0.9)]
        assert evaluate_trajectory(cfg, extended).success


def test_empty_trajectory_rejected():
    with pytest.raises(PreconditionError):
        evaluate_trajectory(pick_place_config(), [])


# --- Config generation -------------------------------------------------------------

def test_template_config_for_place_intent(pick_place):
    scene = pick_place(3)
    cfg = generate_eval_config(scene, "place")
    assert [s.name for s in cfg.stages] == ["grasp_subject", "subject_at_target"]
    assert cfg.stages[0].predicate.kind == "held"
    assert cfg.stages[1].predicate.kind == "on_surface"
    assert cfg.stages[1].predicate.subject == "cube"
    assert cfg.stages[1].predicate.reference == "tray"
    assert generate_eval_config(scene, "place") == cfg


def test_template_config_tidy_uses_containment(pick_place):
    cfg = generate_eval_config(pick_place(3), "tidy")
    assert cfg.stages[1].predicate.kind == "in_container"


def test_template_config_open_uses_joint(pick_place):
    cfg = generate_eval_config(pick_place(3), "open", subject="tray")
    assert cfg.stages[0].predicate.kind == "joint_above"
    assert cfg.stages[0].predicate.params["threshold"] == 0.9


def test_unknown_intent_rejected(pick_place):
    with pytest.raises(GenerationError, match="template table"):
        generate_eval_config(pick_place(3), "juggle")


def test_missing_node_named(pick_place):
    with pytest.raises(GenerationError, match="ghost"):
        generate_eval_config(pick_place(3), "place", subject="ghost", target="tray")


# --- Judges ---------------------------------------------------------------------------

def success_trajectory():
    return [snapshot(10, cube_z=0.3, attachment="cube"), snapshot(20, cube_z=ON_TRAY_Z)]


def test_oracle_judge_matches_rule_engine():
    cfg = pick_place_config()
    traj = success_trajectory()
    frames = frames_from_trajectory(traj)
    assert all({"step", "objects", "image_ref"} <= set(f) for f in frames)
    verdict, meta = judge_episode(cfg, frames, OracleJudge())
    assert verdict.success == evaluate_trajectory(cfg, traj).success
    assert meta["attempts"] == 1


def test_adversarial_judge_inverts():
    cfg = pick_place_config()
    frames = frames_from_trajectory(success_trajectory())
    verdict, _ = judge_episode(cfg, frames, AdversarialJudge())
    assert not verdict.success


def test_oracle_judge_requires_privileged_frames():
    cfg = pick_place_config()
    frames = frames_from_trajectory(success_trajectory(), privileged=False)
    with pytest.raises(EvaluationError):
        OracleJudge().judge(cfg, frames)


def test_http_judge_round_trip():
    server = serve_judge("oracle")
    try:
        cfg = pick_place_config()
        frames = frames_from_trajectory(success_trajectory())
        verdict, meta = judge_episode(cfg, frames, HttpJudge(server.base_url))
        assert verdict.success
        assert meta["attempts"] == 1
    finally:
        server.stop()


def test_http_judge_unreachable_retries_then_fails():
    judge = HttpJudge("http://127.0.0.1:9", timeout=0.2)
    with pytest.raises(TransportError, match="after 2 attempts"):
        judge_episode(pick_place_config(), frames_from_trajectory(success_trajectory()),
                      judge)


def test_http_judge_malformed_verdict_is_contract_error():
    server = JsonHttpServer()
    server.route("POST", r"/v1/judge", lambda m, b, q: (200, {"nonsense": True}))
    server.start()
    try:
        with pytest.raises(ContractViolationError):
            HttpJudge(server.base_url).judge(
                pick_place_config(), frames_from_trajectory(success_trajectory()))
    finally:
        server.stop()


def test_verdict_roundtrip():
    verdict = evaluate_trajectory(pick_place_config(), success_trajectory())
    assert Verdict.from_dict(verdict.to_dict()).to_dict() == verdict.to_dict()
