import json

import pytest

from sceneforge.conversation import (
    ChatSession,
    ClarificationRequest,
    HttpChatProvider,
    ObjectSpec,
    ScriptedChatProvider,
    TaskRelation,
    TaskRequest,
    advance_session,
    compose_program,
    compose_template,
    extract_payload,
    find_rule_conflicts,
    interpret_intent,
    load_session,
    refine_session,
    validate_task_request,
)
from sceneforge.dsl import AssetDecl, Place, parse_program, validate_program
from sceneforge.errors import GenerationError, PreconditionError, TransportError
from sceneforge.assets import query_topk
from sceneforge.reference_services import serve_chat


def make_request(counts=(3, 1), relation=("on", 0, 1), intent="place"):
    specs = (
        ObjectSpec("cube", {"color": "yellow"}, counts[0]),
        ObjectSpec("tray", {}, counts[1]),
    )
    relations = (TaskRelation(*relation),) if relation else ()
    return TaskRequest(specs, relations, intent)


def test_extract_payload_takes_last_fence():
    content = "thinking...\n```json\n{\"a\": 1}\n```\nmore\n```\nfinal\n```"
    assert extract_payload(content) == "final"
    assert extract_payload("no fences at all") == "no fences at all"


def test_schema_validation_catches_violations():
    good = make_request()
    assert validate_task_request(good.to_dict()) == good
    bad = good.to_dict()
    bad["relations"][0]["reference"] = 5
    with pytest.raises(ValueError, match="out of range"):
        validate_task_request(bad)
    with pytest.raises(ValueError, match="semantic_class"):
        validate_task_request({"object_specs": [{"count": 1}], "intent_tag": "x"})


def test_rule_conflicts():
    self_rel = make_request(relation=("on", 0, 0))
    assert any("itself" in c for c in find_rule_conflicts(self_rel))
    too_many = make_request(counts=(51, 1))
    assert any("limit" in c for c in find_rule_conflicts(too_many))
    contradictory = TaskRequest(
        (ObjectSpec("cube", {"color": "red blue"}, 1),), (), "place")
    assert any("contradictory" in c for c in find_rule_conflicts(contradictory))


def test_interpret_intent_fixture(desk_catalog, transcripts):
    fixture = transcripts["three_yellow_cubes"]
    session = ChatSession(session_id="s1")
    provider = ScriptedChatProvider(fixture["responses"])
    result = interpret_intent(fixture["prompt"], session, provider)
    assert isinstance(result, TaskRequest)
    assert result.intent_tag == "place"
    assert [s.count for s in result.object_specs] == [3, 1]
    assert result.relations == (TaskRelation("on", 0, 1),)
    assert session.task_request == result


def test_interpret_intent_self_relation_clarifies(transcripts):
    fixture = transcripts["self_relation"]
    session = ChatSession(session_id="s2")
    result = interpret_intent(fixture["prompt"], session,
                              ScriptedChatProvider(fixture["responses"]))
    assert isinstance(result, ClarificationRequest)
    assert "itself" in result.question
    assert session.pending_clarification == result.question
    assert session.versions == []


def test_interpret_intent_empty_prompt_rejected():
    with pytest.raises(PreconditionError):
        interpret_intent("", ChatSession(session_id="x"), ScriptedChatProvider([]))


def test_interpret_retries_schema_garbage_then_succeeds(transcripts):
    good = transcripts["three_yellow_cubes"]["responses"][0]
    provider = ScriptedChatProvider(["not json at all", '{"intent_tag": 1}', good])
    session = ChatSession(session_id="s3")
    result = interpret_intent("whatever", session, provider)
    assert isinstance(result, TaskRequest)
    assert len(provider.requests) == 3


def test_interpret_three_garbage_outputs_hard_error():
    provider = ScriptedChatProvider(["junk", "junk", "junk"])
    with pytest.raises(GenerationError, match="raw outputs"):
        interpret_intent("x", ChatSession(session_id="s4"), provider)


def test_template_counts_for_fixture_request(desk_catalog):
    source = compose_template(make_request())
    program = parse_program(source)
    decls = [s for s in program.statements if isinstance(s, AssetDecl)]
    places = [s for s in program.statements if isinstance(s, Place)]
    assert len(decls) == 4
    assert len(places) == 3
    assert all(p.relation == "on" and p.reference == "tray" for p in places)
    validate_program(program, desk_catalog)


def test_template_zero_relations_single_object(desk_catalog):
    source = compose_template(TaskRequest((ObjectSpec("bowl", {}, 1),), (), "place"))
    program = parse_program(source)
    assert len(program.statements) == 2
    decl, place = program.statements
    assert isinstance(decl, AssetDecl)
    assert isinstance(place, Place) and place.reference == "workspace"


def test_compose_program_flaky_provider_then_valid(desk_catalog):
    request = make_request()
    candidates = [query_topk(s.query_text(), 5, desk_catalog)
                  for s in request.object_specs]
    session = ChatSession(session_id="s5")
    valid = compose_template(request)
    provider = ScriptedChatProvider(["garbage {{{", "still garbage", f"```\n{valid}```"])
    source = compose_program(request, candidates, session, provider, desk_catalog)
    assert parse_program(source) == parse_program(valid)
    assert session.metadata["compose_retries"] == 2
    assert "compose_fallback" not in session.metadata


def test_compose_program_falls_back_to_template(desk_catalog):
    request = make_request()
    candidates = [query_topk(s.query_text(), 5, desk_catalog)
                  for s in request.object_specs]
    session = ChatSession(session_id="s6")
    provider = ScriptedChatProvider(["junk"] * 3)
    source = compose_program(request, candidates, session, provider, desk_catalog)
    assert session.metadata["compose_fallback"] == "template"
    assert parse_program(source) == parse_program(compose_template(request))


def test_compose_program_requires_candidates(desk_catalog):
    request = make_request()
    with pytest.raises(PreconditionError):
        compose_program(request, [[]], ChatSession(session_id="x"), None, desk_catalog)


def test_full_round_and_refinement(desk_catalog, transcripts):
    session = ChatSession(session_id="s7", seed=3)
    provider = ScriptedChatProvider(
        transcripts["three_yellow_cubes"]["responses"]
        + transcripts["refine_red"]["responses"])
    advance_session(session, transcripts["three_yellow_cubes"]["prompt"],
                    provider, desk_catalog)
    v1 = session.current_version
    assert v1.version == 1
    assert sum(1 for n in v1.scene.nodes if not n.is_region) == 4
    v2 = refine_session(session, transcripts["refine_red"]["message"],
                        provider, desk_catalog)
    assert v2.version == 2
    assert len(v2.scene.nodes) == len(v1.scene.nodes)
    assert any("red cube" in line for line in v2.diff["added"])
    assert any("yellow cube" in line for line in v2.diff["removed"])
    cubes = [n for n in v2.scene.nodes if n.node_id.startswith("cube")]
    assert all(n.asset_id == "cube_01" for n in cubes)


def test_refinement_failure_leaves_session_unchanged(desk_catalog, transcripts):
    session = ChatSession(session_id="s8", seed=3)
    provider = ScriptedChatProvider(transcripts["three_yellow_cubes"]["responses"]
                                    + ["junk"] * 3)
    advance_session(session, transcripts["three_yellow_cubes"]["prompt"],
                    provider, desk_catalog)
    before = [v.version for v in session.versions]
    with pytest.raises(GenerationError):
        refine_session(session, "break it", provider, desk_catalog)
    assert [v.version for v in session.versions] == before


def test_refinement_requires_existing_version(desk_catalog):
    with pytest.raises(PreconditionError):
        refine_session(ChatSession(session_id="s9"), "tweak",
                       ScriptedChatProvider([]), desk_catalog)


def test_version_history_is_monotone(desk_catalog, transcripts):
    session = ChatSession(session_id="s10", seed=3)
    refine = transcripts["refine_red"]["responses"][0]
    provider = ScriptedChatProvider(
        transcripts["three_yellow_cubes"]["responses"] + [refine, refine])
    advance_session(session, transcripts["three_yellow_cubes"]["prompt"],
                    provider, desk_catalog)
    refine_session(session, "make them red", provider, desk_catalog)
    refine_session(session, "again", provider, desk_catalog)
    assert [v.version for v in session.versions] == [1, 2, 3]


def test_transcript_persistence_replays(desk_catalog, transcripts, tmp_path):
    path = tmp_path / "session.jsonl"
    session = ChatSession(session_id="s11", seed=3, transcript_path=path)
    provider = ScriptedChatProvider(transcripts["three_yellow_cubes"]["responses"])
    advance_session(session, transcripts["three_yellow_cubes"]["prompt"],
                    provider, desk_catalog)
    loaded = load_session("s11", path)
    assert [m["role"] for m in loaded.history] == [m["role"] for m in session.history]
    assert len(loaded.versions) == 1
    assert loaded.versions[0].scene == session.versions[0].scene


def test_pipeline_deterministic_with_scripted_provider(desk_catalog, transcripts):
    def run():
        session = ChatSession(session_id="d", seed=3)
        provider = ScriptedChatProvider(transcripts["three_yellow_cubes"]["responses"])
        advance_session(session, transcripts["three_yellow_cubes"]["prompt"],
                        provider, desk_catalog)
        from sceneforge.scenegraph import scene_to_json
        return scene_to_json(session.current_version.scene)

    assert run() == run()


def test_http_chat_provider_wire():
    server = serve_chat(["hello from the wire"])
    try:
        provider = HttpChatProvider(server.base_url)
        assert provider.complete([{"role": "user", "content": "hi"}]) == \
            "hello from the wire"
        with pytest.raises(TransportError):
            provider.complete([{"role": "user", "content": "again"}])
    finally:
        server.stop()


def test_http_chat_provider_unreachable():
    provider = HttpChatProvider("http://127.0.0.1:9", timeout=0.2)
    with pytest.raises(TransportError):
        provider.complete([{"role": "user", "content": "hi"}])
