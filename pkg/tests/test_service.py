import json
import time

import pytest
import requests

from sceneforge.config import ServiceConfig
from sceneforge.errors import PreconditionError
from sceneforge.scenegraph import scene_to_json
from sceneforge.service import serve_api


@pytest.fixture
def service(tmp_path):
    config = ServiceConfig(data_dir=tmp_path / "data", host="127.0.0.1", port=0,
                           concurrency=2)
    api = serve_api(config)
    yield api
    api.shutdown()


@pytest.fixture
def base(service):
    return service.base_url


def wait_for_job(base, job_id, timeout=30.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        payload = requests.get(f"{base}/api/v1/jobs/{job_id}", timeout=5).json()
        if payload["status"] in ("done", "error", "aborted"):
            return payload
        time.sleep(0.05)
    raise AssertionError(f"job {job_id} did not finish")


def create_session(base, responses, seed=3):
    resp = requests.post(f"{base}/api/v1/sessions",
                         json={"seed": seed, "scripted_responses": responses},
                         timeout=5)
    assert resp.status_code == 200
    return resp.json()["session_id"]


def test_health(base):
    payload = requests.get(f"{base}/api/v1/health", timeout=5).json()
    assert payload == {"status": "ok", "schema_version": "v1"}


def test_unknown_route_404_error_schema(base):
    resp = requests.get(f"{base}/api/v1/nothing-here", timeout=5)
    assert resp.status_code == 404
    body = resp.json()
    assert "error" in body and "message" in body["error"]


def test_session_round_and_scene_fetch(base, transcripts):
    sid = create_session(base, transcripts["three_yellow_cubes"]["responses"])
    resp = requests.post(
        f"{base}/api/v1/sessions/{sid}/messages",
        json={"text": transcripts["three_yellow_cubes"]["prompt"]}, timeout=30)
    assert resp.status_code == 200
    body = resp.json()
    assert body["version"] == 1
    assert body["task_request"]["intent_tag"] == "place"
    assert body["node_count"] == 5
    scene = requests.get(f"{base}/api/v1/sessions/{sid}/scene?version=1",
                         timeout=5).json()
    assert scene["validation"]["ok"] is True
    assert len(scene["scene"]["nodes"]) == 5
    view = requests.get(f"{base}/api/v1/sessions/{sid}", timeout=5).json()
    assert view["versions"] == [1]
    assert view["pending_clarification"] is None


def test_two_round_refinement_diff(base, transcripts):
    responses = transcripts["three_yellow_cubes"]["responses"] + \
        transcripts["refine_red"]["responses"]
    sid = create_session(base, responses)
    requests.post(f"{base}/api/v1/sessions/{sid}/messages",
                  json={"text": transcripts["three_yellow_cubes"]["prompt"]},
                  timeout=30)
    resp = requests.post(f"{base}/api/v1/sessions/{sid}/messages",
                         json={"text": transcripts["refine_red"]["message"]},
                         timeout=30)
    body = resp.json()
    assert body["version"] == 2
    assert body["node_count"] == 5
    changed = body["node_diff"]["changed"]
    assert changed, "refinement must highlight changed nodes"
    assert body["node_diff"]["added"] == [] and body["node_diff"]["removed"] == []


def test_clarification_flow_blocks_versions(base, transcripts):
    sid = create_session(base, transcripts["self_relation"]["responses"])
    resp = requests.post(f"{base}/api/v1/sessions/{sid}/messages",
                         json={"text": transcripts["self_relation"]["prompt"]},
                         timeout=30)
    body = resp.json()
    assert "clarification" in body
    scene = requests.get(f"{base}/api/v1/sessions/{sid}/scene", timeout=5)
    assert scene.status_code == 404


def test_concurrent_sessions_are_isolated(base, transcripts):
    a = create_session(base, transcripts["three_yellow_cubes"]["responses"])
    b = create_session(base, transcripts["single_bowl"]["responses"])
    requests.post(f"{base}/api/v1/sessions/{a}/messages",
                  json={"text": transcripts["three_yellow_cubes"]["prompt"]}, timeout=30)
    requests.post(f"{base}/api/v1/sessions/{b}/messages",
                  json={"text": transcripts["single_bowl"]["prompt"]}, timeout=30)
    view_a = requests.get(f"{base}/api/v1/sessions/{a}", timeout=5).json()
    view_b = requests.get(f"{base}/api/v1/sessions/{b}", timeout=5).json()
    assert view_a["messages"][0]["content"] != view_b["messages"][0]["content"]
    scene_a = requests.get(f"{base}/api/v1/sessions/{a}/scene", timeout=5).json()
    scene_b = requests.get(f"{base}/api/v1/sessions/{b}/scene", timeout=5).json()
    assert len(scene_a["scene"]["nodes"]) == 5
    assert len(scene_b["scene"]["nodes"]) == 2


def test_empty_message_rejected(base, transcripts):
    sid = create_session(base, [])
    resp = requests.post(f"{base}/api/v1/sessions/{sid}/messages",
                         json={"text": ""}, timeout=5)
    assert resp.status_code == 400


def test_variants_job_lifecycle(base, tabletop_scene):
    resp = requests.post(f"{base}/api/v1/variants",
                         json={"scene": tabletop_scene.to_dict(), "n": 6, "seed": 4},
                         timeout=5)
    job_id = resp.json()["job_id"]
    payload = wait_for_job(base, job_id)
    assert payload["status"] == "done"
    assert payload["result"]["produced"] == 6
    assert payload["result"]["dropped"] == []


def test_episode_job_and_records(base, pick_place):
    scene = pick_place(3)
    body = {"scene": scene.to_dict(), "policy": "expert", "episodes": 2, "seed": 0,
            "intent": "place"}
    job_id = requests.post(f"{base}/api/v1/episodes", json=body, timeout=5).json()["job_id"]
    payload = wait_for_job(base, job_id)
    assert payload["status"] == "done"
    assert payload["result"]["success"] == 2
    count = requests.get(f"{base}/api/v1/episodes/{job_id}/records", timeout=5).json()
    assert count["count"] == 2
    record = requests.get(f"{base}/api/v1/episodes/{job_id}/records?index=0",
                          timeout=5).json()["record"]
    assert record["status"] == "success"
    assert requests.get(f"{base}/api/v1/episodes/{job_id}/records?index=9",
                        timeout=5).status_code == 404


def test_bad_job_request_is_400(base):
    resp = requests.post(f"{base}/api/v1/variants", json={"n": 3}, timeout=5)
    assert resp.status_code == 400


def test_analysis_endpoint_runs_fixture(base):
    payload = requests.post(f"{base}/api/v1/analysis", json={}, timeout=10).json()
    assert payload["rows"] == 32
    assert abs(payload["fit"]["slope"] - 1.045) <= 0.005
    assert abs(payload["fit"]["r_squared"] - 0.924) <= 0.005


def test_analysis_endpoint_with_inline_rows(base):
    rows = []
    for i, rate in enumerate([0.2, 0.4, 0.6]):
        rows.append({"task": "t", "setup": f"s{i}", "env": "sim", "success_rate": rate})
        rows.append({"task": "t", "setup": f"s{i}", "env": "real", "success_rate": rate})
    payload = requests.post(f"{base}/api/v1/analysis", json={"rows": rows},
                            timeout=10).json()
    assert payload["fit"]["slope"] == pytest.approx(1.0)


def test_session_transcript_persisted_and_replayable(service, base, transcripts):
    sid = create_session(base, transcripts["three_yellow_cubes"]["responses"])
    requests.post(f"{base}/api/v1/sessions/{sid}/messages",
                  json={"text": transcripts["three_yellow_cubes"]["prompt"]}, timeout=30)
    transcript = service.config.data_dir / "sessions" / f"{sid}.jsonl"
    assert transcript.exists()
    from sceneforge.conversation import load_session
    loaded = load_session(sid, transcript)
    assert len(loaded.versions) == 1
    assert scene_to_json(loaded.versions[0].scene) == \
        scene_to_json(service.sessions[sid].versions[0].scene)


def test_graceful_shutdown_marks_jobs(tmp_path, tabletop_scene):
    config = ServiceConfig(data_dir=tmp_path / "d", host="127.0.0.1", port=0,
                           concurrency=1)
    api = serve_api(config)
    try:
        base = api.base_url
        # Queue two slow jobs on a single worker, then shut down immediately.
        body = {"scene": tabletop_scene.to_dict(), "n": 50, "seed": 1}
        first = requests.post(f"{base}/api/v1/variants", json=body, timeout=5).json()
        second = requests.post(f"{base}/api/v1/variants", json=body, timeout=5).json()
    finally:
        api.shutdown()
    states = {api.jobs[j["job_id"]].status for j in (first, second)}
    assert states <= {"done", "aborted"}
    # The server socket is closed after shutdown.
    with pytest.raises(requests.ConnectionError):
        requests.get(f"{base}/api/v1/health", timeout=1)


def test_config_env_overrides(tmp_path):
    config = ServiceConfig.load(env={"SCENEFORGE_PORT": "9999",
                                     "SCENEFORGE_DATA_DIR": str(tmp_path)})
    assert config.port == 9999
    assert config.data_dir == tmp_path
    with pytest.raises(PreconditionError):
        ServiceConfig.load(env={"SCENEFORGE_CHAT_ENDPOINT": "not-a-url"})
