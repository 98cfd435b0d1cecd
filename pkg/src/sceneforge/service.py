"""HTTP API facade under /api/v1.

Sessions wrap the conversation module with per-session locking; variants and
episode batches run as asynchronous jobs (job-id plus poll). Every response
carries a schema_version field. The studio front end consumes exactly this
API and nothing else.
"""

from __future__ import annotations

import json
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .analysis import fit_sim_real, load_table_csv, ExperimentRow, ExperimentTable
from .assets import MockEmbeddingProvider, load_catalog
from .cli import fixture_path
from .config import ServiceConfig
from .conversation import (
    ChatSession,
    ClarificationRequest,
    HttpChatProvider,
    ScriptedChatProvider,
    advance_session,
    refine_session,
)
from .episodes import (
    HttpPolicyTransport,
    LocalPolicyTransport,
    run_episode,
    scripted_policy,
    write_episode_batch,
)
from .errors import SceneForgeError
from .evaluation import EvalConfig, generate_eval_config
from .httpbase import JsonHttpServer
from .randomizer import RandomizationSpec, derive_variants, write_variant_batch
from .scenegraph import SceneGraph, validate_scene
from .world import make_world

SCHEMA_VERSION = "v1"


def _versioned(payload: dict) -> dict:
    payload.setdefault("schema_version", SCHEMA_VERSION)
    return payload


def _node_diff(prev: SceneGraph | None, cur: SceneGraph) -> dict:
    if prev is None:
        return {"added": [n.node_id for n in cur.nodes], "removed": [], "changed": []}
    old = {n.node_id: n.to_dict() for n in prev.nodes}
    new = {n.node_id: n.to_dict() for n in cur.nodes}
    return {
        "added": sorted(set(new) - set(old)),
        "removed": sorted(set(old) - set(new)),
        "changed": sorted(nid for nid in set(old) & set(new) if old[nid] != new[nid]),
    }


class Job:
    def __init__(self, kind: str):
        self.job_id = uuid.uuid4().hex[:12]
        self.kind = kind
        self.status = "queued"
        self.progress: dict = {}
        self.result: dict | None = None
        self.error: str | None = None
        self.records: list[dict] = []
        self.lock = threading.Lock()

    def view(self) -> dict:
        with self.lock:
            payload = {
                "job_id": self.job_id,
                "kind": self.kind,
                "status": self.status,
                "progress": dict(self.progress),
            }
            if self.result is not None:
                payload["result"] = self.result
            if self.error is not None:
                payload["error"] = self.error
            return payload


class ApiService:
    def __init__(self, config: ServiceConfig):
        config.validate()
        self.config = config
        self.catalog = self._load_catalog()
        self.sessions: dict[str, ChatSession] = {}
        self.session_providers: dict[str, object] = {}
        self.jobs: dict[str, Job] = {}
        self.executor = ThreadPoolExecutor(max_workers=config.concurrency)
        self.server = JsonHttpServer(config.host, config.port)
        self._register_routes()

    def _load_catalog(self):
        catalog_file = Path(self.config.data_dir) / "catalog.json"
        if not catalog_file.exists():
            catalog_file = fixture_path("desk_catalog.json")
        catalog = load_catalog(catalog_file)
        catalog.build_index(MockEmbeddingProvider(seed=0))
        return catalog

    # --- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        self.server.start()

    @property
    def base_url(self) -> str:
        return self.server.base_url

    def shutdown(self) -> None:
        """Finish or abort jobs, then stop serving."""
        for job in self.jobs.values():
            with job.lock:
                if job.status == "queued":
                    job.status = "aborted"
        self.executor.shutdown(wait=True, cancel_futures=True)
        for job in self.jobs.values():
            with job.lock:
                if job.status == "running":
                    job.status = "aborted"
        self.server.stop()

    # --- providers ----------------------------------------------------------

    def _provider_for(self, session_id: str):
        provider = self.session_providers.get(session_id)
        if provider is not None:
            return provider
        if self.config.chat_endpoint:
            return HttpChatProvider(self.config.chat_endpoint,
                                    timeout=self.config.provider_timeout_s)
        return None

    # --- routes --------------------------------------------------------------

    def _register_routes(self) -> None:
        r = self.server.route
        r("GET", r"/api/v1/health", self._health)
        r("POST", r"/api/v1/sessions", self._create_session)
        r("GET", r"/api/v1/sessions/(?P<sid>[0-9a-f]+)", self._get_session)
        r("POST", r"/api/v1/sessions/(?P<sid>[0-9a-f]+)/messages", self._post_message)
        r("GET", r"/api/v1/sessions/(?P<sid>[0-9a-f]+)/scene", self._get_scene)
        r("POST", r"/api/v1/variants", self._post_variants)
        r("POST", r"/api/v1/episodes", self._post_episodes)
        r("GET", r"/api/v1/episodes/(?P<jid>[0-9a-f]+)/records", self._get_episode_records)
        r("GET", r"/api/v1/jobs/(?P<jid>[0-9a-f]+)", self._get_job)
        r("POST", r"/api/v1/analysis", self._post_analysis)

    def _health(self, match, body, query):
        return 200, _versioned({"status": "ok"})

    def _create_session(self, match, body, query):
        body = body or {}
        session_id = uuid.uuid4().hex[:12]
        transcript = Path(self.config.data_dir) / "sessions" / f"{session_id}.jsonl"
        session = ChatSession(
            session_id=session_id,
            seed=int(body.get("seed", self.config.default_seed)),
            transcript_path=transcript,
        )
        self.sessions[session_id] = session
        if "scripted_responses" in body:
            self.session_providers[session_id] = ScriptedChatProvider(
                [str(r) for r in body["scripted_responses"]])
        return 200, _versioned({"session_id": session_id, "seed": session.seed})

    def _session_or_none(self, sid: str) -> ChatSession | None:
        return self.sessions.get(sid)

    def _get_session(self, match, body, query):
        session = self._session_or_none(match["sid"])
        if session is None:
            return 404, _versioned({"error": {"message": "no such session"}})
        return 200, _versioned({
            "session_id": session.session_id,
            "messages": [{"role": m["role"], "content": m["content"]}
                         for m in session.history],
            "versions": [v.version for v in session.versions],
            "pending_clarification": session.pending_clarification,
        })

    def _post_message(self, match, body, query):
        session = self._session_or_none(match["sid"])
        if session is None:
            return 404, _versioned({"error": {"message": "no such session"}})
        text = (body or {}).get("text", "")
        if not text:
            return 400, _versioned({"error": {"message": "text must be non-empty"}})
        provider = self._provider_for(session.session_id)
        if provider is None:
            return 400, _versioned(
                {"error": {"message": "no chat provider configured for this session"}})
        with session.lock:
            prev = session.current_version
            try:
                if session.versions and session.pending_clarification is None:
                    version = refine_session(session, text, provider, self.catalog)
                    result = None
                else:
                    result = advance_session(session, text, provider, self.catalog)
                    version = session.current_version
            except SceneForgeError as exc:
                return 422, _versioned({"error": {"message": str(exc),
                                                  "type": type(exc).__name__}})
            if isinstance(result, ClarificationRequest):
                return 200, _versioned({"clarification": result.question,
                                        "conflicts": list(result.conflicts)})
            prev_scene = prev.scene if prev else None
            return 200, _versioned({
                "version": version.version,
                "task_request": session.task_request.to_dict()
                if session.task_request else None,
                "statement_diff": version.diff,
                "node_diff": _node_diff(prev_scene, version.scene),
                "node_count": len(version.scene.nodes),
            })

    def _get_scene(self, match, body, query):
        session = self._session_or_none(match["sid"])
        if session is None:
            return 404, _versioned({"error": {"message": "no such session"}})
        if not session.versions:
            return 404, _versioned({"error": {"message": "session has no scene yet"}})
        number = int(query.get("version", session.versions[-1].version))
        for i, version in enumerate(session.versions):
            if version.version == number:
                prev_scene = session.versions[i - 1].scene if i > 0 else None
                report = validate_scene(version.scene)
                return 200, _versioned({
                    "version": version.version,
                    "scene": version.scene.to_dict(),
                    "program_source": version.program_source,
                    "statement_diff": version.diff,
                    "node_diff": _node_diff(prev_scene, version.scene),
                    "validation": {
                        "ok": report.ok,
                        "violated_edges": [
                            {"relation": e.relation, "src": e.src, "dst": e.dst}
                            for e, _ in report.violated_edges
                        ],
                        "colliding_pairs": [[a, b] for a, b, _ in report.colliding_pairs],
                    },
                })
        return 404, _versioned({"error": {"message": f"no version {number}"}})

    # --- jobs -----------------------------------------------------------------

    def _submit(self, job: Job, fn) -> None:
        self.jobs[job.job_id] = job

        def run():
            with job.lock:
                if job.status == "aborted":
                    return
                job.status = "running"
            try:
                result = fn(job)
            except SceneForgeError as exc:
                with job.lock:
                    job.status = "error"
                    job.error = str(exc)
                return
            with job.lock:
                job.status = "done"
                job.result = result

        self.executor.submit(run)

    def _post_variants(self, match, body, query):
        body = body or {}
        try:
            base = SceneGraph.from_dict(body["scene"])
            spec = RandomizationSpec.from_dict(body.get("spec", {})) \
                if body.get("spec") else RandomizationSpec()
            n = int(body.get("n", 10))
            seed = int(body.get("seed", self.config.default_seed))
        except (KeyError, TypeError, ValueError) as exc:
            return 400, _versioned({"error": {"message": f"bad request: {exc}"}})
        job = Job("variants")

        def work(job: Job) -> dict:
            batch = derive_variants(base, spec, n, seed, catalog=self.catalog)
            out_dir = Path(self.config.data_dir) / "jobs" / job.job_id / "variants"
            write_variant_batch(batch, out_dir)
            with job.lock:
                job.progress = {"done": n, "total": n}
            return {"requested": n, "produced": batch.produced,
                    "dropped": batch.dropped, "out_dir": str(out_dir)}

        self._submit(job, work)
        return 200, _versioned({"job_id": job.job_id})

    def _post_episodes(self, match, body, query):
        body = body or {}
        try:
            scene = SceneGraph.from_dict(body["scene"])
            policy_name = str(body.get("policy", "noop"))
            episodes = int(body.get("episodes", 1))
            seed = int(body.get("seed", self.config.default_seed))
            cfg = EvalConfig.from_dict(body["config"]) if body.get("config") else \
                generate_eval_config(scene, str(body.get("intent", "place")))
        except (KeyError, TypeError, ValueError, SceneForgeError) as exc:
            return 400, _versioned({"error": {"message": f"bad request: {exc}"}})
        job = Job("episodes")

        def transport():
            if policy_name in ("expert", "noop"):
                if policy_name == "expert":
                    subject = next(n.node_id for n in scene.nodes if n.task_tag == "subject")
                    target = next(n.node_id for n in scene.nodes if n.task_tag == "target")
                    return LocalPolicyTransport(
                        scripted_policy("expert", scene, subject, target))
                return LocalPolicyTransport(scripted_policy("noop"))
            return HttpPolicyTransport(policy_name)

        def work(job: Job) -> dict:
            from .episodes import EpisodeRecord
            counts = {"success": 0, "timeout": 0, "policy_error": 0}
            records: list[EpisodeRecord] = []
            for i in range(episodes):
                def on_step(step: int, _i=i):
                    with job.lock:
                        job.progress = {"episode": _i, "total": episodes,
                                        "current_step": step, **counts}
                world = make_world(scene, seed=seed + i)
                record = run_episode(world, cfg, transport(),
                                     episode_id=f"{job.job_id}-{i}", record=False,
                                     on_step=on_step)
                counts[record.status] += 1
                records.append(record)
                job.records.append(record.to_dict())
                with job.lock:
                    job.progress = {"episode": i + 1, "total": episodes, **counts}
            out_dir = Path(self.config.data_dir) / "jobs" / job.job_id
            write_episode_batch(records, out_dir)
            return {"episodes": episodes, **counts, "out_dir": str(out_dir)}

        self._submit(job, work)
        return 200, _versioned({"job_id": job.job_id})

    def _get_job(self, match, body, query):
        job = self.jobs.get(match["jid"])
        if job is None:
            return 404, _versioned({"error": {"message": "no such job"}})
        return 200, _versioned(job.view())

    def _get_episode_records(self, match, body, query):
        job = self.jobs.get(match["jid"])
        if job is None or job.kind != "episodes":
            return 404, _versioned({"error": {"message": "no such episode job"}})
        if "index" in query:
            index = int(query["index"])
            if not 0 <= index < len(job.records):
                return 404, _versioned({"error": {"message": f"no record {index}"}})
            return 200, _versioned({"record": job.records[index]})
        return 200, _versioned({"count": len(job.records)})

    def _post_analysis(self, match, body, query):
        body = body or {}
        try:
            if "rows" in body:
                table = ExperimentTable([
                    ExperimentRow(r["task"], r["setup"], r["env"],
                                  float(r["success_rate"]), int(r.get("trials", 0)))
                    for r in body["rows"]
                ])
            else:
                fixture = body.get("fixture") or str(fixture_path("table1.csv"))
                table = load_table_csv(fixture)
            primary, reverse = fit_sim_real(table)
        except (KeyError, TypeError, ValueError, SceneForgeError) as exc:
            return 400, _versioned({"error": {"message": f"bad request: {exc}"}})
        return 200, _versioned({
            "rows": len(table.rows),
            "fit": primary.to_dict(),
            "fit_reverse": reverse.to_dict(),
        })


def serve_api(config: ServiceConfig) -> ApiService:
    """Start the facade; the caller owns shutdown."""
    service = ApiService(config)
    service.start()
    return service
