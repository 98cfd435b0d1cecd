"""Multi-round sessions: prompts become task requests, programs, and scenes.

A chat provider (scripted, HTTP, or none) turns an open-ended prompt into a
structured task request; retrieval grounds each object spec in catalog
candidates; program composition asks the provider for DSL source, retrying
with parser diagnostics, and falls back to a deterministic template composer
that always succeeds. Sessions are append-only: refinements add versions and
errors leave the current version untouched.

Providers may think out loud: only the last fenced code block of a reply is
parsed, everything else is discarded.
"""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import requests

from .assets import Catalog, RetrievalResult, query_topk
from .dsl import (
    RELATION_MAP,
    WORKSPACE_NAME,
    format_program,
    parse_program,
    validate_program,
)
from .errors import (
    DslSyntaxError,
    GenerationError,
    PreconditionError,
    ProgramValidationError,
    TransportError,
)
from .scenegraph import SceneGraph

MAX_SCHEMA_RETRIES = 2
MAX_COMPOSE_RETRIES = 2
MAX_OBJECT_COUNT = 50

TASKREQUEST_RELATIONS = ("on", "in", "adjacent", "aligned", "stacked")
_DSL_RELATION = {v: k for k, v in RELATION_MAP.items()}

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*\n(.*?)```", re.DOTALL)
_COLORS = {"red", "green", "blue", "yellow", "black", "white", "orange", "purple", "pink", "brown"}


@dataclass(frozen=True)
class ObjectSpec:
    semantic_class: str
    constraints: dict = field(default_factory=dict)
    count: int = 1

    def query_text(self) -> str:
        parts = [str(self.constraints[key]) for key in ("color", "size", "shape")
                 if key in self.constraints]
        parts.append(self.semantic_class)
        return " ".join(parts)


@dataclass(frozen=True)
class TaskRelation:
    relation: str
    subject: int
    reference: int


@dataclass(frozen=True)
class TaskRequest:
    object_specs: tuple[ObjectSpec, ...]
    relations: tuple[TaskRelation, ...]
    intent_tag: str

    def to_dict(self) -> dict:
        return {
            "object_specs": [
                {"semantic_class": s.semantic_class, "constraints": dict(s.constraints),
                 "count": s.count}
                for s in self.object_specs
            ],
            "relations": [
                {"relation": r.relation, "subject": r.subject, "reference": r.reference}
                for r in self.relations
            ],
            "intent_tag": self.intent_tag,
        }


@dataclass(frozen=True)
class ClarificationRequest:
    question: str
    conflicts: tuple[str, ...] = ()


def validate_task_request(payload: dict) -> TaskRequest:
    """Schema check for provider output. Raises ValueError with a diagnostic."""
    if not isinstance(payload, dict):
        raise ValueError("task request must be a JSON object")
    specs_raw = payload.get("object_specs")
    if not isinstance(specs_raw, list) or not specs_raw:
        raise ValueError("object_specs must be a non-empty array")
    specs = []
    for i, s in enumerate(specs_raw):
        if not isinstance(s, dict) or not isinstance(s.get("semantic_class"), str) \
                or not s["semantic_class"]:
            raise ValueError(f"object_specs[{i}].semantic_class must be a non-empty string")
        count = s.get("count", 1)
        if not isinstance(count, int) or count < 1:
            raise ValueError(f"object_specs[{i}].count must be an integer >= 1")
        constraints = s.get("constraints", {})
        if not isinstance(constraints, dict):
            raise ValueError(f"object_specs[{i}].constraints must be an object")
        specs.append(ObjectSpec(s["semantic_class"], dict(constraints), count))
    relations = []
    for i, r in enumerate(payload.get("relations", [])):
        if not isinstance(r, dict) or r.get("relation") not in TASKREQUEST_RELATIONS:
            raise ValueError(f"relations[{i}].relation must be one of {TASKREQUEST_RELATIONS}")
        subject, reference = r.get("subject"), r.get("reference")
        if not isinstance(subject, int) or not 0 <= subject < len(specs):
            raise ValueError(f"relations[{i}].subject index out of range")
        if not isinstance(reference, int) or not 0 <= reference < len(specs):
            raise ValueError(f"relations[{i}].reference index out of range")
        relations.append(TaskRelation(r["relation"], subject, reference))
    intent = payload.get("intent_tag")
    if not isinstance(intent, str) or not intent:
        raise ValueError("intent_tag must be a non-empty string")
    return TaskRequest(tuple(specs), tuple(relations), intent)


def find_rule_conflicts(request: TaskRequest) -> list[str]:
    """Rule table: conflicts trigger explicit clarification, never silent repair."""
    conflicts = []
    for r in request.relations:
        if r.subject == r.reference:
            spec = request.object_specs[r.subject]
            conflicts.append(
                f"object {spec.semantic_class!r} cannot be placed {r.relation} itself"
            )
    total = sum(s.count for s in request.object_specs)
    if total > MAX_OBJECT_COUNT:
        conflicts.append(f"requested {total} objects, limit is {MAX_OBJECT_COUNT}")
    for spec in request.object_specs:
        color = str(spec.constraints.get("color", ""))
        named = {tok for tok in color.lower().split() if tok in _COLORS}
        if len(named) > 1:
            conflicts.append(
                f"object {spec.semantic_class!r} has contradictory colors: {sorted(named)}"
            )
        size = str(spec.constraints.get("size", "")).lower()
        if "small" in size and "large" in size:
            conflicts.append(f"object {spec.semantic_class!r} cannot be both small and large")
    return conflicts


# --- Providers -----------------------------------------------------------------

class ChatProvider(Protocol):
    def complete(self, messages: list[dict]) -> str: ...


class ScriptedChatProvider:
    """Replays canned responses in order; the workhorse for offline tests."""

    def __init__(self, responses: list[str]):
        self._responses = list(responses)
        self._cursor = 0
        self.requests: list[list[dict]] = []

    def complete(self, messages: list[dict]) -> str:
        self.requests.append(list(messages))
        if self._cursor >= len(self._responses):
            raise TransportError("scripted provider has no responses left")
        response = self._responses[self._cursor]
        self._cursor += 1
        return response


class HttpChatProvider:
    """Client for the chat wire contract: POST {endpoint}/v1/chat."""

    def __init__(self, endpoint: str, model: str = "default", temperature: float = 0.0,
                 timeout: float = 60.0, session: requests.Session | None = None):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.temperature = temperature
        self.timeout = timeout
        self._session = session or requests.Session()

    def complete(self, messages: list[dict]) -> str:
        try:
            resp = self._session.post(
                f"{self.endpoint}/v1/chat",
                json={"model": self.model, "temperature": self.temperature,
                      "messages": messages},
                timeout=self.timeout,
            )
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise TransportError(f"chat provider unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(f"chat provider returned HTTP {resp.status_code}")
        body = resp.json()
        if "content" not in body:
            raise TransportError("chat response missing 'content'")
        return str(body["content"])


def extract_payload(content: str) -> str:
    """Last fenced code block, or the whole reply; reasoning text is discarded."""
    blocks = _FENCE_RE.findall(content)
    return (blocks[-1] if blocks else content).strip()


# --- Sessions --------------------------------------------------------------------

@dataclass
class SceneVersion:
    version: int
    program_source: str
    scene: SceneGraph
    diff: dict = field(default_factory=dict)
    note: str = ""


@dataclass
class ChatSession:
    session_id: str
    seed: int = 0
    history: list[dict] = field(default_factory=list)
    versions: list[SceneVersion] = field(default_factory=list)
    task_request: TaskRequest | None = None
    pending_clarification: str | None = None
    metadata: dict = field(default_factory=dict)
    transcript_path: Path | None = None
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def append_message(self, role: str, content: str) -> None:
        entry = {"role": role, "content": content, "ts": time.time()}
        self.history.append(entry)
        self._persist({"kind": "message", **entry})

    def append_version(self, version: SceneVersion) -> None:
        self.versions.append(version)
        self._persist({
            "kind": "version",
            "version": version.version,
            "program_source": version.program_source,
            "scene": version.scene.to_dict(),
            "diff": version.diff,
            "note": version.note,
            "ts": time.time(),
        })

    def _persist(self, event: dict) -> None:
        if self.transcript_path is None:
            return
        self.transcript_path.parent.mkdir(parents=True, exist_ok=True)
        with self.transcript_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    @property
    def current_version(self) -> SceneVersion | None:
        return self.versions[-1] if self.versions else None


def load_session(session_id: str, transcript_path: Path) -> ChatSession:
    """Rebuild a session from its append-only transcript."""
    session = ChatSession(session_id=session_id)
    with transcript_path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            event = json.loads(line)
            if event["kind"] == "message":
                session.history.append(
                    {"role": event["role"], "content": event["content"], "ts": event["ts"]}
                )
            elif event["kind"] == "version":
                session.versions.append(SceneVersion(
                    version=event["version"],
                    program_source=event["program_source"],
                    scene=SceneGraph.from_dict(event["scene"]),
                    diff=dict(event.get("diff", {})),
                    note=event.get("note", ""),
                ))
    session.transcript_path = transcript_path
    return session


# --- Intent interpretation ----------------------------------------------------------

_SYSTEM_INTERPRET = (
    "Turn the user's request into a JSON task request with fields object_specs "
    "(semantic_class, constraints{color,size,shape}, count), relations "
    "(relation in on/in/adjacent/aligned/stacked, subject and reference spec "
    "indices), and intent_tag. Reply with one fenced json block."
)


def interpret_intent(prompt: str, session: ChatSession,
                     provider: ChatProvider) -> TaskRequest | ClarificationRequest:
    """Structured task request from an open prompt, or a clarification question."""
    if not prompt:
        raise PreconditionError("prompt must be non-empty")
    session.append_message("user", prompt)
    messages = [{"role": "system", "content": _SYSTEM_INTERPRET}] + [
        {"role": m["role"], "content": m["content"]}
        for m in session.history if m["role"] in ("user", "assistant")
    ]
    raw_outputs: list[str] = []
    for attempt in range(1 + MAX_SCHEMA_RETRIES):
        content = provider.complete(messages)
        session.append_message("assistant", content)
        payload_text = extract_payload(content)
        raw_outputs.append(content)
        try:
            payload = json.loads(payload_text)
        except json.JSONDecodeError as exc:
            messages.append({"role": "assistant", "content": content})
            messages.append({"role": "user",
                             "content": f"that was not valid JSON ({exc}); reply again"})
            continue
        if isinstance(payload, dict) and "clarification" in payload:
            question = str(payload["clarification"])
            session.pending_clarification = question
            return ClarificationRequest(question=question)
        try:
            request = validate_task_request(payload)
        except ValueError as exc:
            messages.append({"role": "assistant", "content": content})
            messages.append({"role": "user",
                             "content": f"schema violation: {exc}; reply again"})
            continue
        conflicts = find_rule_conflicts(request)
        if conflicts:
            question = "please clarify: " + "; ".join(conflicts)
            session.pending_clarification = question
            return ClarificationRequest(question=question, conflicts=tuple(conflicts))
        session.task_request = request
        session.pending_clarification = None
        return request
    raise GenerationError(
        "provider produced schema-invalid output "
        f"{1 + MAX_SCHEMA_RETRIES} times; raw outputs: {raw_outputs!r}"
    )


# --- Program composition --------------------------------------------------------------

def _sanitize_name(text: str) -> str:
    name = re.sub(r"[^a-zA-Z0-9_]", "_", text.strip().lower())
    if not name or not (name[0].isalpha() or name[0] == "_"):
        name = "obj_" + name
    return name


def compose_template(request: TaskRequest) -> str:
    """Deterministic task-request-to-DSL mapping; always parses and validates."""
    lines: list[str] = []
    names: list[list[str]] = []
    for spec in request.object_specs:
        base = _sanitize_name(spec.semantic_class)
        instance_names = []
        for i in range(spec.count):
            name = base if spec.count == 1 else f"{base}_{i + 1}"
            query = spec.query_text()
            # k=1 pins the best match: conversational scenes should contain
            # exactly what was asked for; variety comes from the randomizer.
            lines.append(f'asset {name} = retrieve("{query}", k=1);')
            instance_names.append(name)
        names.append(instance_names)

    involved: set[int] = set()
    for rel in request.relations:
        involved.add(rel.subject)
        involved.add(rel.reference)

    first_support = next((r for r in request.relations
                          if r.relation in ("on", "in", "stacked")), None)
    for rel_index, rel in enumerate(request.relations):
        keyword = _DSL_RELATION[rel.relation]
        reference = names[rel.reference][0]
        for j, subject in enumerate(names[rel.subject]):
            params = []
            if first_support is rel and j == 0:
                params.append('tag="subject"')
                params.append('ref_tag="target"')
            suffix = f" with ({', '.join(params)})" if params else ""
            lines.append(f"place {subject} {keyword} {reference}{suffix};")

    for spec_index, instance_names in enumerate(names):
        if spec_index not in involved:
            for name in instance_names:
                lines.append(f"place {name} on {WORKSPACE_NAME};")
    return "\n".join(lines) + "\n"


_SYSTEM_COMPOSE = (
    "Write a scene program for the task request using only: "
    'asset NAME = retrieve("QUERY", k=N); let NAME = EXPR; '
    "place SUBJECT REL REFERENCE with (PARAMS); repeat N { ... }. "
    "REL is one of on, in, adjacent_to, aligned_with, stacked_on. "
    "Reply with one fenced code block."
)


def compose_program(
    request: TaskRequest,
    candidates: list[list[RetrievalResult]],
    session: ChatSession,
    provider: ChatProvider | None,
    catalog: Catalog,
) -> str:
    """DSL source for a task request; provider-composed with template fallback."""
    if len(candidates) != len(request.object_specs) or any(not c for c in candidates):
        raise PreconditionError("every object spec needs at least one retrieval candidate")

    if provider is not None:
        context = {
            "task_request": request.to_dict(),
            "candidates": [
                [{"asset_id": r.asset_id, "similarity": r.similarity} for r in spec_results]
                for spec_results in candidates
            ],
        }
        messages = [
            {"role": "system", "content": _SYSTEM_COMPOSE},
            {"role": "user", "content": json.dumps(context, sort_keys=True)},
        ]
        for attempt in range(1 + MAX_COMPOSE_RETRIES):
            try:
                content = provider.complete(messages)
            except TransportError:
                break
            session.append_message("assistant", content)
            source = extract_payload(content)
            try:
                program = parse_program(source)
                validate_program(program, catalog)
            except (DslSyntaxError, ProgramValidationError) as exc:
                session.metadata["compose_retries"] = attempt + 1
                messages.append({"role": "assistant", "content": content})
                messages.append({"role": "user",
                                 "content": f"program rejected: {exc}; fix and resend"})
                continue
            return source
        session.metadata["compose_fallback"] = "template"

    source = compose_template(request)
    program = parse_program(source)
    validate_program(program, catalog)
    return source


# --- Refinement ------------------------------------------------------------------------

def _statement_diff(old_source: str, new_source: str) -> dict:
    old_lines = [ln for ln in format_program(parse_program(old_source)).splitlines() if ln.strip()]
    new_lines = [ln for ln in format_program(parse_program(new_source)).splitlines() if ln.strip()]
    old_set, new_set = set(old_lines), set(new_lines)
    return {
        "added": [ln for ln in new_lines if ln not in old_set],
        "removed": [ln for ln in old_lines if ln not in new_set],
    }


_SYSTEM_REFINE = (
    "Edit the current scene program per the user's request. Keep the same "
    "language. Reply with the full revised program in one fenced code block."
)


def refine_session(session: ChatSession, user_message: str,
                   provider: ChatProvider, catalog: Catalog) -> SceneVersion:
    """Provider-edit the current program into a new scene version. Atomic."""
    if not session.versions:
        raise PreconditionError("session has no scene version to refine")
    if not user_message:
        raise PreconditionError("refinement message must be non-empty")
    from .dsl import evaluate_program

    current = session.current_version
    session.append_message("user", user_message)
    messages = [
        {"role": "system", "content": _SYSTEM_REFINE},
        {"role": "user", "content": f"current program:\n```\n{current.program_source}\n```"},
        {"role": "user", "content": user_message},
    ]
    last_error: Exception | None = None
    for attempt in range(1 + MAX_COMPOSE_RETRIES):
        content = provider.complete(messages)
        session.append_message("assistant", content)
        source = extract_payload(content)
        try:
            program = parse_program(source)
            resolved = validate_program(program, catalog)
            resolved.instruction = session.metadata.get("instruction", "")
            scene = evaluate_program(resolved, session.seed, catalog)
        except (DslSyntaxError, ProgramValidationError) as exc:
            last_error = exc
            messages.append({"role": "assistant", "content": content})
            messages.append({"role": "user",
                             "content": f"program rejected: {exc}; fix and resend"})
            continue
        version = SceneVersion(
            version=len(session.versions) + 1,
            program_source=source,
            scene=scene,
            diff=_statement_diff(current.program_source, source),
            note=user_message,
        )
        session.append_version(version)
        return version
    raise GenerationError(f"refinement failed after retries: {last_error}")


# --- Full round ---------------------------------------------------------------------------

def advance_session(
    session: ChatSession,
    prompt: str,
    provider: ChatProvider | None,
    catalog: Catalog,
    compose_with_provider: bool = False,
) -> TaskRequest | ClarificationRequest:
    """One conversation round: interpret, retrieve, compose, solve, version.

    Returns the clarification request without touching versions when the
    interpreter reports a rule conflict.
    """
    from .dsl import evaluate_program

    if provider is None:
        raise PreconditionError("a chat provider is required to interpret prompts")
    result = interpret_intent(prompt, session, provider)
    if isinstance(result, ClarificationRequest):
        return result

    candidates = [
        query_topk(spec.query_text(), 5, catalog)
        for spec in result.object_specs
    ]
    session.metadata["instruction"] = prompt
    source = compose_program(
        result, candidates, session,
        provider if compose_with_provider else None, catalog,
    )
    program = parse_program(source)
    resolved = validate_program(program, catalog)
    resolved.instruction = prompt
    scene = evaluate_program(resolved, session.seed, catalog)
    scene.metadata["intent_tag"] = result.intent_tag
    previous = session.current_version
    version = SceneVersion(
        version=len(session.versions) + 1,
        program_source=source,
        scene=scene,
        diff=_statement_diff(previous.program_source, source) if previous else
        {"added": [ln for ln in source.splitlines() if ln.strip()], "removed": []},
        note=prompt,
    )
    session.append_version(version)
    return result
