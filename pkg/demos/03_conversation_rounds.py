"""Two-round conversational refinement with a scripted chat provider.

Round 1 turns a prompt into a task request, retrieves candidates, composes a
program, and solves the scene. Round 2 edits the program ("make the cubes
red") and produces version 2 with a statement-level diff. A conflicting
prompt triggers an explicit clarification instead of a scene.
"""

import json

from sceneforge.assets import MockEmbeddingProvider, load_catalog
from sceneforge.cli import fixture_path
from sceneforge.conversation import (
    ChatSession,
    ClarificationRequest,
    ScriptedChatProvider,
    advance_session,
    refine_session,
)

catalog = load_catalog(fixture_path("desk_catalog.json"))
catalog.build_index(MockEmbeddingProvider(seed=0))
transcripts = json.loads(fixture_path("chat_transcripts.json").read_text())

session = ChatSession(session_id="demo", seed=3)
provider = ScriptedChatProvider(
    transcripts["three_yellow_cubes"]["responses"]
    + transcripts["refine_red"]["responses"]
)

prompt = transcripts["three_yellow_cubes"]["prompt"]
print(f"user: {prompt}")
request = advance_session(session, prompt, provider, catalog)
print(f"interpreted intent: {request.intent_tag}, "
      f"{sum(s.count for s in request.object_specs)} objects, "
      f"{len(request.relations)} relations")

v1 = session.current_version
print(f"\nversion 1 program:\n{v1.program_source}")
print("assets chosen:",
      sorted(n.asset_id for n in v1.scene.nodes if not n.is_region))

message = transcripts["refine_red"]["message"]
print(f"\nuser: {message}")
v2 = refine_session(session, message, provider, catalog)
print(f"version 2 diff: +{len(v2.diff['added'])} / -{len(v2.diff['removed'])} statements")
for line in v2.diff["added"]:
    print(f"  + {line}")
for line in v2.diff["removed"]:
    print(f"  - {line}")
print("assets now:",
      sorted(n.asset_id for n in v2.scene.nodes if not n.is_region))

# Rule conflicts are surfaced, never silently repaired.
conflicted = ChatSession(session_id="demo2", seed=3)
result = advance_session(
    conflicted, transcripts["self_relation"]["prompt"],
    ScriptedChatProvider(transcripts["self_relation"]["responses"]), catalog)
assert isinstance(result, ClarificationRequest)
print(f"\nconflicting prompt -> clarification: {result.question}")
