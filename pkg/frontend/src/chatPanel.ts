// Chat panel: posts user messages to a session, renders clarifications
// inline, and on success re-renders the scene with changed nodes highlighted.
// The scene never updates while a clarification is pending.

import type { ApiClient } from "./api.js";
import { ApiError } from "./api.js";
import type { SceneView } from "./sceneView.js";

export class ChatPanel {
  private sessionId: string | null = null;
  private pendingClarification = false;

  constructor(
    private readonly api: ApiClient,
    private readonly sceneView: SceneView,
    private readonly messageList: HTMLElement,
    private readonly toastArea: HTMLElement,
  ) {}

  async start(seed?: number, scriptedResponses?: string[]): Promise<string> {
    const body: { seed?: number; scripted_responses?: string[] } = {};
    if (seed !== undefined) body.seed = seed;
    if (scriptedResponses) body.scripted_responses = scriptedResponses;
    const { session_id } = await this.api.createSession(body);
    this.sessionId = session_id;
    return session_id;
  }

  get session(): string | null {
    return this.sessionId;
  }

  get awaitingClarification(): boolean {
    return this.pendingClarification;
  }

  private append(role: string, text: string, extraClass = ""): void {
    const entry = document.createElement("div");
    entry.className = `message message-${role}${extraClass ? " " + extraClass : ""}`;
    entry.textContent = text;
    this.messageList.appendChild(entry);
  }

  private toast(text: string): void {
    const note = document.createElement("div");
    note.className = "toast toast-error";
    note.textContent = text;
    this.toastArea.appendChild(note);
  }

  async submit(text: string): Promise<void> {
    if (!this.sessionId) throw new Error("no session started");
    if (!text.trim()) return;
    this.append("user", text);
    let response;
    try {
      response = await this.api.postMessage(this.sessionId, text);
    } catch (error) {
      // View stays unchanged on API errors; surface a toast instead.
      const message =
        error instanceof ApiError ? error.message : "service unreachable";
      this.toast(message);
      return;
    }
    if (response.clarification) {
      this.pendingClarification = true;
      this.append("assistant", response.clarification, "message-clarification");
      return;
    }
    this.pendingClarification = false;
    const version = response.version;
    if (version === undefined) return;
    this.append("assistant", `scene version ${version} ready`);
    const payload = await this.api.getScene(this.sessionId, version);
    const changed = new Set([
      ...payload.node_diff.changed,
      ...payload.node_diff.added,
    ]);
    this.sceneView.render(payload, { highlight: changed });
  }
}
