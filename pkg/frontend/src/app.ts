// Studio bootstrap: wires the chat panel, scene viewer, and episode monitor
// into the page. The backend origin defaults to same-origin; set
// window.SCENEFORGE_API to point elsewhere during development.

import { ApiClient } from "./api.js";
import { ChatPanel } from "./chatPanel.js";
import { EpisodeMonitor } from "./episodeMonitor.js";
import { SceneView } from "./sceneView.js";

declare global {
  interface Window {
    SCENEFORGE_API?: string;
  }
}

function mustGet(id: string): HTMLElement {
  const element = document.getElementById(id);
  if (!element) throw new Error(`missing #${id} in the page`);
  return element;
}

export function bootstrap(): {
  api: ApiClient;
  chat: ChatPanel;
  sceneView: SceneView;
  monitor: EpisodeMonitor;
} {
  const api = new ApiClient(window.SCENEFORGE_API ?? "");
  const sceneView = new SceneView(mustGet("scene"), mustGet("metadata"));
  const chat = new ChatPanel(api, sceneView, mustGet("messages"), mustGet("toasts"));
  const monitor = new EpisodeMonitor(api, mustGet("monitor"));

  const form = mustGet("chat-form") as HTMLFormElement;
  const input = mustGet("chat-input") as HTMLInputElement;
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const text = input.value;
    input.value = "";
    void chat.submit(text);
  });

  const toggle = mustGet("toggle-edges");
  toggle.addEventListener("click", () => sceneView.toggleEdges());

  void chat.start();
  return { api, chat, sceneView, monitor };
}

if (typeof document !== "undefined" && document.getElementById("scene")) {
  bootstrap();
}
