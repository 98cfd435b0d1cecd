// Contract: the client can only ever issue documented /api/v1 calls, and the
// local route table stays in sync with the backend's published route list.

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { DOCUMENTED_ROUTES, isDocumented } from "../src/routes.js";
import { fakeFetch, makeScene } from "./fixtures.js";

const here = dirname(fileURLToPath(import.meta.url));

function exerciseEveryClientMethod(api: ApiClient): Promise<unknown[]> {
  const scene = makeScene();
  return Promise.allSettled([
    api.health(),
    api.createSession({ seed: 1 }),
    api.getSession("abc123"),
    api.postMessage("abc123", "hello"),
    api.getScene("abc123"),
    api.getScene("abc123", 2),
    api.startVariants({ scene, n: 3, seed: 0 }),
    api.startEpisodes({ scene, policy: "noop", episodes: 1, seed: 0 }),
    api.getJob("job123"),
    api.countEpisodeRecords("job123"),
    api.getEpisodeRecord("job123", 0),
    api.runAnalysis({}),
  ]);
}

describe("api contract", () => {
  it("every client call matches a documented route", async () => {
    const api = new ApiClient("", fakeFetch(() => ({ status: 200, body: {} })));
    await exerciseEveryClientMethod(api);
    expect(api.calls.length).toBeGreaterThanOrEqual(12);
    for (const call of api.calls) {
      expect(
        isDocumented(call.method, call.url),
        `${call.method} ${call.url} is not documented`,
      ).toBe(true);
    }
  });

  it("local route table matches the published backend routes", () => {
    const published = JSON.parse(
      readFileSync(join(here, "..", "..", "docs", "api", "routes.json"), "utf-8"),
    ) as { routes: { method: string; path: string }[] };
    const documented = new Set(
      DOCUMENTED_ROUTES.map((r) => `${r.method} ${r.doc}`),
    );
    const backend = new Set(
      published.routes.map((r) => `${r.method} ${r.path}`),
    );
    expect(documented).toEqual(backend);
  });

  it("rejects undocumented urls", () => {
    expect(isDocumented("GET", "/api/v1/secrets")).toBe(false);
    expect(isDocumented("POST", "/api/v2/sessions")).toBe(false);
    expect(isDocumented("GET", "/api/v1/sessions/abc/scene?version=3")).toBe(true);
  });
});
