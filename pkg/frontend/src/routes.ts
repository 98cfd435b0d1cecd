// The documented /api/v1 surface. The client may only build URLs matching
// these patterns; the contract test enforces it against every call site.

export interface RouteSpec {
  method: "GET" | "POST";
  pattern: RegExp;
  doc: string;
}

export const API_BASE = "/api/v1";

const ID = "[A-Za-z0-9_-]+";

export const DOCUMENTED_ROUTES: RouteSpec[] = [
  { method: "GET", pattern: new RegExp(`^/api/v1/health$`), doc: "/api/v1/health" },
  { method: "POST", pattern: new RegExp(`^/api/v1/sessions$`), doc: "/api/v1/sessions" },
  {
    method: "GET",
    pattern: new RegExp(`^/api/v1/sessions/${ID}$`),
    doc: "/api/v1/sessions/{session_id}",
  },
  {
    method: "POST",
    pattern: new RegExp(`^/api/v1/sessions/${ID}/messages$`),
    doc: "/api/v1/sessions/{session_id}/messages",
  },
  {
    method: "GET",
    pattern: new RegExp(`^/api/v1/sessions/${ID}/scene(\\?version=\\d+)?$`),
    doc: "/api/v1/sessions/{session_id}/scene",
  },
  { method: "POST", pattern: new RegExp(`^/api/v1/variants$`), doc: "/api/v1/variants" },
  { method: "POST", pattern: new RegExp(`^/api/v1/episodes$`), doc: "/api/v1/episodes" },
  {
    method: "GET",
    pattern: new RegExp(`^/api/v1/episodes/${ID}/records(\\?index=\\d+)?$`),
    doc: "/api/v1/episodes/{job_id}/records",
  },
  {
    method: "GET",
    pattern: new RegExp(`^/api/v1/jobs/${ID}$`),
    doc: "/api/v1/jobs/{job_id}",
  },
  { method: "POST", pattern: new RegExp(`^/api/v1/analysis$`), doc: "/api/v1/analysis" },
];

export function isDocumented(method: string, url: string): boolean {
  return DOCUMENTED_ROUTES.some(
    (route) => route.method === method && route.pattern.test(url),
  );
}
