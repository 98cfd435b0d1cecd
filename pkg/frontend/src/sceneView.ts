// Top-down orthographic scene renderer: each node is its footprint rectangle
// at its pose, relation edges are toggleable overlays, and selecting a node
// fills a metadata panel. Rendering is a pure function of (payload, options):
// identical inputs produce identical DOM.

import type { ScenePayload, SceneNode } from "./types.js";

export interface SceneViewOptions {
  showEdges: boolean;
  highlight?: Set<string>;
  selected?: string | null;
}

const SVG_NS = "http://www.w3.org/2000/svg";
const PIXELS_PER_METER = 240;
const PADDING_PX = 20;

export function quaternionYaw(q: [number, number, number, number]): number {
  const [w, x, y, z] = q;
  return Math.atan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z));
}

interface Bounds {
  minX: number;
  minY: number;
  maxX: number;
  maxY: number;
}

function sceneBounds(nodes: SceneNode[]): Bounds {
  const bounds: Bounds = { minX: -0.5, minY: -0.5, maxX: 0.5, maxY: 0.5 };
  for (const node of nodes) {
    if (!node.pose) continue;
    const reach = Math.hypot(node.size[0], node.size[1]) / 2;
    bounds.minX = Math.min(bounds.minX, node.pose.position[0] - reach);
    bounds.maxX = Math.max(bounds.maxX, node.pose.position[0] + reach);
    bounds.minY = Math.min(bounds.minY, node.pose.position[1] - reach);
    bounds.maxY = Math.max(bounds.maxY, node.pose.position[1] + reach);
  }
  return bounds;
}

function isRegion(node: SceneNode): boolean {
  return node.asset_id.startsWith("region.");
}

export class SceneView {
  private payload: ScenePayload | null = null;
  private options: SceneViewOptions = { showEdges: true, selected: null };
  onSelect: ((nodeId: string | null) => void) | null = null;

  constructor(
    private readonly container: HTMLElement,
    private readonly metadataPanel: HTMLElement,
  ) {}

  render(payload: ScenePayload, options?: Partial<SceneViewOptions>): void {
    this.payload = payload;
    this.options = { ...this.options, ...options };
    this.draw();
  }

  toggleEdges(): void {
    this.options.showEdges = !this.options.showEdges;
    this.draw();
  }

  select(nodeId: string | null): void {
    this.options.selected = nodeId;
    this.draw();
    if (this.onSelect) this.onSelect(nodeId);
  }

  private draw(): void {
    const payload = this.payload;
    this.container.textContent = "";
    this.metadataPanel.textContent = "";
    if (!payload) return;

    const nodes = payload.scene.nodes;
    const bounds = sceneBounds(nodes);
    const width =
      (bounds.maxX - bounds.minX) * PIXELS_PER_METER + 2 * PADDING_PX;
    const height =
      (bounds.maxY - bounds.minY) * PIXELS_PER_METER + 2 * PADDING_PX;
    const toPx = (x: number, y: number): [number, number] => [
      PADDING_PX + (x - bounds.minX) * PIXELS_PER_METER,
      // +y in the scene points up; SVG y points down.
      PADDING_PX + (bounds.maxY - y) * PIXELS_PER_METER,
    ];

    const svg = document.createElementNS(SVG_NS, "svg");
    svg.setAttribute("class", "scene-view");
    svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
    svg.setAttribute("width", String(width));
    svg.setAttribute("height", String(height));

    const violated = new Set(
      payload.validation.violated_edges.map(
        (e) => `${e.relation}:${e.src}:${e.dst}`,
      ),
    );

    // Regions first so objects draw above them.
    const ordered = [...nodes].sort(
      (a, b) => Number(isRegion(b)) - Number(isRegion(a)),
    );
    for (const node of ordered) {
      if (!node.pose) continue;
      const [cx, cy] = toPx(node.pose.position[0], node.pose.position[1]);
      const w = node.size[0] * PIXELS_PER_METER;
      const h = node.size[1] * PIXELS_PER_METER;
      const yawDeg = (-quaternionYaw(node.pose.orientation) * 180) / Math.PI;
      const rect = document.createElementNS(SVG_NS, "rect");
      rect.setAttribute("x", String(cx - w / 2));
      rect.setAttribute("y", String(cy - h / 2));
      rect.setAttribute("width", String(w));
      rect.setAttribute("height", String(h));
      rect.setAttribute("transform", `rotate(${yawDeg} ${cx} ${cy})`);
      rect.setAttribute("data-node-id", node.id);
      const classes = ["node"];
      if (isRegion(node)) classes.push("node-region");
      if (this.options.highlight?.has(node.id)) classes.push("node-highlight");
      if (this.options.selected === node.id) classes.push("node-selected");
      rect.setAttribute("class", classes.join(" "));
      rect.addEventListener("click", () => this.select(node.id));
      svg.appendChild(rect);
    }

    if (this.options.showEdges) {
      const centers = new Map<string, [number, number]>();
      for (const node of nodes) {
        if (node.pose) {
          centers.set(node.id, toPx(node.pose.position[0], node.pose.position[1]));
        }
      }
      for (const edge of payload.scene.edges) {
        const from = centers.get(edge.src);
        const to = centers.get(edge.dst);
        if (!from || !to) continue;
        const line = document.createElementNS(SVG_NS, "line");
        line.setAttribute("x1", String(from[0]));
        line.setAttribute("y1", String(from[1]));
        line.setAttribute("x2", String(to[0]));
        line.setAttribute("y2", String(to[1]));
        const classes = ["edge", `edge-${edge.relation}`];
        if (violated.has(`${edge.relation}:${edge.src}:${edge.dst}`)) {
          classes.push("edge-violated");
        }
        line.setAttribute("class", classes.join(" "));
        line.setAttribute("data-edge", `${edge.src}->${edge.dst}`);
        svg.appendChild(line);
      }
    }

    this.container.appendChild(svg);
    this.drawMetadata();
  }

  private drawMetadata(): void {
    const payload = this.payload;
    if (!payload) return;
    const selected = this.options.selected;
    const panel = this.metadataPanel;
    if (!selected) {
      const hint = document.createElement("p");
      hint.className = "metadata-hint";
      hint.textContent = `version ${payload.version}: ${payload.scene.nodes.length} nodes, ${payload.scene.edges.length} edges`;
      panel.appendChild(hint);
      return;
    }
    const node = payload.scene.nodes.find((n) => n.id === selected);
    if (!node) return;
    const list = document.createElement("dl");
    list.className = "metadata";
    const rows: [string, string][] = [
      ["id", node.id],
      ["asset", node.asset_id],
      ["semantic", node.semantic],
      ["task tag", node.task_tag ?? "-"],
      ["size", node.size.map((v) => v.toFixed(3)).join(" x ")],
      [
        "position",
        node.pose
          ? node.pose.position.map((v) => v.toFixed(3)).join(", ")
          : "unresolved",
      ],
    ];
    for (const [label, value] of rows) {
      const dt = document.createElement("dt");
      dt.textContent = label;
      const dd = document.createElement("dd");
      dd.textContent = value;
      list.appendChild(dt);
      list.appendChild(dd);
    }
    panel.appendChild(list);
  }
}
