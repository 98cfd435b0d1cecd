// Episode monitor: polls a job once per second, shows the live step counter
// and per-stage satisfaction, and lands on a terminal badge that keeps
// success, timeout, and policy_error visually distinct.

import type { ApiClient } from "./api.js";
import { ApiError } from "./api.js";
import type { EpisodeRecordView, JobView } from "./types.js";

export const POLL_INTERVAL_MS = 1000;

export class EpisodeMonitor {
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly container: HTMLElement,
  ) {}

  watch(jobId: string): void {
    this.stop();
    void this.poll(jobId);
    this.timer = setInterval(() => void this.poll(jobId), POLL_INTERVAL_MS);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  private async poll(jobId: string): Promise<void> {
    let job: JobView;
    try {
      job = await this.api.getJob(jobId);
    } catch (error) {
      if (error instanceof ApiError && error.status === 404) {
        this.stop();
        this.renderNotFound(jobId);
        return;
      }
      return; // transient failure: keep polling
    }
    if (job.status === "queued" || job.status === "running") {
      this.renderRunning(job);
      return;
    }
    this.stop();
    if (job.status === "done") {
      await this.renderTerminal(job);
    } else {
      this.renderFailed(job);
    }
  }

  private clear(): HTMLElement {
    this.container.textContent = "";
    return this.container;
  }

  private renderNotFound(jobId: string): void {
    const root = this.clear();
    const badge = document.createElement("div");
    badge.className = "badge badge-not-found";
    badge.textContent = `job ${jobId} not found`;
    root.appendChild(badge);
  }

  private renderRunning(job: JobView): void {
    const root = this.clear();
    const status = document.createElement("div");
    status.className = "monitor-status";
    const episode = job.progress.episode ?? 0;
    const total = job.progress.total ?? 0;
    const step = job.progress.current_step ?? 0;
    status.textContent = `episode ${episode}/${total}`;
    const counter = document.createElement("div");
    counter.className = "step-counter";
    counter.textContent = `step ${step}`;
    root.appendChild(status);
    root.appendChild(counter);
  }

  private renderFailed(job: JobView): void {
    const root = this.clear();
    const badge = document.createElement("div");
    badge.className = `badge badge-${job.status}`;
    badge.textContent = job.error ? `${job.status}: ${job.error}` : job.status;
    root.appendChild(badge);
  }

  private async renderTerminal(job: JobView): Promise<void> {
    const root = this.clear();
    const { count } = await this.api.countEpisodeRecords(job.job_id);
    for (let index = 0; index < count; index += 1) {
      const { record } = await this.api.getEpisodeRecord(job.job_id, index);
      root.appendChild(this.renderRecord(record as EpisodeRecordView));
    }
  }

  private renderRecord(record: EpisodeRecordView): HTMLElement {
    const card = document.createElement("div");
    card.className = "episode-card";

    const badge = document.createElement("span");
    badge.className = `badge badge-${record.status}`;
    badge.textContent = record.status;
    card.appendChild(badge);

    const justification = document.createElement("span");
    justification.className = "verdict-justification";
    justification.textContent = record.result.justification;
    card.appendChild(justification);

    const steps = document.createElement("span");
    steps.className = "final-step";
    steps.textContent = `final step ${record.timing.final_step ?? "?"}`;
    card.appendChild(steps);

    const stages = document.createElement("ul");
    stages.className = "stage-list";
    for (const stage of record.result.stage_results) {
      const item = document.createElement("li");
      item.className = stage.satisfied ? "stage-satisfied" : "stage-unsatisfied";
      item.textContent = stage.satisfied
        ? `${stage.name} @ ${stage.first_satisfied_step}`
        : `${stage.name} (unsatisfied)`;
      stages.appendChild(item);
    }
    card.appendChild(stages);
    return card;
  }
}
