// Replay view: episode picker, timeline scrubber, top-down map canvas, and
// the per-step first-person render. Scrubbing never touches the server
// except for the per-step render image.

import { ApiClient, ApiError } from "./api.js";
import { drawFrame, tracePoints } from "./replay.js";
import type { EpisodeRecordJson } from "./types.js";

export class ReplayPanel {
  private record: EpisodeRecordJson | null = null;
  private episodeId = "";

  readonly episodeSelect: HTMLSelectElement;
  readonly loadButton: HTMLButtonElement;
  readonly scrubber: HTMLInputElement;
  readonly stepLabel: HTMLElement;
  readonly canvas: HTMLCanvasElement;
  readonly stepView: HTMLImageElement;
  readonly emptyEl: HTMLElement;
  readonly actionsEl: HTMLElement;

  constructor(
    readonly root: HTMLElement,
    private readonly api: ApiClient,
  ) {
    root.innerHTML = `
      <div class="replay-panel">
        <div class="row">
          <select data-role="episode"></select>
          <button data-role="load">Load episode</button>
        </div>
        <p data-role="empty" class="hint"></p>
        <div class="row">
          <input data-role="scrubber" type="range" min="0" max="0" value="0" />
          <span data-role="step-label"></span>
        </div>
        <div class="row replay-views">
          <canvas data-role="map" width="480" height="480"></canvas>
          <div class="side">
            <img data-role="step-view" alt="view at step" width="320" height="240" />
            <pre data-role="actions" class="actions"></pre>
          </div>
        </div>
      </div>`;
    this.episodeSelect = this.q("episode") as HTMLSelectElement;
    this.loadButton = this.q("load") as HTMLButtonElement;
    this.scrubber = this.q("scrubber") as HTMLInputElement;
    this.stepLabel = this.q("step-label");
    this.canvas = this.q("map") as HTMLCanvasElement;
    this.stepView = this.q("step-view") as HTMLImageElement;
    this.emptyEl = this.q("empty");
    this.actionsEl = this.q("actions");

    this.loadButton.addEventListener("click", () => void this.load(this.episodeSelect.value));
    this.scrubber.addEventListener("input", () => this.showStep(Number(this.scrubber.value)));
  }

  private q(role: string): HTMLElement {
    const found = this.root.querySelector(`[data-role="${role}"]`);
    if (!found) {
      throw new Error(`missing element: ${role}`);
    }
    return found as HTMLElement;
  }

  async loadEpisodeList(): Promise<string[]> {
    const episodes = await this.api.listEpisodes();
    this.episodeSelect.innerHTML = "";
    for (const id of episodes) {
      const option = document.createElement("option");
      option.value = id;
      option.textContent = id;
      this.episodeSelect.appendChild(option);
    }
    return episodes;
  }

  async load(episodeId: string): Promise<EpisodeRecordJson | null> {
    try {
      this.record = await this.api.episode(episodeId);
    } catch (error) {
      this.record = null;
      this.emptyEl.textContent =
        error instanceof ApiError && error.status === 404
          ? `no such episode: ${episodeId}`
          : "failed to load episode";
      return null;
    }
    this.episodeId = episodeId;
    this.emptyEl.textContent = "";
    const steps = this.record.steps.length;
    this.scrubber.max = String(steps);
    this.scrubber.value = String(steps);
    this.actionsEl.textContent = this.record.steps
      .map((s) => `${s.time_step}: ${JSON.stringify(s.action)}`)
      .join("\n");
    this.showStep(steps);
    return this.record;
  }

  showStep(step: number): void {
    if (!this.record) {
      return;
    }
    this.stepLabel.textContent = `step ${step} / ${this.record.steps.length}`;
    drawFrame(this.canvas, this.record, step);
    this.stepView.src = this.api.episodeViewUrl(this.episodeId, step);
  }

  /** Number of pose points the current frame's trace contains. */
  traceLength(): number {
    return this.record ? tracePoints(this.record).length : 0;
  }
}
