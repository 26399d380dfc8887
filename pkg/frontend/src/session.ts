// Control panel for a human-operated session. All truth is server-side;
// the panel mirrors the action rules client-side so invalid requests are
// blocked with an inline hint before they are sent.

import { ApiClient, ApiError } from "./api.js";
import type { SessionView, TaskInfo } from "./types.js";
import { validateAnswer, validateDistance } from "./validation.js";

export class SessionPanel {
  private session: SessionView | null = null;
  private renderSalt = 0;

  readonly taskSelect: HTMLSelectElement;
  readonly startButton: HTMLButtonElement;
  readonly questionEl: HTMLElement;
  readonly poseEl: HTMLElement;
  readonly budgetEl: HTMLElement;
  readonly distanceInput: HTMLInputElement;
  readonly answerInput: HTMLInputElement;
  readonly forwardButton: HTMLButtonElement;
  readonly leftButton: HTMLButtonElement;
  readonly rightButton: HTMLButtonElement;
  readonly stopButton: HTMLButtonElement;
  readonly hintEl: HTMLElement;
  readonly bannerEl: HTMLElement;
  readonly retryButton: HTMLButtonElement;
  readonly viewImg: HTMLImageElement;
  readonly resultEl: HTMLElement;

  private lastAction: (() => Promise<void>) | null = null;

  constructor(
    readonly root: HTMLElement,
    private readonly api: ApiClient,
  ) {
    root.innerHTML = `
      <div class="session-panel">
        <div class="row">
          <select data-role="task"></select>
          <button data-role="start">Start session</button>
        </div>
        <p data-role="question" class="question"></p>
        <img data-role="view" class="view" alt="first-person view" width="320" height="240" />
        <div class="row readouts">
          <span data-role="pose"></span>
          <span data-role="budget"></span>
        </div>
        <div class="row controls">
          <input data-role="distance" placeholder="distance 1-10" size="10" />
          <button data-role="forward" disabled>MoveForward</button>
          <button data-role="left" disabled>TurnLeft 30&deg;</button>
          <button data-role="right" disabled>TurnRight 30&deg;</button>
        </div>
        <div class="row controls">
          <input data-role="answer" placeholder="answer" size="24" />
          <button data-role="stop" disabled>Stop &amp; answer</button>
        </div>
        <p data-role="hint" class="hint"></p>
        <div data-role="banner" class="banner hidden">
          <span data-role="banner-text"></span>
          <button data-role="retry">Retry</button>
        </div>
        <p data-role="result" class="result"></p>
      </div>`;
    this.taskSelect = this.el("task") as HTMLSelectElement;
    this.startButton = this.el("start") as HTMLButtonElement;
    this.questionEl = this.el("question");
    this.poseEl = this.el("pose");
    this.budgetEl = this.el("budget");
    this.distanceInput = this.el("distance") as HTMLInputElement;
    this.answerInput = this.el("answer") as HTMLInputElement;
    this.forwardButton = this.el("forward") as HTMLButtonElement;
    this.leftButton = this.el("left") as HTMLButtonElement;
    this.rightButton = this.el("right") as HTMLButtonElement;
    this.stopButton = this.el("stop") as HTMLButtonElement;
    this.hintEl = this.el("hint");
    this.bannerEl = this.el("banner");
    this.retryButton = this.el("retry") as HTMLButtonElement;
    this.viewImg = this.el("view") as HTMLImageElement;
    this.resultEl = this.el("result");

    this.startButton.addEventListener("click", () => void this.start());
    this.forwardButton.addEventListener("click", () => void this.submitMove());
    this.leftButton.addEventListener("click", () => void this.submitTurn("TurnLeft"));
    this.rightButton.addEventListener("click", () => void this.submitTurn("TurnRight"));
    this.stopButton.addEventListener("click", () => void this.submitStop());
    this.retryButton.addEventListener("click", () => void this.retry());
  }

  private el(role: string): HTMLElement {
    const found = this.root.querySelector(`[data-role="${role}"]`);
    if (!found) {
      throw new Error(`missing element: ${role}`);
    }
    return found as HTMLElement;
  }

  async loadTasks(): Promise<TaskInfo[]> {
    const tasks = await this.api.listTasks();
    this.taskSelect.innerHTML = "";
    for (const task of tasks) {
      const option = document.createElement("option");
      option.value = task.task_id;
      option.textContent = `${task.task_id}: ${task.question}`;
      this.taskSelect.appendChild(option);
    }
    return tasks;
  }

  async start(): Promise<void> {
    const taskId = this.taskSelect.value;
    if (!taskId) {
      return;
    }
    await this.guard(async () => {
      const view = await this.api.startSession(taskId);
      this.resultEl.textContent = "";
      this.apply(view);
    });
  }

  async submitMove(): Promise<void> {
    const session = this.session;
    if (!session || session.done) {
      return;
    }
    const check = validateDistance(this.distanceInput.value);
    if (!check.ok || check.distance === undefined) {
      this.hintEl.textContent = check.message ?? "invalid distance";
      return;
    }
    const distance = check.distance;
    await this.guard(async () => {
      this.apply(await this.api.act(session.session_id, { type: "MoveForward", distance }));
    });
  }

  async submitTurn(type: "TurnLeft" | "TurnRight"): Promise<void> {
    const session = this.session;
    if (!session || session.done) {
      return;
    }
    await this.guard(async () => {
      this.apply(await this.api.act(session.session_id, { type }));
    });
  }

  async submitStop(): Promise<void> {
    const session = this.session;
    if (!session || session.done) {
      return;
    }
    const check = validateAnswer(this.answerInput.value);
    if (!check.ok || check.answer === undefined) {
      this.hintEl.textContent = check.message ?? "invalid answer";
      return;
    }
    const answer = check.answer;
    await this.guard(async () => {
      const view = await this.api.act(session.session_id, { type: "Stop", answer });
      this.apply(view);
      if (view.row) {
        this.resultEl.textContent =
          `Finished: score ${view.row.qaa_score}/5, ` +
          `${view.row.mts} steps, ${view.row.ne_m.toFixed(1)} m from target.`;
      }
    });
  }

  /** Run a server call with the error banner / verbatim 4xx handling. */
  private async guard(action: () => Promise<void>): Promise<void> {
    this.lastAction = action;
    this.hintEl.textContent = "";
    try {
      await action();
      this.hideBanner();
    } catch (error) {
      if (error instanceof ApiError) {
        // Server rejection: show its message verbatim.
        this.hintEl.textContent = error.message;
        this.hideBanner();
      } else {
        this.showBanner("network failure; check the server and retry");
      }
    }
  }

  private async retry(): Promise<void> {
    if (this.lastAction) {
      await this.guard(this.lastAction);
    }
  }

  private showBanner(text: string): void {
    this.el("banner-text").textContent = text;
    this.bannerEl.classList.remove("hidden");
  }

  private hideBanner(): void {
    this.bannerEl.classList.add("hidden");
  }

  apply(view: SessionView): void {
    this.session = view;
    this.questionEl.textContent = view.question;
    const p = view.pose;
    this.poseEl.textContent = `pose (${p.x.toFixed(1)}, ${p.y.toFixed(1)}, ${p.z.toFixed(1)}) yaw ${p.yaw.toFixed(0)}`;
    this.budgetEl.textContent = `steps ${view.steps_used} / budget left ${view.budget_remaining}`;
    this.renderSalt += 1;
    this.viewImg.src = this.api.sessionViewUrl(view.session_id, this.renderSalt);
    const disabled = view.done;
    this.forwardButton.disabled = disabled;
    this.leftButton.disabled = disabled;
    this.rightButton.disabled = disabled;
    this.stopButton.disabled = disabled;
  }

  get current(): SessionView | null {
    return this.session;
  }
}
