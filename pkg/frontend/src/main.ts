import { ApiClient } from "./api.js";
import { ReplayPanel } from "./replay_panel.js";
import { SessionPanel } from "./session.js";

function mount(): void {
  const app = document.getElementById("app");
  if (!app) {
    return;
  }
  app.innerHTML = `
    <nav class="tabs">
      <button data-tab="session" class="active">Session</button>
      <button data-tab="replay">Replay</button>
    </nav>
    <section id="session-root"></section>
    <section id="replay-root" class="hidden"></section>`;

  const api = new ApiClient("");
  const sessionRoot = document.getElementById("session-root")!;
  const replayRoot = document.getElementById("replay-root")!;
  const session = new SessionPanel(sessionRoot, api);
  const replay = new ReplayPanel(replayRoot, api);

  void session.loadTasks();
  for (const button of app.querySelectorAll<HTMLButtonElement>("[data-tab]")) {
    button.addEventListener("click", () => {
      for (const other of app.querySelectorAll("[data-tab]")) {
        other.classList.toggle("active", other === button);
      }
      const tab = button.dataset.tab;
      sessionRoot.classList.toggle("hidden", tab !== "session");
      replayRoot.classList.toggle("hidden", tab !== "replay");
      if (tab === "replay") {
        void replay.loadEpisodeList();
      }
    });
  }
}

mount();
