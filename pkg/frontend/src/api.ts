// Typed client over the console HTTP API. Server errors arrive as
// {code, message}; ApiError carries the message verbatim so the UI can
// show exactly what the server said.

import type { ActionRequest, EpisodeRecordJson, SessionView, TaskInfo } from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let message = `${response.status} ${response.statusText}`;
  try {
    const body = (await response.json()) as { message?: string };
    if (body && typeof body.message === "string") {
      message = body.message;
    }
  } catch {
    // non-JSON error body; keep the status line
  }
  return new ApiError(response.status, message);
}

export class ApiClient {
  constructor(private readonly base: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.base + path, init);
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as T;
  }

  listTasks(): Promise<TaskInfo[]> {
    return this.request<TaskInfo[]>("/api/tasks");
  }

  startSession(taskId: string): Promise<SessionView> {
    return this.request<SessionView>("/api/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ task_id: taskId }),
    });
  }

  act(sessionId: string, action: ActionRequest): Promise<SessionView> {
    return this.request<SessionView>(`/api/sessions/${sessionId}/action`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(action),
    });
  }

  listEpisodes(): Promise<string[]> {
    return this.request<string[]>("/api/episodes");
  }

  episode(episodeId: string): Promise<EpisodeRecordJson> {
    return this.request<EpisodeRecordJson>(`/api/episodes/${episodeId}`);
  }

  sessionViewUrl(sessionId: string, salt: number): string {
    return `${this.base}/api/sessions/${sessionId}/view.png?t=${salt}`;
  }

  episodeViewUrl(episodeId: string, step: number): string {
    return `${this.base}/api/episodes/${episodeId}/view.png?step=${step}`;
  }
}
