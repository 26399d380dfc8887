// End-to-end against the real Python server: drives a human session
// through the typed client and checks the replay contract on freshly
// generated agent episodes.

import { execFileSync, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { tracePoints } from "../src/replay.js";

const PORT = 8737 + (process.pid % 200);
const BASE = `http://127.0.0.1:${PORT}`;
const REPO_ROOT = join(__dirname, "..", "..");

const WORLD = {
  bounds: { x_min: -120, x_max: 120, y_min: -120, y_max: 120 },
  entities: [
    {
      id: "building_1",
      class: "building",
      footprint: [30, 62, -16, 16],
      height: 55,
      attributes: { color: "gray" },
    },
    {
      id: "car_4",
      class: "car",
      footprint: [-4, 4, 6, 14],
      height: 5,
      attributes: { color: "black", model: "suv", facing: "north" },
    },
  ],
};

function tasksJson(worldPath: string) {
  return {
    tasks: [
      {
        task_id: "t000",
        question: "What is the color of the car west of building_1?",
        answer: "black",
        category: "color_attribute",
        // Facing away from the car so the frontier baseline has to explore.
        p0: { x: -20, y: -25, z: 10, yaw: 180 },
        p_obs: { x: 0, y: -10, z: 10, yaw: 0 },
        p_tar: { x: 0, y: 10, z: 10, yaw: 0 },
        world_ref: worldPath,
      },
    ],
  };
}

let workDir: string;
let server: ChildProcess | null = null;
const api = new ApiClient(BASE);

async function waitForServer(): Promise<void> {
  for (let attempt = 0; attempt < 100; attempt++) {
    try {
      await api.listTasks();
      return;
    } catch {
      await new Promise((resolve) => setTimeout(resolve, 150));
    }
  }
  throw new Error("server did not come up");
}

beforeAll(async () => {
  workDir = mkdtempSync(join(tmpdir(), "eqalab-console-"));
  const worldPath = join(workDir, "world.json");
  const tasksPath = join(workDir, "tasks.json");
  writeFileSync(worldPath, JSON.stringify(WORLD));
  writeFileSync(tasksPath, JSON.stringify(tasksJson(worldPath)));

  // Produce pma and fbe episode records through the real pipeline.
  execFileSync(
    "python3",
    [
      "-m",
      "eqalab.cli",
      "run",
      "--agent",
      "pma,fbe",
      "--backend",
      "scripted",
      "--seed",
      "7",
      "--tasks",
      tasksPath,
      "--out",
      join(workDir, "out"),
    ],
    { cwd: REPO_ROOT, stdio: "pipe" },
  );

  server = spawn(
    "python3",
    [
      "-m",
      "eqalab.cli",
      "serve",
      "--world",
      worldPath,
      "--tasks",
      tasksPath,
      "--port",
      String(PORT),
      "--records",
      join(workDir, "out", "records"),
      "--results-out",
      join(workDir, "human.jsonl"),
    ],
    { cwd: REPO_ROOT, stdio: "pipe" },
  );
  await waitForServer();
}, 120_000);

afterAll(() => {
  server?.kill();
  rmSync(workDir, { recursive: true, force: true });
});

describe("human session against the live server", () => {
  it("drives MoveForward 7, TurnRight, Stop black to a scored row", async () => {
    const tasks = await api.listTasks();
    expect(tasks[0]?.task_id).toBe("t000");
    const session = await api.startSession("t000");
    expect(session.budget_remaining).toBe(50);

    let view = await api.act(session.session_id, { type: "MoveForward", distance: 7 });
    expect(view.steps_used).toBe(1);
    expect(view.pose.y).toBeCloseTo(-32); // yaw 180: forward is south
    view = await api.act(session.session_id, { type: "TurnRight" });
    expect(view.pose.yaw).toBe(210);

    view = await api.act(session.session_id, { type: "Stop", answer: "black" });
    expect(view.done).toBe(true);
    expect(view.row?.agent_name).toBe("h-eqa");
    expect(view.row?.qaa_score).toBe(5);
    expect(view.row?.mts).toBe(2);

    const lines = readFileSync(join(workDir, "human.jsonl"), "utf-8").trim().split("\n");
    expect(lines).toHaveLength(1);
    const row = JSON.parse(lines[0]!);
    expect(row.agent_name).toBe("h-eqa");
    expect(row.qaa_score).toBe(5);
    expect(row.mts).toBe(2);
  });

  it("server rejects what the client would have blocked", async () => {
    const session = await api.startSession("t000");
    await expect(api.act(session.session_id, { type: "MoveForward", distance: 10.5 })).rejects.toThrowError(
      ApiError,
    );
  });

  it("replay trace point count equals record step count for all agents", async () => {
    const episodes = await api.listEpisodes();
    const wanted = ["pma_t000", "fbe_t000"];
    const humanEpisode = episodes.find((id) => id.startsWith("h-eqa_"));
    expect(humanEpisode).toBeDefined();
    wanted.push(humanEpisode!);
    for (const id of wanted) {
      const record = await api.episode(id);
      expect(tracePoints(record)).toHaveLength(record.steps.length);
      expect(record.steps.length).toBeGreaterThan(0);
    }
  });

  it("unknown episode reports not-found through the client", async () => {
    await expect(api.episode("ghost_episode")).rejects.toMatchObject({ status: 404 });
  });
});
