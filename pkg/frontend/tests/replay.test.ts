import { describe, expect, it } from "vitest";

import { decodeOccupancyRow, frontierAt, makeMapper, tracePoints } from "../src/replay.js";
import type { EpisodeRecordJson, PoseJson } from "../src/types.js";

function pose(x: number, y: number): PoseJson {
  return { x, y, z: 10, yaw: 0 };
}

function record(steps: number): EpisodeRecordJson {
  return {
    task_id: "t000",
    agent: "fbe",
    category: "color_attribute",
    steps: Array.from({ length: steps }, (_, k) => ({
      time_step: k + 1,
      pose: pose(k, 2 * k),
      action: { type: "Move", direction: "forward", distance: 1 },
      subtask_index: null,
    })),
    answer: "red",
    final_pose: pose(steps, 2 * steps),
    overlays: {
      frontiers: { "0": [[1, 1]], "3": [[2, 2], [2, 3]] },
      lattice_points: [[5, 5]],
    },
    map_snapshot: null,
  };
}

describe("tracePoints", () => {
  it("yields one point per recorded step", () => {
    expect(tracePoints(record(0))).toHaveLength(0);
    expect(tracePoints(record(7))).toHaveLength(7);
    expect(tracePoints(record(3))[2]).toEqual({ x: 2, y: 4 });
  });
});

describe("frontierAt", () => {
  it("uses the latest overlay at or before the step", () => {
    const r = record(6);
    expect(frontierAt(r, 0)).toEqual([[1, 1]]);
    expect(frontierAt(r, 2)).toEqual([[1, 1]]);
    expect(frontierAt(r, 3)).toEqual([
      [2, 2],
      [2, 3],
    ]);
    expect(frontierAt(r, 6)).toHaveLength(2);
  });

  it("empty when there is no overlay", () => {
    const r = record(2);
    r.overlays = {};
    expect(frontierAt(r, 1)).toEqual([]);
  });
});

describe("decodeOccupancyRow", () => {
  it("expands run-length pairs", () => {
    const row = decodeOccupancyRow(
      [
        [3, 0],
        [2, 1],
        [1, 2],
      ],
      6,
    );
    expect(Array.from(row)).toEqual([0, 0, 0, 1, 1, 2]);
  });
});

describe("makeMapper", () => {
  it("maps world north to canvas up", () => {
    const mapper = makeMapper({ origin_x: 0, origin_y: 0, side: 100, resolution: 1 }, 200, 200);
    const [x0, y0] = mapper.toCanvas(0, 0);
    const [x1, y1] = mapper.toCanvas(50, 50);
    expect(x0).toBe(0);
    expect(y0).toBe(200);
    expect(x1).toBe(100);
    expect(y1).toBe(100);
  });
});
