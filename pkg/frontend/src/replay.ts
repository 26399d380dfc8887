// Pure helpers for the replay view plus the canvas renderer. Scrubbing is
// entirely client-side over the fetched episode record.

import type { EpisodeRecordJson, GridSpecJson, MapSnapshot } from "./types.js";

export interface TracePoint {
  x: number;
  y: number;
}

/** One trace point per recorded step: the pose after each action. */
export function tracePoints(record: EpisodeRecordJson): TracePoint[] {
  return record.steps.map((s) => ({ x: s.pose.x, y: s.pose.y }));
}

/**
 * Frontier overlay active at a given step. Overlays are keyed by the step
 * count at the time of the observation; the latest key not after the step
 * applies.
 */
export function frontierAt(record: EpisodeRecordJson, step: number): [number, number][] {
  const frontiers = record.overlays.frontiers;
  if (!frontiers) {
    return [];
  }
  let bestKey = -1;
  for (const key of Object.keys(frontiers)) {
    const k = Number(key);
    if (k <= step && k > bestKey) {
      bestKey = k;
    }
  }
  return bestKey < 0 ? [] : (frontiers[String(bestKey)] ?? []);
}

export function decodeOccupancyRow(runs: [number, number][], cells: number): Uint8Array {
  const row = new Uint8Array(cells);
  let j = 0;
  for (const [count, value] of runs) {
    row.fill(value, j, j + count);
    j += count;
  }
  return row;
}

export interface CanvasMapper {
  toCanvas(x: number, y: number): [number, number];
  cellSize: number;
}

export function makeMapper(spec: GridSpecJson, width: number, height: number): CanvasMapper {
  const scale = Math.min(width, height) / spec.side;
  return {
    // y grows north; canvas y grows down.
    toCanvas(x: number, y: number): [number, number] {
      return [(x - spec.origin_x) * scale, height - (y - spec.origin_y) * scale];
    },
    cellSize: spec.resolution * scale,
  };
}

const OCCUPANCY_COLORS: Record<number, string> = {
  1: "#2a3942",
  2: "#b5541c",
};

const OBJECT_COLORS: Record<string, string> = {
  building: "#5573a8",
  car: "#c94f4f",
  shop: "#b08b2e",
  statue: "#7d5fb2",
  lot: "#4f8f62",
};

/** Draw one replay frame; quietly does nothing without 2D canvas support. */
export function drawFrame(canvas: HTMLCanvasElement, record: EpisodeRecordJson, step: number): void {
  const ctx = canvas.getContext("2d");
  const snapshot = record.map_snapshot;
  if (!ctx) {
    return;
  }
  ctx.fillStyle = "#11161a";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  if (!snapshot) {
    drawTrace(ctx, record, step, null, canvas);
    return;
  }
  const mapper = makeMapper(snapshot.spec, canvas.width, canvas.height);
  drawOccupancy(ctx, snapshot, mapper);
  drawObjects(ctx, snapshot, mapper);
  drawCells(ctx, frontierAt(record, step), snapshot.spec, mapper, "#3fd0d4");
  drawLattice(ctx, record, mapper);
  drawTrace(ctx, record, step, mapper, canvas);
}

function drawOccupancy(ctx: CanvasRenderingContext2D, snapshot: MapSnapshot, mapper: CanvasMapper): void {
  const spec = snapshot.spec;
  const n = Math.round(spec.side / spec.resolution);
  snapshot.occupancy.forEach((runs, i) => {
    const row = decodeOccupancyRow(runs, n);
    for (let j = 0; j < n; j++) {
      const value = row[j] ?? 0;
      const color = OCCUPANCY_COLORS[value];
      if (!color) {
        continue;
      }
      const [cx, cy] = mapper.toCanvas(spec.origin_x + i * spec.resolution, spec.origin_y + (j + 1) * spec.resolution);
      ctx.fillStyle = color;
      ctx.fillRect(cx, cy, mapper.cellSize + 0.5, mapper.cellSize + 0.5);
    }
  });
}

function drawObjects(ctx: CanvasRenderingContext2D, snapshot: MapSnapshot, mapper: CanvasMapper): void {
  for (const obj of snapshot.objects) {
    ctx.fillStyle = OBJECT_COLORS[obj.class] ?? "#9aa5ad";
    drawCellList(ctx, obj.cells, snapshot.spec, mapper);
  }
}

function drawCells(
  ctx: CanvasRenderingContext2D,
  cells: [number, number][],
  spec: GridSpecJson,
  mapper: CanvasMapper,
  color: string,
): void {
  ctx.fillStyle = color;
  drawCellList(ctx, cells, spec, mapper);
}

function drawCellList(
  ctx: CanvasRenderingContext2D,
  cells: [number, number][],
  spec: GridSpecJson,
  mapper: CanvasMapper,
): void {
  for (const [i, j] of cells) {
    const [cx, cy] = mapper.toCanvas(spec.origin_x + i * spec.resolution, spec.origin_y + (j + 1) * spec.resolution);
    ctx.fillRect(cx, cy, mapper.cellSize + 0.5, mapper.cellSize + 0.5);
  }
}

function drawLattice(ctx: CanvasRenderingContext2D, record: EpisodeRecordJson, mapper: CanvasMapper): void {
  const points = record.overlays.lattice_points ?? [];
  ctx.strokeStyle = "#e0c04e";
  for (const [x, y] of points) {
    const [cx, cy] = mapper.toCanvas(x, y);
    ctx.strokeRect(cx - 2, cy - 2, 4, 4);
  }
}

function drawTrace(
  ctx: CanvasRenderingContext2D,
  record: EpisodeRecordJson,
  step: number,
  mapper: CanvasMapper | null,
  canvas: HTMLCanvasElement,
): void {
  const points = tracePoints(record).slice(0, Math.max(step, 0));
  if (!points.length) {
    return;
  }
  const map = mapper ?? fallbackMapper(points, canvas);
  ctx.strokeStyle = "#e8ecef";
  ctx.beginPath();
  points.forEach((p, k) => {
    const [cx, cy] = map.toCanvas(p.x, p.y);
    if (k === 0) {
      ctx.moveTo(cx, cy);
    } else {
      ctx.lineTo(cx, cy);
    }
  });
  ctx.stroke();
  const last = points[points.length - 1];
  if (last) {
    const [cx, cy] = map.toCanvas(last.x, last.y);
    ctx.fillStyle = "#62d96b";
    ctx.beginPath();
    ctx.arc(cx, cy, 4, 0, 2 * Math.PI);
    ctx.fill();
  }
}

function fallbackMapper(points: TracePoint[], canvas: HTMLCanvasElement): CanvasMapper {
  const xs = points.map((p) => p.x);
  const ys = points.map((p) => p.y);
  const minX = Math.min(...xs) - 10;
  const maxX = Math.max(...xs) + 10;
  const minY = Math.min(...ys) - 10;
  const maxY = Math.max(...ys) + 10;
  const scale = Math.min(canvas.width / (maxX - minX), canvas.height / (maxY - minY));
  return {
    toCanvas: (x: number, y: number) => [(x - minX) * scale, canvas.height - (y - minY) * scale],
    cellSize: scale,
  };
}
