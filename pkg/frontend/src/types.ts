// Payload shapes of the console HTTP API.

export interface PoseJson {
  x: number;
  y: number;
  z: number;
  yaw: number;
}

export interface TaskInfo {
  task_id: string;
  question: string;
  category: string;
}

export interface MetricRowJson {
  task_id: string;
  agent_name: string;
  qaa_score: number;
  ne_m: number;
  mts: number;
  category: string;
  flags: string[];
}

export interface SessionView {
  session_id: string;
  task_id: string;
  question: string;
  pose: PoseJson;
  steps_used: number;
  budget_remaining: number;
  done: boolean;
  answer: string;
  view_url: string;
  row?: MetricRowJson;
}

export type ActionRequest =
  | { type: "MoveForward"; distance: number }
  | { type: "TurnLeft" }
  | { type: "TurnRight" }
  | { type: "Stop"; answer: string };

export interface StepJson {
  time_step: number;
  pose: PoseJson;
  action: { type: string; [key: string]: unknown };
  subtask_index: number | null;
}

export interface GridSpecJson {
  origin_x: number;
  origin_y: number;
  side: number;
  resolution: number;
}

export interface MapObjectJson {
  map_id: number;
  class: string;
  caption: string;
  cells: [number, number][];
}

export interface MapSnapshot {
  spec: GridSpecJson;
  objects: MapObjectJson[];
  // Per-i row, run-length pairs [count, value]; 0 unknown, 1 free, 2 occupied.
  occupancy: [number, number][][];
}

export interface EpisodeRecordJson {
  task_id: string;
  agent: string;
  category: string;
  steps: StepJson[];
  answer: string;
  final_pose: PoseJson | null;
  overlays: {
    frontiers?: Record<string, [number, number][]>;
    lattice_points?: [number, number][];
  };
  map_snapshot?: MapSnapshot | null;
}
