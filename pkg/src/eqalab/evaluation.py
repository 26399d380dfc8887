"""Task model and generator, RE/FBE baselines, metrics, and aggregation."""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from statistics import mean, pstdev
from typing import Callable, Optional

import numpy as np

from .config import Config
from .gateway import Gateway, GatewayError, ModelRequest, ScoreParseError, parse_score
from .manager import EpisodeRecord, StepLog
from .mapping import FREE, UNKNOWN, GridSpec, new_map, update_occupancy
from .pathfinding import astar, collinear_runs, truncate_path
from .questions import CATEGORIES, CATEGORY_ATTRIBUTE, LANDMARK_CLASSES, render_question
from .render import image_summary, render, semantic_png_bytes, yaw_to_heading_delta
from .world import (
    AGENT_CLEARANCE_M,
    CameraModel,
    Entity,
    Move,
    Pose,
    Rect,
    Stop,
    Turn,
    WorldModel,
    apply_action,
)

RELATION_ORDER = ("north", "south", "east", "west")


class TaskGenerationError(RuntimeError):
    def __init__(self, missing_categories: list[str]):
        super().__init__(f"world cannot support categories: {', '.join(missing_categories)}")
        self.missing_categories = missing_categories


@dataclass(frozen=True)
class Task:
    task_id: str
    question: str
    answer: str
    category: str
    p0: Pose
    p_obs: Pose
    p_tar: Pose
    world_ref: str = ""

    def __post_init__(self):
        d = math.dist((self.p0.x, self.p0.y, self.p0.z), (self.p_tar.x, self.p_tar.y, self.p_tar.z))
        if d >= 200.0:
            raise ValueError(f"task {self.task_id}: start is {d:.1f} m from target, must be < 200")

    def to_json(self) -> dict:
        return {
            "task_id": self.task_id,
            "question": self.question,
            "answer": self.answer,
            "category": self.category,
            "p0": self.p0.to_json(),
            "p_obs": self.p_obs.to_json(),
            "p_tar": self.p_tar.to_json(),
            "world_ref": self.world_ref,
        }

    @staticmethod
    def from_json(data: dict) -> "Task":
        return Task(
            task_id=data["task_id"],
            question=data["question"],
            answer=data["answer"],
            category=data["category"],
            p0=Pose.from_json(data["p0"]),
            p_obs=Pose.from_json(data["p_obs"]),
            p_tar=Pose.from_json(data["p_tar"]),
            world_ref=data.get("world_ref", ""),
        )


def save_tasks(tasks: list[Task], path: str | Path) -> None:
    Path(path).write_text(json.dumps({"tasks": [t.to_json() for t in tasks]}, indent=1, sort_keys=True))


def load_tasks(path: str | Path) -> list[Task]:
    data = json.loads(Path(path).read_text())
    return [Task.from_json(t) for t in data["tasks"]]


@dataclass(frozen=True)
class MetricRow:
    task_id: str
    agent_name: str
    qaa_score: int
    ne_m: float
    mts: int
    category: str
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if not (1 <= self.qaa_score <= 5):
            raise ValueError("qaa_score must be in 1..5")
        if self.ne_m < 0 or self.mts < 0:
            raise ValueError("ne and mts must be non-negative")

    def to_json(self) -> dict:
        return {
            "task_id": self.task_id,
            "agent_name": self.agent_name,
            "qaa_score": self.qaa_score,
            "ne_m": self.ne_m,
            "mts": self.mts,
            "category": self.category,
            "flags": list(self.flags),
        }

    @staticmethod
    def from_json(data: dict) -> "MetricRow":
        return MetricRow(
            task_id=data["task_id"],
            agent_name=data["agent_name"],
            qaa_score=int(data["qaa_score"]),
            ne_m=float(data["ne_m"]),
            mts=int(data["mts"]),
            category=data.get("category", ""),
            flags=tuple(data.get("flags", [])),
        )


def write_results(rows: list[MetricRow], path: str | Path) -> None:
    rows = sorted(rows, key=lambda r: (r.agent_name, r.task_id))
    lines = [json.dumps(r.to_json(), sort_keys=True, separators=(",", ":")) for r in rows]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_results(path: str | Path) -> list[MetricRow]:
    return [
        MetricRow.from_json(json.loads(line))
        for line in Path(path).read_text().splitlines()
        if line.strip()
    ]


# --- task generation ----------------------------------------------------------

def relation_region_rect(footprint: Rect, relation: str, depth_m: float, margin_m: float) -> Rect:
    """World-space rectangle on one side of a footprint (same shape the
    agent's map-level region query uses)."""
    if relation == "west":
        return Rect(footprint.x_min - depth_m, footprint.x_min, footprint.y_min - margin_m, footprint.y_max + margin_m)
    if relation == "east":
        return Rect(footprint.x_max, footprint.x_max + depth_m, footprint.y_min - margin_m, footprint.y_max + margin_m)
    if relation == "north":
        return Rect(footprint.x_min - margin_m, footprint.x_max + margin_m, footprint.y_max, footprint.y_max + depth_m)
    if relation == "south":
        return Rect(footprint.x_min - margin_m, footprint.x_max + margin_m, footprint.y_min - depth_m, footprint.y_min)
    raise ValueError(f"bad relation: {relation}")


def pose_is_collision_free(world: WorldModel, x: float, y: float, z: float) -> bool:
    if not world.bounds.contains(x, y):
        return False
    for ent in world.entities:
        if z < ent.height and ent.footprint.inflate(AGENT_CLEARANCE_M).contains(x, y):
            return False
    return True


def unique_relation_for(world: WorldModel, target: Entity, landmark: Entity, depth_m: float, margin_m: float) -> Optional[str]:
    """Cardinal relation placing the target alone among its class, if any."""
    tx, ty = target.footprint.center()
    same_class = [e for e in world.entities if e.class_label == target.class_label]
    for relation in RELATION_ORDER:
        region = relation_region_rect(landmark.footprint, relation, depth_m, margin_m)
        if not region.contains(tx, ty):
            continue
        others = [
            e for e in same_class if e.id != target.id and region.contains(*e.footprint.center())
        ]
        if not others:
            return relation
    return None


def _nearest_landmark(world: WorldModel, target: Entity) -> Optional[Entity]:
    tx, ty = target.footprint.center()
    best = None
    best_d = None
    for ent in sorted(world.entities, key=lambda e: e.id):
        if ent.class_label not in LANDMARK_CLASSES:
            continue
        ex, ey = ent.footprint.center()
        d = math.hypot(ex - tx, ey - ty)
        if best_d is None or d < best_d:
            best, best_d = ent, d
    return best


def generate_tasks(
    world: WorldModel,
    n: int,
    seed: int,
    config: Config | None = None,
    categories: list[str] | None = None,
    world_ref: str = "",
) -> list[Task]:
    """Build n templated tasks with brute-force-verified unique relations.

    Candidate pools are computed per category; categories with no viable
    (target, landmark, relation) triple are skipped, and generation fails
    only when every requested category is empty.
    """
    config = config or Config()
    rng = random.Random(seed)
    depth = config.magnitudes.region_depth_m
    margin = config.magnitudes.region_margin_m
    altitude = config.agent_altitude_m
    wanted = list(categories) if categories else list(CATEGORIES)

    pools: dict[str, list[tuple[Entity, Entity, str]]] = {}
    for category in wanted:
        attr = CATEGORY_ATTRIBUTE[category]
        pool = []
        for ent in sorted(world.entities, key=lambda e: e.id):
            if ent.class_label in LANDMARK_CLASSES or attr not in ent.attributes:
                continue
            landmark = _nearest_landmark(world, ent)
            if landmark is None:
                continue
            relation = unique_relation_for(world, ent, landmark, depth, margin)
            if relation is None:
                continue
            pool.append((ent, landmark, relation))
        pools[category] = pool

    usable = [c for c in wanted if pools[c]]
    if not usable:
        raise TaskGenerationError(wanted)

    tasks: list[Task] = []
    counters = {c: 0 for c in usable}
    attempts = 0
    while len(tasks) < n and attempts < n * 20:
        attempts += 1
        category = usable[len(tasks) % len(usable)]
        pool = pools[category]
        target, landmark, relation = pool[counters[category] % len(pool)]
        counters[category] += 1
        tx, ty = target.footprint.center()
        p_tar = Pose(tx, ty, altitude, 0.0)

        p0 = None
        for _ in range(200):
            r = rng.uniform(25.0, 90.0)
            theta = rng.uniform(0.0, 2.0 * math.pi)
            x = tx + r * math.cos(theta)
            y = ty + r * math.sin(theta)
            if pose_is_collision_free(world, x, y, altitude):
                p0 = Pose(x, y, altitude, float(rng.randrange(0, 360, 30)))
                break
        if p0 is None:
            continue

        lx, ly = landmark.footprint.center()
        away = math.atan2(tx - lx, ty - ly)
        p_obs = None
        for dist in (15.0, 20.0, 25.0, 30.0, 40.0):
            x = tx + dist * math.sin(away)
            y = ty + dist * math.cos(away)
            if pose_is_collision_free(world, x, y, altitude):
                yaw = math.degrees(math.atan2(tx - x, ty - y)) % 360.0
                p_obs = Pose(x, y, altitude, yaw)
                break
        if p_obs is None:
            p_obs = p0

        tasks.append(
            Task(
                task_id=f"t{len(tasks):03d}",
                question=render_question(category, target.class_label, relation, landmark.id),
                answer=target.attributes[CATEGORY_ATTRIBUTE[category]],
                category=category,
                p0=p0,
                p_obs=p_obs,
                p_tar=p_tar,
                world_ref=world_ref,
            )
        )
    return tasks


# --- baselines -----------------------------------------------------------------

def _camera(config: Config) -> CameraModel:
    return CameraModel(
        config.camera.width, config.camera.height, config.camera.hfov_deg, config.camera.max_range_m
    )


def _final_answer(gateway: Gateway, question: str, payload) -> str:
    request = ModelRequest(
        role="answerer",
        template_id="answerer",
        variables={"question": question, "collected": "[]"},
        image_payload=payload,
    )
    try:
        return gateway.complete(request).strip()
    except GatewayError:
        return "unknown"


def _observation_payload(config: Config, obs, world: WorldModel):
    if config.backend.kind == "http":
        return semantic_png_bytes(obs)
    return image_summary(obs, world, config.perception.min_segment_pixels)


def run_re(task: Task, world: WorldModel, gateway: Gateway, config: Config, seed: int) -> EpisodeRecord:
    """Random exploration: uniform draws among forward/left/right/stop."""
    rng = random.Random(seed)
    camera = _camera(config)
    mag = config.magnitudes
    record = EpisodeRecord(task_id=task.task_id, agent="re", category=task.category)
    pose = task.p0
    time = 0
    stopped = False
    for _ in range(config.budgets.nav_explore_steps):
        name = rng.choice(("MoveForward", "TurnLeft", "TurnRight", "Stop"))
        if name == "Stop":
            stopped = True
            break
        if name == "MoveForward":
            action = Move("forward", mag.baseline_move_m)
        else:
            action = Turn("left" if name == "TurnLeft" else "right", mag.baseline_turn_deg)
        pose = apply_action(world, pose, action)
        time += 1
        record.steps.append(StepLog(time, pose, action, None))
    obs = render(world, pose, camera)
    record.observation_poses.append(pose)
    answer = _final_answer(gateway, task.question, _observation_payload(config, obs, world))
    if stopped:
        time += 1
        record.steps.append(StepLog(time, pose, Stop(answer), None))
    record.answer = answer
    record.final_pose = pose
    return record


def frontier_scan(occupancy: np.ndarray) -> set[tuple[int, int]]:
    """Definitional frontier set: Free cells 4-adjacent to an Unknown cell."""
    free = occupancy == FREE
    unknown = occupancy == UNKNOWN
    near_unknown = np.zeros_like(free)
    near_unknown[:-1, :] |= unknown[1:, :]
    near_unknown[1:, :] |= unknown[:-1, :]
    near_unknown[:, :-1] |= unknown[:, 1:]
    near_unknown[:, 1:] |= unknown[:, :-1]
    result = free & near_unknown
    return {(int(i), int(j)) for i, j in np.argwhere(result)}


class FrontierTracker:
    """Incrementally maintained frontier set."""

    def __init__(self, occupancy: np.ndarray):
        self._cells = frontier_scan(occupancy)

    @staticmethod
    def _is_frontier(occ: np.ndarray, i: int, j: int) -> bool:
        if occ[i, j] != FREE:
            return False
        n_i, n_j = occ.shape
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            a, b = i + di, j + dj
            if 0 <= a < n_i and 0 <= b < n_j and occ[a, b] == UNKNOWN:
                return True
        return False

    def update(self, occ: np.ndarray, changed: list[tuple[int, int]]) -> None:
        n_i, n_j = occ.shape
        dirty = set()
        for i, j in changed:
            dirty.add((i, j))
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                a, b = i + di, j + dj
                if 0 <= a < n_i and 0 <= b < n_j:
                    dirty.add((a, b))
        for cell in dirty:
            if self._is_frontier(occ, *cell):
                self._cells.add(cell)
            else:
                self._cells.discard(cell)

    @property
    def cells(self) -> frozenset[tuple[int, int]]:
        return frozenset(self._cells)

    def sorted_cells(self) -> list[tuple[int, int]]:
        return sorted(self._cells)


def run_fbe(
    task: Task,
    world: WorldModel,
    gateway: Gateway,
    config: Config,
    seed: int,
    frontier_probe: Optional[Callable[[frozenset, np.ndarray], None]] = None,
) -> EpisodeRecord:
    """Frontier-based exploration with a model-driven stop decision."""
    rng = random.Random(seed)
    camera = _camera(config)
    mag = config.magnitudes
    cap = config.budgets.nav_explore_steps
    record = EpisodeRecord(task_id=task.task_id, agent="fbe", category=task.category)
    pose = task.p0
    spec = GridSpec.centered_on(pose, config.grid.side_m, config.grid.resolution_m)
    cmap = new_map(spec)
    tracker = FrontierTracker(cmap.occupancy)
    time = 0

    def observe():
        nonlocal cmap
        obs = render(world, pose, camera)
        prev = cmap.occupancy
        cmap = update_occupancy(cmap, obs, pose, camera)
        changed = [(int(i), int(j)) for i, j in np.argwhere(prev != cmap.occupancy)]
        tracker.update(cmap.occupancy, changed)
        if frontier_probe is not None:
            frontier_probe(tracker.cells, cmap.occupancy)
        record.observation_poses.append(pose)
        record.overlays.setdefault("frontiers", {})[str(len(record.steps))] = [
            list(c) for c in tracker.sorted_cells()
        ]
        return obs

    def execute(action):
        nonlocal pose, time
        pose = apply_action(world, pose, action)
        time += 1
        record.steps.append(StepLog(time, pose, action, None))

    obs = observe()
    while time < cap:
        stop_request = ModelRequest(
            role="stopper",
            template_id="stopper",
            variables={"question": task.question},
            image_payload=_observation_payload(config, obs, world),
        )
        try:
            reply = gateway.complete(stop_request)
        except GatewayError:
            break
        if reply.strip().lower().startswith("yes"):
            break
        frontiers = tracker.sorted_cells()
        if not frontiers:
            break
        path = None
        pool = list(frontiers)
        agent_cell = spec.cell_of(pose.x, pose.y)
        while pool:
            pick = pool.pop(rng.randrange(len(pool)))
            candidate = astar(cmap.occupancy, agent_cell, pick)
            if candidate is not None and len(candidate) >= 2:
                path = candidate
                break
        if path is None:
            break
        chunk = truncate_path(path, mag.nav_step_m, spec.resolution)
        for _, last_cell in collinear_runs(chunk):
            cx, cy = spec.cell_center(*last_cell)
            dx, dy = cx - pose.x, cy - pose.y
            dist = math.hypot(dx, dy)
            if dist < 1e-9:
                continue
            yaw = math.degrees(math.atan2(dx, dy)) % 360.0
            delta = yaw_to_heading_delta(pose.yaw, yaw)
            if abs(delta) > 1e-9:
                if time >= cap:
                    break
                execute(Turn("right" if delta > 0 else "left", abs(delta)))
            if time >= cap:
                break
            execute(Move("forward", min(dist, mag.nav_step_m)))
        obs = observe()

    answer = _final_answer(gateway, task.question, _observation_payload(config, obs, world))
    record.answer = answer
    record.final_pose = pose
    return record


# --- scoring -------------------------------------------------------------------

def score_qaa(answer: str, ground_truth: str, question: str, gateway: Gateway) -> tuple[int, list[str]]:
    """Judge an answer on the 1..5 scale; never raises."""
    request = ModelRequest(
        role="judge",
        template_id="judge",
        variables={"question": question, "answer": answer, "ground_truth": ground_truth},
    )
    try:
        reply = gateway.complete(request)
    except GatewayError:
        return 1, ["judge_error"]
    try:
        return parse_score(reply), []
    except ScoreParseError:
        return 1, ["judge_parse_failed"]


def navigation_error(final_pose: Pose, p_tar: Pose, mode: str = "3d") -> float:
    dx = final_pose.x - p_tar.x
    dy = final_pose.y - p_tar.y
    if mode == "2d":
        return math.hypot(dx, dy)
    return math.sqrt(dx * dx + dy * dy + (final_pose.z - p_tar.z) ** 2)


def compute_metrics(record: EpisodeRecord, task: Task, gateway: Gateway, ne_mode: str = "3d") -> MetricRow:
    if record.final_pose is None:
        raise ValueError("record has no final pose")
    qaa, flags = score_qaa(record.answer, task.answer, task.question, gateway)
    return MetricRow(
        task_id=task.task_id,
        agent_name=record.agent,
        qaa_score=qaa,
        ne_m=navigation_error(record.final_pose, task.p_tar, ne_mode),
        mts=len(record.steps),
        category=task.category,
        flags=tuple(flags),
    )


# --- aggregation ----------------------------------------------------------------

def _stats(rows: list[MetricRow]) -> dict:
    qaa = [float(r.qaa_score) for r in rows]
    ne = [r.ne_m for r in rows]
    mts = [float(r.mts) for r in rows]
    return {
        "n": len(rows),
        "qaa_mean": mean(qaa),
        "qaa_std": pstdev(qaa),
        "ne_mean": mean(ne),
        "ne_std": pstdev(ne),
        "mts_mean": mean(mts),
        "mts_std": pstdev(mts),
    }


def aggregate(rows: list[MetricRow]) -> dict:
    """Per-agent mean and population std for each metric, overall and by category."""
    if not rows:
        raise ValueError("no rows to aggregate")
    agents = sorted({r.agent_name for r in rows})
    report = {"overall": {}, "per_category": {}}
    for agent in agents:
        report["overall"][agent] = _stats([r for r in rows if r.agent_name == agent])
    for category in sorted({r.category for r in rows}):
        cat_rows = [r for r in rows if r.category == category]
        report["per_category"][category] = {
            agent: _stats([r for r in cat_rows if r.agent_name == agent])
            for agent in sorted({r.agent_name for r in cat_rows})
        }
    return report


def _fmt(mean_v: float, std_v: float) -> str:
    return f"{mean_v:.2f}±{std_v:.2f}"


def _table(stats_by_agent: dict) -> list[str]:
    lines = [
        "| agent | n | QAA (1-5) | NE (m) | MTS |",
        "|---|---|---|---|---|",
    ]
    for agent, s in sorted(stats_by_agent.items()):
        lines.append(
            f"| {agent} | {s['n']} | {_fmt(s['qaa_mean'], s['qaa_std'])} "
            f"| {_fmt(s['ne_mean'], s['ne_std'])} | {_fmt(s['mts_mean'], s['mts_std'])} |"
        )
    return lines


def report_markdown(report: dict) -> str:
    lines = ["# Evaluation report", "", "## Overall", ""]
    lines.extend(_table(report["overall"]))
    lines.append("")
    lines.append("## By category")
    for category, stats_by_agent in sorted(report["per_category"].items()):
        lines.append("")
        lines.append(f"### {category}")
        lines.append("")
        lines.extend(_table(stats_by_agent))
    lines.append("")
    return "\n".join(lines)
