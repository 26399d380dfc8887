"""Episode orchestration: memory, budgets, records, and the control loop.

One episode owns one cognitive map and one record. The context object
threads the simulator, gateway, map, and budgets through the actors; every
executed action is appended to the record and charged to exactly one budget
pool, and every observation is folded into the map before anything else
sees it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .config import Config
from .gateway import Gateway, GatewayError, ModelRequest
from .mapping import (
    CognitiveMap,
    GridSpec,
    construct,
    map_to_json,
    merge_detailed,
    new_map,
    region_of,
    segments_from_observation,
    update_occupancy,
)
from .planner import (
    Collection,
    Exploration,
    Navigation,
    ParsedQuestion,
    Plan,
    PlanningError,
    SubTask,
    formulate_plan,
    parse_question,
    subtask_to_json,
)
from .render import image_summary, render, semantic_png_bytes
from .world import (
    CameraModel,
    Observation,
    Pose,
    SimAction,
    Stop,
    WorldModel,
    action_from_json,
    action_to_json,
    apply_action,
)

NAV_EXPLORE = "nav_explore"
COLLECTION = "collection"

DONE = "done"
FAILED = "failed"
BUDGET_EXHAUSTED = "budget_exhausted"


class BudgetExhausted(RuntimeError):
    def __init__(self, pool: str):
        super().__init__(f"budget pool exhausted: {pool}")
        self.pool = pool


@dataclass
class EpisodeBudget:
    nav_explore_max: int = 50
    collection_max: int = 10
    nav_explore_used: int = 0
    collection_used: int = 0

    def remaining(self, pool: str) -> int:
        if pool == NAV_EXPLORE:
            return self.nav_explore_max - self.nav_explore_used
        if pool == COLLECTION:
            return self.collection_max - self.collection_used
        raise ValueError(f"unknown budget pool: {pool}")

    def charge(self, pool: str) -> None:
        if self.remaining(pool) <= 0:
            raise BudgetExhausted(pool)
        if pool == NAV_EXPLORE:
            self.nav_explore_used += 1
        else:
            self.collection_used += 1


@dataclass
class HistoryEntry:
    step_index: int
    sub_task: dict
    actions_used: int
    outcome: str

    def to_json(self) -> dict:
        return {
            "step_index": self.step_index,
            "sub_task": self.sub_task,
            "actions_used": self.actions_used,
            "outcome": self.outcome,
        }


@dataclass
class Memory:
    req_info: dict[str, str] = field(default_factory=dict)
    object_info: dict[str, int] = field(default_factory=dict)
    history: list[HistoryEntry] = field(default_factory=list)


def bind_object(memory: Memory, cmap: CognitiveMap, ref_id: str, map_id: int) -> None:
    """Bind a question reference to a map object; rebinds replace the old id."""
    resolved = cmap.resolve(map_id)
    if resolved not in cmap.objects:
        raise ValueError(f"unknown map id: {map_id}")
    memory.object_info[ref_id] = resolved


@dataclass
class StepLog:
    time_step: int
    pose: Pose
    action: SimAction
    subtask_index: Optional[int]

    def to_json(self) -> dict:
        return {
            "time_step": self.time_step,
            "pose": self.pose.to_json(),
            "action": action_to_json(self.action),
            "subtask_index": self.subtask_index,
        }

    @staticmethod
    def from_json(data: dict) -> "StepLog":
        return StepLog(
            int(data["time_step"]),
            Pose.from_json(data["pose"]),
            action_from_json(data["action"]),
            data.get("subtask_index"),
        )


@dataclass
class EpisodeRecord:
    task_id: str
    agent: str
    category: str = ""
    steps: list[StepLog] = field(default_factory=list)
    answer: str = ""
    final_pose: Optional[Pose] = None
    plan: Optional[Plan] = None
    history: list[HistoryEntry] = field(default_factory=list)
    observation_poses: list[Pose] = field(default_factory=list)
    overlays: dict = field(default_factory=dict)
    map_snapshot: Optional[dict] = None
    budget: Optional[dict] = None
    prompt_templates: list[str] = field(default_factory=list)
    error: str = ""

    def to_json(self) -> dict:
        return {
            "task_id": self.task_id,
            "agent": self.agent,
            "category": self.category,
            "steps": [s.to_json() for s in self.steps],
            "answer": self.answer,
            "final_pose": self.final_pose.to_json() if self.final_pose else None,
            "plan": self.plan.to_json() if self.plan else None,
            "history": [h.to_json() for h in self.history],
            "observation_poses": [p.to_json() for p in self.observation_poses],
            "overlays": self.overlays,
            "map_snapshot": self.map_snapshot,
            "budget": self.budget,
            "prompt_templates": self.prompt_templates,
            "error": self.error,
        }

    @staticmethod
    def from_json(data: dict) -> "EpisodeRecord":
        rec = EpisodeRecord(task_id=data["task_id"], agent=data["agent"], category=data.get("category", ""))
        rec.steps = [StepLog.from_json(s) for s in data["steps"]]
        rec.answer = data.get("answer", "")
        rec.final_pose = Pose.from_json(data["final_pose"]) if data.get("final_pose") else None
        rec.plan = Plan.from_json(data["plan"]) if data.get("plan") else None
        rec.history = [
            HistoryEntry(h["step_index"], h["sub_task"], h["actions_used"], h["outcome"])
            for h in data.get("history", [])
        ]
        rec.observation_poses = [Pose.from_json(p) for p in data.get("observation_poses", [])]
        rec.overlays = data.get("overlays", {})
        rec.map_snapshot = data.get("map_snapshot")
        rec.budget = data.get("budget")
        rec.prompt_templates = data.get("prompt_templates", [])
        rec.error = data.get("error", "")
        return rec

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True, indent=1))

    @staticmethod
    def load(path: str | Path) -> "EpisodeRecord":
        return EpisodeRecord.from_json(json.loads(Path(path).read_text()))


@dataclass
class ObservationResult:
    obs: Observation
    summary: list[dict]
    added_map_ids: list[int]
    added_source_ids: list[str]


class EpisodeContext:
    """Mutable per-episode state shared by the manager and the actors."""

    def __init__(
        self,
        world: WorldModel,
        gateway: Gateway,
        config: Config,
        start_pose: Pose,
        task_id: str,
        agent_name: str,
        category: str = "",
    ):
        self.world = world
        self.gateway = gateway
        self.config = config
        self.camera = CameraModel(
            config.camera.width, config.camera.height, config.camera.hfov_deg, config.camera.max_range_m
        )
        self.start_pose = start_pose
        self.pose = start_pose
        self.map = new_map(GridSpec.centered_on(start_pose, config.grid.side_m, config.grid.resolution_m))
        self.budget = EpisodeBudget(config.budgets.nav_explore_steps, config.budgets.collection_steps)
        self.record = EpisodeRecord(task_id=task_id, agent=agent_name, category=category)
        self.time = 0
        self.current_subtask: Optional[int] = None
        self._transcript_start = len(gateway.transcript)

    def agent_cell(self) -> tuple[int, int]:
        return self.map.spec.cell_of(self.pose.x, self.pose.y)

    def execute(self, action: SimAction, pool: str) -> None:
        """Run one action: charge its pool, step the sim, log the step."""
        self.budget.charge(pool)
        self.pose = apply_action(self.world, self.pose, action)
        self.time += 1
        self.record.steps.append(StepLog(self.time, self.pose, action, self.current_subtask))

    def observe(self) -> ObservationResult:
        """Render at the current pose and fold the observation into the map."""
        obs = render(self.world, self.pose, self.camera)
        segments = segments_from_observation(obs, self.world, self.config.perception.min_segment_pixels)
        added = construct(
            obs,
            self.pose,
            self.camera,
            self.map.spec,
            segments,
            self.config.perception.min_points_per_cell,
        )
        self.map, added_ids = merge_detailed(self.map, added)
        self.map = update_occupancy(self.map, obs, self.pose, self.camera)
        self.record.observation_poses.append(self.pose)
        summary = image_summary(obs, self.world, self.config.perception.min_segment_pixels)
        return ObservationResult(
            obs=obs,
            summary=summary,
            added_map_ids=added_ids,
            added_source_ids=[o.source_id for o in added.objects],
        )

    def image_payload(self, result: ObservationResult):
        if self.config.backend.kind == "http":
            return semantic_png_bytes(result.obs)
        return result.summary


def next_subtask_index(plan: Plan, memory: Memory, retries: int = 1) -> Optional[int]:
    """First unfinished plan step, allowing `retries` repeats after failures."""
    for idx in range(len(plan.steps)):
        entries = [h for h in memory.history if h.step_index == idx]
        if any(e.outcome == DONE for e in entries):
            continue
        if any(e.outcome == BUDGET_EXHAUSTED for e in entries):
            continue
        if len(entries) <= retries:
            return idx
    return None


def next_subtask(plan: Plan, memory: Memory, retries: int = 1) -> Optional[SubTask]:
    idx = next_subtask_index(plan, memory, retries)
    return None if idx is None else plan.steps[idx]


def generate_answer(question: str, memory: Memory, gateway: Gateway) -> str:
    """Answer from collected information; the model is consulted even when
    nothing was collected, so it may still answer from prior knowledge."""
    collected = [{"req_id": k, "value": memory.req_info[k]} for k in sorted(memory.req_info)]
    request = ModelRequest(
        role="answerer",
        template_id="answerer",
        variables={"question": question, "collected": json.dumps(collected, sort_keys=True)},
    )
    try:
        return gateway.complete(request).strip()
    except GatewayError:
        return "unknown"


def _dispatch(ctx: EpisodeContext, memory: Memory, plan: Plan, step: SubTask) -> str:
    from .actor import collect, explore, navigate

    parsed = plan.parsed
    cfg = ctx.config.magnitudes
    if isinstance(step, Navigation):
        map_id = memory.object_info.get(step.landmark_ref)
        if map_id is None:
            return FAILED
        return navigate(ctx, map_id, step.relation)

    if isinstance(step, Exploration):
        target = parsed.object(step.target_ref)
        if step.landmark_ref == "agent":
            region = None
        else:
            map_id = memory.object_info.get(step.landmark_ref)
            if map_id is None:
                return FAILED
            landmark = ctx.map.get(map_id)
            if landmark is None or step.relation is None:
                return FAILED
            region = region_of(ctx.map, landmark, step.relation, cfg.region_depth_m, cfg.region_margin_m)
        found = explore(ctx, region, step.target_ref, target.class_label, target.attributes)
        if found is None:
            return FAILED
        bind_object(memory, ctx.map, step.target_ref, found)
        return DONE

    if isinstance(step, Collection):
        map_id = memory.object_info.get(step.target_ref)
        if map_id is None or ctx.map.get(map_id) is None:
            return FAILED
        req = next(r for r in parsed.requirements if r.req_id == step.req_id)
        target = parsed.object(step.target_ref)
        fragment = collect(ctx, req.description, step.target_ref, target.class_label, target.attributes)
        if fragment:
            memory.req_info[step.req_id] = fragment
            return DONE
        return FAILED
    raise TypeError(f"not a sub-task: {step!r}")


def _finalize(ctx: EpisodeContext, memory: Memory, answer: str) -> EpisodeRecord:
    record = ctx.record
    record.answer = answer
    ctx.time += 1
    # The terminal stop is manager bookkeeping, outside both budget pools.
    record.steps.append(StepLog(ctx.time, ctx.pose, Stop(answer), None))
    record.final_pose = ctx.pose
    record.history = memory.history
    record.map_snapshot = map_to_json(ctx.map)
    episode_calls = ctx.gateway.transcript[ctx._transcript_start :]
    record.prompt_templates = sorted({e["template_id"] for e in episode_calls})
    record.budget = {
        "nav_explore_used": ctx.budget.nav_explore_used,
        "nav_explore_max": ctx.budget.nav_explore_max,
        "collection_used": ctx.budget.collection_used,
        "collection_max": ctx.budget.collection_max,
    }
    return record


def run_episode(task, world: WorldModel, gateway: Gateway, config: Config) -> EpisodeRecord:
    """Run the full hierarchical agent on one task; never raises.

    Planner or gateway failures end the episode with answer "unknown" and
    the error recorded; budget exhaustion ends the affected sub-task and the
    episode still produces an answer from whatever was collected.
    """
    ctx = EpisodeContext(
        world, gateway, config, task.p0, task.task_id, "pma", getattr(task, "category", "")
    )
    memory = Memory()
    try:
        parsed: ParsedQuestion = parse_question(task.question, gateway)
        plan = formulate_plan(parsed, gateway)
    except (PlanningError, GatewayError) as exc:
        ctx.record.error = str(exc)
        return _finalize(ctx, memory, "unknown")

    ctx.record.plan = plan
    ctx.observe()
    while True:
        idx = next_subtask_index(plan, memory, config.subtask_retries)
        if idx is None:
            break
        step = plan.steps[idx]
        ctx.current_subtask = idx
        start_time = ctx.time
        try:
            outcome = _dispatch(ctx, memory, plan, step)
        except BudgetExhausted:
            outcome = BUDGET_EXHAUSTED
        except GatewayError as exc:
            ctx.record.error = str(exc)
            outcome = FAILED
        ctx.current_subtask = None
        memory.history.append(HistoryEntry(idx, subtask_to_json(step), ctx.time - start_time, outcome))

    answer = generate_answer(task.question, memory, gateway)
    return _finalize(ctx, memory, answer)
