"""HTTP service backing the human-operated console and the replay view.

Human sessions follow the restricted protocol: MoveForward with an integer
distance of 1..10 meters, 30-degree turns, and Stop with a non-empty
answer. The server owns all the rules; it enforces the 50-step budget,
freezes finished sessions, scores them immediately, and appends one result
row per finalized session to the human results file.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from .config import Config
from .evaluation import Task, compute_metrics
from .gateway import Gateway, ScriptedBackend
from .manager import EpisodeRecord, StepLog
from .render import render, semantic_png_bytes
from .scripted import default_rules
from .world import CameraModel, Move, Pose, Stop, Turn, WorldModel, apply_action

SESSION_IDLE_EXPIRY_S = 30 * 60
HUMAN_AGENT = "h-eqa"
NAV_BUDGET = 50


class ApiError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


@dataclass
class SessionState:
    session_id: str
    task: Task
    pose: Pose
    steps_used: int = 0
    done: bool = False
    answer: str = ""
    steps: list[StepLog] = field(default_factory=list)
    last_touch: float = field(default_factory=time.time)
    lock: threading.Lock = field(default_factory=threading.Lock)


def create_app(
    world: WorldModel,
    tasks: list[Task],
    config: Config,
    records_dir: Path,
    results_path: Path,
    frontend_dir: Optional[Path] = None,
) -> FastAPI:
    app = FastAPI(title="eqalab console")
    camera = CameraModel(
        config.camera.width, config.camera.height, config.camera.hfov_deg, config.camera.max_range_m
    )
    gateway = Gateway(ScriptedBackend(default_rules(config.perception)))
    task_by_id = {t.task_id: t for t in tasks}
    sessions: dict[str, SessionState] = {}
    sessions_lock = threading.Lock()
    results_lock = threading.Lock()
    records_dir.mkdir(parents=True, exist_ok=True)
    results_path.parent.mkdir(parents=True, exist_ok=True)

    @app.exception_handler(ApiError)
    async def api_error_handler(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"code": exc.status, "message": exc.message})

    def sweep_expired() -> None:
        now = time.time()
        with sessions_lock:
            dead = [sid for sid, s in sessions.items() if now - s.last_touch > SESSION_IDLE_EXPIRY_S]
            for sid in dead:
                del sessions[sid]

    def get_session(session_id: str) -> SessionState:
        sweep_expired()
        with sessions_lock:
            session = sessions.get(session_id)
        if session is None:
            raise ApiError(404, f"unknown session: {session_id}")
        session.last_touch = time.time()
        return session

    def session_view(session: SessionState) -> dict:
        return {
            "session_id": session.session_id,
            "task_id": session.task.task_id,
            "question": session.task.question,
            "pose": session.pose.to_json(),
            "steps_used": session.steps_used,
            "budget_remaining": NAV_BUDGET - session.steps_used,
            "done": session.done,
            "answer": session.answer,
            "view_url": f"/api/sessions/{session.session_id}/view.png",
        }

    def finalize(session: SessionState, answer: str) -> dict:
        session.done = True
        session.answer = answer
        record = EpisodeRecord(
            task_id=session.task.task_id,
            agent=HUMAN_AGENT,
            category=session.task.category,
            steps=session.steps,
            answer=answer,
            final_pose=session.pose,
        )
        record.save(records_dir / f"{HUMAN_AGENT}_{session.session_id}.json")
        row = compute_metrics(record, session.task, gateway, config.ne_mode)
        with results_lock:
            with results_path.open("a") as fh:
                fh.write(json.dumps(row.to_json(), sort_keys=True, separators=(",", ":")) + "\n")
        return row.to_json()

    @app.get("/api/tasks")
    def list_tasks():
        return [
            {"task_id": t.task_id, "question": t.question, "category": t.category} for t in tasks
        ]

    @app.post("/api/sessions")
    async def start_session(request: Request):
        body = await request.json()
        task_id = body.get("task_id")
        task = task_by_id.get(task_id)
        if task is None:
            raise ApiError(404, f"unknown task: {task_id}")
        session = SessionState(session_id=uuid.uuid4().hex[:12], task=task, pose=task.p0)
        with sessions_lock:
            sessions[session.session_id] = session
        return session_view(session)

    @app.post("/api/sessions/{session_id}/action")
    async def act(session_id: str, request: Request):
        session = get_session(session_id)
        body = await request.json()
        with session.lock:
            if session.done:
                raise ApiError(409, "session already finished")
            kind = body.get("type")
            if kind == "Stop":
                answer = (body.get("answer") or "").strip()
                if not answer:
                    raise ApiError(400, "Stop requires a non-empty answer")
                row = finalize(session, answer)
                view = session_view(session)
                view["row"] = row
                return view
            if kind not in ("MoveForward", "TurnLeft", "TurnRight"):
                raise ApiError(400, f"action not allowed: {kind}")
            if session.steps_used >= NAV_BUDGET:
                raise ApiError(400, "step budget exhausted; only Stop is allowed")
            if kind == "MoveForward":
                distance = body.get("distance")
                if isinstance(distance, bool) or not isinstance(distance, (int, float)):
                    raise ApiError(400, "MoveForward requires an integer distance")
                if float(distance) != int(distance) or not (1 <= int(distance) <= 10):
                    raise ApiError(400, "distance must be an integer between 1 and 10")
                action = Move("forward", float(int(distance)))
            else:
                action = Turn("left" if kind == "TurnLeft" else "right", config.magnitudes.baseline_turn_deg)
            session.pose = apply_action(world, session.pose, action)
            session.steps_used += 1
            session.steps.append(StepLog(session.steps_used, session.pose, action, None))
            return session_view(session)

    @app.get("/api/sessions/{session_id}")
    def session_info(session_id: str):
        return session_view(get_session(session_id))

    @app.get("/api/sessions/{session_id}/view.png")
    def view_png(session_id: str):
        session = get_session(session_id)
        obs = render(world, session.pose, camera)
        return Response(content=semantic_png_bytes(obs), media_type="image/png")

    @app.get("/api/episodes")
    def list_episodes():
        return sorted(p.stem for p in records_dir.glob("*.json"))

    @app.get("/api/episodes/{episode_id}")
    def episode(episode_id: str):
        path = records_dir / f"{episode_id}.json"
        if not path.exists():
            raise ApiError(404, f"unknown episode: {episode_id}")
        return json.loads(path.read_text())

    @app.get("/api/episodes/{episode_id}/view.png")
    def episode_view(episode_id: str, step: int = 0):
        """First-person render along a recorded trajectory; step 0 is the
        task's initial pose, step k the pose after the k-th action."""
        path = records_dir / f"{episode_id}.json"
        if not path.exists():
            raise ApiError(404, f"unknown episode: {episode_id}")
        record = EpisodeRecord.from_json(json.loads(path.read_text()))
        if step <= 0:
            task = task_by_id.get(record.task_id)
            if task is not None:
                pose = task.p0
            elif record.steps:
                pose = record.steps[0].pose
            else:
                pose = record.final_pose
        else:
            idx = min(step, len(record.steps)) - 1
            pose = record.steps[idx].pose if record.steps else record.final_pose
        if pose is None:
            raise ApiError(404, f"episode {episode_id} has no poses")
        obs = render(world, pose, camera)
        return Response(content=semantic_png_bytes(obs), media_type="image/png")

    if frontend_dir is not None and frontend_dir.exists():
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="console")

    return app
