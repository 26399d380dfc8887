"""Command-line entry points.

Subcommands: gen-world, gen-tasks, run, score, report, replay, serve. The
scripted backend is the default so everything runs deterministically
without model access; pass a config file and --backend http for live runs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .citygen import build_demo_world
from .config import Config, desk_config, load_config
from .evaluation import (
    Task,
    aggregate,
    compute_metrics,
    generate_tasks,
    load_tasks,
    read_results,
    report_markdown,
    run_fbe,
    run_re,
    save_tasks,
    write_results,
)
from .gateway import Gateway, HttpBackend, ModelRequest, ReplayBackend, ScriptedBackend
from .manager import EpisodeRecord, StepLog, run_episode
from .render import image_summary, semantic_png_bytes, render
from .scripted import default_rules
from .world import CameraModel, Pose, Stop, load_world, save_world

AGENTS = ("pma", "re", "fbe", "blind", "vqa")


def task_seed(base_seed: int, task_id: str, agent: str) -> int:
    digest = hashlib.sha256(f"{base_seed}:{task_id}:{agent}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def build_gateway(kind: str, config: Config, transcript_path=None, replay_path=None) -> Gateway:
    if kind == "scripted":
        backend = ScriptedBackend(default_rules(config.perception))
    elif kind == "replay":
        if replay_path is None:
            raise ValueError("replay backend needs --transcript")
        backend = ReplayBackend.from_file(replay_path)
    elif kind == "http":
        backend = HttpBackend(config.backend)
    else:
        raise ValueError(f"unknown backend: {kind}")
    return Gateway(backend, transcript_path=transcript_path)


def _resolve_config(args, backend: str) -> Config:
    if getattr(args, "config", None):
        return load_config(args.config)
    # Live runs default to the full-scale camera/grid; scripted desk runs
    # use the small fast profile.
    cfg = Config() if backend == "http" else desk_config()
    from dataclasses import replace

    return replace(cfg, backend=replace(cfg.backend, kind=backend))


def _blind_record(task: Task, gateway: Gateway) -> EpisodeRecord:
    record = EpisodeRecord(task_id=task.task_id, agent="blind", category=task.category)
    request = ModelRequest(
        role="answerer", template_id="answerer", variables={"question": task.question, "collected": "[]"}
    )
    try:
        record.answer = gateway.complete(request).strip()
    except Exception:
        record.answer = "unknown"
    record.final_pose = task.p0
    record.steps.append(StepLog(1, task.p0, Stop(record.answer), None))
    return record


def _vqa_record(task: Task, world, gateway: Gateway, config: Config) -> EpisodeRecord:
    record = EpisodeRecord(task_id=task.task_id, agent="vqa", category=task.category)
    camera = CameraModel(
        config.camera.width, config.camera.height, config.camera.hfov_deg, config.camera.max_range_m
    )
    obs = render(world, task.p_obs, camera)
    payload = (
        semantic_png_bytes(obs)
        if config.backend.kind == "http"
        else image_summary(obs, world, config.perception.min_segment_pixels)
    )
    request = ModelRequest(
        role="answerer",
        template_id="answerer",
        variables={"question": task.question, "collected": "[]"},
        image_payload=payload,
    )
    try:
        record.answer = gateway.complete(request).strip()
    except Exception:
        record.answer = "unknown"
    record.final_pose = task.p_obs
    record.steps.append(StepLog(1, task.p_obs, Stop(record.answer), None))
    return record


def run_one_task(task: Task, world, agent: str, backend: str, config: Config, seed: int, out_dir: Path):
    transcripts = out_dir / "transcripts"
    transcripts.mkdir(parents=True, exist_ok=True)
    transcript_path = transcripts / f"{agent}_{task.task_id}.jsonl"
    transcript_path.unlink(missing_ok=True)
    gateway = build_gateway(backend, config, transcript_path=transcript_path)
    if agent == "pma":
        record = run_episode(task, world, gateway, config)
    elif agent == "re":
        record = run_re(task, world, gateway, config, task_seed(seed, task.task_id, agent))
    elif agent == "fbe":
        record = run_fbe(task, world, gateway, config, task_seed(seed, task.task_id, agent))
    elif agent == "blind":
        record = _blind_record(task, gateway)
    elif agent == "vqa":
        record = _vqa_record(task, world, gateway, config)
    else:
        raise ValueError(f"unknown agent: {agent}")
    records_dir = out_dir / "records"
    records_dir.mkdir(parents=True, exist_ok=True)
    record.save(records_dir / f"{agent}_{task.task_id}.json")
    row = compute_metrics(record, task, gateway, config.ne_mode)
    return record, row


def cmd_gen_world(args) -> int:
    world = build_demo_world(seed=args.seed, side=args.side)
    save_world(world, args.out)
    print(f"wrote {args.out}: {len(world.entities)} entities")
    return 0


def cmd_gen_tasks(args) -> int:
    world = load_world(args.world)
    config = _resolve_config(args, "scripted")
    tasks = generate_tasks(world, args.n, args.seed, config=config, world_ref=str(args.world))
    save_tasks(tasks, args.out)
    print(f"wrote {args.out}: {len(tasks)} tasks")
    return 0


def cmd_run(args) -> int:
    tasks = load_tasks(args.tasks)
    config = _resolve_config(args, args.backend)
    world_path = args.world or (tasks[0].world_ref if tasks else "")
    if not world_path:
        print("error: no world file (pass --world or set world_ref in tasks)", file=sys.stderr)
        return 1
    world = load_world(world_path)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    agents = args.agent.split(",")
    for agent in agents:
        if agent not in AGENTS:
            print(f"error: unknown agent {agent}", file=sys.stderr)
            return 2
    jobs = [(task, agent) for agent in agents for task in tasks]

    def work(job):
        task, agent = job
        return run_one_task(task, world, agent, args.backend, config, args.seed, out_dir)[1]

    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(work, jobs))
    else:
        rows = [work(job) for job in jobs]
    results_path = out_dir / "results.jsonl"
    write_results(rows, results_path)
    print(f"wrote {results_path}: {len(rows)} rows")
    return 0


def cmd_score(args) -> int:
    records_dir = Path(args.records)
    if not records_dir.exists():
        print(f"error: records directory not found: {records_dir}", file=sys.stderr)
        return 1
    try:
        tasks = {t.task_id: t for t in load_tasks(args.tasks)}
    except FileNotFoundError:
        print(f"error: tasks file not found: {args.tasks}", file=sys.stderr)
        return 1
    config = _resolve_config(args, args.backend)
    gateway = build_gateway(args.backend, config)
    rows = []
    for path in sorted(records_dir.glob("*.json")):
        record = EpisodeRecord.load(path)
        task = tasks.get(record.task_id)
        if task is None:
            print(f"warning: no task for record {path.name}", file=sys.stderr)
            continue
        rows.append(compute_metrics(record, task, gateway, config.ne_mode))
    write_results(rows, args.out)
    print(f"wrote {args.out}: {len(rows)} rows")
    return 0


def cmd_report(args) -> int:
    path = Path(args.results)
    if not path.exists():
        print(f"error: results file not found: {path}", file=sys.stderr)
        return 1
    rows = read_results(path)
    if not rows:
        print("error: no rows in results file", file=sys.stderr)
        return 1
    report = aggregate(rows)
    markdown = report_markdown(report)
    Path(args.out).write_text(markdown)
    if args.json:
        Path(args.json).write_text(json.dumps(report, indent=1, sort_keys=True))
    print(markdown)
    return 0


def cmd_replay(args) -> int:
    original = EpisodeRecord.load(args.record)
    tasks = {t.task_id: t for t in load_tasks(args.tasks)}
    task = tasks[original.task_id]
    config = _resolve_config(args, "scripted")
    world = load_world(args.world or task.world_ref)
    gateway = build_gateway("replay", config, replay_path=args.transcript)
    if original.agent != "pma":
        print(f"error: replay supports pma records, got {original.agent}", file=sys.stderr)
        return 2
    replayed = run_episode(task, world, gateway, config)
    if replayed.to_json() == original.to_json():
        print("replay: records identical")
        return 0
    print("replay: MISMATCH", file=sys.stderr)
    return 1


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    config = _resolve_config(args, "scripted")
    world = load_world(args.world)
    tasks = load_tasks(args.tasks)
    app = create_app(
        world,
        tasks,
        config,
        records_dir=Path(args.records),
        results_path=Path(args.results_out),
        frontend_dir=Path(args.frontend) if args.frontend else None,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eqalab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-world", help="generate a synthetic city world")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--side", type=float, default=400.0)
    p.set_defaults(func=cmd_gen_world)

    p = sub.add_parser("gen-tasks", help="generate tasks for a world")
    p.add_argument("--world", required=True)
    p.add_argument("--n", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_gen_tasks)

    p = sub.add_parser("run", help="run agents over a task file")
    p.add_argument("--agent", default="pma", help="comma-separated: pma,re,fbe,blind,vqa")
    p.add_argument("--backend", default="scripted", choices=["scripted", "replay", "http"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tasks", required=True)
    p.add_argument("--world")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("score", help="re-score saved episode records")
    p.add_argument("--records", required=True)
    p.add_argument("--tasks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--backend", default="scripted", choices=["scripted", "http"])
    p.add_argument("--config")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", help="aggregate results into a report")
    p.add_argument("--results", required=True)
    p.add_argument("--out", default="report.md")
    p.add_argument("--json")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("replay", help="re-run an episode from its transcript")
    p.add_argument("--record", required=True)
    p.add_argument("--transcript", required=True)
    p.add_argument("--tasks", required=True)
    p.add_argument("--world")
    p.add_argument("--config")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="serve the control/replay console API")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--world", required=True)
    p.add_argument("--tasks", required=True)
    p.add_argument("--records", default="out/records")
    p.add_argument("--results-out", default="out/human_results.jsonl")
    p.add_argument("--frontend")
    p.add_argument("--config")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
