#!/usr/bin/env python3
"""Run one hierarchical-agent episode on a tiny fixture world and dump the
step-by-step trace, for eyeballing the planner/actor pipeline.
"""

import json

from eqalab.config import desk_config
from eqalab.evaluation import Task
from eqalab.gateway import Gateway, ScriptedBackend
from eqalab.manager import run_episode
from eqalab.scripted import default_rules
from eqalab.world import Entity, Pose, Rect, WorldModel


def main():
    config = desk_config()
    world = WorldModel(
        entities=(
            Entity("building_1", "building", Rect(30, 62, -16, 16), 55.0, {"color": "gray"}),
            Entity("car_4", "car", Rect(-4, 4, 6, 14), 5.0, {"color": "red", "model": "suv"}),
        ),
        bounds=Rect(-120, 120, -120, 120),
    )
    task = Task(
        task_id="demo",
        question="What is the color of the car west of building_1?",
        answer="red",
        category="color_attribute",
        p0=Pose(-20, -25, 10, 0),
        p_obs=Pose(0, -10, 10, 0),
        p_tar=Pose(0, 10, 10, 0),
    )
    gateway = Gateway(ScriptedBackend(default_rules(config.perception)))
    record = run_episode(task, world, gateway, config)

    print(f"question: {task.question}")
    print(f"answer:   {record.answer}  (ground truth: {task.answer})")
    print(f"steps:    {len(record.steps)}")
    for step in record.steps:
        sub = "-" if step.subtask_index is None else step.subtask_index
        print(f"  t={step.time_step:3d} sub={sub} {json.dumps(step.to_json()['action'])}")
    print("history:")
    for h in record.history:
        print(f"  step {h.step_index} {h.sub_task['type'].lower():12s} {h.outcome} ({h.actions_used} actions)")


if __name__ == "__main__":
    main()
