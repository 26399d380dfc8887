#!/usr/bin/env python3
"""End-to-end desk experiment: generate a city, generate tasks, run all
three agents with the scripted backend, and print the report.

Usage: python scripts/run_desk_suite.py [--n 30] [--seed 7] [--out out/suite]
"""

import argparse
import sys
from pathlib import Path

from eqalab.cli import main as cli


def run(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=30)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--out", default="out/suite")
    args = parser.parse_args(argv)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    world = out / "world.json"
    tasks = out / "tasks.json"

    steps = [
        ["gen-world", "--out", str(world), "--seed", str(args.seed)],
        ["gen-tasks", "--world", str(world), "--n", str(args.n), "--seed", str(args.seed), "--out", str(tasks)],
        [
            "run",
            "--agent",
            "pma,re,fbe",
            "--backend",
            "scripted",
            "--seed",
            str(args.seed),
            "--tasks",
            str(tasks),
            "--out",
            str(out / "results"),
        ],
        ["report", "--results", str(out / "results" / "results.jsonl"), "--out", str(out / "report.md")],
    ]
    for step in steps:
        code = cli(step)
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(run())
