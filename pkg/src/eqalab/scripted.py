"""Deterministic rule tables standing in for the VLM/LLM backends.

Each handler is a pure function of the request, so identical requests get
identical replies. Image content arrives as the structured visible-entity
summary; handlers ground targets the way the live models would: landmarks
by their id, everything else by class, attributes, and visual prominence.
"""

from __future__ import annotations

import json

from .config import PerceptionConfig
from .gateway import ModelRequest, ScriptedRules
from .questions import (
    LANDMARK_CLASSES,
    attribute_for_requirement,
    parse_question_text,
    refs_in_text,
)


def fenced_json(obj) -> str:
    return "```json\n" + json.dumps(obj, sort_keys=True) + "\n```"


def _entries(request: ModelRequest) -> list[dict]:
    payload = request.image_payload
    return payload if isinstance(payload, list) else []


def _match_target(
    entries: list[dict],
    target_ref: str,
    target_class: str,
    target_attrs: dict,
    min_pixels: int,
) -> dict | None:
    """Most prominent entry matching the target descriptor, if any.

    Landmarks are referenced by id in questions, so they match by id;
    other objects match by class and attribute subset.
    """
    ranked = sorted(entries, key=lambda e: (-e.get("pixels", 0), e.get("id", "")))
    for entry in ranked:
        if entry.get("pixels", 0) < min_pixels:
            continue
        if target_class in LANDMARK_CLASSES:
            if entry.get("id") == target_ref:
                return entry
            continue
        if entry.get("class") != target_class:
            continue
        attrs = entry.get("attributes", {})
        if all(attrs.get(k) == v for k, v in target_attrs.items()):
            return entry
    return None


def _planner_handler(request: ModelRequest) -> str:
    if request.template_id == "planner_parse":
        question = request.variables["question"]
        shape = parse_question_text(question)
        if shape is None:
            return "I cannot parse this question."
        objects = [
            {"ref_id": "agent", "class_label": "agent", "attributes": {}, "state": "Known"},
            {
                "ref_id": shape.landmark_id,
                "class_label": shape.landmark_id.rsplit("_", 1)[0],
                "attributes": {},
                "state": "Unknown",
            },
            {
                "ref_id": shape.target_ref,
                "class_label": shape.target_class,
                "attributes": {},
                "state": "Unknown",
            },
        ]
        parsed = {
            "objects": objects,
            "relations": [
                {"subject_ref": shape.target_ref, "relation": shape.relation, "object_ref": shape.landmark_id}
            ],
            "requirements": [{"req_id": "req_1", "description": shape.requirement}],
        }
        return (
            "Step 1: extract objects and relations. Step 2: extract requirements. "
            "Step 3: see JSON.\n" + fenced_json(parsed)
        )

    # planner_plan: propose sub-task steps for a parsed question.
    parsed = json.loads(request.variables["parsed"])
    states = {o["ref_id"]: o["state"] for o in parsed["objects"]}
    relations = parsed["relations"]
    ref_ids = [o["ref_id"] for o in parsed["objects"]]
    steps: list[dict] = []
    known = {r for r, s in states.items() if s == "Known"}

    def plan_discovery(ref: str) -> None:
        if ref in known:
            return
        rel = next((r for r in relations if r["subject_ref"] == ref), None)
        if rel is not None:
            landmark = rel["object_ref"]
            plan_discovery(landmark)
            steps.append({"type": "Navigation", "landmark": landmark, "relation": rel["relation"]})
            steps.append(
                {"type": "Exploration", "landmark": landmark, "relation": rel["relation"], "target": ref}
            )
        else:
            steps.append({"type": "Exploration", "landmark": "agent", "relation": None, "target": ref})
        known.add(ref)

    for req in parsed["requirements"]:
        targets = refs_in_text(req["description"], ref_ids)
        target = targets[0] if targets else "agent"
        plan_discovery(target)
        steps.append({"type": "Collection", "req_id": req["req_id"], "target": target})
    return fenced_json({"steps": steps})


def _detector_handler(min_pixels: int):
    def handler(request: ModelRequest) -> str:
        target_ref = request.variables["target_ref"]
        target_class = request.variables["target_class"]
        target_attrs = json.loads(request.variables.get("target_attributes", "{}"))
        entry = _match_target(_entries(request), target_ref, target_class, target_attrs, min_pixels)
        return f"yes id={entry['id']}" if entry else "no"

    return handler


def _collector_handler(min_pixels: int):
    def handler(request: ModelRequest) -> str:
        requirement = request.variables["requirement"]
        target_ref = request.variables.get("target_ref", "")
        target_class = request.variables["target_class"]
        target_attrs = json.loads(request.variables.get("target_attributes", "{}"))
        attr = attribute_for_requirement(requirement)
        entries = _entries(request)
        entry = _match_target(entries, target_ref, target_class, target_attrs, min_pixels)
        if entry is not None and attr and attr in entry.get("attributes", {}):
            return fenced_json({"answer": entry["attributes"][attr], "action": "KeepStill"})
        small = _match_target(entries, target_ref, target_class, target_attrs, 1)
        if small is not None:
            return fenced_json({"answer": None, "action": "MoveForward"})
        return fenced_json({"answer": None, "action": "TurnRight"})

    return handler


def _answerer_handler(min_pixels: int):
    def handler(request: ModelRequest) -> str:
        collected = json.loads(request.variables.get("collected", "[]"))
        values = [c["value"] for c in collected if c.get("value")]
        if values:
            return ", ".join(values)
        shape = parse_question_text(request.variables.get("question", ""))
        if shape is not None:
            entry = _match_target(_entries(request), shape.target_ref, shape.target_class, {}, min_pixels)
            if entry is not None:
                return entry.get("attributes", {}).get(shape.attribute, "unknown")
        return "unknown"

    return handler


def _judge_handler(request: ModelRequest) -> str:
    answer = request.variables["answer"].strip()
    truth = request.variables["ground_truth"].strip()
    if not answer:
        return "Score: 1"
    if answer.casefold() == truth.casefold():
        return "Score: 5"
    answer_tokens = {t for t in "".join(c if c.isalnum() else " " for c in answer.casefold()).split() if t}
    truth_tokens = {t for t in "".join(c if c.isalnum() else " " for c in truth.casefold()).split() if t}
    if not truth_tokens:
        return "Score: 1"
    overlap = len(answer_tokens & truth_tokens) / len(truth_tokens)
    if overlap == 1.0:
        score = 4
    elif overlap >= 0.5:
        score = 3
    elif overlap > 0.0:
        score = 2
    else:
        score = 1
    return f"Score: {score}"


def _stopper_handler(min_pixels: int):
    def handler(request: ModelRequest) -> str:
        shape = parse_question_text(request.variables.get("question", ""))
        if shape is None:
            return "no"
        entry = _match_target(_entries(request), shape.target_ref, shape.target_class, {}, min_pixels)
        return "yes" if entry is not None else "no"

    return handler


def default_rules(perception: PerceptionConfig | None = None) -> ScriptedRules:
    perception = perception or PerceptionConfig()
    m = perception.min_detect_pixels
    return ScriptedRules(
        {
            "planner": _planner_handler,
            "detector": _detector_handler(m),
            "collector": _collector_handler(m),
            "answerer": _answerer_handler(m),
            "judge": _judge_handler,
            "stopper": _stopper_handler(m),
        }
    )
