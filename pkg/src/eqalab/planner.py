"""Question parsing and plan formulation.

The model proposes structure (objects, relations, requirements, steps) via
the gateway; this module owns the machine contract: replies must embed a
fenced JSON block, plans are validated against a Known/Unknown state
ledger, and broken orderings are repaired locally without re-prompting so
planning stays deterministic for a deterministic gateway.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .gateway import Gateway, GatewayError, ModelRequest
from .questions import refs_in_text

KNOWN = "Known"
UNKNOWN = "Unknown"

_FENCE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


class PlanningError(RuntimeError):
    def __init__(self, message: str, raw_reply: str = ""):
        super().__init__(message)
        self.raw_reply = raw_reply


@dataclass(frozen=True)
class ParsedObject:
    ref_id: str
    class_label: str
    attributes: dict[str, str] = field(default_factory=dict)
    state: str = UNKNOWN


@dataclass(frozen=True)
class Relation:
    subject_ref: str
    relation: str
    object_ref: str


@dataclass(frozen=True)
class Requirement:
    req_id: str
    description: str


@dataclass(frozen=True)
class ParsedQuestion:
    objects: tuple[ParsedObject, ...]
    relations: tuple[Relation, ...]
    requirements: tuple[Requirement, ...]

    def __post_init__(self):
        agents = [o for o in self.objects if o.ref_id == "agent"]
        if len(agents) != 1 or agents[0].state != KNOWN:
            raise ValueError("parsed question needs exactly one Known 'agent' object")
        refs = {o.ref_id for o in self.objects}
        for rel in self.relations:
            if rel.subject_ref not in refs or rel.object_ref not in refs:
                raise ValueError(f"relation references unknown object: {rel}")
        if not self.requirements:
            raise ValueError("parsed question needs at least one requirement")

    def object(self, ref_id: str) -> ParsedObject:
        for o in self.objects:
            if o.ref_id == ref_id:
                return o
        raise KeyError(ref_id)

    def ref_ids(self) -> list[str]:
        return [o.ref_id for o in self.objects]

    def to_json(self) -> dict:
        return {
            "objects": [
                {
                    "ref_id": o.ref_id,
                    "class_label": o.class_label,
                    "attributes": dict(o.attributes),
                    "state": o.state,
                }
                for o in self.objects
            ],
            "relations": [
                {"subject_ref": r.subject_ref, "relation": r.relation, "object_ref": r.object_ref}
                for r in self.relations
            ],
            "requirements": [{"req_id": r.req_id, "description": r.description} for r in self.requirements],
        }

    @staticmethod
    def from_json(data: dict) -> "ParsedQuestion":
        objects = [
            ParsedObject(
                ref_id=str(o["ref_id"]),
                class_label=str(o.get("class_label", "")),
                attributes={str(k): str(v) for k, v in o.get("attributes", {}).items()},
                state=str(o.get("state", UNKNOWN)),
            )
            for o in data["objects"]
        ]
        if not any(o.ref_id == "agent" for o in objects):
            objects.insert(0, ParsedObject("agent", "agent", {}, KNOWN))
        relations = [
            Relation(str(r["subject_ref"]), str(r["relation"]), str(r["object_ref"]))
            for r in data.get("relations", [])
        ]
        requirements = [
            Requirement(str(r["req_id"]), str(r["description"])) for r in data.get("requirements", [])
        ]
        return ParsedQuestion(tuple(objects), tuple(relations), tuple(requirements))


# --- sub-tasks ---------------------------------------------------------------

@dataclass(frozen=True)
class Navigation:
    landmark_ref: str
    relation: str


@dataclass(frozen=True)
class Exploration:
    landmark_ref: str
    relation: str | None
    target_ref: str


@dataclass(frozen=True)
class Collection:
    req_id: str
    target_ref: str


SubTask = Navigation | Exploration | Collection


def subtask_to_json(step: SubTask) -> dict:
    if isinstance(step, Navigation):
        return {"type": "Navigation", "landmark": step.landmark_ref, "relation": step.relation}
    if isinstance(step, Exploration):
        return {
            "type": "Exploration",
            "landmark": step.landmark_ref,
            "relation": step.relation,
            "target": step.target_ref,
        }
    return {"type": "Collection", "req_id": step.req_id, "target": step.target_ref}


def subtask_from_json(data: dict) -> SubTask:
    kind = data["type"]
    if kind == "Navigation":
        return Navigation(str(data["landmark"]), str(data["relation"]))
    if kind == "Exploration":
        rel = data.get("relation")
        return Exploration(str(data["landmark"]), None if rel is None else str(rel), str(data["target"]))
    if kind == "Collection":
        return Collection(str(data["req_id"]), str(data["target"]))
    raise ValueError(f"unknown sub-task type: {kind}")


@dataclass(frozen=True)
class Plan:
    parsed: ParsedQuestion
    steps: tuple[SubTask, ...]

    def to_json(self) -> dict:
        return {"parsed": self.parsed.to_json(), "steps": [subtask_to_json(s) for s in self.steps]}

    @staticmethod
    def from_json(data: dict) -> "Plan":
        return Plan(
            ParsedQuestion.from_json(data["parsed"]),
            tuple(subtask_from_json(s) for s in data["steps"]),
        )


@dataclass(frozen=True)
class Violation:
    step_index: int | None
    message: str


def extract_json_block(reply: str):
    """Parse the first fenced JSON block; CoT prose around it is ignored."""
    m = _FENCE.search(reply)
    if not m:
        raise ValueError("no fenced JSON block in reply")
    return json.loads(m.group(1))


def parse_question(question: str, gateway: Gateway, retries: int = 2) -> ParsedQuestion:
    """Prompt the model to parse the question; retried on unparseable replies."""
    if not question.strip():
        raise PlanningError("empty question")
    request = ModelRequest(role="planner", template_id="planner_parse", variables={"question": question})
    last_reply = ""
    for _ in range(1 + retries):
        last_reply = gateway.complete(request)
        try:
            return ParsedQuestion.from_json(extract_json_block(last_reply))
        except (ValueError, KeyError, TypeError):
            continue
    raise PlanningError(f"could not parse planner reply: {last_reply[:200]!r}", raw_reply=last_reply)


def validate_plan(plan: Plan) -> list[Violation]:
    """Simulate the Known/Unknown ledger over the steps; empty list = ok."""
    violations: list[Violation] = []
    refs = set(plan.parsed.ref_ids())
    req_ids = {r.req_id for r in plan.parsed.requirements}
    known = {o.ref_id for o in plan.parsed.objects if o.state == KNOWN}
    collected: set[str] = set()
    for idx, step in enumerate(plan.steps):
        if isinstance(step, Navigation):
            if step.landmark_ref not in refs:
                violations.append(Violation(idx, f"navigation landmark {step.landmark_ref} unresolved"))
            elif step.landmark_ref not in known:
                violations.append(Violation(idx, f"navigation landmark {step.landmark_ref} not Known"))
        elif isinstance(step, Exploration):
            if step.landmark_ref not in refs:
                violations.append(Violation(idx, f"exploration landmark {step.landmark_ref} unresolved"))
            elif step.landmark_ref not in known:
                violations.append(Violation(idx, f"exploration landmark {step.landmark_ref} not Known"))
            if step.target_ref not in refs:
                violations.append(Violation(idx, f"exploration target {step.target_ref} unresolved"))
            else:
                known.add(step.target_ref)
        elif isinstance(step, Collection):
            if step.target_ref not in refs:
                violations.append(Violation(idx, f"collection target {step.target_ref} unresolved"))
            elif step.target_ref not in known:
                violations.append(Violation(idx, f"collection target {step.target_ref} not Known"))
            if step.req_id not in req_ids:
                violations.append(Violation(idx, f"collection requirement {step.req_id} unresolved"))
            elif step.req_id in collected:
                violations.append(Violation(idx, f"requirement {step.req_id} collected more than once"))
            else:
                collected.add(step.req_id)
    for req in plan.parsed.requirements:
        if req.req_id not in collected:
            violations.append(Violation(None, f"no step collects {req.req_id}"))
    return violations


def _repair_steps(parsed: ParsedQuestion, steps: list[SubTask]) -> list[SubTask]:
    """Insert/reorder steps locally until the state ledger is satisfied."""
    known = {o.ref_id for o in parsed.objects if o.state == KNOWN}
    refs = set(parsed.ref_ids())
    out: list[SubTask] = []

    def ensure_known(ref: str, trail: tuple[str, ...] = ()) -> None:
        if ref in known:
            return
        if ref in trail:
            raise PlanningError(f"cyclic relations prevent locating {ref}")
        if ref not in refs:
            raise PlanningError(f"step references unknown object {ref}")
        rel = next((r for r in parsed.relations if r.subject_ref == ref), None)
        if rel is not None and rel.object_ref != ref:
            ensure_known(rel.object_ref, trail + (ref,))
            if rel.object_ref != "agent":
                out.append(Navigation(rel.object_ref, rel.relation))
            out.append(Exploration(rel.object_ref, rel.relation, ref))
        else:
            out.append(Exploration("agent", None, ref))
        known.add(ref)

    collected: set[str] = set()
    for step in steps:
        if isinstance(step, Navigation):
            ensure_known(step.landmark_ref)
            out.append(step)
        elif isinstance(step, Exploration):
            if step.landmark_ref != "agent":
                ensure_known(step.landmark_ref)
            out.append(step)
            known.add(step.target_ref)
        else:
            if step.req_id in collected:  # drop duplicate collections
                continue
            ensure_known(step.target_ref)
            out.append(step)
            collected.add(step.req_id)
    for req in parsed.requirements:
        if req.req_id in collected:
            continue
        targets = refs_in_text(req.description, parsed.ref_ids())
        if not targets:
            raise PlanningError(f"cannot infer a target for requirement {req.req_id}")
        ensure_known(targets[0])
        out.append(Collection(req.req_id, targets[0]))
    return out


def formulate_plan(parsed: ParsedQuestion, gateway: Gateway) -> Plan:
    """Ask the model for steps, then repair orderings until validation passes."""
    request = ModelRequest(
        role="planner",
        template_id="planner_plan",
        variables={"parsed": json.dumps(parsed.to_json(), sort_keys=True)},
    )
    reply = gateway.complete(request)
    try:
        data = extract_json_block(reply)
        raw_steps = [subtask_from_json(s) for s in data.get("steps", [])]
    except (ValueError, KeyError, TypeError) as exc:
        raise PlanningError(f"could not parse plan reply: {exc}", raw_reply=reply) from exc
    steps = _repair_steps(parsed, raw_steps)
    plan = Plan(parsed, tuple(steps))
    violations = validate_plan(plan)
    if violations:
        detail = "; ".join(f"[{v.step_index}] {v.message}" for v in violations)
        raise PlanningError(f"plan fails validation after repair: {detail}", raw_reply=reply)
    return plan
