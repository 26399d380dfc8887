"""Question templates shared by the task generator and the scripted backend.

Six task categories, each a template keyed on one entity attribute. A
question names a target class, a cardinal relation, and a landmark id; the
answer is the value of the category's attribute on the target entity.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

CATEGORIES = (
    "object_recognition",
    "color_attribute",
    "text_signboard",
    "counting",
    "spatial_relation",
    "world_knowledge",
)

# Landmark objects are referenced by id in question text and grounded by id
# by the scripted detector; everything else is grounded by class+attributes.
LANDMARK_CLASSES = frozenset({"building"})

_TEMPLATES = {
    "object_recognition": "What type of {cls} is {rel} of {landmark}?",
    "color_attribute": "What is the color of the {cls} {rel} of {landmark}?",
    "text_signboard": "What is written on the signboard of the {cls} {rel} of {landmark}?",
    "counting": "How many cars are parked in the {cls} {rel} of {landmark}?",
    "spatial_relation": "Which direction is the {cls} {rel} of {landmark} facing?",
    "world_knowledge": "What does the {cls} {rel} of {landmark} sell?",
}

_PARSERS = [
    ("object_recognition", re.compile(r"^What type of (\w+) is (north|south|east|west) of (\w+)\?$")),
    ("color_attribute", re.compile(r"^What is the color of the (\w+) (north|south|east|west) of (\w+)\?$")),
    ("text_signboard", re.compile(r"^What is written on the signboard of the (\w+) (north|south|east|west) of (\w+)\?$")),
    ("counting", re.compile(r"^How many cars are parked in the (\w+) (north|south|east|west) of (\w+)\?$")),
    ("spatial_relation", re.compile(r"^Which direction is the (\w+) (north|south|east|west) of (\w+) facing\?$")),
    ("world_knowledge", re.compile(r"^What does the (\w+) (north|south|east|west) of (\w+) sell\?$")),
]

# Attribute holding the answer, per category.
CATEGORY_ATTRIBUTE = {
    "object_recognition": "model",
    "color_attribute": "color",
    "text_signboard": "signboard_text",
    "counting": "car_count",
    "spatial_relation": "facing",
    "world_knowledge": "goods",
}

# Requirement description per category; {ref} is the target's reference id.
_REQUIREMENTS = {
    "object_recognition": "type of {ref}",
    "color_attribute": "color of {ref}",
    "text_signboard": "signboard text of {ref}",
    "counting": "number of cars in {ref}",
    "spatial_relation": "facing direction of {ref}",
    "world_knowledge": "goods sold by {ref}",
}

_REQUIREMENT_ATTR = [
    (re.compile(r"^type of (\w+)$"), "model"),
    (re.compile(r"^color of (\w+)$"), "color"),
    (re.compile(r"^signboard text of (\w+)$"), "signboard_text"),
    (re.compile(r"^number of cars in (\w+)$"), "car_count"),
    (re.compile(r"^facing direction of (\w+)$"), "facing"),
    (re.compile(r"^goods sold by (\w+)$"), "goods"),
]


@dataclass(frozen=True)
class QuestionShape:
    category: str
    target_class: str
    relation: str
    landmark_id: str

    @property
    def attribute(self) -> str:
        return CATEGORY_ATTRIBUTE[self.category]

    @property
    def target_ref(self) -> str:
        return f"{self.target_class}_1"

    @property
    def requirement(self) -> str:
        return _REQUIREMENTS[self.category].format(ref=self.target_ref)


def render_question(category: str, target_class: str, relation: str, landmark_id: str) -> str:
    return _TEMPLATES[category].format(cls=target_class, rel=relation, landmark=landmark_id)


def parse_question_text(question: str) -> QuestionShape | None:
    """Recover the shape of a templated question, or None for free text."""
    q = question.strip()
    for category, pattern in _PARSERS:
        m = pattern.match(q)
        if m:
            return QuestionShape(category, m.group(1), m.group(2), m.group(3))
    return None


def attribute_for_requirement(description: str) -> str | None:
    """Map a requirement description to the entity attribute it asks for."""
    d = description.strip()
    for pattern, attr in _REQUIREMENT_ATTR:
        if pattern.match(d):
            return attr
    return None


def refs_in_text(text: str, ref_ids: list[str]) -> list[str]:
    """Reference ids mentioned in free text, in the given order."""
    return [r for r in ref_ids if re.search(rf"\b{re.escape(r)}\b", text)]
