import sys
from pathlib import Path

import hypothesis
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from eqalab.config import desk_config
from eqalab.world import CameraModel, Entity, Rect, WorldModel

hypothesis.settings.register_profile("ci", max_examples=40, deadline=None)
hypothesis.settings.load_profile("ci")


@pytest.fixture
def camera():
    return CameraModel(width=64, height=48, hfov_deg=90.0, max_range=120.0)


@pytest.fixture
def config():
    return desk_config()


def make_entity(eid, cls, x_min, x_max, y_min, y_max, height, **attrs):
    return Entity(
        id=eid,
        class_label=cls,
        footprint=Rect(x_min, x_max, y_min, y_max),
        height=height,
        attributes={k: str(v) for k, v in attrs.items()},
    )


@pytest.fixture
def empty_world():
    return WorldModel(entities=(), bounds=Rect(-200, 200, -200, 200))


@pytest.fixture
def box_world():
    # One 10x10 box, front face 10 m north of the origin, 20 m tall.
    box = make_entity("box_a", "building", -5, 5, 10, 20, 20.0)
    return WorldModel(entities=(box,), bounds=Rect(-200, 200, -200, 200))
