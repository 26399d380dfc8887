"""Synthetic city world: entity geometry, poses, kinematics, and world IO.

Coordinate conventions used throughout the package:
  * world frame: x = east, y = north, z = up, meters
  * yaw: degrees in [0, 360), 0 = facing north (+y), increasing clockwise
  * entities are axis-aligned footprints extruded from the ground (z = 0)
    up to their height; the z interval is half-open [0, height) so an agent
    skimming a rooftop does not collide

The agent is a point with a fixed horizontal clearance; translations clip at
the first collision instead of failing, and altitude is clamped to a flight
envelope.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

AGENT_CLEARANCE_M = 0.5
MIN_ALTITUDE_M = 1.0
MAX_ALTITUDE_M = 120.0

MOVE_DIRECTIONS = ("forward", "back", "left", "right", "up", "down")
TURN_DIRECTIONS = ("left", "right")


class WorldSchemaError(ValueError):
    """Raised when a world file violates the schema; names the bad field."""


def normalize_yaw(yaw: float) -> float:
    yaw = math.fmod(yaw, 360.0)
    if yaw < 0:
        yaw += 360.0
    return 0.0 if yaw == 360.0 else yaw


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    z: float
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "yaw", normalize_yaw(self.yaw))
        if self.z < 0:
            raise ValueError(f"pose z must be >= 0, got {self.z}")

    def heading(self) -> tuple[float, float]:
        """Unit forward vector in the xy-plane."""
        rad = math.radians(self.yaw)
        return (math.sin(rad), math.cos(rad))

    def right(self) -> tuple[float, float]:
        """Unit right-hand vector in the xy-plane (heading rotated clockwise)."""
        rad = math.radians(self.yaw)
        return (math.cos(rad), -math.sin(rad))

    def to_json(self) -> dict:
        return {"x": self.x, "y": self.y, "z": self.z, "yaw": self.yaw}

    @staticmethod
    def from_json(data: dict) -> "Pose":
        return Pose(float(data["x"]), float(data["y"]), float(data["z"]), float(data["yaw"]))


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle in world meters."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    def contains_rect(self, other: "Rect") -> bool:
        return (
            self.x_min <= other.x_min
            and other.x_max <= self.x_max
            and self.y_min <= other.y_min
            and other.y_max <= self.y_max
        )

    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    def inflate(self, margin: float) -> "Rect":
        return Rect(self.x_min - margin, self.x_max + margin, self.y_min - margin, self.y_max + margin)


@dataclass(frozen=True)
class Entity:
    id: str
    class_label: str
    footprint: Rect
    height: float
    attributes: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not (self.footprint.x_min < self.footprint.x_max):
            raise WorldSchemaError(f"entity {self.id}: footprint x_min must be < x_max")
        if not (self.footprint.y_min < self.footprint.y_max):
            raise WorldSchemaError(f"entity {self.id}: footprint y_min must be < y_max")
        if not self.height > 0:
            raise WorldSchemaError(f"entity {self.id}: height must be > 0")


@dataclass(frozen=True)
class WorldModel:
    entities: tuple[Entity, ...]
    bounds: Rect
    ground_z: float = 0.0

    def __post_init__(self):
        seen = set()
        for ent in self.entities:
            if ent.id in seen:
                raise WorldSchemaError(f"duplicate entity id: {ent.id}")
            seen.add(ent.id)
            if not self.bounds.contains_rect(ent.footprint):
                raise WorldSchemaError(f"entity {ent.id}: footprint outside world bounds")

    def entity(self, entity_id: str) -> Entity:
        for ent in self.entities:
            if ent.id == entity_id:
                return ent
        raise KeyError(entity_id)

    def of_class(self, class_label: str) -> list[Entity]:
        return [e for e in self.entities if e.class_label == class_label]


@dataclass(frozen=True)
class CameraModel:
    width: int
    height: int
    hfov_deg: float
    max_range: float

    @property
    def fx(self) -> float:
        return self.width / (2.0 * math.tan(math.radians(self.hfov_deg) / 2.0))

    @property
    def fy(self) -> float:
        return self.fx

    @property
    def cx(self) -> float:
        return self.width / 2.0

    @property
    def cy(self) -> float:
        return self.height / 2.0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("camera dimensions must be positive")
        if not (0 < self.hfov_deg < 180):
            raise ValueError("hfov must be in (0, 180) degrees")
        if self.max_range <= 0:
            raise ValueError("max_range must be > 0")


@dataclass(frozen=True)
class Observation:
    """One egocentric capture: depth, false-color semantic, instance ids.

    depth holds the forward (z-depth) distance in meters, max_range where
    nothing was hit. semantic is uint8 HxWx3. instance_mask holds an index
    into `entity_ids` per pixel, -1 for none.
    """

    depth: np.ndarray
    semantic: np.ndarray
    instance_mask: np.ndarray
    entity_ids: tuple[str, ...]
    pose: Pose

    def entity_id_at(self, v: int, u: int) -> Optional[str]:
        idx = int(self.instance_mask[v, u])
        return None if idx < 0 else self.entity_ids[idx]


# --- actions ------------------------------------------------------------

@dataclass(frozen=True)
class Move:
    direction: str
    distance: float

    def __post_init__(self):
        if self.direction not in MOVE_DIRECTIONS:
            raise ValueError(f"bad move direction: {self.direction}")
        if not self.distance > 0:
            raise ValueError("move distance must be > 0")


@dataclass(frozen=True)
class Turn:
    direction: str
    degrees: float

    def __post_init__(self):
        if self.direction not in TURN_DIRECTIONS:
            raise ValueError(f"bad turn direction: {self.direction}")
        if not self.degrees > 0:
            raise ValueError("turn degrees must be > 0")


@dataclass(frozen=True)
class KeepStill:
    pass


@dataclass(frozen=True)
class Stop:
    answer: str = ""


SimAction = Move | Turn | KeepStill | Stop


def action_to_json(action: SimAction) -> dict:
    if isinstance(action, Move):
        return {"type": "Move", "direction": action.direction, "distance": action.distance}
    if isinstance(action, Turn):
        return {"type": "Turn", "direction": action.direction, "degrees": action.degrees}
    if isinstance(action, KeepStill):
        return {"type": "KeepStill"}
    if isinstance(action, Stop):
        return {"type": "Stop", "answer": action.answer}
    raise TypeError(f"not a SimAction: {action!r}")


def action_from_json(data: dict) -> SimAction:
    kind = data["type"]
    if kind == "Move":
        return Move(data["direction"], float(data["distance"]))
    if kind == "Turn":
        return Turn(data["direction"], float(data["degrees"]))
    if kind == "KeepStill":
        return KeepStill()
    if kind == "Stop":
        return Stop(data.get("answer", ""))
    raise ValueError(f"unknown action type: {kind}")


# --- kinematics ----------------------------------------------------------

def _translation_vector(pose: Pose, direction: str, distance: float) -> tuple[float, float, float]:
    hx, hy = pose.heading()
    rx, ry = pose.right()
    if direction == "forward":
        return (hx * distance, hy * distance, 0.0)
    if direction == "back":
        return (-hx * distance, -hy * distance, 0.0)
    if direction == "right":
        return (rx * distance, ry * distance, 0.0)
    if direction == "left":
        return (-rx * distance, -ry * distance, 0.0)
    if direction == "up":
        return (0.0, 0.0, distance)
    return (0.0, 0.0, -distance)


def _segment_box_entry(
    origin: tuple[float, float, float],
    delta: tuple[float, float, float],
    lo: tuple[float, float, float],
    hi: tuple[float, float, float],
) -> Optional[tuple[float, int, float]]:
    """Earliest entry of the segment into the open box, else None.

    Returns (t_near, axis, bound): the raw entry parameter (negative when
    the segment starts inside), the axis whose face is entered, and that
    face's coordinate, so callers can pin the clipped position exactly onto
    the face instead of a rounding-error inside it. Grazing contact
    (touching a face without entering the interior) is not a collision, so
    the agent can slide along walls it touches.
    """
    t_near, t_far = -math.inf, math.inf
    near_axis, near_bound = -1, 0.0
    for axis in range(3):
        o, d = origin[axis], delta[axis]
        if d == 0.0:
            if o <= lo[axis] or o >= hi[axis]:
                # Parallel and outside (or exactly on) this slab: no entry.
                return None
            continue
        t0, b0 = (lo[axis] - o) / d, lo[axis]
        t1, b1 = (hi[axis] - o) / d, hi[axis]
        if t0 > t1:
            t0, t1, b0, b1 = t1, t0, b1, b0
        if t0 > t_near:
            t_near, near_axis, near_bound = t0, axis, b0
        t_far = min(t_far, t1)
    if t_near >= t_far:  # strict: grazing is not a hit
        return None
    if t_far <= 0.0 or t_near >= 1.0:
        return None
    return t_near, near_axis, near_bound


def apply_action(world: WorldModel, pose: Pose, action: SimAction) -> Pose:
    """Execute one action. Pure; collisions clip the translation, never fail.

    Translation stops at the first entity box (footprint inflated by the
    agent clearance, z in [0, height)) and is also clipped at the world
    bounds. Altitude is clamped to the flight envelope afterwards.
    """
    if isinstance(action, (KeepStill, Stop)):
        return pose
    if isinstance(action, Turn):
        sign = 1.0 if action.direction == "right" else -1.0
        return Pose(pose.x, pose.y, pose.z, normalize_yaw(pose.yaw + sign * action.degrees))

    delta = _translation_vector(pose, action.direction, action.distance)
    origin = (pose.x, pose.y, pose.z)
    first = None
    for ent in world.entities:
        fp = ent.footprint.inflate(AGENT_CLEARANCE_M)
        lo = (fp.x_min, fp.y_min, 0.0)
        hi = (fp.x_max, fp.y_max, ent.height)
        hit = _segment_box_entry(origin, delta, lo, hi)
        if hit is not None and hit[0] < 1.0 and (first is None or hit[0] < first[0]):
            first = hit
    t_clip = 1.0 if first is None else max(first[0], 0.0)
    coords = [
        pose.x + delta[0] * t_clip,
        pose.y + delta[1] * t_clip,
        pose.z + delta[2] * t_clip,
    ]
    if first is not None and first[0] >= 0.0:
        # Pin the entered coordinate onto the face to keep the clipped pose
        # exactly on, never inside, the inflated box.
        coords[first[1]] = first[2]
    x, y, z = coords
    b = world.bounds
    x = min(max(x, b.x_min), b.x_max)
    y = min(max(y, b.y_min), b.y_max)
    z = min(max(z, MIN_ALTITUDE_M), MAX_ALTITUDE_M)
    return Pose(x, y, z, pose.yaw)


# --- world IO ------------------------------------------------------------

def world_to_json(world: WorldModel) -> dict:
    return {
        "bounds": {
            "x_min": world.bounds.x_min,
            "x_max": world.bounds.x_max,
            "y_min": world.bounds.y_min,
            "y_max": world.bounds.y_max,
        },
        "entities": [
            {
                "id": e.id,
                "class": e.class_label,
                "footprint": [e.footprint.x_min, e.footprint.x_max, e.footprint.y_min, e.footprint.y_max],
                "height": e.height,
                "attributes": dict(sorted(e.attributes.items())),
            }
            for e in world.entities
        ],
    }


def world_from_json(data: dict) -> WorldModel:
    # Unknown extra keys are accepted and ignored for forward compatibility.
    try:
        b = data["bounds"]
        bounds = Rect(float(b["x_min"]), float(b["x_max"]), float(b["y_min"]), float(b["y_max"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise WorldSchemaError(f"bounds: {exc}") from exc
    entities = []
    for i, raw in enumerate(data.get("entities", [])):
        try:
            fp = raw["footprint"]
            rect = Rect(float(fp[0]), float(fp[1]), float(fp[2]), float(fp[3]))
            entities.append(
                Entity(
                    id=str(raw["id"]),
                    class_label=str(raw["class"]),
                    footprint=rect,
                    height=float(raw["height"]),
                    attributes={str(k): str(v) for k, v in raw.get("attributes", {}).items()},
                )
            )
        except WorldSchemaError:
            raise
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise WorldSchemaError(f"entities[{i}]: {exc}") from exc
    return WorldModel(entities=tuple(entities), bounds=bounds)


def save_world(world: WorldModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(world_to_json(world), indent=2, sort_keys=True))


def load_world(path: str | Path) -> WorldModel:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise WorldSchemaError(f"malformed JSON in {path}: {exc}") from exc
    return world_from_json(data)
