"""Seeded synthetic city generator: a block grid of landmark buildings with
cars, shops, statues, and parking lots placed beside them.

Satellite entities carry the attributes the six question categories read
(color, model, signboard_text, goods, facing, car_count). Same-type
satellites sit next to different buildings, which keeps most targets
uniquely identifiable by one cardinal relation to their nearest landmark.
"""

from __future__ import annotations

import random

from .world import Entity, Rect, WorldModel

COLORS = ("red", "black", "white", "blue", "green", "yellow", "gray")
MODELS = ("sedan", "suv", "truck", "van", "coupe")
SIGNBOARDS = ("MOON CAFE", "STAR MART", "BLUE HARBOR", "GOLDEN PALACE", "IRON WORKS", "LUCKY BOOKS")
GOODS = ("coffee", "groceries", "seafood", "noodles", "hardware", "books")
FACINGS = ("north", "south", "east", "west")

_SAT_TYPES = ("car", "shop", "statue", "lot")

# Footprint (w, d) and height per satellite type, sized so each is worth at
# least ~50 mask pixels within ~25-40 m at the 64x48 test camera.
_SAT_SIZES = {
    "car": (8.0, 8.0, 5.0),
    "shop": (12.0, 12.0, 8.0),
    "statue": (6.0, 6.0, 8.0),
    "lot": (16.0, 16.0, 3.0),
}


def _overlaps_any(rect: Rect, entities: list[Entity], margin: float = 2.0) -> bool:
    r = rect.inflate(margin)
    for ent in entities:
        o = ent.footprint
        if r.x_min < o.x_max and o.x_min < r.x_max and r.y_min < o.y_max and o.y_min < r.y_max:
            return True
    return False


def _satellite_attrs(kind: str, rng: random.Random) -> dict[str, str]:
    if kind == "car":
        return {"color": rng.choice(COLORS), "model": rng.choice(MODELS), "facing": rng.choice(FACINGS)}
    if kind == "shop":
        return {
            "color": rng.choice(COLORS),
            "signboard_text": rng.choice(SIGNBOARDS),
            "goods": rng.choice(GOODS),
        }
    if kind == "statue":
        return {"color": rng.choice(COLORS), "facing": rng.choice(FACINGS)}
    return {"car_count": str(rng.randint(2, 9))}


def build_demo_world(seed: int = 0, side: float = 400.0) -> WorldModel:
    """Deterministic city world sized for desk-scale experiments."""
    rng = random.Random(seed)
    half = side / 2.0
    bounds = Rect(-half, half, -half, half)
    entities: list[Entity] = []

    pitch = 80.0
    n_blocks = max(2, int(side // pitch))
    offsets = [(-(n_blocks - 1) / 2.0 + k) * pitch for k in range(n_blocks)]

    building_idx = 0
    sat_counters = {kind: 0 for kind in _SAT_TYPES}
    sat_serial = 0
    for bx in offsets:
        for by in offsets:
            building_idx += 1
            w = rng.uniform(28.0, 36.0)
            d = rng.uniform(28.0, 36.0)
            height = rng.uniform(40.0, 70.0)
            fp = Rect(bx - w / 2, bx + w / 2, by - d / 2, by + d / 2)
            if not bounds.contains_rect(fp):
                continue
            entities.append(
                Entity(
                    id=f"building_{building_idx}",
                    class_label="building",
                    footprint=fp,
                    height=height,
                    attributes={"color": rng.choice(COLORS)},
                )
            )
            building = entities[-1]

            for relation in rng.sample(FACINGS, k=rng.randint(1, 2)):
                kind = _SAT_TYPES[sat_serial % len(_SAT_TYPES)]
                sat_serial += 1
                sw, sd, sh = _SAT_SIZES[kind]
                gap = rng.uniform(8.0, 16.0)
                jitter = rng.uniform(-8.0, 8.0)
                b = building.footprint
                if relation == "west":
                    rect = Rect(b.x_min - gap - sw, b.x_min - gap, by + jitter - sd / 2, by + jitter + sd / 2)
                elif relation == "east":
                    rect = Rect(b.x_max + gap, b.x_max + gap + sw, by + jitter - sd / 2, by + jitter + sd / 2)
                elif relation == "north":
                    rect = Rect(bx + jitter - sw / 2, bx + jitter + sw / 2, b.y_max + gap, b.y_max + gap + sd)
                else:
                    rect = Rect(bx + jitter - sw / 2, bx + jitter + sw / 2, b.y_min - gap - sd, b.y_min - gap)
                if not bounds.contains_rect(rect) or _overlaps_any(rect, entities):
                    continue
                sat_counters[kind] += 1
                entities.append(
                    Entity(
                        id=f"{kind}_{sat_counters[kind]}",
                        class_label=kind,
                        footprint=rect,
                        height=sh,
                        attributes=_satellite_attrs(kind, rng),
                    )
                )
    return WorldModel(entities=tuple(entities), bounds=bounds)
