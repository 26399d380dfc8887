"""Object-centric 2D grid map with an occupancy layer.

The map discretizes a square window of the world centered on the episode's
initial pose. Object entries record which grid cells an object's projected
depth points occupy; repeated observations of the same object are fused by
cell overlap or 8-adjacency, per class, until no two same-class entries
touch. The occupancy layer (Unknown / Free / Occupied) backs path planning
and frontier exploration.

Cell indexing: cell (i, j) covers world x in [origin_x + i*res, +res) and
y in [origin_y + j*res, +res); i grows east, j grows north.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .render import pixel_directions
from .world import CameraModel, Observation, Pose, WorldModel

UNKNOWN, FREE, OCCUPIED = 0, 1, 2

# Occupancy altitude band: projected points in this z range count as
# obstacles; rays ending below the band prove traversable ground.
OCC_Z_MIN = 0.5
OCC_Z_MAX = 120.0

# Free-space marking samples the ground intersection segment at this
# fraction of the cell resolution, out to at most FREE_MARCH_RANGE_M from
# the agent (see update_occupancy).
FREE_SAMPLE_STEP_FRAC = 0.25
FREE_MARCH_RANGE_M = 60.0

RELATIONS = ("north", "south", "east", "west")


@dataclass(frozen=True)
class GridSpec:
    origin_x: float
    origin_y: float
    side: float = 400.0
    resolution: float = 1.0

    def __post_init__(self):
        if self.side <= 0 or self.resolution <= 0:
            raise ValueError("side and resolution must be positive")
        n = self.side / self.resolution
        if abs(n - round(n)) > 1e-9:
            raise ValueError("side must be divisible by resolution")

    @property
    def cells_per_side(self) -> int:
        return int(round(self.side / self.resolution))

    @staticmethod
    def centered_on(pose: Pose, side: float = 400.0, resolution: float = 1.0) -> "GridSpec":
        return GridSpec(pose.x - side / 2.0, pose.y - side / 2.0, side, resolution)

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return (
            math.floor((x - self.origin_x) / self.resolution),
            math.floor((y - self.origin_y) / self.resolution),
        )

    def in_grid(self, i: int, j: int) -> bool:
        n = self.cells_per_side
        return 0 <= i < n and 0 <= j < n

    def cell_center(self, i: int, j: int) -> tuple[float, float]:
        return (
            self.origin_x + (i + 0.5) * self.resolution,
            self.origin_y + (j + 0.5) * self.resolution,
        )

    def to_json(self) -> dict:
        return {
            "origin_x": self.origin_x,
            "origin_y": self.origin_y,
            "side": self.side,
            "resolution": self.resolution,
        }

    @staticmethod
    def from_json(data: dict) -> "GridSpec":
        return GridSpec(
            float(data["origin_x"]), float(data["origin_y"]),
            float(data["side"]), float(data["resolution"]),
        )


@dataclass(frozen=True)
class CellRect:
    """Inclusive cell-index rectangle; empty when a max < its min."""

    i_min: int
    i_max: int
    j_min: int
    j_max: int

    @property
    def is_empty(self) -> bool:
        return self.i_max < self.i_min or self.j_max < self.j_min

    def cells(self) -> Iterable[tuple[int, int]]:
        for i in range(self.i_min, self.i_max + 1):
            for j in range(self.j_min, self.j_max + 1):
                yield (i, j)

    def contains(self, i: int, j: int) -> bool:
        return self.i_min <= i <= self.i_max and self.j_min <= j <= self.j_max

    def clipped(self, n: int) -> "CellRect":
        return CellRect(max(self.i_min, 0), min(self.i_max, n - 1), max(self.j_min, 0), min(self.j_max, n - 1))


@dataclass(frozen=True)
class Segment:
    """One segmented object in an observation: id, label, caption, pixels."""

    source_id: str
    class_label: str
    caption: str
    pixels: tuple[tuple[int, int], ...]  # (v, u) pairs


@dataclass(frozen=True)
class AddedObject:
    class_label: str
    caption: str
    cells: frozenset[tuple[int, int]]
    source_id: str = ""


@dataclass(frozen=True)
class AddedMap:
    objects: tuple[AddedObject, ...] = ()


@dataclass(frozen=True)
class MapObject:
    map_id: int
    class_label: str
    caption: str
    cells: frozenset[tuple[int, int]]
    observations: int = 1
    source_sim_ids: frozenset[str] = frozenset()  # debug only, agents never read this

    def centroid(self, spec: GridSpec) -> tuple[float, float]:
        xs = 0.0
        ys = 0.0
        for i, j in self.cells:
            cx, cy = spec.cell_center(i, j)
            xs += cx
            ys += cy
        n = len(self.cells)
        return (xs / n, ys / n)

    def bbox(self) -> CellRect:
        is_ = [c[0] for c in self.cells]
        js = [c[1] for c in self.cells]
        return CellRect(min(is_), max(is_), min(js), max(js))


@dataclass(frozen=True)
class CognitiveMap:
    spec: GridSpec
    objects: dict[int, MapObject] = field(default_factory=dict)
    occupancy: np.ndarray = None  # (n, n) uint8, indexed [i, j]
    next_id: int = 1
    forwarding: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.occupancy is None:
            n = self.spec.cells_per_side
            object.__setattr__(self, "occupancy", np.full((n, n), UNKNOWN, dtype=np.uint8))

    def resolve(self, map_id: int) -> int:
        """Follow fusion forwarding so bindings survive merges."""
        seen = set()
        while map_id in self.forwarding:
            if map_id in seen:
                raise RuntimeError("forwarding cycle")
            seen.add(map_id)
            map_id = self.forwarding[map_id]
        return map_id

    def get(self, map_id: int) -> Optional[MapObject]:
        return self.objects.get(self.resolve(map_id))


def new_map(spec: GridSpec) -> CognitiveMap:
    return CognitiveMap(spec=spec)


# --- segmentation ----------------------------------------------------------

def segments_from_observation(obs: Observation, world: WorldModel, min_pixels: int) -> list[Segment]:
    """Ground-truth segmenter: one segment per sufficiently visible entity."""
    segments = []
    mask = obs.instance_mask
    for idx, ent_id in enumerate(obs.entity_ids):
        pix = np.argwhere(mask == idx)
        if len(pix) < min_pixels:
            continue
        ent = world.entity(ent_id)
        color = ent.attributes.get("color", "")
        caption = f"{color} {ent.class_label}".strip()
        segments.append(
            Segment(
                source_id=ent.id,
                class_label=ent.class_label,
                caption=caption,
                pixels=tuple((int(v), int(u)) for v, u in pix),
            )
        )
    return segments


class LiveSegmenterAdapter:
    """Placeholder for a detector/segmenter model integration."""

    def __call__(self, obs: Observation) -> list[Segment]:
        raise NotImplementedError("live segmentation is not wired up; use ground-truth segments")


# --- construct --------------------------------------------------------------

def backproject(obs: Observation, pose: Pose, camera: CameraModel) -> np.ndarray:
    """World points per pixel, shape (H, W, 3); only depth < max_range is valid."""
    dirs = pixel_directions(camera, pose)
    pts = dirs * obs.depth[:, :, None]
    pts[:, :, 0] += pose.x
    pts[:, :, 1] += pose.y
    pts[:, :, 2] += pose.z
    return pts


def construct(
    obs: Observation,
    pose: Pose,
    camera: CameraModel,
    spec: GridSpec,
    segments: Sequence[Segment],
    min_points_per_cell: int = 3,
) -> AddedMap:
    """Project segmented depth pixels into grid cells, one entry per segment.

    Pixels at max_range carry no surface and are skipped; projected points
    outside the grid window are discarded; cells supported by fewer than
    min_points_per_cell points are dropped as noise, and segments left with
    no cells are dropped entirely.
    """
    if not segments:
        return AddedMap()
    pts = backproject(obs, pose, camera)
    valid = obs.depth < camera.max_range
    n = spec.cells_per_side
    out = []
    for seg in segments:
        if not seg.pixels:
            continue
        vu = np.asarray(seg.pixels, dtype=np.intp)
        keep = valid[vu[:, 0], vu[:, 1]]
        if not keep.any():
            continue
        p = pts[vu[keep, 0], vu[keep, 1]]
        ci = np.floor((p[:, 0] - spec.origin_x) / spec.resolution).astype(np.int64)
        cj = np.floor((p[:, 1] - spec.origin_y) / spec.resolution).astype(np.int64)
        inside = (ci >= 0) & (ci < n) & (cj >= 0) & (cj < n)
        if not inside.any():
            continue
        pairs, counts = np.unique(np.stack([ci[inside], cj[inside]], axis=1), axis=0, return_counts=True)
        cells = frozenset(
            (int(i), int(j)) for (i, j), c in zip(pairs, counts) if c >= min_points_per_cell
        )
        if cells:
            out.append(AddedObject(seg.class_label, seg.caption, cells, seg.source_id))
    return AddedMap(tuple(out))


# --- merge ------------------------------------------------------------------

def cells_touch(a: frozenset, b: frozenset) -> bool:
    """True when the sets overlap or any pair of cells is 8-adjacent."""
    small, large = (a, b) if len(a) <= len(b) else (b, a)
    for i, j in small:
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if (i + di, j + dj) in large:
                    return True
    return False


def _fuse(keep: MapObject, other: MapObject) -> MapObject:
    # The larger entry's caption wins; ties keep the lower (older) id's.
    if len(other.cells) > len(keep.cells):
        caption = other.caption
    else:
        caption = keep.caption
    return MapObject(
        map_id=keep.map_id,
        class_label=keep.class_label,
        caption=caption,
        cells=keep.cells | other.cells,
        observations=keep.observations + other.observations,
        source_sim_ids=keep.source_sim_ids | other.source_sim_ids,
    )


def merge_detailed(m: CognitiveMap, added: AddedMap) -> tuple[CognitiveMap, list[int]]:
    """Merge and also report the final map id of each added object in order."""
    objects = dict(m.objects)
    forwarding = dict(m.forwarding)
    next_id = m.next_id
    added_ids = []
    for obj in added.objects:
        src = frozenset({obj.source_id}) if obj.source_id else frozenset()
        objects[next_id] = MapObject(next_id, obj.class_label, obj.caption, obj.cells, 1, src)
        added_ids.append(next_id)
        next_id += 1

    # Fusing two entries can bring a third into contact, so repeat rounds
    # until no same-class pair overlaps or is 8-adjacent.
    changed = True
    while changed:
        changed = False
        ids = sorted(objects)
        for ai in range(len(ids)):
            a = ids[ai]
            if a not in objects:
                continue
            for bi in range(ai + 1, len(ids)):
                b = ids[bi]
                if b not in objects:
                    continue
                oa, ob = objects[a], objects[b]
                if oa.class_label != ob.class_label:
                    continue
                if cells_touch(oa.cells, ob.cells):
                    objects[a] = _fuse(oa, ob)
                    del objects[b]
                    forwarding[b] = a
                    changed = True

    result = CognitiveMap(
        spec=m.spec,
        objects=objects,
        occupancy=m.occupancy,
        next_id=next_id,
        forwarding=forwarding,
    )
    return result, [result.resolve(i) for i in added_ids]


def merge(m: CognitiveMap, added: AddedMap) -> CognitiveMap:
    """Fuse an added map into the global map (see merge_detailed)."""
    return merge_detailed(m, added)[0]


# --- occupancy ---------------------------------------------------------------

def segment_sample_points(
    x0: float, y0: float, x1: float, y1: float, step: float, max_len: float = FREE_MARCH_RANGE_M
) -> list[tuple[float, float]]:
    """Sample points along a 2D segment at spacing `step`, capped at max_len.

    This fixed-step sampling defines which cells a ground segment "crosses":
    cells containing any sample point. Cells clipped by less than the step
    may be skipped, and nothing beyond max_len from the start is sampled;
    both are part of the contract.
    """
    dx = x1 - x0
    dy = y1 - y0
    length = math.sqrt(dx * dx + dy * dy)
    if length == 0.0:
        return [(x0, y0)]
    clip = min(length, max_len)
    pts = []
    k = 0
    while k * step <= clip:
        f = (k * step) / length
        pts.append((x0 + dx * f, y0 + dy * f))
        k += 1
    f = clip / length
    pts.append((x0 + dx * f, y0 + dy * f))
    return pts


def update_occupancy(
    m: CognitiveMap, obs: Observation, pose: Pose, camera: CameraModel
) -> CognitiveMap:
    """Fold one observation into the occupancy layer.

    Projected points with z in [0.5, 120] mark their cells Occupied. Rays
    that hit the ground (or terminate below 0.5 m) prove the cells crossed
    by the 2D segment from the agent to that intersection point are Free;
    rays that miss everything but descend below 0.5 m within range prove
    the segment up to that crossing. Crossed cells are the ones containing
    sample points spaced FREE_SAMPLE_STEP_FRAC of a cell apart, marched no
    farther than FREE_MARCH_RANGE_M from the agent. Free never demotes
    Occupied.
    """
    spec = m.spec
    n = spec.cells_per_side
    occ = m.occupancy.copy()

    dirs = pixel_directions(camera, pose)
    depth = obs.depth
    hit = depth < camera.max_range
    pts = dirs * depth[:, :, None]
    pts[:, :, 0] += pose.x
    pts[:, :, 1] += pose.y
    pts[:, :, 2] += pose.z

    # Obstacle points.
    zs = pts[:, :, 2]
    occ_sel = hit & (zs >= OCC_Z_MIN) & (zs <= OCC_Z_MAX)
    if occ_sel.any():
        px = pts[:, :, 0][occ_sel]
        py = pts[:, :, 1][occ_sel]
        ci = np.floor((px - spec.origin_x) / spec.resolution).astype(np.int64)
        cj = np.floor((py - spec.origin_y) / spec.resolution).astype(np.int64)
        inside = (ci >= 0) & (ci < n) & (cj >= 0) & (cj < n)
        occ[ci[inside], cj[inside]] = OCCUPIED

    # Free-space endpoints: ground hits, low hits, and misses that descend
    # below the obstacle band within range.
    dz = dirs[:, :, 2]
    ground_hit = hit & (zs < OCC_Z_MIN)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_low = np.where(dz < 0.0, (OCC_Z_MIN - pose.z) / dz, np.inf)
        end_x = np.where(ground_hit, pts[:, :, 0], pose.x + dirs[:, :, 0] * t_low)
        end_y = np.where(ground_hit, pts[:, :, 1], pose.y + dirs[:, :, 1] * t_low)
    miss_low = (~hit) & (t_low > 0.0) & (t_low < camera.max_range)
    eligible = ground_hit | miss_low
    if eligible.any():
        ex = end_x[eligible]
        ey = end_y[eligible]
        ci, cj = _segment_cells_bulk(spec, pose.x, pose.y, ex, ey)
        keep = occ[ci, cj] != OCCUPIED
        occ[ci[keep], cj[keep]] = FREE

    return replace(m, occupancy=occ)


def _segment_cells_bulk(spec: GridSpec, x0: float, y0: float, xs: np.ndarray, ys: np.ndarray):
    """In-grid cells sampled along many segments sharing one start point.

    Vectorized equivalent of segment_sample_points applied per segment;
    sample distances clamp to each segment's length, duplicating endpoints
    for shorter rays, which is harmless for the union.
    """
    step = spec.resolution * FREE_SAMPLE_STEP_FRAC
    dx = xs - x0
    dy = ys - y0
    lengths = np.sqrt(dx * dx + dy * dy)
    clipped = np.minimum(lengths, FREE_MARCH_RANGE_M)
    max_len = float(clipped.max()) if clipped.size else 0.0
    count = int(max_len / step)
    s = np.arange(count + 2, dtype=np.float64)[:, None] * step  # (K, 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        f = np.where(lengths > 0.0, np.minimum(s, clipped[None, :]) / lengths[None, :], 0.0)
    px = x0 + dx[None, :] * f
    py = y0 + dy[None, :] * f
    ci = np.floor((px - spec.origin_x) / spec.resolution).astype(np.int64).ravel()
    cj = np.floor((py - spec.origin_y) / spec.resolution).astype(np.int64).ravel()
    n = spec.cells_per_side
    inside = (ci >= 0) & (ci < n) & (cj >= 0) & (cj < n)
    keys = np.unique(ci[inside] * np.int64(n) + cj[inside])
    return keys // n, keys % n


# --- queries ------------------------------------------------------------------

def locate(m: CognitiveMap, class_label: str, nearest_to: Pose) -> Optional[MapObject]:
    """Same-class object with the nearest centroid; ties break to lowest id."""
    best = None
    best_key = None
    for map_id in sorted(m.objects):
        obj = m.objects[map_id]
        if obj.class_label != class_label:
            continue
        cx, cy = obj.centroid(m.spec)
        d = math.hypot(cx - nearest_to.x, cy - nearest_to.y)
        key = (d, map_id)
        if best_key is None or key < best_key:
            best = obj
            best_key = key
    return best


def region_of(
    m: CognitiveMap,
    landmark: MapObject,
    relation: str,
    depth_m: float,
    margin_m: float,
) -> CellRect:
    """Cell rectangle abutting the landmark's bounding box on one side.

    Extends depth_m outward from the box, spans the box's perpendicular
    extent widened by margin_m on each side, clipped to the grid.
    """
    if relation not in RELATIONS:
        raise ValueError(f"bad relation: {relation}")
    if not landmark.cells:
        raise ValueError("landmark has no cells")
    res = m.spec.resolution
    depth_c = int(round(depth_m / res))
    margin_c = int(round(margin_m / res))
    box = landmark.bbox()
    if relation == "west":
        rect = CellRect(box.i_min - depth_c, box.i_min - 1, box.j_min - margin_c, box.j_max + margin_c)
    elif relation == "east":
        rect = CellRect(box.i_max + 1, box.i_max + depth_c, box.j_min - margin_c, box.j_max + margin_c)
    elif relation == "north":
        rect = CellRect(box.i_min - margin_c, box.i_max + margin_c, box.j_max + 1, box.j_max + depth_c)
    else:  # south
        rect = CellRect(box.i_min - margin_c, box.i_max + margin_c, box.j_min - depth_c, box.j_min - 1)
    return rect.clipped(m.spec.cells_per_side)


# --- snapshot IO ---------------------------------------------------------------

def _rle_row(row: np.ndarray) -> list[list[int]]:
    runs = []
    if row.size:
        change = np.flatnonzero(np.diff(row)) + 1
        starts = np.concatenate(([0], change))
        ends = np.concatenate((change, [row.size]))
        for s, e in zip(starts, ends):
            runs.append([int(e - s), int(row[s])])
    return runs


def map_to_json(m: CognitiveMap) -> dict:
    """Snapshot consumed by the replay console: objects plus RLE occupancy.

    Occupancy rows are indexed by i (east axis); each row is run-length
    encoded over j with values 0=Unknown, 1=Free, 2=Occupied.
    """
    return {
        "spec": m.spec.to_json(),
        "objects": [
            {
                "map_id": obj.map_id,
                "class": obj.class_label,
                "caption": obj.caption,
                "cells": sorted([list(c) for c in obj.cells]),
            }
            for _, obj in sorted(m.objects.items())
        ],
        "occupancy": [_rle_row(m.occupancy[i]) for i in range(m.occupancy.shape[0])],
    }


def map_from_json(data: dict) -> CognitiveMap:
    spec = GridSpec.from_json(data["spec"])
    objects = {}
    for raw in data["objects"]:
        obj = MapObject(
            map_id=int(raw["map_id"]),
            class_label=raw["class"],
            caption=raw["caption"],
            cells=frozenset((int(i), int(j)) for i, j in raw["cells"]),
        )
        objects[obj.map_id] = obj
    n = spec.cells_per_side
    occ = np.full((n, n), UNKNOWN, dtype=np.uint8)
    for i, runs in enumerate(data["occupancy"]):
        j = 0
        for count, value in runs:
            occ[i, j : j + count] = value
            j += count
    next_id = max(objects) + 1 if objects else 1
    return CognitiveMap(spec=spec, objects=objects, occupancy=occ, next_id=next_id)


def map_json_str(m: CognitiveMap) -> str:
    return json.dumps(map_to_json(m), sort_keys=True)
