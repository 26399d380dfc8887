"""Low-level action generators: navigator, explorer, collector.

All three drive the simulator through the episode context, which charges
budgets and folds every new observation into the cognitive map. The
navigator and explorer are deterministic policies over the map; the
collector defers to the vision model round by round.
"""

from __future__ import annotations

import json
import math
import re
from typing import Optional

from .gateway import GatewayError, ModelRequest
from .mapping import OCCUPIED, CellRect, region_of
from .pathfinding import astar, collinear_runs, truncate_path
from .planner import extract_json_block
from .render import yaw_to_heading_delta
from .world import KeepStill, Move, Turn

_DETECT_ID = re.compile(r"^yes(?:\s+id=(\S+))?", re.IGNORECASE)

COLLECTOR_ACTIONS = (
    "MoveForward",
    "MoveBack",
    "MoveLeft",
    "MoveRight",
    "MoveUp",
    "MoveDown",
    "TurnLeft",
    "TurnRight",
    "KeepStill",
)


def _turn_to(ctx, target_yaw: float, pool: str) -> None:
    delta = yaw_to_heading_delta(ctx.pose.yaw, target_yaw)
    if abs(delta) > 1e-9:
        direction = "right" if delta > 0 else "left"
        ctx.execute(Turn(direction, abs(delta)), pool)


def _move_toward(ctx, x: float, y: float, max_move: float, pool: str) -> None:
    dx = x - ctx.pose.x
    dy = y - ctx.pose.y
    dist = math.hypot(dx, dy)
    if dist < 1e-9:
        return
    yaw = math.degrees(math.atan2(dx, dy)) % 360.0
    _turn_to(ctx, yaw, pool)
    ctx.execute(Move("forward", min(dist, max_move)), pool)


def _execute_path(ctx, path: list[tuple[int, int]], max_move: float, pool: str) -> None:
    """Walk a cell path as turn-then-move segments, merging collinear cells."""
    spec = ctx.map.spec
    for _, last_cell in collinear_runs(path):
        cx, cy = spec.cell_center(*last_cell)
        _move_toward(ctx, cx, cy, max_move, pool)


def _nearest_open_cell(ctx, region: CellRect) -> Optional[tuple[int, int]]:
    if region.is_empty:
        return None
    spec = ctx.map.spec
    occ = ctx.map.occupancy
    best = None
    best_key = None
    for i, j in region.cells():
        if occ[i, j] == OCCUPIED:
            continue
        cx, cy = spec.cell_center(i, j)
        d2 = (cx - ctx.pose.x) ** 2 + (cy - ctx.pose.y) ** 2
        key = (d2, i, j)
        if best_key is None or key < best_key:
            best = (i, j)
            best_key = key
    return best


def navigate(ctx, landmark_map_id: int, relation: str) -> str:
    """Approach the region on the given side of a landmark.

    Loops: pick the nearest non-occupied region cell as the navigation
    point, follow an A* path truncated to the step cap, observe, and
    recompute (the navigation point tracks every map update). Ends when
    within the arrival tolerance, or after two consecutive rounds without
    a path, or when the budget pool runs dry (raised to the caller).
    """
    mag = ctx.config.magnitudes
    spec = ctx.map.spec
    no_path_rounds = 0
    while True:
        landmark = ctx.map.get(landmark_map_id)
        if landmark is None:
            return "failed"
        region = region_of(ctx.map, landmark, relation, mag.region_depth_m, mag.region_margin_m)
        nav_cell = _nearest_open_cell(ctx, region)
        if nav_cell is not None:
            cx, cy = spec.cell_center(*nav_cell)
            if math.hypot(ctx.pose.x - cx, ctx.pose.y - cy) <= mag.arrival_tolerance_m:
                return "done"
            path = astar(ctx.map.occupancy, ctx.agent_cell(), nav_cell)
        else:
            path = None
        if path is None or len(path) < 2:
            no_path_rounds += 1
            if no_path_rounds >= 2:
                return "failed"
            ctx.observe()
            continue
        no_path_rounds = 0
        chunk = truncate_path(path, mag.nav_step_m, spec.resolution)
        _execute_path(ctx, chunk, mag.nav_step_m, "nav_explore")
        ctx.observe()


def lattice_points(x0: float, x1: float, y0: float, y1: float, spacing: float) -> list[tuple[float, float]]:
    """Exploration points on a fixed-spacing lattice inside a world rectangle."""
    points = []
    x = x0 + spacing / 2.0
    while x <= x1:
        y = y0 + spacing / 2.0
        while y <= y1:
            points.append((x, y))
            y += spacing
        x += spacing
    return points


def _detection_request(ctx, target_ref: str, target_class: str, target_attrs: dict, payload) -> ModelRequest:
    return ModelRequest(
        role="detector",
        template_id="detector",
        variables={
            "target_ref": target_ref,
            "target_class": target_class,
            "target_attributes": json.dumps(dict(sorted(target_attrs.items())), sort_keys=True),
        },
        image_payload=payload,
    )


def _resolve_detection(ctx, reply: str, result, target_class: str) -> Optional[int]:
    m = _DETECT_ID.match(reply.strip())
    if not m:
        return None
    detected_id = m.group(1)
    if detected_id:
        for idx, source in enumerate(result.added_source_ids):
            if source == detected_id:
                return ctx.map.resolve(result.added_map_ids[idx])
        return None
    # No id in the reply: fall back to the largest added entry of the class.
    best = None
    best_size = -1
    for idx, map_id in enumerate(result.added_map_ids):
        obj = ctx.map.get(map_id)
        if obj is not None and obj.class_label == target_class and len(obj.cells) > best_size:
            best = ctx.map.resolve(map_id)
            best_size = len(obj.cells)
    return best


def explore(
    ctx,
    region: Optional[CellRect],
    target_ref: str,
    target_class: str,
    target_attrs: dict,
) -> Optional[int]:
    """Move-and-look-around search for the target inside a region.

    Lattice points are generated once; the agent visits them nearest-first
    from its current position, looking in four directions at each point
    (three 90-degree right turns after the initial view). Every view goes
    to the detector; a positive detection returns the detected object's map
    id after it is merged into the map.
    """
    mag = ctx.config.magnitudes
    spec = ctx.map.spec
    if region is None:
        half = mag.explore_agent_region_m / 2.0
        x0, x1 = ctx.start_pose.x - half, ctx.start_pose.x + half
        y0, y1 = ctx.start_pose.y - half, ctx.start_pose.y + half
    else:
        if region.is_empty:
            return None
        x0 = spec.origin_x + region.i_min * spec.resolution
        x1 = spec.origin_x + (region.i_max + 1) * spec.resolution
        y0 = spec.origin_y + region.j_min * spec.resolution
        y1 = spec.origin_y + (region.j_max + 1) * spec.resolution
    points = lattice_points(x0, x1, y0, y1, mag.explore_spacing_m)
    if not points:
        return None
    ctx.record.overlays.setdefault("lattice_points", []).extend([list(p) for p in points])

    remaining = list(points)
    while remaining:
        remaining.sort(key=lambda p: ((p[0] - ctx.pose.x) ** 2 + (p[1] - ctx.pose.y) ** 2, p))
        px, py = remaining.pop(0)
        if math.hypot(px - ctx.pose.x, py - ctx.pose.y) > 1.0:
            _move_toward(ctx, px, py, math.inf, "nav_explore")
        for view in range(4):
            if view > 0:
                ctx.execute(Turn("right", 90.0), "nav_explore")
            result = ctx.observe()
            request = _detection_request(
                ctx, target_ref, target_class, target_attrs, ctx.image_payload(result)
            )
            reply = ctx.gateway.complete(request)
            if reply.strip().lower().startswith("yes"):
                found = _resolve_detection(ctx, reply, result, target_class)
                if found is not None:
                    return found
    return None


def _collector_action(name: str, mag) -> Move | Turn | KeepStill:
    table = {
        "MoveForward": Move("forward", mag.collect_move_m),
        "MoveBack": Move("back", mag.collect_move_m),
        "MoveLeft": Move("left", mag.collect_move_m),
        "MoveRight": Move("right", mag.collect_move_m),
        "MoveUp": Move("up", mag.collect_move_m),
        "MoveDown": Move("down", mag.collect_move_m),
        "TurnLeft": Turn("left", mag.collect_turn_deg),
        "TurnRight": Turn("right", mag.collect_turn_deg),
        "KeepStill": KeepStill(),
    }
    return table.get(name, KeepStill())


def collect(
    ctx,
    requirement: str,
    target_ref: str,
    target_class: str,
    target_attrs: dict,
) -> str:
    """Round-based information gathering near a located target.

    Each round renders, asks the model for (answer fragment, adjustment
    action), and executes the action with the fine-grained magnitudes.
    Stops on KeepStill, the round cap, or an exhausted collection budget;
    returns the last non-empty fragment (empty string if none).
    """
    mag = ctx.config.magnitudes
    best = ""
    rounds = 0
    cap = ctx.config.budgets.collection_steps
    while rounds < cap and ctx.budget.remaining("collection") > 0:
        result = ctx.observe()
        request = ModelRequest(
            role="collector",
            template_id="collector",
            variables={
                "requirement": requirement,
                "target_ref": target_ref,
                "target_class": target_class,
                "target_attributes": json.dumps(dict(sorted(target_attrs.items())), sort_keys=True),
            },
            image_payload=ctx.image_payload(result),
        )
        try:
            reply = ctx.gateway.complete(request)
        except GatewayError:
            break
        rounds += 1
        try:
            data = extract_json_block(reply)
            fragment = data.get("answer")
            action_name = data.get("action", "KeepStill")
        except ValueError:
            break
        if fragment:
            best = str(fragment)
        action = _collector_action(action_name, mag)
        ctx.execute(action, "collection")
        if isinstance(action, KeepStill):
            break
    return best
