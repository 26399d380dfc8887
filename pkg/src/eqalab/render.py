"""Per-pixel raycast rendering of depth / semantic / instance observations.

Rays are cast through integer pixel indices: the ray for pixel (u, v) has
camera-frame direction ((u - cx)/fx, 1, -(v - cy)/fy) with components
(right, forward, up), rotated into the world by the pose yaw. The forward
component is 1, so the ray parameter t equals the z-depth directly and
back-projection is linear in pixel coordinates.

Entities are axis-aligned boxes (footprint extruded to height); the nearest
box entry in front of the camera wins. The ground plane z = 0 renders with a
reserved color and no instance id. Misses get max_range depth and sky color.
"""

from __future__ import annotations

import hashlib
import io
import json
import math

import numpy as np
from PIL import Image

from .world import CameraModel, Observation, Pose, WorldModel

SKY_COLOR = (135, 206, 235)
GROUND_COLOR = (96, 96, 88)
_RESERVED_COLORS = {SKY_COLOR, GROUND_COLOR}


def entity_color(entity_id: str) -> tuple[int, int, int]:
    """Deterministic 24-bit false color for an entity id."""
    salt = b""
    while True:
        digest = hashlib.sha256(entity_id.encode("utf-8") + salt).digest()
        color = (digest[0], digest[1], digest[2])
        if color not in _RESERVED_COLORS:
            return color
        salt += b"#"


def pixel_directions(camera: CameraModel, pose: Pose) -> np.ndarray:
    """World-frame ray directions per pixel, shape (H, W, 3), forward = 1."""
    u = np.arange(camera.width, dtype=np.float64)
    v = np.arange(camera.height, dtype=np.float64)
    right_coef = (u - camera.cx) / camera.fx  # (W,)
    up_coef = -(v - camera.cy) / camera.fy  # (H,)
    hx, hy = pose.heading()
    rx, ry = pose.right()
    dirs = np.empty((camera.height, camera.width, 3), dtype=np.float64)
    dirs[:, :, 0] = rx * right_coef[None, :] + hx
    dirs[:, :, 1] = ry * right_coef[None, :] + hy
    dirs[:, :, 2] = up_coef[:, None]
    return dirs


def _slab_interval(origin: float, d: np.ndarray, lo: float, hi: float):
    """Per-pixel (near, far) parameter interval for one axis slab."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t0 = (lo - origin) / d
        t1 = (hi - origin) / d
    near = np.minimum(t0, t1)
    far = np.maximum(t0, t1)
    parallel = d == 0.0
    if np.any(parallel):
        inside = lo < origin < hi
        near = np.where(parallel, -np.inf if inside else np.inf, near)
        far = np.where(parallel, np.inf if inside else -np.inf, far)
    return near, far


def render(world: WorldModel, pose: Pose, camera: CameraModel) -> Observation:
    """Render one observation. Pure and bit-deterministic for a given pose."""
    if not world.bounds.contains(pose.x, pose.y):
        raise ValueError("render pose outside world bounds")
    dirs = pixel_directions(camera, pose)
    dx, dy, dz = dirs[:, :, 0], dirs[:, :, 1], dirs[:, :, 2]

    best_t = np.full((camera.height, camera.width), np.inf)
    best_idx = np.full((camera.height, camera.width), -1, dtype=np.int32)

    for idx, ent in enumerate(world.entities):
        fp = ent.footprint
        nx, fx_ = _slab_interval(pose.x, dx, fp.x_min, fp.x_max)
        ny, fy_ = _slab_interval(pose.y, dy, fp.y_min, fp.y_max)
        nz, fz_ = _slab_interval(pose.z, dz, 0.0, ent.height)
        near = np.maximum(np.maximum(nx, ny), nz)
        far = np.minimum(np.minimum(fx_, fy_), fz_)
        hit = (near < far) & (near > 0.0) & (near < camera.max_range)
        closer = hit & (near < best_t)
        best_t = np.where(closer, near, best_t)
        best_idx = np.where(closer, idx, best_idx)

    # Ground plane z = 0: wins only where strictly nearer than any entity.
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ground = np.where(dz < 0.0, -pose.z / dz, np.inf)
    ground = (t_ground > 0.0) & (t_ground < camera.max_range) & (t_ground < best_t)

    entity_vis = (best_idx >= 0) & ~ground
    depth = np.where(ground, t_ground, np.where(entity_vis, best_t, camera.max_range))
    instance = np.where(entity_vis, best_idx, -1).astype(np.int32)

    semantic = np.empty((camera.height, camera.width, 3), dtype=np.uint8)
    semantic[:, :] = SKY_COLOR
    semantic[ground] = GROUND_COLOR
    for idx, ent in enumerate(world.entities):
        mask = instance == idx
        if mask.any():
            semantic[mask] = entity_color(ent.id)

    return Observation(
        depth=depth,
        semantic=semantic,
        instance_mask=instance,
        entity_ids=tuple(e.id for e in world.entities),
        pose=pose,
    )


def visible_entities(obs: Observation, min_pixels: int) -> list[tuple[str, int]]:
    """Entity ids covering at least min_pixels, largest first (ties by id)."""
    mask = obs.instance_mask
    counts: dict[str, int] = {}
    if mask.size:
        flat = mask[mask >= 0]
        if flat.size:
            binned = np.bincount(flat, minlength=len(obs.entity_ids))
            for idx, count in enumerate(binned):
                if count >= min_pixels and count > 0:
                    counts[obs.entity_ids[idx]] = int(count)
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


# --- observation export ---------------------------------------------------

def depth_png_bytes(obs: Observation) -> bytes:
    """Depth as 16-bit grayscale PNG in millimeters (saturates at 65.535 m)."""
    mm = np.clip(np.round(obs.depth * 1000.0), 0, 65535).astype(np.uint16)
    img = Image.fromarray(mm)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def semantic_png_bytes(obs: Observation) -> bytes:
    img = Image.fromarray(obs.semantic, mode="RGB")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def mask_to_rle(obs: Observation) -> dict:
    """Instance mask as row-major run-length encoding of entity ids."""
    flat = obs.instance_mask.ravel()
    runs: list[list] = []
    if flat.size:
        change = np.flatnonzero(np.diff(flat)) + 1
        starts = np.concatenate(([0], change))
        ends = np.concatenate((change, [flat.size]))
        for s, e in zip(starts, ends):
            idx = int(flat[s])
            runs.append([int(e - s), None if idx < 0 else obs.entity_ids[idx]])
    return {
        "width": obs.instance_mask.shape[1],
        "height": obs.instance_mask.shape[0],
        "runs": runs,
    }


def mask_from_rle(data: dict) -> np.ndarray:
    """Decode an RLE mask back to an (H, W) array of entity ids (object dtype)."""
    total = data["width"] * data["height"]
    out = np.empty(total, dtype=object)
    pos = 0
    for count, ent_id in data["runs"]:
        out[pos : pos + count] = ent_id
        pos += count
    if pos != total:
        raise ValueError(f"RLE covers {pos} pixels, expected {total}")
    return out.reshape(data["height"], data["width"])


def mask_rle_json(obs: Observation) -> str:
    return json.dumps(mask_to_rle(obs), sort_keys=True)


def image_summary(obs: Observation, world: WorldModel, min_pixels: int) -> list[dict]:
    """Structured stand-in for the image used by the scripted model backend.

    Lists each sufficiently-visible entity with its class, pixel count, and
    attributes, sorted by visual prominence.
    """
    summary = []
    for ent_id, pixels in visible_entities(obs, min_pixels):
        ent = world.entity(ent_id)
        summary.append(
            {
                "id": ent.id,
                "class": ent.class_label,
                "pixels": pixels,
                "attributes": dict(sorted(ent.attributes.items())),
            }
        )
    return summary


def yaw_to_heading_delta(current_yaw: float, target_yaw: float) -> float:
    """Signed shortest rotation from current to target yaw, in (-180, 180]."""
    delta = math.fmod(target_yaw - current_yaw, 360.0)
    if delta > 180.0:
        delta -= 360.0
    elif delta <= -180.0:
        delta += 360.0
    return delta
