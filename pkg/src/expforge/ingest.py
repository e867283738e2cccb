"""Annotated gameplay traces and spritesheets.

Traces carry per-frame camera position, held inputs, and world-coordinate
sprite placements (the lossless equivalent of a vision pipeline's per-frame
sprite detections). Spritesheets carry palette-index pixel matrices. Sprites
are grouped by one merge pass of single-linkage clustering over bag-of-3x3
pixel-feature distances.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .facts import BUTTONS

TILE = 16
DEFAULT_CLUSTER_THRESHOLD = 0.4


class TraceError(Exception):
    pass


class SpritesheetError(Exception):
    pass


@dataclass(frozen=True)
class SpritePlacement:
    sprite_id: str
    x: int
    y: int
    w: int
    h: int

    def to_json(self) -> dict:
        return {"spriteId": self.sprite_id, "x": self.x, "y": self.y, "w": self.w, "h": self.h}


@dataclass(frozen=True)
class FrameObservation:
    t: int
    camera_x: int
    camera_y: int
    inputs: frozenset[str]
    sprites: tuple[SpritePlacement, ...]


@dataclass(frozen=True)
class Spritesheet:
    sprites: dict[str, tuple[tuple[int, ...], ...]]  # sprite id -> pixel matrix

    def size(self, sprite_id: str) -> tuple[int, int]:
        pixels = self.sprites[sprite_id]
        return len(pixels[0]), len(pixels)  # (width, height)


@dataclass
class LevelChunk:
    """A frame-sized slice of level content: camera-relative placements."""

    width: int
    height: int
    sprites: tuple[SpritePlacement, ...]
    complete: bool = field(default=True, compare=False)

    def to_json(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "sprites": [s.to_json() for s in sorted(self.sprites, key=lambda p: (p.x, p.y, p.sprite_id))],
        }


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def load_trace(path: str | Path) -> list[FrameObservation]:
    """Parse and validate a trace file; frames come back sorted by t."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if "frames" not in raw:
        raise TraceError(f"{path}: missing 'frames'")
    frames: list[FrameObservation] = []
    for i, fr in enumerate(raw["frames"]):
        where = f"{path}: frames[{i}]"
        for key in ("t", "camera", "inputs", "sprites"):
            if key not in fr:
                raise TraceError(f"{where}: missing field {key!r}")
        inputs = frozenset(fr["inputs"])
        bad = inputs - set(BUTTONS)
        if bad:
            raise TraceError(f"{where}: unknown buttons {sorted(bad)}")
        sprites = []
        for j, sp in enumerate(fr["sprites"]):
            for key in ("spriteId", "x", "y", "w", "h"):
                if key not in sp:
                    raise TraceError(f"{where}.sprites[{j}]: missing field {key!r}")
            if sp["w"] <= 0 or sp["h"] <= 0:
                raise TraceError(f"{where}.sprites[{j}]: non-positive size")
            sprites.append(SpritePlacement(sp["spriteId"], int(sp["x"]), int(sp["y"]),
                                           int(sp["w"]), int(sp["h"])))
        frames.append(FrameObservation(
            t=int(fr["t"]), camera_x=int(fr["camera"]["x"]), camera_y=int(fr["camera"]["y"]),
            inputs=inputs, sprites=tuple(sprites),
        ))
    frames.sort(key=lambda f: f.t)
    for prev, cur in zip(frames, frames[1:]):
        if cur.t == prev.t:
            raise TraceError(f"{path}: duplicate frame index t={cur.t}")
    return frames


def trace_game_name(path: str | Path) -> str:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return raw.get("game", Path(path).stem)


def trace_screen(path: str | Path) -> tuple[int, int] | None:
    """Camera window size, when the trace declares one."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if "screen" in raw:
        return int(raw["screen"]["w"]), int(raw["screen"]["h"])
    return None


def trace_player(path: str | Path) -> str | None:
    """Player sprite id, when the trace declares one."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return raw.get("player")


def load_spritesheet(path: str | Path) -> Spritesheet:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if "sprites" not in raw:
        raise SpritesheetError(f"{path}: missing 'sprites'")
    sheet: dict[str, tuple[tuple[int, ...], ...]] = {}
    for i, sp in enumerate(raw["sprites"]):
        if "spriteId" not in sp or "pixels" not in sp:
            raise SpritesheetError(f"{path}: sprites[{i}]: missing spriteId/pixels")
        sid = sp["spriteId"]
        if sid in sheet:
            raise SpritesheetError(f"{path}: duplicate sprite id {sid!r}")
        pixels = tuple(tuple(int(v) for v in row) for row in sp["pixels"])
        if not pixels or not pixels[0]:
            raise SpritesheetError(f"{path}: sprites[{i}] (id={sid}): empty pixel matrix")
        widths = {len(row) for row in pixels}
        if len(widths) != 1:
            raise SpritesheetError(f"{path}: sprites[{i}] (id={sid}): ragged pixel matrix")
        if any(v < 0 for row in pixels for v in row):
            raise SpritesheetError(f"{path}: sprites[{i}] (id={sid}): negative palette index")
        sheet[sid] = pixels
    return Spritesheet(sheet)


# ---------------------------------------------------------------------------
# Visual similarity
# ---------------------------------------------------------------------------

def sprite_bag_features(pixels: tuple[tuple[int, ...], ...]) -> Counter:
    """Multiset of all overlapping 3x3 windows; sprites under 3x3 are
    zero-padded (palette index 0 is transparency)."""
    h, w = len(pixels), len(pixels[0])
    if h < 3 or w < 3:
        padded = [list(row) + [0] * max(0, 3 - w) for row in pixels]
        while len(padded) < 3:
            padded.append([0] * max(w, 3))
        pixels = tuple(tuple(row) for row in padded)
        h, w = len(pixels), len(pixels[0])
    bag: Counter = Counter()
    for r in range(h - 2):
        for c in range(w - 2):
            bag[tuple(pixels[r + i][c:c + 3] for i in range(3))] += 1
    return bag


def sprite_distance(a: tuple[tuple[int, ...], ...], b: tuple[tuple[int, ...], ...]) -> float:
    """Symmetric-difference count of the feature bags over their total size."""
    bag_a, bag_b = sprite_bag_features(a), sprite_bag_features(b)
    total = sum(bag_a.values()) + sum(bag_b.values())
    if total == 0:
        return 0.0
    disjoint = sum((bag_a - bag_b).values()) + sum((bag_b - bag_a).values())
    return disjoint / total


def cluster_sprites(sheet: Spritesheet, threshold: float = DEFAULT_CLUSTER_THRESHOLD) -> list[frozenset[str]]:
    """Connected components of the pairs-closer-than-threshold graph
    (single-linkage, one merge pass). Every sprite lands in exactly one group."""
    ids = sorted(sheet.sprites)
    parent = {sid: sid for sid in ids}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            if sprite_distance(sheet.sprites[a], sheet.sprites[b]) < threshold:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
    groups: dict[str, set[str]] = {}
    for sid in ids:
        groups.setdefault(find(sid), set()).add(sid)
    return [frozenset(groups[root]) for root in sorted(groups)]


def group_leader_map(groups: list[frozenset[str]]) -> dict[str, str]:
    return {sid: min(group) for group in groups for sid in group}


# ---------------------------------------------------------------------------
# Frames -> chunks
# ---------------------------------------------------------------------------

def chunk_bounds(frames: list[FrameObservation],
                 screen: tuple[int, int] | None = None) -> tuple[int, int]:
    """Window size shared by all chunks of a trace: the declared screen size,
    else the max camera-relative extent observed, rounded up to whole tiles."""
    if screen is not None:
        return screen
    max_x = max((s.x + s.w - f.camera_x for f in frames for s in f.sprites), default=TILE)
    max_y = max((s.y + s.h - f.camera_y for f in frames for s in f.sprites), default=TILE)
    round_up = lambda v: ((max(v, 1) + TILE - 1) // TILE) * TILE
    return round_up(max_x), round_up(max_y)


def chunk_from_frame(frame: FrameObservation, bounds: tuple[int, int],
                     rename: dict[str, str] | None = None) -> LevelChunk:
    """Re-express a frame as a camera-relative chunk, clipped to the window."""
    width, height = bounds
    kept = []
    for s in frame.sprites:
        x, y = s.x - frame.camera_x, s.y - frame.camera_y
        if x < 0 or y < 0 or x + s.w > width or y + s.h > height:
            continue
        sid = rename.get(s.sprite_id, s.sprite_id) if rename else s.sprite_id
        kept.append(SpritePlacement(sid, x, y, s.w, s.h))
    kept.sort(key=lambda p: (p.x, p.y, p.sprite_id))
    return LevelChunk(width, height, tuple(kept))


def rename_frames(frames: list[FrameObservation], rename: dict[str, str]) -> list[FrameObservation]:
    """Rewrite trace sprite ids (e.g. onto cluster leaders) for learning."""
    out = []
    for f in frames:
        sprites = tuple(
            SpritePlacement(rename.get(s.sprite_id, s.sprite_id), s.x, s.y, s.w, s.h)
            for s in f.sprites
        )
        out.append(FrameObservation(f.t, f.camera_x, f.camera_y, f.inputs, sprites))
    return out
