"""Builds the committed fixture corpus: three synthetic games (walker, faller,
climber) with spritesheets and 60-frame traces, plus the 12-sprite target
spritesheet used for proto-graph tests.

Each game's dynamics are implemented here directly as small hand-written state
machines — ground truth stays independent of the package's rule machinery, so
the learner must recover behaviorally equivalent rules to replay these traces.

Run from the repo root:  python3 tests/fixtures/generate.py
"""

from __future__ import annotations

import json
from pathlib import Path

TILE = 16
SCREEN = {"w": 96, "h": 96}
FRAMES = 60

OUT = Path(__file__).parent


# ---------------------------------------------------------------------------
# Sprite art (palette indices, 0 = transparent). Sizes vary by family — the
# animation width/height is the visual gradient the node mapping can see.
# ---------------------------------------------------------------------------

PLAYER_SIZE = (12, 16)
BLOCK_SIZE = (16, 16)
HAZARD_SIZE = (16, 12)
DECO_SIZE = (8, 8)


def blank(w: int, h: int) -> list[list[int]]:
    return [[0] * w for _ in range(h)]


def figure(body: int, trim: int, eyes: int) -> list[list[int]]:
    w, h = PLAYER_SIZE
    px = blank(w, h)
    for r in range(2, h):
        for c in range(2, w - 2):
            px[r][c] = body
    for c in range(3, w - 3):
        px[1][c] = trim
    px[4][4] = px[4][w - 5] = eyes
    for c in range(4, w - 4):
        px[h - 1][c] = trim
    return px


def bricks(mortar: int, face: int) -> list[list[int]]:
    w, h = BLOCK_SIZE
    px = [[face] * w for _ in range(h)]
    for r in range(h):
        if r % 4 == 0:
            px[r] = [mortar] * w
        else:
            offset = 0 if (r // 4) % 2 == 0 else 4
            for c in range(offset, w, 8):
                px[r][c] = mortar
    return px


def triangle(edge: int, fill: int) -> list[list[int]]:
    w, h = HAZARD_SIZE
    px = blank(w, h)
    mid = w // 2
    for r in range(h):
        span = (r * mid) // h
        for c in range(mid - span, mid + span):
            px[r][c] = fill
        px[r][max(mid - span, 0)] = edge
        px[r][min(mid + span, w - 1)] = edge
    return px


def blob(base: int, speck: int) -> list[list[int]]:
    w, h = HAZARD_SIZE
    px = blank(w, h)
    cy, cx = h // 2, w // 2
    for r in range(h):
        for c in range(w):
            if ((r - cy) * 2) ** 2 + (c - cx) ** 2 <= (w // 2) ** 2 + 8:
                px[r][c] = base
    for r, c in ((3, 5), (5, 9), (7, 4), (8, 10)):
        if px[r][c]:
            px[r][c] = speck
    return px


def diamond(edge: int, core: int) -> list[list[int]]:
    w, h = DECO_SIZE
    px = blank(w, h)
    mid_r, mid_c = h // 2, w // 2
    for r in range(h):
        span = mid_c - 1 - abs(r - mid_r)
        if span < 0:
            continue
        for c in range(mid_c - span, mid_c + span + 1):
            px[r][c] = core
        px[r][mid_c - span] = edge
        px[r][min(mid_c + span, w - 1)] = edge
    return px


def checker(a: int, b: int) -> list[list[int]]:
    w, h = BLOCK_SIZE
    return [[a if (r // 2 + c // 2) % 2 == 0 else b for c in range(w)] for r in range(h)]


def vary(px: list[list[int]], seed_points: list[tuple[int, int]], color: int) -> list[list[int]]:
    out = [row[:] for row in px]
    for r, c in seed_points:
        out[r][c] = color
    return out


def sheet_json(sprites: dict[str, list[list[int]]]) -> dict:
    return {"sprites": [{"spriteId": sid, "pixels": sprites[sid]} for sid in sorted(sprites)]}


WALKER_SHEET = {
    "hero": figure(1, 2, 3),
    "brick": bricks(4, 5),
    "spike": triangle(6, 7),
}
FALLER_SHEET = {
    "bird": figure(8, 3, 1),
    "rock": blob(9, 10),
    "cloud": blob(11, 11),
}
CLIMBER_SHEET = {
    "imp": figure(12, 13, 2),
    "crystal": diamond(14, 15),
    "moss": checker(5, 3),
}
TARGET_SHEET = {
    "tgt_hero_a": figure(2, 1, 3),
    "tgt_hero_b": vary(figure(2, 1, 3), [(8, 8), (9, 9)], 4),
    "tgt_hero_c": vary(figure(2, 1, 3), [(12, 4), (13, 5)], 5),
    "tgt_block_a": bricks(6, 7),
    "tgt_block_b": vary(bricks(6, 7), [(2, 2), (6, 10)], 8),
    "tgt_block_c": vary(bricks(6, 7), [(10, 3), (14, 12)], 9),
    "tgt_spike_a": triangle(10, 11),
    "tgt_spike_b": vary(triangle(10, 11), [(8, 7), (9, 8)], 12),
    "tgt_spike_c": vary(triangle(10, 11), [(10, 6), (11, 9)], 13),
    "tgt_deco_a": diamond(14, 15),
    "tgt_deco_b": vary(diamond(14, 15), [(4, 4)], 1),
    "tgt_deco_c": vary(diamond(14, 15), [(3, 4)], 2),
}

SPRITE_SIZES = {
    "hero": PLAYER_SIZE, "bird": PLAYER_SIZE, "imp": PLAYER_SIZE,
    "brick": BLOCK_SIZE, "moss": BLOCK_SIZE,
    "spike": HAZARD_SIZE, "rock": HAZARD_SIZE, "crystal": HAZARD_SIZE,
    "cloud": DECO_SIZE,
}


# ---------------------------------------------------------------------------
# Trace harness
# ---------------------------------------------------------------------------

class World:
    def __init__(self, player_id: str, player_xy: tuple[int, int],
                 statics: list[tuple[str, int, int]]):
        self.player_id = player_id
        self.px, self.py = player_xy
        self.vx = self.vy = 0
        self.alive = True
        self.statics = statics
        self.cam_x = self.cam_y = 0
        self.cam_vx = 0

    def frame(self, t: int, buttons: set[str]) -> dict:
        sprites = [
            {"spriteId": sid, "x": x, "y": y,
             "w": SPRITE_SIZES[sid][0], "h": SPRITE_SIZES[sid][1]}
            for sid, x, y in self.statics
        ]
        if self.alive:
            sprites.append({"spriteId": self.player_id, "x": self.px, "y": self.py,
                            "w": SPRITE_SIZES[self.player_id][0],
                            "h": SPRITE_SIZES[self.player_id][1]})
        sprites.sort(key=lambda s: (s["spriteId"], s["x"], s["y"]))
        return {
            "t": t,
            "camera": {"x": self.cam_x, "y": self.cam_y},
            "inputs": sorted(buttons),
            "sprites": sprites,
        }

    def overlap(self, kinds: set[str]) -> bool:
        return any(sid in kinds and x == self.px and y == self.py
                   for sid, x, y in self.statics)


def emit(world: World, stepper, script, frames: int = FRAMES) -> list[dict]:
    out = []
    for t in range(frames):
        buttons = script(t, world) if world.alive else set()
        out.append(world.frame(t, buttons))
        stepper(world, buttons)
    return out


# ---------------------------------------------------------------------------
# Walker: walk + gravity via a fixed jump arc + input jump; spikes kill
# ---------------------------------------------------------------------------

GROUND_Y = 80
STAND_Y = GROUND_Y - TILE
APEX_Y = STAND_Y - TILE
WALK_SPEED = 4
WALKER_SPIKES = (80, 224)  # second spike is the scripted death
# flat-ground jumps: one near a spike, one isolated (>48px from any spike) so
# the learner's apex rule generalizes onto the ground fact, not spike adjacency
WALKER_JUMPS = (40, WALKER_SPIKES[0] - 4)
WALKER_HOLD_JUMP = 144


def walker_world() -> World:
    statics = [("brick", x, GROUND_Y) for x in range(0, 320, TILE)]
    statics += [("spike", x, STAND_Y) for x in WALKER_SPIKES]
    return World("hero", (16, STAND_Y), statics)


def walker_step(w: World, buttons: set[str]) -> None:
    if w.alive and w.overlap({"spike"}):
        w.alive = False
    if w.alive:
        if w.vx == 0 and "right" in buttons:
            w.vx = WALK_SPEED
        if w.vy == 0:
            if w.py == APEX_Y:
                w.vy = TILE  # fall from the apex, input or not
            elif w.py == STAND_Y and "up" in buttons:
                w.vy = -TILE
        elif w.vy == -TILE:
            w.vy = 0  # hang one tick at the apex
        elif w.vy == TILE and w.py == STAND_Y:
            w.vy = 0
        w.px += w.vx
        w.py += w.vy
    if w.cam_vx == 0 and "right" in buttons:
        w.cam_vx = WALK_SPEED
    w.cam_x += w.cam_vx


def walker_script(t: int, w: World) -> set[str]:
    buttons = set()
    if t >= 2:
        buttons.add("right")
    if w.py == STAND_Y and w.vy == 0 and w.px in WALKER_JUMPS:
        buttons.add("up")
    # a held jump: the apex-with-input tick must appear in training
    if w.px in (WALKER_HOLD_JUMP, WALKER_HOLD_JUMP + 4, WALKER_HOLD_JUMP + 8) \
            and w.vy != TILE:
        buttons.add("up")
    return buttons


# ---------------------------------------------------------------------------
# Faller: constant fall, up-taps climb, auto-run right; rocks kill on exact
# overlap. The vertical plan is searched so the bird dies on the second
# column's y=64 rock at the exact crossing tick.
# ---------------------------------------------------------------------------

FALL_SPEED = 4
FALLER_COL1 = [(64, y) for y in (0, 16, 32, 64, 80)]   # gap at 48
FALLER_COL2 = [(192, y) for y in (0, 32, 48, 64, 80)]  # gap at 16
FALLER_CLOUDS = [(32, 0), (192, 0)]  # outside the death cell's 48px envelope
FALLER_DEATH_T = 45  # x(t) = 16 + 4*(t-1) crosses the second column here


def faller_world() -> World:
    statics = [("rock", x, y) for x, y in FALLER_COL1 + FALLER_COL2]
    statics += [("cloud", x, y) for x, y in FALLER_CLOUDS]
    return World("bird", (16, 40), statics)


def faller_vy(vy: int, up: bool) -> int:
    if vy == -FALL_SPEED:
        return 0
    return -FALL_SPEED if up else FALL_SPEED


def faller_step(w: World, buttons: set[str]) -> None:
    if w.alive and w.overlap({"rock"}):
        w.alive = False
    if w.alive:
        if w.vx == 0 and "right" in buttons:
            w.vx = FALL_SPEED
        w.vy = faller_vy(w.vy, "up" in buttons)
        w.px += w.vx
        w.py += w.vy
    if w.cam_vx == 0 and "right" in buttons:
        w.cam_vx = FALL_SPEED
    w.cam_x += w.cam_vx


def plan_faller_vertical() -> dict[int, bool]:
    """Search the up-tap schedule: touch the rock row early while off-column
    (teaching the learner that same-row alone is survivable), avoid the column
    cells, and hit y=64 exactly when crossing the second column."""
    start = (1, 44, FALL_SPEED, False)  # (t, y, vy, hovered): tick 0 already fell
    goal_t = FALLER_DEATH_T
    best: dict[tuple, tuple | None] = {start: None}
    frontier = [start]
    while frontier:
        nxt = []
        for state in frontier:
            t, y, vy, hovered = state
            if t == goal_t:
                continue
            for up in (False, True):
                vy2 = faller_vy(vy, up)
                y2 = y + vy2
                t2 = t + 1
                if not (0 <= y2 <= 80):
                    continue
                x2 = 16 + 4 * (t2 - 1)
                if t2 != goal_t and any(x2 == cx and y2 == cy
                                        for cx, cy in FALLER_COL1 + FALLER_COL2):
                    continue  # no accidental deaths
                if t2 == goal_t and y2 != 64:
                    continue
                hovered2 = hovered or (y2 == 64 and t2 < 12)
                key = (t2, y2, vy2, hovered2)
                if key not in best:
                    best[key] = (state, up)
                    nxt.append(key)
        frontier = nxt
    goals = sorted(k for k in best if k[0] == goal_t and k[1] == 64 and k[3])
    assert goals, "faller plan: no path to the death cell"
    taps: dict[int, bool] = {}
    node = goals[0]
    while best[node] is not None:
        prev, up = best[node]
        taps[prev[0]] = up
        node = prev
    assert any(y == 64 and t < 12 for t, y, _ in walk_plan(taps))
    return taps


def walk_plan(taps: dict[int, bool]):
    t, y, vy = 1, 44, FALL_SPEED
    states = [(t, y, vy)]
    while t < FALLER_DEATH_T:
        vy = faller_vy(vy, taps.get(t, False))
        y += vy
        t += 1
        states.append((t, y, vy))
    return states


FALLER_TAPS = plan_faller_vertical()


def faller_script(t: int, w: World) -> set[str]:
    buttons = set()
    if t >= 1:
        buttons.add("right")
    if FALLER_TAPS.get(t, False):
        buttons.add("up")
    return buttons


# ---------------------------------------------------------------------------
# Climber: four-direction tap movement, no gravity; crystals kill on exact
# overlap. Greedy per-axis pilot toward waypoints, ending on a crystal.
# ---------------------------------------------------------------------------

# the killer crystal (80,56) is the only sprite inside its own 48px envelope,
# so the learned death conditions can only name its exact-overlap offsets; the
# other two crystals witness near-miss offsets (same column / same row) alive
CLIMB_SPEED = 4
CLIMBER_CRYSTALS = [(64, 0), (16, 48), (80, 56)]
CLIMBER_MOSS = [(0, 0), (16, 80)]
CLIMBER_WAYPOINTS = [(64, 20), (48, 40), (80, 56)]  # the left leg teaches "left"


def climber_world() -> World:
    statics = [("crystal", x, y) for x, y in CLIMBER_CRYSTALS]
    statics += [("moss", x, y) for x, y in CLIMBER_MOSS]
    return World("imp", (48, 48), statics)


def _tap_axis(v: int, pos_button: str, neg_button: str, err: int) -> str | None:
    if v != 0 or err == 0:
        return None  # stop rule will zero it; the move happened on the set tick
    return pos_button if err > 0 else neg_button


def climber_step(w: World, buttons: set[str]) -> None:
    if w.alive and w.overlap({"crystal"}):
        w.alive = False
    if w.alive:
        if w.vx == 0:
            w.vx = CLIMB_SPEED if "right" in buttons else -CLIMB_SPEED if "left" in buttons else 0
        else:
            w.vx = 0
        if w.vy == 0:
            w.vy = -CLIMB_SPEED if "up" in buttons else CLIMB_SPEED if "down" in buttons else 0
        else:
            w.vy = 0
        w.px += w.vx
        w.py += w.vy


def climber_script(t: int, w: World) -> set[str]:
    # idle first so the spawn-adjacent near-miss offsets enter the fact stream
    if t < 2:
        return set()
    # both axes tap concurrently (diagonals allowed; rules learn independently)
    tx, ty = CLIMBER_WAYPOINTS[0 if t < 20 else 1 if t < 32 else 2]
    buttons = set()
    bx = _tap_axis(w.vx, "right", "left", tx - w.px)
    by = _tap_axis(w.vy, "down", "up", ty - w.py)
    if bx:
        buttons.add(bx)
    if by:
        buttons.add(by)
    return buttons


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

def build_trace(game: str, player: str, world: World, stepper, script) -> dict:
    frames = emit(world, stepper, script)
    alive_last = any(s["spriteId"] == player for s in frames[-1]["sprites"])
    assert not alive_last, f"{game}: the player must die before the trace ends"
    death_t = next(t for t, fr in enumerate(frames)
                   if not any(s["spriteId"] == player for s in fr["sprites"]))
    assert death_t >= 45, f"{game}: death too early (t={death_t})"
    return {"game": game, "player": player, "screen": SCREEN, "frames": frames}


def main() -> None:
    games = [
        ("walker", "hero", WALKER_SHEET, walker_world(), walker_step, walker_script),
        ("faller", "bird", FALLER_SHEET, faller_world(), faller_step, faller_script),
        ("climber", "imp", CLIMBER_SHEET, climber_world(), climber_step, climber_script),
    ]
    for game, player, sheet, world, stepper, script in games:
        trace = build_trace(game, player, world, stepper, script)
        (OUT / f"{game}.trace.json").write_text(json.dumps(trace, indent=1) + "\n")
        (OUT / f"{game}.sheet.json").write_text(json.dumps(sheet_json(sheet), indent=1) + "\n")
        print(f"{game}: {len(trace['frames'])} frames, {len(sheet)} sprites")
    (OUT / "target.sheet.json").write_text(json.dumps(sheet_json(TARGET_SHEET), indent=1) + "\n")
    print(f"target sheet: {len(TARGET_SHEET)} sprites")


if __name__ == "__main__":
    main()
