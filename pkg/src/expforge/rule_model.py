"""Game engine induction from frame sequences.

Frames become fact sets; prediction fires every rule whose conditions hold
(the post fact replaces the pre fact, latest rule wins a contested pre), then
advances positions by velocities, refreshes derived relationship facts, and
garbage-collects entities that lost their animation fact. Learning greedily
applies the add/modify/remove engine modification that most shrinks the
predicted-vs-actual fact diff, then generalizes conditions while replay stays
exact.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .facts import CAMERA_ID, NONE_ID, Fact, FactKind, Rule
from .ingest import FrameObservation

log = logging.getLogger(__name__)

RELATIONSHIP_RADIUS = 48  # Chebyshev, on top-left anchors

FrameFacts = frozenset

# fact kinds a learned effect may rewrite; relationships are derived, inputs
# are exogenous, and positions follow from velocities (a position-effect
# candidate would always dominate the velocity fix by also repairing every
# recomputed relationship fact, then memorize the trace tick by tick)
_EFFECT_KINDS = (
    FactKind.ANIMATION,
    FactKind.VELOCITY_X, FactKind.VELOCITY_Y,
    FactKind.CAMERA_X, FactKind.CAMERA_Y,
)


class RuleModelError(Exception):
    pass


@dataclass(frozen=True)
class EngineModification:
    """One ruleset edit: add a new rule, drop one, or rewrite one's conditions."""

    action: str  # add | remove | modify
    rule: Rule | None = None
    rule_id: int | None = None
    new_conditions: frozenset[Fact] | None = None


# ---------------------------------------------------------------------------
# Facts from observations
# ---------------------------------------------------------------------------

def _relationship_facts(positions: list[tuple[str, int, int]]) -> set[Fact]:
    # identical (sprite, x, y) instances collapse, matching fact-set semantics
    distinct = sorted(set(positions))
    out: set[Fact] = set()
    for a in distinct:
        for b in distinct:
            if a == b:
                continue
            dx, dy = b[1] - a[1], b[2] - a[2]
            if max(abs(dx), abs(dy)) <= RELATIONSHIP_RADIUS:
                out.add(Fact.relationship_x(a[0], b[0], dx))
                out.add(Fact.relationship_y(a[0], b[0], dy))
    return out


def facts_from_frames(prev: FrameObservation, cur: FrameObservation) -> FrameFacts:
    """Describe `cur` as facts, with velocities read off the prev->cur deltas
    of nearest same-sprite matches."""
    if prev.t >= cur.t:
        raise RuleModelError(f"frames out of order: {prev.t} !< {cur.t}")
    facts: set[Fact] = set()
    for s in cur.sprites:
        facts.add(Fact.animation(s.sprite_id, s.w, s.h))
        facts.add(Fact.spatial(s.sprite_id, s.x, s.y))
    facts.add(Fact.camera_x(cur.camera_x))
    facts.add(Fact.camera_y(cur.camera_y))
    facts.add(Fact.velocity_x(CAMERA_ID, cur.camera_x - prev.camera_x))
    facts.add(Fact.velocity_y(CAMERA_ID, cur.camera_y - prev.camera_y))

    prev_pool = sorted(prev.sprites, key=lambda p: (p.sprite_id, p.x, p.y))
    used = [False] * len(prev_pool)
    for s in sorted(cur.sprites, key=lambda p: (p.sprite_id, p.x, p.y)):
        best = None
        for i, p in enumerate(prev_pool):
            if used[i] or p.sprite_id != s.sprite_id:
                continue
            key = (abs(s.x - p.x) + abs(s.y - p.y), p.x, p.y)  # ties: leftmost-topmost
            if best is None or key < best[0]:
                best = (key, i)
        if best is not None:
            _, i = best
            used[i] = True
            facts.add(Fact.velocity_x(s.sprite_id, s.x - prev_pool[i].x))
            facts.add(Fact.velocity_y(s.sprite_id, s.y - prev_pool[i].y))

    facts |= _relationship_facts([(s.sprite_id, s.x, s.y) for s in cur.sprites])
    for button in sorted(cur.inputs):
        facts.add(Fact.press(button))
    return frozenset(facts)


def fact_sequence(frames: list[FrameObservation]) -> list[FrameFacts]:
    return [facts_from_frames(a, b) for a, b in zip(frames, frames[1:])]


def strip_inputs(facts: FrameFacts) -> FrameFacts:
    return frozenset(f for f in facts if f.kind is not FactKind.INPUT)


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------

def predict(rules: list[Rule], facts: FrameFacts) -> FrameFacts:
    """One engine tick. Deterministic and pure; never emits input facts.

    Incoming relationship facts must be consistent with the incoming positions
    (frame extraction and spawn states guarantee this); only pairs touching a
    sprite that moved or died are recomputed.
    """
    replacements: dict[Fact, Fact] = {}
    for rule in sorted(rules, key=lambda r: r.rule_id):
        if rule.conditions <= facts:
            replacements[rule.pre] = rule.post  # higher id overwrites a contested pre
    out: set[Fact] = set(facts)
    dirty: set[str] = set()
    for pre, post in replacements.items():
        out.discard(pre)
        out.add(post)
        if pre.kind is FactKind.SPATIAL:  # teleports invalidate cached relationships
            dirty.add(pre.sprite)
            dirty.add(post.sprite)

    vx: dict[str, int] = {}
    vy: dict[str, int] = {}
    for f in sorted(out):
        if f.kind is FactKind.VELOCITY_X and f.sprite not in vx:
            vx[f.sprite] = f.a
        elif f.kind is FactKind.VELOCITY_Y and f.sprite not in vy:
            vy[f.sprite] = f.a
    moved: set[Fact] = set()
    for f in out:
        if f.kind is FactKind.SPATIAL:
            dx, dy = vx.get(f.sprite, 0), vy.get(f.sprite, 0)
            if dx or dy:
                dirty.add(f.sprite)
            moved.add(Fact.spatial(f.sprite, f.a + dx, f.b + dy))
        elif f.kind is FactKind.CAMERA_X:
            moved.add(Fact.camera_x(f.a + vx.get(CAMERA_ID, 0)))
        elif f.kind is FactKind.CAMERA_Y:
            moved.add(Fact.camera_y(f.a + vy.get(CAMERA_ID, 0)))
        elif f.kind is FactKind.INPUT:
            continue
        else:
            moved.add(f)

    living = {f.sprite for f in moved if f.kind is FactKind.ANIMATION and f.sprite != NONE_ID}
    living.add(CAMERA_ID)
    for f in facts:
        if f.kind is FactKind.ANIMATION and f.sprite not in living:
            dirty.add(f.sprite)

    kept: set[Fact] = set()
    for f in moved:
        if f.kind in (FactKind.RELATIONSHIP_X, FactKind.RELATIONSHIP_Y):
            if f.sprite in dirty or f.other in dirty:
                continue
            if f.sprite not in living or f.other not in living:
                continue
        elif f.subject not in living and f.subject != "":
            continue
        if f.sprite == NONE_ID or f.other == NONE_ID:
            continue
        kept.add(f)

    if dirty:
        positions = sorted(
            (f.sprite, f.a, f.b) for f in kept
            if f.kind is FactKind.SPATIAL and f.sprite in living
        )
        movers = [p for p in positions if p[0] in dirty]
        for sa, xa, ya in movers:
            for sb, xb, yb in positions:
                if (sa, xa, ya) == (sb, xb, yb):
                    continue
                dx, dy = xb - xa, yb - ya
                if max(abs(dx), abs(dy)) <= RELATIONSHIP_RADIUS:
                    kept.add(Fact.relationship_x(sa, sb, dx))
                    kept.add(Fact.relationship_y(sa, sb, dy))
                    kept.add(Fact.relationship_x(sb, sa, -dx))
                    kept.add(Fact.relationship_y(sb, sa, -dy))
    return frozenset(kept)


def frame_distance(predicted: FrameFacts, actual: FrameFacts) -> int:
    return len(strip_inputs(predicted) ^ strip_inputs(actual))


def replay_error(rules: list[Rule], pairs: list[tuple[FrameFacts, FrameFacts]]) -> int:
    return sum(frame_distance(predict(rules, cur), nxt) for cur, nxt in pairs)


# ---------------------------------------------------------------------------
# Learning
# ---------------------------------------------------------------------------

def _context(cur: FrameFacts, subject: str) -> frozenset[Fact]:
    """Condition seed for a new rule: the subject's facts plus held inputs."""
    return frozenset(
        f for f in cur
        if f.subject == subject or f.kind is FactKind.INPUT
    )


# velocity explanations come first on ties
_ADD_PRIORITY = {
    FactKind.VELOCITY_X: 0, FactKind.VELOCITY_Y: 0,
    FactKind.CAMERA_X: 1, FactKind.CAMERA_Y: 1,
    FactKind.ANIMATION: 2,
}


def _add_candidates(cur: FrameFacts, pred: FrameFacts, target: FrameFacts,
                    next_id: int) -> list[EngineModification]:
    def by_key(facts: frozenset) -> dict[tuple, list[Fact]]:
        out: dict[tuple, list[Fact]] = {}
        for f in sorted(facts):
            if f.kind in _EFFECT_KINDS:
                out.setdefault((f.kind, f.sprite, f.other), []).append(f)
        return out

    cur_keys = by_key(cur)
    missing = by_key(target - pred)
    mods: list[EngineModification] = []
    for key in sorted(missing, key=lambda k: (_ADD_PRIORITY[k[0]], k[0].value, k[1], k[2])):
        if len(missing[key]) != 1 or len(cur_keys.get(key, [])) != 1:
            continue  # ambiguous instance pairing; let another frame teach it
        pre, post = cur_keys[key][0], missing[key][0]
        subject = pre.subject
        conditions = _context(cur, subject)
        if pre in conditions:
            mods.append(EngineModification("add", rule=Rule(next_id, conditions, pre, post)))

    target_living = {f.sprite for f in target if f.kind is FactKind.ANIMATION}
    pred_living = {f.sprite for f in pred if f.kind is FactKind.ANIMATION}
    for sprite in sorted(pred_living - target_living):
        anims = [f for f in sorted(cur) if f.kind is FactKind.ANIMATION and f.sprite == sprite]
        if len(anims) != 1:
            continue
        pre = anims[0]
        post = Fact.animation(NONE_ID, pre.a, pre.b)
        mods.append(EngineModification("add", rule=Rule(next_id, _context(cur, sprite), pre, post)))
    return mods


def _candidates(rules: list[Rule], cur: FrameFacts, pred: FrameFacts,
                target: FrameFacts, next_id: int) -> list[EngineModification]:
    # generalization first: on ties it must beat memorizing a near-duplicate rule
    mods: list[EngineModification] = []
    for rule in sorted(rules, key=lambda r: r.rule_id):
        narrowed = rule.conditions & cur
        if rule.pre in narrowed and narrowed != rule.conditions:
            mods.append(EngineModification("modify", rule_id=rule.rule_id, new_conditions=narrowed))
    mods.extend(_add_candidates(cur, pred, target, next_id))
    for rule in sorted(rules, key=lambda r: r.rule_id):
        if rule.conditions <= cur:
            mods.append(EngineModification("remove", rule_id=rule.rule_id))
    return mods


def _apply(rules: list[Rule], mod: EngineModification) -> list[Rule]:
    if mod.action == "add":
        return sorted(rules + [mod.rule], key=lambda r: r.rule_id)
    if mod.action == "remove":
        return [r for r in rules if r.rule_id != mod.rule_id]
    return [
        Rule(r.rule_id, mod.new_conditions, r.pre, r.post) if r.rule_id == mod.rule_id else r
        for r in rules
    ]


# sweep drop order: most trace-specific kinds go first, so absolute positions
# fall away while the discriminating relationship/input context survives
_DROP_RANK = {
    FactKind.SPATIAL: 0, FactKind.CAMERA_X: 1, FactKind.CAMERA_Y: 1,
    FactKind.VELOCITY_X: 2, FactKind.VELOCITY_Y: 2, FactKind.ANIMATION: 3,
    FactKind.RELATIONSHIP_X: 4, FactKind.RELATIONSHIP_Y: 4, FactKind.INPUT: 5,
}


def _sweep(rules: list[Rule], pairs: list, spent: int, budget: int) -> tuple[list[Rule], int]:
    """Drop any condition whose removal keeps whole-trace replay exact."""
    changed = True
    while changed and spent < budget:
        changed = False
        for rule in sorted(rules, key=lambda r: r.rule_id):
            for cond in sorted(rule.conditions, key=lambda f: (_DROP_RANK[f.kind], f)):
                if cond == rule.pre:
                    continue
                trial_rule = Rule(rule.rule_id, rule.conditions - {cond}, rule.pre, rule.post)
                trial = _apply(rules, EngineModification(
                    "modify", rule_id=rule.rule_id, new_conditions=trial_rule.conditions))
                if replay_error(trial, pairs) == 0:
                    rules = trial
                    spent += 1
                    changed = True
                    break
            if spent >= budget:
                break
    return rules, spent


def learn_ruleset(frames: list[FrameObservation], budget: int = 10000) -> list[Rule]:
    """Greedy engine search: per frame pair, apply the modification that most
    reduces the fact diff until exact; repeat passes until the whole trace
    replays; finish with the generalization sweep."""
    if len(frames) < 2:
        raise RuleModelError("need at least two frames to learn rules")
    seq = fact_sequence(frames)
    pairs = [(seq[i], strip_inputs(seq[i + 1])) for i in range(len(seq) - 1)]
    if not pairs:
        return []

    rules: list[Rule] = []
    next_id = 0
    spent = 0
    while spent < budget:
        changed = False
        for cur, target in pairs:
            while spent < budget:
                pred = predict(rules, cur)
                err = frame_distance(pred, target)
                if err == 0:
                    break
                best: tuple[int, int, list[Rule], EngineModification] | None = None
                for idx, mod in enumerate(_candidates(rules, cur, pred, target, next_id)):
                    trial = _apply(rules, mod)
                    e = frame_distance(predict(trial, cur), target)
                    if e < err and (best is None or e < best[0]):
                        best = (e, idx, trial, mod)
                if best is None:
                    break  # no improving modification for this pair
                rules = best[2]
                if best[3].action == "add":
                    next_id += 1
                spent += 1
                changed = True
        if replay_error(rules, pairs) == 0 or not changed:
            break

    residual = replay_error(rules, pairs)
    if residual == 0:
        rules, spent = _sweep(rules, pairs, spent, budget)
    else:
        log.warning("rule learning stopped with residual replay error %d "
                    "(%d modifications spent)", residual, spent)
    return rules
