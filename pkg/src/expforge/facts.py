"""Conditional facts and rules: the vocabulary a learned game engine is made of.

A frame is described by a set of facts; a rule is a set of facts that must hold
plus one (pre, post) fact replacement. Facts are immutable values so they can
live in frozensets and compare by payload.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable

CAMERA_ID = "Camera"
NONE_ID = "None"


class FactKind(str, Enum):
    ANIMATION = "Animation"
    SPATIAL = "Spatial"
    RELATIONSHIP_X = "RelationshipX"
    RELATIONSHIP_Y = "RelationshipY"
    VELOCITY_X = "VelocityX"
    VELOCITY_Y = "VelocityY"
    CAMERA_X = "CameraX"
    CAMERA_Y = "CameraY"
    INPUT = "Input"


class Button(str, Enum):
    LEFT = "left"
    RIGHT = "right"
    UP = "up"
    DOWN = "down"
    ACTION = "action"


BUTTONS = tuple(b.value for b in Button)

# Which generic payload slots each kind uses: (sprite, other, a, b).
# `a`/`b` are integer payloads whose meaning depends on the kind (see _FACT_JSON).
_SLOTS: dict[FactKind, tuple[bool, bool, bool, bool]] = {
    FactKind.ANIMATION: (True, False, True, True),
    FactKind.SPATIAL: (True, False, True, True),
    FactKind.RELATIONSHIP_X: (True, True, True, False),
    FactKind.RELATIONSHIP_Y: (True, True, True, False),
    FactKind.VELOCITY_X: (True, False, True, False),
    FactKind.VELOCITY_Y: (True, False, True, False),
    FactKind.CAMERA_X: (False, False, True, False),
    FactKind.CAMERA_Y: (False, False, True, False),
    FactKind.INPUT: (False, True, False, False),
}

# JSON field names for the used slots, in (sprite, other, a, b) order.
_FACT_JSON: dict[FactKind, tuple[str | None, str | None, str | None, str | None]] = {
    FactKind.ANIMATION: ("spriteId", None, "width", "height"),
    FactKind.SPATIAL: ("spriteId", None, "x", "y"),
    FactKind.RELATIONSHIP_X: ("spriteId", "otherSpriteId", "dx", None),
    FactKind.RELATIONSHIP_Y: ("spriteId", "otherSpriteId", "dy", None),
    FactKind.VELOCITY_X: ("spriteId", None, "vx", None),
    FactKind.VELOCITY_Y: ("spriteId", None, "vy", None),
    FactKind.CAMERA_X: (None, None, "x", None),
    FactKind.CAMERA_Y: (None, None, "y", None),
    FactKind.INPUT: (None, "button", None, None),
}


@dataclass(frozen=True, order=True)
class Fact:
    """One statement about a frame. Payload slots are generic; use the named
    constructors and the JSON codec for kind-specific field names."""

    kind: FactKind
    sprite: str = ""
    other: str = ""
    a: int = 0
    b: int = 0

    def __post_init__(self) -> None:
        if self.kind is FactKind.ANIMATION and (self.a <= 0 or self.b <= 0):
            raise ValueError(f"animation fact needs positive width/height, got {self.a}x{self.b}")

    # -- constructors -------------------------------------------------------

    @staticmethod
    def animation(sprite: str, width: int, height: int) -> "Fact":
        return Fact(FactKind.ANIMATION, sprite=sprite, a=width, b=height)

    @staticmethod
    def spatial(sprite: str, x: int, y: int) -> "Fact":
        return Fact(FactKind.SPATIAL, sprite=sprite, a=x, b=y)

    @staticmethod
    def relationship_x(sprite: str, other: str, dx: int) -> "Fact":
        return Fact(FactKind.RELATIONSHIP_X, sprite=sprite, other=other, a=dx)

    @staticmethod
    def relationship_y(sprite: str, other: str, dy: int) -> "Fact":
        return Fact(FactKind.RELATIONSHIP_Y, sprite=sprite, other=other, a=dy)

    @staticmethod
    def velocity_x(sprite: str, vx: int) -> "Fact":
        return Fact(FactKind.VELOCITY_X, sprite=sprite, a=vx)

    @staticmethod
    def velocity_y(sprite: str, vy: int) -> "Fact":
        return Fact(FactKind.VELOCITY_Y, sprite=sprite, a=vy)

    @staticmethod
    def camera_x(x: int) -> "Fact":
        return Fact(FactKind.CAMERA_X, a=x)

    @staticmethod
    def camera_y(y: int) -> "Fact":
        return Fact(FactKind.CAMERA_Y, a=y)

    @staticmethod
    def press(button: str) -> "Fact":
        if button not in BUTTONS:
            raise ValueError(f"unknown button {button!r}")
        return Fact(FactKind.INPUT, other=button)

    # -- views ---------------------------------------------------------------

    @property
    def subject(self) -> str:
        """The entity this fact is about: a sprite id, the camera, or ''."""
        if self.kind in (FactKind.CAMERA_X, FactKind.CAMERA_Y):
            return CAMERA_ID
        return self.sprite

    def slots(self) -> tuple[bool, bool, bool, bool]:
        return _SLOTS[self.kind]

    def rename(self, table: dict[str, str]) -> "Fact":
        """Rewrite sprite/partner ids through `table` (ids absent are kept)."""
        return Fact(
            self.kind,
            sprite=table.get(self.sprite, self.sprite),
            other=table.get(self.other, self.other)
            if self.kind in (FactKind.RELATIONSHIP_X, FactKind.RELATIONSHIP_Y)
            else self.other,
            a=self.a,
            b=self.b,
        )

    def scaled(self, factor: float) -> "Fact":
        """Multiply numeric payload slots by `factor`, rounding to int."""
        _, _, use_a, use_b = _SLOTS[self.kind]
        a = int(round(self.a * factor)) if use_a else self.a
        b = int(round(self.b * factor)) if use_b else self.b
        if self.kind is FactKind.ANIMATION:
            a, b = max(1, a), max(1, b)
        return Fact(self.kind, sprite=self.sprite, other=self.other, a=a, b=b)

    # -- JSON ----------------------------------------------------------------

    def to_json(self) -> dict:
        names = _FACT_JSON[self.kind]
        out: dict = {"kind": self.kind.value}
        for name, value in zip(names, (self.sprite, self.other, self.a, self.b)):
            if name is not None:
                out[name] = value
        return out

    @staticmethod
    def from_json(obj: dict) -> "Fact":
        try:
            kind = FactKind(obj["kind"])
        except (KeyError, ValueError) as exc:
            raise ValueError(f"bad fact kind in {obj!r}") from exc
        names = _FACT_JSON[kind]
        values = []
        for name, default in zip(names, ("", "", 0, 0)):
            values.append(obj[name] if name is not None else default)
        return Fact(kind, sprite=values[0], other=values[1], a=int(values[2]), b=int(values[3]))


def fact_slots(kind: FactKind) -> tuple[bool, bool, bool, bool]:
    """Which of the generic (sprite, other, a, b) slots this kind uses."""
    return _SLOTS[kind]


def canonical_facts(facts: Iterable[Fact]) -> list[Fact]:
    return sorted(facts)


@dataclass(frozen=True)
class Rule:
    """A condition set plus one fact replacement.

    Invariants: pre and post share a kind, and pre is one of the conditions
    (a rule can only rewrite a fact it required to be present).
    """

    rule_id: int
    conditions: frozenset[Fact]
    pre: Fact
    post: Fact

    def __post_init__(self) -> None:
        if self.pre.kind is not self.post.kind:
            raise ValueError(f"rule {self.rule_id}: pre/post kinds differ "
                             f"({self.pre.kind.value} vs {self.post.kind.value})")
        if self.pre not in self.conditions:
            raise ValueError(f"rule {self.rule_id}: pre fact missing from conditions")

    @property
    def requires_input(self) -> Fact | None:
        inputs = sorted(f for f in self.conditions if f.kind is FactKind.INPUT)
        return inputs[0] if inputs else None

    def to_json(self) -> dict:
        return {
            "id": self.rule_id,
            "conditions": [f.to_json() for f in canonical_facts(self.conditions)],
            "effect": {"pre": self.pre.to_json(), "post": self.post.to_json()},
        }

    @staticmethod
    def from_json(obj: dict) -> "Rule":
        return Rule(
            rule_id=int(obj["id"]),
            conditions=frozenset(Fact.from_json(f) for f in obj["conditions"]),
            pre=Fact.from_json(obj["effect"]["pre"]),
            post=Fact.from_json(obj["effect"]["post"]),
        )
