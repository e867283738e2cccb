"""Game graph data model: typed nodes and nine edge kinds housing everything a
learned game knows (level geometry, sprite relations, counts, rules, chunk
sequencing), plus the asymmetric Chamfer distances used for mapping and novelty,
canonical JSON serialization, and construction from learned models.

Graphs are immutable after construction; all operations here are pure.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .facts import CAMERA_ID, NONE_ID, Fact, FactKind, Rule, fact_slots

if TYPE_CHECKING:  # pragma: no cover
    from .level_model import LevelDesignModel


class GraphError(Exception):
    pass


class GraphFormatError(GraphError):
    """Malformed serialized graph; message carries the path to the bad field."""


class GraphConstructionError(GraphError):
    pass


class EdgeKind(str, Enum):
    G_SHAPE = "GShape"
    D_RELATION = "DRelation"
    N_COUNT = "NCount"
    RULE_CONDITION = "RuleCondition"
    RULE_EFFECT = "RuleEffect"
    CHUNK_TYPE = "LevelChunkType"
    CHUNK_REPEATS = "LevelChunkRepeats"
    CHUNK_POSITION = "LevelChunkPosition"
    CHUNK_TRANSITION = "LevelChunkTransition"


# Edge kinds that must point back at their own node.
STRICT_CYCLIC = frozenset({
    EdgeKind.G_SHAPE, EdgeKind.N_COUNT, EdgeKind.CHUNK_TYPE,
    EdgeKind.CHUNK_REPEATS, EdgeKind.CHUNK_POSITION,
})
CHUNK_KINDS = frozenset({
    EdgeKind.CHUNK_TYPE, EdgeKind.CHUNK_REPEATS,
    EdgeKind.CHUNK_POSITION, EdgeKind.CHUNK_TRANSITION,
})
PROVENANCES = ("learned", "expanded", "amalgam", "blend", "composition", "proto")


@dataclass(frozen=True)
class Edge:
    """One typed edge. Payload fields are a union across kinds; EDGE_SCHEMA
    says which fields a kind uses and how they compare, scale, and serialize."""

    kind: EdgeKind
    target: str
    x: int = 0
    y: int = 0
    shape: tuple[tuple[int, ...], ...] = ()
    s_node: str = ""
    l_node: str = ""
    dx: int = 0
    dy: int = 0
    probability: float = 0.0
    count: int = 0
    fact: Fact | None = None
    pre: Fact | None = None
    post: Fact | None = None
    rule_id: int = -1
    chunk_category: str = ""
    min_repeat: int = 0
    max_repeat: int = 0
    avg_norm_pos: float = 0.0

    def payload_json(self) -> dict:
        out: dict = {}
        for spec in EDGE_SCHEMA[self.kind]:
            value = getattr(self, spec.attr)
            if spec.ftype == "matrix":
                value = [list(row) for row in value]
            elif spec.ftype == "fact":
                value = value.to_json()
            out[spec.json_name] = value
        return out

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "target": self.target, **self.payload_json()}

    def sort_key(self) -> tuple:
        payload = []
        for spec in EDGE_SCHEMA[self.kind]:
            value = getattr(self, spec.attr)
            if spec.ftype == "fact":
                value = (value.kind.value, value.sprite, value.other, value.a, value.b)
            payload.append(value)
        return (self.kind.value, self.target, tuple(payload))

    def scaled(self, factor: float) -> "Edge":
        """Multiply magnitude-like numeric payload fields by `factor`.

        Probabilities and normalized positions are left alone; they are
        renormalized/bounded elsewhere and scaling them breaks invariants.
        """
        if factor == 1.0:
            return self
        updates: dict = {}
        for spec in EDGE_SCHEMA[self.kind]:
            if not spec.scalable:
                continue
            value = getattr(self, spec.attr)
            if spec.ftype == "fact":
                updates[spec.attr] = value.scaled(factor)
            else:
                updates[spec.attr] = int(round(value * factor))
        if not updates:
            return self
        base = {f: getattr(self, f) for f in _EDGE_FIELDS}
        base.update(updates)
        if self.kind is EdgeKind.N_COUNT:
            base["count"] = max(0, base["count"])
        if self.kind is EdgeKind.CHUNK_REPEATS:
            lo = max(1, min(base["min_repeat"], base["max_repeat"]))
            hi = max(1, base["min_repeat"], base["max_repeat"])
            base["min_repeat"], base["max_repeat"] = lo, hi
        return Edge(**base)


_EDGE_FIELDS = (
    "kind", "target", "x", "y", "shape", "s_node", "l_node", "dx", "dy",
    "probability", "count", "fact", "pre", "post", "rule_id",
    "chunk_category", "min_repeat", "max_repeat", "avg_norm_pos",
)


def edge_with(e: Edge, **updates) -> Edge:
    """dataclasses.replace without the per-call introspection; hot path."""
    fields = {name: getattr(e, name) for name in _EDGE_FIELDS}
    fields.update(updates)
    return Edge(**fields)


@dataclass(frozen=True)
class FieldSpec:
    attr: str
    json_name: str
    ftype: str  # num | cat | matrix | fact
    scalable: bool = False
    compare: bool = True  # cluster/rule bookkeeping ids carry no content


EDGE_SCHEMA: dict[EdgeKind, tuple[FieldSpec, ...]] = {
    EdgeKind.G_SHAPE: (
        FieldSpec("x", "x", "num", True),
        FieldSpec("y", "y", "num", True),
        FieldSpec("shape", "shape", "matrix"),
        FieldSpec("s_node", "sNodeId", "cat", compare=False),
        FieldSpec("l_node", "lNodeId", "cat", compare=False),
    ),
    EdgeKind.D_RELATION: (
        FieldSpec("dx", "dx", "num", True),
        FieldSpec("dy", "dy", "num", True),
        FieldSpec("probability", "probability", "num"),
        FieldSpec("s_node", "sNodeId", "cat", compare=False),
        FieldSpec("l_node", "lNodeId", "cat", compare=False),
    ),
    EdgeKind.N_COUNT: (
        FieldSpec("count", "count", "num", True),
        FieldSpec("l_node", "lNodeId", "cat", compare=False),
    ),
    EdgeKind.RULE_CONDITION: (
        FieldSpec("fact", "fact", "fact", True),
        FieldSpec("rule_id", "ruleId", "cat", compare=False),
    ),
    EdgeKind.RULE_EFFECT: (
        FieldSpec("pre", "preFact", "fact", True),
        FieldSpec("post", "postFact", "fact", True),
        FieldSpec("rule_id", "ruleId", "cat", compare=False),
    ),
    EdgeKind.CHUNK_TYPE: (FieldSpec("chunk_category", "chunkCategoryId", "cat"),),
    EdgeKind.CHUNK_REPEATS: (
        FieldSpec("min_repeat", "min", "num", True),
        FieldSpec("max_repeat", "max", "num", True),
    ),
    EdgeKind.CHUNK_POSITION: (FieldSpec("avg_norm_pos", "avgNormPos", "num"),),
    EdgeKind.CHUNK_TRANSITION: (FieldSpec("probability", "probability", "num"),),
}


@dataclass
class GameGraphNode:
    """One node: a visually-similar sprite cluster, a level-chunk category,
    the Camera, or the None entity. Treat as immutable once built."""

    node_id: str
    sprite_ids: frozenset[str]
    is_player: bool
    edges: tuple[Edge, ...]
    _sig: dict | None = field(default=None, init=False, compare=False, repr=False)

    def edges_of(self, kind: EdgeKind) -> list[Edge]:
        return [e for e in self.edges if e.kind is kind]


@dataclass
class GameGraph:
    graph_id: str
    provenance: str
    nodes: dict[str, GameGraphNode]

    def node(self, node_id: str) -> GameGraphNode:
        return self.nodes[node_id]

    def sorted_nodes(self) -> list[GameGraphNode]:
        return [self.nodes[k] for k in sorted(self.nodes)]

    def chunk_node_ids(self) -> list[str]:
        return sorted(
            n.node_id for n in self.nodes.values()
            if any(e.kind in CHUNK_KINDS for e in n.edges)
        )

    def player_node_id(self) -> str:
        players = sorted(n.node_id for n in self.nodes.values() if n.is_player)
        if len(players) != 1:
            raise GraphError(f"graph {self.graph_id}: expected exactly one player node, "
                             f"found {players}")
        return players[0]


def canonical_edges(edges: Iterable[Edge]) -> tuple[Edge, ...]:
    return tuple(sorted(edges, key=Edge.sort_key))


def make_node(node_id: str, sprite_ids: Iterable[str] = (), is_player: bool = False,
              edges: Iterable[Edge] = ()) -> GameGraphNode:
    return GameGraphNode(node_id, frozenset(sprite_ids), is_player, canonical_edges(edges))


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate_graph(g: GameGraph) -> None:
    """Raise GraphError when a structural invariant is broken."""
    if g.provenance not in PROVENANCES:
        raise GraphError(f"graph {g.graph_id}: unknown provenance {g.provenance!r}")
    players = [n.node_id for n in g.nodes.values() if n.is_player]
    if len(players) != 1:
        raise GraphError(f"graph {g.graph_id}: expected one player node, got {sorted(players)}")
    for node_id in sorted(g.nodes):
        node = g.nodes[node_id]
        if node.node_id != node_id:
            raise GraphError(f"graph {g.graph_id}: node key {node_id!r} != node id {node.node_id!r}")
        kinds = {e.kind for e in node.edges}
        chunk_kinds = kinds & CHUNK_KINDS
        if chunk_kinds and kinds - CHUNK_KINDS:
            raise GraphError(f"node {node_id}: mixes level-chunk edges with sprite edges")
        if chunk_kinds and node_id in (CAMERA_ID, NONE_ID):
            raise GraphError(f"node {node_id}: camera/none node carries level-chunk edges")
        total_p = 0.0
        has_transition = False
        for i, e in enumerate(node.edges):
            if e.target not in g.nodes:
                raise GraphError(f"node {node_id}: edges[{i}] targets missing node {e.target!r}")
            if e.kind in STRICT_CYCLIC and e.target != node_id:
                raise GraphError(f"node {node_id}: edges[{i}] ({e.kind.value}) must be cyclic")
            if e.kind is EdgeKind.G_SHAPE and not e.shape:
                raise GraphError(f"node {node_id}: edges[{i}] has empty shape")
            if e.kind is EdgeKind.N_COUNT and e.count < 0:
                raise GraphError(f"node {node_id}: edges[{i}] has negative count")
            if e.kind is EdgeKind.CHUNK_REPEATS and not (1 <= e.min_repeat <= e.max_repeat):
                raise GraphError(f"node {node_id}: edges[{i}] repeats {e.min_repeat}..{e.max_repeat}")
            if e.kind is EdgeKind.CHUNK_POSITION and not (0.0 <= e.avg_norm_pos <= 1.0):
                raise GraphError(f"node {node_id}: edges[{i}] avgNormPos out of [0,1]")
            if e.kind is EdgeKind.CHUNK_TRANSITION:
                if not (0.0 < e.probability <= 1.0):
                    raise GraphError(f"node {node_id}: edges[{i}] transition probability "
                                     f"{e.probability} out of (0,1]")
                total_p += e.probability
                has_transition = True
        if has_transition and abs(total_p - 1.0) > 1e-9:
            raise GraphError(f"node {node_id}: outgoing transition probabilities sum to {total_p}")
    if g.provenance == "learned":
        for required in (CAMERA_ID, NONE_ID):
            if required not in g.nodes:
                raise GraphError(f"graph {g.graph_id}: learned graph missing {required} node")


# ---------------------------------------------------------------------------
# Chamfer distances
# ---------------------------------------------------------------------------

_FACT_KINDS = tuple(FactKind)
_FACT_CODE = {k: i for i, k in enumerate(_FACT_KINDS)}
_USE = np.array([fact_slots(k) for k in _FACT_KINDS], dtype=float)
_NSLOTS = _USE.sum(axis=1)


class _KindSig:
    """Distinct payloads of one edge kind on one node, columnar for numpy."""

    __slots__ = ("counts", "total", "columns")

    def __init__(self, kind: EdgeKind, edges: list[Edge]):
        buckets: dict[tuple, int] = {}
        distinct: list[Edge] = []
        for e in edges:
            key = e.sort_key()
            if key in buckets:
                buckets[key] += 1
            else:
                buckets[key] = 1
                distinct.append(e)
        order = sorted(range(len(distinct)), key=lambda i: distinct[i].sort_key())
        distinct = [distinct[i] for i in order]
        self.counts = np.array([buckets[e.sort_key()] for e in distinct], dtype=float)
        self.total = float(self.counts.sum())
        self.columns: dict[str, object] = {}
        for spec in EDGE_SCHEMA[kind]:
            values = [getattr(e, spec.attr) for e in distinct]
            if spec.ftype == "num":
                self.columns[spec.attr] = np.array(values, dtype=float)
            elif spec.ftype == "cat":
                self.columns[spec.attr] = values
            elif spec.ftype == "matrix":
                mats = [np.array(v, dtype=bool) for v in values]
                self.columns[spec.attr] = (mats, np.array([m.sum() for m in mats], dtype=float))
            else:  # fact
                self.columns[spec.attr] = {
                    "kind": np.array([_FACT_CODE[f.kind] for f in values], dtype=int),
                    "sprite": [f.sprite for f in values],
                    "other": [f.other for f in values],
                    "a": np.array([f.a for f in values], dtype=float),
                    "b": np.array([f.b for f in values], dtype=float),
                }


def _signature(node: GameGraphNode) -> dict[EdgeKind, _KindSig]:
    if node._sig is None:
        grouped: dict[EdgeKind, list[Edge]] = {}
        for e in node.edges:
            grouped.setdefault(e.kind, []).append(e)
        node._sig = {kind: _KindSig(kind, edges) for kind, edges in grouped.items()}
    return node._sig


def _num_matrix(fa: np.ndarray, fb: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(fa)[:, None], np.abs(fb)[None, :]), 1.0)
    return np.clip(np.abs(fa[:, None] - fb[None, :]) / denom, 0.0, 1.0)


def _cat_matrix(va: list, vb: list) -> np.ndarray:
    vocab: dict = {}
    ca = np.array([vocab.setdefault(v, len(vocab)) for v in va], dtype=int)
    cb = np.array([vocab.setdefault(v, len(vocab)) for v in vb], dtype=int)
    return (ca[:, None] != cb[None, :]).astype(float)


def _matrix_matrix(ma: tuple, mb: tuple) -> np.ndarray:
    mats_a, sums_a = ma
    mats_b, sums_b = mb
    h = max([m.shape[0] for m in mats_a + mats_b], default=1)
    w = max([m.shape[1] for m in mats_a + mats_b], default=1)

    def pack(mats: list[np.ndarray]) -> np.ndarray:
        out = np.zeros((len(mats), h, w), dtype=float)
        for i, m in enumerate(mats):
            out[i, : m.shape[0], : m.shape[1]] = m
        return out

    a, b = pack(mats_a), pack(mats_b)
    overlap = np.tensordot(a, b, axes=([1, 2], [1, 2]))
    union = sums_a[:, None] + sums_b[None, :] - overlap
    both_empty = (sums_a[:, None] == 0) & (sums_b[None, :] == 0)
    return np.where(both_empty, 0.0, 1.0 - overlap / np.maximum(union, 1.0))


def _fact_matrix(fa: dict, fb: dict) -> np.ndarray:
    same = fa["kind"][:, None] == fb["kind"][None, :]
    parts = (
        _USE[fa["kind"], 0][:, None] * _cat_matrix(fa["sprite"], fb["sprite"])
        + _USE[fa["kind"], 1][:, None] * _cat_matrix(fa["other"], fb["other"])
        + _USE[fa["kind"], 2][:, None] * _num_matrix(fa["a"], fb["a"])
        + _USE[fa["kind"], 3][:, None] * _num_matrix(fa["b"], fb["b"])
    )
    return np.where(same, parts / _NSLOTS[fa["kind"]][:, None], 1.0)


def _kind_distance(kind: EdgeKind, a: _KindSig, b: _KindSig) -> np.ndarray:
    parts = []
    for spec in EDGE_SCHEMA[kind]:
        if not spec.compare:
            continue
        ca, cb = a.columns[spec.attr], b.columns[spec.attr]
        if spec.ftype == "num":
            parts.append(_num_matrix(ca, cb))
        elif spec.ftype == "cat":
            parts.append(_cat_matrix(ca, cb))
        elif spec.ftype == "matrix":
            parts.append(_matrix_matrix(ca, cb))
        else:
            parts.append(_fact_matrix(ca, cb))
    return sum(parts) / len(parts)


def node_chamfer(a: GameGraphNode, b: GameGraphNode) -> float:
    """Asymmetric edge-set distance in [0,1].

    Mean over a's edges of the min distance to a same-kind edge of b; edges
    whose kind b lacks contribute 1. A node with no edges is 0 from anything
    (an underspecified node should still attract mappings).
    """
    sig_a, sig_b = _signature(a), _signature(b)
    total = sum(s.total for s in sig_a.values())
    if total == 0:
        return 0.0
    acc = 0.0
    for kind, ka in sig_a.items():
        kb = sig_b.get(kind)
        if kb is None:
            acc += ka.total
            continue
        dist = _kind_distance(kind, ka, kb)
        acc += float(np.sum(ka.counts * dist.min(axis=1)))
    return acc / total


def graph_chamfer(a: GameGraph, b: GameGraph) -> float:
    """Mean over a's nodes of the min node_chamfer to any node of b."""
    if not a.nodes:
        warnings.warn(f"graph_chamfer: graph {a.graph_id} has no nodes", stacklevel=2)
        return 0.0
    if not b.nodes:
        return 1.0
    b_nodes = b.sorted_nodes()
    acc = 0.0
    for node in a.sorted_nodes():
        acc += min(node_chamfer(node, other) for other in b_nodes)
    return acc / len(a.nodes)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def graph_to_json(g: GameGraph) -> dict:
    return {
        "id": g.graph_id,
        "provenance": g.provenance,
        "nodes": [
            {
                "id": n.node_id,
                "spriteIds": sorted(n.sprite_ids),
                "isPlayer": n.is_player,
                "edges": [e.to_json() for e in n.edges],
            }
            for n in g.sorted_nodes()
        ],
    }


def serialize(g: GameGraph) -> bytes:
    """Canonical bytes: sorted keys, two-space indent, LF, UTF-8."""
    text = json.dumps(graph_to_json(g), sort_keys=True, indent=2, ensure_ascii=False)
    return (text + "\n").encode("utf-8")


def _edge_from_json(obj: dict, path: str) -> Edge:
    if not isinstance(obj, dict):
        raise GraphFormatError(f"{path}: edge must be an object")
    try:
        kind = EdgeKind(obj["kind"])
    except KeyError:
        raise GraphFormatError(f"{path}.kind: missing") from None
    except ValueError:
        raise GraphFormatError(f"{path}.kind: unknown edge kind {obj['kind']!r}") from None
    if "target" not in obj:
        raise GraphFormatError(f"{path}.target: missing")
    fields: dict = {"kind": kind, "target": obj["target"]}
    for spec in EDGE_SCHEMA[kind]:
        if spec.json_name not in obj:
            raise GraphFormatError(f"{path}.{spec.json_name}: missing")
        raw = obj[spec.json_name]
        try:
            if spec.ftype == "num":
                fields[spec.attr] = float(raw) if spec.attr in ("probability", "avg_norm_pos") else int(raw)
            elif spec.ftype == "cat":
                fields[spec.attr] = int(raw) if spec.attr == "rule_id" else str(raw)
            elif spec.ftype == "matrix":
                fields[spec.attr] = tuple(tuple(int(v) for v in row) for row in raw)
            else:
                fields[spec.attr] = Fact.from_json(raw)
        except (TypeError, ValueError) as exc:
            raise GraphFormatError(f"{path}.{spec.json_name}: {exc}") from None
    return Edge(**fields)


def graph_from_json(obj: dict) -> GameGraph:
    if not isinstance(obj, dict):
        raise GraphFormatError("$: graph must be an object")
    for key in ("id", "provenance", "nodes"):
        if key not in obj:
            raise GraphFormatError(f"$.{key}: missing")
    nodes: dict[str, GameGraphNode] = {}
    for i, node_obj in enumerate(obj["nodes"]):
        path = f"$.nodes[{i}]"
        for key in ("id", "spriteIds", "isPlayer", "edges"):
            if key not in node_obj:
                raise GraphFormatError(f"{path}.{key}: missing")
        node_id = node_obj["id"]
        edges = [
            _edge_from_json(e, f"{path} (id={node_id}).edges[{j}]")
            for j, e in enumerate(node_obj["edges"])
        ]
        nodes[node_id] = GameGraphNode(
            node_id, frozenset(node_obj["spriteIds"]), bool(node_obj["isPlayer"]),
            tuple(edges),
        )
    g = GameGraph(obj["id"], obj["provenance"], nodes)
    validate_graph(g)
    return g


def deserialize(data: bytes) -> GameGraph:
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise GraphFormatError(f"$: not valid JSON ({exc})") from None
    return graph_from_json(obj)


def graph_digest(g: GameGraph) -> str:
    import hashlib

    return hashlib.sha256(serialize(g)).hexdigest()


# ---------------------------------------------------------------------------
# Construction from learned models
# ---------------------------------------------------------------------------

def quantize_offset(v: int, cell: int = 8) -> int:
    return cell * int(round(v / cell))


def construct_game_graph(
    level_model: "LevelDesignModel",
    ruleset: Sequence[Rule],
    sprite_groups: Sequence[frozenset[str] | set[str]],
    player_group: int,
    graph_id: str,
    provenance: str = "learned",
) -> GameGraph:
    """Assemble a game graph: one node per sprite group plus one per chunk
    category plus Camera and None; every learned value becomes exactly one edge."""
    leaders = [min(group) for group in sprite_groups]
    owner_of: dict[str, str] = {}
    for leader, group in zip(leaders, sprite_groups):
        for sprite in group:
            if sprite in owner_of:
                raise GraphConstructionError(f"sprite {sprite!r} appears in two groups")
            owner_of[sprite] = leader
    owner_of[CAMERA_ID] = CAMERA_ID
    owner_of[NONE_ID] = NONE_ID

    def node_for(sprite: str, context: str) -> str:
        if sprite not in owner_of:
            raise GraphConstructionError(f"{context} references unknown sprite {sprite!r}")
        return owner_of[sprite]

    edges: dict[str, list[Edge]] = {leader: [] for leader in leaders}
    edges[CAMERA_ID] = []
    edges[NONE_ID] = []
    for l_node in level_model.l_nodes:
        edges[l_node.l_id] = []

    for idx, g_value in enumerate(level_model.g_values):
        owner = node_for(g_value.sprite_type, "level model G value")
        edges[owner].append(Edge(
            EdgeKind.G_SHAPE, owner, x=g_value.x, y=g_value.y, shape=g_value.shape,
            s_node=level_model.style_of[idx],
            l_node=level_model.chunk_l[g_value.chunk_index],
        ))
    for d_value in level_model.d_values:
        from_g = level_model.g_values[d_value.from_g]
        to_g = level_model.g_values[d_value.to_g]
        owner = node_for(from_g.sprite_type, "level model D value")
        target = node_for(to_g.sprite_type, "level model D value")
        l_id = level_model.chunk_l[from_g.chunk_index]
        key = (
            l_id,
            level_model.style_of[d_value.from_g],
            level_model.style_of[d_value.to_g],
            quantize_offset(d_value.dx),
            quantize_offset(d_value.dy),
        )
        edges[owner].append(Edge(
            EdgeKind.D_RELATION, target, dx=d_value.dx, dy=d_value.dy,
            probability=level_model.table[key],
            s_node=level_model.style_of[d_value.from_g], l_node=l_id,
        ))
    for n_value in level_model.n_values:
        owner = node_for(n_value.sprite_type, "level model N value")
        edges[owner].append(Edge(
            EdgeKind.N_COUNT, owner, count=n_value.count,
            l_node=level_model.chunk_l[n_value.chunk_index],
        ))

    for rule in ruleset:
        owner = node_for(rule.pre.subject, f"rule {rule.rule_id}")
        post_subject = rule.post.subject or owner
        effect_target = node_for(post_subject, f"rule {rule.rule_id}")
        edges[owner].append(Edge(
            EdgeKind.RULE_EFFECT, effect_target, pre=rule.pre, post=rule.post,
            rule_id=rule.rule_id,
        ))
        for cond in sorted(rule.conditions):
            if cond.kind in (FactKind.RELATIONSHIP_X, FactKind.RELATIONSHIP_Y):
                target = node_for(cond.other, f"rule {rule.rule_id} condition")
            else:
                target = owner
            edges[owner].append(Edge(
                EdgeKind.RULE_CONDITION, target, fact=cond, rule_id=rule.rule_id,
            ))

    for l_node in level_model.l_nodes:
        lid = l_node.l_id
        edges[lid].append(Edge(EdgeKind.CHUNK_TYPE, lid, chunk_category=lid))
        edges[lid].append(Edge(
            EdgeKind.CHUNK_REPEATS, lid,
            min_repeat=l_node.repeat_min, max_repeat=l_node.repeat_max,
        ))
        edges[lid].append(Edge(EdgeKind.CHUNK_POSITION, lid, avg_norm_pos=l_node.avg_norm_pos))
        for target, prob in sorted(l_node.transitions.items()):
            edges[lid].append(Edge(EdgeKind.CHUNK_TRANSITION, target, probability=prob))

    nodes: dict[str, GameGraphNode] = {}
    for i, (leader, group) in enumerate(zip(leaders, sprite_groups)):
        nodes[leader] = make_node(leader, group, is_player=(i == player_group),
                                  edges=edges[leader])
    nodes[CAMERA_ID] = make_node(CAMERA_ID, edges=edges[CAMERA_ID])
    nodes[NONE_ID] = make_node(NONE_ID, edges=edges[NONE_ID])
    for l_node in level_model.l_nodes:
        nodes[l_node.l_id] = make_node(l_node.l_id, edges=edges[l_node.l_id])

    graph = GameGraph(graph_id, provenance, nodes)
    validate_graph(graph)
    return graph
