"""Proto-game graphs and knowledge-base mappings.

A proto-game graph is the underspecified target built from a spritesheet
alone: one node per visually-similar sprite cluster (carrying only animation
facts and trivial pixel-mask shapes) plus Camera and None. Mapping pushes
every knowledge-base node onto its closest proto node (asymmetric Chamfer,
kept under 1.0), fills any uncovered proto node by flipping the distance
direction, and consolidates the kb's level-chunk-category nodes into fresh
proto chunk nodes via K-medians.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .cluster import estimate_k, kmedians, medoid_index, zscore
from .facts import CAMERA_ID, NONE_ID, Fact
from .graph import (Edge, EdgeKind, GameGraph, GameGraphNode,
                    make_node, node_chamfer, validate_graph)
from .ingest import TILE, Spritesheet, cluster_sprites

PROTO_RULE_ID = -1  # annotation facts on proto nodes carry no real rule


class MappingError(Exception):
    pass


@dataclass(frozen=True)
class MapEntry:
    graph_id: str
    node_id: str
    distance: float


@dataclass
class Mapping:
    """Ranked kb-node lists per proto node, plus the augmented proto graph."""

    proto: GameGraph
    kb: dict[str, GameGraph]
    entries: dict[str, tuple[MapEntry, ...]]
    forward: dict[tuple[str, str], str]  # (graphId, nodeId) -> proto node id
    chunk_node_ids: frozenset[str]

    def node_of(self, entry: MapEntry) -> GameGraphNode:
        return self.kb[entry.graph_id].nodes[entry.node_id]

    def output_of(self, graph_id: str, node_id: str) -> str | None:
        if node_id == CAMERA_ID:
            return CAMERA_ID
        if node_id == NONE_ID:
            return NONE_ID
        return self.forward.get((graph_id, node_id))

    def to_json(self) -> dict:
        return {
            proto_id: [
                {"graph": e.graph_id, "node": e.node_id, "distance": e.distance}
                for e in self.entries[proto_id]
            ]
            for proto_id in sorted(self.entries)
        }

    def dumps(self) -> bytes:
        return (json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n").encode()


# ---------------------------------------------------------------------------
# Proto graph
# ---------------------------------------------------------------------------

def _pixel_mask(pixels: tuple[tuple[int, ...], ...]) -> tuple[tuple[int, ...], ...]:
    """Tile-granularity occupancy of a sprite's non-transparent pixels."""
    h, w = len(pixels), len(pixels[0])
    rows, cols = math.ceil(h / TILE), math.ceil(w / TILE)
    mask = [[0] * cols for _ in range(rows)]
    for r in range(h):
        for c in range(w):
            if pixels[r][c]:
                mask[r // TILE][c // TILE] = 1
    return tuple(tuple(row) for row in mask)


def build_proto_graph(sheet: Spritesheet, player_sprite_id: str,
                      threshold: float = 0.4, graph_id: str = "proto") -> GameGraph:
    """One node per sprite cluster with animation facts and pixel-mask shapes,
    plus Camera and None; the cluster holding the player sprite is flagged."""
    if player_sprite_id not in sheet.sprites:
        raise MappingError(f"player sprite {player_sprite_id!r} not in the spritesheet")
    groups = cluster_sprites(sheet, threshold)
    nodes: dict[str, GameGraphNode] = {}
    for group in groups:
        leader = min(group)
        edges = []
        for member in sorted(group):
            w, h = sheet.size(member)
            edges.append(Edge(EdgeKind.RULE_CONDITION, leader,
                              fact=Fact.animation(member, w, h), rule_id=PROTO_RULE_ID))
            edges.append(Edge(EdgeKind.G_SHAPE, leader, x=0, y=0,
                              shape=_pixel_mask(sheet.sprites[member])))
        nodes[leader] = make_node(leader, group, is_player=player_sprite_id in group,
                                  edges=edges)
    nodes[CAMERA_ID] = make_node(CAMERA_ID)
    nodes[NONE_ID] = make_node(NONE_ID)
    g = GameGraph(graph_id, "proto", nodes)
    validate_graph(g)
    return g


# ---------------------------------------------------------------------------
# Mapping
# ---------------------------------------------------------------------------

def _chunk_features(node: GameGraphNode) -> list[float]:
    avg = 0.0
    rep_min, rep_max = 1.0, 1.0
    degree = 0.0
    for e in node.edges:
        if e.kind is EdgeKind.CHUNK_POSITION:
            avg = e.avg_norm_pos
        elif e.kind is EdgeKind.CHUNK_REPEATS:
            rep_min, rep_max = float(e.min_repeat), float(e.max_repeat)
        elif e.kind is EdgeKind.CHUNK_TRANSITION:
            degree += 1.0
    return [avg, rep_min, rep_max, degree]


def _consolidate_chunk_nodes(
    kb: list[GameGraph], rng: np.random.Generator, k_max: int = 6,
) -> tuple[dict[str, GameGraphNode], dict[tuple[str, str], str]]:
    pooled: list[tuple[str, str, GameGraphNode]] = []
    for g in kb:
        for node_id in g.chunk_node_ids():
            pooled.append((g.graph_id, node_id, g.nodes[node_id]))
    pooled.sort(key=lambda t: (t[0], t[1]))
    if not pooled:
        return {}, {}
    feats = zscore(np.array([_chunk_features(n) for _, _, n in pooled], dtype=float))
    k = estimate_k(feats, k_max, rng, manhattan=True)
    labels, _, _ = kmedians(feats, k, rng)
    cluster_of = {(gid, nid): f"chunkcat_{lab}" for (gid, nid, _), lab in zip(pooled, labels)}

    nodes: dict[str, GameGraphNode] = {}
    for lab in sorted(set(labels)):
        proto_id = f"chunkcat_{lab}"
        member_idx = [i for i, l in enumerate(labels) if l == lab]
        medoid = pooled[medoid_index(feats, member_idx)]
        merged_transitions: dict[str, float] = {}
        edges: list[Edge] = []
        for e in medoid[2].edges:
            if e.kind is EdgeKind.CHUNK_TYPE:
                edges.append(Edge(EdgeKind.CHUNK_TYPE, proto_id, chunk_category=proto_id))
            elif e.kind is EdgeKind.CHUNK_TRANSITION:
                target = cluster_of[(medoid[0], e.target)]
                merged_transitions[target] = merged_transitions.get(target, 0.0) + e.probability
            else:
                edges.append(replace(e, target=proto_id))
        for target in sorted(merged_transitions):
            edges.append(Edge(EdgeKind.CHUNK_TRANSITION, target,
                              probability=merged_transitions[target]))
        nodes[proto_id] = make_node(proto_id, edges=edges)
    return nodes, cluster_of


def build_mapping(kb: list[GameGraph], proto: GameGraph,
                  rng: np.random.Generator) -> Mapping:
    """Map every kb node onto the proto graph (forward pass under the <1
    threshold, reverse pass for uncovered proto nodes, K-medians consolidation
    for the chunk categories, Camera to Camera and None to None)."""
    if not kb:
        raise MappingError("knowledge base is empty")
    ids = [g.graph_id for g in kb]
    if len(set(ids)) != len(ids):
        raise MappingError(f"duplicate graph ids in knowledge base: {ids}")

    proto_sprite_ids = sorted(n for n in proto.nodes if n not in (CAMERA_ID, NONE_ID))
    entries: dict[str, list[MapEntry]] = {p: [] for p in proto.nodes}
    forward: dict[tuple[str, str], str] = {}

    for g in sorted(kb, key=lambda g: g.graph_id):
        chunk_ids = set(g.chunk_node_ids())
        sprite_ids = sorted(n for n in g.nodes if n not in chunk_ids
                            and n not in (CAMERA_ID, NONE_ID))
        for nid in sprite_ids:
            best_proto, best_d = None, None
            for pid in proto_sprite_ids:
                d = node_chamfer(g.nodes[nid], proto.nodes[pid])
                if best_d is None or d < best_d:
                    best_proto, best_d = pid, d
            if best_proto is not None and best_d < 1.0:
                entries[best_proto].append(MapEntry(g.graph_id, nid, best_d))
                forward[(g.graph_id, nid)] = best_proto
        for special in (CAMERA_ID, NONE_ID):
            if special in g.nodes:
                d = node_chamfer(proto.nodes[special], g.nodes[special])
                entries[special].append(MapEntry(g.graph_id, special, d))
                forward[(g.graph_id, special)] = special

    # reverse pass: an uncovered proto node takes its closest kb node
    kb_sprite_nodes = sorted(
        (g.graph_id, nid)
        for g in kb
        for nid in g.nodes
        if nid not in set(g.chunk_node_ids()) and nid not in (CAMERA_ID, NONE_ID)
    )
    kb_by_id = {g.graph_id: g for g in kb}
    for pid in proto_sprite_ids:
        if entries[pid]:
            continue
        best = None
        for gid, nid in kb_sprite_nodes:
            d = node_chamfer(proto.nodes[pid], kb_by_id[gid].nodes[nid])
            if best is None or d < best[0]:
                best = (d, gid, nid)
        if best is None or best[0] >= 1.0:
            raise MappingError(f"proto node {pid!r} cannot be covered (closest distance "
                               f"{best[0] if best else 'n/a'})")
        entries[pid].append(MapEntry(best[1], best[2], best[0]))

    chunk_nodes, cluster_of = _consolidate_chunk_nodes(kb, rng)
    for (gid, nid), proto_id in sorted(cluster_of.items()):
        d = node_chamfer(kb_by_id[gid].nodes[nid], chunk_nodes[proto_id])
        if d >= 1.0:
            raise MappingError(f"chunk node ({gid}, {nid}) maps at distance {d} >= 1")
        entries.setdefault(proto_id, []).append(MapEntry(gid, nid, d))
        forward[(gid, nid)] = proto_id

    augmented_nodes = dict(proto.nodes)
    augmented_nodes.update(chunk_nodes)
    augmented = GameGraph(proto.graph_id, "proto", augmented_nodes)
    validate_graph(augmented)

    final = {
        pid: tuple(sorted(es, key=lambda e: (e.distance, e.graph_id, e.node_id)))
        for pid, es in entries.items()
    }
    for pid in augmented.nodes:
        if not final.get(pid):
            raise MappingError(f"proto node {pid!r} has no mapping entries")
    return Mapping(augmented, kb_by_id, final, forward, frozenset(chunk_nodes))
