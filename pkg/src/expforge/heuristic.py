"""Creativity heuristic: novelty, surprise, value.

Novelty is the minimum graph Chamfer distance to anything the system has
seen or made. Surprise compares normalized mapping-magnitude vectors (how a
viewer would relate the candidate to known games) against per-original
reference vectors. Value runs the A* challenge probe over five sampled chunks
and measures quartile-statistics distance to the closest original — the one
component deliberately blind to previously generated games.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import GameGraph, graph_chamfer, node_chamfer
from .simulate import METRICS, RefEntry, ReferenceDistribution, challenge_stats_for, stats_quartiles

VALUE_SAMPLE_CHUNKS = 5


class HeuristicError(Exception):
    pass


@dataclass
class KnowledgeBase:
    """The original learned games plus everything generated so far."""

    originals: list[GameGraph]
    generated: list[GameGraph] = field(default_factory=list)
    _references: list[list[float]] | None = field(default=None, init=False, repr=False)

    def members(self) -> list[GameGraph]:
        return list(self.originals) + list(self.generated)

    def append_generated(self, g: GameGraph) -> None:
        self.generated.append(g)

    def reference_vectors(self) -> list[list[float]]:
        """One expectation vector per original: its mapping magnitudes onto
        the other originals. Fixed after load, so cached."""
        if self._references is None:
            if len(self.originals) < 2:
                raise HeuristicError("surprise needs at least two original graphs")
            self._references = []
            for i, origin in enumerate(self.originals):
                others = [g for j, g in enumerate(self.originals) if j != i]
                self._references.append(mapping_magnitude_vector(origin, others))
        return self._references


def novelty(g: GameGraph, kb: KnowledgeBase) -> float:
    """Min Chamfer distance from the candidate to any known graph."""
    members = kb.members()
    if not members:
        raise HeuristicError("novelty needs a non-empty knowledge base")
    return min(graph_chamfer(g, m) for m in members)


def mapping_magnitude_vector(src: GameGraph, targets: list[GameGraph]) -> list[float]:
    """Sorted-descending, sum-normalized histogram of how often each pooled
    target node is the nearest home for a node of `src`."""
    if not targets:
        raise HeuristicError("mapping magnitude vector needs targets")
    pooled = [
        (t.graph_id, nid, t.nodes[nid])
        for t in sorted(targets, key=lambda t: t.graph_id)
        for nid in sorted(t.nodes)
    ]
    counts = [0] * len(pooled)
    for node in src.sorted_nodes():
        best, best_d = None, None
        for i, (_, _, target_node) in enumerate(pooled):
            d = node_chamfer(node, target_node)
            if best_d is None or d < best_d:
                best, best_d = i, d
        counts[best] += 1
    vector = sorted((c for c in counts if c > 0), reverse=True)
    total = sum(vector)
    return [c / total for c in vector] if total else []


def vector_surprise(a: list[float], b: list[float]) -> float:
    """Cut the longer tail, renormalize both, sum positionwise gaps, halve."""
    n = min(len(a), len(b))
    if n == 0:
        return 0.0 if not a and not b else 1.0
    ta, tb = a[:n], b[:n]
    sa, sb = sum(ta), sum(tb)
    ta = [v / sa for v in ta] if sa else ta
    tb = [v / sb for v in tb] if sb else tb
    return sum(abs(x - y) for x, y in zip(ta, tb)) / 2.0


def surprise(g: GameGraph, kb: KnowledgeBase) -> float:
    """Min distance between the candidate's mapping-magnitude vector (against
    everything known, generated included) and any original's reference vector."""
    candidate = mapping_magnitude_vector(g, kb.members())
    return min(vector_surprise(candidate, ref) for ref in kb.reference_vectors())


def value_from_stats(candidate: dict[str, tuple[float, float, float]],
                     refs: ReferenceDistribution) -> float:
    """Score nine candidate quartile stats against the closest original,
    each gap normalized by that original's observed range (floored at 1)."""
    if not refs:
        raise HeuristicError("value needs reference distributions")
    best = 0.0
    for graph_id in sorted(refs):
        entry: RefEntry = refs[graph_id]
        gaps = []
        for m in METRICS:
            span = max(entry.ranges[m], 1.0)
            for c_stat, r_stat in zip(candidate[m], entry.quartiles[m]):
                gaps.append(abs(c_stat - r_stat) / span)
        best = max(best, 1.0 - sum(gaps) / len(gaps))
    return min(max(best, 0.0), 1.0)


def value(g: GameGraph, refs: ReferenceDistribution, rng: np.random.Generator) -> float:
    """Challenge distance to the closest original.

    Five sampled chunks are probed by the A* agent; the Q1/median/Q3 of each
    metric are compared per original against its 100-sample distribution,
    normalized by that original's observed range. An exact 9-stat match is 1.0.
    """
    stats = challenge_stats_for(g, rng, VALUE_SAMPLE_CHUNKS)
    candidate = {m: stats_quartiles([s.metric(m) for s in stats]) for m in METRICS}
    return value_from_stats(candidate, refs)


def heuristic_total(g: GameGraph, kb: KnowledgeBase, refs: ReferenceDistribution,
                    rng: np.random.Generator) -> dict[str, float]:
    """All three components plus their sum (bounded by 3.0).

    Novelty and surprise share one pass of node distances per kb member; the
    results match the standalone novelty()/surprise() functions exactly.
    """
    members = sorted(kb.members(), key=lambda m: m.graph_id)
    if not members:
        raise HeuristicError("heuristic needs a non-empty knowledge base")
    src_nodes = g.sorted_nodes()
    tables = [
        [[node_chamfer(a, b) for b in m.sorted_nodes()] for a in src_nodes]
        for m in members
    ]
    if src_nodes:
        n = min(sum(min(row) for row in tbl) / len(src_nodes) for tbl in tables)
    else:
        n = 0.0
    counts: dict[tuple[int, int], int] = {}
    for i in range(len(src_nodes)):
        best: tuple[float, tuple[int, int]] | None = None
        for t_i, tbl in enumerate(tables):
            for j, d in enumerate(tbl[i]):
                if best is None or d < best[0]:
                    best = (d, (t_i, j))
        counts[best[1]] = counts.get(best[1], 0) + 1
    vector = sorted(counts.values(), reverse=True)
    total = sum(vector)
    candidate = [c / total for c in vector] if total else []
    s = min(vector_surprise(candidate, ref) for ref in kb.reference_vectors())
    v = value(g, refs, rng)
    return {"novelty": n, "surprise": s, "value": v, "total": n + s + v}


def make_heuristic(kb: KnowledgeBase, refs: ReferenceDistribution, value_seed: int):
    """Build a graph -> score callable for the searchers.

    Each evaluation re-seeds the value sampler with `value_seed`, so scores are
    reproducible and candidates face identical chunk draws.
    """

    def score(g: GameGraph) -> float:
        return heuristic_total(g, kb, refs, np.random.default_rng(value_seed))["total"]

    return score
