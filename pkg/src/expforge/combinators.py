"""Conceptual expansion and the baseline combinators.

An expansion assigns each output node a weighted combination of mapped
knowledge-base nodes: per source edge, a filter chooses inclusion, a numeric
scale, and an optional retarget. Search is greedy hill climbing over ten
sampled neighbors per step. Amalgamation (one whole input per slot), blending
(unions of whole inputs) and compositional adaptation (one input per slot with
mapped-equivalent rewiring) enumerate their smaller spaces under the same
heuristic.
"""

from __future__ import annotations

import itertools
import logging
from collections import Counter
from dataclasses import dataclass, replace
from typing import Callable, Iterable

import numpy as np

from .facts import FactKind
from .graph import (Edge, EdgeKind, GameGraph, GameGraphNode, edge_with,
                    make_node, validate_graph)
from .proto_map import MapEntry, Mapping

log = logging.getLogger(__name__)

SCALE_MIN, SCALE_MAX = 0.25, 4.0
EXHAUSTIVE_CAP = 10 ** 6
SAMPLE_BUDGET = 50_000
NEIGHBOR_COUNT = 10
PATIENCE = 10

HeuristicFn = Callable[[GameGraph], float]

# kinds whose pointer may be legally re-aimed at another output node
RETARGETABLE = frozenset({EdgeKind.D_RELATION, EdgeKind.CHUNK_TRANSITION,
                          EdgeKind.RULE_CONDITION})


class CombinatorError(Exception):
    pass


@dataclass(frozen=True)
class EdgeFilter:
    include: bool = True
    scale: float = 1.0
    retarget: str | None = None


@dataclass
class TermState:
    source: MapEntry
    filters: tuple[EdgeFilter, ...]


@dataclass
class ConceptualExpansion:
    """Per output node, the mapped source nodes and their per-edge filters."""

    mapping: Mapping
    nodes: dict[str, list[TermState]]

    @property
    def proto(self) -> GameGraph:
        return self.mapping.proto

    def copy(self) -> "ConceptualExpansion":
        return ConceptualExpansion(
            self.mapping,
            {nid: [TermState(t.source, tuple(t.filters)) for t in terms]
             for nid, terms in self.nodes.items()},
        )

    def included_edge_count(self) -> int:
        return sum(f.include for terms in self.nodes.values()
                   for t in terms for f in t.filters)


def _full_filters(node: GameGraphNode) -> tuple[EdgeFilter, ...]:
    return tuple(EdgeFilter() for _ in node.edges)


def expansion_from_init(proto: GameGraph, m: Mapping,
                        rng: np.random.Generator) -> ConceptualExpansion:
    """Initial expansion: the best-mapped source keeps every edge; other
    sources include each edge with probability (1-d)/(1-d_min), seeded."""
    nodes: dict[str, list[TermState]] = {}
    for proto_id in sorted(proto.nodes):
        entries = m.entries[proto_id]
        d_min = entries[0].distance
        terms: list[TermState] = []
        for entry in entries:
            source = m.node_of(entry)
            weight = (1.0 - entry.distance) / (1.0 - d_min) if d_min < 1.0 else 1.0
            filters = tuple(
                EdgeFilter(include=bool(weight >= 1.0 or rng.random() < weight))
                for _ in source.edges
            )
            terms.append(TermState(entry, filters))
        nodes[proto_id] = terms
    return ConceptualExpansion(m, nodes)


# ---------------------------------------------------------------------------
# Realization
# ---------------------------------------------------------------------------

def _rewritten_edges(mapping: Mapping, gid: str, node_id: str,
                     proto_id: str) -> list[tuple[Edge | None, tuple | None]]:
    """Default rewrite (scale 1, no retarget) of a source node's edges onto an
    output slot, with precomputed sort keys. Rule ids stay original; the
    per-candidate re-keying happens in realize. Cached on the mapping: the
    same term appears in thousands of candidates during a search."""
    cache = mapping.__dict__.setdefault("_rewrite_cache", {})
    key = (gid, node_id, proto_id)
    hit = cache.get(key)
    if hit is None:
        source = mapping.kb[gid].nodes[node_id]
        rename = {node_id: proto_id}
        hit = []
        for edge in source.edges:
            out = _rewire(edge, gid, proto_id, rename, None, mapping)
            hit.append((out, out.sort_key() if out is not None else None))
        cache[key] = hit
    return hit


def realize(ce: ConceptualExpansion, graph_id: str = "candidate",
            provenance: str = "expanded") -> GameGraph:
    """Materialize an expansion: per output node, the union of included edges,
    scaled, with targets and fact sprite ids remapped onto output nodes and
    rule ids re-keyed. Pure: identical inputs give identical graphs."""
    mapping = ce.mapping
    proto = ce.proto
    rule_key: dict[tuple[str, int], int] = {}

    def rekey(graph_id_: str, rule_id: int) -> int:
        key = (graph_id_, rule_id)
        if key not in rule_key:
            rule_key[key] = len(rule_key)
        return rule_key[key]

    nodes: dict[str, GameGraphNode] = {}
    for proto_id in sorted(proto.nodes):
        proto_node = proto.nodes[proto_id]
        collected: dict[tuple, Edge] = {}
        for term in ce.nodes.get(proto_id, []):
            gid = term.source.graph_id
            source = mapping.node_of(term.source)
            defaults = _rewritten_edges(mapping, gid, term.source.node_id, proto_id)
            for edge, filt, (out, out_key) in zip(source.edges, term.filters, defaults):
                if not filt.include:
                    continue
                scale = max(SCALE_MIN, min(SCALE_MAX, filt.scale))
                if scale != 1.0 or filt.retarget is not None:
                    rename = {source.node_id: proto_id}
                    out = _rewire(edge.scaled(scale), gid, proto_id, rename,
                                  filt.retarget, mapping)
                    out_key = out.sort_key() if out is not None else None
                if out is None:
                    continue
                if out.kind in (EdgeKind.RULE_CONDITION, EdgeKind.RULE_EFFECT) \
                        and out.rule_id >= 0:
                    out = edge_with(out, rule_id=rekey(gid, out.rule_id))
                    out_key = out.sort_key()
                collected[out_key] = out
        edges = _normalize_edges([collected[k] for k in sorted(collected)])
        nodes[proto_id] = GameGraphNode(proto_id, proto_node.sprite_ids,
                                        proto_node.is_player,
                                        tuple(sorted(edges, key=Edge.sort_key)))
    g = GameGraph(graph_id, provenance, nodes)
    validate_graph(g)
    return g


def _rename_id(node_id: str, gid: str, rename: dict[str, str], mapping: Mapping) -> str | None:
    if node_id in rename:
        return rename[node_id]
    return mapping.output_of(gid, node_id)


def _rewire(e: Edge, gid: str, owner: str, rename: dict[str, str],
            retarget: str | None, mapping: Mapping) -> Edge | None:
    if e.kind in (EdgeKind.G_SHAPE, EdgeKind.N_COUNT, EdgeKind.CHUNK_REPEATS,
                  EdgeKind.CHUNK_POSITION):
        return edge_with(e, target=owner)
    if e.kind is EdgeKind.CHUNK_TYPE:
        return edge_with(e, target=owner, chunk_category=owner)
    if e.kind in (EdgeKind.D_RELATION, EdgeKind.CHUNK_TRANSITION):
        target = retarget or _rename_id(e.target, gid, rename, mapping)
        if target is None:
            log.debug("dropping %s edge of %s: target %s is unmapped", e.kind.value, gid, e.target)
            return None
        return edge_with(e, target=target)
    if e.kind is EdgeKind.RULE_CONDITION:
        table = _fact_rename_table(e.fact, gid, rename, mapping)
        if table is None:
            return None
        fact = e.fact.rename(table)
        if retarget is not None and fact.kind in (FactKind.RELATIONSHIP_X, FactKind.RELATIONSHIP_Y):
            fact = fact.rename({fact.other: retarget})
        target = fact.other if fact.kind in (FactKind.RELATIONSHIP_X,
                                             FactKind.RELATIONSHIP_Y) else owner
        return edge_with(e, target=target, fact=fact)
    # rule effect: the target follows the rewritten post fact's subject
    table = _fact_rename_table(e.pre, gid, rename, mapping)
    table2 = _fact_rename_table(e.post, gid, rename, mapping)
    if table is None or table2 is None:
        return None
    pre, post = e.pre.rename(table), e.post.rename(table2)
    target = post.subject if post.subject else owner
    return edge_with(e, target=target, pre=pre, post=post)


def _fact_rename_table(fact, gid: str, rename: dict[str, str],
                       mapping: Mapping) -> dict[str, str] | None:
    table: dict[str, str] = {}
    names = {fact.sprite}
    if fact.kind in (FactKind.RELATIONSHIP_X, FactKind.RELATIONSHIP_Y):
        names.add(fact.other)
    for name in names:
        if not name:
            continue
        out = _rename_id(name, gid, rename, mapping)
        if out is None:
            log.debug("dropping rule edge of %s: sprite %s is unmapped", gid, name)
            return None
        table[name] = out
    return table


def _normalize_edges(edges: list[Edge]) -> list[Edge]:
    """Merge and renormalize outgoing transition probabilities to sum to 1."""
    transitions = [e for e in edges if e.kind is EdgeKind.CHUNK_TRANSITION]
    if not transitions:
        return edges
    rest = [e for e in edges if e.kind is not EdgeKind.CHUNK_TRANSITION]
    merged: dict[str, float] = {}
    for e in transitions:
        merged[e.target] = merged.get(e.target, 0.0) + e.probability
    total = sum(merged.values())
    if total <= 0:
        return rest
    rest.extend(Edge(EdgeKind.CHUNK_TRANSITION, t, probability=p / total)
                for t, p in sorted(merged.items()))
    return rest


# ---------------------------------------------------------------------------
# Neighborhood
# ---------------------------------------------------------------------------

_OPERATORS = ("toggle", "scale", "add_term", "drop_term", "retarget")


def get_neighbor(ce: ConceptualExpansion, rng: np.random.Generator) -> ConceptualExpansion:
    """Apply exactly one mutation, drawn uniformly from the five operators
    (re-drawing any that cannot apply)."""
    for _ in range(100):
        op = _OPERATORS[int(rng.integers(len(_OPERATORS)))]
        out = _apply_operator(ce, op, rng)
        if out is not None:
            return out
    raise CombinatorError("no neighbor operator applies to this expansion")


def _term_pool(ce: ConceptualExpansion) -> list[tuple[str, int]]:
    return [
        (nid, ti)
        for nid in sorted(ce.nodes)
        for ti in range(len(ce.nodes[nid]))
        if ce.nodes[nid][ti].filters
    ]


def _apply_operator(ce: ConceptualExpansion, op: str,
                    rng: np.random.Generator) -> ConceptualExpansion | None:
    mapping = ce.mapping
    if op == "toggle":
        pool = _term_pool(ce)
        if not pool:
            return None
        nid, ti = pool[int(rng.integers(len(pool)))]
        out = ce.copy()
        term = out.nodes[nid][ti]
        ei = int(rng.integers(len(term.filters)))
        filters = list(term.filters)
        filters[ei] = replace(filters[ei], include=not filters[ei].include)
        term.filters = tuple(filters)
        return out
    if op == "scale":
        pool = _term_pool(ce)
        if not pool:
            return None
        nid, ti = pool[int(rng.integers(len(pool)))]
        out = ce.copy()
        term = out.nodes[nid][ti]
        ei = int(rng.integers(len(term.filters)))
        factor = 0.5 + 1.5 * rng.random()  # uniform over [0.5, 2)
        filters = list(term.filters)
        new_scale = max(SCALE_MIN, min(SCALE_MAX, filters[ei].scale * factor))
        filters[ei] = replace(filters[ei], scale=new_scale)
        term.filters = tuple(filters)
        return out
    if op == "add_term":
        options = []
        for nid in sorted(ce.nodes):
            used = {t.source for t in ce.nodes[nid]}
            for entry in mapping.entries[nid]:
                if entry not in used:
                    options.append((nid, entry))
        if not options:
            return None
        nid, entry = options[int(rng.integers(len(options)))]
        out = ce.copy()
        out.nodes[nid].append(TermState(entry, _full_filters(mapping.node_of(entry))))
        return out
    if op == "drop_term":
        options = [nid for nid in sorted(ce.nodes) if len(ce.nodes[nid]) >= 2]
        if not options:
            return None
        nid = options[int(rng.integers(len(options)))]
        out = ce.copy()
        ti = int(rng.integers(len(out.nodes[nid])))
        out.nodes[nid].pop(ti)
        return out
    # retarget: re-aim one inter-node edge at another output node of a legal kind
    pool = []
    for nid in sorted(ce.nodes):
        for ti, term in enumerate(ce.nodes[nid]):
            source = mapping.node_of(term.source)
            for ei, edge in enumerate(source.edges):
                if edge.kind in RETARGETABLE:
                    pool.append((nid, ti, ei, edge.kind))
    if not pool:
        return None
    nid, ti, ei, kind = pool[int(rng.integers(len(pool)))]
    if kind is EdgeKind.CHUNK_TRANSITION:
        targets = sorted(mapping.chunk_node_ids)
    else:
        targets = [n for n in sorted(ce.nodes) if n not in mapping.chunk_node_ids]
    if not targets:
        return None
    out = ce.copy()
    term = out.nodes[nid][ti]
    filters = list(term.filters)
    choice = targets[int(rng.integers(len(targets)))]
    filters[ei] = replace(filters[ei], retarget=choice)
    term.filters = tuple(filters)
    return out


# ---------------------------------------------------------------------------
# Heuristic-driven expansion search
# ---------------------------------------------------------------------------

def ce_search(proto: GameGraph, m: Mapping, heuristic_fn: HeuristicFn,
              rng: np.random.Generator, neighbors: int = NEIGHBOR_COUNT,
              patience: int = PATIENCE) -> ConceptualExpansion:
    """Greedy hill climbing: from the initial expansion, score `neighbors`
    sampled neighbors per step, adopt strict improvements, and stop after
    `patience` consecutive non-improving steps."""
    incumbent = expansion_from_init(proto, m, rng)
    best_score = heuristic_fn(realize(incumbent))
    stale = 0
    while stale < patience:
        candidates = [get_neighbor(incumbent, rng) for _ in range(neighbors)]
        scored = [(heuristic_fn(realize(c)), i) for i, c in enumerate(candidates)]
        top_score, top_i = max(scored, key=lambda s: (s[0], -s[1]))
        if top_score > best_score:
            incumbent = candidates[top_i]
            best_score = top_score
            stale = 0
        else:
            stale += 1
    return incumbent


# ---------------------------------------------------------------------------
# Baseline combinators
# ---------------------------------------------------------------------------

def _assignment_to_ce(m: Mapping, picks: dict[str, list[MapEntry]]) -> ConceptualExpansion:
    nodes = {
        nid: [TermState(entry, _full_filters(m.node_of(entry))) for entry in entries]
        for nid, entries in picks.items()
    }
    return ConceptualExpansion(m, nodes)


def _argmax(candidates: Iterable[ConceptualExpansion], heuristic_fn: HeuristicFn,
            provenance: str) -> GameGraph:
    best: tuple[float, GameGraph] | None = None
    for ce in candidates:
        g = realize(ce, provenance=provenance)
        score = heuristic_fn(g)
        if best is None or score > best[0]:
            best = (score, g)
    if best is None:
        raise CombinatorError("combinator produced no candidates")
    return best[1]


def amalgam_search(proto: GameGraph, m: Mapping, heuristic_fn: HeuristicFn,
                   rng: np.random.Generator | None = None,
                   exhaustive_cap: int = EXHAUSTIVE_CAP,
                   sample_budget: int = SAMPLE_BUDGET) -> GameGraph:
    """Exactly one whole mapped node per output slot; exhaustive under the
    cap, else uniformly sampled."""
    node_ids = sorted(m.entries)
    option_counts = [len(m.entries[nid]) for nid in node_ids]
    space = 1
    for c in option_counts:
        space *= c

    def candidate(indices: tuple[int, ...]) -> ConceptualExpansion:
        picks = {nid: [m.entries[nid][i]] for nid, i in zip(node_ids, indices)}
        return _assignment_to_ce(m, picks)

    if space <= exhaustive_cap:
        indices = itertools.product(*(range(c) for c in option_counts))
    else:
        if rng is None:
            raise CombinatorError("sampled amalgam search needs an rng")
        indices = (tuple(int(rng.integers(c)) for c in option_counts)
                   for _ in range(sample_budget))
    return _argmax((candidate(i) for i in indices), heuristic_fn, "amalgam")


def blend_search(proto: GameGraph, m: Mapping, heuristic_fn: HeuristicFn,
                 exhaustive_cap: int = EXHAUSTIVE_CAP,
                 sample_budget: int = SAMPLE_BUDGET) -> GameGraph:
    """Per-node unions of mapped nodes' full edge sets, enumerated from the
    largest subsets down (the all-inputs union comes first)."""
    node_ids = sorted(m.entries)
    subset_lists: list[list[tuple[MapEntry, ...]]] = []
    for nid in node_ids:
        entries = m.entries[nid]
        subsets: list[tuple[MapEntry, ...]] = []
        for size in range(len(entries), 0, -1):
            subsets.extend(itertools.combinations(entries, size))
        subset_lists.append(subsets)
    space = 1
    for s in subset_lists:
        space *= len(s)
    combos = itertools.product(*subset_lists)
    if space > exhaustive_cap:
        combos = itertools.islice(combos, sample_budget)

    def candidates():
        for combo in combos:
            picks = {nid: list(subset) for nid, subset in zip(node_ids, combo)}
            yield _assignment_to_ce(m, picks)

    return _argmax(candidates(), heuristic_fn, "blend")


def _rewire_choices(m: Mapping, gid: str, edge: Edge) -> list[str | None]:
    """Output nodes whose mapped set shares a member with the original
    target's slot; the original slot comes first (identity rewiring).

    Membership compares (graph, node) references: the same kb node can sit in
    two slots at different recorded distances (forward vs reverse pass).
    """
    home = m.output_of(gid, edge.target)
    if home is None:
        return [None]
    home_refs = {(e.graph_id, e.node_id) for e in m.entries.get(home, ())}
    options = [home]
    for nid in sorted(m.entries):
        if nid == home:
            continue
        if any((e.graph_id, e.node_id) in home_refs for e in m.entries[nid]):
            options.append(nid)
    return options


def composition_search(proto: GameGraph, m: Mapping, heuristic_fn: HeuristicFn,
                       rng: np.random.Generator | None = None,
                       exhaustive_cap: int = EXHAUSTIVE_CAP,
                       sample_budget: int = SAMPLE_BUDGET) -> GameGraph:
    """One whole mapped node per slot, with inter-node edges re-routable to
    any output node holding a mapped-equivalent of the original target."""
    node_ids = sorted(m.entries)
    option_counts = [len(m.entries[nid]) for nid in node_ids]
    bases = list(itertools.product(*(range(c) for c in option_counts)))

    def build(indices: tuple[int, ...], rewires: dict[tuple[str, int], str] | None
              ) -> ConceptualExpansion:
        picks = {nid: [m.entries[nid][i]] for nid, i in zip(node_ids, indices)}
        ce = _assignment_to_ce(m, picks)
        if rewires:
            for (nid, ei), target in rewires.items():
                term = ce.nodes[nid][0]
                filters = list(term.filters)
                filters[ei] = replace(filters[ei], retarget=target)
                term.filters = tuple(filters)
        return ce

    def rewirable(indices: tuple[int, ...]) -> list[tuple[str, int, list[str]]]:
        spots = []
        for nid, i in zip(node_ids, indices):
            entry = m.entries[nid][i]
            source = m.node_of(entry)
            for ei, edge in enumerate(source.edges):
                if edge.kind in RETARGETABLE:
                    choices = [c for c in _rewire_choices(m, entry.graph_id, edge)
                               if c is not None]
                    if len(choices) > 1:
                        spots.append((nid, ei, choices))
        return spots

    space = 0
    spots_by_base = []
    for indices in bases:
        spots = rewirable(indices)
        combos = 1
        for _, _, choices in spots:
            combos *= len(choices)
        spots_by_base.append(spots)
        space += combos

    def candidates():
        if space <= exhaustive_cap:
            for indices, spots in zip(bases, spots_by_base):
                for combo in itertools.product(*(choices for _, _, choices in spots)):
                    rewires = {(nid, ei): target
                               for (nid, ei, _), target in zip(spots, combo)}
                    yield build(indices, rewires)
        else:
            if rng is None:
                raise CombinatorError("sampled composition search needs an rng")
            for _ in range(sample_budget):
                bi = int(rng.integers(len(bases)))
                indices, spots = bases[bi], spots_by_base[bi]
                rewires = {
                    (nid, ei): choices[int(rng.integers(len(choices)))]
                    for nid, ei, choices in spots
                }
                yield build(indices, rewires)

    return _argmax(candidates(), heuristic_fn, "composition")


def neighbor_operator_counts(ce: ConceptualExpansion, rng: np.random.Generator,
                             draws: int) -> Counter:
    """Frequency probe used by tests: which operator produced each neighbor."""
    counts: Counter = Counter()
    for _ in range(draws):
        for _ in range(100):
            op = _OPERATORS[int(rng.integers(len(_OPERATORS)))]
            out = _apply_operator(ce, op, rng)
            if out is not None:
                counts[op] += 1
                break
    return counts
