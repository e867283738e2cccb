"""Probabilistic level design model.

Observed values come straight off level chunks: G (maximal 4-connected
same-type shapes on the tile grid), D (relative offsets between shape pairs),
N (per-type sprite counts). Hidden structure is clustered: S nodes are shape
styles per sprite type, L nodes are chunk styles, both with K picked by the
distortion ratio. Chunk sequencing is kept as run-collapsed transition
probabilities with repeat bounds — enough to walk out whole levels.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .cluster import estimate_k, kmeans, zscore
from .ingest import TILE, LevelChunk, SpritePlacement

OFFSET_CELL = 8  # conditional-table offsets are bucketed to 8px
SAMPLE_ITERATION_CAP = 500


class LevelModelError(Exception):
    pass


@dataclass(frozen=True)
class GValue:
    sprite_type: str
    x: int
    y: int
    shape: tuple[tuple[int, ...], ...]
    chunk_index: int

    @property
    def cell_count(self) -> int:
        return sum(sum(row) for row in self.shape)


@dataclass(frozen=True)
class DValue:
    from_g: int
    to_g: int
    dx: int  # fromAnchor - toAnchor
    dy: int


@dataclass(frozen=True)
class NValue:
    sprite_type: str
    count: int
    chunk_index: int


@dataclass
class SNode:
    s_id: str
    sprite_type: str
    g_members: list[int]
    d_members: list[int]


@dataclass
class LNode:
    l_id: str
    members: list[int]
    s_node_ids: list[str]
    n_distribution: dict[str, dict[int, float]]
    transitions: dict[str, float]
    repeat_min: int
    repeat_max: int
    avg_norm_pos: float


@dataclass
class LevelDesignModel:
    chunk_width: int
    chunk_height: int
    g_values: list[GValue]
    d_values: list[DValue]
    n_values: list[NValue]
    style_of: list[str]          # per g_values index
    chunk_l: list[str]           # per chunk index
    s_nodes: list[SNode]
    l_nodes: list[LNode]
    # (l, styleFrom, styleTo, dqx, dqy) -> P(styleFrom | styleTo, dq) within l
    table: dict[tuple[str, str, str, int, int], float]
    _by_style: dict[str, list[int]] = field(default_factory=dict, repr=False)

    def l_node(self, l_id: str) -> LNode:
        for l in self.l_nodes:
            if l.l_id == l_id:
                return l
        raise LevelModelError(f"unknown level chunk category {l_id!r}")

    def g_of_style(self, s_id: str) -> list[int]:
        if not self._by_style:
            for i, s in enumerate(self.style_of):
                self._by_style.setdefault(s, []).append(i)
        return self._by_style.get(s_id, [])


def quantize(v: int) -> int:
    return OFFSET_CELL * int(round(v / OFFSET_CELL))


# ---------------------------------------------------------------------------
# Observed values
# ---------------------------------------------------------------------------

def _tile_cells(placements: list[SpritePlacement]) -> set[tuple[int, int]]:
    """Grid occupancy anchored at each placement's nearest tile.

    Anchoring (rather than covering every overlapped tile) keeps cell counts
    equal to instance counts for tile-sized-or-smaller sprites, which the
    sampler relies on when it meters placements against sampled N targets.
    """
    cells: set[tuple[int, int]] = set()
    for p in placements:
        cx0, cy0 = round(p.x / TILE), round(p.y / TILE)
        for cx in range(cx0, cx0 + max(1, (p.w + TILE - 1) // TILE)):
            for cy in range(cy0, cy0 + max(1, (p.h + TILE - 1) // TILE)):
                cells.add((cx, cy))
    return cells


def _components(cells: set[tuple[int, int]]) -> list[set[tuple[int, int]]]:
    seen: set[tuple[int, int]] = set()
    comps = []
    for start in sorted(cells):
        if start in seen:
            continue
        comp = {start}
        frontier = [start]
        seen.add(start)
        while frontier:
            cx, cy = frontier.pop()
            for nxt in ((cx + 1, cy), (cx - 1, cy), (cx, cy + 1), (cx, cy - 1)):
                if nxt in cells and nxt not in seen:
                    seen.add(nxt)
                    comp.add(nxt)
                    frontier.append(nxt)
        comps.append(comp)
    return comps


def extract_observations(chunks: list[LevelChunk]) -> tuple[list[GValue], list[DValue], list[NValue]]:
    """Read G/D/N values off chunks: shapes per sprite type, offsets between
    every shape pair in a chunk (both directions), instance counts per type."""
    if not chunks:
        raise LevelModelError("no chunks to observe")
    g_values: list[GValue] = []
    d_values: list[DValue] = []
    n_values: list[NValue] = []
    for ci, chunk in enumerate(chunks):
        by_type: dict[str, list[SpritePlacement]] = {}
        for p in chunk.sprites:
            by_type.setdefault(p.sprite_id, []).append(p)
        chunk_g_start = len(g_values)
        for sprite_type in sorted(by_type):
            placements = by_type[sprite_type]
            n_values.append(NValue(sprite_type, len(placements), ci))
            for comp in _components(_tile_cells(placements)):
                min_cx = min(c[0] for c in comp)
                min_cy = min(c[1] for c in comp)
                rows = max(c[1] for c in comp) - min_cy + 1
                cols = max(c[0] for c in comp) - min_cx + 1
                shape = tuple(
                    tuple(1 if (min_cx + c, min_cy + r) in comp else 0 for c in range(cols))
                    for r in range(rows)
                )
                g_values.append(GValue(sprite_type, min_cx * TILE, min_cy * TILE, shape, ci))
        chunk_gs = range(chunk_g_start, len(g_values))
        for i in chunk_gs:
            for j in chunk_gs:
                if i == j:
                    continue
                d_values.append(DValue(
                    i, j,
                    g_values[i].x - g_values[j].x,
                    g_values[i].y - g_values[j].y,
                ))
    return g_values, d_values, n_values


# ---------------------------------------------------------------------------
# Learning
# ---------------------------------------------------------------------------

def _collapse_runs(labels: list[str]) -> list[tuple[str, int]]:
    runs: list[tuple[str, int]] = []
    for lab in labels:
        if runs and runs[-1][0] == lab:
            runs[-1] = (lab, runs[-1][1] + 1)
        else:
            runs.append((lab, 1))
    return runs


def learn_model(chunks: list[LevelChunk], chunk_order: list[int],
                rng: np.random.Generator, k_max: int = 4) -> LevelDesignModel:
    """Cluster observed values into S and L nodes, build the conditional
    placement table and the chunk-sequencing statistics."""
    if not chunks:
        raise LevelModelError("cannot learn a level model from zero chunks")
    g_values, d_values, n_values = extract_observations(chunks)

    style_of = [""] * len(g_values)
    s_nodes: list[SNode] = []
    types = sorted({g.sprite_type for g in g_values})
    for sprite_type in types:
        idxs = [i for i, g in enumerate(g_values) if g.sprite_type == sprite_type]
        feats = np.array([
            [g_values[i].cell_count,
             len(g_values[i].shape[0]), len(g_values[i].shape),
             g_values[i].x, g_values[i].y]
            for i in idxs
        ], dtype=float)
        k = estimate_k(zscore(feats), k_max, rng)
        labels, _, _ = kmeans(zscore(feats), k, rng)
        for i, lab in zip(idxs, labels):
            style_of[i] = f"s_{sprite_type}_{lab}"
        for lab in sorted(set(labels)):
            s_id = f"s_{sprite_type}_{lab}"
            members = [i for i, l in zip(idxs, labels) if l == lab]
            s_nodes.append(SNode(s_id, sprite_type, members, []))
    style_index = {s.s_id: s for s in s_nodes}
    for di, d in enumerate(d_values):
        style_index[style_of[d.from_g]].d_members.append(di)

    all_styles = sorted(style_index)
    chunk_feats = np.zeros((len(chunks), len(all_styles) + len(types)))
    for i, g in enumerate(g_values):
        chunk_feats[g.chunk_index, all_styles.index(style_of[i])] += 1
    for n in n_values:
        chunk_feats[n.chunk_index, len(all_styles) + types.index(n.sprite_type)] += n.count
    k_l = estimate_k(zscore(chunk_feats), k_max, rng)
    l_labels, _, _ = kmeans(zscore(chunk_feats), k_l, rng)
    chunk_l = [f"lchunk_{lab}" for lab in l_labels]

    order_labels = [chunk_l[i] for i in chunk_order]
    runs = _collapse_runs(order_labels)
    bigrams: Counter = Counter()
    for (a, _), (b, _) in zip(runs, runs[1:]):
        bigrams[(a, b)] += 1
    run_lengths: dict[str, list[int]] = {}
    for lab, length in runs:
        run_lengths.setdefault(lab, []).append(length)

    l_nodes: list[LNode] = []
    for lab in sorted(set(chunk_l)):
        members = [i for i, l in enumerate(chunk_l) if l == lab]
        member_set = set(members)
        styles = sorted({style_of[i] for i, g in enumerate(g_values) if g.chunk_index in member_set})
        n_distribution: dict[str, dict[int, float]] = {}
        for sprite_type in types:
            counts = Counter()
            per_chunk = {n.chunk_index: n.count for n in n_values if n.sprite_type == sprite_type}
            for ci in members:
                counts[per_chunk.get(ci, 0)] += 1
            total = sum(counts.values())
            n_distribution[sprite_type] = {c: counts[c] / total for c in sorted(counts)}
        outgoing = {b: c for (a, b), c in bigrams.items() if a == lab}
        total_out = sum(outgoing.values())
        transitions = {b: c / total_out for b, c in sorted(outgoing.items())}
        lengths = run_lengths.get(lab, [1])
        positions = [p for p, l in enumerate(order_labels) if l == lab]
        avg_pos = float(np.mean([p / len(order_labels) for p in positions])) if positions else 0.0
        l_nodes.append(LNode(
            l_id=lab, members=members, s_node_ids=styles,
            n_distribution=n_distribution, transitions=transitions,
            repeat_min=min(lengths), repeat_max=max(lengths),
            avg_norm_pos=avg_pos,
        ))

    pair_counts: Counter = Counter()
    for d in d_values:
        l_id = chunk_l[g_values[d.from_g].chunk_index]
        key = (l_id, style_of[d.from_g], style_of[d.to_g], quantize(d.dx), quantize(d.dy))
        pair_counts[key] += 1
    group_totals: Counter = Counter()
    for (l_id, _, s_to, dqx, dqy), c in pair_counts.items():
        group_totals[(l_id, s_to, dqx, dqy)] += c
    table = {
        key: c / group_totals[(key[0], key[2], key[3], key[4])]
        for key, c in pair_counts.items()
    }

    return LevelDesignModel(
        chunk_width=chunks[0].width, chunk_height=chunks[0].height,
        g_values=g_values, d_values=d_values, n_values=n_values,
        style_of=style_of, chunk_l=chunk_l, s_nodes=s_nodes, l_nodes=l_nodes,
        table=table,
    )


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def _modal_g(model: LevelDesignModel, member_gs: list[int]) -> int:
    counts: Counter = Counter()
    for i in member_gs:
        g = model.g_values[i]
        counts[(g.sprite_type, g.x, g.y, g.shape)] += 1
    best_key = min(counts, key=lambda k: (-counts[k], k))
    for i in member_gs:
        g = model.g_values[i]
        if (g.sprite_type, g.x, g.y, g.shape) == best_key:
            return i
    raise AssertionError("modal G lookup cannot miss")


def sample_chunk(model: LevelDesignModel, l_id: str,
                 rng: np.random.Generator) -> LevelChunk:
    """Generate a chunk of category l_id: seed with the modal shape, then keep
    querying the conditional placement distribution until every sampled count
    target is met (or the iteration cap trips, flagging the chunk incomplete)."""
    l_node = model.l_node(l_id)
    member_set = set(l_node.members)
    member_gs = [i for i, g in enumerate(model.g_values) if g.chunk_index in member_set]

    targets: dict[str, int] = {}
    for sprite_type in sorted(l_node.n_distribution):
        dist = l_node.n_distribution[sprite_type]
        counts = sorted(dist)
        probs = np.array([dist[c] for c in counts])
        targets[sprite_type] = int(counts[rng.choice(len(counts), p=probs / probs.sum())])

    placed: list[tuple[int, int, int]] = []  # (g index, x, y)
    placed_count: Counter = Counter()
    occupied: dict[str, set[tuple[int, int]]] = {}

    def try_place(g_idx: int, x: int, y: int) -> bool:
        g = model.g_values[g_idx]
        w_px = len(g.shape[0]) * TILE
        h_px = len(g.shape) * TILE
        if x < 0 or y < 0 or x + w_px > model.chunk_width or y + h_px > model.chunk_height:
            return False
        if placed_count[g.sprite_type] + g.cell_count > targets.get(g.sprite_type, 0):
            return False
        cells = {(x + c * TILE, y + r * TILE)
                 for r, row in enumerate(g.shape) for c, v in enumerate(row) if v}
        taken = occupied.setdefault(g.sprite_type, set())
        if cells & taken:
            return False
        taken.update(cells)
        placed.append((g_idx, x, y))
        placed_count[g.sprite_type] += g.cell_count
        return True

    if member_gs:
        seed = _modal_g(model, member_gs)
        seed_g = model.g_values[seed]
        if targets.get(seed_g.sprite_type, 0) < seed_g.cell_count:
            targets[seed_g.sprite_type] = seed_g.cell_count
        try_place(seed, seed_g.x, seed_g.y)

    by_style_key: dict[str, list[tuple[str, int, int, float]]] = {}
    for (l, s_from, s_to, dqx, dqy), p in sorted(model.table.items()):
        if l == l_id:
            by_style_key.setdefault(s_to, []).append((s_from, dqx, dqy, p))

    complete = all(placed_count[t] >= c for t, c in targets.items())
    for _ in range(SAMPLE_ITERATION_CAP):
        if complete or not placed:
            break
        anchor_g, ax, ay = placed[int(rng.integers(len(placed)))]
        candidates = by_style_key.get(model.style_of[anchor_g], [])
        if not candidates:
            continue
        probs = np.array([c[3] for c in candidates])
        s_from, dqx, dqy, _ = candidates[int(rng.choice(len(candidates), p=probs / probs.sum()))]
        pool = model.g_of_style(s_from)
        if not pool:
            continue
        g_idx = pool[int(rng.integers(len(pool)))]
        try_place(g_idx, ax + dqx, ay + dqy)
        complete = all(placed_count[t] >= c for t, c in targets.items())

    sprites = []
    for g_idx, x, y in placed:
        g = model.g_values[g_idx]
        for r, row in enumerate(g.shape):
            for c, v in enumerate(row):
                if v:
                    sprites.append(SpritePlacement(g.sprite_type, x + c * TILE, y + r * TILE, TILE, TILE))
    sprites.sort(key=lambda p: (p.x, p.y, p.sprite_id))
    return LevelChunk(model.chunk_width, model.chunk_height, tuple(sprites), complete=complete)
