import json

import numpy as np
import pytest

from expforge import ingest, level_model
from expforge.ingest import LevelChunk, SpritePlacement, TILE
from expforge.level_model import (GValue, LevelDesignModel, LevelModelError,
                                  extract_observations, learn_model, sample_chunk)
from expforge.rng import substream

from conftest import FIXTURES
from oracles import bigram_transition_table, flood_fill_components


def chunk_of(placements, width=96, height=96):
    sprites = tuple(SpritePlacement(sid, x, y, TILE, TILE) for sid, x, y in placements)
    return LevelChunk(width, height, sprites)


def walker_chunks():
    frames = ingest.load_trace(FIXTURES / "walker.trace.json")
    screen = ingest.trace_screen(FIXTURES / "walker.trace.json")
    bounds = ingest.chunk_bounds(frames, screen)
    return [ingest.chunk_from_frame(f, bounds) for f in frames]


# ---------------------------------------------------------------------------
# observed values
# ---------------------------------------------------------------------------

def test_single_ground_run():
    g, d, n = extract_observations([chunk_of([("ground", 0, 80), ("ground", 16, 80),
                                              ("ground", 32, 80)])])
    assert len(g) == 1
    assert g[0].shape == ((1, 1, 1),)
    assert g[0].x == 0 and g[0].y == 80
    assert d == []
    assert len(n) == 1 and n[0].count == 3


def test_run_plus_enemy_above():
    g, d, n = extract_observations([chunk_of([
        ("ground", 0, 80), ("ground", 16, 80), ("ground", 32, 80),
        ("enemy", 16, 64),
    ])])
    assert len(g) == 2
    assert len(d) == 2  # both directions
    assert {v.count for v in n} == {1, 3}
    offsets = {(v.dx, v.dy) for v in d}
    assert offsets == {(16, -16), (-16, 16)}


def test_observations_match_flood_fill_oracle():
    chunks = walker_chunks()
    g_values, _, n_values = extract_observations(chunks)
    for ci, chunk in enumerate(chunks):
        by_type = {}
        for p in chunk.sprites:
            by_type.setdefault(p.sprite_id, set()).add((p.x // TILE, p.y // TILE))
        expected_components = sum(len(flood_fill_components(cells))
                                  for cells in by_type.values())
        ours = [g for g in g_values if g.chunk_index == ci]
        assert len(ours) == expected_components
        counts = {n.sprite_type: n.count for n in n_values if n.chunk_index == ci}
        for sid, cells in by_type.items():
            placements = [p for p in chunk.sprites if p.sprite_id == sid]
            assert counts[sid] == len(placements)


def test_extract_requires_chunks():
    with pytest.raises(LevelModelError):
        extract_observations([])


# ---------------------------------------------------------------------------
# learning
# ---------------------------------------------------------------------------

def test_identical_chunks_single_category():
    chunk = chunk_of([("ground", 0, 80), ("ground", 16, 80)])
    chunks = [chunk] * 6
    model = learn_model(chunks, list(range(6)), substream(1, "learn"))
    assert len(model.l_nodes) == 1
    l_node = model.l_nodes[0]
    assert l_node.transitions == {}  # run-length collapse removes the self loop
    assert (l_node.repeat_min, l_node.repeat_max) == (6, 6)


def test_alternating_chunks_two_categories():
    a = chunk_of([("ground", 0, 80), ("ground", 16, 80), ("ground", 32, 80)])
    b = chunk_of([("gem", 48, 16)])
    chunks = [a, b, a, b, a, b]
    model = learn_model(chunks, list(range(6)), substream(2, "learn"))
    assert len(model.l_nodes) == 2
    la, lb = model.chunk_l[0], model.chunk_l[1]
    trans = {l.l_id: l.transitions for l in model.l_nodes}
    assert trans[la] == {lb: 1.0}
    assert trans[lb] == {la: 1.0}


def test_walker_transitions_match_bigram_oracle():
    chunks = walker_chunks()
    model = learn_model(chunks, list(range(len(chunks))), substream(7, "learn:walker"))
    oracle = bigram_transition_table(model.chunk_l)
    ours = {(l.l_id, to): p for l in model.l_nodes for to, p in l.transitions.items()}
    assert ours == pytest.approx(oracle)


def test_every_chunk_in_exactly_one_category():
    chunks = walker_chunks()
    model = learn_model(chunks, list(range(len(chunks))), substream(7, "learn:walker"))
    ids = {l.l_id for l in model.l_nodes}
    assert all(l_id in ids for l_id in model.chunk_l)
    members = sorted(i for l in model.l_nodes for i in l.members)
    assert members == list(range(len(chunks)))


def test_conditional_table_normalized():
    chunks = walker_chunks()
    model = learn_model(chunks, list(range(len(chunks))), substream(7, "learn:walker"))
    groups = {}
    for (l, s_from, s_to, dqx, dqy), p in model.table.items():
        groups.setdefault((l, s_to, dqx, dqy), 0.0)
        groups[(l, s_to, dqx, dqy)] += p
    assert groups
    for key, total in groups.items():
        assert total == pytest.approx(1.0, abs=1e-9), key


def test_learn_model_deterministic():
    chunks = walker_chunks()
    m1 = learn_model(chunks, list(range(len(chunks))), substream(7, "x"))
    m2 = learn_model(chunks, list(range(len(chunks))), substream(7, "x"))
    assert m1.chunk_l == m2.chunk_l and m1.style_of == m2.style_of
    assert m1.table == m2.table


def test_avg_norm_pos_in_range():
    chunks = walker_chunks()
    model = learn_model(chunks, list(range(len(chunks))), substream(7, "learn:walker"))
    for l in model.l_nodes:
        assert 0.0 <= l.avg_norm_pos <= 1.0


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def _singleton_model():
    """One L node, one deterministic G value, N target 1."""
    g = GValue("gem", 16, 32, ((1,),), 0)
    return LevelDesignModel(
        chunk_width=96, chunk_height=96,
        g_values=[g], d_values=[], n_values=[],
        style_of=["s_gem_0"], chunk_l=["lchunk_0"],
        s_nodes=[], l_nodes=[level_model.LNode(
            "lchunk_0", [0], ["s_gem_0"], {"gem": {1: 1.0}}, {}, 1, 1, 0.0)],
        table={},
    )


def test_sample_single_deterministic_shape():
    chunk = sample_chunk(_singleton_model(), "lchunk_0", substream(0, "s"))
    assert chunk.complete
    assert [p.to_json() for p in chunk.sprites] == [
        {"spriteId": "gem", "x": 16, "y": 32, "w": 16, "h": 16}]


def test_sample_deterministic_under_seed():
    chunks = walker_chunks()
    model = learn_model(chunks, list(range(len(chunks))), substream(7, "learn:walker"))
    l_id = model.l_nodes[0].l_id
    a = sample_chunk(model, l_id, substream(11, "sample"))
    b = sample_chunk(model, l_id, substream(11, "sample"))
    assert json.dumps(a.to_json()) == json.dumps(b.to_json())


def test_sample_regenerates_training_n_vector():
    chunks = walker_chunks()
    model = learn_model(chunks, list(range(len(chunks))), substream(7, "learn:walker"))
    training_vectors = set()
    for ci in range(len(chunks)):
        counts = {}
        for p in chunks[ci].sprites:
            counts[p.sprite_id] = counts.get(p.sprite_id, 0) + 1
        training_vectors.add(tuple(sorted(counts.items())))
    rng = substream(13, "regen")
    hits = 0
    for _ in range(20):
        l_id = model.l_nodes[int(rng.integers(len(model.l_nodes)))].l_id
        sampled = sample_chunk(model, l_id, rng)
        counts = {}
        for p in sampled.sprites:
            counts[p.sprite_id] = counts.get(p.sprite_id, 0) + 1
        if tuple(sorted(counts.items())) in training_vectors:
            hits += 1
    assert hits >= 1


def test_sampled_placement_frequencies():
    """Two equally likely placements come out 50/50 within 2 points."""
    g_anchor = GValue("a", 0, 0, ((1,),), 0)
    g_b = GValue("b", 16, 0, ((1,),), 0)
    g_c = GValue("b", 32, 0, ((1,),), 1)
    model = LevelDesignModel(
        chunk_width=96, chunk_height=96,
        g_values=[g_anchor, g_b, g_c], d_values=[], n_values=[],
        style_of=["s_a_0", "s_b_0", "s_b_1"], chunk_l=["l0", "l0"],
        s_nodes=[],
        l_nodes=[level_model.LNode("l0", [0, 1], [], {"a": {1: 1.0}, "b": {1: 1.0}},
                                   {}, 1, 1, 0.0)],
        table={
            ("l0", "s_b_0", "s_a_0", 16, 0): 0.5,
            ("l0", "s_b_1", "s_a_0", 32, 0): 0.5,
        },
    )
    rng = substream(17, "freq")
    positions = {16: 0, 32: 0}
    trials = 10_000
    for _ in range(trials):
        chunk = sample_chunk(model, "l0", rng)
        placed = [p for p in chunk.sprites if p.sprite_id == "b"]
        assert len(placed) == 1
        positions[placed[0].x] += 1
    assert abs(positions[16] / trials - 0.5) <= 0.02
    assert abs(positions[32] / trials - 0.5) <= 0.02
