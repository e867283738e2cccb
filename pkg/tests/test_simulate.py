import json

import numpy as np
import pytest

from expforge import simulate
from expforge.facts import Fact, Rule
from expforge.graph import Edge, EdgeKind
from expforge.ingest import TILE, LevelChunk, SpritePlacement
from expforge.rng import substream
from expforge.simulate import (ChallengeStats, GameDefinition, GraphSampler,
                               LevelGenerationError, SimState, astar_chunk,
                               build_reference_distribution, export_game,
                               generate_level, new_session, rules_from_graph,
                               run_script, session_step, spawn_state, state_hash,
                               stats_quartiles, step, walk_categories)

from conftest import FIXTURES, GOLDEN, flat_game
from oracles import bfs_chunk, quartiles_by_formula


def chunk_of(placements, width=96, height=96):
    sprites = tuple(SpritePlacement(sid, x, y, TILE, TILE) for sid, x, y in placements)
    return LevelChunk(width, height, sprites)


def walk_rule(player="p", speed=4):
    pre = Fact.velocity_x(player, 0)
    return Rule(0, frozenset({pre, Fact.press("right")}), pre,
                Fact.velocity_x(player, speed))


def fall_rule(player="p", speed=4, rule_id=1):
    pre = Fact.velocity_y(player, 0)
    return Rule(rule_id, frozenset({pre}), pre, Fact.velocity_y(player, speed))


# ---------------------------------------------------------------------------
# step
# ---------------------------------------------------------------------------

def test_step_static_state_only_ticks():
    chunk = chunk_of([("block", 0, 80)])
    state = spawn_state(chunk, "p")
    after = step(state, set(), [])
    assert after.tick == 1
    assert after.facts == state.facts


def test_step_single_gravity_rule():
    chunk = chunk_of([("block", 0, 80)])
    state = spawn_state(chunk, "p")
    after = step(state, set(), [fall_rule()])
    spatials = {f for f in after.facts if f.kind.value == "Spatial" and f.sprite == "p"}
    assert spatials == {Fact.spatial("p", 0, 68)}  # spawned at 64, fell 4


def test_step_matches_chunk_engine_fast_path(learned_graphs):
    """The reduced-state stepper agrees with the full predictor exactly."""
    from expforge.rule_model import predict

    for game, g in learned_graphs.items():
        sampler = GraphSampler(g)
        rules = rules_from_graph(g)
        player = g.player_node_id()
        rng = substream(23, f"parity:{game}")
        chunk = sampler.sample(sampler.categories[0], rng)
        engine = simulate._ChunkEngine(chunk, rules, player, (12, 16))
        assert engine.fast
        key = engine.start
        full = engine.full_facts(key)
        for i in range(40):
            action = ["", "right", "up", "down"][i % 4]
            nxt = engine.step(key, action)
            inputs = {Fact.press(action)} if action else set()
            expected = predict(rules, full | inputs)
            alive = any(f.kind.value == "Animation" and f.sprite == player
                        for f in expected)
            if nxt is None:
                assert not alive
                break
            assert engine.full_facts(nxt) == expected
            key, full = nxt, expected


# ---------------------------------------------------------------------------
# A* agent
# ---------------------------------------------------------------------------

def test_flat_chunk_full_traversal():
    chunk = chunk_of([("block", x, 80) for x in range(0, 96, TILE)])
    stats = astar_chunk(chunk, [walk_rule()], "p")
    assert stats.max_dist_norm == 1.0
    assert stats.deaths == 0
    assert stats.falls == 0
    assert stats.completed


def test_uncrossable_pit_counts_falls():
    # a single ledge and relentless gravity: the agent falls off and never
    # reaches the right edge
    chunk = chunk_of([("block", 0, 80)])
    stats = astar_chunk(chunk, [walk_rule(), fall_rule()], "p")
    assert stats.max_dist_norm < 1.0
    assert stats.falls >= 1
    assert not stats.completed


def test_astar_agrees_with_bfs_oracle(learned_graphs):
    for game, g in learned_graphs.items():
        sampler = GraphSampler(g)
        rules = rules_from_graph(g)
        player = g.player_node_id()
        dims = simulate.entity_dims(g).get(player, (TILE, TILE))
        rng = substream(29, f"oracle:{game}")
        chunk = sampler.sample(sampler.categories[0], rng)
        ours = astar_chunk(chunk, rules, player, dims)
        expected_done, expected_ticks = bfs_chunk(chunk, rules, player, dims)
        assert ours.completed == expected_done, game
        if expected_done:
            assert ours.ticks == expected_ticks, game


def test_astar_budget_exhaustion_returns_partial():
    chunk = chunk_of([("block", x, 80) for x in range(0, 96, TILE)])
    stats = astar_chunk(chunk, [walk_rule()], "p", expansion_cap=2)
    assert 0.0 <= stats.max_dist_norm <= 1.0
    assert not stats.completed


# ---------------------------------------------------------------------------
# reference distributions
# ---------------------------------------------------------------------------

def test_degenerate_game_has_flat_quartiles():
    entry = build_reference_distribution(flat_game(), substream(31, "flat"), samples=100)
    for m in simulate.METRICS:
        q1, med, q3 = entry.quartiles[m]
        assert q1 == med == q3


def test_reference_deterministic():
    a = build_reference_distribution(flat_game(), substream(33, "r"), samples=20)
    b = build_reference_distribution(flat_game(), substream(33, "r"), samples=20)
    assert a.to_json() == b.to_json()


def test_quartiles_match_formula_oracle(learned_graphs):
    entry = build_reference_distribution(learned_graphs["walker"],
                                         substream(3, "refs:walker"))
    for m in simulate.METRICS:
        assert entry.quartiles[m] == pytest.approx(quartiles_by_formula(entry.samples[m]))
    assert stats_quartiles([1.0, 2.0, 3.0, 4.0]) == pytest.approx(
        quartiles_by_formula([1.0, 2.0, 3.0, 4.0]))


# ---------------------------------------------------------------------------
# level generation
# ---------------------------------------------------------------------------

def test_single_terminal_category_one_chunk_level():
    level = generate_level(flat_game(), substream(37, "lvl"))
    assert len(level.entries) == 1
    assert level.entries[0][0] == "flatland"


def test_repeats_honored():
    g = flat_game("flat2")
    node = g.nodes["flatland"]
    edges = [
        Edge(EdgeKind.CHUNK_REPEATS, "flatland", min_repeat=2, max_repeat=2)
        if e.kind is EdgeKind.CHUNK_REPEATS else e
        for e in node.edges
    ]
    from expforge.graph import make_node
    g.nodes["flatland"] = make_node("flatland", edges=edges)
    level = generate_level(g, substream(39, "lvl"))
    assert [cat for cat, _ in level.entries] == ["flatland", "flatland"]


def test_transition_walk_frequencies():
    """A -> B at probability one, B terminal: every walk is A..., B..."""
    from expforge.graph import GameGraph, make_node
    g = flat_game("flat3")
    a_edges = [
        Edge(EdgeKind.CHUNK_TYPE, "A", chunk_category="A"),
        Edge(EdgeKind.CHUNK_REPEATS, "A", min_repeat=1, max_repeat=2),
        Edge(EdgeKind.CHUNK_POSITION, "A", avg_norm_pos=0.0),
        Edge(EdgeKind.CHUNK_TRANSITION, "B", probability=1.0),
    ]
    b_edges = [
        Edge(EdgeKind.CHUNK_TYPE, "B", chunk_category="B"),
        Edge(EdgeKind.CHUNK_REPEATS, "B", min_repeat=1, max_repeat=1),
        Edge(EdgeKind.CHUNK_POSITION, "B", avg_norm_pos=1.0),
    ]
    nodes = dict(g.nodes)
    del nodes["flatland"]
    nodes["A"] = make_node("A", edges=a_edges)
    nodes["B"] = make_node("B", edges=b_edges)
    g2 = GameGraph("walks", "learned", nodes)
    sampler = GraphSampler(g2)
    rng = substream(41, "walks")
    for _ in range(1000):
        seq = walk_categories(sampler, rng)
        assert seq[-1] == "B"
        assert set(seq[:-1]) == {"A"}
        assert 1 <= len(seq) - 1 <= 2


def test_generation_failure_carries_best_attempt():
    g = flat_game("doomed")
    # poison the engine: the walk rule now needs a button that kills instead
    from expforge.graph import make_node
    player = g.nodes["walkerman"]
    anim = Fact.animation("walkerman", 12, 16)
    kill = Rule(7, frozenset({anim}), anim, Fact.animation("None", 12, 16))
    edges = [e for e in player.edges if e.kind is not EdgeKind.RULE_EFFECT]
    edges.append(Edge(EdgeKind.RULE_EFFECT, "None", pre=anim,
                      post=Fact.animation("None", 12, 16), rule_id=7))
    g.nodes["walkerman"] = make_node("walkerman", {"walkerman"}, True, edges)
    with pytest.raises(LevelGenerationError) as err:
        generate_level(g, substream(43, "lvl"), attempt_cap=3)
    assert err.value.best_level is not None


# ---------------------------------------------------------------------------
# export and sessions
# ---------------------------------------------------------------------------

def test_export_round_trips_and_is_closed():
    definition = GameDefinition.load(GOLDEN / "walker.definition.json")
    blob = definition.dumps()
    again = GameDefinition.from_json_obj(json.loads(blob))
    assert again.dumps() == blob
    for _, chunk in definition.level.entries:
        for p in chunk.sprites:
            assert p.sprite_id in definition.entities
    for rule in definition.rules:
        for f in rule.conditions | {rule.pre, rule.post}:
            assert f.subject in set(definition.entities) | {"", "Camera", "None"}


def test_export_requires_player(learned_graphs, target_sheet):
    from expforge.graph import GameGraph, make_node

    g = learned_graphs["walker"]
    nodes = dict(g.nodes)
    nodes["hero"] = make_node("hero", {"hero"}, False, g.nodes["hero"].edges)
    headless = GameGraph("headless", "learned", nodes)
    with pytest.raises(Exception):
        export_game(headless, simulate.Level([]), target_sheet)


def test_golden_walker_replay_byte_exact():
    definition = GameDefinition.load(GOLDEN / "walker.definition.json")
    script = json.loads((GOLDEN / "walker.script.json").read_text())
    expected = json.loads((GOLDEN / "walker.hashes.json").read_text())
    assert run_script(definition, script) == expected["hashes"]
    assert len(script) == 120


def test_session_outcomes_and_log():
    definition = GameDefinition.load(GOLDEN / "walker.definition.json")
    session = new_session(definition)
    assert session.outcome == "playing"
    for _ in range(120):
        session = session_step(session, {"right"})
    assert len(session.input_log) <= 120
    assert session.outcome in ("playing", "complete", "dead")


def test_session_walk_off_bottom_dies():
    chunk = chunk_of([("block", 0, 80)])
    definition = GameDefinition(
        entities={"p": {"w": 16, "h": 16, "isPlayer": True, "spriteRef": "p"},
                  "block": {"w": 16, "h": 16, "isPlayer": False, "spriteRef": "block"}},
        rules=[fall_rule()],
        level=simulate.Level([("c", chunk)]),
        camera="follow", rng_seed=0, sprites={},
    )
    session = new_session(definition)
    for _ in range(20):
        session = session_step(session, set())
        if session.outcome != "playing":
            break
    assert session.outcome == "dead"


def test_state_hash_sensitive_to_facts():
    definition = GameDefinition.load(GOLDEN / "walker.definition.json")
    a = new_session(definition)
    b = new_session(definition)
    assert state_hash(a) == state_hash(b)
    session_step(b, {"right"})
    assert state_hash(a) != state_hash(b)
