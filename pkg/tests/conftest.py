import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for oracles.py

from expforge import heuristic, ingest, proto_map, simulate
from expforge.cli import learn_graph
from expforge.rng import substream

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"
GAMES = ("walker", "faller", "climber")


def trace_path(game: str) -> Path:
    return FIXTURES / f"{game}.trace.json"


def sheet_path(game: str) -> Path:
    return FIXTURES / f"{game}.sheet.json"


@pytest.fixture(scope="session")
def learned_graphs():
    """The three fixture games, learned once per test session."""
    return {
        game: learn_graph(str(trace_path(game)), str(sheet_path(game)),
                          seed=7, threshold=0.4)
        for game in GAMES
    }


@pytest.fixture(scope="session")
def target_sheet():
    return ingest.load_spritesheet(FIXTURES / "target.sheet.json")


@pytest.fixture(scope="session")
def proto_graph(target_sheet):
    return proto_map.build_proto_graph(target_sheet, "tgt_hero_a", 0.4)


@pytest.fixture(scope="session")
def mapping(learned_graphs, proto_graph):
    return proto_map.build_mapping(list(learned_graphs.values()), proto_graph,
                                   substream(5, "map"))


@pytest.fixture(scope="session")
def knowledge_base(learned_graphs):
    return heuristic.KnowledgeBase(list(learned_graphs.values()))


@pytest.fixture(scope="session")
def references(learned_graphs):
    return {
        g.graph_id: simulate.build_reference_distribution(
            g, substream(3, f"refs:{g.graph_id}"))
        for g in learned_graphs.values()
    }


def flat_game(gid="flat"):
    """A deterministic one-category game: a full ground row, one walk rule.

    Sampling is deterministic (the modal shape is the only content), the agent
    walks straight to the right edge, so every challenge probe is identical.
    """
    from expforge.facts import CAMERA_ID, NONE_ID, Fact
    from expforge.graph import Edge, EdgeKind, GameGraph, make_node

    pre = Fact.velocity_x("walkerman", 0)
    anim = Fact.animation("walkerman", 12, 16)
    player = make_node("walkerman", {"walkerman"}, True, [
        Edge(EdgeKind.RULE_CONDITION, "walkerman", fact=anim, rule_id=0),
        Edge(EdgeKind.RULE_CONDITION, "walkerman", fact=pre, rule_id=0),
        Edge(EdgeKind.RULE_CONDITION, "walkerman", fact=Fact.press("right"), rule_id=0),
        Edge(EdgeKind.RULE_EFFECT, "walkerman", pre=pre,
             post=Fact.velocity_x("walkerman", 4), rule_id=0),
    ])
    floor = make_node("floor", {"floor"}, False, [
        Edge(EdgeKind.G_SHAPE, "floor", x=0, y=80, shape=((1, 1, 1, 1, 1, 1),),
             s_node="s_floor", l_node="flatland"),
        Edge(EdgeKind.N_COUNT, "floor", count=6, l_node="flatland"),
    ])
    chunk = make_node("flatland", edges=[
        Edge(EdgeKind.CHUNK_TYPE, "flatland", chunk_category="flatland"),
        Edge(EdgeKind.CHUNK_REPEATS, "flatland", min_repeat=1, max_repeat=1),
        Edge(EdgeKind.CHUNK_POSITION, "flatland", avg_norm_pos=0.0),
    ])
    from expforge.graph import validate_graph
    g = GameGraph(gid, "learned", {
        "walkerman": player, "floor": floor, "flatland": chunk,
        CAMERA_ID: make_node(CAMERA_ID), NONE_ID: make_node(NONE_ID),
    })
    validate_graph(g)
    return g
