import json
from itertools import combinations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from expforge import ingest
from expforge.ingest import (FrameObservation, SpritePlacement, Spritesheet,
                             TraceError, chunk_bounds, chunk_from_frame,
                             cluster_sprites, load_trace, sprite_bag_features,
                             sprite_distance)

from conftest import FIXTURES


def test_load_walker_trace(tmp_path):
    frames = load_trace(FIXTURES / "walker.trace.json")
    assert len(frames) == 60
    sprite_ids = {s.sprite_id for f in frames for s in f.sprites}
    assert sprite_ids == {"hero", "brick", "spike"}
    assert [f.t for f in frames] == sorted(f.t for f in frames)


def test_load_empty_trace_is_valid(tmp_path):
    p = tmp_path / "empty.trace.json"
    p.write_text(json.dumps({"game": "none", "frames": []}))
    assert load_trace(p) == []


def test_duplicate_t_reports_index(tmp_path):
    frame = {"t": 5, "camera": {"x": 0, "y": 0}, "inputs": [], "sprites": []}
    p = tmp_path / "dup.trace.json"
    p.write_text(json.dumps({"frames": [frame, dict(frame)]}))
    with pytest.raises(TraceError) as err:
        load_trace(p)
    assert "t=5" in str(err.value)


def test_missing_field_reports_frame(tmp_path):
    p = tmp_path / "bad.trace.json"
    p.write_text(json.dumps({"frames": [{"t": 0, "inputs": [], "sprites": []}]}))
    with pytest.raises(TraceError) as err:
        load_trace(p)
    assert "frames[0]" in str(err.value)


# ---------------------------------------------------------------------------
# bag-of-features distance
# ---------------------------------------------------------------------------

def test_bag_feature_counts():
    three = tuple(tuple([1, 2, 3]) for _ in range(3))
    assert sum(sprite_bag_features(three).values()) == 1
    four = tuple(tuple([1, 2, 3, 4]) for _ in range(4))
    assert sum(sprite_bag_features(four).values()) == 4
    uniform = tuple(tuple([1] * 5) for _ in range(5))
    bag = sprite_bag_features(uniform)
    assert sum(bag.values()) == 9 and len(bag) == 1


def test_small_sprites_zero_padded():
    tiny = ((1,),)
    bag = sprite_bag_features(tiny)
    assert sum(bag.values()) == 1


def test_sprite_distance_endpoints():
    a = tuple(tuple([1, 2, 3]) for _ in range(3))
    b = tuple(tuple([7, 8, 9]) for _ in range(3))
    assert sprite_distance(a, a) == 0.0
    assert sprite_distance(a, b) == 1.0


def test_sprite_distance_half_overlap_hand_case():
    # rows stacked so each sprite has 4 windows; the two shared all-p windows
    # leave a symmetric difference of 4 over bag sizes 4 + 4
    p, q, r, s, t = ([1] * 3, [2] * 3, [3] * 3, [4] * 3, [5] * 3)
    a = tuple(map(tuple, [p, p, p, p, q, r]))
    b = tuple(map(tuple, [p, p, p, p, s, t]))
    assert sprite_distance(a, b) == pytest.approx(0.5)


def test_sprite_distance_symmetric():
    sheet = ingest.load_spritesheet(FIXTURES / "target.sheet.json")
    ids = sorted(sheet.sprites)[:6]
    for a, b in combinations(ids, 2):
        assert sprite_distance(sheet.sprites[a], sheet.sprites[b]) == \
            sprite_distance(sheet.sprites[b], sheet.sprites[a])


# ---------------------------------------------------------------------------
# clustering
# ---------------------------------------------------------------------------

def test_threshold_zero_gives_singletons(target_sheet):
    groups = cluster_sprites(target_sheet, 0.0)
    assert all(len(g) == 1 for g in groups)
    assert len(groups) == len(target_sheet.sprites)


def test_identical_sprites_always_merge():
    px = tuple(tuple([1, 2, 1, 2]) for _ in range(4))
    sheet = Spritesheet({"a": px, "b": px})
    groups = cluster_sprites(sheet, 1.0)
    assert groups == [frozenset({"a", "b"})]


def test_target_sheet_four_families(target_sheet):
    groups = cluster_sprites(target_sheet, 0.4)
    assert len(groups) == 4
    # brute-force pairwise table confirms the calibration
    ids = sorted(target_sheet.sprites)
    family = lambda sid: sid.rsplit("_", 1)[0]
    for a, b in combinations(ids, 2):
        d = sprite_distance(target_sheet.sprites[a], target_sheet.sprites[b])
        if family(a) == family(b):
            assert d < 0.4, (a, b, d)
        else:
            assert d >= 0.4, (a, b, d)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=4, max_size=12),
       st.floats(0.0, 1.0))
def test_cluster_output_is_partition(seeds, threshold):
    sprites = {}
    for i, seed in enumerate(seeds):
        sprites[f"s{i}"] = tuple(tuple((seed + r + c) % 4 for c in range(4)) for r in range(4))
    sheet = Spritesheet(sprites)
    groups = cluster_sprites(sheet, threshold)
    flat = [sid for g in groups for sid in g]
    assert sorted(flat) == sorted(sprites)  # disjoint and covering


# ---------------------------------------------------------------------------
# frames -> chunks
# ---------------------------------------------------------------------------

def test_chunk_conversion_preserves_in_window_sprites():
    frame = FrameObservation(
        t=0, camera_x=16, camera_y=0, inputs=frozenset(),
        sprites=(
            SpritePlacement("a", 16, 0, 16, 16),    # at window origin
            SpritePlacement("b", 40, 40, 16, 16),   # inside
            SpritePlacement("c", 200, 0, 16, 16),   # outside 96-wide window
        ),
    )
    chunk = chunk_from_frame(frame, (96, 96))
    assert [p.sprite_id for p in chunk.sprites] == ["a", "b"]
    assert chunk.sprites[0] == SpritePlacement("a", 0, 0, 16, 16)
    assert all(0 <= p.x and p.x + p.w <= 96 and 0 <= p.y and p.y + p.h <= 96
               for p in chunk.sprites)


def test_chunk_bounds_prefers_declared_screen():
    frames = load_trace(FIXTURES / "walker.trace.json")
    screen = ingest.trace_screen(FIXTURES / "walker.trace.json")
    assert chunk_bounds(frames, screen) == (96, 96)
    assert chunk_bounds(frames) != (96, 96)  # world extent is wider


def test_rename_frames():
    frames = load_trace(FIXTURES / "walker.trace.json")
    renamed = ingest.rename_frames(frames, {"hero": "h0"})
    ids = {s.sprite_id for f in renamed for s in f.sprites}
    assert "hero" not in ids and "h0" in ids
