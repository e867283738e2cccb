"""Pipeline driver.

Subcommands: learn, proto, map, generate, evaluate, simulate, export.
Exit codes: 0 ok, 2 config/usage error, 3 stage failure. Every command is
deterministic given its seed (flag > config file > EXPFORGE_SEED).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import combinators, heuristic, ingest, level_model, proto_map, rule_model, simulate
from .graph import GameGraph, construct_game_graph, deserialize, graph_digest, serialize
from .rng import substream

METHODS = ("expand", "amalgam", "blend", "composition")


class ConfigError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _resolve_seed(args, config: dict) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    if "seed" in config:
        return int(config["seed"])
    env = os.environ.get("EXPFORGE_SEED")
    if env is not None:
        return int(env)
    raise ConfigError("a seed is required (--seed, config, or EXPFORGE_SEED)")


def _setting(args, config: dict, key: str, default):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


# ---------------------------------------------------------------------------
# Knowledge-base manifest
# ---------------------------------------------------------------------------

def read_manifest(path: Path) -> list[dict]:
    if not path.exists():
        return []
    entries = json.loads(path.read_text()).get("entries", [])
    for e in entries:
        blob = (path.parent / e["path"]).read_bytes()
        digest = hashlib.sha256(blob).hexdigest()
        if digest != e["sha256"]:
            raise ConfigError(f"manifest entry {e['path']} is corrupt "
                              f"(expected {e['sha256'][:12]}, found {digest[:12]})")
    return entries


def append_manifest(path: Path, rel_path: str, digest: str, graph_id: str) -> None:
    entries = read_manifest(path)
    entries.append({"path": rel_path, "sha256": digest, "graphId": graph_id})
    path.write_text(json.dumps({"entries": entries}, indent=2, sort_keys=True) + "\n")


def _load_graphs(paths: list[str]) -> list[GameGraph]:
    return [deserialize(Path(p).read_bytes()) for p in paths]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def learn_graph(trace_path: str, sheet_path: str, seed: int,
                threshold: float) -> GameGraph:
    """ingest -> cluster -> level model -> ruleset -> graph."""
    frames = _stage("ingest", ingest.load_trace, trace_path)
    sheet = _stage("ingest", ingest.load_spritesheet, sheet_path)
    game = ingest.trace_game_name(trace_path)
    screen = ingest.trace_screen(trace_path)

    groups = _stage("cluster", ingest.cluster_sprites, sheet, threshold)
    rename = ingest.group_leader_map(groups)
    frames = ingest.rename_frames(frames, rename)

    def build_level():
        bounds = ingest.chunk_bounds(frames, screen)
        chunks = [ingest.chunk_from_frame(f, bounds) for f in frames]
        return level_model.learn_model(chunks, list(range(len(chunks))),
                                       substream(seed, f"learn:{game}"))

    model = _stage("level-model", build_level)
    rules = _stage("rule-model", rule_model.learn_ruleset, frames)

    player_sprite = ingest.trace_player(trace_path)
    if player_sprite is not None:
        player_leader = rename.get(player_sprite, player_sprite)
    else:
        # fall back to the group whose rules respond to input
        rule_subjects = {r.pre.subject for r in rules if r.requires_input is not None}
        candidates = sorted(rule_subjects & {min(g) for g in groups})
        if not candidates:
            raise StageError("graph-core", ValueError(
                "cannot identify the player group: declare \"player\" in the trace"))
        player_leader = candidates[0]
    try:
        player_index = next(i for i, g in enumerate(groups) if min(g) == player_leader)
    except StopIteration:
        raise StageError("graph-core", ValueError(
            f"player sprite {player_leader!r} matches no sprite group")) from None
    return _stage("graph-core", construct_game_graph, model, rules, groups,
                  player_index, game)


def cmd_learn(args, config: dict) -> int:
    seed = _resolve_seed(args, config)
    threshold = float(_setting(args, config, "cluster_threshold",
                               ingest.DEFAULT_CLUSTER_THRESHOLD))
    g = learn_graph(args.trace, args.sheet, seed, threshold)
    Path(args.out).write_bytes(serialize(g))
    print(f"learned {g.graph_id}: {len(g.nodes)} nodes, "
          f"{sum(len(n.edges) for n in g.nodes.values())} edges -> {args.out}")
    return 0


def cmd_proto(args, config: dict) -> int:
    sheet = _stage("ingest", ingest.load_spritesheet, args.sheet)
    threshold = float(_setting(args, config, "cluster_threshold",
                               ingest.DEFAULT_CLUSTER_THRESHOLD))
    g = _stage("proto-map", proto_map.build_proto_graph, sheet, args.player,
               threshold, Path(args.out).stem)
    Path(args.out).write_bytes(serialize(g))
    print(f"proto graph {g.graph_id}: {len(g.nodes)} nodes -> {args.out}")
    return 0


def cmd_map(args, config: dict) -> int:
    seed = _resolve_seed(args, config)
    kb = _stage("ingest", _load_graphs, args.kb)
    proto = _stage("ingest", lambda: deserialize(Path(args.proto).read_bytes()))
    mapping = _stage("proto-map", proto_map.build_mapping, kb, proto,
                     substream(seed, "map"))
    Path(args.out).write_bytes(mapping.dumps())
    print(f"mapping: {len(mapping.entries)} proto nodes covered -> {args.out}")
    return 0


def _reference_distributions(kb_graphs: list[GameGraph], seed: int,
                             cache_dir: Path) -> simulate.ReferenceDistribution:
    refs: simulate.ReferenceDistribution = {}
    cache_dir.mkdir(parents=True, exist_ok=True)
    for g in kb_graphs:
        cache = cache_dir / f"refs-{graph_digest(g)[:16]}.json"
        if cache.exists():
            refs[g.graph_id] = simulate.RefEntry.from_json(json.loads(cache.read_text()))
            continue
        entry = simulate.build_reference_distribution(
            g, substream(seed, f"refs:{g.graph_id}"))
        cache.write_text(json.dumps(entry.to_json(), sort_keys=True, indent=2) + "\n")
        refs[g.graph_id] = entry
    return refs


def _knowledge_base(args, outdir: Path) -> tuple[heuristic.KnowledgeBase, list[dict]]:
    originals = _stage("ingest", _load_graphs, args.kb)
    provenance = [
        {"graphId": g.graph_id, "path": p, "sha256": graph_digest(g), "origin": "original"}
        for g, p in zip(originals, args.kb)
    ]
    kb = heuristic.KnowledgeBase(originals)
    manifest = outdir / "kb-manifest.json"
    for entry in read_manifest(manifest):
        g = deserialize((outdir / entry["path"]).read_bytes())
        kb.append_generated(g)
        provenance.append({"graphId": g.graph_id, "path": entry["path"],
                           "sha256": entry["sha256"], "origin": "generated"})
    return kb, provenance


def cmd_generate(args, config: dict) -> int:
    seed = _resolve_seed(args, config)
    if len(args.kb) < 2:
        raise ConfigError("generate needs at least two knowledge-base graphs")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    kb, provenance = _knowledge_base(args, outdir)
    sheet = _stage("ingest", ingest.load_spritesheet, args.sheet)
    threshold = float(_setting(args, config, "cluster_threshold",
                               ingest.DEFAULT_CLUSTER_THRESHOLD))
    proto = _stage("proto-map", proto_map.build_proto_graph, sheet, args.player, threshold)
    mapping = _stage("proto-map", proto_map.build_mapping, kb.originals, proto,
                     substream(seed, "map"))
    refs = _stage("simulate", _reference_distributions, kb.originals, seed,
                  outdir / "refs")
    value_seed = int(substream(seed, "value").integers(2 ** 31))
    score = heuristic.make_heuristic(kb, refs, value_seed)
    search_rng = substream(seed, "search")

    run_index = len(read_manifest(outdir / "kb-manifest.json"))
    graph_id = f"{args.method}-{run_index}"

    def search() -> GameGraph:
        if args.method == "expand":
            neighbors = int(_setting(args, config, "neighbors", combinators.NEIGHBOR_COUNT))
            patience = int(_setting(args, config, "patience", combinators.PATIENCE))
            ce = combinators.ce_search(mapping.proto, mapping, score, search_rng,
                                       neighbors=neighbors, patience=patience)
            return combinators.realize(ce, graph_id=graph_id)
        if args.method == "amalgam":
            g = combinators.amalgam_search(mapping.proto, mapping, score, rng=search_rng)
        elif args.method == "blend":
            g = combinators.blend_search(mapping.proto, mapping, score)
        else:
            g = combinators.composition_search(mapping.proto, mapping, score, rng=search_rng)
        return GameGraph(graph_id, g.provenance, g.nodes)

    final = _stage("combinators", search)
    report = _stage("heuristic", heuristic.heuristic_total, final, kb, refs,
                    np.random.default_rng(value_seed))
    attempt_cap = int(_setting(args, config, "attempt_cap", 50))
    level = _stage("simulate", simulate.generate_level, final,
                   substream(seed, "level"), attempt_cap)
    definition = _stage("simulate", simulate.export_game, final, level, sheet, seed)

    graph_path = outdir / f"{graph_id}.graph.json"
    graph_path.write_bytes(serialize(final))
    (outdir / f"{graph_id}.definition.json").write_bytes(definition.dumps())
    full_report = {
        "graphId": graph_id,
        "method": args.method,
        "seed": seed,
        "kb": provenance,
        **report,
    }
    (outdir / f"{graph_id}.report.json").write_text(
        json.dumps(full_report, sort_keys=True, indent=2) + "\n")
    append_manifest(outdir / "kb-manifest.json", graph_path.name,
                    graph_digest(final), graph_id)
    print(f"{graph_id}: total={report['total']:.4f} "
          f"(novelty={report['novelty']:.4f} surprise={report['surprise']:.4f} "
          f"value={report['value']:.4f}) -> {outdir}")
    return 0


def cmd_evaluate(args, config: dict) -> int:
    seed = _resolve_seed(args, config)
    outdir = Path(args.manifest_dir) if args.manifest_dir else None
    g = _stage("ingest", lambda: deserialize(Path(args.graph).read_bytes()))
    originals = _stage("ingest", _load_graphs, args.kb)
    kb = heuristic.KnowledgeBase(originals)
    provenance = [
        {"graphId": o.graph_id, "path": p, "sha256": graph_digest(o), "origin": "original"}
        for o, p in zip(originals, args.kb)
    ]
    if outdir is not None:
        for entry in read_manifest(outdir / "kb-manifest.json"):
            gen = deserialize((outdir / entry["path"]).read_bytes())
            kb.append_generated(gen)
            provenance.append({"graphId": gen.graph_id, "path": entry["path"],
                               "sha256": entry["sha256"], "origin": "generated"})
    cache_dir = (outdir or Path(args.graph).parent) / "refs"
    refs = _stage("simulate", _reference_distributions, originals, seed, cache_dir)
    report = _stage("heuristic", heuristic.heuristic_total, g, kb, refs,
                    substream(seed, "value"))
    payload = {"graphId": g.graph_id, "seed": seed, "kb": provenance, **report}
    text = json.dumps(payload, sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_simulate(args, config: dict) -> int:
    definition = _stage("simulate", simulate.GameDefinition.load, args.definition)
    script = json.loads(Path(args.script).read_text()) if args.script else []
    hashes = _stage("simulate", simulate.run_script, definition, script)
    session = simulate.new_session(definition)
    for buttons in script:
        session = simulate.session_step(session, set(buttons))
    payload = {"hashes": hashes, "outcome": session.outcome, "ticks": len(script)}
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def cmd_export(args, config: dict) -> int:
    seed = _resolve_seed(args, config)
    g = _stage("ingest", lambda: deserialize(Path(args.graph).read_bytes()))
    sheet = _stage("ingest", ingest.load_spritesheet, args.sheet)
    attempt_cap = int(_setting(args, config, "attempt_cap", 50))
    level = _stage("simulate", simulate.generate_level, g,
                   substream(seed, "level"), attempt_cap)
    definition = _stage("simulate", simulate.export_game, g, level, sheet, seed)
    Path(args.out).write_bytes(definition.dumps())
    print(f"exported {g.graph_id}: {len(level.entries)} chunks -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="expforge",
                                     description="Learn game graphs and generate novel games.")
    parser.add_argument("--config", help="JSON config file (flags win over it)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("learn", help="learn a game graph from a trace and spritesheet")
    p.add_argument("--trace", required=True)
    p.add_argument("--sheet", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--cluster-threshold", dest="cluster_threshold", type=float)
    p.set_defaults(fn=cmd_learn)

    p = sub.add_parser("proto", help="build a proto-game graph from a spritesheet")
    p.add_argument("--sheet", required=True)
    p.add_argument("--player", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cluster-threshold", dest="cluster_threshold", type=float)
    p.set_defaults(fn=cmd_proto)

    p = sub.add_parser("map", help="map knowledge-base graphs onto a proto graph")
    p.add_argument("--kb", nargs="+", required=True)
    p.add_argument("--proto", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_map)

    p = sub.add_parser("generate", help="generate a playable game from a knowledge base")
    p.add_argument("--kb", nargs="+", required=True)
    p.add_argument("--sheet", required=True)
    p.add_argument("--player", required=True)
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--cluster-threshold", dest="cluster_threshold", type=float)
    p.add_argument("--neighbors", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--attempt-cap", dest="attempt_cap", type=int)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("evaluate", help="heuristic report for a graph against a knowledge base")
    p.add_argument("--graph", required=True)
    p.add_argument("--kb", nargs="+", required=True)
    p.add_argument("--manifest-dir", dest="manifest_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("simulate", help="replay an input script against a definition")
    p.add_argument("--definition", required=True)
    p.add_argument("--script")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("export", help="generate a level and export a playable definition")
    p.add_argument("--graph", required=True)
    p.add_argument("--sheet", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--attempt-cap", dest="attempt_cap", type=int)
    p.set_defaults(fn=cmd_export)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
        return args.fn(args, config)
    except ConfigError as exc:
        print(f"expforge: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"expforge: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
