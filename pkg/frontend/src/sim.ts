// Tick-exact mirror of the native simulator: rule firing with latest-id
// conflict wins, kinematics, entity garbage collection, relationship refresh,
// spawn placement and chunk hand-off. Parity is enforced per tick against
// committed golden hashes, so every semantic choice here must match the
// native engine exactly.

import {
  CAMERA_ID, Fact, FactSet, NONE_ID, animation, cameraX, cameraY, compareFacts,
  factJson, factKey, press, relationshipX, relationshipY, spatial, subject,
  velocityX, velocityY,
} from "./facts.js";
import { Chunk, GameDefinition, Rule, playerId } from "./definition.js";

const RELATIONSHIP_RADIUS = 48;

export type Outcome = "playing" | "complete" | "dead";

export interface Session {
  definition: GameDefinition;
  chunkIndex: number;
  facts: FactSet;
  tick: number;
  outcome: Outcome;
  inputLog: string[][];
}

function conditionsHold(rule: Rule, facts: FactSet): boolean {
  for (const c of rule.conditions) {
    if (!facts.has(c)) return false;
  }
  return true;
}

function relationshipFacts(positions: [string, number, number][]): Fact[] {
  const seen = new Set<string>();
  const distinct: [string, number, number][] = [];
  for (const p of positions) {
    const key = `${p[0]}|${p[1]}|${p[2]}`;
    if (!seen.has(key)) {
      seen.add(key);
      distinct.push(p);
    }
  }
  const out: Fact[] = [];
  for (const a of distinct) {
    for (const b of distinct) {
      if (a === b || (a[0] === b[0] && a[1] === b[1] && a[2] === b[2])) continue;
      const dx = b[1] - a[1];
      const dy = b[2] - a[2];
      if (Math.max(Math.abs(dx), Math.abs(dy)) <= RELATIONSHIP_RADIUS) {
        out.push(relationshipX(a[0], b[0], dx));
        out.push(relationshipY(a[0], b[0], dy));
      }
    }
  }
  return out;
}

// One engine tick over a fact set (inputs consumed, never emitted).
export function predict(rules: Rule[], facts: FactSet): FactSet {
  const ordered = [...rules].sort((a, b) => a.id - b.id);
  const replacements = new Map<string, { pre: Fact; post: Fact }>();
  for (const rule of ordered) {
    if (conditionsHold(rule, facts)) {
      replacements.set(factKey(rule.pre), { pre: rule.pre, post: rule.post });
    }
  }
  const out = FactSet.of(facts.values());
  for (const { pre, post } of replacements.values()) {
    out.delete(pre);
    out.add(post);
  }

  const vx = new Map<string, number>();
  const vy = new Map<string, number>();
  for (const f of out.sorted()) {
    if (f.kind === "VelocityX" && !vx.has(f.sprite)) vx.set(f.sprite, f.a);
    else if (f.kind === "VelocityY" && !vy.has(f.sprite)) vy.set(f.sprite, f.a);
  }

  const moved: Fact[] = [];
  for (const f of out.values()) {
    if (f.kind === "Spatial") {
      moved.push(spatial(f.sprite, f.a + (vx.get(f.sprite) ?? 0), f.b + (vy.get(f.sprite) ?? 0)));
    } else if (f.kind === "CameraX") {
      moved.push(cameraX(f.a + (vx.get(CAMERA_ID) ?? 0)));
    } else if (f.kind === "CameraY") {
      moved.push(cameraY(f.a + (vy.get(CAMERA_ID) ?? 0)));
    } else if (f.kind === "RelationshipX" || f.kind === "RelationshipY" || f.kind === "Input") {
      continue; // relationships are rebuilt below, inputs are exogenous
    } else {
      moved.push(f);
    }
  }

  const living = new Set<string>([CAMERA_ID]);
  for (const f of moved) {
    if (f.kind === "Animation" && f.sprite !== NONE_ID) living.add(f.sprite);
  }
  const kept = new FactSet();
  const positions: [string, number, number][] = [];
  for (const f of moved) {
    const subj = subject(f);
    if (subj !== "" && !living.has(subj)) continue;
    if (f.sprite === NONE_ID || f.other === NONE_ID) continue;
    kept.add(f);
    if (f.kind === "Spatial") positions.push([f.sprite, f.a, f.b]);
  }
  positions.sort((p, q) => (p[0] < q[0] ? -1 : p[0] > q[0] ? 1 : p[1] - q[1] || p[2] - q[2]));
  for (const f of relationshipFacts(positions)) kept.add(f);
  return kept;
}

function spawnFacts(chunk: Chunk, player: string, pw: number, ph: number,
                    rules: Rule[]): FactSet {
  const placements = chunk.sprites.filter((p) => p.spriteId !== player);

  const candidates: [number, number][] = [];
  const sortedPlacements = [...placements].sort((a, b) => a.x - b.x || b.y - a.y);
  for (const p of sortedPlacements) {
    if (p.y - ph < 0) continue;
    const spot: [number, number] = [p.x, p.y - ph];
    if (!placements.some((q) => q.x === spot[0] && q.y === spot[1])) {
      candidates.push(spot);
    }
  }
  candidates.push([0, Math.max(0, chunk.height - ph)]);

  const build = (start: [number, number]): FactSet => {
    const facts = new FactSet();
    for (const p of placements) {
      facts.add(animation(p.spriteId, p.w, p.h));
      facts.add(spatial(p.spriteId, p.x, p.y));
      facts.add(velocityX(p.spriteId, 0));
      facts.add(velocityY(p.spriteId, 0));
    }
    facts.add(animation(player, pw, ph));
    facts.add(spatial(player, start[0], start[1]));
    facts.add(velocityX(player, 0));
    facts.add(velocityY(player, 0));
    facts.add(cameraX(0));
    facts.add(cameraY(0));
    const positions: [string, number, number][] = placements.map((p) => [p.spriteId, p.x, p.y]);
    positions.push([player, start[0], start[1]]);
    for (const f of relationshipFacts(positions)) facts.add(f);
    return facts;
  };

  for (const start of candidates) {
    const state = build(start);
    const probe = predict(rules, state);
    if (probe.values().some((f) => f.kind === "Animation" && f.sprite === player)) {
      return state;
    }
  }
  return build(candidates[0]);
}

export function newSession(definition: GameDefinition): Session {
  const player = playerId(definition);
  const meta = definition.entities[player];
  return {
    definition,
    chunkIndex: 0,
    facts: spawnFacts(definition.level[0], player, meta.w, meta.h, definition.rules),
    tick: 0,
    outcome: "playing",
    inputLog: [],
  };
}

export function playerPosition(session: Session): [number, number] | null {
  const player = playerId(session.definition);
  let alive = false;
  let pos: [number, number] | null = null;
  for (const f of session.facts.values()) {
    if (f.kind === "Animation" && f.sprite === player) alive = true;
    if (f.kind === "Spatial" && f.sprite === player) pos = [f.a, f.b];
  }
  return alive ? pos : null;
}

export function sessionStep(session: Session, buttons: Set<string>): Session {
  if (session.outcome !== "playing") return session;
  const definition = session.definition;
  const player = playerId(definition);
  const meta = definition.entities[player];
  const chunk = definition.level[session.chunkIndex];

  const injected = FactSet.of(session.facts.values());
  for (const b of buttons) injected.add(press(b));
  session.facts = predict(definition.rules, injected);
  session.tick += 1;
  session.inputLog.push([...buttons].sort());

  const pos = playerPosition(session);
  if (pos === null || pos[1] >= chunk.height) {
    session.outcome = "dead";
    return session;
  }
  if (pos[0] >= chunk.width - meta.w) {
    if (session.chunkIndex + 1 >= definition.level.length) {
      session.outcome = "complete";
      return session;
    }
    session.chunkIndex += 1;
    session.facts = spawnFacts(definition.level[session.chunkIndex], player,
                               meta.w, meta.h, definition.rules);
  }
  return session;
}

// canonical state payload; sha256 of this matches the native state hash
export function statePayload(session: Session): string {
  const facts = session.facts.sorted().map(factJson).join(",");
  return `{"chunk":${session.chunkIndex},"facts":[${facts}],"outcome":"${session.outcome}"}`;
}

export function exportInputLog(session: Session): string {
  return JSON.stringify(session.inputLog);
}
