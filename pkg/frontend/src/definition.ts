// Game definition loading with field-path errors, so a bad file names what
// broke on screen instead of failing silently.

import { Fact, parseFactJson } from "./facts.js";

export interface Rule {
  id: number;
  conditions: Fact[];
  pre: Fact;
  post: Fact;
}

export interface Placement {
  spriteId: string;
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface Chunk {
  category: string;
  width: number;
  height: number;
  sprites: Placement[];
}

export interface Entity {
  w: number;
  h: number;
  isPlayer: boolean;
  spriteRef: string;
}

export interface GameDefinition {
  entities: Record<string, Entity>;
  rules: Rule[];
  level: Chunk[];
  camera: string;
  rngSeed: number;
  sprites: Record<string, number[][]>;
}

export class DefinitionError extends Error {}

function need(obj: Record<string, unknown>, key: string, path: string): unknown {
  if (!(key in obj)) throw new DefinitionError(`${path}.${key}: missing`);
  return obj[key];
}

export function parseDefinition(raw: unknown): GameDefinition {
  if (typeof raw !== "object" || raw === null) {
    throw new DefinitionError("$: definition must be an object");
  }
  const obj = raw as Record<string, unknown>;
  for (const key of ["entities", "rules", "level", "camera", "rngSeed"]) {
    need(obj, key, "$");
  }
  const entities: Record<string, Entity> = {};
  const entitiesRaw = obj["entities"] as Record<string, Record<string, unknown>>;
  for (const id of Object.keys(entitiesRaw)) {
    const e = entitiesRaw[id];
    entities[id] = {
      w: need(e, "w", `$.entities.${id}`) as number,
      h: need(e, "h", `$.entities.${id}`) as number,
      isPlayer: Boolean(e["isPlayer"]),
      spriteRef: String(e["spriteRef"] ?? id),
    };
  }
  const players = Object.keys(entities).filter((id) => entities[id].isPlayer);
  if (players.length !== 1) {
    throw new DefinitionError(`$.entities: expected exactly one player, found [${players.join(", ")}]`);
  }
  const rules: Rule[] = (obj["rules"] as Record<string, unknown>[]).map((r, i) => {
    const path = `$.rules[${i}]`;
    const effect = need(r, "effect", path) as Record<string, unknown>;
    return {
      id: need(r, "id", path) as number,
      conditions: (need(r, "conditions", path) as Record<string, unknown>[]).map(parseFactJson),
      pre: parseFactJson(need(effect, "pre", `${path}.effect`) as Record<string, unknown>),
      post: parseFactJson(need(effect, "post", `${path}.effect`) as Record<string, unknown>),
    };
  });
  const level: Chunk[] = (obj["level"] as Record<string, unknown>[]).map((c, i) => {
    const path = `$.level[${i}]`;
    return {
      category: String(need(c, "category", path)),
      width: need(c, "width", path) as number,
      height: need(c, "height", path) as number,
      sprites: (need(c, "sprites", path) as Record<string, unknown>[]).map((s, j) => ({
        spriteId: String(need(s, "spriteId", `${path}.sprites[${j}]`)),
        x: s["x"] as number,
        y: s["y"] as number,
        w: s["w"] as number,
        h: s["h"] as number,
      })),
    };
  });
  if (level.length === 0) throw new DefinitionError("$.level: empty level");
  return {
    entities,
    rules,
    level,
    camera: String(obj["camera"]),
    rngSeed: obj["rngSeed"] as number,
    sprites: (obj["sprites"] ?? {}) as Record<string, number[][]>,
  };
}

export function playerId(definition: GameDefinition): string {
  return Object.keys(definition.entities).find((id) => definition.entities[id].isPlayer)!;
}
