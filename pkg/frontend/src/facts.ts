// Fact model mirroring the native simulator: value-comparable conditional
// statements with a canonical JSON form (alphabetical keys, integer payloads)
// so state hashes match the native implementation byte for byte.

export const CAMERA_ID = "Camera";
export const NONE_ID = "None";

export type FactKind =
  | "Animation"
  | "Spatial"
  | "RelationshipX"
  | "RelationshipY"
  | "VelocityX"
  | "VelocityY"
  | "CameraX"
  | "CameraY"
  | "Input";

export interface Fact {
  kind: FactKind;
  sprite: string; // subject sprite id; "" for camera and input facts
  other: string;  // partner sprite (relationships) or button (input)
  a: number;
  b: number;
}

export function fact(kind: FactKind, sprite = "", other = "", a = 0, b = 0): Fact {
  return { kind, sprite, other, a, b };
}

export const animation = (sprite: string, w: number, h: number) => fact("Animation", sprite, "", w, h);
export const spatial = (sprite: string, x: number, y: number) => fact("Spatial", sprite, "", x, y);
export const relationshipX = (sprite: string, other: string, dx: number) => fact("RelationshipX", sprite, other, dx);
export const relationshipY = (sprite: string, other: string, dy: number) => fact("RelationshipY", sprite, other, dy);
export const velocityX = (sprite: string, vx: number) => fact("VelocityX", sprite, "", vx);
export const velocityY = (sprite: string, vy: number) => fact("VelocityY", sprite, "", vy);
export const cameraX = (x: number) => fact("CameraX", "", "", x);
export const cameraY = (y: number) => fact("CameraY", "", "", y);
export const press = (button: string) => fact("Input", "", button);

export function subject(f: Fact): string {
  if (f.kind === "CameraX" || f.kind === "CameraY") return CAMERA_ID;
  return f.sprite;
}

function cmpStr(a: string, b: string): number {
  return a < b ? -1 : a > b ? 1 : 0;
}

export function compareFacts(x: Fact, y: Fact): number {
  return (
    cmpStr(x.kind, y.kind) ||
    cmpStr(x.sprite, y.sprite) ||
    cmpStr(x.other, y.other) ||
    x.a - y.a ||
    x.b - y.b
  );
}

// canonical JSON with alphabetically ordered keys, per kind
export function factJson(f: Fact): string {
  switch (f.kind) {
    case "Animation":
      return `{"height":${f.b},"kind":"Animation","spriteId":${JSON.stringify(f.sprite)},"width":${f.a}}`;
    case "Spatial":
      return `{"kind":"Spatial","spriteId":${JSON.stringify(f.sprite)},"x":${f.a},"y":${f.b}}`;
    case "RelationshipX":
      return `{"dx":${f.a},"kind":"RelationshipX","otherSpriteId":${JSON.stringify(f.other)},"spriteId":${JSON.stringify(f.sprite)}}`;
    case "RelationshipY":
      return `{"dy":${f.a},"kind":"RelationshipY","otherSpriteId":${JSON.stringify(f.other)},"spriteId":${JSON.stringify(f.sprite)}}`;
    case "VelocityX":
      return `{"kind":"VelocityX","spriteId":${JSON.stringify(f.sprite)},"vx":${f.a}}`;
    case "VelocityY":
      return `{"kind":"VelocityY","spriteId":${JSON.stringify(f.sprite)},"vy":${f.a}}`;
    case "CameraX":
      return `{"kind":"CameraX","x":${f.a}}`;
    case "CameraY":
      return `{"kind":"CameraY","y":${f.a}}`;
    case "Input":
      return `{"button":${JSON.stringify(f.other)},"kind":"Input"}`;
  }
}

export function factKey(f: Fact): string {
  return `${f.kind}|${f.sprite}|${f.other}|${f.a}|${f.b}`;
}

export function parseFactJson(obj: Record<string, unknown>): Fact {
  const kind = obj["kind"] as FactKind;
  switch (kind) {
    case "Animation":
      return animation(obj["spriteId"] as string, obj["width"] as number, obj["height"] as number);
    case "Spatial":
      return spatial(obj["spriteId"] as string, obj["x"] as number, obj["y"] as number);
    case "RelationshipX":
      return relationshipX(obj["spriteId"] as string, obj["otherSpriteId"] as string, obj["dx"] as number);
    case "RelationshipY":
      return relationshipY(obj["spriteId"] as string, obj["otherSpriteId"] as string, obj["dy"] as number);
    case "VelocityX":
      return velocityX(obj["spriteId"] as string, obj["vx"] as number);
    case "VelocityY":
      return velocityY(obj["spriteId"] as string, obj["vy"] as number);
    case "CameraX":
      return cameraX(obj["x"] as number);
    case "CameraY":
      return cameraY(obj["y"] as number);
    case "Input":
      return press(obj["button"] as string);
    default:
      throw new Error(`unknown fact kind ${String(obj["kind"])}`);
  }
}

// A fact set keyed by identity; iteration order is normalized by sorting.
export class FactSet {
  private map = new Map<string, Fact>();

  static of(facts: Iterable<Fact>): FactSet {
    const s = new FactSet();
    for (const f of facts) s.add(f);
    return s;
  }

  add(f: Fact): void {
    this.map.set(factKey(f), f);
  }

  delete(f: Fact): void {
    this.map.delete(factKey(f));
  }

  has(f: Fact): boolean {
    return this.map.has(factKey(f));
  }

  get size(): number {
    return this.map.size;
  }

  values(): Fact[] {
    return [...this.map.values()];
  }

  sorted(): Fact[] {
    return this.values().sort(compareFacts);
  }
}
