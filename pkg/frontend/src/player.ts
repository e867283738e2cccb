// Canvas player: fixed 60Hz logical clock decoupled from the display refresh,
// keyboard input, palette-matrix sprite rendering, input-log download.
// Rendering reads the fact set and never mutates it.

import { GameDefinition, parseDefinition, playerId } from "./definition.js";
import { Session, exportInputLog, newSession, playerPosition, sessionStep } from "./sim.js";

const SCALE = 4;
const TICK_MS = 1000 / 60;

const PALETTE = [
  "#00000000", "#1a1c2c", "#5d275d", "#b13e53", "#ef7d57", "#ffcd75",
  "#a7f070", "#38b764", "#257179", "#29366f", "#3b5dc9", "#41a6f6",
  "#73eff7", "#f4f4f4", "#94b0c2", "#566c86",
];

const KEYMAP: Record<string, string> = {
  ArrowLeft: "left",
  ArrowRight: "right",
  ArrowUp: "up",
  ArrowDown: "down",
  Space: "action",
};

export class Player {
  private session: Session | null = null;
  private held = new Set<string>();
  private accumulator = 0;
  private last = 0;
  private raf = 0;

  constructor(
    private canvas: HTMLCanvasElement,
    private status: HTMLElement,
    private logButton: HTMLButtonElement,
  ) {
    window.addEventListener("keydown", (e) => {
      const button = KEYMAP[e.code];
      if (button) {
        this.held.add(button);
        e.preventDefault();
      }
    });
    window.addEventListener("keyup", (e) => {
      const button = KEYMAP[e.code];
      if (button) this.held.delete(button);
    });
    logButton.addEventListener("click", () => this.downloadLog());
  }

  loadJson(text: string): void {
    try {
      this.session = newSession(parseDefinition(JSON.parse(text)));
    } catch (err) {
      this.status.textContent = `load error: ${(err as Error).message}`;
      this.session = null;
      return;
    }
    const chunk = this.session.definition.level[0];
    this.canvas.width = chunk.width * SCALE;
    this.canvas.height = chunk.height * SCALE;
    this.accumulator = 0;
    this.last = performance.now();
    cancelAnimationFrame(this.raf);
    const frame = (now: number) => {
      this.accumulator += now - this.last;
      this.last = now;
      while (this.accumulator >= TICK_MS) {
        this.accumulator -= TICK_MS;
        if (this.session && this.session.outcome === "playing") {
          sessionStep(this.session, this.held);
        }
      }
      this.render();
      this.raf = requestAnimationFrame(frame);
    };
    this.raf = requestAnimationFrame(frame);
  }

  private downloadLog(): void {
    if (!this.session) return;
    const blob = new Blob([exportInputLog(this.session)], { type: "application/json" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "input-log.json";
    a.click();
    URL.revokeObjectURL(a.href);
  }

  private drawSprite(ctx: CanvasRenderingContext2D, pixels: number[][] | undefined,
                     x: number, y: number, w: number, h: number): void {
    if (!pixels || pixels.length === 0) {
      ctx.fillStyle = "#b13e53";
      ctx.fillRect(x * SCALE, y * SCALE, w * SCALE, h * SCALE);
      return;
    }
    const px = (w * SCALE) / pixels[0].length;
    const py = (h * SCALE) / pixels.length;
    for (let r = 0; r < pixels.length; r++) {
      for (let c = 0; c < pixels[r].length; c++) {
        const color = pixels[r][c];
        if (!color) continue;
        ctx.fillStyle = PALETTE[color % PALETTE.length];
        ctx.fillRect(x * SCALE + c * px, y * SCALE + r * py, px + 0.5, py + 0.5);
      }
    }
  }

  private render(): void {
    const ctx = this.canvas.getContext("2d")!;
    ctx.fillStyle = "#1a1c2c";
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
    if (!this.session) return;
    const definition = this.session.definition;
    for (const f of this.session.facts.sorted()) {
      if (f.kind !== "Spatial") continue;
      const entity = definition.entities[f.sprite];
      if (!entity) continue;
      this.drawSprite(ctx, definition.sprites[entity.spriteRef], f.a, f.b, entity.w, entity.h);
    }
    const pos = playerPosition(this.session);
    this.status.textContent =
      `${this.session.outcome} | chunk ${this.session.chunkIndex + 1}/` +
      `${definition.level.length} | tick ${this.session.tick}` +
      (pos ? ` | player (${pos[0]}, ${pos[1]})` : "");
  }
}

export function boot(): void {
  const canvas = document.getElementById("screen") as HTMLCanvasElement;
  const status = document.getElementById("status")!;
  const logButton = document.getElementById("download-log") as HTMLButtonElement;
  const picker = document.getElementById("picker") as HTMLInputElement;
  const player = new Player(canvas, status, logButton);

  picker.addEventListener("change", async () => {
    const file = picker.files?.[0];
    if (file) player.loadJson(await file.text());
  });

  const url = new URLSearchParams(window.location.search).get("definition");
  if (url) {
    fetch(url)
      .then((r) => r.text())
      .then((text) => player.loadJson(text))
      .catch((err) => (status.textContent = `fetch error: ${err}`));
  }
}
