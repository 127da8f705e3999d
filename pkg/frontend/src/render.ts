/**
 * Camera rendering, decoupled from socket reads.
 *
 * The render loop wakes on its own schedule (requestAnimationFrame in the
 * browser), draws only when a newer frame is available, and never awaits
 * the network, so a stalled stream cannot block the UI.
 */

import type { ImageFrame } from "./protocol.js";
import type { ConsoleState } from "./state.js";

export interface RenderSurface {
  putGray8(pixels: Uint8Array, width: number, height: number): void;
  overlay(lines: string[]): void;
}

export function renderFrame(frame: ImageFrame, overlayLines: string[], surface: RenderSurface): void {
  surface.putGray8(frame.pixels, frame.width, frame.height);
  surface.overlay(overlayLines);
}

export function overlayLines(state: ConsoleState): string[] {
  const lines: string[] = [];
  if (state.latestFrame !== null) {
    lines.push(`t=${state.latestFrame.timestamp.toFixed(2)}s`);
  }
  lines.push(`drops=${state.dropCounter}`);
  for (const msg of state.customLog.slice(-3)) {
    lines.push(`${msg.label}: ${msg.data}`);
  }
  return lines;
}

export type FrameScheduler = (callback: () => void) => void;

/**
 * Start the draw loop; returns a stop function. Each wakeup draws at most
 * once, and only if a frame newer than the last drawn one arrived.
 */
export function startRenderLoop(
  state: ConsoleState,
  surface: RenderSurface,
  schedule: FrameScheduler,
  onRender?: () => void,
): () => void {
  let running = true;
  let lastDrawn = -1;

  const step = () => {
    if (!running) {
      return;
    }
    const frame = state.latestFrame;
    if (frame !== null && frame.timestamp > lastDrawn) {
      renderFrame(frame, overlayLines(state), surface);
      lastDrawn = frame.timestamp;
      onRender?.();
    }
    schedule(step);
  };
  schedule(step);
  return () => {
    running = false;
  };
}

/** Canvas-backed surface for the browser. */
export class CanvasSurface implements RenderSurface {
  private readonly ctx: CanvasRenderingContext2D;
  private image: ImageData | null = null;

  constructor(private readonly canvas: HTMLCanvasElement) {
    const ctx = canvas.getContext("2d");
    if (ctx === null) {
      throw new Error("2d canvas context unavailable");
    }
    this.ctx = ctx;
  }

  putGray8(pixels: Uint8Array, width: number, height: number): void {
    if (this.canvas.width !== width || this.canvas.height !== height) {
      this.canvas.width = width;
      this.canvas.height = height;
      this.image = null;
    }
    if (this.image === null) {
      this.image = this.ctx.createImageData(width, height);
    }
    const rgba = this.image.data;
    for (let i = 0; i < pixels.length; i++) {
      const v = pixels[i];
      const o = i * 4;
      rgba[o] = v;
      rgba[o + 1] = v;
      rgba[o + 2] = v;
      rgba[o + 3] = 255;
    }
    this.ctx.putImageData(this.image, 0, 0);
  }

  overlay(lines: string[]): void {
    this.ctx.font = "10px monospace";
    this.ctx.textBaseline = "top";
    for (let i = 0; i < lines.length; i++) {
      const y = 4 + i * 12;
      this.ctx.fillStyle = "rgba(0, 0, 0, 0.6)";
      this.ctx.fillRect(2, y - 1, 6 * lines[i].length + 6, 11);
      this.ctx.fillStyle = "#7CFC00";
      this.ctx.fillText(lines[i], 5, y);
    }
  }
}
