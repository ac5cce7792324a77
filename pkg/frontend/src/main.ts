/** Browser wiring: canvases, pointer handling, upload form.
 *
 * All image math happens server-side; this file only draws the parameter
 * state and translates pointer gestures into Editor calls.
 */

import { HttpApiClient } from "./api.js";
import { evalCurve } from "./curves.js";
import { Editor } from "./editor.js";
import { brushFootprint } from "./shading.js";
import { SHADING_RES, GAIN_MAX } from "./schema.js";

const CHANNEL_COLORS = ["#e04040", "#30a040", "#4060e0"];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function drawCurves(canvas: HTMLCanvasElement, editor: Editor): void {
  const ctx = canvas.getContext("2d")!;
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#ccc";
  ctx.strokeRect(0.5, 0.5, w - 1, h - 1);
  ctx.beginPath();
  ctx.moveTo(0, h);
  ctx.lineTo(w, 0);
  ctx.stroke();

  editor.params.curves.forEach((channel, c) => {
    const active = c === editor.channel;
    ctx.strokeStyle = CHANNEL_COLORS[c];
    ctx.globalAlpha = active ? 1.0 : 0.35;
    ctx.lineWidth = active ? 2 : 1;
    ctx.beginPath();
    for (let i = 0; i <= 200; i++) {
      const v = i / 200;
      const y = evalCurve(channel, v);
      const px = v * w;
      const py = (1 - y) * h;
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    }
    ctx.stroke();
    if (active) {
      ctx.fillStyle = CHANNEL_COLORS[c];
      for (const [x, y] of channel) {
        ctx.beginPath();
        ctx.arc(x * w, (1 - y) * h, 4, 0, 2 * Math.PI);
        ctx.fill();
      }
    }
  });
  ctx.globalAlpha = 1.0;
}

function drawShading(canvas: HTMLCanvasElement, editor: Editor): void {
  const ctx = canvas.getContext("2d")!;
  const cell = canvas.width / SHADING_RES;
  for (let r = 0; r < SHADING_RES; r++) {
    for (let c = 0; c < SHADING_RES; c++) {
      const g = editor.params.shading[r][c] / GAIN_MAX;
      const v = Math.round(255 * Math.min(1, g));
      ctx.fillStyle = `rgb(${v},${v},${v})`;
      ctx.fillRect(c * cell, r * cell, cell, cell);
    }
  }
}

function nearestNode(editor: Editor, canvas: HTMLCanvasElement, ev: PointerEvent): number {
  const rect = canvas.getBoundingClientRect();
  const x = (ev.clientX - rect.left) / rect.width;
  const y = 1 - (ev.clientY - rect.top) / rect.height;
  let best = 0;
  let bestDist = Infinity;
  editor.params.curves[editor.channel].forEach(([nx, ny], i) => {
    const d = (nx - x) ** 2 + (ny - y) ** 2;
    if (d < bestDist) {
      bestDist = d;
      best = i;
    }
  });
  return best;
}

function boot(): void {
  const api = new HttpApiClient("");
  const curveCanvas = el<HTMLCanvasElement>("curves");
  const shadingCanvas = el<HTMLCanvasElement>("shading");
  const preview = el<HTMLImageElement>("preview");
  const toast = el<HTMLDivElement>("toast");
  let editor: Editor | null = null;

  const events = {
    onPreview(url: string) {
      preview.src = `${url}&t=${Date.now()}`.replace("&", url.includes("?") ? "&" : "?");
      if (editor) {
        drawCurves(curveCanvas, editor);
        drawShading(shadingCanvas, editor);
      }
    },
    onToast(message: string) {
      toast.textContent = message;
      setTimeout(() => (toast.textContent = ""), 4000);
    },
  };

  el<HTMLButtonElement>("open").addEventListener("click", async () => {
    const composite = el<HTMLInputElement>("composite-file").files?.[0];
    const mask = el<HTMLInputElement>("mask-file").files?.[0];
    const background = el<HTMLInputElement>("background-file").files?.[0];
    if (!composite || !mask) {
      events.onToast("choose a composite and a mask first");
      return;
    }
    const sid = await api.createSession(composite, mask, background ?? undefined);
    editor = new Editor(api, sid, events);
    el<HTMLDivElement>("workbench").style.display = "block";
    drawCurves(curveCanvas, editor);
    drawShading(shadingCanvas, editor);
    events.onToast(`session ${sid} open`);
  });

  el<HTMLButtonElement>("predict").addEventListener("click", async () => {
    if (!editor) return;
    await editor.runPredict();
    drawCurves(curveCanvas, editor);
    drawShading(shadingCanvas, editor);
  });

  el<HTMLButtonElement>("reset-identity").addEventListener("click", () => {
    editor?.resetToIdentity();
    if (editor) {
      drawCurves(curveCanvas, editor);
      drawShading(shadingCanvas, editor);
    }
  });

  el<HTMLButtonElement>("reset-prediction").addEventListener("click", () => {
    if (!editor?.canResetToPrediction) {
      events.onToast("run predict first");
      return;
    }
    editor.resetToPrediction();
    drawCurves(curveCanvas, editor);
    drawShading(shadingCanvas, editor);
  });

  el<HTMLButtonElement>("export").addEventListener("click", async () => {
    if (!editor) return;
    const text = await editor.exportParams();
    const blob = new Blob([text], { type: "application/json" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "params.json";
    a.click();
  });

  for (let c = 0; c < 3; c++) {
    el<HTMLButtonElement>(`chan-${c}`).addEventListener("click", () => {
      if (!editor) return;
      editor.channel = c;
      drawCurves(curveCanvas, editor);
    });
  }

  let dragging: number | null = null;
  curveCanvas.addEventListener("pointerdown", (ev) => {
    if (!editor) return;
    dragging = nearestNode(editor, curveCanvas, ev);
    curveCanvas.setPointerCapture(ev.pointerId);
  });
  curveCanvas.addEventListener("pointermove", (ev) => {
    if (!editor || dragging === null) return;
    const rect = curveCanvas.getBoundingClientRect();
    const x = (ev.clientX - rect.left) / rect.width;
    const y = 1 - (ev.clientY - rect.top) / rect.height;
    editor.curveDrag(editor.channel, dragging, x, y);
    drawCurves(curveCanvas, editor);
  });
  curveCanvas.addEventListener("pointerup", () => (dragging = null));

  let painting = false;
  const paintAt = (ev: PointerEvent) => {
    if (!editor) return;
    const rect = shadingCanvas.getBoundingClientRect();
    const c = Math.floor(((ev.clientX - rect.left) / rect.width) * SHADING_RES);
    const r = Math.floor(((ev.clientY - rect.top) / rect.height) * SHADING_RES);
    const delta = Number(el<HTMLInputElement>("gain-delta").value);
    editor.shadingPaint(brushFootprint(r, c, editor.brushRadius), delta);
    drawShading(shadingCanvas, editor);
  };
  shadingCanvas.addEventListener("pointerdown", (ev) => {
    painting = true;
    paintAt(ev);
  });
  shadingCanvas.addEventListener("pointermove", (ev) => painting && paintAt(ev));
  shadingCanvas.addEventListener("pointerup", () => (painting = false));
  el<HTMLInputElement>("brush-radius").addEventListener("input", (ev) => {
    if (editor) editor.brushRadius = Number((ev.target as HTMLInputElement).value);
  });
}

boot();
