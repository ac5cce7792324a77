/** Editor state machine, DOM-free so the behavior is unit-testable.
 *
 * Local edits mutate a working copy and schedule a debounced PUT (200 ms,
 * so at most 5 requests/second during a gesture). Documents that fail the
 * client validator are never sent. A server 422 reverts the working copy
 * to the last accepted document and surfaces a toast message.
 */

import { ApiClient } from "./api.js";
import { dragNode } from "./curves.js";
import { debounce, Debounced } from "./debounce.js";
import { paintCells } from "./shading.js";
import { cloneParams, identityParams, ParamsDoc } from "./schema.js";
import { validateParams } from "./validator.js";

export const DEBOUNCE_MS = 200;

export interface EditorEvents {
  onPreview(url: string): void;
  onToast(message: string): void;
}

export class Editor {
  params: ParamsDoc;
  predicted: ParamsDoc | null = null;
  dirty = false;
  channel = 0; // selected curve channel (0 R, 1 G, 2 B)
  brushRadius = 3;
  brushGainDelta = -0.1;

  private lastAccepted: ParamsDoc;
  private put: Debounced<[]>;
  private inFlight: Promise<void> = Promise.resolve();

  constructor(
    private api: ApiClient,
    private sessionId: string,
    private events: EditorEvents,
    waitMs: number = DEBOUNCE_MS,
  ) {
    this.params = identityParams();
    this.lastAccepted = cloneParams(this.params);
    this.put = debounce(() => this.pushNow(), waitMs);
  }

  /** Whether reset-to-prediction is available yet. */
  get canResetToPrediction(): boolean {
    return this.predicted !== null;
  }

  async runPredict(): Promise<void> {
    const { params, previewUrl } = await this.api.predict(this.sessionId);
    this.predicted = cloneParams(params);
    this.params = cloneParams(params);
    this.lastAccepted = cloneParams(params);
    this.dirty = false;
    this.events.onPreview(previewUrl);
  }

  curveDrag(channel: number, nodeIndex: number, newX: number, newY: number): void {
    const next = cloneParams(this.params);
    next.curves[channel] = dragNode(next.curves[channel], nodeIndex, newX, newY);
    this.applyLocal(next);
  }

  shadingPaint(cells: Array<[number, number]>, gainDelta: number): void {
    const { grid, changed } = paintCells(this.params.shading, cells, gainDelta);
    if (!changed) return; // no-op strokes do not schedule a PUT
    const next = cloneParams(this.params);
    next.shading = grid;
    this.applyLocal(next);
  }

  resetToIdentity(): void {
    this.applyLocal(identityParams());
  }

  resetToPrediction(): void {
    if (this.predicted === null) {
      throw new Error("no prediction available yet");
    }
    this.applyLocal(cloneParams(this.predicted));
  }

  /** The exported document is the server's copy, fetched verbatim. */
  async exportParams(): Promise<string> {
    this.put.flush();
    await this.inFlight;
    const doc = await this.api.getParams(this.sessionId);
    return JSON.stringify(doc);
  }

  /** Resolves after any scheduled/in-flight PUT has settled (test hook). */
  async settled(): Promise<void> {
    this.put.flush();
    await this.inFlight;
  }

  private applyLocal(next: ParamsDoc): void {
    const verdict = validateParams(next);
    if (!verdict.ok) {
      // client-side guard: never schedule a PUT the server would reject
      this.events.onToast(`invalid edit: ${verdict.field}: ${verdict.message}`);
      return;
    }
    this.params = next;
    this.dirty = true;
    this.put.call();
  }

  private pushNow(): void {
    const doc = cloneParams(this.params);
    this.inFlight = this.inFlight.then(async () => {
      try {
        const { previewUrl } = await this.api.putParams(this.sessionId, doc);
        this.lastAccepted = doc;
        this.dirty = false;
        this.events.onPreview(previewUrl);
      } catch (err) {
        const e = err as Error & { status?: number };
        if (e.status === 422) {
          this.params = cloneParams(this.lastAccepted);
          this.dirty = false;
          this.events.onToast(`server rejected params: ${e.message}`);
        } else {
          this.events.onToast(`network error: ${e.message}`);
        }
      }
    });
  }
}
