/** Thin fetch client for the harmonization service endpoints. */

import { ParamsDoc } from "./schema.js";

export interface PutRejection {
  status: number;
  field?: string;
  message: string;
}

export interface ApiClient {
  createSession(composite: Blob, mask: Blob, background?: Blob): Promise<string>;
  predict(sessionId: string): Promise<{ params: ParamsDoc; previewUrl: string }>;
  putParams(sessionId: string, params: ParamsDoc): Promise<{ previewUrl: string }>;
  getParams(sessionId: string): Promise<ParamsDoc>;
  renderUrl(sessionId: string, scale?: "full" | "preview"): string;
}

export class HttpApiClient implements ApiClient {
  constructor(private baseUrl: string = "") {}

  async createSession(composite: Blob, mask: Blob, background?: Blob): Promise<string> {
    const form = new FormData();
    form.append("composite", composite, "composite.png");
    form.append("mask", mask, "mask.png");
    if (background) form.append("background", background, "background.png");
    const resp = await fetch(`${this.baseUrl}/v1/session`, { method: "POST", body: form });
    if (resp.status !== 201) throw new Error(`session creation failed: ${await resp.text()}`);
    const doc = await resp.json();
    return doc.session_id as string;
  }

  async predict(sessionId: string): Promise<{ params: ParamsDoc; previewUrl: string }> {
    const resp = await fetch(`${this.baseUrl}/v1/session/${sessionId}/predict`, { method: "POST" });
    if (!resp.ok) throw new Error(`predict failed (${resp.status}): ${await resp.text()}`);
    const doc = await resp.json();
    return { params: doc.params as ParamsDoc, previewUrl: doc.preview_url as string };
  }

  async putParams(sessionId: string, params: ParamsDoc): Promise<{ previewUrl: string }> {
    const resp = await fetch(`${this.baseUrl}/v1/session/${sessionId}/params`, {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(params),
    });
    if (resp.status === 422) {
      const doc = await resp.json();
      const detail = doc.detail ?? {};
      throw Object.assign(new Error(detail.message ?? "invalid params"), {
        status: 422,
        field: detail.field,
      }) as Error & PutRejection;
    }
    if (!resp.ok) throw new Error(`params update failed (${resp.status})`);
    const doc = await resp.json();
    return { previewUrl: doc.preview_url as string };
  }

  async getParams(sessionId: string): Promise<ParamsDoc> {
    const resp = await fetch(`${this.baseUrl}/v1/session/${sessionId}/params`);
    if (!resp.ok) throw new Error(`get params failed (${resp.status})`);
    return (await resp.json()) as ParamsDoc;
  }

  renderUrl(sessionId: string, scale: "full" | "preview" = "full"): string {
    return `${this.baseUrl}/v1/session/${sessionId}/render?scale=${scale}`;
  }
}
