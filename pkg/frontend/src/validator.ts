/** Client-side params validation, rule-for-rule equal to the server's.
 *
 * The editor never PUTs a document this validator rejects, and the shared
 * fixture corpus pins the equivalence: client accepts <=> server accepts.
 */

import { CHANNELS, CURVE_NODES, GAIN_MAX, SHADING_RES } from "./schema.js";

export type ValidationResult = { ok: true } | { ok: false; field: string; message: string };

function fail(field: string, message: string): ValidationResult {
  return { ok: false, field, message };
}

function isNumber(v: unknown): v is number {
  return typeof v === "number" && Number.isFinite(v);
}

export function validateParams(doc: unknown): ValidationResult {
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    return fail("$", "top-level value must be an object");
  }
  const d = doc as Record<string, unknown>;
  for (const key of ["version", "curves", "shading"]) {
    if (!(key in d)) return fail(key, "missing key");
  }
  if (d.version !== 1) return fail("version", `unsupported version ${JSON.stringify(d.version)}`);

  const curves = d.curves;
  if (!Array.isArray(curves) || curves.length !== CHANNELS) {
    return fail("curves", `expected ${CHANNELS} channel curves`);
  }
  for (let c = 0; c < CHANNELS; c++) {
    const channel = curves[c];
    if (!Array.isArray(channel) || channel.length !== CURVE_NODES) {
      return fail(`curves[${c}]`, `expected ${CURVE_NODES} nodes`);
    }
    for (let k = 0; k < CURVE_NODES; k++) {
      const node = channel[k];
      if (!Array.isArray(node) || node.length !== 2 || !isNumber(node[0]) || !isNumber(node[1])) {
        return fail(`curves[${c}][${k}]`, "expected [x, y] numbers");
      }
    }
    const xs = channel.map((n: number[]) => n[0]);
    const ys = channel.map((n: number[]) => n[1]);
    if (xs[0] !== 0.0 || xs[CURVE_NODES - 1] !== 1.0) {
      return fail(`curves[${c}].x`, "endpoints must be 0 and 1");
    }
    for (let k = 1; k < CURVE_NODES; k++) {
      if (!(xs[k] > xs[k - 1])) {
        return fail(`curves[${c}].x`, "x coordinates must be strictly increasing");
      }
    }
    for (const y of ys) {
      if (y < 0.0 || y > 1.0) return fail(`curves[${c}].y`, "y values must lie in [0, 1]");
    }
  }

  const shading = d.shading;
  if (!Array.isArray(shading) || shading.length !== SHADING_RES) {
    return fail("shading", `expected ${SHADING_RES} rows`);
  }
  for (let r = 0; r < SHADING_RES; r++) {
    const row = shading[r];
    if (!Array.isArray(row) || row.length !== SHADING_RES || !row.every(isNumber)) {
      return fail(`shading[${r}]`, `expected ${SHADING_RES} numbers`);
    }
    for (const v of row) {
      if (v <= 0.0 || v > GAIN_MAX) return fail("shading", `gains must lie in (0, ${GAIN_MAX}]`);
    }
  }
  return { ok: true };
}
