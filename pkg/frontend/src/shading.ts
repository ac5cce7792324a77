/** Brush edits on the 64x64 shading grid. */

import { GAIN_FLOOR, GAIN_MAX, SHADING_RES } from "./schema.js";

export interface PaintResult {
  grid: number[][];
  changed: boolean;
}

/** Multiply the named cells by (1 + gainDelta), clamped to [GAIN_FLOOR, GAIN_MAX].
 *
 * gainDelta 0 reports changed=false so callers skip the network round trip.
 */
export function paintCells(
  grid: number[][],
  cells: Array<[number, number]>,
  gainDelta: number,
): PaintResult {
  if (gainDelta === 0 || cells.length === 0) {
    return { grid, changed: false };
  }
  const out = grid.map((row) => row.slice());
  let changed = false;
  for (const [r, c] of cells) {
    if (r < 0 || r >= SHADING_RES || c < 0 || c >= SHADING_RES) {
      throw new RangeError(`cell (${r}, ${c}) outside the ${SHADING_RES}x${SHADING_RES} grid`);
    }
    const next = Math.min(GAIN_MAX, Math.max(GAIN_FLOOR, out[r][c] * (1 + gainDelta)));
    if (next !== out[r][c]) {
      out[r][c] = next;
      changed = true;
    }
  }
  return { grid: changed ? out : grid, changed };
}

/** Cells within `radius` (euclidean) of a center cell; the brush footprint. */
export function brushFootprint(row: number, col: number, radius: number): Array<[number, number]> {
  const out: Array<[number, number]> = [];
  const r = Math.max(0, Math.floor(radius));
  for (let dr = -r; dr <= r; dr++) {
    for (let dc = -r; dc <= r; dc++) {
      if (dr * dr + dc * dc > radius * radius) continue;
      const rr = row + dr;
      const cc = col + dc;
      if (rr >= 0 && rr < SHADING_RES && cc >= 0 && cc < SHADING_RES) {
        out.push([rr, cc]);
      }
    }
  }
  return out;
}
