/** Drag semantics for curve control points.
 *
 * Endpoint nodes are pinned horizontally (x stays 0 or 1); interior nodes
 * keep a MIN_X_GAP distance from both neighbors so x stays strictly
 * increasing no matter how the pointer moves.
 */

import { CURVE_NODES, ChannelCurve, MIN_X_GAP } from "./schema.js";

function clamp(v: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, v));
}

export function clampDrag(
  channel: ChannelCurve,
  index: number,
  newX: number,
  newY: number,
): [number, number] {
  if (index < 0 || index >= CURVE_NODES) {
    throw new RangeError(`node index ${index} out of range`);
  }
  const y = clamp(newY, 0.0, 1.0);
  if (index === 0 || index === CURVE_NODES - 1) {
    return [channel[index][0], y];
  }
  const lo = channel[index - 1][0] + MIN_X_GAP;
  const hi = channel[index + 1][0] - MIN_X_GAP;
  if (lo > hi) {
    return [channel[index][0], y]; // neighbors already closer than 2 gaps: hold x
  }
  return [clamp(newX, lo, hi), y];
}

/** Apply a drag to a copy of the channel; the input is not mutated. */
export function dragNode(
  channel: ChannelCurve,
  index: number,
  newX: number,
  newY: number,
): ChannelCurve {
  const [x, y] = clampDrag(channel, index, newX, newY);
  const out = channel.map((n) => [n[0], n[1]] as [number, number]);
  out[index] = [x, y];
  return out;
}

/** Piecewise-linear evaluation with the same segment rule as the engine. */
export function evalCurve(channel: ChannelCurve, v: number): number {
  let seg = 0;
  for (let k = 1; k < CURVE_NODES - 1; k++) {
    if (channel[k][0] <= v) seg = k;
    else break;
  }
  const [x0, y0] = channel[seg];
  const [x1, y1] = channel[seg + 1];
  const slope = (y1 - y0) / (x1 - x0);
  return y0 + slope * (v - x0);
}
