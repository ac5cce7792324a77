/** Shared parameter-document schema, mirrored with the server. */

export const CURVE_NODES = 32;
export const CHANNELS = 3;
export const SHADING_RES = 64;
export const GAIN_MAX = 2.0;
export const GAIN_FLOOR = 1e-3;
/** Minimum x distance kept between neighboring curve nodes while dragging. */
export const MIN_X_GAP = 1e-4;

export type CurveNode = [number, number];
export type ChannelCurve = CurveNode[];

export interface ParamsDoc {
  version: 1;
  /** 3 channels (R, G, B), 32 [x, y] nodes each. */
  curves: ChannelCurve[];
  /** 64 rows of 64 multiplicative gains in (0, GAIN_MAX]. */
  shading: number[][];
}

export function identityParams(): ParamsDoc {
  const curves: ChannelCurve[] = [];
  for (let c = 0; c < CHANNELS; c++) {
    const channel: ChannelCurve = [];
    for (let k = 0; k < CURVE_NODES; k++) {
      const t = k / (CURVE_NODES - 1);
      channel.push([t, t]);
    }
    curves.push(channel);
  }
  const shading = Array.from({ length: SHADING_RES }, () =>
    Array.from({ length: SHADING_RES }, () => 1.0),
  );
  return { version: 1, curves, shading };
}

export function cloneParams(doc: ParamsDoc): ParamsDoc {
  return {
    version: 1,
    curves: doc.curves.map((ch) => ch.map((node) => [node[0], node[1]] as CurveNode)),
    shading: doc.shading.map((row) => row.slice()),
  };
}
