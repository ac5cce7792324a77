import { describe, expect, it } from "vitest";

import { clampDrag, dragNode, evalCurve } from "../src/curves.js";
import { identityParams, MIN_X_GAP } from "../src/schema.js";
import { validateParams } from "../src/validator.js";

function channel() {
  return identityParams().curves[0];
}

describe("drag clamping", () => {
  it("endpoint 0 stays at x = 0, only y moves", () => {
    const [x, y] = clampDrag(channel(), 0, 0.4, 0.7);
    expect(x).toBe(0);
    expect(y).toBe(0.7);
  });

  it("endpoint 31 stays at x = 1", () => {
    const [x, y] = clampDrag(channel(), 31, 0.2, 0.3);
    expect(x).toBe(1);
    expect(y).toBe(0.3);
  });

  it("dragging past the right neighbor clamps to neighbor.x - 1e-4", () => {
    const ch = channel();
    const [x] = clampDrag(ch, 10, ch[11][0] + 0.5, 0.5);
    expect(x).toBeCloseTo(ch[11][0] - MIN_X_GAP, 12);
  });

  it("dragging past the left neighbor clamps to neighbor.x + 1e-4", () => {
    const ch = channel();
    const [x] = clampDrag(ch, 10, ch[9][0] - 0.5, 0.5);
    expect(x).toBeCloseTo(ch[9][0] + MIN_X_GAP, 12);
  });

  it("y is clamped into [0, 1]", () => {
    expect(clampDrag(channel(), 5, 0.2, 1.7)[1]).toBe(1);
    expect(clampDrag(channel(), 5, 0.2, -0.3)[1]).toBe(0);
  });

  it("holds x when neighbors are already tighter than two gaps", () => {
    const ch = channel();
    ch[9][0] = 0.5;
    ch[10][0] = 0.50005;
    ch[11][0] = 0.5001;
    const [x] = clampDrag(ch, 10, 0.9, 0.5);
    expect(x).toBe(0.50005);
  });

  it("out-of-range node index throws", () => {
    expect(() => clampDrag(channel(), 32, 0.5, 0.5)).toThrow(RangeError);
  });
});

describe("dragNode", () => {
  it("any drag sequence keeps the channel schema-valid", () => {
    let ch = channel();
    let seed = 123456789;
    const rand = () => {
      seed = (seed * 1103515245 + 12345) % 2147483648;
      return seed / 2147483648;
    };
    for (let i = 0; i < 300; i++) {
      const idx = Math.floor(rand() * 32);
      ch = dragNode(ch, idx, rand() * 3 - 1, rand() * 3 - 1);
    }
    const doc = identityParams();
    doc.curves[0] = ch;
    expect(validateParams(doc).ok).toBe(true);
  });

  it("does not mutate its input", () => {
    const ch = channel();
    const snapshot = JSON.stringify(ch);
    dragNode(ch, 7, 0.9, 0.9);
    expect(JSON.stringify(ch)).toBe(snapshot);
  });
});

describe("evalCurve", () => {
  it("identity knots give the identity function", () => {
    const ch = channel();
    for (const v of [0, 0.1, 0.25, 0.5, 0.77, 1]) {
      expect(evalCurve(ch, v)).toBeCloseTo(v, 12);
    }
  });

  it("matches the engine's segment interpolation rule", () => {
    const ch = channel();
    ch[7][1] = 0.1;
    ch[8][1] = 0.4;
    const x0 = 7 / 31;
    const x1 = 8 / 31;
    const expected = ((0.25 - x0) / (x1 - x0)) * (0.4 - 0.1) + 0.1;
    expect(evalCurve(ch, 0.25)).toBeCloseTo(expected, 12);
  });
});
