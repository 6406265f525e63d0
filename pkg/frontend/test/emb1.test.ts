import { describe, expect, it } from "vitest";

import { decodeEmb1, encodeEmb1 } from "../src/emb1.js";

// bytes produced by the training toolkit's writer for
// [[1.5, -0.25, 3.0], [0.0, 2.0, -1.0]] — both sides must agree exactly
const GOLDEN_2X3_HEX =
  "454d423102000000030000000000c03f000080be000040400000000000000040000080bf";

describe("emb1 encoding", () => {
  it("writes the documented header and IEEE-754 payload", () => {
    const buf = encodeEmb1({ numDocs: 1, dim: 1, data: new Float32Array([1.0]) });
    expect(buf.length).toBe(16);
    expect(buf.toString("ascii", 0, 4)).toBe("EMB1");
    expect(buf.readUInt32LE(4)).toBe(1);
    expect(buf.readUInt32LE(8)).toBe(1);
    expect(buf.subarray(12).toString("hex")).toBe("0000803f");
  });

  it("writes a header-only file for an empty matrix", () => {
    const buf = encodeEmb1({ numDocs: 0, dim: 3, data: new Float32Array(0) });
    expect(buf.length).toBe(12);
  });

  it("matches the toolkit's golden bytes", () => {
    const data = new Float32Array([1.5, -0.25, 3.0, 0.0, 2.0, -1.0]);
    const buf = encodeEmb1({ numDocs: 2, dim: 3, data });
    expect(buf.toString("hex")).toBe(GOLDEN_2X3_HEX);
  });

  it("decodes the golden bytes back to the same values", () => {
    const matrix = decodeEmb1(Buffer.from(GOLDEN_2X3_HEX, "hex"));
    expect(matrix.numDocs).toBe(2);
    expect(matrix.dim).toBe(3);
    expect(Array.from(matrix.data)).toEqual([1.5, -0.25, 3.0, 0.0, 2.0, -1.0]);
  });

  it("round-trips bitwise", () => {
    const data = new Float32Array(24);
    for (let i = 0; i < data.length; i++) data[i] = Math.sin(i) * 10;
    const buf = encodeEmb1({ numDocs: 4, dim: 6, data });
    const again = encodeEmb1(decodeEmb1(buf));
    expect(again.equals(buf)).toBe(true);
  });

  it("rejects a bad magic", () => {
    const buf = encodeEmb1({ numDocs: 0, dim: 0, data: new Float32Array(0) });
    buf.write("XXXX", 0, "ascii");
    expect(() => decodeEmb1(buf)).toThrow(/magic/);
  });

  it("rejects a truncated payload", () => {
    const buf = encodeEmb1({ numDocs: 2, dim: 2, data: new Float32Array(4) });
    expect(() => decodeEmb1(buf.subarray(0, buf.length - 3))).toThrow(/payload/);
  });

  it("rejects non-finite values", () => {
    const buf = encodeEmb1({ numDocs: 1, dim: 2, data: new Float32Array([1, Infinity]) });
    expect(() => decodeEmb1(buf)).toThrow(/non-finite/);
  });

  it("rejects mismatched data length on encode", () => {
    expect(() =>
      encodeEmb1({ numDocs: 2, dim: 3, data: new Float32Array(5) }),
    ).toThrow(/length/);
  });
});
