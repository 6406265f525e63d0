import { mkdtemp, readFile, writeFile } from "node:fs/promises";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { describe, expect, it } from "vitest";

import { decodeEmb1 } from "../src/emb1.js";
import { BatchEncoder } from "../src/encoder.js";
import { exportEmbeddings, splitDocuments } from "../src/export.js";

const DIM = 384;

/** Deterministic stand-in encoder: hash of the text seeds each row. */
function fakeEncoder(batchSizes?: number[]): BatchEncoder {
  return async (texts: string[]) => {
    batchSizes?.push(texts.length);
    return texts.map((text) => {
      let h = 2166136261;
      for (let i = 0; i < text.length; i++) {
        h = Math.imul(h ^ text.charCodeAt(i), 16777619) >>> 0;
      }
      const row = new Float32Array(DIM);
      for (let i = 0; i < DIM; i++) {
        h = Math.imul(h ^ (i + 1), 2654435761) >>> 0;
        row[i] = (h / 0xffffffff) * 2 - 1;
      }
      return row;
    });
  };
}

async function tempDir(): Promise<string> {
  return mkdtemp(join(tmpdir(), "embed-export-"));
}

describe("splitDocuments", () => {
  it("treats each line as a document and ignores the trailing newline", () => {
    expect(splitDocuments("a\nb\nc\n")).toEqual(["a", "b", "c"]);
    expect(splitDocuments("a\nb")).toEqual(["a", "b"]);
  });

  it("keeps interior empty lines as empty documents", () => {
    expect(splitDocuments("a\n\nc\n")).toEqual(["a", "", "c"]);
  });
});

describe("exportEmbeddings", () => {
  it("writes one aligned row per input line, dim 384", async () => {
    const dir = await tempDir();
    const input = join(dir, "docs.txt");
    const output = join(dir, "docs.emb1");
    const lines = Array.from({ length: 100 }, (_, i) => `document number ${i}`);
    await writeFile(input, lines.join("\n") + "\n");

    const result = await exportEmbeddings(
      { input, output, model: "fake", batch: 7 },
      fakeEncoder(),
    );
    expect(result.numDocs).toBe(100);
    expect(result.dim).toBe(DIM);

    const matrix = decodeEmb1(await readFile(output));
    expect(matrix.numDocs).toBe(100);
    expect(matrix.dim).toBe(DIM);
    // row order equals input line order
    const direct = await fakeEncoder()([lines[42]]);
    expect(Array.from(matrix.data.slice(42 * DIM, 43 * DIM))).toEqual(
      Array.from(direct[0]),
    );
  });

  it("re-export is bitwise identical", async () => {
    const dir = await tempDir();
    const input = join(dir, "docs.txt");
    await writeFile(input, "alpha\nbeta\ngamma\n");
    const out1 = join(dir, "a.emb1");
    const out2 = join(dir, "b.emb1");
    await exportEmbeddings({ input, output: out1, model: "fake", batch: 2 }, fakeEncoder());
    await exportEmbeddings({ input, output: out2, model: "fake", batch: 2 }, fakeEncoder());
    expect((await readFile(out1)).equals(await readFile(out2))).toBe(true);
  });

  it("identical input lines produce identical rows", async () => {
    const dir = await tempDir();
    const input = join(dir, "docs.txt");
    await writeFile(input, "same text\nother\nsame text\n");
    const output = join(dir, "docs.emb1");
    await exportEmbeddings({ input, output, model: "fake", batch: 64 }, fakeEncoder());
    const matrix = decodeEmb1(await readFile(output));
    const row0 = Array.from(matrix.data.slice(0, DIM));
    const row2 = Array.from(matrix.data.slice(2 * DIM, 3 * DIM));
    expect(row2).toEqual(row0);
  });

  it("keeps empty lines so rows stay aligned", async () => {
    const dir = await tempDir();
    const input = join(dir, "docs.txt");
    await writeFile(input, "first\n\nthird\n");
    const output = join(dir, "docs.emb1");
    const result = await exportEmbeddings(
      { input, output, model: "fake", batch: 64 },
      fakeEncoder(),
    );
    expect(result.numDocs).toBe(3);
    const matrix = decodeEmb1(await readFile(output));
    const emptyRow = (await fakeEncoder()([""]))[0];
    expect(Array.from(matrix.data.slice(DIM, 2 * DIM))).toEqual(Array.from(emptyRow));
  });

  it("batches the encoder calls as configured", async () => {
    const dir = await tempDir();
    const input = join(dir, "docs.txt");
    await writeFile(input, Array.from({ length: 10 }, (_, i) => `d${i}`).join("\n") + "\n");
    const output = join(dir, "docs.emb1");
    const sizes: number[] = [];
    await exportEmbeddings({ input, output, model: "fake", batch: 4 }, fakeEncoder(sizes));
    expect(sizes).toEqual([4, 4, 2]);
  });

  it("rejects an empty corpus", async () => {
    const dir = await tempDir();
    const input = join(dir, "docs.txt");
    await writeFile(input, "");
    await expect(
      exportEmbeddings(
        { input, output: join(dir, "o.emb1"), model: "fake", batch: 4 },
        fakeEncoder(),
      ),
    ).rejects.toThrow(/empty/);
  });

  it("rejects a misbehaving encoder", async () => {
    const dir = await tempDir();
    const input = join(dir, "docs.txt");
    await writeFile(input, "a\nb\n");
    const bad: BatchEncoder = async (texts) => [new Float32Array(DIM)];
    await expect(
      exportEmbeddings({ input, output: join(dir, "o.emb1"), model: "fake", batch: 4 }, bad),
    ).rejects.toThrow(/rows/);
  });
});

// Real-model encoding needs the pretrained weights (network or local cache);
// opt in with EMBED_EXPORT_REAL_MODEL=1.
describe.skipIf(!process.env.EMBED_EXPORT_REAL_MODEL)("real model", () => {
  it("loads all-MiniLM-L6-v2 and reports dim 384", async () => {
    const { loadEncoder } = await import("../src/encoder.js");
    const encoder = await loadEncoder("all-MiniLM-L6-v2");
    expect(encoder.dim).toBe(384);
    const rows = await encoder.encode(["hello world", "hello world"]);
    expect(rows[0].length).toBe(384);
    expect(Array.from(rows[1])).toEqual(Array.from(rows[0]));
  }, 300_000);
});
