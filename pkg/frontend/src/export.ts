// Batch-encode a raw corpus (one document per line, unpreprocessed) and
// write the embeddings as an EMB1 file. Row i of the output is always the
// embedding of input line i; empty lines encode the empty string so row
// order stays aligned with the corpus.

import { readFile, writeFile } from "node:fs/promises";

import { encodeEmb1 } from "./emb1.js";
import { BatchEncoder } from "./encoder.js";

export interface ExportConfig {
  input: string;
  output: string;
  model: string;
  batch: number;
}

export interface ExportResult {
  numDocs: number;
  dim: number;
  bytes: number;
}

/** Split file content into documents, one per line (trailing newline ignored). */
export function splitDocuments(content: string): string[] {
  const lines = content.split("\n");
  if (lines.length > 0 && lines[lines.length - 1] === "") {
    lines.pop();
  }
  return lines;
}

export async function exportEmbeddings(
  config: ExportConfig,
  encode: BatchEncoder,
): Promise<ExportResult> {
  if (config.batch < 1) {
    throw new Error(`batch size must be >= 1, got ${config.batch}`);
  }
  const content = await readFile(config.input, "utf-8");
  const docs = splitDocuments(content);
  if (docs.length === 0) {
    throw new Error(`${config.input}: input corpus is empty`);
  }

  const rows: Float32Array[] = [];
  for (let start = 0; start < docs.length; start += config.batch) {
    const batch = docs.slice(start, start + config.batch);
    const encoded = await encode(batch);
    if (encoded.length !== batch.length) {
      throw new Error(
        `encoder returned ${encoded.length} rows for a batch of ${batch.length}`,
      );
    }
    rows.push(...encoded);
  }

  const dim = rows[0].length;
  for (const [i, row] of rows.entries()) {
    if (row.length !== dim) {
      throw new Error(`row ${i} has dim ${row.length}, expected ${dim}`);
    }
  }
  const data = new Float32Array(rows.length * dim);
  rows.forEach((row, i) => data.set(row, i * dim));
  const buf = encodeEmb1({ numDocs: rows.length, dim, data });
  await writeFile(config.output, buf);
  return { numDocs: rows.length, dim, bytes: buf.length };
}
