// EMB1 binary matrix file: "EMB1" magic, u32 LE num_docs, u32 LE dim,
// then num_docs * dim IEEE-754 float32 values, row-major, little-endian.
// No padding, no footer.

const MAGIC = "EMB1";
const HEADER_BYTES = 12;

export interface EmbeddingMatrix {
  numDocs: number;
  dim: number;
  /** row-major, numDocs * dim values */
  data: Float32Array;
}

export function encodeEmb1(matrix: EmbeddingMatrix): Buffer {
  const { numDocs, dim, data } = matrix;
  if (data.length !== numDocs * dim) {
    throw new Error(`matrix data length ${data.length} != ${numDocs} * ${dim}`);
  }
  const buf = Buffer.alloc(HEADER_BYTES + data.length * 4);
  buf.write(MAGIC, 0, "ascii");
  buf.writeUInt32LE(numDocs, 4);
  buf.writeUInt32LE(dim, 8);
  for (let i = 0; i < data.length; i++) {
    buf.writeFloatLE(data[i], HEADER_BYTES + i * 4);
  }
  return buf;
}

export function decodeEmb1(buf: Buffer): EmbeddingMatrix {
  if (buf.length < HEADER_BYTES) {
    throw new Error(`file shorter than EMB1 header (${buf.length} bytes)`);
  }
  const magic = buf.toString("ascii", 0, 4);
  if (magic !== MAGIC) {
    throw new Error(`bad magic ${JSON.stringify(magic)}, expected ${MAGIC}`);
  }
  const numDocs = buf.readUInt32LE(4);
  const dim = buf.readUInt32LE(8);
  const expected = HEADER_BYTES + numDocs * dim * 4;
  if (buf.length !== expected) {
    throw new Error(
      `payload size ${buf.length} does not match header (${numDocs} docs x ${dim} dims needs ${expected} bytes)`,
    );
  }
  const data = new Float32Array(numDocs * dim);
  for (let i = 0; i < data.length; i++) {
    data[i] = buf.readFloatLE(HEADER_BYTES + i * 4);
    if (!Number.isFinite(data[i])) {
      throw new Error(`non-finite value at element ${i}`);
    }
  }
  return { numDocs, dim, data };
}
