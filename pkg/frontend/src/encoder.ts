// Sentence-embedding backend. The default "all-MiniLM-L6-v2" resolves to the
// ONNX export "Xenova/all-MiniLM-L6-v2"; mean pooling plus L2 normalization
// matches what the original sentence-transformers model produces.

/** Encodes a batch of documents; returns one embedding row per input. */
export type BatchEncoder = (texts: string[]) => Promise<Float32Array[]>;

export interface LoadedEncoder {
  encode: BatchEncoder;
  dim: number;
  /** documents that exceeded the tokenizer's max length so far */
  truncated: () => number;
}

export function resolveModelId(model: string): string {
  return model.includes("/") ? model : `Xenova/${model}`;
}

// The model runtime is an optional dependency (its native deps cannot be
// built everywhere); load it only when real encoding is requested.
async function loadPipeline(): Promise<any> {
  const moduleName = "@xenova/transformers";
  try {
    const transformers = await import(moduleName);
    return transformers.pipeline;
  } catch (err) {
    throw new Error(
      `the optional dependency ${moduleName} is not installed; ` +
        `install it to encode with a real model (${err instanceof Error ? err.message : err})`,
    );
  }
}

export async function loadEncoder(model: string): Promise<LoadedEncoder> {
  const pipeline = await loadPipeline();
  const extractor = await pipeline("feature-extraction", resolveModelId(model));
  let truncatedCount = 0;
  const tokenizer: any = (extractor as any).tokenizer;
  const maxLength: number =
    typeof tokenizer?.model_max_length === "number" ? tokenizer.model_max_length : Infinity;

  function countTruncated(texts: string[]): void {
    if (!Number.isFinite(maxLength) || !tokenizer) return;
    try {
      for (const text of texts) {
        const encoded = tokenizer(text, { truncation: false } as any);
        const ids = encoded.input_ids;
        const len = Number(ids?.dims?.at(-1) ?? ids?.size ?? 0);
        if (len > maxLength) truncatedCount++;
      }
    } catch {
      // counting is best-effort diagnostics; never block encoding
    }
  }

  const encode: BatchEncoder = async (texts: string[]) => {
    countTruncated(texts);
    const output = await extractor(texts, { pooling: "mean", normalize: true });
    const [rows, dim] = output.dims as [number, number];
    const flat = output.data as Float32Array;
    const result: Float32Array[] = [];
    for (let i = 0; i < rows; i++) {
      result.push(flat.slice(i * dim, (i + 1) * dim));
    }
    return result;
  };

  // probe the embedding width once; the empty string is a valid document
  const probe = await encode([""]);
  return {
    encode,
    dim: probe[0].length,
    truncated: () => truncatedCount,
  };
}
