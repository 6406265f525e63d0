#!/usr/bin/env node
// embed-export export --input docs.txt --model all-MiniLM-L6-v2
//                     --output docs.emb1 --batch 64

import { pathToFileURL } from "node:url";

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { loadEncoder } from "./encoder.js";
import { exportEmbeddings } from "./export.js";

async function runExport(argv: {
  input: string;
  output: string;
  model: string;
  batch: number;
}): Promise<void> {
  const encoder = await loadEncoder(argv.model);
  const result = await exportEmbeddings(
    { input: argv.input, output: argv.output, model: argv.model, batch: argv.batch },
    encoder.encode,
  );
  const truncated = encoder.truncated();
  if (truncated > 0) {
    console.error(`note: ${truncated} documents exceeded the model's max length and were truncated`);
  }
  console.log(
    `wrote ${argv.output}: ${result.numDocs} docs x ${result.dim} dims (${result.bytes} bytes)`,
  );
}

export async function main(args: string[]): Promise<number> {
  try {
    await yargs(args)
      .command(
        ["export", "$0"],
        "encode raw documents and write an EMB1 embedding file",
        (y) =>
          y
            .option("input", {
              type: "string",
              demandOption: true,
              describe: "raw corpus, one document per line",
            })
            .option("output", {
              type: "string",
              demandOption: true,
              describe: "EMB1 file to write",
            })
            .option("model", {
              type: "string",
              default: "all-MiniLM-L6-v2",
              describe: "sentence-embedding model id",
            })
            .option("batch", {
              type: "number",
              default: 64,
              describe: "documents per encoding batch",
            }),
        async (argv) => {
          await runExport(argv as any);
        },
      )
      .strict()
      .demandCommand(1)
      .fail((msg, err) => {
        throw err ?? new Error(msg);
      })
      .parseAsync();
    return 0;
  } catch (err) {
    console.error(`embed-export: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === pathToFileURL(process.argv[1]).href;

if (invokedDirectly) {
  main(hideBin(process.argv)).then((code) => {
    process.exitCode = code;
  });
}
