#!/usr/bin/env node
/**
 * Command-line entry: export datasets into engine matrix files and
 * calibrate per-variant encoding costs.
 *
 *   cascade-export export --dataset coco --annotations captions.json \
 *     --images ./val2017 --variant B/32 --out-dir exports/b32
 *   cascade-export calibrate --variants B/32,B/16,L/14 \
 *     --images img1.jpg,img2.jpg --out costs.json
 *
 * --stub swaps in the deterministic pseudo-encoder (no model weights);
 * useful for validating the pipeline and file formats.
 */

import { writeFileSync, mkdirSync, realpathSync } from "node:fs";
import { join } from "node:path";
import process from "node:process";
import { fileURLToPath } from "node:url";

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { calibrateCosts } from "./calibrate.js";
import { loadEncoder, type Encoder } from "./encoders.js";
import { runExport, type ExportJob } from "./export.js";

async function cmdExport(args: any): Promise<void> {
  const outDir: string = args.outDir;
  mkdirSync(outDir, { recursive: true });
  const job: ExportJob = {
    dataset: args.dataset,
    annotationFile: args.annotations,
    imageRoot: args.images,
    variant: args.variant,
    imageMatrixPath: join(outDir, "images.csc"),
    textMatrixPath: join(outDir, "texts.csc"),
    truthTsvPath: join(outDir, "truth.tsv"),
    metadataPath: join(outDir, "metadata.json"),
    captionMode: args.captions,
    splitFile: args.splitFile,
    maxImages: args.maxImages,
  };
  const encoder = await loadEncoder(args.variant, args.stub);
  const summary = await runExport(job, encoder);
  process.stdout.write(JSON.stringify({ ...summary, out_dir: outDir }) + "\n");
}

async function cmdCalibrate(args: any): Promise<void> {
  const variants: string[] = String(args.variants).split(",").map((v) => v.trim());
  const samples: string[] = String(args.images).split(",").map((v) => v.trim());
  const encoders: Encoder[] = [];
  for (const variant of variants) {
    encoders.push(await loadEncoder(variant, args.stub));
  }
  const result = await calibrateCosts(encoders, samples, args.repetitions);
  for (const warning of result.warnings) {
    process.stderr.write(warning + "\n");
  }
  const payload = JSON.stringify({ units: result.units, spreads: result.spreads }, null, 2);
  if (args.out) {
    writeFileSync(args.out, payload + "\n");
  }
  process.stdout.write(payload + "\n");
}

export async function main(argv: string[]): Promise<number> {
  try {
    await yargs(argv)
      .scriptName("cascade-export")
      .command(
        "export",
        "encode a dataset into matrix files + ground-truth TSV",
        (y) =>
          y
            .option("dataset", { choices: ["coco", "flickr30k"] as const, demandOption: true })
            .option("annotations", { type: "string", demandOption: true })
            .option("images", { type: "string", demandOption: true, describe: "image root dir" })
            .option("variant", { type: "string", demandOption: true })
            .option("out-dir", { type: "string", demandOption: true })
            .option("captions", { choices: ["all", "first"] as const, default: "all" })
            .option("split-file", { type: "string", describe: "newline-separated file names to keep" })
            .option("max-images", { type: "number" })
            .option("stub", { type: "boolean", default: false }),
        cmdExport,
      )
      .command(
        "calibrate",
        "measure per-image encode time per variant, normalized to the first",
        (y) =>
          y
            .option("variants", { type: "string", demandOption: true, describe: "comma-separated" })
            .option("images", { type: "string", demandOption: true, describe: "comma-separated sample files" })
            .option("repetitions", { type: "number", default: 3 })
            .option("out", { type: "string" })
            .option("stub", { type: "boolean", default: false }),
        cmdCalibrate,
      )
      .demandCommand(1)
      .strict()
      .fail((msg, err) => {
        throw err ?? new Error(msg);
      })
      .parseAsync();
    return 0;
  } catch (err) {
    process.stderr.write(JSON.stringify({ error: String(err) }) + "\n");
    return 1;
  }
}

const invokedDirectly = (() => {
  if (!process.argv[1]) return false;
  try {
    return realpathSync(process.argv[1]) === fileURLToPath(import.meta.url);
  } catch {
    return false;
  }
})();
if (invokedDirectly) {
  main(hideBin(process.argv)).then((code) => {
    process.exitCode = code;
  });
}
