/**
 * Dataset export: encode every image and caption with one encoder
 * variant, writing the engine's matrix files plus the caption->image
 * ground-truth TSV and a metadata sidecar recording what was exported.
 */

import { writeFileSync, readFileSync } from "node:fs";
import { join } from "node:path";

import {
  applySplit,
  parseCocoCaptions,
  parseFlickrTokens,
  selectCaptions,
  type Dataset,
} from "./datasets.js";
import { writeMatrixFile, type Matrix } from "./format.js";
import type { Encoder } from "./encoders.js";

export interface ExportJob {
  dataset: "coco" | "flickr30k";
  annotationFile: string;
  /** Directory holding the image files; file names come from the annotations. */
  imageRoot: string;
  variant: string;
  imageMatrixPath: string;
  textMatrixPath: string;
  truthTsvPath: string;
  metadataPath?: string;
  captionMode: "all" | "first";
  /** Optional subset: newline-separated file names (split list). */
  splitFile?: string;
  maxImages?: number;
}

export interface ExportSummary {
  images: number;
  captions: number;
  dim: number;
}

export function loadDataset(job: ExportJob): Dataset {
  const text = readFileSync(job.annotationFile, "utf-8");
  const parsed =
    job.dataset === "coco" ? parseCocoCaptions(text) : parseFlickrTokens(text);
  let keep: Set<string> | undefined;
  if (job.splitFile) {
    keep = new Set(
      readFileSync(job.splitFile, "utf-8")
        .split("\n")
        .map((line) => line.trim())
        .filter(Boolean),
    );
  }
  const restricted = applySplit(parsed, keep, job.maxImages);
  return { images: restricted.images, captions: selectCaptions(restricted, job.captionMode) };
}

export async function exportImages(
  job: ExportJob,
  encoder: Encoder,
  dataset: Dataset,
): Promise<Matrix> {
  const count = dataset.images.length;
  const docIds = new BigUint64Array(count);
  const vectors = new Float32Array(count * encoder.dim);
  for (let i = 0; i < count; i++) {
    const image = dataset.images[i];
    docIds[i] = image.id;
    const vec = await encoder.encodeImage(join(job.imageRoot, image.fileName));
    if (vec.length !== encoder.dim) {
      throw new Error(
        `encoder returned dim ${vec.length} for ${image.fileName}, expected ${encoder.dim}`,
      );
    }
    vectors.set(vec, i * encoder.dim);
  }
  const matrix = { levelId: 0, dim: encoder.dim, docIds, vectors };
  writeMatrixFile(job.imageMatrixPath, matrix);
  return matrix;
}

export async function exportTexts(
  job: ExportJob,
  encoder: Encoder,
  dataset: Dataset,
): Promise<Matrix> {
  const count = dataset.captions.length;
  const docIds = new BigUint64Array(count);
  const vectors = new Float32Array(count * encoder.dim);
  const tsv: string[] = ["caption_key\tdoc_id"];
  for (let i = 0; i < count; i++) {
    const caption = dataset.captions[i];
    docIds[i] = caption.id;
    const vec = await encoder.encodeText(caption.text);
    vectors.set(vec, i * encoder.dim);
    tsv.push(`${caption.id}\t${caption.imageId}`);
  }
  const matrix = { levelId: 0, dim: encoder.dim, docIds, vectors };
  writeMatrixFile(job.textMatrixPath, matrix);
  writeFileSync(job.truthTsvPath, tsv.join("\n") + "\n");
  return matrix;
}

export async function runExport(job: ExportJob, encoder: Encoder): Promise<ExportSummary> {
  const dataset = loadDataset(job);
  await exportImages(job, encoder, dataset);
  await exportTexts(job, encoder, dataset);
  const summary = {
    images: dataset.images.length,
    captions: dataset.captions.length,
    dim: encoder.dim,
  };
  if (job.metadataPath) {
    writeFileSync(
      job.metadataPath,
      JSON.stringify(
        {
          dataset: job.dataset,
          variant: job.variant,
          caption_mode: job.captionMode,
          split_file: job.splitFile ?? null,
          max_images: job.maxImages ?? null,
          ...summary,
        },
        null,
        2,
      ) + "\n",
    );
  }
  return summary;
}
