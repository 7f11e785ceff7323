/**
 * Encoder variants and implementations.
 *
 * The real path runs pretrained vision-language checkpoints through
 * transformers.js (install `@xenova/transformers` and let it fetch the
 * weights). The stub path produces deterministic pseudo-embeddings from
 * the input key alone: it exercises every byte of the export pipeline
 * without model weights, which is also what the tests use.
 */

import { l2Normalize } from "./format.js";

export interface VariantSpec {
  /** Output embedding dimension of the checkpoint. */
  dim: number;
  /** transformers.js model id. */
  model: string;
}

export const VARIANTS: Record<string, VariantSpec> = {
  "B/32": { dim: 512, model: "Xenova/clip-vit-base-patch32" },
  "B/16": { dim: 512, model: "Xenova/clip-vit-base-patch16" },
  "L/14": { dim: 768, model: "Xenova/clip-vit-large-patch14" },
};

export function variantSpec(variant: string): VariantSpec {
  const spec = VARIANTS[variant];
  if (!spec) {
    throw new Error(
      `unknown variant ${variant}; expected one of ${Object.keys(VARIANTS).join(", ")}`,
    );
  }
  return spec;
}

export interface Encoder {
  readonly variant: string;
  readonly dim: number;
  encodeImage(filePath: string): Promise<Float32Array>;
  encodeText(text: string): Promise<Float32Array>;
}

/** FNV-1a over the key, then a 64-bit LCG stream of uniforms in [-1, 1]. */
function pseudoVector(key: string, dim: number): Float32Array {
  let hash = 0xcbf29ce484222325n;
  for (let i = 0; i < key.length; i++) {
    hash ^= BigInt(key.charCodeAt(i));
    hash = (hash * 0x100000001b3n) & 0xffffffffffffffffn;
  }
  const out = new Float64Array(dim);
  let state = hash;
  for (let i = 0; i < dim; i++) {
    state = (state * 6364136223846793005n + 1442695040888963407n) & 0xffffffffffffffffn;
    out[i] = Number(state >> 11n) / Number(1n << 53n) * 2 - 1;
  }
  return l2Normalize(out);
}

export class StubEncoder implements Encoder {
  readonly variant: string;
  readonly dim: number;
  /** Artificial per-call delay in ms; lets calibration tests shape timings. */
  private readonly delayMs: number;

  constructor(variant: string, delayMs = 0) {
    this.variant = variant;
    this.dim = variantSpec(variant).dim;
    this.delayMs = delayMs;
  }

  private async spin(): Promise<void> {
    if (this.delayMs <= 0) return;
    const until = performance.now() + this.delayMs;
    while (performance.now() < until) {
      // busy-wait: calibration measures CPU cost, not timer resolution
    }
  }

  async encodeImage(filePath: string): Promise<Float32Array> {
    await this.spin();
    return pseudoVector(`${this.variant}|image|${filePath}`, this.dim);
  }

  async encodeText(text: string): Promise<Float32Array> {
    await this.spin();
    return pseudoVector(`${this.variant}|text|${text}`, this.dim);
  }
}

interface TransformersModules {
  AutoProcessor: any;
  AutoTokenizer: any;
  CLIPTextModelWithProjection: any;
  CLIPVisionModelWithProjection: any;
  RawImage: any;
}

/** Vision-language encoder backed by transformers.js checkpoints. */
export class TransformersEncoder implements Encoder {
  readonly variant: string;
  readonly dim: number;

  private constructor(
    variant: string,
    private readonly processor: any,
    private readonly tokenizer: any,
    private readonly visionModel: any,
    private readonly textModel: any,
    private readonly rawImage: any,
  ) {
    this.variant = variant;
    this.dim = variantSpec(variant).dim;
  }

  static async load(variant: string, quantized = false): Promise<TransformersEncoder> {
    const spec = variantSpec(variant);
    let mods: TransformersModules;
    try {
      mods = (await import("@xenova/transformers" as string)) as TransformersModules;
    } catch {
      throw new Error(
        "@xenova/transformers is not installed; run `npm install @xenova/transformers` " +
          "(weights download on first use) or use --stub for the deterministic stub",
      );
    }
    const processor = await mods.AutoProcessor.from_pretrained(spec.model);
    const tokenizer = await mods.AutoTokenizer.from_pretrained(spec.model);
    const visionModel = await mods.CLIPVisionModelWithProjection.from_pretrained(
      spec.model,
      { quantized },
    );
    const textModel = await mods.CLIPTextModelWithProjection.from_pretrained(
      spec.model,
      { quantized },
    );
    return new TransformersEncoder(
      variant, processor, tokenizer, visionModel, textModel, mods.RawImage,
    );
  }

  async encodeImage(filePath: string): Promise<Float32Array> {
    const image = await this.rawImage.read(filePath);
    const inputs = await this.processor(image);
    const { image_embeds } = await this.visionModel(inputs);
    return l2Normalize(image_embeds.data as Float32Array);
  }

  async encodeText(text: string): Promise<Float32Array> {
    const inputs = this.tokenizer([text], { padding: true, truncation: true });
    const { text_embeds } = await this.textModel(inputs);
    return l2Normalize(text_embeds.data as Float32Array);
  }
}

export async function loadEncoder(variant: string, stub: boolean): Promise<Encoder> {
  return stub ? new StubEncoder(variant) : TransformersEncoder.load(variant);
}
