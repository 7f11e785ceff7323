/**
 * Wall-clock calibration of per-image encoding cost across variants.
 *
 * Median per-image time over repetitions, normalized so the first
 * variant costs 1.0; the JSON output plugs directly into the engine
 * config's tier cost fields. High spread between repetitions is
 * reported so noisy environments are visible.
 */

import type { Encoder } from "./encoders.js";

export interface CalibrationResult {
  /** variant -> cost unit, first variant = 1.0 */
  units: Record<string, number>;
  /** variant -> (max - min) / median over repetitions */
  spreads: Record<string, number>;
  warnings: string[];
}

function median(values: number[]): number {
  const sorted = [...values].sort((a, b) => a - b);
  const mid = Math.floor(sorted.length / 2);
  return sorted.length % 2 ? sorted[mid] : (sorted[mid - 1] + sorted[mid]) / 2;
}

export async function calibrateCosts(
  encoders: Encoder[],
  samplePaths: string[],
  repetitions = 3,
  spreadThreshold = 0.5,
): Promise<CalibrationResult> {
  if (encoders.length === 0) throw new Error("at least one encoder required");
  if (samplePaths.length === 0) throw new Error("at least one sample image required");

  const medians: number[] = [];
  const spreads: Record<string, number> = {};
  const warnings: string[] = [];
  for (const encoder of encoders) {
    const perRep: number[] = [];
    for (let rep = 0; rep < Math.max(1, repetitions); rep++) {
      const start = performance.now();
      for (const path of samplePaths) {
        await encoder.encodeImage(path);
      }
      perRep.push((performance.now() - start) / samplePaths.length);
    }
    const med = median(perRep);
    if (!(med > 0)) {
      throw new Error(
        `variant ${encoder.variant} timed at 0 ms/image; use more samples`,
      );
    }
    const spread = (Math.max(...perRep) - Math.min(...perRep)) / med;
    spreads[encoder.variant] = spread;
    if (spread > spreadThreshold) {
      warnings.push(
        `variant ${encoder.variant}: timing spread ${(spread * 100).toFixed(0)}% ` +
          `exceeds ${(spreadThreshold * 100).toFixed(0)}%; rerun on a quiet machine`,
      );
    }
    medians.push(med);
  }
  const base = medians[0];
  const units: Record<string, number> = {};
  encoders.forEach((encoder, i) => {
    units[encoder.variant] = medians[i] / base;
  });
  return { units, spreads, warnings };
}
