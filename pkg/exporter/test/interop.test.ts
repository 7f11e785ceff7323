import { spawnSync } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { StubEncoder } from "../src/encoders.js";
import { runExport, type ExportJob } from "../src/export.js";

function pythonEngineAvailable(): boolean {
  const probe = spawnSync("python3", ["-c", "import cascade_search"], {
    encoding: "utf-8",
  });
  return probe.status === 0;
}

describe("engine interop", () => {
  it.skipIf(!pythonEngineAvailable())(
    "exported matrices load through the engine's reader",
    async () => {
      const dir = mkdtempSync(join(tmpdir(), "interop-"));
      writeFileSync(
        join(dir, "captions.json"),
        JSON.stringify({
          images: [
            { id: 7, file_name: "x.jpg" },
            { id: 9, file_name: "y.jpg" },
          ],
          annotations: [
            { id: 70, image_id: 7, caption: "seven" },
            { id: 90, image_id: 9, caption: "nine" },
          ],
        }),
      );
      const job: ExportJob = {
        dataset: "coco",
        annotationFile: join(dir, "captions.json"),
        imageRoot: dir,
        variant: "B/32",
        imageMatrixPath: join(dir, "images.csc"),
        textMatrixPath: join(dir, "texts.csc"),
        truthTsvPath: join(dir, "truth.tsv"),
        captionMode: "all",
      };
      await runExport(job, new StubEncoder("B/32"));

      const script = `
import json
from cascade_search import read_matrix
from cascade_search.evaluation import GroundTruthPairs

images = read_matrix(${JSON.stringify(job.imageMatrixPath)})
texts = read_matrix(${JSON.stringify(job.textMatrixPath)})
images.validate(); texts.validate()
truth = GroundTruthPairs.from_tsv(
    ${JSON.stringify(job.truthTsvPath)},
    frozenset(int(d) for d in images.doc_ids),
)
print(json.dumps({
    "image_ids": [int(i) for i in images.doc_ids],
    "text_ids": [int(i) for i in texts.doc_ids],
    "dim": images.dim,
    "pairs": len(truth.pairs),
}))
`;
      const result = spawnSync("python3", ["-c", script], { encoding: "utf-8" });
      expect(result.status, result.stderr).toBe(0);
      const parsed = JSON.parse(result.stdout);
      expect(parsed.image_ids).toEqual([7, 9]);
      expect(parsed.text_ids).toEqual([70, 90]);
      expect(parsed.dim).toBe(512);
      expect(parsed.pairs).toBe(2);
    },
  );
});
