import { mkdtempSync, writeFileSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import {
  FormatError,
  encodeMatrix,
  l2Normalize,
  readMatrixFile,
  writeMatrixFile,
  type Matrix,
} from "../src/format.js";

function tmp(): string {
  return mkdtempSync(join(tmpdir(), "fmt-"));
}

function sampleMatrix(count = 3, dim = 5, levelId = 0): Matrix {
  const docIds = new BigUint64Array(count);
  const vectors = new Float32Array(count * dim);
  for (let i = 0; i < count; i++) {
    docIds[i] = BigInt(i * 7 + 1);
    const row = new Float64Array(dim);
    for (let j = 0; j < dim; j++) row[j] = Math.sin(i * dim + j + 1);
    vectors.set(l2Normalize(row), i * dim);
  }
  return { levelId, dim, docIds, vectors };
}

describe("matrix encoding", () => {
  it("produces the frozen golden bytes for a known one-row matrix", () => {
    // independently computed with the engine's (Python) writer:
    // level 0, dim 2, id 7, row [1.0, 0.0]
    const golden =
      "435343310100000002000000010000000000000007000000000000000000803f00000000e00ca6aa";
    const matrix: Matrix = {
      levelId: 0,
      dim: 2,
      docIds: BigUint64Array.from([7n]),
      vectors: Float32Array.from([1, 0]),
    };
    expect(encodeMatrix(matrix).toString("hex")).toBe(golden);
  });

  it("round-trips through a file", () => {
    const dir = tmp();
    const matrix = sampleMatrix();
    writeMatrixFile(join(dir, "m.csc"), matrix);
    const back = readMatrixFile(join(dir, "m.csc"));
    expect(back.levelId).toBe(matrix.levelId);
    expect(back.dim).toBe(matrix.dim);
    expect([...back.docIds]).toEqual([...matrix.docIds]);
    expect([...back.vectors]).toEqual([...matrix.vectors]);
  });

  it("handles an empty matrix", () => {
    const dir = tmp();
    const matrix: Matrix = {
      levelId: 2,
      dim: 8,
      docIds: new BigUint64Array(0),
      vectors: new Float32Array(0),
    };
    writeMatrixFile(join(dir, "m.csc"), matrix);
    const back = readMatrixFile(join(dir, "m.csc"));
    expect(back.docIds.length).toBe(0);
    expect(back.dim).toBe(8);
  });

  it("rejects unnormalized rows", () => {
    const matrix: Matrix = {
      levelId: 0,
      dim: 2,
      docIds: BigUint64Array.from([1n]),
      vectors: Float32Array.from([0.5, 0]),
    };
    expect(() => encodeMatrix(matrix)).toThrow(/unnormalized row 0/);
  });

  it("rejects duplicate ids", () => {
    const matrix: Matrix = {
      levelId: 0,
      dim: 2,
      docIds: BigUint64Array.from([5n, 5n]),
      vectors: Float32Array.from([1, 0, 0, 1]),
    };
    expect(() => encodeMatrix(matrix)).toThrow(/duplicate doc id/);
  });

  it("detects corrupted magic", () => {
    const dir = tmp();
    const path = join(dir, "m.csc");
    writeMatrixFile(path, sampleMatrix());
    const raw = readFileSync(path);
    raw.write("NOPE", 0, "ascii");
    writeFileSync(path, raw);
    expect(() => readMatrixFile(path)).toThrow(/bad magic/);
  });

  it("detects truncation with expected vs actual sizes", () => {
    const dir = tmp();
    const path = join(dir, "m.csc");
    writeMatrixFile(path, sampleMatrix());
    const raw = readFileSync(path);
    writeFileSync(path, raw.subarray(0, raw.length - 6));
    expect(() => readMatrixFile(path)).toThrow(/expected \d+ bytes/);
  });

  it("detects payload corruption via the checksum", () => {
    const dir = tmp();
    const path = join(dir, "m.csc");
    writeMatrixFile(path, sampleMatrix());
    const raw = readFileSync(path);
    raw[25] ^= 0xff;
    writeFileSync(path, raw);
    expect(() => readMatrixFile(path)).toThrow(/checksum/);
  });
});

describe("l2Normalize", () => {
  it("produces unit vectors", () => {
    const out = l2Normalize([3, 4]);
    expect(out[0]).toBeCloseTo(0.6, 6);
    expect(out[1]).toBeCloseTo(0.8, 6);
  });

  it("rejects zero vectors", () => {
    expect(() => l2Normalize([0, 0, 0])).toThrow(FormatError);
  });
});
