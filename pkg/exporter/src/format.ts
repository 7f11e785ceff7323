/**
 * Binary matrix file writer/reader compatible with the cascade-search
 * engine's embedding store.
 *
 * Layout (little-endian): magic "CSC1" | version u16 | level_id u16 |
 * dim u32 | count u64 | count x u64 doc ids | count x dim float32 rows |
 * CRC32 (zlib) over everything between the magic and the checksum.
 *
 * Rows are stored pre-normalized; readers reject rows whose L2 norm is
 * further than NORM_TOL from 1.
 */

import { crc32 } from "node:zlib";
import { readFileSync, writeFileSync, renameSync } from "node:fs";

export const MATRIX_MAGIC = "CSC1";
export const FORMAT_VERSION = 1;
export const NORM_TOL = 1e-4;

const HEADER_SIZE = 4 + 2 + 2 + 4 + 8;

export interface Matrix {
  levelId: number;
  dim: number;
  docIds: BigUint64Array;
  /** count x dim, row-major */
  vectors: Float32Array;
}

export class FormatError extends Error {}

/** Normalize into float32 so the stored row has unit norm within NORM_TOL. */
export function l2Normalize(vector: ArrayLike<number>): Float32Array {
  let sumSquares = 0;
  for (let i = 0; i < vector.length; i++) sumSquares += vector[i] * vector[i];
  const norm = Math.sqrt(sumSquares);
  if (!(norm > 0)) throw new FormatError("cannot normalize a zero vector");
  const out = new Float32Array(vector.length);
  for (let i = 0; i < vector.length; i++) out[i] = vector[i] / norm;
  return out;
}

function checkRows(matrix: Matrix): void {
  const { dim, docIds, vectors } = matrix;
  const count = docIds.length;
  if (vectors.length !== count * dim) {
    throw new FormatError(
      `vectors length ${vectors.length} disagrees with count=${count} dim=${dim}`,
    );
  }
  const seen = new Set<bigint>();
  for (const id of docIds) {
    if (seen.has(id)) throw new FormatError(`duplicate doc id ${id}`);
    seen.add(id);
  }
  for (let row = 0; row < count; row++) {
    let sumSquares = 0;
    for (let i = row * dim; i < (row + 1) * dim; i++) {
      sumSquares += vectors[i] * vectors[i];
    }
    const norm = Math.sqrt(sumSquares);
    if (!(Math.abs(norm - 1) <= NORM_TOL)) {
      throw new FormatError(`unnormalized row ${row}: norm=${norm}`);
    }
  }
}

export function encodeMatrix(matrix: Matrix): Buffer {
  checkRows(matrix);
  const count = matrix.docIds.length;
  const total = HEADER_SIZE + count * 8 + count * matrix.dim * 4 + 4;
  const buf = Buffer.alloc(total);
  buf.write(MATRIX_MAGIC, 0, "ascii");
  buf.writeUInt16LE(FORMAT_VERSION, 4);
  buf.writeUInt16LE(matrix.levelId, 6);
  buf.writeUInt32LE(matrix.dim, 8);
  buf.writeBigUInt64LE(BigInt(count), 12);
  let offset = HEADER_SIZE;
  for (const id of matrix.docIds) {
    buf.writeBigUInt64LE(id, offset);
    offset += 8;
  }
  for (const value of matrix.vectors) {
    buf.writeFloatLE(value, offset);
    offset += 4;
  }
  const payload = buf.subarray(4, total - 4);
  buf.writeUInt32LE(crc32(payload) >>> 0, total - 4);
  return buf;
}

export function writeMatrixFile(path: string, matrix: Matrix): void {
  const tmp = `${path}.tmp`;
  writeFileSync(tmp, encodeMatrix(matrix));
  renameSync(tmp, path);
}

/** Parse and fully validate a matrix file (sizes, checksum, invariants). */
export function readMatrixFile(path: string): Matrix {
  const raw = readFileSync(path);
  if (raw.length < 4 || raw.toString("ascii", 0, 4) !== MATRIX_MAGIC) {
    throw new FormatError(`${path}: bad magic, not a matrix file`);
  }
  if (raw.length < HEADER_SIZE + 4) {
    throw new FormatError(`${path}: truncated header`);
  }
  const version = raw.readUInt16LE(4);
  if (version !== FORMAT_VERSION) {
    throw new FormatError(`${path}: unsupported version ${version}`);
  }
  const levelId = raw.readUInt16LE(6);
  const dim = raw.readUInt32LE(8);
  const count = Number(raw.readBigUInt64LE(12));
  const expected = HEADER_SIZE + count * 8 + count * dim * 4 + 4;
  if (raw.length !== expected) {
    throw new FormatError(
      `${path}: expected ${expected} bytes for count=${count} dim=${dim}, got ${raw.length}`,
    );
  }
  const stored = raw.readUInt32LE(raw.length - 4);
  const actual = crc32(raw.subarray(4, raw.length - 4)) >>> 0;
  if (stored !== actual) throw new FormatError(`${path}: checksum mismatch`);

  const docIds = new BigUint64Array(count);
  let offset = HEADER_SIZE;
  for (let i = 0; i < count; i++) {
    docIds[i] = raw.readBigUInt64LE(offset);
    offset += 8;
  }
  const vectors = new Float32Array(count * dim);
  for (let i = 0; i < vectors.length; i++) {
    vectors[i] = raw.readFloatLE(offset);
    offset += 4;
  }
  const matrix = { levelId, dim, docIds, vectors };
  checkRows(matrix);
  return matrix;
}
