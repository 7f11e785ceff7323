"""On-disk and in-memory storage for dense embeddings.

Two storage shapes exist: full matrices for levels that are encoded in
bulk at build time, and sparse append-only logs for levels that fill
lazily, one document at a time, as queries touch them.

Matrix file layout (all integers little-endian):

    magic "CSC1" | version u16 | level_id u16 | dim u32 | count u64 |
    count x u64 doc ids | count x dim float32 rows (row-major) |
    CRC32 u32 over everything between the magic and the checksum

Cache log layout:

    magic "CSL1" | version u16 | level_id u16 | dim u32 |
    repeated records (u64 doc id | dim x float32)

Vectors are stored pre-normalized (unit L2 norm within ``NORM_TOL``) so
that cosine similarity downstream reduces to a plain dot product.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import threading
import zlib
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import (
    CorruptLogError,
    FormatError,
    StorageError,
    UnknownDocError,
    ValidationError,
)

MATRIX_MAGIC = b"CSC1"
LOG_MAGIC = b"CSL1"
FORMAT_VERSION = 1
NORM_TOL = 1e-4

_ID_DTYPE = np.dtype("<u8")
_VEC_DTYPE = np.dtype("<f4")
_MATRIX_HEADER = struct.Struct("<HHIQ")  # version, level_id, dim, count
_LOG_HEADER = struct.Struct("<HHI")  # version, level_id, dim


def _check_unit_rows(vectors: np.ndarray, what: str) -> None:
    if vectors.size == 0:
        return
    norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
    # negated <= so NaN norms register as bad rows
    bad = np.nonzero(~(np.abs(norms - 1.0) <= NORM_TOL))[0]
    if bad.size:
        row = int(bad[0])
        raise ValidationError(f"unnormalized row {row} in {what}: norm={norms[row]:.6g}")


def _as_unit_vector(vector: np.ndarray, dim: int, what: str) -> np.ndarray:
    arr = np.array(vector, dtype=_VEC_DTYPE, copy=True, order="C")
    if arr.shape != (dim,):
        raise ValidationError(f"{what}: expected shape ({dim},), got {arr.shape}")
    norm = float(np.linalg.norm(arr.astype(np.float64)))
    if not abs(norm - 1.0) <= NORM_TOL:
        raise ValidationError(f"{what}: vector not unit-norm (norm={norm:.6g})")
    return arr


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """Fixed-dimension unit-norm vectors keyed by 64-bit document id."""

    level_id: int
    dim: int
    doc_ids: np.ndarray  # (count,) uint64
    vectors: np.ndarray  # (count, dim) float32, row-major

    @classmethod
    def from_rows(
        cls,
        level_id: int,
        doc_ids: Iterable[int] | np.ndarray,
        vectors: np.ndarray,
    ) -> "EmbeddingMatrix":
        """Build a matrix from raw arrays, coercing dtypes and validating."""
        ids = np.ascontiguousarray(doc_ids, dtype=_ID_DTYPE)
        vecs = np.ascontiguousarray(vectors, dtype=_VEC_DTYPE)
        if vecs.ndim != 2:
            raise ValidationError(f"vectors must be 2-D, got ndim={vecs.ndim}")
        matrix = cls(level_id=level_id, dim=int(vecs.shape[1]), doc_ids=ids, vectors=vecs)
        matrix.validate()
        return matrix

    @property
    def count(self) -> int:
        return int(self.doc_ids.shape[0])

    @cached_property
    def _index(self) -> dict[int, int]:
        return {int(doc_id): i for i, doc_id in enumerate(self.doc_ids)}

    def validate(self) -> None:
        if self.dim <= 0:
            raise ValidationError(f"dim must be positive, got {self.dim}")
        if self.vectors.shape != (self.count, self.dim):
            raise ValidationError(
                f"vectors shape {self.vectors.shape} disagrees with "
                f"count={self.count}, dim={self.dim}"
            )
        if len(self._index) != self.count:
            raise ValidationError("doc_ids contain duplicates")
        _check_unit_rows(self.vectors, f"level-{self.level_id} matrix")

    def __contains__(self, doc_id: int) -> bool:
        return int(doc_id) in self._index

    def row(self, doc_id: int) -> np.ndarray:
        try:
            return self.vectors[self._index[int(doc_id)]]
        except KeyError:
            raise UnknownDocError(
                f"doc id {int(doc_id)} not in level-{self.level_id} matrix"
            ) from None


def write_matrix(matrix: EmbeddingMatrix, destination: str | Path) -> None:
    """Persist a matrix; ``read_matrix`` round-trips it bit-exactly."""
    matrix.validate()
    header = _MATRIX_HEADER.pack(
        FORMAT_VERSION, matrix.level_id, matrix.dim, matrix.count
    )
    ids = np.ascontiguousarray(matrix.doc_ids, dtype=_ID_DTYPE)
    vecs = np.ascontiguousarray(matrix.vectors, dtype=_VEC_DTYPE)
    payload = header + ids.tobytes() + vecs.tobytes()
    crc = zlib.crc32(payload) & 0xFFFFFFFF

    destination = Path(destination)
    tmp = destination.with_name(destination.name + ".tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(MATRIX_MAGIC)
            fh.write(payload)
            fh.write(struct.pack("<I", crc))
        os.replace(tmp, destination)
    except OSError as exc:
        tmp.unlink(missing_ok=True)
        raise StorageError(f"failed to write matrix to {destination}: {exc}") from exc


def read_matrix(source: str | Path) -> EmbeddingMatrix:
    """Load a matrix file, verifying magic, sizes, checksum and invariants."""
    source = Path(source)
    try:
        raw = source.read_bytes()
    except OSError as exc:
        raise StorageError(f"cannot read matrix file {source}: {exc}") from exc

    if len(raw) < len(MATRIX_MAGIC) or raw[:4] != MATRIX_MAGIC:
        raise FormatError(f"{source}: bad magic, not a matrix file")
    if len(raw) < 4 + _MATRIX_HEADER.size + 4:
        raise FormatError(f"{source}: truncated header")
    version, level_id, dim, count = _MATRIX_HEADER.unpack_from(raw, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"{source}: unsupported version {version}")

    expected = 4 + _MATRIX_HEADER.size + count * 8 + count * dim * 4 + 4
    if len(raw) != expected:
        raise FormatError(
            f"{source}: truncated or oversized file, expected {expected} bytes "
            f"for count={count} dim={dim}, got {len(raw)}"
        )

    payload = raw[4:-4]
    (stored_crc,) = struct.unpack_from("<I", raw, len(raw) - 4)
    if zlib.crc32(payload) & 0xFFFFFFFF != stored_crc:
        raise FormatError(f"{source}: checksum mismatch")

    offset = 4 + _MATRIX_HEADER.size
    ids = np.frombuffer(raw, dtype=_ID_DTYPE, count=count, offset=offset).copy()
    offset += count * 8
    vecs = (
        np.frombuffer(raw, dtype=_VEC_DTYPE, count=count * dim, offset=offset)
        .reshape(count, dim)
        .copy()
    )
    matrix = EmbeddingMatrix(level_id=level_id, dim=dim, doc_ids=ids, vectors=vecs)
    try:
        matrix.validate()
    except ValidationError as exc:
        raise FormatError(f"{source}: invalid content: {exc}") from exc
    return matrix


class SparseLevelCache:
    """Lazily-filled map from doc id to unit-norm vector for one level.

    get_or_insert is atomic per id. Two racing producers for the same id
    may both run, but exactly one result is stored and both callers see
    the stored value.
    """

    def __init__(self, level_id: int, dim: int):
        if dim <= 0:
            raise ValidationError(f"dim must be positive, got {dim}")
        self.level_id = int(level_id)
        self.dim = int(dim)
        self._entries: dict[int, np.ndarray] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, doc_id: int) -> bool:
        return int(doc_id) in self._entries

    def get(self, doc_id: int) -> np.ndarray | None:
        return self._entries.get(int(doc_id))

    def ids(self) -> frozenset[int]:
        with self._lock:
            return frozenset(self._entries)

    def get_or_insert(
        self, doc_id: int, producer: Callable[[], np.ndarray]
    ) -> tuple[np.ndarray, bool]:
        """Return the stored vector, producing and storing it on first use.

        Returns (vector, was_inserted). The producer runs outside the lock,
        so duplicate work is possible under contention, but at most one
        result is ever stored.
        """
        doc_id = int(doc_id)
        with self._lock:
            existing = self._entries.get(doc_id)
        if existing is not None:
            return existing, False
        produced = _as_unit_vector(
            producer(), self.dim, f"producer output for doc {doc_id}"
        )
        produced.setflags(write=False)
        with self._lock:
            racer = self._entries.get(doc_id)
            if racer is not None:
                return racer, False
            self._entries[doc_id] = produced
            return produced, True

    def insert(self, doc_id: int, vector: np.ndarray) -> bool:
        """Insert directly; idempotent for bit-identical duplicates.

        Returns True if the entry is new. A duplicate id with a different
        vector raises CorruptLogError (the invariant the replay path needs).
        """
        doc_id = int(doc_id)
        arr = _as_unit_vector(vector, self.dim, f"vector for doc {doc_id}")
        with self._lock:
            existing = self._entries.get(doc_id)
            if existing is not None:
                if np.array_equal(
                    existing.view(np.uint32), arr.view(np.uint32)
                ):
                    return False
                raise CorruptLogError(
                    f"doc id {doc_id} already cached at level {self.level_id} "
                    "with a different vector"
                )
            arr.setflags(write=False)
            self._entries[doc_id] = arr
            return True


class CacheLog:
    """Append-only persistence for a SparseLevelCache.

    The log survives restarts; replaying it reconstructs exactly the
    entries appended, regardless of order, and tolerates bit-identical
    duplicate records.
    """

    def __init__(self, path: str | Path, level_id: int, dim: int):
        self.path = Path(path)
        self.level_id = int(level_id)
        self.dim = int(dim)

    @classmethod
    def create(cls, path: str | Path, level_id: int, dim: int) -> "CacheLog":
        """Write a fresh header, truncating any existing file."""
        log = cls(path, level_id, dim)
        try:
            with open(log.path, "wb") as fh:
                fh.write(LOG_MAGIC)
                fh.write(_LOG_HEADER.pack(FORMAT_VERSION, log.level_id, log.dim))
        except OSError as exc:
            raise StorageError(f"cannot create cache log {path}: {exc}") from exc
        return log

    @classmethod
    def open(cls, path: str | Path) -> "CacheLog":
        path = Path(path)
        try:
            with open(path, "rb") as fh:
                magic = fh.read(4)
                header = fh.read(_LOG_HEADER.size)
        except OSError as exc:
            raise StorageError(f"cannot open cache log {path}: {exc}") from exc
        if magic != LOG_MAGIC:
            raise FormatError(f"{path}: bad magic, not a cache log")
        if len(header) < _LOG_HEADER.size:
            raise FormatError(f"{path}: truncated header")
        version, level_id, dim = _LOG_HEADER.unpack(header)
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        return cls(path, level_id, dim)

    def append(self, doc_id: int, vector: np.ndarray) -> None:
        self.append_many([(doc_id, vector)])

    def append_many(self, records: Iterable[tuple[int, np.ndarray]]) -> None:
        """Append several records with one write; empty input is a no-op."""
        chunks = []
        for doc_id, vector in records:
            arr = _as_unit_vector(vector, self.dim, f"log record for doc {doc_id}")
            chunks.append(struct.pack("<Q", int(doc_id)) + arr.tobytes())
        if not chunks:
            return
        try:
            with open(self.path, "ab") as fh:
                fh.write(b"".join(chunks))
        except OSError as exc:
            raise StorageError(f"cannot append to cache log {self.path}: {exc}") from exc

    def replay(self) -> SparseLevelCache:
        """Rebuild the cache from the log; deterministic and idempotent."""
        record_size = 8 + self.dim * 4
        try:
            raw = self.path.read_bytes()
        except OSError as exc:
            raise StorageError(f"cannot read cache log {self.path}: {exc}") from exc
        body = raw[4 + _LOG_HEADER.size :]
        if len(body) % record_size:
            raise FormatError(
                f"{self.path}: truncated record, {len(body)} bytes is not a "
                f"multiple of record size {record_size}"
            )
        cache = SparseLevelCache(self.level_id, self.dim)
        for off in range(0, len(body), record_size):
            (doc_id,) = struct.unpack_from("<Q", body, off)
            vec = np.frombuffer(
                body, dtype=_VEC_DTYPE, count=self.dim, offset=off + 8
            ).copy()
            cache.insert(doc_id, vec)
        return cache


def collection_fingerprint(doc_ids: Iterable[int] | np.ndarray) -> str:
    """Hash of the document-id list; guards caches against collection mixups."""
    ids = np.ascontiguousarray(doc_ids, dtype=_ID_DTYPE)
    return hashlib.sha256(ids.tobytes()).hexdigest()


@dataclass(frozen=True)
class LevelInfo:
    level_id: int
    kind: str  # "full" | "sparse"
    dim: int
    path: str  # relative to the state directory


@dataclass(frozen=True)
class StoreManifest:
    """Describes one engine state directory: its levels and collection."""

    n: int
    levels: tuple[LevelInfo, ...]
    fingerprint: str

    def validate(self) -> None:
        if self.n < 0:
            raise ValidationError("n must be non-negative")
        level_ids = [lv.level_id for lv in self.levels]
        if any(b <= a for a, b in zip(level_ids, level_ids[1:])):
            raise ValidationError(f"level ids not strictly increasing: {level_ids}")
        if not self.levels or self.levels[0].level_id != 0 or self.levels[0].kind != "full":
            raise ValidationError("manifest must start with a full level 0")
        for lv in self.levels[1:]:
            if lv.kind != "sparse":
                raise ValidationError(f"level {lv.level_id} must be sparse, got {lv.kind!r}")

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "levels": [
                {"level_id": lv.level_id, "kind": lv.kind, "dim": lv.dim, "path": lv.path}
                for lv in self.levels
            ],
            "fingerprint": self.fingerprint,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "StoreManifest":
        try:
            levels = tuple(
                LevelInfo(
                    level_id=int(lv["level_id"]),
                    kind=str(lv["kind"]),
                    dim=int(lv["dim"]),
                    path=str(lv["path"]),
                )
                for lv in data["levels"]
            )
            manifest = cls(n=int(data["n"]), levels=levels, fingerprint=str(data["fingerprint"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed manifest: {exc}") from exc
        manifest.validate()
        return manifest

    def save(self, path: str | Path) -> None:
        self.validate()
        try:
            Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")
        except OSError as exc:
            raise StorageError(f"cannot write manifest {path}: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "StoreManifest":
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise StorageError(f"cannot read manifest {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not valid JSON: {exc}") from exc
        return cls.from_json(data)
