"""Token-level embedding production, reduction, persistence, and caching.

Binary record format (shared with external embedding exporters), all
integers little-endian, lengths counting UTF-8 bytes:

    magic "NCLI" | version u8 = 1 | tokenizer_id (u32 len + bytes)
    | d u32 | s u32 | s x token (u32 len + bytes) | s*d float32 row-major

A cache directory holds one record per text hash (``<hash>.ncli``, with
``d`` = the reduced dimension) plus ``cache_meta.json`` pinning the
configuration the entries were computed under; opening a cache with a
different configuration is refused rather than silently mixing vectors.

Text hashing rule (shared with exporters): ``hash64(tokenizer_id, text)``
from :mod:`.rng`, rendered as 16 hex digits.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import hash64_hex, stream
from .tokenizer import TOKENIZER_ID, tokenize

FORMAT_MAGIC = b"NCLI"
FORMAT_VERSION = 1


class EmptyTextError(ValueError):
    """Text produced no tokens; callers must supply tokenizable text."""


class CacheMissError(KeyError):
    """An imported embedding file does not contain the requested hash."""


class CacheCorruptError(ValueError):
    """A cache file failed to parse; never silently recomputed."""


class CacheConfigError(ValueError):
    """Cache directory was produced under a different configuration."""


class ShapeError(ValueError):
    """Operands have incompatible dimensions."""


@dataclass(frozen=True, eq=False)
class RawTokenMatrix:
    """Pre-reduction token embeddings: one d-dimensional row per token."""

    text_hash: str
    tokens: tuple[str, ...]
    vectors: np.ndarray  # (s, d) float32

    @property
    def s(self) -> int:
        return len(self.tokens)

    @property
    def d(self) -> int:
        return int(self.vectors.shape[1])

    def truncated(self, max_tokens: int) -> "RawTokenMatrix":
        if max_tokens <= 0 or self.s <= max_tokens:
            return self
        return RawTokenMatrix(
            text_hash=self.text_hash,
            tokens=self.tokens[:max_tokens],
            vectors=np.ascontiguousarray(self.vectors[:max_tokens]),
        )


@dataclass(frozen=True, eq=False)
class TokenMatrix:
    """Reduced, row-wise unit-normalized token embeddings."""

    text_hash: str
    tokens: tuple[str, ...]
    vectors: np.ndarray  # (s, d0) float32, rows unit-norm within 1e-5

    @property
    def s(self) -> int:
        return len(self.tokens)

    @property
    def d0(self) -> int:
        return int(self.vectors.shape[1])

    def to_bytes(self, tokenizer_id: str) -> bytes:
        return encode_record(tokenizer_id, self.tokens, self.vectors)


def encode_record(tokenizer_id: str, tokens: tuple[str, ...], vectors: np.ndarray) -> bytes:
    """Serialize one token matrix to the binary record format."""
    if vectors.shape[0] != len(tokens):
        raise ShapeError(f"{len(tokens)} tokens but {vectors.shape[0]} vector rows")
    out = bytearray()
    out += FORMAT_MAGIC
    out += struct.pack("<B", FORMAT_VERSION)
    tid = tokenizer_id.encode("utf-8")
    out += struct.pack("<I", len(tid)) + tid
    s, d = vectors.shape
    out += struct.pack("<II", d, s)
    for token in tokens:
        tb = token.encode("utf-8")
        out += struct.pack("<I", len(tb)) + tb
    out += np.ascontiguousarray(vectors, dtype="<f4").tobytes()
    return bytes(out)


def decode_record(buf: bytes, offset: int = 0) -> tuple[str, tuple[str, ...], np.ndarray, int]:
    """Parse one record at ``offset``; returns (tokenizer_id, tokens,
    vectors, end_offset). Raises ValueError on any structural problem."""
    if buf[offset : offset + 4] != FORMAT_MAGIC:
        raise ValueError(f"bad magic at offset {offset}")
    pos = offset + 4
    (version,) = struct.unpack_from("<B", buf, pos)
    pos += 1
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported format version {version}")
    (tid_len,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    tokenizer_id = buf[pos : pos + tid_len].decode("utf-8")
    pos += tid_len
    d, s = struct.unpack_from("<II", buf, pos)
    pos += 8
    if s < 1 or d < 1:
        raise ValueError(f"degenerate record shape s={s} d={d}")
    tokens = []
    for _ in range(s):
        (tlen,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        tokens.append(buf[pos : pos + tlen].decode("utf-8"))
        pos += tlen
    n_bytes = s * d * 4
    if pos + n_bytes > len(buf):
        raise ValueError("truncated float payload")
    vectors = np.frombuffer(buf, dtype="<f4", count=s * d, offset=pos).reshape(s, d).copy()
    pos += n_bytes
    return tokenizer_id, tuple(tokens), vectors, pos


class HashedProvider:
    """Built-in offline provider: each distinct token maps to a seeded
    pseudorandom unit vector, a pure function of (token, seed, dim)."""

    def __init__(self, seed: int, dim: int):
        if dim < 4:
            raise ValueError(f"embedding dim must be >= 4, got {dim}")
        self.seed = seed
        self.dim = dim
        self.tokenizer_id = f"hashed-{TOKENIZER_ID}-d{dim}-s{seed}"

    def text_hash(self, text: str) -> str:
        return hash64_hex(self.tokenizer_id, text)

    def _token_vector(self, token: str) -> np.ndarray:
        # Generated on demand, never memoized: every invocation pays the
        # full embedding cost, as a neural provider would, so the caching
        # benchmark measures what caching actually saves.
        normals = stream("hashed-token", f"d={self.dim}|{token}", self.seed).normals(self.dim)
        v = np.asarray(normals, dtype=np.float64)
        v /= np.linalg.norm(v)
        return v.astype(np.float32)

    def embed(self, text: str) -> RawTokenMatrix:
        tokens = tuple(tokenize(text))
        if not tokens:
            raise EmptyTextError(f"no tokens in text: {text!r}")
        vectors = np.stack([self._token_vector(t) for t in tokens])
        return RawTokenMatrix(text_hash=self.text_hash(text), tokens=tokens, vectors=vectors)


class ImportProvider:
    """Provider backed by an exported embedding directory
    (``manifest.json`` + ``embeddings.bin``), as written by an exporter."""

    def __init__(self, import_dir: str | Path):
        self.import_dir = Path(import_dir)
        manifest_path = self.import_dir / "manifest.json"
        try:
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CacheCorruptError(f"cannot read manifest {manifest_path}: {exc}") from None
        try:
            self.model = manifest["model"]
            self.tokenizer_id = manifest["tokenizer_id"]
            self.dim = int(manifest["d"])
            self._records = {
                r["text_hash"]: (int(r["token_count"]), int(r["offset"]))
                for r in manifest["records"]
            }
        except (KeyError, TypeError) as exc:
            raise CacheCorruptError(f"malformed manifest {manifest_path}: {exc!r}") from None
        if self.dim < 4:
            raise CacheCorruptError(f"manifest {manifest_path} declares d={self.dim}, need >= 4")
        self._blob = (self.import_dir / "embeddings.bin").read_bytes()

    def text_hash(self, text: str) -> str:
        return hash64_hex(self.tokenizer_id, text)

    def embed(self, text: str) -> RawTokenMatrix:
        if not tokenize(text):
            raise EmptyTextError(f"no tokens in text: {text!r}")
        h = self.text_hash(text)
        record = self._records.get(h)
        if record is None:
            raise CacheMissError(f"imported embeddings have no record for hash {h}")
        token_count, offset = record
        try:
            tokenizer_id, tokens, vectors, _ = decode_record(self._blob, offset)
        except (ValueError, struct.error, UnicodeDecodeError) as exc:
            raise CacheCorruptError(
                f"{self.import_dir / 'embeddings.bin'} record at offset {offset}: {exc}"
            ) from None
        if tokenizer_id != self.tokenizer_id:
            raise CacheCorruptError(
                f"record tokenizer_id {tokenizer_id!r} does not match manifest {self.tokenizer_id!r}"
            )
        if len(tokens) != token_count or vectors.shape[1] != self.dim:
            raise CacheCorruptError(
                f"record shape {vectors.shape} disagrees with manifest entry for hash {h}"
            )
        return RawTokenMatrix(text_hash=h, tokens=tokens, vectors=vectors)


def embed_text(text: str, provider) -> RawTokenMatrix:
    """One d-dimensional embedding row per token of ``text``."""
    return provider.embed(text)


@dataclass(frozen=True, eq=False)
class ProjectionMatrix:
    """Fixed seeded Gaussian dimension-reduction map, N(0, 1/d0) entries."""

    seed: int
    d: int
    d0: int
    entries: np.ndarray  # (d, d0) float64

    @classmethod
    def create(cls, seed: int, d: int, d0: int | None = None) -> "ProjectionMatrix":
        if d0 is None:
            d0 = d // 4
        if d0 < 1:
            raise ValueError(f"reduced dimension must be >= 1, got {d0}")
        normals = stream("projection", f"d={d}|d0={d0}", seed).normals(d * d0)
        entries = np.asarray(normals, dtype=np.float64).reshape(d, d0) / np.sqrt(d0)
        return cls(seed=seed, d=d, d0=d0, entries=entries)


def reduce_and_normalize(raw: RawTokenMatrix, proj: ProjectionMatrix) -> TokenMatrix:
    """Project rows to d0 dimensions and L2-normalize each row.

    Rows whose projection has norm < 1e-12 are replaced by the unit vector
    e_1 (deterministic degenerate rule, keeps batch jobs alive).
    """
    if raw.d != proj.d:
        raise ShapeError(f"raw matrix has d={raw.d}, projection expects d={proj.d}")
    product = raw.vectors.astype(np.float64) @ proj.entries
    norms = np.linalg.norm(product, axis=1)
    degenerate = norms < 1e-12
    norms[degenerate] = 1.0
    product /= norms[:, None]
    if degenerate.any():
        product[degenerate] = 0.0
        product[degenerate, 0] = 1.0
    return TokenMatrix(
        text_hash=raw.text_hash,
        tokens=raw.tokens,
        vectors=product.astype(np.float32),
    )


class EmbeddingCache:
    """Directory-backed cache of reduced token matrices, keyed by text hash.

    Readers may run concurrently; writes go through atomic replace, so a
    get-or-embed race on one hash may embed twice but stores a single
    canonical entry (entries are content-derived, both writes identical).
    ``provider_calls`` increases by exactly one per provider invocation.
    """

    def __init__(self, directory: str | Path, scope: dict):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.scope = dict(scope)
        self.provider_calls = 0
        self._index: dict[str, TokenMatrix] = {}
        self._meta_path = self.directory / "cache_meta.json"
        if self._meta_path.exists():
            try:
                existing = json.loads(self._meta_path.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise CacheCorruptError(f"{self._meta_path}: {exc}") from None
            if existing != self.scope:
                raise CacheConfigError(
                    f"cache at {self.directory} was built under {existing}, "
                    f"requested {self.scope}; use a fresh directory"
                )
        else:
            self._atomic_write(self._meta_path, json.dumps(self.scope, sort_keys=True).encode("utf-8"))

    @staticmethod
    def _atomic_write(path: Path, payload: bytes) -> None:
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(payload)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def _entry_path(self, text_hash: str) -> Path:
        return self.directory / f"{text_hash}.ncli"

    def get(self, text_hash: str) -> TokenMatrix | None:
        hit = self._index.get(text_hash)
        if hit is not None:
            return hit
        path = self._entry_path(text_hash)
        if not path.exists():
            return None
        try:
            _, tokens, vectors, _ = decode_record(path.read_bytes())
        except (ValueError, struct.error, UnicodeDecodeError) as exc:
            raise CacheCorruptError(f"{path}: {exc}") from None
        matrix = TokenMatrix(text_hash=text_hash, tokens=tokens, vectors=vectors)
        self._index[text_hash] = matrix
        return matrix

    def put(self, matrix: TokenMatrix) -> None:
        payload = encode_record(self.scope.get("tokenizer_id", ""), matrix.tokens, matrix.vectors)
        self._atomic_write(self._entry_path(matrix.text_hash), payload)
        self._index[matrix.text_hash] = matrix

    def __contains__(self, text_hash: str) -> bool:
        return text_hash in self._index or self._entry_path(text_hash).exists()


def cache_scope(provider, proj: ProjectionMatrix, max_tokens: int) -> dict:
    """Configuration fingerprint a cache directory is pinned to."""
    return {
        "format_version": FORMAT_VERSION,
        "tokenizer_id": provider.tokenizer_id,
        "d": provider.dim,
        "d0": proj.d0,
        "projection_seed": proj.seed,
        "max_tokens": max_tokens,
    }


def cache_get_or_embed(
    text: str,
    provider,
    proj: ProjectionMatrix,
    cache: EmbeddingCache,
    max_tokens: int = 0,
) -> TokenMatrix:
    """Cached embed+reduce; extensionally equal to the uncached path.

    Hits return the stored matrix without invoking the provider; misses
    embed, reduce, store, and return, bumping ``cache.provider_calls``.
    """
    text_hash = provider.text_hash(text)
    hit = cache.get(text_hash)
    if hit is not None:
        return hit
    cache.provider_calls += 1
    raw = embed_text(text, provider).truncated(max_tokens)
    matrix = reduce_and_normalize(raw, proj)
    cache.put(matrix)
    return matrix


def precompute_candidates(
    candidate_sets: dict,
    provider,
    proj: ProjectionMatrix,
    cache: EmbeddingCache,
    max_tokens: int = 0,
) -> int:
    """Embed every persona and knowledge entry into the cache (idempotent).

    Returns the number of newly stored entries; shared entries dedup by
    content hash. Embedding failures name the offending entry.
    """
    stored = 0
    for dialog_id, cs in candidate_sets.items():
        for kind, entries in (("persona", cs.persona), ("knowledge", cs.knowledge)):
            for i, entry in enumerate(entries):
                if provider.text_hash(entry) in cache:
                    continue
                try:
                    cache_get_or_embed(entry, provider, proj, cache, max_tokens)
                except (EmptyTextError, CacheMissError, CacheCorruptError) as exc:
                    raise type(exc)(
                        f"dialog {dialog_id!r} {kind}[{i}] ({entry[:60]!r}): {exc}"
                    ) from exc
                stored += 1
    return stored
