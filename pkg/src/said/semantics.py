"""User-profile texts, embedding tables, and profile-item cosine similarities.

Embeddings come either from a file-backed table (written offline, e.g. by the
embedding exporter) or from a deterministic hashing encoder that needs no
external model. Tables and similarity tables are immutable once built.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import DatasetSplit, ItemText

EMB_MAGIC = b"SAIDEMB1"
KIND_CODES = {"item": 0, "profile": 1}
KIND_NAMES = {code: kind for kind, code in KIND_CODES.items()}


class EmbeddingFormatError(ValueError):
    """An embedding file violates the SAIDEMB (or TSV) format contract."""


class SimilarityError(ValueError):
    """Similarity computation is missing required embeddings."""


@dataclass(frozen=True, slots=True)
class ProfileText:
    user_id: int
    text: str
    source_items: tuple[int, ...]


class EmbeddingTable:
    """Map from (kind, id) to a fixed-dimension float32 vector.

    Vectors are stored as float32 so that save/load round-trips bit-exactly.
    """

    def __init__(self, dim: int):
        if dim <= 0:
            raise ValueError(f"embedding dim must be positive, got {dim}")
        self.dim = int(dim)
        self._entries: dict[tuple[str, int], np.ndarray] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: tuple[str, int]) -> bool:
        return key in self._entries

    def get(self, kind: str, ident: int) -> np.ndarray | None:
        return self._entries.get((kind, ident))

    def put(self, kind: str, ident: int, vector: np.ndarray) -> None:
        if kind not in KIND_CODES:
            raise ValueError(f"kind must be one of {sorted(KIND_CODES)}, got {kind!r}")
        vec = np.asarray(vector, dtype=np.float32)
        if vec.shape != (self.dim,):
            raise ValueError(f"vector for ({kind}, {ident}) has length {vec.shape}, expected ({self.dim},)")
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"vector for ({kind}, {ident}) contains NaN/Inf")
        self._entries[(kind, ident)] = vec

    def keys(self):
        return self._entries.keys()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingTable):
            return NotImplemented
        if self.dim != other.dim or self._entries.keys() != other._entries.keys():
            return False
        return all(np.array_equal(v, other._entries[k]) for k, v in self._entries.items())


def build_profile_text(
    history: Sequence[int],
    texts: Mapping[int, ItemText],
    k: int,
    user_id: int = -1,
) -> ProfileText:
    """Concatenate the titles of the most recent ``k`` history items.

    ``history`` must already be in ascending time order; the profile keeps
    chronological order and joins titles with ``"; "``.
    """
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    recent = tuple(history[-k:])
    titles = []
    for item_id in recent:
        entry = texts.get(item_id)
        titles.append(entry.title if entry is not None else f"item {item_id}")
    return ProfileText(user_id=user_id, text="; ".join(titles), source_items=recent)


def _hash_bucket(term: str, dim: int, key: bytes) -> int:
    digest = hashlib.blake2b(term.encode("utf-8"), digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little") % dim


def encode_fallback(text: str, dim: int, hash_seed: int = 0) -> np.ndarray:
    """Deterministic character 3-gram hashing encoder (stand-in for a PLM).

    Term frequencies of character 3-grams are folded into ``dim`` buckets by a
    seeded 64-bit hash and L2-normalized. Texts shorter than 3 characters are
    hashed as a single term; empty text yields the zero vector.
    """
    if dim < 16:
        raise ValueError(f"fallback encoder dim must be >= 16, got {dim}")
    vec = np.zeros(dim, dtype=np.float64)
    if not text:
        return vec
    key = (hash_seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    if len(text) < 3:
        vec[_hash_bucket(text, dim, key)] += 1.0
    else:
        for i in range(len(text) - 2):
            vec[_hash_bucket(text[i : i + 3], dim, key)] += 1.0
    return vec / np.linalg.norm(vec)


class FallbackEncoder:
    """Bound (dim, hash_seed) form of :func:`encode_fallback`."""

    def __init__(self, dim: int, hash_seed: int = 0):
        if dim < 16:
            raise ValueError(f"fallback encoder dim must be >= 16, got {dim}")
        self.dim = int(dim)
        self.hash_seed = int(hash_seed)

    def encode(self, text: str) -> np.ndarray:
        return encode_fallback(text, self.dim, self.hash_seed)


def build_fallback_table(
    rows: Sequence[tuple[str, int, str]],
    dim: int,
    hash_seed: int = 0,
) -> EmbeddingTable:
    """Encode manifest rows (kind, id, text) with the fallback encoder."""
    enc = FallbackEncoder(dim, hash_seed)
    table = EmbeddingTable(dim)
    for kind, ident, text in rows:
        table.put(kind, ident, enc.encode(text))
    return table


def save_embedding_table(table: EmbeddingTable, path: str | Path) -> None:
    """Write the binary SAIDEMB format (rows sorted by (kind, id))."""
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write(struct.pack("<IQ", table.dim, len(table)))
        for kind, ident in sorted(table.keys(), key=lambda k: (KIND_CODES[k[0]], k[1])):
            vec = table.get(kind, ident)
            fh.write(struct.pack("<BQ", KIND_CODES[kind], ident))
            fh.write(vec.astype("<f4").tobytes())


def load_embedding_table(path: str | Path) -> EmbeddingTable:
    """Load a SAIDEMB file; a TSV fallback (kind, id, comma-joined floats) is
    accepted when the magic bytes are absent."""
    path = Path(path)
    data = path.read_bytes()
    if data[: len(EMB_MAGIC)] == EMB_MAGIC:
        return _load_binary(data, path)
    return _load_tsv(path)


def _load_binary(data: bytes, path: Path) -> EmbeddingTable:
    header_end = len(EMB_MAGIC) + 12
    if len(data) < header_end:
        raise EmbeddingFormatError(f"{path}: truncated header")
    if data[: len(EMB_MAGIC)] != EMB_MAGIC:
        raise EmbeddingFormatError(f"{path}: bad magic bytes, expected {EMB_MAGIC!r}")
    dim, count = struct.unpack_from("<IQ", data, len(EMB_MAGIC))
    if dim <= 0:
        raise EmbeddingFormatError(f"{path}: non-positive dim {dim}")
    table = EmbeddingTable(dim)
    record = 9 + 4 * dim
    offset = header_end
    for row in range(count):
        if offset + record > len(data):
            raise EmbeddingFormatError(f"{path}: truncated row {row} (of {count})")
        kind_code, ident = struct.unpack_from("<BQ", data, offset)
        if kind_code not in KIND_NAMES:
            raise EmbeddingFormatError(f"{path}: row {row}: unknown kind code {kind_code}")
        kind = KIND_NAMES[kind_code]
        if (kind, ident) in table:
            raise EmbeddingFormatError(f"{path}: duplicate entry ({kind}, {ident})")
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=offset + 9)
        if not np.all(np.isfinite(vec)):
            raise EmbeddingFormatError(f"{path}: non-finite components in ({kind}, {ident})")
        table.put(kind, ident, vec)
        offset += record
    return table


def _load_tsv(path: Path) -> EmbeddingTable:
    table: EmbeddingTable | None = None
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise EmbeddingFormatError(f"{path}:{lineno}: expected kind<TAB>id<TAB>values")
            kind, ident_s, values = parts
            if kind not in KIND_CODES:
                raise EmbeddingFormatError(f"{path}:{lineno}: unknown kind {kind!r}")
            try:
                ident = int(ident_s)
                vec = np.array([float(v) for v in values.split(",")], dtype=np.float32)
            except ValueError as exc:
                raise EmbeddingFormatError(f"{path}:{lineno}: bad row for id {ident_s}") from exc
            if table is None:
                table = EmbeddingTable(len(vec))
            if len(vec) != table.dim:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: row for ({kind}, {ident}) has length {len(vec)}, expected {table.dim}"
                )
            if (kind, ident) in table:
                raise EmbeddingFormatError(f"{path}:{lineno}: duplicate entry ({kind}, {ident})")
            if not np.all(np.isfinite(vec)):
                raise EmbeddingFormatError(f"{path}:{lineno}: non-finite components in ({kind}, {ident})")
            table.put(kind, ident, vec)
    if table is None:
        raise EmbeddingFormatError(f"{path}: empty embedding TSV")
    return table


def cosine(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    """Cosine similarity in double precision; zero-norm inputs give 0.0."""
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise ValueError(f"vector length mismatch: {va.shape} vs {vb.shape}")
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(va @ vb / (na * nb))


@dataclass(frozen=True)
class SimilarityTable:
    """Per-(user, item) profile-item similarity over train positives.

    ``sentinels`` holds pairs whose user had an empty profile: no history means
    no inconsistency signal, so downstream weighting leaves them at weight 1.
    ``mu`` is the arithmetic mean of the stored scores (0.0 when empty).
    """

    scores: dict[tuple[int, int], float]
    sentinels: frozenset[tuple[int, int]]
    mu: float


def compute_similarity_table(
    split: DatasetSplit,
    table: EmbeddingTable,
    profiles: Sequence[ProfileText],
) -> SimilarityTable:
    """Score every train positive (u, i) as cosine(profile_u, item_i).

    Users without a profile (or with an empty one) contribute sentinel entries
    instead of scores. Missing embeddings raise listing the absent keys.
    """
    profile_by_user = {p.user_id: p for p in profiles}
    pairs: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    sentinels: set[tuple[int, int]] = set()
    for it in split.train:
        if it.label != 1:
            continue
        key = (it.user_id, it.item_id)
        if key in seen:
            continue
        seen.add(key)
        prof = profile_by_user.get(it.user_id)
        if prof is None or not prof.text:
            sentinels.add(key)
        else:
            pairs.append(key)

    missing: list[tuple[str, int]] = []
    users_sorted = sorted({u for u, _ in pairs})
    items_sorted = sorted({i for _, i in pairs})
    user_vecs: list[np.ndarray] = []
    item_vecs: list[np.ndarray] = []
    for u in users_sorted:
        vec = table.get("profile", u)
        if vec is None:
            missing.append(("profile", u))
        else:
            user_vecs.append(_unit(vec))
    for i in items_sorted:
        vec = table.get("item", i)
        if vec is None:
            missing.append(("item", i))
        else:
            item_vecs.append(_unit(vec))
    if missing:
        shown = ", ".join(f"({k}, {i})" for k, i in missing[:20])
        more = "" if len(missing) <= 20 else f" and {len(missing) - 20} more"
        raise SimilarityError(f"missing embeddings for {len(missing)} keys: {shown}{more}")

    scores: dict[tuple[int, int], float] = {}
    if pairs:
        user_mat = np.stack(user_vecs)
        item_mat = np.stack(item_vecs)
        u_idx = np.searchsorted(users_sorted, np.fromiter((u for u, _ in pairs), dtype=np.int64))
        i_idx = np.searchsorted(items_sorted, np.fromiter((i for _, i in pairs), dtype=np.int64))
        sims = np.empty(len(pairs))
        chunk = 200_000
        for start in range(0, len(pairs), chunk):
            sl = slice(start, start + chunk)
            sims[sl] = np.einsum("ij,ij->i", user_mat[u_idx[sl]], item_mat[i_idx[sl]])
        np.clip(sims, -1.0, 1.0, out=sims)
        scores = dict(zip(pairs, sims.tolist()))
    mu = float(np.mean(sims)) if scores else 0.0
    return SimilarityTable(scores=scores, sentinels=frozenset(sentinels), mu=mu)


def _unit(vec: np.ndarray) -> np.ndarray:
    v = np.asarray(vec, dtype=np.float64)
    norm = np.linalg.norm(v)
    return v / norm if norm > 0.0 else v
