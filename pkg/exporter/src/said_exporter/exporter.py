"""Encode texts-manifest rows into a SAIDEMB embedding table.

Reads the TSV manifest (``kind<TAB>id<TAB>escaped text``), encodes every row
with a sentence encoder, L2-normalizes the vectors (so cosine downstream
reduces to a dot product), and writes the binary SAIDEMB format atomically.
"""
from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

EMB_MAGIC = b"SAIDEMB1"
KIND_CODES = {"item": 0, "profile": 1}
DEFAULT_MODEL = "all-MiniLM-L6-v2"


class ManifestError(ValueError):
    """The texts manifest violates its format contract."""


class ModelResolutionError(RuntimeError):
    """The named sentence encoder model could not be loaded."""


@dataclass(frozen=True)
class ManifestRow:
    kind: str
    id: int
    text: str


class Encoder(Protocol):
    def encode(self, texts: Sequence[str], batch_size: int = 64) -> np.ndarray: ...


def unescape_text(text: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            mapped = {"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}.get(text[i + 1])
            if mapped is not None:
                out.append(mapped)
                i += 2
                continue
        out.append(ch)
        i += 1
    return "".join(out)


def read_manifest(path: str | Path) -> list[ManifestRow]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    rows: list[ManifestRow] = []
    seen: set[tuple[str, int]] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ManifestError(f"{path}:{lineno}: expected kind<TAB>id<TAB>text")
            kind, ident_s, text = parts
            if kind not in KIND_CODES:
                raise ManifestError(f"{path}:{lineno}: unknown kind {kind!r}")
            try:
                ident = int(ident_s)
            except ValueError as exc:
                raise ManifestError(f"{path}:{lineno}: bad id {ident_s!r}") from exc
            if (kind, ident) in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate row ({kind}, {ident})")
            seen.add((kind, ident))
            rows.append(ManifestRow(kind, ident, unescape_text(text)))
    return rows


def l2_normalize(matrix: np.ndarray) -> np.ndarray:
    """Row-wise L2 normalization in float64; zero rows stay zero."""
    mat = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return (mat / norms).astype(np.float32)


def write_saidemb(path: str | Path, dim: int, entries: Sequence[tuple[str, int, np.ndarray]]) -> None:
    """Write the binary table via a temp file + rename so readers never see a
    partial file."""
    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(EMB_MAGIC)
            fh.write(struct.pack("<IQ", dim, len(entries)))
            for kind, ident, vec in entries:
                fh.write(struct.pack("<BQ", KIND_CODES[kind], ident))
                fh.write(np.asarray(vec, dtype="<f4").tobytes())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def load_sentence_encoder(model_name: str = DEFAULT_MODEL) -> Encoder:
    """Resolve a sentence-transformers model by name."""
    try:
        from sentence_transformers import SentenceTransformer
    except ImportError as exc:  # pragma: no cover - dependency is declared
        raise ModelResolutionError("sentence-transformers is required for PLM encoding") from exc

    try:
        model = SentenceTransformer(model_name)
    except Exception as exc:
        raise ModelResolutionError(f"cannot load sentence encoder {model_name!r}: {exc}") from exc

    class _Wrapper:
        def encode(self, texts: Sequence[str], batch_size: int = 64) -> np.ndarray:
            return model.encode(
                list(texts),
                batch_size=batch_size,
                convert_to_numpy=True,
                show_progress_bar=False,
            )

    return _Wrapper()


def export_embeddings(
    manifest_path: str | Path,
    model_name: str = DEFAULT_MODEL,
    out_path: str | Path = "embeddings.saidemb",
    batch_size: int = 64,
    encoder: Encoder | None = None,
) -> tuple[int, int]:
    """Encode every manifest row and write the SAIDEMB file.

    Returns (row count, embedding dim). ``encoder`` overrides the named model
    (used for testing with deterministic stand-ins).
    """
    rows = read_manifest(manifest_path)
    if not rows:
        raise ManifestError(f"{manifest_path}: manifest has no rows")
    if encoder is None:
        encoder = load_sentence_encoder(model_name)
    vectors = np.asarray(encoder.encode([r.text for r in rows], batch_size=batch_size))
    if vectors.ndim != 2 or vectors.shape[0] != len(rows):
        raise RuntimeError(f"encoder returned shape {vectors.shape} for {len(rows)} rows")
    vectors = l2_normalize(vectors)
    dim = vectors.shape[1]
    write_saidemb(out_path, dim, [(r.kind, r.id, vec) for r, vec in zip(rows, vectors)])
    return len(rows), dim
