"""Texts-manifest to SAIDEMB embedding exporter."""

from .exporter import (
    DEFAULT_MODEL,
    ManifestError,
    ManifestRow,
    ModelResolutionError,
    export_embeddings,
    l2_normalize,
    load_sentence_encoder,
    read_manifest,
    write_saidemb,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_MODEL",
    "ManifestError",
    "ManifestRow",
    "ModelResolutionError",
    "export_embeddings",
    "l2_normalize",
    "load_sentence_encoder",
    "read_manifest",
    "write_saidemb",
]
