"""Experiment orchestration: config files, artifact preparation, grid runs,
and report emission.

The config format is line-oriented ``key = value`` under ``[section]``
headers; ``#`` starts a comment. The config hash is a sha256 digest of the
normalized ``section.key=value`` lines, so formatting and comments do not
change identity.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from . import corpus, semantics, synth
from .corpus import (
    DataError,
    DatasetSplit,
    Interaction,
    ItemText,
    NoiseSpec,
    Origin,
    ParseError,
)
from .metrics import EvalResult, aggregate, auc, logloss
from .model import CtrModel, TrainConfig, TrainingError, train, write_loss_trace
from .reweight import WeightConfig, assign_weights, dump_weights_tsv
from .semantics import EmbeddingTable, ProfileText, build_profile_text

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """The experiment config file is malformed or inconsistent."""


# --- config schema ----------------------------------------------------------

_SCHEMA: dict[str, set[str]] = {
    "dataset": {
        "kind", "ratings", "movies", "interactions", "items", "min_rating",
        "min_interactions", "users", "items_count", "positives_per_user",
        "exploratory_per_user", "seed", "split", "negative_ratio", "negative_seed",
    },
    "profile": {"k"},
    "encoder": {"mode", "table", "dim", "hash_seed"},
    "weights": {"alpha", "beta", "mu_mode"},
    "train": {
        "learning_rate", "batch_size", "epochs", "embedding_dim",
        "hidden_layers", "clip_epsilon", "patience",
    },
    "grid": {"noise_ratios", "alphas", "seeds"},
}

_PREPARE_SECTIONS = ("dataset", "profile")


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "synthetic"
    ratings: str = ""
    movies: str = ""
    interactions: str = ""
    items: str = ""
    min_rating: float = 4.0
    min_interactions: int = 0
    users: int = 500
    items_count: int = 200
    positives_per_user: int = 30
    exploratory_per_user: int = 0
    seed: int = 0
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    negative_ratio: int = 1
    negative_seed: int = 13


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig
    k: int = 10
    encoder_mode: str = "fallback"
    encoder_table: str = ""
    encoder_dim: int = 256
    encoder_hash_seed: int = 0
    alpha: float = 0.4
    beta: float = 5.0
    mu_mode: str = "global_mean"
    mu_fixed: float = 0.0
    train: TrainConfig = TrainConfig()
    noise_ratios: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
    alpha_grid: tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    hash: str = ""
    prepare_hash: str = ""


def _parse_pairs(text: str) -> list[tuple[str, str, str]]:
    pairs: list[tuple[str, str, str]] = []
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not section:
            raise ConfigError(f"line {lineno}: key {key!r} appears before any [section]")
        if key not in _SCHEMA[section]:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in section [{section}]")
        pairs.append((section, key, value))
    return pairs


def _digest(pairs: Iterable[tuple[str, str, str]]) -> str:
    canonical = "\n".join(f"{s}.{k}={v}" for s, k, v in sorted(pairs))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _floats(value: str) -> tuple[float, ...]:
    return tuple(float(v) for v in value.split(",") if v.strip() != "")


def _ints(value: str) -> tuple[int, ...]:
    return tuple(int(v) for v in value.split(",") if v.strip() != "")


def parse_config_text(text: str) -> ExperimentConfig:
    pairs = _parse_pairs(text)
    values: dict[tuple[str, str], str] = {}
    for section, key, value in pairs:
        values[(section, key)] = value

    def get(section: str, key: str, default: str) -> str:
        return values.get((section, key), default)

    try:
        split = _floats(get("dataset", "split", "0.8,0.1,0.1"))
        if len(split) != 3:
            raise ConfigError(f"dataset.split needs exactly 3 ratios, got {split}")
        ds = DatasetConfig(
            kind=get("dataset", "kind", "synthetic"),
            ratings=get("dataset", "ratings", ""),
            movies=get("dataset", "movies", ""),
            interactions=get("dataset", "interactions", ""),
            items=get("dataset", "items", ""),
            min_rating=float(get("dataset", "min_rating", "4")),
            min_interactions=int(get("dataset", "min_interactions", "0")),
            users=int(get("dataset", "users", "500")),
            items_count=int(get("dataset", "items_count", "200")),
            positives_per_user=int(get("dataset", "positives_per_user", "30")),
            exploratory_per_user=int(get("dataset", "exploratory_per_user", "0")),
            seed=int(get("dataset", "seed", "0")),
            split=(split[0], split[1], split[2]),
            negative_ratio=int(get("dataset", "negative_ratio", "1")),
            negative_seed=int(get("dataset", "negative_seed", "13")),
        )
        if ds.kind not in ("synthetic", "movielens", "tsv"):
            raise ConfigError(f"dataset.kind must be synthetic|movielens|tsv, got {ds.kind!r}")

        mu_mode = get("weights", "mu_mode", "global_mean")
        mu_fixed = 0.0
        if mu_mode.startswith("fixed:"):
            mu_fixed = float(mu_mode.split(":", 1)[1])
            mu_mode = "fixed"
        elif mu_mode != "global_mean":
            raise ConfigError(f"weights.mu_mode must be global_mean or fixed:<value>, got {mu_mode!r}")

        encoder_mode = get("encoder", "mode", "fallback")
        encoder_table = get("encoder", "table", "")
        if encoder_mode.startswith("table:"):
            encoder_mode, encoder_table = "table", encoder_mode.split(":", 1)[1]
        if encoder_mode not in ("fallback", "table"):
            raise ConfigError(f"encoder.mode must be fallback or table[:<path>], got {encoder_mode!r}")
        if encoder_mode == "table" and not encoder_table:
            raise ConfigError("encoder.mode = table requires encoder.table = <path>")

        train_cfg = TrainConfig(
            learning_rate=float(get("train", "learning_rate", "0.001")),
            batch_size=int(get("train", "batch_size", "2048")),
            epochs=int(get("train", "epochs", "30")),
            embedding_dim=int(get("train", "embedding_dim", "64")),
            hidden_layers=_ints(get("train", "hidden_layers", "256,128,64")),
            clip_epsilon=float(get("train", "clip_epsilon", "1e-7")),
            patience=int(get("train", "patience", "3")),
        )

        seeds = _ints(get("grid", "seeds", "0,1,2,3,4"))
        noise_ratios = _floats(get("grid", "noise_ratios", "0,0.1,0.2,0.3,0.4,0.5"))
        alpha_grid = _floats(get("grid", "alphas", "0,0.2,0.4,0.6,0.8,1.0"))
        if not seeds or not noise_ratios or not alpha_grid:
            raise ConfigError("grid.noise_ratios, grid.alphas and grid.seeds must be non-empty")
        if len(set(seeds)) != len(seeds):
            raise ConfigError(f"grid.seeds must be distinct, got {seeds}")

        cfg = ExperimentConfig(
            dataset=ds,
            k=int(get("profile", "k", "10")),
            encoder_mode=encoder_mode,
            encoder_table=encoder_table,
            encoder_dim=int(get("encoder", "dim", "256")),
            encoder_hash_seed=int(get("encoder", "hash_seed", "0")),
            alpha=float(get("weights", "alpha", "0.4")),
            beta=float(get("weights", "beta", "5")),
            mu_mode=mu_mode,
            mu_fixed=mu_fixed,
            train=train_cfg,
            noise_ratios=noise_ratios,
            alpha_grid=alpha_grid,
            seeds=seeds,
            hash=_digest(pairs),
            prepare_hash=_digest(p for p in pairs if p[0] in _PREPARE_SECTIONS),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
    if cfg.k <= 0:
        raise ConfigError(f"profile.k must be positive, got {cfg.k}")
    return cfg


def load_config(path: str | Path, overrides: Sequence[str] = ()) -> ExperimentConfig:
    """Load a config file, applying ``section.key=value`` override strings."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        dotted, value = item.split("=", 1)
        section, key = dotted.split(".", 1)
        text += f"\n[{section.strip()}]\n{key.strip()} = {value.strip()}\n"
    return parse_config_text(text)


# --- artifact io -------------------------------------------------------------

_SPLIT_FILES = ("train.tsv", "validation.tsv", "test.tsv")


def _write_split_tsv(path: Path, rows: Sequence[Interaction]) -> None:
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("user_id\titem_id\tlabel\ttimestamp\torigin\n")
        for it in rows:
            fh.write(f"{it.user_id}\t{it.item_id}\t{it.label}\t{it.timestamp}\t{it.origin.value}\n")


def _read_split_tsv(path: Path) -> tuple[Interaction, ...]:
    rows: list[Interaction] = []
    with path.open(encoding="utf-8") as fh:
        header = fh.readline()
        if header and not header.startswith("user_id\t"):
            raise ParseError(f"{path}: missing split header")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise ParseError(f"{path}:{lineno}: expected 5 fields")
            rows.append(
                Interaction(int(parts[0]), int(parts[1]), int(parts[2]), int(parts[3]), Origin(parts[4]))
            )
    return tuple(rows)


class PreparedData(NamedTuple):
    split: DatasetSplit
    profiles: list[ProfileText]
    manifest_rows: list[tuple[str, int, str]]


def _load_dataset(ds: DatasetConfig) -> tuple[list[Interaction], list[ItemText]]:
    if ds.kind == "movielens":
        return corpus.load_movielens(ds.ratings, ds.movies, min_rating=int(ds.min_rating))
    if ds.kind == "tsv":
        return corpus.load_interactions_tsv(
            ds.interactions, ds.items or None,
            min_rating=ds.min_rating, min_interactions=ds.min_interactions,
        )
    if ds.kind == "synthetic":
        return synth.generate_synthetic(
            n_users=ds.users, n_items=ds.items_count,
            positives_per_user=ds.positives_per_user,
            exploratory_per_user=ds.exploratory_per_user,
            seed=ds.seed,
        )
    raise ConfigError(f"unknown dataset kind {ds.kind!r}")


def build_prepared(cfg: ExperimentConfig) -> tuple[PreparedData, list[ItemText]]:
    """In-memory pipeline: load, split, sample negatives, build profiles."""
    interactions, item_texts = _load_dataset(cfg.dataset)
    if not interactions:
        raise DataError("dataset produced no positive interactions")
    split = corpus.chronological_split(interactions, cfg.dataset.split)
    split = corpus.sample_negatives(split, cfg.dataset.negative_ratio, cfg.dataset.negative_seed)
    texts_map = {t.item_id: t for t in item_texts}
    profiles = [
        build_profile_text(split.histories[u], texts_map, cfg.k, user_id=u)
        for u in sorted(split.users)
        if split.histories.get(u)
    ]
    manifest_rows: list[tuple[str, int, str]] = [
        ("item", t.item_id, t.title) for t in sorted(item_texts, key=lambda t: t.item_id)
    ]
    manifest_rows += [("profile", p.user_id, p.text) for p in profiles]
    return PreparedData(split, profiles, manifest_rows), item_texts


def cmd_prepare(cfg: ExperimentConfig, workdir: str | Path) -> dict:
    """Write split/history/profile artifacts plus the texts manifest.

    Reruns with unchanged inputs produce byte-identical files.
    """
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    prepared, _ = build_prepared(cfg)
    split = prepared.split

    _write_split_tsv(workdir / "train.tsv", split.train)
    _write_split_tsv(workdir / "validation.tsv", split.validation)
    _write_split_tsv(workdir / "test.tsv", split.test)

    with (workdir / "histories.tsv").open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("user_id\titems\n")
        for user_id in sorted(split.histories):
            fh.write(f"{user_id}\t{','.join(str(i) for i in split.histories[user_id])}\n")

    with (workdir / "profiles.tsv").open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("user_id\tsource_items\ttext\n")
        for prof in prepared.profiles:
            items = ",".join(str(i) for i in prof.source_items)
            fh.write(f"{prof.user_id}\t{items}\t{corpus.escape_text(prof.text)}\n")

    corpus.write_texts_manifest(workdir / "manifest.tsv", prepared.manifest_rows)

    stats = {
        "prepare_hash": cfg.prepare_hash,
        "n_users": len(split.users),
        "n_items": len(split.items),
        "n_train": len(split.train),
        "n_validation": len(split.validation),
        "n_test": len(split.test),
        "n_positives": sum(1 for it in split.all_interactions() if it.label == 1),
        "n_profiles": len(prepared.profiles),
    }
    (workdir / "prepare.json").write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return stats


def load_artifacts(workdir: str | Path) -> PreparedData:
    workdir = Path(workdir)
    for name in _SPLIT_FILES + ("histories.tsv", "profiles.tsv", "manifest.tsv"):
        if not (workdir / name).exists():
            raise DataError(f"missing prepared artifact: {workdir / name} (run `said prepare` first)")
    train = _read_split_tsv(workdir / "train.tsv")
    validation = _read_split_tsv(workdir / "validation.tsv")
    test = _read_split_tsv(workdir / "test.tsv")

    histories: dict[int, tuple[int, ...]] = {}
    with (workdir / "histories.tsv").open(encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            user_s, items_s = line.split("\t")
            histories[int(user_s)] = tuple(int(i) for i in items_s.split(",") if i != "")

    profiles: list[ProfileText] = []
    with (workdir / "profiles.tsv").open(encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            user_s, items_s, text = line.split("\t", 2)
            source = tuple(int(i) for i in items_s.split(",") if i != "")
            profiles.append(ProfileText(int(user_s), corpus.unescape_text(text), source))

    rows = list(train) + list(validation) + list(test)
    split = DatasetSplit(
        train=train,
        validation=validation,
        test=test,
        users=frozenset(it.user_id for it in rows),
        items=frozenset(it.item_id for it in rows),
        histories=histories,
    )
    manifest_rows = corpus.read_texts_manifest(workdir / "manifest.tsv")
    return PreparedData(split, profiles, manifest_rows)


def _load_embedding_source(cfg: ExperimentConfig, manifest_rows: Sequence[tuple[str, int, str]]) -> EmbeddingTable:
    if cfg.encoder_mode == "table":
        return semantics.load_embedding_table(cfg.encoder_table)
    return semantics.build_fallback_table(manifest_rows, cfg.encoder_dim, cfg.encoder_hash_seed)


# --- grid execution -----------------------------------------------------------


class CellResult(NamedTuple):
    noise_ratio: float
    alpha: float
    seed: int
    status: str
    error: str | None
    result: EvalResult | None
    epochs_ran: int
    best_val_auc: float


def run_cell(
    prepared: PreparedData,
    table: EmbeddingTable,
    cfg: ExperimentConfig,
    noise_ratio: float,
    alpha: float,
    seed: int,
    sims: semantics.SimilarityTable | None = None,
    trace_path: Path | None = None,
) -> CellResult:
    split = prepared.split
    if noise_ratio > 0:
        split = corpus.inject_noise(split, NoiseSpec(noise_ratio, seed))
    if sims is None:
        sims = semantics.compute_similarity_table(split, table, prepared.profiles)
    mu = sims.mu if cfg.mu_mode == "global_mean" else cfg.mu_fixed
    weighted = assign_weights(split, sims, WeightConfig(alpha=alpha, beta=cfg.beta, mu=mu))

    train_cfg = replace(cfg.train, seed=seed)
    model = CtrModel.initialize(sorted(split.users), sorted(split.items), train_cfg)
    model, trace = train(model, weighted, train_cfg, validation=split.validation or None)
    if trace_path is not None:
        write_loss_trace(trace_path, trace)

    test_users = [it.user_id for it in split.test]
    test_items = [it.item_id for it in split.test]
    test_labels = [it.label for it in split.test]
    scores = model.predict(test_users, test_items)
    n_pos = sum(test_labels)
    result = EvalResult(
        auc=auc(scores, test_labels),
        logloss=logloss(scores, test_labels),
        n_pos=n_pos,
        n_neg=len(test_labels) - n_pos,
    )
    best_val = max((t.val_auc for t in trace), default=float("nan"))
    return CellResult(noise_ratio, alpha, seed, "ok", None, result, len(trace), best_val)


def cmd_run(cfg: ExperimentConfig, workdir: str | Path, report_path: str | Path | None = None) -> tuple[dict, int]:
    """Execute the (noise x alpha x seed) grid and write the JSON report.

    Returns (report, number of failed cells). Failures are recorded per cell
    and do not stop the run.
    """
    workdir = Path(workdir)
    prepared = load_artifacts(workdir)

    stats_path = workdir / "prepare.json"
    if stats_path.exists():
        stats = json.loads(stats_path.read_text(encoding="utf-8"))
        if stats.get("prepare_hash") not in ("", cfg.prepare_hash):
            raise ConfigError(
                "prepared artifacts were built from a different dataset/profile config; rerun `said prepare`"
            )

    table = _load_embedding_source(cfg, prepared.manifest_rows)
    traces_dir = workdir / "traces"
    traces_dir.mkdir(exist_ok=True)

    cells: list[CellResult] = []
    failures = 0
    for noise_ratio in cfg.noise_ratios:
        for seed in cfg.seeds:
            shared_sims = None
            sims_error: str | None = None
            try:
                noisy = prepared.split
                if noise_ratio > 0:
                    noisy = corpus.inject_noise(noisy, NoiseSpec(noise_ratio, seed))
                shared_sims = semantics.compute_similarity_table(noisy, table, prepared.profiles)
            except Exception as exc:  # cell failure is recorded, run continues
                sims_error = f"{type(exc).__name__}: {exc}"
            for alpha in cfg.alpha_grid:
                tag = f"noise{noise_ratio:g}_alpha{alpha:g}_seed{seed}"
                if sims_error is not None:
                    cells.append(CellResult(noise_ratio, alpha, seed, "failed", sims_error, None, 0, float("nan")))
                    failures += 1
                    continue
                try:
                    cells.append(
                        run_cell(
                            prepared, table, cfg, noise_ratio, alpha, seed,
                            sims=shared_sims, trace_path=traces_dir / f"{tag}.csv",
                        )
                    )
                    log.info("cell %s: auc=%.4f", tag, cells[-1].result.auc)
                except Exception as exc:  # cell failure is recorded, run continues
                    cells.append(
                        CellResult(noise_ratio, alpha, seed, "failed", f"{type(exc).__name__}: {exc}", None, 0, float("nan"))
                    )
                    failures += 1
                    log.warning("cell %s failed: %s", tag, exc)

    report = _build_report(cfg, workdir, cells)
    out_path = Path(report_path) if report_path is not None else workdir / "report.json"
    out_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return report, failures


def _build_report(cfg: ExperimentConfig, workdir: Path, cells: Sequence[CellResult]) -> dict:
    checksums = {}
    for name in _SPLIT_FILES + ("profiles.tsv", "manifest.tsv"):
        path = workdir / name
        if path.exists():
            checksums[name] = hashlib.sha256(path.read_bytes()).hexdigest()

    cell_rows = []
    for cell in cells:
        row = {
            "noise_ratio": cell.noise_ratio,
            "alpha": cell.alpha,
            "seed": cell.seed,
            "status": cell.status,
            "error": cell.error,
            "epochs_ran": cell.epochs_ran,
        }
        if cell.result is not None:
            row.update(
                auc=cell.result.auc,
                logloss=cell.result.logloss,
                n_pos=cell.result.n_pos,
                n_neg=cell.result.n_neg,
            )
        cell_rows.append(row)

    aggregates = []
    for noise_ratio in cfg.noise_ratios:
        for alpha in cfg.alpha_grid:
            ok = [
                c.result for c in cells
                if c.status == "ok" and c.noise_ratio == noise_ratio and c.alpha == alpha
            ]
            if not ok:
                continue
            agg = aggregate(ok)
            aggregates.append(
                {
                    "noise_ratio": noise_ratio,
                    "alpha": alpha,
                    "n_seeds": len(ok),
                    "mean_auc": agg.mean_auc,
                    "std_auc": agg.std_auc,
                    "mean_logloss": agg.mean_logloss,
                    "std_logloss": agg.std_logloss,
                }
            )

    return {
        "config_hash": cfg.hash,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "headline_alpha": cfg.alpha,
        "grid": {
            "noise_ratios": list(cfg.noise_ratios),
            "alphas": list(cfg.alpha_grid),
            "seeds": list(cfg.seeds),
        },
        "data_checksums": checksums,
        "cells": cell_rows,
        "aggregates": aggregates,
    }


# --- report emission -----------------------------------------------------------


def cmd_report(report_path: str | Path, out_dir: str | Path) -> list[Path]:
    """Emit plot-data CSVs from a run report.

    Writes a noise sweep (baseline vs reweighted series), an alpha sweep
    sorted ascending by alpha, and a two-row method comparison table.
    """
    report_path = Path(report_path)
    if not report_path.exists():
        raise DataError(f"report not found: {report_path}")
    try:
        report = json.loads(report_path.read_text(encoding="utf-8"))
        aggregates = report["aggregates"]
        headline_alpha = report["headline_alpha"]
    except (json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"malformed report {report_path}: {exc}") from exc

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def fmt(value: float) -> str:
        return f"{value:.10g}"

    series = {"baseline": 1.0, "said": headline_alpha}
    noise_path = out_dir / "noise_sweep.csv"
    with noise_path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("noise_ratio,series,alpha,mean_auc,std_auc,mean_logloss,std_logloss,n_seeds\n")
        for row in sorted(aggregates, key=lambda r: (r["noise_ratio"], r["alpha"])):
            for name, alpha in sorted(series.items()):
                if row["alpha"] == alpha:
                    fh.write(
                        f"{fmt(row['noise_ratio'])},{name},{fmt(row['alpha'])},"
                        f"{fmt(row['mean_auc'])},{fmt(row['std_auc'])},"
                        f"{fmt(row['mean_logloss'])},{fmt(row['std_logloss'])},{row['n_seeds']}\n"
                    )
    written.append(noise_path)

    alpha_path = out_dir / "alpha_sweep.csv"
    with alpha_path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("alpha,noise_ratio,mean_auc,std_auc,mean_logloss,std_logloss,n_seeds\n")
        for row in sorted(aggregates, key=lambda r: (r["alpha"], r["noise_ratio"])):
            fh.write(
                f"{fmt(row['alpha'])},{fmt(row['noise_ratio'])},"
                f"{fmt(row['mean_auc'])},{fmt(row['std_auc'])},"
                f"{fmt(row['mean_logloss'])},{fmt(row['std_logloss'])},{row['n_seeds']}\n"
            )
    written.append(alpha_path)

    min_noise = min((r["noise_ratio"] for r in aggregates), default=0.0)
    comparison_path = out_dir / "comparison.csv"
    with comparison_path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("method,alpha,mean_auc,mean_logloss\n")
        for name, alpha in (("baseline", 1.0), ("said", headline_alpha)):
            match = [r for r in aggregates if r["noise_ratio"] == min_noise and r["alpha"] == alpha]
            if match:
                row = match[0]
                fh.write(f"{name},{fmt(alpha)},{fmt(row['mean_auc'])},{fmt(row['mean_logloss'])}\n")
    written.append(comparison_path)
    return written


def cmd_weights_audit(
    cfg: ExperimentConfig,
    workdir: str | Path,
    out_path: str | Path,
    noise_ratio: float = 0.0,
    noise_seed: int = 0,
) -> Path:
    """Dump per-positive similarity and weight for auditing/plotting."""
    prepared = load_artifacts(workdir)
    split = prepared.split
    if noise_ratio > 0:
        split = corpus.inject_noise(split, NoiseSpec(noise_ratio, noise_seed))
        prepared = PreparedData(split, prepared.profiles, prepared.manifest_rows)
    table = _load_embedding_source(cfg, prepared.manifest_rows)
    sims = semantics.compute_similarity_table(split, table, prepared.profiles)
    mu = sims.mu if cfg.mu_mode == "global_mean" else cfg.mu_fixed
    weighted = assign_weights(split, sims, WeightConfig(alpha=cfg.alpha, beta=cfg.beta, mu=mu))
    out_path = Path(out_path)
    dump_weights_tsv(out_path, weighted, sims)
    return out_path
