"""Dataset ingestion, binarization, splitting, negative sampling, and noise injection.

All operations are pure given (input, seed): they return new objects and never
mutate their arguments, so results can be shared freely across threads.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

log = logging.getLogger(__name__)


class Origin(Enum):
    """Provenance of an interaction record.

    Only synthetic/injected records carry a non-organic tag; the training code
    must never branch on this field.
    """

    ORGANIC_POSITIVE = "organic_positive"
    SAMPLED_NEGATIVE = "sampled_negative"
    INJECTED_NOISE = "injected_noise"


class ParseError(ValueError):
    """A raw data line does not match the expected format."""


class DataError(ValueError):
    """A dataset-level precondition is violated."""


@dataclass(frozen=True, slots=True)
class Interaction:
    user_id: int
    item_id: int
    label: int
    timestamp: int
    origin: Origin = Origin.ORGANIC_POSITIVE

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        if self.origin is Origin.INJECTED_NOISE and self.label != 1:
            raise ValueError("injected_noise interactions must have label 1")
        if self.origin is Origin.SAMPLED_NEGATIVE and self.label != 0:
            raise ValueError("sampled_negative interactions must have label 0")


@dataclass(frozen=True, slots=True)
class ItemText:
    item_id: int
    title: str
    category: str | None = None


@dataclass(frozen=True, slots=True)
class NoiseSpec:
    ratio: float
    seed: int

    def __post_init__(self) -> None:
        if not (0.0 <= self.ratio <= 0.5):
            raise ValueError(f"noise ratio must be in [0, 0.5], got {self.ratio}")


@dataclass(frozen=True)
class DatasetSplit:
    """Train/validation/test partition plus per-user positive histories.

    ``histories`` maps each user to the item ids of their *train* positives in
    ascending timestamp order. Treat instances as immutable after construction.
    """

    train: tuple[Interaction, ...]
    validation: tuple[Interaction, ...]
    test: tuple[Interaction, ...]
    users: frozenset[int]
    items: frozenset[int]
    histories: dict[int, tuple[int, ...]]

    def all_interactions(self) -> Iterator[Interaction]:
        yield from self.train
        yield from self.validation
        yield from self.test


def _synthetic_title(item_id: int) -> str:
    return f"item {item_id}"


def load_movielens(
    ratings_path: str | Path,
    movies_path: str | Path,
    min_rating: int = 4,
) -> tuple[list[Interaction], list[ItemText]]:
    """Load MovieLens ``::``-delimited files into implicit-feedback records.

    Ratings of at least ``min_rating`` become positives (label 1); lower
    ratings are dropped but still count toward the user/item universe, so the
    returned item list covers every item that was rated at all. Items rated
    but absent from the movies file get a synthetic ``"item <id>"`` title.
    """
    ratings_path = Path(ratings_path)
    movies_path = Path(movies_path)
    if not ratings_path.exists():
        raise FileNotFoundError(f"ratings file not found: {ratings_path}")
    if not movies_path.exists():
        raise FileNotFoundError(f"movies file not found: {movies_path}")

    titles: dict[int, tuple[str, str | None]] = {}
    with movies_path.open(encoding="ISO-8859-1") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("::")
            if len(parts) != 3:
                raise ParseError(f"{movies_path}:{lineno}: expected MovieID::Title::Genres, got {line!r}")
            try:
                item_id = int(parts[0])
            except ValueError as exc:
                raise ParseError(f"{movies_path}:{lineno}: bad movie id {parts[0]!r}") from exc
            titles[item_id] = (parts[1], parts[2] or None)

    interactions: list[Interaction] = []
    rated_items: set[int] = set()
    with ratings_path.open(encoding="ISO-8859-1") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("::")
            if len(parts) != 4:
                raise ParseError(
                    f"{ratings_path}:{lineno}: expected UserID::MovieID::Rating::Timestamp, got {line!r}"
                )
            try:
                user_id, item_id, rating, ts = (int(p) for p in parts)
            except ValueError as exc:
                raise ParseError(f"{ratings_path}:{lineno}: non-integer field in {line!r}") from exc
            rated_items.add(item_id)
            if rating >= min_rating:
                interactions.append(Interaction(user_id, item_id, 1, ts))

    missing = sorted(i for i in rated_items if i not in titles or not titles[i][0])
    if missing:
        log.warning(
            "%d rated items have no title in %s (e.g. %s); synthesizing titles",
            len(missing), movies_path, missing[:5],
        )
    item_texts = []
    for item_id in sorted(rated_items):
        title, category = titles.get(item_id, ("", None))
        item_texts.append(ItemText(item_id, title or _synthetic_title(item_id), category))
    return interactions, item_texts


def load_interactions_tsv(
    interactions_path: str | Path,
    items_path: str | Path | None = None,
    min_rating: float = 4.0,
    min_interactions: int = 0,
) -> tuple[list[Interaction], list[ItemText]]:
    """Load a generic TSV dataset (``user<TAB>item<TAB>rating<TAB>timestamp``).

    ``items_path`` points to an optional ``item<TAB>title[<TAB>category]`` file.
    ``min_interactions`` applies a single count-threshold pass (e.g. 5 for a
    5-core style filter) over the raw records before binarization.
    """
    interactions_path = Path(interactions_path)
    if not interactions_path.exists():
        raise FileNotFoundError(f"interactions file not found: {interactions_path}")

    raw: list[tuple[int, int, float, int]] = []
    with interactions_path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ParseError(f"{interactions_path}:{lineno}: expected 4 tab-separated fields")
            try:
                raw.append((int(parts[0]), int(parts[1]), float(parts[2]), int(parts[3])))
            except ValueError as exc:
                raise ParseError(f"{interactions_path}:{lineno}: bad field in {line!r}") from exc

    if min_interactions > 1:
        user_counts: dict[int, int] = {}
        item_counts: dict[int, int] = {}
        for u, i, _, _ in raw:
            user_counts[u] = user_counts.get(u, 0) + 1
            item_counts[i] = item_counts.get(i, 0) + 1
        raw = [
            r for r in raw
            if user_counts[r[0]] >= min_interactions and item_counts[r[1]] >= min_interactions
        ]

    titles: dict[int, tuple[str, str | None]] = {}
    if items_path is not None:
        items_path = Path(items_path)
        if not items_path.exists():
            raise FileNotFoundError(f"item text file not found: {items_path}")
        with items_path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) not in (2, 3):
                    raise ParseError(f"{items_path}:{lineno}: expected item<TAB>title[<TAB>category]")
                try:
                    item_id = int(parts[0])
                except ValueError as exc:
                    raise ParseError(f"{items_path}:{lineno}: bad item id {parts[0]!r}") from exc
                category = parts[2] if len(parts) == 3 and parts[2] else None
                titles[item_id] = (parts[1], category)

    interactions = [
        Interaction(u, i, 1, ts) for u, i, rating, ts in raw if rating >= min_rating
    ]
    rated_items = sorted({i for _, i, _, _ in raw})
    missing = [i for i in rated_items if i not in titles or not titles[i][0]]
    if missing:
        log.warning("%d items have no text entry; synthesizing titles", len(missing))
    item_texts = []
    for item_id in rated_items:
        title, category = titles.get(item_id, ("", None))
        item_texts.append(ItemText(item_id, title or _synthetic_title(item_id), category))
    return interactions, item_texts


def chronological_split(
    interactions: Sequence[Interaction],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
) -> DatasetSplit:
    """Partition each user's positives by time into train/validation/test.

    Split boundaries are the cumulative floors of ``len * ratio``; users with
    fewer than 3 positives go entirely to train. Histories are built from
    train positives only.
    """
    if any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be positive, got {ratios}")
    if not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise ValueError(f"ratios must sum to 1, got {ratios}")

    by_user: dict[int, list[Interaction]] = {}
    items: set[int] = set()
    for it in interactions:
        by_user.setdefault(it.user_id, []).append(it)
        items.add(it.item_id)

    train: list[Interaction] = []
    validation: list[Interaction] = []
    test: list[Interaction] = []
    histories: dict[int, tuple[int, ...]] = {}
    for user_id in sorted(by_user):
        rows = sorted(by_user[user_id], key=lambda it: (it.timestamp, it.item_id))
        n = len(rows)
        if n < 3:
            cut1, cut2 = n, n
        else:
            cut1 = math.floor(n * ratios[0])
            cut2 = math.floor(n * (ratios[0] + ratios[1]))
        train.extend(rows[:cut1])
        validation.extend(rows[cut1:cut2])
        test.extend(rows[cut2:])
        histories[user_id] = tuple(it.item_id for it in rows[:cut1] if it.label == 1)

    return DatasetSplit(
        train=tuple(train),
        validation=tuple(validation),
        test=tuple(test),
        users=frozenset(by_user),
        items=frozenset(items),
        histories=histories,
    )


def sample_negatives(split: DatasetSplit, ratio: int = 1, seed: int = 0) -> DatasetSplit:
    """Add ``ratio`` uniformly sampled never-interacted items per positive.

    Sampling excludes each user's positives across all splits; draws are
    independent per positive and deterministic given ``seed``. Each negative
    inherits its positive's timestamp and is inserted right after it.
    """
    if not any(it.label == 1 for it in split.all_interactions()):
        raise DataError("split contains no positives to sample negatives for")
    if ratio < 1:
        raise ValueError(f"negative ratio must be a positive integer, got {ratio}")

    item_arr = np.array(sorted(split.items), dtype=np.int64)
    n_items = len(item_arr)
    pos_by_user: dict[int, set[int]] = {}
    for it in split.all_interactions():
        if it.label == 1:
            pos_by_user.setdefault(it.user_id, set()).add(it.item_id)

    rng = np.random.default_rng(seed)
    exhausted: set[int] = set()

    def with_negatives(rows: tuple[Interaction, ...]) -> tuple[Interaction, ...]:
        out: list[Interaction] = []
        for it in rows:
            out.append(it)
            if it.label != 1:
                continue
            pos = pos_by_user[it.user_id]
            if len(pos) >= n_items:
                if it.user_id not in exhausted:
                    exhausted.add(it.user_id)
                    log.warning("user %d interacted with all items; skipping negatives", it.user_id)
                continue
            for _ in range(ratio):
                while True:
                    cand = int(item_arr[rng.integers(0, n_items)])
                    if cand not in pos:
                        break
                out.append(Interaction(it.user_id, cand, 0, it.timestamp, Origin.SAMPLED_NEGATIVE))
        return tuple(out)

    return DatasetSplit(
        train=with_negatives(split.train),
        validation=with_negatives(split.validation),
        test=with_negatives(split.test),
        users=split.users,
        items=split.items,
        histories=split.histories,
    )


def inject_noise(split: DatasetSplit, spec: NoiseSpec) -> DatasetSplit:
    """Flip ``floor(ratio * |train negatives|)`` train negatives to positives.

    Flipped records keep their (user, item, timestamp) but get label 1 and the
    ``injected_noise`` origin tag. Validation and test are untouched.
    """
    if spec.ratio == 0.0:
        return split
    neg_idx = [k for k, it in enumerate(split.train) if it.label == 0]
    if not neg_idx:
        raise DataError("cannot inject noise: train split contains no negatives")
    n_flip = math.floor(spec.ratio * len(neg_idx))
    rng = np.random.default_rng(spec.seed)
    chosen = rng.choice(len(neg_idx), size=n_flip, replace=False)
    flip = {neg_idx[int(c)] for c in chosen}

    train = tuple(
        replace(it, label=1, origin=Origin.INJECTED_NOISE) if k in flip else it
        for k, it in enumerate(split.train)
    )
    return DatasetSplit(
        train=train,
        validation=split.validation,
        test=split.test,
        users=split.users,
        items=split.items,
        histories=split.histories,
    )


# --- texts manifest -------------------------------------------------------
#
# TSV of `kind<TAB>id<TAB>text`, kind in {item, profile}. Tabs, newlines and
# backslashes inside text are escaped so the file stays one row per record.

MANIFEST_KINDS = ("item", "profile")


def escape_text(text: str) -> str:
    return (
        text.replace("\\", "\\\\")
        .replace("\t", "\\t")
        .replace("\n", "\\n")
        .replace("\r", "\\r")
    )


def unescape_text(text: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            mapped = {"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}.get(nxt)
            if mapped is not None:
                out.append(mapped)
                i += 2
                continue
        out.append(ch)
        i += 1
    return "".join(out)


def write_texts_manifest(path: str | Path, rows: Iterable[tuple[str, int, str]]) -> None:
    """Write (kind, id, text) rows as the escaped manifest TSV."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for kind, ident, text in rows:
            if kind not in MANIFEST_KINDS:
                raise ValueError(f"manifest kind must be one of {MANIFEST_KINDS}, got {kind!r}")
            fh.write(f"{kind}\t{ident}\t{escape_text(text)}\n")


def read_texts_manifest(path: str | Path) -> list[tuple[str, int, str]]:
    """Read a manifest TSV back into (kind, id, unescaped text) rows."""
    path = Path(path)
    rows: list[tuple[str, int, str]] = []
    seen: set[tuple[str, int]] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(f"{path}:{lineno}: expected kind<TAB>id<TAB>text")
            kind, ident_s, text = parts
            if kind not in MANIFEST_KINDS:
                raise ParseError(f"{path}:{lineno}: unknown kind {kind!r}")
            try:
                ident = int(ident_s)
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad id {ident_s!r}") from exc
            if (kind, ident) in seen:
                raise ParseError(f"{path}:{lineno}: duplicate manifest row ({kind}, {ident})")
            seen.add((kind, ident))
            rows.append((kind, ident, unescape_text(text)))
    return rows
