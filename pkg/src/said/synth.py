"""Synthetic two-topic corpus for desk-scale robustness experiments.

Items belong to one of two topics whose titles draw on disjoint word pools, so
the hashing encoder separates them cleanly. Each user prefers one topic.
Optional exploratory positives model genuine interest drift: each user also
clicks items from a small crossover pool of the opposite topic chosen by a
latent user subtype, so predicting a user's held-out exploratory click
requires having learned from their own (low-similarity) exploratory history.
"""
from __future__ import annotations

import numpy as np

from .corpus import Interaction, ItemText

TOPIC_WORDS = (
    (
        "quantum", "circuit", "neutrino", "photon", "tensor", "plasma",
        "reactor", "isotope", "spectrum", "voltage", "magnet", "particle",
        "fusion", "entropy", "qubit", "laser",
    ),
    (
        "sonata", "violin", "allegro", "cantata", "melody", "harmony",
        "opera", "concerto", "rhapsody", "nocturne", "symphony", "aria",
        "ballad", "quartet", "prelude", "madrigal",
    ),
)


def generate_synthetic(
    n_users: int = 500,
    n_items: int = 200,
    positives_per_user: int = 30,
    exploratory_per_user: int = 0,
    crossover_per_topic: int = 8,
    words_per_title: int = 3,
    seed: int = 0,
) -> tuple[list[Interaction], list[ItemText]]:
    """Generate organic positives with topic-consistent titles.

    Item ``i`` has topic ``i % 2``; user ``u`` prefers topic ``u % 2``. Each
    user gets ``positives_per_user`` same-topic positives. When
    ``exploratory_per_user`` > 0, the user additionally clicks that many items
    from one of the opposite topic's two crossover pools (picked by the user's
    latent subtype ``(u // 2) % 2``). One exploratory click lands at the end of
    the user's timeline, so a chronological split holds it out and the
    exploratory interest stays label-consistent between train and test.
    """
    if positives_per_user > n_items // 2:
        raise ValueError("not enough items per topic for the requested positives")
    if exploratory_per_user > 0:
        if exploratory_per_user > crossover_per_topic:
            raise ValueError("exploratory_per_user cannot exceed crossover_per_topic")
        if 4 * crossover_per_topic > n_items:
            raise ValueError("crossover pools cannot cover more than the item set")
    rng = np.random.default_rng([seed, 2024])

    item_texts = []
    for item_id in range(n_items):
        pool = TOPIC_WORDS[item_id % 2]
        picks = rng.choice(len(pool), size=words_per_title, replace=False)
        item_texts.append(
            ItemText(item_id, " ".join(pool[w] for w in picks), category=f"topic-{item_id % 2}")
        )

    topic_items = tuple(
        np.array([i for i in range(n_items) if i % 2 == t]) for t in (0, 1)
    )
    # two disjoint crossover pools per topic, indexed by user subtype
    crossover = {
        (t, s): topic_items[t][s * crossover_per_topic : (s + 1) * crossover_per_topic]
        for t in (0, 1)
        for s in (0, 1)
    }

    interactions: list[Interaction] = []
    for user_id in range(n_users):
        topic = user_id % 2
        subtype = (user_id // 2) % 2
        chosen = rng.choice(topic_items[topic], size=positives_per_user, replace=False)
        if exploratory_per_user > 0:
            other = rng.choice(crossover[(1 - topic, subtype)], size=exploratory_per_user, replace=False)
            chosen = np.concatenate([chosen, other])
        total = len(chosen)
        times = rng.permutation(total)
        if exploratory_per_user > 0:
            early = rng.choice(
                max(int(total * 0.7), exploratory_per_user - 1),
                size=exploratory_per_user - 1,
                replace=False,
            )
            explore_times = np.concatenate([early, [total - 1]]).astype(int)
            taken = set(explore_times.tolist())
            organic_times = np.array([t for t in rng.permutation(total) if t not in taken])
            times = np.concatenate([organic_times, explore_times])
        for item_id, ts in zip(chosen, times):
            interactions.append(Interaction(int(user_id), int(item_id), 1, int(ts)))
    return interactions, item_texts
