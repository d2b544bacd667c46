import numpy as np
import pytest

from said.corpus import chronological_split
from said.synth import TOPIC_WORDS, generate_synthetic


class TestGenerateSynthetic:
    def test_counts_and_topic_consistency(self):
        interactions, texts = generate_synthetic(n_users=20, n_items=40, positives_per_user=6, seed=3)
        assert len(interactions) == 20 * 6
        assert len(texts) == 40
        for it in interactions:
            assert it.user_id % 2 == it.item_id % 2  # no exploration requested
        for t in texts:
            pool = TOPIC_WORDS[t.item_id % 2]
            assert all(word in pool for word in t.title.split())

    def test_deterministic(self):
        a, _ = generate_synthetic(n_users=10, n_items=30, positives_per_user=5, seed=9)
        b, _ = generate_synthetic(n_users=10, n_items=30, positives_per_user=5, seed=9)
        assert a == b

    def test_exploratory_clicks_cross_topic_from_subtype_pool(self):
        interactions, _ = generate_synthetic(
            n_users=8, n_items=60, positives_per_user=10, exploratory_per_user=3, seed=1
        )
        by_user = {}
        for it in interactions:
            by_user.setdefault(it.user_id, []).append(it)
        for user_id, rows in by_user.items():
            cross = [it.item_id for it in rows if it.item_id % 2 != user_id % 2]
            assert len(cross) == 3
            # all of a user's exploratory items come from one 8-item pool
            pool_index = {i // 16 for i in cross}  # pools are 8 ids of one parity = stride-16 blocks
            assert len(pool_index) == 1

    def test_one_exploratory_click_is_latest(self):
        interactions, _ = generate_synthetic(
            n_users=6, n_items=60, positives_per_user=10, exploratory_per_user=3, seed=2
        )
        split = chronological_split(interactions, (0.8, 0.1, 0.1))
        for user_id in range(6):
            test_rows = [it for it in split.test if it.user_id == user_id]
            assert any(it.item_id % 2 != user_id % 2 for it in test_rows)

    def test_validation(self):
        with pytest.raises(ValueError, match="not enough items"):
            generate_synthetic(n_users=2, n_items=10, positives_per_user=6)
        with pytest.raises(ValueError, match="exceed"):
            generate_synthetic(n_users=2, n_items=100, positives_per_user=5,
                               exploratory_per_user=9, crossover_per_topic=8)
        with pytest.raises(ValueError, match="cover"):
            generate_synthetic(n_users=2, n_items=20, positives_per_user=5,
                               exploratory_per_user=2, crossover_per_topic=8)