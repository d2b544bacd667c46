import numpy as np
import pytest

from said.corpus import Interaction, Origin, chronological_split, sample_negatives
from said.reweight import (
    WeightConfig,
    WeightError,
    assign_weights,
    dump_weights_tsv,
    weight_of,
)
from said.semantics import SimilarityTable


def sims_for(scores, sentinels=()):
    mu = float(np.mean(list(scores.values()))) if scores else 0.0
    return SimilarityTable(scores=dict(scores), sentinels=frozenset(sentinels), mu=mu)


class TestWeightOf:
    def test_midpoint_value(self):
        cfg = WeightConfig(alpha=0.4, beta=5.0, mu=0.3)
        assert weight_of(0.3, cfg) == 0.7

    def test_midpoint_identity_exact(self):
        rng = np.random.default_rng(21)
        for alpha in rng.uniform(0.0, 1.0, size=2000):
            cfg = WeightConfig(alpha=float(alpha), beta=3.0, mu=0.1)
            assert weight_of(0.1, cfg) == (1.0 + float(alpha)) / 2.0

    def test_alpha_one_collapses_to_one(self):
        rng = np.random.default_rng(22)
        cfg = WeightConfig(alpha=1.0, beta=5.0, mu=0.0)
        for s in rng.uniform(-1.0, 1.0, size=1000):
            assert weight_of(float(s), cfg) == 1.0

    def test_high_similarity_value(self):
        # sigmoid(5 * 0.7) = 0.97068777, so w = 0.4 + 0.6 * 0.97068777
        cfg = WeightConfig(alpha=0.4, beta=5.0, mu=0.2)
        assert weight_of(0.9, cfg) == pytest.approx(0.98241, abs=1e-4)

    def test_monotone_in_s(self):
        rng = np.random.default_rng(23)
        for _ in range(2000):
            alpha = float(rng.uniform(0.0, 0.99))
            beta = float(rng.uniform(0.1, 20.0))
            mu = float(rng.uniform(-0.5, 0.5))
            s1, s2 = sorted(rng.uniform(-1.0, 1.0, size=2))
            if s1 == s2:
                continue
            cfg = WeightConfig(alpha=alpha, beta=beta, mu=mu)
            assert weight_of(s2, cfg) > weight_of(s1, cfg)

    def test_bounds_strict_for_finite_s(self):
        rng = np.random.default_rng(24)
        cfg = WeightConfig(alpha=0.25, beta=8.0, mu=0.0)
        for s in rng.uniform(-1.0, 1.0, size=1000):
            w = weight_of(float(s), cfg)
            assert cfg.alpha < w < 1.0

    def test_limits(self):
        cfg = WeightConfig(alpha=0.3, beta=5.0, mu=0.0)
        assert weight_of(-1e9, cfg) == pytest.approx(0.3, abs=1e-12)
        assert weight_of(1e9, cfg) == pytest.approx(1.0, abs=1e-12)

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            WeightConfig(alpha=1.5, beta=5.0, mu=0.0)
        with pytest.raises(ValueError):
            WeightConfig(alpha=0.4, beta=0.0, mu=0.0)


class TestAssignWeights:
    def make_split(self):
        rows = [Interaction(1, i, 1, i * 10) for i in range(3)]
        rows += [Interaction(2, i + 10, 1, i * 10) for i in range(3)]
        split = chronological_split(rows)
        return sample_negatives(split, ratio=1, seed=0)

    def test_negatives_weight_one(self):
        split = self.make_split()
        scores = {(it.user_id, it.item_id): 0.5 for it in split.train if it.label == 1}
        out = assign_weights(split, sims_for(scores), WeightConfig(0.4, 5.0, 0.5))
        for ws in out:
            if ws.interaction.label == 0:
                assert ws.weight == 1.0

    def test_alpha_one_all_weights_one(self):
        split = self.make_split()
        scores = {
            (it.user_id, it.item_id): float(np.random.default_rng(1).uniform(-1, 1))
            for it in split.train
            if it.label == 1
        }
        out = assign_weights(split, sims_for(scores), WeightConfig(1.0, 5.0, 0.0))
        assert all(ws.weight == 1.0 for ws in out)

    def test_order_preserved(self):
        split = self.make_split()
        scores = {(it.user_id, it.item_id): 0.1 for it in split.train if it.label == 1}
        out = assign_weights(split, sims_for(scores), WeightConfig(0.4, 5.0, 0.0))
        assert [ws.interaction for ws in out] == list(split.train)

    def test_monotone_pair(self):
        split = self.make_split()
        positives = [it for it in split.train if it.label == 1]
        scores = {(it.user_id, it.item_id): 0.2 for it in positives}
        hi = (positives[0].user_id, positives[0].item_id)
        lo = (positives[1].user_id, positives[1].item_id)
        scores[hi], scores[lo] = 0.9, -0.4
        out = {(
            ws.interaction.user_id, ws.interaction.item_id): ws.weight
            for ws in assign_weights(split, sims_for(scores), WeightConfig(0.4, 5.0, 0.2))
            if ws.interaction.label == 1
        }
        assert out[hi] > out[lo]

    def test_sentinel_gets_weight_one(self):
        split = self.make_split()
        positives = [it for it in split.train if it.label == 1]
        sentinel = (positives[0].user_id, positives[0].item_id)
        scores = {(it.user_id, it.item_id): 0.3 for it in positives[1:]}
        sims = sims_for(scores, sentinels=[sentinel])
        out = assign_weights(split, sims, WeightConfig(0.4, 5.0, 0.3))
        by_key = {(ws.interaction.user_id, ws.interaction.item_id): ws for ws in out}
        assert by_key[sentinel].weight == 1.0

    def test_missing_score_raises(self):
        split = self.make_split()
        with pytest.raises(WeightError):
            assign_weights(split, sims_for({}), WeightConfig(0.4, 5.0, 0.0))

    def test_noise_weighted_like_organic(self):
        # same similarity score => same weight, regardless of origin tag
        from said.corpus import DatasetSplit

        organic = Interaction(1, 2, 1, 0)
        injected = Interaction(1, 3, 1, 0, Origin.INJECTED_NOISE)
        split = DatasetSplit(
            train=(organic, injected),
            validation=(),
            test=(),
            users=frozenset({1}),
            items=frozenset({2, 3}),
            histories={1: (2,)},
        )
        sims = sims_for({(1, 2): 0.25, (1, 3): 0.25})
        out = assign_weights(split, sims, WeightConfig(0.4, 5.0, 0.1))
        assert out[0].weight == out[1].weight

    def test_dump_tsv(self, tmp_path):
        split = self.make_split()
        scores = {(it.user_id, it.item_id): 0.5 for it in split.train if it.label == 1}
        sims = sims_for(scores)
        out = assign_weights(split, sims, WeightConfig(0.4, 5.0, 0.5))
        path = tmp_path / "weights.tsv"
        dump_weights_tsv(path, out, sims)
        lines = path.read_text().splitlines()
        assert lines[0] == "user_id\titem_id\tsimilarity\tweight"
        assert len(lines) == 1 + len(scores)
        assert all(line.split("\t")[3] == "0.7" for line in lines[1:])
