import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxretrieval.evaluation import (DatasetManifest, ImageEntry, QueryEntry,
                                     SyntheticConfig, average_precision,
                                     generate_synthetic, load_image_png,
                                     load_manifest, mean_average_precision,
                                     save_image_png, save_manifest)
from ctxretrieval.tensor import Image, Rect


def ap_oracle(ranking, positive, junk=frozenset()):
    """Independent AP: explicit precision-at-k inner loop."""
    kept = [r for r in ranking if r not in junk]
    n_pos = len(set(positive) - set(junk))
    if n_pos == 0:
        return 0.0
    total = 0.0
    for k in range(1, len(kept) + 1):
        if kept[k - 1] in positive:
            total += sum(1 for item in kept[:k] if item in positive) / k
    return total / n_pos


class TestAveragePrecision:
    def test_positives_at_ranks_one_and_three(self):
        # P@1 = 1, P@3 = 2/3 -> (1 + 2/3) / 2
        ap = average_precision(["a", "x", "b"], {"a", "b"})
        assert ap == pytest.approx(5 / 6, abs=1e-12)

    def test_junk_between_positives_is_invisible(self):
        ap = average_precision(["a", "j", "b"], {"a", "b"}, junk={"j"})
        assert ap == pytest.approx(1.0, abs=1e-12)

    def test_single_positive_ranked_last(self):
        ranking = [f"n{i}" for i in range(9)] + ["p"]
        assert average_precision(ranking, {"p"}) == pytest.approx(0.1)

    def test_perfect_ranking(self):
        assert average_precision(["a", "b", "c", "x"], {"a", "b", "c"}) == 1.0

    def test_missing_positive_caps_score(self):
        # one of two positives never retrieved
        assert average_precision(["a", "x"], {"a", "b"}) == pytest.approx(0.5)

    def test_no_positives_warns_and_returns_zero(self):
        with pytest.warns(UserWarning):
            assert average_precision(["a", "b"], set()) == 0.0

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            average_precision(["a", "a"], {"a"})

    def test_matches_oracle_on_random_rankings(self):
        rng = np.random.default_rng(0)
        ids = [f"im{i}" for i in range(30)]
        for _ in range(100):
            ranking = list(rng.permutation(ids))
            labels = rng.integers(0, 3, size=30)  # 0 neg, 1 pos, 2 junk
            positive = {i for i, l in zip(ids, labels) if l == 1}
            junk = {i for i, l in zip(ids, labels) if l == 2}
            if not positive:
                positive = {ids[0]}
            got = average_precision(ranking, positive, junk)
            assert got == pytest.approx(ap_oracle(ranking, positive, junk),
                                        abs=1e-12)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_bounded_and_tail_invariant(self, seed):
        rng = np.random.default_rng(seed)
        ids = [f"i{k}" for k in range(12)]
        ranking = list(rng.permutation(ids))
        positive = set(rng.choice(ids, size=4, replace=False))
        ap = average_precision(ranking, positive)
        assert 0.0 <= ap <= 1.0
        # permuting items after the last positive cannot change AP
        last = max(i for i, r in enumerate(ranking) if r in positive)
        tail = ranking[last + 1:]
        shuffled = ranking[:last + 1] + list(rng.permutation(tail))
        assert average_precision(shuffled, positive) == pytest.approx(ap)


class TestMeanAveragePrecision:
    def test_mean_of_two(self):
        queries = (
            QueryEntry("q0", "a", Rect(0, 0, 1, 1), frozenset({"b"}), frozenset()),
            QueryEntry("q1", "a", Rect(0, 0, 1, 1), frozenset({"c"}), frozenset()),
        )
        rankings = {"q0": ["b", "c"], "q1": ["b", "c"]}
        assert mean_average_precision(rankings, queries) == pytest.approx(0.75)

    def test_missing_ranking_rejected(self):
        q = QueryEntry("q0", "a", Rect(0, 0, 1, 1), frozenset({"b"}), frozenset())
        with pytest.raises(ValueError, match="q0"):
            mean_average_precision({}, (q,))


class TestManifest:
    def test_roundtrip(self, tmp_path):
        manifest = DatasetManifest(
            images=(ImageEntry("a", "a.png", 8, 8), ImageEntry("b", "b.png", 8, 8)),
            queries=(QueryEntry("q0", "a", Rect(1, 2, 5, 6),
                                frozenset({"b"}), frozenset({"a"})),),
        )
        save_manifest(manifest, tmp_path / "m.json")
        assert load_manifest(tmp_path / "m.json") == manifest

    def test_unknown_reference_rejected(self):
        with pytest.raises(ValueError, match="unknown"):
            DatasetManifest(
                images=(ImageEntry("a", "a.png", 8, 8),),
                queries=(QueryEntry("q0", "a", Rect(0, 0, 1, 1),
                                    frozenset({"ghost"}), frozenset()),),
            )

    def test_positive_junk_overlap_rejected(self):
        with pytest.raises(ValueError, match="overlap"):
            QueryEntry("q0", "a", Rect(0, 0, 1, 1),
                       frozenset({"b"}), frozenset({"b"}))


class TestPngIO:
    def test_roundtrip_within_quantization(self, tmp_path):
        rng = np.random.default_rng(5)
        img = Image(rng.uniform(0, 1, (10, 12, 3)).astype(np.float32))
        save_image_png(img, tmp_path / "x.png")
        back = load_image_png(tmp_path / "x.png")
        assert back.data.shape == (10, 12, 3)
        assert np.abs(back.data - img.data).max() <= 0.5 / 255 + 1e-6


class TestSyntheticGenerator:
    def test_config_floor(self):
        with pytest.raises(ValueError):
            SyntheticConfig(n_images=5)

    def test_generation_is_byte_deterministic(self, tmp_path):
        cfg = SyntheticConfig(n_images=24, n_queries=3,
                              positives_per_class=2, lookalikes_per_class=3)
        m1 = generate_synthetic(7, tmp_path / "a", cfg)
        m2 = generate_synthetic(7, tmp_path / "b", cfg)
        assert m1.queries == m2.queries
        assert [e.id for e in m1.images] == [e.id for e in m2.images]
        for e1, e2 in zip(m1.images, m2.images):
            b1 = (tmp_path / "a" / e1.path).read_bytes()
            b2 = (tmp_path / "b" / e2.path).read_bytes()
            assert b1 == b2, e1.id
        assert ((tmp_path / "a" / "manifest.json").read_bytes()
                == (tmp_path / "b" / "manifest.json").read_bytes())

    def test_structure(self, tmp_path):
        cfg = SyntheticConfig(n_images=30, n_queries=4,
                              positives_per_class=2, lookalikes_per_class=3)
        manifest = generate_synthetic(3, tmp_path, cfg)
        assert len(manifest.images) == 30
        assert len(manifest.queries) == 4
        reloaded = load_manifest(tmp_path / "manifest.json")
        assert reloaded == manifest
        for q in manifest.queries:
            assert len(q.positive) >= 1
            # the query's own image is junk, not a free positive
            assert q.image in q.junk
            assert q.image not in q.positive

    def test_lookalikes_are_negatives(self, tmp_path):
        cfg = SyntheticConfig(n_images=30, n_queries=3,
                              positives_per_class=2, lookalikes_per_class=3)
        manifest = generate_synthetic(11, tmp_path, cfg)
        labeled = set()
        for q in manifest.queries:
            labeled |= q.positive | q.junk | {q.image}
        # look-alike distractors exist and stay out of every positive set
        assert len(labeled) < len(manifest.images) or all(
            len(q.positive) < cfg.n_images for q in manifest.queries)

    def test_images_decodable_and_sized(self, tmp_path):
        cfg = SyntheticConfig(n_images=24, n_queries=2, image_size=48,
                              positives_per_class=2, lookalikes_per_class=3)
        manifest = generate_synthetic(2, tmp_path, cfg)
        entry = manifest.images[0]
        img = load_image_png(tmp_path / entry.path)
        assert (img.width, img.height) == (48, 48)
        assert (entry.width, entry.height) == (48, 48)

    def test_roi_inside_query_image(self, tmp_path):
        cfg = SyntheticConfig(n_images=24, n_queries=3,
                              positives_per_class=2, lookalikes_per_class=3)
        manifest = generate_synthetic(4, tmp_path, cfg)
        by_id = {e.id: e for e in manifest.images}
        for q in manifest.queries:
            e = by_id[q.image]
            r = q.roi
            assert 0 <= r.x0 < r.x1 <= e.width
            assert 0 <= r.y0 < r.y1 <= e.height
