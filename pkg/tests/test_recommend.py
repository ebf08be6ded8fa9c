import math
import random

import numpy as np
import pytest

from painter_atlas.corpus import generate_fixture
from painter_atlas.labels import SimilarityTable, compute_all_importances, default_table
from painter_atlas.recommend import (
    CohortProfile,
    RecommendError,
    cohort_hop_distances,
    normalize_weights,
    profile_cohort,
    recommend,
    recommendation_count,
    score_candidates,
    sim_geo,
    sim_identity,
    sim_inherit,
    sim_labels,
    sim_time,
)
from painter_atlas.resources import GeographyError, great_circle_km

from util import make_corpus, make_painter


def profile_of(**overrides):
    base = dict(
        members=frozenset({"m1"}),
        label_freq=(),
        provinces=frozenset(),
        years=(),
        level_freq=None,
    )
    base.update(overrides)
    return CohortProfile(**base)


# ---------------------------------------------------------------------------
# Cohort profiles
# ---------------------------------------------------------------------------


def test_profile_label_frequency():
    corpus = make_corpus(
        [
            make_painter("m1", 900, labels=["flower"]),
            make_painter("m2", 910, labels=["flower", "crane"]),
        ]
    )
    profile = profile_cohort(corpus, {"m1", "m2"})
    lfv = profile.lfv()
    assert lfv["flower"] == pytest.approx(2 / 3)
    assert lfv["crane"] == pytest.approx(1 / 3)
    assert sum(lfv.values()) == pytest.approx(1.0, abs=1e-9)


def test_profile_level_frequency():
    corpus = make_corpus(
        [make_painter("m1", 900, level=3), make_painter("m2", 910, level=3)]
    )
    profile = profile_cohort(corpus, {"m1", "m2"})
    assert profile.level_freq == (0.0, 0.0, 1.0, 0.0, 0.0)


def test_profile_without_levels_flags_identity_unavailable():
    corpus = make_corpus([make_painter("m1", 900), make_painter("c", 950, level=2)])
    profile = profile_cohort(corpus, {"m1"})
    assert profile.level_freq is None
    assert sim_identity(corpus.by_id("c"), profile) == (0.0, False)


def test_profile_rejects_empty_cohort():
    corpus = make_corpus([make_painter("m1", 900)])
    with pytest.raises(RecommendError, match="empty cohort"):
        profile_cohort(corpus, set())


# ---------------------------------------------------------------------------
# Per-dimension similarities
# ---------------------------------------------------------------------------


def test_sim_labels_identity_case():
    corpus = make_corpus([make_painter("p", 900, labels=["flower"])])
    weights = compute_all_importances(corpus)["p"]
    table = SimilarityTable(["flower"], np.array([[1.0]]))
    profile = profile_of(label_freq=(("flower", 1.0),))
    assert sim_labels(weights, profile, table) == (pytest.approx(1.0), True)


def test_sim_labels_single_term():
    corpus = make_corpus([make_painter("p", 900, labels=["flower"])])
    weights = compute_all_importances(corpus)["p"]
    table = SimilarityTable(["flower", "crane"], np.array([[1.0, 0.4], [0.4, 1.0]]))
    profile = profile_of(label_freq=(("crane", 1.0),))
    score, available = sim_labels(weights, profile, table)
    assert available and score == pytest.approx(0.4)


def test_sim_labels_four_term_expansion():
    corpus = make_corpus([make_painter("p", 900, labels=["flower", "crane"])])
    weights = compute_all_importances(corpus)["p"]  # 0.5 / 0.5
    table = SimilarityTable(["flower", "crane"], np.eye(2))
    profile = profile_of(label_freq=(("crane", 0.5), ("flower", 0.5)))
    score, _ = sim_labels(weights, profile, table)
    assert score == pytest.approx(0.5)


def test_sim_labels_empty_is_unavailable():
    corpus = make_corpus([make_painter("p", 900)])
    weights = compute_all_importances(corpus)["p"]
    table = SimilarityTable(["flower"], np.array([[1.0]]))
    assert sim_labels(weights, profile_of(label_freq=(("flower", 1.0),)), table) == (0.0, False)


def test_sim_geo_same_province_is_one():
    painter = make_painter("p", 900, province="zhejiang")
    score, available = sim_geo(painter, profile_of(provinces=frozenset({"zhejiang"})))
    assert available and score == pytest.approx(1.0)


def test_sim_geo_uses_minimum_distance():
    painter = make_painter("p", 900, province="zhejiang")
    profile = profile_of(provinces=frozenset({"jiangsu", "guangdong"}))
    score, _ = sim_geo(painter, profile)
    expected = math.exp(-great_circle_km("zhejiang", "jiangsu") / 1000.0)
    assert score == pytest.approx(expected)


def test_sim_geo_unknown_code_raises():
    painter = make_painter("p", 900, province="atlantis")
    with pytest.raises(GeographyError, match="unknown province"):
        sim_geo(painter, profile_of(provinces=frozenset({"zhejiang"})))


def test_sim_geo_unavailable_without_province():
    painter = make_painter("p", 900)
    assert sim_geo(painter, profile_of(provinces=frozenset({"zhejiang"}))) == (0.0, False)


def test_sim_time_century_gap():
    painter = make_painter("p", 1000)
    score, available = sim_time(painter, profile_of(years=(900,)))
    assert available and score == pytest.approx(math.exp(-1.0))


def test_sim_time_minimum_rule():
    painter = make_painter("p", 1000)
    score, _ = sim_time(painter, profile_of(years=(950, 1200)))
    assert score == pytest.approx(math.exp(-0.5))


def test_sim_identity_lookups():
    assert sim_identity(
        make_painter("p", 900, level=3), profile_of(level_freq=(0, 0, 1.0, 0, 0))
    ) == (pytest.approx(1.0), True)
    assert sim_identity(
        make_painter("p", 900, level=2), profile_of(level_freq=(0.5, 0.5, 0, 0, 0))
    ) == (pytest.approx(0.5), True)
    assert sim_identity(
        make_painter("p", 900, level=1), profile_of(level_freq=(0, 0, 1.0, 0, 0))
    ) == (0.0, True)


def test_sim_inherit_direct_master():
    corpus = make_corpus(
        [make_painter("m", 900), make_painter("a", 940)], [("a", "m")]
    )
    hops = cohort_hop_distances(corpus, {"a"})
    assert sim_inherit("m", hops) == (0.5, True)


def test_sim_inherit_unreachable():
    corpus = make_corpus([make_painter("m", 900), make_painter("x", 940)])
    hops = cohort_hop_distances(corpus, {"m"})
    assert sim_inherit("x", hops) == (0.0, True)


def test_sim_inherit_max_rule():
    # candidate sits 2 hops from m1 and 4 hops from m2; the max similarity wins
    corpus = make_corpus(
        [make_painter(p, 900 + 10 * i) for i, p in enumerate(["c", "a", "m1", "b", "d", "m2"])],
        [("a", "c"), ("m1", "a"), ("b", "c"), ("d", "b"), ("m2", "d")],
    )
    hops = cohort_hop_distances(corpus, {"m1", "m2"})
    assert hops["c"] == 2
    assert sim_inherit("c", hops) == (0.25, True)


def test_hop_distance_capped():
    painters = [make_painter(f"p{i}", 900 + i * 10) for i in range(9)]
    relations = [(f"p{i}", f"p{i-1}") for i in range(1, 9)]
    corpus = make_corpus(painters, relations)
    hops = cohort_hop_distances(corpus, {"p0"})
    assert hops["p6"] == 6
    assert "p7" not in hops
    assert sim_inherit("p7", hops) == (0.0, True)


def test_kernels_monotone_and_unit_at_zero():
    painter_years = [make_painter("p", 1000)]
    gaps = [0, 10, 50, 100, 400]
    scores = [
        sim_time(make_painter("p", 1000), profile_of(years=(1000 - g,)))[0] for g in gaps
    ]
    assert scores[0] == pytest.approx(1.0)
    assert all(a >= b for a, b in zip(scores, scores[1:]))


# ---------------------------------------------------------------------------
# Weight normalization
# ---------------------------------------------------------------------------


def test_normalize_rescales_over_available():
    weights = normalize_weights((0.2,) * 5, (True, False, True, True, True))
    assert weights == (0.25, 0.0, 0.25, 0.25, 0.25)
    assert sum(weights) == pytest.approx(1.0, abs=1e-9)


def test_normalize_identity_when_all_available():
    assert normalize_weights((0.2,) * 5, (True,) * 5) == (0.2,) * 5


def test_normalize_rejects_unusable():
    with pytest.raises(RecommendError, match="no usable dimensions"):
        normalize_weights((1, 0, 0, 0, 0), (False, True, True, True, True))
    with pytest.raises(RecommendError, match="5 nonnegative"):
        normalize_weights((0.5, 0.5), (True, True))


# ---------------------------------------------------------------------------
# Ranking
# ---------------------------------------------------------------------------


def test_recommendation_counts():
    assert recommendation_count(10) == 4
    assert recommendation_count(7) == 3
    assert recommendation_count(1) == 1


def test_recommend_count_from_cohort(fixture_corpus):
    cohort = [p.id for p in fixture_corpus.painters[:10]]
    assert len(recommend(fixture_corpus, cohort)) == 4
    assert len(recommend(fixture_corpus, [p.id for p in fixture_corpus.painters[:7]])) == 3


def test_pool_exhaustion_returns_everyone_left(fixture_corpus):
    everyone = [p.id for p in fixture_corpus.painters]
    results = recommend(fixture_corpus, everyone[:-1])
    assert [r.painter_id for r in results] == [everyone[-1]]


def test_scores_and_bounds(fixture_corpus):
    cohort = [p.id for p in fixture_corpus.painters[:12]]
    for result in score_candidates(fixture_corpus, cohort):
        assert 0.0 <= result.score <= 1.0
        assert all(0.0 <= s <= 1.0 for s in result.scores)
        total = sum(result.weights)
        assert total == pytest.approx(1.0, abs=1e-9) or total == 0.0


def test_ranking_invariance_under_beta_scaling(fixture_corpus):
    cohort = [p.id for p in fixture_corpus.painters[:9]]
    base = [r.painter_id for r in score_candidates(fixture_corpus, cohort, (0.2,) * 5)]
    scaled = [r.painter_id for r in score_candidates(fixture_corpus, cohort, (7.0,) * 5)]
    assert base == scaled


def test_adding_member_never_decreases_inherit_similarity(fixture_corpus):
    corpus = fixture_corpus
    members = [p.id for p in corpus.painters[:6]]
    extra = corpus.painters[20].id
    before = cohort_hop_distances(corpus, members)
    after = cohort_hop_distances(corpus, members + [extra])
    for painter in corpus.painters:
        s_before = sim_inherit(painter.id, before)[0]
        s_after = sim_inherit(painter.id, after)[0]
        assert s_after >= s_before


def test_unknown_cohort_member_rejected(fixture_corpus):
    with pytest.raises(RecommendError, match="not in corpus"):
        recommend(fixture_corpus, ["ghost"])


# ---------------------------------------------------------------------------
# Exhaustive straight-line oracle on small corpora
# ---------------------------------------------------------------------------


def oracle_scores(corpus, cohort, beta, table, importances):
    """Term-by-term reimplementation of the whole scoring path."""
    members = sorted(set(cohort))
    member_set = set(members)
    counts = {}
    for pid in members:
        for label in importances[pid].labels():
            counts[label] = counts.get(label, 0) + 1
    total = sum(counts.values())
    lfv = [(l, c / total) for l, c in sorted(counts.items())] if total else []
    provinces = sorted(
        {corpus.by_id(p).province for p in members if corpus.by_id(p).province}
    )
    years = [corpus.by_id(p).birth_year for p in members if corpus.by_id(p).birth_year is not None]
    levels = [corpus.by_id(p).official_level for p in members if corpus.by_id(p).official_level]
    freq = [levels.count(k) / len(levels) for k in range(1, 6)] if levels else None

    adjacency = {}
    for a, m in corpus.inheritance_edges():
        adjacency.setdefault(a, set()).add(m)
        adjacency.setdefault(m, set()).add(a)

    scores = {}
    for painter in corpus.painters:
        if painter.id in member_set:
            continue
        s = [0.0] * 5
        available = [False] * 5
        weights = importances[painter.id].weights
        if weights and lfv:
            s[0] = sum(
                wi * table.sim(li, lj) * fj for li, wi in weights for lj, fj in lfv
            )
            available[0] = True
        if painter.province and provinces:
            d = min(great_circle_km(painter.province, other) for other in provinces) / 1000.0
            s[1] = math.exp(-d)
            available[1] = True
        if painter.birth_year is not None and years:
            d = min(abs(painter.birth_year - y) for y in years) / 100.0
            s[2] = math.exp(-d)
            available[2] = True
        if painter.official_level and freq:
            s[3] = freq[painter.official_level - 1]
            available[3] = True
        frontier, seen, hit = {painter.id}, {painter.id}, None
        for depth in range(1, 7):
            nxt = set()
            for node in frontier:
                nxt |= adjacency.get(node, set())
            nxt -= seen
            if not nxt:
                break
            if nxt & member_set:
                hit = depth
                break
            seen |= nxt
            frontier = nxt
        s[4] = 2.0 ** -hit if hit is not None else 0.0
        available[4] = True
        masked = [b if ok else 0.0 for b, ok in zip(beta, available)]
        weight_total = sum(masked)
        applied = [b / weight_total for b in masked] if weight_total > 0 else [0.0] * 5
        scores[painter.id] = sum(w * v for w, v in zip(applied, s))
    return scores


def test_small_corpus_oracle_matches():
    rng = random.Random(4242)
    table = default_table()
    for trial in range(30):
        corpus = generate_fixture(seed=trial + 100, n=rng.randint(8, 20), era=(850, 1850))
        pids = [p.id for p in corpus.painters]
        cohort = rng.sample(pids, rng.randint(1, max(1, len(pids) // 2)))
        beta = tuple(rng.random() for _ in range(5))
        if sum(beta) == 0:
            beta = (0.2,) * 5
        importances = compute_all_importances(corpus)
        expected = oracle_scores(corpus, cohort, beta, table, importances)
        got = {
            r.painter_id: r.score
            for r in score_candidates(corpus, cohort, beta, table, importances)
        }
        assert set(got) == set(expected)
        for pid in expected:
            assert got[pid] == pytest.approx(expected[pid], abs=1e-12)
