import numpy as np
import pytest

from painter_atlas.corpus import CorpusError
from painter_atlas.labels import (
    DIMENSIONS,
    LabelNode,
    LabelTaxonomy,
    SimilarityTable,
    TaxonomyError,
    TrigramHashEmbedding,
    build_ast,
    builtin_taxonomy,
    compute_all_importances,
    compute_importance,
    label_combinations,
    label_distribution,
    load_taxonomy,
)

from util import make_corpus, make_painter


# ---------------------------------------------------------------------------
# Taxonomy
# ---------------------------------------------------------------------------


def test_builtin_taxonomy_shape(taxonomy):
    assert len(taxonomy) == 40
    for dim in DIMENSIONS:
        assert taxonomy.roots(dim)
    assert taxonomy.depth("buddha_statues") == 3
    assert taxonomy.subtree("flower_bird") >= {"flower_bird", "flower", "bird_beast", "crane"}


def test_cross_dimension_parent_rejected():
    with pytest.raises(TaxonomyError, match="another dimension"):
        LabelTaxonomy(
            [
                LabelNode("a", "subject", None, "A"),
                LabelNode("b", "technique", "a", "B"),
            ]
        )


def test_depth_limit_enforced():
    nodes = [
        LabelNode("l1", "subject", None, "1"),
        LabelNode("l2", "subject", "l1", "2"),
        LabelNode("l3", "subject", "l2", "3"),
        LabelNode("l4", "subject", "l3", "4"),
    ]
    with pytest.raises(TaxonomyError, match="depth exceeds 3"):
        LabelTaxonomy(nodes)


def test_orphan_parent_and_duplicates_rejected():
    with pytest.raises(TaxonomyError, match="does not exist"):
        LabelTaxonomy([LabelNode("a", "subject", "ghost", "A")])
    with pytest.raises(TaxonomyError, match="duplicate"):
        LabelTaxonomy(
            [LabelNode("a", "subject", None, "A"), LabelNode("a", "subject", None, "A2")]
        )


def test_load_taxonomy_file(tmp_path):
    path = tmp_path / "taxonomy.json"
    path.write_text(
        '[{"id": "a", "dimension": "subject", "parent": null, "name": "A"}]',
        encoding="utf-8",
    )
    assert len(load_taxonomy(path)) == 1
    with pytest.raises(TaxonomyError, match="cannot read"):
        load_taxonomy(tmp_path / "missing.json")


# ---------------------------------------------------------------------------
# Embeddings and the similarity table
# ---------------------------------------------------------------------------


def test_provider_deterministic():
    provider = TrigramHashEmbedding()
    a = provider.encode("meticulous brushwork")
    b = provider.encode("meticulous brushwork")
    assert np.array_equal(a, b)
    assert abs(float(np.linalg.norm(a)) - 1.0) < 1e-12


def test_identical_descriptions_give_similarity_one(taxonomy):
    descriptions = {node.id: "the same sentence" for node in taxonomy.nodes}
    table = build_ast(taxonomy, descriptions=descriptions)
    assert table.sim("figure", "crane") == pytest.approx(1.0)


def test_table_symmetry_and_diagonal(table, taxonomy):
    n = len(taxonomy)
    assert table.matrix.shape == (n, n)
    assert np.allclose(table.matrix, table.matrix.T)
    assert np.allclose(np.diag(table.matrix), 1.0)
    assert float(table.matrix.min()) >= 0.0
    assert float(table.matrix.max()) <= 1.0


def test_orthogonal_descriptions_clamp_to_zero():
    taxonomy = LabelTaxonomy(
        [LabelNode("a", "subject", None, "A"), LabelNode("b", "subject", None, "B")]
    )
    # these two texts share no character trigram buckets under the default provider
    table = build_ast(taxonomy, descriptions={"a": "aaaa", "b": "bbbb"})
    assert table.sim("a", "b") == 0.0


def test_table_round_trip(tmp_path, table):
    path = tmp_path / "ast.json"
    table.save(path)
    loaded = SimilarityTable.load(path)
    assert loaded.label_ids == table.label_ids
    assert np.allclose(loaded.matrix, table.matrix)


# ---------------------------------------------------------------------------
# Importance propagation
# ---------------------------------------------------------------------------


def lineage_corpus():
    # z apprenticed under y, who apprenticed under x; x and y both carry L
    return make_corpus(
        [
            make_painter("x", 900, labels=["flower"]),
            make_painter("y", 935, labels=["flower"]),
            make_painter("z", 970, labels=["crane"]),
        ],
        [("y", "x"), ("z", "y")],
    )


def test_chain_hand_computation():
    weights = compute_importance(lineage_corpus(), "z")
    got = weights.as_dict()
    # raw: crane 1.0, flower 0.5 + 0.25; normalized over 1.75
    assert got["crane"] == pytest.approx(1.0 / 1.75)
    assert got["flower"] == pytest.approx(0.75 / 1.75)
    assert sum(got.values()) == pytest.approx(1.0, abs=1e-9)


def test_no_masters_single_label():
    corpus = make_corpus([make_painter("solo", 900, labels=["mogu"])])
    assert compute_importance(corpus, "solo").as_dict() == {"mogu": 1.0}


def test_unknown_painter():
    with pytest.raises(CorpusError):
        compute_importance(lineage_corpus(), "ghost")


def pure_chain(k, apex_labels=("splashed_ink",)):
    """apex -> g1 -> ... -> gk; only the apex carries labels."""
    painters = [make_painter("apex", 700, labels=list(apex_labels))]
    relations = []
    for i in range(1, k + 1):
        painters.append(make_painter(f"g{i}", 700 + 30 * i))
        relations.append((f"g{i}", "apex" if i == 1 else f"g{i-1}"))
    return make_corpus(painters, relations)


def test_generational_halving_exact():
    for k in range(1, 7):
        weights = compute_importance(pure_chain(k), f"g{k}")
        own, inherited = dict(weights.provenance)["splashed_ink"]
        assert own == 0.0
        assert inherited == 2.0 ** -k  # exact in binary floating point
        assert weights.as_dict() == {"splashed_ink": 1.0}


def test_depth_cap_cuts_distant_ancestors():
    corpus = pure_chain(7, apex_labels=("mogu",))
    assert "mogu" not in compute_importance(corpus, "g7", max_depth=6).as_dict()
    assert "mogu" in compute_importance(corpus, "g6", max_depth=6).as_dict()


def test_diamond_counts_ancestor_once():
    corpus = make_corpus(
        [
            make_painter("a", 900, labels=["mogu"]),
            make_painter("b", 940, labels=["flower"]),
            make_painter("c", 945, labels=["crane"]),
            make_painter("d", 980, labels=["ornate"]),
        ],
        [("b", "a"), ("c", "a"), ("d", "b"), ("d", "c")],
    )
    prov = dict(compute_importance(corpus, "d").provenance)
    # a sits at minimal distance 2 on both paths; contributes 2^-2 once
    assert prov["mogu"][1] == pytest.approx(0.25)


def test_truncation_rule():
    # 3 own labels, 6 at one generation, 4 at two generations: the deepest
    # four normalize to 0.25/7 < 0.05 and must be cut
    taxonomy = builtin_taxonomy()
    names = [n.id for n in taxonomy.nodes]
    own, near, far = names[:3], names[3:9], names[9:13]
    corpus = make_corpus(
        [
            make_painter("p", 1000, labels=own),
            make_painter("m1", 960, labels=near),
            make_painter("m2", 920, labels=far),
        ],
        [("p", "m1"), ("m1", "m2")],
    )
    weights = compute_importance(corpus, "p")
    assert len(weights.weights) <= 10
    kept = weights.as_dict()
    assert set(kept) == set(own) | set(near)
    assert sum(kept.values()) == pytest.approx(1.0, abs=1e-9)
    raw_total = 3 * 1.0 + 6 * 0.5 + 4 * 0.25
    for label in far:
        assert 0.25 / raw_total < 0.05  # the reason they were cut
        assert label not in kept


def test_painter_with_no_labels_anywhere():
    corpus = make_corpus([make_painter("bare", 900)])
    weights = compute_importance(corpus, "bare")
    assert weights.weights == ()


def test_compute_all_importances_cached(fixture_corpus):
    first = compute_all_importances(fixture_corpus)
    assert compute_all_importances(fixture_corpus) is first
    assert set(first) == {p.id for p in fixture_corpus.painters}


# ---------------------------------------------------------------------------
# Distribution and combinations
# ---------------------------------------------------------------------------


def distribution_corpus():
    return make_corpus(
        [
            make_painter("p1", 900, labels=["flower_bird"]),
            make_painter("p2", 910, labels=["flower_bird", "iron_wire"]),
            make_painter("p3", 920, labels=["landscape"]),
        ]
    )


def test_distribution_counts():
    dist = label_distribution(distribution_corpus(), set())
    subject = {e["id"]: e for e in dist["subject"]}
    assert subject["flower_bird"]["total"] == 2
    assert subject["landscape"]["total"] == 1


def test_focus_mode_hides_unrelated_dimensions():
    corpus = distribution_corpus()
    dist = label_distribution(corpus, {"p1", "p3"}, mode="focus")
    assert dist["technique"] == []
    assert {e["id"] for e in dist["subject"]} == {"flower_bird", "landscape"}


def test_rollup_sums_children():
    corpus = make_corpus(
        [
            make_painter("p1", 900, labels=["flower"]),
            make_painter("p2", 910, labels=["flower"]),
            make_painter("p3", 920, labels=["bird_beast"]),
        ]
    )
    dist = label_distribution(corpus, set())
    parent = next(e for e in dist["subject"] if e["id"] == "flower_bird")
    assert parent["total"] == 0  # no direct tags
    assert parent["rolled_total"] == 3


def test_rollup_counts_distinct_painters():
    corpus = make_corpus([make_painter("p1", 900, labels=["flower", "bird_beast"])])
    dist = label_distribution(corpus, set())
    parent = next(e for e in dist["subject"] if e["id"] == "flower_bird")
    assert parent["rolled_total"] == 1


def combo_corpus():
    return make_corpus(
        [
            make_painter("p1", 900, labels=["figure", "iron_wire"]),
            make_painter("p2", 910, labels=["figure", "iron_wire"]),
            make_painter("p3", 920, labels=["figure", "silk_thread"]),
        ]
    )


def test_combinations_nested_counts():
    result = label_combinations(combo_corpus(), {"p1", "p2", "p3"}, ("subject", "technique"))
    (figure,) = result["tree"]
    assert (figure["label"], figure["count"]) == ("figure", 3)
    children = {c["label"]: c["count"] for c in figure["children"]}
    assert children == {"iron_wire": 2, "silk_thread": 1}


def test_combinations_pruning():
    result = label_combinations(
        combo_corpus(), {"p1", "p2", "p3"}, ("subject", "technique"), min_count=2
    )
    (figure,) = result["tree"]
    assert figure["count"] == 3
    assert [c["label"] for c in figure["children"]] == ["iron_wire"]


def test_combinations_empty_selection():
    result = label_combinations(combo_corpus(), set(), ("subject", "technique"))
    assert result["tree"] == []
    assert result["recommended_threshold"] == 1


def test_combinations_invalid_dimension_order():
    corpus = combo_corpus()
    for bad in ((), ("subject", "subject"), ("subject", "nope"), ("a", "b", "c", "d")):
        with pytest.raises(ValueError):
            label_combinations(corpus, set(), bad)


def test_combination_leaves_bounded_by_distribution(fixture_corpus):
    selection = {p.id for p in fixture_corpus.painters}
    dist = label_distribution(fixture_corpus, selection)
    totals = {e["id"]: e["selected"] for dim in DIMENSIONS for e in dist[dim]}
    result = label_combinations(fixture_corpus, selection, ("subject", "technique"))

    leaf_sums: dict[str, int] = {}

    def walk(nodes):
        for node in nodes:
            if not node["children"]:
                leaf_sums[node["label"]] = leaf_sums.get(node["label"], 0) + node["count"]
            walk(node["children"])

    walk(result["tree"])
    for label, total in leaf_sums.items():
        assert total <= sum(
            totals[l] for l in (label,) if l in totals
        ) or total <= len(selection)
