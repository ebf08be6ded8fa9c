"""Artistic style labels: taxonomy, similarity table, lineage-weighted importance.

The taxonomy is a three-dimension forest (subjects, techniques, emotions) at
most three levels deep. Label-pair similarity is precomputed into a symmetric
lookup table from text embeddings; the default embedding provider is a
deterministic character-trigram hasher so the table is reproducible offline,
and any object with an ``encode(text)`` method can be swapped in.

A painter's label importance blends their own labels with those inherited
along the master lineage, each ancestor discounted by half per generation,
then keeps only the top ten labels with weight at least 0.05.
"""

from __future__ import annotations

import json
import math
import zlib
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .resources import DATA_DIR

DIMENSIONS = ("subject", "technique", "emotion")
MAX_TAXONOMY_DEPTH = 3

MAX_LABELS_KEPT = 10
MIN_KEPT_WEIGHT = 0.05
DEFAULT_MAX_DEPTH = 6  # lineage hops; 2**-6 cannot survive the 0.05 cut anyway


class TaxonomyError(Exception):
    pass


class StaleTableError(Exception):
    """A label was not found in the similarity table; rebuild it."""


@dataclass(frozen=True)
class LabelNode:
    id: str
    dimension: str
    parent: str | None
    name: str


class LabelTaxonomy:
    """Validated three-dimension label forest with fold helpers."""

    def __init__(self, nodes):
        self.nodes: tuple[LabelNode, ...] = tuple(nodes)
        self.by_id = {}
        for node in self.nodes:
            if node.id in self.by_id:
                raise TaxonomyError(f"duplicate label id {node.id!r}")
            if node.dimension not in DIMENSIONS:
                raise TaxonomyError(f"label {node.id!r}: unknown dimension {node.dimension!r}")
            self.by_id[node.id] = node
        self.children: dict[str, list[str]] = {node.id: [] for node in self.nodes}
        for node in self.nodes:
            if node.parent is None:
                continue
            parent = self.by_id.get(node.parent)
            if parent is None:
                raise TaxonomyError(f"label {node.id!r}: parent {node.parent!r} does not exist")
            if parent.dimension != node.dimension:
                raise TaxonomyError(
                    f"label {node.id!r}: parent {node.parent!r} is in another dimension"
                )
            self.children[node.parent].append(node.id)
        self._depths = {}
        for node in self.nodes:
            depth, seen = 1, {node.id}
            cursor = node
            while cursor.parent is not None:
                if cursor.parent in seen:
                    raise TaxonomyError(f"parent cycle at label {node.id!r}")
                seen.add(cursor.parent)
                cursor = self.by_id[cursor.parent]
                depth += 1
                if depth > MAX_TAXONOMY_DEPTH:
                    raise TaxonomyError(f"label {node.id!r}: depth exceeds {MAX_TAXONOMY_DEPTH}")
            self._depths[node.id] = depth

    def __contains__(self, label_id):
        return label_id in self.by_id

    def __len__(self):
        return len(self.nodes)

    def depth(self, label_id: str) -> int:
        return self._depths[label_id]

    def dimension_of(self, label_id: str) -> str:
        return self.by_id[label_id].dimension

    def roots(self, dimension: str):
        return [n.id for n in self.nodes if n.dimension == dimension and n.parent is None]

    def subtree(self, label_id: str) -> set[str]:
        """The label and all its descendants (fold closure)."""
        out, queue = set(), deque([label_id])
        while queue:
            current = queue.popleft()
            if current in out:
                continue
            out.add(current)
            queue.extend(self.children.get(current, ()))
        return out


def load_taxonomy(path) -> LabelTaxonomy:
    if path is None or path == "builtin:taxonomy":
        return builtin_taxonomy()
    try:
        rows = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise TaxonomyError(f"cannot read taxonomy {path}: {exc}") from exc
    return _taxonomy_from_rows(rows)


def _taxonomy_from_rows(rows):
    nodes = [
        LabelNode(row["id"], row["dimension"], row.get("parent"), row.get("name", row["id"]))
        for row in rows
    ]
    return LabelTaxonomy(nodes)


@lru_cache(maxsize=1)
def builtin_taxonomy() -> LabelTaxonomy:
    rows = json.loads((DATA_DIR / "taxonomy.json").read_text(encoding="utf-8"))
    return _taxonomy_from_rows(rows)


@lru_cache(maxsize=1)
def builtin_descriptions() -> dict:
    return json.loads((DATA_DIR / "label_descriptions.json").read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Embeddings and the similarity table
# ---------------------------------------------------------------------------


class TrigramHashEmbedding:
    """Deterministic character-trigram hashing embedding.

    Trigrams of the padded, lower-cased text are hashed (crc32) into a
    fixed-width count vector, then L2-normalized. Same text, same vector,
    no model downloads.
    """

    name = "trigram-hash"
    deterministic = True

    def __init__(self, dimensionality: int = 256):
        self.dimensionality = dimensionality

    def encode(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimensionality)
        padded = f"##{text.strip().lower()}##"
        for i in range(len(padded) - 2):
            bucket = zlib.crc32(padded[i : i + 3].encode("utf-8")) % self.dimensionality
            vec[bucket] += 1.0
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec


class SimilarityTable:
    """Symmetric label-pair similarity lookup with unit diagonal."""

    def __init__(self, label_ids, matrix):
        self.label_ids = tuple(label_ids)
        self.matrix = np.asarray(matrix, dtype=float)
        if self.matrix.shape != (len(self.label_ids), len(self.label_ids)):
            raise ValueError("similarity matrix shape does not match label list")
        self.index = {label: i for i, label in enumerate(self.label_ids)}

    def __contains__(self, label_id):
        return label_id in self.index

    def sim(self, a: str, b: str) -> float:
        try:
            return float(self.matrix[self.index[a], self.index[b]])
        except KeyError as exc:
            raise StaleTableError(f"label {exc.args[0]!r} missing from similarity table") from None

    def row(self, label_id: str) -> np.ndarray:
        try:
            return self.matrix[self.index[label_id]]
        except KeyError:
            raise StaleTableError(f"label {label_id!r} missing from similarity table") from None

    def save(self, path) -> None:
        doc = {"labels": list(self.label_ids), "matrix": [list(map(float, row)) for row in self.matrix]}
        Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SimilarityTable":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(doc["labels"], doc["matrix"])


def build_ast(taxonomy: LabelTaxonomy, provider=None, descriptions=None) -> SimilarityTable:
    """Build the artistic similarity table from label descriptions.

    Each label's description (display name as fallback) is embedded and the
    table entry is the cosine similarity clamped into [0, 1], diagonal
    forced to 1.
    """
    provider = provider or TrigramHashEmbedding()
    descriptions = descriptions if descriptions is not None else builtin_descriptions()
    labels = [node.id for node in taxonomy.nodes]
    vectors = np.stack(
        [provider.encode(descriptions.get(node.id) or node.name) for node in taxonomy.nodes]
    )
    matrix = np.clip(vectors @ vectors.T, 0.0, 1.0)
    np.fill_diagonal(matrix, 1.0)
    return SimilarityTable(labels, matrix)


def default_table(taxonomy: LabelTaxonomy | None = None) -> SimilarityTable:
    return build_ast(taxonomy or builtin_taxonomy())


# ---------------------------------------------------------------------------
# Lineage-weighted label importance
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LabelWeights:
    """Truncated, normalized label importances for one painter.

    ``provenance`` splits each surviving label's raw mass into the painter's
    own indicator and the lineage-inherited share.
    """

    painter_id: str
    weights: tuple[tuple[str, float], ...]  # (label, weight) sorted by weight desc
    provenance: tuple[tuple[str, tuple[float, float]], ...]  # label -> (own, inherited)

    def as_dict(self) -> dict:
        return dict(self.weights)

    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.weights)


def _ancestor_distances(corpus, painter_id: str, max_depth: int) -> dict[str, int]:
    """Minimal generational distance to each lineage ancestor within max_depth."""
    dist: dict[str, int] = {}
    queue = deque([(painter_id, 0)])
    visited = {painter_id}
    while queue:
        pid, r = queue.popleft()
        if r >= max_depth:
            continue
        for master in corpus.masters_of(pid):
            if master not in visited:
                visited.add(master)
                dist[master] = r + 1
                queue.append((master, r + 1))
    return dist


def compute_importance(corpus, painter_id: str, max_depth: int = DEFAULT_MAX_DEPTH) -> LabelWeights:
    """Comprehensive label weight: own labels plus lineage labels at 2^-r.

    Each distinct ancestor contributes once, discounted by its minimal
    generational distance r. Raw weights are normalized to sum 1, truncated
    to the top ten labels with weight >= 0.05 (ties broken by label id), and
    renormalized.
    """
    painter = corpus.by_id(painter_id)
    own = sorted(painter.label_ids())
    raw: dict[str, float] = {}
    inherited: dict[str, float] = {}
    for label in own:
        raw[label] = 1.0
    for ancestor, r in _ancestor_distances(corpus, painter_id, max_depth).items():
        share = 2.0 ** -r
        for label in sorted(corpus.by_id(ancestor).label_ids()):
            raw[label] = raw.get(label, 0.0) + share
            inherited[label] = inherited.get(label, 0.0) + share

    if not raw:
        return LabelWeights(painter_id, (), ())
    total = sum(raw.values())
    ranked = sorted(raw.items(), key=lambda kv: (-kv[1] / total, kv[0]))
    kept = [(label, value / total) for label, value in ranked[:MAX_LABELS_KEPT]
            if value / total >= MIN_KEPT_WEIGHT]
    if not kept:
        return LabelWeights(painter_id, (), ())
    kept_total = sum(w for _, w in kept)
    weights = tuple((label, w / kept_total) for label, w in kept)
    provenance = tuple(
        (label, (1.0 if label in set(own) else 0.0, inherited.get(label, 0.0)))
        for label, _ in weights
    )
    return LabelWeights(painter_id, weights, provenance)


def compute_all_importances(corpus, max_depth: int = DEFAULT_MAX_DEPTH) -> dict[str, LabelWeights]:
    """Importances for every painter, memoized on the corpus snapshot."""
    key = ("importances", max_depth)
    if key not in corpus.cache:
        corpus.cache[key] = {
            p.id: compute_importance(corpus, p.id, max_depth) for p in corpus.painters
        }
    return corpus.cache[key]


# ---------------------------------------------------------------------------
# Label view statistics
# ---------------------------------------------------------------------------


def label_distribution(corpus, selection, mode: str = "context", taxonomy: LabelTaxonomy | None = None) -> dict:
    """Per-dimension painter counts per label, with fold roll-ups.

    A painter counts once per label regardless of repeated spans. Rolled
    counts aggregate a label's whole subtree (distinct painters). Focus mode
    drops labels whose subtree matches no selected painter; context mode
    keeps everything.
    """
    if mode not in ("focus", "context"):
        raise ValueError(f"unknown mode {mode!r}")
    taxonomy = taxonomy or builtin_taxonomy()
    selection = set(selection)

    carriers: dict[str, set[str]] = {node.id: set() for node in taxonomy.nodes}
    for painter in corpus.painters:
        for label in painter.label_ids():
            if label in carriers:
                carriers[label].add(painter.id)

    out: dict[str, list] = {dim: [] for dim in DIMENSIONS}
    for node in taxonomy.nodes:
        rolled = set()
        for member in taxonomy.subtree(node.id):
            rolled |= carriers[member]
        entry = {
            "id": node.id,
            "name": node.name,
            "parent": node.parent,
            "depth": taxonomy.depth(node.id),
            "total": len(carriers[node.id]),
            "selected": len(carriers[node.id] & selection),
            "rolled_total": len(rolled),
            "rolled_selected": len(rolled & selection),
        }
        if mode == "focus" and entry["rolled_selected"] == 0:
            continue
        out[node.dimension].append(entry)
    return out


def label_combinations(corpus, selection, dimension_order, min_count: int = 1,
                       taxonomy: LabelTaxonomy | None = None) -> dict:
    """Nested combination counts for the circle pack.

    Nodes are keyed by label tuples following ``dimension_order``; a node
    counts the selected painters carrying every label on its path. Nodes
    under ``min_count`` are pruned. Also reports a recommended threshold
    that keeps the number of deepest combinations readable.
    """
    order = tuple(dimension_order)
    if not order or len(order) > len(DIMENSIONS) or len(set(order)) != len(order):
        raise ValueError(f"invalid dimension order {dimension_order!r}")
    for dim in order:
        if dim not in DIMENSIONS:
            raise ValueError(f"unknown dimension {dim!r}")
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    taxonomy = taxonomy or builtin_taxonomy()

    selected = [corpus.by_id(pid) for pid in sorted(set(selection))]
    by_dim = {}
    for painter in selected:
        by_dim[painter.id] = {
            dim: sorted(
                label for label in painter.label_ids()
                if label in taxonomy and taxonomy.dimension_of(label) == dim
            )
            for dim in order
        }

    leaf_counts: list[int] = []

    def build(members, depth):
        if depth == len(order):
            return []
        dim = order[depth]
        groups: dict[str, list] = {}
        for painter in members:
            for label in by_dim[painter.id][dim]:
                groups.setdefault(label, []).append(painter)
        nodes = []
        for label in sorted(groups, key=lambda l: (-len(groups[l]), l)):
            children = build(groups[label], depth + 1)
            if depth == len(order) - 1:
                leaf_counts.append(len(groups[label]))
            nodes.append(
                {
                    "label": label,
                    "name": taxonomy.by_id[label].name,
                    "dimension": dim,
                    "count": len(groups[label]),
                    "children": children,
                }
            )
        return nodes

    tree = build(selected, 0)
    recommended = _recommend_threshold(leaf_counts)

    def prune(nodes):
        kept = []
        for node in nodes:
            if node["count"] < min_count:
                continue
            node["children"] = prune(node["children"])
            kept.append(node)
        return kept

    return {"order": list(order), "tree": prune(tree), "recommended_threshold": recommended}


_READABLE_COMBINATIONS = 30


def _recommend_threshold(leaf_counts) -> int:
    """Smallest cutoff keeping at most a readable number of combinations."""
    if not leaf_counts:
        return 1
    threshold = 1
    while sum(1 for c in leaf_counts if c >= threshold) > _READABLE_COMBINATIONS:
        threshold += 1
    return threshold
