"""Shared test helpers: corpus builders and independent oracle implementations."""

from __future__ import annotations

import random
from collections import Counter

from painter_atlas.corpus import Corpus, LabelRef, Painter, Relation
from painter_atlas.forest import LogicUnit, UnitGraph


def make_painter(pid, birth=None, death=None, labels=(), province=None, dynasty=None,
                 level=None, position=None, name=None, biography=""):
    return Painter(
        id=pid,
        name=name or pid.upper(),
        birth_year=birth,
        death_year=death,
        dynasty=dynasty,
        province=province,
        official_position=position,
        official_level=level,
        biography=biography,
        raw_labels=tuple(LabelRef(l) for l in labels),
    )


def make_corpus(painters, relations=(), meta=None):
    """relations: (apprentice, master) pairs or (apprentice, master, kind) triples."""
    rels = []
    for rel in relations:
        if len(rel) == 2:
            rels.append(Relation(rel[0], rel[1]))
        else:
            rels.append(Relation(rel[0], rel[1], rel[2]))
    return Corpus(painters, rels, meta)


# ---------------------------------------------------------------------------
# Independent oracles
# ---------------------------------------------------------------------------


def dfs_has_cycle(edges):
    """Recursive three-color cycle detector, independent of the artifact path."""
    adjacency = {}
    for a, b in edges:
        adjacency.setdefault(a, []).append(b)
        adjacency.setdefault(b, [])
    state = {node: 0 for node in adjacency}

    def visit(node):
        if state[node] == 1:
            return True
        if state[node] == 2:
            return False
        state[node] = 1
        found = any(visit(nxt) for nxt in adjacency[node])
        state[node] = 2
        return found

    return any(visit(node) for node in adjacency if state[node] == 0)


def brute_force_units(corpus):
    """Group painters by master-set equality by direct comparison."""
    pids = [p.id for p in corpus.painters]
    groups = []
    used = set()
    for pid in pids:
        if pid in used:
            continue
        masters = set(corpus.masters_of(pid))
        if not masters:
            groups.append(frozenset({pid}))
            used.add(pid)
            continue
        block = {
            other for other in pids
            if set(corpus.masters_of(other)) == masters
        }
        groups.append(frozenset(block))
        used |= block
    return set(groups)


def recursive_clustering(parents, start_years, theta):
    """Direct recursive cluster assignment, on demand, parents first.

    Returns unit id -> cluster index (creation order of the recursion).
    """
    assignment = {}
    clusters = []

    def cluster_of(uid):
        if uid in assignment:
            return assignment[uid]
        parent_clusters = [cluster_of(p) for p in parents[uid]]
        if not parent_clusters:
            index = len(clusters)
            clusters.append([uid])
            assignment[uid] = index
            return index
        counts = Counter(parent_clusters)
        best_cluster, best_count = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        if best_count / len(parent_clusters) > theta:
            assignment[uid] = best_cluster
            clusters[best_cluster].append(uid)
        else:
            index = len(clusters)
            clusters.append([uid])
            assignment[uid] = index
        return assignment[uid]

    for uid in sorted(parents, key=lambda u: (start_years[u], u)):
        cluster_of(uid)
    return assignment


def as_partition(assignment):
    """Canonical partition form: set of frozensets of co-clustered ids."""
    blocks = {}
    for uid, cluster in assignment.items():
        blocks.setdefault(cluster, set()).add(uid)
    return {frozenset(block) for block in blocks.values()}


def random_unit_graph(rng: random.Random, max_units=12, edge_p=0.35):
    """Random acyclic unit graph; parents always have a smaller index."""
    n = rng.randint(1, max_units)
    units = []
    for i in range(n):
        year = rng.randint(800, 1800)
        units.append(LogicUnit(f"u{i:04d}", (f"p{i:04d}",), frozenset(), year, year + 40))
    edges = []
    for i in range(n):
        for j in range(i):
            if rng.random() < edge_p:
                edges.append((units[i].id, units[j].id))
    return UnitGraph(units, edges)
