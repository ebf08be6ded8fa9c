"""Three-stage reconstruction of the inheritance graph into a forest.

Stage 1 groups painters sharing an identical master set into logic units and
lifts the painter graph onto them. Stage 2 clusters the units top-down: a
unit joins the cluster holding the majority of its parent units when that
majority exceeds the threshold, and opens a new cluster otherwise. Stage 3
picks one temporally-closest in-cluster direct parent per unit (the tree
edge), partitions the remaining parent relations into reachability chains,
and attaches every non-ridge chain through a cross link, synthesizing a
virtual anchor node inside the chain's deepest unit when no real unit has
exactly that chain as its parent set.

No relationship is dropped: every unit-graph edge is recoverable from the
tree edges, the ridge chains, and the cross links.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field


class ForestError(Exception):
    pass


@dataclass(frozen=True)
class LogicUnit:
    id: str
    members: tuple[str, ...]  # painter ids, sorted by (effective birth year, id)
    master_set: frozenset[str]  # painter ids shared by every member
    start_year: int
    end_year: int


class UnitGraph:
    """Logic units plus (child unit -> parent unit) edges; always acyclic."""

    def __init__(self, units, edges):
        self.units: tuple[LogicUnit, ...] = tuple(units)
        self.edges: tuple[tuple[str, str], ...] = tuple(edges)
        self.by_id = {u.id: u for u in self.units}
        self.unit_of: dict[str, str] = {}
        for unit in self.units:
            for pid in unit.members:
                self.unit_of[pid] = unit.id
        self._parents: dict[str, list[str]] = {u.id: [] for u in self.units}
        self._children: dict[str, list[str]] = {u.id: [] for u in self.units}
        for child, parent in self.edges:
            self._parents[child].append(parent)
            self._children[parent].append(child)
        for uid in self._parents:
            self._parents[uid].sort()
            self._children[uid].sort()
        self._topo = self._topo_order()
        if len(self._topo) != len(self.units):
            raise ForestError("unit graph contains a cycle")

    def parents_of(self, unit_id: str) -> tuple[str, ...]:
        return tuple(self._parents[unit_id])

    def graph_children_of(self, unit_id: str) -> tuple[str, ...]:
        return tuple(self._children[unit_id])

    def topo_order(self) -> tuple[str, ...]:
        """Unit ids with every parent before its children.

        Ties among ready units break by (start_year, id) so the order, and
        everything built on it, is deterministic.
        """
        return self._topo

    def _topo_order(self):
        indeg = {u.id: len(self._parents[u.id]) for u in self.units}
        ready = [
            (self.by_id[uid].start_year, uid) for uid, d in indeg.items() if d == 0
        ]
        heapq.heapify(ready)
        order = []
        while ready:
            _, uid = heapq.heappop(ready)
            order.append(uid)
            for child in self._children[uid]:
                indeg[child] -= 1
                if indeg[child] == 0:
                    heapq.heappush(ready, (self.by_id[child].start_year, child))
        return tuple(order)


@dataclass(frozen=True)
class ClusterInfo:
    id: str
    creation_index: int
    unit_ids: tuple[str, ...]


@dataclass(frozen=True)
class ClusterPartition:
    clusters: tuple[ClusterInfo, ...]
    assignment: dict  # unit id -> cluster id

    def cluster_by_id(self, cluster_id: str) -> ClusterInfo:
        for cluster in self.clusters:
            if cluster.id == cluster_id:
                return cluster
        raise ForestError(f"unknown cluster {cluster_id!r}")

    def units_in(self, cluster_id: str) -> tuple[str, ...]:
        return self.cluster_by_id(cluster_id).unit_ids


@dataclass(frozen=True)
class CrossLink:
    source_unit: str
    target_chain: tuple[str, ...]  # deepest ancestor first, nearest parent last
    anchor_unit: str  # real anchor unit, or the chain unit hosting the virtual node
    virtual_node_id: str | None  # None when a real anchor unit exists


@dataclass(frozen=True)
class VirtualNode:
    id: str
    host_unit: str
    source_unit: str


@dataclass
class InheritanceForest:
    unit_graph: UnitGraph
    partition: ClusterPartition
    direct_parent: dict  # unit id -> unit id or None
    ridge_chains: dict  # unit id -> tuple of chain unit ids (may be empty)
    cross_links: tuple[CrossLink, ...]
    virtual_nodes: tuple[VirtualNode, ...]
    theta: float = 0.6
    n_lod: int | None = None
    visible_clusters: tuple[str, ...] | None = None
    children: dict = field(default_factory=dict)
    roots: dict = field(default_factory=dict)  # cluster id -> root unit id

    def __post_init__(self):
        by_cluster: dict[str, list[str]] = {c.id: [] for c in self.partition.clusters}
        self.children = {u.id: [] for u in self.unit_graph.units}
        for uid, parent in self.direct_parent.items():
            if parent is not None:
                self.children[parent].append(uid)
        key = lambda uid: (self.unit_graph.by_id[uid].start_year, uid)
        for uid in self.children:
            self.children[uid].sort(key=key)
        for uid, parent in self.direct_parent.items():
            if parent is None:
                by_cluster[self.partition.assignment[uid]].append(uid)
        self.roots = {}
        for cluster in self.partition.clusters:
            roots = by_cluster[cluster.id]
            if len(roots) != 1:
                raise ForestError(
                    f"cluster {cluster.id} has {len(roots)} roots; expected exactly one"
                )
            self.roots[cluster.id] = roots[0]

    def subtree_units(self, unit_id: str) -> tuple[str, ...]:
        """The unit and all tree descendants, preorder."""
        out, stack = [], [unit_id]
        while stack:
            uid = stack.pop()
            out.append(uid)
            stack.extend(reversed(self.children[uid]))
        return tuple(out)

    def cluster_painter_count(self, cluster_id: str) -> int:
        return sum(
            len(self.unit_graph.by_id[uid].members)
            for uid in self.partition.units_in(cluster_id)
        )


# ---------------------------------------------------------------------------
# Stage 1: logic units
# ---------------------------------------------------------------------------


def build_logic_units(corpus) -> UnitGraph:
    """Partition painters into logic units and lift the edges onto them.

    Painters with identical (nonempty) master sets form one unit; a painter
    with no masters is a unit by itself.
    """
    groups: dict = {}
    for painter in corpus.painters:
        masters = frozenset(corpus.masters_of(painter.id))
        key = masters if masters else ("solo", painter.id)
        groups.setdefault(key, []).append(painter.id)

    draft = []
    for key, pids in groups.items():
        members = sorted(pids, key=lambda pid: (corpus.effective_birth_year(pid)[0], pid))
        years = [corpus.effective_birth_year(pid)[0] for pid in members]
        master_set = key if isinstance(key, frozenset) else frozenset()
        draft.append((min(years), max(years), tuple(members), master_set))
    draft.sort(key=lambda row: (row[0], row[2][0]))

    units = [
        LogicUnit(f"u{i:04d}", members, master_set, start, end)
        for i, (start, end, members, master_set) in enumerate(draft)
    ]
    unit_of = {}
    for unit in units:
        for pid in unit.members:
            unit_of[pid] = unit.id
    edges = []
    seen = set()
    for unit in units:
        for master in sorted(unit.master_set):
            edge = (unit.id, unit_of[master])
            if edge not in seen:
                seen.add(edge)
                edges.append(edge)
    return UnitGraph(units, edges)


# ---------------------------------------------------------------------------
# Stage 2: clusters
# ---------------------------------------------------------------------------


def cluster_units(unit_graph: UnitGraph, theta: float = 0.6) -> ClusterPartition:
    """Group units by majority parent-cluster inheritance.

    Units are processed in topological order. A unit with no parents opens a
    new cluster. Otherwise the parent cluster with the highest share of the
    unit's parent units wins (ties to the earliest-created cluster), and the
    unit joins it only when that share strictly exceeds theta.
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"theta must be in (0, 1], got {theta}")

    order: list[dict] = []  # cluster records in creation order
    assignment: dict[str, str] = {}
    creation: dict[str, int] = {}

    def open_cluster(unit_id):
        index = len(order)
        cluster_id = f"c{index:04d}"
        order.append({"id": cluster_id, "units": [unit_id]})
        creation[cluster_id] = index
        assignment[unit_id] = cluster_id

    for uid in unit_graph.topo_order():
        parent_clusters = [assignment[p] for p in unit_graph.parents_of(uid)]
        if not parent_clusters:
            open_cluster(uid)
            continue
        counts: dict[str, int] = {}
        for cluster_id in parent_clusters:
            counts[cluster_id] = counts.get(cluster_id, 0) + 1
        best = sorted(counts.items(), key=lambda kv: (-kv[1], creation[kv[0]]))[0]
        proportion = best[1] / len(parent_clusters)
        if proportion > theta:
            assignment[uid] = best[0]
            order[creation[best[0]]]["units"].append(uid)
        else:
            open_cluster(uid)

    clusters = tuple(
        ClusterInfo(rec["id"], i, tuple(rec["units"])) for i, rec in enumerate(order)
    )
    return ClusterPartition(clusters, assignment)


# ---------------------------------------------------------------------------
# Stage 3a: hierarchy trees
# ---------------------------------------------------------------------------


def build_trees(unit_graph: UnitGraph, partition: ClusterPartition) -> dict:
    """Assign each unit its unique in-cluster direct parent.

    Units without in-cluster parents are roots. Everyone else takes the
    parent minimizing |parent start year - child start year|; ties go to the
    earlier parent, then the smaller unit id.
    """
    direct_parent: dict[str, str | None] = {}
    for unit in unit_graph.units:
        cluster = partition.assignment[unit.id]
        candidates = [
            p for p in unit_graph.parents_of(unit.id) if partition.assignment[p] == cluster
        ]
        if not candidates:
            direct_parent[unit.id] = None
            continue
        direct_parent[unit.id] = min(
            candidates,
            key=lambda p: (
                abs(unit_graph.by_id[p].start_year - unit.start_year),
                unit_graph.by_id[p].start_year,
                p,
            ),
        )
    return direct_parent


# ---------------------------------------------------------------------------
# Stage 3b: inheritance chains and cross links
# ---------------------------------------------------------------------------


def _in_cluster_ancestors(unit_graph, partition):
    """Per unit: units reachable root-ward along paths inside its own cluster."""
    anc: dict[str, set[str]] = {}
    for uid in unit_graph.topo_order():
        cluster = partition.assignment[uid]
        reach: set[str] = set()
        for parent in unit_graph.parents_of(uid):
            if partition.assignment[parent] == cluster:
                reach.add(parent)
                reach |= anc[parent]
        anc[uid] = reach
    return anc


def _in_cluster_depths(unit_graph, partition):
    depth: dict[str, int] = {}
    for uid in unit_graph.topo_order():
        cluster = partition.assignment[uid]
        parents = [
            p for p in unit_graph.parents_of(uid) if partition.assignment[p] == cluster
        ]
        depth[uid] = max((depth[p] + 1 for p in parents), default=0)
    return depth


def _partition_into_chains(members, ancestors, depth, unit_graph):
    """Greedy chain partition of one parent group, deepest ancestor first."""
    ordered = sorted(members, key=lambda u: (depth[u], unit_graph.by_id[u].start_year, u))
    chains: list[list[str]] = []
    for uid in ordered:
        for chain in chains:
            if chain[-1] in ancestors[uid]:
                chain.append(uid)
                break
        else:
            chains.append([uid])
    return [tuple(chain) for chain in chains]


def reconstruct_chains(unit_graph: UnitGraph, partition: ClusterPartition,
                       direct_parents: dict, theta: float = 0.6,
                       n_lod: int | None = None) -> InheritanceForest:
    """Partition each unit's parent relations into chains and wire cross links.

    The chain containing the direct parent becomes the unit's ridge path and
    needs no extra geometry. Every other chain (including chains of parents
    living in foreign clusters) is attached by a cross link: to a real unit
    whose full parent set equals the chain if one exists in that cluster,
    otherwise to a virtual node synthesized inside the chain's deepest unit.
    """
    ancestors = _in_cluster_ancestors(unit_graph, partition)
    depths = _in_cluster_depths(unit_graph, partition)
    creation = {c.id: c.creation_index for c in partition.clusters}

    parent_sets = {u.id: frozenset(unit_graph.parents_of(u.id)) for u in unit_graph.units}
    # chain -> anchor lookups scan candidate units inside one cluster
    cluster_members = {c.id: c.unit_ids for c in partition.clusters}

    ridge_chains: dict[str, tuple[str, ...]] = {}
    cross_links: list[CrossLink] = []
    virtual_nodes: list[VirtualNode] = []

    for unit in unit_graph.units:
        uid = unit.id
        ridge_chains[uid] = ()
        parents = unit_graph.parents_of(uid)
        if not parents:
            continue
        groups: dict[str, list[str]] = {}
        for parent in parents:
            groups.setdefault(partition.assignment[parent], []).append(parent)
        direct = direct_parents.get(uid)
        for cluster_id in sorted(groups, key=lambda c: creation[c]):
            chains = _partition_into_chains(groups[cluster_id], ancestors, depths, unit_graph)
            for chain in chains:
                if direct is not None and direct in chain:
                    ridge_chains[uid] = chain
                    continue
                chain_set = frozenset(chain)
                anchor = next(
                    (
                        candidate
                        for candidate in cluster_members[cluster_id]
                        if candidate != uid and parent_sets[candidate] == chain_set
                    ),
                    None,
                )
                if anchor is None:
                    vid = f"v{len(virtual_nodes):04d}"
                    virtual_nodes.append(VirtualNode(vid, chain[-1], uid))
                    cross_links.append(CrossLink(uid, chain, chain[-1], vid))
                else:
                    cross_links.append(CrossLink(uid, chain, anchor, None))

    return InheritanceForest(
        unit_graph=unit_graph,
        partition=partition,
        direct_parent=dict(direct_parents),
        ridge_chains=ridge_chains,
        cross_links=tuple(cross_links),
        virtual_nodes=tuple(virtual_nodes),
        theta=theta,
        n_lod=n_lod,
    )


# ---------------------------------------------------------------------------
# Full pipeline and editing
# ---------------------------------------------------------------------------


def reconstruct(corpus, theta: float = 0.6, n_lod: int | None = None) -> InheritanceForest:
    """Run the three stages and annotate level-of-detail visibility."""
    unit_graph = build_logic_units(corpus)
    partition = cluster_units(unit_graph, theta)
    direct_parents = build_trees(unit_graph, partition)
    forest = reconstruct_chains(unit_graph, partition, direct_parents, theta, n_lod)
    _annotate_visibility(forest)
    return forest


def _annotate_visibility(forest):
    from .layout import lod_filter  # local import; layout consumes forests

    forest.visible_clusters = tuple(lod_filter(forest, forest.n_lod))


def reassign_parent(forest: InheritanceForest, unit_id: str,
                    new_parent_id: str | None = None) -> InheritanceForest:
    """Re-root a unit's subtree under a new parent, or detach it as a new tree.

    ``new_parent_id=None`` detaches. The moved subtree adopts the target
    cluster (a fresh one when detaching); chains and cross links are
    recomputed so edge accounting still holds. Returns a new forest.
    """
    graph = forest.unit_graph
    if unit_id not in graph.by_id:
        raise ForestError(f"unknown unit {unit_id!r}")
    subtree = set(forest.subtree_units(unit_id))
    if new_parent_id is not None:
        if new_parent_id not in graph.by_id:
            raise ForestError(f"unknown unit {new_parent_id!r}")
        if new_parent_id in subtree:
            raise ForestError("would create cycle: new parent is a descendant of the unit")
        target_cluster = forest.partition.assignment[new_parent_id]
        new_clusters = []
    else:
        index = len(forest.partition.clusters)
        target_cluster = f"c{index:04d}"
        new_clusters = [ClusterInfo(target_cluster, index, ())]

    assignment = dict(forest.partition.assignment)
    for uid in subtree:
        assignment[uid] = target_cluster

    moved_in_order = [uid for uid in (u.id for u in graph.units) if uid in subtree]
    clusters = []
    for cluster in list(forest.partition.clusters) + new_clusters:
        members = [uid for uid in cluster.unit_ids if assignment[uid] == cluster.id]
        if cluster.id == target_cluster:
            members += [uid for uid in moved_in_order if uid not in set(members)]
        if members:
            clusters.append(ClusterInfo(cluster.id, cluster.creation_index, tuple(members)))
    partition = ClusterPartition(tuple(clusters), assignment)

    direct_parent = dict(forest.direct_parent)
    direct_parent[unit_id] = new_parent_id

    rebuilt = reconstruct_chains(graph, partition, direct_parent, forest.theta, forest.n_lod)
    _annotate_visibility(rebuilt)
    return rebuilt


def unaccounted_edges(forest: InheritanceForest):
    """Unit-graph edges not represented by a tree edge, ridge chain, or cross link."""
    by_source: dict[str, set[str]] = {}
    for link in forest.cross_links:
        by_source.setdefault(link.source_unit, set()).update(link.target_chain)
    missing = []
    for child, parent in forest.unit_graph.edges:
        if forest.direct_parent.get(child) == parent:
            continue
        if parent in forest.ridge_chains.get(child, ()):
            continue
        if parent in by_source.get(child, ()):
            continue
        missing.append((child, parent))
    return missing


# ---------------------------------------------------------------------------
# Export / import
# ---------------------------------------------------------------------------


def forest_to_dict(forest: InheritanceForest, corpus) -> dict:
    """Self-contained forest document; carries the painter info layout needs."""
    units = []
    for unit in forest.unit_graph.units:
        members = []
        for pid in unit.members:
            year, estimated = corpus.effective_birth_year(pid)
            members.append(
                {"id": pid, "name": corpus.by_id(pid).name, "year": year, "estimated": estimated}
            )
        units.append(
            {
                "id": unit.id,
                "members": members,
                "master_set": sorted(unit.master_set),
                "start_year": unit.start_year,
                "end_year": unit.end_year,
            }
        )
    trees = [
        {
            "cluster": cluster.id,
            "root": forest.roots[cluster.id],
            "parents": {uid: forest.direct_parent[uid] for uid in cluster.unit_ids},
        }
        for cluster in forest.partition.clusters
    ]
    return {
        "params": {"theta": forest.theta, "n_lod": forest.n_lod},
        "units": units,
        "unit_edges": [list(edge) for edge in forest.unit_graph.edges],
        "clusters": [
            {"id": c.id, "creation_index": c.creation_index, "units": list(c.unit_ids)}
            for c in forest.partition.clusters
        ],
        "trees": trees,
        "ridge_chains": {uid: list(chain) for uid, chain in sorted(forest.ridge_chains.items())},
        "cross_links": [
            {
                "source_unit": link.source_unit,
                "target_chain": list(link.target_chain),
                "anchor_unit": link.anchor_unit,
                "virtual_node": link.virtual_node_id,
            }
            for link in forest.cross_links
        ],
        "virtual_nodes": [
            {"id": v.id, "host_unit": v.host_unit, "source_unit": v.source_unit}
            for v in forest.virtual_nodes
        ],
        "visible_clusters": list(forest.visible_clusters or ()),
    }


def forest_from_dict(doc: dict):
    """Rebuild (forest, painter info) from an exported document.

    Chains and cross links are recomputed from the stored unit graph,
    partition, and parent map; the computation is deterministic, so the
    round trip is exact.
    """
    units = [
        LogicUnit(
            row["id"],
            tuple(m["id"] for m in row["members"]),
            frozenset(row["master_set"]),
            row["start_year"],
            row["end_year"],
        )
        for row in doc["units"]
    ]
    graph = UnitGraph(units, [tuple(edge) for edge in doc["unit_edges"]])
    clusters = tuple(
        ClusterInfo(row["id"], row["creation_index"], tuple(row["units"]))
        for row in doc["clusters"]
    )
    assignment = {uid: c.id for c in clusters for uid in c.unit_ids}
    partition = ClusterPartition(clusters, assignment)
    direct_parent = {}
    for tree in doc["trees"]:
        direct_parent.update(tree["parents"])
    params = doc.get("params", {})
    forest = reconstruct_chains(
        graph, partition, direct_parent, params.get("theta", 0.6), params.get("n_lod")
    )
    _annotate_visibility(forest)
    painters = {
        m["id"]: {"name": m["name"], "year": m["year"], "estimated": m["estimated"]}
        for row in doc["units"]
        for m in row["members"]
    }
    return forest, painters
