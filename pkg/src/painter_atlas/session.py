"""Closed-loop exploration state: selections, undo/redo, cohorts, view feeds.

A session owns an append-only log of (operator, predicate) selection steps
with a cursor; the current selection is always the pure fold of the steps up
to the cursor over the empty set, so snapshots restore exactly. Cohorts
capture a selection with a name, a color, and an auto-generated summary.
"""

from __future__ import annotations

import itertools
import json
import uuid
from dataclasses import dataclass
from pathlib import Path

from .forest import reconstruct
from .labels import builtin_taxonomy, compute_all_importances
from .recommend import UNIFORM_BETA, recommendation_count, score_candidates

OPERATORS = ("OR", "AND", "NOT")

#: Stable texture codes the UI overlays per logic operator.
OPERATOR_TEXTURES = {"OR": "slash", "AND": "dot", "NOT": "grid"}

PREDICATE_KINDS = (
    "labels", "provinces", "dynasties", "year_range", "levels",
    "units", "clusters", "painters",
)

DEFAULT_PARAMS = {"theta": 0.6, "n_lod": 400, "min_count": 1}

_PALETTE = (
    "#e6794a", "#4a8fe6", "#53a567", "#b05fb0", "#c9a227",
    "#5fb0ae", "#d1604d", "#7a6fd1", "#8aa23f", "#c76b8e",
)


class SessionError(Exception):
    pass


@dataclass(frozen=True)
class Predicate:
    """A deterministic painter-subset filter.

    Kinds: labels (fold-closed over the taxonomy), provinces, dynasties,
    year_range (birth year inclusive), levels, units, clusters (a cluster id
    is also its tree id), painters.
    """

    kind: str
    values: tuple

    def __post_init__(self):
        if self.kind not in PREDICATE_KINDS:
            raise SessionError(f"unknown predicate kind {self.kind!r}")
        if self.kind == "year_range":
            if len(self.values) != 2 or self.values[0] > self.values[1]:
                raise SessionError(f"year_range needs (first, last), got {self.values!r}")

    def evaluate(self, session) -> frozenset:
        corpus = session.corpus
        if self.kind == "painters":
            return frozenset(pid for pid in self.values if pid in corpus)
        if self.kind == "provinces":
            wanted = set(self.values)
            return frozenset(p.id for p in corpus.painters if p.province in wanted)
        if self.kind == "dynasties":
            wanted = set(self.values)
            return frozenset(p.id for p in corpus.painters if p.dynasty in wanted)
        if self.kind == "levels":
            wanted = set(self.values)
            return frozenset(p.id for p in corpus.painters if p.official_level in wanted)
        if self.kind == "year_range":
            first, last = self.values
            return frozenset(
                p.id for p in corpus.painters
                if p.birth_year is not None and first <= p.birth_year <= last
            )
        if self.kind == "labels":
            taxonomy = session.taxonomy
            wanted = set()
            for label in self.values:
                if label not in taxonomy:
                    raise SessionError(f"unknown label {label!r}")
                wanted |= taxonomy.subtree(label)
            return frozenset(p.id for p in corpus.painters if p.label_ids() & wanted)
        forest = session.forest()
        if self.kind == "units":
            out = set()
            for uid in self.values:
                if uid not in forest.unit_graph.by_id:
                    raise SessionError(f"unknown unit {uid!r}")
                out.update(forest.unit_graph.by_id[uid].members)
            return frozenset(out)
        # clusters (== trees)
        out = set()
        for cid in self.values:
            for uid in forest.partition.units_in(cid):
                out.update(forest.unit_graph.by_id[uid].members)
        return frozenset(out)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "values": list(self.values)}

    @classmethod
    def from_dict(cls, doc) -> "Predicate":
        try:
            return cls(doc["kind"], tuple(doc["values"]))
        except (KeyError, TypeError) as exc:
            raise SessionError(f"malformed predicate {doc!r}") from exc


@dataclass(frozen=True)
class Step:
    operator: str
    predicate: Predicate

    @property
    def texture(self) -> str:
        return OPERATOR_TEXTURES[self.operator]


@dataclass
class Cohort:
    id: str
    name: str
    color: str
    painter_ids: frozenset
    labels: tuple
    summary: dict


class Session:
    """One analyst's exploration state over a corpus snapshot."""

    def __init__(self, corpus, taxonomy=None, params=None, beta=None, session_id=None):
        self.id = session_id or uuid.uuid4().hex[:12]
        self._corpus = corpus
        self.taxonomy = taxonomy or builtin_taxonomy()
        self.params = {**DEFAULT_PARAMS, **(params or {})}
        self.beta = tuple(beta) if beta else UNIFORM_BETA
        self.steps: list[Step] = []
        self.cursor = 0
        self.cohorts: dict[str, Cohort] = {}
        self.last_recommendation = None
        self._color_cycle = itertools.cycle(_PALETTE)
        self._forest_cache = {}

    @property
    def corpus(self):
        return self._corpus

    def swap_corpus(self, corpus):
        """Adopt a newer corpus snapshot (label edits); caches reset."""
        self._corpus = corpus
        self._forest_cache.clear()

    def forest(self, theta=None):
        theta = theta if theta is not None else self.params["theta"]
        key = (theta, self._corpus.version)
        if key not in self._forest_cache:
            self._forest_cache[key] = reconstruct(
                self._corpus, theta=theta, n_lod=self.params.get("n_lod")
            )
        return self._forest_cache[key]

    @property
    def selection(self) -> frozenset:
        """Fold of steps[0:cursor] from the empty set."""
        current: frozenset = frozenset()
        for i in range(self.cursor):
            step = self.steps[i]
            extent = step.predicate.evaluate(self)
            op = "OR" if i == 0 else step.operator
            if op == "OR":
                current = current | extent
            elif op == "AND":
                current = current & extent
            else:
                current = current - extent
        return current


def apply_selection(session: Session, operator: str, predicate: Predicate) -> frozenset:
    """Append a step (discarding any redo tail) and return the new selection."""
    if operator not in OPERATORS:
        raise SessionError(f"unknown operator {operator!r}; expected one of {OPERATORS}")
    predicate.evaluate(session)  # validate before committing the step
    del session.steps[session.cursor :]
    session.steps.append(Step(operator, predicate))
    session.cursor += 1
    return session.selection


def undo(session: Session) -> frozenset:
    if session.cursor == 0:
        raise SessionError("nothing to undo")
    session.cursor -= 1
    return session.selection


def redo(session: Session) -> frozenset:
    if session.cursor >= len(session.steps):
        raise SessionError("nothing to redo")
    session.cursor += 1
    return session.selection


# ---------------------------------------------------------------------------
# View aggregations
# ---------------------------------------------------------------------------


def geo_aggregate(session: Session) -> dict:
    """Per-province {total, selected}; painters without a province land in
    'unknown'; provinces nobody painted in are omitted."""
    selection = session.selection
    out: dict[str, dict] = {}
    for painter in session.corpus.painters:
        key = painter.province or "unknown"
        bucket = out.setdefault(key, {"total": 0, "selected": 0})
        bucket["total"] += 1
        if painter.id in selection:
            bucket["selected"] += 1
    return dict(sorted(out.items()))


def identity_aggregate(session: Session) -> dict:
    """Two-ring identity view feed.

    Inner ring: the five official levels plus an 'unknown' bucket. Outer
    ring: official positions, each rolled up under its level.
    """
    selection = session.selection
    inner = {str(level): {"total": 0, "selected": 0} for level in range(1, 6)}
    inner["unknown"] = {"total": 0, "selected": 0}
    outer: dict[tuple, dict] = {}
    for painter in session.corpus.painters:
        level_key = str(painter.official_level) if painter.official_level else "unknown"
        inner[level_key]["total"] += 1
        if painter.id in selection:
            inner[level_key]["selected"] += 1
        position = painter.official_position or "unknown position"
        bucket = outer.setdefault((level_key, position), {"total": 0, "selected": 0})
        bucket["total"] += 1
        if painter.id in selection:
            bucket["selected"] += 1
    return {
        "inner": inner,
        "outer": [
            {"level": level, "position": position, **counts}
            for (level, position), counts in sorted(outer.items())
        ],
    }


# ---------------------------------------------------------------------------
# Cohorts
# ---------------------------------------------------------------------------


def _summarize(session: Session, members) -> dict:
    corpus = session.corpus
    importances = compute_all_importances(corpus)
    pooled: dict[str, float] = {}
    for pid in members:
        for label, weight in importances[pid].weights:
            pooled[label] = pooled.get(label, 0.0) + weight
    top_labels = sorted(pooled, key=lambda l: (-pooled[l], l))[:5]
    years = [corpus.by_id(pid).birth_year for pid in members]
    years = [y for y in years if y is not None]
    provinces: dict[str, int] = {}
    levels: dict[int, int] = {}
    for pid in members:
        painter = corpus.by_id(pid)
        if painter.province:
            provinces[painter.province] = provinces.get(painter.province, 0) + 1
        if painter.official_level:
            levels[painter.official_level] = levels.get(painter.official_level, 0) + 1
    return {
        "top_labels": top_labels,
        "year_span": [min(years), max(years)] if years else None,
        "provinces": sorted(provinces, key=lambda p: (-provinces[p], p))[:3],
        "dominant_level": min(sorted(levels, key=lambda l: (-levels[l], l))[:1], default=None),
    }


def create_cohort(session: Session, name: str, color=None, labels=()) -> Cohort:
    members = session.selection
    if not members:
        raise SessionError("cannot confirm an empty selection as a cohort")
    cohort = Cohort(
        id=f"g{len(session.cohorts) + 1:03d}-{uuid.uuid4().hex[:6]}",
        name=name,
        color=color or next(session._color_cycle),
        painter_ids=members,
        labels=tuple(labels),
        summary=_summarize(session, members),
    )
    session.cohorts[cohort.id] = cohort
    return cohort


def delete_cohort(session: Session, cohort_id: str) -> None:
    if cohort_id not in session.cohorts:
        raise SessionError(f"unknown cohort {cohort_id!r}")
    del session.cohorts[cohort_id]


def list_cohorts(session: Session) -> list:
    return list(session.cohorts.values())


def compare_cohorts(session: Session, cohort_ids) -> dict:
    """Color-tagged membership and per-view aggregates for each cohort."""
    out = []
    for cid in cohort_ids:
        if cid not in session.cohorts:
            raise SessionError(f"unknown cohort {cid!r}")
        cohort = session.cohorts[cid]
        geo: dict[str, int] = {}
        levels: dict[str, int] = {}
        for pid in cohort.painter_ids:
            painter = session.corpus.by_id(pid)
            geo_key = painter.province or "unknown"
            geo[geo_key] = geo.get(geo_key, 0) + 1
            level_key = str(painter.official_level) if painter.official_level else "unknown"
            levels[level_key] = levels.get(level_key, 0) + 1
        out.append(
            {
                "id": cohort.id,
                "name": cohort.name,
                "color": cohort.color,
                "members": sorted(cohort.painter_ids),
                "geo": dict(sorted(geo.items())),
                "identity": dict(sorted(levels.items())),
                "labels": list(cohort.labels) or cohort.summary["top_labels"],
            }
        )
    return {"cohorts": out}


# ---------------------------------------------------------------------------
# Recommendation bridge
# ---------------------------------------------------------------------------


def run_recommendation(session: Session, beta=None) -> dict:
    """Recommend against the current selection and keep the latest result.

    Highlight intensity is each candidate's total score min-max rescaled to
    [0, 1]; the recommended list is the top ceil(N/3).
    """
    members = session.selection
    if not members:
        raise SessionError("no potential cohort: the current selection is empty")
    beta = tuple(beta) if beta else session.beta
    ranked = score_candidates(session.corpus, members, beta)
    top = ranked[: recommendation_count(len(members))]
    if ranked:
        scores = [r.score for r in ranked]
        low, high = min(scores), max(scores)
        if high > low:
            intensity = {r.painter_id: (r.score - low) / (high - low) for r in ranked}
        else:
            intensity = {r.painter_id: 1.0 for r in ranked}
    else:
        intensity = {}
    result = {
        "recommendations": [
            {
                "painter_id": r.painter_id,
                "score": r.score,
                "scores": list(r.scores),
                "weights": list(r.weights),
                "rank": r.rank,
            }
            for r in top
        ],
        "intensity": intensity,
        "beta": list(beta),
    }
    session.beta = beta
    session.last_recommendation = result
    return result


# ---------------------------------------------------------------------------
# Snapshots
# ---------------------------------------------------------------------------


def session_to_dict(session: Session) -> dict:
    return {
        "id": session.id,
        "params": session.params,
        "beta": list(session.beta),
        "steps": [
            {"operator": step.operator, "predicate": step.predicate.to_dict(),
             "texture": step.texture}
            for step in session.steps
        ],
        "cursor": session.cursor,
        "cohorts": [
            {
                "id": c.id,
                "name": c.name,
                "color": c.color,
                "painter_ids": sorted(c.painter_ids),
                "labels": list(c.labels),
                "summary": c.summary,
            }
            for c in session.cohorts.values()
        ],
        "last_recommendation": session.last_recommendation,
    }


def session_from_dict(doc: dict, corpus, taxonomy=None) -> Session:
    session = Session(
        corpus,
        taxonomy,
        params=doc.get("params"),
        beta=doc.get("beta"),
        session_id=doc.get("id"),
    )
    for raw in doc.get("steps", ()):
        session.steps.append(Step(raw["operator"], Predicate.from_dict(raw["predicate"])))
    session.cursor = doc.get("cursor", len(session.steps))
    for raw in doc.get("cohorts", ()):
        cohort = Cohort(
            id=raw["id"],
            name=raw["name"],
            color=raw["color"],
            painter_ids=frozenset(raw["painter_ids"]),
            labels=tuple(raw.get("labels", ())),
            summary=raw.get("summary", {}),
        )
        session.cohorts[cohort.id] = cohort
    session.last_recommendation = doc.get("last_recommendation")
    return session


def save_session(session: Session, path) -> None:
    Path(path).write_text(
        json.dumps(session_to_dict(session), ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )


def load_session(path, corpus, taxonomy=None) -> Session:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return session_from_dict(doc, corpus, taxonomy)
