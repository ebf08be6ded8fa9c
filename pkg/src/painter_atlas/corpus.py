"""Painter corpus: data model, validation, persistence, synthetic fixtures.

A corpus is an immutable in-memory snapshot of painters and their
relations, loaded from a single JSON document. Label edits produce a new
snapshot (and bump its version) rather than mutating the old one, so a
loaded corpus can be shared freely across threads.
"""

from __future__ import annotations

import json
import logging
import random
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

from .resources import dynasty_table, province_table

log = logging.getLogger(__name__)

RELATION_KINDS = ("master", "imitation", "kinship", "friendship")

#: Relation kinds that carry artistic inheritance. Only these participate in
#: forest reconstruction, importance propagation, and graph-distance scoring;
#: kinship/friendship edges are kept as metadata.
DEFAULT_INHERITANCE_KINDS = ("master", "imitation")

OFFICIAL_LEVELS = (1, 2, 3, 4, 5)

#: Years added to a master's birth year when estimating a missing one.
GENERATION_GAP_YEARS = 30


class CorpusError(Exception):
    """Base error for corpus loading, lookup, and editing."""


class ValidationError(CorpusError):
    """A corpus violated one or more structural invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class LabelRef:
    """A raw artistic label attached to a painter, with its biography span."""

    label_id: str
    span: str = ""


@dataclass(frozen=True)
class Painter:
    id: str
    name: str
    birth_year: int | None = None
    death_year: int | None = None
    dynasty: str | None = None
    province: str | None = None
    official_position: str | None = None
    official_level: int | None = None
    biography: str = ""
    raw_labels: tuple[LabelRef, ...] = ()
    extra: dict = field(default_factory=dict)  # unknown JSON keys, round-tripped

    def label_ids(self) -> set[str]:
        return {ref.label_id for ref in self.raw_labels}


@dataclass(frozen=True)
class Relation:
    apprentice_id: str
    master_id: str
    kind: str = "master"
    extra: dict = field(default_factory=dict)


class Corpus:
    """Validated, id-indexed snapshot of painters and relations.

    Construction runs full validation; every live Corpus satisfies the
    structural invariants (unique ids, resolvable endpoints, birth before
    death, acyclic inheritance subgraph).
    """

    def __init__(self, painters, relations, meta=None, source_path=None, version=0):
        self.painters: tuple[Painter, ...] = tuple(painters)
        self.relations: tuple[Relation, ...] = tuple(relations)
        self.meta: dict = dict(meta or {})
        self.source_path: Path | None = Path(source_path) if source_path else None
        self.version = version
        self.cache: dict = {}  # cross-module memo space; dropped on every new snapshot

        violations = validate(self.painters, self.relations, self.inheritance_kinds)
        if violations:
            raise ValidationError(violations)

        self._by_id = {p.id: p for p in self.painters}
        self._masters: dict[str, tuple[str, ...]] = {p.id: () for p in self.painters}
        grouped: dict[str, list[str]] = {}
        for rel in self.relations:
            if rel.kind in self.inheritance_kinds:
                grouped.setdefault(rel.apprentice_id, []).append(rel.master_id)
        for pid, masters in grouped.items():
            seen, ordered = set(), []
            for m in masters:
                if m not in seen:
                    seen.add(m)
                    ordered.append(m)
            self._masters[pid] = tuple(ordered)
        self._years: dict[str, tuple[int, bool]] | None = None

    @property
    def inheritance_kinds(self) -> tuple[str, ...]:
        kinds = self.meta.get("inheritance_kinds")
        return tuple(kinds) if kinds else DEFAULT_INHERITANCE_KINDS

    def __len__(self):
        return len(self.painters)

    def __eq__(self, other):
        return (
            isinstance(other, Corpus)
            and self.painters == other.painters
            and self.relations == other.relations
            and self.meta == other.meta
        )

    def __contains__(self, painter_id):
        return painter_id in self._by_id

    def by_id(self, painter_id: str) -> Painter:
        try:
            return self._by_id[painter_id]
        except KeyError:
            raise CorpusError(f"unknown painter: {painter_id!r}") from None

    def masters_of(self, painter_id: str) -> tuple[str, ...]:
        """Masters of a painter along the configured inheritance kinds."""
        return self._masters[painter_id]

    def inheritance_edges(self):
        """(apprentice, master) pairs over the inheritance subgraph, deduplicated."""
        return [(pid, m) for pid in self._masters for m in self._masters[pid]]

    def effective_birth_year(self, painter_id: str) -> tuple[int, bool]:
        """Birth year plus an ``estimated`` flag.

        Missing years are filled in so layout and temporal parent choice
        always have one: a painter with at least one dated master gets the
        latest master year plus a generation gap; otherwise the dynasty
        midpoint; otherwise the mean of all dated painters (1200 as a last
        resort for an entirely undated corpus).
        """
        if self._years is None:
            self._years = self._estimate_years()
        return self._years[painter_id]

    def _estimate_years(self):
        years: dict[str, tuple[int, bool]] = {}
        known = [p.birth_year for p in self.painters if p.birth_year is not None]
        fallback = round(sum(known) / len(known)) if known else 1200
        dynasties = dynasty_table()
        for pid in self._topo_order():
            painter = self._by_id[pid]
            if painter.birth_year is not None:
                years[pid] = (painter.birth_year, False)
                continue
            master_years = [years[m][0] for m in self.masters_of(pid) if m in years]
            if master_years:
                years[pid] = (max(master_years) + GENERATION_GAP_YEARS, True)
            elif painter.dynasty in dynasties:
                span = dynasties[painter.dynasty]
                years[pid] = ((span["start"] + span["end"]) // 2, True)
            else:
                years[pid] = (fallback, True)
        return years

    def _topo_order(self):
        """Painter ids with every master before its apprentices."""
        indeg = {p.id: len(self._masters[p.id]) for p in self.painters}
        apprentices: dict[str, list[str]] = {p.id: [] for p in self.painters}
        for pid, masters in self._masters.items():
            for m in masters:
                apprentices[m].append(pid)
        queue = deque(p.id for p in self.painters if indeg[p.id] == 0)
        order = []
        while queue:
            pid = queue.popleft()
            order.append(pid)
            for a in apprentices[pid]:
                indeg[a] -= 1
                if indeg[a] == 0:
                    queue.append(a)
        return order


def validate(painters, relations, inheritance_kinds=DEFAULT_INHERITANCE_KINDS):
    """Collect invariant violations; an empty list means the corpus is valid."""
    violations = []
    ids = set()
    for p in painters:
        if p.id in ids:
            violations.append(f"duplicate painter id {p.id!r}")
        ids.add(p.id)
        if p.birth_year is not None and p.death_year is not None and p.birth_year > p.death_year:
            violations.append(f"painter {p.id!r}: birth year {p.birth_year} after death year {p.death_year}")
        if p.official_level is not None and p.official_level not in OFFICIAL_LEVELS:
            violations.append(f"painter {p.id!r}: official level {p.official_level} outside 1-5")

    adjacency: dict[str, set[str]] = {}
    for rel in relations:
        if rel.kind not in RELATION_KINDS:
            violations.append(f"unknown relation kind {rel.kind!r}")
        if rel.apprentice_id == rel.master_id:
            violations.append(f"self relation on painter {rel.apprentice_id!r}")
            continue
        for endpoint in (rel.apprentice_id, rel.master_id):
            if endpoint not in ids:
                violations.append(f"relation endpoint {endpoint!r} not in corpus")
        if rel.kind in inheritance_kinds:
            adjacency.setdefault(rel.apprentice_id, set()).add(rel.master_id)

    if _has_cycle(adjacency):
        violations.append("inheritance cycle detected")
    return violations


def _has_cycle(adjacency):
    # iterative three-color DFS; adjacency maps node -> master nodes
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {node: WHITE for node in adjacency}
    for node in adjacency:
        color.setdefault(node, WHITE)
    for start in list(adjacency):
        if color[start] != WHITE:
            continue
        stack = [(start, iter(adjacency.get(start, ())))]
        color[start] = GRAY
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                state = color.get(nxt, WHITE)
                if state == GRAY:
                    return True
                if state == WHITE:
                    color[nxt] = GRAY
                    stack.append((nxt, iter(adjacency.get(nxt, ()))))
                    advanced = True
                    break
            if not advanced:
                color[node] = BLACK
                stack.pop()
    return False


# ---------------------------------------------------------------------------
# JSON persistence
# ---------------------------------------------------------------------------

_PAINTER_FIELDS = (
    "id",
    "name",
    "birth_year",
    "death_year",
    "dynasty",
    "province",
    "official_position",
    "official_level",
    "biography",
    "raw_labels",
)
_RELATION_FIELDS = ("apprentice_id", "master_id", "kind")


def _painter_to_dict(p: Painter) -> dict:
    doc = {}
    for key in _PAINTER_FIELDS:
        value = getattr(p, key)
        if key == "raw_labels":
            value = [{"label_id": ref.label_id, "span": ref.span} for ref in p.raw_labels]
        if value is None or value == "" and key == "biography":
            continue
        doc[key] = value
    doc.update(p.extra)
    return doc


def _painter_from_dict(doc: dict) -> Painter:
    if not isinstance(doc, dict) or "id" not in doc:
        raise CorpusError(f"malformed painter record: {doc!r}")
    labels = []
    for item in doc.get("raw_labels", ()):
        if isinstance(item, dict):
            labels.append(LabelRef(item["label_id"], item.get("span", "")))
        else:  # legacy [label_id, span] pairs
            labels.append(LabelRef(item[0], item[1] if len(item) > 1 else ""))
    extra = {k: v for k, v in doc.items() if k not in _PAINTER_FIELDS}
    return Painter(
        id=doc["id"],
        name=doc.get("name", doc["id"]),
        birth_year=doc.get("birth_year"),
        death_year=doc.get("death_year"),
        dynasty=doc.get("dynasty"),
        province=doc.get("province"),
        official_position=doc.get("official_position"),
        official_level=doc.get("official_level"),
        biography=doc.get("biography", ""),
        raw_labels=tuple(labels),
        extra=extra,
    )


def corpus_to_dict(corpus: Corpus) -> dict:
    return {
        "painters": [_painter_to_dict(p) for p in corpus.painters],
        "relations": [
            {**{k: getattr(r, k) for k in _RELATION_FIELDS}, **r.extra} for r in corpus.relations
        ],
        "meta": corpus.meta,
    }


def corpus_from_dict(doc: dict, source_path=None, version=0) -> Corpus:
    if not isinstance(doc, dict) or "painters" not in doc:
        raise CorpusError("corpus document must be an object with a 'painters' key")
    painters = [_painter_from_dict(d) for d in doc["painters"]]
    relations = []
    for d in doc.get("relations", ()):
        if "apprentice_id" not in d or "master_id" not in d:
            raise CorpusError(f"malformed relation record: {d!r}")
        extra = {k: v for k, v in d.items() if k not in _RELATION_FIELDS}
        relations.append(
            Relation(d["apprentice_id"], d["master_id"], d.get("kind", "master"), extra)
        )
    return Corpus(painters, relations, doc.get("meta"), source_path, version)


def load_corpus(path) -> Corpus:
    """Load and validate a corpus JSON file."""
    path = resolve_builtin(path)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read corpus file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"malformed corpus file {path}: {exc}") from exc
    return corpus_from_dict(doc, source_path=path)


def save_corpus(corpus: Corpus, path) -> None:
    Path(path).write_text(
        json.dumps(corpus_to_dict(corpus), ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )


def resolve_builtin(path):
    """Map ``builtin:sample`` to the bundled demo corpus, pass through otherwise."""
    if isinstance(path, str) and path == "builtin:sample":
        return Path(__file__).parent / "data" / "sample_corpus.json"
    return path


# ---------------------------------------------------------------------------
# Label edits
# ---------------------------------------------------------------------------


def update_painter_labels(corpus: Corpus, painter_id: str, edits, taxonomy) -> Corpus:
    """Apply add/remove/retext label edits and return the new snapshot.

    The edited corpus is persisted to its backing file (with a sidecar
    ``.edits.jsonl`` log) when it has one. The returned snapshot has a fresh
    cache and a bumped version, which is how downstream importance and
    similarity caches learn they are stale.
    """
    painter = corpus.by_id(painter_id)
    labels = list(painter.raw_labels)
    for edit in edits:
        op = edit.get("op")
        label_id = edit.get("label_id")
        if op == "add":
            if label_id not in taxonomy:
                raise CorpusError(f"unknown label id: {label_id!r}")
            if any(ref.label_id == label_id for ref in labels):
                log.warning("painter %s already carries label %s", painter_id, label_id)
            else:
                labels.append(LabelRef(label_id, edit.get("span", "")))
        elif op == "remove":
            kept = [ref for ref in labels if ref.label_id != label_id]
            if len(kept) == len(labels):
                log.warning("painter %s does not carry label %s; remove is a no-op", painter_id, label_id)
            labels = kept
        elif op == "retext":
            found = False
            for i, ref in enumerate(labels):
                if ref.label_id == label_id:
                    labels[i] = LabelRef(label_id, edit.get("span", ""))
                    found = True
            if not found:
                log.warning("painter %s does not carry label %s; retext is a no-op", painter_id, label_id)
        else:
            raise CorpusError(f"unknown edit op: {op!r}")

    updated = replace(painter, raw_labels=tuple(labels))
    painters = [updated if p.id == painter_id else p for p in corpus.painters]
    new = Corpus(
        painters,
        corpus.relations,
        corpus.meta,
        corpus.source_path,
        corpus.version + 1,
    )
    if new.source_path:
        save_corpus(new, new.source_path)
        log_path = new.source_path.with_suffix(new.source_path.suffix + ".edits.jsonl")
        entry = {"painter_id": painter_id, "edits": list(edits), "version": new.version}
        with open(log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
    return new


# ---------------------------------------------------------------------------
# Synthetic fixtures
# ---------------------------------------------------------------------------

_SURNAMES = (
    "Li", "Wang", "Zhang", "Chen", "Xu", "Zhao", "Huang", "Zhou", "Wu", "Shen",
    "Gu", "Ma", "Tang", "Qian", "Sun", "Hu", "Guo", "Lin", "He", "Gao",
)
_GIVEN = (
    "Wei", "Cheng", "Ming", "Hong", "Sheng", "Yuan", "Kai", "Zhi", "Dao", "Xi",
    "Bo", "Qing", "Lan", "Feng", "Yun", "Shan", "Jing", "Xuan", "Ran", "Mo",
)
_POSITIONS = {
    1: "Grand Secretary",
    2: "Hanlin Academician",
    3: "Imperial Academy Daizhao",
    4: "Court Painter",
    5: "Artisan Painter",
}


def _taxonomy_pools():
    # lazy import keeps corpus importable without the labels module at play
    from .labels import builtin_taxonomy

    taxonomy = builtin_taxonomy()
    pools = {dim: [] for dim in ("subject", "technique", "emotion")}
    for node in taxonomy.nodes:
        pools[node.dimension].append(node)
    return pools


def generate_fixture(seed: int, n: int, era=(900, 1900)) -> Corpus:
    """Deterministic synthetic corpus standing in for the source database.

    Master edges only ever point at painters with strictly earlier birth
    years, which guarantees the inheritance subgraph is acyclic. Groups of
    apprentices deliberately share identical master sets so the fixture
    exercises multi-member logic units downstream.
    """
    n = max(1, int(n))
    lo, hi = int(min(era)), int(max(era))
    if hi <= lo:
        hi = lo + 1
    rng = random.Random(seed)
    pools = _taxonomy_pools()
    dynasties = dynasty_table()
    provinces = sorted(province_table())

    births = sorted(rng.randint(lo, hi) for _ in range(n))
    painters = []
    for i, birth in enumerate(births):
        pid = f"p{i:04d}"
        name = f"{rng.choice(_SURNAMES)} {rng.choice(_GIVEN)}{rng.choice(_GIVEN).lower()}"
        dynasty = next(
            (code for code, span in dynasties.items() if span["start"] <= birth <= span["end"]),
            None,
        )
        death = birth + rng.randint(30, 75)
        has_birth = rng.random() >= 0.04
        level = None
        position = None
        if rng.random() < 0.7:
            level = rng.choices(OFFICIAL_LEVELS, weights=(5, 10, 25, 30, 30))[0]
            position = _POSITIONS[level]
        province = rng.choice(provinces) if rng.random() < 0.95 else None

        chosen = [rng.choice(pools["subject"])]
        if rng.random() < 0.5:
            chosen.append(rng.choice(pools["subject"]))
        for _ in range(rng.randint(0, 2)):
            chosen.append(rng.choice(pools["technique"]))
        if rng.random() < 0.7:
            chosen.append(rng.choice(pools["emotion"]))
        seen = set()
        labels = [node for node in chosen if not (node.id in seen or seen.add(node.id))]

        phrases = ", ".join(node.name.lower() for node in labels)
        biography = f"{name} was a painter active in the {dynasty or 'unrecorded'} period, noted for {phrases}."
        painters.append(
            Painter(
                id=pid,
                name=name,
                birth_year=birth if has_birth else None,
                death_year=death if has_birth else None,
                dynasty=dynasty,
                province=province,
                official_position=position,
                official_level=level,
                biography=biography,
                raw_labels=tuple(LabelRef(node.id, node.name.lower()) for node in labels),
            )
        )

    relations = []
    recent_master_sets: list[tuple[str, ...]] = []
    for i, painter in enumerate(painters):
        if i == 0:
            continue
        birth = births[i]
        # candidate masters were born strictly earlier, within a teaching window
        candidates = [
            painters[j].id
            for j in range(i)
            if painters[j].birth_year is not None and births[j] < birth and birth - births[j] <= 90
        ]
        if not candidates or rng.random() > 0.6:
            continue
        master_set: tuple[str, ...]
        usable = [ms for ms in recent_master_sets if all(m in candidates for m in ms)]
        if usable and rng.random() < 0.45:
            master_set = rng.choice(usable)
        else:
            k = rng.choices((1, 2, 3), weights=(70, 24, 6))[0]
            master_set = tuple(sorted(rng.sample(candidates, min(k, len(candidates)))))
            recent_master_sets.append(master_set)
            if len(recent_master_sets) > 12:
                recent_master_sets.pop(0)
        for m in master_set:
            kind = "imitation" if rng.random() < 0.12 else "master"
            relations.append(Relation(painter.id, m, kind))
        if rng.random() < 0.06:
            other = rng.choice(painters[:i]).id
            if other not in master_set and other != painter.id:
                relations.append(
                    Relation(painter.id, other, rng.choice(("kinship", "friendship")))
                )

    meta = {
        "taxonomy_ref": "builtin:taxonomy",
        "geography_ref": "builtin:provinces",
        "fixture": {"seed": seed, "n": n, "era": [lo, hi]},
    }
    return Corpus(painters, relations, meta)
