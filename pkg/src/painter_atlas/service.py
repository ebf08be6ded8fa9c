"""HTTP/JSON service exposing the engine to the companion UI.

Thin adapters only: every endpoint delegates to a module operation, so
identical inputs produce identical bodies. Sessions are in-memory with an
idle TTL; per-session mutations are serialized behind a lock while the
corpus snapshot swaps atomically on label edits.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel, Field

from . import session as sess
from .corpus import CorpusError, load_corpus, update_painter_labels
from .forest import forest_to_dict
from .labels import builtin_taxonomy, compute_importance, label_combinations, label_distribution, load_taxonomy
from .layout import LayoutParams, compute_layout
from .recommend import RecommendError, UNIFORM_BETA
from .session import Predicate, Session, SessionError

DEFAULT_SESSION_TTL = 24 * 3600.0


@dataclass
class ApiConfig:
    host: str = "127.0.0.1"
    port: int = 8600
    corpus_path: str = "builtin:sample"
    taxonomy_path: str = "builtin:taxonomy"
    ast_path: str | None = None
    static_dir: str | None = None
    theta: float = 0.6
    n_lod: int = 400
    beta: tuple = UNIFORM_BETA
    session_ttl: float = DEFAULT_SESSION_TTL

    @classmethod
    def from_env(cls, **overrides) -> "ApiConfig":
        env = os.environ
        kwargs = {
            "host": env.get("ATLAS_HOST", cls.host),
            "port": int(env.get("ATLAS_PORT", cls.port)),
            "corpus_path": env.get("ATLAS_CORPUS", cls.corpus_path),
            "taxonomy_path": env.get("ATLAS_TAXONOMY", cls.taxonomy_path),
            "ast_path": env.get("ATLAS_AST"),
            "static_dir": env.get("ATLAS_STATIC"),
            "theta": float(env.get("ATLAS_THETA", cls.theta)),
            "n_lod": int(env.get("ATLAS_NLOD", cls.n_lod)),
            "session_ttl": float(env.get("ATLAS_SESSION_TTL", DEFAULT_SESSION_TTL)),
        }
        if env.get("ATLAS_BETA"):
            kwargs["beta"] = tuple(float(x) for x in env["ATLAS_BETA"].split(","))
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kwargs)


@dataclass
class _SessionSlot:
    session: Session
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_access: float = field(default_factory=time.monotonic)


class SessionStore:
    def __init__(self, ttl: float):
        self.ttl = ttl
        self._slots: dict[str, _SessionSlot] = {}
        self._guard = threading.Lock()

    def add(self, session: Session) -> None:
        with self._guard:
            self._sweep()
            self._slots[session.id] = _SessionSlot(session)

    def get(self, session_id: str) -> _SessionSlot:
        with self._guard:
            self._sweep()
            slot = self._slots.get(session_id)
            if slot is None:
                raise KeyError(session_id)
            slot.last_access = time.monotonic()
            return slot

    def all_slots(self):
        with self._guard:
            return list(self._slots.values())

    def _sweep(self):
        deadline = time.monotonic() - self.ttl
        for sid in [s for s, slot in self._slots.items() if slot.last_access < deadline]:
            del self._slots[sid]


class SelectBody(BaseModel):
    op: str = Field(pattern="^(OR|AND|NOT)$")
    predicate: dict


class SessionBody(BaseModel):
    theta: float | None = None
    n_lod: int | None = None
    min_count: int | None = None
    beta: list[float] | None = None


class RecommendBody(BaseModel):
    beta: list[float] | None = None


class CohortBody(BaseModel):
    name: str
    color: str | None = None
    labels: list[str] = []


class CompareBody(BaseModel):
    ids: list[str]


class LabelEditsBody(BaseModel):
    edits: list[dict]
    snapshot_version: int | None = None


def create_app(config: ApiConfig | None = None) -> FastAPI:
    config = config or ApiConfig.from_env()
    corpus = load_corpus(config.corpus_path)
    taxonomy = load_taxonomy(config.taxonomy_path) if config.taxonomy_path else builtin_taxonomy()

    app = FastAPI(title="painter-atlas", version="0.1.0")
    state = {"corpus": corpus}
    corpus_lock = threading.Lock()
    store = SessionStore(config.session_ttl)

    def current_corpus():
        return state["corpus"]

    def slot_of(session_id: str) -> _SessionSlot:
        try:
            slot = store.get(session_id)
        except KeyError:
            raise HTTPException(404, f"unknown session {session_id!r}")
        # sessions always track the newest snapshot
        if slot.session.corpus is not current_corpus():
            slot.session.swap_corpus(current_corpus())
        return slot

    @app.get("/healthz")
    def healthz():
        c = current_corpus()
        return {"status": "ok", "painters": len(c), "relations": len(c.relations),
                "snapshot_version": c.version}

    @app.post("/sessions", status_code=201)
    def create_session(body: SessionBody | None = None):
        body = body or SessionBody()
        params = {
            "theta": body.theta if body.theta is not None else config.theta,
            "n_lod": body.n_lod if body.n_lod is not None else config.n_lod,
            "min_count": body.min_count if body.min_count is not None else 1,
        }
        session = Session(current_corpus(), taxonomy, params=params,
                          beta=body.beta or config.beta)
        store.add(session)
        return _session_payload(session)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return _session_payload(slot_of(session_id).session)

    @app.post("/sessions/{session_id}/select")
    def select(session_id: str, body: SelectBody):
        slot = slot_of(session_id)
        with slot.lock:
            try:
                predicate = Predicate.from_dict(body.predicate)
                selection = sess.apply_selection(slot.session, body.op, predicate)
            except SessionError as exc:
                raise HTTPException(422, str(exc))
            return {"selection": sorted(selection), "cursor": slot.session.cursor,
                    "texture": sess.OPERATOR_TEXTURES[body.op]}

    @app.post("/sessions/{session_id}/undo")
    def undo_step(session_id: str):
        slot = slot_of(session_id)
        with slot.lock:
            try:
                selection = sess.undo(slot.session)
            except SessionError as exc:
                raise HTTPException(409, str(exc))
            return {"selection": sorted(selection), "cursor": slot.session.cursor}

    @app.post("/sessions/{session_id}/redo")
    def redo_step(session_id: str):
        slot = slot_of(session_id)
        with slot.lock:
            try:
                selection = sess.redo(slot.session)
            except SessionError as exc:
                raise HTTPException(409, str(exc))
            return {"selection": sorted(selection), "cursor": slot.session.cursor}

    @app.get("/sessions/{session_id}/views/mountain")
    def mountain_view(session_id: str, theta: float | None = None, lod: int | None = None):
        slot = slot_of(session_id)
        with slot.lock:
            session = slot.session
            forest = session.forest(theta)
            corpus = session.corpus
            painters = {
                p.id: {
                    "name": p.name,
                    "year": corpus.effective_birth_year(p.id)[0],
                    "estimated": corpus.effective_birth_year(p.id)[1],
                }
                for p in corpus.painters
            }
            budget = lod if lod is not None else session.params.get("n_lod")
            layout = compute_layout(forest, painters, LayoutParams(n_lod=budget))
            return {
                "layout": layout,
                "forest": forest_to_dict(forest, corpus),
                "selection": sorted(session.selection),
            }

    @app.get("/sessions/{session_id}/views/labels")
    def labels_view(session_id: str, dims: str = "subject,technique",
                    min_count: int | None = None, mode: str = "context"):
        slot = slot_of(session_id)
        with slot.lock:
            session = slot.session
            try:
                distribution = label_distribution(
                    session.corpus, session.selection, mode=mode, taxonomy=taxonomy
                )
                combos = label_combinations(
                    session.corpus,
                    session.selection,
                    tuple(d for d in dims.split(",") if d),
                    min_count=min_count or session.params.get("min_count", 1),
                    taxonomy=taxonomy,
                )
            except ValueError as exc:
                raise HTTPException(422, str(exc))
            return {"distribution": distribution, "combinations": combos}

    @app.get("/sessions/{session_id}/views/geography")
    def geography_view(session_id: str):
        slot = slot_of(session_id)
        with slot.lock:
            return {"provinces": sess.geo_aggregate(slot.session)}

    @app.get("/sessions/{session_id}/views/identity")
    def identity_view(session_id: str):
        slot = slot_of(session_id)
        with slot.lock:
            return sess.identity_aggregate(slot.session)

    @app.post("/sessions/{session_id}/recommend")
    def recommend_endpoint(session_id: str, body: RecommendBody | None = None):
        slot = slot_of(session_id)
        with slot.lock:
            try:
                return sess.run_recommendation(slot.session, (body.beta if body else None))
            except (SessionError, RecommendError) as exc:
                raise HTTPException(422, str(exc))

    @app.post("/sessions/{session_id}/cohorts", status_code=201)
    def create_cohort_endpoint(session_id: str, body: CohortBody):
        slot = slot_of(session_id)
        with slot.lock:
            try:
                cohort = sess.create_cohort(slot.session, body.name, body.color, body.labels)
            except SessionError as exc:
                raise HTTPException(422, str(exc))
            return _cohort_payload(cohort)

    @app.get("/sessions/{session_id}/cohorts")
    def list_cohorts_endpoint(session_id: str):
        slot = slot_of(session_id)
        with slot.lock:
            return {"cohorts": [_cohort_payload(c) for c in sess.list_cohorts(slot.session)]}

    @app.delete("/sessions/{session_id}/cohorts/{cohort_id}")
    def delete_cohort_endpoint(session_id: str, cohort_id: str):
        slot = slot_of(session_id)
        with slot.lock:
            try:
                sess.delete_cohort(slot.session, cohort_id)
            except SessionError as exc:
                raise HTTPException(404, str(exc))
            return {"deleted": cohort_id}

    @app.post("/sessions/{session_id}/cohorts/compare")
    def compare_endpoint(session_id: str, body: CompareBody):
        slot = slot_of(session_id)
        with slot.lock:
            try:
                return sess.compare_cohorts(slot.session, body.ids)
            except SessionError as exc:
                raise HTTPException(404, str(exc))

    @app.get("/painters/{painter_id}")
    def painter_detail(painter_id: str):
        corpus = current_corpus()
        try:
            painter = corpus.by_id(painter_id)
        except CorpusError as exc:
            raise HTTPException(404, str(exc))
        weights = compute_importance(corpus, painter_id)
        labels = [
            {
                "label_id": ref.label_id,
                "span": ref.span,
                "dimension": taxonomy.dimension_of(ref.label_id) if ref.label_id in taxonomy else None,
                "name": taxonomy.by_id[ref.label_id].name if ref.label_id in taxonomy else ref.label_id,
            }
            for ref in painter.raw_labels
        ]
        relations = [
            {"kind": r.kind, "master_id": r.master_id, "apprentice_id": r.apprentice_id}
            for r in corpus.relations
            if painter_id in (r.apprentice_id, r.master_id)
        ]
        return {
            "id": painter.id,
            "name": painter.name,
            "birth_year": painter.birth_year,
            "death_year": painter.death_year,
            "dynasty": painter.dynasty,
            "province": painter.province,
            "official_position": painter.official_position,
            "official_level": painter.official_level,
            "biography": painter.biography,
            "labels": labels,
            "importance": [{"label": l, "weight": w} for l, w in weights.weights],
            "relations": relations,
            "snapshot_version": corpus.version,
        }

    @app.patch("/painters/{painter_id}/labels")
    def patch_labels(painter_id: str, body: LabelEditsBody, response: Response):
        with corpus_lock:
            corpus = current_corpus()
            if body.snapshot_version is not None and body.snapshot_version != corpus.version:
                raise HTTPException(
                    409,
                    f"stale snapshot: expected version {corpus.version}, got {body.snapshot_version}",
                )
            try:
                updated = update_painter_labels(corpus, painter_id, body.edits, taxonomy)
            except CorpusError as exc:
                code = 404 if "unknown painter" in str(exc) else 422
                raise HTTPException(code, str(exc))
            state["corpus"] = updated
        response.headers["X-Snapshot-Version"] = str(updated.version)
        return {"painter_id": painter_id, "snapshot_version": updated.version}

    if config.static_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=config.static_dir, html=True), name="ui")

    return app


def _session_payload(session: Session) -> dict:
    return {
        "id": session.id,
        "params": session.params,
        "beta": list(session.beta),
        "cursor": session.cursor,
        "steps": [
            {"operator": s.operator, "predicate": s.predicate.to_dict(), "texture": s.texture}
            for s in session.steps
        ],
        "selection": sorted(session.selection),
        "cohorts": [_cohort_payload(c) for c in session.cohorts.values()],
        "snapshot_version": session.corpus.version,
    }


def _cohort_payload(cohort) -> dict:
    return {
        "id": cohort.id,
        "name": cohort.name,
        "color": cohort.color,
        "painter_ids": sorted(cohort.painter_ids),
        "labels": list(cohort.labels),
        "summary": cohort.summary,
        "size": len(cohort.painter_ids),
    }


def serve(config: ApiConfig | None = None) -> None:
    """Run the service under uvicorn (blocking)."""
    import uvicorn

    config = config or ApiConfig.from_env()
    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="info")
