"""Five-dimension cohort similarity and the recommendation ranking.

A candidate painter is scored against a potential cohort on artistic
labels, geography, time, identity, and inheritance; the total is a weighted
sum with user-tunable weights. Dimensions a candidate (or the cohort) has no
data for are zeroed and the remaining weights rescaled to sum 1, so missing
data never deflates a score. The top ceil(N/3) candidates are recommended,
where N is the cohort size.

Distance kernels: geography uses exp(-km/1000) between province capitals,
time exp(-|birth gap|/100), inheritance 2^-hops over the undirected
inheritance subgraph capped at 6 hops. All similarities land in [0, 1].
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from .labels import LabelWeights, compute_all_importances, default_table
from .resources import great_circle_km, province_table

DIMENSION_NAMES = ("labels", "geography", "time", "identity", "inheritance")
UNIFORM_BETA = (0.2, 0.2, 0.2, 0.2, 0.2)

GEO_SCALE_KM = 1000.0
TIME_SCALE_YEARS = 100.0
MAX_GRAPH_HOPS = 6


class RecommendError(Exception):
    pass


@dataclass(frozen=True)
class CohortProfile:
    """Pooled features of a potential cohort."""

    members: frozenset
    label_freq: tuple[tuple[str, float], ...]  # normalized label frequency vector
    provinces: frozenset
    years: tuple[int, ...]  # known birth years, sorted
    level_freq: tuple[float, float, float, float, float] | None  # None if no known level

    def lfv(self) -> dict:
        return dict(self.label_freq)


@dataclass(frozen=True)
class Recommendation:
    painter_id: str
    score: float
    scores: tuple[float, float, float, float, float]
    weights: tuple[float, float, float, float, float]
    rank: int


def profile_cohort(corpus, cohort, importances=None) -> CohortProfile:
    """Pool labels, provinces, years, and official levels over the cohort.

    The label frequency vector counts each member once per label in its
    truncated importance support and normalizes to sum 1.
    """
    members = frozenset(cohort)
    if not members:
        raise RecommendError("empty cohort")
    importances = importances or compute_all_importances(corpus)

    counts: dict[str, int] = {}
    provinces = set()
    years = []
    levels = [0, 0, 0, 0, 0]
    any_level = False
    for pid in sorted(members):
        painter = corpus.by_id(pid)
        for label in importances[pid].labels():
            counts[label] = counts.get(label, 0) + 1
        if painter.province:
            provinces.add(painter.province)
        if painter.birth_year is not None:
            years.append(painter.birth_year)
        if painter.official_level is not None:
            levels[painter.official_level - 1] += 1
            any_level = True

    total = sum(counts.values())
    label_freq = tuple(
        (label, counts[label] / total) for label in sorted(counts, key=lambda l: (-counts[l], l))
    ) if total else ()
    level_freq = tuple(v / sum(levels) for v in levels) if any_level else None
    return CohortProfile(members, label_freq, frozenset(provinces), tuple(sorted(years)), level_freq)


# ---------------------------------------------------------------------------
# Per-dimension similarities; each returns (score, available)
# ---------------------------------------------------------------------------


def sim_labels(weights: LabelWeights, profile: CohortProfile, table) -> tuple[float, bool]:
    """Weighted label match: sum_i sum_j w_i * sim(l_i, c_j) * lfv_j."""
    if not weights.weights or not profile.label_freq:
        return 0.0, False
    score = 0.0
    for label, w in weights.weights:
        row_total = 0.0
        for cohort_label, freq in profile.label_freq:
            row_total += table.sim(label, cohort_label) * freq
        score += w * row_total
    return score, True


def sim_geo(painter, profile: CohortProfile, provinces=None) -> tuple[float, bool]:
    """exp(-d) with d the minimal capital distance in thousands of km."""
    if not painter.province or not profile.provinces:
        return 0.0, False
    table = provinces or province_table()
    d = min(
        great_circle_km(painter.province, other, table) for other in sorted(profile.provinces)
    ) / GEO_SCALE_KM
    return math.exp(-d), True


def sim_time(painter, profile: CohortProfile) -> tuple[float, bool]:
    """exp(-d) with d the minimal birth-year gap in centuries."""
    if painter.birth_year is None or not profile.years:
        return 0.0, False
    d = min(abs(painter.birth_year - y) for y in profile.years) / TIME_SCALE_YEARS
    return math.exp(-d), True


def sim_identity(painter, profile: CohortProfile) -> tuple[float, bool]:
    """The cohort's frequency of the painter's own official level."""
    if painter.official_level is None or profile.level_freq is None:
        return 0.0, False
    return profile.level_freq[painter.official_level - 1], True


def cohort_hop_distances(corpus, members) -> dict:
    """Minimal undirected inheritance-hop distance from the member set.

    Multi-source BFS capped at MAX_GRAPH_HOPS; painters beyond the cap are
    absent from the result.
    """
    neighbors: dict[str, set[str]] = {p.id: set() for p in corpus.painters}
    for apprentice, master in corpus.inheritance_edges():
        neighbors[apprentice].add(master)
        neighbors[master].add(apprentice)
    dist = {pid: 0 for pid in members if pid in neighbors}
    queue = deque(sorted(dist))
    while queue:
        pid = queue.popleft()
        if dist[pid] >= MAX_GRAPH_HOPS:
            continue
        for nxt in sorted(neighbors[pid]):
            if nxt not in dist:
                dist[nxt] = dist[pid] + 1
                queue.append(nxt)
    return dist


def sim_inherit(painter_id, hop_distances) -> tuple[float, bool]:
    """2^-d for the closest cohort member; unreachable contributes 0."""
    d = hop_distances.get(painter_id)
    if d is None or d > MAX_GRAPH_HOPS:
        return 0.0, True
    return 2.0 ** -d, True


def normalize_weights(beta, available) -> tuple[float, ...]:
    """Zero unavailable dimensions and rescale the rest to sum 1."""
    beta = tuple(float(b) for b in beta)
    if len(beta) != 5 or any(b < 0 for b in beta):
        raise RecommendError(f"beta must be 5 nonnegative weights, got {beta!r}")
    masked = [b if ok else 0.0 for b, ok in zip(beta, available)]
    total = sum(masked)
    if total <= 0:
        raise RecommendError("no usable dimensions: every weighted dimension lacks data")
    return tuple(b / total for b in masked)


# ---------------------------------------------------------------------------
# Ranking
# ---------------------------------------------------------------------------


def recommendation_count(cohort_size: int) -> int:
    return math.ceil(cohort_size / 3)


def score_candidates(corpus, cohort, beta=None, table=None, importances=None) -> list[Recommendation]:
    """Score and rank every painter outside the cohort, best first.

    Weights are renormalized per candidate over its available dimensions.
    A candidate with no usable dimension at all scores 0 with zero weights.
    Ties break toward the smaller painter id.
    """
    members = frozenset(cohort)
    if not members:
        raise RecommendError("empty cohort")
    unknown = [pid for pid in members if pid not in corpus]
    if unknown:
        raise RecommendError(f"cohort members not in corpus: {sorted(unknown)}")
    beta = tuple(beta) if beta is not None else UNIFORM_BETA
    table = table or default_table()
    importances = importances or compute_all_importances(corpus)
    profile = profile_cohort(corpus, members, importances)
    hops = cohort_hop_distances(corpus, members)
    provinces = province_table()

    # the label affinity of one label against the whole cohort is reused
    # across candidates
    affinity: dict[str, float] = {}

    def label_affinity(label):
        if label not in affinity:
            affinity[label] = sum(
                table.sim(label, cohort_label) * freq
                for cohort_label, freq in profile.label_freq
            )
        return affinity[label]

    geo_cache: dict[str, float] = {}

    def geo_distance(province):
        if province not in geo_cache:
            geo_cache[province] = min(
                great_circle_km(province, other, provinces)
                for other in sorted(profile.provinces)
            ) / GEO_SCALE_KM
        return geo_cache[province]

    results = []
    for painter in sorted(corpus.painters, key=lambda p: p.id):
        if painter.id in members:
            continue
        weights = importances[painter.id]
        if weights.weights and profile.label_freq:
            s1 = sum(w * label_affinity(label) for label, w in weights.weights)
            a1 = True
        else:
            s1, a1 = 0.0, False
        if painter.province and profile.provinces:
            s2, a2 = math.exp(-geo_distance(painter.province)), True
        else:
            s2, a2 = 0.0, False
        s3, a3 = sim_time(painter, profile)
        s4, a4 = sim_identity(painter, profile)
        s5, a5 = sim_inherit(painter.id, hops)
        scores = (s1, s2, s3, s4, s5)
        try:
            applied = normalize_weights(beta, (a1, a2, a3, a4, a5))
        except RecommendError:
            applied = (0.0,) * 5
        total = sum(w * s for w, s in zip(applied, scores))
        results.append((painter.id, total, scores, applied))

    results.sort(key=lambda row: (-row[1], row[0]))
    return [
        Recommendation(pid, total, scores, applied, rank)
        for rank, (pid, total, scores, applied) in enumerate(results, start=1)
    ]


def recommend(corpus, cohort, beta=None, table=None, importances=None) -> list[Recommendation]:
    """The top ceil(N/3) ranked candidates (fewer only if the pool is smaller)."""
    ranked = score_candidates(corpus, cohort, beta, table, importances)
    return ranked[: recommendation_count(len(frozenset(cohort)))]
