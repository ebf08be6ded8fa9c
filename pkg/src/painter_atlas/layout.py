"""Mountain-map geometry for an inheritance forest.

Every visible hierarchy tree becomes a mountain of triangular hills, one per
logic unit: peak at the unit's earliest birth year, base at its latest, dots
for painters on the vertical right edge. The vertical axis is a shared
timeline (earliest year at the top); horizontal tree placement runs a fixed
seeded force simulation (attraction along cross links, box repulsion) and a
final left-to-right separation sweep that guarantees zero overlaps.

Everything here is a pure function of (forest, painter info, params):
identical inputs produce byte-identical JSON.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

DEFAULT_N_LOD = 400


@dataclass(frozen=True)
class LayoutParams:
    width: float = 1600.0
    height: float = 1000.0
    year_range: tuple | None = None  # (first, last); derived from data when None
    base_hill_width: float = 40.0
    mountain_gap: float = 30.0
    force_iterations: int = 300
    seed: int = 0
    n_lod: int | None = None  # painter budget; falls back to the forest's
    glyph: float = 7.0  # abstract units per glyph for name boxes

    def __post_init__(self):
        if self.force_iterations < 1:
            raise ValueError("force_iterations must be >= 1")
        if self.year_range is not None and self.year_range[0] >= self.year_range[1]:
            raise ValueError("year_range must be non-degenerate")


def lod_filter(forest, n_lod: int | None):
    """Visible cluster ids under the painter-count budget.

    Clusters are considered largest first (ties by id); one is admitted iff
    the painter count already admitted does not exceed the budget. None
    means no budget.
    """
    sizes = sorted(
        ((forest.cluster_painter_count(c.id), c.id) for c in forest.partition.clusters),
        key=lambda item: (-item[0], item[1]),
    )
    if n_lod is None:
        return [cid for _, cid in sizes]
    if n_lod < 0:
        raise ValueError("n_lod must be >= 0")
    visible, running = [], 0
    for size, cid in sizes:
        if running > n_lod:
            break
        visible.append(cid)
        running += size
    return visible


def vertical_scale(params: LayoutParams, year) -> float:
    """Linear year-to-y map over params.year_range; earliest year at the top."""
    first, last = params.year_range
    year = min(max(year, first), last)
    return (year - first) / (last - first) * params.height


# ---------------------------------------------------------------------------
# Hill shaping
# ---------------------------------------------------------------------------


class _Hill:
    __slots__ = ("unit", "x_right", "width", "y_peak", "y_base", "start_year")

    def __init__(self, unit, x_right, width, y_peak, y_base, start_year):
        self.unit = unit
        self.x_right = x_right
        self.width = width
        self.y_peak = y_peak
        self.y_base = y_base
        self.start_year = start_year

    def box(self):
        return (self.x_right - self.width, self.y_peak, self.x_right, self.y_base)


def _boxes_intersect(a, b):
    return a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]


def expand_hill_overlaps(hills, step: float):
    """Resolve intersecting hill boxes inside one mountain.

    While any two boxes intersect, the upper hill (earlier start year, ties
    to list order) expands outward: its width grows while the right edge
    retreats, sliding the box leftward until clear. No-op on layouts whose
    slots already separate the hills.
    """
    guard = 0
    while guard < 100000:
        guard += 1
        collision = None
        for i in range(len(hills)):
            for j in range(i + 1, len(hills)):
                if _boxes_intersect(hills[i].box(), hills[j].box()):
                    collision = (i, j)
                    break
            if collision:
                break
        if collision is None:
            return hills
        i, j = collision
        upper = hills[i] if (hills[i].start_year, i) <= (hills[j].start_year, j) else hills[j]
        upper.width += step
        upper.x_right -= step
    raise RuntimeError("hill expansion did not converge")


def shape_hills(forest, cluster_id: str, painters, params: LayoutParams):
    """Local geometry of one mountain: hills, dots, and name anchors.

    Hills sit left to right in depth-first hierarchy order on base-width
    slots; the overlap expansion pass then guarantees disjoint boxes. Dots
    (painters plus hosted virtual nodes) sit on each hill's right edge at
    their birth-year height.
    """
    graph = forest.unit_graph
    order = forest.subtree_units(forest.roots[cluster_id])
    base = params.base_hill_width

    hills = []
    for k, uid in enumerate(order):
        unit = graph.by_id[uid]
        hills.append(
            _Hill(
                unit=uid,
                x_right=(k + 1) * base,
                width=base,
                y_peak=vertical_scale(params, unit.start_year),
                y_base=vertical_scale(params, unit.end_year),
                start_year=unit.start_year,
            )
        )
    expand_hill_overlaps(hills, base / 4.0)

    hosted = {}
    for vnode in forest.virtual_nodes:
        if vnode.host_unit in set(order):
            hosted.setdefault(vnode.host_unit, []).append(vnode)

    dots, names = [], []
    hill_docs = []
    for hill in hills:
        unit = graph.by_id[hill.unit]
        chain = []
        for pid in unit.members:
            y = vertical_scale(params, painters[pid]["year"])
            dots.append({"id": pid, "kind": "painter", "unit": hill.unit, "x": hill.x_right, "y": y})
            chain.append((hill.x_right, y))
            names.append(
                {
                    "painter": pid,
                    "name": painters[pid]["name"],
                    "anchor": (hill.x_right - params.glyph, y),
                }
            )
        for vnode in hosted.get(hill.unit, ()):
            source = graph.by_id[vnode.source_unit]
            y = vertical_scale(params, source.start_year)
            dots.append({"id": vnode.id, "kind": "virtual", "unit": hill.unit, "x": hill.x_right, "y": y})
        hill_docs.append(
            {
                "unit": hill.unit,
                "width": hill.width,
                "x_right": hill.x_right,
                "peak": (hill.x_right, hill.y_peak),
                "polygon": (
                    (hill.x_right - hill.width, hill.y_base),
                    (hill.x_right, hill.y_peak),
                    (hill.x_right, hill.y_base),
                ),
                "dot_chain": tuple(chain),
            }
        )

    x0 = min(h.x_right - h.width for h in hills)
    x1 = max(h.x_right for h in hills)
    y0 = min(h.y_peak for h in hills)
    y1 = max(h.y_base for h in hills)
    return {
        "cluster": cluster_id,
        "hills": hill_docs,
        "dots": dots,
        "names": names,
        "local_box": (x0, y0, x1, y1),
    }


# ---------------------------------------------------------------------------
# Mountain placement
# ---------------------------------------------------------------------------


def place_mountains(mountains, links, params: LayoutParams):
    """Horizontal centers for the visible trees.

    Seeded deterministic simulation: springs pull cross-linked trees toward
    touching distance, overlapping boxes (same years, same span) repel, and
    a left-to-right separation sweep afterwards removes any residual
    overlap, so the result is always collision-free. Returns (centers,
    overflow flag).
    """
    count = len(mountains)
    if count == 0:
        return {}, False
    ids = [m["cluster"] for m in mountains]
    widths = np.array([m["local_box"][2] - m["local_box"][0] for m in mountains])
    spans = [(m["local_box"][1], m["local_box"][3]) for m in mountains]
    centers = np.array([params.width * (i + 1) / (count + 1) for i in range(count)])

    y_pairs = [
        (i, j)
        for i in range(count)
        for j in range(i + 1, count)
        if spans[i][0] < spans[j][1] and spans[j][0] < spans[i][1]
    ]
    rep_i = np.array([p[0] for p in y_pairs], dtype=int)
    rep_j = np.array([p[1] for p in y_pairs], dtype=int)

    index = {cid: i for i, cid in enumerate(ids)}
    link_items = sorted(links.items())
    att_i = np.array([index[a] for (a, b), _ in link_items], dtype=int)
    att_j = np.array([index[b] for (a, b), _ in link_items], dtype=int)
    att_m = np.array([m for _, m in link_items], dtype=float)

    gap = params.mountain_gap
    for _ in range(params.force_iterations):
        force = np.zeros(count)
        if len(att_i):
            dx = centers[att_j] - centers[att_i]
            rest = (widths[att_i] + widths[att_j]) / 2 + gap
            sign = np.where(dx >= 0, 1.0, -1.0)
            pull = 0.05 * (np.abs(dx) - rest) * sign * att_m
            np.add.at(force, att_i, pull)
            np.add.at(force, att_j, -pull)
        if len(rep_i):
            dx = centers[rep_j] - centers[rep_i]
            min_sep = (widths[rep_i] + widths[rep_j]) / 2 + gap
            overlap = min_sep - np.abs(dx)
            sign = np.where(dx >= 0, 1.0, -1.0)  # coincident centers: higher index goes right
            push = np.where(overlap > 0, 0.5 * overlap * sign, 0.0)
            np.add.at(force, rep_i, -push)
            np.add.at(force, rep_j, push)
        centers = centers + np.clip(force, -20.0, 20.0)

    # separation sweep: deterministic left-to-right, clears every remaining
    # overlap between mountains sharing a year span
    order = sorted(range(count), key=lambda i: (centers[i], ids[i]))
    placed = []
    final = {}
    for i in order:
        left = centers[i] - widths[i] / 2
        for j in placed:
            if spans[i][0] < spans[j][1] and spans[j][0] < spans[i][1]:
                left = max(left, final[ids[j]] + widths[j] / 2 + gap)
        final[ids[i]] = left + widths[i] / 2
        placed.append(i)

    overflow = any(final[ids[i]] + widths[i] / 2 > params.width for i in range(count)) or any(
        final[ids[i]] - widths[i] / 2 < 0 for i in range(count)
    )
    return final, overflow


# ---------------------------------------------------------------------------
# Edge routing
# ---------------------------------------------------------------------------


def route_edges(forest, geom, painters, visible):
    """Stream and ladder polylines over globally positioned hills.

    A stream runs from a unit's first node straight to its direct parent's
    node and is solid. A ladder first runs horizontally at the source unit's
    first-node height to the anchor hill's right edge (the virtual node or
    the real anchor unit), then down that ridge to the connecting node, and
    is dashed.
    """
    graph = forest.unit_graph
    edges = []
    emphasized = set()

    def parent_node(source_unit, parent_unit):
        unit = graph.by_id[source_unit]
        hosts = [pid for pid in graph.by_id[parent_unit].members if pid in unit.master_set]
        if hosts:
            return min(hosts, key=lambda pid: (painters[pid]["year"], pid))
        return graph.by_id[parent_unit].members[0]

    for uid in sorted(g["unit"] for m in geom.values() for g in m["hills"]):
        parent = forest.direct_parent.get(uid)
        if parent is None:
            continue
        cluster = forest.partition.assignment[uid]
        if cluster not in visible:
            continue
        target = parent_node(uid, parent)
        emphasized.add(target)
        src = _first_node(geom, forest, uid)
        dst = _dot_position(geom, forest, parent, target)
        edges.append(
            {
                "kind": "stream",
                "source": uid,
                "target": parent,
                "polyline": (src, dst),
                "solidity": "solid",
            }
        )

    for link in forest.cross_links:
        src_cluster = forest.partition.assignment[link.source_unit]
        dst_cluster = forest.partition.assignment[link.anchor_unit]
        if src_cluster not in visible or dst_cluster not in visible:
            continue
        src = _first_node(geom, forest, link.source_unit)
        anchor_x = _hill_right(geom, forest, link.anchor_unit)
        elbow = (anchor_x, src[1])
        if link.virtual_node_id is not None:
            target_pid = parent_node(link.source_unit, link.target_chain[-1])
            end = _dot_position(geom, forest, link.target_chain[-1], target_pid)
        else:
            target_pid = None
            end = _first_node(geom, forest, link.anchor_unit)
        if target_pid:
            emphasized.add(target_pid)
        edges.append(
            {
                "kind": "ladder",
                "source": link.source_unit,
                "target": link.anchor_unit,
                "polyline": (src, elbow, end),
                "solidity": "dashed",
            }
        )
    return edges, emphasized


def _mountain_of(geom, forest, unit_id):
    return geom[forest.partition.assignment[unit_id]]


def _hill_right(geom, forest, unit_id):
    mountain = _mountain_of(geom, forest, unit_id)
    for hill in mountain["hills"]:
        if hill["unit"] == unit_id:
            return hill["x_right"]
    raise KeyError(unit_id)


def _first_node(geom, forest, unit_id):
    first = forest.unit_graph.by_id[unit_id].members[0]
    return _dot_position(geom, forest, unit_id, first)


def _dot_position(geom, forest, unit_id, painter_id):
    mountain = _mountain_of(geom, forest, unit_id)
    for dot in mountain["dots"]:
        if dot["id"] == painter_id and dot["unit"] == unit_id:
            return (dot["x"], dot["y"])
    raise KeyError(painter_id)


# ---------------------------------------------------------------------------
# Name decluttering
# ---------------------------------------------------------------------------


def declutter_names(names, params: LayoutParams):
    """Greedy top-down sweep hiding names whose glyph boxes collide.

    Vertical text: a name's box is one glyph wide and one glyph per
    character tall, hanging below its anchor. Emphasized names win ties at
    the same height.
    """
    glyph = params.glyph

    def box(entry):
        x, y = entry["anchor"]
        return (x - glyph / 2, y, x + glyph / 2, y + glyph * max(1, len(entry["name"])))

    order = sorted(
        range(len(names)),
        key=lambda i: (names[i]["anchor"][1], not names[i].get("emphasized"), names[i]["painter"]),
    )
    shown_boxes = []
    for i in order:
        candidate = box(names[i])
        if any(_boxes_intersect(candidate, other) for other in shown_boxes):
            names[i]["shown"] = False
        else:
            names[i]["shown"] = True
            shown_boxes.append(candidate)
    return names


# ---------------------------------------------------------------------------
# Full layout
# ---------------------------------------------------------------------------


def compute_layout(forest, painters, params: LayoutParams | None = None) -> dict:
    """Resolved mountain-map geometry document for a forest.

    ``painters`` maps painter id -> {"name", "year", "estimated"}; the
    corpus and the forest export both provide it.
    """
    params = params or LayoutParams()
    budget = params.n_lod if params.n_lod is not None else forest.n_lod
    if budget is None:
        budget = DEFAULT_N_LOD
    visible = lod_filter(forest, budget)
    visible_set = set(visible)

    if params.year_range is None:
        years = [
            painters[pid]["year"]
            for cid in visible
            for uid in forest.partition.units_in(cid)
            for pid in forest.unit_graph.by_id[uid].members
        ]
        lo = min(years) if years else 900
        hi = max(years) if years else 1900
        if hi <= lo:
            hi = lo + 1
        params = replace(params, year_range=(lo, hi))

    clusters = sorted(visible)
    geom = {cid: shape_hills(forest, cid, painters, params) for cid in clusters}

    links: dict[tuple, int] = {}
    for link in forest.cross_links:
        a = forest.partition.assignment[link.source_unit]
        b = forest.partition.assignment[link.anchor_unit]
        if a == b or a not in visible_set or b not in visible_set:
            continue
        key = (min(a, b), max(a, b))
        links[key] = links.get(key, 0) + 1

    centers, overflow = place_mountains([geom[cid] for cid in clusters], links, params)

    for cid in clusters:
        mountain = geom[cid]
        x0, y0, x1, y1 = mountain["local_box"]
        shift = centers[cid] - (x0 + x1) / 2
        for hill in mountain["hills"]:
            hill["x_right"] += shift
            hill["peak"] = (hill["peak"][0] + shift, hill["peak"][1])
            hill["polygon"] = tuple((x + shift, y) for x, y in hill["polygon"])
            hill["dot_chain"] = tuple((x + shift, y) for x, y in hill["dot_chain"])
        for dot in mountain["dots"]:
            dot["x"] += shift
        for name in mountain["names"]:
            name["anchor"] = (name["anchor"][0] + shift, name["anchor"][1])
        mountain["box"] = (x0 + shift, y0, x1 + shift, y1)
        del mountain["local_box"]

    edges, emphasized = route_edges(forest, geom, painters, visible_set)
    all_names = []
    for cid in clusters:
        for name in geom[cid]["names"]:
            name["emphasized"] = name["painter"] in emphasized
            all_names.append(name)
    declutter_names(all_names, params)

    for cid in clusters:
        geom[cid]["edges"] = [e for e in edges if forest.partition.assignment[e["source"]] == cid]

    layout_width = max(
        [params.width] + [geom[cid]["box"][2] + params.mountain_gap for cid in clusters]
    )
    first, last = params.year_range
    ticks = _timeline_ticks(first, last)

    doc = {
        "params": {
            "width": params.width,
            "height": params.height,
            "year_range": [first, last],
            "base_hill_width": params.base_hill_width,
            "mountain_gap": params.mountain_gap,
            "force_iterations": params.force_iterations,
            "seed": params.seed,
            "n_lod": budget,
            "glyph": params.glyph,
        },
        "width": layout_width,
        "height": params.height,
        "overflow": bool(overflow),
        "timeline": [{"year": y, "y": vertical_scale(params, y)} for y in ticks],
        "visible_clusters": visible,
        "mountains": [
            {
                "cluster": cid,
                "x_center": centers[cid],
                "box": list(geom[cid]["box"]),
                "hills": [
                    {
                        "unit": h["unit"],
                        "width": h["width"],
                        "x_right": h["x_right"],
                        "peak": list(h["peak"]),
                        "polygon": [list(p) for p in h["polygon"]],
                        "dot_chain": [list(p) for p in h["dot_chain"]],
                    }
                    for h in geom[cid]["hills"]
                ],
                "dots": geom[cid]["dots"],
                "edges": [
                    {
                        "kind": e["kind"],
                        "source": e["source"],
                        "target": e["target"],
                        "polyline": [list(p) for p in e["polyline"]],
                        "solidity": e["solidity"],
                    }
                    for e in geom[cid]["edges"]
                ],
                "names": [
                    {
                        "painter": n["painter"],
                        "name": n["name"],
                        "anchor": list(n["anchor"]),
                        "shown": n["shown"],
                        "emphasized": n["emphasized"],
                    }
                    for n in geom[cid]["names"]
                ],
            }
            for cid in clusters
        ],
    }
    return _round_floats(doc)


def _timeline_ticks(first, last):
    span = last - first
    for step in (10, 20, 25, 50, 100, 200, 250, 500, 1000):
        if span / step <= 12:
            break
    start = ((first + step - 1) // step) * step
    return list(range(start, last + 1, step))


def _round_floats(value):
    if isinstance(value, float):
        return round(value, 3)
    if isinstance(value, np.floating):
        return round(float(value), 3)
    if isinstance(value, dict):
        return {k: _round_floats(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round_floats(v) for v in value]
    return value


def layout_to_json(layout: dict) -> str:
    return json.dumps(layout, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# SVG export
# ---------------------------------------------------------------------------

_MARGIN_LEFT = 70.0
_MARGIN = 20.0


def _fmt(v) -> str:
    return f"{v:.2f}"


def render_svg(layout: dict) -> str:
    """Headless SVG rendering of a layout document.

    Minimal, deterministic markup meant for structural snapshot comparison:
    hills are polygons, dots circles, edges polylines, names vertical text.
    """
    ox, oy = _MARGIN_LEFT, _MARGIN
    width = layout["width"] + ox + _MARGIN
    height = layout["height"] + 2 * _MARGIN
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" '
        f'height="{_fmt(height)}" viewBox="0 0 {_fmt(width)} {_fmt(height)}">',
        '  <g class="timeline" stroke="#999" font-size="10">',
    ]
    for tick in layout["timeline"]:
        y = tick["y"] + oy
        parts.append(
            f'    <line x1="{_fmt(ox - 8)}" y1="{_fmt(y)}" x2="{_fmt(width - _MARGIN)}" y2="{_fmt(y)}" stroke-opacity="0.3" />'
        )
        parts.append(
            f'    <text x="4" y="{_fmt(y + 3)}" stroke="none" fill="#555">{tick["year"]}</text>'
        )
    parts.append("  </g>")

    for mountain in layout["mountains"]:
        parts.append(f'  <g class="mountain" data-cluster="{mountain["cluster"]}">')
        for hill in mountain["hills"]:
            points = " ".join(f"{_fmt(x + ox)},{_fmt(y + oy)}" for x, y in hill["polygon"])
            parts.append(
                f'    <polygon class="hill" data-unit="{hill["unit"]}" points="{points}" '
                'fill="#dce8dc" stroke="#6b8f71" />'
            )
            if len(hill["dot_chain"]) > 1:
                chain = " ".join(f"{_fmt(x + ox)},{_fmt(y + oy)}" for x, y in hill["dot_chain"])
                parts.append(
                    f'    <polyline class="unit-chain" points="{chain}" fill="none" '
                    'stroke="#6b8f71" stroke-dasharray="2 2" />'
                )
        for edge in mountain["edges"]:
            points = " ".join(f"{_fmt(x + ox)},{_fmt(y + oy)}" for x, y in edge["polyline"])
            dash = ' stroke-dasharray="5 3"' if edge["solidity"] == "dashed" else ""
            parts.append(
                f'    <polyline class="edge {edge["kind"]}" points="{points}" fill="none" '
                f'stroke="#4a6fa5"{dash} />'
            )
        for dot in mountain["dots"]:
            fill = "#20b2aa" if dot["kind"] == "painter" else "#9e9e9e"
            parts.append(
                f'    <circle class="dot {dot["kind"]}" data-id="{dot["id"]}" '
                f'cx="{_fmt(dot["x"] + ox)}" cy="{_fmt(dot["y"] + oy)}" r="2.5" fill="{fill}" />'
            )
        for name in mountain["names"]:
            if not name["shown"]:
                continue
            cls = "name emphasized" if name["emphasized"] else "name"
            color = "#a03232" if name["emphasized"] else "#222"
            x, y = name["anchor"]
            parts.append(
                f'    <text class="{cls}" x="{_fmt(x + ox)}" y="{_fmt(y + oy)}" '
                f'writing-mode="tb" font-size="9" fill="{color}">{_escape(name["name"])}</text>'
            )
        parts.append("  </g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
