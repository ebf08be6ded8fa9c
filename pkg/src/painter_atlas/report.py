"""Batch report: summary figures and delimited tables for a corpus.

Renders overview figures (label distribution, geographic bubbles, identity
rings, timeline, mountain overview) to PNG files next to CSV tables, so a
corpus can be inspected without the interactive UI.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.patches import Polygon as MplPolygon

from .forest import reconstruct
from .labels import DIMENSIONS, builtin_taxonomy, label_distribution
from .layout import LayoutParams, compute_layout
from .resources import province_table

_DIM_COLORS = {"subject": "#c0392b", "technique": "#27ae60", "emotion": "#2980b9"}


def write_report(corpus, out_dir, selection=None, taxonomy=None, theta=0.6, n_lod=400):
    """Write every report artifact into out_dir; returns the created paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    taxonomy = taxonomy or builtin_taxonomy()
    selection = set(selection or ())
    created = []

    created += _write_tables(corpus, out_dir, selection, taxonomy)
    created.append(_plot_label_distribution(corpus, out_dir, selection, taxonomy))
    created.append(_plot_geography(corpus, out_dir, selection))
    created.append(_plot_identity(corpus, out_dir))
    created.append(_plot_timeline(corpus, out_dir))
    created.append(_plot_mountains(corpus, out_dir, theta, n_lod))
    return created


def _write_tables(corpus, out_dir, selection, taxonomy):
    painters_csv = out_dir / "painters.csv"
    with open(painters_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["id", "name", "birth_year", "death_year", "dynasty", "province",
             "official_level", "official_position", "labels", "selected"]
        )
        for p in corpus.painters:
            writer.writerow(
                [p.id, p.name, p.birth_year, p.death_year, p.dynasty, p.province,
                 p.official_level, p.official_position,
                 "|".join(sorted(p.label_ids())), int(p.id in selection)]
            )

    label_csv = out_dir / "label_counts.csv"
    distribution = label_distribution(corpus, selection, "context", taxonomy)
    with open(label_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dimension", "label", "name", "total", "selected",
                         "rolled_total", "rolled_selected"])
        for dim in DIMENSIONS:
            for entry in distribution[dim]:
                writer.writerow(
                    [dim, entry["id"], entry["name"], entry["total"], entry["selected"],
                     entry["rolled_total"], entry["rolled_selected"]]
                )

    province_csv = out_dir / "province_counts.csv"
    counts: dict[str, list[int]] = {}
    for p in corpus.painters:
        key = p.province or "unknown"
        bucket = counts.setdefault(key, [0, 0])
        bucket[0] += 1
        bucket[1] += int(p.id in selection)
    with open(province_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["province", "total", "selected"])
        for key in sorted(counts):
            writer.writerow([key, counts[key][0], counts[key][1]])
    return [painters_csv, label_csv, province_csv]


def _plot_label_distribution(corpus, out_dir, selection, taxonomy):
    distribution = label_distribution(corpus, selection, "context", taxonomy)
    fig, axes = plt.subplots(1, 3, figsize=(15, 6), sharey=False)
    for ax, dim in zip(axes, DIMENSIONS):
        entries = sorted(distribution[dim], key=lambda e: -e["rolled_total"])[:12]
        names = [e["name"] for e in entries][::-1]
        totals = [e["rolled_total"] for e in entries][::-1]
        ax.barh(names, totals, color=_DIM_COLORS[dim], alpha=0.8)
        ax.set_title(dim)
        ax.tick_params(labelsize=8)
    fig.suptitle("Label distribution (rolled-up painter counts)")
    fig.tight_layout()
    path = out_dir / "label_distribution.png"
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def _plot_geography(corpus, out_dir, selection):
    table = province_table()
    counts: dict[str, list[int]] = {}
    for p in corpus.painters:
        if p.province in table:
            bucket = counts.setdefault(p.province, [0, 0])
            bucket[0] += 1
            bucket[1] += int(p.id in selection)
    fig, ax = plt.subplots(figsize=(9, 8))
    for code, (total, selected) in sorted(counts.items()):
        info = table[code]
        ax.scatter(info["lon"], info["lat"], s=total * 14, color="#4a8fe6", alpha=0.45)
        if selected:
            ax.scatter(info["lon"], info["lat"], s=selected * 14, color="#e6794a", alpha=0.85)
        ax.annotate(info["name"], (info["lon"], info["lat"]), fontsize=7,
                    xytext=(3, 3), textcoords="offset points")
    ax.set_xlabel("longitude")
    ax.set_ylabel("latitude")
    ax.set_title("Painters per province (orange: selected)")
    fig.tight_layout()
    path = out_dir / "geography.png"
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def _plot_identity(corpus, out_dir):
    levels = {level: 0 for level in range(1, 6)}
    unknown = 0
    positions: dict[str, int] = {}
    for p in corpus.painters:
        if p.official_level:
            levels[p.official_level] += 1
            positions[p.official_position or "unknown"] = (
                positions.get(p.official_position or "unknown", 0) + 1
            )
        else:
            unknown += 1
    fig, ax = plt.subplots(figsize=(7, 7))
    inner_values = [levels[l] for l in range(1, 6)] + [unknown]
    inner_labels = [f"level {l}" for l in range(1, 6)] + ["unknown"]
    keep = [i for i, v in enumerate(inner_values) if v > 0]
    ax.pie(
        [inner_values[i] for i in keep],
        labels=[inner_labels[i] for i in keep],
        radius=0.7,
        wedgeprops={"width": 0.3, "edgecolor": "white"},
        textprops={"fontsize": 8},
    )
    if positions:
        ordered = sorted(positions.items())
        ax.pie(
            [v for _, v in ordered],
            labels=[k for k, _ in ordered],
            radius=1.0,
            wedgeprops={"width": 0.25, "edgecolor": "white"},
            textprops={"fontsize": 7},
        )
    ax.set_title("Official identity rings (inner: level, outer: position)")
    path = out_dir / "identity.png"
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def _plot_timeline(corpus, out_dir):
    years = [p.birth_year for p in corpus.painters if p.birth_year is not None]
    fig, ax = plt.subplots(figsize=(10, 4))
    if years:
        ax.hist(years, bins=min(40, max(5, len(set(years)) // 3)), color="#53a567", alpha=0.8)
    ax.set_xlabel("birth year")
    ax.set_ylabel("painters")
    ax.set_title("Birth-year distribution")
    fig.tight_layout()
    path = out_dir / "timeline.png"
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def _plot_mountains(corpus, out_dir, theta, n_lod):
    forest = reconstruct(corpus, theta=theta, n_lod=n_lod)
    painters = {
        p.id: {
            "name": p.name,
            "year": corpus.effective_birth_year(p.id)[0],
            "estimated": corpus.effective_birth_year(p.id)[1],
        }
        for p in corpus.painters
    }
    layout = compute_layout(forest, painters, LayoutParams(n_lod=n_lod))
    fig, ax = plt.subplots(figsize=(13, 8))
    for mountain in layout["mountains"]:
        for hill in mountain["hills"]:
            ax.add_patch(
                MplPolygon(hill["polygon"], closed=True, facecolor="#dce8dc",
                           edgecolor="#6b8f71", linewidth=0.7)
            )
        for edge in mountain["edges"]:
            xs = [p[0] for p in edge["polyline"]]
            ys = [p[1] for p in edge["polyline"]]
            style = "--" if edge["solidity"] == "dashed" else "-"
            ax.plot(xs, ys, style, color="#4a6fa5", linewidth=0.7)
        for dot in mountain["dots"]:
            color = "#20b2aa" if dot["kind"] == "painter" else "#9e9e9e"
            ax.plot(dot["x"], dot["y"], "o", markersize=2.4, color=color)
    ax.set_xlim(0, layout["width"])
    ax.set_ylim(layout["height"], 0)  # earliest year on top
    ax.set_yticks([t["y"] for t in layout["timeline"]])
    ax.set_yticklabels([t["year"] for t in layout["timeline"]], fontsize=7)
    ax.set_xticks([])
    ax.set_title("Mountain overview of the inheritance forest")
    fig.tight_layout()
    path = out_dir / "mountain.png"
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
