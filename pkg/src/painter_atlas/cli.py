"""The ``atlas`` command line: batch pipeline, views, reports, and the server.

Exit codes: 0 success, 1 validation/domain error, 2 usage error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import report as report_mod
from .corpus import (
    CorpusError,
    ValidationError,
    generate_fixture,
    load_corpus,
    save_corpus,
)
from .forest import forest_from_dict, forest_to_dict, reconstruct
from .labels import label_combinations, label_distribution, load_taxonomy
from .layout import LayoutParams, compute_layout, layout_to_json, render_svg
from .recommend import RecommendError, recommend
from .service import ApiConfig, serve


@click.group()
def main():
    """Cohort exploration engine for historical painter inheritance networks."""


def _fail(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _painter_info(corpus):
    return {
        p.id: {
            "name": p.name,
            "year": corpus.effective_birth_year(p.id)[0],
            "estimated": corpus.effective_birth_year(p.id)[1],
        }
        for p in corpus.painters
    }


@main.command()
@click.argument("file", type=str)
def validate(file):
    """Validate a corpus file; exits 1 with the violation list if invalid."""
    try:
        corpus = load_corpus(file)
    except ValidationError as exc:
        for violation in exc.violations:
            click.echo(f"violation: {violation}", err=True)
        sys.exit(1)
    except CorpusError as exc:
        _fail(str(exc))
    click.echo(f"ok: {len(corpus)} painters, {len(corpus.relations)} relations")


@main.command("gen-fixture")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--n", type=int, default=100, show_default=True)
@click.option("--era", type=str, default="900:1900", show_default=True,
              help="Birth-year range as FIRST:LAST.")
@click.option("--out", type=click.Path(dir_okay=False), default="fixture_corpus.json",
              show_default=True)
def gen_fixture(seed, n, era, out):
    """Generate a deterministic synthetic corpus."""
    try:
        first, last = (int(part) for part in era.split(":"))
    except ValueError:
        raise click.UsageError(f"--era must be FIRST:LAST, got {era!r}")
    corpus = generate_fixture(seed, n, (first, last))
    save_corpus(corpus, out)
    click.echo(f"wrote {out}: {len(corpus)} painters, {len(corpus.relations)} relations")


@main.command("reconstruct")
@click.argument("corpus_path", type=str)
@click.option("--theta", type=float, default=0.6, show_default=True)
@click.option("--lod", type=int, default=400, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default="forest.json", show_default=True)
def reconstruct_cmd(corpus_path, theta, lod, out):
    """Rebuild the inheritance forest and write its JSON export."""
    try:
        corpus = load_corpus(corpus_path)
        forest = reconstruct(corpus, theta=theta, n_lod=lod)
    except (CorpusError, ValueError) as exc:
        _fail(str(exc))
    doc = forest_to_dict(forest, corpus)
    Path(out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    click.echo(
        f"wrote {out}: {len(doc['units'])} units, {len(doc['clusters'])} clusters, "
        f"{len(doc['cross_links'])} cross links"
    )


@main.command("recommend")
@click.argument("corpus_path", type=str)
@click.option("--cohort", "cohort_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="JSON file with a list of painter ids.")
@click.option("--beta", type=str, default="0.2,0.2,0.2,0.2,0.2", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default="recommendations.json",
              show_default=True)
def recommend_cmd(corpus_path, cohort_path, beta, out):
    """Rank painters similar to a cohort and write the audit-friendly result."""
    try:
        weights = tuple(float(part) for part in beta.split(","))
    except ValueError:
        raise click.UsageError(f"--beta must be 5 comma-separated numbers, got {beta!r}")
    if len(weights) != 5:
        raise click.UsageError("--beta must have exactly 5 entries")
    try:
        corpus = load_corpus(corpus_path)
        cohort_doc = json.loads(Path(cohort_path).read_text(encoding="utf-8"))
        cohort = cohort_doc["cohort"] if isinstance(cohort_doc, dict) else cohort_doc
        if not cohort:
            _fail("empty cohort")
        results = recommend(corpus, cohort, weights)
    except (CorpusError, RecommendError, json.JSONDecodeError) as exc:
        _fail(str(exc))
    doc = {
        "cohort": sorted(set(cohort)),
        "beta": list(weights),
        "recommendations": [
            {
                "painter_id": r.painter_id,
                "rank": r.rank,
                "score": r.score,
                "scores": {
                    "labels": r.scores[0],
                    "geography": r.scores[1],
                    "time": r.scores[2],
                    "identity": r.scores[3],
                    "inheritance": r.scores[4],
                },
                "weights": list(r.weights),
            }
            for r in results
        ],
    }
    Path(out).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    click.echo(f"wrote {out}: {len(results)} recommendations")


@main.command("layout")
@click.argument("forest_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--json", "json_out", type=click.Path(dir_okay=False), default="layout.json",
              show_default=True)
@click.option("--svg", "svg_out", type=click.Path(dir_okay=False), default=None,
              help="Also render the layout as SVG.")
@click.option("--width", type=float, default=1600.0, show_default=True)
@click.option("--height", type=float, default=1000.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--lod", type=int, default=None, help="Override the forest's painter budget.")
def layout_cmd(forest_path, json_out, svg_out, width, height, seed, lod):
    """Compute mountain-map geometry from a forest export."""
    try:
        doc = json.loads(Path(forest_path).read_text(encoding="utf-8"))
        forest, painters = forest_from_dict(doc)
        params = LayoutParams(width=width, height=height, seed=seed, n_lod=lod)
        layout = compute_layout(forest, painters, params)
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        _fail(f"cannot lay out {forest_path}: {exc}")
    Path(json_out).write_text(layout_to_json(layout), encoding="utf-8")
    outputs = [json_out]
    if svg_out:
        Path(svg_out).write_text(render_svg(layout), encoding="utf-8")
        outputs.append(svg_out)
    click.echo(f"wrote {', '.join(outputs)}: {len(layout['mountains'])} mountains")


@main.command("views")
@click.argument("corpus_path", type=str)
@click.argument("view", type=click.Choice(["geography", "identity", "labels", "combos"]))
@click.option("--selection", "selection_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="JSON file with a list of selected painter ids.")
@click.option("--dims", type=str, default="subject,technique", show_default=True)
@click.option("--min-count", type=int, default=1, show_default=True)
@click.option("--mode", type=click.Choice(["focus", "context"]), default="context",
              show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write JSON here instead of stdout.")
def views_cmd(corpus_path, view, selection_path, dims, min_count, mode, out):
    """Emit one view aggregate as JSON."""
    try:
        corpus = load_corpus(corpus_path)
        selection = set()
        if selection_path:
            selection = set(json.loads(Path(selection_path).read_text(encoding="utf-8")))
        if view == "geography":
            result = _geo_counts(corpus, selection)
        elif view == "identity":
            result = _identity_counts(corpus, selection)
        elif view == "labels":
            result = label_distribution(corpus, selection, mode=mode)
        else:
            result = label_combinations(
                corpus, selection or {p.id for p in corpus.painters},
                tuple(d for d in dims.split(",") if d), min_count
            )
    except (CorpusError, ValueError, json.JSONDecodeError) as exc:
        _fail(str(exc))
    text = json.dumps(result, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
        click.echo(f"wrote {out}")
    else:
        click.echo(text)


def _geo_counts(corpus, selection):
    counts: dict[str, dict] = {}
    for p in corpus.painters:
        bucket = counts.setdefault(p.province or "unknown", {"total": 0, "selected": 0})
        bucket["total"] += 1
        bucket["selected"] += int(p.id in selection)
    return {"provinces": dict(sorted(counts.items()))}


def _identity_counts(corpus, selection):
    inner = {str(level): {"total": 0, "selected": 0} for level in range(1, 6)}
    inner["unknown"] = {"total": 0, "selected": 0}
    for p in corpus.painters:
        key = str(p.official_level) if p.official_level else "unknown"
        inner[key]["total"] += 1
        inner[key]["selected"] += int(p.id in selection)
    return {"inner": inner}


@main.command("report")
@click.argument("corpus_path", type=str)
@click.option("--out-dir", type=click.Path(file_okay=False), default="report", show_default=True)
@click.option("--selection", "selection_path", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.option("--theta", type=float, default=0.6, show_default=True)
@click.option("--lod", type=int, default=400, show_default=True)
def report_cmd(corpus_path, out_dir, selection_path, theta, lod):
    """Render report figures and CSV tables for a corpus."""
    try:
        corpus = load_corpus(corpus_path)
        selection = None
        if selection_path:
            selection = json.loads(Path(selection_path).read_text(encoding="utf-8"))
        created = report_mod.write_report(corpus, out_dir, selection, theta=theta, n_lod=lod)
    except (CorpusError, ValueError, json.JSONDecodeError) as exc:
        _fail(str(exc))
    for path in created:
        click.echo(f"wrote {path}")


@main.command("serve")
@click.option("--host", type=str, default=None)
@click.option("--port", type=int, default=None)
@click.option("--corpus", "corpus_path", type=str, default=None)
@click.option("--taxonomy", "taxonomy_path", type=str, default=None)
@click.option("--static", "static_dir", type=click.Path(file_okay=False), default=None)
@click.option("--theta", type=float, default=None)
@click.option("--lod", type=int, default=None)
def serve_cmd(host, port, corpus_path, taxonomy_path, static_dir, theta, lod):
    """Start the HTTP service (env vars ATLAS_* supply defaults)."""
    config = ApiConfig.from_env(
        host=host,
        port=port,
        corpus_path=corpus_path,
        taxonomy_path=taxonomy_path,
        static_dir=static_dir,
        theta=theta,
        n_lod=lod,
    )
    try:
        serve(config)
    except (CorpusError, OSError) as exc:
        _fail(str(exc))


if __name__ == "__main__":
    main()
