"""Cohort exploration engine for inheritance networks of historical painters."""

__version__ = "0.1.0"

from .corpus import (  # noqa: F401
    Corpus,
    CorpusError,
    Painter,
    Relation,
    ValidationError,
    generate_fixture,
    load_corpus,
    save_corpus,
    update_painter_labels,
)
from .forest import (  # noqa: F401
    InheritanceForest,
    UnitGraph,
    build_logic_units,
    build_trees,
    cluster_units,
    reassign_parent,
    reconstruct,
    reconstruct_chains,
)
from .labels import (  # noqa: F401
    LabelTaxonomy,
    LabelWeights,
    SimilarityTable,
    TrigramHashEmbedding,
    build_ast,
    builtin_taxonomy,
    compute_importance,
    label_combinations,
    label_distribution,
    load_taxonomy,
)
from .layout import LayoutParams, compute_layout, lod_filter, render_svg  # noqa: F401
from .recommend import (  # noqa: F401
    CohortProfile,
    Recommendation,
    normalize_weights,
    profile_cohort,
    recommend,
)
from .session import Predicate, Session, apply_selection, redo, undo  # noqa: F401
