"""Brand entity linking for short e-commerce search queries.

The package resolves the brand behind a query in two ways that share one
vocabulary of types: a two-stage path (detect the brand mention, resolve
it by exact dictionary lookup or a mention-to-entity model, filter by
product type) and an end-to-end path that ranks entities for the whole
query with NIL in the label space.  A fusion wrapper runs both and
prefers the two-stage answer.
"""
from .core import (
    KEY_SEPARATOR,
    NIL,
    NIL_ID,
    BrandEntityId,
    BrandMention,
    LabeledQuery,
    LinkResult,
    Outcome,
    Query,
    ScoredEntity,
    Source,
    StoreTag,
    TraceRecord,
    entity_from_id,
)
from .evaluation import (
    EvalCounts,
    MetricReport,
    MetricRow,
    false_alarm_rate,
    metrics,
    report,
    score,
)
from .gazetteer import (
    BrandDictionary,
    MentionDetector,
    OracleDetector,
    TrieDetector,
    build_dictionary,
    lexical_match,
    load_dictionary,
    save_dictionary,
    trie_detect,
)
from .pipeline import (
    LexicalMatcher,
    LinkerConfig,
    M2eMatcher,
    link_end_to_end,
    link_fused,
    link_two_stage,
)
from .ptfilter import (
    FilterMode,
    LinearPtPredictor,
    OraclePtPredictor,
    ProductType,
    PtAssociations,
    PtPredictor,
    filter_candidates,
    mine_associations,
    train_pt_baseline,
)
from .text import (
    FeaturizerConfig,
    NormalizedText,
    SparseVector,
    featurize,
    fit_idf,
    normalize,
    vectorize,
)
from .xmc import (
    BeamParams,
    LabelSpace,
    LabelTree,
    XmcModel,
    beam_predict,
    build_tree,
    load_model,
    m2e_match,
    q2e_predict,
    save_model,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "KEY_SEPARATOR",
    "NIL",
    "NIL_ID",
    "BeamParams",
    "BrandDictionary",
    "BrandEntityId",
    "BrandMention",
    "EvalCounts",
    "FeaturizerConfig",
    "FilterMode",
    "LabelSpace",
    "LabelTree",
    "LabeledQuery",
    "LexicalMatcher",
    "LinearPtPredictor",
    "LinkResult",
    "LinkerConfig",
    "M2eMatcher",
    "MentionDetector",
    "MetricReport",
    "MetricRow",
    "NormalizedText",
    "OracleDetector",
    "OraclePtPredictor",
    "Outcome",
    "ProductType",
    "PtAssociations",
    "PtPredictor",
    "Query",
    "ScoredEntity",
    "Source",
    "SparseVector",
    "StoreTag",
    "TraceRecord",
    "TrieDetector",
    "XmcModel",
    "beam_predict",
    "build_dictionary",
    "build_tree",
    "entity_from_id",
    "false_alarm_rate",
    "featurize",
    "filter_candidates",
    "fit_idf",
    "lexical_match",
    "link_end_to_end",
    "link_fused",
    "link_two_stage",
    "load_dictionary",
    "load_model",
    "m2e_match",
    "metrics",
    "mine_associations",
    "normalize",
    "q2e_predict",
    "report",
    "save_dictionary",
    "save_model",
    "score",
    "train",
    "train_pt_baseline",
    "trie_detect",
    "vectorize",
]
