"""Product-type aware candidate filtering and the PT predictor baseline.

A candidate is dropped when its mined product-type set is known and does
not contain the query's predicted product type; candidates without mined
associations always survive.  Filtering never invents candidates, it only
narrows the given list and maps what remains to a terminal decision.
"""
from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Protocol

import numpy as np
import scipy.sparse as sp

from .binio import read_artifact, write_artifact
from .core import (
    BrandEntityId,
    LinkResult,
    Query,
    ScoredEntity,
    StoreTag,
    TraceRecord,
    entity_from_id,
)
from .linear import GRAD_TOL, MAX_EPOCHS, fit_sparse_ova
from .text import FeaturizerConfig, IdfTable, SparseVector, featurize, normalize
from .xmc.train import DEFAULT_REG, _stack_rows

LOGGER = logging.getLogger(__name__)

# A PT prediction below this confidence is treated as no prediction at all.
PT_CONFIDENCE_THRESHOLD = 0.5

_PT_MODEL_KIND = "pt-model"
_PT_MODEL_VERSION = 1

_ASSOC_HEADER = ("entity_id", "pt_code")


@dataclass(frozen=True, slots=True)
class ProductType:
    """Category code of a retail product type."""

    code: str

    def __post_init__(self) -> None:
        if not self.code:
            raise ValueError("product type code must be non-empty")


class FilterMode(enum.Enum):
    """How surviving candidates map to a terminal decision."""

    TWO_STAGE = "two_stage"
    END_TO_END = "end_to_end"


@dataclass(frozen=True)
class PtAssociations:
    """Mined entity-to-product-type associations."""

    table: dict[BrandEntityId, frozenset[ProductType]]

    def __post_init__(self) -> None:
        for entity, pts in self.table.items():
            if not pts:
                raise ValueError(f"empty product type set for {entity.id}")

    @classmethod
    def empty(cls) -> PtAssociations:
        return cls(table={})

    def get(self, entity: BrandEntityId) -> frozenset[ProductType] | None:
        """The mined PT set, or nothing for entities never impressed."""
        return self.table.get(entity)

    def __len__(self) -> int:
        return len(self.table)


def mine_associations(
    pairs: Iterable[tuple[BrandEntityId, ProductType]],
) -> PtAssociations:
    """Aggregate (entity, product type) co-impression pairs."""
    table: dict[BrandEntityId, set[ProductType]] = {}
    for entity, pt in pairs:
        if entity.is_nil:
            continue
        table.setdefault(entity, set()).add(pt)
    return PtAssociations({e: frozenset(s) for e, s in table.items()})


def filter_candidates(
    candidates: list[ScoredEntity],
    pt_q: ProductType | None,
    associations: PtAssociations,
    mode: FilterMode,
) -> LinkResult:
    """Narrow candidates by product type and decide the outcome.

    With a query product type, candidates whose mined PT set is known and
    lacks it are dropped; candidates with no mined set (NIL included) are
    kept.  Without one, the candidate list passes through unfiltered.

    TwoStage keeps a prediction only when exactly one candidate survives;
    EndToEnd takes the best survivor, mapping a winning NIL to the Nil
    outcome.  Removing a non-surviving candidate from the input can never
    change the outcome.

    Args:
        candidates: Scored candidates sorted by descending score.
        pt_q: Predicted product type of the query, if any.
        associations: Mined PT sets per entity.
        mode: Decision rule.

    Returns:
        The terminal result with per-candidate filter decisions traced.
    """
    trace: list[TraceRecord] = []
    if pt_q is None:
        survivors = list(candidates)
        trace.append(TraceRecord("filter", "no query product type; kept all"))
    else:
        survivors = []
        for candidate in candidates:
            known = associations.get(candidate.entity)
            if known is not None and pt_q not in known:
                trace.append(
                    TraceRecord(
                        "filter",
                        f"dropped {candidate.entity.id}: {pt_q.code} not in its pt set",
                    )
                )
                continue
            survivors.append(candidate)
        trace.append(
            TraceRecord(
                "filter",
                f"pt={pt_q.code}: kept {len(survivors)} of {len(candidates)}",
            )
        )

    if mode is FilterMode.TWO_STAGE:
        if len(survivors) == 1:
            survivor = survivors[0]
            if survivor.entity.is_nil:
                return LinkResult.nil(trace)
            return LinkResult.single(survivor.entity, survivor.score, trace)
        trace.append(
            TraceRecord("filter", f"{len(survivors)} survivors; abstaining")
        )
        return LinkResult.no_prediction(trace)

    if not survivors:
        return LinkResult.no_prediction(trace)
    best = sorted(survivors, key=lambda s: (-s.score, s.entity.id))[0]
    if best.entity.is_nil:
        return LinkResult.nil(trace)
    return LinkResult.single(best.entity, best.score, trace)


class PtPredictor(Protocol):
    """Predicts the product type a query shops for, or abstains."""

    def predict(self, query: Query) -> ProductType | None: ...


@dataclass(eq=False)
class LinearPtPredictor:
    """Flat one-vs-all linear classifier over the featurizer space."""

    product_types: tuple[ProductType, ...]
    weights: sp.csc_matrix  # (dim + 1, n_types)
    featurizer: FeaturizerConfig
    threshold: float = PT_CONFIDENCE_THRESHOLD

    def predict(self, query: Query) -> ProductType | None:
        x = featurize(normalize(query.text), self.featurizer)
        if x.nnz == 0:
            return None
        dense = np.zeros(x.dim + 1, dtype=np.float64)
        dense[x.indices] = x.values
        dense[x.dim] = 1.0
        margins = self.weights.T @ dense
        scores = 1.0 / (1.0 + np.exp(-margins))
        order = np.lexsort((np.arange(len(scores)), -scores))
        best = int(order[0])
        if scores[best] < self.threshold:
            return None
        return self.product_types[best]


class OraclePtPredictor:
    """Replays gold product types keyed by normalized query text."""

    def __init__(self, mapping: dict[str, ProductType]) -> None:
        self._mapping = dict(mapping)

    def predict(self, query: Query) -> ProductType | None:
        return self._mapping.get(normalize(query.text).text)


def train_pt_baseline(
    data: Iterable[tuple[Query, ProductType]],
    featurizer: FeaturizerConfig,
    reg: float = DEFAULT_REG,
    *,
    max_epochs: int = MAX_EPOCHS,
    tol: float = GRAD_TOL,
    prune: float = 0.0,
) -> LinearPtPredictor:
    """Train the flat OVA product-type baseline.

    Args:
        data: (query, gold product type) pairs; must be non-empty.
        featurizer: Featurizer parameters shared with prediction.
        reg: L2 penalty.
        max_epochs: Optimizer iteration cap.
        tol: Gradient-norm convergence tolerance.
        prune: Optional weight magnitude threshold.

    Raises:
        ValueError: If no usable training pairs are given.
    """
    vectors: list[SparseVector] = []
    codes: list[str] = []
    for query, pt in data:
        vec = featurize(normalize(query.text), featurizer)
        if vec.nnz == 0:
            continue
        vectors.append(vec)
        codes.append(pt.code)
    if not vectors:
        raise ValueError("no usable product type training pairs")
    types = tuple(ProductType(code) for code in sorted(set(codes)))
    col_of = {pt.code: j for j, pt in enumerate(types)}
    x = _stack_rows(vectors, featurizer.dim)
    positive = np.array([col_of[code] for code in codes], dtype=np.int64)
    # Unbalanced on purpose: the confidence threshold compares an absolute
    # sigmoid score, so the bias must keep carrying the class prior.
    rows, cols, vals, _ = fit_sparse_ova(
        x,
        positive,
        len(types),
        featurizer.dim,
        reg,
        balanced=False,
        max_epochs=max_epochs,
        tol=tol,
        prune=prune,
    )
    weights = sp.coo_matrix(
        (vals, (rows, cols)), shape=(featurizer.dim + 1, len(types))
    ).tocsc()
    weights.sort_indices()
    LOGGER.info(
        "trained pt baseline: %d types over %d queries", len(types), len(vectors)
    )
    return LinearPtPredictor(
        product_types=types, weights=weights, featurizer=featurizer
    )


def save_pt_predictor(predictor: LinearPtPredictor, path: str | Path) -> None:
    config = predictor.featurizer
    meta = {
        "product_types": [pt.code for pt in predictor.product_types],
        "threshold": predictor.threshold,
        "featurizer": {
            "dim": config.dim,
            "word_ngrams": config.word_ngrams,
            "char_ngrams": list(config.char_ngrams),
            "hash_name": config.hash_name,
            "idf_docs": None if config.idf is None else config.idf.n_docs,
        },
    }
    weights = predictor.weights.tocsc()
    weights.sort_indices()
    blobs = {
        "weights/data": weights.data.astype(np.float64),
        "weights/indices": weights.indices.astype(np.int64),
        "weights/indptr": weights.indptr.astype(np.int64),
    }
    if config.idf is not None:
        blobs["featurizer/idf"] = config.idf.weights
    write_artifact(path, _PT_MODEL_KIND, _PT_MODEL_VERSION, meta, blobs)


def load_pt_predictor(path: str | Path) -> LinearPtPredictor:
    meta, blobs = read_artifact(path, _PT_MODEL_KIND, _PT_MODEL_VERSION)
    fz = meta["featurizer"]
    idf = None
    if fz["idf_docs"] is not None:
        idf = IdfTable(
            weights=np.array(blobs["featurizer/idf"], dtype=np.float32),
            n_docs=int(fz["idf_docs"]),
        )
    config = FeaturizerConfig(
        dim=int(fz["dim"]),
        word_ngrams=int(fz["word_ngrams"]),
        char_ngrams=tuple(fz["char_ngrams"]),
        idf=idf,
        hash_name=fz["hash_name"],
    )
    types = tuple(ProductType(code) for code in meta["product_types"])
    weights = sp.csc_matrix(
        (
            np.array(blobs["weights/data"], dtype=np.float64),
            np.array(blobs["weights/indices"], dtype=np.int64),
            np.array(blobs["weights/indptr"], dtype=np.int64),
        ),
        shape=(config.dim + 1, len(types)),
    )
    return LinearPtPredictor(
        product_types=types,
        weights=weights,
        featurizer=config,
        threshold=float(meta["threshold"]),
    )


def read_associations_tsv(path: str | Path) -> Iterator[tuple[BrandEntityId, ProductType]]:
    """Read (entity, product type) pairs from a headered TSV file."""
    with open(path, encoding="utf-8") as handle:
        header = handle.readline().rstrip("\n").split("\t")
        if tuple(header) != _ASSOC_HEADER:
            raise ValueError(f"{path}: expected header {_ASSOC_HEADER}, found {header}")
        for line_no, line in enumerate(handle, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise ValueError(f"{path}:{line_no}: expected 2 fields")
            yield entity_from_id(fields[0]), ProductType(fields[1])


def write_associations_tsv(associations: PtAssociations, path: str | Path) -> None:
    rows = sorted(
        (entity.id, pt.code)
        for entity, pts in associations.table.items()
        for pt in pts
    )
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\t".join(_ASSOC_HEADER) + "\n")
        for entity_id, code in rows:
            handle.write(f"{entity_id}\t{code}\n")


def read_pt_training_jsonl(
    path: str | Path,
) -> Iterator[tuple[Query, ProductType]]:
    """Read {text, store, pt} records into (query, product type) pairs."""
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            yield (
                Query(text=record["text"], store=StoreTag(record["store"])),
                ProductType(record["pt"]),
            )
