"""Batch command line surface.

Eight subcommands map one-to-one onto the library operations: build-dict,
gen-corpus, gen-weak-labels, train-xmc, train-pt, link, eval, and bench.
Options resolve in three layers: built-in defaults, then a JSON config
file given with --config, then explicit flags, later layers winning.
--dry-run prints the resolved configuration and stops.

Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors.
Failures are reported as single-line diagnostics on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import random
import statistics
import sys
import time
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .core import (
    BrandEntityId,
    LabeledQuery,
    Query,
    labeled_query_from_record,
    labeled_query_to_record,
    link_result_from_record,
    link_result_to_record,
    query_from_record,
    read_jsonl,
    write_jsonl,
)
from .data import (
    DEFAULT_STRENGTH_THRESHOLD,
    CorpusSpec,
    gen_synthetic_corpus,
    gen_weak_labels,
    read_engagement_jsonl,
)
from .evaluation import (
    false_alarm_rate,
    render_text,
    report,
    write_report_json,
)
from .gazetteer import (
    BrandDictionary,
    TrieDetector,
    build_dictionary,
    load_dictionary,
    read_b2e_tsv,
    save_dictionary,
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
    PtAssociations,
    load_pt_predictor,
    mine_associations,
    read_associations_tsv,
    read_pt_training_jsonl,
    save_pt_predictor,
    train_pt_baseline,
)
from .text import FeaturizerConfig, fit_idf, normalize, vectorize
from .xmc import (
    BeamParams,
    XmcModel,
    aggregate_label_features,
    beam_predict,
    build_tree,
    load_model,
    save_model,
    train,
)

LOGGER = logging.getLogger(__name__)


class UsageError(Exception):
    """Bad or missing options; maps to exit code 2."""


_DEFAULTS: dict[str, dict] = {
    "build-dict": {"b2e": None, "out": None},
    "gen-corpus": {
        "out": None,
        "entities": 1000,
        "variants": 3,
        "languages": "en",
        "branded": 5000,
        "nonbranded": 2000,
        "pt_types": 20,
        "seed": 0,
    },
    "gen-weak-labels": {
        "logs": None,
        "dict": None,
        "threshold": DEFAULT_STRENGTH_THRESHOLD,
        "out": None,
    },
    "train-xmc": {
        "train": None,
        "dict": None,
        "target": "q2e",
        "out": None,
        "dim": 2**20,
        "reg": 1e-3,
        "branching": 16,
        "max_leaf": 100,
        "multi": "expand",
        "idf": True,
        "seed": 0,
        "threads": 1,
    },
    "train-pt": {"train": None, "out": None, "dim": 2**20, "reg": 1e-3, "idf": True},
    "link": {
        "queries": None,
        "out": None,
        "mode": "lexical",
        "dict": None,
        "m2e_model": None,
        "q2e_model": None,
        "pt_model": None,
        "associations": None,
        "fused_matcher": "lexical",
        "beam_size": 10,
        "top_k": 5,
    },
    "eval": {
        "gold": None,
        "results": None,
        "slice": "none",
        "report": None,
        "false_alarm": False,
    },
    "bench": {
        "sizes": "5000,50000",
        "queries": 500,
        "beam_size": 10,
        "dim": 2**20,
        "seed": 0,
        "out": None,
    },
}


def _require(config: dict, command: str, *keys: str) -> None:
    missing = [k for k in keys if config.get(k) is None]
    if missing:
        raise UsageError(f"{command} requires --{', --'.join(m.replace('_', '-') for m in missing)}")


def _as_str_tuple(value) -> tuple[str, ...]:
    if isinstance(value, str):
        return tuple(v for v in value.split(",") if v)
    return tuple(value)


def _as_int_tuple(value) -> tuple[int, ...]:
    return tuple(int(v) for v in _as_str_tuple(value))


# ---------------------------------------------------------------------------
# Subcommand bodies.
# ---------------------------------------------------------------------------


def _cmd_build_dict(config: dict) -> int:
    _require(config, "build-dict", "b2e", "out")
    dictionary = build_dictionary(read_b2e_tsv(config["b2e"]))
    save_dictionary(dictionary, config["out"])
    print(
        f"dictionary: {len(dictionary)} surface keys,"
        f" {dictionary.rejected} rows rejected -> {config['out']}"
    )
    return 0


def _cmd_gen_corpus(config: dict) -> int:
    _require(config, "gen-corpus", "out")
    spec = CorpusSpec(
        n_entities=int(config["entities"]),
        surface_variants_per_entity=int(config["variants"]),
        languages=_as_str_tuple(config["languages"]),
        n_branded_queries=int(config["branded"]),
        n_nonbranded_queries=int(config["nonbranded"]),
        pt_space_size=int(config["pt_types"]),
        seed=int(config["seed"]),
    )
    manifest = gen_synthetic_corpus(spec, config["out"])
    counts = ", ".join(f"{k}={v}" for k, v in sorted(manifest["counts"].items()))
    print(f"corpus at {config['out']}: {counts}")
    return 0


def _cmd_gen_weak_labels(config: dict) -> int:
    _require(config, "gen-weak-labels", "logs", "dict", "out")
    dictionary = load_dictionary(config["dict"])
    labeled = gen_weak_labels(
        read_engagement_jsonl(config["logs"]),
        float(config["threshold"]),
        dictionary,
    )
    count = write_jsonl(
        config["out"], (labeled_query_to_record(ex) for ex in labeled)
    )
    print(f"weak labels: {count} -> {config['out']}")
    return 0


def _read_labeled_files(paths: Iterable[str]) -> list[LabeledQuery]:
    out: list[LabeledQuery] = []
    for path in paths:
        out.extend(labeled_query_from_record(r) for r in read_jsonl(path))
    return out


def _surfaces_by_entity(
    dictionary: BrandDictionary | None,
    examples: Iterable[LabeledQuery],
) -> dict[BrandEntityId, list[str]]:
    table: dict[BrandEntityId, set[str]] = {}
    if dictionary is not None:
        for key, entities in dictionary.entries.items():
            for entity in entities:
                table.setdefault(entity, set()).add(key.surface)
    else:
        for example in examples:
            for entity in example.entities:
                if entity.is_nil:
                    continue
                for name in example.brand_names:
                    table.setdefault(entity, set()).add(normalize(name).text)
    return {entity: sorted(surfaces) for entity, surfaces in table.items()}


def _training_pairs(
    examples: Iterable[LabeledQuery], target: str, multi: str
) -> list[tuple[str, BrandEntityId]]:
    pairs: list[tuple[str, BrandEntityId]] = []
    for example in examples:
        if multi == "drop" and len(example.entities) > 1:
            continue
        if target == "m2e":
            if not example.is_branded:
                continue
            text = example.brand_names[0]
        else:
            text = example.query.text
        pairs.extend((text, entity) for entity in example.entities)
    return pairs


def _cmd_train_xmc(config: dict) -> int:
    _require(config, "train-xmc", "train", "out")
    if config["target"] not in ("m2e", "q2e"):
        raise UsageError("--target must be m2e or q2e")
    examples = _read_labeled_files(_as_str_tuple(config["train"]))
    pairs = _training_pairs(examples, config["target"], config["multi"])
    if not pairs:
        raise ValueError("no usable training examples")

    featurizer = FeaturizerConfig(dim=int(config["dim"]))
    normalized = [(normalize(text), label) for text, label in pairs]
    if config["idf"]:
        featurizer = fit_idf((nt for nt, _ in normalized), featurizer)
    featurized = [
        (vectorize(nt.text, featurizer), label) for nt, label in normalized
    ]

    labels = sorted({label for _, label in pairs}, key=lambda e: e.id)
    dictionary = (
        load_dictionary(config["dict"]) if config["dict"] is not None else None
    )
    surfaces = _surfaces_by_entity(dictionary, examples)
    inputs: dict[BrandEntityId, list] = {}
    for vec, label in featurized:
        inputs.setdefault(label, []).append(vec)
    space = aggregate_label_features(labels, surfaces, inputs, featurizer)
    tree = build_tree(
        space,
        branching=int(config["branching"]),
        max_leaf=int(config["max_leaf"]),
        seed=int(config["seed"]),
    )
    model = train(
        featurized,
        space,
        tree,
        float(config["reg"]),
        featurizer=featurizer,
        threads=int(config["threads"]),
    )
    save_model(model, config["out"])
    print(
        f"{config['target']} model: {len(labels)} labels,"
        f" layers {list(tree.layer_sizes)},"
        f" {model.stats['examples']} examples -> {config['out']}"
    )
    return 0


def _cmd_train_pt(config: dict) -> int:
    _require(config, "train-pt", "train", "out")
    rows = list(read_pt_training_jsonl(config["train"]))
    featurizer = FeaturizerConfig(dim=int(config["dim"]))
    if config["idf"]:
        featurizer = fit_idf(
            (normalize(query.text) for query, _ in rows), featurizer
        )
    predictor = train_pt_baseline(rows, featurizer, float(config["reg"]))
    save_pt_predictor(predictor, config["out"])
    print(
        f"pt model: {len(predictor.product_types)} types,"
        f" {len(rows)} rows -> {config['out']}"
    )
    return 0


def _linker_from_config(config: dict) -> tuple[LinkerConfig, str]:
    mode = config["mode"]
    if mode not in ("lexical", "m2e", "q2e", "fused"):
        raise UsageError("--mode must be one of lexical, m2e, q2e, fused")
    params = BeamParams(
        beam_size=int(config["beam_size"]), top_k=int(config["top_k"])
    )
    dictionary = None
    if config["dict"] is not None:
        dictionary = load_dictionary(config["dict"])

    matcher = None
    detector = None
    if mode == "lexical" or (mode == "fused" and config["fused_matcher"] == "lexical"):
        _require(config, "link", "dict")
        matcher = LexicalMatcher(dictionary)
    elif mode == "m2e" or (mode == "fused" and config["fused_matcher"] == "m2e"):
        _require(config, "link", "dict", "m2e_model")
        matcher = M2eMatcher(load_model(config["m2e_model"]), params)
    if matcher is not None:
        detector = TrieDetector(dictionary)

    q2e = None
    if mode in ("q2e", "fused"):
        _require(config, "link", "q2e_model")
        q2e = load_model(config["q2e_model"])

    pt_predictor = None
    if config["pt_model"] is not None:
        pt_predictor = load_pt_predictor(config["pt_model"])
    associations = PtAssociations.empty()
    if config["associations"] is not None:
        associations = mine_associations(
            read_associations_tsv(config["associations"])
        )

    linker = LinkerConfig(
        detector=detector,
        matcher=matcher,
        q2e=q2e,
        q2e_params=params,
        pt_predictor=pt_predictor,
        associations=associations,
        fusion=(mode == "fused"),
    )
    return linker, mode


def _read_queries(path: str) -> list[Query]:
    queries = []
    for record in read_jsonl(path):
        if "query" in record:
            record = record["query"]
        queries.append(query_from_record(record))
    return queries


def _cmd_link(config: dict) -> int:
    _require(config, "link", "queries", "out")
    linker, mode = _linker_from_config(config)

    def run_one(query: Query):
        if mode == "q2e":
            return link_end_to_end(linker, query)
        if mode == "fused":
            return link_fused(linker, query)
        return link_two_stage(linker, query)

    queries = _read_queries(config["queries"])
    count = write_jsonl(
        config["out"], (link_result_to_record(run_one(q)) for q in queries)
    )
    print(f"linked {count} queries ({mode}) -> {config['out']}")
    return 0


_SLICE_FNS: dict[str, Callable[[LabeledQuery], str]] = {
    "none": lambda example: "all",
    "language": lambda example: example.query.language or "unknown",
    "store": lambda example: example.query.store.code,
}


def _cmd_eval(config: dict) -> int:
    _require(config, "eval", "gold", "results")
    if config["slice"] not in _SLICE_FNS:
        raise UsageError("--slice must be one of none, language, store")
    gold = _read_labeled_files([config["gold"]])
    results = [link_result_from_record(r) for r in read_jsonl(config["results"])]
    if len(gold) != len(results):
        raise ValueError(
            f"gold has {len(gold)} records, results {len(results)}; cannot pair"
        )
    pairs = list(zip(gold, results))
    if config["false_alarm"]:
        rate = false_alarm_rate(pairs)
        print(f"false_alarm_rate: {rate:.2f}")
        if config["report"] is not None:
            with open(config["report"], "w", encoding="utf-8") as handle:
                json.dump(
                    {"schema_version": 1, "false_alarm_rate": round(rate, 2)},
                    handle,
                    sort_keys=True,
                )
                handle.write("\n")
        return 0
    metric_report = report(_SLICE_FNS[config["slice"]], pairs)
    sys.stdout.write(render_text(metric_report))
    if config["report"] is not None:
        write_report_json(metric_report, config["report"])
    return 0


# ---------------------------------------------------------------------------
# Bench: beam inference latency across label-space sizes.
# ---------------------------------------------------------------------------


def _bench_names(rng: random.Random, count: int) -> list[str]:
    letters = "abcdefghijklmnopqrstuvwxyz"
    names = set()
    while len(names) < count:
        name = "".join(rng.choice(letters) for _ in range(rng.randint(6, 12)))
        names.add(name)
    return sorted(names)


def _normalize_rows(matrix: sp.csr_matrix) -> sp.csr_matrix:
    norms = np.sqrt(matrix.multiply(matrix).sum(axis=1)).A.ravel()
    norms[norms == 0.0] = 1.0
    inv = sp.diags(1.0 / norms)
    return (inv @ matrix).tocsr()


def _centroid_model(
    n_labels: int, featurizer: FeaturizerConfig, seed: int
) -> XmcModel:
    """Untrained stand-in scorer with realistic sparsity.

    Node weights are the unit-normalized sums of their labels' surface
    features, so inference cost matches a trained model of the same
    shape without the training time.
    """
    rng = random.Random(seed)
    names = _bench_names(rng, n_labels)
    labels = tuple(BrandEntityId(f"B{i:06d}") for i in range(n_labels))
    surfaces = {
        label: [names[i], names[i][: max(3, len(names[i]) // 2)]]
        for i, label in enumerate(labels)
    }
    space = aggregate_label_features(labels, surfaces, {}, featurizer)
    tree = build_tree(space, seed=seed)
    features = space.feature_matrix()[tree.label_order]
    layer_features = [features]
    for indptr in reversed(tree.children_indptr):
        child = layer_features[0]
        sizes = np.diff(indptr)
        rows = np.repeat(np.arange(len(sizes)), sizes)
        agg = sp.csr_matrix(
            (np.ones(child.shape[0]), (rows, np.arange(child.shape[0]))),
            shape=(len(sizes), child.shape[0]),
        )
        layer_features.insert(0, _normalize_rows(agg @ child))
    weights = []
    for feats in layer_features:
        mat = feats.T.tocsc().astype(np.float64)
        mat = sp.vstack(
            [mat, sp.csc_matrix((1, mat.shape[1]), dtype=np.float64)]
        ).tocsc()
        mat.sort_indices()
        weights.append(mat)
    return XmcModel(
        labels=labels, tree=tree, layer_weights=weights, featurizer=featurizer
    )


def _cmd_bench(config: dict) -> int:
    sizes = _as_int_tuple(config["sizes"])
    if not sizes:
        raise UsageError("--sizes must name at least one label count")
    n_queries = int(config["queries"])
    params = BeamParams(beam_size=int(config["beam_size"]))
    featurizer = FeaturizerConfig(dim=int(config["dim"]))
    rows = []
    for n_labels in sizes:
        build_start = time.perf_counter()
        model = _centroid_model(n_labels, featurizer, int(config["seed"]))
        build_s = time.perf_counter() - build_start
        rng = random.Random(int(config["seed"]) + 1)
        names = _bench_names(rng, n_queries)
        vectors = [
            vectorize(f"{name} {rng.choice(names)}", featurizer) for name in names
        ]
        for vec in vectors[:20]:
            beam_predict(model, vec, params)
        timings = []
        for vec in vectors:
            start = time.perf_counter()
            beam_predict(model, vec, params)
            timings.append((time.perf_counter() - start) * 1000.0)
        rows.append(
            {
                "labels": n_labels,
                "layers": list(model.tree.layer_sizes),
                "build_s": round(build_s, 2),
                "mean_ms": round(statistics.fmean(timings), 4),
                "p50_ms": round(statistics.median(timings), 4),
                "p95_ms": round(sorted(timings)[int(0.95 * len(timings))], 4),
            }
        )
    print(f"{'labels':>8}  {'mean_ms':>8}  {'p50_ms':>8}  {'p95_ms':>8}  layers")
    for row in rows:
        print(
            f"{row['labels']:>8}  {row['mean_ms']:>8.4f}  {row['p50_ms']:>8.4f}"
            f"  {row['p95_ms']:>8.4f}  {row['layers']}"
        )
    if len(rows) > 1:
        ratio = rows[-1]["mean_ms"] / rows[0]["mean_ms"]
        print(
            f"ratio: {ratio:.2f}x mean latency"
            f" from L={rows[0]['labels']} to L={rows[-1]['labels']}"
        )
    if config["out"] is not None:
        with open(config["out"], "w", encoding="utf-8") as handle:
            json.dump({"schema_version": 1, "rows": rows}, handle, sort_keys=True)
            handle.write("\n")
    return 0


_HANDLERS: dict[str, Callable[[dict], int]] = {
    "build-dict": _cmd_build_dict,
    "gen-corpus": _cmd_gen_corpus,
    "gen-weak-labels": _cmd_gen_weak_labels,
    "train-xmc": _cmd_train_xmc,
    "train-pt": _cmd_train_pt,
    "link": _cmd_link,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
}


# ---------------------------------------------------------------------------
# Argument plumbing.
# ---------------------------------------------------------------------------


def _add_options(parser: argparse.ArgumentParser, defaults: dict) -> None:
    parser.add_argument("--config", help="JSON file with option defaults")
    parser.add_argument(
        "--dry-run",
        action="store_true",
        help="print the resolved configuration and exit",
    )
    parser.add_argument(
        "--verbose", "-v", action="store_true", help="log progress lines"
    )
    for key, default in defaults.items():
        flag = "--" + key.replace("_", "-")
        if isinstance(default, bool):
            group = parser.add_mutually_exclusive_group()
            group.add_argument(flag, dest=key, action="store_const", const=True)
            group.add_argument(
                "--no-" + key.replace("_", "-"),
                dest=key,
                action="store_const",
                const=False,
            )
            parser.set_defaults(**{key: None})
        else:
            parser.add_argument(flag, default=None, help=f"default: {default}")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="brandlink",
        description="Brand entity linking for search queries: data, training,"
        " linking, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    help_lines = {
        "build-dict": "compile a brand-to-entity TSV into a dictionary artifact",
        "gen-corpus": "generate a deterministic synthetic corpus",
        "gen-weak-labels": "label engagement logs by token-aligned matching",
        "train-xmc": "train a mention-to-entity or query-to-entity model",
        "train-pt": "train the flat product-type classifier",
        "link": "link queries with a chosen linker mode",
        "eval": "score link results against gold labels",
        "bench": "measure beam inference latency across label-space sizes",
    }
    for command, defaults in _DEFAULTS.items():
        _add_options(sub.add_parser(command, help=help_lines[command]), defaults)
    return parser


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    resolved = dict(defaults)
    if args.config is not None:
        with open(args.config, encoding="utf-8") as handle:
            loaded = json.load(handle)
        unknown = sorted(set(loaded) - set(defaults))
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        resolved.update(loaded)
    for key in defaults:
        value = getattr(args, key)
        if value is not None:
            resolved[key] = value
    return resolved


def run(argv: Sequence[str] | None = None) -> int:
    """Parse and execute one command; all failures become exit codes."""
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = _resolve(args, _DEFAULTS[args.command])
        if args.dry_run:
            print(json.dumps({"command": args.command} | config, sort_keys=True))
            return 0
        return _HANDLERS[args.command](config)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - single-line diagnostic contract
        detail = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {detail}", file=sys.stderr)
        return 1


def main() -> int:
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
