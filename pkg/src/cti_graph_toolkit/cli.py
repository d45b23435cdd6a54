#!/usr/bin/env python3
"""
Command-line interface for cti-graph-toolkit.

Usage:
    cti-graph ingest reports/                     Clean reports, extract years and IoCs
    cti-graph ingest --crawl pages.json --seed URL
    cti-graph iocs report.txt                     Print IoC hits
    cti-graph map phrases.txt --platform mobile   Map attack phrases to techniques
    cti-graph kg build triples.tsv --brat corpus/ Build and save a knowledge graph
    cti-graph kg query out/kg Malware:Cerberus uses
    cti-graph kg similar out/kg Malware:FluBot
    cti-graph tucker train out/kg                 Train a link-prediction model
    cti-graph tucker predict out/model.npz Malware:Anubis uses --restrict
    cti-graph tucker eval out/model.npz test.tsv --known train.tsv test.tsv
    cti-graph tucker split out/kg --split-fraction 0.25
    cti-graph tucker leave-out out/kg Malware:Anubis
    cti-graph trends observations.tsv --plot trends
    cti-graph pipeline --corpus corpus/           Run every stage end to end

Output is JSON lines on stdout, one record per result, each carrying
``format_version`` and ``kind``; ``--pretty`` prints tables instead.
Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

import argparse
import hashlib
import json
import logging
import sys
from functools import lru_cache
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from . import __version__
from .audit import AuditReport, IssueType, Severity
from .config import RunConfig, load_config
from .exceptions import ConfigurationError, CtiGraphError
from .ingest.brat import AnnotatedDocument, parse_brat, to_triple_rows
from .ingest.crawler import FixturePageProvider, crawl
from .ingest.documents import extract_date, load_document, write_document_store
from .ingest.iocs import IocType, extract_iocs
from .ingest.triples import (
    EntityRegistry, TripleRow, parse_triples, rows_to_triples, write_triples,
)
from .kg import KnowledgeGraph, build, most_similar, primary_malware, query_tails
from .ontology import Entity, EntityClass, RelationType, Triple, make_entity_id
from .ttp.catalog import catalog_from_vectors, embed_catalog, get_catalog, load_catalog
from .ttp.embeddings import PrecomputedProvider, default_provider, load_embeddings
from .ttp.mapping import TechniqueIndex, map_attack_phrases
from .ttp.phrases import AttackPhrase, filter_invalid_phrases, merge_tagged_spans
from .ttp.scoring import score_extraction
from .ttp.trends import trend_analysis

logger = logging.getLogger("cti_graph_toolkit.cli")

FORMAT_VERSION = 1
EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
MANIFEST_FILE = "manifest.json"
FAILED_MARKER = "FAILED"

# flags that override RunConfig fields; argparse dests match the field names
_OVERRIDE_KEYS = (
    "catalog", "embeddings", "triples", "corpus", "output_dir", "split_fraction",
    "n_words", "generations", "max_workers",
    "w_t", "tau", "platform",
    "cleanup", "filtered", "restrict_candidates", "direction_agnostic",
    "d_e", "d_r", "batch_size", "iterations", "learning_rate", "label_smoothing",
    "input_dropout", "hidden_dropout1", "hidden_dropout2", "seed", "workers",
)


class UsageError(CtiGraphError):
    """Missing or unusable command-line input (exit status 2)."""


# =============================================================================
# RUN CONTEXT
# =============================================================================

def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def hash_input(path: Path) -> str:
    """SHA-256 of a file, or of a directory's relative names and file hashes."""
    if path.is_file():
        return _sha256_file(path)
    digest = hashlib.sha256()
    for child in sorted(p for p in path.rglob("*") if p.is_file()):
        digest.update(child.relative_to(path).as_posix().encode("utf-8"))
        digest.update(_sha256_file(child).encode("ascii"))
    return digest.hexdigest()


class Run:
    """
    Per-command state: configuration, output directory and written artifacts.

    Every write goes through :meth:`path`, which refuses locations outside
    the output directory.
    """

    def __init__(self, cfg: RunConfig, command: str, pretty: bool = False):
        self.cfg = cfg
        self.command = command
        self.pretty = pretty
        self.out_dir = Path(cfg.output_dir)
        self.inputs: Dict[str, str] = {}
        self.outputs: List[Path] = []
        self.extra: Dict[str, Any] = {}

    def path(self, name: str) -> Path:
        root = self.out_dir.resolve()
        target = (self.out_dir / name).resolve()
        if target != root and root not in target.parents:
            raise UsageError(f"refusing to write outside {self.out_dir}: {name}")
        target.parent.mkdir(parents=True, exist_ok=True)
        return self.out_dir / name

    def wrote(self, path: Path) -> Path:
        self.outputs.append(path)
        return path

    def input(self, path: Path, label: Optional[str] = None) -> Path:
        if not path.exists():
            raise UsageError(f"input not found: {path}")
        self.inputs[label or str(path)] = hash_input(path)
        return path

    def emit(self, kind: str, record: Dict[str, Any]) -> None:
        if not self.pretty:
            print(json.dumps({"format_version": FORMAT_VERSION, "kind": kind, **record},
                             sort_keys=True))

    def say(self, text: str = "") -> None:
        if self.pretty:
            print(text)

    def manifest(self, status: str = "ok") -> Path:
        """Write ``manifest.json``: config, seeds, input hashes and output digests."""
        outputs = {}
        for p in sorted(set(self.outputs)):
            outputs[p.relative_to(self.out_dir).as_posix()] = _artifact_digest(p)
        data = {
            "format_version": FORMAT_VERSION,
            "command": self.command,
            "status": status,
            "config": self.cfg.to_dict(),
            "seed": self.cfg.tucker.seed,
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": outputs,
            **self.extra,
        }
        path = self.path(MANIFEST_FILE)
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    def write_json(self, name: str, data: Any) -> Path:
        path = self.path(name)
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return self.wrote(path)


def _artifact_digest(path: Path) -> str:
    if path.suffix == ".npz":
        # zip members carry timestamps; hash the parameters instead
        from .tucker.model import load_model
        return "model:" + load_model(path).fingerprint()
    if path.is_dir():
        return hash_input(path)
    return _sha256_file(path)


# =============================================================================
# SHARED LOADERS
# =============================================================================

def _mapping_index(cfg: RunConfig) -> Tuple[TechniqueIndex, Any]:
    """Technique index and phrase embedding provider for ``cfg``."""
    if cfg.catalog:
        if not Path(cfg.catalog).is_file():
            raise UsageError(f"catalog not found: {cfg.catalog}")
        catalog = load_catalog(cfg.catalog)
    else:
        try:
            catalog = get_catalog(cfg.mapping.platform)
        except KeyError as exc:
            raise UsageError(str(exc.args[0])) from None

    if cfg.embeddings:
        if not Path(cfg.embeddings).is_file():
            raise UsageError(f"embeddings not found: {cfg.embeddings}")
        loaded = load_embeddings(cfg.embeddings)
        if len(loaded.rejected):
            logger.warning("%d embedding lines rejected", len(loaded.rejected))
        vectors = dict(loaded.vectors)
        # phrase keys use "_" for spaces
        for key, vec in loaded.vectors.items():
            vectors.setdefault(key.replace("_", " "), vec)
        provider: Any = PrecomputedProvider(vectors)
        techniques = catalog_from_vectors(catalog, loaded.vectors)
    else:
        provider = default_provider()
        techniques = embed_catalog(catalog, provider)
    return TechniqueIndex(techniques), provider


def _load_graph_data(run: Run, path_text: str) -> Tuple[List[Triple], Dict[str, Entity]]:
    """Triples and entities from a saved graph directory or a TSV file."""
    path = run.input(Path(path_text))
    if path.is_dir():
        kg = KnowledgeGraph.load(path)
        return list(kg.triples), dict(kg.entities)
    result = parse_triples(path)
    if len(result.rejected):
        logger.warning("%s: %d lines rejected", path.name, len(result.rejected))
    return result.triples, result.entities


def _parse_relation(name: str) -> RelationType:
    try:
        return RelationType.parse(name)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _resolve_entity(entities: Dict[str, Entity], ref: str, default: EntityClass) -> str:
    """Accept an entity id or a bare name (looked up under ``default`` class)."""
    if ref in entities:
        return ref
    return make_entity_id(default, ref) if ":" not in ref else ref


def _load_corpus(run: Run, corpus: str) -> List[AnnotatedDocument]:
    root = run.input(Path(corpus))
    if not root.is_dir():
        raise UsageError(f"corpus must be a directory of .txt/.ann pairs: {root}")
    docs = []
    for text_file in sorted(root.glob("*.txt")):
        ann_file = text_file.with_suffix(".ann")
        if ann_file.is_file():
            docs.append(parse_brat(text_file, ann_file))
        else:
            logger.warning("%s has no .ann file; skipped", text_file.name)
    return docs


def corpus_rows(
    docs: Sequence[AnnotatedDocument],
    resolver: Callable[[str], Optional[str]],
    registry: EntityRegistry,
) -> Tuple[List[TripleRow], List[Tuple[str, str, int]]]:
    """
    Triple rows from annotated documents plus (malware, technique, year) observations.

    Besides the annotated relations, the primary malware of each document
    ``uses`` every mapped attack pattern, is ``indicated`` by every IoC and
    ``exploits`` every CVE in the text.
    """
    rows: List[TripleRow] = []
    observations: List[Tuple[str, str, int]] = []
    for doc in docs:
        doc_id = doc.document.id
        mentions = doc.mentions()
        registry.add_mentions(mentions)
        rows.extend(to_triple_rows(doc, resolver))

        techniques = []
        for span in doc.attack_pattern_spans:
            technique = resolver(span.text)
            if technique:
                registry.intern(technique, EntityClass.ATTACK_PATTERN)
                techniques.append(technique)
        hits = extract_iocs(doc.document.body)
        for hit in hits:
            cls = (EntityClass.VULNERABILITY if hit.ioc_type is IocType.CVE
                   else EntityClass.INDICATOR)
            registry.intern(hit.matched_text, cls)

        primary = primary_malware(mentions)
        if primary is None:
            continue
        name = registry[primary].canonical_name
        malware = EntityClass.MALWARE.value
        for technique in sorted(set(techniques)):
            rows.append(TripleRow(name, malware, RelationType.USES.value, technique,
                                  EntityClass.ATTACK_PATTERN.value, (doc_id,)))
        for hit in hits:
            if hit.ioc_type is IocType.CVE:
                rows.append(TripleRow(name, malware, RelationType.EXPLOITS.value,
                                      hit.matched_text, EntityClass.VULNERABILITY.value,
                                      (doc_id,)))
            else:
                rows.append(TripleRow(hit.matched_text, EntityClass.INDICATOR.value,
                                      RelationType.INDICATES.value, name, malware, (doc_id,)))
        year = doc.document.published_year or extract_date(doc.document.body)
        if year is not None:
            observations.extend((primary, t, year) for t in sorted(set(techniques)))
    return rows, observations


def _graph_from_sources(
    run: Run, corpus: Optional[str], triple_files: Sequence[str]
) -> Tuple[KnowledgeGraph, List[Tuple[str, str, int]], List[AnnotatedDocument]]:
    registry = EntityRegistry()
    triples: List[Triple] = []
    rejected = AuditReport("inputs")
    observations: List[Tuple[str, str, int]] = []
    docs: List[AnnotatedDocument] = []
    if corpus:
        docs = _load_corpus(run, corpus)
        index, provider = _mapping_index(run.cfg)
        resolver = lru_cache(maxsize=None)(index.resolver(provider, run.cfg.mapping))
        rows, observations = corpus_rows(docs, resolver, registry)
        parsed = rows_to_triples(rows, registry, source=Path(corpus).name, count_mentions=False)
        triples.extend(parsed.triples)
        rejected.extend(parsed.rejected)
    for name in triple_files:
        parsed = parse_triples(run.input(Path(name)), registry=registry)
        triples.extend(parsed.triples)
        rejected.extend(parsed.rejected)
    if len(rejected):
        logger.warning("%d input records rejected", len(rejected))
    kg = build(triples, registry.entities(), run.cfg.build)
    kg.build_log.extend(rejected)
    return kg, observations, docs


def _save_graph(run: Run, kg: KnowledgeGraph, name: str = "kg") -> Path:
    graph_dir = run.path(name)
    kg.save(graph_dir)
    run.wrote(graph_dir)
    run.extra["kg_hash"] = kg.content_hash()
    return graph_dir


def _write_tsv(run: Run, name: str, triples: Sequence[Triple], entities: Dict[str, Entity]) -> Path:
    return run.wrote(write_triples(triples, entities, run.path(name)))


# =============================================================================
# COMMANDS
# =============================================================================

def cmd_ingest(run: Run, args: argparse.Namespace) -> int:
    """Clean reports into a document store with years and IoCs."""
    cfg = run.cfg.ingest
    problems = AuditReport("ingest")
    if args.crawl:
        if not args.seed_url:
            raise UsageError("--crawl needs --seed")
        provider = FixturePageProvider.from_file(run.input(Path(args.crawl)))
        result = crawl(args.seed_url, provider, cfg.generations, cfg.keywords, cfg.n_words,
                       cfg.max_workers)
        documents = result.documents
        problems.extend(result.issues)
    elif args.input:
        root = run.input(Path(args.input))
        files = [root] if root.is_file() else sorted(
            p for p in root.iterdir() if p.suffix.lower() in (".html", ".htm", ".txt"))
        documents = []
        for path in files:
            try:
                documents.append(load_document(path))
            except (OSError, UnicodeDecodeError, CtiGraphError) as exc:
                logger.warning("cannot ingest %s: %s", path.name, exc)
                problems.add(IssueType.UNREADABLE_FILE, str(exc), location=path.name,
                             severity=Severity.WARNING)
    else:
        raise UsageError("ingest needs an input directory or --crawl")

    store = run.path("documents")
    run.wrote(write_document_store(documents, store))
    ioc_lines = []
    for doc in documents:
        hits = extract_iocs(doc.body)
        ioc_lines.extend(
            json.dumps({"format_version": FORMAT_VERSION, "doc_id": doc.id, **h.to_dict()},
                       sort_keys=True)
            for h in hits
        )
        run.emit("document", {"doc_id": doc.id, "source_url": doc.source_url,
                              "published_year": doc.published_year, "iocs": len(hits)})
        run.say(f"{doc.id:<20} year={doc.published_year or '-':<6} iocs={len(hits)}")
    iocs = run.path("iocs.jsonl")
    iocs.write_text("".join(line + "\n" for line in ioc_lines), encoding="utf-8")
    run.wrote(iocs)

    for issue in problems:
        run.emit("issue", issue.to_dict())
    if len(problems):
        run.say(problems.report(verbose=False))
    run.extra["documents"] = len(documents)
    run.manifest("failed" if args.strict and len(problems) else "ok")
    return EXIT_FAILURE if args.strict and len(problems) else EXIT_OK


def cmd_iocs(run: Run, args: argparse.Namespace) -> int:
    """Print the IoC hits of each file."""
    for name in args.files:
        path = Path(name)
        if not path.is_file():
            raise UsageError(f"input not found: {path}")
        doc = load_document(path)
        for hit in extract_iocs(doc.body):
            run.emit("ioc", {"doc_id": doc.id, **hit.to_dict()})
            run.say(f"{doc.id}\t{hit.ioc_type.value:<9}{hit.start:>7}-{hit.end:<7}"
                    f"{hit.matched_text}")
    return EXIT_OK


def _read_phrases(path: Path, tagged: bool) -> Tuple[List[AttackPhrase], List[AttackPhrase]]:
    """(kept phrases, phrases dropped by the verb filter)."""
    lines = path.read_text(encoding="utf-8").splitlines()
    if not tagged:
        phrases = [
            AttackPhrase(path.stem, i, (0, len(line.split())), " ".join(line.split()))
            for i, line in enumerate(lines) if line.strip() and not line.startswith("#")
        ]
        return phrases, []
    merged: List[AttackPhrase] = []
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            merged.extend(merge_tagged_spans(
                record["tokens"], record["tags"],
                str(record.get("doc_id", path.stem)), int(record.get("sentence_index", 0)),
            ))
        except (ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"{path.name}:{number}: bad tagged record: {exc}") from None
    kept = filter_invalid_phrases(merged)
    kept_ids = {id(p) for p in kept}
    return kept, [p for p in merged if id(p) not in kept_ids]


def cmd_map(run: Run, args: argparse.Namespace) -> int:
    """Map attack phrases to technique ids."""
    path = run.input(Path(args.phrases))
    index, provider = _mapping_index(run.cfg)
    kept, dropped = _read_phrases(path, args.tagged)

    for phrase in dropped:
        run.emit("mapping", {"doc_id": phrase.doc_id, "sentence_index": phrase.sentence_index,
                             "token_span": list(phrase.token_span), "phrase": phrase.text,
                             "filtered": True, "technique_id": None, "distance": None})
    mapped = map_attack_phrases(kept, index, provider, run.cfg.mapping)
    for m in mapped:
        run.emit("mapping", {**m.to_dict(), "token_span": list(m.phrase.token_span),
                             "nearest_id": m.result.nearest_id, "filtered": False})
        run.say(f"{m.result.technique_id or '-':<8}{m.result.distance:>7.3f}  {m.phrase.text}")

    if args.gold:
        gold_path = run.input(Path(args.gold))
        gold = [ln.strip() for ln in gold_path.read_text(encoding="utf-8").splitlines()
                if ln.strip() and not ln.startswith("#")]
        predicted = [m.result.technique_id for m in mapped if m.result.mapped]
        score = score_extraction(predicted, gold)
        run.emit("score", score.to_dict())
        r = score.rounded()
        run.say(f"\nP={r.precision:.2f} R={r.recall:.2f} F1={r.f1:.2f} "
                f"(tp={r.tp} fp={r.fp} fn={r.fn})")
    return EXIT_OK


def cmd_kg_build(run: Run, args: argparse.Namespace) -> int:
    triple_files = list(args.inputs) or ([run.cfg.triples] if run.cfg.triples else [])
    corpus = args.brat or run.cfg.corpus
    if not triple_files and not corpus:
        raise UsageError("kg build needs triple files or --brat")
    kg, _, _ = _graph_from_sources(run, corpus, triple_files)
    graph_dir = _save_graph(run, kg)
    run.emit("graph", {"path": graph_dir.as_posix(), "content_hash": kg.content_hash(),
                       "entities": len(kg.entities), "triples": len(kg),
                       "summary": kg.summary(), "issues": len(kg.build_log)})
    if run.pretty:
        print(kg.build_log.report(verbose=False))
        print(f"{kg!r} saved to {graph_dir}")
        for section, counts in kg.summary().items():
            print(f"  {section}: " + ", ".join(f"{k}={v}" for k, v in counts.items()))
    run.manifest()
    return EXIT_OK


def cmd_kg_query(run: Run, args: argparse.Namespace) -> int:
    kg = KnowledgeGraph.load(run.input(Path(args.graph)))
    relation = _parse_relation(args.relation)
    head = _resolve_entity(dict(kg.entities), args.head, EntityClass.MALWARE)
    for tail in sorted(query_tails(kg, head, relation)):
        run.emit("tail", {"head": head, "relation": relation.value, "tail": tail})
        run.say(tail)
    return EXIT_OK


def cmd_kg_similar(run: Run, args: argparse.Namespace) -> int:
    kg = KnowledgeGraph.load(run.input(Path(args.graph)))
    entity = _resolve_entity(dict(kg.entities), args.entity, EntityClass.MALWARE)
    try:
        class_filter = EntityClass.parse(args.entity_class) if args.entity_class else None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    ranked = most_similar(kg, entity, class_filter, args.k, run.cfg.eval.direction_agnostic)
    for rank, (other, sim) in enumerate(ranked, start=1):
        run.emit("similar", {"entity": entity, "rank": rank, "neighbor": other,
                             "similarity": sim})
        run.say(f"{rank:>3}  {sim:.3f}  {other}")
    return EXIT_OK


def cmd_tucker_train(run: Run, args: argparse.Namespace) -> int:
    from .tucker.model import save_model
    from .tucker.training import train

    triples, entities = _load_graph_data(run, args.input)
    result = train(triples, run.cfg.tucker, entities=entities.keys())
    model_path = run.wrote(save_model(result.model, run.path("model.npz")))
    run.write_json("loss.json", {"format_version": FORMAT_VERSION,
                                 "loss_trace": result.loss_trace})
    if args.plot:
        from .plotting import plot_loss_trace, save_figure
        fig = plot_loss_trace(result.loss_trace)
        for saved in save_figure(fig, run.path("loss"), formats=("png",)):
            run.wrote(saved)
    fingerprint = result.model.fingerprint()
    run.extra["model_fingerprint"] = fingerprint
    run.emit("model", {"path": model_path.as_posix(), "fingerprint": fingerprint,
                       "final_loss": result.final_loss, "iterations": len(result.loss_trace),
                       "entities": result.model.n_entities,
                       "relations": result.model.n_relations})
    run.say(f"{result.model!r}\nfinal loss {result.final_loss:.6f}\nsaved to {model_path}")
    run.manifest()
    return EXIT_OK


def cmd_tucker_predict(run: Run, args: argparse.Namespace) -> int:
    from .tucker.evaluation import predict_tails
    from .tucker.model import load_model

    model = load_model(run.input(Path(args.model)))
    known: List[Triple] = []
    for name in args.known or ():
        known.extend(_load_graph_data(run, name)[0])
    head = args.head if ":" in args.head else make_entity_id(EntityClass.MALWARE, args.head)
    predictions = predict_tails(
        model, head, _parse_relation(args.relation), k=args.k,
        restrict_classes=bool(run.cfg.eval.restrict_candidates),
        known=known, exclude_known=args.exclude_known,
    )
    run.say(f"<{head}, {args.relation}, ?>")
    for p in predictions:
        run.emit("prediction", {"head": head, "relation": args.relation, **p.to_dict()})
        run.say(f"{p.rank:>4}  {p.entity_id:<40}{p.confidence:.3f}")
    return EXIT_OK


def cmd_tucker_eval(run: Run, args: argparse.Namespace) -> int:
    from .tucker.evaluation import evaluate
    from .tucker.model import load_model

    model = load_model(run.input(Path(args.model)))
    test, _ = _load_graph_data(run, args.test)
    known: List[Triple] = list(test)
    for name in args.known or ():
        known.extend(_load_graph_data(run, name)[0])
    report = evaluate(model, test, known, run.cfg.eval)
    run.write_json("eval.json", report.to_dict())
    run.emit("eval", report.to_dict())
    run.say(report.report())
    run.manifest()
    return EXIT_OK


def cmd_tucker_split(run: Run, args: argparse.Namespace) -> int:
    from .tucker.splits import split_dataset

    triples, entities = _load_graph_data(run, args.input)
    train, test = split_dataset(triples, run.cfg.split_fraction, run.cfg.tucker.seed, entities)
    _write_tsv(run, "train.tsv", train, entities)
    _write_tsv(run, "test.tsv", test, entities)
    run.emit("split", {"train": len(train), "test": len(test),
                       "fraction": run.cfg.split_fraction, "seed": run.cfg.tucker.seed})
    run.say(f"train {len(train)}  test {len(test)}")
    run.manifest()
    return EXIT_OK


def cmd_tucker_leave_out(run: Run, args: argparse.Namespace) -> int:
    from .tucker.splits import attack_patterns_of, leave_out_attack_patterns

    triples, entities = _load_graph_data(run, args.input)
    malware = _resolve_entity(entities, args.malware, EntityClass.MALWARE)
    reduced = leave_out_attack_patterns(triples, malware, entities)
    held_out = attack_patterns_of(triples, malware, entities)
    _write_tsv(run, "reduced.tsv", reduced, entities)
    _write_tsv(run, "held_out.tsv", held_out, entities)
    run.emit("leave_out", {"malware": malware, "removed": len(held_out),
                           "remaining": len(reduced)})
    run.say(f"{malware}: {len(held_out)} attack patterns left out, {len(reduced)} triples kept")
    run.manifest()
    return EXIT_OK


def _read_observations(path: Path) -> List[Tuple[str, str, int]]:
    observations = []
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = [f.strip() for f in line.split("\t")]
        if len(fields) != 3 or not fields[2].isdigit():
            raise UsageError(f"{path.name}:{number}: expected malware<TAB>technique<TAB>year")
        observations.append((fields[0], fields[1], int(fields[2])))
    return observations


def cmd_trends(run: Run, args: argparse.Namespace) -> int:
    """Normalized technique counts per year."""
    report = trend_analysis(_read_observations(run.input(Path(args.observations))))
    for year in report.years:
        run.emit("trend", {"year": year, "normalized": report.normalized[year],
                           "counts": report.counts[year],
                           "malware": report.malware_per_year[year]})
        top = sorted(report.normalized[year].items(), key=lambda kv: (-kv[1], kv[0]))[:5]
        run.say(f"{year}: " + ", ".join(f"{t}={v:.3f}" for t, v in top))
    if args.plot:
        from .plotting import plot_trends, save_figure
        fig = plot_trends(report, args.techniques)
        for saved in save_figure(fig, run.path(args.plot)):
            run.wrote(saved)
        run.write_json("trends.json", {"format_version": FORMAT_VERSION, **report.to_dict()})
        run.manifest()
    return EXIT_OK


def cmd_pipeline(run: Run, args: argparse.Namespace) -> int:
    """
    Corpus to graph to model: ingest, map, build, split, train, evaluate.

    A failing stage stops the run; artifacts written so far are kept next
    to a ``FAILED`` marker and a manifest with status ``failed``.
    """
    from .tucker.evaluation import evaluate
    from .tucker.model import save_model
    from .tucker.splits import split_dataset
    from .tucker.training import train

    cfg = run.cfg
    if not cfg.corpus and not cfg.triples:
        raise UsageError("pipeline needs --corpus and/or --triples")
    marker = run.out_dir / FAILED_MARKER
    if marker.exists():
        marker.unlink()
    stages: List[Dict[str, str]] = []
    run.extra["stages"] = stages
    current = "kg"
    try:
        kg, observations, docs = _graph_from_sources(
            run, cfg.corpus, [cfg.triples] if cfg.triples else [])
        if docs:
            store = run.path("documents")
            run.wrote(write_document_store([d.document for d in docs], store))
        _save_graph(run, kg)
        stages.append({"name": "kg", "status": "ok"})
        run.emit("graph", {"content_hash": kg.content_hash(), "entities": len(kg.entities),
                           "triples": len(kg)})

        current = "trends"
        trends = trend_analysis(observations)
        run.write_json("trends.json", {"format_version": FORMAT_VERSION, **trends.to_dict()})
        stages.append({"name": "trends", "status": "ok"})

        if not args.skip_train:
            current = "split"
            entities = dict(kg.entities)
            train_set, test_set = split_dataset(kg.triples, cfg.split_fraction,
                                                cfg.tucker.seed, entities)
            _write_tsv(run, "train.tsv", train_set, entities)
            _write_tsv(run, "test.tsv", test_set, entities)
            stages.append({"name": "split", "status": "ok"})

            current = "train"
            result = train(train_set, cfg.tucker, entities=entities.keys())
            run.wrote(save_model(result.model, run.path("model.npz")))
            run.write_json("loss.json", {"format_version": FORMAT_VERSION,
                                         "loss_trace": result.loss_trace})
            run.extra["model_fingerprint"] = result.model.fingerprint()
            stages.append({"name": "train", "status": "ok"})
            run.emit("model", {"fingerprint": result.model.fingerprint(),
                               "final_loss": result.final_loss})

            current = "eval"
            if test_set:
                report = evaluate(result.model, test_set, kg.triples, cfg.eval)
                run.write_json("eval.json", report.to_dict())
                run.emit("eval", report.to_dict())
                run.say(report.report())
            else:
                logger.warning("empty test split; evaluation skipped")
            stages.append({"name": "eval", "status": "ok"})
    except Exception as exc:
        stages.append({"name": current, "status": "failed"})
        marker.parent.mkdir(parents=True, exist_ok=True)
        marker.write_text(f"stage: {current}\nerror: {type(exc).__name__}: {exc}\n",
                          encoding="utf-8")
        run.manifest("failed")
        raise
    run.manifest()
    run.say(f"run complete; manifest at {run.out_dir / MANIFEST_FILE}")
    return EXIT_OK


# =============================================================================
# ARGUMENT PARSING
# =============================================================================

def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", help="TOML config (default: $CTI_GRAPH_CONFIG "
                                               "or ./ctigraph.toml)")
    common.add_argument("--out", "-o", dest="output_dir", help="Output directory")
    common.add_argument("--pretty", action="store_true", help="Human-readable tables")
    common.add_argument("--verbose", "-v", action="count", default=0, help="More logging")
    common.add_argument("--quiet", "-q", action="store_true", help="Errors only")
    return common


def _mapping_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--catalog", help="Technique catalog JSON (default: shipped catalog)")
    p.add_argument("--platform", help="Shipped catalog to use (mobile, enterprise)")
    p.add_argument("--embeddings", help="Precomputed vectors ('<id> <floats>' lines)")
    p.add_argument("--tau", type=float, help="Mapping threshold (default 0.6)")
    p.add_argument("--w-t", dest="w_t", type=float, help="Title weight (default 0.4)")


def _tucker_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d-e", dest="d_e", type=int, help="Entity dimension (default 50)")
    p.add_argument("--d-r", dest="d_r", type=int, help="Relation dimension (default 50)")
    p.add_argument("--batch-size", type=int, help="Mini-batch size (default 64)")
    p.add_argument("--iterations", type=int, help="Epochs (default 1000)")
    p.add_argument("--learning-rate", "--lr", dest="learning_rate", type=float)
    p.add_argument("--label-smoothing", type=float)
    p.add_argument("--seed", type=int, help="Training and split seed")
    p.add_argument("--workers", type=int, help="Data-parallel gradient workers")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cti-graph",
        description="Threat-intelligence knowledge graphs, technique mapping "
                    "and link prediction",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__.split("Usage:", 1)[1] if __doc__ else None,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = _common()
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="Clean reports into a document store")
    p.add_argument("input", nargs="?", help="Report file or directory (.html/.htm/.txt)")
    p.add_argument("--crawl", help="Crawl fixture JSON {url: {body, links}}")
    p.add_argument("--seed", dest="seed_url", help="Crawl seed URL")
    p.add_argument("--n-words", dest="n_words", type=int, help="Relevance window (> 100)")
    p.add_argument("--generations", type=int, help="Crawl generations")
    p.add_argument("--max-workers", dest="max_workers", type=int, help="Fetch threads")
    p.add_argument("--strict", action="store_true", help="Fail on any unreadable file")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("iocs", parents=[common], help="Print IoC hits")
    p.add_argument("files", nargs="+")
    p.set_defaults(handler=cmd_iocs)

    p = sub.add_parser("map", parents=[common], help="Map attack phrases to techniques")
    p.add_argument("phrases", help="One phrase per line, or JSON lines with --tagged")
    p.add_argument("--tagged", action="store_true",
                   help="Input is {tokens, tags[, doc_id, sentence_index]} JSON lines")
    p.add_argument("--gold", help="Gold technique ids, one per line")
    _mapping_flags(p)
    p.set_defaults(handler=cmd_map)

    kg = sub.add_parser("kg", help="Knowledge-graph commands")
    kg_sub = kg.add_subparsers(dest="action", required=True)
    p = kg_sub.add_parser("build", parents=[common], help="Build and save a graph")
    p.add_argument("inputs", nargs="*", help="TSV triple files")
    p.add_argument("--brat", help="Directory of BRAT .txt/.ann pairs")
    p.add_argument("--no-cleanup", dest="cleanup", action="store_false", default=None,
                   help="Keep conflicting and single-mention entities")
    _mapping_flags(p)
    p.set_defaults(handler=cmd_kg_build)
    p = kg_sub.add_parser("query", parents=[common], help="Tails of <head, relation, ?>")
    p.add_argument("graph")
    p.add_argument("head")
    p.add_argument("relation")
    p.set_defaults(handler=cmd_kg_query)
    p = kg_sub.add_parser("similar", parents=[common], help="Most similar entities")
    p.add_argument("graph")
    p.add_argument("entity")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--class", dest="entity_class", help="Candidate class")
    p.add_argument("--direction-agnostic", dest="direction_agnostic", action="store_true",
                   default=None)
    p.set_defaults(handler=cmd_kg_similar)

    tk = sub.add_parser("tucker", help="Link-prediction commands")
    tk_sub = tk.add_subparsers(dest="action", required=True)
    p = tk_sub.add_parser("train", parents=[common], help="Train a model")
    p.add_argument("input", help="Graph directory or TSV triples")
    p.add_argument("--plot", action="store_true", help="Save a loss curve")
    _tucker_flags(p)
    p.set_defaults(handler=cmd_tucker_train)
    p = tk_sub.add_parser("predict", parents=[common], help="Rank tails for a query")
    p.add_argument("model")
    p.add_argument("head")
    p.add_argument("relation")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--restrict", dest="restrict_candidates", action="store_true",
                   default=None, help="Only ontology-valid tail classes")
    p.add_argument("--known", nargs="*", help="Known triples (graph dirs or TSV)")
    p.add_argument("--exclude-known", action="store_true", help="Drop known tails")
    p.set_defaults(handler=cmd_tucker_predict)
    p = tk_sub.add_parser("eval", parents=[common], help="MRR, Mean Rank and Hits@n")
    p.add_argument("model")
    p.add_argument("test", help="Test triples (graph dir or TSV)")
    p.add_argument("--known", nargs="*", help="Other known triples for filtering")
    p.add_argument("--raw", dest="filtered", action="store_false", default=None,
                   help="Raw instead of filtered ranking")
    p.add_argument("--restrict", dest="restrict_candidates", action="store_true",
                   default=None)
    p.set_defaults(handler=cmd_tucker_eval)
    p = tk_sub.add_parser("split", parents=[common], help="Train/test split")
    p.add_argument("input")
    p.add_argument("--split-fraction", "--fraction", dest="split_fraction", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(handler=cmd_tucker_split)
    p = tk_sub.add_parser("leave-out", parents=[common],
                          help="Remove a malware's attack-pattern triples")
    p.add_argument("input")
    p.add_argument("malware", help="Malware id or name")
    p.set_defaults(handler=cmd_tucker_leave_out)

    p = sub.add_parser("trends", parents=[common], help="Technique trends per year")
    p.add_argument("observations", help="malware<TAB>technique<TAB>year lines")
    p.add_argument("--plot", help="Save a figure under this name in the output directory")
    p.add_argument("--techniques", nargs="*", help="Techniques to plot")
    p.set_defaults(handler=cmd_trends)

    p = sub.add_parser("pipeline", parents=[common], help="Run every stage")
    p.add_argument("--corpus", help="Directory of BRAT .txt/.ann pairs")
    p.add_argument("--triples", help="Extra TSV triples (e.g. imported reports)")
    p.add_argument("--split-fraction", dest="split_fraction", type=float)
    p.add_argument("--skip-train", action="store_true", help="Stop after the graph")
    p.add_argument("--no-cleanup", dest="cleanup", action="store_false", default=None)
    _mapping_flags(p)
    _tucker_flags(p)
    p.set_defaults(handler=cmd_pipeline)
    return parser


def _error(kind: str, exc: BaseException) -> None:
    print(json.dumps({"format_version": FORMAT_VERSION, "kind": "error", "error": kind,
                      "type": type(exc).__name__, "message": str(exc)}, sort_keys=True),
          file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main CLI entry point."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    level = logging.ERROR if args.quiet else (logging.DEBUG if args.verbose > 1 else
                                              logging.INFO if args.verbose else logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    command = args.command + (f" {args.action}" if getattr(args, "action", None) else "")
    try:
        cfg = load_config(args.config)
        overrides = {k: getattr(args, k) for k in _OVERRIDE_KEYS if hasattr(args, k)}
        cfg = cfg.with_overrides(**overrides)
        return args.handler(Run(cfg, command, pretty=args.pretty), args)
    except (UsageError, ConfigurationError) as exc:
        _error("usage", exc)
        return EXIT_USAGE
    except (CtiGraphError, OSError, ValueError, KeyError, RuntimeError) as exc:
        logger.debug("command failed", exc_info=True)
        _error("runtime", exc)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
