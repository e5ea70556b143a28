"""Pipeline orchestration from one declarative config file.

Subcommands: expand, collect, domains, annotate-serve, resolve, split,
export, eval, finetune-export, report. Every subcommand reads and writes the
configured store, so each is resumable and idempotent given unchanged inputs
and caches. Artifacts and their digests are recorded in per-step manifests.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import annotation, domains as domains_mod, evaluation, queries as queries_mod, splits
from .annotation import AgreementReport, AnnotationResult
from .cache import ResponseCache
from .collection import (
    CollectionConfig,
    MappingLanguageIdentifier,
    ScriptLanguageIdentifier,
    collect,
    filter_by_language,
)
from .corpus import (
    DEFAULT_TOPICS,
    Locale,
    QAPair,
    ValidationError,
    read_pairs,
    read_queries,
    write_jsonl,
    write_pairs,
    write_queries,
)
from .engines import build_engine
from .providers import CachedProvider, FixtureChatProvider, HttpChatProvider
from .server import AnnotationStore, create_app, parse_token_env

log = logging.getLogger(__name__)

SUBCOMMANDS = (
    "expand",
    "collect",
    "domains",
    "annotate-serve",
    "resolve",
    "split",
    "export",
    "eval",
    "finetune-export",
    "report",
)


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass
class PipelineConfig:
    locales: list[Locale]
    topics: list[str]
    base_dir: Path
    seeds_path: Path
    cache_dir: Path
    store_dir: Path
    output_dir: Path
    collection: dict = field(default_factory=dict)
    expansion: dict = field(default_factory=dict)
    langid: dict = field(default_factory=dict)
    domains: dict = field(default_factory=dict)
    split: dict = field(default_factory=dict)
    annotation: dict = field(default_factory=dict)
    eval: dict = field(default_factory=dict)
    finetune: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        problems: list[str] = []
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError([f"config unreadable: {exc}"]) from exc
        base = path.parent

        locales = []
        for i, rec in enumerate(raw.get("locales", [])):
            try:
                locales.append(Locale.from_record(rec))
            except (ValidationError, KeyError) as exc:
                problems.append(f"locales[{i}]: {exc}")
        if not locales:
            problems.append("locales: at least one locale is required")

        topics = raw.get("topics") or list(DEFAULT_TOPICS)
        paths = raw.get("paths", {})
        for name in ("seeds", "cache_dir", "store_dir", "output_dir"):
            if name not in paths:
                problems.append(f"paths.{name}: required")

        split_spec = raw.get("split", {})
        ratios = split_spec.get("ratios", [0.7, 0.1, 0.2])
        try:
            splits.SplitSpec(
                ratios=tuple(ratios),
                rng_seed=split_spec.get("rng_seed", 0),
                test_only=split_spec.get("test_only", False),
                rng_algorithm=split_spec.get("rng_algorithm", splits.RNG_ALGORITHM),
            )
        except (ValidationError, TypeError) as exc:
            problems.append(f"split: {exc}")

        coll = raw.get("collection", {})
        if locales and not problems:
            try:
                CollectionConfig(
                    n_iter=coll.get("n_iter", 1),
                    locale=locales[0],
                    engine=coll.get("engine", "fixture"),
                    rate_limit=coll.get("rate_limit", 2.0),
                )
            except ValidationError as exc:
                problems.append(f"collection: {exc}")

        if problems:
            raise ConfigError(problems)
        return cls(
            locales=locales,
            topics=topics,
            base_dir=base,
            seeds_path=base / paths["seeds"],
            cache_dir=base / paths["cache_dir"],
            store_dir=base / paths["store_dir"],
            output_dir=base / paths["output_dir"],
            collection=coll,
            expansion=raw.get("expansion", {}),
            langid=raw.get("langid", {}),
            domains=raw.get("domains", {}),
            split=split_spec,
            annotation=raw.get("annotation", {}),
            eval=raw.get("eval", {}),
            finetune=raw.get("finetune", {}),
        )

    def split_spec(self) -> splits.SplitSpec:
        return splits.SplitSpec(
            ratios=tuple(self.split.get("ratios", [0.7, 0.1, 0.2])),
            rng_seed=self.split.get("rng_seed", 0),
            test_only=self.split.get("test_only", False),
            rng_algorithm=self.split.get("rng_algorithm", splits.RNG_ALGORITHM),
        )

    def provider(self, spec: dict, default_name: str):
        kind = spec.get("type", "fixture")
        if kind == "fixture":
            provider = FixtureChatProvider.from_file(
                self.base_dir / spec["path"], name=spec.get("name", default_name)
            )
        elif kind == "http":
            provider = HttpChatProvider(
                name=spec.get("name", default_name),
                base_url=spec["base_url"],
                model=spec.get("model", default_name),
                api_key_env=spec.get("api_key_env", "NATIVQA_API_KEY"),
            )
        else:
            raise ConfigError([f"unknown provider type {kind!r}"])
        if spec.get("cached", kind == "http"):
            provider = CachedProvider(provider, ResponseCache(self.cache_dir))
        return provider

    def identifier_for(self, locale: Locale):
        kind = self.langid.get("type", "script")
        if kind == "fixture":
            mapping = json.loads(
                (self.base_dir / self.langid["map_path"]).read_text(encoding="utf-8")
            )
            return MappingLanguageIdentifier(mapping, default=locale.language)
        if kind == "script":
            return ScriptLanguageIdentifier()
        raise ConfigError([f"unknown langid type {kind!r}"])

    # store paths -------------------------------------------------------------

    @property
    def queries_path(self) -> Path:
        return self.store_dir / "queries.jsonl"

    @property
    def enriched_path(self) -> Path:
        return self.store_dir / "queries_enriched.jsonl"

    @property
    def pairs_path(self) -> Path:
        return self.store_dir / "qa_pairs.jsonl"

    @property
    def registry_path(self) -> Path:
        return self.store_dir / "domains.jsonl"

    @property
    def provisional_path(self) -> Path:
        return self.store_dir / "provisional_split.json"

    @property
    def relevance_path(self) -> Path:
        return self.store_dir / "relevance.json"

    @property
    def annotation_dir(self) -> Path:
        return self.store_dir / "annotation"


def _record_manifest(cfg: PipelineConfig, step: str, artifacts: list[Path]) -> Path:
    entries = {}
    for path in artifacts:
        if path.is_file():
            entries[str(path)] = hashlib.sha256(path.read_bytes()).hexdigest()
    manifest_path = cfg.store_dir / "manifests" / f"{step}.json"
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    manifest_path.write_text(
        json.dumps({"step": step, "artifacts": entries}, indent=2, sort_keys=True),
        encoding="utf-8",
    )
    return manifest_path


def _tiers(cfg: PipelineConfig) -> dict[str, str]:
    return {loc.key: loc.resource_tier for loc in cfg.locales}


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_expand(cfg: PipelineConfig, args) -> int:
    provider = cfg.provider(cfg.expansion.get("provider", {}), "expansion")
    fanout = cfg.expansion.get("fanout", 10)
    temperature = cfg.expansion.get("temperature", 0.0)
    grouped, report = queries_mod.load_seed_file(cfg.seeds_path, tiers=_tiers(cfg))
    allowed = set(cfg.topics)
    for manual in grouped.values():
        for query in manual:
            if query.topic.name not in allowed:
                raise ValidationError(
                    f"seed topic {query.topic.name!r} is not in the configured topic list"
                )
    all_queries = []
    expanded_counts = {}
    for locale_key, manual in sorted(grouped.items()):
        synthesized = []
        for query in manual:
            req = queries_mod.ExpansionRequest(query=query, fanout=fanout)
            synthesized.extend(queries_mod.expand_query(req, provider, temperature=temperature))
        seed_set = queries_mod.build_seed_set(manual, synthesized)
        expanded_counts[locale_key] = {
            "manual": len(manual),
            "synthesized": len(synthesized),
            "seed_set": len(seed_set),
        }
        all_queries.extend(seed_set)
    write_queries(cfg.queries_path, all_queries)
    report_path = cfg.store_dir / "seed_report.json"
    report_path.write_text(
        json.dumps(
            {"ingested": report.per_locale, "total_ingested": report.total,
             "expanded": expanded_counts},
            indent=2, sort_keys=True,
        ),
        encoding="utf-8",
    )
    _record_manifest(cfg, "expand", [cfg.queries_path, report_path])
    log.info("seed set: %d queries across %d locales", len(all_queries), len(grouped))
    return 0


def cmd_collect(cfg: PipelineConfig, args) -> int:
    queries = read_queries(cfg.queries_path)
    if not queries:
        print("no seed queries; run expand first", file=sys.stderr)
        return 1
    engine_name = args.engine or cfg.collection.get("engine", "fixture")
    cache = ResponseCache(cfg.cache_dir)
    graph_path = args.graph or cfg.collection.get("graph_path")
    engine = build_engine(
        engine_name,
        graph_path=str(cfg.base_dir / graph_path) if graph_path else None,
        cache=cache,
    )
    all_pairs = []
    all_enriched = []
    reports = []
    for locale in cfg.locales:
        seeds = [q for q in queries if q.locale.key == locale.key]
        if not seeds:
            continue
        coll_cfg = CollectionConfig(
            n_iter=cfg.collection.get("n_iter", 1),
            locale=locale,
            engine=engine_name,
            rate_limit=cfg.collection.get("rate_limit", 2.0),
            cache_dir=str(cfg.cache_dir),
            faithful=cfg.collection.get("faithful", False),
            concurrency=cfg.collection.get("concurrency", 1),
            request_budget=cfg.collection.get("request_budget"),
        )
        result = collect(seeds, coll_cfg, engine)
        flagged = filter_by_language(result.qa_pairs, cfg.identifier_for(locale))
        all_pairs.extend(sorted(flagged, key=lambda p: p.id))
        all_enriched.extend(sorted(result.queries, key=lambda q: q.id))
        reports.append(result.run.to_record())
    write_pairs(cfg.pairs_path, all_pairs)
    write_queries(cfg.enriched_path, all_enriched)
    run_report_path = cfg.store_dir / "run_report.json"
    run_report_path.write_text(
        json.dumps({"runs": reports}, indent=2, sort_keys=True), encoding="utf-8"
    )
    _record_manifest(cfg, "collect", [cfg.pairs_path, cfg.enriched_path, run_report_path])
    log.info("collected %d pairs, %d queries", len(all_pairs), len(all_enriched))
    return 0


def _load_registry(cfg: PipelineConfig) -> dict[str, domains_mod.DomainRecord]:
    if cfg.registry_path.exists():
        return {r.domain: r for r in domains_mod.read_registry(cfg.registry_path)}
    return {}


def cmd_domains(cfg: PipelineConfig, args) -> int:
    pairs = read_pairs(cfg.pairs_path)
    registry = _load_registry(cfg)
    for rec in domains_mod.extract_registry(pairs):
        registry.setdefault(rec.domain, rec)

    if args.import_path:
        for rec in domains_mod.read_registry(args.import_path):
            existing = registry.get(rec.domain, domains_mod.DomainRecord(domain=rec.domain))
            for annotator_id, label in rec.judgments:
                existing = existing.with_judgment(annotator_id, label)
            registry[rec.domain] = existing

    # Pull DRC results out of the annotation store, if any.
    if cfg.annotation_dir.exists():
        store = AnnotationStore(cfg.annotation_dir)
        for task in store.tasks.values():
            project = store.projects[task["project_id"]]
            if project["task_kind"] != "drc":
                continue
            domain = task["payload"]["domain"]
            existing = registry.get(domain, domains_mod.DomainRecord(domain=domain))
            for entry in task["results"]:
                existing = existing.with_judgment(entry["annotator_id"], entry["result"]["label"])
            registry[domain] = existing

    for domain, rec in list(registry.items()):
        if rec.final_label is None and len(rec.judgments) >= 3:
            registry[domain] = domains_mod.aggregate_label(rec)

    for spec in args.adjudicate or []:
        domain, _, label = spec.partition("=")
        if domain not in registry:
            print(f"cannot adjudicate unknown domain {domain!r}", file=sys.stderr)
            return 1
        registry[domain] = domains_mod.adjudicate(registry[domain], label)

    filtered = domains_mod.filter_reliable(
        set(pairs), registry.values(),
        admit_partially_reliable=cfg.domains.get("admit_partially_reliable", False),
    )
    ordered = sorted(filtered, key=lambda p: p.id)
    write_pairs(cfg.pairs_path, ordered)
    records = [registry[d] for d in sorted(registry)]
    domains_mod.write_registry(cfg.registry_path, records)
    if args.export_path:
        domains_mod.write_registry(args.export_path, records)
    summary = domains_mod.registry_summary(records)
    summary["pending"] = domains_mod.pending_domains(ordered, records)
    summary_path = cfg.store_dir / "domain_summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8")
    print(domains_mod.render_registry_summary(summary))
    _record_manifest(cfg, "domains", [cfg.pairs_path, cfg.registry_path, summary_path])
    return 0


def _annotation_store(cfg: PipelineConfig) -> AnnotationStore:
    lease_minutes = cfg.annotation.get("lease_minutes", 30)
    return AnnotationStore(cfg.annotation_dir, lease_seconds=lease_minutes * 60)


def _sync_projects(cfg: PipelineConfig, store: AnnotationStore) -> dict:
    """Create DRC/QAA tasks for whatever the pipeline state currently needs."""
    annotators = cfg.annotation.get("annotators", [])
    required_drc = cfg.annotation.get("required_drc", 3)
    required_test = cfg.annotation.get("required_test", 2)
    required_traindev = cfg.annotation.get("required_traindev", 1)
    pairs = read_pairs(cfg.pairs_path) if cfg.pairs_path.exists() else []
    registry = _load_registry(cfg)

    def ensure_project(project_id, locale, kind, required):
        if project_id not in store.projects:
            store.create_project(project_id, locale, kind, required, annotators=annotators)

    created = {"drc_tasks": 0, "qaa_tasks": 0}
    unlabeled = [d for d, rec in sorted(registry.items()) if rec.final_label is None]
    if unlabeled:
        ensure_project("drc", cfg.locales[0], "drc", required_drc)
        sample_urls = {}
        for pair in pairs:
            sample_urls.setdefault(pair.domain, pair.source_url)
        for domain in unlabeled:
            task_id = f"drc:{domain}"
            if task_id not in store.tasks:
                store.add_task(
                    "drc", task_id,
                    {"domain": domain, "source_url": sample_urls.get(domain, f"https://{domain}/")},
                )
                created["drc_tasks"] += 1

    # Pairs from approved domains enter annotation; a provisional stratified
    # assignment routes the test share to dual annotation.
    passing = {"very_reliable"}
    if cfg.domains.get("admit_partially_reliable", False):
        passing.add("partially_reliable")
    eligible = [
        p for p in pairs
        if p.status == "harvested"
        and registry.get(p.domain) is not None
        and registry[p.domain].final_label in passing
    ]
    provisional: dict[str, str] = {}
    if cfg.provisional_path.exists():
        provisional = json.loads(cfg.provisional_path.read_text(encoding="utf-8"))
    if eligible:
        spec = cfg.split_spec()
        by_locale: dict[str, list[QAPair]] = {}
        for pair in eligible:
            by_locale.setdefault(pair.locale.key, []).append(pair)
        for locale_key, members in sorted(by_locale.items()):
            assignment = splits.assign_splits(members, spec)
            provisional.update(assignment)
        cfg.provisional_path.write_text(
            json.dumps(provisional, indent=0, sort_keys=True), encoding="utf-8"
        )
        updated = {p.id: p for p in pairs}
        for locale in cfg.locales:
            for bucket, required, suffix in (
                ("test", required_test, "test"),
                ("train", required_traindev, "traindev"),
                ("dev", required_traindev, "traindev"),
            ):
                members = [
                    p for p in eligible
                    if p.locale.key == locale.key and provisional.get(p.id) == bucket
                ]
                if not members:
                    continue
                project_id = f"qaa-{suffix}-{locale.key}"
                ensure_project(project_id, locale, "qaa", required)
                for pair in members:
                    task_id = f"qaa:{pair.id}"
                    if task_id not in store.tasks:
                        store.add_task(project_id, task_id, splits.export_record(pair, None))
                        created["qaa_tasks"] += 1
                    updated[pair.id] = pair.with_status("annotation_pending")
        write_pairs(cfg.pairs_path, sorted(updated.values(), key=lambda p: p.id))
    return created


def cmd_annotate_serve(cfg: PipelineConfig, args) -> int:
    store = _annotation_store(cfg)
    created = _sync_projects(cfg, store)
    store.snapshot()
    log.info("project sync: %s", created)
    _record_manifest(cfg, "annotate-serve", [store.snapshot_path])
    if args.serve:
        host, _, port = args.serve.partition(":")
        tokens = None
        raw_tokens = os.environ.get("NATIVQA_ANNOTATOR_TOKENS", "")
        if raw_tokens:
            tokens = parse_token_env(raw_tokens)
        app = create_app(store, tokens=tokens)
        import uvicorn

        uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8080), log_level="warning")
    return 0


def cmd_resolve(cfg: PipelineConfig, args) -> int:
    store = _annotation_store(cfg)
    pairs = {p.id: p for p in read_pairs(cfg.pairs_path)}
    relevance: dict[str, str] = {}
    if cfg.relevance_path.exists():
        relevance = json.loads(cfg.relevance_path.read_text(encoding="utf-8"))
    resolved = dropped = pending = 0
    for task_id in sorted(store.tasks):
        task = store.tasks[task_id]
        project = store.projects[task["project_id"]]
        if project["task_kind"] != "qaa":
            continue
        qa_id = task["payload"]["id"]
        pair = pairs.get(qa_id)
        if pair is None or pair.status != "annotation_pending":
            continue
        if task["status"] == "resolved":
            result = AnnotationResult.from_record(task["resolution"]["result"])
            pairs[qa_id] = annotation.advance(pair, result)
            if result.relevance is not None:
                relevance[qa_id] = result.relevance
            resolved += 1
        elif task["status"] == "dropped":
            pairs[qa_id] = pair.with_status("rejected")
            dropped += 1
        else:
            pending += 1
    ordered = sorted(pairs.values(), key=lambda p: p.id)
    write_pairs(cfg.pairs_path, ordered)
    cfg.relevance_path.write_text(
        json.dumps(relevance, indent=0, sort_keys=True), encoding="utf-8"
    )
    reports = _agreement_reports(cfg, store, ordered)
    agreement_json = cfg.store_dir / "agreement.json"
    agreement_json.write_text(
        json.dumps([r.to_record() for r in reports], indent=2), encoding="utf-8"
    )
    agreement_txt = cfg.store_dir / "agreement.txt"
    agreement_txt.write_text(annotation.render_agreement_table(reports) + "\n", encoding="utf-8")
    _record_manifest(
        cfg, "resolve", [cfg.pairs_path, cfg.relevance_path, agreement_json, agreement_txt]
    )
    log.info("resolve: %d resolved, %d dropped, %d pending", resolved, dropped, pending)
    if pending:
        print(f"warning: {pending} pairs still await annotation", file=sys.stderr)
    return 0


def _agreement_reports(cfg, store, pairs) -> list[AgreementReport]:
    reports = [store.agreement(pid) for pid in sorted(store.projects)]
    provisional = {}
    if cfg.provisional_path.exists():
        provisional = json.loads(cfg.provisional_path.read_text(encoding="utf-8"))
    by_cell: dict[tuple, list] = {}
    for pair in pairs:
        if pair.status != "accepted":
            continue
        bucket = provisional.get(pair.id, "unsplit")
        by_cell.setdefault((pair.locale.key, bucket), []).append(
            (pair.answer, pair.effective_answer)
        )
    for (locale_key, bucket), answer_pairs in sorted(by_cell.items()):
        reports.append(
            AgreementReport(
                task=f"edit-distance {locale_key} {bucket}",
                n_items=len(answer_pairs),
                mean_norm_levenshtein=annotation.mean_edit_distance(answer_pairs),
            )
        )
    return reports


def _final_splits(cfg: PipelineConfig) -> dict[str, list[QAPair]]:
    pairs = read_pairs(cfg.pairs_path)
    accepted = [p for p in pairs if p.status == "accepted"]
    if not accepted:
        raise ValidationError("no accepted pairs; run resolve first")
    out: dict[str, list[QAPair]] = {"train": [], "dev": [], "test": []}
    if cfg.provisional_path.exists():
        provisional = json.loads(cfg.provisional_path.read_text(encoding="utf-8"))
        for pair in accepted:
            bucket = provisional.get(pair.id)
            if bucket is None:
                raise ValidationError(f"accepted pair {pair.id} missing from provisional split")
            out[bucket].append(pair)
        return out
    spec = cfg.split_spec()
    by_locale: dict[str, list[QAPair]] = {}
    for pair in accepted:
        by_locale.setdefault(pair.locale.key, []).append(pair)
    for locale_key in sorted(by_locale):
        train, dev, test = splits.stratified_split(by_locale[locale_key], spec)
        out["train"].extend(train)
        out["dev"].extend(dev)
        out["test"].extend(test)
    return out


def cmd_split(cfg: PipelineConfig, args) -> int:
    try:
        final = _final_splits(cfg)
    except ValidationError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    counts = {name: len(members) for name, members in final.items()}
    splits_path = cfg.store_dir / "splits.json"
    assignment = {
        pair.id: name for name, members in final.items() for pair in members
    }
    splits_path.write_text(
        json.dumps({"counts": counts, "assignment": assignment}, indent=0, sort_keys=True),
        encoding="utf-8",
    )
    _record_manifest(cfg, "split", [splits_path])
    print(json.dumps(counts, sort_keys=True))
    return 0


def cmd_export(cfg: PipelineConfig, args) -> int:
    try:
        final = _final_splits(cfg)
    except ValidationError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    relevance = {}
    if cfg.relevance_path.exists():
        relevance = json.loads(cfg.relevance_path.read_text(encoding="utf-8"))
    for name in final:
        final[name] = sorted(final[name], key=lambda p: p.id)
    dataset_dir = cfg.output_dir / "dataset"
    manifest = splits.export_dataset(final, dataset_dir, relevance=relevance)
    artifacts = [dataset_dir / "manifest.json"]
    artifacts += [dataset_dir / rel for rel in manifest["files"]]
    _record_manifest(cfg, "export", artifacts)
    print(json.dumps(manifest["totals"], sort_keys=True))
    return 0


def cmd_eval(cfg: PipelineConfig, args) -> int:
    final = _final_splits(cfg)
    test = final["test"]
    if not test:
        print("empty test split", file=sys.stderr)
        return 1
    model = cfg.provider(cfg.eval.get("model", {}), "model")
    judge = None
    if cfg.eval.get("use_judge") and cfg.eval.get("judge"):
        judge = cfg.provider(cfg.eval["judge"], "judge")
    encoder = None
    encoder_spec = cfg.eval.get("encoder") or {}
    if encoder_spec.get("type") == "hash":
        encoder = evaluation.HashEncoder(dim=encoder_spec.get("dim", 16))
    elif encoder_spec.get("type") == "http":
        encoder = evaluation.HttpEncoder(encoder_spec["base_url"])
    eval_cfg = evaluation.EvalConfig(
        model_name=cfg.eval.get("model", {}).get("name", "model"),
        max_tokens=cfg.eval.get("max_tokens", 1024),
        use_judge=judge is not None,
        judge=judge,
        encoder=encoder,
    )
    records, report = evaluation.evaluate_testset(test, model, eval_cfg)
    eval_dir = cfg.output_dir / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)
    per_item = eval_dir / "per_item.jsonl"
    write_jsonl(per_item, (r.to_record() for r in records))
    report["tiers"] = evaluation.tier_summary(report, cfg.locales)
    report_json = eval_dir / "report.json"
    report_json.write_text(
        json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False), encoding="utf-8"
    )
    report_txt = eval_dir / "report.txt"
    report_txt.write_text(evaluation.render_eval_table(report) + "\n", encoding="utf-8")
    _record_manifest(cfg, "eval", [per_item, report_json, report_txt])
    print(evaluation.render_eval_table(report))
    return 0


def cmd_finetune_export(cfg: PipelineConfig, args) -> int:
    final = _final_splits(cfg)
    train = final["train"]
    if not train:
        print("empty train split", file=sys.stderr)
        return 1
    templates = None
    if cfg.finetune.get("templates_path"):
        spec = json.loads(
            (cfg.base_dir / cfg.finetune["templates_path"]).read_text(encoding="utf-8")
        )
        templates = [
            evaluation.InstructionTemplate(t["id"], t["source_model"], t["text"])
            for t in spec["templates"]
        ]
    seed = args.seed if args.seed is not None else cfg.finetune.get("seed", 0)
    records = evaluation.build_finetune_records(train, templates=templates, seed=seed)
    out = cfg.output_dir / "finetune" / "records.jsonl"
    write_jsonl(out, records)
    _record_manifest(cfg, "finetune-export", [out])
    print(f"wrote {len(records)} instruction records to {out}")
    return 0


def cmd_report(cfg: PipelineConfig, args) -> int:
    sections = []
    if cfg.pairs_path.exists():
        pairs = read_pairs(cfg.pairs_path)
        stats = splits.corpus_stats([p for p in pairs if p.status == "accepted"])
        sections.append("== corpus ==")
        sections.append(json.dumps(stats.to_record(), indent=2, sort_keys=True))
        means = splits.per_locale_token_means([p for p in pairs if p.status == "accepted"])
        if means:
            sections.append(splits.render_length_table(means))
    if cfg.registry_path.exists():
        summary = domains_mod.registry_summary(domains_mod.read_registry(cfg.registry_path))
        sections.append("== domains ==")
        sections.append(domains_mod.render_registry_summary(summary))
    agreement_txt = cfg.store_dir / "agreement.txt"
    if agreement_txt.exists():
        sections.append("== agreement ==")
        sections.append(agreement_txt.read_text(encoding="utf-8").rstrip())
    eval_report = cfg.output_dir / "eval" / "report.json"
    if eval_report.exists():
        report = json.loads(eval_report.read_text(encoding="utf-8"))
        sections.append("== evaluation ==")
        sections.append(evaluation.render_eval_table(report))
        if report.get("tiers"):
            sections.append("BLEU by resource tier:")
            for tier, value in report["tiers"].items():
                sections.append(f"  {tier}: {value:.3f}")
    text = "\n".join(sections) + "\n"
    report_path = cfg.store_dir / "report.txt"
    report_path.write_text(text, encoding="utf-8")
    print(text)
    _record_manifest(cfg, "report", [report_path])
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nativqa",
        description="Build and evaluate native QA datasets from seed queries.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="pipeline config file (JSON)")
        if name == "collect":
            cmd.add_argument("--engine", default=None,
                             help="override engine: fixture|live-google|live-bing|live-yahoo")
            cmd.add_argument("--graph", default=None,
                             help="fixture graph file (overrides collection.graph_path)")
        if name == "domains":
            cmd.add_argument("--import", dest="import_path", default=None,
                             help="merge judgments from a registry file")
            cmd.add_argument("--export", dest="export_path", default=None,
                             help="write the registry to a file")
            cmd.add_argument("--adjudicate", action="append", default=[],
                             metavar="DOMAIN=LABEL",
                             help="resolve a three-way split by hand")
        if name == "annotate-serve":
            cmd.add_argument("--serve", default=None, metavar="HOST:PORT",
                             help="bind the annotation HTTP server")
        if name == "finetune-export":
            cmd.add_argument("--seed", type=int, default=None)
    return parser


HANDLERS = {
    "expand": cmd_expand,
    "collect": cmd_collect,
    "domains": cmd_domains,
    "annotate-serve": cmd_annotate_serve,
    "resolve": cmd_resolve,
    "split": cmd_split,
    "export": cmd_export,
    "eval": cmd_eval,
    "finetune-export": cmd_finetune_export,
    "report": cmd_report,
}


def run(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = PipelineConfig.load(args.config)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2
    cfg.store_dir.mkdir(parents=True, exist_ok=True)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    try:
        return HANDLERS[args.subcommand](cfg, args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():  # console entry point
    raise SystemExit(run())


if __name__ == "__main__":
    main()
