"""Stage-wise pipeline orchestration.

Each stage reads the previous stage's artifacts from the output
directory, writes its own deterministic artifacts plus a manifest (input
and output hashes, config hash, seed, timings), and can be run alone or
through ``run_pipeline`` with identical results.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path

from . import corpus, embeddings, evaluation, keywords, knowledge, report
from .config import PipelineConfig
from .errors import ConfigError, MissingArtifactError
from .models import (
    LstmCaptioner,
    LstmConfig,
    TrainSchedule,
    TransformerCaptioner,
    TransformerConfig,
    generate_caption,
    load_checkpoint,
    train,
)

STAGE_ORDER = (
    "preprocess",
    "keywords",
    "enrich",
    "embed",
    "train",
    "generate",
    "evaluate",
    "report",
)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class StageContext:
    cfg: PipelineConfig
    stage: str
    inputs: dict[str, str]

    def __post_init__(self) -> None:
        self._started = time.time()
        self.dir = self.cfg.stage_dir(self.stage)
        self.dir.mkdir(parents=True, exist_ok=True)

    def track(self, path: Path) -> Path:
        self.inputs[str(path)] = _sha256(path)
        return path

    def finish(self) -> Path:
        outputs = {
            p.name: _sha256(p)
            for p in sorted(self.dir.iterdir())
            if p.is_file() and p.name != "manifest.json"
        }
        manifest = {
            "stage": self.stage,
            "config_hash": self.cfg.config_hash,
            "seed": self.cfg.seed,
            "inputs": self.inputs,
            "outputs": outputs,
            "started_unix": round(self._started, 3),
            "duration_s": round(time.time() - self._started, 3),
        }
        path = self.dir / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _require_artifact(cfg: PipelineConfig, stage: str, name: str, producer: str) -> Path:
    path = cfg.stage_dir(stage) / name
    if not path.exists():
        raise MissingArtifactError(
            f"missing artifact {path}; run the `{producer}` subcommand first"
        )
    return path


def _records_from_json(path: Path) -> list[corpus.CaptionRecord]:
    rows = json.loads(path.read_text(encoding="utf-8"))
    return [
        corpus.CaptionRecord(
            image_id=r["image_id"],
            raw_caption=r["raw_caption"],
            clean_tokens=r["clean_tokens"],
            detector_labels=r.get("detector_labels"),
            flagged=r["flagged"],
        )
        for r in rows
    ]


def _records_to_json(records: list[corpus.CaptionRecord], path: Path) -> None:
    rows = [
        {
            "image_id": r.image_id,
            "raw_caption": r.raw_caption,
            "clean_tokens": r.clean_tokens,
            "detector_labels": r.detector_labels,
            "flagged": r.flagged,
        }
        for r in records
    ]
    path.write_text(json.dumps(rows, indent=0, sort_keys=True) + "\n", encoding="utf-8")


# -- stages ---------------------------------------------------------------


def stage_preprocess(cfg: PipelineConfig) -> Path:
    ctx = StageContext(cfg, "preprocess", {})
    feats = corpus.load_feature_store(ctx.track(cfg.require_path("image_features", "")))
    records = corpus.load_caption_csv(
        ctx.track(cfg.require_path("captions_csv", "")),
        cfg["paths.caption_column"],
        features=feats,
    )
    _records_to_json(records, ctx.dir / "records.json")
    split = corpus.split_dataset(
        [r.image_id for r in records], cfg["split.ratio"], cfg.module_seed("split")
    )
    split.to_json(ctx.dir / "split.json")
    summary = {
        "n_records": len(records),
        "n_flagged": sum(r.flagged for r in records),
        "flagged_ids": sorted(r.image_id for r in records if r.flagged),
    }
    (ctx.dir / "preprocess_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return ctx.finish()


def stage_keywords(cfg: PipelineConfig) -> Path:
    ctx = StageContext(cfg, "keywords", {})
    records = _records_from_json(
        ctx.track(_require_artifact(cfg, "preprocess", "records.json", "preprocess"))
    )
    stop_path = cfg.path("stopwords")
    if stop_path is not None:
        ctx.track(stop_path)
        stopwords = keywords.load_stopwords(stop_path)
    else:
        stopwords = keywords.default_stopwords()
    extracted = keywords.extract_keywords(records, stopwords, top_k=cfg["keywords.top_k"])
    keywords.dump_keywords_csv(extracted, ctx.dir / "keywords.csv")
    return ctx.finish()


def stage_enrich(cfg: PipelineConfig) -> Path:
    ctx = StageContext(cfg, "enrich", {})
    kw_path = ctx.track(_require_artifact(cfg, "keywords", "keywords.csv", "keywords"))
    extracted = keywords.load_keywords_csv(kw_path)
    lexical_path = cfg.require_path("lexical_source", "the enrich stage needs it")
    concept_path = cfg.require_path("concept_source", "the enrich stage needs it")
    lexical = knowledge.LexicalSource.from_json(ctx.track(lexical_path))
    concepts = knowledge.FileConceptSource.from_tsv(ctx.track(concept_path))
    wn_terms = knowledge.expand_synonyms(extracted, lexical, per_caption=cfg["keywords.top_k"])
    seed_terms = {kp.words[0] for phrases in extracted.values() for kp in phrases if kp.words}
    allowed = cfg["knowledge.allowed_relations"]
    cn_terms = knowledge.expand_concepts(
        seed_terms | wn_terms,
        concepts,
        allowed_relations=(
            set(allowed) if allowed is not None else knowledge.DEFAULT_ALLOWED_RELATIONS
        ),
    )
    enriched = knowledge.merge_enriched(set(), wn_terms, cn_terms)
    enriched.to_text(ctx.dir / "enriched.txt")
    (ctx.dir / "enrichment.json").write_text(
        json.dumps(enriched.counts(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return ctx.finish()


def stage_embed(cfg: PipelineConfig) -> Path:
    ctx = StageContext(cfg, "embed", {})
    records = _records_from_json(
        ctx.track(_require_artifact(cfg, "preprocess", "records.json", "preprocess"))
    )
    extra_terms: list[str] = []
    if cfg["kg_enabled"]:
        enriched_path = ctx.track(_require_artifact(cfg, "enrich", "enriched.txt", "enrich"))
        extra_terms = knowledge.EnrichedVocabulary.merged_terms_from_text(enriched_path)
    vocab = corpus.build_vocabulary(
        [r for r in records if not r.flagged], extra_terms, max_seq_len=cfg["max_seq_len"]
    )
    vocab.to_json(ctx.dir / "vocab.json")
    table = embeddings.load_vector_table(ctx.track(cfg.require_path("vector_table", "")))
    if cfg["kg_enabled"]:
        matrix = embeddings.build_matrix(
            vocab,
            table,
            epsilon=cfg["embedding.epsilon"],
            seed=cfg.module_seed("embedding"),
            frozen=cfg["embedding.frozen"],
        )
    else:
        # contextual-provider path: no KG terms, provider-backed rows
        provider = embeddings.MeanWordVectorProvider(table)
        matrix = embeddings.build_matrix_from_provider(
            vocab,
            provider,
            epsilon=cfg["embedding.epsilon"],
            seed=cfg.module_seed("embedding"),
            frozen=cfg["embedding.frozen"],
        )
    embeddings.save_matrix(matrix, vocab, ctx.dir / "embedding.vlcf")
    return ctx.finish()


def _model_config(cfg: PipelineConfig, emb_dim: int):
    m = cfg.raw["model"]
    if m["kind"] == "transformer":
        return TransformerConfig(
            d_model=m["d_model"],
            d_emb=emb_dim,
            layers=m["layers"],
            heads=m["heads"],
            ffn_dim=m["ffn_dim"],
            dropout=m["dropout"],
            regional_patches=m["regional_patches"],
            local_patches=m["local_patches"],
            max_seq_len=cfg["max_seq_len"],
            d_img=m["d_img"],
        )
    return LstmConfig(
        d_img=m["d_img"],
        d_emb=emb_dim,
        hidden=m["hidden"],
        fusion_dense=m["fusion_dense"],
        dropout=m["dropout"],
        batch_size=cfg["training.batch_size"],
        embedding_frozen=cfg["embedding.frozen"],
        max_seq_len=cfg["max_seq_len"],
    )


def stage_train(cfg: PipelineConfig) -> Path:
    ctx = StageContext(cfg, "train", {})
    records = _records_from_json(
        ctx.track(_require_artifact(cfg, "preprocess", "records.json", "preprocess"))
    )
    split = corpus.SplitSpec.from_json(
        ctx.track(_require_artifact(cfg, "preprocess", "split.json", "preprocess"))
    )
    vocab = corpus.Vocabulary.from_json(
        ctx.track(_require_artifact(cfg, "embed", "vocab.json", "embed"))
    )
    emb_path = _require_artifact(cfg, "embed", "embedding.vlcf", "embed")
    ctx.track(emb_path)
    matrix = embeddings.load_matrix(emb_path, vocab)
    matrix.frozen = cfg["embedding.frozen"]
    feats = corpus.load_feature_store(ctx.track(cfg.require_path("image_features", "")))

    kind = cfg["model.kind"]
    model_cfg = _model_config(cfg, matrix.dim)
    seed = cfg.module_seed("model-init")
    model = (
        TransformerCaptioner(model_cfg, matrix, seed=seed)
        if kind == "transformer"
        else LstmCaptioner(model_cfg, matrix, seed=seed)
    )
    schedule = TrainSchedule(
        phase1_lr=cfg["training.phase1_lr"],
        phase1_epochs=cfg["training.phase1_epochs"],
        phase2_lr=cfg["training.phase2_lr"],
        phase2_epochs=cfg["training.phase2_epochs"],
        batch_size=cfg["training.batch_size"],
        seed=cfg.module_seed("training"),
    )
    train_records = [r for r in records if r.image_id in set(split.train_ids)]
    train(model, schedule, train_records, feats, vocab, out_dir=ctx.dir, stem="model")
    return ctx.finish()


def stage_generate(cfg: PipelineConfig) -> Path:
    ctx = StageContext(cfg, "generate", {})
    model_path = cfg.stage_dir("train") / "model.vlcf"
    if not model_path.exists():
        raise MissingArtifactError(
            f"missing trained model {model_path}; run the `train` subcommand first"
        )
    ctx.track(model_path)
    ctx.track(cfg.stage_dir("train") / "model.json")
    model, _ = load_checkpoint(cfg.stage_dir("train") / "model")
    vocab = corpus.Vocabulary.from_json(
        ctx.track(_require_artifact(cfg, "embed", "vocab.json", "embed"))
    )
    split = corpus.SplitSpec.from_json(
        ctx.track(_require_artifact(cfg, "preprocess", "split.json", "preprocess"))
    )
    feats = corpus.load_feature_store(ctx.track(cfg.require_path("image_features", "")))
    which = cfg["generate.split"]
    ids = {
        "train": split.train_ids,
        "test": split.test_ids,
        "all": sorted(split.train_ids + split.test_ids),
    }[which]
    with (ctx.dir / "generated.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image", "caption"])
        for image_id in ids:
            vec = feats.get(image_id)
            if vec is None:
                continue
            tokens = generate_caption(model, vec, vocab, max_len=cfg["generate.max_len"])
            writer.writerow([image_id, " ".join(tokens)])
    return ctx.finish()


def _eval_records_to_csv(rows: list[evaluation.EvalRecord], path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["image", "clip_score", "informativeness", "infometic", "better", "ok", "error"]
        )
        for r in rows:
            writer.writerow(
                [
                    r.image_id,
                    repr(r.clip_score),
                    repr(r.informativeness),
                    repr(r.infometic),
                    "" if r.better is None else r.better,
                    int(r.ok),
                    r.error or "",
                ]
            )


def _eval_records_from_csv(path: Path) -> list[evaluation.EvalRecord]:
    out = []
    with path.open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(
                evaluation.EvalRecord(
                    image_id=row["image"],
                    clip_score=float(row["clip_score"]),
                    informativeness=float(row["informativeness"]),
                    infometic=float(row["infometic"]),
                    better=int(row["better"]) if row["better"] else None,
                    ok=bool(int(row["ok"])),
                    error=row["error"] or None,
                )
            )
    return out


def stage_evaluate(cfg: PipelineConfig) -> Path:
    ctx = StageContext(cfg, "evaluate", {})
    generated_path = cfg.stage_dir("generate") / "generated.csv"
    if not generated_path.exists():
        model_path = cfg.stage_dir("train") / "model.vlcf"
        if not model_path.exists():
            raise MissingArtifactError(
                f"no trained model at {model_path}; run the `train` subcommand first"
            )
        raise MissingArtifactError(
            f"missing artifact {generated_path}; run the `generate` subcommand first"
        )
    ctx.track(generated_path)
    custom_records = corpus.load_caption_csv(generated_path, "caption")

    baseline_path = cfg.path("baseline_csv") or cfg.require_path("captions_csv", "")
    ctx.track(baseline_path)
    baseline_column = cfg["paths.baseline_column"] or cfg["paths.caption_column"]
    baseline_records = corpus.load_caption_csv(baseline_path, baseline_column)
    scored_ids = {r.image_id for r in custom_records}
    baseline_records = [r for r in baseline_records if r.image_id in scored_ids]

    eval_feats_path = cfg.path("eval_image_features") or cfg.require_path("image_features", "")
    ctx.track(eval_feats_path)
    image_feats = corpus.load_feature_store(eval_feats_path)
    table = embeddings.load_vector_table(ctx.track(cfg.require_path("vector_table", "")))
    provider = embeddings.MeanWordVectorProvider(table)
    text_feats = None
    text_feats_path = cfg.path("eval_text_features")
    if text_feats_path is not None:
        text_feats = corpus.load_feature_store(ctx.track(text_feats_path))
        if text_feats.dim != image_feats.dim:
            raise ConfigError(
                f"eval text features dim {text_feats.dim} != image features dim {image_feats.dim}"
            )
    elif provider.dim != image_feats.dim:
        raise ConfigError(
            f"vector table dim {provider.dim} does not match eval image feature "
            f"dim {image_feats.dim}; configure paths.eval_image_features accordingly"
        )
    freq = evaluation.FrequencyTable.from_tsv(
        ctx.track(cfg.require_path("frequency_table", ""))
    )
    eval_cfg = evaluation.EvalConfig(
        mode=cfg["evaluation.mode"],
        alpha=cfg["evaluation.alpha"],
        beta=cfg["evaluation.beta"],
        gamma=cfg["evaluation.gamma"],
        rescale_clip=cfg["evaluation.rescale_clip"],
    )
    custom_scored = evaluation.score_caption_set(
        custom_records, image_feats, provider, freq, eval_cfg, text_feats=text_feats
    )
    baseline_scored = evaluation.score_caption_set(
        baseline_records, image_feats, provider, freq, eval_cfg, text_feats=None
    )
    evaluation.compare_sets(custom_scored, baseline_scored, "infometic")
    _eval_records_to_csv(custom_scored, ctx.dir / "eval_custom.csv")
    _eval_records_to_csv(baseline_scored, ctx.dir / "eval_baseline.csv")

    nouns = {}
    lexical_path = cfg.path("lexical_source")
    if lexical_path is not None:
        lexical = knowledge.LexicalSource.from_json(ctx.track(lexical_path))
        stop_path = cfg.path("stopwords")
        stopwords = (
            keywords.load_stopwords(stop_path) if stop_path else keywords.default_stopwords()
        )
        nouns = {
            "custom": evaluation.noun_coverage(custom_records, lexical, stopwords),
            "baseline": evaluation.noun_coverage(baseline_records, lexical, stopwords),
        }
    (ctx.dir / "nouns.json").write_text(
        json.dumps(nouns, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return ctx.finish()


def stage_report(cfg: PipelineConfig) -> Path:
    ctx = StageContext(cfg, "report", {})
    custom = _eval_records_from_csv(
        ctx.track(_require_artifact(cfg, "evaluate", "eval_custom.csv", "evaluate"))
    )
    baseline = _eval_records_from_csv(
        ctx.track(_require_artifact(cfg, "evaluate", "eval_baseline.csv", "evaluate"))
    )
    nouns = json.loads(
        ctx.track(_require_artifact(cfg, "evaluate", "nouns.json", "evaluate")).read_text(
            encoding="utf-8"
        )
    )
    noun_counts = None
    if nouns:
        noun_counts = {
            "custom": nouns["custom"]["unique_nouns"],
            "baseline": nouns["baseline"]["unique_nouns"],
        }
    inputs = report.ReportInputs(
        custom=custom,
        baseline=baseline,
        custom_name="custom",
        baseline_name="baseline",
        metadata={
            "dataset": cfg["dataset"],
            "kg_enabled": cfg["kg_enabled"],
            "backbone": cfg["backbone"],
            "model": cfg["model.kind"],
            "seed": cfg.seed,
            "config_hash": cfg.config_hash,
            "frequency_corpus": str(cfg.require_path("frequency_table", "").name),
        },
        noun_counts=noun_counts,
    )
    report.emit_report(inputs, ctx.dir)
    return ctx.finish()


_STAGES = {
    "preprocess": stage_preprocess,
    "keywords": stage_keywords,
    "enrich": stage_enrich,
    "embed": stage_embed,
    "train": stage_train,
    "generate": stage_generate,
    "evaluate": stage_evaluate,
    "report": stage_report,
}


def run_stage(cfg: PipelineConfig, stage: str) -> Path:
    if stage not in _STAGES:
        raise ConfigError(f"unknown stage {stage!r}")
    return _STAGES[stage](cfg)


def run_pipeline(cfg: PipelineConfig) -> list[Path]:
    """All stages in order; equivalent to running them one by one."""
    manifests = []
    for stage in STAGE_ORDER:
        if stage in ("keywords", "enrich") and not cfg["kg_enabled"]:
            continue
        manifests.append(run_stage(cfg, stage))
    return manifests


def collect_manifests(out_dir: str | Path) -> list[dict]:
    """Artifact lineage: every stage manifest under ``out_dir``."""
    out = []
    for stage in STAGE_ORDER:
        path = Path(out_dir) / stage / "manifest.json"
        if path.exists():
            out.append(json.loads(path.read_text(encoding="utf-8")))
    return out
