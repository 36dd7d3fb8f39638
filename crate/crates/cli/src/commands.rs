use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use serde_json::json;

use untangle::calibrate::{calibrate as run_calibration, AnnotatedCorpus, CalibrationResult, DocAnnotation, ThetaGrid};
use untangle::embed::{embed_segments, Embedding};
use untangle::evaluate::{compare, BootstrapConfig, Estimate};
use untangle::feedback::{
    apply_signposts, performance_report, requeue_regions, InteractionRecord, SignpostThresholds,
};
use untangle::metrics::{entanglement_index, mean};
use untangle::model::{read_corpus, validate_corpus, write_corpus, Document};
use untangle::pipeline::{
    disentangle_corpus, AnchorAwareGenerator, BaselineChunking, ContextProfile, DisentangleConfig,
    DisentanglementOutcome, DomainTaxonomy, HeaderGenerator, KnowledgeObject, PipelineContext, TemplateGenerator,
};
use untangle::segment::{recursive_segment, similarity_profile};
use untangle::store::{KnowledgeStore, MetadataFilter};
use untangle::synth::{generate_corpus, CorpusSpec, LabeledQuery};
use untangle::Error;

use crate::config::{
    embedder, pick, positive, require, unit_interval, DEFAULT_BETA, DEFAULT_K, DEFAULT_L_MIN,
    DEFAULT_THETA,
};
use crate::output::{beside, emit, sibling, write_atomic, write_csv, write_jsonl};
use crate::{CliError, EmbedderArg, Globals};

fn load_corpus(flag: Option<PathBuf>, file: &Option<PathBuf>) -> Result<Vec<Document>, CliError> {
    let path = require(pick(flag, file), "--corpus")?;
    let docs = read_corpus(&path)?;
    validate_corpus(docs).map_err(|mut errs| CliError::Domain(errs.swap_remove(0)))
}

fn embed_corpus(docs: &[Document], emb: &dyn untangle::Embedder) -> Result<Vec<Vec<Embedding>>, CliError> {
    docs.iter()
        .map(|d| {
            embed_segments(d, emb).map_err(|e| {
                log::error!("embedding document {}", d.id);
                CliError::from(e)
            })
        })
        .collect()
}

fn baseline(window: Option<usize>, overlap: Option<usize>, g: &Globals) -> BaselineChunking {
    let d = BaselineChunking::default();
    BaselineChunking {
        window_tokens: pick(window, &g.config.window_tokens).unwrap_or(d.window_tokens),
        overlap_tokens: pick(overlap, &g.config.overlap_tokens).unwrap_or(d.overlap_tokens),
    }
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    #[arg(long)]
    topics: Option<usize>,
    #[arg(long)]
    docs: Option<usize>,
    #[arg(long)]
    segments: Option<usize>,
    #[arg(long)]
    run_length: Option<usize>,
    /// Cosine similarity between topic anchors.
    #[arg(long)]
    mu: Option<f64>,
    /// Per-text noise scale.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tokens_per_segment: Option<usize>,
    /// Number of labeled queries written next to the corpus.
    #[arg(long, default_value_t = 100)]
    queries: usize,
    #[arg(long, default_value_t = 6)]
    query_words: usize,
    /// Corpus path; annotations.jsonl, embedder.json, taxonomy.json and
    /// queries.jsonl go to the same directory.
    #[arg(short, long, default_value = "corpus.jsonl")]
    output: PathBuf,
}

pub fn gen_corpus(a: GenCorpusArgs, g: &Globals) -> Result<(), CliError> {
    let d = CorpusSpec::default();
    let spec = CorpusSpec {
        num_docs: a.docs.unwrap_or(d.num_docs),
        topics: a.topics.unwrap_or(d.topics),
        segments_per_doc: a.segments.unwrap_or(d.segments_per_doc),
        run_length: a.run_length.unwrap_or(d.run_length),
        cross_anchor_sim: a.mu.unwrap_or(d.cross_anchor_sim),
        noise_scale: a.sigma.unwrap_or(d.noise_scale),
        dim: a.dim.unwrap_or(d.dim),
        seed: pick(a.seed, &g.config.seed).unwrap_or(d.seed),
        tokens_per_segment: a.tokens_per_segment.unwrap_or(d.tokens_per_segment),
        ..d
    };
    let corpus = generate_corpus(&spec)?;
    write_atomic(&a.output, |w| Ok(write_corpus(w, &corpus.documents)?))?;
    write_jsonl(&beside(&a.output, "annotations.jsonl"), &corpus.annotations)?;
    emit(Some(&beside(&a.output, "embedder.json")), &corpus.embedder, true)?;
    emit(Some(&beside(&a.output, "taxonomy.json")), &corpus.taxonomy, true)?;
    let queries = corpus.queries(a.queries, a.query_words, spec.seed);
    write_jsonl(&beside(&a.output, "queries.jsonl"), &queries)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Held-out corpus; its annotations are looked up in --annotations.
    #[arg(long)]
    holdout: Option<PathBuf>,
    #[command(flatten)]
    embedder: EmbedderArg,
    #[arg(long, default_value_t = 0.50)]
    theta_min: f64,
    #[arg(long, default_value_t = 0.90)]
    theta_max: f64,
    #[arg(long, default_value_t = 0.02)]
    step: f64,
    /// Proceed even when annotator agreement fails the gate.
    #[arg(long)]
    force: bool,
    #[arg(short, long, default_value = "calibration.json")]
    output: PathBuf,
    /// Sweep table; defaults to `<output stem>.sweep.csv`.
    #[arg(long)]
    sweep_csv: Option<PathBuf>,
}

fn annotations_for(all: &[DocAnnotation], docs: &[Document]) -> Vec<DocAnnotation> {
    let ids: BTreeSet<&str> = docs.iter().map(|d| d.id.as_str()).collect();
    all.iter().filter(|a| ids.contains(a.doc_id.as_str())).cloned().collect()
}

pub fn calibrate(a: CalibrateArgs, g: &Globals) -> Result<(), CliError> {
    let docs = load_corpus(a.corpus, &g.config.corpus)?;
    let ann_path = require(pick(a.annotations, &g.config.annotations), "--annotations")?;
    let all: Vec<DocAnnotation> = untangle::io::read_jsonl(&ann_path)?;
    let emb = embedder(a.embedder.embedder, &g.config)?;
    let vectors = embed_corpus(&docs, emb.as_dyn())?;
    let anns = annotations_for(&all, &docs);
    let grid = ThetaGrid {
        min: a.theta_min,
        max: a.theta_max,
        step: a.step,
    };

    let holdout = match pick(a.holdout, &g.config.holdout) {
        Some(p) => {
            let hdocs = read_corpus(&p)?;
            let hvec = embed_corpus(&hdocs, emb.as_dyn())?;
            let hann = annotations_for(&all, &hdocs);
            Some((hdocs, hvec, hann))
        }
        None => None,
    };
    let holdout_set = holdout.as_ref().map(|(d, v, an)| AnnotatedCorpus {
        docs: d,
        vectors: v,
        annotations: an,
    });
    let result = run_calibration(
        &AnnotatedCorpus {
            docs: &docs,
            vectors: &vectors,
            annotations: &anns,
        },
        holdout_set.as_ref(),
        &grid,
        a.force,
    )?;
    let csv_path = a.sweep_csv.unwrap_or_else(|| sibling(&a.output, ".sweep.csv"));
    write_csv(&csv_path, &result.sweep)?;
    emit(Some(&a.output), &result, g.no_timestamp)
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[command(flatten)]
    embedder: EmbedderArg,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    lmin: Option<usize>,
    #[arg(short, long, default_value = "fragments.jsonl")]
    output: PathBuf,
    /// Per-gap similarity profile as CSV (doc_id, gap, sim).
    #[arg(long)]
    profile_csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct ProfileRow<'a> {
    doc_id: &'a str,
    gap: usize,
    sim: f64,
}

pub fn segment(a: SegmentArgs, g: &Globals) -> Result<(), CliError> {
    let docs = load_corpus(a.corpus, &g.config.corpus)?;
    let emb = embedder(a.embedder.embedder, &g.config)?;
    let theta = unit_interval("theta", pick(a.theta, &g.config.theta).unwrap_or(DEFAULT_THETA))?;
    let l_min = positive("lmin", pick(a.lmin, &g.config.l_min).unwrap_or(DEFAULT_L_MIN))?;
    let vectors = embed_corpus(&docs, emb.as_dyn())?;
    let mut fragments = Vec::new();
    let mut profile = Vec::new();
    for (doc, v) in docs.iter().zip(&vectors) {
        fragments.extend(recursive_segment(doc, v, theta, l_min)?);
        if a.profile_csv.is_some() {
            let p = similarity_profile(v)?;
            profile.extend(p.0.iter().enumerate().map(|(i, sim)| ProfileRow {
                doc_id: &doc.id,
                gap: i + 1,
                sim: *sim,
            }));
        }
    }
    if let Some(path) = &a.profile_csv {
        write_csv(path, &profile)?;
    }
    write_jsonl(&a.output, &fragments)
}

#[derive(Debug, Args)]
pub struct DisentangleArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[command(flatten)]
    embedder: EmbedderArg,
    /// Context profile JSON applied to every document.
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    /// Calibration result supplying theta and alpha when not given directly.
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lmin: Option<usize>,
    /// Weight of the context loss; overrides the profile's value.
    #[arg(long)]
    lambda: Option<f64>,
    /// `template`, or `anchor-aware` (requires an anchor embedder).
    #[arg(long, default_value = "template")]
    generator: String,
    /// Baseline window size in tokens, used for EI before restructuring.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    overlap: Option<usize>,
    #[arg(short, long, default_value = "kos.jsonl")]
    output: PathBuf,
    /// Per-document outcomes; defaults to `<output stem>.outcomes.jsonl`.
    #[arg(long)]
    outcomes: Option<PathBuf>,
}

pub fn disentangle(a: DisentangleArgs, g: &Globals) -> Result<(), CliError> {
    let docs = load_corpus(a.corpus, &g.config.corpus)?;
    let emb = embedder(a.embedder.embedder, &g.config)?;
    let calibration: Option<CalibrationResult> = match pick(a.calibration, &g.config.calibration) {
        Some(p) => Some(untangle::io::read_json(p)?),
        None => None,
    };
    let theta = pick(a.theta, &g.config.theta)
        .or(calibration.as_ref().map(|c| c.theta_star))
        .unwrap_or(DEFAULT_THETA);
    let alpha = require(
        pick(a.alpha, &g.config.alpha).or(calibration.as_ref().and_then(|c| c.alpha)),
        "--alpha",
    )?;
    let mut cfg = DisentangleConfig::new(unit_interval("theta", theta)?, unit_interval("alpha", alpha)?);
    cfg.beta = unit_interval("beta", pick(a.beta, &g.config.beta).unwrap_or(DEFAULT_BETA))?;
    cfg.l_min = positive("lmin", pick(a.lmin, &g.config.l_min).unwrap_or(DEFAULT_L_MIN))?;
    cfg.baseline = baseline(a.window, a.overlap, g);

    let mut psi = match pick(a.profile, &g.config.profile) {
        Some(p) => ContextProfile::load(p)?,
        None => ContextProfile::default(),
    };
    psi.lambda = pick(a.lambda, &g.config.lambda).unwrap_or(psi.lambda);
    if psi.lambda < 0.0 {
        return Err(Error::InvalidConfig(format!("lambda {} is negative", psi.lambda)).into());
    }
    let taxonomy = match pick(a.taxonomy, &g.config.taxonomy) {
        Some(p) => Some(DomainTaxonomy::load(p)?),
        None => None,
    };
    let anchor_aware;
    let generator: &dyn HeaderGenerator = match a.generator.as_str() {
        "template" => &TemplateGenerator,
        "anchor-aware" => {
            let cfg = emb
                .anchor_config()
                .ok_or_else(|| CliError::Usage("--generator anchor-aware needs an anchor: embedder".into()))?;
            anchor_aware = AnchorAwareGenerator::new(cfg);
            &anchor_aware
        }
        other => return Err(CliError::Usage(format!("unknown generator {other:?}"))),
    };

    let vectors = embed_corpus(&docs, emb.as_dyn())?;
    let ctx = PipelineContext {
        embedder: emb.as_dyn(),
        generator,
        taxonomy: taxonomy.as_ref(),
    };
    let outcomes = disentangle_corpus(&docs, &vectors, &psi, &cfg, &ctx)?;
    let kos: Vec<&KnowledgeObject> = outcomes.iter().flat_map(|o| &o.knowledge_objects).collect();
    write_jsonl(&a.output, &kos)?;
    let outcomes_path = a.outcomes.unwrap_or_else(|| sibling(&a.output, ".outcomes.jsonl"));
    write_jsonl(&outcomes_path, &outcomes)
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Knowledge object files (JSONL), indexed in the order given.
    #[arg(long = "kos", required = true)]
    kos: Vec<PathBuf>,
    /// Existing store to extend.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Defaults to the --store path, or store.jsonl.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

pub fn index(a: IndexArgs, g: &Globals) -> Result<(), CliError> {
    let base = pick(a.store, &g.config.store);
    let mut store = match &base {
        Some(p) if p.exists() => KnowledgeStore::load(p)?,
        _ => KnowledgeStore::default(),
    };
    for path in &a.kos {
        let objects: Vec<KnowledgeObject> = untangle::io::read_jsonl(path)?;
        store.insert(objects)?;
    }
    let out = a.output.or(base).unwrap_or_else(|| PathBuf::from("store.jsonl"));
    write_atomic(&out, |w| Ok(store.write_to(w)?))
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    /// Metadata constraint `key=value`; repeat to AND several.
    #[arg(long = "filter")]
    filters: Vec<String>,
    /// Query text, embedded with --embedder.
    #[arg(long, conflicts_with = "query_vector", required_unless_present = "query_vector")]
    query_text: Option<String>,
    /// JSON file holding the query vector as an array of numbers.
    #[arg(long)]
    query_vector: Option<PathBuf>,
    #[command(flatten)]
    embedder: EmbedderArg,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Serialize)]
struct Hit<'a> {
    rank: usize,
    id: &'a str,
    similarity: f64,
    source_doc_id: &'a str,
    span: (usize, usize),
    metadata: &'a std::collections::BTreeMap<String, String>,
    primary_text: &'a str,
}

pub fn query(a: QueryArgs, g: &Globals) -> Result<(), CliError> {
    let path = require(pick(a.store, &g.config.store), "--store")?;
    let store = KnowledgeStore::load(&path)?;
    let k = positive("k", pick(a.k, &g.config.k).unwrap_or(DEFAULT_K))?;
    let pairs = a
        .filters
        .iter()
        .map(|f| MetadataFilter::parse_constraint(f))
        .collect::<Result<Vec<_>, _>>()?;
    let filter = MetadataFilter::new(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
    let q = match (&a.query_text, &a.query_vector) {
        (Some(text), _) => embedder(a.embedder.embedder.clone(), &g.config)?.as_dyn().embed(text)?,
        (None, Some(p)) => Embedding::new(untangle::io::read_json(p)?)?,
        (None, None) => return Err(CliError::Usage("give --query-text or --query-vector".into())),
    };
    let hits: Vec<Hit> = store
        .query(&q, k, Some(&filter))?
        .into_iter()
        .enumerate()
        .map(|(i, (ko, sim))| Hit {
            rank: i + 1,
            id: &ko.id,
            similarity: sim,
            source_doc_id: &ko.provenance.source_doc_id,
            span: ko.provenance.span,
            metadata: &ko.metadata,
            primary_text: &ko.primary_text,
        })
        .collect();
    emit(
        a.output.as_deref(),
        json!({"k": k, "filter": filter.0, "results": hits}),
        g.no_timestamp,
    )
}

#[derive(Debug, Args)]
pub struct EiArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[command(flatten)]
    embedder: EmbedderArg,
    #[arg(long)]
    alpha: Option<f64>,
    /// Entangled pairs as CSV (doc_id, i, j, sim).
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Serialize)]
struct PairRow<'a> {
    doc_id: &'a str,
    i: usize,
    j: usize,
    sim: f64,
}

pub fn ei(a: EiArgs, g: &Globals) -> Result<(), CliError> {
    let docs = load_corpus(a.corpus, &g.config.corpus)?;
    let emb = embedder(a.embedder.embedder, &g.config)?;
    let alpha = unit_interval("alpha", require(pick(a.alpha, &g.config.alpha), "--alpha")?)?;
    let mut reports = Vec::new();
    let mut unlabeled = Vec::new();
    let mut rows = Vec::new();
    for doc in &docs {
        let Some(topics) = doc.topics() else {
            unlabeled.push(doc.id.clone());
            continue;
        };
        let vectors = embed_segments(doc, emb.as_dyn())?;
        let r = entanglement_index(&topics, &vectors, alpha)?;
        rows.extend(r.entangled_pairs.iter().map(|p| PairRow {
            doc_id: &doc.id,
            i: p.i,
            j: p.j,
            sim: p.similarity,
        }));
        reports.push(json!({
            "doc_id": doc.id,
            "cross_topic_pair_count": r.cross_topic_pair_count,
            "entangled_pair_count": r.entangled_pair_count,
            "ei": r.ei,
            "pure": r.pure,
        }));
    }
    if let Some(p) = &a.pairs {
        write_csv(p, &rows)?;
    }
    let eis: Vec<f64> = reports.iter().filter_map(|r| r["ei"].as_f64()).collect();
    emit(
        a.output.as_deref(),
        json!({"alpha": alpha, "ei": mean(&eis), "documents": reports, "unlabeled": unlabeled}),
        g.no_timestamp,
    )
}

#[derive(Debug, Args)]
pub struct FeedbackArgs {
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    log: Option<PathBuf>,
    #[command(flatten)]
    embedder: EmbedderArg,
    /// Entanglement threshold for near-miss HEADER flags.
    #[arg(long)]
    alpha: Option<f64>,
    /// Update the store's usage counters and signposts in place, and emit flags.
    #[arg(long)]
    apply: bool,
    /// Emit the four performance metrics.
    #[arg(long)]
    report: bool,
    /// Emit the re-disentanglement queue.
    #[arg(long)]
    queue: bool,
    #[arg(long, default_value_t = 3)]
    queue_threshold: usize,
    #[arg(long, default_value_t = 20)]
    r_min: u64,
    #[arg(long, default_value_t = 0.5)]
    success_floor: f64,
    #[arg(long, default_value_t = 0.2)]
    h_rate: f64,
    #[arg(long, default_value_t = 10)]
    h_min: u64,
    #[arg(long, default_value_t = 0.05)]
    nearmiss_delta: f64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

pub fn feedback(a: FeedbackArgs, g: &Globals) -> Result<(), CliError> {
    if !(a.apply || a.report || a.queue) {
        return Err(CliError::Usage("choose at least one of --apply, --report, --queue".into()));
    }
    let log_path = require(pick(a.log, &g.config.log), "--log")?;
    let log: Vec<InteractionRecord> = untangle::io::read_jsonl(&log_path)?;
    for rec in &log {
        rec.validate()?;
    }
    let mut out = serde_json::Map::new();
    if a.report {
        out.insert("report".into(), serde_json::to_value(performance_report(&log)).map_err(Error::from)?);
    }
    if a.apply || a.queue {
        let store_path = require(pick(a.store, &g.config.store), "--store")?;
        let mut store = KnowledgeStore::load(&store_path)?;
        let emb = embedder(a.embedder.embedder, &g.config)?;
        let alpha = unit_interval("alpha", require(pick(a.alpha, &g.config.alpha), "--alpha")?)?;
        let thresholds = SignpostThresholds {
            r_min: a.r_min,
            success_floor: a.success_floor,
            h_rate: a.h_rate,
            h_min: a.h_min,
            nearmiss_delta: a.nearmiss_delta,
            alpha,
        };
        let run = apply_signposts(&mut store, &log, &thresholds, emb.as_dyn())?;
        if a.queue {
            let queue = requeue_regions(&store, &run.flags, a.queue_threshold);
            out.insert("queue".into(), serde_json::to_value(queue).map_err(Error::from)?);
        }
        if a.apply {
            write_atomic(&store_path, |w| Ok(store.write_to(w)?))?;
            out.insert("signposts".into(), serde_json::to_value(&run).map_err(Error::from)?);
        }
    }
    emit(a.output.as_deref(), out, g.no_timestamp)
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[command(flatten)]
    embedder: EmbedderArg,
    /// Outcomes written by `disentangle`.
    #[arg(long)]
    outcomes: Option<PathBuf>,
    /// Labeled queries (JSONL of {"text", "topic"}).
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Calibration result to include in the summary.
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    overlap: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    resamples: usize,
    /// Bootstrap seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long, default_value = "report.json")]
    output: PathBuf,
    /// Defaults to `<output stem>.csv`.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct ReportRow {
    metric: String,
    value: Option<f64>,
    ci_lo: Option<f64>,
    ci_hi: Option<f64>,
    n: Option<usize>,
}

impl ReportRow {
    fn estimate(metric: &str, e: Option<Estimate>) -> Self {
        ReportRow {
            metric: metric.into(),
            value: e.map(|e| e.value),
            ci_lo: e.map(|e| e.ci_lo),
            ci_hi: e.map(|e| e.ci_hi),
            n: e.map(|e| e.n),
        }
    }

    fn scalar(metric: &str, value: Option<f64>) -> Self {
        ReportRow {
            metric: metric.into(),
            value,
            ci_lo: None,
            ci_hi: None,
            n: None,
        }
    }
}

pub fn report(a: ReportArgs, g: &Globals) -> Result<(), CliError> {
    let docs = load_corpus(a.corpus, &g.config.corpus)?;
    let emb = embedder(a.embedder.embedder, &g.config)?;
    let outcomes_path = require(pick(a.outcomes, &g.config.outcomes), "--outcomes")?;
    let outcomes: Vec<DisentanglementOutcome> = untangle::io::read_jsonl(&outcomes_path)?;
    let queries: Vec<LabeledQuery> = match pick(a.queries, &g.config.queries) {
        Some(p) => untangle::io::read_jsonl(p)?,
        None => Vec::new(),
    };
    let calibration: Option<CalibrationResult> = match pick(a.calibration, &g.config.calibration) {
        Some(p) => Some(untangle::io::read_json(p)?),
        None => None,
    };
    let k = positive("k", pick(a.k, &g.config.k).unwrap_or(DEFAULT_K))?;
    let bootstrap = BootstrapConfig {
        resamples: a.resamples,
        seed: pick(a.seed, &g.config.seed).unwrap_or(BootstrapConfig::default().seed),
        ..BootstrapConfig::default()
    };
    let outcomes = align_outcomes(&docs, outcomes, &outcomes_path)?;
    let cmp = compare(&docs, &outcomes, &queries, emb.as_dyn(), &baseline(a.window, a.overlap, g), k, &bootstrap)?;

    let precision_gain = match (cmp.precision_before, cmp.precision_after) {
        (Some(b), Some(a)) => Some(a.value - b.value),
        _ => None,
    };
    let mut rows: Vec<ReportRow> = cmp.rows().into_iter().map(|(m, e)| ReportRow::estimate(m, e)).collect();
    rows.push(ReportRow::scalar("ei_relative_reduction", cmp.ei_relative_reduction()));
    rows.push(ReportRow::scalar("precision_gain", precision_gain));
    for (m, v) in [
        ("documents", cmp.documents),
        ("baseline_chunks", cmp.baseline_chunks),
        ("knowledge_objects", cmp.knowledge_objects),
        ("complete_documents", cmp.complete_documents),
        ("faithful_documents", cmp.faithful_documents),
    ] {
        rows.push(ReportRow::scalar(m, Some(v as f64)));
    }
    if let Some(c) = &calibration {
        rows.push(ReportRow::scalar("theta_star", Some(c.theta_star)));
        rows.push(ReportRow::scalar("f1_at_theta_star", Some(c.f1_at_theta_star)));
        rows.push(ReportRow::scalar("kappa", Some(c.kappa)));
        rows.push(ReportRow::scalar("alpha", c.alpha));
        rows.push(ReportRow::scalar("holdout_f1", c.holdout_f1));
    }
    let csv_path = a.csv.unwrap_or_else(|| sibling(&a.output, ".csv"));
    write_csv(&csv_path, &rows)?;
    emit(
        Some(&a.output),
        json!({
            "k": k,
            "bootstrap": bootstrap,
            "comparison": cmp,
            "ei_relative_reduction": cmp.ei_relative_reduction(),
            "precision_gain": precision_gain,
            "calibration": calibration,
        }),
        g.no_timestamp,
    )
}

/// Reorders outcomes to follow the corpus and checks nothing is missing.
fn align_outcomes(
    docs: &[Document],
    outcomes: Vec<DisentanglementOutcome>,
    path: &Path,
) -> Result<Vec<DisentanglementOutcome>, CliError> {
    let mut by_id: std::collections::HashMap<String, DisentanglementOutcome> =
        outcomes.into_iter().map(|o| (o.doc_id.clone(), o)).collect();
    docs.iter()
        .map(|d| {
            by_id.remove(&d.id).ok_or_else(|| {
                Error::InvalidConfig(format!("{} has no outcome for document {}", path.display(), d.id)).into()
            })
        })
        .collect()
}
