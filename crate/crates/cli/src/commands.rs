use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use recallfeed::corpus::*;
use recallfeed::dense::*;
use recallfeed::engine::{BackendKind, Engine, RetrievalSettings, FETCH_FACTOR};
use recallfeed::feedback::{StrategyConfig, StrategyKind};
use recallfeed::par::Execution;
use recallfeed::ranking::*;
use recallfeed::service::SessionManager;
use recallfeed::simulator::{run_experiment, write_experiment_csv, ExperimentConfig};
use recallfeed::synthetic::{SyntheticConfig, SyntheticCorpus};
use recallfeed::tfidf::{Granularity, MltParams, TfidfIndex};
use serde_json::json;

use crate::args::*;
use crate::workspace::{key, Workspace};
use crate::Failure;

const CORPUS: &str = "corpus";
const SPLITS: &str = "splits";
const EMBEDDINGS: &str = "embeddings";
const HNSW: &str = "hnsw";

fn tfidf_kind(g: Granularity) -> &'static str {
    match g {
        Granularity::Document => "tfidf-document",
        Granularity::Paragraph => "tfidf-paragraph",
    }
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), Failure> {
    let mut ws = Workspace::open(&cli.workspace)?;
    match &cli.command {
        Command::Ingest(a) => ingest(&mut ws, a),
        Command::Sample(a) => sample(&mut ws, a),
        Command::Index(IndexCommand::Tfidf(a)) => index_tfidf(&mut ws, a),
        Command::Index(IndexCommand::Dense(a)) => index_dense(&mut ws, a),
        Command::Embed(a) => embed(&mut ws, a),
        Command::Search(a) => search(&ws, a, out),
        Command::Evaluate(a) => evaluate(&ws, a, out),
        Command::Simulate(a) => simulate(&ws, a, out),
        Command::Serve(a) => serve(&ws, a),
        Command::Synth(a) => synth(&mut ws, a),
    }
}

fn usage(check: recallfeed::Result<()>) -> Result<(), Failure> {
    check.map_err(|e| Failure::Usage(e.to_string()))
}

fn read_file(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn corpus_bytes(corpus: &CorpusStore) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    corpus.write_jsonl(&mut buf)?;
    Ok(buf)
}

fn load_corpus(ws: &Workspace) -> Result<CorpusStore, Failure> {
    let bytes = ws.read(CORPUS, None, "ingest")?;
    Ok(ingest_corpus(&bytes[..], InputFormat::Jsonl)?)
}

fn load_split(ws: &Workspace, name: SplitName) -> Result<SplitAssignment, Failure> {
    let bytes = ws.read(SPLITS, None, "sample")?;
    let set: SplitSet = serde_json::from_slice(&bytes).map_err(|e| Failure::data(format!("splits: {e}")))?;
    set.get(name).cloned().ok_or_else(|| Failure::data(format!("the workspace splits have no `{name}` split")))
}

/// The documents in scope: all of them, or one split's.
fn scoped_corpus(ws: &Workspace, split: Option<SplitName>) -> Result<CorpusStore, Failure> {
    let corpus = load_corpus(ws)?;
    match split {
        None => Ok(corpus),
        Some(name) => {
            let assignment = load_split(ws, name)?;
            Ok(corpus.subset(assignment.documents().map(|(d, _)| d))?)
        }
    }
}

fn input_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(input)
                .map_err(|e| Failure::data(format!("{}: {e}", input.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(input.clone());
        }
    }
    Ok(files)
}

fn ingest(ws: &mut Workspace, a: &IngestArgs) -> Result<(), Failure> {
    let format = match a.format {
        Format::Jsonl => InputFormat::Jsonl,
        Format::Rcv1Xml => InputFormat::Rcv1Xml,
    };
    let mut corpus = CorpusStore::new();
    let files = input_files(&a.inputs)?;
    for path in &files {
        let file = File::open(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        let n = ingest_into(&mut corpus, BufReader::new(file), format, &path.display().to_string())?;
        log::info!("{}: {n} documents", path.display());
    }
    if corpus.is_empty() {
        return Err(Failure::data("no documents found in the inputs"));
    }
    let bytes = corpus_bytes(&corpus)?;
    ws.store(CORPUS, "jsonl", &bytes, json!({ "documents": corpus.len(), "files": files.len() }))?;
    Ok(())
}

fn sample(ws: &mut Workspace, a: &SampleArgs) -> Result<(), Failure> {
    let hierarchy = match &a.hierarchy {
        Some(path) => {
            let file = File::open(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
            parse_topic_hierarchy(BufReader::new(file))?
        }
        None => Default::default(),
    };
    let config = SampleConfig {
        per_topic: a.per_topic,
        seed: a.seed,
        unrelated_topics: a.unrelated_topics,
        topics: a.topics.clone(),
        ambiguous_parent: a.ambiguous_parent.clone(),
        ambiguous_count: a.ambiguous_count,
        ambiguous_topics: a.ambiguous_topics.clone(),
        hierarchy,
        allow_short_topics: a.allow_short_topics,
    };
    if config.per_topic == 0 {
        return Err(Failure::Usage("--per-topic must be at least 1".into()));
    }
    let corpus = load_corpus(ws)?;
    let set = sample_splits(&corpus, &config)?;
    let mut text = set.to_json()?;
    text.push('\n');
    let sizes: serde_json::Map<String, serde_json::Value> =
        set.splits.iter().map(|s| (s.split.to_string(), json!(s.doc_count()))).collect();
    ws.store(SPLITS, "json", text.as_bytes(), json!({ "seed": a.seed, "per_topic": a.per_topic, "documents": sizes }))?;
    Ok(())
}

fn paragraphs(corpus: &CorpusStore, group_size: usize) -> Result<Vec<Paragraph>, Failure> {
    let mut out = Vec::new();
    for doc in corpus.documents() {
        out.extend(build_paragraphs(doc, group_size)?.paragraphs);
    }
    Ok(out)
}

fn embed(ws: &mut Workspace, a: &EmbedArgs) -> Result<(), Failure> {
    if a.dim < 8 || a.group_size == 0 || a.word_limit == 0 {
        return Err(Failure::Usage("--dim must be at least 8; --group-size and --word-limit must be positive".into()));
    }
    let corpus = scoped_corpus(ws, a.split)?;
    let paras = paragraphs(&corpus, a.group_size)?;
    let mut truncated = 0;
    let mut records = Vec::with_capacity(paras.len());
    for p in &paras {
        let (text, cut) = p.embedding_text(a.word_limit);
        truncated += usize::from(cut);
        let vector = hash_embed(&text, a.dim, a.seed).map_err(|e| Failure::data(format!("{}: {e}", p.para_id)))?;
        records.push(EmbeddingRecord { id: p.para_id.clone(), vector: vector.0 });
    }
    let mut bytes = Vec::new();
    write_embeddings(&mut bytes, a.dim, &records)?;
    let params = json!({
        "embedder": "hash",
        "dim": a.dim,
        "seed": a.seed,
        "group_size": a.group_size,
        "word_limit": a.word_limit,
        "paragraphs": records.len(),
        "truncated": truncated,
    });
    ws.store(&key(EMBEDDINGS, a.split.map(|s| s.to_string()).as_deref()), "emb", &bytes, params)?;
    Ok(())
}

fn index_tfidf(ws: &mut Workspace, a: &TfidfArgs) -> Result<(), Failure> {
    if a.group_size == 0 {
        return Err(Failure::Usage("--group-size must be positive".into()));
    }
    let granularity = match a.granularity {
        GranularityArg::Document => Granularity::Document,
        GranularityArg::Paragraph => Granularity::Paragraph,
    };
    let corpus = scoped_corpus(ws, a.split)?;
    let stop = StopWords::english();
    let mut index = TfidfIndex::new(granularity);
    match granularity {
        Granularity::Document => {
            for d in corpus.documents() {
                index.add(&d.doc_id, &d.doc_id, &preprocess(&d.text(), Pipeline::Tfidf, &stop).tokens)?;
            }
        }
        Granularity::Paragraph => {
            for p in paragraphs(&corpus, a.group_size)? {
                index.add(&p.para_id, &p.parent_id, &preprocess(&p.text, Pipeline::Tfidf, &stop).tokens)?;
            }
        }
    }
    let mut bytes = Vec::new();
    index.write_to(&mut bytes)?;
    let params = json!({ "units": index.len(), "vocabulary": index.vocabulary_len(), "group_size": a.group_size });
    ws.store(&key(tfidf_kind(granularity), a.split.map(|s| s.to_string()).as_deref()), "tfx", &bytes, params)?;
    Ok(())
}

fn vector_store(dim: usize, records: &[EmbeddingRecord], docs: Option<&HashSet<String>>) -> Result<VectorStore, Failure> {
    let mut store = VectorStore::new(dim);
    for r in records {
        let doc = parent_of(&r.id);
        if docs.is_none_or(|d| d.contains(doc)) {
            store.insert(&r.id, doc, &r.vector)?;
        }
    }
    if store.is_empty() {
        return Err(Failure::data("no embeddings in scope"));
    }
    Ok(store)
}

fn split_docs(ws: &Workspace, split: Option<SplitName>) -> Result<Option<HashSet<String>>, Failure> {
    match split {
        None => Ok(None),
        Some(name) => Ok(Some(load_split(ws, name)?.documents().map(|(d, _)| d.to_string()).collect())),
    }
}

fn index_dense(ws: &mut Workspace, a: &DenseArgs) -> Result<(), Failure> {
    let params = HnswParams { m: a.hnsw_m, ef_construction: a.ef_construction, ef_search: a.ef_search, level_seed: a.seed };
    usage(params.validate())?;
    let bytes = match &a.embeddings {
        Some(path) => {
            let bytes = read_file(path)?;
            let (dim, records) = read_embeddings(&bytes[..])?;
            ws.store(EMBEDDINGS, "emb", &bytes, json!({ "embedder": "external", "dim": dim, "paragraphs": records.len(), "source": path }))?;
            bytes
        }
        None => ws.read(EMBEDDINGS, a.split.map(|s| s.to_string()).as_deref(), "embed")?,
    };
    let (dim, records) = read_embeddings(&bytes[..])?;
    let store = vector_store(dim, &records, split_docs(ws, a.split)?.as_ref())?;
    let index = HnswIndex::build(store, params)?;
    let mut out = Vec::new();
    index.write_to(&mut out)?;
    let meta = json!({ "m": a.hnsw_m, "ef_construction": a.ef_construction, "ef_search": a.ef_search, "seed": a.seed, "nodes": index.len() });
    ws.store(&key(HNSW, a.split.map(|s| s.to_string()).as_deref()), "hns", &out, meta)?;
    Ok(())
}

fn load_tfidf(ws: &Workspace, g: Granularity, split: Option<&str>) -> Result<TfidfIndex, Failure> {
    let hint = match g {
        Granularity::Document => "index tfidf --granularity document",
        Granularity::Paragraph => "index tfidf --granularity paragraph",
    };
    let bytes = ws.read(tfidf_kind(g), split, hint)?;
    Ok(TfidfIndex::read_from(&bytes[..])?)
}

fn load_hnsw(ws: &Workspace, split: Option<&str>) -> Result<HnswIndex, Failure> {
    let bytes = ws.read(HNSW, split, "index dense")?;
    Ok(HnswIndex::read_from(&bytes[..])?)
}

fn load_store(ws: &Workspace, split: Option<SplitName>) -> Result<VectorStore, Failure> {
    let name = split.map(|s| s.to_string());
    let bytes = ws.read(EMBEDDINGS, name.as_deref(), "embed")?;
    let (dim, records) = read_embeddings(&bytes[..])?;
    vector_store(dim, &records, split_docs(ws, split)?.as_ref())
}

fn mlt_params(a: &MltArgs) -> Result<MltParams, Failure> {
    let p = MltParams { min_df: a.min_df, max_df: a.max_df, max_query_terms: a.max_query_terms };
    usage(p.validate())?;
    Ok(p)
}

/// Owned search backends, borrowed as [`QbdBackend`]s.
enum Loaded {
    Mlt(TfidfIndex, MltParams),
    Hnsw(HnswIndex, usize),
    Exact(VectorStore),
}

impl Loaded {
    fn load(ws: &Workspace, backend: SearchBackend, split: Option<SplitName>, mlt: &MltArgs, ef_search: usize) -> Result<Self, Failure> {
        let name = split.map(|s| s.to_string());
        Ok(match backend {
            SearchBackend::MltDoc => Loaded::Mlt(load_tfidf(ws, Granularity::Document, name.as_deref())?, mlt_params(mlt)?),
            SearchBackend::MltPara => Loaded::Mlt(load_tfidf(ws, Granularity::Paragraph, name.as_deref())?, mlt_params(mlt)?),
            SearchBackend::Dvs => Loaded::Hnsw(load_hnsw(ws, name.as_deref())?, ef_search),
            SearchBackend::Exact => Loaded::Exact(load_store(ws, split)?),
        })
    }

    fn backend(&self) -> Box<dyn QbdBackend + '_> {
        match self {
            Loaded::Mlt(ix, p) => Box::new(MltBackend::new(ix, *p)),
            Loaded::Hnsw(ix, ef) => Box::new(DenseBackend::hnsw(ix, *ef)),
            Loaded::Exact(store) => Box::new(DenseBackend::exact(store)),
        }
    }
}

/// Resolves a document or paragraph id to (query unit, query document).
fn resolve_query(backend: &dyn QbdBackend, id: &str) -> Result<(String, String), Failure> {
    if let Some(first) = backend.query_units(id).into_iter().next() {
        return Ok((first, id.to_string()));
    }
    let parent = parent_of(id);
    let units = backend.query_units(parent);
    if units.iter().any(|u| u == id) {
        return Ok((id.to_string(), parent.to_string()));
    }
    // document-level indexes answer paragraph ids with the whole document
    if units.len() == 1 && units[0] == parent {
        return Ok((parent.to_string(), parent.to_string()));
    }
    Err(Failure::data(format!("`{id}` is not in the {} index", backend.name())))
}

fn search(ws: &Workspace, a: &SearchArgs, out: &mut dyn Write) -> Result<(), Failure> {
    if a.k == 0 {
        return Err(Failure::Usage("--k must be positive".into()));
    }
    let loaded = Loaded::load(ws, a.backend, a.split, &a.mlt, a.ef_search)?;
    let backend = loaded.backend();
    let (unit, doc) = resolve_query(backend.as_ref(), &a.query_id)?;
    let mut depth = a.k * FETCH_FACTOR;
    let ranking = loop {
        let hits = backend.retrieve(&unit, &doc, depth)?;
        let ranking = aggregate(&hits, a.rank);
        if ranking.len() >= a.k || hits.len() < depth {
            break ranking;
        }
        depth *= 2;
    };
    writeln!(out, "rank,doc_id,score,paragraphs,best_unit")?;
    for (i, d) in ranking.0.iter().take(a.k).enumerate() {
        writeln!(out, "{},{},{:.6},{},{}", i + 1, d.doc_id, d.score, d.count, d.paragraphs.first().map_or("", String::as_str))?;
    }
    Ok(())
}

fn output(path: &Option<PathBuf>, out: &mut dyn Write, write: impl FnOnce(&mut dyn Write) -> recallfeed::Result<()>) -> Result<(), Failure> {
    match path {
        Some(p) => {
            let mut buf = Vec::new();
            write(&mut buf)?;
            std::fs::write(p, buf).map_err(|e| Failure::data(format!("{}: {e}", p.display())))?;
            log::info!("wrote {}", p.display());
        }
        None => write(out)?,
    }
    Ok(())
}

fn evaluate(ws: &Workspace, a: &EvaluateArgs, out: &mut dyn Write) -> Result<(), Failure> {
    if a.k_min == 0 || a.k_step == 0 || a.k_max < a.k_min {
        return Err(Failure::Usage("need 0 < --k-min <= --k-max and --k-step > 0".into()));
    }
    let k_grid: Vec<usize> = (a.k_min..=a.k_max).step_by(a.k_step).collect();
    let split = load_split(ws, a.split)?;
    let mut rows = Vec::new();
    for &b in &a.backend {
        let loaded = Loaded::load(ws, b, Some(a.split), &a.mlt, a.ef_search)?;
        let backend = loaded.backend();
        for &mode in &a.rank {
            let config = QbdConfig {
                rank_mode: mode,
                query_policy: a.query_policy,
                k_grid: k_grid.clone(),
                seed: a.seed,
                per_query: a.per_query,
                exec: Execution::Parallel,
            };
            let report = evaluate_qbd(&split, backend.as_ref(), &config)?;
            if let Some(last) = report.reports.last() {
                log::info!("{} {mode}: {} queries, recall@{} {:.4}", backend.name(), report.queries, last.k, last.recall);
            }
            rows.extend(report.curve);
        }
    }
    output(&a.output, out, |w| write_curve_csv(w, &rows, true))
}

fn strategies(a: &SimulateArgs) -> Vec<StrategyConfig> {
    let mut out: Vec<StrategyConfig> = Vec::new();
    for &kind in &a.strategy {
        for &cumulative in &a.cumulative {
            for &amplify in &a.amplify {
                let c = StrategyConfig {
                    kind,
                    cumulative,
                    amplify,
                    alpha: a.alpha,
                    beta: a.beta,
                    keywords_per_doc: a.keywords_per_doc,
                    average_mode: a.average_mode.into(),
                };
                // flags that cannot change a strategy's behaviour collapse
                let c = if kind == StrategyKind::None { StrategyConfig::new(kind) } else { c };
                if !out.contains(&c) {
                    out.push(c);
                }
            }
        }
    }
    out
}

fn embed_seed(ws: &Workspace, split: Option<&str>) -> u64 {
    ws.find(EMBEDDINGS, split).and_then(|(_, a)| a.params.get("seed")).and_then(|s| s.as_u64()).unwrap_or(0)
}

fn build_engine(ws: &Workspace, split: Option<SplitName>, backend: BackendKind, keywords: bool) -> Result<Engine, Failure> {
    let name = split.map(|s| s.to_string());
    let engine = match backend {
        BackendKind::Hnsw => Engine::with_hnsw(load_hnsw(ws, name.as_deref())?),
        BackendKind::Exact => Engine::new(load_store(ws, split)?),
    };
    let engine = engine.with_embed_seed(embed_seed(ws, name.as_deref()));
    Ok(match ws.find(tfidf_kind(Granularity::Document), name.as_deref()) {
        Some(_) => engine.with_tfidf(load_tfidf(ws, Granularity::Document, name.as_deref())?),
        None if keywords => {
            return Err(Failure::data("keyword expansion needs a document TF-IDF index; run `recallfeed index tfidf --granularity document` first"))
        }
        None => engine,
    })
}

fn simulate(ws: &Workspace, a: &SimulateArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let settings = RetrievalSettings {
        batch_size: a.batch,
        rank_mode: a.rank,
        backend: a.backend,
        ef_search: a.ef_search,
        exec: Execution::Sequential,
    };
    usage(settings.validate())?;
    let strategies = strategies(a);
    for s in &strategies {
        usage(s.validate())?;
    }
    if !(a.target_recall > 0.0 && a.target_recall <= 1.0) || a.max_iterations == 0 || a.sample == Some(0) {
        return Err(Failure::Usage("need 0 < --target-recall <= 1, --max-iterations > 0 and --sample > 0".into()));
    }
    let keywords = strategies.iter().any(|s| s.kind == StrategyKind::KeywordExpansion);
    let split = load_split(ws, a.split)?;
    let engine = build_engine(ws, Some(a.split), a.backend, keywords)?;
    let config = ExperimentConfig {
        strategies,
        settings,
        target_recall: a.target_recall,
        max_iterations: a.max_iterations,
        query_policy: a.query_policy,
        sample: a.sample,
        seed: a.seed,
        exec: Execution::Parallel,
    };
    let report = run_experiment(&engine, &split, &config)?;
    for row in &report.rows {
        if row.failures > 0 {
            log::warn!("{}: {} of {} sessions did not reach the target", row.strategy, row.failures, row.sessions + row.failures);
        }
    }
    if let Some(path) = &a.sessions {
        let text = serde_json::to_string_pretty(&report.sessions).map_err(|e| Failure::data(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    }
    output(&a.output, out, |w| write_experiment_csv(w, &report.rows, true))
}

fn serve(ws: &Workspace, a: &ServeArgs) -> Result<(), Failure> {
    let settings = RetrievalSettings { batch_size: a.batch, rank_mode: a.rank, backend: a.backend, ef_search: a.ef_search, exec: Execution::Parallel };
    usage(settings.validate())?;
    let name = a.split.map(|s| s.to_string());
    let engine = build_engine(ws, a.split, a.backend, false)?;
    let corpus = scoped_corpus(ws, a.split)?;
    let group_size = ws
        .find(EMBEDDINGS, name.as_deref())
        .and_then(|(_, art)| art.params.get("group_size"))
        .and_then(|g| g.as_u64())
        .map_or(DEFAULT_GROUP_SIZE, |g| g as usize);
    let snippets: HashMap<String, String> = paragraphs(&corpus, group_size)?.into_iter().map(|p| (p.para_id, p.text)).collect();
    let labels: HashMap<String, BTreeSet<String>> = match a.split {
        Some(s) => load_split(ws, s)?.labels().into_iter().map(|(d, t)| (d, BTreeSet::from([t]))).collect(),
        None => corpus.documents().iter().map(|d| (d.doc_id.clone(), d.topics.clone())).collect(),
    };
    let log_path = a.session_log.clone().unwrap_or_else(|| ws.root().join("sessions.log"));
    let manager = SessionManager::new(Arc::new(engine), settings)?.with_snippets(snippets).with_labels(labels).persist_to(&log_path)?;
    log::info!("{} sessions restored from {}", manager.session_ids().len(), log_path.display());
    crate::server::serve_blocking(Arc::new(manager), a.addr)
}

fn synth(ws: &mut Workspace, a: &SynthArgs) -> Result<(), Failure> {
    let config = SyntheticConfig {
        topics: a.topics,
        docs_per_topic: a.docs_per_topic,
        paragraphs_per_doc: a.paragraphs_per_doc,
        dim: a.dim,
        shared_weight: a.shared_weight,
        doc_noise: a.doc_noise,
        paragraph_noise: a.paragraph_noise,
        topic_vocabulary: a.topic_vocabulary,
        shared_vocabulary: a.shared_vocabulary,
        topic_word_rate: a.topic_word_rate,
        seed: a.seed,
    };
    let syn = SyntheticCorpus::generate(&config).map_err(|e| Failure::Usage(e.to_string()))?;
    let params = serde_json::to_value(&config).map_err(|e| Failure::data(e.to_string()))?;
    ws.store(CORPUS, "jsonl", &corpus_bytes(&syn.corpus)?, params.clone())?;

    let mut bytes = Vec::new();
    write_embeddings(&mut bytes, config.dim, &syn.embeddings)?;
    let mut emb = params.clone();
    emb["embedder"] = json!("synthetic");
    emb["group_size"] = json!(DEFAULT_GROUP_SIZE);
    ws.store(EMBEDDINGS, "emb", &bytes, emb)?;

    let set = SplitSet { seed: config.seed, per_topic: config.docs_per_topic, splits: vec![syn.assignment(SplitName::Test)] };
    let mut text = set.to_json()?;
    text.push('\n');
    ws.store(SPLITS, "json", text.as_bytes(), params)?;
    Ok(())
}
