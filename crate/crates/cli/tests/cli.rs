use std::collections::BTreeMap;
use std::path::Path;

use recallfeed::dense::{read_embeddings, write_embeddings, EmbeddingRecord};
use recallfeed::synthetic::{SyntheticConfig, SyntheticCorpus};
use recallfeed_cli::run_with_output;
use recallfeed_cli::workspace::Manifest;

fn run(ws: &Path, args: &[&str]) -> (i32, String) {
    // SAFETY: every test thread writes the same value before logging starts
    unsafe { std::env::set_var("RUST_LOG", "warn") };
    let mut out = Vec::new();
    let argv = ["recallfeed", "--workspace", ws.to_str().unwrap()].into_iter().chain(args.iter().copied());
    let code = run_with_output(argv, &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn ok(ws: &Path, args: &[&str]) -> String {
    let (code, out) = run(ws, args);
    assert_eq!(code, 0, "{args:?}");
    out
}

fn manifest(ws: &Path) -> Manifest {
    serde_json::from_str(&std::fs::read_to_string(ws.join("manifest.json")).unwrap()).unwrap()
}

/// Every file in the workspace, by name.
fn files(ws: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(ws)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn without_seconds(csv: &str) -> Vec<Vec<String>> {
    csv.lines().map(|l| l.split(',').enumerate().filter(|(i, _)| *i != 6).map(|(_, f)| f.to_string()).collect()).collect()
}

const SYNTH: &[&str] = &["synth", "--topics", "3", "--docs-per-topic", "60", "--paragraphs-per-doc", "2", "--seed", "4"];

fn pipeline(ws: &Path) -> (String, String, String) {
    ok(ws, SYNTH);
    ok(ws, &["index", "tfidf", "--granularity", "document"]);
    ok(ws, &["index", "tfidf", "--granularity", "paragraph"]);
    ok(ws, &["index", "dense", "--hnsw-m", "8", "--ef-construction", "50"]);
    let search = ok(ws, &["search", "--query-id", "syn01-0042", "--backend", "dvs", "--rank", "first", "--k", "10"]);
    let evaluate = ok(ws, &["evaluate", "--k-min", "10", "--k-max", "50", "--k-step", "20"]);
    let simulate = ok(
        ws,
        &["simulate", "--strategy", "none,sum,average,keyword-expansion", "--amplify", "false,true", "--sample", "3", "--target-recall", "0.8", "--batch", "10"],
    );
    (search, evaluate, simulate)
}

#[test]
fn pipeline_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (sa, ea, ma) = pipeline(a.path());
    let (sb, eb, mb) = pipeline(b.path());

    assert_eq!(files(a.path()), files(b.path()));
    assert_eq!(sa, sb);
    assert_eq!(ea, eb);
    // everything but the timing column
    assert_eq!(without_seconds(&ma), without_seconds(&mb));

    let rows: Vec<&str> = sa.lines().collect();
    assert_eq!(rows[0], "rank,doc_id,score,paragraphs,best_unit");
    assert_eq!(rows.len(), 11);
    assert!(rows[1..].iter().all(|r| !r.contains("syn01-0042,")));
    assert_eq!(ea.lines().count(), 1 + 3 * 2 * 3);
    // none collapses its flags: 1 + 3 × 2 rows
    assert_eq!(ma.lines().count(), 1 + 7);
    assert!(ma.lines().skip(1).all(|l| l.ends_with(",9,0")), "{ma}");

    let m = manifest(a.path());
    let keys: Vec<&str> = m.artifacts.keys().map(String::as_str).collect();
    assert_eq!(keys, ["corpus", "embeddings", "hnsw", "splits", "tfidf-document", "tfidf-paragraph"]);
    for art in m.artifacts.values() {
        assert!(art.file.contains(&art.sha256[..16]));
    }
}

#[test]
fn ingest_sample_embed_and_scoped_indexes() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    let syn = SyntheticCorpus::generate(&SyntheticConfig { topics: 6, docs_per_topic: 40, paragraphs_per_doc: 2, ..Default::default() }).unwrap();
    let input = dir.path().join("corpus.jsonl");
    syn.corpus.write_jsonl(std::fs::File::create(&input).unwrap()).unwrap();

    ok(&ws, &["ingest", input.to_str().unwrap(), "--format", "jsonl"]);
    ok(&ws, &["sample", "--per-topic", "20", "--unrelated-topics", "3", "--seed", "1"]);
    ok(&ws, &["embed", "--dim", "64", "--seed", "9", "--split", "test"]);
    ok(&ws, &["index", "tfidf", "--granularity", "document", "--split", "test"]);
    let m = manifest(&ws);
    assert_eq!(m.artifacts["embeddings@test"].params["paragraphs"], 40);
    assert_eq!(m.artifacts["embeddings@test"].params["truncated"], 0);
    assert_eq!(m.artifacts["tfidf-document@test"].params["units"], 20);
    let split_doc = {
        let bytes = std::fs::read(ws.join(&m.artifacts["embeddings@test"].file)).unwrap();
        let (dim, records) = read_embeddings(&bytes[..]).unwrap();
        assert_eq!(dim, 64);
        recallfeed::corpus::parent_of(&records[0].id).to_string()
    };

    let out = ok(&ws, &["search", "--query-id", &split_doc, "--backend", "exact", "--split", "test", "--k", "50"]);
    assert_eq!(out.lines().count(), 1 + 19);
    let out = ok(&ws, &["search", "--query-id", &split_doc, "--backend", "mlt-doc", "--split", "test", "--k", "5"]);
    assert!(out.lines().count() > 1);

    let csv = ws.join("sim.csv");
    let sessions = ws.join("sessions.json");
    let stdout = ok(
        &ws,
        &["simulate", "--split", "test", "--strategy", "rocchio", "--target-recall", "0.5", "--output", csv.to_str().unwrap(), "--sessions", sessions.to_str().unwrap()],
    );
    assert!(stdout.is_empty());
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 2);
    let records: Vec<serde_json::Value> = serde_json::from_str(&std::fs::read_to_string(&sessions).unwrap()).unwrap();
    assert_eq!(records.len(), 20);
}

#[test]
fn dense_index_imports_external_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path();
    ok(ws, &["synth", "--topics", "2", "--docs-per-topic", "30", "--dim", "16"]);
    let records: Vec<EmbeddingRecord> = (0..60)
        .map(|i| EmbeddingRecord { id: format!("syn{:02}-{:04}#0", i / 30, i % 30), vector: (0..16).map(|j| ((i * 16 + j) as f32).sin()).collect() })
        .collect();
    let path = dir.path().join("external.emb");
    write_embeddings(std::fs::File::create(&path).unwrap(), 16, &records).unwrap();
    ok(ws, &["index", "dense", "--embeddings", path.to_str().unwrap(), "--hnsw-m", "4"]);
    let m = manifest(ws);
    assert_eq!(m.artifacts["embeddings"].params["embedder"], "external");
    assert_eq!(m.artifacts["embeddings"].sha256, recallfeed_cli::workspace::sha256_hex(&std::fs::read(&path).unwrap()));
    assert_eq!(m.artifacts["hnsw"].params["nodes"], 60);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path();
    assert_eq!(run(ws, &["simulate", "--no-such-flag"]).0, 1);
    assert_eq!(run(ws, &["frobnicate"]).0, 1);
    assert_eq!(run(ws, &["search"]).0, 1);
    assert_eq!(run(ws, &["search", "--query-id", "x", "--rank", "sideways"]).0, 1);
    assert_eq!(run(ws, &["simulate", "--strategy", "magic"]).0, 1);
    assert_eq!(run(ws, &["simulate", "--target-recall", "1.5"]).0, 1);
    assert_eq!(run(ws, &["index", "dense", "--hnsw-m", "1"]).0, 1);
    assert_eq!(run(ws, &["synth", "--topics", "0"]).0, 1);

    // missing artifacts and bad data
    assert_eq!(run(ws, &["search", "--query-id", "x"]).0, 2);
    assert_eq!(run(ws, &["simulate"]).0, 2);
    let bad = ws.join("bad.jsonl");
    std::fs::write(&bad, "{\"id\": \"a\"\n").unwrap();
    assert_eq!(run(ws, &["ingest", bad.to_str().unwrap()]).0, 2);
    assert_eq!(run(ws, &["ingest", ws.join("missing.jsonl").to_str().unwrap()]).0, 2);

    ok(ws, &["synth", "--topics", "2", "--docs-per-topic", "20"]);
    assert_eq!(run(ws, &["search", "--query-id", "nope", "--backend", "exact"]).0, 2);
    assert_eq!(run(ws, &["simulate", "--strategy", "keyword-expansion"]).0, 2);
    // a tampered artifact no longer matches its manifest hash
    let m = manifest(ws);
    std::fs::write(ws.join(&m.artifacts["embeddings"].file), b"EMB1").unwrap();
    assert_eq!(run(ws, &["search", "--query-id", "syn00-0001", "--backend", "exact"]).0, 2);
}

#[test]
fn help_documents_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path();
    assert_eq!(run(ws, &["--help"]).0, 0);
    for sub in [
        &["ingest"][..],
        &["sample"],
        &["index", "tfidf"],
        &["index", "dense"],
        &["embed"],
        &["search"],
        &["evaluate"],
        &["simulate"],
        &["serve"],
        &["synth"],
    ] {
        let args: Vec<&str> = sub.iter().copied().chain(["--help"]).collect();
        assert_eq!(run(ws, &args).0, 0, "{sub:?}");
    }
    // nothing was written by help or usage errors
    assert!(!ws.join("manifest.json").exists());
}
