mod common;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::Write;
use std::sync::Arc;

use recallfeed::engine::{RetrievalSettings, ReviewSession};
use recallfeed::feedback::{StrategyConfig, StrategyKind};
use recallfeed::service::{CreateRequest, FeedbackRequest, SessionManager, SessionView};
use recallfeed::synthetic::SyntheticCorpus;
use recallfeed::Error;

fn labels(syn: &SyntheticCorpus) -> HashMap<String, BTreeSet<String>> {
    syn.corpus.documents().iter().map(|d| (d.doc_id.clone(), d.topics.clone())).collect()
}

fn snippets(syn: &SyntheticCorpus) -> HashMap<String, String> {
    syn.corpus.documents().iter().map(|d| (format!("{}#0", d.doc_id), d.text())).collect()
}

fn manager(seed: u64) -> (SyntheticCorpus, SessionManager) {
    let (syn, engine) = common::small(seed);
    let m = SessionManager::new(Arc::new(engine), RetrievalSettings::default())
        .unwrap()
        .with_labels(labels(&syn))
        .with_snippets(snippets(&syn));
    (syn, m)
}

fn by_doc(doc: &str, kind: StrategyKind) -> CreateRequest {
    CreateRequest { query_doc_id: Some(doc.into()), query_text: None, strategy: StrategyConfig::new(kind) }
}

fn judge(syn: &SyntheticCorpus, view: &SessionView, topic: &str) -> FeedbackRequest {
    let (accepted, declined) =
        view.batch.iter().map(|b| b.doc_id.clone()).partition(|d| common::topic_of(syn, d) == topic);
    FeedbackRequest { accepted, declined, iteration: None }
}

#[test]
fn create_by_document() {
    let (_, m) = manager(1);
    let v = m.create_session(by_doc("syn01-0002", StrategyKind::Sum)).unwrap();
    assert_eq!(v.batch.len(), 10);
    assert!(v.batch.iter().all(|b| b.doc_id != "syn01-0002" && !b.snippet.is_empty()));
    assert_eq!(v.progress.iteration, 0);
    assert_eq!(v.progress.recall, Some(0.0));
    assert_eq!(v.progress.relevant, Some(59));
    assert_eq!(m.get_session(&v.session_id).unwrap(), v);
}

#[test]
fn create_by_text_uses_text_embedding() {
    let (syn, engine) = common::small(2);
    let text = syn.corpus.get("syn00-0005").unwrap().text();
    let expected = {
        let q = engine.query_for_text(&text).unwrap();
        ReviewSession::start(&engine, q, StrategyConfig::default(), RetrievalSettings::default()).unwrap()
    };
    let m = SessionManager::new(Arc::new(engine), RetrievalSettings::default()).unwrap();
    let v = m
        .create_session(CreateRequest { query_doc_id: None, query_text: Some(text), strategy: StrategyConfig::default() })
        .unwrap();
    let ids: Vec<&str> = v.batch.iter().map(|b| b.doc_id.as_str()).collect();
    let want: Vec<&str> = expected.batch().iter().map(|b| b.doc_id.as_str()).collect();
    assert_eq!(ids, want);
    assert_eq!(v.progress.recall, None);

    let both = CreateRequest { query_doc_id: Some("syn00-0001".into()), query_text: Some("x".into()), strategy: StrategyConfig::default() };
    assert!(matches!(m.create_session(both), Err(Error::InvalidParameter(_))));
    assert!(matches!(m.create_session(by_doc("missing", StrategyKind::None)), Err(Error::UnknownId(_))));
}

#[test]
fn feedback_moves_to_a_disjoint_batch() {
    let (syn, m) = manager(3);
    let v = m.create_session(by_doc("syn02-0010", StrategyKind::Average)).unwrap();
    let first: HashSet<String> = v.batch.iter().map(|b| b.doc_id.clone()).collect();
    let all = FeedbackRequest { accepted: first.iter().cloned().collect(), declined: vec![], iteration: Some(0) };
    let next = m.submit_feedback(&v.session_id, &all).unwrap();
    assert_eq!(next.progress.accepted, 10);
    assert_eq!(next.progress.reviewed, 10);
    assert_eq!(next.iteration, 1);
    assert!(next.batch.iter().all(|b| !first.contains(&b.doc_id)));

    let fb = judge(&syn, &next, "SYN02");
    let third = m.submit_feedback(&v.session_id, &fb).unwrap();
    let trace = m.trace(&v.session_id).unwrap();
    assert_eq!(trace.len(), 2);
    assert_eq!(trace[1].accepted, fb.accepted);
    assert_eq!(trace[1].reviewed_total, 20);
    assert_eq!(third.progress.recall, trace[1].recall);
}

#[test]
fn invalid_and_stale_submissions() {
    let (_, m) = manager(4);
    let v = m.create_session(by_doc("syn00-0000", StrategyKind::Sum)).unwrap();
    let id = v.session_id.clone();
    let batch: Vec<String> = v.batch.iter().map(|b| b.doc_id.clone()).collect();

    let outside = FeedbackRequest { accepted: vec!["syn00-0000".into()], declined: batch[1..].to_vec(), iteration: None };
    assert!(matches!(m.submit_feedback(&id, &outside), Err(Error::InvalidFeedback(_))));
    let partial = FeedbackRequest { accepted: batch[..3].to_vec(), declined: vec![], iteration: None };
    assert!(matches!(m.submit_feedback(&id, &partial), Err(Error::InvalidFeedback(_))));
    let overlap = FeedbackRequest { accepted: batch.clone(), declined: batch[..1].to_vec(), iteration: None };
    assert!(matches!(m.submit_feedback(&id, &overlap), Err(Error::InvalidFeedback(_))));
    // failed submissions leave the session untouched
    assert_eq!(m.get_session(&id).unwrap().batch, v.batch);

    let ok = FeedbackRequest { accepted: batch[..4].to_vec(), declined: batch[4..].to_vec(), iteration: Some(0) };
    m.submit_feedback(&id, &ok).unwrap();
    assert!(matches!(m.submit_feedback(&id, &ok), Err(Error::Conflict(_))));
    let stale = FeedbackRequest { iteration: Some(0), ..judge_all(&m, &id) };
    assert!(matches!(m.submit_feedback(&id, &stale), Err(Error::Conflict(_))));

    assert!(matches!(m.get_session("nope"), Err(Error::UnknownSession(_))));
    assert!(matches!(m.submit_feedback("nope", &ok), Err(Error::UnknownSession(_))));
    m.delete_session(&id).unwrap();
    assert!(matches!(m.trace(&id), Err(Error::UnknownSession(_))));
    assert!(matches!(m.delete_session(&id), Err(Error::UnknownSession(_))));
}

fn judge_all(m: &SessionManager, id: &str) -> FeedbackRequest {
    let v = m.get_session(id).unwrap();
    FeedbackRequest { accepted: v.batch.iter().map(|b| b.doc_id.clone()).collect(), declined: vec![], iteration: None }
}

#[test]
fn sessions_are_isolated() {
    let (syn, m) = manager(5);
    let a = m.create_session(by_doc("syn01-0001", StrategyKind::Sum)).unwrap();
    let b = m.create_session(by_doc("syn01-0001", StrategyKind::Sum)).unwrap();
    assert_ne!(a.session_id, b.session_id);
    assert_eq!(a.batch, b.batch);
    for _ in 0..3 {
        let v = m.get_session(&a.session_id).unwrap();
        m.submit_feedback(&a.session_id, &judge(&syn, &v, "SYN01")).unwrap();
    }
    let b_now = m.get_session(&b.session_id).unwrap();
    assert_eq!(b_now.batch, b.batch);
    assert_eq!(b_now.iteration, 0);
}

#[test]
fn service_and_direct_engine_produce_identical_batches() {
    let (syn, m) = manager(6);
    let strategy = StrategyConfig::new(StrategyKind::Sum).with_amplify(true);
    let v = m
        .create_session(CreateRequest { query_doc_id: Some("syn02-0020".into()), query_text: None, strategy })
        .unwrap();
    let mut service_batches = vec![v.batch.iter().map(|b| b.doc_id.clone()).collect::<Vec<_>>()];
    let mut decisions = Vec::new();
    for _ in 0..6 {
        let cur = m.get_session(&v.session_id).unwrap();
        let fb = judge(&syn, &cur, "SYN02");
        let next = m.submit_feedback(&v.session_id, &fb).unwrap();
        decisions.push(fb);
        service_batches.push(next.batch.iter().map(|b| b.doc_id.clone()).collect());
    }

    let engine = m.engine();
    let query = engine.query_for_doc("syn02-0020").unwrap();
    let mut direct = ReviewSession::start(engine, query, strategy, RetrievalSettings::default()).unwrap();
    let mut direct_batches = vec![direct.batch().iter().map(|b| b.doc_id.clone()).collect::<Vec<_>>()];
    for fb in &decisions {
        direct.submit(engine, &fb.accepted, &fb.declined).unwrap();
        direct_batches.push(direct.batch().iter().map(|b| b.doc_id.clone()).collect());
    }
    assert_eq!(service_batches, direct_batches);
}

#[test]
fn sessions_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("sessions.jsonl");
    let (syn, engine) = common::small(7);
    let engine = Arc::new(engine);
    let open = || {
        SessionManager::new(engine.clone(), RetrievalSettings::default())
            .unwrap()
            .with_labels(labels(&syn))
            .persist_to(&log)
            .unwrap()
    };

    let m = open();
    let keep = m.create_session(by_doc("syn00-0003", StrategyKind::Average)).unwrap().session_id;
    let gone = m.create_session(by_doc("syn01-0003", StrategyKind::None)).unwrap().session_id;
    for _ in 0..3 {
        let v = m.get_session(&keep).unwrap();
        m.submit_feedback(&keep, &judge(&syn, &v, "SYN00")).unwrap();
    }
    m.delete_session(&gone).unwrap();
    let before = m.get_session(&keep).unwrap();
    let trace = m.trace(&keep).unwrap();
    drop(m);

    let m = open();
    assert_eq!(m.session_ids(), vec![keep.clone()]);
    assert_eq!(m.get_session(&keep).unwrap(), before);
    assert_eq!(m.trace(&keep).unwrap(), trace);

    // a torn final record is dropped and the log stays appendable
    drop(m);
    std::fs::OpenOptions::new().append(true).open(&log).unwrap().write_all(b"{\"op\":\"feedb").unwrap();
    let m = open();
    assert_eq!(m.get_session(&keep).unwrap(), before);
    let v = m.get_session(&keep).unwrap();
    m.submit_feedback(&keep, &judge(&syn, &v, "SYN00")).unwrap();
    let after = m.get_session(&keep).unwrap();
    drop(m);
    assert_eq!(open().get_session(&keep).unwrap(), after);
}

#[test]
fn corrupt_log_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("sessions.jsonl");
    std::fs::write(&log, "not json\n{\"op\":\"delete\",\"id\":\"x\"}\n").unwrap();
    let (_, engine) = common::small(8);
    let r = SessionManager::new(Arc::new(engine), RetrievalSettings::default()).unwrap().persist_to(&log);
    assert!(matches!(r, Err(Error::Parse { .. })));
}

#[test]
fn concurrent_sessions() {
    let (syn, m) = manager(9);
    let ids: Vec<String> = (0..4)
        .map(|i| m.create_session(by_doc(&format!("syn0{}-000{i}", i % 3), StrategyKind::Sum)).unwrap().session_id)
        .collect();
    std::thread::scope(|s| {
        for id in &ids {
            let (m, syn) = (&m, &syn);
            s.spawn(move || {
                for _ in 0..4 {
                    let v = m.get_session(id).unwrap();
                    let topic = common::topic_of(syn, v.query.query_doc_id.as_deref().unwrap());
                    m.submit_feedback(id, &judge(syn, &v, &topic)).unwrap();
                }
            });
        }
    });
    for id in &ids {
        assert_eq!(m.get_session(id).unwrap().iteration, 4);
    }
}
