//! Pseudo-relevance-feedback review sessions and iteration-count experiments.
//!
//! A simulated reviewer accepts exactly the documents sharing the query's
//! topic. A session runs until the accepted share of relevant documents
//! reaches the target recall.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::SplitAssignment;
use crate::engine::{Engine, RetrievalSettings, ReviewSession};
use crate::error::{Error, Result};
use crate::feedback::{AverageMode, StrategyConfig, StrategyKind};
use crate::hashing::derive_seed;
use crate::par::{self, Execution};
use crate::ranking::QueryPolicy;

pub const DEFAULT_TARGET_RECALL: f64 = 0.8;
pub const DEFAULT_MAX_ITERATIONS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    /// Paragraph whose embedding is the initial query.
    pub query: String,
    pub strategy: StrategyConfig,
    pub settings: RetrievalSettings,
    pub target_recall: f64,
    pub max_iterations: usize,
}

impl SessionConfig {
    pub fn new(query: impl Into<String>, strategy: StrategyConfig) -> Self {
        SessionConfig {
            query: query.into(),
            strategy,
            settings: RetrievalSettings::default(),
            target_recall: DEFAULT_TARGET_RECALL,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_recall > 0.0 && self.target_recall <= 1.0) {
            return Err(Error::invalid("target recall must be in (0, 1]"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("iteration cap must be at least 1"));
        }
        self.settings.validate()?;
        self.strategy.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerminatedBy {
    Target,
    Cap,
    Exhausted,
}

impl fmt::Display for TerminatedBy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TerminatedBy::Target => "target",
            TerminatedBy::Cap => "cap",
            TerminatedBy::Exhausted => "exhausted",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub query: String,
    pub iterations: usize,
    /// Recall after each iteration.
    pub recall_trace: Vec<f64>,
    /// Documents reviewed after each iteration.
    pub reviewed_trace: Vec<usize>,
    pub relevant: usize,
    /// Retrieval plus feedback time of each iteration.
    pub seconds: Vec<f64>,
    pub terminated_by: TerminatedBy,
}

impl SimulationResult {
    pub fn final_recall(&self) -> f64 {
        self.recall_trace.last().copied().unwrap_or(0.0)
    }

    pub fn mean_seconds(&self) -> f64 {
        if self.seconds.is_empty() {
            0.0
        } else {
            self.seconds.iter().sum::<f64>() / self.seconds.len() as f64
        }
    }
}

/// Smallest possible iteration count: every batch full of relevant documents.
pub fn iteration_lower_bound(target_recall: f64, relevant: usize, batch_size: usize) -> usize {
    let needed = (target_recall * relevant as f64 - 1e-9).ceil().max(0.0) as usize;
    needed.div_ceil(batch_size)
}

/// Runs one session. `relevant` holds the documents the simulated reviewer
/// accepts; the query's own document is ignored.
pub fn run_session(engine: &Engine, config: &SessionConfig, relevant: &HashSet<String>) -> Result<SimulationResult> {
    config.validate()?;
    let query = engine.query_for_unit(&config.query)?;
    let own = query.own_doc.clone();
    let relevant_count = relevant.iter().filter(|d| Some(d.as_str()) != own.as_deref()).count();
    if relevant_count == 0 {
        return Err(Error::Insufficient(format!("no relevant documents for query {}", config.query)));
    }
    let mut session = ReviewSession::prepare(engine, query, config.strategy, config.settings)?;

    let started = Instant::now();
    session.refill(engine)?;
    let mut retrieval = started.elapsed().as_secs_f64();

    let mut found = 0usize;
    let mut recall_trace = Vec::new();
    let mut reviewed_trace = Vec::new();
    let mut seconds = Vec::new();
    let terminated_by = loop {
        if found as f64 / relevant_count as f64 >= config.target_recall {
            break TerminatedBy::Target;
        }
        if recall_trace.len() >= config.max_iterations {
            break TerminatedBy::Cap;
        }
        if session.batch().is_empty() {
            break TerminatedBy::Exhausted;
        }
        let (accepted, declined): (Vec<String>, Vec<String>) =
            session.batch().iter().map(|b| b.doc_id.clone()).partition(|d| relevant.contains(d));
        found += accepted.len();

        let t = Instant::now();
        session.judge(engine, &accepted, &declined)?;
        seconds.push(retrieval + t.elapsed().as_secs_f64());

        recall_trace.push(found as f64 / relevant_count as f64);
        reviewed_trace.push(session.reviewed_count());

        let t = Instant::now();
        session.refill(engine)?;
        retrieval = t.elapsed().as_secs_f64();
    };
    Ok(SimulationResult {
        query: config.query.clone(),
        iterations: recall_trace.len(),
        recall_trace,
        reviewed_trace,
        relevant: relevant_count,
        seconds,
        terminated_by,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub strategies: Vec<StrategyConfig>,
    pub settings: RetrievalSettings,
    pub target_recall: f64,
    pub max_iterations: usize,
    pub query_policy: QueryPolicy,
    /// Queries per topic; all documents when `None`.
    pub sample: Option<usize>,
    pub seed: u64,
    /// Execution mode across sessions.
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            strategies: vec![StrategyConfig::default()],
            settings: RetrievalSettings::default(),
            target_recall: DEFAULT_TARGET_RECALL,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            query_policy: QueryPolicy::FirstParagraph,
            sample: None,
            seed: 0,
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub strategy: String,
    pub cumulative: bool,
    pub amplify: bool,
    pub split: String,
    pub mean_iterations: f64,
    pub std_iterations: f64,
    pub mean_seconds_per_iteration: f64,
    pub sessions: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub strategy: StrategyConfig,
    pub query_doc: String,
    pub topic: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<SimulationResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ExperimentRow>,
    pub sessions: Vec<SessionRecord>,
}

/// Mean and sample standard deviation; zero deviation below two values.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Review-effort reduction of `method_mean` relative to `baseline_mean`, in
/// percent of the method's mean.
pub fn reduction(baseline_mean: f64, method_mean: f64) -> Result<f64> {
    if method_mean.is_nan() || method_mean <= 0.0 {
        return Err(Error::invalid("method mean must be positive"));
    }
    Ok(100.0 * (baseline_mean - method_mean) / method_mean)
}

fn strategy_column(s: &StrategyConfig) -> String {
    if s.kind == StrategyKind::Average && s.cumulative && s.average_mode == AverageMode::Global {
        "average-global".to_string()
    } else {
        s.kind.to_string()
    }
}

/// Query documents per topic with their query paragraph.
fn pick_queries(engine: &Engine, split: &SplitAssignment, config: &ExperimentConfig) -> Result<Vec<(String, String, String)>> {
    let store = engine.store();
    let mut out = Vec::new();
    for (topic, docs) in &split.topics {
        let mut chosen: Vec<&String> = docs.iter().collect();
        if let Some(n) = config.sample {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &format!("queries/{topic}")));
            chosen.shuffle(&mut rng);
            chosen.truncate(n);
            let order: BTreeMap<&String, usize> = docs.iter().enumerate().map(|(i, d)| (d, i)).collect();
            chosen.sort_by_key(|d| order[d]);
        }
        for doc in chosen {
            let d = store.doc_index(doc).ok_or_else(|| Error::UnknownId(doc.clone()))?;
            let units: Vec<String> = store.units_of(d).iter().map(|&u| store.unit_id(u).to_string()).collect();
            let unit = config.query_policy.pick(doc, &units, config.seed).expect("stored documents have units");
            out.push((doc.clone(), topic.clone(), unit.clone()));
        }
    }
    Ok(out)
}

/// Runs every strategy over every query document of `split`.
pub fn run_experiment(engine: &Engine, split: &SplitAssignment, config: &ExperimentConfig) -> Result<ExperimentReport> {
    if config.strategies.is_empty() {
        return Err(Error::invalid("no strategies given"));
    }
    let queries = pick_queries(engine, split, config)?;
    if queries.is_empty() {
        return Err(Error::Insufficient("split has no query documents".into()));
    }
    let members: BTreeMap<&str, HashSet<String>> =
        split.topics.iter().map(|(t, ids)| (t.as_str(), ids.iter().cloned().collect())).collect();

    let mut rows = Vec::new();
    let mut sessions = Vec::new();
    for strategy in &config.strategies {
        let results = par::map(config.exec, &queries, |(doc, topic, unit)| {
            let session = SessionConfig {
                query: unit.clone(),
                strategy: *strategy,
                settings: config.settings,
                target_recall: config.target_recall,
                max_iterations: config.max_iterations,
            };
            let outcome = run_session(engine, &session, &members[topic.as_str()]);
            let (result, failure) = match outcome {
                Ok(r) if r.terminated_by == TerminatedBy::Target => (Some(r), None),
                Ok(r) => {
                    let why = format!("terminated by {} at recall {:.4}", r.terminated_by, r.final_recall());
                    (Some(r), Some(why))
                }
                Err(e) => (None, Some(e.to_string())),
            };
            SessionRecord { strategy: *strategy, query_doc: doc.clone(), topic: topic.clone(), result, failure }
        });
        for r in results.iter().filter(|r| r.failure.is_some()) {
            log::warn!("{} session for {} failed: {}", strategy.label(), r.query_doc, r.failure.as_deref().unwrap_or(""));
        }
        let ok: Vec<&SimulationResult> =
            results.iter().filter(|r| r.failure.is_none()).filter_map(|r| r.result.as_ref()).collect();
        let iterations: Vec<f64> = ok.iter().map(|r| r.iterations as f64).collect();
        let (mean, sd) = mean_sd(&iterations);
        let total_iters: usize = ok.iter().map(|r| r.seconds.len()).sum();
        let total_secs: f64 = ok.iter().map(|r| r.seconds.iter().sum::<f64>()).sum();
        rows.push(ExperimentRow {
            strategy: strategy_column(strategy),
            cumulative: strategy.cumulative,
            amplify: strategy.amplify,
            split: split.split.to_string(),
            mean_iterations: mean,
            std_iterations: sd,
            mean_seconds_per_iteration: if total_iters == 0 { 0.0 } else { total_secs / total_iters as f64 },
            sessions: results.len(),
            failures: results.len() - ok.len(),
        });
        sessions.extend(results);
    }
    Ok(ExperimentReport { rows, sessions })
}

pub fn write_experiment_csv(mut out: impl Write, rows: &[ExperimentRow], header: bool) -> Result<()> {
    if header {
        writeln!(
            out,
            "strategy,cumulative,amplify,split,mean_iterations,std_iterations,mean_seconds_per_iteration,sessions,failures"
        )?;
    }
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{:.4},{:.4},{:.9},{},{}",
            r.strategy,
            r.cumulative,
            r.amplify,
            r.split,
            r.mean_iterations,
            r.std_iterations,
            r.mean_seconds_per_iteration,
            r.sessions,
            r.failures
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduction_values() {
        assert!((reduction(33.36, 28.29).unwrap() - 17.92).abs() < 0.01);
        assert!((reduction(46.77, 29.41).unwrap() - 59.03).abs() < 0.01);
        assert_eq!(reduction(12.0, 12.0).unwrap(), 0.0);
        assert!(reduction(1.0, 0.0).is_err());
    }

    #[test]
    fn lower_bound() {
        assert_eq!(iteration_lower_bound(0.8, 299, 10), 24);
        assert_eq!(iteration_lower_bound(0.8, 300, 10), 24);
        assert_eq!(iteration_lower_bound(0.8, 5, 10), 1);
        assert_eq!(iteration_lower_bound(1.0, 30, 10), 3);
    }

    #[test]
    fn statistics_by_hand() {
        let (m, sd) = mean_sd(&[24.0, 26.0, 25.0, 30.0, 25.0]);
        assert!((m - 26.0).abs() < 1e-12);
        // squared deviations 4+0+1+16+1 = 22, over n-1 = 4
        assert!((sd - 5.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(mean_sd(&[3.0]), (3.0, 0.0));
    }

    #[test]
    fn csv_layout() {
        let row = ExperimentRow {
            strategy: "sum".into(),
            cumulative: true,
            amplify: false,
            split: "test".into(),
            mean_iterations: 28.29,
            std_iterations: 0.75,
            mean_seconds_per_iteration: 0.001,
            sessions: 5,
            failures: 0,
        };
        let mut out = Vec::new();
        write_experiment_csv(&mut out, &[row], true).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0].split(',').count(), 9);
        assert_eq!(lines[1], "sum,true,false,test,28.2900,0.7500,0.001000000,5,0");
    }
}
