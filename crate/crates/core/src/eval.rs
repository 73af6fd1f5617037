//! Evaluation harness: synthesize QA items, run baseline and RAG groups,
//! and report accuracy, recall and latency side by side.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::{Arc, LazyLock};

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::docbuild::{passage_id, Fact};
use crate::embed::Embedder;
use crate::ingest::FinRecord;
use crate::llm::{Completer, ModelProfile};
use crate::rag::{Corpus, Mode, QueryResult, RagError, RagPipeline};
use crate::{DEFAULT_CONTEXT_BUDGET, DEFAULT_TOP_K};

/// Relative tolerance for judging a numeric answer.
pub const ANSWER_RTOL: f64 = 1e-6;

pub const PRESET_GROUPS: [&str; 4] = ["BG", "REG", "VUG", "FOG"];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("requested {requested} QA items but only {available} distinct facts exist")]
    InsufficientFacts { requested: usize, available: usize },
    #[error("{items} QA items but {results} results")]
    LengthMismatch { items: usize, results: usize },
    #[error(
        "unknown group {0:?}; valid groups are BG, REG, VUG, FOG or custom:<model>:<rag|baseline>"
    )]
    UnknownGroup(String),
    #[error("no groups to run")]
    NoGroups,
    #[error("group {group}, item {item}: {source}")]
    Pipeline {
        group: String,
        item: String,
        #[source]
        source: RagError,
    },
    #[error(transparent)]
    Setup(RagError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAItem {
    pub id: String,
    pub question: String,
    pub gold_answer: f64,
    pub gold_facts: Vec<Fact>,
    pub gold_passage_id: String,
    pub company: String,
    pub ticker: String,
    pub period: NaiveDate,
    pub indicator: String,
}

pub fn question_for(company: &str, indicator: &str, period: NaiveDate) -> String {
    format!("What was {company}'s {indicator} for the quarter ending {period}?")
}

/// Samples `n` distinct `(ticker, period, indicator)` facts with a seeded generator.
pub fn synthesize_qa(records: &[FinRecord], n: usize, seed: u64) -> Result<Vec<QAItem>, EvalError> {
    let mut facts: BTreeMap<(&str, NaiveDate, &str), &FinRecord> = BTreeMap::new();
    for r in records {
        facts.insert((r.ticker.as_str(), r.period, r.indicator.as_str()), r);
    }
    if n == 0 || n > facts.len() {
        return Err(EvalError::InsufficientFacts {
            requested: n,
            available: facts.len(),
        });
    }
    let facts: Vec<&FinRecord> = facts.into_values().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, facts.len(), n);
    Ok(picks
        .into_iter()
        .enumerate()
        .map(|(i, at)| {
            let r = facts[at];
            QAItem {
                id: format!("q{:04}", i + 1),
                question: question_for(&r.company, &r.indicator, r.period),
                gold_answer: r.amount,
                gold_facts: vec![Fact {
                    indicator: r.indicator.clone(),
                    amount: r.amount,
                }],
                gold_passage_id: passage_id(&r.ticker, r.period),
                company: r.company.clone(),
                ticker: r.ticker.clone(),
                period: r.period,
                indicator: r.indicator.clone(),
            }
        })
        .collect())
}

static NUMBER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)(\(\s*)?(-\s*)?[$€£]?\s*(\d[\d,]*(?:\.\d+)?|\.\d+)(\s*\))?(?:\s*(thousand|million|billion|trillion)\b)?",
    )
    .unwrap()
});

/// Every number in free text, with commas, currency symbols, accounting
/// parentheses and magnitude words resolved.
pub fn extract_numbers(text: &str) -> Vec<f64> {
    NUMBER
        .captures_iter(text)
        .filter_map(|c| {
            let digits: String = c[3].chars().filter(|&ch| ch != ',').collect();
            let mut value: f64 = digits.parse().ok()?;
            value *= match c.get(5).map(|m| m.as_str().to_ascii_lowercase()) {
                Some(ref w) if w == "thousand" => 1e3,
                Some(ref w) if w == "million" => 1e6,
                Some(ref w) if w == "billion" => 1e9,
                Some(ref w) if w == "trillion" => 1e12,
                _ => 1.0,
            };
            let negative = c.get(2).is_some() || (c.get(1).is_some() && c.get(4).is_some());
            Some(if negative { -value } else { value })
        })
        .filter(|v| v.is_finite())
        .collect()
}

fn close_to(value: f64, gold: f64) -> bool {
    (value - gold).abs() <= ANSWER_RTOL * gold.abs()
}

/// True iff some number in `answer` is within relative 1e-6 of `gold`.
pub fn judge_answer(answer: &str, gold: f64) -> bool {
    extract_numbers(answer)
        .into_iter()
        .any(|v| close_to(v, gold))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub p50: f64,
    pub p95: f64,
    pub mean: f64,
}

/// Nearest-rank percentile of an ascending slice.
pub fn nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl LatencyStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            p50: nearest_rank(&sorted, 50.0),
            p95: nearest_rank(&sorted, 95.0),
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub items: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub answer_fact_recall: f64,
    /// `None` for groups that never retrieve.
    pub retrieval_recall: Option<f64>,
    pub latency_ms: LatencyStats,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compute_metrics(
    items: &[QAItem],
    results: &[QueryResult],
) -> Result<GroupMetrics, EvalError> {
    if items.len() != results.len() {
        return Err(EvalError::LengthMismatch {
            items: items.len(),
            results: results.len(),
        });
    }
    let mut correct = 0;
    let mut facts_total = 0;
    let mut facts_found = 0;
    let mut retrieved = 0;
    for (item, res) in items.iter().zip(results) {
        let numbers = extract_numbers(&res.answer);
        if numbers.iter().any(|&v| close_to(v, item.gold_answer)) {
            correct += 1;
        }
        facts_total += item.gold_facts.len();
        facts_found += item
            .gold_facts
            .iter()
            .filter(|f| numbers.iter().any(|&v| close_to(v, f.amount)))
            .count();
        if res.retrieved.iter().any(|h| h.id == item.gold_passage_id) {
            retrieved += 1;
        }
    }
    let any_rag = results.iter().any(|r| r.mode == Mode::Rag);
    let latencies: Vec<f64> = results.iter().map(|r| r.latency_ms.total).collect();
    Ok(GroupMetrics {
        items: items.len(),
        correct,
        accuracy: ratio(correct, items.len()),
        answer_fact_recall: ratio(facts_found, facts_total),
        retrieval_recall: any_rag.then(|| ratio(retrieved, items.len())),
        latency_ms: LatencyStats::from_samples(&latencies),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupConfig {
    pub name: String,
    pub profile: ModelProfile,
    pub rag: bool,
}

impl GroupConfig {
    pub fn new(name: impl Into<String>, profile: ModelProfile, rag: bool) -> Self {
        Self {
            name: name.into(),
            profile,
            rag,
        }
    }

    /// Parses `BG`, `REG`, `VUG`, `FOG` or `custom:<model>:<rag|baseline>`.
    pub fn parse(
        spec: &str,
        base: &ModelProfile,
        enhanced: &ModelProfile,
    ) -> Result<Self, EvalError> {
        let spec = spec.trim();
        match spec.to_ascii_uppercase().as_str() {
            "BG" => return Ok(Self::new("BG", base.clone(), false)),
            "REG" => return Ok(Self::new("REG", base.clone(), true)),
            "VUG" => return Ok(Self::new("VUG", enhanced.clone(), false)),
            "FOG" => return Ok(Self::new("FOG", enhanced.clone(), true)),
            _ => {}
        }
        let unknown = || EvalError::UnknownGroup(spec.to_string());
        let rest = spec.strip_prefix("custom:").ok_or_else(unknown)?;
        let (model, mode) = rest.rsplit_once(':').ok_or_else(unknown)?;
        let rag = match mode.parse::<Mode>().map_err(|_| unknown())? {
            Mode::Rag => true,
            Mode::Baseline => false,
        };
        if model.is_empty() {
            return Err(unknown());
        }
        let mut profile = base.clone();
        profile.name = model.to_string();
        Ok(Self::new(spec, profile, rag))
    }

    /// The four preset groups in their canonical order.
    pub fn presets(base: &ModelProfile, enhanced: &ModelProfile) -> Vec<Self> {
        PRESET_GROUPS
            .iter()
            .map(|g| Self::parse(g, base, enhanced).expect("preset group"))
            .collect()
    }

    pub fn mode(&self) -> Mode {
        if self.rag {
            Mode::Rag
        } else {
            Mode::Baseline
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub name: String,
    pub model: String,
    pub rag: bool,
    #[serde(flatten)]
    pub metrics: GroupMetrics,
}

/// Change of a group relative to the baseline group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDelta {
    pub group: String,
    pub accuracy_points: f64,
    pub answer_fact_recall_points: f64,
    /// Percent change of mean latency; `None` when the baseline mean is zero.
    pub latency_mean_pct_change: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub context_budget: usize,
    pub items: usize,
    pub groups: Vec<GroupReport>,
    pub deltas_vs_bg: Vec<GroupDelta>,
}

/// Removes every object key starting with `latency` (the only
/// run-to-run varying fields of a report).
pub fn strip_latency(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Object(map) => {
            map.retain(|k, _| !k.starts_with("latency"));
            map.values_mut().for_each(strip_latency);
        }
        serde_json::Value::Array(xs) => xs.iter_mut().for_each(strip_latency),
        _ => {}
    }
}

fn pct(x: f64) -> String {
    format!("{:.1}%", x * 100.0)
}

impl EvalReport {
    pub fn group(&self, name: &str) -> Option<&GroupReport> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Report JSON with latency fields removed.
    pub fn deterministic_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        strip_latency(&mut v);
        serde_json::to_string_pretty(&v).expect("value serializes")
    }

    /// Aligned text table: one row per group.
    pub fn to_table(&self) -> String {
        let header = [
            "Group",
            "Model",
            "RAG",
            "Items",
            "Accuracy",
            "Answer-fact recall",
            "Retrieval recall",
            "Latency p50 (ms)",
        ];
        let rows: Vec<[String; 8]> = self
            .groups
            .iter()
            .map(|g| {
                [
                    g.name.clone(),
                    g.model.clone(),
                    if g.rag { "yes" } else { "no" }.to_string(),
                    g.metrics.items.to_string(),
                    pct(g.metrics.accuracy),
                    pct(g.metrics.answer_fact_recall),
                    g.metrics.retrieval_recall.map_or("n/a".to_string(), pct),
                    format!("{:.2}", g.metrics.latency_ms.p50),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, cells: &[&str]| {
            for (col, (cell, w)) in cells.iter().zip(widths).enumerate() {
                if col > 0 {
                    out.push_str("  ");
                }
                // Name, model and RAG flag left-aligned; figures right-aligned.
                if col < 3 {
                    let _ = write!(out, "{cell:<w$}");
                } else {
                    let _ = write!(out, "{cell:>w$}");
                }
            }
            out.truncate(out.trim_end().len());
            out.push('\n');
        };
        line(&mut out, &header);
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        line(
            &mut out,
            &rule.iter().map(String::as_str).collect::<Vec<_>>(),
        );
        for row in &rows {
            line(
                &mut out,
                &row.iter().map(String::as_str).collect::<Vec<_>>(),
            );
        }
        out
    }
}

fn deltas(groups: &[GroupReport]) -> Vec<GroupDelta> {
    let Some(bg) = groups.iter().find(|g| g.name == "BG") else {
        return Vec::new();
    };
    groups
        .iter()
        .filter(|g| g.name != "BG")
        .map(|g| GroupDelta {
            group: g.name.clone(),
            accuracy_points: (g.metrics.accuracy - bg.metrics.accuracy) * 100.0,
            answer_fact_recall_points: (g.metrics.answer_fact_recall
                - bg.metrics.answer_fact_recall)
                * 100.0,
            latency_mean_pct_change: (bg.metrics.latency_ms.mean > 0.0).then(|| {
                (g.metrics.latency_ms.mean - bg.metrics.latency_ms.mean)
                    / bg.metrics.latency_ms.mean
                    * 100.0
            }),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub k: usize,
    pub context_budget: usize,
    /// Items evaluated concurrently within a group.
    pub workers: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            k: DEFAULT_TOP_K,
            context_budget: DEFAULT_CONTEXT_BUDGET,
            workers: 1,
        }
    }
}

fn run_items(
    pipeline: &RagPipeline,
    group: &GroupConfig,
    items: &[QAItem],
    opts: &EvalOptions,
) -> Result<Vec<QueryResult>, EvalError> {
    let run = |item: &QAItem| {
        pipeline
            .answer_with(&group.profile, &item.question, group.mode(), opts.k)
            .map_err(|source| EvalError::Pipeline {
                group: group.name.clone(),
                item: item.id.clone(),
                source,
            })
    };
    let workers = opts.workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(run).collect();
    }
    let mut slots: Vec<Option<Result<QueryResult, EvalError>>> = Vec::new();
    slots.resize_with(items.len(), || None);
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let run = &run;
                s.spawn(move || {
                    (w..items.len())
                        .step_by(workers)
                        .map(|i| (i, run(&items[i])))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("eval worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots
        .into_iter()
        .map(|r| r.expect("every item evaluated"))
        .collect()
}

/// Runs every item through every group and reports per-group metrics plus
/// deltas against `BG` when present.
pub fn run_groups(
    groups: &[GroupConfig],
    items: &[QAItem],
    corpus: Arc<Corpus>,
    embedder: Arc<dyn Embedder>,
    completer: Arc<dyn Completer>,
    opts: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    if groups.is_empty() {
        return Err(EvalError::NoGroups);
    }
    let mut reports = Vec::with_capacity(groups.len());
    for group in groups {
        let pipeline = RagPipeline::new(
            corpus.clone(),
            embedder.clone(),
            completer.clone(),
            group.profile.clone(),
        )
        .map_err(EvalError::Setup)?
        .with_budget(opts.context_budget);
        let results = run_items(&pipeline, group, items, opts)?;
        tracing::info!(group = %group.name, items = items.len(), "group evaluated");
        reports.push(GroupReport {
            name: group.name.clone(),
            model: group.profile.name.clone(),
            rag: group.rag,
            metrics: compute_metrics(items, &results)?,
        });
    }
    Ok(EvalReport {
        k: opts.k,
        context_budget: opts.context_budget,
        items: items.len(),
        deltas_vs_bg: deltas(&reports),
        groups: reports,
    })
}
