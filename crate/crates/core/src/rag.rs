//! The query path: embed, retrieve, budget the context, prompt, complete.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::docbuild::Passage;
use crate::embed::{EmbedError, Embedder};
use crate::llm::{estimate_tokens, ChatMessage, Completer, LlmError, ModelProfile};
use crate::vecstore::{SearchHit, VectorIndex, VectorStoreError};
use crate::DEFAULT_CONTEXT_BUDGET;

pub const RAG_SYSTEM_PROMPT: &str = "You are a financial data analyst. \
Answer strictly from the provided context. \
State the requested figure in USD as a plain number. \
If the context does not contain the answer, reply INSUFFICIENT CONTEXT.";

pub const BASELINE_SYSTEM_PROMPT: &str = "You are a financial data analyst. \
Answer the question about company fundamentals concisely, \
stating figures in USD as plain numbers.";

#[derive(Debug, Error)]
pub enum RagError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Store(#[from] VectorStoreError),
    #[error("index entry {0:?} has no passage")]
    MissingPassage(String),
    #[error("embedder produces {embedder}-dimensional vectors but the index holds {index}")]
    DimensionMismatch { embedder: usize, index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Baseline,
    Rag,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Mode::Baseline),
            "rag" => Ok(Mode::Rag),
            other => Err(format!("unknown mode {other:?} (expected rag or baseline)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub embed: f64,
    pub search: f64,
    pub llm: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub question: String,
    pub mode: Mode,
    pub retrieved: Vec<SearchHit>,
    pub context: String,
    pub answer: String,
    pub latency_ms: Latency,
}

/// Index plus the passages its ids refer to.
#[derive(Debug, Clone)]
pub struct Corpus {
    index: VectorIndex,
    passages: HashMap<String, Passage>,
}

impl Corpus {
    /// Pairs an index with its passages; every indexed id must have one.
    pub fn new(index: VectorIndex, passages: Vec<Passage>) -> Result<Self, RagError> {
        let passages: HashMap<String, Passage> =
            passages.into_iter().map(|p| (p.id.clone(), p)).collect();
        if let Some(missing) = index.ids().iter().find(|id| !passages.contains_key(*id)) {
            return Err(RagError::MissingPassage(missing.clone()));
        }
        Ok(Self { index, passages })
    }

    pub fn empty(dim: usize) -> Result<Self, RagError> {
        Ok(Self {
            index: VectorIndex::new(dim)?,
            passages: HashMap::new(),
        })
    }

    /// Embeds passages (in their given order) and indexes them.
    pub fn build(passages: Vec<Passage>, embedder: &dyn Embedder) -> Result<Self, RagError> {
        let mut index = VectorIndex::new(embedder.dim())?;
        if !passages.is_empty() {
            let texts: Vec<String> = passages.iter().map(|p| p.text.clone()).collect();
            let vectors = embedder.embed_texts(&texts)?;
            for (p, v) in passages.iter().zip(&vectors) {
                index.add(&p.id, v)?;
            }
        }
        Self::new(index, passages)
    }

    pub fn index(&self) -> &VectorIndex {
        &self.index
    }

    pub fn passage(&self, id: &str) -> Option<&Passage> {
        self.passages.get(id)
    }

    /// Passages in index insertion order.
    pub fn passages_in_order(&self) -> impl Iterator<Item = &Passage> {
        self.index
            .ids()
            .iter()
            .filter_map(|id| self.passages.get(id))
    }
}

/// Concatenates passage texts in rank order, separated by blank lines,
/// stopping at the first passage that would push the estimate past `budget`.
pub fn assemble_context<'a>(
    passages: impl IntoIterator<Item = &'a Passage>,
    budget: usize,
) -> String {
    let mut context = String::new();
    for p in passages {
        let candidate = if context.is_empty() {
            p.text.clone()
        } else {
            format!("{context}\n\n{}", p.text)
        };
        if estimate_tokens(&candidate) > budget {
            break;
        }
        context = candidate;
    }
    context
}

/// Fixed system + user message pair.
pub fn build_prompt(
    question: &str,
    context: &str,
    mode: Mode,
) -> Result<Vec<ChatMessage>, RagError> {
    let question = question.trim();
    if question.is_empty() {
        return Err(RagError::EmptyQuestion);
    }
    Ok(match mode {
        Mode::Rag => vec![
            ChatMessage::system(RAG_SYSTEM_PROMPT),
            ChatMessage::user(format!("Context:\n{context}\n\nQuestion: {question}")),
        ],
        Mode::Baseline => vec![
            ChatMessage::system(BASELINE_SYSTEM_PROMPT),
            ChatMessage::user(question),
        ],
    })
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

#[derive(Clone)]
pub struct RagPipeline {
    corpus: Arc<Corpus>,
    embedder: Arc<dyn Embedder>,
    completer: Arc<dyn Completer>,
    profile: ModelProfile,
    budget: usize,
}

impl RagPipeline {
    pub fn new(
        corpus: Arc<Corpus>,
        embedder: Arc<dyn Embedder>,
        completer: Arc<dyn Completer>,
        profile: ModelProfile,
    ) -> Result<Self, RagError> {
        if embedder.dim() != corpus.index().dim() {
            return Err(RagError::DimensionMismatch {
                embedder: embedder.dim(),
                index: corpus.index().dim(),
            });
        }
        Ok(Self {
            corpus,
            embedder,
            completer,
            profile,
            budget: DEFAULT_CONTEXT_BUDGET,
        })
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn profile(&self) -> &ModelProfile {
        &self.profile
    }

    pub fn answer_query(
        &self,
        question: &str,
        mode: Mode,
        k: usize,
    ) -> Result<QueryResult, RagError> {
        self.answer_with(&self.profile, question, mode, k)
    }

    /// Same as [`answer_query`](Self::answer_query) with an explicit model profile.
    pub fn answer_with(
        &self,
        profile: &ModelProfile,
        question: &str,
        mode: Mode,
        k: usize,
    ) -> Result<QueryResult, RagError> {
        let start = Instant::now();
        if question.trim().is_empty() {
            return Err(RagError::EmptyQuestion);
        }
        let mut latency = Latency::default();
        let mut retrieved = Vec::new();
        let mut context = String::new();

        if mode == Mode::Rag && !self.corpus.index().is_empty() {
            let t = Instant::now();
            let query = self.embedder.embed_one(question)?;
            latency.embed = ms_since(t);

            let t = Instant::now();
            retrieved = self.corpus.index().search_top_k(&query, k)?;
            latency.search = ms_since(t);

            let passages = retrieved
                .iter()
                .map(|h| {
                    self.corpus
                        .passage(&h.id)
                        .ok_or_else(|| RagError::MissingPassage(h.id.clone()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            context = assemble_context(passages, self.budget);
        }

        let messages = build_prompt(question, &context, mode)?;
        let t = Instant::now();
        let exchange = self.completer.complete(profile, &messages)?;
        latency.llm = ms_since(t);
        latency.total = ms_since(start).max(latency.embed + latency.search + latency.llm);

        Ok(QueryResult {
            question: question.to_string(),
            mode,
            retrieved,
            context,
            answer: exchange.answer,
            latency_ms: latency,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::docbuild::build_passages;
    use crate::embed::HashEmbedder;
    use crate::ingest::FinRecord;
    use crate::llm::{ScriptedCompleter, INSUFFICIENT_CONTEXT};
    use chrono::NaiveDate;

    const QUESTION: &str = "What was Apple Inc.'s Revenue for the quarter ending 2023-03-31?";

    fn passage_with_chars(id: &str, chars: usize) -> Passage {
        Passage {
            id: id.into(),
            ticker: "X".into(),
            company: "X".into(),
            period: NaiveDate::from_ymd_opt(2023, 3, 31).unwrap(),
            text: "p".repeat(chars),
            facts: vec![],
            truncated: false,
        }
    }

    fn table_corpus() -> Corpus {
        let rec = FinRecord {
            period: NaiveDate::from_ymd_opt(2023, 3, 31).unwrap(),
            company: "Apple Inc.".into(),
            ticker: "AAPL".into(),
            indicator: "Revenue".into(),
            amount: 100000000.0,
        };
        Corpus::build(build_passages(&[rec]).unwrap(), &HashEmbedder::new(384)).unwrap()
    }

    fn pipeline(corpus: Corpus) -> RagPipeline {
        RagPipeline::new(
            Arc::new(corpus),
            Arc::new(HashEmbedder::new(384)),
            Arc::new(ScriptedCompleter),
            ModelProfile::base(),
        )
        .unwrap()
    }

    #[test]
    fn context_single_passage() {
        let p = passage_with_chars("a", 400);
        assert_eq!(assemble_context([&p], 1024), p.text);
    }

    #[test]
    fn context_five_300_token_passages() {
        let ps: Vec<Passage> = (0..5)
            .map(|i| passage_with_chars(&i.to_string(), 1200))
            .collect();
        assert!(ps.iter().all(|p| estimate_tokens(&p.text) == 300));
        let ctx = assemble_context(&ps, 1024);
        assert_eq!(
            ctx,
            [&ps[0].text, &ps[1].text, &ps[2].text]
                .map(|s| s.as_str())
                .join("\n\n")
        );
        assert!(estimate_tokens(&ctx) <= 1024);
    }

    #[test]
    fn context_stops_at_first_overflow() {
        let ps = [
            passage_with_chars("a", 40),
            passage_with_chars("b", 8000),
            passage_with_chars("c", 40),
        ];
        assert_eq!(assemble_context(&ps, 1024), ps[0].text);
        assert_eq!(assemble_context(Vec::<&Passage>::new(), 1024), "");
    }

    #[test]
    fn prompt_shapes() {
        let base = build_prompt("q?", "", Mode::Baseline).unwrap();
        assert_eq!(base.len(), 2);
        assert_eq!(base[1].content, "q?");
        let rag = build_prompt("q?", "ctx", Mode::Rag).unwrap();
        let user = &rag[1].content;
        assert!(user.find("ctx").unwrap() < user.find("q?").unwrap());
        assert!(matches!(
            build_prompt("  ", "ctx", Mode::Rag),
            Err(RagError::EmptyQuestion)
        ));
    }

    #[test]
    fn rag_answers_table_question() {
        let res = pipeline(table_corpus())
            .answer_query(QUESTION, Mode::Rag, 5)
            .unwrap();
        assert_eq!(res.answer, "100000000");
        assert_eq!(res.retrieved[0].id, "AAPL:2023-03-31");
        assert_eq!(res.retrieved[0].rank, 1);
        let l = res.latency_ms;
        assert!(l.total >= l.embed && l.total >= l.search && l.total >= l.llm);
    }

    #[test]
    fn baseline_has_no_context() {
        let res = pipeline(table_corpus())
            .answer_query(QUESTION, Mode::Baseline, 5)
            .unwrap();
        assert_eq!(res.answer, INSUFFICIENT_CONTEXT);
        assert!(res.retrieved.is_empty());
        assert!(res.context.is_empty());
    }

    #[test]
    fn rag_over_empty_index() {
        let res = pipeline(Corpus::empty(384).unwrap())
            .answer_query(QUESTION, Mode::Rag, 5)
            .unwrap();
        assert!(res.retrieved.is_empty());
        assert_eq!(res.context, "");
        assert_eq!(res.answer, INSUFFICIENT_CONTEXT);
    }

    #[test]
    fn corpus_requires_passages_for_every_id() {
        let corpus = table_corpus();
        let err = Corpus::new(corpus.index().clone(), vec![]).unwrap_err();
        assert!(matches!(err, RagError::MissingPassage(_)));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let err = RagPipeline::new(
            Arc::new(Corpus::empty(8).unwrap()),
            Arc::new(HashEmbedder::new(16)),
            Arc::new(ScriptedCompleter),
            ModelProfile::base(),
        )
        .err()
        .unwrap();
        assert!(matches!(err, RagError::DimensionMismatch { .. }));
    }

    #[test]
    fn result_json_field_names() {
        let res = pipeline(table_corpus())
            .answer_query(QUESTION, Mode::Rag, 5)
            .unwrap();
        let v = serde_json::to_value(&res).unwrap();
        for key in [
            "question",
            "mode",
            "retrieved",
            "context",
            "answer",
            "latency_ms",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["mode"], "rag");
        for key in ["embed", "search", "llm", "total"] {
            assert!(v["latency_ms"][key].is_number());
        }
        for key in ["id", "score", "rank"] {
            assert!(v["retrieved"][0].get(key).is_some());
        }
    }
}
