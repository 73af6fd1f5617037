mod common;

use std::sync::Arc;

use chrono::NaiveDate;
use common::check_golden;
use finrag_core::llm::INSUFFICIENT_CONTEXT;
use finrag_core::synthetic::{fundamentals, sample_record, FixtureSpec};
use finrag_core::{
    assemble_context, build_passages, build_prompt, estimate_tokens, Corpus, HashEmbedder, Mode,
    ModelProfile, Passage, RagError, RagPipeline, ScriptedCompleter, DEFAULT_DIM,
};
use proptest::prelude::*;

const QUESTION: &str = "What was Apple Inc.'s Revenue for the quarter ending 2023-03-31?";

fn pipeline(corpus: Corpus) -> RagPipeline {
    RagPipeline::new(
        Arc::new(corpus),
        Arc::new(HashEmbedder::new(DEFAULT_DIM)),
        Arc::new(ScriptedCompleter),
        ModelProfile::base(),
    )
    .unwrap()
}

fn table_corpus() -> Corpus {
    let passages = build_passages(&[sample_record()]).unwrap();
    Corpus::build(passages, &HashEmbedder::new(DEFAULT_DIM)).unwrap()
}

fn filler(id: &str, tokens: usize) -> Passage {
    Passage {
        id: id.into(),
        ticker: "X".into(),
        company: "X".into(),
        period: NaiveDate::from_ymd_opt(2023, 3, 31).unwrap(),
        text: "w".repeat(tokens * 4),
        facts: Vec::new(),
        truncated: false,
    }
}

#[test]
fn table_question_rag_and_baseline() {
    let p = pipeline(table_corpus());
    let rag = p.answer_query(QUESTION, Mode::Rag, 5).unwrap();
    assert_eq!(rag.answer, "100000000");
    assert_eq!(rag.retrieved[0].id, "AAPL:2023-03-31");
    assert_eq!(rag.retrieved[0].rank, 1);
    assert!(rag.latency_ms.total >= rag.latency_ms.llm);

    let base = p.answer_query(QUESTION, Mode::Baseline, 5).unwrap();
    assert_eq!(base.answer, INSUFFICIENT_CONTEXT);
    assert!(base.retrieved.is_empty());
    assert_eq!(base.context, "");
}

#[test]
fn empty_index_proceeds_with_empty_context() {
    let p = pipeline(Corpus::empty(DEFAULT_DIM).unwrap());
    let r = p.answer_query(QUESTION, Mode::Rag, 5).unwrap();
    assert!(r.retrieved.is_empty());
    assert_eq!(r.context, "");
    assert_eq!(r.answer, INSUFFICIENT_CONTEXT);
}

#[test]
fn empty_question() {
    let p = pipeline(table_corpus());
    assert!(matches!(
        p.answer_query("  ", Mode::Rag, 5),
        Err(RagError::EmptyQuestion)
    ));
    assert!(matches!(
        build_prompt("", "", Mode::Baseline),
        Err(RagError::EmptyQuestion)
    ));
}

#[test]
fn baseline_ignores_index_contents() {
    let fixture = fundamentals(&FixtureSpec {
        companies: 6,
        quarters: 2,
        indicators: 2,
        seed: 9,
    });
    let big = Corpus::build(
        build_passages(&fixture).unwrap(),
        &HashEmbedder::new(DEFAULT_DIM),
    )
    .unwrap();
    let a = pipeline(big)
        .answer_query(QUESTION, Mode::Baseline, 5)
        .unwrap();
    let b = pipeline(Corpus::empty(DEFAULT_DIM).unwrap())
        .answer_query(QUESTION, Mode::Baseline, 5)
        .unwrap();
    assert_eq!(
        (a.answer, a.context, a.retrieved),
        (b.answer, b.context, b.retrieved)
    );
}

#[test]
fn retrieved_order_drives_context_order() {
    let fixture = fundamentals(&FixtureSpec {
        companies: 10,
        quarters: 2,
        indicators: 3,
        seed: 4,
    });
    let p = pipeline(
        Corpus::build(
            build_passages(&fixture).unwrap(),
            &HashEmbedder::new(DEFAULT_DIM),
        )
        .unwrap(),
    );
    let r = p
        .answer_query(&fixture[7].company.clone(), Mode::Rag, 5)
        .unwrap();
    let direct = p
        .corpus()
        .index()
        .search_top_k(
            &finrag_core::hash_embed(&fixture[7].company, DEFAULT_DIM),
            5,
        )
        .unwrap();
    assert_eq!(r.retrieved, direct);
    let expected: Vec<&str> = r
        .retrieved
        .iter()
        .map(|h| p.corpus().passage(&h.id).unwrap().text.as_str())
        .collect();
    assert_eq!(r.context, expected.join("\n\n"));
}

#[test]
fn repeated_queries_are_identical() {
    let p = pipeline(table_corpus());
    let mut a = p.answer_query(QUESTION, Mode::Rag, 5).unwrap();
    let mut b = p.answer_query(QUESTION, Mode::Rag, 5).unwrap();
    a.latency_ms = Default::default();
    b.latency_ms = Default::default();
    assert_eq!(a, b);
}

#[test]
fn context_examples() {
    let one = filler("a", 100);
    assert_eq!(assemble_context([&one], 1024), one.text);
    let five: Vec<Passage> = (0..5).map(|i| filler(&format!("p{i}"), 300)).collect();
    let ctx = assemble_context(&five, 1024);
    let expected = [&five[0].text, &five[1].text, &five[2].text]
        .map(String::as_str)
        .join("\n\n");
    assert_eq!(ctx, expected);
    assert_eq!(assemble_context(&[], 1024), "");
}

#[test]
fn prompt_shapes() {
    let base = build_prompt("q?", "", Mode::Baseline).unwrap();
    assert_eq!(base.len(), 2);
    assert_eq!(base[1].content, "q?");
    let rag = build_prompt("q?", "ctx", Mode::Rag).unwrap();
    let user = &rag[1].content;
    assert!(user.find("ctx").unwrap() < user.find("q?").unwrap());
}

#[test]
fn prompt_golden() {
    let context =
        "For the quarter ending 2023-03-31, Apple Inc. (AAPL) reported Revenue of 100000000 USD.";
    let mut out = String::new();
    for mode in [Mode::Rag, Mode::Baseline] {
        let msgs = build_prompt(QUESTION, context, mode).unwrap();
        out += &serde_json::to_string_pretty(&msgs).unwrap();
        out.push('\n');
    }
    check_golden("prompt.json", &out);
}

proptest! {
    #[test]
    fn context_respects_budget(
        sizes in prop::collection::vec(1usize..2000, 0..20),
        budget in 1usize..2048,
    ) {
        let passages: Vec<Passage> = sizes
            .iter()
            .enumerate()
            .map(|(i, &chars)| Passage { text: "z".repeat(chars), ..filler(&format!("p{i}"), 0) })
            .collect();
        let ctx = assemble_context(&passages, budget);
        prop_assert!(estimate_tokens(&ctx) <= budget);
        if !ctx.is_empty() {
            // Whole passages only, taken as a prefix of the ranked list.
            let parts: Vec<&str> = ctx.split("\n\n").collect();
            for (part, p) in parts.iter().zip(&passages) {
                prop_assert_eq!(*part, p.text.as_str());
            }
        }
    }
}
