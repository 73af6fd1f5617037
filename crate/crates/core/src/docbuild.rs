//! Renders grouped records into retrievable passages.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{format_amount, FinRecord};
use crate::llm::estimate_tokens;
use crate::MAX_SEQUENCE_TOKENS;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DocBuildError {
    #[error("{ticker} {period}: conflicting company names {first:?} and {second:?}")]
    ConflictingCompanyName {
        ticker: String,
        period: NaiveDate,
        first: String,
        second: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fact {
    pub indicator: String,
    pub amount: f64,
}

/// One `(ticker, quarter)` snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    /// `"<ticker>:<ISO period>"`.
    pub id: String,
    pub ticker: String,
    pub company: String,
    pub period: NaiveDate,
    pub text: String,
    /// Sorted by indicator name.
    pub facts: Vec<Fact>,
    /// Set when `text` had to drop trailing facts to fit the token cap.
    #[serde(default)]
    pub truncated: bool,
}

pub fn passage_id(ticker: &str, period: NaiveDate) -> String {
    format!("{ticker}:{period}")
}

/// Renders facts with the fixed template, capped at `max_tokens`.
///
/// Facts are dropped from the end (never cut mid-fact) until the sentence
/// fits; only a header that alone exceeds the cap is cut by characters.
/// Returns the text and whether anything was dropped.
pub fn render_passage_capped(
    company: &str,
    ticker: &str,
    period: NaiveDate,
    facts: &[Fact],
    max_tokens: usize,
) -> (String, bool) {
    let mut text = format!("For the quarter ending {period}, {company} ({ticker}) reported ");
    let mut rendered = 0;
    for (i, fact) in facts.iter().enumerate() {
        let piece = format!(
            "{}{} of {} USD",
            if i == 0 { "" } else { "; " },
            fact.indicator,
            format_amount(fact.amount)
        );
        if estimate_tokens(&format!("{text}{piece}.")) > max_tokens {
            break;
        }
        text.push_str(&piece);
        rendered += 1;
    }

    if rendered == 0 && !facts.is_empty() {
        // Not even one fact fits; fall back to a character cut.
        let first = &facts[0];
        text.push_str(&format!(
            "{} of {} USD",
            first.indicator,
            format_amount(first.amount)
        ));
        let keep = max_tokens * 4;
        let cut: String = text.chars().take(keep).collect();
        return (cut, true);
    }
    let truncated = rendered < facts.len();
    if rendered == 0 {
        text.truncate(text.trim_end().len());
    }
    text.push('.');
    (text, truncated)
}

/// Renders the passage sentence with the default 512-token cap.
pub fn render_passage(company: &str, ticker: &str, period: NaiveDate, facts: &[Fact]) -> String {
    render_passage_capped(company, ticker, period, facts, MAX_SEQUENCE_TOKENS).0
}

/// Groups records into one passage per `(ticker, period)`, sorted by that key.
pub fn build_passages(records: &[FinRecord]) -> Result<Vec<Passage>, DocBuildError> {
    let mut groups: BTreeMap<(&str, NaiveDate), (&str, Vec<Fact>)> = BTreeMap::new();
    for r in records {
        let entry = groups
            .entry((r.ticker.as_str(), r.period))
            .or_insert_with(|| (r.company.as_str(), Vec::new()));
        if entry.0 != r.company {
            let (first, second) = if entry.0 < r.company.as_str() {
                (entry.0, r.company.as_str())
            } else {
                (r.company.as_str(), entry.0)
            };
            return Err(DocBuildError::ConflictingCompanyName {
                ticker: r.ticker.clone(),
                period: r.period,
                first: first.to_string(),
                second: second.to_string(),
            });
        }
        entry.1.push(Fact {
            indicator: r.indicator.clone(),
            amount: r.amount,
        });
    }

    Ok(groups
        .into_iter()
        .map(|((ticker, period), (company, mut facts))| {
            facts.sort_by(|a, b| {
                a.indicator
                    .cmp(&b.indicator)
                    .then(a.amount.total_cmp(&b.amount))
            });
            let (text, truncated) =
                render_passage_capped(company, ticker, period, &facts, MAX_SEQUENCE_TOKENS);
            Passage {
                id: passage_id(ticker, period),
                ticker: ticker.to_string(),
                company: company.to_string(),
                period,
                text,
                facts,
                truncated,
            }
        })
        .collect())
}
