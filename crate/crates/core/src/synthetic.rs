//! Deterministic synthetic fundamentals for demos, tests and benchmarks.
//!
//! Company names are pseudo-words built from two disjoint syllable sets, so
//! "primary" and "distractor" companies never share a name token or ticker.

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::FinRecord;

pub const INDICATORS: [&str; 4] = ["Revenue", "Assets", "NetIncome", "OperatingIncome"];

const PRIMARY_SYLLABLES: [&str; 10] = ["ka", "lo", "mi", "ne", "ru", "sa", "te", "vo", "zi", "pa"];
const DISTRACTOR_SYLLABLES: [&str; 10] = [
    "bex", "dor", "fum", "gil", "hux", "jor", "quip", "wex", "yul", "cran",
];

/// One Apple revenue fact, used throughout examples and tests.
pub fn sample_record() -> FinRecord {
    FinRecord {
        period: NaiveDate::from_ymd_opt(2023, 3, 31).unwrap(),
        company: "Apple Inc.".to_string(),
        ticker: "AAPL".to_string(),
        indicator: "Revenue".to_string(),
        amount: 100000000.0,
    }
}

/// Fiscal quarter ends, oldest first, ending at 2023-12-31.
pub fn quarter_ends(count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let (mut year, mut q) = (2023, 4u32);
    for _ in 0..count {
        let month = q * 3;
        let next = if month == 12 {
            NaiveDate::from_ymd_opt(year + 1, 1, 1)
        } else {
            NaiveDate::from_ymd_opt(year, month + 1, 1)
        }
        .unwrap();
        out.push(next.pred_opt().unwrap());
        if q == 1 {
            q = 4;
            year -= 1;
        } else {
            q -= 1;
        }
    }
    out.reverse();
    out
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

fn word(syllables: &[&str; 10], i: usize) -> String {
    let digits = [i % 10, (i / 10) % 10, (i / 100) % 10];
    capitalize(&digits.iter().map(|&d| syllables[d]).collect::<String>())
}

fn ticker(prefix: char, i: usize) -> String {
    let letters: String = [i / 676 % 26, i / 26 % 26, i % 26]
        .iter()
        .map(|&d| (b'A' + d as u8) as char)
        .collect();
    format!("{prefix}{letters}")
}

/// Company `i` of the primary family (`i < 1000`).
pub fn primary_company(i: usize) -> (String, String) {
    (
        format!("{} Inc.", word(&PRIMARY_SYLLABLES, i)),
        ticker('P', i),
    )
}

/// Company `i` of the distractor family (`i < 1000`).
pub fn distractor_company(i: usize) -> (String, String) {
    (
        format!("{} Holdings", word(&DISTRACTOR_SYLLABLES, i)),
        ticker('Z', i),
    )
}

#[derive(Debug, Clone, Copy)]
pub struct FixtureSpec {
    pub companies: usize,
    pub quarters: usize,
    /// Indicators per `(company, quarter)`, at most four.
    pub indicators: usize,
    pub seed: u64,
}

fn amount(rng: &mut ChaCha8Rng, indicator: &str) -> f64 {
    let magnitude = rng.random_range(1_000_000u64..100_000_000_000);
    match indicator {
        "NetIncome" | "OperatingIncome" if rng.random_bool(0.1) => {
            -(magnitude as f64 / 10.0).round()
        }
        _ => magnitude as f64,
    }
}

fn generate(
    spec: &FixtureSpec,
    company: impl Fn(usize) -> (String, String),
    quarter_of: impl Fn(usize, usize) -> usize,
) -> Vec<FinRecord> {
    let quarters = quarter_ends(spec.quarters.max(1) * 4);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let per = spec.indicators.clamp(1, INDICATORS.len());
    let mut out = Vec::new();
    for c in 0..spec.companies {
        let (name, tick) = company(c);
        for q in 0..spec.quarters {
            let period = quarters[quarter_of(c, q) % quarters.len()];
            for j in 0..per {
                let indicator = INDICATORS[(c + q + j) % INDICATORS.len()];
                out.push(FinRecord {
                    period,
                    company: name.clone(),
                    ticker: tick.clone(),
                    indicator: indicator.to_string(),
                    amount: amount(&mut rng, indicator),
                });
            }
        }
    }
    out
}

/// Primary-family records: `companies × quarters × indicators` facts.
pub fn fundamentals(spec: &FixtureSpec) -> Vec<FinRecord> {
    generate(spec, primary_company, |_, q| q)
}

/// Distractor-family records over the same quarter ends as [`fundamentals`]
/// with the same `quarters`, one quarter per company.
pub fn distractors(
    companies: usize,
    quarters: usize,
    indicators: usize,
    seed: u64,
) -> Vec<FinRecord> {
    let spec = FixtureSpec {
        companies,
        quarters: 1,
        indicators,
        seed,
    };
    let span = quarters.max(1);
    generate(&spec, distractor_company, move |c, _| c % span)
}

/// Year of the earliest quarter produced for `quarters`.
pub fn first_year(quarters: usize) -> i32 {
    quarter_ends(quarters.max(1) * 4)[0].year()
}
