//! Parsing, validation and cleaning of fundamentals datasets.
//!
//! Input rows carry the five fields `period`, `company`, `tickers`, `indicator`
//! and `amount`. Rows that fail to parse are reported, never fatal.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Read};
use std::str::FromStr;
use std::sync::LazyLock;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Robust z-score above which an amount is flagged as an outlier.
pub const OUTLIER_Z: f64 = 6.0;

/// Scale that turns a median absolute deviation into a standard-deviation estimate.
const MAD_SCALE: f64 = 1.4826;
/// Same, for the mean absolute deviation fallback when the MAD is zero.
const MEAN_AD_SCALE: f64 = 1.253314;

const REQUIRED_FIELDS: [&str; 5] = ["period", "company", "tickers", "indicator", "amount"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("missing value")]
    MissingValue,
    #[error("malformed number: {0:?}")]
    MalformedNumber(String),
    #[error("invalid date: {0:?}")]
    InvalidDate(String),
    #[error("ambiguous date (day-first and month-first both valid): {0:?}")]
    AmbiguousDate(String),
    #[error("missing field {0:?}")]
    MissingField(String),
    #[error("invalid ticker: {0:?}")]
    InvalidTicker(String),
    #[error("empty {0}")]
    EmptyField(&'static str),
    #[error("field {field}: {source}")]
    Field {
        field: &'static str,
        #[source]
        source: Box<IngestError>,
    },
    #[error("row {row}: {source}")]
    Row {
        row: usize,
        #[source]
        source: Box<IngestError>,
    },
    #[error("malformed row: {0}")]
    MalformedRow(String),
    #[error("unreadable source: {0}")]
    UnreadableSource(String),
    #[error("unknown dataset format {0:?} (expected json-lines, json-array or csv)")]
    UnknownFormat(String),
}

impl IngestError {
    /// Stable machine-readable code used in reject lists.
    pub fn code(&self) -> &'static str {
        match self {
            IngestError::MissingValue => "missing_value",
            IngestError::MalformedNumber(_) => "malformed_number",
            IngestError::InvalidDate(_) => "invalid_date",
            IngestError::AmbiguousDate(_) => "ambiguous_date",
            IngestError::MissingField(_) => "missing_field",
            IngestError::InvalidTicker(_) => "invalid_ticker",
            IngestError::EmptyField(_) => "empty_field",
            IngestError::Field { source, .. } | IngestError::Row { source, .. } => source.code(),
            IngestError::MalformedRow(_) => "malformed_row",
            IngestError::UnreadableSource(_) => "unreadable_source",
            IngestError::UnknownFormat(_) => "unknown_format",
        }
    }

    fn in_field(self, field: &'static str) -> Self {
        IngestError::Field {
            field,
            source: Box::new(self),
        }
    }
}

/// One normalized financial fact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinRecord {
    pub period: NaiveDate,
    pub company: String,
    #[serde(rename = "tickers")]
    pub ticker: String,
    pub indicator: String,
    pub amount: f64,
}

impl FinRecord {
    /// Canonical JSON-lines row: ISO date, plain numeric amount.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("FinRecord serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub row: usize,
    pub code: String,
    pub message: String,
    pub excerpt: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationReport {
    pub rows_read: usize,
    pub rows_accepted: usize,
    pub rows_rejected: usize,
    pub rejects: Vec<Reject>,
    pub duplicates_dropped: usize,
    pub outliers_flagged: usize,
}

impl NormalizationReport {
    /// Folds the counters of a [`clean_dataset`] pass into a load report.
    pub fn merge_cleaning(&mut self, cleaning: &NormalizationReport) {
        self.duplicates_dropped += cleaning.duplicates_dropped;
        self.outliers_flagged += cleaning.outliers_flagged;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    JsonLines,
    JsonArray,
    Csv,
}

impl FromStr for DatasetFormat {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json-lines" | "jsonl" | "ndjson" => Ok(DatasetFormat::JsonLines),
            "json-array" | "json" => Ok(DatasetFormat::JsonArray),
            "csv" | "csv-with-header" => Ok(DatasetFormat::Csv),
            other => Err(IngestError::UnknownFormat(other.to_string())),
        }
    }
}

impl DatasetFormat {
    /// Guesses the format from a file extension.
    pub fn from_extension(ext: &str) -> Result<Self, IngestError> {
        match ext.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" => Ok(DatasetFormat::JsonLines),
            "json" => Ok(DatasetFormat::JsonArray),
            "csv" => Ok(DatasetFormat::Csv),
            other => Err(IngestError::UnknownFormat(other.to_string())),
        }
    }
}

static NUMBER_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:\d+(?:\.\d*)?|\.\d+)$").unwrap());

/// Parses a monetary amount in USD.
///
/// Strips surrounding whitespace, one leading currency symbol and every comma.
/// A fully parenthesized value is negative.
pub fn parse_amount(raw: &str) -> Result<f64, IngestError> {
    let malformed = || IngestError::MalformedNumber(raw.to_string());
    let mut s = raw.trim();
    if s.is_empty() {
        return Err(IngestError::MissingValue);
    }

    let mut negative = false;
    if let Some(inner) = s.strip_prefix('(').and_then(|t| t.strip_suffix(')')) {
        negative = true;
        s = inner.trim();
    }

    let mut signed = false;
    let mut take_sign = |s: &mut &str| {
        if signed {
            return Ok(());
        }
        if let Some(rest) = s.strip_prefix('-') {
            if negative {
                return Err(malformed());
            }
            negative = true;
            signed = true;
            *s = rest.trim_start();
        } else if let Some(rest) = s.strip_prefix('+') {
            signed = true;
            *s = rest.trim_start();
        }
        Ok(())
    };
    take_sign(&mut s)?;
    if let Some(rest) = s
        .strip_prefix('$')
        .or_else(|| s.strip_prefix('€'))
        .or_else(|| s.strip_prefix('£'))
    {
        s = rest.trim_start();
    }
    take_sign(&mut s)?;

    let digits: String = s.chars().filter(|&c| c != ',').collect();
    if digits.is_empty() {
        return Err(IngestError::MissingValue);
    }
    if !NUMBER_RE.is_match(&digits) {
        return Err(malformed());
    }
    let value: f64 = digits.parse().map_err(|_| malformed())?;
    if !value.is_finite() {
        return Err(malformed());
    }
    // `+ 0.0` folds negative zero into zero.
    Ok(if negative { -value + 0.0 } else { value + 0.0 })
}

static YMD_SLASH: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\d{4})/(\d{1,2})/(\d{1,2})$").unwrap());
static YMD_DASH: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\d{4})-(\d{2})-(\d{2})$").unwrap());
static MDY_SLASH: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\d{1,2})/(\d{1,2})/(\d{4})$").unwrap());

fn earliest_period() -> NaiveDate {
    NaiveDate::from_ymd_opt(1990, 1, 1).unwrap()
}

fn latest_period() -> NaiveDate {
    NaiveDate::from_ymd_opt(2100, 12, 31).unwrap()
}

/// Parses `YYYY/M/D`, `YYYY-MM-DD` or `MM/DD/YYYY` into a calendar date.
///
/// `MM/DD/YYYY` input that is also a valid `DD/MM/YYYY` date (and names a
/// different day) is rejected as ambiguous.
pub fn normalize_date(raw: &str) -> Result<NaiveDate, IngestError> {
    let s = raw.trim();
    let invalid = || IngestError::InvalidDate(raw.to_string());
    let num = |m: &str| m.parse::<u32>().map_err(|_| invalid());
    let ymd = |y: &str, m: &str, d: &str| -> Result<Option<NaiveDate>, IngestError> {
        Ok(NaiveDate::from_ymd_opt(
            y.parse::<i32>().map_err(|_| invalid())?,
            num(m)?,
            num(d)?,
        ))
    };

    let date = if let Some(c) = YMD_SLASH.captures(s).or_else(|| YMD_DASH.captures(s)) {
        ymd(&c[1], &c[2], &c[3])?.ok_or_else(invalid)?
    } else if let Some(c) = MDY_SLASH.captures(s) {
        let month_first = ymd(&c[3], &c[1], &c[2])?;
        let day_first = ymd(&c[3], &c[2], &c[1])?;
        match (month_first, day_first) {
            (Some(a), Some(b)) if a != b => {
                return Err(IngestError::AmbiguousDate(raw.to_string()))
            }
            (Some(a), _) => a,
            (None, _) => return Err(invalid()),
        }
    } else {
        return Err(invalid());
    };

    if date < earliest_period() || date > latest_period() {
        return Err(invalid());
    }
    Ok(date)
}

fn valid_ticker(t: &str) -> bool {
    (1..=6).contains(&t.len())
        && t.bytes()
            .all(|b| b.is_ascii_uppercase() || b == b'.' || b == b'-')
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Builds a [`FinRecord`] from a row of field name to raw text.
///
/// Field names are matched case-insensitively; `ticker` is accepted as an
/// alias of `tickers`.
pub fn parse_record(row: &HashMap<String, String>) -> Result<FinRecord, IngestError> {
    let lowered: HashMap<String, &str> = row
        .iter()
        .map(|(k, v)| (k.trim().to_ascii_lowercase(), v.as_str()))
        .collect();
    let field = |name: &'static str| -> Result<&str, IngestError> {
        lowered
            .get(name)
            .or_else(|| (name == "tickers").then(|| lowered.get("ticker")).flatten())
            .copied()
            .ok_or_else(|| IngestError::MissingField(name.to_string()))
    };
    for name in REQUIRED_FIELDS {
        field(name)?;
    }

    let period = normalize_date(field("period")?).map_err(|e| e.in_field("period"))?;
    let company = collapse_whitespace(field("company")?);
    if company.is_empty() {
        return Err(IngestError::EmptyField("company"));
    }
    let ticker = field("tickers")?.trim().to_ascii_uppercase();
    if !valid_ticker(&ticker) {
        return Err(IngestError::InvalidTicker(ticker));
    }
    let indicator = collapse_whitespace(field("indicator")?);
    if indicator.is_empty() {
        return Err(IngestError::EmptyField("indicator"));
    }
    let amount = parse_amount(field("amount")?).map_err(|e| e.in_field("amount"))?;

    Ok(FinRecord {
        period,
        company,
        ticker,
        indicator,
        amount,
    })
}

/// A row as it came out of the source, before field validation.
enum RawRow {
    Fields(HashMap<String, String>),
    Broken(IngestError),
}

fn excerpt(raw: &str) -> String {
    raw.chars().take(80).collect()
}

fn json_scalar_text(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::Null => String::new(),
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn json_row(value: serde_json::Value) -> RawRow {
    match value {
        serde_json::Value::Object(map) => RawRow::Fields(
            map.iter()
                .map(|(k, v)| (k.clone(), json_scalar_text(v)))
                .collect(),
        ),
        other => RawRow::Broken(IngestError::MalformedRow(format!(
            "expected an object, found {}",
            match other {
                serde_json::Value::Array(_) => "an array",
                serde_json::Value::String(_) => "a string",
                serde_json::Value::Number(_) => "a number",
                serde_json::Value::Bool(_) => "a boolean",
                _ => "null",
            }
        ))),
    }
}

fn read_rows(text: &str, format: DatasetFormat) -> Result<Vec<(RawRow, String)>, IngestError> {
    let mut rows = Vec::new();
    match format {
        DatasetFormat::JsonLines => {
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                let row = match serde_json::from_str::<serde_json::Value>(line) {
                    Ok(v) => json_row(v),
                    Err(e) => RawRow::Broken(IngestError::MalformedRow(e.to_string())),
                };
                rows.push((row, line.to_string()));
            }
        }
        DatasetFormat::JsonArray => {
            if text.trim().is_empty() {
                return Ok(rows);
            }
            let values: Vec<serde_json::Value> = serde_json::from_str(text)
                .map_err(|e| IngestError::UnreadableSource(format!("not a JSON array: {e}")))?;
            for v in values {
                let raw = v.to_string();
                rows.push((json_row(v), raw));
            }
        }
        DatasetFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .flexible(true)
                .trim(csv::Trim::Headers)
                .from_reader(text.as_bytes());
            let headers = match reader.headers() {
                Ok(h) => h.clone(),
                Err(e) => return Err(IngestError::UnreadableSource(e.to_string())),
            };
            for result in reader.records() {
                match result {
                    Ok(rec) => {
                        let raw = rec.iter().collect::<Vec<_>>().join(",");
                        let map = headers
                            .iter()
                            .zip(rec.iter())
                            .map(|(h, v)| (h.to_string(), v.to_string()))
                            .collect();
                        rows.push((RawRow::Fields(map), raw));
                    }
                    Err(e) => rows.push((
                        RawRow::Broken(IngestError::MalformedRow(e.to_string())),
                        String::new(),
                    )),
                }
            }
        }
    }
    Ok(rows)
}

/// Reads a whole dataset. Bad rows become rejects; only I/O failures abort.
pub fn load_dataset<R: Read>(
    mut source: R,
    format: DatasetFormat,
) -> Result<(Vec<FinRecord>, NormalizationReport), IngestError> {
    let mut bytes = Vec::new();
    source
        .read_to_end(&mut bytes)
        .map_err(|e: io::Error| IngestError::UnreadableSource(e.to_string()))?;
    let text = String::from_utf8(bytes)
        .map_err(|e| IngestError::UnreadableSource(format!("invalid UTF-8: {e}")))?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(&text);

    let mut records = Vec::new();
    let mut report = NormalizationReport::default();
    for (i, (row, raw)) in read_rows(text, format)?.into_iter().enumerate() {
        report.rows_read += 1;
        let parsed = match row {
            RawRow::Fields(map) => parse_record(&map),
            RawRow::Broken(e) => Err(e),
        };
        match parsed {
            Ok(rec) => {
                report.rows_accepted += 1;
                records.push(rec);
            }
            Err(e) => {
                let e = IngestError::Row {
                    row: i + 1,
                    source: Box::new(e),
                };
                report.rows_rejected += 1;
                report.rejects.push(Reject {
                    row: i + 1,
                    code: e.code().to_string(),
                    message: e.to_string(),
                    excerpt: excerpt(&raw),
                });
            }
        }
    }
    Ok((records, report))
}

type FactKey = (NaiveDate, String, String);

fn fact_key(r: &FinRecord) -> FactKey {
    (r.period, r.ticker.clone(), r.indicator.clone())
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn sorted(mut xs: Vec<f64>) -> Vec<f64> {
    xs.sort_by(f64::total_cmp);
    xs
}

/// Robust z-scores of a series, using the scaled MAD (or the scaled mean
/// absolute deviation when the MAD is zero). Returns zeros for a series
/// with no spread at all.
pub fn robust_z_scores(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let med = median(&sorted(values.to_vec()));
    let deviations: Vec<f64> = values.iter().map(|x| (x - med).abs()).collect();
    let mad = median(&sorted(deviations.clone()));
    let scale = if mad > 0.0 {
        MAD_SCALE * mad
    } else {
        MEAN_AD_SCALE * deviations.iter().sum::<f64>() / values.len() as f64
    };
    if scale == 0.0 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|x| (x - med) / scale).collect()
}

/// Drops duplicate facts and flags (but keeps) outliers.
///
/// Duplicates share `(period, ticker, indicator)`. An equal amount keeps the
/// first occurrence; a conflicting amount keeps the last one, in the slot of
/// the first. Outliers are judged per `(ticker, indicator)` series.
pub fn clean_dataset(records: Vec<FinRecord>) -> (Vec<FinRecord>, NormalizationReport) {
    let mut report = NormalizationReport {
        rows_read: records.len(),
        rows_accepted: records.len(),
        ..Default::default()
    };

    let mut slots: HashMap<FactKey, usize> = HashMap::new();
    let mut kept: Vec<FinRecord> = Vec::with_capacity(records.len());
    for rec in records {
        match slots.get(&fact_key(&rec)) {
            Some(&slot) => {
                report.duplicates_dropped += 1;
                if kept[slot].amount != rec.amount {
                    kept[slot] = rec;
                }
            }
            None => {
                slots.insert(fact_key(&rec), kept.len());
                kept.push(rec);
            }
        }
    }

    let mut series: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
    for r in &kept {
        series
            .entry((r.ticker.as_str(), r.indicator.as_str()))
            .or_default()
            .push(r.amount);
    }
    report.outliers_flagged = series
        .values()
        .flat_map(|amounts| robust_z_scores(amounts))
        .filter(|z| z.abs() > OUTLIER_Z)
        .count();
    if report.outliers_flagged > 0 {
        tracing::debug!(
            count = report.outliers_flagged,
            "outliers flagged and retained"
        );
    }

    (kept, report)
}

/// Renders an amount as a plain decimal without separators or exponent.
pub fn format_amount(amount: f64) -> String {
    format!("{}", amount + 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(pairs: &[(&str, &str)]) -> HashMap<String, String> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn amount_examples() {
        assert_eq!(parse_amount("100000000"), Ok(100000000.0));
        assert_eq!(parse_amount("$1,234.50"), Ok(1234.50));
        assert_eq!(parse_amount("(2,500)"), Ok(-2500.0));
        assert_eq!(parse_amount(""), Err(IngestError::MissingValue));
        assert_eq!(parse_amount("   "), Err(IngestError::MissingValue));
    }

    #[test]
    fn amount_variants() {
        assert_eq!(parse_amount("  €12 "), Ok(12.0));
        assert_eq!(parse_amount("£0.5"), Ok(0.5));
        assert_eq!(parse_amount("-$3"), Ok(-3.0));
        assert_eq!(parse_amount("$-3"), Ok(-3.0));
        assert_eq!(parse_amount("($2,500.25)"), Ok(-2500.25));
        assert_eq!(parse_amount(".5"), Ok(0.5));
        assert!(parse_amount("(0)").unwrap().is_sign_positive());
    }

    #[test]
    fn amount_rejects_garbage() {
        for bad in [
            "1.2.3", "12abc", "NaN", "inf", "1e5", "(-5)", "--5", "$", "1 000",
        ] {
            let err = parse_amount(bad).unwrap_err();
            assert!(
                matches!(
                    err,
                    IngestError::MalformedNumber(_) | IngestError::MissingValue
                ),
                "{bad}: {err:?}"
            );
        }
        assert!(matches!(
            parse_amount("1.2.3"),
            Err(IngestError::MalformedNumber(_))
        ));
        let huge = "9".repeat(400);
        assert!(matches!(
            parse_amount(&huge),
            Err(IngestError::MalformedNumber(_))
        ));
    }

    #[test]
    fn date_examples() {
        assert_eq!(normalize_date("2023/3/31"), Ok(d(2023, 3, 31)));
        assert_eq!(normalize_date("2023-03-31"), Ok(d(2023, 3, 31)));
        assert!(matches!(
            normalize_date("2023/13/01"),
            Err(IngestError::InvalidDate(_))
        ));
    }

    #[test]
    fn date_month_first_and_ambiguity() {
        assert_eq!(normalize_date("03/31/2023"), Ok(d(2023, 3, 31)));
        assert_eq!(normalize_date("05/05/2023"), Ok(d(2023, 5, 5)));
        assert!(matches!(
            normalize_date("04/05/2023"),
            Err(IngestError::AmbiguousDate(_))
        ));
        assert!(matches!(
            normalize_date("31/03/2023"),
            Err(IngestError::InvalidDate(_))
        ));
    }

    #[test]
    fn date_range_and_shape() {
        assert!(normalize_date("1989-12-31").is_err());
        assert!(normalize_date("2101-01-01").is_err());
        assert_eq!(normalize_date("1990-01-01"), Ok(d(1990, 1, 1)));
        assert!(normalize_date("2023-02-30").is_err());
        assert!(normalize_date("2023-3-31").is_err());
        assert!(normalize_date("March 31 2023").is_err());
        assert_eq!(normalize_date("2024/2/29"), Ok(d(2024, 2, 29)));
    }

    #[test]
    fn record_from_table_row() {
        let r = parse_record(&row(&[
            ("period", "2023/3/31"),
            ("company", "Apple Inc."),
            ("tickers", "AAPL"),
            ("indicator", "Revenue"),
            ("amount", "100000000"),
        ]))
        .unwrap();
        assert_eq!(
            r,
            FinRecord {
                period: d(2023, 3, 31),
                company: "Apple Inc.".into(),
                ticker: "AAPL".into(),
                indicator: "Revenue".into(),
                amount: 100000000.0,
            }
        );
    }

    #[test]
    fn record_uppercases_and_strips() {
        let r = parse_record(&row(&[
            ("Period", "2023/3/31"),
            ("COMPANY", "Apple Inc."),
            ("tickers", "aapl"),
            ("indicator", "  Total   Assets "),
            ("amount", "$1"),
        ]))
        .unwrap();
        assert_eq!(r.ticker, "AAPL");
        assert_eq!(r.amount, 1.0);
        assert_eq!(r.indicator, "Total Assets");
    }

    #[test]
    fn record_errors() {
        let missing = parse_record(&row(&[
            ("period", "2023/3/31"),
            ("company", "Apple Inc."),
            ("tickers", "AAPL"),
            ("indicator", "Revenue"),
        ]));
        assert_eq!(missing, Err(IngestError::MissingField("amount".into())));

        let bad_ticker = parse_record(&row(&[
            ("period", "2023/3/31"),
            ("company", "Apple Inc."),
            ("tickers", "TOOLONGX"),
            ("indicator", "Revenue"),
            ("amount", "1"),
        ]));
        assert!(matches!(bad_ticker, Err(IngestError::InvalidTicker(_))));

        let bad_amount = parse_record(&row(&[
            ("period", "2023/3/31"),
            ("company", "Apple Inc."),
            ("tickers", "AAPL"),
            ("indicator", "Revenue"),
            ("amount", ""),
        ]))
        .unwrap_err();
        assert_eq!(bad_amount.code(), "missing_value");
    }

    #[test]
    fn empty_sources_load_to_nothing() {
        for fmt in [
            DatasetFormat::JsonLines,
            DatasetFormat::JsonArray,
            DatasetFormat::Csv,
        ] {
            let (recs, report) = load_dataset(&b""[..], fmt).unwrap();
            assert!(recs.is_empty());
            assert_eq!(report, NormalizationReport::default());
        }
    }

    #[test]
    fn csv_and_array_formats() {
        let csv = "period,company,tickers,indicator,amount\n\
                   2023/3/31,Apple Inc.,AAPL,Revenue,\"100,000,000\"\n\
                   2023/3/31,Apple Inc.,AAPL,Assets\n";
        let (recs, report) = load_dataset(csv.as_bytes(), DatasetFormat::Csv).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].amount, 100000000.0);
        assert_eq!(report.rows_rejected, 1);
        assert_eq!(report.rejects[0].code, "missing_field");

        let arr = r#"[{"period":"2023-03-31","company":"Apple Inc.","tickers":"AAPL","indicator":"Revenue","amount":100000000}, 7]"#;
        let (recs, report) = load_dataset(arr.as_bytes(), DatasetFormat::JsonArray).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(report.rows_read, 2);
        assert_eq!(report.rejects[0].code, "malformed_row");
    }

    #[test]
    fn broken_json_array_is_unreadable() {
        let err = load_dataset(&b"[{"[..], DatasetFormat::JsonArray).unwrap_err();
        assert_eq!(err.code(), "unreadable_source");
    }

    #[test]
    fn format_names() {
        assert_eq!(
            "json-lines".parse::<DatasetFormat>(),
            Ok(DatasetFormat::JsonLines)
        );
        assert!(matches!(
            "xml".parse::<DatasetFormat>(),
            Err(IngestError::UnknownFormat(_))
        ));
    }

    #[test]
    fn robust_z_constant_series() {
        assert_eq!(robust_z_scores(&[5.0, 5.0, 5.0]), vec![0.0; 3]);
        // MAD is zero here, so the mean-deviation fallback is used.
        let z = robust_z_scores(&[5.0, 5.0, 5.0, 5.0, 6.0]);
        assert!(z[4] > 0.0 && z[4] < OUTLIER_Z);
    }

    #[test]
    fn canonical_amount_rendering() {
        assert_eq!(format_amount(100000000.0), "100000000");
        assert_eq!(format_amount(1234.5), "1234.5");
        assert_eq!(format_amount(-0.0), "0");
        assert_eq!(format_amount(1e21), "1000000000000000000000");
    }
}
