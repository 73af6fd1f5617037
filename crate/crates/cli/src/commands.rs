//! Subcommand implementations, independent of argument parsing.

use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use finrag_core::eval::EvalOptions;
use finrag_core::{
    build_passages, clean_dataset, load_dataset, run_groups, synthesize_qa, AppConfig, Completer,
    Corpus, DatasetFormat, Embedder, EmbedderKind, EvalReport, FinRecord, GroupConfig,
    HashEmbedder, Mode, NormalizationReport, OpenAiCompleter, RagPipeline, RemoteEmbedder,
    ScriptedCompleter,
};

use crate::store::{load_corpus, save_corpus, write_atomic};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompleterKind {
    Scripted,
    Remote,
}

pub fn make_embedder(cfg: &AppConfig) -> Result<Arc<dyn Embedder>> {
    Ok(match cfg.embedder.kind {
        EmbedderKind::LocalHash => Arc::new(HashEmbedder::from_profile(&cfg.embedder)?),
        EmbedderKind::Remote => {
            let base = cfg
                .embed_api_base
                .clone()
                .context("the remote embedder needs EMBED_API_BASE")?;
            let key = cfg.embed_api_key.as_ref().map(|k| k.expose().to_string());
            Arc::new(
                RemoteEmbedder::new(cfg.embedder.clone(), base, key)?
                    .with_max_in_flight(cfg.max_in_flight),
            )
        }
    })
}

pub fn make_completer(cfg: &AppConfig, kind: CompleterKind) -> Arc<dyn Completer> {
    match kind {
        CompleterKind::Scripted => Arc::new(ScriptedCompleter),
        CompleterKind::Remote => {
            let key = cfg.llm_api_key.as_ref().map(|k| k.expose().to_string());
            Arc::new(OpenAiCompleter::with_max_in_flight(key, cfg.max_in_flight))
        }
    }
}

fn detect_format(path: &Path, bytes: &[u8]) -> Result<DatasetFormat> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let format = DatasetFormat::from_extension(ext)?;
    // A ".json" file holding one object per line is JSON-lines.
    if format == DatasetFormat::JsonArray {
        let first = bytes.iter().find(|b| !b.is_ascii_whitespace());
        if first == Some(&b'{') {
            return Ok(DatasetFormat::JsonLines);
        }
    }
    Ok(format)
}

pub struct IngestOutcome {
    pub records: usize,
    pub report: NormalizationReport,
}

/// Loads, cleans and writes canonical JSON-lines plus a report JSON.
pub fn ingest(
    dataset: &Path,
    output: &Path,
    report_path: &Path,
    format: Option<DatasetFormat>,
) -> Result<IngestOutcome> {
    let bytes = fs::read(dataset).with_context(|| format!("cannot read {}", dataset.display()))?;
    let format = match format {
        Some(f) => f,
        None => detect_format(dataset, &bytes)?,
    };
    let (records, mut report) = load_dataset(bytes.as_slice(), format)?;
    let (records, cleaning) = clean_dataset(records);
    report.merge_cleaning(&cleaning);

    write_atomic(output, |out| {
        for r in &records {
            writeln!(out, "{}", r.to_json_line())?;
        }
        Ok(())
    })?;
    write_atomic(report_path, |out| {
        serde_json::to_writer_pretty(&mut *out, &report)?;
        writeln!(out)?;
        Ok(())
    })?;
    Ok(IngestOutcome {
        records: records.len(),
        report,
    })
}

/// Reads canonical records; any unparseable row is an error.
pub fn read_records(path: &Path) -> Result<Vec<FinRecord>> {
    let file = fs::File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    let (records, report) = load_dataset(file, DatasetFormat::JsonLines)?;
    if let Some(bad) = report.rejects.first() {
        bail!(
            "{}: row {} is not a canonical record: {}",
            path.display(),
            bad.row,
            bad.message
        );
    }
    Ok(records)
}

/// Builds passages, embeds them and writes the index; returns the count.
pub fn index(records_path: &Path, index_path: &Path, embedder: &dyn Embedder) -> Result<usize> {
    let records = read_records(records_path)?;
    let passages = build_passages(&records)?;
    let corpus = Corpus::build(passages, embedder)?;
    let passages: Vec<_> = corpus.passages_in_order().cloned().collect();
    save_corpus(index_path, corpus.index(), &passages)?;
    Ok(passages.len())
}

pub fn pipeline(
    cfg: &AppConfig,
    index_path: &Path,
    completer: CompleterKind,
    mode: Mode,
) -> Result<RagPipeline> {
    let embedder = make_embedder(cfg)?;
    let corpus = match (mode, index_path.exists()) {
        (Mode::Baseline, false) => Corpus::empty(embedder.dim())?,
        _ => load_corpus(index_path)?,
    };
    Ok(RagPipeline::new(
        Arc::new(corpus),
        embedder,
        make_completer(cfg, completer),
        cfg.base_model.clone(),
    )?
    .with_budget(cfg.context_budget))
}

/// Answers one question per input line, one JSON object per output line.
pub fn repl(
    pipeline: &RagPipeline,
    mode: Mode,
    k: usize,
    input: impl BufRead,
    mut out: impl Write,
) -> Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let json = match pipeline.answer_query(&line, mode, k) {
            Ok(r) => serde_json::to_string(&r)?,
            Err(e) => serde_json::json!({ "question": line, "error": e.to_string() }).to_string(),
        };
        writeln!(out, "{json}")?;
        out.flush()?;
    }
    Ok(())
}

pub struct EvalArgs {
    pub records: PathBuf,
    pub index: PathBuf,
    pub n: usize,
    pub seed: u64,
    pub groups: Vec<String>,
    pub completer: CompleterKind,
    pub out_dir: PathBuf,
    pub workers: usize,
}

/// Runs the groups and writes `report.json` and `report.txt` into the output directory.
pub fn eval(cfg: &AppConfig, args: &EvalArgs) -> Result<EvalReport> {
    let groups = args
        .groups
        .iter()
        .map(|g| GroupConfig::parse(g, &cfg.base_model, &cfg.enhanced_model))
        .collect::<Result<Vec<_>, _>>()?;
    let records = read_records(&args.records)?;
    let items = synthesize_qa(&records, args.n, args.seed)?;
    let embedder = make_embedder(cfg)?;
    let corpus = if groups.iter().any(|g| g.rag) {
        load_corpus(&args.index)?
    } else {
        Corpus::empty(embedder.dim())?
    };
    let report = run_groups(
        &groups,
        &items,
        Arc::new(corpus),
        embedder,
        make_completer(cfg, args.completer),
        &EvalOptions {
            k: cfg.k,
            context_budget: cfg.context_budget,
            workers: args.workers,
        },
    )?;
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("cannot create {}", args.out_dir.display()))?;
    write_atomic(&args.out_dir.join("report.json"), |out| {
        writeln!(out, "{}", report.to_json_pretty())?;
        Ok(())
    })?;
    write_atomic(&args.out_dir.join("report.txt"), |out| {
        out.write_all(report.to_table().as_bytes())?;
        Ok(())
    })?;
    Ok(report)
}
