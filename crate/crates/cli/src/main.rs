use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use finrag_cli::commands::{self, CompleterKind, EvalArgs};
use finrag_cli::{perf, router, AppState};
use finrag_core::{AppConfig, DatasetFormat, EmbedderKind, Mode};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(
    name = "finrag",
    version,
    about = "Retrieval-augmented Q&A over financial fundamentals"
)]
struct Cli {
    /// JSON config file (flags override environment, environment overrides the file).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    embedder: Option<EmbedderArg>,
    #[arg(long, global = true, value_enum)]
    completer: Option<CompleterArg>,
    /// More log output on stderr (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbedderArg {
    LocalHash,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum CompleterArg {
    Scripted,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    JsonLines,
    JsonArray,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Rag,
    Baseline,
}

#[derive(Args)]
struct IndexArg {
    /// Index file (defaults to the configured path).
    #[arg(long)]
    index: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize a raw dataset into canonical JSON-lines records.
    Ingest {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Report JSON path (default: `<output>.report.json`).
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Build passages from canonical records and write the vector index.
    Index {
        #[arg(long)]
        records: PathBuf,
        #[command(flatten)]
        index: IndexArg,
    },
    /// Answer a question (or one per stdin line with --repl).
    Query {
        #[arg(long, required_unless_present = "repl")]
        question: Option<String>,
        #[arg(long, value_enum, default_value = "rag")]
        mode: ModeArg,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        repl: bool,
        #[command(flatten)]
        index: IndexArg,
    },
    /// Run the evaluation groups and write report.json and report.txt.
    Eval {
        #[arg(long)]
        records: PathBuf,
        #[command(flatten)]
        index: IndexArg,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "BG,REG,VUG,FOG")]
        groups: Vec<String>,
        #[arg(long, default_value = "eval-out")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Serve POST /v1/query and GET /v1/health.
    Serve {
        #[arg(long)]
        bind: Option<String>,
        #[command(flatten)]
        index: IndexArg,
    },
    /// Time single-threaded exact top-k search over random vectors.
    Bench {
        #[arg(long, default_value_t = 100_000)]
        count: usize,
        #[arg(long, default_value_t = 384)]
        dim: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 50)]
        queries: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(io::stderr)
        .init();
}

fn load_config(cli: &Cli) -> Result<AppConfig> {
    let mut cfg = AppConfig::load(cli.config.as_deref())?;
    if let Some(e) = cli.embedder {
        cfg.embedder.kind = match e {
            EmbedderArg::LocalHash => EmbedderKind::LocalHash,
            EmbedderArg::Remote => EmbedderKind::Remote,
        };
    }
    Ok(cfg)
}

fn completer(cli: &Cli) -> CompleterKind {
    match cli.completer {
        Some(CompleterArg::Scripted) => CompleterKind::Scripted,
        Some(CompleterArg::Remote) | None => CompleterKind::Remote,
    }
}

fn index_path(cfg: &AppConfig, arg: &IndexArg) -> PathBuf {
    arg.index.clone().unwrap_or_else(|| cfg.index_path.clone())
}

fn mode(m: ModeArg) -> Mode {
    match m {
        ModeArg::Rag => Mode::Rag,
        ModeArg::Baseline => Mode::Baseline,
    }
}

fn default_report_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".report.json");
    PathBuf::from(name)
}

fn run(cli: Cli) -> Result<u8> {
    let mut cfg = load_config(&cli)?;
    match &cli.command {
        Command::Ingest {
            dataset,
            output,
            report,
            format,
        } => {
            let format = format.map(|f| match f {
                FormatArg::JsonLines => DatasetFormat::JsonLines,
                FormatArg::JsonArray => DatasetFormat::JsonArray,
                FormatArg::Csv => DatasetFormat::Csv,
            });
            let report_path = report
                .clone()
                .unwrap_or_else(|| default_report_path(output));
            let outcome = commands::ingest(dataset, output, &report_path, format)?;
            let r = &outcome.report;
            println!(
                "read {} rows: {} accepted, {} rejected, {} duplicates dropped, {} outliers flagged; wrote {} records",
                r.rows_read,
                r.rows_accepted,
                r.rows_rejected,
                r.duplicates_dropped,
                r.outliers_flagged,
                outcome.records
            );
            for reject in &r.rejects {
                eprintln!("[{}] {}", reject.code, reject.message);
            }
            Ok(if r.rows_rejected == 0 { 0 } else { 3 })
        }
        Command::Index { records, index } => {
            cfg.validate()?;
            let embedder = commands::make_embedder(&cfg)?;
            let path = index_path(&cfg, index);
            let n = commands::index(records, &path, embedder.as_ref())?;
            println!("indexed {n} passages");
            Ok(0)
        }
        Command::Query {
            question,
            mode: m,
            k,
            repl,
            index,
        } => {
            if let Some(k) = k {
                cfg.k = *k;
            }
            cfg.validate()?;
            let pipeline =
                commands::pipeline(&cfg, &index_path(&cfg, index), completer(&cli), mode(*m))?;
            if *repl {
                commands::repl(
                    &pipeline,
                    mode(*m),
                    cfg.k,
                    io::stdin().lock(),
                    io::stdout().lock(),
                )?;
            } else {
                let q = question.as_deref().unwrap_or_default();
                let result = pipeline.answer_query(q, mode(*m), cfg.k)?;
                let mut out = io::stdout().lock();
                serde_json::to_writer_pretty(&mut out, &result)?;
                writeln!(out)?;
            }
            Ok(0)
        }
        Command::Eval {
            records,
            index,
            n,
            seed,
            groups,
            out_dir,
            workers,
            k,
        } => {
            if let Some(k) = k {
                cfg.k = *k;
            }
            cfg.validate()?;
            let args = EvalArgs {
                records: records.clone(),
                index: index_path(&cfg, index),
                n: *n,
                seed: *seed,
                groups: groups.clone(),
                completer: completer(&cli),
                out_dir: out_dir.clone(),
                workers: *workers,
            };
            let report = commands::eval(&cfg, &args)?;
            print!("{}", report.to_table());
            Ok(0)
        }
        Command::Serve { bind, index } => {
            if let Some(b) = bind {
                cfg.bind = b.clone();
            }
            cfg.validate()?;
            let addr: SocketAddr = cfg
                .bind
                .parse()
                .with_context(|| format!("invalid bind address {:?}", cfg.bind))?;
            let pipeline =
                commands::pipeline(&cfg, &index_path(&cfg, index), completer(&cli), Mode::Rag)?;
            let state = Arc::new(AppState {
                pipeline,
                default_k: cfg.k,
            });
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr)
                    .await
                    .with_context(|| format!("cannot bind {addr}"))?;
                eprintln!("listening on {}", listener.local_addr()?);
                axum::serve(listener, router(state))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                anyhow::Ok(())
            })?;
            Ok(0)
        }
        Command::Bench {
            count,
            dim,
            k,
            queries,
            seed,
        } => {
            let t = perf::time_search(*count, *dim, *k, *queries, *seed);
            println!("{}", serde_json::to_string_pretty(&t)?);
            Ok(0)
        }
    }
}

/// Exit codes: 0 success, 2 failure, 3 ingest finished with rejected rows.
fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
