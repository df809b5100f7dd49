//! `pipeline` command: crawl a marketplace, compute per-token returns,
//! optimize per-series portfolios and render report tables.
//!
//! Every subcommand reads optional defaults from the matching section of a
//! JSON file passed with `--config`. Flags given on the command line win over
//! the file, and `PIPELINE_ENDPOINT` wins over both for the crawl endpoint.

mod settings;

use std::ffi::OsString;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use nftport_core::model::{validate_dataset, Dataset, PortfolioAllocation, ReturnSummary};
use nftport_core::optimize::{optimize_series, OptimizerConfig};
use nftport_core::report::{render_portfolios, render_returns_report};
use nftport_core::returns::{analyze_dataset, clean_series, filter_dataset};
use nftport_ingest::{run_crawl_with, CrawlConfig, CrawlOutcome, RunOptions};
use nftport_replay::FixtureParams;
use serde::Serialize;
use serde_json::{json, Value};

pub use settings::{AnalyzeArgs, ConfigFile, CrawlArgs, Cutoff, GenerateArgs, OptimizeArgs, ReportArgs, ServeArgs};

pub const ENDPOINT_ENV: &str = "PIPELINE_ENDPOINT";

#[derive(Debug, Parser)]
#[command(name = "pipeline", version, about = "NFT trade-history crawler and portfolio optimizer")]
struct Cli {
    /// JSON file with defaults for each subcommand.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fetch trade histories into a dataset file, resuming from a checkpoint.
    Crawl(CrawlArgs),
    /// Total time-weighted return per token.
    Analyze(AnalyzeArgs),
    /// Max-Sharpe weights per series.
    Optimize(OptimizeArgs),
    /// Render portfolios or returns as CSV or text.
    Report(ReportArgs),
    /// Local mock marketplace.
    #[command(subcommand)]
    Replay(ReplayCommand),
}

#[derive(Debug, Subcommand)]
enum ReplayCommand {
    /// Write a seeded fixture file.
    Generate(GenerateArgs),
    /// Serve a fixture over HTTP until interrupted.
    Serve(ServeArgs),
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

fn usage(e: impl Display) -> Failure {
    Failure {
        code: 2,
        message: e.to_string(),
    }
}

fn domain(e: impl Display) -> Failure {
    Failure {
        code: 1,
        message: e.to_string(),
    }
}

/// Runs one command line (program name first) and returns the exit code:
/// 0 on success, 1 on domain or I/O errors, 2 on usage errors.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path).map_err(usage)?,
        None => ConfigFile::default(),
    };
    let started = Instant::now();
    let (stage, fields) = match cli.command {
        Command::Crawl(args) => ("crawl", crawl(args.or(file.crawl))?),
        Command::Analyze(args) => ("analyze", analyze(args.or(file.analyze))?),
        Command::Optimize(args) => ("optimize", optimize(args.or(file.optimize))?),
        Command::Report(args) => ("report", report(args.or(file.report))?),
        Command::Replay(ReplayCommand::Generate(args)) => ("replay-generate", generate(args.or(file.replay_generate))?),
        Command::Replay(ReplayCommand::Serve(args)) => ("replay-serve", serve(args.or(file.replay_serve))?),
    };
    stage_log(stage, started, fields);
    Ok(())
}

/// One JSON object per completed stage on stderr.
fn stage_log(stage: &str, started: Instant, fields: Value) {
    let mut line = json!({
        "stage": stage,
        "status": "ok",
        "elapsed_ms": started.elapsed().as_millis() as u64,
    });
    if let (Value::Object(line), Value::Object(extra)) = (&mut line, fields) {
        line.extend(extra);
    }
    eprintln!("{line}");
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(domain)?;
    text.push('\n');
    write_file(path, &text)
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| domain(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| domain(format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| domain(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| domain(format!("{}: {e}", path.display())))
}

fn runtime() -> Result<tokio::runtime::Runtime, Failure> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(domain)
}

fn crawl(args: CrawlArgs) -> Result<Value, Failure> {
    let mut config = CrawlConfig::default();
    macro_rules! set {
        ($($field:ident => $target:ident),* $(,)?) => {
            $(if let Some(v) = args.$field.clone() { config.$target = v; })*
        };
    }
    set!(
        endpoint => endpoint_base,
        collection_limit => collection_limit,
        page_size_tokens => page_size_tokens,
        page_size_activities => page_size_activities,
        qps => qps_limit,
        download_delay => download_delay_seconds,
        concurrency => max_concurrent_per_host,
        timeout => request_timeout_seconds,
        proxy => proxies,
        cookie_persistence => cookie_persistence,
        route_through_proxies => route_through_proxies,
        user_agent => user_agent,
        accept => accept,
        retry_backoff_ms => retry_backoff_ms,
    );
    if let Some(endpoint) = std::env::var(ENDPOINT_ENV).ok().filter(|v| !v.is_empty()) {
        config.endpoint_base = endpoint;
    }
    config.validate().map_err(usage)?;

    let checkpoint_dir = args.checkpoint_dir.unwrap_or_else(|| PathBuf::from("checkpoint"));
    let options = RunOptions {
        output: Some(args.out.unwrap_or_else(|| PathBuf::from("dataset.json"))),
        stop_after_tokens: args.stop_after_tokens,
    };
    let outcome = runtime()?
        .block_on(run_crawl_with(&config, &checkpoint_dir, &options))
        .map_err(domain)?;
    Ok(match outcome {
        CrawlOutcome::Completed(summary) => json!({
            "dataset": summary.dataset,
            "collections": summary.collections,
            "tokens": summary.tokens,
            "failed_tokens": summary.failed_tokens,
        }),
        CrawlOutcome::Interrupted { tokens_this_run } => json!({
            "interrupted": true,
            "tokens_this_run": tokens_this_run,
            "checkpoint_dir": checkpoint_dir,
        }),
    })
}

fn load_dataset(path: &Path) -> Result<Dataset, Failure> {
    let dataset = Dataset::load(path).map_err(|e| domain(format!("{}: {e}", path.display())))?;
    for v in validate_dataset(&dataset).iter().take(20) {
        log::warn!("{}: {v}", path.display());
    }
    Ok(dataset)
}

fn analyze(args: AnalyzeArgs) -> Result<Value, Failure> {
    let dataset_path = args.dataset.unwrap_or_else(|| PathBuf::from("dataset.json"));
    let out = args.out.unwrap_or_else(|| PathBuf::from("returns.json"));
    let min_trades = args.min_trades.unwrap_or(2);
    let cutoff = args.cutoff.map_or(i64::MAX, |c| c.0);

    let summaries = analyze_dataset(&load_dataset(&dataset_path)?, min_trades, cutoff);
    write_json(&out, &summaries)?;
    Ok(json!({ "out": out, "tokens": summaries.len() }))
}

fn optimize(args: OptimizeArgs) -> Result<Value, Failure> {
    let dataset_path = args.dataset.unwrap_or_else(|| PathBuf::from("dataset.json"));
    let out = args.out.unwrap_or_else(|| PathBuf::from("portfolio.json"));
    let defaults = OptimizerConfig::default();
    let config = OptimizerConfig {
        risk_free_rate: args.rf.unwrap_or(defaults.risk_free_rate),
        top_k: args.top.unwrap_or(defaults.top_k),
        grid_period_seconds: args.grid_period.unwrap_or(defaults.grid_period_seconds),
        ridge_epsilon: args.ridge_epsilon.unwrap_or(defaults.ridge_epsilon),
        max_iterations: args.max_iterations.unwrap_or(defaults.max_iterations),
        objective_tolerance: args.objective_tolerance.unwrap_or(defaults.objective_tolerance),
        window_end: args.cutoff.map(|c| c.0),
    };
    config.validate().map_err(usage)?;
    let min_trades = args.min_trades.unwrap_or(2).max(2);
    let cutoff = args.cutoff.map_or(i64::MAX, |c| c.0);

    let dataset = load_dataset(&dataset_path)?;
    let usable = filter_dataset(&dataset.map_series(clean_series), min_trades, cutoff);
    let names: Vec<String> = match &args.series {
        Some(name) => vec![name.clone()],
        None => usable.series_names().map(str::to_string).collect(),
    };

    let mut allocations: Vec<PortfolioAllocation> = Vec::new();
    let mut skipped = Vec::new();
    for name in &names {
        let result = match usable.get(name) {
            Some(tokens) => optimize_series(tokens, &config).map_err(|e| e.to_string()),
            None => Err(format!("insufficient data: series `{name}` has no token with {min_trades}+ trades")),
        };
        match result {
            Ok(alloc) => allocations.push(alloc),
            Err(reason) if args.series.is_some() => return Err(domain(reason)),
            Err(reason) => {
                log::warn!("{name}: {reason}");
                skipped.push(json!({ "series": name, "reason": reason }));
            }
        }
    }
    if allocations.is_empty() {
        return Err(domain(format!(
            "insufficient data: no series in {} could be optimized",
            dataset_path.display()
        )));
    }
    write_json(&out, &allocations)?;
    Ok(json!({ "out": out, "series": allocations.len(), "skipped": skipped }))
}

fn report(args: ReportArgs) -> Result<Value, Failure> {
    let format = args.format.unwrap_or_default();
    let (rendered, rows) = match (&args.portfolio, &args.returns) {
        (Some(path), None) => {
            let allocs: Vec<PortfolioAllocation> = read_json(path)?;
            let rows = allocs.iter().map(|a| a.assets.len()).sum::<usize>();
            (render_portfolios(&allocs, format), rows)
        }
        (None, Some(path)) => {
            let summaries: Vec<ReturnSummary> = read_json(path)?;
            (render_returns_report(&summaries, format), summaries.len())
        }
        _ => return Err(usage("report needs exactly one of --portfolio or --returns")),
    };
    match &args.out {
        Some(path) => write_file(path, &rendered)?,
        None => print!("{rendered}"),
    }
    Ok(json!({ "out": args.out, "rows": rows, "format": format }))
}

fn generate(args: GenerateArgs) -> Result<Value, Failure> {
    let min = args.min_trades.unwrap_or(2);
    let max = args.max_trades.unwrap_or(60);
    if min > max {
        return Err(usage(format!("--min-trades {min} exceeds --max-trades {max}")));
    }
    let params = FixtureParams::new(
        args.seed.unwrap_or(42),
        args.collections.unwrap_or(5),
        args.tokens.unwrap_or(20),
        min..=max,
    )
    .with_non_sale_events(0..=args.max_non_sale.unwrap_or(0));
    let fixture = params.generate();
    let out = args.out.unwrap_or_else(|| PathBuf::from("fixture.json"));
    write_file(&out, &fixture.to_json())?;
    Ok(json!({ "out": out, "collections": fixture.collections.len(), "tokens": fixture.token_count() }))
}

fn serve(args: ServeArgs) -> Result<Value, Failure> {
    let path = args.fixture.unwrap_or_else(|| PathBuf::from("fixture.json"));
    let fixture = read_json(&path)?;
    let host = args.host.unwrap_or_else(|| "127.0.0.1".to_string());
    let addr = format!("{host}:{}", args.port.unwrap_or(8080)).parse().map_err(usage)?;
    runtime()?.block_on(async {
        let server = nftport_replay::serve(fixture, addr).await.map_err(domain)?;
        eprintln!("{}", json!({ "stage": "replay-serve", "status": "listening", "base_url": server.base_url() }));
        tokio::signal::ctrl_c().await.map_err(domain)?;
        let requests = server.requests().len();
        server.shutdown().await;
        Ok(json!({ "requests": requests }))
    })
}
