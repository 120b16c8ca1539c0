mod args;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use iraas_core::config::ScenarioDocument;
use iraas_core::control::{ControlPlane, Rcf, Registry};
use iraas_core::harness::{
    emit_report, experiment_checks, run_experiment, run_experiment_with, ExperimentSpec,
    ResultTable,
};
use iraas_core::par::Execution;
use iraas_core::ran::rcf_config;
use iraas_service::{Remote, Server};

const EXIT_VALIDATION: u8 = 2;
const EXIT_EPISODE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "iraas",
    version,
    about = "Pooled reflecting-surface service: experiments and control service"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run episodes over regimes and seeds and write the result tables.
    Run(RunArgs),
    /// Rebuild aggregates and an optional chart from a results directory.
    Report(ReportArgs),
    /// Serve the control API (HTTP) and the update/feedback stream (TCP).
    Serve(ServeArgs),
    /// Print the default scenario document.
    Config,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario document (TOML); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seeds: `a..b` (inclusive), a comma list, or both.
    #[arg(long, default_value = "1..20")]
    seeds: String,
    /// Comma-separated regimes; the document's list when omitted.
    #[arg(long)]
    regimes: Option<String>,
    /// Optimizer iterations per episode; the document's budget when omitted.
    #[arg(long)]
    budget: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Also write per-episode logs, metric series and trajectories.
    #[arg(long)]
    logs: bool,
    /// Run episodes one at a time on this thread.
    #[arg(long)]
    sequential: bool,
    /// HTTP address of a running service; episodes then run against it,
    /// one at a time.
    #[arg(long, requires = "remote_stream")]
    remote_http: Option<SocketAddr>,
    /// Stream address of the same service.
    #[arg(long, requires = "remote_http")]
    remote_stream: Option<SocketAddr>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding results.csv.
    #[arg(long = "in")]
    input: PathBuf,
    /// Also write chart.svg.
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct ServeArgs {
    /// Scenario document supplying subscriptions and windows.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:7410")]
    http: SocketAddr,
    #[arg(long, default_value = "127.0.0.1:7411")]
    stream: SocketAddr,
    /// Append-only registry journal, replayed at startup.
    #[arg(long)]
    journal: Option<PathBuf>,
}

enum Failure {
    Validation(String),
    Episodes(String),
}

fn load(config: Option<&Path>) -> Result<ScenarioDocument, Failure> {
    match config {
        Some(path) => ScenarioDocument::load(path).map_err(|e| Failure::Validation(e.to_string())),
        None => Ok(ScenarioDocument::default()),
    }
}

fn run(a: RunArgs) -> Result<(), Failure> {
    let doc = load(a.config.as_deref())?;
    let seeds = args::parse_seeds(&a.seeds).map_err(Failure::Validation)?;
    let mut spec = ExperimentSpec::from_document(doc, seeds);
    if let Some(r) = &a.regimes {
        spec.regimes = args::parse_regimes(r).map_err(Failure::Validation)?;
    }
    if let Some(b) = a.budget {
        spec.budget = b;
    }
    spec.out_dir = Some(a.out.clone());
    spec.write_logs = a.logs;
    spec.validate()
        .map_err(|e| Failure::Validation(e.to_string()))?;

    let exec = if a.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let result = match (a.remote_http, a.remote_stream) {
        (Some(http), Some(stream)) => {
            let connect = move |_: &_| {
                Remote::connect(http, stream).map(|r| Box::new(r) as Box<dyn ControlPlane>)
            };
            run_experiment_with(&spec, Execution::Sequential, &connect)
        }
        _ => run_experiment(&spec, exec),
    };
    let output = result.map_err(|e| Failure::Validation(e.to_string()))?;

    for agg in &output.table.aggregates {
        println!(
            "{:<12} UE {}  {:>10.2} Mbit/s  (std {:.2}, {} seeds)",
            agg.regime,
            agg.ue_id,
            agg.mean_throughput_bps / 1e6,
            agg.std_throughput_bps / 1e6,
            agg.seeds
        );
    }
    for check in experiment_checks(&spec, &output.table) {
        println!(
            "[{}] {}: {}",
            if check.pass { "pass" } else { "FAIL" },
            check.name,
            check.detail
        );
    }
    println!("results in {}", a.out.display());
    if !output.is_complete() {
        let lines: Vec<String> = output
            .failures
            .iter()
            .map(|f| format!("{} seed {}: {}", f.regime, f.seed, f.error))
            .collect();
        return Err(Failure::Episodes(lines.join("\n")));
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<(), Failure> {
    let path = a.input.join("results.csv");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    let table = ResultTable::parse_results(&text)
        .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    if table.rows.is_empty() {
        return Err(Failure::Validation(format!(
            "{} has no rows",
            path.display()
        )));
    }
    for written in
        emit_report(&table, &a.input, a.svg).map_err(|e| Failure::Validation(e.to_string()))?
    {
        println!("wrote {}", written.display());
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), Failure> {
    let doc = load(a.config.as_deref())?;
    let config = rcf_config(&doc.episode);
    let rcf = match &a.journal {
        Some(path) => Rcf::with_registry(
            config,
            Registry::open(path).map_err(|e| Failure::Validation(e.to_string()))?,
        ),
        None => Rcf::new(config),
    };
    let server =
        Server::start(rcf, a.http, a.stream).map_err(|e| Failure::Validation(e.to_string()))?;
    println!("control API on http://{}", server.http_addr);
    println!("update/feedback stream on {}", server.stream_addr);
    server.wait();
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Report(a) => report(a),
        Command::Serve(a) => serve(a),
        Command::Config => {
            print!("{}", ScenarioDocument::default().to_toml());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Episodes(m)) => {
            eprintln!("episodes failed:\n{m}");
            ExitCode::from(EXIT_EPISODE)
        }
    }
}
