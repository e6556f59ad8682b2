use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use minlat::experiment::{self, LoadedConfig};
use minlat::{ContactGraph, Error, NodeId};

/// Latency-optimal forwarding experiments for opportunistic networks.
#[derive(Debug, Parser)]
#[command(name = "minlat", version)]
struct Cli {
    /// Base seed; run seeds are consecutive from here.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; standard output when omitted or `-`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for multi-seed jobs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the scenario's contact graph and write it as an edge list.
    Generate { config: PathBuf },
    /// Centralized optimum of a graph file, as JSON.
    Solve {
        graph: PathBuf,
        /// Override the destination stored in the file.
        #[arg(long)]
        dest: Option<usize>,
        /// Compare against exhaustive search (small graphs only).
        #[arg(long)]
        verify: bool,
    },
    /// Simulate every configured protocol and seed; metrics CSV.
    Run { config: PathBuf },
    /// Simulate the `[sweep]` grid; metrics CSV with sweep columns.
    Sweep { config: PathBuf },
    /// Error series of the decentralized protocol; CSV.
    Convergence { config: PathBuf },
    /// Oracle checks on random small instances.
    Verify {
        #[arg(long, default_value_t = 200)]
        graphs: usize,
        #[arg(long, default_value_t = 6)]
        max_nodes: usize,
        #[arg(long, default_value_t = 1000)]
        relay_instances: usize,
    },
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_VERIFY: u8 = 3;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::Infeasible | Error::Unbounded | Error::InstanceTooLarge { .. } => EXIT_RUNTIME,
        _ => EXIT_VALIDATION,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn execute(cli: &Cli) -> Result<u8, Error> {
    match &cli.command {
        Command::Generate { config } => {
            let loaded = LoadedConfig::load(config)?;
            let (graph, summary) = experiment::generate(&loaded, cli.seed.unwrap_or(1))?;
            let mut text = Vec::new();
            graph.write_to(&mut text)?;
            let target = output_path(cli, loaded.config.output.graph.as_deref(), &loaded);
            emit(target.as_deref(), &text)?;
            let line = format!(
                "nodes {} edges {} mean_rate {} components {}",
                summary.nodes, summary.edges, summary.mean_rate, summary.components
            );
            if target.is_some() {
                println!("{line}");
            } else {
                eprintln!("{line}");
            }
            Ok(0)
        }
        Command::Solve { graph, dest, verify } => {
            let file = File::open(graph).map_err(|e| Error::Io(format!("{}: {e}", graph.display())))?;
            let mut g = ContactGraph::<f64>::read_from(BufReader::new(file))?;
            if let Some(d) = dest {
                g = g.with_destination(NodeId(*d))?;
            }
            let report = experiment::solve(&g, *verify)?;
            let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?;
            emit(cli.out.as_deref(), format!("{json}\n").as_bytes())?;
            if let Some(oracle) = &report.oracle {
                let verdict = if oracle.passed { "PASS" } else { "FAIL" };
                eprintln!("oracle {verdict} max_latency_error {}", oracle.max_latency_error);
                if !oracle.passed {
                    return Ok(EXIT_VERIFY);
                }
            }
            Ok(0)
        }
        Command::Run { config } => {
            let loaded = LoadedConfig::load(config)?;
            let reports = experiment::run(&loaded, cli.seed, cli.jobs)?;
            let csv = experiment::metrics_csv(&loaded, &reports);
            emit(output_path(cli, loaded.config.output.metrics.as_deref(), &loaded).as_deref(), csv.as_bytes())?;
            Ok(0)
        }
        Command::Sweep { config } => {
            let loaded = LoadedConfig::load(config)?;
            let csv = experiment::sweep(&loaded, cli.seed, cli.jobs)?;
            emit(output_path(cli, loaded.config.output.sweep.as_deref(), &loaded).as_deref(), csv.as_bytes())?;
            Ok(0)
        }
        Command::Convergence { config } => {
            let loaded = LoadedConfig::load(config)?;
            let csv = experiment::convergence(&loaded, cli.seed, cli.jobs)?;
            emit(output_path(cli, loaded.config.output.convergence.as_deref(), &loaded).as_deref(), csv.as_bytes())?;
            Ok(0)
        }
        Command::Verify { graphs, max_nodes, relay_instances } => {
            let report = experiment::verify(*graphs, *max_nodes, *relay_instances, cli.seed.unwrap_or(1))?;
            let mut text = String::new();
            let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
            text.push_str(&format!(
                "{} centralized vs exhaustive: {} graphs, {} mismatches\n",
                verdict(report.graph_mismatches == 0),
                report.graphs_checked,
                report.graph_mismatches
            ));
            text.push_str(&format!(
                "{} relay subset solvers: {} instances, {} mismatches\n",
                verdict(report.relay_mismatches == 0),
                report.relay_instances,
                report.relay_mismatches
            ));
            emit(cli.out.as_deref(), text.as_bytes())?;
            Ok(if report.passed() { 0 } else { EXIT_VERIFY })
        }
    }
}

/// `--out` wins over the config's output path; `-` means standard output.
fn output_path(cli: &Cli, configured: Option<&Path>, loaded: &LoadedConfig) -> Option<PathBuf> {
    match &cli.out {
        Some(p) if p.as_os_str() == "-" => None,
        Some(p) => Some(p.clone()),
        None => configured.map(|p| if p.is_absolute() { p.to_path_buf() } else { loaded.base_dir.join(p) }),
    }
}

fn emit(target: Option<&Path>, bytes: &[u8]) -> Result<(), Error> {
    match target {
        Some(p) if p.as_os_str() != "-" => {
            std::fs::write(p, bytes).map_err(|e| Error::Io(format!("{}: {e}", p.display())))
        }
        _ => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}
