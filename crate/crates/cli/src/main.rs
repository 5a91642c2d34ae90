use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aiad_core::harness::runner::write_summary;
use aiad_core::harness::{replay, run_experiment, summarize, summarize_dir, DomainKind, ExperimentSpec, Preset, ReplayReport, Summary};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "aiad", version, about = "Zero-shot assistance experiments and advisor server")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML spec.
    Run {
        spec: PathBuf,
        /// Overrides the spec's output directory.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        threads: Option<usize>,
        /// Print the summary as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Recompute summary.csv and summary.json for an experiment directory.
    Summarize {
        dir: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Re-execute a logged run (or every run in an experiment directory) and
    /// check the log is reproduced byte for byte.
    Replay { path: PathBuf },
    /// Serve the advisor HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
    /// Print the complete default spec for a domain.
    Template {
        #[arg(value_enum)]
        domain: Domain,
        #[arg(long, value_enum, default_value = "desk")]
        preset: Size,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Domain {
    Daytrip,
    Inventory,
}

#[derive(Clone, Copy, ValueEnum)]
enum Size {
    Desk,
    Full,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(command: Command) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match command {
        Command::Run {
            spec,
            output,
            runs,
            threads,
            json,
        } => {
            let mut spec = ExperimentSpec::load(&spec)?;
            if let Some(o) = output {
                spec.output = o;
            }
            if let Some(r) = runs {
                spec.runs = r;
            }
            if let Some(t) = threads {
                spec.threads = t;
            }
            spec.validate()?;
            let results = run_experiment(&spec)?;
            let summary = summarize(&results);
            write_summary(&spec.output, &summary)?;
            print_summary(&summary, json)?;
            println!("results written to {}", spec.output.display());
        }
        Command::Summarize { dir, json } => print_summary(&summarize_dir(&dir)?, json)?,
        Command::Replay { path } => {
            let reports = replay_all(&path)?;
            let mut ok = true;
            for r in &reports {
                match r.first_difference {
                    None if r.identical => println!("identical  {}", r.file.display()),
                    Some(line) => {
                        ok = false;
                        println!("DIFFERS    {} (line {line})", r.file.display());
                    }
                    None => {
                        ok = false;
                        println!("DIFFERS    {}", r.file.display());
                    }
                }
            }
            if !ok {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Serve { addr } => {
            tokio::runtime::Runtime::new()?.block_on(aiad_service::serve(addr))?;
        }
        Command::Template { domain, preset } => {
            let domain = match domain {
                Domain::Daytrip => DomainKind::Daytrip,
                Domain::Inventory => DomainKind::Inventory,
            };
            let preset = match preset {
                Size::Desk => Preset::Desk,
                Size::Full => Preset::Full,
            };
            print!("{}", ExperimentSpec::preset(domain, preset).to_toml()?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn replay_all(path: &Path) -> aiad_core::Result<Vec<ReplayReport>> {
    if path.is_file() {
        return Ok(vec![replay(path)?]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path.join("runs"))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|f| f.extension().is_some_and(|x| x == "jsonl"));
    files.sort();
    files.iter().map(|f| replay(f)).collect()
}

fn fmt_mean(m: Option<aiad_core::harness::MeanSe>) -> String {
    m.map_or_else(|| "-".into(), |m| format!("{:.3} ± {:.3}", m.mean, m.se))
}

fn print_summary(summary: &Summary, json: bool) -> Result<(), Box<dyn std::error::Error>> {
    if json {
        println!("{}", serde_json::to_string_pretty(summary)?);
        return Ok(());
    }
    println!("{} ({:?}, {} runs)", summary.name, summary.domain, summary.runs);
    println!("{:<24} {:>22} {:>22}", "mode", "final return", "final objective");
    for m in &summary.modes {
        println!("{:<24} {:>22} {:>22}", m.name, fmt_mean(m.final_return), fmt_mean(m.final_objective));
    }
    println!();
    println!("{:<24} {:<24} {:<16} {:>10} {:>10}", "first", "second", "metric", "diff", "p");
    for c in &summary.comparisons {
        println!(
            "{:<24} {:<24} {:<16} {:>10.3} {:>10.4}",
            c.first, c.second, c.metric, c.mean_difference, c.test.p_value
        );
    }
    Ok(())
}
